use crate::error::{LeadError, Result};
use crate::ring::HashSpace;

use super::leaf::LeafFamily;
use super::model::{train_rmi, TrainConfig, TrainingSet};
use super::stats::{prediction_errors, quantile};
use super::wire::serialize_full;

pub const DEFAULT_SIZE_BUDGET: usize = 16 << 20;
const LADDER_START: usize = 64;
const LADDER_CAP: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoutChoice {
    pub family: LeafFamily,
    pub branching: usize,
    pub p99_error: f64,
    pub size_bytes: usize,
    pub objective: f64,
}

/// p99 error and serialized size of one candidate trained on `sketch`.
pub fn evaluate_candidate(
    sketch: &TrainingSet,
    family: LeafFamily,
    branching: usize,
    space: HashSpace,
) -> Result<(f64, usize)> {
    let m = train_rmi(sketch, &TrainConfig::new(family, branching, space))?;
    let p99 = quantile(&prediction_errors(&m, sketch), 0.99);
    Ok((p99, serialize_full(&m).len()))
}

/// Hill-climb the branching factor for each family and keep the candidate
/// with the lowest `p99 * (1 + size / budget)`; ties go to the smaller model.
pub fn model_scout(sketch: &TrainingSet, budget: usize, space: HashSpace) -> Result<ScoutChoice> {
    if sketch.is_empty() {
        return Err(LeadError::EmptyDataset);
    }
    let mut best: Option<ScoutChoice> = None;
    for family in [LeafFamily::Linear, LeafFamily::radix(), LeafFamily::Cubic] {
        let mut b = LADDER_START;
        let mut local: Option<ScoutChoice> = None;
        loop {
            let (p99, size) = evaluate_candidate(sketch, family, b, space)?;
            let cand = ScoutChoice {
                family,
                branching: b,
                p99_error: p99,
                size_bytes: size,
                objective: p99 * (1.0 + size as f64 / budget as f64),
            };
            match local {
                Some(l) if cand.objective >= l.objective => break,
                _ => local = Some(cand),
            }
            if b >= LADDER_CAP {
                break;
            }
            b *= 2;
        }
        let local = local.unwrap();
        let better = match best {
            None => true,
            Some(cur) => {
                local.objective < cur.objective
                    || (local.objective == cur.objective && local.size_bytes < cur.size_bytes)
            }
        };
        if better {
            best = Some(local);
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_sketch_selects_linear() {
        let sketch = TrainingSet::from_sorted((0..2000u64).map(|i| i * 1000).collect());
        let c = model_scout(&sketch, DEFAULT_SIZE_BUDGET, HashSpace::default()).unwrap();
        assert_eq!(c.family, LeafFamily::Linear);
        assert_eq!(c.branching, 64);
        assert_eq!(c.p99_error, 0.0);
    }

    #[test]
    fn single_key_sketch() {
        let c = model_scout(&TrainingSet::new(vec![17]), DEFAULT_SIZE_BUDGET, HashSpace::default())
            .unwrap();
        assert_eq!((c.family, c.branching, c.p99_error), (LeafFamily::Linear, 64, 0.0));
    }

    #[test]
    fn empty_sketch() {
        assert_eq!(
            model_scout(&TrainingSet::default(), DEFAULT_SIZE_BUDGET, HashSpace::default()),
            Err(LeadError::EmptyDataset)
        );
    }
}
