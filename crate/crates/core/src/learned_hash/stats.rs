use crate::error::{LeadError, Result};

use super::model::{RmiModel, TrainingSet};
use super::wire::serialize_full;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelStats {
    /// `log2(1 + max |predicted - true|)` over the evaluation keys.
    pub max_log2_error: f64,
    pub avg_log2_error: f64,
    pub size_bytes: usize,
}

/// `|predicted rank - true rank|` for every key of `eval`, in key order.
pub fn prediction_errors(model: &RmiModel, eval: &TrainingSet) -> Vec<f64> {
    eval.keys()
        .iter()
        .zip(eval.ranks())
        .map(|(&k, r)| (model.predict_rank(k) - r as f64).abs())
        .collect()
}

pub fn error_stats(model: &RmiModel, eval: &TrainingSet) -> Result<ModelStats> {
    if eval.is_empty() {
        return Err(LeadError::EmptyDataset);
    }
    let logs: Vec<f64> = prediction_errors(model, eval)
        .into_iter()
        .map(|e| (1.0 + e).log2())
        .collect();
    let max = logs.iter().cloned().fold(0.0, f64::max);
    let avg = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(ModelStats {
        max_log2_error: max,
        avg_log2_error: avg.min(max),
        size_bytes: serialize_full(model).len(),
    })
}

/// Nearest-rank quantile of unsorted values, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learned_hash::leaf::{Anchor, LeafFamily, LeafModel, LeafParams};
    use crate::learned_hash::model::{train_rmi, TrainConfig};
    use crate::learned_hash::router::Router;
    use crate::ring::HashSpace;

    #[test]
    fn perfect_model_has_zero_error() {
        let set = TrainingSet::from_sorted((0..1000).collect());
        let m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 4, HashSpace::default())).unwrap();
        let s = error_stats(&m, &set).unwrap();
        assert_eq!((s.max_log2_error, s.avg_log2_error), (0.0, 0.0));
    }

    #[test]
    fn constant_leaf_error() {
        let leaf = LeafModel {
            params: LeafParams::constant(LeafFamily::Linear, 0.0),
            anchor: Anchor::default(),
            rank_lo: 0,
            rank_hi: 9,
            stamp: 1,
        };
        let m = RmiModel::from_parts(
            Router::Linear { slope: 1.0, intercept: 0.0 },
            LeafFamily::Linear,
            vec![leaf],
            10,
            HashSpace::default(),
            1,
        )
        .unwrap();
        let set = TrainingSet::from_sorted((0..10).collect());
        let s = error_stats(&m, &set).unwrap();
        assert!((s.max_log2_error - 10f64.log2()).abs() < 1e-12);
        let avg = (1..=10).map(|e| (e as f64).log2()).sum::<f64>() / 10.0;
        assert!((s.avg_log2_error - avg).abs() < 1e-12);
    }

    #[test]
    fn empty_eval() {
        let set = TrainingSet::from_sorted((0..10).collect());
        let m = train_rmi(&set, &TrainConfig::new(LeafFamily::Linear, 1, HashSpace::default())).unwrap();
        assert_eq!(error_stats(&m, &TrainingSet::default()), Err(LeadError::EmptyDataset));
    }

    #[test]
    fn quantiles() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(quantile(&v, 0.99), 99.0);
        assert_eq!(quantile(&v, 0.5), 50.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
    }
}
