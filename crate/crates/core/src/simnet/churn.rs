use rand_distr::{Distribution, Exp, Pareto};

use crate::error::{LeadError, Result};
use crate::rng::SplitMix64;

use super::event::{Time, MINUTE};

/// Duration distribution, parameterized by its mean in logical minutes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DurationDist {
    /// Uniform on `(0, 2 * mean]`.
    Uniform { mean: f64 },
    Exponential { mean: f64 },
    /// Pareto with the given shape; scale chosen to hit the mean.
    Pareto { mean: f64, shape: f64 },
}

pub const DEFAULT_PARETO_SHAPE: f64 = 2.0;

impl DurationDist {
    pub fn parse(family: &str, mean: f64, pareto_shape: f64) -> Result<Self> {
        if !(mean > 0.0) {
            return Err(LeadError::InvalidConfig(format!("mean duration must be positive, got {mean}")));
        }
        match family {
            "uniform" => Ok(DurationDist::Uniform { mean }),
            "exponential" | "exp" => Ok(DurationDist::Exponential { mean }),
            "pareto" if pareto_shape > 1.0 => Ok(DurationDist::Pareto { mean, shape: pareto_shape }),
            "pareto" => Err(LeadError::InvalidConfig("pareto shape must exceed 1".into())),
            other => Err(LeadError::InvalidConfig(format!("unknown distribution `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DurationDist::Uniform { .. } => "uniform",
            DurationDist::Exponential { .. } => "exponential",
            DurationDist::Pareto { .. } => "pareto",
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            DurationDist::Uniform { mean } | DurationDist::Exponential { mean } => mean,
            DurationDist::Pareto { mean, .. } => mean,
        }
    }

    /// Pareto scale `x_m = mean * (shape - 1) / shape`.
    pub fn pareto_scale(mean: f64, shape: f64) -> f64 {
        mean * (shape - 1.0) / shape
    }

    /// One sample in minutes, always positive.
    pub fn sample_minutes(&self, rng: &mut SplitMix64) -> f64 {
        let v = match *self {
            DurationDist::Uniform { mean } => (1.0 - rng.next_f64()) * 2.0 * mean,
            DurationDist::Exponential { mean } => Exp::new(1.0 / mean).expect("rate").sample(rng),
            DurationDist::Pareto { mean, shape } => Pareto::new(Self::pareto_scale(mean, shape), shape)
                .expect("pareto")
                .sample(rng),
        };
        v.max(f64::MIN_POSITIVE)
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> Time {
        ((self.sample_minutes(rng) * MINUTE as f64).round() as Time).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnConfig {
    pub lifetime: DurationDist,
    pub rejoin: DurationDist,
    pub reset_on_rejoin: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChurnAction {
    Exit,
    Rejoin,
}

/// Alternating exit / rejoin times for each node up to `horizon`.
pub fn churn_schedule(
    nodes: usize,
    config: &ChurnConfig,
    horizon: Time,
    rng: &mut SplitMix64,
) -> Vec<(Time, usize, ChurnAction)> {
    let mut out = Vec::new();
    for node in 0..nodes {
        let mut t: Time = 0;
        loop {
            t = t.saturating_add(config.lifetime.sample(rng));
            if t >= horizon {
                break;
            }
            out.push((t, node, ChurnAction::Exit));
            t = t.saturating_add(config.rejoin.sample(rng));
            if t >= horizon {
                break;
            }
            out.push((t, node, ChurnAction::Rejoin));
        }
    }
    out.sort_by_key(|e| (e.0, e.1));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_support() {
        let mut rng = SplitMix64::new(11);
        let d = DurationDist::Uniform { mean: 80.0 };
        for _ in 0..10_000 {
            let v = d.sample_minutes(&mut rng);
            assert!(v > 0.0 && v <= 160.0);
        }
    }

    #[test]
    fn pareto_scale_for_mean() {
        assert_eq!(DurationDist::pareto_scale(80.0, 2.0), 40.0);
    }

    #[test]
    fn empirical_means() {
        for d in [
            DurationDist::Uniform { mean: 80.0 },
            DurationDist::Exponential { mean: 80.0 },
            DurationDist::Pareto { mean: 80.0, shape: DEFAULT_PARETO_SHAPE },
        ] {
            // Pareto with shape 2 has infinite variance; average several
            // large batches to keep the check stable.
            let mut rng = SplitMix64::new(2024);
            let n = if matches!(d, DurationDist::Pareto { .. }) { 200_000 } else { 10_000 };
            let mean = (0..n).map(|_| d.sample_minutes(&mut rng)).sum::<f64>() / n as f64;
            assert!((mean - 80.0).abs() / 80.0 < 0.05, "{}: {mean}", d.name());
        }
    }

    #[test]
    fn schedule_alternates() {
        let cfg = ChurnConfig {
            lifetime: DurationDist::Uniform { mean: 8.0 },
            rejoin: DurationDist::Uniform { mean: 1.0 },
            reset_on_rejoin: true,
        };
        let mut rng = SplitMix64::new(3);
        let ev = churn_schedule(4, &cfg, 30 * MINUTE, &mut rng);
        for node in 0..4 {
            let acts: Vec<_> = ev.iter().filter(|e| e.1 == node).map(|e| e.2).collect();
            for (i, a) in acts.iter().enumerate() {
                let want = if i % 2 == 0 { ChurnAction::Exit } else { ChurnAction::Rejoin };
                assert_eq!(*a, want);
            }
        }
        assert!(ev.windows(2).all(|w| w[0].0 <= w[1].0));
    }
}
