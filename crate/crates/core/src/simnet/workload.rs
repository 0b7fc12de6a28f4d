use super::event::Time;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryKind {
    Lookup,
    Range { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadConfig {
    pub interval: Time,
    pub kind: QueryKind,
}

/// Issue times `0, interval, 2 * interval, ...` strictly before `horizon`.
pub fn workload_times(config: &WorkloadConfig, horizon: Time) -> Vec<Time> {
    assert!(config.interval > 0);
    (0..).map(|i| i * config.interval).take_while(|&t| t < horizon).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::event::MINUTE;

    #[test]
    fn cadence_count() {
        let cfg = WorkloadConfig {
            interval: 5 * MINUTE,
            kind: QueryKind::Range { n: 100 },
        };
        assert_eq!(workload_times(&cfg, 120 * MINUTE).len(), 24);
    }
}
