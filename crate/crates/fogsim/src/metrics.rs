//! The five evaluation quantities of a run — makespan, fog load variance,
//! network usage, success rate, mean response time — plus the CSV row
//! format shared by the CLI and the experiment harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Final quantities of one simulation run. `decision_wallclock_us` is host
/// time spent in scheduling code paths and is excluded from determinism
/// guarantees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub makespan: f64,
    pub fog_load_variance: f64,
    pub network_usage_gb: f64,
    pub success_rate: f64,
    pub mean_response_time: f64,
    pub decision_wallclock_us: u64,
}

pub const CSV_HEADER: &str =
    "scenario,seed,scheduler,theta,delta,makespan,variance,network_gb,sr,mean_response,decision_us";

impl RunMetrics {
    /// One CSV data row matching [`CSV_HEADER`]; the wall-clock column is
    /// deliberately last.
    pub fn csv_row(
        &self,
        scenario: &str,
        seed: u64,
        scheduler: &str,
        theta: u32,
        delta: f64,
    ) -> String {
        format!(
            "{scenario},{seed},{scheduler},{theta},{delta},{},{},{},{},{},{}",
            self.makespan,
            self.fog_load_variance,
            self.network_usage_gb,
            self.success_rate,
            self.mean_response_time,
            self.decision_wallclock_us
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("successful tasks ({sn}) exceed total tasks ({tn})")]
    MoreSuccessesThanTasks { sn: u64, tn: u64 },
}

/// Maximum completion over devices that executed at least once. The input
/// must already exclude failed-only devices; an empty run yields 0.
pub fn makespan(completions: &[f64]) -> f64 {
    completions.iter().copied().fold(0.0, f64::max)
}

/// Population variance of fog-node loads (clouds excluded by the caller).
pub fn load_variance(loads: &[f64]) -> f64 {
    if loads.is_empty() {
        return 0.0;
    }
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<f64>() / n;
    loads.iter().map(|&l| (l - mean) * (l - mean)).sum::<f64>() / n
}

/// Total byte-hops in GB: payload size times topology edges traversed.
pub fn network_usage<I: IntoIterator<Item = (f64, u32)>>(transfers: I) -> f64 {
    transfers.into_iter().map(|(gb, hops)| gb * hops as f64).sum()
}

/// SN / TN; vacuously 1 when no tasks were submitted.
pub fn success_rate(sn: u64, tn: u64) -> Result<f64, MetricsError> {
    if sn > tn {
        return Err(MetricsError::MoreSuccessesThanTasks { sn, tn });
    }
    if tn == 0 {
        return Ok(1.0);
    }
    Ok(sn as f64 / tn as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn makespan_is_maximum_completion() {
        assert_eq!(makespan(&[10.0, 20.0, 15.0]), 20.0);
        assert_eq!(makespan(&[7.5]), 7.5);
        assert_eq!(makespan(&[]), 0.0);
    }

    #[test]
    fn variance_of_equal_loads_is_zero() {
        assert!(load_variance(&[0.4, 0.4, 0.4]).abs() < 1e-15);
        assert_eq!(load_variance(&[0.5, 0.5]), 0.0);
    }

    #[test]
    fn variance_of_one_and_zero_is_a_quarter() {
        assert!((load_variance(&[1.0, 0.0]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn network_usage_is_size_times_hops() {
        assert_eq!(network_usage([(2.0, 1)]), 2.0);
        assert_eq!(network_usage([(2.0, 4)]), 8.0);
        assert_eq!(network_usage([(2.0, 1), (2.0, 3)]), 8.0);
    }

    #[test]
    fn network_usage_is_additive_over_partitions() {
        let all = [(1.5, 2), (0.3, 1), (2.0, 5), (0.7, 3)];
        let total = network_usage(all);
        let split = network_usage(all[..2].to_vec()) + network_usage(all[2..].to_vec());
        assert!((total - split).abs() < 1e-12);
    }

    #[test]
    fn success_rate_examples() {
        assert_eq!(success_rate(90, 100).unwrap(), 0.9);
        assert_eq!(success_rate(0, 0).unwrap(), 1.0);
        assert!(matches!(
            success_rate(5, 4),
            Err(MetricsError::MoreSuccessesThanTasks { .. })
        ));
    }

    #[test]
    fn csv_row_matches_header_column_count() {
        let m = RunMetrics {
            makespan: 1.0,
            fog_load_variance: 2.0,
            network_usage_gb: 3.0,
            success_rate: 0.5,
            mean_response_time: 4.0,
            decision_wallclock_us: 5,
        };
        let row = m.csv_row("s.scn", 7, "agent", 20, 0.01);
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
        assert!(row.ends_with(",5"));
    }
}
