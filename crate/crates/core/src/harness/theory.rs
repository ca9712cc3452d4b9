use serde::{Deserialize, Serialize};

use super::runner::TrialStats;
use crate::error::{Error, Result};
use crate::markov::HittingTimeResult;

pub const DEFAULT_BAND: [f64; 2] = [0.25, 4.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Steps,
    Rounds,
}

/// A theoretical value to compare a simulated mean against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub label: String,
    pub value: f64,
}

impl Oracle {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Self { label: label.into(), value }
    }

    /// Hitting time plus a constant number of extra rounds (e.g. the final gathering move).
    pub fn hitting_time(h: &HittingTimeResult, extra: f64) -> Self {
        Self::new(format!("hitting time {} -> {} + {extra}", h.from, h.to), h.expected_steps + extra)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    NoConvergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub metric: Metric,
    pub oracle: Oracle,
    pub observed: Option<f64>,
    pub ratio: Option<f64>,
    pub band: [f64; 2],
    pub converged_fraction: f64,
    pub verdict: Verdict,
}

/// `ratio = observed mean / oracle`, consistent when inside `band` (inclusive).
pub fn compare_to_theory(stats: &TrialStats, oracle: Oracle, metric: Metric, band: [f64; 2]) -> Result<TheoryReport> {
    if oracle.value == 0.0 || !oracle.value.is_finite() {
        return Err(Error::ZeroOracle);
    }
    let observed = match metric {
        Metric::Steps => stats.mean_steps(),
        Metric::Rounds => stats.mean_rounds(),
    };
    let ratio = observed.map(|o| o / oracle.value);
    let verdict = match ratio {
        None => Verdict::NoConvergence,
        Some(r) if band[0] <= r && r <= band[1] => Verdict::Consistent,
        Some(_) => Verdict::Inconsistent,
    };
    Ok(TheoryReport {
        metric,
        oracle,
        observed,
        ratio,
        band,
        converged_fraction: stats.converged_fraction,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runner::TrialRow;

    fn stats(steps: &[u64], converged: bool) -> TrialStats {
        let rows: Vec<TrialRow> = steps
            .iter()
            .enumerate()
            .map(|(i, &s)| TrialRow {
                trial_id: i as u64,
                seed: 0,
                converged,
                steps: s,
                rounds: s / 2,
                completed_rounds: s / 2,
                error: None,
            })
            .collect();
        TrialStats::from_rows(&rows)
    }

    #[test]
    fn verdicts() {
        let s = stats(&[4, 8], true);
        let r = compare_to_theory(&s, Oracle::new("x", 3.0), Metric::Rounds, DEFAULT_BAND).unwrap();
        assert_eq!(r.ratio, Some(1.0));
        assert_eq!(r.verdict, Verdict::Consistent);
        let r = compare_to_theory(&s, Oracle::new("x", 1.0), Metric::Steps, DEFAULT_BAND).unwrap();
        assert_eq!(r.observed, Some(6.0));
        assert_eq!(r.verdict, Verdict::Inconsistent);
        let r = compare_to_theory(&s, Oracle::new("x", 1.5), Metric::Steps, DEFAULT_BAND).unwrap();
        assert_eq!(r.verdict, Verdict::Consistent);
    }

    #[test]
    fn no_convergence_and_zero_oracle() {
        let s = stats(&[4, 8], false);
        let r = compare_to_theory(&s, Oracle::new("x", 3.0), Metric::Rounds, DEFAULT_BAND).unwrap();
        assert_eq!(r.verdict, Verdict::NoConvergence);
        assert_eq!(r.ratio, None);
        assert!(matches!(
            compare_to_theory(&s, Oracle::new("x", 0.0), Metric::Rounds, DEFAULT_BAND),
            Err(Error::ZeroOracle)
        ));
    }
}
