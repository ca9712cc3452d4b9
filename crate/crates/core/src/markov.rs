//! Birth-death chains bounding the gathering and scattering programs, their exact
//! expected hitting times, and the closed-form convergence bounds.
//!
//! Two independent routes compute every hitting time: the telescoped sum of per-state
//! waiting times ([`hitting_time_birth_death`]) and a first-step linear system over the
//! full transition matrix ([`hitting_time_general`]). [`simulate_chain`] samples the chain
//! directly as a third check.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Majority threshold `⌊n/2⌋ + 1`.
pub fn alpha(n: usize) -> usize {
    n / 2 + 1
}

/// States `1..=n`; from `j < n` the chain either stays or moves to `j + 1`. State `n` is
/// absorbing.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthDeathChain {
    advance: Vec<f64>,
}

impl BirthDeathChain {
    /// `advance[j - 1]` is the probability of leaving state `j` for `j + 1`.
    pub fn new(advance: Vec<f64>) -> Result<Self> {
        if let Some(p) = advance.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidChain(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self { advance })
    }

    pub fn n_states(&self) -> usize {
        self.advance.len() + 1
    }

    pub fn p_advance(&self, state: usize) -> f64 {
        assert!((1..=self.n_states()).contains(&state), "state {state} out of range");
        self.advance.get(state - 1).copied().unwrap_or(0.0)
    }

    pub fn p_stay(&self, state: usize) -> f64 {
        1.0 - self.p_advance(state)
    }

    /// Row-stochastic matrix over states `1..=n` (row/column `j - 1` is state `j`).
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_states();
        (1..=n)
            .map(|j| {
                let mut row = vec![0.0; n];
                let adv = self.p_advance(j);
                row[j - 1] = 1.0 - adv;
                if j < n {
                    row[j] = adv;
                }
                row
            })
            .collect()
    }
}

/// Largest-group chain of multiplicity gathering: from `k`, stay with `k/n`, advance with
/// `(n - k)/n`.
pub fn gathering_chain(n: usize) -> Result<BirthDeathChain> {
    if n < 2 {
        return Err(Error::InvalidChain(format!("gathering chain needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    BirthDeathChain::new((1..n).map(|k| (nf - k as f64) / nf).collect())
}

/// Worst-case cell-count chain of Voronoi scattering: from `j`, stay with
/// `(1/4)^(n - j + 1)`.
pub fn scattering_chain(n: usize) -> Result<BirthDeathChain> {
    if n < 2 {
        return Err(Error::InvalidChain(format!("scattering chain needs n >= 2, got {n}")));
    }
    BirthDeathChain::new((1..n).map(|j| 1.0 - 0.25f64.powi((n - j + 1) as i32)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingTimeResult {
    pub from: usize,
    pub to: usize,
    pub expected_steps: f64,
    /// Expected sojourn in each state on the way, `1 / p_advance(j)`.
    pub per_transition: Vec<f64>,
}

pub fn hitting_time_birth_death(chain: &BirthDeathChain, from: usize, to: usize) -> Result<HittingTimeResult> {
    if from < 1 || from > to || to > chain.n_states() {
        return Err(Error::InvalidChain(format!(
            "need 1 <= from <= to <= {}, got {from} -> {to}",
            chain.n_states()
        )));
    }
    let per_transition = (from..to)
        .map(|j| match chain.p_advance(j) {
            p if p > 0.0 => Ok(1.0 / p),
            _ => Err(Error::Unreachable(format!("state {j} never advances"))),
        })
        .collect::<Result<Vec<f64>>>()?;
    let expected_steps = compensated_reciprocal_sum(from..to, |j| chain.p_advance(j));
    Ok(HittingTimeResult { from, to, expected_steps, per_transition })
}

/// `Σ 1/p(j)` carrying the rounding error of every reciprocal and every addition, so the
/// result is within an ulp of the exact sum of the given probabilities.
fn compensated_reciprocal_sum(states: std::ops::Range<usize>, p: impl Fn(usize) -> f64) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for j in states {
        let p = p(j);
        let r = 1.0 / p;
        let residual = (-r).mul_add(p, 1.0) / p;
        let s = sum + r;
        let bp = s - sum;
        carry += (sum - (s - bp)) + (r - bp) + residual;
        sum = s;
    }
    sum + carry
}

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Expected steps to enter `targets` from every state of a finite chain (0-based).
///
/// Solves `E[i] = 0` on targets and `E[i] = 1 + Σ_j P(i, j) E[j]` elsewhere. States that
/// reach the targets with probability less than one get `f64::INFINITY`.
pub fn hitting_time_general(matrix: &[Vec<f64>], targets: &BTreeSet<usize>) -> Result<Vec<f64>> {
    let n = matrix.len();
    if n == 0 || targets.is_empty() {
        return Err(Error::InvalidChain("need at least one state and one target".into()));
    }
    if let Some(t) = targets.iter().find(|t| **t >= n) {
        return Err(Error::InvalidChain(format!("target {t} out of range")));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != n {
            return Err(Error::InvalidChain(format!("row {i} has {} entries, expected {n}", row.len())));
        }
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidChain(format!("row {i} has an entry outside [0, 1]")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidChain(format!("row {i} sums to {sum}")));
        }
    }

    // States that can reach a target at all.
    let mut reaches = vec![false; n];
    let mut queue: VecDeque<usize> = targets.iter().copied().collect();
    for &t in targets {
        reaches[t] = true;
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !reaches[i] && matrix[i][j] > 0.0 {
                reaches[i] = true;
                queue.push_back(i);
            }
        }
    }
    // A state has a finite hitting time iff no path avoiding the targets leads to a state
    // that cannot reach them.
    let mut infinite: Vec<bool> = reaches.iter().map(|r| !r).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|i| infinite[*i]).collect();
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !infinite[i] && !targets.contains(&i) && matrix[i][j] > 0.0 {
                infinite[i] = true;
                queue.push_back(i);
            }
        }
    }

    let unknowns: Vec<usize> = (0..n).filter(|i| !targets.contains(i) && !infinite[*i]).collect();
    let mut result: Vec<f64> = (0..n)
        .map(|i| if infinite[i] { f64::INFINITY } else { 0.0 })
        .collect();
    if unknowns.is_empty() {
        return Ok(result);
    }
    let m = unknowns.len();
    let a = DMatrix::from_fn(m, m, |r, c| {
        let (i, j) = (unknowns[r], unknowns[c]);
        f64::from(u8::from(r == c)) - matrix[i][j]
    });
    let b = DVector::from_element(m, 1.0);
    let solution = a.lu().solve(&b).ok_or(Error::Singular)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    for (k, &i) in unknowns.iter().enumerate() {
        result[i] = solution[k];
    }
    Ok(result)
}

/// Linear-solve hitting time between two states of a birth-death chain (1-based).
pub fn hitting_time_linear(chain: &BirthDeathChain, from: usize, to: usize) -> Result<f64> {
    if from < 1 || to > chain.n_states() || from > to {
        return Err(Error::InvalidChain(format!("invalid states {from} -> {to}")));
    }
    let e = hitting_time_general(&chain.transition_matrix(), &BTreeSet::from([to - 1]))?;
    let v = e[from - 1];
    if v.is_infinite() {
        return Err(Error::Unreachable(format!("state {to} from {from}")));
    }
    Ok(v)
}

/// Sample mean of hitting times with a normal-approximation 95% interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub trials: u64,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
}

impl McEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std_dev = var.sqrt();
        let std_error = std_dev / n.sqrt();
        Self {
            trials: samples.len() as u64,
            mean,
            std_dev,
            std_error,
            ci95: [mean - 1.96 * std_error, mean + 1.96 * std_error],
        }
    }
}

/// Runs the chain `trials` times from `from` until it enters `to`, one transition at a time.
pub fn simulate_chain(chain: &BirthDeathChain, from: usize, to: usize, trials: u64, seed: u64) -> Result<McEstimate> {
    // Validates the path and rejects unreachable targets.
    hitting_time_birth_death(chain, from, to)?;
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<f64> = (0..trials)
        .map(|_| {
            let mut state = from;
            let mut steps = 0u64;
            while state < to {
                steps += 1;
                if rng.gen_bool(chain.p_advance(state)) {
                    state += 1;
                }
            }
            steps as f64
        })
        .collect();
    Ok(McEstimate::from_samples(&samples))
}

/// `α ln α + 1` with `α = ⌊n/2⌋ + 1`.
pub fn bound_gathering(n: usize) -> f64 {
    let a = alpha(n) as f64;
    a * a.ln() + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrashBound {
    /// `α ln α + 2f`.
    pub bound: f64,
    /// Expected time `n / (n - α)` to redo the last transition after a crash; `None` when
    /// `α = n`.
    pub per_crash_penalty: Option<f64>,
}

pub fn bound_gathering_crash(n: usize, f: usize) -> CrashBound {
    let a = alpha(n);
    let af = a as f64;
    CrashBound {
        bound: af * af.ln() + 2.0 * f as f64,
        per_crash_penalty: (n > a).then(|| n as f64 / (n - a) as f64),
    }
}

/// Steps after which the pessimistic Byzantine event has failed with probability at most
/// `confidence`: `ln(1/confidence) · n^n`.
pub fn bound_byzantine(n: usize, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(Error::Config(format!("confidence must be in (0, 1], got {confidence}")));
    }
    Ok((1.0 / confidence).ln() * (n as f64).powi(n as i32))
}

/// Asymptotic scattering time `n + 4/3` as stated for the scattering chain.
pub fn bound_scattering(n: usize) -> f64 {
    n as f64 + 4.0 / 3.0
}

/// Exact `T(1 → α)` of the gathering chain: `Σ_{l=1}^{α-1} n / (n - l)`.
pub fn gathering_exact(n: usize) -> Result<f64> {
    Ok(hitting_time_birth_death(&gathering_chain(n)?, 1, alpha(n))?.expected_steps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    Gathering,
    Scattering,
}

impl ChainKind {
    pub fn chain(&self, n: usize) -> Result<BirthDeathChain> {
        match self {
            ChainKind::Gathering => gathering_chain(n),
            ChainKind::Scattering => scattering_chain(n),
        }
    }

    /// Natural target: `α` for gathering, `n` for scattering.
    pub fn default_target(&self, n: usize) -> usize {
        match self {
            ChainKind::Gathering => alpha(n),
            ChainKind::Scattering => n,
        }
    }

    pub fn bound(&self, n: usize) -> f64 {
        match self {
            ChainKind::Gathering => bound_gathering(n),
            ChainKind::Scattering => bound_scattering(n),
        }
    }
}

impl fmt::Display for ChainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainKind::Gathering => "gathering",
            ChainKind::Scattering => "scattering",
        })
    }
}

impl FromStr for ChainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gathering" => Ok(ChainKind::Gathering),
            "scattering" => Ok(ChainKind::Scattering),
            other => Err(Error::Config(format!("unknown chain {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub chain: ChainKind,
    pub n: usize,
    pub from: usize,
    pub to: usize,
    pub exact: f64,
    pub linear_solve: f64,
    pub closed_form_bound: f64,
    pub mc_mean: Option<f64>,
    pub mc_ci: Option<[f64; 2]>,
}

/// Exact, linear-solve, bound and (if `trials > 0`) Monte Carlo values side by side.
pub fn chain_report(
    kind: ChainKind,
    n: usize,
    from: usize,
    to: Option<usize>,
    trials: u64,
    seed: u64,
) -> Result<ChainReport> {
    let chain = kind.chain(n)?;
    let to = to.unwrap_or_else(|| kind.default_target(n));
    let exact = hitting_time_birth_death(&chain, from, to)?.expected_steps;
    let linear_solve = hitting_time_linear(&chain, from, to)?;
    let mc = (trials > 0)
        .then(|| simulate_chain(&chain, from, to, trials, seed))
        .transpose()?;
    Ok(ChainReport {
        chain: kind,
        n,
        from,
        to,
        exact,
        linear_solve,
        closed_form_bound: kind.bound(n),
        mc_mean: mc.as_ref().map(|m| m.mean),
        mc_ci: mc.map(|m| m.ci95),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gathering_chain_labels() {
        let c = gathering_chain(4).unwrap();
        assert_eq!(c.p_advance(1), 0.75);
        assert_eq!(c.p_advance(2), 0.5);
        assert_eq!(c.p_advance(3), 0.25);
        assert_eq!(c.p_stay(4), 1.0);
        assert_eq!(gathering_chain(2).unwrap().p_advance(1), 0.5);
        assert!(gathering_chain(1).is_err());
        for row in c.transition_matrix() {
            assert!(close(row.iter().sum::<f64>(), 1.0, 1e-15));
        }
    }

    #[test]
    fn scattering_chain_labels() {
        let c = scattering_chain(3).unwrap();
        assert!(close(c.p_stay(1), 1.0 / 64.0, 1e-15));
        assert!(close(c.p_stay(2), 1.0 / 16.0, 1e-15));
        for n in 2..20 {
            assert!(close(scattering_chain(n).unwrap().p_advance(n - 1), 15.0 / 16.0, 1e-15));
        }
        assert!(scattering_chain(0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let g = hitting_time_birth_death(&gathering_chain(4).unwrap(), 1, 3).unwrap();
        assert_eq!(g.expected_steps, 10.0 / 3.0);
        assert_eq!(g.per_transition.len(), 2);
        assert_eq!(hitting_time_birth_death(&gathering_chain(6).unwrap(), 4, 4).unwrap().expected_steps, 0.0);
        let s = hitting_time_birth_death(&scattering_chain(3).unwrap(), 1, 3).unwrap();
        assert!(close(s.expected_steps, 64.0 / 63.0 + 16.0 / 15.0, 1e-15));
        assert!(close(s.expected_steps, 2.082540, 1e-6));
    }

    #[test]
    fn closed_form_rejects_bad_paths() {
        let stuck = BirthDeathChain::new(vec![0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(hitting_time_birth_death(&stuck, 1, 4), Err(Error::Unreachable(_))));
        assert!(hitting_time_birth_death(&stuck, 3, 2).is_err());
        assert!(BirthDeathChain::new(vec![1.5]).is_err());
    }

    #[test]
    fn linear_solve_examples() {
        // Deterministic advance: E[1] = n - 1.
        let det = BirthDeathChain::new(vec![1.0; 6]).unwrap();
        assert!(close(hitting_time_linear(&det, 1, 7).unwrap(), 6.0, 1e-12));
        let g = hitting_time_linear(&gathering_chain(4).unwrap(), 1, 3).unwrap();
        assert!(close(g, 10.0 / 3.0, 1e-9));
        let p = 0.3;
        let two = BirthDeathChain::new(vec![p]).unwrap();
        assert!(close(hitting_time_linear(&two, 1, 2).unwrap(), 1.0 / p, 1e-12));
    }

    #[test]
    fn linear_solve_marks_unreachable_states() {
        let g = gathering_chain(6).unwrap();
        let e = hitting_time_general(&g.transition_matrix(), &BTreeSet::from([alpha(6) - 1])).unwrap();
        assert!(e[..alpha(6) - 1].iter().all(|v| v.is_finite()));
        assert!(e[alpha(6)..].iter().all(|v| v.is_infinite()));
        let stuck = BirthDeathChain::new(vec![0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(hitting_time_linear(&stuck, 1, 4), Err(Error::Unreachable(_))));
        // Bad rows.
        assert!(hitting_time_general(&[vec![0.5, 0.4], vec![0.0, 1.0]], &BTreeSet::from([1])).is_err());
        assert!(hitting_time_general(&[vec![1.0]], &BTreeSet::new()).is_err());
    }

    #[test]
    fn general_solver_handles_non_birth_death_chains() {
        // Symmetric walk on 0..=4 absorbed at both ends: E[i] = i (4 - i).
        let mut m = vec![vec![0.0; 5]; 5];
        m[0][0] = 1.0;
        m[4][4] = 1.0;
        for i in 1..4 {
            m[i][i - 1] = 0.5;
            m[i][i + 1] = 0.5;
        }
        let e = hitting_time_general(&m, &BTreeSet::from([0, 4])).unwrap();
        for (i, v) in e.iter().enumerate() {
            assert!(close(*v, (i * (4 - i)) as f64, 1e-12), "{i}: {v}");
        }
    }

    #[test]
    fn monte_carlo_matches_solver() {
        let c = gathering_chain(4).unwrap();
        let est = simulate_chain(&c, 1, 3, 100_000, 1).unwrap();
        assert!((est.mean - 10.0 / 3.0).abs() < 3.0 * est.std_error, "{est:?}");
        let s = scattering_chain(8).unwrap();
        let exact = hitting_time_birth_death(&s, 1, 8).unwrap().expected_steps;
        let est = simulate_chain(&s, 1, 8, 100_000, 2).unwrap();
        assert!((est.mean - exact).abs() < 3.0 * est.std_error, "{est:?} vs {exact}");
        let one = simulate_chain(&c, 1, 3, 1, 77).unwrap();
        assert_eq!(one, simulate_chain(&c, 1, 3, 1, 77).unwrap());
        assert_eq!(one.std_error, 0.0);
    }

    #[test]
    fn bounds() {
        assert!(close(bound_gathering(10), 6.0 * 6f64.ln() + 1.0, 1e-12));
        assert!(close(bound_gathering(10), 11.7506, 1e-4));
        assert!(close(bound_gathering(2), 2.3863, 1e-4));
        assert_eq!(bound_gathering(3), bound_gathering(2));

        let c = bound_gathering_crash(8, 2);
        assert!(close(c.bound, 12.047, 1e-3));
        assert!(close(c.per_crash_penalty.unwrap(), 8.0 / 3.0, 1e-15));
        assert!(close(bound_gathering_crash(8, 0).bound, bound_gathering(8) - 1.0, 1e-12));
        assert!(close(bound_gathering_crash(4, 1).bound, 5.296, 1e-3));
        assert_eq!(bound_gathering_crash(2, 1).per_crash_penalty, None);

        assert!(close(bound_byzantine(3, 0.01).unwrap(), 124.33, 0.01));
        assert_eq!(bound_byzantine(5, 1.0).unwrap(), 0.0);
        assert!(close(bound_byzantine(2, (-1f64).exp()).unwrap(), 4.0, 1e-12));
        assert!(bound_byzantine(2, 0.0).is_err());
    }

    #[test]
    fn gathering_hitting_time_stays_under_the_envelope() {
        for n in 2..=256 {
            let a = alpha(n) as f64;
            let t = gathering_exact(n).unwrap();
            assert!(t <= a * a.ln() + a, "n = {n}: {t}");
        }
    }

    #[test]
    fn scattering_excess_is_a_small_constant() {
        for n in 3..=64 {
            let t = hitting_time_birth_death(&scattering_chain(n).unwrap(), 1, n).unwrap().expected_steps;
            let excess = t - (n as f64 - 1.0);
            assert!(excess > 0.0 && excess < 0.2, "n = {n}: {excess}");
        }
    }

    #[test]
    fn report_shape() {
        let r = chain_report(ChainKind::Gathering, 8, 1, None, 1000, 3).unwrap();
        assert_eq!(r.to, 5);
        assert!(close(r.exact, r.linear_solve, 1e-9));
        let json = serde_json::to_value(&r).unwrap();
        for key in ["chain", "n", "from", "to", "exact", "closed_form_bound", "mc_mean", "mc_ci"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #[test]
        fn both_routes_agree_on_random_chains(
            probs in prop::collection::vec(0.05f64..=1.0, 1..30),
            from_frac in 0.0f64..1.0,
        ) {
            let chain = BirthDeathChain::new(probs).unwrap();
            let n = chain.n_states();
            let from = 1 + ((n - 1) as f64 * from_frac) as usize;
            let closed = hitting_time_birth_death(&chain, from, n).unwrap().expected_steps;
            let linear = hitting_time_linear(&chain, from, n).unwrap();
            prop_assert!((closed - linear).abs() <= 1e-9 * closed.max(1.0));
        }
    }
}
