//! Planning- and sampling-error injection, empirical error estimation and
//! the abstract per-step Bernoulli chain behind the closed-form bounds.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::Budget;
use crate::oracle::DistanceOracle;
use crate::rng::RngStream;
use crate::sokoban::{step, Action, SokobanState};
use crate::trajectory::TrajectoryRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorParams {
    pub eps_p: f64,
    pub eps_s: f64,
    /// Plan-and-Act only.
    pub p_follow: f64,
    /// Abstract chain only; emergent in Sokoban runs.
    pub delta_b: f64,
    /// Abstract chain only; emergent in Sokoban runs.
    pub delta_r: f64,
}

impl Default for ErrorParams {
    fn default() -> Self {
        Self {
            eps_p: 0.0,
            eps_s: 0.0,
            p_follow: 0.9,
            delta_b: 1.0,
            delta_r: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{name} = {value} is not a probability")]
pub struct InvalidProbability {
    pub name: &'static str,
    pub value: f64,
}

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<(), InvalidProbability> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(InvalidProbability { name, value })
    }
}

impl ErrorParams {
    pub fn new(eps_p: f64, eps_s: f64) -> Self {
        Self {
            eps_p,
            eps_s,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), InvalidProbability> {
        check_probability("eps_p", self.eps_p)?;
        check_probability("eps_s", self.eps_s)?;
        check_probability("p_follow", self.p_follow)?;
        check_probability("delta_b", self.delta_b)?;
        check_probability("delta_r", self.delta_r)
    }
}

/// Which actions count as "available" alternatives for injected errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvailableActions {
    /// All four actions; blocked moves are legal no-ops.
    #[default]
    All,
    /// Only actions that change the state.
    StateChanging,
}

impl AvailableActions {
    pub fn actions(self, state: &SokobanState) -> Vec<Action> {
        match self {
            AvailableActions::All => Action::ALL.to_vec(),
            AvailableActions::StateChanging => {
                Action::ALL.into_iter().filter(|&a| step(state, a).moved).collect()
            }
        }
    }
}

/// With probability `eps_p`, replaces the intended action by a uniformly drawn
/// non-viable alternative, or by any alternative when none is non-viable.
pub fn inject_planning_error<O: DistanceOracle + ?Sized, R: Rng>(
    oracle: &O,
    state: &SokobanState,
    intended: Action,
    remaining: &Budget,
    params: &ErrorParams,
    available: &[Action],
    rng: &mut R,
) -> Action {
    if !rng.gen_bool(params.eps_p) {
        return intended;
    }
    let alternatives: Vec<Action> = available.iter().copied().filter(|&a| a != intended).collect();
    if alternatives.is_empty() {
        return intended;
    }
    let non_viable: Vec<Action> = alternatives
        .iter()
        .copied()
        .filter(|&a| !oracle.is_viable(state, a, remaining))
        .collect();
    let pool = if non_viable.is_empty() { &alternatives } else { &non_viable };
    pool[rng.gen_range(0..pool.len())]
}

/// With probability `eps_s`, flips the executed action to a uniformly drawn
/// different available action. The intended action is left untouched.
pub fn inject_sampling_error<R: Rng>(intended: Action, available: &[Action], params: &ErrorParams, rng: &mut R) -> Action {
    if !rng.gen_bool(params.eps_s) {
        return intended;
    }
    let alternatives: Vec<Action> = available.iter().copied().filter(|&a| a != intended).collect();
    if alternatives.is_empty() {
        return intended;
    }
    alternatives[rng.gen_range(0..alternatives.len())]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub steps: u64,
    pub intended_non_viable: u64,
    pub deviations: u64,
    pub deviations_from_viable: u64,
    pub breaks: u64,
    pub deviations_from_non_viable: u64,
    pub recoveries: u64,
}

/// Empirical error rates; a rate with a zero denominator is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub planning_rate: Option<f64>,
    pub sampling_rate: Option<f64>,
    pub delta_b_hat: Option<f64>,
    pub delta_r_hat: Option<f64>,
    pub counts: ErrorCounts,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ErrorCounts {
    pub fn add_record(&mut self, record: &TrajectoryRecord) {
        for s in &record.steps {
            self.steps += 1;
            let deviated = s.executed_action != s.intended_action;
            if !s.intended_viable {
                self.intended_non_viable += 1;
            }
            if deviated {
                self.deviations += 1;
                if s.intended_viable {
                    self.deviations_from_viable += 1;
                    if !s.executed_viable {
                        self.breaks += 1;
                    }
                } else {
                    self.deviations_from_non_viable += 1;
                    if s.executed_viable {
                        self.recoveries += 1;
                    }
                }
            }
        }
    }

    pub fn merge(&mut self, other: &ErrorCounts) {
        self.steps += other.steps;
        self.intended_non_viable += other.intended_non_viable;
        self.deviations += other.deviations;
        self.deviations_from_viable += other.deviations_from_viable;
        self.breaks += other.breaks;
        self.deviations_from_non_viable += other.deviations_from_non_viable;
        self.recoveries += other.recoveries;
    }

    pub fn estimate(&self) -> ErrorEstimate {
        ErrorEstimate {
            planning_rate: ratio(self.intended_non_viable, self.steps),
            sampling_rate: ratio(self.deviations, self.steps),
            delta_b_hat: ratio(self.breaks, self.deviations_from_viable),
            delta_r_hat: ratio(self.recoveries, self.deviations_from_non_viable),
            counts: *self,
        }
    }
}

/// Planning rate, sampling rate, and the conditional break/recover rates over all steps.
pub fn estimate_errors<'a>(records: impl IntoIterator<Item = &'a TrajectoryRecord>) -> ErrorEstimate {
    let mut counts = ErrorCounts::default();
    for r in records {
        counts.add_record(r);
    }
    counts.estimate()
}

/// Number of distinct candidate actions per step for the solver-backed chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DSequence {
    Constant(u32),
    PerStep(Vec<u32>),
}

impl DSequence {
    pub fn at(&self, t: usize) -> u32 {
        match self {
            DSequence::Constant(d) => *d,
            DSequence::PerStep(v) => v[t],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainVariant {
    ReAct,
    PlanAndAct { alpha: f64 },
    Ours { d: DSequence },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error(transparent)]
    Probability(#[from] InvalidProbability),
    #[error("horizon and trial count must be at least 1")]
    Empty,
    #[error("d sequence has {got} entries, horizon is {horizon}")]
    DLength { got: usize, horizon: usize },
    #[error("d must be at least 1")]
    ZeroCandidates,
}

fn react_step<R: Rng>(p: &ErrorParams, eps_s: f64, rng: &mut R) -> bool {
    let plan_viable = rng.gen_bool(1.0 - p.eps_p);
    let flipped = rng.gen_bool(eps_s);
    if plan_viable {
        !(flipped && rng.gen_bool(p.delta_b))
    } else {
        flipped && rng.gen_bool(p.delta_r)
    }
}

fn chain_step<R: Rng>(p: &ErrorParams, variant: &ChainVariant, t: usize, rng: &mut R) -> bool {
    match variant {
        ChainVariant::ReAct => react_step(p, p.eps_s, rng),
        ChainVariant::PlanAndAct { alpha } => {
            if rng.gen_bool(alpha * p.p_follow) {
                rng.gen_bool(1.0 - p.eps_p)
            } else {
                react_step(p, p.eps_s, rng)
            }
        }
        ChainVariant::Ours { d } => {
            let candidates = d.at(t);
            let mut all_non_viable = true;
            for _ in 0..candidates {
                all_non_viable &= rng.gen_bool(p.eps_p);
            }
            !all_non_viable
        }
    }
}

const CHAIN_CHUNK: u64 = 4096;

/// Number of successful trials, where a trial succeeds iff all `horizon`
/// independent per-step viability events succeed.
pub fn simulate_chain_successes(
    params: &ErrorParams,
    horizon: usize,
    variant: &ChainVariant,
    trials: u64,
    stream: &RngStream,
) -> Result<u64, ChainError> {
    params.validate()?;
    if horizon == 0 || trials == 0 {
        return Err(ChainError::Empty);
    }
    match variant {
        ChainVariant::PlanAndAct { alpha } => check_probability("alpha", *alpha)?,
        ChainVariant::Ours { d } => {
            if let DSequence::PerStep(v) = d {
                if v.len() != horizon {
                    return Err(ChainError::DLength { got: v.len(), horizon });
                }
                if v.contains(&0) {
                    return Err(ChainError::ZeroCandidates);
                }
            } else if d.at(0) == 0 {
                return Err(ChainError::ZeroCandidates);
            }
        }
        ChainVariant::ReAct => {}
    }
    let chunks = trials.div_ceil(CHAIN_CHUNK);
    let successes = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.with_counter(c).rng();
            let n = CHAIN_CHUNK.min(trials - c * CHAIN_CHUNK);
            (0..n)
                .filter(|_| (0..horizon).all(|t| chain_step(params, variant, t, &mut rng)))
                .count() as u64
        })
        .sum();
    Ok(successes)
}

/// Empirical success probability of the abstract chain.
pub fn simulate_abstract_chain(
    params: &ErrorParams,
    horizon: usize,
    variant: &ChainVariant,
    trials: u64,
    stream: &RngStream,
) -> Result<f64, ChainError> {
    simulate_chain_successes(params, horizon, variant, trials, stream).map(|s| s as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{viable_actions, BfsOracle};
    use crate::sokoban::parse_ascii;
    use crate::trajectory::{StepRecord, TerminalStatus};

    fn three_sigma(p: f64, n: f64) -> f64 {
        3.0 * (p * (1.0 - p) / n).sqrt()
    }

    fn corridor() -> SokobanState {
        parse_ascii("#######\n#.....#\n#@$..G#\n#.....#\n#######\n").unwrap()
    }

    #[test]
    fn zero_planning_error_keeps_intent() {
        let s = corridor();
        let mut rng = RngStream::new(1, "t").rng();
        let p = ErrorParams::new(0.0, 0.0);
        for _ in 0..1000 {
            let a = inject_planning_error(&BfsOracle, &s, Action::R, &Budget::steps(3), &p, &Action::ALL, &mut rng);
            assert_eq!(a, Action::R);
        }
    }

    #[test]
    fn forced_planning_error_is_non_viable() {
        // Budget equals T*, so every alternative to the optimal push is non-viable.
        let s = corridor();
        let remaining = Budget::steps(3);
        let verdict = viable_actions(&s, &remaining);
        let mut rng = RngStream::new(2, "t").rng();
        let p = ErrorParams::new(1.0, 0.0);
        for _ in 0..200 {
            let a = inject_planning_error(&BfsOracle, &s, Action::R, &remaining, &p, &Action::ALL, &mut rng);
            assert!(!verdict.is_viable(a));
        }
    }

    #[test]
    fn falls_back_to_any_alternative_when_all_viable() {
        let s = corridor();
        let remaining = Budget::steps(20);
        let mut rng = RngStream::new(3, "t").rng();
        let p = ErrorParams::new(1.0, 0.0);
        let mut seen = [0u32; 4];
        for _ in 0..3000 {
            let a = inject_planning_error(&BfsOracle, &s, Action::R, &remaining, &p, &Action::ALL, &mut rng);
            seen[a.index()] += 1;
        }
        assert_eq!(seen[Action::R.index()], 0);
        assert!(seen.iter().enumerate().all(|(i, &c)| i == Action::R.index() || c > 800));
    }

    #[test]
    fn planning_error_frequency() {
        let s = corridor();
        let remaining = Budget::steps(3);
        let mut rng = RngStream::new(4, "t").rng();
        let p = ErrorParams::new(0.25, 0.0);
        let n = 100_000;
        let replaced = (0..n)
            .filter(|_| {
                inject_planning_error(&BfsOracle, &s, Action::R, &remaining, &p, &Action::ALL, &mut rng) != Action::R
            })
            .count() as f64;
        assert!((replaced / n as f64 - 0.25).abs() <= three_sigma(0.25, n as f64));
    }

    #[test]
    fn sampling_error_identity_and_singleton() {
        let mut rng = RngStream::new(5, "t").rng();
        let none = ErrorParams::new(0.0, 0.0);
        let always = ErrorParams::new(0.0, 1.0);
        for _ in 0..100 {
            assert_eq!(inject_sampling_error(Action::L, &Action::ALL, &none, &mut rng), Action::L);
            assert_eq!(inject_sampling_error(Action::L, &[Action::L], &always, &mut rng), Action::L);
        }
    }

    #[test]
    fn forced_flip_is_uniform_over_others() {
        let mut rng = RngStream::new(6, "t").rng();
        let p = ErrorParams::new(0.0, 1.0);
        let n = 100_000;
        let mut counts = [0f64; 4];
        for _ in 0..n {
            counts[inject_sampling_error(Action::R, &Action::ALL, &p, &mut rng).index()] += 1.0;
        }
        assert_eq!(counts[Action::R.index()], 0.0);
        let expected = n as f64 / 3.0;
        let chi2: f64 = counts[..3].iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 2 degrees of freedom; 13.82 is the 0.999 quantile.
        assert!(chi2 < 13.82, "chi2 = {chi2}");
    }

    #[test]
    fn flip_frequency() {
        let mut rng = RngStream::new(7, "t").rng();
        let p = ErrorParams::new(0.0, 0.2);
        let n = 100_000;
        let flips = (0..n)
            .filter(|_| inject_sampling_error(Action::U, &Action::ALL, &p, &mut rng) != Action::U)
            .count() as f64;
        assert!((flips / n as f64 - 0.2).abs() <= three_sigma(0.2, n as f64));
    }

    fn rec(flags: &[(bool, bool, bool)]) -> TrajectoryRecord {
        let steps = flags
            .iter()
            .map(|&(iv, dev, ev)| StepRecord {
                state_id: "x".into(),
                intended_action: Action::U,
                executed_action: if dev { Action::D } else { Action::U },
                intended_viable: iv,
                executed_viable: ev,
                budget_after: Budget::steps(0),
            })
            .collect();
        TrajectoryRecord::new(steps, TerminalStatus::DeadEnd)
    }

    #[test]
    fn clean_log_has_absent_conditionals() {
        let e = estimate_errors([&rec(&[(true, false, true); 5])]);
        assert_eq!(e.planning_rate, Some(0.0));
        assert_eq!(e.sampling_rate, Some(0.0));
        assert_eq!(e.delta_b_hat, None);
        assert_eq!(e.delta_r_hat, None);
        assert_eq!(estimate_errors([]).planning_rate, None);
    }

    #[test]
    fn direct_tallies() {
        let mut flags = vec![(true, false, true); 7];
        flags.extend([(false, false, false); 3]);
        let e = estimate_errors([&rec(&flags)]);
        assert_eq!(e.planning_rate, Some(0.3));

        let e = estimate_errors([&rec(&[
            (true, true, false),
            (true, true, true),
            (false, true, true),
            (false, true, false),
            (false, true, false),
        ])]);
        assert_eq!(e.sampling_rate, Some(1.0));
        assert_eq!(e.delta_b_hat, Some(0.5));
        assert_eq!(e.delta_r_hat, Some(1.0 / 3.0));
    }

    #[test]
    fn error_free_chain_always_succeeds() {
        let p = ErrorParams::new(0.0, 0.0);
        let s = RngStream::new(8, "chain");
        for v in [ChainVariant::ReAct, ChainVariant::PlanAndAct { alpha: 0.5 }, ChainVariant::Ours { d: DSequence::Constant(2) }] {
            assert_eq!(simulate_abstract_chain(&p, 7, &v, 10_000, &s).unwrap(), 1.0);
        }
    }

    #[test]
    fn react_chain_matches_hand_value() {
        let p = ErrorParams { eps_p: 0.25, eps_s: 0.2, delta_b: 1.0, delta_r: 0.0, ..Default::default() };
        let n = 100_000;
        let u = simulate_abstract_chain(&p, 4, &ChainVariant::ReAct, n, &RngStream::new(9, "chain")).unwrap();
        // 0.6^4
        assert!((u - 0.1296).abs() <= three_sigma(0.1296, n as f64), "{u}");
    }

    #[test]
    fn ours_chain_matches_hand_value() {
        let p = ErrorParams::new(0.5, 0.0);
        let n = 100_000;
        let v = ChainVariant::Ours { d: DSequence::Constant(3) };
        let u = simulate_abstract_chain(&p, 2, &v, n, &RngStream::new(10, "chain")).unwrap();
        assert!((u - 0.765625).abs() <= three_sigma(0.765625, n as f64), "{u}");
    }

    #[test]
    fn chain_rejects_bad_inputs() {
        let p = ErrorParams::new(0.1, 0.1);
        let s = RngStream::new(0, "c");
        assert_eq!(simulate_abstract_chain(&p, 0, &ChainVariant::ReAct, 10, &s), Err(ChainError::Empty));
        let v = ChainVariant::Ours { d: DSequence::PerStep(vec![1, 2]) };
        assert!(matches!(simulate_abstract_chain(&p, 3, &v, 10, &s), Err(ChainError::DLength { .. })));
        let bad = ErrorParams::new(1.5, 0.0);
        assert!(matches!(simulate_abstract_chain(&bad, 3, &ChainVariant::ReAct, 10, &s), Err(ChainError::Probability(_))));
    }

    #[test]
    fn chain_is_deterministic_and_thread_independent() {
        let p = ErrorParams::new(0.3, 0.3);
        let s = RngStream::new(11, "chain");
        let a = simulate_chain_successes(&p, 5, &ChainVariant::ReAct, 50_000, &s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_chain_successes(&p, 5, &ChainVariant::ReAct, 50_000, &s).unwrap());
        assert_eq!(a, b);
    }
}
