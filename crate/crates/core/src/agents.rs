//! Closed-loop controllers: ReAct, Plan-and-Act, their Best-of-N variants and
//! the graph-planning agent (TAPE), all driven by the noisy oracle surrogate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::Budget;
use crate::error_model::{inject_planning_error, inject_sampling_error, AvailableActions, ErrorParams, InvalidProbability};
use crate::oracle::DistanceOracle;
use crate::plan_graph::{annotate, build_graph, sample_plans, AbstractPlan, AnnotationMode, SamplerOptions};
use crate::rng::{RngStream, StreamRng};
use crate::sokoban::{step, Action, SokobanInstance, SokobanState};
use crate::solver::{solve_with_fallback, PathSelectionProblem};
use crate::trajectory::{StepRecord, TerminalStatus, TrajectoryRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Framework {
    ReAct,
    PlanAndAct,
    ReActBestOfN,
    PlanAndActBestOfN,
    #[serde(rename = "TAPE")]
    Tape,
}

impl Framework {
    pub fn name(self) -> &'static str {
        match self {
            Framework::ReAct => "ReAct",
            Framework::PlanAndAct => "PlanAndAct",
            Framework::ReActBestOfN => "ReActBestOfN",
            Framework::PlanAndActBestOfN => "PlanAndActBestOfN",
            Framework::Tape => "TAPE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonPolicy {
    /// Try every horizon up to the remaining budget.
    #[default]
    RemainingBudget,
    /// Try horizons up to `min(n, remaining budget)`.
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    pub use_solver: bool,
    pub use_constrained_execution: bool,
    pub use_replanning: bool,
}

impl Default for Ablations {
    fn default() -> Self {
        Ablations {
            use_solver: true,
            use_constrained_execution: true,
            use_replanning: true,
        }
    }
}

impl Ablations {
    pub const ALL_OFF: Ablations = Ablations {
        use_solver: false,
        use_constrained_execution: false,
        use_replanning: false,
    };
}

/// How Best-of-N picks among its candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// Viable candidates rank above non-viable ones; first in draw order wins ties.
    #[default]
    OracleViability,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub framework: Framework,
    pub error_params: ErrorParams,
    /// Plans (or candidates) sampled per planning point.
    pub m: u32,
    pub horizon_policy: HorizonPolicy,
    pub ablations: Ablations,
    pub available: AvailableActions,
    pub scorer: Scorer,
    pub hallucination_rate: f64,
    pub annotation: AnnotationMode,
    /// Cap on deviation-triggered replans; `None` means the initial budget.
    pub max_replans: Option<u32>,
    /// Hard cap on environment steps, reported as `HorizonExceeded`.
    pub max_steps: Option<u32>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            framework: Framework::ReAct,
            error_params: ErrorParams::default(),
            m: 1,
            horizon_policy: HorizonPolicy::default(),
            ablations: Ablations::default(),
            available: AvailableActions::default(),
            scorer: Scorer::default(),
            hallucination_rate: 0.0,
            annotation: AnnotationMode::default(),
            max_replans: None,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentConfigError {
    #[error(transparent)]
    Probability(#[from] InvalidProbability),
    #[error("M must be at least 1")]
    ZeroPlans,
    #[error("fixed horizon must be at least 1")]
    ZeroHorizon,
}

impl AgentConfig {
    pub fn new(framework: Framework, error_params: ErrorParams) -> Self {
        AgentConfig {
            framework,
            error_params,
            ..Default::default()
        }
    }

    pub fn with_m(mut self, m: u32) -> Self {
        self.m = m;
        self
    }

    pub fn with_ablations(mut self, ablations: Ablations) -> Self {
        self.ablations = ablations;
        self
    }

    pub fn validate(&self) -> Result<(), AgentConfigError> {
        self.error_params.validate()?;
        crate::error_model::check_probability("hallucination_rate", self.hallucination_rate)?;
        if let AnnotationMode::Noisy { flip_rate } = self.annotation {
            crate::error_model::check_probability("flip_rate", flip_rate)?;
        }
        if self.m == 0 {
            return Err(AgentConfigError::ZeroPlans);
        }
        if self.horizon_policy == HorizonPolicy::Fixed(0) {
            return Err(AgentConfigError::ZeroHorizon);
        }
        Ok(())
    }

    fn sampler(&self) -> SamplerOptions {
        SamplerOptions {
            available: self.available,
            hallucination_rate: self.hallucination_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub record: TrajectoryRecord,
    /// Replans triggered by a mismatch between realized and predicted state.
    pub replans: u32,
    pub solver_infeasible_count: u32,
    pub steps_used: u32,
    /// Steps whose intended action was non-viable.
    pub planning_err_steps: u32,
    /// Steps whose executed action differed from the intended one.
    pub sampling_err_steps: u32,
    /// Plan-and-Act steps where the realized state matched the plan.
    pub aligned_steps: u32,
    pub follow_steps: u32,
}

impl EpisodeResult {
    pub fn success(&self) -> bool {
        self.record.success
    }
}

/// Per-episode random streams, split by purpose so that frameworks sharing
/// a purpose consume identical draws.
struct Streams {
    plan: StreamRng,
    follow: StreamRng,
    step: StreamRng,
    exec: StreamRng,
    annotate: StreamRng,
}

impl Streams {
    fn new(stream: &RngStream) -> Self {
        Streams {
            plan: stream.substream("plan").rng(),
            follow: stream.substream("follow").rng(),
            step: stream.substream("step").rng(),
            exec: stream.substream("exec").rng(),
            annotate: stream.substream("annotate").rng(),
        }
    }
}

struct Episode<'a, O: DistanceOracle + ?Sized> {
    oracle: &'a O,
    config: &'a AgentConfig,
    state: SokobanState,
    remaining: Budget,
    unit: Budget,
    steps: Vec<StepRecord>,
    rngs: Streams,
    replans: u32,
    infeasible: u32,
    planning_err: u32,
    sampling_err: u32,
    aligned: u32,
    follows: u32,
}

impl<'a, O: DistanceOracle + ?Sized> Episode<'a, O> {
    fn new(instance: &SokobanInstance, config: &'a AgentConfig, oracle: &'a O, stream: &RngStream) -> Self {
        let mut unit = vec![0; instance.budget.dims().max(1)];
        unit[0] = 1;
        Episode {
            oracle,
            config,
            state: instance.initial.clone(),
            remaining: instance.budget.clone(),
            unit: Budget::new(unit),
            steps: Vec::new(),
            rngs: Streams::new(stream),
            replans: 0,
            infeasible: 0,
            planning_err: 0,
            sampling_err: 0,
            aligned: 0,
            follows: 0,
        }
    }

    fn terminal(&self) -> Option<TerminalStatus> {
        if self.state.is_solved() {
            Some(TerminalStatus::GoalReached)
        } else if self.remaining.primary() == 0 {
            Some(TerminalStatus::BudgetExhausted)
        } else if self.oracle.is_dead_end(&self.state, &self.remaining) {
            Some(TerminalStatus::DeadEnd)
        } else if self.config.max_steps.is_some_and(|cap| self.steps.len() as u32 >= cap) {
            Some(TerminalStatus::HorizonExceeded)
        } else {
            None
        }
    }

    fn available(&self) -> Vec<Action> {
        self.config.available.actions(&self.state)
    }

    /// Oracle action passed through the planning-error injector.
    fn noisy_intent(&mut self) -> Action {
        let best = self
            .oracle
            .first_action(&self.state)
            .expect("a live state has an oracle action");
        let available = self.available();
        inject_planning_error(
            self.oracle,
            &self.state,
            best,
            &self.remaining,
            &self.config.error_params,
            &available,
            &mut self.rngs.step,
        )
    }

    fn execute(&mut self, intended: Action, executed: Action) {
        let intended_viable = self.oracle.is_viable(&self.state, intended, &self.remaining);
        let executed_viable = self.oracle.is_viable(&self.state, executed, &self.remaining);
        let state_id = self.state.state_id();
        self.state = step(&self.state, executed).state;
        self.remaining = self.remaining.charge(&self.unit).expect("live state has budget left");
        self.planning_err += u32::from(!intended_viable);
        self.sampling_err += u32::from(executed != intended);
        self.steps.push(StepRecord {
            state_id,
            intended_action: intended,
            executed_action: executed,
            intended_viable,
            executed_viable,
            budget_after: self.remaining.clone(),
        });
    }

    /// One Think/Act step; with `candidates > 1` the scorer picks the intent.
    fn react_step(&mut self, candidates: u32) {
        self.think_act(candidates, false);
    }

    fn think_act(&mut self, candidates: u32, constrained: bool) {
        let intended = if candidates <= 1 {
            self.noisy_intent()
        } else {
            let drawn: Vec<Action> = (0..candidates).map(|_| self.noisy_intent()).collect();
            match self.config.scorer {
                Scorer::OracleViability => drawn
                    .iter()
                    .copied()
                    .find(|&a| self.oracle.is_viable(&self.state, a, &self.remaining))
                    .unwrap_or(drawn[0]),
                Scorer::Random => drawn[self.rngs.step.gen_range(0..drawn.len())],
            }
        };
        let executed = if constrained {
            intended
        } else {
            let available = self.available();
            inject_sampling_error(intended, &available, &self.config.error_params, &mut self.rngs.step)
        };
        self.execute(intended, executed);
    }

    fn sample(&mut self, m: u32) -> Vec<AbstractPlan> {
        sample_plans(
            self.oracle,
            &self.state,
            &self.remaining,
            m as usize,
            &self.config.error_params,
            &self.config.sampler(),
            &mut self.rngs.plan,
        )
    }

    fn finish(self, status: TerminalStatus) -> EpisodeResult {
        let steps_used = self.steps.len() as u32;
        EpisodeResult {
            record: TrajectoryRecord::new(self.steps, status),
            replans: self.replans,
            solver_infeasible_count: self.infeasible,
            steps_used,
            planning_err_steps: self.planning_err,
            sampling_err_steps: self.sampling_err,
            aligned_steps: self.aligned,
            follow_steps: self.follows,
        }
    }
}

pub fn run_react<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
) -> EpisodeResult {
    react_loop(instance, config, oracle, stream, 1)
}

fn react_loop<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
    candidates: u32,
) -> EpisodeResult {
    let mut ep = Episode::new(instance, config, oracle, stream);
    loop {
        if let Some(status) = ep.terminal() {
            return ep.finish(status);
        }
        ep.react_step(candidates);
    }
}

pub fn run_plan_and_act<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
) -> EpisodeResult {
    plan_and_act_loop(instance, config, oracle, stream, 1)
}

/// Viable prefix of a plan, judged along its own predicted states.
fn viable_prefix<O: DistanceOracle + ?Sized>(oracle: &O, plan: &AbstractPlan, remaining: u32) -> usize {
    (0..plan.len())
        .take_while(|&k| {
            let state = plan.predicted_state(k).expect("index within plan");
            oracle.is_viable(state, plan.steps[k].0, &Budget::steps(remaining - k as u32))
        })
        .count()
}

fn plan_and_act_loop<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
    m: u32,
) -> EpisodeResult {
    let mut ep = Episode::new(instance, config, oracle, stream);
    if let Some(status) = ep.terminal() {
        return ep.finish(status);
    }
    let mut candidates = ep.sample(m);
    let pick = if candidates.len() == 1 {
        0
    } else {
        match config.scorer {
            Scorer::OracleViability => {
                let budget = ep.remaining.primary();
                let score = |p: &AbstractPlan| {
                    let prefix = viable_prefix(oracle, p, budget);
                    (p.reaches_goal() && prefix == p.len(), prefix)
                };
                // First maximum in draw order.
                (0..candidates.len()).fold(0, |best, i| if score(&candidates[i]) > score(&candidates[best]) { i } else { best })
            }
            Scorer::Random => ep.rngs.plan.gen_range(0..candidates.len()),
        }
    };
    let plan = candidates.swap_remove(pick);
    loop {
        if let Some(status) = ep.terminal() {
            return ep.finish(status);
        }
        let k = ep.steps.len();
        let aligned = k < plan.len() && plan.predicted_state(k) == Some(&ep.state);
        if aligned {
            ep.aligned += 1;
            if ep.rngs.follow.gen_bool(config.error_params.p_follow) {
                ep.follows += 1;
                let action = plan.steps[k].0;
                ep.execute(action, action);
                continue;
            }
        }
        ep.react_step(1);
    }
}

/// Best-of-N over the base framework's planning points.
pub fn run_best_of_n<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
) -> EpisodeResult {
    match config.framework {
        Framework::PlanAndActBestOfN => plan_and_act_loop(instance, config, oracle, stream, config.m),
        _ => react_loop(instance, config, oracle, stream, config.m),
    }
}

/// Sample, merge, annotate, select a walk, execute it, and replan on deviation.
pub fn run_tape<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
) -> EpisodeResult {
    let mut ep = Episode::new(instance, config, oracle, stream);
    let abl = config.ablations;
    let replan_cap = config.max_replans.unwrap_or(instance.budget.primary());
    'outer: loop {
        if let Some(status) = ep.terminal() {
            return ep.finish(status);
        }
        let plans = ep.sample(config.m);
        let walk: Vec<(Action, SokobanState)> = if abl.use_solver {
            let graph = build_graph(&plans).expect("plans share the current state");
            let graph = annotate(graph, &ep.remaining, config.annotation, oracle, &mut ep.rngs.annotate);
            let left = ep.remaining.primary();
            let cap = match config.horizon_policy {
                HorizonPolicy::RemainingBudget => left,
                HorizonPolicy::Fixed(n) => n.min(left),
            };
            let horizons: Vec<u32> = (1..=cap).collect();
            let problem = PathSelectionProblem::from_graph(&graph, cap.max(1), Some(ep.remaining.clone()));
            let solution = solve_with_fallback(&problem, &horizons).expect("plan graph yields a valid problem");
            if !solution.is_optimal() {
                ep.infeasible += 1;
                ep.think_act(1, abl.use_constrained_execution);
                continue;
            }
            solution
                .walk
                .iter()
                .map(|&e| &problem.edges[e])
                .filter(|e| !e.absorbing)
                .map(|e| (e.action.expect("graph edges carry actions"), graph.nodes[e.tgt].key.clone()))
                .collect()
        } else {
            let i = ep.rngs.plan.gen_range(0..plans.len());
            plans[i].steps.clone()
        };
        for (action, predicted) in walk {
            if let Some(status) = ep.terminal() {
                return ep.finish(status);
            }
            let executed = if abl.use_constrained_execution {
                action
            } else {
                let available = ep.available();
                inject_sampling_error(action, &available, &config.error_params, &mut ep.rngs.exec)
            };
            ep.execute(action, executed);
            if ep.state != predicted && abl.use_replanning && ep.replans < replan_cap {
                ep.replans += 1;
                continue 'outer;
            }
        }
    }
}

pub fn run_episode<O: DistanceOracle + ?Sized>(
    instance: &SokobanInstance,
    config: &AgentConfig,
    oracle: &O,
    stream: &RngStream,
) -> Result<EpisodeResult, AgentConfigError> {
    config.validate()?;
    Ok(match config.framework {
        Framework::ReAct => run_react(instance, config, oracle, stream),
        Framework::PlanAndAct => run_plan_and_act(instance, config, oracle, stream),
        Framework::ReActBestOfN | Framework::PlanAndActBestOfN => run_best_of_n(instance, config, oracle, stream),
        Framework::Tape => run_tape(instance, config, oracle, stream),
    })
}
