//! Monte Carlo evaluation: seeded policy simulation on a single path, the
//! multi-flow crosspoint experiment, and CSV reproduction of the reference
//! scenario grids.
//!
//! Replications run independently from the all-zeros state. Every stream
//! of randomness is derived from the master seed and a label (see
//! [`streams`]), with one stream per replication for the policy's own
//! draws and one per device for its exogenous traffic coin. Two
//! consequences worth relying on: results are bitwise reproducible whether
//! replications run serially or in parallel, and two different policies
//! evaluated under the same scenario face identical exogenous traffic,
//! which makes paired comparisons much sharper than independent runs.
//!
//! Simulation costs are accumulated after a burn-in (default: the first
//! tenth of the horizon). The long-run averages the closed forms predict
//! are equilibrium quantities; starting all counters at zero biases a
//! finite-horizon average downward, and dropping the transient removes
//! most of that bias.

mod reproduce;
mod scenario;
mod streams;

pub use reproduce::{reproduce, FigureId};
pub use scenario::{parse_scenario, ScenarioFile};

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::analysis::AnalysisError;
use crate::model::{geometric_accuracy_profile, ModelError, PathConfig};
use crate::policies::{self, IndexKind, PolicyError, PolicySpec, P_TINY};
use crate::solver::{RviSolution, SolverError};

/// Default simulation horizon in slots.
pub const DEFAULT_HORIZON: u64 = 500_000;

/// Default number of independent replications.
pub const DEFAULT_REPLICATIONS: u32 = 4;

/// Master seed used when a scenario does not name one.
pub const DEFAULT_SEED: u64 = 0x5EED;

/// Error raised by the harness.
#[derive(Debug, Clone, PartialEq)]
pub enum HarnessError {
    /// A path configuration was rejected.
    Model(ModelError),
    /// A policy failed validation against the path.
    Policy(PolicyError),
    /// A closed-form computation failed.
    Analysis(AnalysisError),
    /// A solver run failed.
    Solver(SolverError),
    /// The horizon must cover at least one slot.
    HorizonZero,
    /// Burn-in must leave at least one measured slot.
    BurnInTooLong { horizon: u64, burn_in: u64 },
    /// At least one replication is required.
    ReplicationsZero,
    /// The crosspoint experiment needs at least one flow.
    FlowCountZero,
    /// An empty flow-length range.
    LengthRangeEmpty { lo: usize, hi: usize },
    /// A probability parameter outside its admissible range.
    ParameterRange { name: &'static str, value: f64 },
    /// An unrecognized figure identifier.
    UnknownFigure(String),
    /// An unrecognized policy name in a scenario.
    UnknownPolicy(String),
    /// A required scenario key is absent.
    MissingKey(&'static str),
    /// Two scenario keys that cannot be combined.
    KeyConflict {
        first: &'static str,
        second: &'static str,
    },
    /// A scenario key whose length disagrees with the path.
    KeyLength {
        key: &'static str,
        expected: usize,
        got: usize,
    },
    /// The scenario file failed to parse.
    ScenarioParse(String),
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Model(e) => write!(f, "{e}"),
            HarnessError::Policy(e) => write!(f, "{e}"),
            HarnessError::Analysis(e) => write!(f, "{e}"),
            HarnessError::Solver(e) => write!(f, "{e}"),
            HarnessError::HorizonZero => write!(f, "horizon must be at least 1 slot"),
            HarnessError::BurnInTooLong { horizon, burn_in } => write!(
                f,
                "burn-in of {burn_in} slots leaves nothing to measure in a horizon of {horizon}"
            ),
            HarnessError::ReplicationsZero => write!(f, "at least one replication is required"),
            HarnessError::FlowCountZero => write!(f, "at least one flow is required"),
            HarnessError::LengthRangeEmpty { lo, hi } => {
                write!(f, "flow length range {lo}..={hi} is empty or starts at 0")
            }
            HarnessError::ParameterRange { name, value } => {
                write!(f, "{name} out of range: {value}")
            }
            HarnessError::UnknownFigure(id) => write!(
                f,
                "unknown figure id {id:?}; expected one of S1, S2, S3, R1, R2, R3, R4, G"
            ),
            HarnessError::UnknownPolicy(name) => write!(
                f,
                "unknown policy {name:?}; expected uniform, order-statistic, weighted, whittle, \
                 second-order, first-order, heuristic, or optimal"
            ),
            HarnessError::MissingKey(key) => write!(f, "scenario is missing the `{key}` key"),
            HarnessError::KeyConflict { first, second } => {
                write!(f, "scenario keys `{first}` and `{second}` cannot be combined")
            }
            HarnessError::KeyLength { key, expected, got } => {
                write!(f, "scenario key `{key}` has {got} entries, expected {expected}")
            }
            HarnessError::ScenarioParse(msg) => write!(f, "scenario parse error: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<ModelError> for HarnessError {
    fn from(e: ModelError) -> Self {
        HarnessError::Model(e)
    }
}

impl From<PolicyError> for HarnessError {
    fn from(e: PolicyError) -> Self {
        HarnessError::Policy(e)
    }
}

impl From<AnalysisError> for HarnessError {
    fn from(e: AnalysisError) -> Self {
        HarnessError::Analysis(e)
    }
}

impl From<SolverError> for HarnessError {
    fn from(e: SolverError) -> Self {
        HarnessError::Solver(e)
    }
}

/// A fully resolved simulation scenario: path, policy, and run lengths.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    config: PathConfig,
    policy: PolicySpec,
    horizon: u64,
    replications: u32,
    burn_in: u64,
    seed: u64,
    counter_clip: Option<u32>,
}

impl ScenarioSpec {
    /// Builds a scenario with burn-in defaulted to a tenth of the horizon.
    pub fn new(
        config: PathConfig,
        policy: PolicySpec,
        horizon: u64,
        replications: u32,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        if horizon == 0 {
            return Err(HarnessError::HorizonZero);
        }
        if replications == 0 {
            return Err(HarnessError::ReplicationsZero);
        }
        policy.validate(config.len())?;
        Ok(ScenarioSpec {
            burn_in: horizon / 10,
            config,
            policy,
            horizon,
            replications,
            seed,
            counter_clip: None,
        })
    }

    /// Overrides the burn-in; must leave at least one measured slot.
    pub fn with_burn_in(mut self, burn_in: u64) -> Result<Self, HarnessError> {
        if burn_in >= self.horizon {
            return Err(HarnessError::BurnInTooLong {
                horizon: self.horizon,
                burn_in,
            });
        }
        self.burn_in = burn_in;
        Ok(self)
    }

    /// Clips counters at `cap` during simulation, mirroring the truncation
    /// the value-iteration solver prices. Leave unset to run the untruncated
    /// chain the closed forms describe.
    pub fn with_counter_clip(mut self, cap: u32) -> Self {
        self.counter_clip = Some(cap);
        self
    }

    /// The path under study.
    pub fn config(&self) -> &PathConfig {
        &self.config
    }

    /// The sampling policy under study.
    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    /// Slots per replication.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Independent replications to run.
    pub fn replications(&self) -> u32 {
        self.replications
    }

    /// Leading slots excluded from every average.
    pub fn burn_in(&self) -> u64 {
        self.burn_in
    }

    /// Master seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Counter clip, if simulating the truncated chain.
    pub fn counter_clip(&self) -> Option<u32> {
        self.counter_clip
    }
}

/// Aggregated results of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    mean_cost: f64,
    cost_stderr: f64,
    per_device_sampling_rate: Vec<f64>,
    per_device_reset_rate: Vec<f64>,
    intersample_histograms: Vec<Vec<u64>>,
    seed: u64,
    slots_simulated: u64,
}

impl SimulationReport {
    /// Time-average cost after burn-in, averaged over replications.
    pub fn mean_cost(&self) -> f64 {
        self.mean_cost
    }

    /// Standard error of the mean across replications; 0 for a single
    /// replication.
    pub fn cost_stderr(&self) -> f64 {
        self.cost_stderr
    }

    /// Fraction of measured slots in which each device was the one
    /// sampled; sums to 1.
    pub fn per_device_sampling_rate(&self) -> &[f64] {
        &self.per_device_sampling_rate
    }

    /// Fraction of measured slots in which each device's counter reset,
    /// whether by this flow's action or exogenously.
    pub fn per_device_reset_rate(&self) -> &[f64] {
        &self.per_device_reset_rate
    }

    /// Per-device histograms of gaps between this flow's consecutive
    /// samples: entry `z - 1` counts gaps of exactly `z` slots. Gaps are
    /// recorded when their closing sample lands after burn-in.
    pub fn intersample_histograms(&self) -> &[Vec<u64>] {
        &self.intersample_histograms
    }

    /// The master seed the run used.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total slots stepped across replications, burn-in included.
    pub fn slots_simulated(&self) -> u64 {
        self.slots_simulated
    }
}

/// Per-device index values cached by counter.
///
/// A single flow's counters stay small in practice (exogenous traffic
/// keeps knocking them down), so the tables stay short and every value is
/// the closed form evaluated once, making decisions bit-identical to
/// [`policies::choose_by_index`].
struct CachedIndexPolicy {
    kind: IndexKind,
    phis: Vec<f64>,
    ps: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl CachedIndexPolicy {
    fn new(kind: IndexKind, config: &PathConfig) -> Self {
        CachedIndexPolicy {
            kind,
            phis: config.devices().iter().map(|d| d.phi()).collect(),
            ps: config.devices().iter().map(|d| d.p()).collect(),
            values: vec![Vec::new(); config.len()],
        }
    }

    fn value(&mut self, device: usize, n: u32) -> f64 {
        let table = &mut self.values[device];
        while table.len() <= n as usize {
            table.push(policies::device_index(
                self.kind,
                table.len() as u32,
                self.phis[device],
                self.ps[device],
            ));
        }
        table[n as usize]
    }

    fn choose(&mut self, counters: &[u32]) -> usize {
        let mut best = (self.value(0, counters[0]), self.phis[0], counters[0]);
        let mut best_device = 0;
        for i in 1..counters.len() {
            let candidate = (self.value(i, counters[i]), self.phis[i], counters[i]);
            if policies::outranks(candidate, best) {
                best = candidate;
                best_device = i;
            }
        }
        best_device
    }
}

/// Per-replication action selector, 0-based.
enum Chooser {
    Uniform { m: usize },
    OrderStatistic { m: usize, g: u32 },
    Weighted { weights: Vec<f64> },
    Index(CachedIndexPolicy),
    Table(Arc<RviSolution>),
}

impl Chooser {
    fn new(policy: &PolicySpec, config: &PathConfig) -> Self {
        match policy {
            PolicySpec::Uniform => Chooser::Uniform { m: config.len() },
            PolicySpec::OrderStatistic { g } => Chooser::OrderStatistic {
                m: config.len(),
                g: *g,
            },
            PolicySpec::Weighted { weights } => Chooser::Weighted {
                weights: weights.clone(),
            },
            PolicySpec::Index { kind } => Chooser::Index(CachedIndexPolicy::new(*kind, config)),
            PolicySpec::Table { solution } => Chooser::Table(Arc::clone(solution)),
        }
    }

    fn choose(&mut self, counters: &[u32], rng: &mut ChaCha12Rng) -> usize {
        match self {
            Chooser::Uniform { m } => policies::choose_uniform(*m, rng).index0(),
            Chooser::OrderStatistic { m, g } => {
                policies::choose_order_statistic(*m, *g, rng).index0()
            }
            Chooser::Weighted { weights } => policies::choose_weighted(weights, rng).index0(),
            Chooser::Index(cache) => cache.choose(counters),
            Chooser::Table(solution) => solution.action_for(counters).index0(),
        }
    }
}

struct Replication {
    mean: f64,
    actions: Vec<u64>,
    resets: Vec<u64>,
    histograms: Vec<Vec<u64>>,
}

fn run_replication(spec: &ScenarioSpec, rep: u32) -> Replication {
    let config = spec.config();
    let m = config.len();
    let phis: Vec<f64> = config.devices().iter().map(|d| d.phi()).collect();
    let ps: Vec<f64> = config.devices().iter().map(|d| d.p()).collect();
    let mut chooser = Chooser::new(spec.policy(), config);
    let mut policy_rng = streams::stream(spec.seed(), streams::TAG_POLICY, u64::from(rep), 0, 0);
    let mut device_rngs: Vec<ChaCha12Rng> = (0..m)
        .map(|i| streams::stream(spec.seed(), streams::TAG_DEVICE, u64::from(rep), 0, i as u64))
        .collect();

    let horizon = spec.horizon();
    let burn_in = spec.burn_in();
    let clip = spec.counter_clip();
    let mut counters = vec![0u32; m];
    let mut actions = vec![0u64; m];
    let mut resets = vec![0u64; m];
    let mut histograms = vec![Vec::new(); m];
    let mut last_sample: Vec<Option<u64>> = vec![None; m];
    let mut cost_acc = 0.0;
    let mut current_cost = 0.0;

    for t in 0..horizon {
        let measured = t >= burn_in;
        if measured {
            cost_acc += current_cost;
        }
        let acted = chooser.choose(&counters, &mut policy_rng);
        if measured {
            actions[acted] += 1;
            if let Some(last) = last_sample[acted] {
                let gap = (t - last) as usize;
                let histogram = &mut histograms[acted];
                if histogram.len() < gap {
                    histogram.resize(gap, 0);
                }
                histogram[gap - 1] += 1;
            }
        }
        last_sample[acted] = Some(t);
        current_cost = 0.0;
        for i in 0..m {
            let bumped = match clip {
                Some(cap) => counters[i].saturating_add(1).min(cap),
                None => counters[i].saturating_add(1),
            };
            let next = if i == acted || ps[i] >= 1.0 {
                0
            } else if ps[i] <= 0.0 {
                bumped
            } else if device_rngs[i].random::<f64>() < ps[i] {
                0
            } else {
                bumped
            };
            counters[i] = next;
            if next == 0 && measured {
                resets[i] += 1;
            }
            current_cost += phis[i] * f64::from(next);
        }
    }

    Replication {
        mean: cost_acc / (horizon - burn_in) as f64,
        actions,
        resets,
        histograms,
    }
}

fn run_replications(spec: &ScenarioSpec) -> Vec<Replication> {
    let reps = 0..spec.replications();
    #[cfg(feature = "parallel")]
    {
        reps.into_par_iter()
            .map(|rep| run_replication(spec, rep))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        reps.map(|rep| run_replication(spec, rep)).collect()
    }
}

/// Runs the scenario's replications and aggregates their statistics.
///
/// Each replication steps the path its full horizon from the all-zeros
/// state, accumulating the per-slot cost after burn-in. The report's mean
/// is the average of per-replication means and its standard error their
/// sample spread; rates and histograms pool all replications.
/// Deterministic for a given spec, independent of thread count.
pub fn simulate(spec: &ScenarioSpec) -> Result<SimulationReport, HarnessError> {
    spec.policy().validate(spec.config().len())?;
    let outcomes = run_replications(spec);
    let m = spec.config().len();
    let reps = outcomes.len() as f64;
    let mean_cost = outcomes.iter().map(|o| o.mean).sum::<f64>() / reps;
    let cost_stderr = if outcomes.len() > 1 {
        let variance = outcomes
            .iter()
            .map(|o| (o.mean - mean_cost).powi(2))
            .sum::<f64>()
            / (reps - 1.0);
        (variance / reps).sqrt()
    } else {
        0.0
    };
    let measured = (spec.horizon() - spec.burn_in()) as f64 * reps;
    let mut per_device_sampling_rate = vec![0.0; m];
    let mut per_device_reset_rate = vec![0.0; m];
    let mut intersample_histograms: Vec<Vec<u64>> = vec![Vec::new(); m];
    for outcome in &outcomes {
        for i in 0..m {
            per_device_sampling_rate[i] += outcome.actions[i] as f64 / measured;
            per_device_reset_rate[i] += outcome.resets[i] as f64 / measured;
            let merged = &mut intersample_histograms[i];
            if merged.len() < outcome.histograms[i].len() {
                merged.resize(outcome.histograms[i].len(), 0);
            }
            for (slot, &count) in outcome.histograms[i].iter().enumerate() {
                merged[slot] += count;
            }
        }
    }
    Ok(SimulationReport {
        mean_cost,
        cost_stderr,
        per_device_sampling_rate,
        per_device_reset_rate,
        intersample_histograms,
        seed: spec.seed(),
        slots_simulated: spec.horizon() * u64::from(spec.replications()),
    })
}

/// The multi-flow crosspoint experiment.
///
/// `flow_count` flows cross at one shared device. Each flow's length is
/// drawn uniformly from `length_range` and its crosspoint position
/// uniformly along the path, all from the seed's configuration stream, so
/// the geometry is identical for every policy evaluated at the same seed.
#[derive(Debug, Clone)]
pub struct CrosspointSpec {
    flow_count: usize,
    length_range: (usize, usize),
    policy: PolicySpec,
    horizon: u64,
    seed: u64,
    index_p: f64,
    index_sigma: f64,
}

/// Exogenous refresh probability on crosspoint-flow devices, driving both
/// each flow's dynamics and the indices its controller computes.
pub const CROSSPOINT_INDEX_P: f64 = 0.3;

/// Accuracy decay index policies use at the crosspoint flows.
pub const CROSSPOINT_INDEX_SIGMA: f64 = 0.9;

impl CrosspointSpec {
    /// Builds the experiment; index parameters default to
    /// [`CROSSPOINT_INDEX_P`] and [`CROSSPOINT_INDEX_SIGMA`].
    pub fn new(
        flow_count: usize,
        length_range: (usize, usize),
        policy: PolicySpec,
        horizon: u64,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        if flow_count == 0 {
            return Err(HarnessError::FlowCountZero);
        }
        let (lo, hi) = length_range;
        if lo == 0 || lo > hi {
            return Err(HarnessError::LengthRangeEmpty { lo, hi });
        }
        if horizon == 0 {
            return Err(HarnessError::HorizonZero);
        }
        Ok(CrosspointSpec {
            flow_count,
            length_range,
            policy,
            horizon,
            seed,
            index_p: CROSSPOINT_INDEX_P,
            index_sigma: CROSSPOINT_INDEX_SIGMA,
        })
    }

    /// Overrides the parameters index policies believe about the flows.
    pub fn with_index_parameters(mut self, p: f64, sigma: f64) -> Result<Self, HarnessError> {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(HarnessError::ParameterRange {
                name: "index_p",
                value: p,
            });
        }
        if !sigma.is_finite() || !(0.0..=1.0).contains(&sigma) {
            return Err(HarnessError::ParameterRange {
                name: "index_sigma",
                value: sigma,
            });
        }
        self.index_p = p;
        self.index_sigma = sigma;
        Ok(self)
    }

    /// Number of flows crossing the shared device.
    pub fn flow_count(&self) -> usize {
        self.flow_count
    }

    /// Inclusive range flow lengths are drawn from.
    pub fn length_range(&self) -> (usize, usize) {
        self.length_range
    }

    /// Policy every flow's controller runs.
    pub fn policy(&self) -> &PolicySpec {
        &self.policy
    }

    /// Slots to simulate.
    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Master seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Incremental Whittle index evaluation along a counter trajectory.
///
/// Crosspoint flows have devices that never reset exogenously, so their
/// counters grow with the horizon and a by-counter cache would grow with
/// them. Instead the index is advanced in O(1) per slot through its
/// increment identity
/// `c*(n+1) - c*(n) = phi (1-p)/p (1 - (1-p)^(n+2))`,
/// with the power tracked multiplicatively and the value re-anchored at
/// the closed form on every reset.
struct WhittleTracker {
    value: f64,
    pow: f64,
    base_value: f64,
    base_pow: f64,
    coefficient: f64,
    decay: f64,
}

impl WhittleTracker {
    fn new(phi: f64, p: f64) -> Self {
        let decay = 1.0 - p;
        WhittleTracker {
            value: phi * decay,
            pow: decay * decay,
            base_value: phi * decay,
            base_pow: decay * decay,
            coefficient: phi * decay / p,
            decay,
        }
    }

    fn reset(&mut self) {
        self.value = self.base_value;
        self.pow = self.base_pow;
    }

    fn advance(&mut self) {
        self.value += self.coefficient * (1.0 - self.pow);
        self.pow *= self.decay;
    }
}

/// One device's index evaluator inside a crosspoint flow.
enum IndexEval {
    /// Kinds with O(1) closed forms, evaluated directly at the counter.
    Direct { kind: IndexKind, phi: f64, p: f64 },
    /// The Whittle form, advanced incrementally.
    Tracked(WhittleTracker),
}

impl IndexEval {
    fn new(kind: IndexKind, phi: f64, p: f64) -> Self {
        match kind {
            IndexKind::Whittle if p > P_TINY => IndexEval::Tracked(WhittleTracker::new(phi, p)),
            // At vanishing p the Whittle index IS the second-order form.
            IndexKind::Whittle => IndexEval::Direct {
                kind: IndexKind::SecondOrder,
                phi,
                p,
            },
            kind => IndexEval::Direct { kind, phi, p },
        }
    }

    fn value(&self, n: u32) -> f64 {
        match self {
            IndexEval::Direct { kind, phi, p } => policies::device_index(*kind, n, *phi, *p),
            IndexEval::Tracked(tracker) => tracker.value,
        }
    }

    fn on_reset(&mut self) {
        if let IndexEval::Tracked(tracker) = self {
            tracker.reset();
        }
    }

    fn on_advance(&mut self) {
        if let IndexEval::Tracked(tracker) = self {
            tracker.advance();
        }
    }
}

/// One flow's controller and path state in the crosspoint experiment.
struct Flow {
    counters: Vec<u32>,
    phis: Vec<f64>,
    crosspoint: usize,
    chooser: FlowChooser,
    refresh_p: f64,
    rng: ChaCha12Rng,
    device_rngs: Vec<ChaCha12Rng>,
}

enum FlowChooser {
    Uniform,
    OrderStatistic { g: u32 },
    Weighted { weights: Vec<f64> },
    Index { evals: Vec<IndexEval> },
    Table(Arc<RviSolution>),
}

impl Flow {
    fn choose(&mut self) -> usize {
        let m = self.counters.len();
        match &mut self.chooser {
            FlowChooser::Uniform => policies::choose_uniform(m, &mut self.rng).index0(),
            FlowChooser::OrderStatistic { g } => {
                policies::choose_order_statistic(m, *g, &mut self.rng).index0()
            }
            FlowChooser::Weighted { weights } => {
                policies::choose_weighted(weights, &mut self.rng).index0()
            }
            FlowChooser::Index { evals } => {
                let mut best = (evals[0].value(self.counters[0]), self.phis[0], self.counters[0]);
                let mut best_device = 0;
                for i in 1..m {
                    let candidate = (evals[i].value(self.counters[i]), self.phis[i], self.counters[i]);
                    if policies::outranks(candidate, best) {
                        best = candidate;
                        best_device = i;
                    }
                }
                best_device
            }
            FlowChooser::Table(solution) => solution.action_for(&self.counters).index0(),
        }
    }

    fn step(&mut self, acted: usize) {
        for i in 0..self.counters.len() {
            let resets = if i == acted || self.refresh_p >= 1.0 {
                true
            } else if self.refresh_p <= 0.0 {
                false
            } else {
                self.device_rngs[i].random::<f64>() < self.refresh_p
            };
            if resets {
                self.counters[i] = 0;
            } else {
                self.counters[i] = self.counters[i].saturating_add(1);
            }
            if let FlowChooser::Index { evals } = &mut self.chooser {
                if resets {
                    evals[i].on_reset();
                } else {
                    evals[i].on_advance();
                }
            }
        }
    }
}

/// Runs the crosspoint experiment and returns the gaps, in slots, between
/// consecutive samplings of the shared device by any flow.
///
/// Flows advance in lockstep but never see each other: every slot each
/// controller picks a device from its own counters and steps its own path.
/// Path devices refresh exogenously with the spec's index probability, so
/// each flow evolves exactly as the model behind its controller's indices
/// says it should. The shared device counts as sampled whenever at least
/// one flow picks its position, and the gap record measures the slots
/// between those samplings. The stretch before the first one is discarded.
pub fn simulate_crosspoint(spec: &CrosspointSpec) -> Result<Vec<u64>, HarnessError> {
    let mut config_rng = streams::stream(spec.seed(), streams::TAG_CONFIG, 0, 0, 0);
    let (lo, hi) = spec.length_range();
    let mut flows = Vec::with_capacity(spec.flow_count());
    for k in 0..spec.flow_count() {
        let m = config_rng.random_range(lo..=hi);
        let crosspoint = config_rng.random_range(0..m);
        spec.policy().validate(m)?;
        let phis = geometric_accuracy_profile(m, spec.index_sigma)?;
        let chooser = match spec.policy() {
            PolicySpec::Uniform => FlowChooser::Uniform,
            PolicySpec::OrderStatistic { g } => FlowChooser::OrderStatistic { g: *g },
            PolicySpec::Weighted { weights } => FlowChooser::Weighted {
                weights: weights.clone(),
            },
            PolicySpec::Index { kind } => FlowChooser::Index {
                evals: phis
                    .iter()
                    .map(|&phi| IndexEval::new(*kind, phi, spec.index_p))
                    .collect(),
            },
            PolicySpec::Table { solution } => FlowChooser::Table(Arc::clone(solution)),
        };
        flows.push(Flow {
            counters: vec![0; m],
            phis,
            crosspoint,
            chooser,
            refresh_p: spec.index_p,
            rng: streams::stream(spec.seed(), streams::TAG_POLICY, 0, k as u64, 0),
            device_rngs: (0..m)
                .map(|i| streams::stream(spec.seed(), streams::TAG_DEVICE, 0, k as u64, i as u64))
                .collect(),
        });
    }

    let mut gaps = Vec::new();
    let mut last_sampled: Option<u64> = None;
    let mut acted = vec![0usize; flows.len()];
    for t in 0..spec.horizon() {
        let mut crosspoint_hit = false;
        for (k, flow) in flows.iter_mut().enumerate() {
            acted[k] = flow.choose();
            if acted[k] == flow.crosspoint {
                crosspoint_hit = true;
            }
        }
        for (k, flow) in flows.iter_mut().enumerate() {
            flow.step(acted[k]);
        }
        if crosspoint_hit {
            if let Some(last) = last_sampled {
                gaps.push(t - last);
            }
            last_sampled = Some(t);
        }
    }
    Ok(gaps)
}
