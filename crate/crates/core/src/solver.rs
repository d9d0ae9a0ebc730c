//! Average-cost solvers: relative value iteration on the truncated joint
//! problem and on the decoupled single-device problem.
//!
//! The joint solver enumerates counters clipped to the path's cap `U`, i.e.
//! `(U+1)^M` states (each counter ranges over `{0..=U}` inclusive), and
//! iterates the normalized Bellman update `h <- T(h) - T(h)[s0] e` with the
//! all-zeros reference state `s0`. The update is damped,
//! `h <- (1-tau) h + tau (T(h) - T(h)[s0] e)` with `tau = 1/2`: undamped
//! iteration cycles forever on periodic instances (with every `p_i = 0` the
//! dynamics are deterministic and the optimal orbit has period M), while the
//! damped map is value iteration on the lazy kernel `(I + P)/2`, which keeps
//! the same fixed points, gain, and greedy policy and always mixes. The stop
//! test `span(h_new - h_old) <= tau * epsilon` is exactly the undamped
//! Bellman-residual span falling below `epsilon`.
//!
//! The decoupled problem prices a single device: pay `c` to sample now or
//! rest and let the counter drift. Its optimal policy is a threshold rule,
//! and bisecting on `c` until the threshold crosses a target counter
//! recovers the index a device earns at that counter, which is how
//! [`empirical_whittle`] validates the closed form independently.

use std::fmt;

use crate::model::{ActionId, CounterState, PathConfig};

/// Default convergence threshold on the Bellman-residual span.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Iteration budget before the solver reports non-convergence.
pub const MAX_ITERATIONS: u64 = 100_000;

/// Hard ceiling on enumerated states, `(U+1)^M`.
pub const MAX_STATES: u128 = 10_000_000;

const TAU: f64 = 0.5;

/// Error raised by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverError {
    /// The truncated state space exceeds [`MAX_STATES`].
    StateSpaceTooLarge { states: u128 },
    /// The span failed to reach the threshold within the iteration budget.
    NotConverged { iterations: u64, span: f64 },
    /// A value map of the wrong length for the configured state space.
    ValueMapLength { expected: usize, got: usize },
    /// Accuracy outside [0, 1].
    AccuracyRange(f64),
    /// Probability outside the admissible range for the operation.
    ProbabilityRange(f64),
    /// Sampling cost must be finite and nonnegative.
    SamplingCostRange(f64),
    /// Convergence threshold must be positive and finite.
    EpsilonRange(f64),
    /// The counter cap leaves no room for the requested threshold crossing.
    CapTooSmall { cap: u32, needed: u32 },
    /// Bisection could not bracket the threshold crossing.
    BracketFailure { cost: f64 },
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SolverError::StateSpaceTooLarge { states } => write!(
                f,
                "truncated state space has {states} states, over the {MAX_STATES} limit"
            ),
            SolverError::NotConverged { iterations, span } => write!(
                f,
                "no convergence after {iterations} iterations, final span {span:e}"
            ),
            SolverError::ValueMapLength { expected, got } => {
                write!(f, "value map covers {got} states, expected {expected}")
            }
            SolverError::AccuracyRange(phi) => {
                write!(f, "accuracy must lie in [0, 1], got {phi}")
            }
            SolverError::ProbabilityRange(p) => {
                write!(f, "probability out of range for this operation: {p}")
            }
            SolverError::SamplingCostRange(c) => {
                write!(f, "sampling cost must be finite and nonnegative, got {c}")
            }
            SolverError::EpsilonRange(eps) => {
                write!(f, "epsilon must be positive and finite, got {eps}")
            }
            SolverError::CapTooSmall { cap, needed } => write!(
                f,
                "counter cap {cap} cannot resolve a threshold crossing at {needed}"
            ),
            SolverError::BracketFailure { cost } => write!(
                f,
                "threshold never crossed the target below sampling cost {cost:e}"
            ),
        }
    }
}

impl std::error::Error for SolverError {}

/// Mixed-radix indexing of clipped counter vectors.
///
/// Counters clip to `{0..=cap}`; state index is the little-endian radix
/// `cap+1` encoding, so the all-zeros state is index 0.
#[derive(Debug, Clone, PartialEq)]
struct StateSpace {
    m: usize,
    cap: u32,
    len: usize,
}

impl StateSpace {
    fn new(m: usize, cap: u32) -> Result<Self, SolverError> {
        let states = (0..m).try_fold(1u128, |acc, _| {
            acc.checked_mul(u128::from(cap) + 1)
                .filter(|&s| s <= MAX_STATES)
        });
        match states {
            Some(len) => Ok(StateSpace {
                m,
                cap,
                len: len as usize,
            }),
            None => {
                let states = (u128::from(cap) + 1)
                    .checked_pow(m as u32)
                    .unwrap_or(u128::MAX);
                Err(SolverError::StateSpaceTooLarge { states })
            }
        }
    }

    fn len(&self) -> usize {
        self.len
    }

    fn index_of(&self, counters: &[u32]) -> usize {
        debug_assert_eq!(counters.len(), self.m);
        let radix = self.cap as usize + 1;
        counters
            .iter()
            .rev()
            .fold(0usize, |acc, &n| acc * radix + n.min(self.cap) as usize)
    }

    fn counters_at(&self, index: usize) -> Vec<u32> {
        debug_assert!(index < self.len);
        let radix = index_radix(self.cap);
        let mut rest = index;
        (0..self.m)
            .map(|_| {
                let n = (rest % radix) as u32;
                rest /= radix;
                n
            })
            .collect()
    }
}

fn index_radix(cap: u32) -> usize {
    cap as usize + 1
}

/// Solution of the truncated joint problem.
///
/// Holds the relative value function (pinned to 0 at the all-zeros reference
/// state), the gain, and the greedy policy table, all indexed by clipped
/// counter vectors.
#[derive(Debug, Clone)]
pub struct RviSolution {
    space: StateSpace,
    h: Vec<f64>,
    gain: f64,
    policy: Vec<ActionId>,
    epsilon: f64,
    iterations: u64,
}

impl RviSolution {
    /// Long-run average cost per slot of the greedy policy.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Convergence threshold the solve used.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Damped updates performed before the span test passed.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    /// Number of devices the table covers.
    pub fn path_len(&self) -> usize {
        self.space.m
    }

    /// The truncation cap states were enumerated with.
    pub fn counter_cap(&self) -> u32 {
        self.space.cap
    }

    /// Number of enumerated states, `(cap+1)^M`.
    pub fn state_count(&self) -> usize {
        self.space.len()
    }

    /// The reference state whose relative value is pinned to zero.
    pub fn reference_state(&self) -> CounterState {
        CounterState::zeros(self.space.m)
    }

    /// Relative value at a counter vector; counters clip to the cap.
    pub fn h_for(&self, counters: &[u32]) -> f64 {
        assert_eq!(counters.len(), self.space.m, "state/table length mismatch");
        self.h[self.space.index_of(counters)]
    }

    /// Greedy action at a counter vector; counters clip to the cap.
    pub fn action_for(&self, counters: &[u32]) -> ActionId {
        assert_eq!(counters.len(), self.space.m, "state/table length mismatch");
        self.policy[self.space.index_of(counters)]
    }

    /// Iterates the whole table as (counters, greedy action) rows.
    pub fn table(&self) -> impl Iterator<Item = (Vec<u32>, ActionId)> + '_ {
        (0..self.space.len()).map(move |idx| (self.space.counters_at(idx), self.policy[idx]))
    }
}

/// One device's worth of transition data, precomputed for the sweep.
struct DeviceDynamics {
    /// Reset probability, for devices with a genuinely random outcome.
    p: f64,
    /// Index stride of this device's counter.
    stride: usize,
    /// Whether the outcome is random (0 < p < 1), forced reset (p = 1), or
    /// forced bump (p = 0).
    outcome: Outcome,
}

#[derive(PartialEq)]
enum Outcome {
    Random,
    ForcedReset,
    ForcedBump,
}

fn device_dynamics(config: &PathConfig, cap: u32) -> Vec<DeviceDynamics> {
    let radix = index_radix(cap);
    (0..config.len())
        .map(|i| {
            let p = config.device(i).p();
            let outcome = if p <= 0.0 {
                Outcome::ForcedBump
            } else if p >= 1.0 {
                Outcome::ForcedReset
            } else {
                Outcome::Random
            };
            DeviceDynamics {
                p,
                stride: radix.pow(i as u32),
                outcome,
            }
        })
        .collect()
}

/// Expected next-state value for (state, action) by recursion over the
/// non-acted devices with random outcomes.
fn expected_value(
    h: &[f64],
    devs: &[DeviceDynamics],
    bump_strides: &[usize],
    acted: usize,
    pos: usize,
    index: usize,
    prob: f64,
) -> f64 {
    let Some(dev) = devs.get(pos) else {
        return prob * h[index];
    };
    if pos == acted || dev.outcome != Outcome::Random {
        return expected_value(h, devs, bump_strides, acted, pos + 1, index, prob);
    }
    expected_value(h, devs, bump_strides, acted, pos + 1, index, prob * dev.p)
        + expected_value(
            h,
            devs,
            bump_strides,
            acted,
            pos + 1,
            index + bump_strides[pos],
            prob * (1.0 - dev.p),
        )
}

/// One full Bellman sweep; writes the operator values and greedy actions.
fn sweep(
    h: &[f64],
    config: &PathConfig,
    space: &StateSpace,
    devs: &[DeviceDynamics],
    out_values: &mut [f64],
    out_actions: &mut [ActionId],
) {
    let m = space.m;
    let cap = space.cap;
    let mut counters = vec![0u32; m];
    // Index contribution of each device's counter landing on min(n+1, cap),
    // refreshed as the odometer walks the states.
    let mut bump_strides = vec![0usize; m];
    let mut forced_base = 0usize;
    let recompute = |counters: &[u32], bump_strides: &mut [usize], forced_base: &mut usize| {
        *forced_base = 0;
        for i in 0..m {
            let next = counters[i].saturating_add(1).min(cap);
            bump_strides[i] = next as usize * devs[i].stride;
            if devs[i].outcome == Outcome::ForcedBump {
                *forced_base += bump_strides[i];
            }
        }
    };
    recompute(&counters, &mut bump_strides, &mut forced_base);
    for s in 0..space.len() {
        let cost: f64 = counters
            .iter()
            .zip(config.devices())
            .map(|(&n, d)| d.phi() * f64::from(n))
            .sum();
        let mut best = f64::INFINITY;
        let mut best_action = ActionId::new(1);
        for a in 0..m {
            // Start from the forced contributions: acted and forced-reset
            // devices land on 0 (no index contribution), forced-bump devices
            // land on min(n+1, cap).
            let mut base = forced_base;
            if devs[a].outcome == Outcome::ForcedBump {
                base -= bump_strides[a];
            }
            let ev = expected_value(h, devs, &bump_strides, a, 0, base, 1.0);
            let value = cost + ev;
            if value < best {
                best = value;
                best_action = ActionId::new(a + 1);
            }
        }
        out_values[s] = best;
        out_actions[s] = best_action;
        // Odometer step.
        if s + 1 < space.len() {
            for i in 0..m {
                if counters[i] < cap {
                    counters[i] += 1;
                    break;
                }
                counters[i] = 0;
            }
            recompute(&counters, &mut bump_strides, &mut forced_base);
        }
    }
}

/// Applies the Bellman operator once.
///
/// `h` must cover the full truncated state space in index order (all-zeros
/// state first, first device's counter fastest). Returns the operator values
/// `min_a { C(s) + E[h(next)] }` and the greedy argmin per state, ties to
/// the smallest action index.
pub fn bellman_apply(
    h: &[f64],
    config: &PathConfig,
) -> Result<(Vec<f64>, Vec<ActionId>), SolverError> {
    let space = StateSpace::new(config.len(), config.counter_cap())?;
    if h.len() != space.len() {
        return Err(SolverError::ValueMapLength {
            expected: space.len(),
            got: h.len(),
        });
    }
    let devs = device_dynamics(config, space.cap);
    let mut values = vec![0.0; space.len()];
    let mut actions = vec![ActionId::new(1); space.len()];
    sweep(h, config, &space, &devs, &mut values, &mut actions);
    Ok((values, actions))
}

/// Solves the truncated joint problem by damped relative value iteration.
///
/// Starts from `h = 0`, pins the all-zeros reference state to relative value
/// 0, and stops once the Bellman-residual span drops to `epsilon`. The
/// returned gain is the operator value at the reference state after
/// convergence and the policy is the matching greedy table.
pub fn relative_value_iteration(
    config: &PathConfig,
    epsilon: f64,
) -> Result<RviSolution, SolverError> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(SolverError::EpsilonRange(epsilon));
    }
    let space = StateSpace::new(config.len(), config.counter_cap())?;
    let devs = device_dynamics(config, space.cap);
    let mut h = vec![0.0; space.len()];
    let mut values = vec![0.0; space.len()];
    let mut actions = vec![ActionId::new(1); space.len()];
    let mut iterations = 0;
    let mut span = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        sweep(&h, config, &space, &devs, &mut values, &mut actions);
        let offset = values[0];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (elem, &value) in h.iter_mut().zip(values.iter()) {
            let next = (1.0 - TAU) * *elem + TAU * (value - offset);
            let diff = next - *elem;
            lo = lo.min(diff);
            hi = hi.max(diff);
            *elem = next;
        }
        iterations += 1;
        span = hi - lo;
        if span <= TAU * epsilon {
            sweep(&h, config, &space, &devs, &mut values, &mut actions);
            return Ok(RviSolution {
                space,
                gain: values[0],
                h,
                policy: actions,
                epsilon,
                iterations,
            });
        }
    }
    Err(SolverError::NotConverged { iterations, span })
}

/// Solution of the decoupled single-device problem at sampling cost `c`.
#[derive(Debug, Clone)]
pub struct DecoupledSolution {
    h: Vec<f64>,
    gain: f64,
    threshold: u32,
    saturated: bool,
    sampling_cost: f64,
    iterations: u64,
}

impl DecoupledSolution {
    /// Relative values over counters `{0..=U}`, pinned to `h[0] = 0`.
    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Long-run average cost per slot at the optimum.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Smallest counter where sampling is greedy-optimal. `cap + 1` means
    /// resting was optimal everywhere in the truncated range.
    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    /// True when the threshold ran into the cap, i.e. the reported value is
    /// a lower bound on the untruncated threshold rather than the real one.
    pub fn saturated(&self) -> bool {
        self.saturated
    }

    /// The sampling cost this solution prices.
    pub fn sampling_cost(&self) -> f64 {
        self.sampling_cost
    }

    /// Damped updates performed.
    pub fn iterations(&self) -> u64 {
        self.iterations
    }
}

/// Solves the decoupled problem: sample (pay `c`, counter to 0) or rest
/// (counter drifts up, resets exogenously with probability `p`).
///
/// Same damped relative value iteration as the joint solver, on counters
/// `{0..=cap}` with reference counter 0. The greedy rule breaks exact
/// sample/rest ties toward rest, so the extracted threshold is the smallest
/// counter where sampling strictly improves. A threshold at or beyond the
/// cap is flagged as saturated.
pub fn solve_decoupled(
    phi: f64,
    p: f64,
    c: f64,
    cap: u32,
    epsilon: f64,
) -> Result<DecoupledSolution, SolverError> {
    if !phi.is_finite() || !(0.0..=1.0).contains(&phi) {
        return Err(SolverError::AccuracyRange(phi));
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(SolverError::ProbabilityRange(p));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(SolverError::SamplingCostRange(c));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(SolverError::EpsilonRange(epsilon));
    }
    let len = cap as usize + 1;
    let mut h = vec![0.0; len];
    let mut values = vec![0.0; len];
    let apply = |h: &[f64], values: &mut [f64]| {
        for n in 0..len {
            let staleness = phi * n as f64;
            let sample = c + staleness + h[0];
            let rest = staleness + p * h[0] + (1.0 - p) * h[(n + 1).min(cap as usize)];
            values[n] = sample.min(rest);
        }
    };
    let mut iterations = 0;
    let mut span = f64::INFINITY;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        apply(&h, &mut values);
        let offset = values[0];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (elem, &value) in h.iter_mut().zip(values.iter()) {
            let next = (1.0 - TAU) * *elem + TAU * (value - offset);
            let diff = next - *elem;
            lo = lo.min(diff);
            hi = hi.max(diff);
            *elem = next;
        }
        iterations += 1;
        span = hi - lo;
        if span <= TAU * epsilon {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolverError::NotConverged { iterations, span });
    }
    apply(&h, &mut values);
    let gain = values[0];
    // Ties go to rest: sampling must strictly beat resting to set the
    // threshold, matching the smallest-action-index convention with rest
    // listed before sample.
    let mut threshold = cap + 1;
    for n in 0..len {
        let staleness = phi * n as f64;
        let sample = c + staleness + h[0];
        let rest = staleness + p * h[0] + (1.0 - p) * h[(n + 1).min(cap as usize)];
        if sample < rest {
            threshold = n as u32;
            break;
        }
    }
    Ok(DecoupledSolution {
        h,
        gain,
        threshold,
        saturated: threshold >= cap,
        sampling_cost: c,
        iterations,
    })
}

/// The decoupled threshold at sampling cost `c`; monotone non-decreasing in
/// `c`. Values beyond the cap mean resting was optimal everywhere tested.
pub fn threshold_of(phi: f64, p: f64, c: f64, cap: u32, epsilon: f64) -> Result<u32, SolverError> {
    Ok(solve_decoupled(phi, p, c, cap, epsilon)?.threshold())
}

/// Recovers a device's index at counter `n` by bisecting the sampling cost
/// until the decoupled threshold crosses from `<= n` to `>= n+1`.
///
/// This is the slow, solver-backed route to the same number as the closed
/// form, kept deliberately independent of it: the only shared ingredient is
/// the decoupled Bellman equation. Needs `p` strictly inside `(0, 1)` and a
/// cap of at least `n + 2` so the crossing fits under the truncation.
pub fn empirical_whittle(
    n: u32,
    phi: f64,
    p: f64,
    cap: u32,
    epsilon: f64,
) -> Result<f64, SolverError> {
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(SolverError::ProbabilityRange(p));
    }
    if cap < n + 2 {
        return Err(SolverError::CapTooSmall { cap, needed: n + 2 });
    }
    let crossed = |c: f64| -> Result<bool, SolverError> {
        Ok(threshold_of(phi, p, c, cap, epsilon)? > n)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !crossed(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SolverError::BracketFailure { cost: hi });
        }
    }
    while hi - lo > 1e-6 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if crossed(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
