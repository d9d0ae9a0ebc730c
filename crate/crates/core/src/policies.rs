//! Sampling policies: who to sample this slot.
//!
//! Everything is funneled through [`PolicySpec::choose`], so the simulator
//! treats stateless randomized rules (uniform, order-statistic, weighted),
//! index rules (Whittle and its limits), and solver-backed lookup tables
//! uniformly. Index computations are exposed as pure functions so tests and
//! callers can assert on index values directly.
//!
//! The Whittle index has the closed form
//!
//! ```text
//! c*(n) = phi (1-p) / p^2 * [ (1-p)^(n+2) + (n+2) p - 1 ]
//! ```
//!
//! whose bracket cancels to O(p^2) as p shrinks; see [`whittle_index`] for
//! how that is kept numerically stable. Its p -> 0 limit `phi (n+1)(n+2)/2`
//! is the second-order index, and `phi (n+1)` (the p -> 1 limit of
//! `c*(n)/(1-p)`) is the first-order index.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::model::{ActionId, CounterState, PathConfig};
use crate::solver::RviSolution;

/// Below this exogenous probability the closed form is evaluated via its
/// p -> 0 limit; the bracket is O(p^2) and drowns in rounding noise first.
pub const P_TINY: f64 = 1e-9;

/// Default probability threshold for the heuristic index rule.
pub const DEFAULT_THRESHOLD_P: f64 = 0.3;

/// Error raised when validating a policy against a path.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    /// Weight vector length differs from the number of devices.
    WeightLength { expected: usize, got: usize },
    /// A weight is negative or not finite.
    WeightNegative(f64),
    /// Weights must sum to 1 within 1e-9.
    WeightSum(f64),
    /// Order-statistic draw count must be at least 1.
    OrderCountZero,
    /// Heuristic threshold outside [0, 1].
    ThresholdRange(f64),
    /// A table policy built for a different path shape.
    TableShape { expected: usize, got: usize },
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PolicyError::WeightLength { expected, got } => {
                write!(f, "expected {expected} weights, got {got}")
            }
            PolicyError::WeightNegative(w) => {
                write!(f, "weights must be nonnegative and finite, got {w}")
            }
            PolicyError::WeightSum(s) => {
                write!(f, "weights must sum to 1 within 1e-9, got {s}")
            }
            PolicyError::OrderCountZero => write!(f, "order-statistic draw count must be >= 1"),
            PolicyError::ThresholdRange(t) => {
                write!(f, "heuristic threshold must lie in [0, 1], got {t}")
            }
            PolicyError::TableShape { expected, got } => {
                write!(f, "policy table covers {got} devices, path has {expected}")
            }
        }
    }
}

impl std::error::Error for PolicyError {}

/// Which per-device index an index policy ranks by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexKind {
    /// Closed-form Whittle index; needs each device's `p`.
    Whittle,
    /// `phi (n+1)(n+2)/2`, the small-p limit; ignores `p`.
    SecondOrder,
    /// `phi (n+1)`, the heavy-traffic limit; ignores `p`.
    FirstOrder,
    /// Second-order where `p < threshold_p`, first-order elsewhere.
    Heuristic { threshold_p: f64 },
}

/// A device's index value, as ranked by [`choose_by_index`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexValue {
    /// The 1-based device this value belongs to.
    pub device: ActionId,
    /// The index at the device's current counter.
    pub value: f64,
}

/// A complete sampling rule.
#[derive(Debug, Clone)]
pub enum PolicySpec {
    /// Sample one of the M devices uniformly.
    Uniform,
    /// Sample the maximum of `g` uniform draws; biases toward the
    /// destination end of the path. `g = 1` is [`PolicySpec::Uniform`].
    OrderStatistic { g: u32 },
    /// Sample device i with probability `weights[i]`.
    Weighted { weights: Vec<f64> },
    /// Rank devices by the given index and sample the argmax.
    Index { kind: IndexKind },
    /// Greedy lookup in a solved value-iteration table.
    Table { solution: Arc<RviSolution> },
}

impl PolicySpec {
    /// Whittle index policy.
    pub fn whittle() -> Self {
        PolicySpec::Index {
            kind: IndexKind::Whittle,
        }
    }

    /// Second-order index policy.
    pub fn second_order() -> Self {
        PolicySpec::Index {
            kind: IndexKind::SecondOrder,
        }
    }

    /// First-order index policy.
    pub fn first_order() -> Self {
        PolicySpec::Index {
            kind: IndexKind::FirstOrder,
        }
    }

    /// Heuristic index policy with the given probability threshold.
    pub fn heuristic(threshold_p: f64) -> Self {
        PolicySpec::Index {
            kind: IndexKind::Heuristic { threshold_p },
        }
    }

    /// Checks the policy is well-formed for a path of `m` devices.
    pub fn validate(&self, m: usize) -> Result<(), PolicyError> {
        match self {
            PolicySpec::Uniform => Ok(()),
            PolicySpec::OrderStatistic { g } => {
                if *g == 0 {
                    Err(PolicyError::OrderCountZero)
                } else {
                    Ok(())
                }
            }
            PolicySpec::Weighted { weights } => {
                if weights.len() != m {
                    return Err(PolicyError::WeightLength {
                        expected: m,
                        got: weights.len(),
                    });
                }
                for &w in weights {
                    if !w.is_finite() || w < 0.0 {
                        return Err(PolicyError::WeightNegative(w));
                    }
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(PolicyError::WeightSum(sum));
                }
                Ok(())
            }
            PolicySpec::Index { kind } => {
                if let IndexKind::Heuristic { threshold_p } = kind {
                    if !threshold_p.is_finite() || !(0.0..=1.0).contains(threshold_p) {
                        return Err(PolicyError::ThresholdRange(*threshold_p));
                    }
                }
                Ok(())
            }
            PolicySpec::Table { solution } => {
                if solution.path_len() != m {
                    Err(PolicyError::TableShape {
                        expected: m,
                        got: solution.path_len(),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Picks this slot's device.
    ///
    /// Index and table policies are deterministic and consume no randomness;
    /// the randomized rules consume exactly one uniform draw per invocation
    /// (or `g` draws for the order statistic).
    pub fn choose<R: Rng + ?Sized>(
        &self,
        state: &CounterState,
        config: &PathConfig,
        rng: &mut R,
    ) -> ActionId {
        match self {
            PolicySpec::Uniform => choose_uniform(config.len(), rng),
            PolicySpec::OrderStatistic { g } => choose_order_statistic(config.len(), *g, rng),
            PolicySpec::Weighted { weights } => choose_weighted(weights, rng),
            PolicySpec::Index { kind } => choose_by_index(state, config, *kind),
            PolicySpec::Table { solution } => solution.action_for(state.counters()),
        }
    }
}

/// Uniform choice over `1..=m`.
pub fn choose_uniform<R: Rng + ?Sized>(m: usize, rng: &mut R) -> ActionId {
    assert!(m >= 1, "a path has at least one device");
    ActionId::new(1 + rng.random_range(0..m))
}

/// Maximum of `g` i.i.d. uniform draws over `1..=m`.
///
/// Device i comes out with probability `(i^g - (i-1)^g) / m^g`.
pub fn choose_order_statistic<R: Rng + ?Sized>(m: usize, g: u32, rng: &mut R) -> ActionId {
    assert!(m >= 1, "a path has at least one device");
    assert!(g >= 1, "the order statistic needs at least one draw");
    let mut best = 0;
    for _ in 0..g {
        best = best.max(rng.random_range(0..m));
    }
    ActionId::new(1 + best)
}

/// Draws device i with probability `weights[i]`.
///
/// Zero-weight devices are never chosen. Expects a validated weight vector
/// (nonnegative, summing to 1); see [`PolicySpec::validate`].
pub fn choose_weighted<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> ActionId {
    assert!(!weights.is_empty(), "a path has at least one device");
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = Some(i);
            if u < acc {
                return ActionId::new(i + 1);
            }
        }
    }
    // Rounding can leave acc a hair under 1; charge the tail to the last
    // device that can legitimately receive it.
    let i = last_positive.expect("weights must contain a positive entry");
    ActionId::new(i + 1)
}

/// Closed-form Whittle index `c*(n)` of a device at counter `n`.
///
/// Evaluated as `phi (1-p)/p^2 * (expm1((n+2) log1p(-p)) + (n+2) p)`: the
/// bracket's two large terms cancel to O(p^2), and folding the `-1` into
/// `expm1` keeps the relative error near machine precision down to
/// vanishing p. At or below [`P_TINY`] the analytic limit
/// `phi (n+1)(n+2)/2` takes over; at `p = 1` the index is identically 0.
///
/// # Panics
///
/// Panics if `phi` or `p` lies outside `[0, 1]`.
pub fn whittle_index(n: u32, phi: f64, p: f64) -> f64 {
    assert!(
        phi.is_finite() && (0.0..=1.0).contains(&phi),
        "accuracy must lie in [0, 1], got {phi}"
    );
    assert!(
        p.is_finite() && (0.0..=1.0).contains(&p),
        "probability must lie in [0, 1], got {p}"
    );
    if p <= P_TINY {
        return second_order_index(n, phi);
    }
    if p >= 1.0 {
        return 0.0;
    }
    let k = f64::from(n) + 2.0;
    let bracket = (k * (-p).ln_1p()).exp_m1() + k * p;
    phi * (1.0 - p) / (p * p) * bracket
}

/// Second-order index `phi (n+1)(n+2)/2`, the p -> 0 limit of the Whittle
/// index. Needs no knowledge of p.
///
/// # Panics
///
/// Panics if `phi` lies outside `[0, 1]`.
pub fn second_order_index(n: u32, phi: f64) -> f64 {
    assert!(
        phi.is_finite() && (0.0..=1.0).contains(&phi),
        "accuracy must lie in [0, 1], got {phi}"
    );
    let n = f64::from(n);
    phi * (n + 1.0) * (n + 2.0) / 2.0
}

/// First-order index `phi (n+1)`, the p -> 1 limit of `c*(n)/(1-p)`.
///
/// # Panics
///
/// Panics if `phi` lies outside `[0, 1]`.
pub fn first_order_index(n: u32, phi: f64) -> f64 {
    assert!(
        phi.is_finite() && (0.0..=1.0).contains(&phi),
        "accuracy must lie in [0, 1], got {phi}"
    );
    phi * (f64::from(n) + 1.0)
}

/// The index a device of parameters `(phi, p)` at counter `n` gets under
/// `kind`.
pub fn device_index(kind: IndexKind, n: u32, phi: f64, p: f64) -> f64 {
    match kind {
        IndexKind::Whittle => whittle_index(n, phi, p),
        IndexKind::SecondOrder => second_order_index(n, phi),
        IndexKind::FirstOrder => first_order_index(n, phi),
        IndexKind::Heuristic { threshold_p } => {
            if p < threshold_p {
                second_order_index(n, phi)
            } else {
                first_order_index(n, phi)
            }
        }
    }
}

/// Every device's index at the current state, in device order.
pub fn index_values(state: &CounterState, config: &PathConfig, kind: IndexKind) -> Vec<IndexValue> {
    assert_eq!(state.len(), config.len(), "state/path length mismatch");
    (0..config.len())
        .map(|i| {
            let d = config.device(i);
            IndexValue {
                device: ActionId::new(i + 1),
                value: device_index(kind, state.counter(i), d.phi(), d.p()),
            }
        })
        .collect()
}

/// True when candidate `(value, phi, n)` outranks the incumbent under the
/// deterministic tie order: larger index, then larger accuracy, then larger
/// counter. Scanning devices in order with this predicate leaves full ties
/// at the smallest device index.
pub(crate) fn outranks(cand: (f64, f64, u32), best: (f64, f64, u32)) -> bool {
    if cand.0 != best.0 {
        return cand.0 > best.0;
    }
    if cand.1 != best.1 {
        return cand.1 > best.1;
    }
    cand.2 > best.2
}

/// Samples the device with the greatest index.
///
/// Ties are broken deterministically: larger accuracy first, then larger
/// counter, then the smaller device index.
///
/// # Panics
///
/// Panics if the state length differs from the path length.
pub fn choose_by_index(state: &CounterState, config: &PathConfig, kind: IndexKind) -> ActionId {
    assert_eq!(state.len(), config.len(), "state/path length mismatch");
    let mut best_at = 0;
    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0u32);
    for i in 0..config.len() {
        let d = config.device(i);
        let n = state.counter(i);
        let cand = (device_index(kind, n, d.phi(), d.p()), d.phi(), n);
        if outranks(cand, best) {
            best = cand;
            best_at = i;
        }
    }
    ActionId::new(best_at + 1)
}

/// Greedy lookup in a solved table; counters clip to the table's cap.
pub fn choose_from_table(state: &CounterState, solution: &RviSolution) -> ActionId {
    solution.action_for(state.counters())
}
