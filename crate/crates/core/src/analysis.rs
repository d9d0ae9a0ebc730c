//! Closed-form performance analysis: stationary costs of state-independent
//! policies, the water-filling weights, the lower bound, the decoupled
//! threshold-policy gain, and a geometric goodness-of-fit statistic.
//!
//! Under any policy that samples device `i` with a fixed per-slot
//! probability `q_i`, the device's counter is a birth-reset chain whose
//! stationary mean is `a/(1-a)` with `a = (1-q_i)(1-p_i)`. Every cost
//! formula here is a weighted sum of such terms. They are all evaluated
//! through one shared helper in the form `phi (1/((1-p) q + p) - 1)`, so
//! the algebraic identities between them (uniform as a special case of
//! weighted, the optimal weighted cost as exactly twice the lower bound)
//! hold bit-for-bit rather than merely to round-off.
//!
//! The water-filling weights solve the stationary-policy design problem:
//! raise a water level `v` until the positive parts of
//! `v sqrt(phi_i/(1-p_i)) - p_i/(1-p_i)` sum to one. The level is found
//! exactly on the piecewise-linear structure by scanning sorted
//! breakpoints; a bisection fallback covers degenerate orderings.

use std::collections::BTreeMap;
use std::fmt;

use crate::model::PathConfig;

/// Bisection tolerance for the water-filling fallback path.
const WATER_LEVEL_TOLERANCE: f64 = 1e-12;

/// Slack allowed on a caller-provided weight vector's total mass.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Error raised by the analysis operations.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisError {
    /// A probability argument outside the admissible range.
    ProbabilityRange(f64),
    /// An accuracy argument outside [0, 1].
    AccuracyRange(f64),
    /// A sampling cost that is negative or not finite.
    SamplingCostRange(f64),
    /// The order-statistic draw count must be at least 1.
    OrderCountZero,
    /// A weight vector of the wrong length.
    WeightLength { expected: usize, got: usize },
    /// A weight that is negative or not finite.
    WeightRange(f64),
    /// Weights whose total mass is not 1.
    WeightSum(f64),
    /// Water-filling has no device to put weight on.
    Infeasible,
    /// The gap sequence for a fit was empty.
    EmptyGaps,
    /// Gap sequences count slots between samples, so every entry is >= 1.
    ZeroGap,
}

impl fmt::Display for AnalysisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            AnalysisError::ProbabilityRange(p) => {
                write!(f, "probability out of range for this operation: {p}")
            }
            AnalysisError::AccuracyRange(phi) => {
                write!(f, "accuracy must lie in [0, 1], got {phi}")
            }
            AnalysisError::SamplingCostRange(c) => {
                write!(f, "sampling cost must be finite and nonnegative, got {c}")
            }
            AnalysisError::OrderCountZero => write!(f, "order-statistic draw count must be >= 1"),
            AnalysisError::WeightLength { expected, got } => {
                write!(f, "weight vector has {got} entries, expected {expected}")
            }
            AnalysisError::WeightRange(w) => {
                write!(f, "weights must be finite and nonnegative, got {w}")
            }
            AnalysisError::WeightSum(sum) => {
                write!(f, "weights must sum to 1, got {sum}")
            }
            AnalysisError::Infeasible => {
                write!(f, "no device can absorb weight: all have p = 1 or phi = 0")
            }
            AnalysisError::EmptyGaps => write!(f, "gap sequence is empty"),
            AnalysisError::ZeroGap => write!(f, "gap sequence entries must be >= 1"),
        }
    }
}

impl std::error::Error for AnalysisError {}

/// Stationary cost contribution of one device sampled with per-slot
/// probability `q`: `phi (1/((1-p) q + p) - 1)`.
///
/// Every cost formula in this module funnels through here so their
/// algebraic relationships survive floating point exactly. A device with
/// `q = 0` and `p = 0` never resets; its contribution is infinite unless
/// its accuracy is zero.
fn device_cost(phi: f64, p: f64, q: f64) -> f64 {
    let reset_rate = (1.0 - p) * q + p;
    if reset_rate <= 0.0 {
        return if phi > 0.0 { f64::INFINITY } else { 0.0 };
    }
    phi * (1.0 / reset_rate - 1.0)
}

/// Stationary mean counter of a device sampled with per-slot probability
/// `q` and exogenous reset probability `p`.
///
/// Returns `a/(1-a)` for `a = (1-q)(1-p)`; infinite when the counter never
/// resets (`q = 0` and `p = 0`).
pub fn stationary_mean_counter(q: f64, p: f64) -> Result<f64, AnalysisError> {
    if !q.is_finite() || !(0.0..=1.0).contains(&q) {
        return Err(AnalysisError::ProbabilityRange(q));
    }
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::ProbabilityRange(p));
    }
    Ok(device_cost(1.0, p, q))
}

/// Average cost of the uniform policy: each slot samples one of the `M`
/// devices uniformly at random.
pub fn cost_uniform(config: &PathConfig) -> f64 {
    let q = 1.0 / config.len() as f64;
    config
        .devices()
        .iter()
        .map(|d| device_cost(d.phi(), d.p(), q))
        .sum()
}

/// Average cost of the largest-order-statistic policy: each slot draws `g`
/// device positions uniformly and samples the largest.
///
/// Position `i` (1-based) is chosen with probability
/// `(i^g - (i-1)^g) / M^g`. Powers are taken in exact integer arithmetic
/// while they fit, with a floating-point fallback for ranges where they
/// would overflow.
pub fn cost_order_statistic(config: &PathConfig, g: u32) -> Result<f64, AnalysisError> {
    if g == 0 {
        return Err(AnalysisError::OrderCountZero);
    }
    let m = config.len();
    let exact_pow = |base: usize| (base as u128).checked_pow(g);
    let selection = |i: usize| -> f64 {
        match (exact_pow(i), exact_pow(i - 1), exact_pow(m)) {
            (Some(hi), Some(lo), Some(total)) => (hi - lo) as f64 / total as f64,
            _ => {
                let scale = |x: usize| (x as f64 / m as f64).powi(g as i32);
                scale(i) - scale(i - 1)
            }
        }
    };
    Ok(config
        .devices()
        .iter()
        .enumerate()
        .map(|(idx, d)| device_cost(d.phi(), d.p(), selection(idx + 1)))
        .sum())
}

/// Average cost of a weighted-probability policy and the devices, if any,
/// that make it infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCost {
    cost: f64,
    starved: Vec<usize>,
}

impl WeightedCost {
    /// Total average cost per slot; infinite when any device is starved.
    pub fn cost(&self) -> f64 {
        self.cost
    }

    /// Devices with positive accuracy that are never sampled and never
    /// reset on their own, each of which contributes unbounded staleness.
    pub fn starved(&self) -> &[usize] {
        &self.starved
    }

    /// Whether the policy keeps every device's staleness bounded.
    pub fn is_finite(&self) -> bool {
        self.starved.is_empty()
    }
}

fn validate_weights(config: &PathConfig, weights: &[f64]) -> Result<(), AnalysisError> {
    if weights.len() != config.len() {
        return Err(AnalysisError::WeightLength {
            expected: config.len(),
            got: weights.len(),
        });
    }
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(AnalysisError::WeightRange(w));
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(AnalysisError::WeightSum(sum));
    }
    Ok(())
}

/// Average cost of the weighted-probability policy that samples device `i`
/// with per-slot probability `weights[i]`.
pub fn cost_weighted(config: &PathConfig, weights: &[f64]) -> Result<WeightedCost, AnalysisError> {
    validate_weights(config, weights)?;
    let mut cost = 0.0;
    let mut starved = Vec::new();
    for (i, (d, &w)) in config.devices().iter().zip(weights).enumerate() {
        let term = device_cost(d.phi(), d.p(), w);
        if term.is_infinite() {
            starved.push(i);
        }
        cost += term;
    }
    Ok(WeightedCost { cost, starved })
}

/// The optimal stationary sampling weights and the water level that
/// produces them.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFillingResult {
    weights: Vec<f64>,
    v: f64,
    active_set: Vec<usize>,
}

impl WaterFillingResult {
    /// Per-device sampling probabilities; zero outside the active set.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The water level `v` the weights were evaluated at.
    pub fn v(&self) -> f64 {
        self.v
    }

    /// Devices holding strictly positive weight, ascending.
    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }
}

/// Finds the optimal stationary sampling weights by water filling.
///
/// Each eligible device earns weight `(v s_i - t_i)+` with
/// `s_i = sqrt(phi_i/(1-p_i))` and `t_i = p_i/(1-p_i)`; the level `v` is
/// the unique value making the weights sum to one. Devices with `p_i = 1`
/// (always fresh on their own) or `phi_i = 0` (costless) are excluded up
/// front and get weight exactly zero.
pub fn water_filling(config: &PathConfig) -> Result<WaterFillingResult, AnalysisError> {
    struct Candidate {
        device: usize,
        s: f64,
        t: f64,
        breakpoint: f64,
    }
    let mut candidates: Vec<Candidate> = config
        .devices()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.p() < 1.0 && d.phi() > 0.0)
        .map(|(device, d)| {
            let s = (d.phi() / (1.0 - d.p())).sqrt();
            let t = d.p() / (1.0 - d.p());
            Candidate {
                device,
                s,
                t,
                breakpoint: t / s,
            }
        })
        .collect();
    if candidates.is_empty() {
        return Err(AnalysisError::Infeasible);
    }
    candidates.sort_unstable_by(|a, b| a.breakpoint.total_cmp(&b.breakpoint));

    // A device is active exactly when v exceeds its breakpoint, so the
    // active set is always a prefix of the sorted candidates. For prefix
    // length k the constraint is linear in v; take the k whose solution
    // lands between breakpoint k and breakpoint k+1.
    let mut sum_s = 0.0;
    let mut sum_t = 0.0;
    let mut level = None;
    for (k, candidate) in candidates.iter().enumerate() {
        sum_s += candidate.s;
        sum_t += candidate.t;
        let v = (1.0 + sum_t) / sum_s;
        let next_breakpoint = candidates.get(k + 1).map_or(f64::INFINITY, |c| c.breakpoint);
        if v > candidate.breakpoint && v <= next_breakpoint {
            level = Some(v);
            break;
        }
    }
    let v = match level {
        Some(v) => v,
        // Rounding can push the prefix solutions just outside their
        // brackets when breakpoints collide; fall back to bisection on the
        // total weight, which is continuous and increasing in v.
        None => {
            let total = |v: f64| -> f64 {
                candidates
                    .iter()
                    .map(|c| (v * c.s - c.t).max(0.0))
                    .sum::<f64>()
            };
            let mut lo = 0.0;
            let mut hi = 1.0;
            while total(hi) < 1.0 {
                lo = hi;
                hi *= 2.0;
            }
            while hi - lo > WATER_LEVEL_TOLERANCE * hi.max(1.0) {
                let mid = 0.5 * (lo + hi);
                if total(mid) < 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    };

    let mut weights = vec![0.0; config.len()];
    let mut active_set = Vec::new();
    for candidate in &candidates {
        let w = v * candidate.s - candidate.t;
        if w > 0.0 {
            weights[candidate.device] = w;
            active_set.push(candidate.device);
        }
    }
    active_set.sort_unstable();
    Ok(WaterFillingResult {
        weights,
        v,
        active_set,
    })
}

/// Lower bound on the average cost of every sampling policy:
/// half the stationary cost at the water-filling weights.
pub fn lower_bound(config: &PathConfig) -> Result<f64, AnalysisError> {
    let optimal = water_filling(config)?;
    let half: f64 = config
        .devices()
        .iter()
        .zip(optimal.weights())
        .map(|(d, &w)| device_cost(d.phi(), d.p(), w))
        .sum();
    Ok(0.5 * half)
}

/// Average cost of the decoupled single-device threshold policy that
/// samples exactly when the counter reaches `threshold_n`, at sampling
/// cost `c`.
///
/// Needs `p` strictly inside `(0, 1)`; the renewal formula is singular at
/// both endpoints.
pub fn decoupled_gain(threshold_n: u32, c: f64, phi: f64, p: f64) -> Result<f64, AnalysisError> {
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(AnalysisError::ProbabilityRange(p));
    }
    if !phi.is_finite() || !(0.0..=1.0).contains(&phi) {
        return Err(AnalysisError::AccuracyRange(phi));
    }
    if !c.is_finite() || c < 0.0 {
        return Err(AnalysisError::SamplingCostRange(c));
    }
    let n = f64::from(threshold_n);
    // hit_k = 1 - (1-p)^k, written through expm1 so small p keeps its
    // precision.
    let hit = |k: f64| -> f64 { -(k * (-p).ln_1p()).exp_m1() };
    let reach = 1.0 - hit(n);
    let cycle = hit(n + 1.0);
    let sampling = p * reach / cycle * c;
    let staleness = phi * (n - (n * p - (1.0 - p) * hit(n)) / (p * cycle));
    Ok(sampling + staleness)
}

/// Goodness of fit of a gap sequence against the geometric distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricFit {
    p_hat: f64,
    p_hat_ml: f64,
    tv_distance: f64,
    sample_count: usize,
}

impl GeometricFit {
    /// Fitted per-slot probability, estimated as the empirical share of
    /// gaps equal to 1.
    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    /// Maximum-likelihood alternative, one over the mean gap; recorded as
    /// a diagnostic and not used in the distance.
    pub fn p_hat_ml(&self) -> f64 {
        self.p_hat_ml
    }

    /// Total variation distance between the empirical gap distribution and
    /// the fitted geometric, in [0, 1].
    pub fn tv_distance(&self) -> f64 {
        self.tv_distance
    }

    /// Number of gaps the fit was computed from.
    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    /// False when the fit degenerated (no gap of length 1, so the fitted
    /// distribution is vacuous).
    pub fn is_valid(&self) -> bool {
        self.p_hat > 0.0
    }
}

/// Fits a geometric distribution to a sequence of sampling gaps and
/// measures the total variation distance of the fit.
///
/// `p_hat` is the empirical probability of a gap of exactly one slot, the
/// natural parameterization when the gaps come from per-slot coin flips.
/// The distance compares the empirical mass function against
/// `(1-p_hat)^(z-1) p_hat` over all gap lengths up to the observed
/// maximum, plus the fitted tail beyond it.
pub fn geometric_fit(gaps: &[u64]) -> Result<GeometricFit, AnalysisError> {
    if gaps.is_empty() {
        return Err(AnalysisError::EmptyGaps);
    }
    if gaps.contains(&0) {
        return Err(AnalysisError::ZeroGap);
    }
    let n = gaps.len();
    let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
    let mut total: u128 = 0;
    for &z in gaps {
        *histogram.entry(z).or_insert(0) += 1;
        total += u128::from(z);
    }
    let ones = histogram.get(&1).copied().unwrap_or(0);
    let p_hat = ones as f64 / n as f64;
    let p_hat_ml = n as f64 / total as f64;
    let max_gap = *histogram.keys().next_back().expect("nonempty histogram");

    let tv_distance = if p_hat > 0.0 {
        // The z = 1 case is split off so a perfect p_hat of 1 does not turn
        // 0 * ln(0) into a NaN.
        let geometric = |z: u64| -> f64 {
            if z == 1 {
                p_hat
            } else {
                ((z - 1) as f64 * (-p_hat).ln_1p()).exp() * p_hat
            }
        };
        let tail = (max_gap as f64 * (-p_hat).ln_1p()).exp();
        let mut observed_diff = 0.0;
        let mut fitted_mass_observed = 0.0;
        for (&z, &count) in &histogram {
            let fitted = geometric(z);
            observed_diff += (count as f64 / n as f64 - fitted).abs();
            fitted_mass_observed += fitted;
        }
        // Gap lengths that never occurred contribute their fitted mass.
        let unobserved = ((1.0 - tail) - fitted_mass_observed).max(0.0);
        (0.5 * (observed_diff + unobserved + tail)).clamp(0.0, 1.0)
    } else {
        // A fit with p_hat = 0 puts no mass anywhere; maximal distance.
        1.0
    };

    Ok(GeometricFit {
        p_hat,
        p_hat_ml,
        tv_distance,
        sample_count: n,
    })
}
