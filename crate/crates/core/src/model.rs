//! The sampling model: devices, counter state, transitions, and cost.
//!
//! State is one counter per device, the number of slots since that device was
//! last sampled by anyone. Each slot the monitored flow samples exactly one
//! device (the action) and every other device is independently sampled by
//! exogenous traffic with its own per-slot probability. A sampled device's
//! counter drops to zero; an unsampled counter grows by one. The slot cost is
//! the accuracy-weighted counter sum, so staleness at accurate devices hurts
//! most.
//!
//! Counters are unbounded here. The solver truncates them at the configured
//! cap when it enumerates states; simulation never clips.

use std::fmt;

use rand::Rng;

/// Error raised by constructors and validators in this module.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// An accuracy outside `[0, 1]`.
    AccuracyRange(f64),
    /// A probability outside `[0, 1]` or not finite.
    ProbabilityRange(f64),
    /// `sigma` outside `(0, 1]`.
    SigmaRange(f64),
    /// A path must contain at least one device.
    EmptyPath,
    /// Every accuracy is zero, which makes the cost identically zero and
    /// every policy equally (vacuously) optimal.
    AllAccuraciesZero,
    /// The counter cap must be at least 1.
    CapZero,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ModelError::AccuracyRange(phi) => {
                write!(f, "accuracy must lie in [0, 1], got {phi}")
            }
            ModelError::ProbabilityRange(p) => {
                write!(f, "probability must lie in [0, 1], got {p}")
            }
            ModelError::SigmaRange(sigma) => {
                write!(f, "sigma must lie in (0, 1], got {sigma}")
            }
            ModelError::EmptyPath => write!(f, "a path needs at least one device"),
            ModelError::AllAccuraciesZero => {
                write!(f, "at least one device must have positive accuracy")
            }
            ModelError::CapZero => write!(f, "counter cap must be at least 1"),
        }
    }
}

impl std::error::Error for ModelError {}

/// Per-device parameters: sampling accuracy and exogenous sampling rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceParams {
    phi: f64,
    p: f64,
}

impl DeviceParams {
    /// Creates device parameters.
    ///
    /// `phi` is the accuracy weight in `[0, 1]` (how much a stale counter at
    /// this device costs). `p` is the probability, each slot, that some other
    /// flow samples the device.
    pub fn new(phi: f64, p: f64) -> Result<Self, ModelError> {
        if !phi.is_finite() || !(0.0..=1.0).contains(&phi) {
            return Err(ModelError::AccuracyRange(phi));
        }
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(ModelError::ProbabilityRange(p));
        }
        Ok(DeviceParams { phi, p })
    }

    /// Accuracy weight.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Per-slot exogenous sampling probability.
    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Accuracy ladder `sigma^(M-i)` for devices `i = 1..=M`.
///
/// Devices closer to the destination aggregate more of the path and get
/// accuracy closer to 1; the last entry is exactly 1.
pub fn geometric_accuracy_profile(m: usize, sigma: f64) -> Result<Vec<f64>, ModelError> {
    if m == 0 {
        return Err(ModelError::EmptyPath);
    }
    if !sigma.is_finite() || sigma <= 0.0 || sigma > 1.0 {
        return Err(ModelError::SigmaRange(sigma));
    }
    Ok((1..=m).map(|i| sigma.powi((m - i) as i32)).collect())
}

/// A monitored path: the ordered devices plus the solver's counter cap.
///
/// Device indices are 1-based in every external interface; accessors that
/// take a raw `usize` position are 0-based and say so.
#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    devices: Vec<DeviceParams>,
    counter_cap: u32,
}

impl PathConfig {
    /// Builds a path from explicit per-device parameters.
    ///
    /// Requires at least one device, a cap of at least 1, and at least one
    /// positive accuracy (otherwise the cost is identically zero).
    pub fn new(devices: Vec<DeviceParams>, counter_cap: u32) -> Result<Self, ModelError> {
        if devices.is_empty() {
            return Err(ModelError::EmptyPath);
        }
        if counter_cap == 0 {
            return Err(ModelError::CapZero);
        }
        if devices.iter().all(|d| d.phi == 0.0) {
            return Err(ModelError::AllAccuraciesZero);
        }
        Ok(PathConfig {
            devices,
            counter_cap,
        })
    }

    /// Builds a path from accuracy and probability vectors of equal length.
    pub fn from_parts(phis: &[f64], ps: &[f64], counter_cap: u32) -> Result<Self, ModelError> {
        assert_eq!(
            phis.len(),
            ps.len(),
            "accuracy and probability vectors must have equal length"
        );
        let devices = phis
            .iter()
            .zip(ps)
            .map(|(&phi, &p)| DeviceParams::new(phi, p))
            .collect::<Result<Vec<_>, _>>()?;
        PathConfig::new(devices, counter_cap)
    }

    /// Homogeneous path: the geometric accuracy ladder and one shared `p`.
    pub fn homogeneous(m: usize, sigma: f64, p: f64, counter_cap: u32) -> Result<Self, ModelError> {
        let phis = geometric_accuracy_profile(m, sigma)?;
        let ps = vec![p; m];
        PathConfig::from_parts(&phis, &ps, counter_cap)
    }

    /// Number of devices on the path.
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    /// True only for the degenerate unconstructible case; paths have M >= 1.
    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    /// All devices in path order.
    pub fn devices(&self) -> &[DeviceParams] {
        &self.devices
    }

    /// Device at 0-based position `i`.
    pub fn device(&self, i: usize) -> &DeviceParams {
        &self.devices[i]
    }

    /// Truncation limit for solver state enumeration and table lookups.
    pub fn counter_cap(&self) -> u32 {
        self.counter_cap
    }

    /// Same path with a different counter cap.
    pub fn with_counter_cap(&self, counter_cap: u32) -> Result<Self, ModelError> {
        PathConfig::new(self.devices.clone(), counter_cap)
    }
}

/// The flow's action: which device to sample this slot. 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(usize);

impl ActionId {
    /// Wraps a 1-based device index.
    ///
    /// # Panics
    ///
    /// Panics if `device_index` is 0.
    pub fn new(device_index: usize) -> Self {
        assert!(device_index >= 1, "device indices are 1-based");
        ActionId(device_index)
    }

    /// The 1-based device index.
    pub fn device_index(&self) -> usize {
        self.0
    }

    /// The 0-based position, for slice indexing.
    pub fn index0(&self) -> usize {
        self.0 - 1
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-device counters: slots since each device was last sampled.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CounterState {
    counters: Vec<u32>,
}

impl CounterState {
    /// All counters zero, the state right after every device was sampled.
    pub fn zeros(m: usize) -> Self {
        CounterState {
            counters: vec![0; m],
        }
    }

    /// State with the given counters.
    pub fn new(counters: Vec<u32>) -> Self {
        CounterState { counters }
    }

    /// The counters, device order.
    pub fn counters(&self) -> &[u32] {
        &self.counters
    }

    /// Counter of the device at 0-based position `i`.
    pub fn counter(&self, i: usize) -> u32 {
        self.counters[i]
    }

    /// Number of devices.
    pub fn len(&self) -> usize {
        self.counters.len()
    }

    /// True when the state tracks no devices.
    pub fn is_empty(&self) -> bool {
        self.counters.is_empty()
    }

    /// Advances the state one slot in place.
    ///
    /// The acted device's counter drops to zero with certainty. Every other
    /// counter independently drops to zero with its device's exogenous
    /// probability and grows by one otherwise. Draws one uniform variate per
    /// non-acted device with `p` strictly between 0 and 1; degenerate
    /// probabilities consume no randomness, so deterministic cases stay
    /// deterministic regardless of generator state.
    ///
    /// # Panics
    ///
    /// Panics if the action's device index exceeds the path length or the
    /// state length differs from the path length.
    pub fn advance<R: Rng + ?Sized>(&mut self, action: ActionId, config: &PathConfig, rng: &mut R) {
        assert_eq!(
            self.counters.len(),
            config.len(),
            "state and path must have the same number of devices"
        );
        assert!(
            action.device_index() <= config.len(),
            "action {action} out of range for a path of {} devices",
            config.len()
        );
        let acted = action.index0();
        for (i, n) in self.counters.iter_mut().enumerate() {
            if i == acted {
                *n = 0;
                continue;
            }
            let p = config.device(i).p();
            let sampled = if p <= 0.0 {
                false
            } else if p >= 1.0 {
                true
            } else {
                rng.random::<f64>() < p
            };
            *n = if sampled { 0 } else { *n + 1 };
        }
    }
}

/// One slot of state dynamics; the pure counterpart of
/// [`CounterState::advance`].
pub fn step<R: Rng + ?Sized>(
    state: &CounterState,
    action: ActionId,
    config: &PathConfig,
    rng: &mut R,
) -> CounterState {
    let mut next = state.clone();
    next.advance(action, config, rng);
    next
}

/// Probability of moving from `state` to `next_state` under `action`.
///
/// The product over devices of each coordinate's factor: the acted device
/// must land on zero (factor 1), any other device contributes `p_i` for a
/// reset to zero and `1 - p_i` for an increment; any other coordinate value
/// has probability zero. Counters are uncapped here; for the solver's
/// truncated kernel see [`next_state_distribution`] with a cap.
///
/// # Panics
///
/// Panics if state lengths or the action don't match the path.
pub fn transition_probability(
    state: &CounterState,
    next_state: &CounterState,
    action: ActionId,
    config: &PathConfig,
) -> f64 {
    assert_eq!(state.len(), config.len(), "state/path length mismatch");
    assert_eq!(next_state.len(), config.len(), "state/path length mismatch");
    assert!(
        action.device_index() <= config.len(),
        "action {action} out of range for a path of {} devices",
        config.len()
    );
    let acted = action.index0();
    let mut prob = 1.0;
    for i in 0..config.len() {
        let n = state.counter(i);
        let n_next = next_state.counter(i);
        if i == acted {
            if n_next != 0 {
                return 0.0;
            }
            continue;
        }
        let p = config.device(i).p();
        if n_next == 0 {
            prob *= p;
        } else if n_next == n + 1 {
            prob *= 1.0 - p;
        } else {
            return 0.0;
        }
    }
    prob
}

/// Enumerates every reachable next state and its probability.
///
/// With `cap = Some(u)` increments clip at `u`, the solver's truncated
/// dynamics; with `cap = None` they don't. Outcomes that coincide after
/// clipping are merged, and the returned probabilities sum to 1.
pub fn next_state_distribution(
    state: &CounterState,
    action: ActionId,
    config: &PathConfig,
    cap: Option<u32>,
) -> Vec<(CounterState, f64)> {
    assert_eq!(state.len(), config.len(), "state/path length mismatch");
    assert!(
        action.device_index() <= config.len(),
        "action {action} out of range for a path of {} devices",
        config.len()
    );
    let m = config.len();
    let acted = action.index0();
    // Devices with a genuinely random outcome; everything else is forced.
    let random: Vec<usize> = (0..m)
        .filter(|&i| i != acted && config.device(i).p() > 0.0 && config.device(i).p() < 1.0)
        .collect();
    let bump = |i: usize| {
        let up = state.counter(i) + 1;
        match cap {
            Some(u) => up.min(u),
            None => up,
        }
    };
    let mut base = vec![0u32; m];
    for i in 0..m {
        if i == acted {
            continue;
        }
        let p = config.device(i).p();
        if p >= 1.0 {
            base[i] = 0;
        } else if p <= 0.0 {
            base[i] = bump(i);
        }
    }
    let mut out: Vec<(CounterState, f64)> = Vec::with_capacity(1 << random.len());
    for mask in 0u32..(1 << random.len()) {
        let mut counters = base.clone();
        let mut prob = 1.0;
        for (bit, &i) in random.iter().enumerate() {
            let p = config.device(i).p();
            if mask & (1 << bit) != 0 {
                counters[i] = 0;
                prob *= p;
            } else {
                counters[i] = bump(i);
                prob *= 1.0 - p;
            }
        }
        let next = CounterState::new(counters);
        // Clipping can only merge outcomes when a forced branch and a random
        // branch land on the same counters, which needs cap = 0; merge anyway
        // so the contract holds unconditionally.
        if let Some(entry) = out.iter_mut().find(|(s, _)| *s == next) {
            entry.1 += prob;
        } else {
            out.push((next, prob));
        }
    }
    out
}

/// Per-slot cost of a state: the accuracy-weighted counter sum.
///
/// # Panics
///
/// Panics if the state length differs from the path length.
pub fn immediate_cost(state: &CounterState, config: &PathConfig) -> f64 {
    assert_eq!(state.len(), config.len(), "state/path length mismatch");
    state
        .counters()
        .iter()
        .zip(config.devices())
        .map(|(&n, d)| d.phi() * f64::from(n))
        .sum()
}
