//! Sampling-policy toolkit for monitoring a flow across a path of devices.
//!
//! A monitored flow traverses `M` devices. Each time slot the controller
//! samples exactly one of them; other flows may sample device `i` in the same
//! slot with probability `p_i`. Per-device counters track slots since the
//! last sample, and the per-slot cost is the accuracy-weighted counter sum,
//! so good policies keep the counters of high-accuracy devices small.
//!
//! The crate is organized as five layers:
//!
//! * [`model`] — devices, counter state, transitions, immediate cost.
//! * [`policies`] — every sampling rule behind one interface: uniform,
//!   order-statistic, weighted, index policies (Whittle closed form and its
//!   small-`p` limits), and solver-backed table policies.
//! * [`solver`] — average-cost relative value iteration for the truncated
//!   joint problem and for the decoupled single-device problem, plus a
//!   bisection oracle that recovers the index numerically.
//! * [`analysis`] — closed-form average costs, the water-filling weights and
//!   the matching lower bound, and a geometric goodness-of-fit statistic.
//! * [`harness`] — seeded Monte Carlo evaluation, the multi-flow crosspoint
//!   experiment, and CSV scenario reproductions.
//!
//! # Example
//!
//! ```
//! use flowsamp::analysis;
//! use flowsamp::model::PathConfig;
//!
//! let config = PathConfig::homogeneous(3, 0.8, 0.1, 10).unwrap();
//! let uniform = analysis::cost_uniform(&config);
//! let bound = analysis::lower_bound(&config).unwrap();
//! assert!(bound < uniform);
//! ```

pub mod analysis;
pub mod harness;
pub mod model;
pub mod policies;
pub mod solver;
