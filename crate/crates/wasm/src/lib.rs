//! Browser bindings: the closed forms, the index formulas, and a small
//! stepwise simulator, each exported through `wasm-bindgen` for the demo
//! page under `www/`.
//!
//! Exports return JSON strings rather than structured `JsValue`s; the page
//! parses them with `JSON.parse`, and the string surface keeps this crate
//! testable on the host without a browser. The heavy lifting all happens
//! in the core library; nothing here holds logic beyond assembling
//! payloads and running one policy step at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

use flowsamp::analysis::{cost_order_statistic, cost_uniform, cost_weighted, lower_bound, water_filling};
use flowsamp::model::{immediate_cost, step, ActionId, CounterState, PathConfig};
use flowsamp::policies::{
    choose_by_index, choose_order_statistic, choose_uniform, choose_weighted, device_index,
    IndexKind, PolicySpec, DEFAULT_THRESHOLD_P,
};

/// Closed-form costs over path lengths `1..=m_max` for a homogeneous path:
/// uniform, two order-statistic variants, the optimal weighted policy, and
/// the universal lower bound, as one JSON array of per-M records.
#[wasm_bindgen]
pub fn cost_curves(m_max: usize, sigma: f64, p: f64) -> Result<String, JsError> {
    cost_curves_json(m_max, sigma, p).map_err(|e| JsError::new(&e))
}

/// Index values against the counter for one device: Whittle, second-order,
/// and first-order, as one JSON array of per-n records.
#[wasm_bindgen]
pub fn index_curves(phi: f64, p: f64, n_max: u32) -> Result<String, JsError> {
    index_curves_json(phi, p, n_max).map_err(|e| JsError::new(&e))
}

/// A homogeneous path stepped one slot at a time under a chosen policy,
/// for animating counters and the running cost in the page.
#[wasm_bindgen]
pub struct LiveSim {
    config: PathConfig,
    policy: PolicySpec,
    state: CounterState,
    rng: ChaCha12Rng,
    slot: u64,
    cost_sum: f64,
    samples: Vec<u64>,
    last_action: usize,
}

#[wasm_bindgen]
impl LiveSim {
    /// Builds the simulator. Policies: `uniform`, `order-2`, `order-3`,
    /// `weighted`, `whittle`, `second-order`, `first-order`, `heuristic`.
    #[wasm_bindgen(constructor)]
    pub fn new(m: usize, sigma: f64, p: f64, policy: &str, seed: u64) -> Result<LiveSim, JsError> {
        new_sim(m, sigma, p, policy, seed).map_err(|e| JsError::new(&e))
    }

    /// Advances `slots` slots and returns a JSON snapshot: the slot count,
    /// the counters, the last sampled device (1-based), the current and
    /// running-average cost, and each device's empirical sampling rate.
    pub fn step(&mut self, slots: u32) -> String {
        for _ in 0..slots {
            let action = self.choose();
            self.last_action = action.index0() + 1;
            self.samples[action.index0()] += 1;
            self.state = step(&self.state, action, &self.config, &mut self.rng);
            self.slot += 1;
            self.cost_sum += immediate_cost(&self.state, &self.config);
        }
        self.snapshot()
    }

    fn choose(&mut self) -> ActionId {
        let m = self.config.len();
        match &self.policy {
            PolicySpec::Uniform => choose_uniform(m, &mut self.rng),
            PolicySpec::OrderStatistic { g } => choose_order_statistic(m, *g, &mut self.rng),
            PolicySpec::Weighted { weights } => choose_weighted(weights, &mut self.rng),
            PolicySpec::Index { kind } => choose_by_index(&self.state, &self.config, *kind),
            PolicySpec::Table { solution } => solution.action_for(self.state.counters()),
        }
    }

    fn snapshot(&self) -> String {
        let mean = if self.slot == 0 {
            0.0
        } else {
            self.cost_sum / self.slot as f64
        };
        let rates: Vec<f64> = self
            .samples
            .iter()
            .map(|&s| {
                if self.slot == 0 {
                    0.0
                } else {
                    s as f64 / self.slot as f64
                }
            })
            .collect();
        json!({
            "slot": self.slot,
            "counters": self.state.counters(),
            "last_action": self.last_action,
            "cost": immediate_cost(&self.state, &self.config),
            "mean_cost": mean,
            "sampling_rates": rates,
        })
        .to_string()
    }
}

fn cost_curves_json(m_max: usize, sigma: f64, p: f64) -> Result<String, String> {
    if m_max == 0 || m_max > 400 {
        return Err(format!("m_max {m_max} outside 1..=400"));
    }
    let mut rows = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let config = PathConfig::homogeneous(m, sigma, p, 10).map_err(|e| e.to_string())?;
        let weights = water_filling(&config).map_err(|e| e.to_string())?;
        let weighted = cost_weighted(&config, weights.weights()).map_err(|e| e.to_string())?;
        rows.push(json!({
            "m": m,
            "uniform": cost_uniform(&config),
            "order2": cost_order_statistic(&config, 2).map_err(|e| e.to_string())?,
            "order3": cost_order_statistic(&config, 3).map_err(|e| e.to_string())?,
            "weighted": weighted.cost(),
            "bound": lower_bound(&config).map_err(|e| e.to_string())?,
        }));
    }
    Ok(serde_json::Value::Array(rows).to_string())
}

fn index_curves_json(phi: f64, p: f64, n_max: u32) -> Result<String, String> {
    if !(0.0..=1.0).contains(&phi) || phi == 0.0 {
        return Err(format!("phi {phi} outside (0, 1]"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("p {p} outside [0, 1]"));
    }
    if n_max > 500 {
        return Err(format!("n_max {n_max} outside 0..=500"));
    }
    let rows: Vec<serde_json::Value> = (0..=n_max)
        .map(|n| {
            json!({
                "n": n,
                "whittle": device_index(IndexKind::Whittle, n, phi, p),
                "second": device_index(IndexKind::SecondOrder, n, phi, p),
                "first": device_index(IndexKind::FirstOrder, n, phi, p),
            })
        })
        .collect();
    Ok(serde_json::Value::Array(rows).to_string())
}

fn new_sim(m: usize, sigma: f64, p: f64, policy: &str, seed: u64) -> Result<LiveSim, String> {
    let config = PathConfig::homogeneous(m, sigma, p, 10).map_err(|e| e.to_string())?;
    let policy = match policy {
        "uniform" => PolicySpec::Uniform,
        "order-2" => PolicySpec::OrderStatistic { g: 2 },
        "order-3" => PolicySpec::OrderStatistic { g: 3 },
        "weighted" => PolicySpec::Weighted {
            weights: water_filling(&config)
                .map_err(|e| e.to_string())?
                .weights()
                .to_vec(),
        },
        "whittle" => PolicySpec::whittle(),
        "second-order" => PolicySpec::second_order(),
        "first-order" => PolicySpec::first_order(),
        "heuristic" => PolicySpec::heuristic(DEFAULT_THRESHOLD_P),
        other => return Err(format!("unknown policy \"{other}\"")),
    };
    Ok(LiveSim {
        state: CounterState::new(vec![0; m]),
        samples: vec![0; m],
        config,
        policy,
        rng: ChaCha12Rng::seed_from_u64(seed),
        slot: 0,
        cost_sum: 0.0,
        last_action: 0,
    })
}
