//! The acceptance gate: eleven numbered criteria, one test and one printed
//! verdict line each.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see every
//! line; without `--nocapture` the lines surface only for failing
//! criteria. Each criterion prints `criterion N: pass - detail` or
//! `criterion N: FAIL - detail` and then asserts, so the suite's exit
//! status is the gate.
//!
//! Tolerances are pinned as constants below. Grid tables are produced by
//! the harness's `reproduce` at the default master seed and shared between
//! criteria through lazily initialized statics, so the suite runs each
//! grid once.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use flowsamp::analysis::{
    cost_order_statistic, cost_uniform, cost_weighted, lower_bound, water_filling,
};
use flowsamp::harness::{reproduce, simulate, FigureId, ScenarioSpec, DEFAULT_SEED};
use flowsamp::model::{
    next_state_distribution, step, ActionId, CounterState, PathConfig,
};
use flowsamp::policies::{choose_by_index, index_values, whittle_index, IndexKind, PolicySpec};
use flowsamp::solver::{empirical_whittle, solve_decoupled};

/// Criterion 1: simulated Whittle cost within this of the optimal gain.
const WHITTLE_VS_OPTIMAL_REL: f64 = 0.02;
/// Criterion 2: closed forms within 1% relative or 3 standard errors.
const CLOSED_FORM_REL: f64 = 0.01;
const CLOSED_FORM_SIGMAS: f64 = 3.0;
/// Criterion 3: the large-M plateaus and their allowed distances.
const UNIFORM_PLATEAU: f64 = 45.0;
const UNIFORM_PLATEAU_REL: f64 = 0.05;
const ORDER2_PLATEAU: f64 = 45.0;
const ORDER2_PLATEAU_REL: f64 = 0.05;
const WEIGHTED_PLATEAU: f64 = 22.64;
const WEIGHTED_PLATEAU_REL: f64 = 0.03;
/// Criterion 4: Whittle's cost reductions at M = 200, within 2 points.
/// The reference percentages are asymptotic statements, so they are
/// measured against the large-M plateaus of the uniform and weighted
/// policies; Whittle's own cost has converged by M = 200, theirs have not.
const REDUCTION_VS_UNIFORM: f64 = 0.664;
const REDUCTION_VS_WEIGHTED: f64 = 0.334;
const REDUCTION_TOL: f64 = 0.02;
/// Criterion 5: the weighted-cost identity, relative.
const IDENTITY_REL: f64 = 1e-10;
/// Criterion 6: bisection oracle vs. closed form, absolute or relative.
const ORACLE_TOL: f64 = 1e-3;
/// Criteria 8 and 10: second-order within this of Whittle.
const SECOND_VS_WHITTLE_REL: f64 = 0.05;
/// Criterion 9: geometric fit quality and sample floor.
const GEOMETRIC_TV: f64 = 0.02;
const GEOMETRIC_MIN_SAMPLES: usize = 100_000;
/// Criterion 10: Whittle vs. optimal on random paths, draw-averaged.
const HETERO_REL: f64 = 0.02;

const MASTER_SEED: u64 = DEFAULT_SEED;

fn report(n: u32, ok: bool, detail: &str) {
    let verdict = if ok { "pass" } else { "FAIL" };
    println!("criterion {n}: {verdict} - {detail}");
    assert!(ok, "criterion {n}: {detail}");
}

/// A parsed CSV grid: header names plus string cells; empty cells stay
/// empty strings.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(csv: &str) -> Table {
        let mut lines = csv
            .lines()
            .filter(|line| !line.is_empty() && !line.starts_with('#'));
        let header: Vec<String> = lines
            .next()
            .expect("csv has a header row")
            .split(',')
            .map(str::to_string)
            .collect();
        let rows: Vec<Vec<String>> = lines
            .map(|line| line.split(',').map(str::to_string).collect())
            .collect();
        Table { header, rows }
    }

    fn idx(&self, column: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == column)
            .unwrap_or_else(|| panic!("no column named {column:?}"))
    }

    fn select(&self, filters: &[(&str, &str)]) -> Vec<&Vec<String>> {
        let keys: Vec<(usize, &str)> = filters.iter().map(|(c, v)| (self.idx(c), *v)).collect();
        self.rows
            .iter()
            .filter(|row| keys.iter().all(|(i, v)| row[*i] == *v))
            .collect()
    }

    fn one(&self, filters: &[(&str, &str)]) -> &Vec<String> {
        let hits = self.select(filters);
        assert_eq!(hits.len(), 1, "expected exactly one row for {filters:?}");
        hits[0]
    }

    fn num(&self, row: &[String], column: &str) -> f64 {
        let cell = &row[self.idx(column)];
        cell.parse()
            .unwrap_or_else(|_| panic!("column {column:?} is not numeric: {cell:?}"))
    }
}

fn table_for(figure: FigureId, slot: &'static OnceLock<Table>) -> &'static Table {
    slot.get_or_init(|| {
        let csv = reproduce(figure, MASTER_SEED)
            .unwrap_or_else(|e| panic!("reproducing {figure} failed: {e}"));
        Table::parse(&csv)
    })
}

fn s1_table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    table_for(FigureId::S1, &T)
}

fn s2_table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    table_for(FigureId::S2, &T)
}

fn s3_table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    table_for(FigureId::S3, &T)
}

fn r_table(figure: FigureId) -> &'static Table {
    static R1: OnceLock<Table> = OnceLock::new();
    static R2: OnceLock<Table> = OnceLock::new();
    static R3: OnceLock<Table> = OnceLock::new();
    static R4: OnceLock<Table> = OnceLock::new();
    match figure {
        FigureId::R1 => table_for(figure, &R1),
        FigureId::R2 => table_for(figure, &R2),
        FigureId::R3 => table_for(figure, &R3),
        _ => table_for(figure, &R4),
    }
}

fn g_table() -> &'static Table {
    static T: OnceLock<Table> = OnceLock::new();
    table_for(FigureId::G, &T)
}

#[test]
fn c01_whittle_matches_optimal_on_the_traffic_grid() {
    let t = s1_table();
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for p in ["0.025", "0.05", "0.1", "0.15", "0.2"] {
        let gain = t.num(t.one(&[("p", p), ("policy", "optimal")]), "analytic");
        let sim = t.num(t.one(&[("p", p), ("policy", "whittle")]), "simulated");
        let rel = (sim - gain).abs() / gain;
        if rel > worst {
            worst = rel;
            at = format!("p={p}, whittle {sim:.4} vs optimal gain {gain:.4}");
        }
    }
    report(
        1,
        worst <= WHITTLE_VS_OPTIMAL_REL,
        &format!(
            "largest whittle-to-optimal gap {:.2}% (at {at}), allowed {:.0}%",
            worst * 100.0,
            WHITTLE_VS_OPTIMAL_REL * 100.0
        ),
    );
}

#[test]
fn c02_closed_forms_match_simulation_across_the_size_grid() {
    let t = s2_table();
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for m in ["5", "10", "20", "50", "100", "200"] {
        for policy in ["uniform", "order-2", "order-3", "weighted"] {
            let row = t.one(&[("M", m), ("policy", policy)]);
            let analytic = t.num(row, "analytic");
            let sim = t.num(row, "simulated");
            let stderr = t.num(row, "stderr");
            let tol = (CLOSED_FORM_REL * analytic).max(CLOSED_FORM_SIGMAS * stderr);
            let strain = (sim - analytic).abs() / tol;
            if strain > worst {
                worst = strain;
                at = format!("M={m} {policy}: simulated {sim:.4} vs analytic {analytic:.4}");
            }
        }
    }
    report(
        2,
        worst <= 1.0,
        &format!(
            "worst deviation used {:.0}% of its 1%-or-3-sigma allowance ({at})",
            worst * 100.0
        ),
    );
}

/// Known red. The three limits are approached at very different speeds:
/// the uniform cost is essentially flat by M=200, but the order-2 and
/// weighted closed forms still sit several percent above their long-path
/// limits there, and the simulations agree with the closed forms. The
/// check pins the limit values anyway and records the shortfall.
#[test]
fn c03_large_m_costs_sit_on_their_plateaus() {
    let t = s2_table();
    let uniform = t.num(t.one(&[("M", "200"), ("policy", "uniform")]), "simulated");
    let order2 = t.num(t.one(&[("M", "200"), ("policy", "order-2")]), "simulated");
    let weighted = t.num(t.one(&[("M", "200"), ("policy", "weighted")]), "simulated");
    let gap_u = (uniform - UNIFORM_PLATEAU).abs() / UNIFORM_PLATEAU;
    let gap_o = (order2 - ORDER2_PLATEAU).abs() / ORDER2_PLATEAU;
    let gap_w = (weighted - WEIGHTED_PLATEAU).abs() / WEIGHTED_PLATEAU;
    let ok = gap_u <= UNIFORM_PLATEAU_REL && gap_o <= ORDER2_PLATEAU_REL && gap_w <= WEIGHTED_PLATEAU_REL;
    report(
        3,
        ok,
        &format!(
            "at M=200: uniform {uniform:.2} is {:.2}% from {UNIFORM_PLATEAU} (allowed {:.0}%), \
             order-2 {order2:.2} is {:.2}% from {ORDER2_PLATEAU} (allowed {:.0}%), \
             weighted {weighted:.2} is {:.2}% from {WEIGHTED_PLATEAU} (allowed {:.0}%)",
            gap_u * 100.0,
            UNIFORM_PLATEAU_REL * 100.0,
            gap_o * 100.0,
            ORDER2_PLATEAU_REL * 100.0,
            gap_w * 100.0,
            WEIGHTED_PLATEAU_REL * 100.0
        ),
    );
}

#[test]
fn c04_whittle_reductions_at_the_largest_path() {
    let t = s2_table();
    let whittle = t.num(t.one(&[("M", "200"), ("policy", "whittle")]), "simulated");
    let vs_uniform = 1.0 - whittle / UNIFORM_PLATEAU;
    let vs_weighted = 1.0 - whittle / WEIGHTED_PLATEAU;
    let ok = (vs_uniform - REDUCTION_VS_UNIFORM).abs() <= REDUCTION_TOL
        && (vs_weighted - REDUCTION_VS_WEIGHTED).abs() <= REDUCTION_TOL;
    report(
        4,
        ok,
        &format!(
            "whittle {whittle:.2} cuts the uniform plateau {UNIFORM_PLATEAU} by {:.1}% \
             (target {:.1}% +- 2) and the weighted plateau {WEIGHTED_PLATEAU} by {:.1}% \
             (target {:.1}% +- 2)",
            vs_uniform * 100.0,
            REDUCTION_VS_UNIFORM * 100.0,
            vs_weighted * 100.0,
            REDUCTION_VS_WEIGHTED * 100.0
        ),
    );
}

fn random_config(rng: &mut ChaCha12Rng, m_max: usize, p_max: f64) -> PathConfig {
    let m = rng.random_range(1..=m_max);
    let mut phis: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..=1.0)).collect();
    phis.sort_by(f64::total_cmp);
    let ps: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..=p_max)).collect();
    PathConfig::from_parts(&phis, &ps, 10).unwrap()
}

#[test]
fn c05_weighted_cost_is_twice_the_bound_and_nothing_beats_it() {
    let mut rng = ChaCha12Rng::seed_from_u64(501);
    let mut worst_identity = 0.0_f64;
    for _ in 0..100 {
        let config = random_config(&mut rng, 12, 0.9);
        let weights = water_filling(&config).unwrap().weights().to_vec();
        let cost = cost_weighted(&config, &weights).unwrap().cost();
        let bound = lower_bound(&config).unwrap();
        let rel = (cost - 2.0 * bound).abs() / (2.0 * bound).max(f64::MIN_POSITIVE);
        worst_identity = worst_identity.max(rel);
    }
    let identity_ok = worst_identity <= IDENTITY_REL;

    let mut bound_ok = true;
    let mut bound_note = String::from("no simulated policy dipped below the bound");
    for seed in 0..8u64 {
        let config = random_config(&mut rng, 6, 0.5);
        let bound = lower_bound(&config).unwrap();
        let weights = water_filling(&config).unwrap().weights().to_vec();
        let policies = [
            PolicySpec::Uniform,
            PolicySpec::OrderStatistic { g: 2 },
            PolicySpec::Weighted { weights },
            PolicySpec::whittle(),
        ];
        for policy in policies {
            let spec =
                ScenarioSpec::new(config.clone(), policy, 80_000, 3, 5000 + seed).unwrap();
            let rep = simulate(&spec).unwrap();
            if rep.mean_cost() < bound - CLOSED_FORM_SIGMAS * rep.cost_stderr() - 1e-12 {
                bound_ok = false;
                bound_note = format!(
                    "a policy scored {:.4} under bound {bound:.4} on an M={} path",
                    rep.mean_cost(),
                    config.len()
                );
            }
        }
    }
    report(
        5,
        identity_ok && bound_ok,
        &format!(
            "identity residual max {worst_identity:.2e} over 100 paths (allowed {IDENTITY_REL:.0e}); {bound_note}"
        ),
    );
}

#[test]
fn c06_bisection_oracle_agrees_with_the_index_formula() {
    let mut rng = ChaCha12Rng::seed_from_u64(601);
    let mut worst = 0.0_f64;
    let mut at = String::new();
    for _ in 0..50 {
        let phi = rng.random_range(0.05..=0.95);
        let p = rng.random_range(0.05..=0.95);
        let n = rng.random_range(0..=8u32);
        let oracle = empirical_whittle(n, phi, p, n + 8, 1e-8).unwrap();
        let formula = whittle_index(n, phi, p);
        let err = (oracle - formula).abs() / formula.abs().max(1.0);
        if err > worst {
            worst = err;
            at = format!("n={n}, phi={phi:.3}, p={p:.3}: oracle {oracle:.6} vs formula {formula:.6}");
        }
    }
    report(
        6,
        worst <= ORACLE_TOL,
        &format!("largest oracle disagreement {worst:.2e} ({at}), allowed {ORACLE_TOL:.0e}"),
    );
}

#[test]
fn c07_decoupled_problem_is_indexable() {
    let mut rng = ChaCha12Rng::seed_from_u64(701);
    let cap = 16u32;
    let mut checked = 0usize;
    for _ in 0..20 {
        let phi = rng.random_range(0.1..=1.0);
        let p = rng.random_range(0.05..=0.9);
        let c_hi = 1.1 * whittle_index(12, phi, p);
        let mut last_threshold = 0u32;
        for k in 0..50 {
            let c = c_hi * k as f64 / 49.0;
            let solution = solve_decoupled(phi, p, c, cap, 1e-8).unwrap();
            assert!(
                solution.threshold() >= last_threshold,
                "threshold fell from {last_threshold} to {} at c={c}",
                solution.threshold()
            );
            last_threshold = solution.threshold();
            let h = solution.h();
            for n in 0..cap as usize {
                assert!(
                    h[n + 1] > h[n],
                    "relative values flat between {n} and {} at c={c}",
                    n + 1
                );
            }
            let gamma = solution.threshold() as usize;
            if gamma >= 1 && gamma < cap as usize {
                let pivot = c / (1.0 - p);
                assert!(
                    h[gamma] <= pivot + 1e-6 && pivot <= h[gamma + 1] + 1e-6,
                    "sandwich failed at c={c}: h[{gamma}]={}, c/(1-p)={pivot}, h[{}]={}",
                    h[gamma],
                    gamma + 1,
                    h[gamma + 1]
                );
                checked += 1;
            }
        }
    }
    report(
        7,
        checked > 100,
        &format!(
            "thresholds monotone and values increasing on 20 devices x 50 costs; sandwich checked at {checked} interior thresholds"
        ),
    );
}

#[test]
fn c08_second_order_shadows_whittle_under_mixed_traffic() {
    let t = s3_table();
    let mut worst = 0.0_f64;
    let mut at = String::new();
    let mut heuristic_ok = true;
    let mut heuristic_note = String::from("heuristic matched second-order exactly below the threshold and stayed within noise above");
    for k in 1..=12usize {
        let pi1 = format!("{:.2}", 0.05 * k as f64);
        let whittle_row = t.one(&[("pi1", &pi1), ("policy", "whittle")]);
        let second_row = t.one(&[("pi1", &pi1), ("policy", "second-order")]);
        let heuristic_row = t.one(&[("pi1", &pi1), ("policy", "heuristic")]);
        let whittle = t.num(whittle_row, "simulated");
        let second = t.num(second_row, "simulated");
        let rel = (second - whittle).abs() / whittle;
        if rel > worst {
            worst = rel;
            at = format!("pi1={pi1}: second-order {second:.3} vs whittle {whittle:.3}");
        }
        if k <= 5 {
            // All devices believed light: the heuristic rule is the
            // second-order rule, on identical streams, so every reported
            // figure must agree exactly.
            let sim_col = t.idx("simulated");
            let err_col = t.idx("stderr");
            if heuristic_row[sim_col] != second_row[sim_col]
                || heuristic_row[err_col] != second_row[err_col]
            {
                heuristic_ok = false;
                heuristic_note = format!(
                    "pi1={pi1}: heuristic {} differs from second-order {}",
                    heuristic_row[sim_col], second_row[sim_col]
                );
            }
        } else {
            let heuristic = t.num(heuristic_row, "simulated");
            let sigma = t
                .num(heuristic_row, "stderr")
                .hypot(t.num(second_row, "stderr"));
            if heuristic > second + sigma {
                heuristic_ok = false;
                heuristic_note = format!(
                    "pi1={pi1}: heuristic {heuristic:.3} exceeds second-order {second:.3} + sigma {sigma:.3}"
                );
            }
        }
    }
    report(
        8,
        worst <= SECOND_VS_WHITTLE_REL && heuristic_ok,
        &format!(
            "largest second-to-whittle gap {:.2}% ({at}), allowed {:.0}%; {heuristic_note}",
            worst * 100.0,
            SECOND_VS_WHITTLE_REL * 100.0
        ),
    );
}

/// Red for the two index policies, and structurally so: after a sample
/// the sampled device's counter is zero, so an argmax controller almost
/// never picks the same device in consecutive slots, and the pooled gap
/// record is short of mass at gap 1 relative to the fitted geometric by
/// roughly the busiest flow's share. The distance stays an order of
/// magnitude above the gate at every seed tried. The state-independent
/// policies mix memorylessly, give an exactly geometric union, and pass.
#[test]
fn c09_crosspoint_gaps_are_geometric_for_every_policy() {
    let t = g_table();
    let mut ok = true;
    let mut notes = Vec::new();
    for policy in ["uniform", "order-2", "whittle", "second-order"] {
        let row = t.one(&[("policy", policy)]);
        let samples = t.num(row, "samples") as usize;
        let tv = t.num(row, "tv_distance");
        let valid = &row[t.idx("valid")];
        if samples < GEOMETRIC_MIN_SAMPLES || tv >= GEOMETRIC_TV || valid != "true" {
            ok = false;
        }
        notes.push(format!("{policy}: tv {tv:.4} on {samples} gaps"));
    }
    report(
        9,
        ok,
        &format!(
            "{} (allowed tv < {GEOMETRIC_TV}, at least {GEOMETRIC_MIN_SAMPLES} gaps each)",
            notes.join("; ")
        ),
    );
}

#[test]
fn c10_index_policies_are_robust_to_heterogeneous_traffic() {
    let mut worst_hetero = 0.0_f64;
    let mut hetero_at = String::new();
    for figure in [FigureId::R1, FigureId::R2] {
        let t = r_table(figure);
        for p_bar in ["0.1", "0.2", "0.3", "0.4", "0.5"] {
            let optimal_rows = t.select(&[("p_bar", p_bar), ("policy", "optimal")]);
            let whittle_rows = t.select(&[("p_bar", p_bar), ("policy", "whittle")]);
            assert_eq!(optimal_rows.len(), 20);
            assert_eq!(whittle_rows.len(), 20);
            let optimal: f64 = optimal_rows.iter().map(|r| t.num(r, "analytic")).sum::<f64>() / 20.0;
            let whittle: f64 =
                whittle_rows.iter().map(|r| t.num(r, "simulated")).sum::<f64>() / 20.0;
            let rel = (whittle - optimal).abs() / optimal;
            if rel > worst_hetero {
                worst_hetero = rel;
                hetero_at = format!("{figure} p_bar={p_bar}: whittle {whittle:.4} vs optimal {optimal:.4}");
            }
        }
    }
    let mut worst_second = 0.0_f64;
    let mut second_at = String::new();
    for figure in [FigureId::R3, FigureId::R4] {
        let t = r_table(figure);
        for sigma in ["0.2", "0.5", "0.8"] {
            for p in ["0.05", "0.1", "0.15", "0.2", "0.25", "0.3"] {
                let whittle = t.num(
                    t.one(&[("sigma", sigma), ("p", p), ("policy", "whittle")]),
                    "simulated",
                );
                let second = t.num(
                    t.one(&[("sigma", sigma), ("p", p), ("policy", "second-order")]),
                    "simulated",
                );
                let rel = (second - whittle).abs() / whittle;
                if rel > worst_second {
                    worst_second = rel;
                    second_at = format!("{figure} sigma={sigma} p={p}: second {second:.3} vs whittle {whittle:.3}");
                }
            }
        }
    }
    report(
        10,
        worst_hetero <= HETERO_REL && worst_second <= SECOND_VS_WHITTLE_REL,
        &format!(
            "draw-averaged whittle within {:.2}% of optimal ({hetero_at}), allowed {:.0}%; \
             second-order within {:.2}% of whittle ({second_at}), allowed {:.0}%",
            worst_hetero * 100.0,
            HETERO_REL * 100.0,
            worst_second * 100.0,
            SECOND_VS_WHITTLE_REL * 100.0
        ),
    );
}

#[test]
fn c11_structural_properties_hold() {
    // Kernel rows sum to one on full enumerations up to four devices.
    for m in 2..=4usize {
        let config = PathConfig::homogeneous(m, 0.8, 0.3, 2).unwrap();
        let cap = 2u32;
        let mut counters = vec![0u32; m];
        loop {
            let state = CounterState::new(counters.clone());
            for a in 1..=m {
                let total: f64 =
                    next_state_distribution(&state, ActionId::new(a), &config, Some(cap))
                        .iter()
                        .map(|(_, prob)| prob)
                        .sum();
                assert!(
                    (total - 1.0).abs() < 1e-12,
                    "kernel row off unity at {counters:?} action {a}: {total}"
                );
            }
            let mut i = 0;
            while i < m && counters[i] == cap {
                counters[i] = 0;
                i += 1;
            }
            if i == m {
                break;
            }
            counters[i] += 1;
        }
    }

    // Sampled steps agree with the kernel in distribution.
    let config = PathConfig::from_parts(&[0.5, 0.8, 1.0], &[0.1, 0.3, 0.6], 10).unwrap();
    let state = CounterState::new(vec![2, 0, 5]);
    let action = ActionId::new(2);
    let kernel = next_state_distribution(&state, action, &config, None);
    let mut rng = ChaCha12Rng::seed_from_u64(1101);
    let draws = 200_000;
    let mut counts = vec![0u64; kernel.len()];
    for _ in 0..draws {
        let next = step(&state, action, &config, &mut rng);
        let slot = kernel
            .iter()
            .position(|(s, _)| s == &next)
            .expect("draw lands in the kernel's support");
        counts[slot] += 1;
    }
    let tv: f64 = kernel
        .iter()
        .zip(&counts)
        .map(|((_, prob), &count)| (prob - count as f64 / draws as f64).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.01, "step vs kernel total variation {tv}");

    // Index values grow with the counter.
    let mut rng = ChaCha12Rng::seed_from_u64(1102);
    for _ in 0..20 {
        let phi = rng.random_range(0.05..=1.0);
        let p = rng.random_range(0.0..=0.95);
        for kind in [IndexKind::Whittle, IndexKind::SecondOrder, IndexKind::FirstOrder] {
            let mut last = f64::NEG_INFINITY;
            for n in 0..=80 {
                let value = flowsamp::policies::device_index(kind, n, phi, p);
                assert!(
                    value > last,
                    "{kind:?} index fell from {last} at n={n} (phi={phi}, p={p})"
                );
                last = value;
            }
        }
    }

    // Scaling every accuracy by a common factor never changes the argmax,
    // except at mathematical ties, where a rounding flip between equally
    // correct devices is allowed. Every index is proportional to phi, so a
    // clear winner stays the winner under any positive scale.
    let mut rng = ChaCha12Rng::seed_from_u64(1103);
    for p in [0.2, 0.4] {
        let config = PathConfig::homogeneous(5, 0.8, p, 10).unwrap();
        for lambda in [0.9, 0.4, 0.05] {
            let scaled_phis: Vec<f64> =
                config.devices().iter().map(|d| d.phi() * lambda).collect();
            let ps = vec![p; 5];
            let scaled = PathConfig::from_parts(&scaled_phis, &ps, 10).unwrap();
            for _ in 0..200 {
                let counters: Vec<u32> = (0..5).map(|_| rng.random_range(0..40)).collect();
                let state = CounterState::new(counters.clone());
                for kind in [
                    IndexKind::Whittle,
                    IndexKind::SecondOrder,
                    IndexKind::FirstOrder,
                    IndexKind::Heuristic { threshold_p: 0.3 },
                ] {
                    let mut values: Vec<f64> = index_values(&state, &config, kind)
                        .iter()
                        .map(|v| v.value)
                        .collect();
                    values.sort_by(f64::total_cmp);
                    let best = values[4];
                    let margin = best - values[3];
                    if margin <= 1e-9 * best.abs().max(1e-300) {
                        continue;
                    }
                    assert_eq!(
                        choose_by_index(&state, &config, kind),
                        choose_by_index(&state, &scaled, kind),
                        "scaling by {lambda} moved the {kind:?} argmax at {counters:?}"
                    );
                }
            }
        }
    }

    // Identical scenarios reproduce identical reports.
    let config = PathConfig::homogeneous(4, 0.8, 0.15, 10).unwrap();
    let spec = ScenarioSpec::new(config, PolicySpec::whittle(), 40_000, 2, 1104).unwrap();
    assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());

    report(
        11,
        true,
        "kernel rows sum to one, sampling follows the kernel, indices grow with staleness, \
         argmaxes survive accuracy scaling, and reruns are identical",
    );
}

#[test]
fn closed_form_spot_checks_pin_the_grid_values() {
    // Frozen reference numbers for the cost formulas on the standard
    // geometry. These back the grid criteria with exact expectations
    // computed independently of the simulation.
    let cases: [(usize, f64, f64, f64); 4] = [
        (5, 8.6441, 9.0286, 8.3543),
        (10, 19.0270, 16.9474, 16.8818),
        (50, 37.3723, 32.6846, 21.7130),
        (200, 42.8469, 40.9571, 21.7136),
    ];
    for (m, uniform, order2, weighted) in cases {
        let config = PathConfig::homogeneous(m, 0.8, 0.1, 10).unwrap();
        assert!((cost_uniform(&config) - uniform).abs() < 5e-4);
        assert!((cost_order_statistic(&config, 2).unwrap() - order2).abs() < 5e-4);
        let weights = water_filling(&config).unwrap().weights().to_vec();
        assert!((cost_weighted(&config, &weights).unwrap().cost() - weighted).abs() < 5e-4);
    }
}
