//! Reference scenario grids, reproduced at desk scale and emitted as CSV.
//!
//! Each figure id names a fixed grid of scenarios. The CSV begins with a
//! `# schema=1` comment and a header row; columns carry the grid
//! coordinates, the policy, the closed-form value where one exists, and
//! the simulated mean with its standard error. Empty cells mean the
//! quantity does not exist for that row (no closed form for index
//! policies; nothing to simulate for a bound).
//!
//! Every policy evaluated at the same grid point shares one derived cell
//! seed, hence identical exogenous traffic, so within-cell comparisons
//! are paired rather than independent. The truncated-chain rows (those
//! with a `U` column and a value-iteration baseline) simulate with
//! counters clipped at `U`: the table policy's gain is the average cost
//! of the truncated chain, and clipping puts the simulated policies on
//! exactly that chain instead of a slightly costlier one.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::analysis::{
    cost_order_statistic, cost_uniform, cost_weighted, geometric_fit, lower_bound, water_filling,
};
use crate::harness::scenario::alternating_path;
use crate::harness::{
    simulate, simulate_crosspoint, streams, CrosspointSpec, HarnessError, ScenarioSpec,
    SimulationReport,
};
use crate::model::{geometric_accuracy_profile, PathConfig};
use crate::policies::{PolicySpec, DEFAULT_THRESHOLD_P};
use crate::solver::relative_value_iteration;

/// Replications per grid cell.
pub const REPRODUCE_REPLICATIONS: u32 = 20;

const RVI_EPSILON: f64 = 1e-6;

/// Identifier of one reference figure's scenario grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FigureId {
    /// Optimal vs. Whittle vs. uniform at M=3 over a homogeneous p grid.
    S1,
    /// State-independent policies vs. Whittle over the M grid.
    S2,
    /// Whittle vs. second-order vs. heuristic under alternating traffic.
    S3,
    /// Whittle vs. optimal on random heterogeneous paths, sigma = 0.1.
    R1,
    /// Whittle vs. optimal on random heterogeneous paths, sigma = 0.8.
    R2,
    /// Second-order vs. Whittle over (sigma, p) at M=5.
    R3,
    /// Second-order vs. Whittle over (sigma, p) at M=40.
    R4,
    /// Crosspoint inter-sampling geometry under four policies.
    G,
}

impl FigureId {
    /// All figure ids, in presentation order.
    pub const ALL: [FigureId; 8] = [
        FigureId::S1,
        FigureId::S2,
        FigureId::S3,
        FigureId::R1,
        FigureId::R2,
        FigureId::R3,
        FigureId::R4,
        FigureId::G,
    ];

    fn ordinal(self) -> u64 {
        match self {
            FigureId::S1 => 1,
            FigureId::S2 => 2,
            FigureId::S3 => 3,
            FigureId::R1 => 4,
            FigureId::R2 => 5,
            FigureId::R3 => 6,
            FigureId::R4 => 7,
            FigureId::G => 8,
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            FigureId::S1 => "S1",
            FigureId::S2 => "S2",
            FigureId::S3 => "S3",
            FigureId::R1 => "R1",
            FigureId::R2 => "R2",
            FigureId::R3 => "R3",
            FigureId::R4 => "R4",
            FigureId::G => "G",
        };
        f.write_str(name)
    }
}

impl FromStr for FigureId {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(FigureId::S1),
            "S2" => Ok(FigureId::S2),
            "S3" => Ok(FigureId::S3),
            "R1" => Ok(FigureId::R1),
            "R2" => Ok(FigureId::R2),
            "R3" => Ok(FigureId::R3),
            "R4" => Ok(FigureId::R4),
            "G" => Ok(FigureId::G),
            _ => Err(HarnessError::UnknownFigure(s.to_string())),
        }
    }
}

/// Seed shared by every policy row of one grid cell.
fn cell_seed(master: u64, figure: FigureId, cell: u64) -> u64 {
    streams::derive_seed(master, &[streams::TAG_CELL, figure.ordinal(), cell])
}

fn run_cell(
    config: &PathConfig,
    policy: PolicySpec,
    horizon: u64,
    seed: u64,
    clip: Option<u32>,
) -> Result<SimulationReport, HarnessError> {
    let mut spec = ScenarioSpec::new(
        config.clone(),
        policy,
        horizon,
        REPRODUCE_REPLICATIONS,
        seed,
    )?;
    if let Some(cap) = clip {
        spec = spec.with_counter_clip(cap);
    }
    simulate(&spec)
}

fn push_value(row: &mut String, value: Option<f64>) {
    if let Some(v) = value {
        row.push_str(&format!("{v:.6}"));
    }
}

/// One CSV data row: the prefix columns, then analytic, simulated, stderr.
fn data_row(prefix: &str, analytic: Option<f64>, report: Option<&SimulationReport>) -> String {
    let mut row = String::from(prefix);
    row.push(',');
    push_value(&mut row, analytic);
    row.push(',');
    push_value(&mut row, report.map(|r| r.mean_cost()));
    row.push(',');
    push_value(&mut row, report.map(|r| r.cost_stderr()));
    row.push('\n');
    row
}

fn collect_rows<F>(cells: usize, per_cell: F) -> Result<String, HarnessError>
where
    F: Fn(usize) -> Result<String, HarnessError> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let blocks: Result<Vec<String>, HarnessError> =
        (0..cells).into_par_iter().map(per_cell).collect();
    #[cfg(not(feature = "parallel"))]
    let blocks: Result<Vec<String>, HarnessError> = (0..cells).map(per_cell).collect();
    Ok(blocks?.concat())
}

fn figure_s1(master: u64) -> Result<String, HarnessError> {
    const PS: [f64; 5] = [0.025, 0.05, 0.1, 0.15, 0.2];
    const M: usize = 3;
    const SIGMA: f64 = 0.8;
    const CAP: u32 = 10;
    const HORIZON: u64 = 500_000;
    let mut out = String::from("# schema=1\nM,sigma,p,U,policy,analytic,simulated,stderr\n");
    let rows = collect_rows(PS.len(), |ci| {
        let p = PS[ci];
        let seed = cell_seed(master, FigureId::S1, ci as u64);
        let config = PathConfig::homogeneous(M, SIGMA, p, CAP)?;
        let solution = Arc::new(relative_value_iteration(&config, RVI_EPSILON)?);
        let gain = solution.gain();
        let prefix = |policy: &str| format!("{M},{SIGMA},{p},{CAP},{policy}");
        let mut block = String::new();
        let optimal = run_cell(
            &config,
            PolicySpec::Table {
                solution: Arc::clone(&solution),
            },
            HORIZON,
            seed,
            Some(CAP),
        )?;
        block.push_str(&data_row(&prefix("optimal"), Some(gain), Some(&optimal)));
        let whittle = run_cell(&config, PolicySpec::whittle(), HORIZON, seed, Some(CAP))?;
        block.push_str(&data_row(&prefix("whittle"), None, Some(&whittle)));
        let uniform = run_cell(&config, PolicySpec::Uniform, HORIZON, seed, None)?;
        block.push_str(&data_row(
            &prefix("uniform"),
            Some(cost_uniform(&config)),
            Some(&uniform),
        ));
        block.push_str(&data_row(
            &prefix("bound"),
            Some(lower_bound(&config)?),
            None,
        ));
        Ok(block)
    })?;
    out.push_str(&rows);
    Ok(out)
}

fn figure_s2(master: u64) -> Result<String, HarnessError> {
    const MS: [usize; 6] = [5, 10, 20, 50, 100, 200];
    const SIGMA: f64 = 0.8;
    const P: f64 = 0.1;
    let mut out = String::from("# schema=1\nM,sigma,p,policy,analytic,simulated,stderr\n");
    let rows = collect_rows(MS.len(), |ci| {
        let m = MS[ci];
        let horizon: u64 = if m >= 100 { 500_000 } else { 250_000 };
        let seed = cell_seed(master, FigureId::S2, ci as u64);
        let config = PathConfig::homogeneous(m, SIGMA, P, 10)?;
        let weights = water_filling(&config)?.weights().to_vec();
        let prefix = |policy: &str| format!("{m},{SIGMA},{P},{policy}");
        let mut block = String::new();
        let named: [(&str, PolicySpec, Option<f64>); 5] = [
            ("uniform", PolicySpec::Uniform, Some(cost_uniform(&config))),
            (
                "order-2",
                PolicySpec::OrderStatistic { g: 2 },
                Some(cost_order_statistic(&config, 2)?),
            ),
            (
                "order-3",
                PolicySpec::OrderStatistic { g: 3 },
                Some(cost_order_statistic(&config, 3)?),
            ),
            (
                "weighted",
                PolicySpec::Weighted {
                    weights: weights.clone(),
                },
                Some(cost_weighted(&config, &weights)?.cost()),
            ),
            ("whittle", PolicySpec::whittle(), None),
        ];
        for (name, policy, analytic) in named {
            let report = run_cell(&config, policy, horizon, seed, None)?;
            block.push_str(&data_row(&prefix(name), analytic, Some(&report)));
        }
        block.push_str(&data_row(
            &prefix("bound"),
            Some(lower_bound(&config)?),
            None,
        ));
        Ok(block)
    })?;
    out.push_str(&rows);
    Ok(out)
}

fn figure_s3(master: u64) -> Result<String, HarnessError> {
    const M: usize = 40;
    const SIGMA: f64 = 0.8;
    const PI0: f64 = 0.01;
    const HORIZON: u64 = 250_000;
    let mut out = String::from("# schema=1\nM,sigma,pi0,pi1,policy,simulated,stderr\n");
    let rows = collect_rows(12, |ci| {
        let pi1 = 0.05 * (ci + 1) as f64;
        let seed = cell_seed(master, FigureId::S3, ci as u64);
        let config = alternating_path(M, SIGMA, PI0, pi1, 10)?;
        let mut block = String::new();
        let named: [(&str, PolicySpec); 3] = [
            ("whittle", PolicySpec::whittle()),
            ("second-order", PolicySpec::second_order()),
            ("heuristic", PolicySpec::heuristic(DEFAULT_THRESHOLD_P)),
        ];
        for (name, policy) in named {
            let report = run_cell(&config, policy, HORIZON, seed, None)?;
            block.push_str(&format!(
                "{M},{SIGMA},{PI0},{pi1:.2},{name},{:.6},{:.6}\n",
                report.mean_cost(),
                report.cost_stderr()
            ));
        }
        Ok(block)
    })?;
    out.push_str(&rows);
    Ok(out)
}

fn figure_r_heterogeneous(master: u64, figure: FigureId) -> Result<String, HarnessError> {
    const PBARS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
    const DRAWS: u64 = 20;
    const M: usize = 3;
    const CAP: u32 = 10;
    const HORIZON: u64 = 150_000;
    let sigma = match figure {
        FigureId::R1 => 0.1,
        _ => 0.8,
    };
    let mut out = String::from(
        "# schema=1\nM,sigma,p_bar,draw,p1,p2,p3,U,policy,analytic,simulated,stderr\n",
    );
    let cells = PBARS.len() * DRAWS as usize;
    let rows = collect_rows(cells, |ci| {
        let p_bar = PBARS[ci / DRAWS as usize];
        let draw = (ci as u64) % DRAWS;
        let seed = cell_seed(master, figure, ci as u64);
        let mut config_rng = streams::stream(seed, streams::TAG_CONFIG, 0, 0, 0);
        let ps: Vec<f64> = (0..M)
            .map(|_| p_bar * (1.0 - config_rng.random::<f64>()))
            .collect();
        let phis = geometric_accuracy_profile(M, sigma)?;
        let config = PathConfig::from_parts(&phis, &ps, CAP)?;
        let solution = Arc::new(relative_value_iteration(&config, RVI_EPSILON)?);
        let gain = solution.gain();
        let prefix = |policy: &str| {
            format!(
                "{M},{sigma},{p_bar},{draw},{:.6},{:.6},{:.6},{CAP},{policy}",
                ps[0], ps[1], ps[2]
            )
        };
        let mut block = String::new();
        let optimal = run_cell(
            &config,
            PolicySpec::Table {
                solution: Arc::clone(&solution),
            },
            HORIZON,
            seed,
            Some(CAP),
        )?;
        block.push_str(&data_row(&prefix("optimal"), Some(gain), Some(&optimal)));
        let whittle = run_cell(&config, PolicySpec::whittle(), HORIZON, seed, Some(CAP))?;
        block.push_str(&data_row(&prefix("whittle"), None, Some(&whittle)));
        Ok(block)
    })?;
    out.push_str(&rows);
    Ok(out)
}

fn figure_r_homogeneous(master: u64, figure: FigureId) -> Result<String, HarnessError> {
    const SIGMAS: [f64; 3] = [0.2, 0.5, 0.8];
    const PS: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3];
    const HORIZON: u64 = 200_000;
    let m = match figure {
        FigureId::R3 => 5,
        _ => 40,
    };
    let mut out = String::from("# schema=1\nM,sigma,p,policy,simulated,stderr\n");
    let cells = SIGMAS.len() * PS.len();
    let rows = collect_rows(cells, |ci| {
        let sigma = SIGMAS[ci / PS.len()];
        let p = PS[ci % PS.len()];
        let seed = cell_seed(master, figure, ci as u64);
        let config = PathConfig::homogeneous(m, sigma, p, 10)?;
        let mut block = String::new();
        let named: [(&str, PolicySpec); 2] = [
            ("whittle", PolicySpec::whittle()),
            ("second-order", PolicySpec::second_order()),
        ];
        for (name, policy) in named {
            let report = run_cell(&config, policy, HORIZON, seed, None)?;
            block.push_str(&format!(
                "{m},{sigma},{p},{name},{:.6},{:.6}\n",
                report.mean_cost(),
                report.cost_stderr()
            ));
        }
        Ok(block)
    })?;
    out.push_str(&rows);
    Ok(out)
}

fn figure_g(master: u64) -> Result<String, HarnessError> {
    const FLOWS: usize = 20;
    const RANGE: (usize, usize) = (3, 200);
    const HORIZON: u64 = 1_000_000;
    let seed = cell_seed(master, FigureId::G, 0);
    let mut out = String::from(
        "# schema=1\npolicy,flows,length_lo,length_hi,horizon,samples,p_hat,p_hat_ml,tv_distance,valid\n",
    );
    let named: [(&str, PolicySpec); 4] = [
        ("uniform", PolicySpec::Uniform),
        ("order-2", PolicySpec::OrderStatistic { g: 2 }),
        ("whittle", PolicySpec::whittle()),
        ("second-order", PolicySpec::second_order()),
    ];
    #[cfg(feature = "parallel")]
    let fits: Result<Vec<String>, HarnessError> = named
        .par_iter()
        .map(|(name, policy)| g_row(name, policy, seed))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let fits: Result<Vec<String>, HarnessError> = named
        .iter()
        .map(|(name, policy)| g_row(name, policy, seed))
        .collect();
    for row in fits? {
        out.push_str(&row);
    }
    return Ok(out);

    fn g_row(name: &str, policy: &PolicySpec, seed: u64) -> Result<String, HarnessError> {
        let spec = CrosspointSpec::new(FLOWS, RANGE, policy.clone(), HORIZON, seed)?;
        let gaps = simulate_crosspoint(&spec)?;
        let fit = geometric_fit(&gaps)?;
        Ok(format!(
            "{name},{FLOWS},{},{},{HORIZON},{},{:.6},{:.6},{:.6},{}\n",
            RANGE.0,
            RANGE.1,
            fit.sample_count(),
            fit.p_hat(),
            fit.p_hat_ml(),
            fit.tv_distance(),
            fit.is_valid()
        ))
    }
}

/// Reruns the named figure's grid and returns its CSV table.
///
/// Deterministic in `(figure, seed)`; every cell derives its own seed, so
/// adding or removing grid points leaves other cells' numbers unchanged.
pub fn reproduce(figure: FigureId, seed: u64) -> Result<String, HarnessError> {
    match figure {
        FigureId::S1 => figure_s1(seed),
        FigureId::S2 => figure_s2(seed),
        FigureId::S3 => figure_s3(seed),
        FigureId::R1 | FigureId::R2 => figure_r_heterogeneous(seed, figure),
        FigureId::R3 | FigureId::R4 => figure_r_homogeneous(seed, figure),
        FigureId::G => figure_g(seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ids_round_trip_through_strings() {
        for id in FigureId::ALL {
            assert_eq!(id.to_string().parse::<FigureId>().unwrap(), id);
            assert_eq!(
                id.to_string().to_lowercase().parse::<FigureId>().unwrap(),
                id
            );
        }
        assert!(matches!(
            "S9".parse::<FigureId>(),
            Err(HarnessError::UnknownFigure(_))
        ));
    }

    #[test]
    fn cell_seeds_separate_figures_and_cells() {
        let mut seen = std::collections::HashSet::new();
        for figure in FigureId::ALL {
            for cell in 0..50 {
                assert!(seen.insert(cell_seed(42, figure, cell)));
            }
        }
    }

    #[test]
    fn data_rows_leave_absent_values_empty() {
        assert_eq!(data_row("3,0.8,x", None, None), "3,0.8,x,,,\n");
        let row = data_row("3,0.8,x", Some(1.25), None);
        assert_eq!(row, "3,0.8,x,1.250000,,\n");
    }
}
