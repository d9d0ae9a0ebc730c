//! The README's library tour, runnable: exact solution, closed forms,
//! and a Monte Carlo run on one small path.

use flowsamp::analysis::{lower_bound, water_filling};
use flowsamp::harness::{parse_scenario, simulate};
use flowsamp::model::PathConfig;
use flowsamp::solver::relative_value_iteration;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = PathConfig::homogeneous(3, 0.5, 0.2, 10)?;

    let solution = relative_value_iteration(&config, 1e-8)?;
    println!("gain {}", solution.gain());

    let optimum = water_filling(&config)?;
    println!("weights {:?}", optimum.weights());
    println!("bound {}", lower_bound(&config)?);

    let spec = parse_scenario("M = 3\nsigma = 0.5\np = 0.2\npolicy = \"whittle\"\n")?;
    let report = simulate(&spec)?;
    println!("mean {} +- {}", report.mean_cost(), report.cost_stderr());
    Ok(())
}
