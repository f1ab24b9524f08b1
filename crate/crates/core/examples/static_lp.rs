//! Solves the static maximin LP with and without binding capacity.

use tsg::baseline::solve_static_lp;
use tsg::env::FlightSchedule;
use tsg::game::{sample_instance, InstanceConfig};
use tsg::harness::expected_counts;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = FlightSchedule::bundled();
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 3)?;
    let counts = expected_counts(&inst, &schedule);

    for window in [f64::INFINITY, 1440.0, 720.0, 480.0, 360.0] {
        match solve_static_lp(&inst, &counts, window) {
            Ok(sol) => {
                let psi: f64 = sol.psi.iter().sum();
                println!("W = {window:>6}: objective {:+.4}, sum psi* {:.4}", sol.objective, psi);
            }
            Err(e) => println!("W = {window:>6}: {e}"),
        }
    }

    let sol = solve_static_lp(&inst, &counts, 1440.0)?;
    println!("mixture of category 0: {:?}", sol.mixtures[0].iter().map(|p| (p * 1e3).round() / 1e3).collect::<Vec<_>>());
    Ok(())
}
