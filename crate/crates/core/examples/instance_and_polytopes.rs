//! Samples a random screening game and prints the risk polytope of a few
//! categories together with its Chebyshev anchor.

use tsg::baseline::solve_static_lp;
use tsg::env::FlightSchedule;
use tsg::game::{build_polytope, sample_instance, validate_instance, InstanceConfig};
use tsg::harness::expected_counts;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schedule = FlightSchedule::bundled();
    let cfg = InstanceConfig { departures: Some(schedule.departures()), ..InstanceConfig::default() };
    let inst = sample_instance(&cfg, 11)?;
    assert!(validate_instance(&inst).is_valid());
    println!(
        "{} risk levels x {} flights = {} categories, {} teams over {} resources",
        inst.num_risk_levels(),
        inst.num_flights(),
        inst.num_categories(),
        inst.num_teams(),
        inst.num_resources()
    );
    for (t, team) in inst.teams.iter().enumerate() {
        let eff: Vec<String> = team.efficacy.iter().map(|e| format!("{e:.2}")).collect();
        println!("  team {t}: resources {:?}, efficacy [{}]", team.resources, eff.join(", "));
    }

    // Thresholds from the static LP make the polytopes non-trivial.
    let sol = solve_static_lp(&inst, &expected_counts(&inst, &schedule), f64::INFINITY)?;
    let inst = sol.constrain(&inst, 1.0);
    println!("psi* = {:?}", sol.psi.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>());

    for c in inst.categories().step_by(17).take(3) {
        let poly = build_polytope(&inst, c)?;
        let anchor: Vec<String> = poly.anchor().iter().map(|a| format!("{a:.3}")).collect();
        println!("{c}: {} rows, radius {:.4}, anchor [{}]", poly.num_rows(), poly.chebyshev_radius(), anchor.join(", "));
    }
    Ok(())
}
