//! Matched-risk comparison of the static LP against the learned policy on a
//! small suite of random instances.
//!
//! `cargo run --release --example static_vs_adaptive -- [instances] [steps]`

use tsg::env::FlightSchedule;
use tsg::harness::{evaluate_policies, SuiteConfig};
use tsg::rl::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let instances: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(2);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(3_000);
    let train = TrainConfig { total_steps: steps, ..TrainConfig::default() };
    let mut cfg = SuiteConfig::new(FlightSchedule::bundled().with_sigma(30.0), train, 2024);
    cfg.instances = instances;
    cfg.traces = 10;

    for r in evaluate_policies(&cfg)? {
        println!(
            "{:<8} LP {:>7.2}  RL {:>7.2}  ratio {:.3}  risk {:+.4} (realised {:+.4})",
            r.instance_id, r.avg_delay_lp, r.avg_delay_rl, r.delay_ratio, r.risk_bound, r.realized_bound
        );
    }
    Ok(())
}
