//! Command-line front end. Exit status: 0 on success, 2 on configuration
//! errors, 3 when the instance admits no feasible allocation.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audit::RiskAudit;
use crate::baseline::StaticPolicy;
use crate::env::{run_episode, FlightSchedule, QueueMode, DEFAULT_PASSENGERS, DEFAULT_SIGMA_MIN, DAY_LENGTH_MIN};
use crate::game::{sample_instance, validate_instance, GameInstance, InstanceConfig};
use crate::harness::{
    compare_policies, evaluate_policies, matched_setup, pareto_sweep, summary_row, sweep_flights, sweep_variance, write_csv,
    write_frontier_csv, HarnessError, SuiteConfig,
};
use crate::rl::{train, Checkpoint, TrainConfig};
use crate::rng::{child_seed, derive_seed, Stream};

#[derive(Debug, Parser)]
#[command(name = "tsg-cli", version, about = "Risk-bounded online screening: instances, LP baseline, training and sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Marginal,
    Sampled,
}

impl From<Mode> for QueueMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Marginal => QueueMode::Marginal,
            Mode::Sampled => QueueMode::Sampled,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Instance JSON; sampled from --seed when absent.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Schedule CSV; derived from the instance's departures when absent.
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Output directory (a file path for gen-instance).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluation traces per policy.
    #[arg(long, default_value_t = 20)]
    pub traces: usize,
    /// Training steps per policy.
    #[arg(long, default_value_t = 10_000)]
    pub steps: u64,
    /// Independent training runs per policy; the best on validation traces is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, value_enum, default_value_t = Mode::Marginal)]
    pub mode: Mode,
    /// Capacity window of the static LP, in minutes.
    #[arg(long, default_value_t = DAY_LENGTH_MIN)]
    pub window: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a random instance.
    GenInstance {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        flights: Option<usize>,
    },
    /// Solve the static LP and print the solution with its risk levels.
    SolveLp {
        #[command(flatten)]
        common: Common,
    },
    /// Train a policy under the LP's risk levels (times --psi-scale).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        psi_scale: f64,
    },
    /// Compare a trained checkpoint with the LP policy on common traces.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        psi_scale: f64,
    },
    /// Train one policy per risk scale and write the delay/risk frontier.
    Pareto {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,1.25,1.5,2,3")]
        scales: Vec<f64>,
    },
    /// Delay ratio against the arrival spread 2σ (minutes).
    SweepVariance {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "30,60,180,300")]
        two_sigma: Vec<f64>,
        /// Random instances averaged per grid point (ignored with --instance).
        #[arg(long, default_value_t = 1)]
        instances: usize,
    },
    /// Convergence steps and training time against the number of flights.
    SweepFlights {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20")]
        flights: Vec<usize>,
    },
    /// Replay a checkpoint and re-check every risk constraint.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        psi_scale: f64,
    },
    /// Multi-instance LP-versus-online comparison.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        instances: usize,
        /// Thirty instances of a hundred traces each.
        #[arg(long)]
        full: bool,
    },
}

fn read(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn out_dir(common: &Common) -> Result<PathBuf, HarnessError> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn bundled_config(schedule: &FlightSchedule) -> InstanceConfig {
    InstanceConfig { num_flights: schedule.num_flights(), departures: Some(schedule.departures()), ..InstanceConfig::default() }
}

/// Instance and schedule from the flags, filling in whichever is missing.
fn load(common: &Common) -> Result<(GameInstance, FlightSchedule), HarnessError> {
    let schedule = match &common.schedule {
        Some(p) => Some(FlightSchedule::from_csv_str(&read(p)?).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let inst = match &common.instance {
        Some(p) => {
            let inst = GameInstance::from_json(&read(p)?).map_err(|e| HarnessError::Config(format!("{}: {e}", p.display())))?;
            let report = validate_instance(&inst);
            if !report.is_valid() {
                return Err(HarnessError::Config(format!("{}: {report}", p.display())));
            }
            inst
        }
        None => {
            let sched = schedule.clone().unwrap_or_else(FlightSchedule::bundled);
            sample_instance(&bundled_config(&sched), common.seed)?
        }
    };
    let schedule = match schedule {
        Some(s) => s,
        None => {
            let deps: Vec<f64> = inst.flights.iter().map(|f| f.departure_min).collect();
            FlightSchedule::from_departures(&deps, DEFAULT_PASSENGERS, DEFAULT_SIGMA_MIN)?
        }
    };
    Ok((inst, schedule))
}

fn train_config(common: &Common) -> TrainConfig {
    TrainConfig { total_steps: common.steps, restarts: common.restarts, seed: common.seed, mode: common.mode.into(), ..TrainConfig::default() }
}

pub fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::GenInstance { common, flights } => {
            let schedule = match &common.schedule {
                Some(p) => FlightSchedule::from_csv_str(&read(p)?).map_err(|e| HarnessError::Config(e.to_string()))?,
                None => FlightSchedule::bundled(),
            };
            let cfg = match flights {
                Some(k) if k != schedule.num_flights() => InstanceConfig { num_flights: k, departures: None, ..InstanceConfig::default() },
                _ => bundled_config(&schedule),
            };
            let json = sample_instance(&cfg, common.seed)?.to_json();
            match &common.out {
                Some(p) => {
                    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", p.display()));
                    if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(parent).map_err(io)?;
                    }
                    fs::write(p, json + "\n").map_err(io)?;
                }
                None => println!("{json}"),
            }
        }
        Command::SolveLp { common } => {
            let (inst, schedule) = load(&common)?;
            let setup = matched_setup(&inst, &schedule, common.window, 1.0)?;
            let json = setup.solution.to_json();
            match &common.out {
                Some(_) => {
                    let dir = out_dir(&common)?;
                    let path = dir.join("solution.json");
                    fs::write(&path, json + "\n").map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
                }
                None => println!("{json}"),
            }
            eprintln!("objective {:.6}; relaxed psi {:?}", setup.solution.objective, setup.solution.relaxed_psi());
        }
        Command::Train { common, psi_scale } => {
            let (inst, schedule) = load(&common)?;
            let setup = matched_setup(&inst, &schedule, common.window, psi_scale)?;
            let outcome = train(&setup.scenario, &train_config(&common))?;
            let summary = outcome.audit.summary(&setup.scenario.game);
            let dir = out_dir(&common)?;
            Checkpoint::new(&setup.scenario, &outcome.policy).save(&dir.join("checkpoint.json"))?;
            write_csv(&dir.join("curve.csv"), &outcome.curve.rows)?;
            eprintln!(
                "trained {} steps over {} episodes; max violation {:e}; realized bound {:.6} (limit {:.6})",
                outcome.steps, outcome.episodes, summary.max_violation, summary.realized_bound, summary.risk_bound
            );
            if summary.max_violation > crate::env::AUDIT_TOLERANCE {
                return Err(HarnessError::Audit { violation: summary.max_violation, steps: summary.steps });
            }
        }
        Command::Evaluate { common, checkpoint, psi_scale } => {
            let (inst, schedule) = load(&common)?;
            let setup = matched_setup(&inst, &schedule, common.window, psi_scale)?;
            let mut policy = Checkpoint::load(&checkpoint)?.policy(&setup.scenario)?;
            let traces = setup.scenario.sample_traces(common.traces, derive_seed(common.seed, Stream::Eval));
            let mut lp = StaticPolicy::new(&setup.solution);
            let report = compare_policies("inst00", common.seed, &setup.scenario, &mut lp, &mut policy, &traces, common.mode.into())?;
            let rows = vec![report.clone(), summary_row(std::slice::from_ref(&report), common.seed)];
            write_csv(&out_dir(&common)?.join("eval.csv"), &rows)?;
            eprintln!("delay LP {:.4} online {:.4} ratio {:.4}", report.avg_delay_lp, report.avg_delay_rl, report.delay_ratio);
        }
        Command::Pareto { common, scales } => {
            let (inst, schedule) = load(&common)?;
            let dir = out_dir(&common)?;
            let mut sweep =
                pareto_sweep(&inst, &schedule, &scales, common.window, &train_config(&common), common.traces, common.mode.into(), common.seed)?;
            for (scale, reason) in &sweep.skipped {
                eprintln!("scale {scale}: skipped ({reason})");
            }
            for (i, (point, policy)) in sweep.points.iter_mut().zip(&sweep.policies).enumerate() {
                let setup = matched_setup(&inst, &schedule, common.window, point.psi_scale)?;
                let name = format!("frontier_{i:02}.json");
                Checkpoint::new(&setup.scenario, policy).save(&dir.join(&name))?;
                point.checkpoint = Some(name);
            }
            write_frontier_csv(&dir.join("frontier.csv"), &sweep.points)?;
        }
        Command::SweepVariance { common, two_sigma, instances } => {
            let (inst, schedule) = load(&common)?;
            let pool = if common.instance.is_some() {
                vec![inst]
            } else {
                (0..instances.max(1))
                    .map(|i| sample_instance(&bundled_config(&schedule), child_seed(common.seed, i as u64)))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let rows = sweep_variance(&pool, &schedule, &two_sigma, common.window, &train_config(&common), common.traces, common.mode.into(), common.seed)?;
            write_csv(&out_dir(&common)?.join("variance.csv"), &rows)?;
        }
        Command::SweepFlights { common, flights } => {
            let rows = sweep_flights(
                &flights,
                &InstanceConfig::default(),
                DEFAULT_PASSENGERS,
                DEFAULT_SIGMA_MIN,
                common.window,
                &train_config(&common),
                common.seed,
            )?;
            write_csv(&out_dir(&common)?.join("flights.csv"), &rows)?;
        }
        Command::Audit { common, checkpoint, psi_scale } => {
            let (inst, schedule) = load(&common)?;
            let setup = matched_setup(&inst, &schedule, common.window, psi_scale)?;
            let mut policy = Checkpoint::load(&checkpoint)?.policy(&setup.scenario)?;
            let traces = setup.scenario.sample_traces(common.traces, derive_seed(common.seed, Stream::Eval));
            #[derive(serde::Serialize)]
            struct Row {
                trace: usize,
                steps: u64,
                max_violation: f64,
                realized_bound: f64,
                risk_bound: f64,
            }
            let mut rows = Vec::new();
            let mut total = RiskAudit::new(&setup.scenario.game);
            for (i, trace) in traces.iter().enumerate() {
                let log = run_episode(&setup.scenario, trace, common.mode.into(), child_seed(common.seed, i as u64), &mut policy)?;
                let mut audit = RiskAudit::new(&setup.scenario.game);
                log.actions.iter().for_each(|(c, a)| audit.record(&setup.scenario.game, *c, a));
                let s = audit.summary(&setup.scenario.game);
                rows.push(Row { trace: i, steps: s.steps, max_violation: s.max_violation, realized_bound: s.realized_bound, risk_bound: s.risk_bound });
                total.merge(&audit);
            }
            write_csv(&out_dir(&common)?.join("audit.csv"), &rows)?;
            let s = total.summary(&setup.scenario.game);
            eprintln!("{} steps; max violation {:e}; realized bound {:.6} (limit {:.6})", s.steps, s.max_violation, s.realized_bound, s.risk_bound);
            if s.max_violation > crate::env::AUDIT_TOLERANCE {
                return Err(HarnessError::Audit { violation: s.max_violation, steps: s.steps });
            }
        }
        Command::Compare { common, instances, full } => {
            let schedule = match &common.schedule {
                Some(p) => FlightSchedule::from_csv_str(&read(p)?).map_err(|e| HarnessError::Config(e.to_string()))?,
                None => FlightSchedule::bundled(),
            };
            let mut cfg = SuiteConfig::new(schedule, train_config(&common), common.seed);
            cfg.window_min = common.window;
            cfg.mode = common.mode.into();
            (cfg.instances, cfg.traces) = if full { (30, 100) } else { (instances, common.traces) };
            let rows = evaluate_policies(&cfg)?;
            write_csv(&out_dir(&common)?.join("eval.csv"), &rows)?;
            if let Some(s) = rows.last() {
                eprintln!("mean delay LP {:.4} online {:.4} ratio {:.4}", s.avg_delay_lp, s.avg_delay_rl, s.delay_ratio);
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs, and maps the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
