//! Experiment orchestration: matched-risk comparisons, the risk/delay
//! frontier, the arrival-variance and flight-count sweeps, and CSV output.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditSummary, RiskAudit};
use crate::baseline::{solve_static_lp, BaselineError, StaticPolicy, StaticSolution};
use crate::env::{run_episode, ArrivalTrace, EnvError, FlightSchedule, Policy, QueueMode, Scenario, AUDIT_TOLERANCE};
use crate::game::{sample_instance, GameError, GameInstance, InstanceConfig};
use crate::rl::{train, ActorPolicy, RlError, TrainConfig, TrainingCurve};
use crate::rng::{child_seed, derive_seed, Stream};
use crate::stats;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("risk audit failed: max violation {violation:e} over {steps} steps")]
    Audit { violation: f64, steps: u64 },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Rl(RlError),
    #[error(transparent)]
    Env(EnvError),
}

impl HarnessError {
    /// 2 for configuration problems, 3 for infeasible instances, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Infeasible(_) => 3,
            HarnessError::Rl(RlError::Config(_)) | HarnessError::Rl(RlError::Checkpoint(_)) => 2,
            HarnessError::Rl(RlError::Env(e)) | HarnessError::Env(e) => env_exit_code(e),
            _ => 1,
        }
    }
}

fn env_exit_code(e: &EnvError) -> i32 {
    match e {
        EnvError::Game(GameError::InfeasibleRisk { .. }) => 3,
        EnvError::Game(_) | EnvError::Schedule(_) | EnvError::Mismatch(_) => 2,
        _ => 1,
    }
}

impl From<GameError> for HarnessError {
    fn from(e: GameError) -> Self {
        match e {
            GameError::InfeasibleRisk { .. } => HarnessError::Infeasible(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<BaselineError> for HarnessError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Infeasible => HarnessError::Infeasible(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Game(g) => g.into(),
            other => HarnessError::Env(other),
        }
    }
}

impl From<RlError> for HarnessError {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Env(env) => env.into(),
            other => HarnessError::Rl(other),
        }
    }
}

/// Expected passengers per category under `schedule`.
pub fn expected_counts(inst: &GameInstance, schedule: &FlightSchedule) -> Vec<f64> {
    inst.categories()
        .map(|c| schedule.flights[c.kappa].passengers as f64 * inst.risk_levels[c.theta].prior)
        .collect()
}

/// An instance whose thresholds come from its own static LP.
#[derive(Debug, Clone)]
pub struct MatchedSetup {
    pub solution: StaticSolution,
    /// Thresholds set to `scale × ψ*` (after the interior relaxation).
    pub scenario: Scenario,
    pub psi_scale: f64,
}

pub fn matched_setup(inst: &GameInstance, schedule: &FlightSchedule, window: f64, psi_scale: f64) -> Result<MatchedSetup, HarnessError> {
    if inst.num_flights() != schedule.num_flights() {
        return Err(HarnessError::Config(format!(
            "instance has {} flights but the schedule has {}",
            inst.num_flights(),
            schedule.num_flights()
        )));
    }
    let solution = solve_static_lp(inst, &expected_counts(inst, schedule), window)?;
    let scenario = Scenario::new(solution.constrain(inst, psi_scale), schedule.clone())?;
    Ok(MatchedSetup { solution, scenario, psi_scale })
}

/// Mean per-passenger delay of `policy` over `traces`; every action is
/// recorded in `audit`.
pub fn policy_delay<P: Policy + ?Sized>(
    scenario: &Scenario,
    policy: &mut P,
    traces: &[ArrivalTrace],
    mode: QueueMode,
    seed: u64,
    audit: &mut RiskAudit,
) -> Result<f64, HarnessError> {
    if traces.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, trace) in traces.iter().enumerate() {
        let log = run_episode(scenario, trace, mode, child_seed(seed, i as u64), policy)?;
        log.actions.iter().for_each(|(c, a)| audit.record(&scenario.game, *c, a));
        total += log.avg_delay();
    }
    Ok(total / traces.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instance_id: String,
    pub seed: u64,
    pub avg_delay_lp: f64,
    pub avg_delay_rl: f64,
    /// LP over online; above 1 means the online policy waits less.
    pub delay_ratio: f64,
    /// `−Σ_θ ψ_θ` for the enforced thresholds.
    pub risk_bound: f64,
    pub realized_bound: f64,
    pub max_violation: f64,
    pub traces: usize,
}

pub fn delay_ratio(lp: f64, rl: f64) -> f64 {
    if rl > 0.0 {
        lp / rl
    } else if lp > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// Plays both policies on the same traces and audits the online one.
pub fn compare_policies<L: Policy + ?Sized, R: Policy + ?Sized>(
    instance_id: &str,
    seed: u64,
    scenario: &Scenario,
    lp: &mut L,
    rl: &mut R,
    traces: &[ArrivalTrace],
    mode: QueueMode,
) -> Result<EvalReport, HarnessError> {
    let mut lp_audit = RiskAudit::new(&scenario.game);
    let mut audit = RiskAudit::new(&scenario.game);
    let avg_delay_lp = policy_delay(scenario, lp, traces, mode, seed, &mut lp_audit)?;
    let avg_delay_rl = policy_delay(scenario, rl, traces, mode, seed, &mut audit)?;
    let summary = audit.summary(&scenario.game);
    if !(summary.max_violation <= AUDIT_TOLERANCE) {
        return Err(HarnessError::Audit { violation: summary.max_violation, steps: summary.steps });
    }
    Ok(EvalReport {
        instance_id: instance_id.to_string(),
        seed,
        avg_delay_lp,
        avg_delay_rl,
        delay_ratio: delay_ratio(avg_delay_lp, avg_delay_rl),
        risk_bound: summary.risk_bound,
        realized_bound: summary.realized_bound,
        max_violation: summary.max_violation,
        traces: traces.len(),
    })
}

/// Multi-instance matched-risk comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub instance: InstanceConfig,
    /// Departures are taken from here, overriding `instance.departures`.
    pub schedule: FlightSchedule,
    pub window_min: f64,
    pub instances: usize,
    pub traces: usize,
    pub train: TrainConfig,
    pub mode: QueueMode,
    pub seed: u64,
}

impl SuiteConfig {
    pub fn new(schedule: FlightSchedule, train: TrainConfig, seed: u64) -> Self {
        SuiteConfig {
            instance: InstanceConfig { num_flights: schedule.num_flights(), ..InstanceConfig::default() },
            schedule,
            window_min: crate::env::DAY_LENGTH_MIN,
            instances: 5,
            traces: 20,
            train,
            mode: QueueMode::Marginal,
            seed,
        }
    }

    /// The `i`-th random instance of the suite.
    pub fn instance(&self, i: usize) -> Result<GameInstance, HarnessError> {
        let cfg = InstanceConfig {
            num_flights: self.schedule.num_flights(),
            departures: Some(self.schedule.departures()),
            ..self.instance.clone()
        };
        Ok(sample_instance(&cfg, child_seed(self.seed, i as u64))?)
    }
}

/// Trains on a matched setup and compares against its LP on fresh traces.
pub fn evaluate_setup(
    instance_id: &str,
    setup: &MatchedSetup,
    train_cfg: &TrainConfig,
    traces: usize,
    mode: QueueMode,
    seed: u64,
) -> Result<(EvalReport, TrainingCurve), HarnessError> {
    let outcome = train(&setup.scenario, train_cfg)?;
    check_audit(&outcome.audit.summary(&setup.scenario.game))?;
    let eval_traces = setup.scenario.sample_traces(traces, derive_seed(seed, Stream::Eval));
    let mut lp = StaticPolicy::new(&setup.solution);
    let mut rl = outcome.policy.clone();
    let report = compare_policies(instance_id, seed, &setup.scenario, &mut lp, &mut rl, &eval_traces, mode)?;
    Ok((report, outcome.curve))
}

fn check_audit(summary: &AuditSummary) -> Result<(), HarnessError> {
    if summary.max_violation <= AUDIT_TOLERANCE {
        Ok(())
    } else {
        Err(HarnessError::Audit { violation: summary.max_violation, steps: summary.steps })
    }
}

/// One row per instance followed by a summary row.
pub fn evaluate_policies(cfg: &SuiteConfig) -> Result<Vec<EvalReport>, HarnessError> {
    if cfg.instances == 0 || cfg.traces == 0 {
        return Err(HarnessError::Config("need at least one instance and one trace".into()));
    }
    let mut rows = Vec::with_capacity(cfg.instances + 1);
    for i in 0..cfg.instances {
        let inst = cfg.instance(i)?;
        let setup = matched_setup(&inst, &cfg.schedule, cfg.window_min, 1.0)?;
        let seed = child_seed(cfg.seed, i as u64);
        let train_cfg = TrainConfig { seed, mode: cfg.mode, ..cfg.train.clone() };
        let (report, _) = evaluate_setup(&format!("inst{i:02}"), &setup, &train_cfg, cfg.traces, cfg.mode, seed)?;
        rows.push(report);
    }
    rows.push(summary_row(&rows, cfg.seed));
    Ok(rows)
}

/// Means of the per-instance rows; the ratio is of the mean delays.
pub fn summary_row(rows: &[EvalReport], seed: u64) -> EvalReport {
    let col = |f: fn(&EvalReport) -> f64| stats::mean(&rows.iter().map(f).collect::<Vec<_>>());
    let avg_delay_lp = col(|r| r.avg_delay_lp);
    let avg_delay_rl = col(|r| r.avg_delay_rl);
    EvalReport {
        instance_id: "summary".into(),
        seed,
        avg_delay_lp,
        avg_delay_rl,
        delay_ratio: delay_ratio(avg_delay_lp, avg_delay_rl),
        risk_bound: col(|r| r.risk_bound),
        realized_bound: col(|r| r.realized_bound),
        max_violation: rows.iter().map(|r| r.max_violation).fold(0.0, f64::max),
        traces: rows.iter().map(|r| r.traces).sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub psi_scale: f64,
    pub psi_sum: f64,
    /// Realised `Σ_θ P_θ U_θ` over the evaluation traces.
    pub risk_bound: f64,
    /// Minus the average delay.
    pub v_o: f64,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierSweep {
    /// Sorted by `psi_sum`.
    pub points: Vec<FrontierPoint>,
    /// Scales with no feasible allocation, with the reason.
    pub skipped: Vec<(f64, String)>,
    pub policies: Vec<ActorPolicy>,
}

/// Trains one policy per scale of `ψ*` (ratios across risk levels fixed).
/// All points share the training seed and the evaluation traces.
#[allow(clippy::too_many_arguments)]
pub fn pareto_sweep(
    inst: &GameInstance,
    schedule: &FlightSchedule,
    scales: &[f64],
    window: f64,
    train_cfg: &TrainConfig,
    traces: usize,
    mode: QueueMode,
    seed: u64,
) -> Result<FrontierSweep, HarnessError> {
    let mut sweep = FrontierSweep { points: Vec::new(), skipped: Vec::new(), policies: Vec::new() };
    for &scale in scales {
        if !(scale > 0.0) {
            return Err(HarnessError::Config(format!("psi scale must be positive, got {scale}")));
        }
        let setup = match matched_setup(inst, schedule, window, scale) {
            Ok(s) => s,
            Err(HarnessError::Infeasible(reason)) => {
                sweep.skipped.push((scale, reason));
                continue;
            }
            Err(e) => return Err(e),
        };
        let outcome = train(&setup.scenario, &TrainConfig { seed, mode, ..train_cfg.clone() })?;
        check_audit(&outcome.audit.summary(&setup.scenario.game))?;
        let eval_traces = setup.scenario.sample_traces(traces, derive_seed(seed, Stream::Eval));
        let mut audit = RiskAudit::new(&setup.scenario.game);
        let mut policy = outcome.policy.clone();
        let delay = policy_delay(&setup.scenario, &mut policy, &eval_traces, mode, seed, &mut audit)?;
        let summary = audit.summary(&setup.scenario.game);
        check_audit(&summary)?;
        sweep.points.push(FrontierPoint {
            psi_scale: scale,
            psi_sum: -summary.risk_bound,
            risk_bound: summary.realized_bound,
            v_o: -delay,
            checkpoint: None,
        });
        sweep.policies.push(outcome.policy);
    }
    let mut order: Vec<usize> = (0..sweep.points.len()).collect();
    order.sort_by(|&a, &b| sweep.points[a].psi_sum.total_cmp(&sweep.points[b].psi_sum));
    sweep.points = order.iter().map(|&i| sweep.points[i].clone()).collect();
    sweep.policies = order.iter().map(|&i| sweep.policies[i].clone()).collect();
    Ok(sweep)
}

/// The frontier point maximising `risk_bound + w·v_o`; ties go to the
/// smaller `Σψ`. An infinite `w` selects on `v_o` alone.
pub fn select_weighted(frontier: &[FrontierPoint], w: f64) -> Option<&FrontierPoint> {
    let score = |p: &FrontierPoint| if w.is_infinite() { p.v_o } else { p.risk_bound + w * p.v_o };
    frontier.iter().fold(None, |best: Option<&FrontierPoint>, p| match best {
        None => Some(p),
        Some(b) => {
            let (sp, sb) = (score(p), score(b));
            if sp > sb || (sp == sb && p.psi_sum < b.psi_sum) {
                Some(p)
            } else {
                Some(b)
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub two_sigma_min: f64,
    pub ratio: f64,
}

/// Delay ratio per arrival spread; each grid point re-trains on every
/// instance and reports the mean per-instance ratio.
#[allow(clippy::too_many_arguments)]
pub fn sweep_variance(
    instances: &[GameInstance],
    schedule: &FlightSchedule,
    two_sigma_grid: &[f64],
    window: f64,
    train_cfg: &TrainConfig,
    traces: usize,
    mode: QueueMode,
    seed: u64,
) -> Result<Vec<VarianceRow>, HarnessError> {
    if instances.is_empty() {
        return Err(HarnessError::Config("variance sweep needs an instance".into()));
    }
    let mut rows = Vec::with_capacity(two_sigma_grid.len());
    for &two_sigma in two_sigma_grid {
        if !(two_sigma > 0.0) {
            return Err(HarnessError::Config(format!("2σ must be positive, got {two_sigma}")));
        }
        let sched = schedule.with_sigma(two_sigma / 2.0);
        let mut ratios = Vec::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            let setup = matched_setup(inst, &sched, window, 1.0)?;
            let s = child_seed(seed, i as u64);
            let (report, _) = evaluate_setup(&format!("inst{i:02}"), &setup, &TrainConfig { seed: s, mode, ..train_cfg.clone() }, traces, mode, s)?;
            ratios.push(report.delay_ratio);
        }
        rows.push(VarianceRow { two_sigma_min: two_sigma, ratio: stats::mean(&ratios) });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlightsRow {
    pub flights: usize,
    /// Training steps until the actor loss settles.
    pub steps: u64,
    /// Wall-clock seconds per 10,000 training steps.
    pub secs: f64,
}

/// Relative band around the plateau that counts as converged.
pub const CONVERGENCE_BAND: f64 = 0.05;

/// First logged step after which the smoothed actor loss stays within
/// [`CONVERGENCE_BAND`] of its plateau (the mean over the last 10% of rows).
/// Smoothing is a trailing mean over 5% of the rows.
pub fn convergence_step(curve: &TrainingCurve) -> Option<u64> {
    let losses = curve.actor_losses();
    let n = losses.len();
    if n == 0 {
        return None;
    }
    let tail = (n / 10).max(1);
    let plateau = stats::mean(&losses[n - tail..]);
    let window = (n / 20).max(1);
    let smoothed: Vec<f64> = (0..n).map(|i| stats::mean(&losses[(i + 1).saturating_sub(window)..=i])).collect();
    let band = CONVERGENCE_BAND * plateau.abs().max(f64::MIN_POSITIVE);
    let mut first = n - 1;
    for i in (0..n).rev() {
        if (smoothed[i] - plateau).abs() <= band {
            first = i;
        } else {
            break;
        }
    }
    Some(curve.rows[first].step)
}

/// Training cost and convergence per flight count. Each count gets its own
/// random instance whose departures also define the schedule.
pub fn sweep_flights(
    flight_counts: &[usize],
    instance: &InstanceConfig,
    passengers: usize,
    sigma_min: f64,
    window: f64,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<FlightsRow>, HarnessError> {
    if train_cfg.total_steps == 0 {
        return Err(HarnessError::Config("sweep-flights needs a positive step count".into()));
    }
    let mut rows = Vec::with_capacity(flight_counts.len());
    for (i, &k) in flight_counts.iter().enumerate() {
        if k == 0 {
            return Err(HarnessError::Config("flight count must be positive".into()));
        }
        let cfg = InstanceConfig { num_flights: k, departures: None, ..instance.clone() };
        let inst = sample_instance(&cfg, child_seed(seed, i as u64))?;
        let departures: Vec<f64> = inst.flights.iter().map(|f| f.departure_min).collect();
        let schedule = FlightSchedule::from_departures(&departures, passengers, sigma_min)?;
        let setup = matched_setup(&inst, &schedule, window, 1.0)?;
        let start = Instant::now();
        let outcome = train(&setup.scenario, &TrainConfig { seed, ..train_cfg.clone() })?;
        let secs = start.elapsed().as_secs_f64() * 10_000.0 / (outcome.steps.max(1) * train_cfg.restarts as u64) as f64;
        check_audit(&outcome.audit.summary(&setup.scenario.game))?;
        let steps = convergence_step(&outcome.curve)
            .ok_or_else(|| HarnessError::Config(format!("no curve rows for {k} flights; raise --steps")))?;
        rows.push(FlightsRow { flights: k, steps, secs });
    }
    Ok(rows)
}

/// Serialises `rows` with a header taken from the field names.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let io = |e: csv::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// `frontier.csv` keeps only the scale, bound and value columns.
pub fn write_frontier_csv(path: &Path, points: &[FrontierPoint]) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Row {
        psi_scale: f64,
        risk_bound: f64,
        v_o: f64,
    }
    let rows: Vec<Row> = points.iter().map(|p| Row { psi_scale: p.psi_scale, risk_bound: p.risk_bound, v_o: p.v_o }).collect();
    write_csv(path, &rows)
}
