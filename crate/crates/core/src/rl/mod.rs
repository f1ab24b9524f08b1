//! DDPG with the α-projection fused into the actor.
//!
//! The actor emits logits, exploration noise is added to the logits, and the
//! result passes through softmax and the category's α-projection. Whatever
//! the weights or the noise, the executed allocation lies in its polytope.

mod checkpoint;
mod net;
mod replay;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use net::{Adam, DenseNet, ForwardCache, Gradients};
pub use replay::{ReplayBuffer, Transition};

use std::io::Write;

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::RiskAudit;
use crate::env::{run_episode, EnvError, Policy, QueueMode, Scenario, ScreeningEnv, ScreeningState, StateEncoder};
use crate::projection::{alpha_backward, alpha_forward, softmax, softmax_backward, Polytope, ProjectionError};
use crate::rng::{stream, Stream};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {what} at step {step}")]
    NonFinite { step: u64, what: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Soft-update coefficient ρ.
    pub tau: f64,
    pub noise_start: f64,
    pub noise_end: f64,
    pub total_steps: u64,
    pub warmup_steps: u64,
    /// Evaluate the greedy actor and emit a curve row this often.
    pub eval_every: u64,
    pub eval_traces: usize,
    /// Independent runs from child seeds; the one with the lowest final
    /// validation delay is kept.
    pub restarts: usize,
    pub gamma: f64,
    /// Per-step reward multiplier; `None` uses one over the expected
    /// passengers per day.
    pub reward_scale: Option<f64>,
    pub mode: QueueMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 100_000,
            tau: 0.01,
            noise_start: 0.3,
            noise_end: 0.05,
            total_steps: 10_000,
            warmup_steps: 1_000,
            eval_every: 500,
            eval_traces: 3,
            restarts: 1,
            gamma: 0.98,
            reward_scale: None,
            mode: QueueMode::Marginal,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("batch_size", self.batch_size as f64),
            ("buffer_capacity", self.buffer_capacity as f64),
            ("eval_every", self.eval_every as f64),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
            return Err(RlError::Config(format!("{name} must be positive, got {v}")));
        }
        if self.restarts == 0 {
            return Err(RlError::Config("restarts must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(RlError::Config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return Err(RlError::Config("noise scales must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(RlError::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.hidden.contains(&0) {
            return Err(RlError::Config("hidden layer of width 0".into()));
        }
        Ok(())
    }

    /// Linear decay from `noise_start` to `noise_end` over the run.
    pub fn noise_at(&self, step: u64) -> f64 {
        if self.total_steps == 0 {
            return self.noise_end;
        }
        let frac = (step as f64 / self.total_steps as f64).min(1.0);
        (1.0 - frac) * self.noise_start + frac * self.noise_end
    }
}

/// Adds i.i.d. `N(0, scale²)` noise to the logits.
pub fn explore<R: Rng + ?Sized>(logits: &mut [f64], scale: f64, rng: &mut R) {
    if scale == 0.0 {
        return;
    }
    for l in logits.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *l += scale * z;
    }
}

/// Softmax followed by the α-projection onto `poly`.
pub fn project_logits(logits: &[f64], poly: &Polytope) -> Result<Vec<f64>, ProjectionError> {
    Ok(alpha_forward(&softmax(logits), poly)?.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: DenseNet,
    pub critic: DenseNet,
    pub actor_target: DenseNet,
    pub critic_target: DenseNet,
    actor_opt: Adam,
    critic_opt: Adam,
    polytopes: Vec<Polytope>,
    gamma: f64,
    tau: f64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, polytopes: Vec<Polytope>, cfg: &TrainConfig, rng: &mut R) -> Self {
        let n = polytopes.first().map_or(0, |p| p.dim());
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(n);
        let mut critic_sizes = vec![state_dim + n];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = DenseNet::new(&actor_sizes, 3e-3, rng);
        let critic = DenseNet::new(&critic_sizes, 3e-3, rng);
        Agent {
            actor_opt: Adam::new(&actor, cfg.actor_lr),
            critic_opt: Adam::new(&critic, cfg.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            polytopes,
            gamma: cfg.gamma,
            tau: cfg.tau,
        }
    }

    pub fn polytopes(&self) -> &[Polytope] {
        &self.polytopes
    }

    pub fn num_teams(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn actor_forward(&self, features: &[f64], category: usize) -> Result<Vec<f64>, ProjectionError> {
        project_logits(&self.actor.forward(features), &self.polytopes[category])
    }

    pub fn critic_forward(&self, features: &[f64], action: &[f64]) -> f64 {
        let input: Vec<f64> = features.iter().chain(action).copied().collect();
        self.critic.forward(&input)[0]
    }

    /// `∂Q/∂a` at `(features, action)`.
    pub fn critic_action_gradient(&self, features: &[f64], action: &[f64]) -> Vec<f64> {
        let input: Vec<f64> = features.iter().chain(action).copied().collect();
        let x = Array2::from_shape_vec((1, input.len()), input).expect("row shape");
        let cache = self.critic.forward_batch(x.view());
        let (_, gin) = self.critic.backward(&cache, Array2::ones((1, 1)).view());
        gin.slice(s![0, features.len()..]).to_vec()
    }

    pub fn policy(&self) -> ActorPolicy {
        ActorPolicy { actor: self.actor.clone(), polytopes: self.polytopes.clone() }
    }

    /// Actor loss `−mean Q(s, actor(s))` and its parameter gradient, flowing
    /// through the critic, the projection and the softmax.
    pub fn actor_gradients(&self, states: &[(&[f64], usize)]) -> Result<(f64, Gradients), ProjectionError> {
        let b = states.len();
        let d = self.actor.input_dim();
        let n = self.num_teams();
        let mut x = Array2::zeros((b, d));
        for (i, (f, _)) in states.iter().enumerate() {
            x.row_mut(i).assign(&ndarray::ArrayView1::from(*f));
        }
        let actor_cache = self.actor.forward_batch(x.view());
        let mut probs = Vec::with_capacity(b);
        let mut projections = Vec::with_capacity(b);
        let mut critic_in = Array2::zeros((b, d + n));
        critic_in.slice_mut(s![.., ..d]).assign(&x);
        for (i, (_, c)) in states.iter().enumerate() {
            let p = softmax(actor_cache.output.row(i).as_slice().expect("contiguous"));
            let proj = alpha_forward(&p, &self.polytopes[*c])?;
            critic_in.slice_mut(s![i, d..]).assign(&ndarray::ArrayView1::from(&proj.y));
            probs.push(p);
            projections.push(proj);
        }
        let critic_cache = self.critic.forward_batch(critic_in.view());
        let loss = -critic_cache.output.mean().unwrap_or(0.0);
        let upstream = Array2::from_elem((b, 1), -1.0 / b as f64);
        let (_, gin) = self.critic.backward(&critic_cache, upstream.view());
        let mut grad_logits = Array2::zeros((b, n));
        for (i, (_, c)) in states.iter().enumerate() {
            let gy = gin.slice(s![i, d..]).to_vec();
            let gs = alpha_backward(&probs[i], &self.polytopes[*c], &projections[i], &gy);
            let gl = softmax_backward(&probs[i], &gs);
            grad_logits.row_mut(i).assign(&ndarray::ArrayView1::from(&gl));
        }
        let (grads, _) = self.actor.backward(&actor_cache, grad_logits.view());
        Ok((loss, grads))
    }

    /// One critic step, one actor step, then soft target updates.
    pub fn update(&mut self, batch: &[&Transition], step: u64) -> Result<UpdateStats, RlError> {
        let b = batch.len();
        let d = self.actor.input_dim();
        let n = self.num_teams();

        let mut next = Array2::zeros((b, d));
        for (i, t) in batch.iter().enumerate() {
            next.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state));
        }
        let next_logits = self.actor_target.forward_batch(next.view()).output;
        let mut target_in = Array2::zeros((b, d + n));
        target_in.slice_mut(s![.., ..d]).assign(&next);
        for (i, t) in batch.iter().enumerate() {
            if !t.done {
                let a = project_logits(next_logits.row(i).as_slice().expect("contiguous"), &self.polytopes[t.next_category])?;
                target_in.slice_mut(s![i, d..]).assign(&ndarray::ArrayView1::from(&a));
            }
        }
        let next_q = self.critic_target.forward_batch(target_in.view()).output;
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| t.reward + if t.done { 0.0 } else { self.gamma * next_q[(i, 0)] })
            .collect();

        let mut critic_in = Array2::zeros((b, d + n));
        for (i, t) in batch.iter().enumerate() {
            critic_in.slice_mut(s![i, ..d]).assign(&ndarray::ArrayView1::from(&t.state));
            critic_in.slice_mut(s![i, d..]).assign(&ndarray::ArrayView1::from(&t.action));
        }
        let cache = self.critic.forward_batch(critic_in.view());
        let mut grad = Array2::zeros((b, 1));
        let mut critic_loss = 0.0;
        for i in 0..b {
            let err = cache.output[(i, 0)] - targets[i];
            critic_loss += err * err;
            grad[(i, 0)] = 2.0 * err / b as f64;
        }
        critic_loss /= b as f64;
        if !critic_loss.is_finite() {
            return Err(RlError::NonFinite { step, what: "critic loss".into() });
        }
        let (critic_grads, _) = self.critic.backward(&cache, grad.view());
        self.critic_opt.step(&mut self.critic, &critic_grads);

        let states: Vec<(&[f64], usize)> = batch.iter().map(|t| (t.state.as_slice(), t.category)).collect();
        let (actor_loss, actor_grads) = self.actor_gradients(&states)?;
        if !actor_loss.is_finite() {
            return Err(RlError::NonFinite { step, what: "actor loss".into() });
        }
        self.actor_opt.step(&mut self.actor, &actor_grads);
        if !self.actor.is_finite() || !self.critic.is_finite() {
            return Err(RlError::NonFinite { step, what: "network parameters".into() });
        }

        self.actor_target.soft_update(&self.actor, self.tau);
        self.critic_target.soft_update(&self.critic, self.tau);
        Ok(UpdateStats { critic_loss, actor_loss })
    }
}

/// The greedy (noise-free) projected actor.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorPolicy {
    pub actor: DenseNet,
    pub polytopes: Vec<Polytope>,
}

impl Policy for ActorPolicy {
    fn act(&mut self, state: &ScreeningState, features: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        project_logits(&self.actor.forward(features), &self.polytopes[state.category])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub eval_avg_delay: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub rows: Vec<CurveRow>,
}

impl TrainingCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "actor_loss", "critic_loss", "eval_avg_delay"])?;
        for r in &self.rows {
            w.serialize((r.step, r.actor_loss, r.critic_loss, r.eval_avg_delay))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn actor_losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.actor_loss).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: ActorPolicy,
    pub curve: TrainingCurve,
    /// Every allocation executed during training and evaluation.
    pub audit: RiskAudit,
    pub steps: u64,
    pub episodes: u64,
}

/// Greedy average delay over `traces`, recording every action in `audit`.
pub fn evaluate_actor(
    scenario: &Scenario,
    policy: &ActorPolicy,
    traces: &[crate::env::ArrivalTrace],
    mode: QueueMode,
    audit: &mut RiskAudit,
) -> Result<f64, RlError> {
    if traces.is_empty() {
        return Ok(0.0);
    }
    let mut p = policy.clone();
    let mut total = 0.0;
    for (i, trace) in traces.iter().enumerate() {
        let log = run_episode(scenario, trace, mode, i as u64, &mut p)?;
        log.actions.iter().for_each(|(c, a)| audit.record(&scenario.game, *c, a));
        total += log.avg_delay();
    }
    Ok(total / traces.len() as f64)
}

/// Validation traces come from the evaluation stream itself, so they never
/// coincide with traces drawn through `Scenario::sample_traces`.
pub fn validation_traces(scenario: &Scenario, n: usize, seed: u64) -> Vec<crate::env::ArrivalTrace> {
    let mut rng = stream(seed, Stream::Eval);
    (0..n).map(|_| scenario.sample_trace(&mut rng)).collect()
}

pub fn train(scenario: &Scenario, cfg: &TrainConfig) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    let eval_traces = validation_traces(scenario, cfg.eval_traces, cfg.seed);
    if cfg.restarts == 1 {
        return train_once(scenario, cfg, &eval_traces);
    }
    let mut best: Option<(f64, TrainOutcome)> = None;
    let mut audit = RiskAudit::new(&scenario.game);
    for r in 0..cfg.restarts {
        let seed = if r == 0 { cfg.seed } else { crate::rng::child_seed(cfg.seed, r as u64) };
        let outcome = train_once(scenario, &TrainConfig { seed, ..cfg.clone() }, &eval_traces)?;
        audit.merge(&outcome.audit);
        let score = evaluate_actor(scenario, &outcome.policy, &eval_traces, cfg.mode, &mut audit)?;
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, outcome));
        }
    }
    let (_, mut outcome) = best.expect("at least one restart");
    outcome.audit = audit;
    Ok(outcome)
}

fn train_once(scenario: &Scenario, cfg: &TrainConfig, eval_traces: &[crate::env::ArrivalTrace]) -> Result<TrainOutcome, RlError> {
    let encoder = StateEncoder::new(scenario);
    let mut agent = Agent::new(encoder.dim(), scenario.polytopes.clone(), cfg, &mut stream(cfg.seed, Stream::Init));
    let mut audit = RiskAudit::new(&scenario.game);
    if cfg.total_steps == 0 {
        return Ok(TrainOutcome { policy: agent.policy(), curve: TrainingCurve::default(), audit, steps: 0, episodes: 0 });
    }

    let scale = cfg.reward_scale.unwrap_or(1.0 / scenario.expected_passengers().max(1.0));
    let mut noise_rng = stream(cfg.seed, Stream::Noise);
    let mut replay_rng = stream(cfg.seed, Stream::Replay);
    let mut trace_rng = stream(cfg.seed, Stream::Trace);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut curve = TrainingCurve::default();
    let (mut loss_sum, mut loss_count) = (UpdateStats::default(), 0u64);

    let mut step = 0u64;
    let mut episodes = 0u64;
    let mut features = vec![0.0; encoder.dim()];
    while step < cfg.total_steps {
        let trace = scenario.sample_trace(&mut trace_rng);
        if trace.is_empty() {
            return Err(RlError::Config("schedule produces no passengers".into()));
        }
        let mut env = ScreeningEnv::new(scenario, trace, cfg.mode, crate::rng::child_seed(cfg.seed, episodes));
        episodes += 1;
        encoder.encode_into(env.state(), &mut features);
        while !env.is_done() && step < cfg.total_steps {
            let category = env.state().category;
            let mut logits = if step < cfg.warmup_steps {
                (0..agent.num_teams()).map(|_| StandardNormal.sample(&mut noise_rng)).collect()
            } else {
                agent.actor.forward(&features)
            };
            if step >= cfg.warmup_steps {
                explore(&mut logits, cfg.noise_at(step), &mut noise_rng);
            }
            let action = project_logits(&logits, &scenario.polytopes[category])?;
            audit.record(&scenario.game, category, &action);
            let out = env.step(&action)?;
            let mut next = vec![0.0; encoder.dim()];
            encoder.encode_into(env.state(), &mut next);
            buffer.push(Transition {
                state: features.clone(),
                category,
                action,
                reward: out.reward * scale,
                next_state: next.clone(),
                next_category: env.state().category,
                done: out.done,
            });
            features = next;
            step += 1;

            if step > cfg.warmup_steps && buffer.len() >= cfg.batch_size.min(buffer.capacity()) {
                let batch = buffer.sample(cfg.batch_size, &mut replay_rng);
                let stats = agent.update(&batch, step)?;
                loss_sum.actor_loss += stats.actor_loss;
                loss_sum.critic_loss += stats.critic_loss;
                loss_count += 1;
            }
            if step.is_multiple_of(cfg.eval_every) && loss_count > 0 {
                let eval = evaluate_actor(scenario, &agent.policy(), eval_traces, cfg.mode, &mut audit)?;
                curve.rows.push(CurveRow {
                    step,
                    actor_loss: loss_sum.actor_loss / loss_count as f64,
                    critic_loss: loss_sum.critic_loss / loss_count as f64,
                    eval_avg_delay: eval,
                });
                loss_sum = UpdateStats::default();
                loss_count = 0;
            }
        }
    }
    Ok(TrainOutcome { policy: agent.policy(), curve, audit, steps: step, episodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::two_team;
    use crate::game::build_polytope;
    use crate::projection::simplex_polytope;

    fn toy_agent() -> Agent {
        let inst = two_team().with_thresholds(vec![5.0]);
        let poly = build_polytope(&inst, inst.category(0)).unwrap();
        let cfg = TrainConfig { hidden: vec![8, 8], ..TrainConfig::default() };
        Agent::new(4, vec![poly], &cfg, &mut stream(5, Stream::Init))
    }

    #[test]
    fn zero_noise_is_identity() {
        let mut l = vec![0.1, -0.3];
        explore(&mut l, 0.0, &mut stream(0, Stream::Noise));
        assert_eq!(l, vec![0.1, -0.3]);
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        explore(&mut a, 0.3, &mut stream(9, Stream::Noise));
        explore(&mut b, 0.3, &mut stream(9, Stream::Noise));
        assert_eq!(a, b);
    }

    #[test]
    fn vacuous_polytope_passes_softmax_through() {
        let poly = simplex_polytope(3).unwrap();
        let logits = [0.2, -1.0, 0.7];
        assert_eq!(project_logits(&logits, &poly).unwrap(), softmax(&logits));
    }

    #[test]
    fn zero_network_mixes_uniform_with_anchor() {
        let inst = two_team().with_thresholds(vec![5.0]);
        let poly = build_polytope(&inst, inst.category(0)).unwrap();
        let mut agent = toy_agent();
        agent.actor = DenseNet::zeros(&agent.actor.sizes);
        let y = agent.actor_forward(&[0.0; 4], 0).unwrap();
        // Uniform (0.5, 0.5) gives z_0 = 0.5 >= 0.5 and z_1 = 0.6 >= 1/6: already feasible.
        assert_eq!(y, vec![0.5, 0.5]);
        let strict = two_team().with_thresholds(vec![4.0]);
        let poly2 = build_polytope(&strict, strict.category(0)).unwrap();
        agent.polytopes = vec![poly2.clone()];
        let y = agent.actor_forward(&[0.0; 4], 0).unwrap();
        let expect = alpha_forward(&[0.5, 0.5], &poly2).unwrap();
        assert!(expect.alpha < 1.0);
        assert_eq!(y, expect.y);
        assert!(poly.contains(&y, 1e-9));
    }

    #[test]
    fn critic_action_gradient_matches_finite_differences() {
        let agent = toy_agent();
        let f = [0.3, -0.1, 0.8, 0.5];
        let a = [0.7, 0.3];
        let g = agent.critic_action_gradient(&f, &a);
        let h = 1e-6;
        for i in 0..2 {
            let mut up = a;
            up[i] += h;
            let mut down = a;
            down[i] -= h;
            let fd = (agent.critic_forward(&f, &up) - agent.critic_forward(&f, &down)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-6), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn terminal_transitions_regress_to_reward() {
        let mut agent = toy_agent();
        let t = Transition { state: vec![0.1; 4], category: 0, action: vec![0.7, 0.3], reward: 0.0, next_state: vec![0.2; 4], next_category: 0, done: true };
        let batch = vec![&t; 16];
        let before = agent.critic_forward(&t.state, &t.action).abs();
        for s in 0..300 {
            agent.update(&batch, s).unwrap();
        }
        assert!(agent.critic_forward(&t.state, &t.action).abs() < before.max(1e-3));
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(TrainConfig { tau: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn noise_decays_linearly() {
        let cfg = TrainConfig { total_steps: 100, ..TrainConfig::default() };
        assert_eq!(cfg.noise_at(0), 0.3);
        assert!((cfg.noise_at(50) - 0.175).abs() < 1e-12);
        assert_eq!(cfg.noise_at(100), 0.05);
    }
}
