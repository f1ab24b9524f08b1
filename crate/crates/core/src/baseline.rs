//! Static single-window maximin LP over marginal team allocations.
//!
//! Variables are `π_{c,t}` for every category and team, followed by one free
//! `u_θ` per risk level:
//!
//! ```text
//! max  Σ_θ P_θ u_θ
//! s.t. Σ_t π_{c,t} = 1                                     every c
//!      u_θ <= Σ_t π_{⟨θ,κ⟩,t} [E_{t,m} U⁺_{κ,m} + (1 − E_{t,m}) U⁻_{κ,m}]
//!                                                          every θ, κ, m
//!      Σ_c N_c Σ_{t∋r} π_{c,t} <= f_r · W                  every r
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{run_episode, ArrivalTrace, Policy, QueueMode, Scenario, ScreeningState};
use crate::game::{worst_case_utility, GameInstance};
use crate::projection::{LinearProgram, LpError, ProjectionError, SimplexWorkspace};

/// Multiplicative slack applied to `ψ*` before it becomes a hard constraint,
/// so the LP witness is strictly inside every risk polytope.
pub const PSI_RELAXATION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("no allocation satisfies the capacity rows")]
    Infeasible,
    #[error("maximin LP is unbounded")]
    Unbounded,
    #[error("expected {expected} category counts, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("lp solver: {0}")]
    Lp(LpError),
}

impl From<LpError> for BaselineError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible => BaselineError::Infeasible,
            LpError::Unbounded => BaselineError::Unbounded,
            other => BaselineError::Lp(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSolution {
    /// One distribution over teams per category.
    pub mixtures: Vec<Vec<f64>>,
    /// `U*_θ`.
    pub worst_case: Vec<f64>,
    /// `ψ*_θ = −P_θ U*_θ`.
    pub psi: Vec<f64>,
    /// `Σ_θ P_θ U*_θ`.
    pub objective: f64,
}

impl StaticSolution {
    /// `ψ*` widened by [`PSI_RELAXATION`].
    pub fn relaxed_psi(&self) -> Vec<f64> {
        self.psi.iter().map(|p| p * (1.0 + PSI_RELAXATION)).collect()
    }

    /// The instance with its thresholds set to the relaxed `ψ*`, scaled by `scale`.
    pub fn constrain(&self, inst: &GameInstance, scale: f64) -> GameInstance {
        inst.with_thresholds(self.relaxed_psi().into_iter().map(|p| p * scale).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// `U⁺` weighted by detection plus `U⁻` weighted by miss, for one team.
fn team_utility(inst: &GameInstance, team: usize, kappa: usize, m: usize) -> f64 {
    let e = inst.efficacy(team, m);
    e * inst.utilities.plus[kappa][m] + (1.0 - e) * inst.utilities.minus[kappa][m]
}

/// Builds the maximin LP. `window` may be infinite to drop capacity rows.
pub fn static_lp(inst: &GameInstance, counts: &[f64], window: f64) -> Result<LinearProgram, BaselineError> {
    let nc = inst.num_categories();
    if counts.len() != nc {
        return Err(BaselineError::Dimension { expected: nc, got: counts.len() });
    }
    let nt = inst.num_teams();
    let nl = inst.num_risk_levels();
    let nvar = nc * nt + nl;
    let pi = |c: usize, t: usize| c * nt + t;
    let u = |theta: usize| nc * nt + theta;

    let mut objective = vec![0.0; nvar];
    for (theta, level) in inst.risk_levels.iter().enumerate() {
        objective[u(theta)] = level.prior;
    }
    let mut lp = LinearProgram::maximize(objective);
    for theta in 0..nl {
        lp.free(u(theta));
    }
    for c in 0..nc {
        let mut row = vec![0.0; nvar];
        (0..nt).for_each(|t| row[pi(c, t)] = 1.0);
        lp.equal(row, 1.0);
    }
    for c in 0..nc {
        let cat = inst.category(c);
        for m in 0..inst.num_methods {
            let mut row = vec![0.0; nvar];
            row[u(cat.theta)] = 1.0;
            for t in 0..nt {
                row[pi(c, t)] = -team_utility(inst, t, cat.kappa, m);
            }
            lp.le(row, 0.0);
        }
    }
    if window.is_finite() {
        for (r, res) in inst.resources.iter().enumerate() {
            let mut row = vec![0.0; nvar];
            for c in 0..nc {
                for (t, team) in inst.teams.iter().enumerate() {
                    if team.resources.contains(&r) {
                        row[pi(c, t)] += counts[c];
                    }
                }
            }
            lp.le(row, res.rate * window);
        }
    }
    Ok(lp)
}

pub fn solve_static_lp(inst: &GameInstance, counts: &[f64], window: f64) -> Result<StaticSolution, BaselineError> {
    let lp = static_lp(inst, counts, window)?;
    let sol = SimplexWorkspace::new().solve(&lp)?;
    let nt = inst.num_teams();
    let mixtures: Vec<Vec<f64>> = sol
        .x
        .chunks(nt)
        .take(inst.num_categories())
        .map(|chunk| {
            let clean: Vec<f64> = chunk.iter().map(|v| v.max(0.0)).collect();
            let total: f64 = clean.iter().sum();
            clean.into_iter().map(|v| v / total).collect()
        })
        .collect();
    // Recompute U*_θ from the mixtures rather than trusting the u_θ columns.
    let mut worst_case = vec![f64::INFINITY; inst.num_risk_levels()];
    for (c, mix) in mixtures.iter().enumerate() {
        let cat = inst.category(c);
        worst_case[cat.theta] = worst_case[cat.theta].min(worst_case_utility(inst, mix, cat.kappa));
    }
    let psi = worst_case.iter().zip(&inst.risk_levels).map(|(u, l)| -l.prior * u).collect();
    let objective = worst_case.iter().zip(&inst.risk_levels).map(|(u, l)| l.prior * u).sum();
    Ok(StaticSolution { mixtures, worst_case, psi, objective })
}

/// Plays the LP's mixture for every passenger of its category.
#[derive(Debug, Clone)]
pub struct StaticPolicy {
    mixtures: Vec<Vec<f64>>,
}

impl StaticPolicy {
    pub fn new(sol: &StaticSolution) -> Self {
        StaticPolicy { mixtures: sol.mixtures.clone() }
    }
}

impl Policy for StaticPolicy {
    fn act(&mut self, state: &ScreeningState, _features: &[f64]) -> Result<Vec<f64>, ProjectionError> {
        Ok(self.mixtures[state.category].clone())
    }
}

/// Mean per-passenger delay of the static policy over `traces`.
pub fn static_policy_delay(sol: &StaticSolution, scenario: &Scenario, traces: &[ArrivalTrace]) -> Result<f64, crate::env::EnvError> {
    if traces.is_empty() {
        return Ok(0.0);
    }
    let mut policy = StaticPolicy::new(sol);
    let mut total = 0.0;
    for trace in traces {
        total += run_episode(scenario, trace, QueueMode::Marginal, 0, &mut policy)?.avg_delay();
    }
    Ok(total / traces.len() as f64)
}

/// Grid search oracle for tiny instances (at most 3 teams, 2 categories).
///
/// Every category's simplex is sampled on the lattice with spacing `step`;
/// combinations that break a capacity row are skipped.
pub fn brute_force_maximin(inst: &GameInstance, counts: &[f64], window: f64, step: f64) -> Option<f64> {
    let nt = inst.num_teams();
    let nc = inst.num_categories();
    assert!(nt <= 3 && nc <= 2, "brute force is limited to 3 teams and 2 categories");
    let k = (1.0 / step).round() as usize;
    let mut lattice = Vec::new();
    match nt {
        1 => lattice.push(vec![1.0]),
        2 => (0..=k).for_each(|i| lattice.push(vec![i as f64 / k as f64, (k - i) as f64 / k as f64])),
        _ => {
            for i in 0..=k {
                for j in 0..=(k - i) {
                    lattice.push(vec![i as f64 / k as f64, j as f64 / k as f64, (k - i - j) as f64 / k as f64]);
                }
            }
        }
    }
    let nr = inst.num_resources();
    // Per category and lattice point: worst-case utility and resource load.
    let table: Vec<Vec<(f64, Vec<f64>)>> = (0..nc)
        .map(|c| {
            let cat = inst.category(c);
            lattice
                .iter()
                .map(|p| {
                    let mut load = vec![0.0; nr];
                    for (t, team) in inst.teams.iter().enumerate() {
                        team.resources.iter().for_each(|&r| load[r] += counts[c] * p[t]);
                    }
                    (worst_case_utility(inst, p, cat.kappa), load)
                })
                .collect()
        })
        .collect();
    let capacity: Vec<f64> = inst.resources.iter().map(|r| r.rate * window).collect();
    let fits = |load: &[f64]| load.iter().zip(&capacity).all(|(l, cap)| *l <= cap + 1e-12);
    let value = |utils: &[(usize, f64)]| {
        let mut per_level = vec![f64::INFINITY; inst.num_risk_levels()];
        for &(c, u) in utils {
            let theta = inst.category(c).theta;
            per_level[theta] = per_level[theta].min(u);
        }
        per_level.iter().zip(&inst.risk_levels).filter(|(u, _)| u.is_finite()).map(|(u, l)| l.prior * u).sum::<f64>()
    };

    let mut best: Option<f64> = None;
    if nc == 1 {
        for (u, load) in &table[0] {
            if fits(load) {
                let v = value(&[(0, *u)]);
                best = Some(best.map_or(v, |b| b.max(v)));
            }
        }
    } else {
        let mut combined = vec![0.0; nr];
        for (u0, l0) in &table[0] {
            if !fits(l0) {
                continue;
            }
            for (u1, l1) in &table[1] {
                combined.iter_mut().zip(l0.iter().zip(l1)).for_each(|(s, (a, b))| *s = a + b);
                if fits(&combined) {
                    let v = value(&[(0, *u0), (1, *u1)]);
                    best = Some(best.map_or(v, |b| b.max(v)));
                }
            }
        }
    }
    best
}

/// Error bound of [`brute_force_maximin`] at `step`: moving any
/// allocation to its nearest lattice point shifts each coordinate by at most
/// `step`, and each utility has slope at most `max |U|` per coordinate.
pub fn grid_resolution(inst: &GameInstance, step: f64) -> f64 {
    let worst = inst
        .utilities
        .minus
        .iter()
        .chain(&inst.utilities.plus)
        .flatten()
        .fold(0.0f64, |acc, u| acc.max(u.abs()));
    worst * inst.num_teams() as f64 * step
}
