//! Independent recomputation of the risk constraints over executed actions.

use serde::{Deserialize, Serialize};

use crate::game::{defender_utility, GameInstance};

/// Running check of every executed allocation against
/// `P_θ·U_{κ,m}(π) >= −ψ_θ`, the simplex and non-negativity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAudit {
    /// Largest violation seen, in utility units (0 when none).
    pub max_violation: f64,
    /// Smallest `U_{κ,m}` seen per risk level.
    pub per_level_min: Vec<f64>,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub max_violation: f64,
    /// `Σ_θ P_θ U_θ` with `U_θ` the worst utility realised over the log.
    pub realized_bound: f64,
    /// `−Σ_θ ψ_θ` under the instance's thresholds.
    pub risk_bound: f64,
    pub steps: u64,
}

impl AuditSummary {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol && self.realized_bound >= self.risk_bound - tol
    }
}

impl RiskAudit {
    pub fn new(inst: &GameInstance) -> Self {
        RiskAudit { max_violation: 0.0, per_level_min: vec![f64::INFINITY; inst.num_risk_levels()], steps: 0 }
    }

    pub fn record(&mut self, inst: &GameInstance, category: usize, action: &[f64]) {
        let c = inst.category(category);
        let p = inst.risk_levels[c.theta].prior;
        let psi = inst.risk_thresholds[c.theta];
        let mut worst = 0.0f64;
        for m in 0..inst.num_methods {
            let u = defender_utility(inst, action, c.kappa, m);
            self.per_level_min[c.theta] = self.per_level_min[c.theta].min(u);
            worst = worst.max(-psi - p * u);
        }
        let simplex_gap = (action.iter().sum::<f64>() - 1.0).abs();
        let negative = action.iter().fold(0.0f64, |acc, v| acc.max(-v));
        let violation = worst.max(simplex_gap).max(negative);
        if violation.is_nan() || violation > self.max_violation {
            self.max_violation = if violation.is_nan() { f64::INFINITY } else { violation };
        }
        self.steps += 1;
    }

    pub fn merge(&mut self, other: &RiskAudit) {
        self.max_violation = self.max_violation.max(other.max_violation);
        for (a, b) in self.per_level_min.iter_mut().zip(&other.per_level_min) {
            *a = a.min(*b);
        }
        self.steps += other.steps;
    }

    /// Levels with no recorded passenger contribute nothing to the bound.
    pub fn summary(&self, inst: &GameInstance) -> AuditSummary {
        let realized_bound = self
            .per_level_min
            .iter()
            .zip(&inst.risk_levels)
            .filter(|(u, _)| u.is_finite())
            .map(|(u, r)| r.prior * u)
            .sum();
        AuditSummary {
            max_violation: self.max_violation,
            realized_bound,
            risk_bound: -inst.risk_thresholds.iter().sum::<f64>(),
            steps: self.steps,
        }
    }
}

/// Audits a complete `(category, action)` log.
pub fn audit_risk(log: &[(usize, Vec<f64>)], inst: &GameInstance) -> AuditSummary {
    let mut audit = RiskAudit::new(inst);
    for (c, a) in log {
        audit.record(inst, *c, a);
    }
    audit.summary(inst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::two_team;
    use crate::projection::alpha_forward;
    use crate::game::build_polytope;

    #[test]
    fn projected_actions_pass() {
        let inst = two_team().with_thresholds(vec![5.0]);
        let poly = build_polytope(&inst, inst.category(0)).unwrap();
        let log: Vec<(usize, Vec<f64>)> = [[1.0, 0.0], [0.0, 1.0], [0.3, 0.7]]
            .iter()
            .map(|s| (0, alpha_forward(s, &poly).unwrap().y))
            .collect();
        let summary = audit_risk(&log, &inst);
        assert!(summary.max_violation <= 1e-9, "{summary:?}");
        assert!(summary.realized_bound >= summary.risk_bound);
        assert_eq!(summary.steps, 3);
    }

    #[test]
    fn corrupted_action_is_flagged() {
        let inst = two_team().with_thresholds(vec![5.0]);
        // Feasible (0.7, 0.3) with the first team zeroed and renormalised.
        let summary = audit_risk(&[(0, vec![0.7, 0.3]), (0, vec![0.0, 1.0])], &inst);
        assert!(summary.max_violation > 1.0, "{summary:?}");
        // U for (0, 1): method 0 gives 0.2·0 + 0.8·(−10) = −8.
        assert_eq!(summary.realized_bound, -8.0);
    }
}
