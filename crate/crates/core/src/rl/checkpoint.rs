use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActorPolicy, DenseNet, RlError};
use crate::env::Scenario;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Greedy actor plus enough context to refuse a mismatched instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub instance_hash: String,
    pub thresholds: Vec<f64>,
    pub actor: DenseNet,
}

impl Checkpoint {
    pub fn new(scenario: &Scenario, policy: &ActorPolicy) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            instance_hash: scenario.game.content_hash(),
            thresholds: scenario.game.risk_thresholds.clone(),
            actor: policy.actor.clone(),
        }
    }

    /// Rebuilds the policy against `scenario`, which must be the instance
    /// (thresholds included) the actor was trained on.
    pub fn policy(&self, scenario: &Scenario) -> Result<ActorPolicy, RlError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(RlError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let hash = scenario.game.content_hash();
        if hash != self.instance_hash {
            return Err(RlError::Checkpoint(format!("trained on instance {}, got {hash}", self.instance_hash)));
        }
        if self.actor.output_dim() != scenario.num_teams() {
            return Err(RlError::Checkpoint("actor output does not match the team count".into()));
        }
        Ok(ActorPolicy { actor: self.actor.clone(), polytopes: scenario.polytopes.clone() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, RlError> {
        serde_json::from_str(text).map_err(|e| RlError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), RlError> {
        std::fs::write(path, self.to_json()).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, RlError> {
        let text = std::fs::read_to_string(path).map_err(|e| RlError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
