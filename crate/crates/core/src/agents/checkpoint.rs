use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentError, BaselineSpec, LinearPolicy, Policy, RandomPolicy, ReinforceConfig, ZeroPolicy};
use crate::env::{EnvConfig, EnvKind};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentState {
    Linear {
        policy: LinearPolicy,
        training: Option<ReinforceConfig>,
    },
    Baseline { spec: BaselineSpec },
    Zero,
    Random,
}

impl AgentState {
    pub fn to_policy(&self) -> Box<dyn Policy> {
        match self {
            AgentState::Linear { policy, .. } => {
                let mut p = policy.clone();
                p.set_exploring(false);
                Box::new(p)
            }
            AgentState::Baseline { spec } => spec.build(),
            AgentState::Zero => Box::new(ZeroPolicy),
            AgentState::Random => Box::new(RandomPolicy),
        }
    }
}

/// Frozen agent plus the environment settings it was trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub name: String,
    pub agent: AgentState,
    pub env_kind: EnvKind,
    pub env_config: EnvConfig,
    pub symbols: Vec<String>,
    pub feature_names: Vec<String>,
}

impl AgentCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        fs::write(path, text).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = fs::read_to_string(path).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: AgentCheckpoint =
            serde_json::from_str(&text).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let mut policy = LinearPolicy::new(4, 1, 0.2);
        policy.weights = vec![0.1, -0.2, 1.0 / 3.0, 1e-300];
        policy.normalizer.update(&[1.0, 2.0, 3.0, 4.0]);
        let ckpt = AgentCheckpoint {
            version: CHECKPOINT_VERSION,
            name: "linear".into(),
            agent: AgentState::Linear { policy, training: Some(ReinforceConfig::default()) },
            env_kind: EnvKind::Stock,
            env_config: EnvConfig::default(),
            symbols: vec!["A".into()],
            feature_names: vec!["close".into()],
        };
        ckpt.save(&path).unwrap();
        assert_eq!(AgentCheckpoint::load(&path).unwrap(), ckpt);

        let stale = AgentCheckpoint { version: 99, ..ckpt };
        stale.save(&path).unwrap();
        assert!(AgentCheckpoint::load(&path).is_err());
    }
}
