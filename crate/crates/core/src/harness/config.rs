//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::DELTA_CONV;
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::policy::{PolicyKind, PolicyParams};

/// Early termination of a bandit run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopRule {
    /// Stop once any parameter exceeds `threshold`.
    ThetaAbove { threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub estimator: EstimatorConfig,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Initial parameters; all zeros (the uniform policy) when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_theta: Option<Vec<f64>>,
    pub n_runs: usize,
    /// Updates per run: pulls for bandits, episodes for gridworlds.
    pub n_steps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure_id: Option<String>,
    #[serde(default = "default_delta")]
    pub delta_conv: f64,
    /// Keep one trace row every `trace_every` steps; 1 for bandits and 10
    /// for gridworlds when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopRule>,
    /// Monte-Carlo rollouts per goal-reach snapshot (gridworlds only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_rollouts: Option<usize>,
    /// Free-form notes copied into the manifest.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumptions: Vec<String>,
}

fn default_policy() -> PolicyKind {
    PolicyKind::SoftmaxTabular
}

fn default_delta() -> f64 {
    DELTA_CONV
}

impl ExperimentConfig {
    /// Validates field ranges and env/estimator compatibility.
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(Error::field("n_runs", "must be at least 1"));
        }
        if self.n_steps == 0 {
            return Err(Error::field("n_steps", "must be at least 1"));
        }
        if !(self.delta_conv > 0.0 && self.delta_conv < 0.5) {
            return Err(Error::field("delta_conv", "must lie in (0, 0.5)"));
        }
        if self.trace_every == Some(0) {
            return Err(Error::field("trace_every", "must be at least 1"));
        }
        if self.goal_rollouts == Some(0) {
            return Err(Error::field("goal_rollouts", "must be at least 1"));
        }
        self.estimator.validate(&self.env)?;
        match (&self.env, self.policy) {
            (EnvSpec::Bandit(b), PolicyKind::SigmoidTwoArm) if b.num_arms() != 2 => {
                return Err(Error::field(
                    "policy",
                    "sigmoid policies need exactly two arms",
                ));
            }
            (EnvSpec::Gridworld(_), PolicyKind::SigmoidTwoArm) => {
                return Err(Error::field("policy", "gridworlds need a softmax policy"));
            }
            _ => {}
        }
        if let EnvSpec::Bandit(_) = self.env {
            if self.goal_rollouts.is_some() {
                return Err(Error::field("goal_rollouts", "applies to gridworlds only"));
            }
        }
        if let (EnvSpec::Gridworld(_), Some(_)) = (&self.env, self.stop) {
            return Err(Error::field("stop", "applies to bandits only"));
        }
        self.initial_policy().map(|_| ())
    }

    pub fn initial_policy(&self) -> Result<PolicyParams<f64>> {
        let mut params = match self.policy {
            PolicyKind::SigmoidTwoArm => PolicyParams::sigmoid(0.0),
            PolicyKind::SoftmaxTabular => {
                PolicyParams::softmax(self.env.num_states(), self.env.num_actions())
            }
        };
        if let Some(theta) = &self.init_theta {
            if theta.len() != params.dim() {
                return Err(Error::field(
                    "init_theta",
                    format!("expected {} values, got {}", params.dim(), theta.len()),
                ));
            }
            if theta.iter().any(|x| !x.is_finite()) {
                return Err(Error::field("init_theta", "values must be finite"));
            }
            params.theta_mut().copy_from_slice(theta);
        }
        Ok(params)
    }

    pub fn trace_every(&self) -> usize {
        self.trace_every.unwrap_or(match self.env {
            EnvSpec::Bandit(_) => 1,
            EnvSpec::Gridworld(_) => 10,
        })
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

/// Overlays `patch` onto `base`: objects merge key by key, `null` deletes,
/// anything else replaces.
pub fn merge_json(base: &mut serde_json::Value, patch: &serde_json::Value) {
    use serde_json::Value;
    match (base, patch) {
        (Value::Object(target), Value::Object(source)) => {
            for (key, value) in source {
                if value.is_null() {
                    target.remove(key);
                } else {
                    merge_json(target.entry(key.clone()).or_insert(Value::Null), value);
                }
            }
        }
        (slot, value) => *slot = value.clone(),
    }
}
