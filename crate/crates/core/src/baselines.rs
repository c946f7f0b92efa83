//! Baselines for bandit policies: constants, the exact value, the two
//! variance-minimising choices, perturbations of them, and the gap baseline.

use serde::{Deserialize, Serialize};

use crate::env::{BanditSpec, EnvSpec};
use crate::error::{Error, Result};
use crate::estimators::LambdaChoice;
use crate::policy::{PolicyKind, PolicyParams};
use crate::scalar::Scalar;

/// Which minimum-variance baseline a perturbation is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbFamily {
    Gradient,
    #[default]
    Natural,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaselineKind {
    Constant {
        value: f64,
    },
    /// Exact expected reward under the current policy.
    Value,
    MinVarGradient,
    MinVarNatural {
        #[serde(default)]
        lambda: LambdaChoice,
    },
    /// Minimum-variance baseline plus a fixed offset `epsilon`.
    PerturbedMinVar {
        epsilon: f64,
        #[serde(default)]
        family: PerturbFamily,
    },
    /// A constant strictly between the best and second-best means; the
    /// midpoint when `value` is omitted.
    Gap {
        #[serde(default)]
        value: Option<f64>,
    },
}

impl BaselineKind {
    /// Whether the baseline changes with the policy parameters.
    pub fn is_policy_dependent(&self) -> bool {
        !matches!(
            self,
            BaselineKind::Constant { .. } | BaselineKind::Gap { .. }
        )
    }

    pub fn validate(&self, env: &EnvSpec) -> Result<()> {
        match (self, env) {
            (BaselineKind::Constant { value }, _) if value.is_finite() => Ok(()),
            (BaselineKind::Constant { .. }, _) => {
                Err(Error::field("baseline.value", "must be finite"))
            }
            (BaselineKind::PerturbedMinVar { epsilon, .. }, _) if !epsilon.is_finite() => {
                Err(Error::field("baseline.epsilon", "must be finite"))
            }
            (BaselineKind::Gap { value }, EnvSpec::Bandit(b)) => {
                gap_baseline(b, *value).map(|_| ())
            }
            (_, EnvSpec::Bandit(_)) => Ok(()),
            (_, EnvSpec::Gridworld(_)) => Err(Error::Incompatible(
                "gridworld runs support constant baselines only".into(),
            )),
        }
    }

    /// Baseline value for the current bandit policy.
    pub fn evaluate<T: Scalar>(&self, bandit: &BanditSpec, params: &PolicyParams<T>) -> Result<T> {
        match *self {
            BaselineKind::Constant { value } => Ok(T::lit(value)),
            BaselineKind::Value => value_baseline(bandit, params),
            BaselineKind::MinVarGradient => min_var_gradient_baseline(bandit, params),
            BaselineKind::MinVarNatural { lambda } => {
                min_var_natural_baseline(bandit, params, lambda)
            }
            BaselineKind::PerturbedMinVar { epsilon, family } => {
                perturbed_min_var(bandit, params, epsilon, family)
            }
            BaselineKind::Gap { value } => gap_baseline(bandit, value).map(T::lit),
        }
    }
}

fn bandit_probs<T: Scalar>(bandit: &BanditSpec, params: &PolicyParams<T>) -> Result<Vec<T>> {
    if params.num_states() != 1 || params.num_actions() != bandit.num_arms() {
        return Err(Error::DimensionMismatch {
            policy_states: params.num_states(),
            policy_actions: params.num_actions(),
            env_states: 1,
            env_actions: bandit.num_arms(),
        });
    }
    params.action_probs(0)
}

fn weighted_mean<T: Scalar>(bandit: &BanditSpec, weights: &[T]) -> Result<T> {
    let total: T = weights.iter().copied().sum();
    if !total.is_finite() || total <= T::zero() {
        return Err(Error::DegeneratePolicy);
    }
    let num: T = bandit
        .means()
        .into_iter()
        .zip(weights)
        .map(|(r, &w)| T::lit(r) * w)
        .sum();
    Ok(num / total)
}

/// `||grad log pi(a)||^2` for every action.
pub(crate) fn score_norms<T: Scalar>(kind: PolicyKind, probs: &[T]) -> Vec<T> {
    match kind {
        PolicyKind::SigmoidTwoArm => vec![probs[1] * probs[1], probs[0] * probs[0]],
        PolicyKind::SoftmaxTabular => {
            let sq: T = probs.iter().map(|&p| p * p).sum();
            probs.iter().map(|&p| T::one() - p - p + sq).collect()
        }
    }
}

/// `sum_i r_i ||grad log pi_i||^2 pi_i / sum_i ||grad log pi_i||^2 pi_i`.
pub fn min_var_gradient_baseline<T: Scalar>(
    bandit: &BanditSpec,
    params: &PolicyParams<T>,
) -> Result<T> {
    let probs = bandit_probs(bandit, params)?;
    let weights: Vec<T> = score_norms(params.kind(), &probs)
        .into_iter()
        .zip(&probs)
        .map(|(n, &p)| n * p)
        .collect();
    weighted_mean(bandit, &weights)
}

/// Variance-minimising baseline for the natural-gradient sample
/// `(r - b) x_a`, with weights `||x_i||^2 pi_i`.
pub fn min_var_natural_baseline<T: Scalar>(
    bandit: &BanditSpec,
    params: &PolicyParams<T>,
    lambda: LambdaChoice,
) -> Result<T> {
    let probs = bandit_probs(bandit, params)?;
    if let Some(i) = probs.iter().position(|&p| p <= T::zero()) {
        return Err(Error::OnBoundary(i));
    }
    let k = T::lit(probs.len() as f64);
    // Weights are scaled by the smallest probability so that tiny
    // probabilities do not overflow `1 / pi_i`.
    let smallest = probs
        .iter()
        .copied()
        .fold(T::one(), |a, b| if b < a { b } else { a });
    let weights: Vec<T> = match (params.kind(), lambda) {
        // ||x_i||^2 pi_i = 1 / pi_i for both arms of the sigmoid.
        (PolicyKind::SigmoidTwoArm, _) | (PolicyKind::SoftmaxTabular, LambdaChoice::MinNorm) => {
            probs.iter().map(|&p| smallest / p).collect()
        }
        // ((K - 1) lam^2 + (lam + 1/p)^2) p = (K - 1) lam^2 p + (lam p + 1)^2 / p.
        (PolicyKind::SoftmaxTabular, LambdaChoice::Fixed { value }) => {
            let lam = T::lit(value);
            probs
                .iter()
                .map(|&p| {
                    let own = lam * p + T::one();
                    (k - T::one()) * lam * lam * p * smallest + own * own * (smallest / p)
                })
                .collect()
        }
    };
    weighted_mean(bandit, &weights)
}

/// Exact `V(pi) = sum_i pi_i r_i`.
pub fn value_baseline<T: Scalar>(bandit: &BanditSpec, params: &PolicyParams<T>) -> Result<T> {
    let probs = bandit_probs(bandit, params)?;
    Ok(crate::env::expected_return_exact(bandit, &probs))
}

/// Minimum-variance baseline of `family` plus `epsilon`. The natural family
/// uses the minimum-norm direction.
pub fn perturbed_min_var<T: Scalar>(
    bandit: &BanditSpec,
    params: &PolicyParams<T>,
    epsilon: f64,
    family: PerturbFamily,
) -> Result<T> {
    let base = match family {
        PerturbFamily::Gradient => min_var_gradient_baseline(bandit, params)?,
        PerturbFamily::Natural => min_var_natural_baseline(bandit, params, LambdaChoice::MinNorm)?,
    };
    Ok(base + T::lit(epsilon))
}

/// Constant strictly between the best and second-best mean rewards.
pub fn gap_baseline(bandit: &BanditSpec, value: Option<f64>) -> Result<f64> {
    let (best, second) = bandit.top_two_means();
    if best.is_nan() || second.is_nan() || best <= second {
        return Err(Error::TiedRewards { best, second });
    }
    let b = value.unwrap_or(0.5 * (best + second));
    if !(b > second && b < best) {
        return Err(Error::GapOutOfRange {
            value: b,
            best,
            second,
        });
    }
    Ok(b)
}
