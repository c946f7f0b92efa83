//! Closed-form quantities for the two-arm bandit: variances, the
//! stuck-probability bound, perturbation regimes, exploration floors and
//! martingale increment constants.

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::env::BanditSpec;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, GradientKind};
use crate::scalar::Scalar;

/// Long-run behaviour of natural-gradient ascent with baseline `b* + epsilon`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeLabel {
    CommittalPossible,
    #[serde(rename = "converges-a.s.")]
    Converges,
    SupDiverges,
}

impl RegimeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::CommittalPossible => "committal-possible",
            RegimeLabel::Converges => "converges-a.s.",
            RegimeLabel::SupDiverges => "sup-diverges",
        }
    }
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_open_unit(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

/// Variance of the two-arm natural-gradient sample with rewards 1 (optimal)
/// and 0: `(1 - p - b)^2 / (p (1 - p))`.
pub fn two_arm_variance(p: f64, b: f64) -> Result<f64> {
    check_open_unit(p)?;
    let d = 1.0 - p - b;
    Ok(d * d / (p * (1.0 - p)))
}

/// Same setting for the vanilla sample `(r - b) d log pi / d theta`.
pub fn two_arm_vanilla_variance(p: f64, b: f64) -> Result<f64> {
    check_open_unit(p)?;
    let q = 1.0 - p;
    let second = p * q * q * (1.0 - b) * (1.0 - b) + q * p * p * b * b;
    let mean = p * q;
    Ok(second - mean * mean)
}

fn check_bound_args(theta0: f64, alpha: f64, b: f64) -> Result<()> {
    if theta0 > 0.0 {
        return Err(Error::BoundNotApplicable(format!(
            "initial parameter {theta0} is positive"
        )));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::BoundNotApplicable(format!(
            "step size {alpha} is not positive"
        )));
    }
    if b.is_nan() || b >= 0.0 {
        return Err(Error::BoundNotApplicable(format!(
            "baseline {b} is not negative"
        )));
    }
    Ok(())
}

/// Lower bound on the probability that natural-gradient ascent with constant
/// baseline `b < 0` never samples the optimal arm:
/// `(1 - e^theta0) (1 - e^(theta0 + alpha b))^(-1 / (alpha b))`.
pub fn stuck_bound_statement(theta0: f64, alpha: f64, b: f64) -> Result<f64> {
    check_bound_args(theta0, alpha, b)?;
    let ab = alpha * b;
    Ok(-theta0.exp_m1() * (-(theta0 + ab).exp_m1()).powf(-1.0 / ab))
}

/// The same bound written as `(1 - e^theta0) (1 - e^(theta0 - alpha b))^(1 / (alpha b))`.
///
/// With `b < 0` this form exceeds one or is undefined; it agrees with
/// [`stuck_bound_statement`] only when `b` is read as `|b|`.
pub fn stuck_bound_proof(theta0: f64, alpha: f64, b: f64) -> Result<f64> {
    check_bound_args(theta0, alpha, b)?;
    let ab = alpha * b;
    Ok(-theta0.exp_m1() * (-(theta0 - ab).exp_m1()).powf(1.0 / ab))
}

/// Regime of the perturbed minimum-variance baseline `b* + epsilon`.
pub fn classify_epsilon_regime(epsilon: f64) -> Result<RegimeLabel> {
    if !epsilon.is_finite() {
        return Err(Error::field("epsilon", "must be finite"));
    }
    if epsilon == -1.0 {
        Err(Error::UnresolvedRegime)
    } else if epsilon < -1.0 {
        Ok(RegimeLabel::CommittalPossible)
    } else if epsilon < 1.0 {
        Ok(RegimeLabel::Converges)
    } else {
        Ok(RegimeLabel::SupDiverges)
    }
}

/// Per-action exploration floor as a function of the step index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FloorSchedule {
    /// `c t^-beta`.
    Power { c: f64, beta: f64 },
    /// `c e^(-rate t)`.
    Exponential { c: f64, rate: f64 },
}

impl FloorSchedule {
    pub fn at(&self, t: usize) -> f64 {
        let t = t as f64;
        match *self {
            FloorSchedule::Power { c, beta } => c * t.powf(-beta),
            FloorSchedule::Exponential { c, rate } => c * (-rate * t).exp(),
        }
    }
}

/// Whether `t eps_t^2` diverges.
pub fn is_condition_holds(schedule: &FloorSchedule) -> bool {
    match *schedule {
        FloorSchedule::Power { c, beta } => c > 0.0 && beta < 0.5,
        FloorSchedule::Exponential { c, rate } => c > 0.0 && rate <= 0.0,
    }
}

/// `(1 - gamma) pi + gamma / K`.
pub fn exp3_mixture<T: Scalar>(probs: &[T], gamma: T) -> Vec<T> {
    let share = gamma / T::lit(probs.len() as f64);
    probs
        .iter()
        .map(|&p| (T::one() - gamma) * p + share)
        .collect()
}

/// Increment constant of the martingale `sum alpha_t (g_t - E[g_t | theta_t])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncrementBound {
    pub constant: f64,
    /// Exploration floor dividing the constant, for importance-sampled runs.
    pub floor: Option<f64>,
}

impl IncrementBound {
    /// Largest single-step increment for step size `alpha`.
    pub fn limit(&self, alpha: f64) -> f64 {
        match self.floor {
            Some(eps) => self.constant * alpha / eps,
            None => self.constant * alpha,
        }
    }
}

/// Increment constant for a two-arm sigmoid run.
///
/// With `B` bounding `|r - b|` and `Delta` the gap in mean rewards:
/// vanilla gives `B + Delta / 4`, importance-sampled vanilla `(B + Delta) / 4`
/// and importance-sampled natural `B + Delta`, the latter two over the floor.
/// The on-policy natural sample has no bounded increments.
pub fn azuma_increment_bound(
    config: &EstimatorConfig,
    bandit: &BanditSpec,
    floor: f64,
) -> Result<IncrementBound> {
    if bandit.num_arms() != 2 {
        return Err(Error::Incompatible(
            "increment bounds cover two-arm bandits".into(),
        ));
    }
    let (lo, hi) = bandit
        .arms()
        .iter()
        .map(|a| a.support())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        });
    let means = bandit.means();
    let delta = (means[1] - means[0]).abs();
    let range = hi - lo;
    let b_max = match config.baseline {
        BaselineKind::Constant { value } => (hi - value).abs().max((value - lo).abs()),
        BaselineKind::Gap { value } => {
            let b = crate::baselines::gap_baseline(bandit, value)?;
            (hi - b).abs().max((b - lo).abs())
        }
        BaselineKind::Value | BaselineKind::MinVarGradient | BaselineKind::MinVarNatural { .. } => {
            range
        }
        BaselineKind::PerturbedMinVar { epsilon, .. } => range + epsilon.abs(),
    };
    match (config.gradient, config.sampler.is_on_policy()) {
        (GradientKind::Vanilla, true) => Ok(IncrementBound {
            constant: b_max + delta / 4.0,
            floor: None,
        }),
        (_, false) if !(floor > 0.0 && floor <= 0.5) => Err(Error::field(
            "floor",
            "must lie in (0, 0.5] for importance sampling",
        )),
        (GradientKind::Vanilla, false) => Ok(IncrementBound {
            constant: (b_max + delta) / 4.0,
            floor: Some(floor),
        }),
        (GradientKind::Natural, false) => Ok(IncrementBound {
            constant: b_max + delta,
            floor: Some(floor),
        }),
        (GradientKind::Natural, true) => Err(Error::UnboundedIncrements(
            "on-policy natural samples scale with 1 / p".into(),
        )),
    }
}
