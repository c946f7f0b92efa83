//! Score-function gradient estimators, natural-gradient directions and the
//! parameter update.
//!
//! The softmax Fisher matrix `F = diag(pi) - pi pi^T` is singular (`F e = 0`),
//! so natural directions are taken from the closed-form solution family of
//! `F x = e_a - pi`, namely `x = lambda e + e_a / pi_a`. The minimum-norm
//! member has `lambda = -1 / (K pi_a)` and squared norm `(K - 1) / (K pi_a^2)`.

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::env::{EnvSpec, Trajectory};
use crate::error::{Error, Result};
use crate::policy::{PolicyKind, PolicyParams};
use crate::scalar::Scalar;
use crate::theory::exp3_mixture;

/// Smallest behaviour probability accepted for a sampled action.
pub const MIN_BEHAVIOUR_PROB: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientKind {
    Vanilla,
    Natural,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaChoice {
    #[default]
    MinNorm,
    Fixed {
        value: f64,
    },
}

impl LambdaChoice {
    /// Free parameter of the natural direction for action with probability `pi_a`.
    pub fn lambda<T: Scalar>(&self, pi_a: T, arms: usize) -> T {
        match *self {
            LambdaChoice::MinNorm => min_norm_lambda(pi_a, arms),
            LambdaChoice::Fixed { value } => T::lit(value),
        }
    }
}

/// Distribution actions are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerKind {
    #[default]
    OnPolicy,
    /// `mu = (1 - gamma) pi + gamma / K`.
    Exp3 { gamma: f64 },
    /// EXP3 mixture whose per-action floor is `eps_t = c (t + 1)^-beta`.
    DecayingFloor { c: f64, beta: f64 },
}

impl SamplerKind {
    pub fn is_on_policy(&self) -> bool {
        matches!(self, SamplerKind::OnPolicy)
    }

    /// Behaviour distribution at step `t` for target probabilities `probs`.
    pub fn behaviour<T: Scalar>(&self, probs: &[T], t: usize) -> Vec<T> {
        let k = probs.len();
        match *self {
            SamplerKind::OnPolicy => probs.to_vec(),
            SamplerKind::Exp3 { gamma } => exp3_mixture(probs, T::lit(gamma)),
            SamplerKind::DecayingFloor { c, beta } => {
                let floor = c * ((t + 1) as f64).powf(-beta);
                let gamma = (k as f64 * floor).min(1.0);
                exp3_mixture(probs, T::lit(gamma))
            }
        }
    }

    /// Minimum action probability the sampler guarantees at step `t`.
    pub fn floor(&self, arms: usize, t: usize) -> f64 {
        match *self {
            SamplerKind::OnPolicy => 0.0,
            SamplerKind::Exp3 { gamma } => gamma / arms as f64,
            SamplerKind::DecayingFloor { c, beta } => {
                (c * ((t + 1) as f64).powf(-beta)).min(1.0 / arms as f64)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            SamplerKind::OnPolicy => Ok(()),
            SamplerKind::Exp3 { gamma } if gamma > 0.0 && gamma <= 1.0 => Ok(()),
            SamplerKind::Exp3 { .. } => Err(Error::field("sampler.gamma", "must lie in (0, 1]")),
            SamplerKind::DecayingFloor { c, beta } if c > 0.0 && c <= 0.5 && beta >= 0.0 => Ok(()),
            SamplerKind::DecayingFloor { .. } => Err(Error::field(
                "sampler",
                "decaying floor needs c in (0, 0.5] and beta >= 0",
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant {
        alpha: f64,
    },
    /// `alpha_t = alpha / (t + 1)^kappa`.
    RobbinsMonro {
        alpha: f64,
        kappa: f64,
    },
}

impl StepSchedule {
    pub fn alpha_at(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::RobbinsMonro { alpha, kappa } => alpha / ((t + 1) as f64).powf(kappa),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { alpha } if alpha > 0.0 && alpha.is_finite() => Ok(()),
            StepSchedule::Constant { .. } => {
                Err(Error::field("step_size.alpha", "must be positive"))
            }
            StepSchedule::RobbinsMonro { alpha, kappa } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::field("step_size.alpha", "must be positive"));
                }
                if !(kappa > 0.5 && kappa <= 1.0) {
                    return Err(Error::field("step_size.kappa", "must lie in (0.5, 1]"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub gradient: GradientKind,
    pub baseline: BaselineKind,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub lambda: LambdaChoice,
    pub step_size: StepSchedule,
}

impl EstimatorConfig {
    pub fn new(gradient: GradientKind, baseline: BaselineKind, alpha: f64) -> Self {
        Self {
            gradient,
            baseline,
            sampler: SamplerKind::OnPolicy,
            lambda: LambdaChoice::MinNorm,
            step_size: StepSchedule::Constant { alpha },
        }
    }

    pub fn with_sampler(mut self, sampler: SamplerKind) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_lambda(mut self, lambda: LambdaChoice) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_schedule(mut self, schedule: StepSchedule) -> Self {
        self.step_size = schedule;
        self
    }

    pub fn validate(&self, env: &EnvSpec) -> Result<()> {
        self.step_size.validate()?;
        self.sampler.validate()?;
        self.baseline.validate(env)?;
        if let LambdaChoice::Fixed { value } = self.lambda {
            if !value.is_finite() {
                return Err(Error::field("lambda.value", "must be finite"));
            }
        }
        if let EnvSpec::Gridworld(_) = env {
            if self.gradient == GradientKind::Natural {
                return Err(Error::Incompatible(
                    "natural gradient is restricted to bandits".into(),
                ));
            }
            if !self.sampler.is_on_policy() {
                return Err(Error::Incompatible(
                    "off-policy sampling is restricted to bandits".into(),
                ));
            }
        }
        Ok(())
    }
}

/// One stochastic gradient sample.
#[derive(Clone, Debug, PartialEq)]
pub struct GradEstimate<T> {
    pub direction: Vec<T>,
    pub sampled_action: usize,
    /// Target over behaviour probability of the sampled action (1 on-policy).
    pub is_weight: T,
    /// `R(tau) - b`.
    pub effective_return: T,
}

/// `-1 / (K pi_a)`, the minimiser of `||lambda e + e_a / pi_a||^2`.
pub fn min_norm_lambda<T: Scalar>(pi_a: T, arms: usize) -> T {
    -T::one() / (T::lit(arms as f64) * pi_a)
}

/// `F = diag(pi) - pi pi^T`.
pub fn fisher_matrix<T: Scalar>(probs: &[T]) -> Vec<Vec<T>> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            probs
                .iter()
                .enumerate()
                .map(|(j, &pj)| if i == j { pi - pi * pj } else { -pi * pj })
                .collect()
        })
        .collect()
}

/// Trajectory-level REINFORCE sample `(R - b) sum_t grad log pi(a_t | s_t)`.
pub fn vanilla_estimate<T: Scalar>(
    traj: &Trajectory,
    params: &PolicyParams<T>,
    baseline: T,
) -> Result<GradEstimate<T>> {
    let first = traj.steps().first().ok_or(Error::EmptyTrajectory)?;
    let effective = T::lit(traj.discounted_return()) - baseline;
    let mut direction = vec![T::zero(); params.dim()];
    for step in traj.steps() {
        params.accumulate_score(step.state, step.action, effective, &mut direction)?;
    }
    Ok(GradEstimate {
        direction,
        sampled_action: first.action,
        is_weight: T::one(),
        effective_return: effective,
    })
}

fn require_bandit_policy<T: Scalar>(params: &PolicyParams<T>) -> Result<()> {
    if params.num_states() != 1 {
        return Err(Error::Incompatible(
            "natural and importance-sampled estimates need a single-state policy".into(),
        ));
    }
    Ok(())
}

/// Unscaled natural direction for `action`: `lambda e + e_a / pi_a` for the
/// softmax, `1/p` or `-1/(1-p)` for the sigmoid.
pub fn natural_direction<T: Scalar>(
    params: &PolicyParams<T>,
    action: usize,
    lambda: LambdaChoice,
) -> Result<Vec<T>> {
    require_bandit_policy(params)?;
    let probs = params.action_probs(0)?;
    let pi_a = *probs.get(action).ok_or(Error::ActionOutOfRange {
        action,
        actions: probs.len(),
    })?;
    if pi_a <= T::zero() {
        return Err(Error::NumericallyCommitted {
            action,
            prob: pi_a.to_f64_lossy(),
        });
    }
    Ok(match params.kind() {
        PolicyKind::SigmoidTwoArm => {
            let sign = if action == 1 { T::one() } else { -T::one() };
            vec![sign / pi_a]
        }
        PolicyKind::SoftmaxTabular => {
            let lam = lambda.lambda(pi_a, probs.len());
            let mut x = vec![lam; probs.len()];
            x[action] = x[action] + T::one() / pi_a;
            x
        }
    })
}

/// On-policy natural-gradient sample `(r_a - b) x_a` for a bandit policy.
pub fn natural_estimate_bandit<T: Scalar>(
    params: &PolicyParams<T>,
    action: usize,
    reward: T,
    baseline: T,
    lambda: LambdaChoice,
) -> Result<GradEstimate<T>> {
    let effective = reward - baseline;
    let direction = natural_direction(params, action, lambda)?
        .into_iter()
        .map(|x| effective * x)
        .collect();
    Ok(GradEstimate {
        direction,
        sampled_action: action,
        is_weight: T::one(),
        effective_return: effective,
    })
}

/// Importance-corrected sample for an action drawn from `behaviour`.
///
/// The on-policy sample is scaled by `pi_a / mu_a`. The natural form is
/// evaluated as `(r - b)(pi_a lambda e + e_a) / mu_a`, which stays finite
/// when the target probability underflows.
pub fn is_corrected_estimate<T: Scalar>(
    params: &PolicyParams<T>,
    behaviour: &[T],
    action: usize,
    reward: T,
    baseline: T,
    gradient: GradientKind,
    lambda: LambdaChoice,
) -> Result<GradEstimate<T>> {
    require_bandit_policy(params)?;
    let probs = params.action_probs(0)?;
    if action >= probs.len() || behaviour.len() != probs.len() {
        return Err(Error::ActionOutOfRange {
            action,
            actions: probs.len(),
        });
    }
    let mu_a = behaviour[action];
    if mu_a.is_nan() || mu_a.to_f64_lossy() < MIN_BEHAVIOUR_PROB {
        return Err(Error::BehaviourTooSmall {
            action,
            prob: mu_a.to_f64_lossy(),
        });
    }
    let pi_a = probs[action];
    let weight = pi_a / mu_a;
    let effective = reward - baseline;
    let direction = match gradient {
        GradientKind::Vanilla => {
            let mut d = vec![T::zero(); params.dim()];
            params.accumulate_score_with(0, action, &probs, effective * weight, &mut d);
            d
        }
        GradientKind::Natural => match params.kind() {
            PolicyKind::SigmoidTwoArm => {
                let sign = if action == 1 { T::one() } else { -T::one() };
                vec![effective * sign / mu_a]
            }
            PolicyKind::SoftmaxTabular => {
                let k = probs.len();
                let shift = match lambda {
                    LambdaChoice::MinNorm => -T::one() / T::lit(k as f64),
                    LambdaChoice::Fixed { value } => pi_a * T::lit(value),
                };
                let mut d = vec![effective * shift / mu_a; k];
                d[action] = d[action] + effective / mu_a;
                d
            }
        },
    };
    Ok(GradEstimate {
        direction,
        sampled_action: action,
        is_weight: weight,
        effective_return: effective,
    })
}

/// `theta + alpha * direction`, without projection or clipping.
pub fn apply_update<T: Scalar>(
    params: &PolicyParams<T>,
    estimate: &GradEstimate<T>,
    alpha: T,
) -> Result<PolicyParams<T>> {
    let mut next = params.clone();
    apply_update_in_place(&mut next, &estimate.direction, alpha)?;
    Ok(next)
}

/// In-place form of [`apply_update`]; leaves `params` untouched on error.
pub fn apply_update_in_place<T: Scalar>(
    params: &mut PolicyParams<T>,
    direction: &[T],
    alpha: T,
) -> Result<()> {
    if direction.len() != params.dim() {
        return Err(Error::Incompatible(format!(
            "direction has {} components, policy has {}",
            direction.len(),
            params.dim()
        )));
    }
    if let Some(i) = params
        .theta()
        .iter()
        .zip(direction)
        .position(|(&th, &d)| !(th + alpha * d).is_finite())
    {
        return Err(Error::Diverged(i));
    }
    for (th, &d) in params.theta_mut().iter_mut().zip(direction) {
        *th = *th + alpha * d;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::BanditSpec;
    use crate::scalar::squared_norm;
    use crate::RandomStream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform3() -> PolicyParams<f64> {
        PolicyParams::softmax(1, 3)
    }

    #[test]
    fn vanilla_examples() {
        let p = PolicyParams::sigmoid(0.0f64);
        let est = vanilla_estimate(&Trajectory::bandit(1, 1.0), &p, 0.0).unwrap();
        assert_eq!(est.direction, vec![0.5]);

        let est = vanilla_estimate(&Trajectory::bandit(0, 0.7), &uniform3(), 0.7).unwrap();
        assert!(est.direction.iter().all(|&x| x == 0.0));

        let est = vanilla_estimate(&Trajectory::bandit(1, 0.7), &uniform3(), 0.0).unwrap();
        let expected = [-0.7 / 3.0, 1.4 / 3.0, -0.7 / 3.0];
        for (x, y) in est.direction.iter().zip(expected) {
            assert_relative_eq!(*x, y, epsilon = 1e-15);
        }
        let empty = Trajectory::new(vec![], 0.9, None);
        assert!(matches!(
            vanilla_estimate(&empty, &uniform3(), 0.0),
            Err(Error::EmptyTrajectory)
        ));
    }

    #[test]
    fn two_arm_vanilla_forms() {
        // (r1 - b)(1 - p) on the optimal arm, -(r0 - b) p on the other.
        let p = 0.3f64;
        let params = PolicyParams::sigmoid((p / (1.0 - p)).ln());
        let b = -0.4;
        let up = vanilla_estimate(&Trajectory::bandit(1, 1.0), &params, b).unwrap();
        let down = vanilla_estimate(&Trajectory::bandit(0, 0.0), &params, b).unwrap();
        assert_relative_eq!(up.direction[0], (1.0 - b) * (1.0 - p), epsilon = 1e-14);
        assert_relative_eq!(down.direction[0], -(0.0 - b) * p, epsilon = 1e-14);
    }

    #[test]
    fn natural_two_arm_examples() {
        let half = PolicyParams::sigmoid(0.0f64);
        let est = natural_estimate_bandit(&half, 1, 1.0, 0.0, LambdaChoice::MinNorm).unwrap();
        assert_eq!(est.direction, vec![2.0]);

        // b = 1 - p makes both updates +1.
        for theta in [-2.0f64, 0.3, 1.7] {
            let params = PolicyParams::sigmoid(theta);
            let p = params.action_probs(0).unwrap()[1];
            let b = 1.0 - p;
            let up = natural_estimate_bandit(&params, 1, 1.0, b, LambdaChoice::MinNorm).unwrap();
            let down = natural_estimate_bandit(&params, 0, 0.0, b, LambdaChoice::MinNorm).unwrap();
            assert_relative_eq!(up.direction[0], 1.0, epsilon = 1e-12);
            assert_relative_eq!(down.direction[0], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn suboptimal_pull_with_negative_baseline_decreases_theta() {
        let theta = 0.4f64;
        let params = PolicyParams::sigmoid(theta);
        let p = params.action_probs(0).unwrap()[1];
        let (alpha, b) = (0.1, -1.0);
        let est = natural_estimate_bandit(&params, 0, 0.0, b, LambdaChoice::MinNorm).unwrap();
        let next = apply_update(&params, &est, alpha).unwrap();
        assert_relative_eq!(
            next.theta()[0],
            theta - alpha * b.abs() / (1.0 - p),
            epsilon = 1e-14
        );
    }

    #[test]
    fn min_var_two_arm_update_is_plus_alpha() {
        let mut rng = RandomStream::new(4);
        let mut params = PolicyParams::sigmoid(-0.5f64);
        for _ in 0..20 {
            let probs = params.action_probs(0).unwrap();
            let a = crate::policy::sample_action(&probs, &mut rng);
            let before = params.theta()[0];
            let est =
                natural_estimate_bandit(&params, a, a as f64, probs[0], LambdaChoice::MinNorm)
                    .unwrap();
            params = apply_update(&params, &est, 0.05).unwrap();
            assert_relative_eq!(params.theta()[0], before + 0.05, epsilon = 1e-12);
        }
    }

    #[test]
    fn min_norm_squared_norm() {
        for probs_theta in [[0.0, 0.0, 0.0], [1.0, -0.5, 2.0], [-3.0, 0.2, 0.1]] {
            let params = PolicyParams::softmax_from(1, 3, probs_theta.to_vec()).unwrap();
            let probs = params.action_probs(0).unwrap();
            for (a, &pa) in probs.iter().enumerate() {
                let x = natural_direction(&params, a, LambdaChoice::MinNorm).unwrap();
                assert_relative_eq!(
                    squared_norm(&x),
                    2.0 / (3.0 * pa * pa),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn natural_zero_probability_is_reported() {
        let params = PolicyParams::softmax_from(1, 3, vec![0.0, -800.0, 0.0]).unwrap();
        assert!(matches!(
            natural_estimate_bandit(&params, 1, 0.7, 0.5, LambdaChoice::MinNorm),
            Err(Error::NumericallyCommitted { action: 1, .. })
        ));
    }

    #[test]
    fn fisher_examples() {
        let f = fisher_matrix(&[1.0f64 / 3.0; 3]);
        for (i, row) in f.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let expected = if i == j {
                    1.0 / 3.0 - 1.0 / 9.0
                } else {
                    -1.0 / 9.0
                };
                assert_relative_eq!(v, expected, epsilon = 1e-15);
            }
        }
        let f = fisher_matrix(&[1.0f64, 0.0, 0.0]);
        assert!(f.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn importance_sampling_examples() {
        let half = PolicyParams::sigmoid(0.0f64);
        let q = [0.5, 0.5];
        let est = is_corrected_estimate(
            &half,
            &q,
            1,
            1.0,
            0.0,
            GradientKind::Natural,
            LambdaChoice::MinNorm,
        )
        .unwrap();
        assert_eq!(est.direction, vec![2.0]);

        // Behaviour equal to target reproduces the on-policy sample.
        let params = PolicyParams::softmax_from(1, 3, vec![0.3, -0.2, 1.1]).unwrap();
        let probs = params.action_probs(0).unwrap();
        for a in 0..3 {
            let on = natural_estimate_bandit(&params, a, 0.7, 0.2, LambdaChoice::MinNorm).unwrap();
            let off = is_corrected_estimate(
                &params,
                &probs,
                a,
                0.7,
                0.2,
                GradientKind::Natural,
                LambdaChoice::MinNorm,
            )
            .unwrap();
            assert_eq!(off.is_weight, 1.0);
            for (x, y) in on.direction.iter().zip(&off.direction) {
                assert_relative_eq!(*x, *y, max_relative = 1e-12);
            }
            let on = vanilla_estimate(&Trajectory::bandit(a, 0.7), &params, 0.2).unwrap();
            let off = is_corrected_estimate(
                &params,
                &probs,
                a,
                0.7,
                0.2,
                GradientKind::Vanilla,
                LambdaChoice::MinNorm,
            )
            .unwrap();
            assert_eq!(on.direction, off.direction);
        }

        assert!(matches!(
            is_corrected_estimate(
                &half,
                &[1.0, 1e-13],
                1,
                1.0,
                0.0,
                GradientKind::Natural,
                LambdaChoice::MinNorm
            ),
            Err(Error::BehaviourTooSmall { action: 1, .. })
        ));
    }

    #[test]
    fn apply_update_behaviour() {
        let params = PolicyParams::softmax_from(1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let zero = GradEstimate {
            direction: vec![0.0; 3],
            sampled_action: 0,
            is_weight: 1.0,
            effective_return: 0.0,
        };
        assert_eq!(apply_update(&params, &zero, 0.5).unwrap(), params);
        let huge = GradEstimate {
            direction: vec![f64::MAX, 0.0, 0.0],
            ..zero
        };
        assert!(matches!(
            apply_update(&params, &huge, 10.0),
            Err(Error::Diverged(0))
        ));
    }

    #[test]
    fn schedule_and_sampler() {
        let rm = StepSchedule::RobbinsMonro {
            alpha: 0.5,
            kappa: 0.6,
        };
        assert_eq!(rm.alpha_at(0), 0.5);
        assert_relative_eq!(rm.alpha_at(9), 0.5 / 10f64.powf(0.6), epsilon = 1e-15);
        assert!(StepSchedule::RobbinsMonro {
            alpha: 0.5,
            kappa: 0.5
        }
        .validate()
        .is_err());

        let mu = SamplerKind::Exp3 { gamma: 0.3 }.behaviour(&[1.0f64, 0.0, 0.0], 0);
        assert_relative_eq!(mu[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(mu[1], 0.1, epsilon = 1e-15);
        let floor = SamplerKind::DecayingFloor { c: 0.5, beta: 1.0 };
        let mu = floor.behaviour(&[0.0f64, 1.0], 9);
        assert_relative_eq!(mu[0], 0.05, epsilon = 1e-15);
        assert_relative_eq!(floor.floor(2, 9), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        let grid = EnvSpec::Gridworld(crate::GridworldSpec::four_rooms());
        let cfg = EstimatorConfig::new(
            GradientKind::Natural,
            BaselineKind::Constant { value: 0.0 },
            0.1,
        );
        assert!(matches!(cfg.validate(&grid), Err(Error::Incompatible(_))));
        let bandit = EnvSpec::Bandit(BanditSpec::deterministic(&[0.0, 1.0]).unwrap());
        assert!(cfg.validate(&bandit).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn natural_directions_solve_fisher_system(
            theta in prop::collection::vec(-3.0f64..3.0, 3),
            lam in -5.0f64..5.0,
            action in 0usize..3,
        ) {
            let params = PolicyParams::softmax_from(1, 3, theta).unwrap();
            let probs = params.action_probs(0).unwrap();
            let f = fisher_matrix(&probs);
            for choice in [LambdaChoice::MinNorm, LambdaChoice::Fixed { value: 0.0 }, LambdaChoice::Fixed { value: lam }] {
                let x = natural_direction(&params, action, choice).unwrap();
                let residual: f64 = (0..3)
                    .map(|i| {
                        let fx: f64 = (0..3).map(|j| f[i][j] * x[j]).sum();
                        let g = if i == action { 1.0 - probs[i] } else { -probs[i] };
                        (fx - g).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                prop_assert!(residual < 1e-12);
            }
        }

        #[test]
        fn min_norm_is_smallest(theta in prop::collection::vec(-3.0f64..3.0, 3), action in 0usize..3, lam in -20.0f64..20.0) {
            let params = PolicyParams::softmax_from(1, 3, theta).unwrap();
            let best = squared_norm(&natural_direction(&params, action, LambdaChoice::MinNorm).unwrap());
            let other = squared_norm(&natural_direction(&params, action, LambdaChoice::Fixed { value: lam }).unwrap());
            prop_assert!(best <= other * (1.0 + 1e-12));
        }

        #[test]
        fn lambda_choice_does_not_change_next_policy(
            theta in prop::collection::vec(-3.0f64..3.0, 3),
            action in 0usize..3,
            reward in -1.0f64..1.0,
        ) {
            let params = PolicyParams::softmax_from(1, 3, theta).unwrap();
            let a = natural_estimate_bandit(&params, action, reward, 0.1, LambdaChoice::MinNorm).unwrap();
            let b = natural_estimate_bandit(&params, action, reward, 0.1, LambdaChoice::Fixed { value: 0.0 }).unwrap();
            let pa = apply_update(&params, &a, 0.05).unwrap().action_probs(0).unwrap();
            let pb = apply_update(&params, &b, 0.05).unwrap().action_probs(0).unwrap();
            for (x, y) in pa.iter().zip(&pb) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
