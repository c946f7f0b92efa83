//! Tabular softmax and two-arm sigmoid policies.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;
use crate::scalar::{sigmoid, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// One logit per (state, action); `pi(a|s) = exp(theta_sa) / sum_b exp(theta_sb)`.
    SoftmaxTabular,
    /// Single logit `theta`; action 1 is taken with probability `sigmoid(theta)`.
    SigmoidTwoArm,
}

/// Policy parameters. The logit vector is laid out state-major: the block of
/// state `s` is `theta[s * actions .. (s + 1) * actions]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams<T> {
    kind: PolicyKind,
    states: usize,
    actions: usize,
    theta: Vec<T>,
}

impl<T: Scalar> PolicyParams<T> {
    /// Uniform softmax policy (all logits zero).
    pub fn softmax(states: usize, actions: usize) -> Self {
        Self {
            kind: PolicyKind::SoftmaxTabular,
            states,
            actions,
            theta: vec![T::zero(); states * actions],
        }
    }

    pub fn softmax_from(states: usize, actions: usize, theta: Vec<T>) -> Result<Self> {
        if theta.len() != states * actions {
            return Err(Error::DimensionMismatch {
                policy_states: theta.len() / actions.max(1),
                policy_actions: actions,
                env_states: states,
                env_actions: actions,
            });
        }
        let p = Self {
            kind: PolicyKind::SoftmaxTabular,
            states,
            actions,
            theta,
        };
        p.check_finite()?;
        Ok(p)
    }

    pub fn sigmoid(theta: T) -> Self {
        Self {
            kind: PolicyKind::SigmoidTwoArm,
            states: 1,
            actions: 2,
            theta: vec![theta],
        }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn num_states(&self) -> usize {
        self.states
    }

    pub fn num_actions(&self) -> usize {
        self.actions
    }

    /// Length of the logit vector.
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [T] {
        &mut self.theta
    }

    pub fn into_theta(self) -> Vec<T> {
        self.theta
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.theta.iter().position(|x| !x.is_finite()) {
            Some(i) => Err(Error::NonFiniteLogits(i)),
            None => Ok(()),
        }
    }

    /// Range of the logits that belong to `state`.
    pub fn state_block(&self, state: usize) -> Range<usize> {
        match self.kind {
            PolicyKind::SoftmaxTabular => state * self.actions..(state + 1) * self.actions,
            PolicyKind::SigmoidTwoArm => 0..1,
        }
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.states {
            return Err(Error::StateOutOfRange {
                state,
                states: self.states,
            });
        }
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.actions {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.actions,
            });
        }
        Ok(())
    }

    pub fn action_probs(&self, state: usize) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.actions];
        self.action_probs_into(state, &mut out)?;
        Ok(out)
    }

    /// Writes `pi(.|state)` into `out` (length = number of actions).
    pub fn action_probs_into(&self, state: usize, out: &mut [T]) -> Result<()> {
        self.check_state(state)?;
        let block = self.state_block(state);
        let logits = &self.theta[block.clone()];
        if let Some(i) = logits.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLogits(block.start + i));
        }
        match self.kind {
            PolicyKind::SigmoidTwoArm => {
                let th = logits[0];
                out[0] = sigmoid(-th);
                out[1] = sigmoid(th);
            }
            PolicyKind::SoftmaxTabular => {
                let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for (o, &l) in out.iter_mut().zip(logits) {
                    *o = (l - max).exp();
                    total = total + *o;
                }
                for o in out.iter_mut() {
                    *o = *o / total;
                }
            }
        }
        Ok(())
    }

    /// `grad_theta log pi(action | state)` over the full logit vector.
    pub fn score_gradient(&self, state: usize, action: usize) -> Result<Vec<T>> {
        let mut out = vec![T::zero(); self.dim()];
        self.accumulate_score(state, action, T::one(), &mut out)?;
        Ok(out)
    }

    /// Adds `scale * grad log pi(action | state)` into `out`.
    pub fn accumulate_score(
        &self,
        state: usize,
        action: usize,
        scale: T,
        out: &mut [T],
    ) -> Result<()> {
        self.check_action(action)?;
        let mut probs = [T::zero(); 8];
        let mut heap;
        let probs: &mut [T] = if self.actions <= probs.len() {
            &mut probs[..self.actions]
        } else {
            heap = vec![T::zero(); self.actions];
            &mut heap
        };
        self.action_probs_into(state, probs)?;
        self.accumulate_score_with(state, action, probs, scale, out);
        Ok(())
    }

    /// Score accumulation when `probs = pi(.|state)` is already known.
    pub(crate) fn accumulate_score_with(
        &self,
        state: usize,
        action: usize,
        probs: &[T],
        scale: T,
        out: &mut [T],
    ) {
        match self.kind {
            PolicyKind::SigmoidTwoArm => {
                // d/dtheta log sigmoid(theta) = 1 - p ; d/dtheta log(1 - p) = -p.
                let g = if action == 1 { probs[0] } else { -probs[1] };
                out[0] = out[0] + scale * g;
            }
            PolicyKind::SoftmaxTabular => {
                let block = self.state_block(state);
                for (j, (o, &p)) in out[block].iter_mut().zip(probs).enumerate() {
                    let indicator = if j == action { T::one() } else { T::zero() };
                    *o = *o + scale * (indicator - p);
                }
            }
        }
    }

    /// `log pi(action | state)`.
    pub fn log_prob(&self, state: usize, action: usize) -> Result<T> {
        self.check_action(action)?;
        self.check_state(state)?;
        let logits = &self.theta[self.state_block(state)];
        match self.kind {
            PolicyKind::SigmoidTwoArm => {
                let th = if action == 1 { logits[0] } else { -logits[0] };
                // log sigmoid(x) = -log(1 + e^{-x}), evaluated stably.
                Ok(if th >= T::zero() {
                    -(-th).exp().ln_1p()
                } else {
                    th - th.exp().ln_1p()
                })
            }
            PolicyKind::SoftmaxTabular => {
                let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
                Ok(logits[action] - lse)
            }
        }
    }
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn action_entropy<T: Scalar>(probs: &[T]) -> T {
    probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| -p * p.ln())
        .sum()
}

/// Inverse-CDF draw over `probs` in index order.
pub fn sample_action<T: Scalar>(probs: &[T], rng: &mut RandomStream) -> usize {
    let u = rng.uniform();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p > 0.0 {
            last_positive = i;
            cumulative += p;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_and_hand_computed_probs() {
        let p = PolicyParams::<f64>::softmax(1, 3).action_probs(0).unwrap();
        for x in p {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        let sig = PolicyParams::sigmoid(0.0f64).action_probs(0).unwrap();
        assert_eq!(sig, vec![0.5, 0.5]);
        let p = PolicyParams::softmax_from(1, 3, vec![2f64.ln(), 0.0, 0.0])
            .unwrap()
            .action_probs(0)
            .unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.25, epsilon = 1e-15);
        assert_relative_eq!(p[2], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn extreme_logits_are_stable() {
        let p = PolicyParams::softmax_from(1, 3, vec![700.0f64, -700.0, 0.0])
            .unwrap()
            .action_probs(0)
            .unwrap();
        assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut bad = PolicyParams::<f64>::softmax(1, 3);
        bad.theta_mut()[1] = f64::NAN;
        assert!(matches!(
            bad.action_probs(0),
            Err(Error::NonFiniteLogits(1))
        ));
        assert!(PolicyParams::softmax_from(1, 2, vec![f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn score_examples() {
        let uniform = PolicyParams::<f64>::softmax(1, 3);
        let g = uniform.score_gradient(0, 0).unwrap();
        assert_relative_eq!(g[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g[1], -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g[2], -1.0 / 3.0, epsilon = 1e-15);

        assert_eq!(
            PolicyParams::sigmoid(0.0f64).score_gradient(0, 1).unwrap(),
            vec![0.5]
        );
        assert_eq!(
            PolicyParams::sigmoid(0.0f64).score_gradient(0, 0).unwrap(),
            vec![-0.5]
        );

        let skew = PolicyParams::softmax_from(1, 3, vec![2f64.ln(), 0.0, 0.0]).unwrap();
        let g = skew.score_gradient(0, 2).unwrap();
        assert_relative_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_relative_eq!(g[1], -0.25, epsilon = 1e-15);
        assert_relative_eq!(g[2], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn score_touches_only_its_state_block() {
        let p = PolicyParams::<f64>::softmax(3, 4);
        let g = p.score_gradient(1, 2).unwrap();
        assert!(g[..4].iter().all(|&x| x == 0.0));
        assert!(g[8..].iter().all(|&x| x == 0.0));
        assert_relative_eq!(g[6], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn entropy_examples() {
        let third = 1.0f64 / 3.0;
        assert_relative_eq!(
            action_entropy(&[third, third, third]),
            3f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(action_entropy(&[1.0f64, 0.0, 0.0]), 0.0);
        assert_relative_eq!(
            action_entropy(&[0.5f64, 0.25, 0.25]),
            1.0397207708399179,
            epsilon = 1e-15
        );
    }

    #[test]
    fn sampling_degenerate_and_frequencies() {
        let mut rng = RandomStream::new(9);
        for _ in 0..100 {
            assert_eq!(sample_action(&[1.0f64, 0.0, 0.0], &mut rng), 0);
            assert_eq!(sample_action(&[0.0f64, 1.0], &mut rng), 1);
        }
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| sample_action(&[0.3f64, 0.7], &mut rng) == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.7).abs() < 0.01);
    }

    #[test]
    fn generic_over_f32() {
        let p = PolicyParams::softmax_from(1, 3, vec![2f32.ln(), 0.0, 0.0]).unwrap();
        let probs = p.action_probs(0).unwrap();
        assert!((probs[0] - 0.5).abs() < 1e-6);
        assert!((action_entropy(&probs) - 1.039_720_8).abs() < 1e-5);
    }

    fn finite_difference_check(p: &PolicyParams<f64>, state: usize, action: usize) {
        let g = p.score_gradient(state, action).unwrap();
        let h = 1e-5;
        for (j, &gj) in g.iter().enumerate() {
            let mut plus = p.clone();
            plus.theta_mut()[j] += h;
            let mut minus = p.clone();
            minus.theta_mut()[j] -= h;
            let fd = (plus.log_prob(state, action).unwrap()
                - minus.log_prob(state, action).unwrap())
                / (2.0 * h);
            assert!((fd - gj).abs() < 1e-6, "component {j}: fd {fd} vs {gj}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn score_matches_finite_differences(
            theta in prop::collection::vec(-4.0f64..4.0, 6),
            state in 0usize..2,
            action in 0usize..3,
        ) {
            let p = PolicyParams::softmax_from(2, 3, theta).unwrap();
            finite_difference_check(&p, state, action);
        }

        #[test]
        fn sigmoid_score_matches_finite_differences(theta in -6.0f64..6.0, action in 0usize..2) {
            finite_difference_check(&PolicyParams::sigmoid(theta), 0, action);
        }

        #[test]
        fn softmax_shift_invariance(theta in prop::collection::vec(-50.0f64..50.0, 4), shift in -100.0f64..100.0) {
            let p = PolicyParams::softmax_from(1, 4, theta.clone()).unwrap();
            let q = PolicyParams::softmax_from(1, 4, theta.iter().map(|x| x + shift).collect()).unwrap();
            let (a, b) = (p.action_probs(0).unwrap(), q.action_probs(0).unwrap());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn expected_score_is_zero(theta in prop::collection::vec(-5.0f64..5.0, 4)) {
            let p = PolicyParams::softmax_from(1, 4, theta).unwrap();
            let probs = p.action_probs(0).unwrap();
            let mut mean = vec![0.0; 4];
            for (a, &pa) in probs.iter().enumerate() {
                p.accumulate_score(0, a, pa, &mut mean).unwrap();
            }
            prop_assert!(mean.iter().all(|x| x.abs() < 1e-12));
        }

        #[test]
        fn probabilities_form_a_simplex(theta in prop::collection::vec(-700.0f64..700.0, 5)) {
            let probs = PolicyParams::softmax_from(1, 5, theta).unwrap().action_probs(0).unwrap();
            prop_assert!(probs.iter().all(|&x| x >= 0.0));
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
