//! Derived measurements: exact estimator variances and simplex maps of their
//! ratios, entropy traces, goal-reach frequencies and outcome labels.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::env::{BanditSpec, GridworldSpec, Trajectory};
use crate::error::{Error, Result};
use crate::estimators::{
    is_corrected_estimate, natural_estimate_bandit, vanilla_estimate, EstimatorConfig, GradientKind,
};
use crate::policy::{action_entropy, PolicyParams};
use crate::rng::RandomStream;
use crate::scalar::{squared_norm, Scalar};

/// Default convergence tolerance for outcome labels.
pub const DELTA_CONV: f64 = 0.05;

/// Tolerances reported alongside the default.
pub const DELTA_SENSITIVITY: [f64; 3] = [0.01, 0.05, 0.1];

/// First and second moments of a bandit gradient sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorMoments<T> {
    pub mean: Vec<T>,
    /// `E ||g||^2`.
    pub second: T,
}

impl<T: Scalar> EstimatorMoments<T> {
    /// `E ||g||^2 - ||E g||^2`.
    pub fn variance(&self) -> T {
        self.second - squared_norm(&self.mean)
    }
}

/// Moments of the configured estimator at step `t`, enumerating every action
/// the sampler can draw.
pub fn estimator_moments<T: Scalar>(
    config: &EstimatorConfig,
    bandit: &BanditSpec,
    params: &PolicyParams<T>,
    t: usize,
) -> Result<EstimatorMoments<T>> {
    if !bandit.is_deterministic() {
        return Err(Error::Incompatible(
            "exact moments need deterministic rewards".into(),
        ));
    }
    if params.num_states() != 1 || params.num_actions() != bandit.num_arms() {
        return Err(Error::DimensionMismatch {
            policy_states: params.num_states(),
            policy_actions: params.num_actions(),
            env_states: 1,
            env_actions: bandit.num_arms(),
        });
    }
    let probs = params.action_probs(0)?;
    let on_policy = config.sampler.is_on_policy();
    if on_policy && config.gradient == GradientKind::Natural {
        if let Some(i) = probs.iter().position(|&p| p <= T::zero()) {
            return Err(Error::OnBoundary(i));
        }
    }
    let behaviour = config.sampler.behaviour(&probs, t);
    let b = config.baseline.evaluate(bandit, params)?;
    let rewards = bandit.means();
    let mut mean = vec![T::zero(); params.dim()];
    let mut second = T::zero();
    for (a, &mu) in behaviour.iter().enumerate() {
        if on_policy && mu <= T::zero() {
            continue;
        }
        let r = T::lit(rewards[a]);
        let g = match (on_policy, config.gradient) {
            (true, GradientKind::Vanilla) => {
                vanilla_estimate(&Trajectory::bandit(a, rewards[a]), params, b)?
            }
            (true, GradientKind::Natural) => {
                natural_estimate_bandit(params, a, r, b, config.lambda)?
            }
            (false, kind) => {
                is_corrected_estimate(params, &behaviour, a, r, b, kind, config.lambda)?
            }
        };
        for (m, &x) in mean.iter_mut().zip(&g.direction) {
            *m = *m + mu * x;
        }
        second = second + mu * squared_norm(&g.direction);
    }
    Ok(EstimatorMoments { mean, second })
}

/// Exact variance `E ||g||^2 - ||E g||^2` at step 0.
pub fn exact_variance<T: Scalar>(
    config: &EstimatorConfig,
    bandit: &BanditSpec,
    params: &PolicyParams<T>,
) -> Result<T> {
    estimator_moments(config, bandit, params, 0).map(|m| m.variance())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariancePoint {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    #[serde(rename = "varA")]
    pub var_a: f64,
    #[serde(rename = "varB")]
    pub var_b: f64,
    pub log_ratio: f64,
}

impl VariancePoint {
    pub fn probs(&self) -> [f64; 3] {
        [self.p1, self.p2, self.p3]
    }
}

/// `ln(varA / varB)` over a barycentric grid of the three-arm simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceMap {
    pub resolution: usize,
    pub margin: f64,
    pub points: Vec<VariancePoint>,
}

impl VarianceMap {
    pub fn is_nan_free(&self) -> bool {
        self.points
            .iter()
            .all(|p| !p.var_a.is_nan() && !p.var_b.is_nan() && !p.log_ratio.is_nan())
    }

    /// Point closest to `probs` in Euclidean distance.
    pub fn nearest(&self, probs: [f64; 3]) -> Option<&VariancePoint> {
        self.points.iter().min_by(|a, b| {
            let da: f64 = a
                .probs()
                .iter()
                .zip(probs)
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            let db: f64 = b
                .probs()
                .iter()
                .zip(probs)
                .map(|(x, y)| (x - y).powi(2))
                .sum();
            da.total_cmp(&db)
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        for p in &self.points {
            out.serialize(p)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Barycentric grid with `resolution` points per edge, shrunk so every
/// component is at least `margin`.
pub fn simplex_grid(resolution: usize, margin: f64) -> Result<Vec<[f64; 3]>> {
    if resolution < 2 {
        return Err(Error::field("resolution", "must be at least 2"));
    }
    if !(margin > 0.0 && margin < 1.0 / 3.0) {
        return Err(Error::field("margin", "must lie in (0, 1/3)"));
    }
    let n = resolution - 1;
    let scale = 1.0 - 3.0 * margin;
    let mut points = Vec::with_capacity(resolution * (resolution + 1) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let k = n - i - j;
            let bary = [i, j, k].map(|c| margin + scale * c as f64 / n as f64);
            points.push(bary);
        }
    }
    Ok(points)
}

/// Softmax logits reproducing `probs`.
pub fn logits_for(probs: &[f64]) -> Result<PolicyParams<f64>> {
    PolicyParams::softmax_from(1, probs.len(), probs.iter().map(|p| p.ln()).collect())
}

/// Exact variance ratio of two estimators over the simplex.
pub fn variance_ratio_map(
    config_a: &EstimatorConfig,
    config_b: &EstimatorConfig,
    bandit: &BanditSpec,
    resolution: usize,
    margin: f64,
) -> Result<VarianceMap> {
    if bandit.num_arms() != 3 {
        return Err(Error::Incompatible(
            "variance maps need a three-arm bandit".into(),
        ));
    }
    let grid = simplex_grid(resolution, margin)?;
    let points = grid
        .par_iter()
        .map(|probs| {
            let params = logits_for(probs)?;
            let var_a = exact_variance(config_a, bandit, &params)?;
            let var_b = if config_a == config_b {
                var_a
            } else {
                exact_variance(config_b, bandit, &params)?
            };
            let log_ratio = if var_a == var_b {
                0.0
            } else {
                (var_a / var_b).ln()
            };
            Ok(VariancePoint {
                p1: probs[0],
                p2: probs[1],
                p3: probs[2],
                var_a,
                var_b,
                log_ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceMap {
        resolution,
        margin,
        points,
    })
}

/// Mean action entropy over the states visited by `traj`.
pub fn trajectory_action_entropy<T: Scalar>(
    params: &PolicyParams<T>,
    traj: &Trajectory,
) -> Result<f64> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let mut probs = vec![T::zero(); params.num_actions()];
    let mut total = 0.0;
    for step in traj.steps() {
        params.action_probs_into(step.state, &mut probs)?;
        total += action_entropy(&probs).to_f64_lossy();
    }
    Ok(total / traj.len() as f64)
}

/// Cumulative state-visit counts.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitCounter {
    counts: Vec<u64>,
    total: u64,
}

impl VisitCounter {
    pub fn new(num_states: usize) -> Self {
        Self {
            counts: vec![0; num_states],
            total: 0,
        }
    }

    /// Counts every state the episode occupied, including the goal it ended in.
    pub fn record(&mut self, traj: &Trajectory) {
        let goal = traj.reached_goal();
        for s in traj.steps().iter().map(|s| s.state).chain(goal) {
            self.counts[s] += 1;
            self.total += 1;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Entropy in nats of the normalised counts.
    pub fn entropy(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = self.total as f64;
        -self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum::<f64>()
    }
}

/// Per-episode summary of a gridworld run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub discounted_return: f64,
    pub length: usize,
    pub reached_goal: Option<usize>,
    /// Mean action entropy over the visited states, under the policy that
    /// generated the episode.
    pub action_entropy: f64,
    /// Entropy of all state visits up to and including this episode.
    pub state_entropy: f64,
}

/// Per-episode action entropy and cumulative state-visit entropy.
pub fn entropy_traces(episodes: &[EpisodeStats]) -> Result<(Vec<f64>, Vec<f64>)> {
    if episodes.is_empty() {
        return Err(Error::EmptyRun);
    }
    Ok(episodes
        .iter()
        .map(|e| (e.action_entropy, e.state_entropy))
        .unzip())
}

/// Empirical goal-reach frequencies for a three-goal gridworld.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoalProjection {
    /// Goal cells ordered by decreasing reward.
    pub goals: [usize; 3],
    /// Reach frequencies among episodes that ended in a goal.
    pub simplex: [f64; 3],
    /// Fraction of episodes that reached no goal within the horizon.
    pub none_fraction: f64,
    pub rollouts: usize,
}

/// Goal cells of a three-goal layout, best reward first.
pub fn ordered_goals(grid: &GridworldSpec) -> Result<[usize; 3]> {
    let mut goals: Vec<(usize, f64)> = grid.goals().iter().map(|(&c, &r)| (c, r)).collect();
    if goals.len() != 3 {
        return Err(Error::Incompatible(format!(
            "goal projection needs three goals, layout has {}",
            goals.len()
        )));
    }
    goals.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok([goals[0].0, goals[1].0, goals[2].0])
}

pub fn goal_simplex_projection<T: Scalar>(
    grid: &GridworldSpec,
    params: &PolicyParams<T>,
    n_rollouts: usize,
    rng: &mut RandomStream,
) -> Result<GoalProjection> {
    let goals = ordered_goals(grid)?;
    if n_rollouts == 0 {
        return Err(Error::field("n_rollouts", "must be at least 1"));
    }
    let env = crate::env::EnvSpec::Gridworld(grid.clone());
    let mut counts = [0u64; 4];
    for _ in 0..n_rollouts {
        let traj = crate::env::rollout(&env, params, rng)?;
        let slot = traj
            .reached_goal()
            .and_then(|g| goals.iter().position(|&c| c == g))
            .unwrap_or(3);
        counts[slot] += 1;
    }
    let reached: u64 = counts[..3].iter().sum();
    let simplex = if reached == 0 {
        [0.0; 3]
    } else {
        [0, 1, 2].map(|i| counts[i] as f64 / reached as f64)
    };
    Ok(GoalProjection {
        goals,
        simplex,
        none_fraction: counts[3] as f64 / n_rollouts as f64,
        rollouts: n_rollouts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutcomeLabel {
    Optimal,
    Suboptimal(usize),
    Undecided,
}

impl fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeLabel::Optimal => f.write_str("optimal"),
            OutcomeLabel::Suboptimal(k) => write!(f, "suboptimal({k})"),
            OutcomeLabel::Undecided => f.write_str("undecided"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub label: OutcomeLabel,
    pub final_policy: Vec<f64>,
    pub steps: usize,
}

/// Labels a run by the arm holding at least `1 - delta` of the final policy.
pub fn classify_outcome(
    final_policy: &[f64],
    optimal_arm: usize,
    steps: usize,
    delta: f64,
) -> RunOutcome {
    let label = match final_policy.iter().position(|&p| p >= 1.0 - delta) {
        Some(k) if k == optimal_arm => OutcomeLabel::Optimal,
        Some(k) => OutcomeLabel::Suboptimal(k),
        None => OutcomeLabel::Undecided,
    };
    RunOutcome {
        label,
        final_policy: final_policy.to_vec(),
        steps,
    }
}
