//! Seeded execution of independent runs and their aggregation.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, StopRule};
use crate::analytics::{
    classify_outcome, goal_simplex_projection, trajectory_action_entropy, EpisodeStats,
    GoalProjection, OutcomeLabel, RunOutcome, VisitCounter, DELTA_SENSITIVITY,
};
use crate::env::Trajectory;
use crate::env::{expected_return_exact, rollout, BanditSpec, EnvSpec, GridworldSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    apply_update_in_place, is_corrected_estimate, natural_estimate_bandit, vanilla_estimate,
    EstimatorConfig, GradEstimate, GradientKind,
};
use crate::policy::{sample_action, PolicyParams};
use crate::rng::{derive_seed, RandomStream};

/// One update of a bandit learner.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditStep {
    pub step: usize,
    /// Target policy before the update.
    pub probs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub baseline: f64,
    pub effective_return: f64,
    pub alpha: f64,
    pub direction: Vec<f64>,
}

/// Step-by-step driver for a single bandit run.
#[derive(Clone, Debug)]
pub struct BanditLearner {
    bandit: BanditSpec,
    estimator: EstimatorConfig,
    params: PolicyParams<f64>,
    rng: RandomStream,
    t: usize,
}

impl BanditLearner {
    pub fn new(
        bandit: BanditSpec,
        estimator: EstimatorConfig,
        params: PolicyParams<f64>,
        rng: RandomStream,
    ) -> Result<Self> {
        if params.num_states() != 1 || params.num_actions() != bandit.num_arms() {
            return Err(Error::DimensionMismatch {
                policy_states: params.num_states(),
                policy_actions: params.num_actions(),
                env_states: 1,
                env_actions: bandit.num_arms(),
            });
        }
        estimator.validate(&EnvSpec::Bandit(bandit.clone()))?;
        Ok(Self {
            bandit,
            estimator,
            params,
            rng,
            t: 0,
        })
    }

    pub fn params(&self) -> &PolicyParams<f64> {
        &self.params
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn probs(&self) -> Result<Vec<f64>> {
        self.params.action_probs(0)
    }

    /// Samples an action, forms the configured estimate and updates.
    ///
    /// Leaves the parameters unchanged when the update would overflow.
    pub fn step(&mut self) -> Result<BanditStep> {
        let probs = self.params.action_probs(0)?;
        let est = &self.estimator;
        let behaviour = est.sampler.behaviour(&probs, self.t);
        let action = sample_action(&behaviour, &mut self.rng);
        let reward = self.bandit.pull(action, &mut self.rng)?;
        let baseline = est
            .baseline
            .evaluate(&self.bandit, &self.params)
            .map_err(|e| match e {
                Error::OnBoundary(i) => Error::NumericallyCommitted {
                    action: i,
                    prob: probs[i],
                },
                e => e,
            })?;
        let estimate: GradEstimate<f64> = match (est.sampler.is_on_policy(), est.gradient) {
            (true, GradientKind::Vanilla) => {
                vanilla_estimate(&Trajectory::bandit(action, reward), &self.params, baseline)?
            }
            (true, GradientKind::Natural) => {
                natural_estimate_bandit(&self.params, action, reward, baseline, est.lambda)?
            }
            (false, kind) => is_corrected_estimate(
                &self.params,
                &behaviour,
                action,
                reward,
                baseline,
                kind,
                est.lambda,
            )?,
        };
        let alpha = est.step_size.alpha_at(self.t);
        apply_update_in_place(&mut self.params, &estimate.direction, alpha)?;
        let record = BanditStep {
            step: self.t,
            probs,
            action,
            reward,
            baseline,
            effective_return: estimate.effective_return,
            alpha,
            direction: estimate.direction,
        };
        self.t += 1;
        Ok(record)
    }
}

/// Trace row of a bandit run.
#[derive(Clone, Debug, PartialEq)]
pub struct BanditTraceRow {
    pub step: usize,
    pub action: usize,
    pub reward: f64,
    pub baseline: f64,
    pub effective_return: f64,
    pub probs: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditRun {
    pub run_id: usize,
    pub seed: u64,
    pub trace: Vec<BanditTraceRow>,
    pub outcome: RunOutcome,
    pub final_theta: Vec<f64>,
    /// Largest parameter value seen over the run.
    pub max_theta: f64,
    /// `sum_t (r_best - E_pi[r])` under the target policy.
    pub pseudo_regret: f64,
    /// Why the run ended before `n_steps`, if it did.
    pub halted: Option<String>,
}

/// Per-episode statistics of a gridworld run.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRun {
    pub run_id: usize,
    pub seed: u64,
    pub episodes: Vec<EpisodeStats>,
    pub goal_snapshots: Vec<(usize, GoalProjection)>,
    pub halted: Option<String>,
}

impl GridRun {
    /// Running fraction of episodes that ended in `goal`.
    pub fn goal_fraction(&self, goal: usize) -> Vec<f64> {
        let mut hits = 0usize;
        self.episodes
            .iter()
            .enumerate()
            .map(|(i, e)| {
                hits += usize::from(e.reached_goal == Some(goal));
                hits as f64 / (i + 1) as f64
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelFraction {
    pub label: String,
    pub count: usize,
    pub fraction: f64,
    pub stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sensitivity {
    pub delta: f64,
    pub optimal: f64,
    pub suboptimal: f64,
    pub undecided: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BanditSummary {
    pub n_runs: usize,
    pub delta_conv: f64,
    pub outcomes: Vec<LabelFraction>,
    pub sensitivity: Vec<Sensitivity>,
    pub halted_runs: usize,
    /// Exact expected reward of the target policy at each traced step.
    pub expected_reward: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSummary {
    pub n_runs: usize,
    pub episodes: usize,
    pub returns: Vec<CurvePoint>,
    pub action_entropy: Vec<CurvePoint>,
    pub state_entropy: Vec<CurvePoint>,
    /// Mean return over the last tenth of training, per run, averaged.
    pub final_return: f64,
    pub final_return_stderr: f64,
    pub halted_runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Runs {
    Bandit(Vec<BanditRun>),
    Gridworld(Vec<GridRun>),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Bandit(BanditSummary),
    Gridworld(GridSummary),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub runs: Runs,
}

/// Mean and standard error of the mean, summed in slice order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// `sqrt(p (1 - p) / n)`.
pub fn binomial_stderr(fraction: f64, n: usize) -> f64 {
    (fraction * (1.0 - fraction) / n as f64).sqrt()
}

fn is_halting(err: &Error) -> bool {
    matches!(err, Error::Diverged(_) | Error::NumericallyCommitted { .. })
}

/// Runs a single bandit experiment run with its own random stream.
pub fn run_bandit(config: &ExperimentConfig, run_id: usize) -> Result<BanditRun> {
    let bandit = config
        .env
        .as_bandit()
        .ok_or_else(|| Error::Incompatible("expected a bandit environment".into()))?
        .clone();
    let seed = derive_seed(config.base_seed, run_id as u64);
    let optimal = bandit
        .optimal_arm()
        .ok_or_else(|| Error::Incompatible("bandit has no unique optimal arm".into()))?;
    let best = bandit.means()[optimal];
    let every = config.trace_every();
    let mut learner = BanditLearner::new(
        bandit.clone(),
        config.estimator.clone(),
        config.initial_policy()?,
        RandomStream::new(seed),
    )?;
    let mut trace = Vec::new();
    let mut max_theta = learner
        .params()
        .theta()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut pseudo_regret = 0.0;
    let mut halted = None;
    while learner.steps_taken() < config.n_steps {
        let t = learner.steps_taken();
        let step = match learner.step() {
            Ok(step) => step,
            Err(e) if is_halting(&e) => {
                halted = Some(format!("step {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        pseudo_regret += best - expected_return_exact(&bandit, &step.probs);
        let theta = learner.params().theta();
        max_theta = theta.iter().copied().fold(max_theta, f64::max);
        if t % every == 0 || t + 1 == config.n_steps {
            trace.push(BanditTraceRow {
                step: t,
                action: step.action,
                reward: step.reward,
                baseline: step.baseline,
                effective_return: step.effective_return,
                probs: step.probs,
                theta: theta.to_vec(),
            });
        }
        if let Some(StopRule::ThetaAbove { threshold }) = config.stop {
            if max_theta > threshold {
                halted = Some(format!("step {t}: parameter exceeded {threshold}"));
                break;
            }
        }
    }
    let final_probs = learner.probs()?;
    Ok(BanditRun {
        run_id,
        seed,
        trace,
        outcome: classify_outcome(
            &final_probs,
            optimal,
            learner.steps_taken(),
            config.delta_conv,
        ),
        final_theta: learner.params().theta().to_vec(),
        max_theta,
        pseudo_regret,
        halted,
    })
}

/// Trains a tabular softmax policy on a gridworld with trajectory-level
/// REINFORCE and a constant baseline.
pub fn run_gridworld(config: &ExperimentConfig, run_id: usize) -> Result<GridRun> {
    let grid: &GridworldSpec = config
        .env
        .as_gridworld()
        .ok_or_else(|| Error::Incompatible("expected a gridworld environment".into()))?;
    let baseline = match config.estimator.baseline {
        crate::baselines::BaselineKind::Constant { value } => value,
        _ => {
            return Err(Error::Incompatible(
                "gridworld runs support constant baselines only".into(),
            ))
        }
    };
    let seed = derive_seed(config.base_seed, run_id as u64);
    let mut rng = RandomStream::new(seed);
    let mut goal_rng = rng.fork();
    let mut params = config.initial_policy()?;
    let mut visits = VisitCounter::new(grid.num_cells());
    let mut episodes = Vec::with_capacity(config.n_steps);
    let mut goal_snapshots = Vec::new();
    let every = config.trace_every();
    let mut halted = None;
    for episode in 0..config.n_steps {
        if let Some(n) = config.goal_rollouts {
            if episode % every == 0 {
                goal_snapshots.push((
                    episode,
                    goal_simplex_projection(grid, &params, n, &mut goal_rng)?,
                ));
            }
        }
        let traj = rollout(&config.env, &params, &mut rng)?;
        let action_entropy = trajectory_action_entropy(&params, &traj)?;
        visits.record(&traj);
        episodes.push(EpisodeStats {
            discounted_return: traj.discounted_return(),
            length: traj.len(),
            reached_goal: traj.reached_goal(),
            action_entropy,
            state_entropy: visits.entropy(),
        });
        let estimate = vanilla_estimate(&traj, &params, baseline)?;
        let alpha = config.estimator.step_size.alpha_at(episode);
        if let Err(e) = apply_update_in_place(&mut params, &estimate.direction, alpha) {
            if is_halting(&e) {
                halted = Some(format!("episode {episode}: {e}"));
                break;
            }
            return Err(e);
        }
    }
    if let Some(n) = config.goal_rollouts {
        if halted.is_none() {
            goal_snapshots.push((
                config.n_steps,
                goal_simplex_projection(grid, &params, n, &mut goal_rng)?,
            ));
        }
    }
    Ok(GridRun {
        run_id,
        seed,
        episodes,
        goal_snapshots,
        halted,
    })
}

pub(crate) fn worker_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Incompatible(format!("thread pool: {e}")))
}

/// Executes every run of `config`, `workers` at a time (all cores when
/// `None`), and aggregates in run order.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = worker_pool(workers)?;
    let (summary, runs) = match config.env {
        EnvSpec::Bandit(_) => {
            let runs: Vec<BanditRun> = pool.install(|| {
                (0..config.n_runs)
                    .into_par_iter()
                    .map(|i| run_bandit(config, i))
                    .collect::<Result<_>>()
            })?;
            (
                Summary::Bandit(summarise_bandit(config, &runs)?),
                Runs::Bandit(runs),
            )
        }
        EnvSpec::Gridworld(_) => {
            let runs: Vec<GridRun> = pool.install(|| {
                (0..config.n_runs)
                    .into_par_iter()
                    .map(|i| run_gridworld(config, i))
                    .collect::<Result<_>>()
            })?;
            (
                Summary::Gridworld(summarise_grid(config, &runs)),
                Runs::Gridworld(runs),
            )
        }
    };
    Ok(ExperimentResult {
        config: config.clone(),
        summary,
        runs,
    })
}

fn label_key(label: OutcomeLabel) -> String {
    label.to_string()
}

pub fn summarise_bandit(config: &ExperimentConfig, runs: &[BanditRun]) -> Result<BanditSummary> {
    if runs.is_empty() {
        return Err(Error::EmptyRun);
    }
    let bandit = config.env.as_bandit().expect("bandit config");
    let optimal = bandit.optimal_arm().expect("validated optimal arm");
    let n = runs.len();
    let mut labels: Vec<String> = vec!["optimal".into()];
    labels.extend(
        (0..bandit.num_arms())
            .filter(|&k| k != optimal)
            .map(|k| format!("suboptimal({k})")),
    );
    labels.push("undecided".into());
    let outcomes = labels
        .into_iter()
        .map(|label| {
            let count = runs
                .iter()
                .filter(|r| label_key(r.outcome.label) == label)
                .count();
            let fraction = count as f64 / n as f64;
            LabelFraction {
                label,
                count,
                fraction,
                stderr: binomial_stderr(fraction, n),
            }
        })
        .collect();
    let sensitivity = DELTA_SENSITIVITY
        .iter()
        .map(|&delta| {
            let mut counts = [0usize; 3];
            for r in runs {
                let o = classify_outcome(&r.outcome.final_policy, optimal, r.outcome.steps, delta);
                counts[match o.label {
                    OutcomeLabel::Optimal => 0,
                    OutcomeLabel::Suboptimal(_) => 1,
                    OutcomeLabel::Undecided => 2,
                }] += 1;
            }
            Sensitivity {
                delta,
                optimal: counts[0] as f64 / n as f64,
                suboptimal: counts[1] as f64 / n as f64,
                undecided: counts[2] as f64 / n as f64,
            }
        })
        .collect();
    let longest = runs.iter().map(|r| r.trace.len()).max().unwrap_or(0);
    let expected_reward = (0..longest)
        .map(|i| {
            let mut step = 0;
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.trace.get(i))
                .map(|row| {
                    step = row.step;
                    expected_return_exact(bandit, &row.probs)
                })
                .collect();
            let (mean, stderr) = mean_stderr(&values);
            CurvePoint {
                step,
                mean,
                stderr,
                runs: values.len(),
            }
        })
        .collect();
    Ok(BanditSummary {
        n_runs: n,
        delta_conv: config.delta_conv,
        outcomes,
        sensitivity,
        halted_runs: runs.iter().filter(|r| r.halted.is_some()).count(),
        expected_reward,
    })
}

fn episode_curve(runs: &[GridRun], pick: impl Fn(&EpisodeStats) -> f64) -> Vec<CurvePoint> {
    let longest = runs.iter().map(|r| r.episodes.len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let values: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.episodes.get(i))
                .map(&pick)
                .collect();
            let (mean, stderr) = mean_stderr(&values);
            CurvePoint {
                step: i,
                mean,
                stderr,
                runs: values.len(),
            }
        })
        .collect()
}

/// Mean return over the last tenth of a run's episodes.
pub fn final_return(run: &GridRun) -> f64 {
    let n = run.episodes.len();
    let tail = (n / 10).max(1).min(n);
    let slice = &run.episodes[n - tail..];
    slice.iter().map(|e| e.discounted_return).sum::<f64>() / tail as f64
}

pub fn summarise_grid(config: &ExperimentConfig, runs: &[GridRun]) -> GridSummary {
    let finals: Vec<f64> = runs
        .iter()
        .filter(|r| !r.episodes.is_empty())
        .map(final_return)
        .collect();
    let (final_return, final_return_stderr) = mean_stderr(&finals);
    GridSummary {
        n_runs: runs.len(),
        episodes: config.n_steps,
        returns: episode_curve(runs, |e| e.discounted_return),
        action_entropy: episode_curve(runs, |e| e.action_entropy),
        state_entropy: episode_curve(runs, |e| e.state_entropy),
        final_return,
        final_return_stderr,
        halted_runs: runs.iter().filter(|r| r.halted.is_some()).count(),
    }
}

impl ExperimentResult {
    pub fn bandit_runs(&self) -> Option<&[BanditRun]> {
        match &self.runs {
            Runs::Bandit(r) => Some(r),
            Runs::Gridworld(_) => None,
        }
    }

    pub fn grid_runs(&self) -> Option<&[GridRun]> {
        match &self.runs {
            Runs::Gridworld(r) => Some(r),
            Runs::Bandit(_) => None,
        }
    }

    pub fn bandit_summary(&self) -> Option<&BanditSummary> {
        match &self.summary {
            Summary::Bandit(s) => Some(s),
            Summary::Gridworld(_) => None,
        }
    }

    pub fn grid_summary(&self) -> Option<&GridSummary> {
        match &self.summary {
            Summary::Gridworld(s) => Some(s),
            Summary::Bandit(_) => None,
        }
    }

    /// Fraction of runs labelled `label` (e.g. `"optimal"`).
    pub fn fraction(&self, label: &str) -> Option<f64> {
        self.bandit_summary()?
            .outcomes
            .iter()
            .find(|o| o.label == label)
            .map(|o| o.fraction)
    }

    /// Fraction of runs that settled on any suboptimal arm.
    pub fn suboptimal_fraction(&self) -> Option<f64> {
        let s = self.bandit_summary()?;
        Some(
            s.outcomes
                .iter()
                .filter(|o| o.label.starts_with("suboptimal"))
                .map(|o| o.fraction)
                .sum(),
        )
    }
}
