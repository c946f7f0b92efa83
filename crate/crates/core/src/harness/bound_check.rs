//! Monte-Carlo check of the stuck-probability bound for natural-gradient
//! ascent on the two-arm bandit with a constant negative baseline.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::output::csv_writer;
use super::runner::binomial_stderr;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, RandomStream};
use crate::scalar::sigmoid;
use crate::theory::{stuck_bound_proof, stuck_bound_statement};

/// Remaining probability of ever sampling the optimal arm below which a run
/// is declared stuck without simulating further.
pub const TAIL_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundCheckConfig {
    pub theta0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub baseline: Vec<f64>,
    pub runs: usize,
    pub horizon: usize,
    #[serde(default)]
    pub base_seed: u64,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        Self {
            theta0: vec![-3.0, -2.0, -1.0, 0.0],
            alpha: vec![0.05, 0.1, 0.2, 0.4],
            baseline: vec![-0.5, -1.0, -2.0, -4.0],
            runs: 100_000,
            horizon: 10_000,
            base_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub theta0: f64,
    pub alpha: f64,
    pub b: f64,
    pub bound_stmt: f64,
    pub bound_proof: f64,
    pub mc_estimate: f64,
    pub mc_stderr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    Statement,
    Proof,
}

/// Whether one natural-gradient run never samples the optimal arm within
/// `horizon` steps. The optimal arm pays 1 and the other 0.
pub fn simulate_stuck(
    theta0: f64,
    alpha: f64,
    b: f64,
    horizon: usize,
    rng: &mut RandomStream,
) -> bool {
    // Once stuck, theta falls by at least alpha |b| per step, so the chance
    // of ever escaping is below e^theta / (1 - e^(-alpha |b|)).
    let tail_scale = 1.0 / -(-alpha * b.abs()).exp_m1();
    let mut theta = theta0;
    for _ in 0..horizon {
        let p = sigmoid(theta);
        if rng.uniform() < p {
            return false;
        }
        theta += alpha * b / (1.0 - p);
        if theta.exp() * tail_scale < TAIL_TOLERANCE {
            return true;
        }
    }
    true
}

impl BoundCheckConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Runs the grid, one random stream per grid point, on `workers` threads
/// (all cores when `None`).
pub fn run_bound_check(config: &BoundCheckConfig, workers: Option<usize>) -> Result<Vec<BoundRow>> {
    super::runner::worker_pool(workers)?.install(|| bound_rows(config))
}

fn bound_rows(config: &BoundCheckConfig) -> Result<Vec<BoundRow>> {
    if config.runs == 0 || config.horizon == 0 {
        return Err(Error::field("runs", "runs and horizon must be positive"));
    }
    let mut points = Vec::new();
    for &theta0 in &config.theta0 {
        for &alpha in &config.alpha {
            for &b in &config.baseline {
                points.push((theta0, alpha, b));
            }
        }
    }
    points
        .par_iter()
        .enumerate()
        .map(|(i, &(theta0, alpha, b))| {
            let bound_stmt = stuck_bound_statement(theta0, alpha, b)?;
            let bound_proof = stuck_bound_proof(theta0, alpha, b)?;
            let mut rng = RandomStream::new(derive_seed(config.base_seed, i as u64));
            let stuck = (0..config.runs)
                .filter(|_| simulate_stuck(theta0, alpha, b, config.horizon, &mut rng))
                .count();
            let mc_estimate = stuck as f64 / config.runs as f64;
            Ok(BoundRow {
                theta0,
                alpha,
                b,
                bound_stmt,
                bound_proof,
                mc_estimate,
                mc_stderr: binomial_stderr(mc_estimate, config.runs),
            })
        })
        .collect()
}

fn holds(value: f64, row: &BoundRow, runs: usize) -> bool {
    // Floor the standard error at one run so zero-count rows are not judged
    // on an exact-zero tolerance.
    let se = row.mc_stderr.max(1.0 / runs as f64);
    (0.0..=1.0).contains(&value) && value <= row.mc_estimate + 3.0 * se
}

/// The bound form that is a probability and lies below the Monte-Carlo
/// estimate plus three standard errors on every row.
pub fn validated_form(rows: &[BoundRow], runs: usize) -> Option<BoundForm> {
    if rows.iter().all(|r| holds(r.bound_stmt, r, runs)) {
        Some(BoundForm::Statement)
    } else if rows.iter().all(|r| holds(r.bound_proof, r, runs)) {
        Some(BoundForm::Proof)
    } else {
        None
    }
}

pub fn write_bound_rows(rows: &[BoundRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Mean cumulative pseudo-regret `sum_t (1 - p_t)` of the runs that end on
/// the suboptimal arm, with the count of such runs.
pub fn stuck_regret_curve(
    theta0: f64,
    alpha: f64,
    b: f64,
    runs: usize,
    horizon: usize,
    base_seed: u64,
    delta_conv: f64,
) -> (usize, Vec<f64>) {
    let curves: Vec<Option<Vec<f64>>> = (0..runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = RandomStream::for_run(base_seed, i as u64);
            let mut theta = theta0;
            let mut regret = 0.0;
            let mut curve = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let p = sigmoid(theta);
                regret += 1.0 - p;
                curve.push(regret);
                theta += if rng.uniform() < p {
                    alpha * (1.0 - b) / p
                } else {
                    alpha * b / (1.0 - p)
                };
            }
            (sigmoid(theta) <= delta_conv).then_some(curve)
        })
        .collect();
    let stuck: Vec<Vec<f64>> = curves.into_iter().flatten().collect();
    let mut mean = vec![0.0; horizon];
    for c in &stuck {
        for (m, v) in mean.iter_mut().zip(c) {
            *m += v;
        }
    }
    if !stuck.is_empty() {
        for m in &mut mean {
            *m /= stuck.len() as f64;
        }
    }
    (stuck.len(), mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_validates_statement_form() {
        let config = BoundCheckConfig {
            theta0: vec![-2.0, 0.0],
            alpha: vec![0.1],
            baseline: vec![-1.0],
            runs: 2000,
            horizon: 2000,
            base_seed: 1,
        };
        let rows = run_bound_check(&config, Some(1)).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            validated_form(&rows, config.runs),
            Some(BoundForm::Statement)
        );
        assert!(rows[0].mc_estimate > 0.0);
    }

    #[test]
    fn positive_start_is_rejected() {
        let config = BoundCheckConfig {
            theta0: vec![0.5],
            runs: 10,
            horizon: 10,
            ..BoundCheckConfig::default()
        };
        assert!(matches!(
            run_bound_check(&config, Some(1)),
            Err(Error::BoundNotApplicable(_))
        ));
    }
}
