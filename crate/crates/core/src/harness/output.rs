//! CSV and JSON persistence. Files are RFC 4180 with LF line endings and
//! shortest round-trip float formatting, so identical inputs give identical
//! bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::bound_check::{BoundCheckConfig, BoundForm};
use super::config::ExperimentConfig;
use super::runner::{CurvePoint, ExperimentResult, Runs};
use crate::analytics::{ordered_goals, VarianceMap};
use crate::error::Result;

/// Version tag of the CSV and manifest layout.
pub const DATA_LAYOUT_VERSION: &str = "pglab-data-v1";

/// Name of the random generator recorded in manifests.
pub const GENERATOR: &str = "splitmix64";

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(path)?)))
}

/// Shortest round-trip form, switching to exponent notation for very small
/// and very large magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "mean", "stderr", "runs"])?;
    for p in curve {
        w.write_record([
            p.step.to_string(),
            num(p.mean),
            num(p.stderr),
            p.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub data_layout_version: String,
    pub generator: String,
    pub config_sha256: String,
    pub base_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub figure_id: Option<String>,
    pub n_runs: usize,
    pub n_steps: usize,
    pub delta_conv: f64,
    pub config: ExperimentConfig,
    pub assumptions: Vec<String>,
    pub files: Vec<FileEntry>,
}

fn file_entry(dir: &Path, path: &Path) -> Result<FileEntry> {
    let bytes = fs::read(path)?;
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileEntry {
        path: rel.to_string_lossy().replace('\\', "/"),
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

/// Assumptions recorded in every manifest.
pub fn standard_assumptions(config: &ExperimentConfig) -> Vec<String> {
    let mut out = vec![
        match config.init_theta {
            Some(_) => "initial parameters taken from init_theta".to_string(),
            None => "initial policy uniform (all parameters zero)".to_string(),
        },
        "one sampled trajectory per update".to_string(),
        format!(
            "runs labelled converged when one action holds at least 1 - {} of the final policy",
            config.delta_conv
        ),
        format!("run seed = output number run_id of the {GENERATOR} stream seeded with base_seed"),
    ];
    if config.env.as_gridworld().is_some() {
        out.push(
            "goal reward paid on entering the goal cell; blocked moves leave the agent in place"
                .into(),
        );
        out.push("final return = mean return over the last tenth of episodes".into());
    }
    out.extend(config.assumptions.iter().cloned());
    out
}

/// Writes all CSVs, `summary.json` and `manifest.json` for one experiment.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let config = &result.config;
    let mut files = Vec::new();
    match &result.runs {
        Runs::Bandit(runs) => {
            let arms = config.env.num_actions();
            let dim = runs.first().map(|r| r.final_theta.len()).unwrap_or(0);
            let path = dir.join("trajectories.csv");
            let mut w = csv_writer(&path)?;
            let mut header: Vec<String> = [
                "run_id",
                "step",
                "action",
                "reward",
                "baseline",
                "effective_return",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect();
            header.extend((0..arms).map(|k| format!("p{k}")));
            header.extend((0..dim).map(|k| format!("theta{k}")));
            w.write_record(&header)?;
            for run in runs {
                for row in &run.trace {
                    let mut rec = vec![
                        run.run_id.to_string(),
                        row.step.to_string(),
                        row.action.to_string(),
                        num(row.reward),
                        num(row.baseline),
                        num(row.effective_return),
                    ];
                    rec.extend(row.probs.iter().map(|&p| num(p)));
                    rec.extend(row.theta.iter().map(|&p| num(p)));
                    w.write_record(&rec)?;
                }
            }
            w.flush()?;
            files.push(path);

            let path = dir.join("outcomes.csv");
            let mut w = csv_writer(&path)?;
            let mut header = vec!["run_id".to_string(), "label".to_string()];
            header.extend((0..arms).map(|k| format!("p{k}")));
            header.push("steps".into());
            w.write_record(&header)?;
            for run in runs {
                let mut rec = vec![run.run_id.to_string(), run.outcome.label.to_string()];
                rec.extend(run.outcome.final_policy.iter().map(|&p| num(p)));
                rec.push(run.outcome.steps.to_string());
                w.write_record(&rec)?;
            }
            w.flush()?;
            files.push(path);

            if let Some(summary) = result.bandit_summary() {
                let path = dir.join("expected_reward.csv");
                write_curve(&path, &summary.expected_reward)?;
                files.push(path);
            }
        }
        Runs::Gridworld(runs) => {
            let every = config.trace_every();
            let path = dir.join("traces.csv");
            let mut w = csv_writer(&path)?;
            w.write_record([
                "run_id",
                "step",
                "return",
                "action_entropy",
                "state_entropy",
            ])?;
            for run in runs {
                let last = run.episodes.len().saturating_sub(1);
                for (i, e) in run.episodes.iter().enumerate() {
                    if i % every == 0 || i == last {
                        w.write_record([
                            run.run_id.to_string(),
                            i.to_string(),
                            num(e.discounted_return),
                            num(e.action_entropy),
                            num(e.state_entropy),
                        ])?;
                    }
                }
            }
            w.flush()?;
            files.push(path);

            if let Some(summary) = result.grid_summary() {
                for (name, curve) in [
                    ("returns.csv", &summary.returns),
                    ("action_entropy.csv", &summary.action_entropy),
                    ("state_entropy.csv", &summary.state_entropy),
                ] {
                    let path = dir.join(name);
                    write_curve(&path, curve)?;
                    files.push(path);
                }
            }

            let grid = config.env.as_gridworld().expect("gridworld config");
            let best_goal = grid
                .goals()
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(&cell, _)| cell)
                .expect("validated goals");
            let path = dir.join("best_goal_fraction.csv");
            let mut w = csv_writer(&path)?;
            w.write_record(["run_id", "step", "fraction"])?;
            for run in runs {
                let fractions = run.goal_fraction(best_goal);
                let last = fractions.len().saturating_sub(1);
                for (i, f) in fractions.iter().enumerate() {
                    if i % every == 0 || i == last {
                        w.write_record([run.run_id.to_string(), i.to_string(), num(*f)])?;
                    }
                }
            }
            w.flush()?;
            files.push(path);

            if config.goal_rollouts.is_some() {
                let goals = ordered_goals(grid)?;
                let path = dir.join("goal_simplex.csv");
                let mut w = csv_writer(&path)?;
                let mut header = vec!["run_id".to_string(), "step".to_string()];
                header.extend(goals.iter().map(|g| {
                    let (r, c) = grid.coords(*g);
                    format!("goal_r{r}_c{c}")
                }));
                header.push("none".into());
                w.write_record(&header)?;
                for run in runs {
                    for (step, proj) in &run.goal_snapshots {
                        let mut rec = vec![run.run_id.to_string(), step.to_string()];
                        rec.extend(proj.simplex.iter().map(|&x| num(x)));
                        rec.push(num(proj.none_fraction));
                        w.write_record(&rec)?;
                    }
                }
                w.flush()?;
                files.push(path);
            }
        }
    }
    let path = dir.join("summary.json");
    write_json(&path, &result.summary)?;
    files.push(path);

    let manifest = Manifest {
        data_layout_version: DATA_LAYOUT_VERSION.into(),
        generator: GENERATOR.into(),
        config_sha256: config.hash(),
        base_seed: config.base_seed,
        figure_id: config.figure_id.clone(),
        n_runs: config.n_runs,
        n_steps: config.n_steps,
        delta_conv: config.delta_conv,
        config: config.clone(),
        assumptions: standard_assumptions(config),
        files: files
            .iter()
            .map(|p| file_entry(dir, p))
            .collect::<Result<_>>()?,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    files.push(path);
    Ok(files)
}

/// Writes a variance map CSV.
pub fn write_variance_map(map: &VarianceMap, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = BufWriter::new(File::create(path)?);
    map.write_csv(file)
}

/// Hex SHA-256 of a file's contents, for manifests.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Serialize)]
struct BoundManifest<'a> {
    data_layout_version: &'static str,
    generator: &'static str,
    config: &'a BoundCheckConfig,
    tail_tolerance: f64,
    validated_form: Option<BoundForm>,
    files: Vec<FileEntry>,
}

/// Manifest for a bound-check CSV.
pub fn write_bound_manifest(
    dir: &Path,
    config: &BoundCheckConfig,
    form: Option<BoundForm>,
    csv_path: &Path,
) -> Result<PathBuf> {
    let manifest = BoundManifest {
        data_layout_version: DATA_LAYOUT_VERSION,
        generator: GENERATOR,
        config,
        tail_tolerance: super::bound_check::TAIL_TOLERANCE,
        validated_form: form,
        files: vec![file_entry(dir, csv_path)?],
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}
