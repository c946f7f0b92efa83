//! Canned figure definitions. Each figure file holds a base experiment
//! config, per-panel patches merged onto it, and optional variance maps.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{merge_json, ExperimentConfig};
use super::output::{
    file_sha256, write_experiment, write_json, write_variance_map, DATA_LAYOUT_VERSION,
};
use super::runner::run_experiment;
use crate::analytics::variance_ratio_map;
use crate::baselines::BaselineKind;
use crate::env::BanditSpec;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, GradientKind, LambdaChoice, SamplerKind, StepSchedule};

const FIGURES: &[(&str, &str)] = &[
    ("fig1", include_str!("../../configs/figures/fig1.json")),
    ("fig2", include_str!("../../configs/figures/fig2.json")),
    ("fig3", include_str!("../../configs/figures/fig3.json")),
    ("fig5", include_str!("../../configs/figures/fig5.json")),
    ("fig6", include_str!("../../configs/figures/fig6.json")),
    ("fig7", include_str!("../../configs/figures/fig7.json")),
    ("fig8", include_str!("../../configs/figures/fig8.json")),
    ("fig9", include_str!("../../configs/figures/fig9.json")),
];

/// Estimator settings that determine a variance; the step size is irrelevant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEstimator {
    pub gradient: GradientKind,
    pub baseline: BaselineKind,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub lambda: LambdaChoice,
}

impl MapEstimator {
    pub fn to_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            gradient: self.gradient,
            baseline: self.baseline,
            sampler: self.sampler,
            lambda: self.lambda,
            step_size: StepSchedule::Constant { alpha: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceMapConfig {
    pub name: String,
    pub bandit: BanditSpec,
    pub a: MapEstimator,
    pub b: MapEstimator,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_resolution() -> usize {
    101
}

fn default_margin() -> f64 {
    1e-3
}

impl VarianceMapConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn run(&self) -> Result<crate::analytics::VarianceMap> {
        variance_ratio_map(
            &self.a.to_config(),
            &self.b.to_config(),
            &self.bandit,
            self.resolution,
            self.margin,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigurePanel {
    pub name: String,
    #[serde(default)]
    pub patch: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub id: String,
    pub description: String,
    #[serde(default)]
    pub base: Option<serde_json::Value>,
    #[serde(default)]
    pub experiments: Vec<FigurePanel>,
    #[serde(default)]
    pub variance_maps: Vec<VarianceMapConfig>,
}

/// Command-line overrides applied to every experiment of a figure.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FigureOptions {
    pub runs: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub resolution: Option<usize>,
}

pub fn figure_ids() -> Vec<&'static str> {
    FIGURES.iter().map(|(id, _)| *id).collect()
}

fn figure_text(id: &str) -> Result<&'static str> {
    FIGURES
        .iter()
        .find(|(k, _)| *k == id)
        .map(|(_, text)| *text)
        .ok_or_else(|| Error::UnknownFigure {
            id: id.to_string(),
            valid: figure_ids().join(", "),
        })
}

impl FigureSpec {
    pub fn builtin(id: &str) -> Result<Self> {
        Ok(serde_json::from_str(figure_text(id)?)?)
    }

    /// Resolved experiment configs, in panel order.
    pub fn experiment_configs(
        &self,
        options: &FigureOptions,
    ) -> Result<Vec<(String, ExperimentConfig)>> {
        self.experiments
            .iter()
            .map(|panel| {
                let mut value = self.base.clone().unwrap_or_else(|| serde_json::json!({}));
                merge_json(&mut value, &panel.patch);
                let mut config: ExperimentConfig = serde_json::from_value(value)?;
                config.figure_id = Some(self.id.clone());
                if let Some(runs) = options.runs {
                    config.n_runs = runs;
                }
                if let Some(steps) = options.steps {
                    config.n_steps = steps;
                }
                if let Some(seed) = options.seed {
                    config.base_seed = seed;
                }
                config.validate()?;
                Ok((panel.name.clone(), config))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct PanelEntry {
    name: String,
    directory: String,
    config_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct MapEntry {
    name: String,
    file: String,
    sha256: String,
    resolution: usize,
    margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct FigureManifest {
    data_layout_version: &'static str,
    figure_id: String,
    description: String,
    definition_sha256: String,
    experiments: Vec<PanelEntry>,
    variance_maps: Vec<MapEntry>,
}

/// Runs every panel of figure `id` under `out_root/<id>` and returns the
/// files written.
pub fn reproduce_figure(
    id: &str,
    out_root: &Path,
    options: &FigureOptions,
) -> Result<Vec<PathBuf>> {
    let text = figure_text(id)?;
    let spec: FigureSpec = serde_json::from_str(text)?;
    let dir = out_root.join(id);
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut experiments = Vec::new();
    for (name, config) in spec.experiment_configs(options)? {
        let result = run_experiment(&config, options.workers)?;
        let sub = dir.join(&name);
        files.extend(write_experiment(&result, &sub)?);
        experiments.push(PanelEntry {
            name: name.clone(),
            directory: name,
            config_sha256: config.hash(),
        });
    }
    let mut maps = Vec::new();
    for map_config in &spec.variance_maps {
        let mut map_config = map_config.clone();
        if let Some(r) = options.resolution {
            map_config.resolution = r;
        }
        let map = map_config.run()?;
        let file = format!("{}.csv", map_config.name);
        let path = dir.join(&file);
        write_variance_map(&map, &path)?;
        maps.push(MapEntry {
            name: map_config.name.clone(),
            sha256: file_sha256(&path)?,
            file,
            resolution: map.resolution,
            margin: map.margin,
        });
        files.push(path);
    }
    let manifest = FigureManifest {
        data_layout_version: DATA_LAYOUT_VERSION,
        figure_id: spec.id.clone(),
        description: spec.description.clone(),
        definition_sha256: hex::encode(Sha256::digest(text.as_bytes())),
        experiments,
        variance_maps: maps,
    };
    let path = dir.join("manifest.json");
    write_json(&path, &manifest)?;
    files.push(path);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_figure_resolves() {
        for id in figure_ids() {
            let spec = FigureSpec::builtin(id).unwrap();
            assert_eq!(spec.id, id);
            let configs = spec.experiment_configs(&FigureOptions::default()).unwrap();
            assert_eq!(configs.is_empty(), spec.experiments.is_empty());
            assert!(!configs.is_empty() || !spec.variance_maps.is_empty());
        }
    }

    #[test]
    fn unknown_figure_lists_valid_ids() {
        match FigureSpec::builtin("nope") {
            Err(Error::UnknownFigure { id, valid }) => {
                assert_eq!(id, "nope");
                assert!(valid.contains("fig1") && valid.contains("fig9"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
