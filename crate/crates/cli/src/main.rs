use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pglab::harness::{
    self, bound_check, figures::VarianceMapConfig, load_config, output, reproduce_figure,
    run_bound_check, BoundCheckConfig, ExperimentConfig, FigureOptions,
};
use pglab::EnvSpec;

/// Policy-gradient dynamics lab.
#[derive(Parser, Debug)]
#[command(name = "pglab", version, about)]
struct Cli {
    /// Output root directory.
    #[arg(long, global = true, env = "PGLAB_OUT", default_value = "pglab-out")]
    out: PathBuf,

    /// Worker threads (all cores when omitted).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the number of runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Override the number of updates per run.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a bandit experiment.
    Bandit(RunArgs),
    /// Run a gridworld experiment.
    Gridworld(RunArgs),
    /// Compute a log variance-ratio map over the three-arm simplex.
    VarianceMap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Monte-Carlo check of the stuck-probability bound.
    BoundCheck {
        /// Grid and sample sizes (JSON); the full default grid when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reproduce the data behind a figure.
    Figure {
        /// Figure id, e.g. fig3.
        id: String,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Variance-map grid points per edge.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// List the available figure ids.
    Figures,
}

fn load_run_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config =
        load_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(runs) = args.runs {
        config.n_runs = runs;
    }
    if let Some(steps) = args.steps {
        config.n_steps = steps;
    }
    if let Some(seed) = args.seed {
        config.base_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".into())
}

fn run(cli: &Cli, args: &RunArgs, want_bandit: bool) -> Result<()> {
    let config = load_run_config(args)?;
    let is_bandit = matches!(config.env, EnvSpec::Bandit(_));
    if is_bandit != want_bandit {
        bail!(
            "{} describes a {} experiment",
            args.config.display(),
            if is_bandit { "bandit" } else { "gridworld" }
        );
    }
    let result = harness::run_experiment(&config, cli.workers)?;
    let dir = cli.out.join(stem(&args.config));
    let files = harness::write_experiment(&result, &dir)?;
    if let Some(summary) = result.bandit_summary() {
        for o in &summary.outcomes {
            println!(
                "{:<16} {:>6}  {:.4} ± {:.4}",
                o.label, o.count, o.fraction, o.stderr
            );
        }
    }
    if let Some(summary) = result.grid_summary() {
        println!(
            "final return {:.4} ± {:.4} over {} runs",
            summary.final_return, summary.final_return_stderr, summary.n_runs
        );
    }
    println!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Bandit(args) => run(&cli, args, true),
        Command::Gridworld(args) => run(&cli, args, false),
        Command::VarianceMap { config, resolution } => {
            let mut map_config = VarianceMapConfig::load(config)
                .with_context(|| format!("loading {}", config.display()))?;
            if let Some(r) = resolution {
                map_config.resolution = *r;
            }
            let map = map_config.run()?;
            let path = cli.out.join(format!("{}.csv", map_config.name));
            output::write_variance_map(&map, &path)?;
            println!("wrote {} points to {}", map.points.len(), path.display());
            Ok(())
        }
        Command::BoundCheck {
            config,
            runs,
            steps,
            seed,
        } => {
            let mut check = match config {
                Some(path) => BoundCheckConfig::load(path)
                    .with_context(|| format!("loading {}", path.display()))?,
                None => BoundCheckConfig::default(),
            };
            if let Some(r) = runs {
                check.runs = *r;
            }
            if let Some(s) = steps {
                check.horizon = *s;
            }
            if let Some(s) = seed {
                check.base_seed = *s;
            }
            let rows = run_bound_check(&check, cli.workers)?;
            let dir = cli.out.join("bound_check");
            let path = dir.join("bound_check.csv");
            bound_check::write_bound_rows(&rows, &path)?;
            let form = bound_check::validated_form(&rows, check.runs);
            output::write_bound_manifest(&dir, &check, form, &path)?;
            match form {
                Some(form) => println!("validated bound form: {form:?}"),
                None => println!("no bound form holds on every grid point"),
            }
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Figure {
            id,
            runs,
            steps,
            seed,
            resolution,
        } => {
            let options = FigureOptions {
                runs: *runs,
                steps: *steps,
                seed: *seed,
                workers: cli.workers,
                resolution: *resolution,
            };
            let files = reproduce_figure(id, &cli.out, &options)?;
            println!(
                "wrote {} files to {}",
                files.len(),
                cli.out.join(id).display()
            );
            Ok(())
        }
        Command::Figures => {
            for id in harness::figure_ids() {
                let spec = harness::FigureSpec::builtin(id)?;
                println!("{id}  {}", spec.description);
            }
            Ok(())
        }
    }
}
