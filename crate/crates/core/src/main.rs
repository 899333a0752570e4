use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use prefsamp::evaluation::ModelTag;
use prefsamp::harness::experiment::Simulator;
use prefsamp::harness::io::{emit_surface_mapped, emit_truth, write_json};
use prefsamp::harness::{fit_dataset, ingest_csv, run_experiment_in, write_samples, ExperimentConfig, OUTPUT_DIR_ENV};
use prefsamp::sampling::ScenarioTag;
use prefsamp::{Error, Result};

#[derive(Parser)]
#[command(name = "prefsamp", version, about = "Preferential sampling simulation study and model fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one replication's dataset and truth surface.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Fit one model to a CSV of x,y,z[,p] rows.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelTag,
    },
    /// Run every replication of a configured experiment and write tables.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rerun a table of the simulation study with the built-in settings.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        table: u8,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a model to external data and write the predicted surface.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: ModelTag,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.resolved_output_dir()
}

fn evaluate(cfg: &ExperimentConfig) -> Result<()> {
    let dir = output_dir(cfg);
    let (report, paths) = run_experiment_in(cfg, &dir)?;
    for m in &report.aggregate.models {
        println!(
            "{:<4} mse {:>10.5}  mean_abs_bias {:>9.5}  runtime {:>8.3}s  ratio {}",
            m.model.as_str(),
            m.mse,
            m.mean_abs_bias,
            m.mean_runtime_secs,
            m.runtime_ratio.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn fit(cfg: &ExperimentConfig, data: &Path, model: ModelTag) -> Result<()> {
    let dataset = ingest_csv(data)?;
    let (fit, transform) = fit_dataset(cfg, &dataset, model, cfg.base_seed)?;
    let dir = output_dir(cfg);
    let surface = emit_surface_mapped(&fit.surface, &dir, model.as_str(), &transform)?;
    let summary = dir.join(format!("fit_{model}.json"));
    write_json(
        &serde_json::json!({
            "model": model,
            "n_obs": dataset.len(),
            "transform": transform,
            "params": fit.params,
            "runtime_secs": fit.runtime_secs,
            "accept_rate": fit.accept_rate,
            "min_ess": fit.min_ess,
        }),
        &summary,
    )?;
    for p in &fit.params {
        println!("{:<14} {:>10.5} [{:.5}, {:.5}]", p.name, p.mean, p.lower, p.upper);
    }
    println!("wrote {}", surface.display());
    println!("wrote {}", summary.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, replication } => {
            let cfg = ExperimentConfig::load(&config)?;
            let sim = Simulator::new(&cfg)?;
            let seed = cfg.base_seed.wrapping_add(replication as u64);
            let (samples, truth) = sim.simulate(&cfg, seed)?;
            let dir = output_dir(&cfg);
            let path = dir.join(format!("samples_{replication}.csv"));
            write_samples(&samples, &path)?;
            let t = emit_truth(&truth, &dir, &replication.to_string())?;
            println!("{} observations", samples.len());
            println!("wrote {}", path.display());
            println!("wrote {}", t.display());
            Ok(())
        }
        Command::Fit { config, data, model } => fit(&ExperimentConfig::load(&config)?, &data, model),
        Command::Evaluate { config } => evaluate(&ExperimentConfig::load(&config)?),
        Command::Reproduce { table, replications, output, workers, seed } => {
            let mut cfg = if table == 3 { ExperimentConfig::scenario2_preset() } else { ExperimentConfig::scenario1_preset() };
            if let Some(r) = replications {
                cfg.n_replications = r;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            if let Some(s) = seed {
                cfg.base_seed = s;
            }
            cfg.validate()?;
            evaluate(&cfg)
        }
        Command::Predict { data, model, config } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => {
                    let mut c = ExperimentConfig::scenario2_preset();
                    c.output_dir = PathBuf::from("output/predict");
                    c
                }
            };
            cfg.scenario = ScenarioTag::External;
            cfg.external = Some(prefsamp::harness::config::ExternalConfig { data: data.clone() });
            cfg.models = vec![model];
            if model == ModelTag::PKW {
                return Err(Error::Config("PKW needs known selection probabilities".into()));
            }
            fit(&cfg, &data, model)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(v) = std::env::var_os(OUTPUT_DIR_ENV) {
        log::debug!("output directory overridden by {OUTPUT_DIR_ENV}={}", v.to_string_lossy());
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
