//! Command-line front end: validate ensembles and configs, print the
//! derived gate/contraction constants, run experiments, and fit
//! empirical convergence rates.
//!
//! Every command exits 0 on success. On failure it exits nonzero after
//! printing a one-line JSON report `{"error":{"kind","message"}}` to
//! stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use randpush::bounds::BoundConstants;
use randpush::graph::EnsembleSpec;
use randpush::harness::emit::{
    build_summary, error_report, format_metrics_csv, read_metrics_csv, render_json, write_outputs,
};
use randpush::harness::fit::{fit_rate, RateFit};
use randpush::harness::{
    load_config, run_experiment, Algo, EnsembleSource, HarnessError, ResolvedExperiment,
};

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgoArg {
    Pushsum,
    Mpp,
    Sp,
    Msp,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Pushsum => Algo::Pushsum,
            AlgoArg::Mpp => Algo::Mpp,
            AlgoArg::Sp => Algo::Sp,
            AlgoArg::Msp => Algo::Msp,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "randpush",
    version,
    about = "Push-sum and subgradient-push experiments over random directed graph sequences"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check an ensemble file or a full experiment config; prints a
    /// machine-readable report and exits nonzero if anything fails.
    Validate {
        /// Experiment config JSON to validate end to end.
        #[arg(long, conflicts_with = "ensemble")]
        config: Option<PathBuf>,
        /// Ensemble JSON to check on its own.
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Print the constants an ensemble determines: gate threshold delta,
    /// window length, selection floor p, c1, and the contraction factor
    /// as ln(1 - lambda).
    Constants {
        /// Take the ensemble from this experiment config.
        #[arg(long, conflicts_with = "ensemble")]
        config: Option<PathBuf>,
        /// Ensemble JSON file.
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run an experiment and write metrics.csv + summary.json.
    Run {
        /// Experiment config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's out_dir (default "out").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the number of Monte Carlo trials.
        #[arg(long)]
        trials: Option<u64>,
        /// Override the number of rounds per trial.
        #[arg(long)]
        horizon: Option<u64>,
        /// Override the step exponent (open interval 0.5..1).
        #[arg(long)]
        gamma: Option<f64>,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the protocol.
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        /// What to print on stdout: the summary (json) or the metrics (csv).
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Fit a log-log rate line to the mean rows of a metrics CSV.
    Fit {
        /// Metrics CSV produced by `run`.
        #[arg(long)]
        input: PathBuf,
        /// Smallest checkpoint round to include.
        #[arg(long)]
        t_min: Option<u64>,
        /// Largest checkpoint round to include.
        #[arg(long)]
        t_max: Option<u64>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

fn load_spec(path: &Path) -> Result<EnsembleSpec, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Build the ensemble named by exactly one of `--config` / `--ensemble`.
fn ensemble_from_flags(
    config: Option<&Path>,
    ensemble: Option<&Path>,
) -> Result<randpush::graph::GraphEnsemble, HarnessError> {
    match (config, ensemble) {
        (None, Some(path)) => Ok(load_spec(path)?.build()?),
        (Some(cfg_path), None) => {
            let cfg = load_config(cfg_path)?;
            match cfg.ensemble {
                EnsembleSource::Inline(spec) => Ok(spec.build()?),
                EnsembleSource::Path(p) => {
                    let resolved = match cfg_path.parent() {
                        Some(dir) if p.is_relative() => dir.join(&p),
                        _ => p,
                    };
                    Ok(load_spec(&resolved)?.build()?)
                }
            }
        }
        _ => Err(HarnessError::InvalidConfig(
            "give exactly one of --config or --ensemble".into(),
        )),
    }
}

fn cmd_validate(
    config: Option<PathBuf>,
    ensemble: Option<PathBuf>,
) -> Result<ExitCode, HarnessError> {
    match (config, ensemble) {
        (None, Some(path)) => {
            let report = load_spec(&path)?.validate();
            print!("{}", render_json(&report));
            if report.is_valid() {
                Ok(ExitCode::SUCCESS)
            } else {
                Err(HarnessError::InvalidConfig(format!(
                    "ensemble {} failed validation",
                    path.display()
                )))
            }
        }
        (Some(path), None) => {
            let cfg = load_config(&path)?;
            let exp = ResolvedExperiment::resolve(cfg, path.parent())?;
            let ok = serde_json::json!({
                "valid": true,
                "n": exp.ensemble.n(),
                "graphs": exp.ensemble.len(),
                "algo": exp.config.algo.to_string(),
                "horizon": exp.config.horizon,
                "trials": exp.config.trials,
                "checkpoints": exp.checkpoints.len(),
            });
            print!("{}", render_json(&ok));
            Ok(ExitCode::SUCCESS)
        }
        _ => Err(HarnessError::InvalidConfig(
            "give exactly one of --config or --ensemble".into(),
        )),
    }
}

fn print_constants(constants: &BoundConstants, format: Format) {
    match format {
        Format::Json => print!("{}", render_json(constants)),
        Format::Csv => {
            println!("n,window,p,delta,c1,ln_lambda,ln_one_minus_lambda");
            println!(
                "{},{},{},{},{},{},{}",
                constants.n,
                constants.window,
                constants.p,
                constants.delta,
                constants.c1,
                constants.ln_lambda,
                constants.ln_one_minus_lambda,
            );
        }
    }
}

fn print_fit(fit: &RateFit, format: Format) {
    match format {
        Format::Json => print!("{}", render_json(fit)),
        Format::Csv => {
            println!("slope,intercept,r_squared,points");
            println!(
                "{},{},{},{}",
                fit.slope, fit.intercept, fit.r_squared, fit.points
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config_path: PathBuf,
    out: Option<PathBuf>,
    trials: Option<u64>,
    horizon: Option<u64>,
    gamma: Option<f64>,
    seed: Option<u64>,
    algo: Option<AlgoArg>,
    format: Format,
) -> Result<ExitCode, HarnessError> {
    let mut config = load_config(&config_path)?;
    if let Some(v) = trials {
        config.trials = v;
    }
    if let Some(v) = horizon {
        config.horizon = v;
    }
    if let Some(v) = gamma {
        config.gamma = v;
    }
    if let Some(v) = seed {
        config.seed = v;
    }
    if let Some(v) = algo {
        config.algo = v.into();
    }
    let exp = ResolvedExperiment::resolve(config, config_path.parent())?;
    let rows = run_experiment(&exp)?;
    // A failed fit (all gaps zero, too few checkpoints) is not an error;
    // the summary just omits it.
    let fit = fit_rate(&rows, 1, u64::MAX).ok();
    let summary = build_summary(&exp, &rows, fit);
    let out_dir = out
        .or_else(|| exp.config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    write_outputs(&out_dir, &rows, &summary)?;
    match format {
        Format::Json => print!("{}", render_json(&summary)),
        Format::Csv => print!("{}", format_metrics_csv(&rows)),
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.cmd {
        Cmd::Validate { config, ensemble } => cmd_validate(config, ensemble),
        Cmd::Constants {
            config,
            ensemble,
            format,
        } => {
            let ens = ensemble_from_flags(config.as_deref(), ensemble.as_deref())?;
            let constants = BoundConstants::from_ensemble(&ens)?;
            print_constants(&constants, format);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Run {
            config,
            out,
            trials,
            horizon,
            gamma,
            seed,
            algo,
            format,
        } => cmd_run(config, out, trials, horizon, gamma, seed, algo, format),
        Cmd::Fit {
            input,
            t_min,
            t_max,
            format,
        } => {
            let rows = read_metrics_csv(&input)?;
            let fit = fit_rate(&rows, t_min.unwrap_or(0), t_max.unwrap_or(u64::MAX))?;
            print_fit(&fit, format);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprint!("{}", error_report(&err));
            ExitCode::FAILURE
        }
    }
}
