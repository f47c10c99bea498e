use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mpisv::config::ExperimentConfig;
use mpisv::experiment::{run_compare, run_simulate, OUTPUT_ROOT_VAR};
use mpisv::spectra::{fit_decay, parse_spectrum_csv, DecayModel, FitSummary, FitWindow, Normalization};
use mpisv::{Error, Result};

#[derive(Parser)]
#[command(name = "mpisv", version, about = "Singular value spectra of discretized MPI forward operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble, decompose and fit one configuration, writing its artifacts.
    Simulate {
        config: PathBuf,
        /// Root for relative output directories.
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        output_root: Option<PathBuf>,
    },
    /// Fit decay laws to a spectrum CSV.
    Fit {
        spectrum: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Both)]
        model: ModelArg,
        /// Index range `first:last`, 1-based and inclusive.
        #[arg(long)]
        window: Option<String>,
    },
    /// Simulate several configurations and compare their spectra.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        #[arg(long)]
        window: Option<String>,
        /// Compare raw singular values instead of `σ_n/σ_1`.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value = "compare")]
        output: PathBuf,
        #[arg(long, env = OUTPUT_ROOT_VAR)]
        output_root: Option<PathBuf>,
    },
    /// Check a configuration and list every problem found.
    Validate { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    PowerLaw,
    Exponential,
    Both,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                Error::Validation(list) => {
                    eprintln!("invalid configuration:");
                    for item in list {
                        eprintln!("  - {item}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { config, output_root } => {
            let config = ExperimentConfig::load(&config)?;
            let outcome = run_simulate(&config, output_root.as_deref())?;
            let sim = &outcome.simulation;
            println!("{} ({})", sim.name, sim.config_hash);
            for m in &sim.members {
                let fit = m
                    .fits
                    .as_ref()
                    .and_then(|f| f.fit(DecayModel::PowerLaw).map(|p| (f.window, p.exponent)));
                match fit {
                    Some((w, nu)) => println!(
                        "  {}: {}x{}, rank {}, power-law exponent {nu:.4} over {w}",
                        m.label,
                        m.rows,
                        m.columns,
                        m.report.rank_estimate()
                    ),
                    None => println!("  {}: {}x{}, rank {}", m.label, m.rows, m.columns, m.report.rank_estimate()),
                }
            }
            for w in &sim.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} files to {}", outcome.files.len(), outcome.directory.display());
        }
        Command::Fit { spectrum, model, window } => {
            let text = std::fs::read_to_string(&spectrum).map_err(|e| Error::Io {
                path: spectrum.clone(),
                source: e,
            })?;
            let label = spectrum.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let report = parse_spectrum_csv(&label, &text)?;
            let window = match window {
                Some(w) => FitWindow::parse(&w)?,
                None => report.default_window()?,
            };
            let models = match model {
                ModelArg::PowerLaw => vec![DecayModel::PowerLaw],
                ModelArg::Exponential => vec![DecayModel::Exponential],
                ModelArg::Both => vec![DecayModel::PowerLaw, DecayModel::Exponential],
            };
            let fits = models
                .into_iter()
                .map(|m| fit_decay(&report, m, Some(window)))
                .collect::<Result<Vec<_>>>()?;
            print!("{}", FitSummary::new(&report, fits).to_text());
        }
        Command::Compare { configs, window, raw, output, output_root } => {
            let configs = configs
                .iter()
                .map(|p| ExperimentConfig::load(p))
                .collect::<Result<Vec<_>>>()?;
            let window = window.as_deref().map(FitWindow::parse).transpose()?;
            let normalization = if raw { Normalization::Raw } else { Normalization::Leading };
            let output = match output_root {
                Some(root) if output.is_relative() => root.join(output),
                _ => output,
            };
            let outcome = run_compare(&configs, window, normalization, &output)?;
            for v in outcome.verdicts() {
                println!("{v}");
            }
            println!("wrote {} files to {}", outcome.files.len(), output.display());
        }
        Command::Validate { config } => {
            let config = ExperimentConfig::load(&config)?;
            let warnings = config.validate()?;
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            println!("valid ({})", config.hash());
        }
    }
    Ok(())
}
