use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sclifd_core::datasets::SynthParams;
use sclifd_core::experiment::{
    cmd_ablate, cmd_gensynth, cmd_run, defaults_toml, AblationAxes, ExperimentConfig,
};
use sclifd_core::{Error, Result};

/// Class-incremental fault diagnosis with supervised contrastive knowledge
/// distillation, marginal exemplar selection and a balanced random forest.
///
/// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
/// error. Run `sclifd defaults` for every configuration key and its default.
#[derive(Debug, Parser)]
#[command(name = "sclifd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment TOML file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one embedding CSV per session.
    #[arg(long)]
    dump_embeddings: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every session of an experiment and write report.json/report.csv.
    Run(RunArgs),
    /// Run the cross product of ablation variants and write ablation.csv.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Axis to sweep, as `name` (all values) or `name=v1,v2`. Axes are
        /// loss (scl, ce), selection (mes, herding, random, mixed) and
        /// classifier (brf, fcc). Repeatable; all three when omitted.
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// Write a synthetic Gaussian dataset as CSV.
    GenSynth {
        /// Destination CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 24)]
        dim: usize,
        /// Samples per class, comma separated; overrides the normal/fault counts.
        #[arg(long, value_delimiter = ',')]
        counts: Vec<usize>,
        /// Samples of class 0.
        #[arg(long, default_value_t = 200)]
        normal_count: usize,
        /// Samples of every other class.
        #[arg(long, default_value_t = 105)]
        fault_count: usize,
        #[arg(long, default_value_t = 3.0)]
        means_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_sigma: f64,
    },
    /// Print the default configuration as TOML.
    Defaults,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    config.dump_embeddings |= args.dump_embeddings;
    config.validate()?;
    Ok(config)
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = load_config(&args)?;
            let report = cmd_run(&config)?;
            for s in &report.sessions {
                println!(
                    "session {}: {} classes, accuracy {}",
                    s.session,
                    s.classes.len(),
                    pct(s.accuracy)
                );
            }
            for f in &report.shortfalls {
                eprintln!(
                    "warning: class {} supplied {} of {} {:?} samples",
                    f.class, f.taken, f.requested, f.split
                );
            }
            println!("average accuracy {}", pct(report.summary.average));
            println!("reports written to {}", config.out_dir.display());
        }
        Command::Ablate { run, axes } => {
            let config = load_config(&run)?;
            let axes = if axes.is_empty() {
                AblationAxes::full()
            } else {
                AblationAxes::parse(&axes)?
            };
            let rows = cmd_ablate(&config, &axes)?;
            for r in &rows {
                println!(
                    "{:>3} {:>8} {:>4}  average {}",
                    r.variant.loss.name(),
                    r.variant.selection.name(),
                    r.variant.classifier.name(),
                    pct(r.report.summary.average)
                );
            }
            println!("{}", config.out_dir.join("ablation.csv").display());
        }
        Command::GenSynth {
            out,
            seed,
            classes,
            dim,
            counts,
            normal_count,
            fault_count,
            means_scale,
            noise_sigma,
        } => {
            let counts = if counts.is_empty() {
                (0..classes)
                    .map(|c| if c == 0 { normal_count } else { fault_count })
                    .collect()
            } else {
                counts
            };
            let params = SynthParams {
                class_count: classes,
                dim,
                means_scale,
                noise_sigma,
                counts,
                seed,
            };
            let ds = cmd_gensynth(&params, &out).map_err(|e| match e {
                Error::InvalidInput(m) => Error::Config(m),
                other => other,
            })?;
            println!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Defaults => print!("{}", defaults_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
