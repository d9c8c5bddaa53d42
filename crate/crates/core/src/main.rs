use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use gmotv::harness::degrade::{degrade, NoiseReference};
use gmotv::harness::io::write_signal;
use gmotv::harness::methods::{default_lambda_grid, Instance};
use gmotv::harness::output::{emit_plots, read_csv};
use gmotv::harness::{
    emit_outputs, gaussian_kernel, isnr, load_signal, run_experiment, train_structure, tune_lambda,
    ExperimentSpec, LoadOptions, Method, Restorer, SolverSettings,
};
use gmotv::mmkl::{read_structure, write_structure};
use gmotv::restore::DegradationModel;

#[derive(Parser)]
#[command(name = "gmotv", version, about = "Multi-order total variation restoration of 1D signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a structure matrix from clean training signals.
    Train {
        /// One or more training files; their statistics are pooled.
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        order: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        index_column: bool,
    },
    /// Add noise to a clean signal and restore it.
    Denoise(RestoreArgs),
    /// Blur a clean signal, add noise and restore it.
    Deblur(RestoreArgs),
    /// Run a benchmark grid from a TOML or JSON spec.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot ISNR against noise level from a results.csv.
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RestoreArgs {
    /// Clean signal; the degraded version is synthesized from it.
    #[arg(long)]
    input: PathBuf,
    /// Structure matrix file, required by GMO-TV methods.
    #[arg(long)]
    structure: Option<PathBuf>,
    #[arg(long)]
    method: Method,
    /// A positive value, or `auto` to pick the best of the default grid.
    #[arg(long, default_value = "auto")]
    lambda: String,
    #[arg(long, conflicts_with = "bsnr")]
    snr: Option<f64>,
    #[arg(long)]
    bsnr: Option<f64>,
    #[arg(long)]
    blur_variance: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where the restored signal is written, one sample per line.
    #[arg(long)]
    out: PathBuf,
    /// Also write the degraded signal here.
    #[arg(long)]
    degraded_out: Option<PathBuf>,
    #[arg(long)]
    index_column: bool,
}

fn run_restore(args: RestoreArgs, deblur: bool) -> Result<()> {
    let opts = LoadOptions {
        first_column_is_index: args.index_column,
    };
    let clean = load_signal(&args.input, opts)?;
    let model = match (deblur, args.blur_variance) {
        (true, Some(v)) => DegradationModel::new(gaussian_kernel(v)?),
        (true, None) => bail!("deblur needs --blur-variance"),
        (false, Some(_)) => bail!("--blur-variance only applies to deblur"),
        (false, None) => DegradationModel::denoise(),
    };
    let (level, reference) = match (args.snr, args.bsnr) {
        (Some(v), None) => (v, NoiseReference::SignalPower),
        (None, Some(v)) => (v, NoiseReference::BlurredVariance),
        _ => bail!("give exactly one of --snr or --bsnr"),
    };
    let degraded = degrade(&clean, &model, level, reference, args.seed)?;
    if let Some(p) = &args.degraded_out {
        write_signal(p, &degraded)?;
    }

    let structure = match &args.structure {
        Some(p) => Some(read_structure(p)?),
        None => None,
    };
    let restorer = Restorer::new(args.method, structure, SolverSettings::default())?;
    let grid = if args.lambda == "auto" {
        default_lambda_grid()
    } else {
        let v: f64 = args
            .lambda
            .parse()
            .with_context(|| format!("--lambda {:?} is neither a number nor auto", args.lambda))?;
        vec![v]
    };
    let inst = Instance {
        clean: clean.clone(),
        degraded: degraded.clone(),
        model,
    };
    let tuned = tune_lambda(std::slice::from_ref(&inst), &restorer, &grid)?;
    let restored = &tuned.restored[0];
    write_signal(&args.out, restored)?;
    println!(
        "{}: lambda {:e}, ISNR {:.4} dB",
        args.method,
        tuned.lambda,
        isnr(&clean, &degraded, restored)?
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train {
            input,
            order,
            out,
            index_column,
        } => {
            let paths: Vec<_> = input.iter().map(PathBuf::as_path).collect();
            let opts = LoadOptions {
                first_column_is_index: index_column,
            };
            let s = train_structure(&paths, order, opts)?;
            write_structure(&out, &s)?;
            info!("wrote {}x{} structure matrix to {}", order, order, out.display());
        }
        Command::Denoise(args) => run_restore(args, false)?,
        Command::Deblur(args) => run_restore(args, true)?,
        Command::Bench { spec, out } => {
            let spec = ExperimentSpec::from_file(&spec)?;
            let result = run_experiment(&spec)?;
            for path in emit_outputs(&result.table, &result.overlays, &out)? {
                info!("wrote {}", path.display());
            }
            print!("{}", std::fs::read_to_string(out.join("results.md"))?);
        }
        Command::Plot { results, out } => {
            let table = read_csv(&results)?;
            for path in emit_plots(&table, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
