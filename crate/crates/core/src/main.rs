use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sia_sim::channel::GainModel;
use sia_sim::experiments::{run_sweep, snr_grid, write_channel_dump, write_csv, write_summary, ExperimentConfig, GainBoost};
use sia_sim::precoding::Generator;
use sia_sim::strong_ia::{Scheme, SchemeOptions};
use sia_sim::{Error, Result};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Strong,
    Linear,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GainModelArg {
    Gaussian,
    Bounded,
}

/// Monte Carlo sum-rate sweep for strong interference alignment on the
/// 3-user interference channel.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    /// Streams per user (symbol extension of 2n slots).
    #[arg(long, default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    snr_start: f64,
    #[arg(long, default_value_t = 50.0, allow_negative_numbers = true)]
    snr_stop: f64,
    #[arg(long, default_value_t = 5.0)]
    snr_step: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Both)]
    scheme: SchemeArg,
    #[arg(long, value_enum, default_value_t = GainModelArg::Gaussian)]
    gain_model: GainModelArg,
    #[arg(long, default_value_t = 0.1)]
    h_min: f64,
    #[arg(long, default_value_t = 3.0)]
    h_max: f64,
    /// Scale link H[rx][tx], e.g. `--gain-boost 23 1000`. Repeatable.
    #[arg(long, num_args = 2, value_names = ["LINK", "FACTOR"])]
    gain_boost: Vec<String>,
    /// Realizations sharing one strong-condition evaluation.
    #[arg(long, default_value_t = 1)]
    block_size: usize,
    /// Lowest SNR used for the DoF slope estimate.
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    slope_from: f64,
    /// Seed of a random generator vector; the all-ones vector otherwise.
    #[arg(long)]
    generator_seed: Option<u64>,
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
    #[arg(long, default_value = "summary.json")]
    summary: PathBuf,
    /// Also write every channel realization to this file.
    #[arg(long)]
    dump_channels: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let schemes = match cli.scheme {
        SchemeArg::Strong => vec![Scheme::StrongIa],
        SchemeArg::Linear => vec![Scheme::LinearFallback],
        SchemeArg::Both => vec![Scheme::StrongIa, Scheme::LinearFallback],
    };
    let gain_model = match cli.gain_model {
        GainModelArg::Gaussian => GainModel::UnboundedGaussian,
        GainModelArg::Bounded => GainModel::BoundedMagnitude { h_min: cli.h_min, h_max: cli.h_max },
    };
    let gain_boosts = cli
        .gain_boost
        .chunks(2)
        .map(|pair| {
            let factor: f64 = pair[1]
                .parse()
                .map_err(|_| Error::Config(format!("gain boost factor {:?} is not a number", pair[1])))?;
            GainBoost::parse(&pair[0], factor)
        })
        .collect::<Result<Vec<_>>>()?;
    let generator = cli.generator_seed.map_or(Generator::Ones, |seed| Generator::Random { seed });
    let cfg = ExperimentConfig {
        n: cli.n,
        trials: cli.trials,
        block_size: cli.block_size,
        snr_grid_db: snr_grid(cli.snr_start, cli.snr_stop, cli.snr_step)?,
        gain_model,
        gain_boosts,
        seed: cli.seed,
        schemes,
        options: SchemeOptions { generator, ..SchemeOptions::default() },
        slope_from_db: cli.slope_from,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_to(path: &PathBuf, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = build_config(cli)?;
    let rows = run_sweep(&cfg)?;
    write_to(&cli.out, |w| write_csv(&rows, w))?;
    write_to(&cli.summary, |w| write_summary(&cfg, &rows, w))?;
    if let Some(path) = &cli.dump_channels {
        write_to(path, |w| write_channel_dump(&cfg, w))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidInput(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
