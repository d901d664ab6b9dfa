//! Benchmark driver for one-bit sparse recovery on a ULA grid.
//!
//! `run` sweeps SNR x algorithm cells of seeded Monte-Carlo trials and
//! writes trials/summary/bin-count CSVs; `single` scores one realization
//! (optionally emitting the per-angle spectrum); `selftest` replays the
//! built-in numerical oracles.

mod config;
mod output;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use onebit_core::doa::run_monte_carlo;

use config::RunSpec;

const EXIT_CONFIG: u8 = 1;
const EXIT_BREAKDOWN: u8 = 2;

#[derive(Parser)]
#[command(name = "onebit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run spec.
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bound the trial-level worker count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full Monte-Carlo sweep and write result CSVs.
    Run {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Score a single seeded realization at the first sweep SNR.
    Single {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write the per-grid-angle magnitude spectrum CSV.
        #[arg(long)]
        emit_spectrum: bool,
    },
    /// Run the built-in numerical checks.
    Selftest,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { common } => cmd_run(&common),
        Command::Single {
            common,
            emit_spectrum,
        } => cmd_single(&common, emit_spectrum),
        Command::Selftest => selftest::run() as u8,
    };
    ExitCode::from(code)
}

fn load(common: &CommonArgs) -> Result<(RunSpec, u64, PathBuf), String> {
    let text = std::fs::read_to_string(&common.spec)
        .map_err(|e| format!("{}: {e}", common.spec.display()))?;
    let spec = RunSpec::parse(&text).map_err(|e| format!("{}: {e}", common.spec.display()))?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err("--threads must be at least 1".into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let seed = common.seed.unwrap_or(spec.seed);
    let out = common.out.clone().unwrap_or_else(|| spec.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    Ok((spec, seed, out))
}

fn fail(code: u8, message: &str) -> u8 {
    eprintln!("error: {message}");
    code
}

fn cmd_run(common: &CommonArgs) -> u8 {
    let (spec, seed, out) = match load(common) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    let algorithms = spec.named_algorithms();

    let mut trials_w = match output::trials_writer(&out.join("trials.csv")) {
        Ok(w) => w,
        Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
    };
    let mut summary_w = match output::summary_writer(&out.join("summary.csv")) {
        Ok(w) => w,
        Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
    };

    // bins aggregate over the whole sweep; the grid is SNR-independent
    let mut bins_total: std::collections::BTreeMap<String, Vec<u64>> =
        std::collections::BTreeMap::new();
    let mut dead_cells = Vec::new();

    println!("algorithm        snr_db  mean_nmse_db  detection_rate  mean_runtime_s  n_failed");
    for &snr_db in &spec.snr_sweep_db {
        let scenario = spec.scenario(snr_db);
        let result = match run_monte_carlo(&scenario, &algorithms, spec.trials, seed) {
            Ok(r) => r,
            Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
        };
        if let Err(e) = output::append_cell(&mut trials_w, &mut summary_w, snr_db, &result) {
            return fail(EXIT_CONFIG, &e.to_string());
        }
        for (alg, counts) in &result.bins {
            let total = bins_total
                .entry(alg.clone())
                .or_insert_with(|| vec![0; counts.len()]);
            for (t, &c) in total.iter_mut().zip(counts) {
                *t += c;
            }
        }
        for row in &result.summary {
            println!(
                "{:<16} {:>6} {:>13.2} {:>15.2} {:>15.3} {:>9}",
                row.algorithm,
                snr_db,
                row.mean_nmse_db,
                row.detection_rate,
                row.mean_runtime_s,
                row.n_failed
            );
            if row.n_failed == spec.trials {
                dead_cells.push(format!("{} at {} dB", row.algorithm, snr_db));
            }
        }
    }

    let scenario = spec.scenario(spec.snr_sweep_db[0]);
    if let Err(e) = trials_w
        .flush()
        .map_err(|e| e.to_string())
        .and_then(|()| summary_w.flush().map_err(|e| e.to_string()))
        .and_then(|()| {
            output::write_bins(&out.join("bins.csv"), &scenario, &bins_total)
                .map_err(|e| e.to_string())
        })
    {
        return fail(EXIT_CONFIG, &e);
    }

    if !dead_cells.is_empty() {
        return fail(
            EXIT_BREAKDOWN,
            &format!("all trials failed in: {}", dead_cells.join(", ")),
        );
    }
    0
}

fn cmd_single(common: &CommonArgs, emit_spectrum: bool) -> u8 {
    let (spec, seed, out) = match load(common) {
        Ok(v) => v,
        Err(e) => return fail(EXIT_CONFIG, &e),
    };
    let algorithms = spec.named_algorithms();
    let scenario = spec.scenario(spec.snr_sweep_db[0]);

    let (records, failures) =
        match onebit_core::doa::run_trial(&scenario, &algorithms, seed, 0) {
            Ok(v) => v,
            Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
        };
    for r in &records {
        let angles: Vec<String> = r
            .support
            .iter()
            .map(|&i| format!("{}", scenario.grid[i]))
            .collect();
        println!(
            "{}: nmse {:.2} dB, detected {}, top-{} angles [{}], {:.3} s",
            r.algorithm,
            r.nmse_db,
            r.detected,
            r.support.len(),
            angles.join(", "),
            r.runtime_s
        );
    }
    for f in &failures {
        eprintln!("{}: failed: {}", f.algorithm, f.message);
    }

    if emit_spectrum {
        if let Err(e) = output::write_spectrum(&out.join("spectrum.csv"), &scenario, &records) {
            return fail(EXIT_CONFIG, &e.to_string());
        }
    }
    if records.is_empty() {
        return fail(EXIT_BREAKDOWN, "every algorithm failed on the realization");
    }
    0
}
