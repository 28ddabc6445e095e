use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rangevio::filter::FilterMode;
use rangevio::harness::{
    emit_results, run_monte_carlo, SimConfig, TrialConfig, TrialOptions, World, KEYS,
};

/// Runs Monte-Carlo descent trials and writes per-trial and summary CSVs.
#[derive(Debug, Parser)]
#[command(name = "simulate")]
struct Args {
    /// Flat `key = value` config file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "range")]
    mode: FilterMode,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, required_unless_present = "list_keys")]
    out: Option<PathBuf>,
    /// Start the descent at `full_profile_start_agl` instead of `start_agl`.
    #[arg(long)]
    full_profile: bool,
    /// Save rendered camera frames (PGM, one per second) under `<out>/images`.
    #[arg(long)]
    render_images: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override a config key, `key=value`; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Print every config key with its default and exit.
    #[arg(long)]
    list_keys: bool,
}

fn run(args: Args) -> Result<bool, Box<dyn std::error::Error>> {
    let out = args.out.clone().ok_or("--out is required")?;
    let mut sim = match &args.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| format!("--set expects key=value, got '{o}'"))?;
        sim.set(k.trim(), v.trim())?;
    }
    sim.validate()?;
    let world = World::build(&sim)?;
    let base = TrialConfig {
        sim,
        mode: args.mode,
        master_seed: args.seed,
        trial: 0,
        options: TrialOptions {
            check_covariance: false,
            full_profile: args.full_profile,
            render_dir: args.render_images.then(|| out.join("images")),
        },
    };
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let (results, summary) = run_monte_carlo(&base, &world, args.trials, threads)?;
    emit_results(&results, &out)?;
    for r in results.iter().filter(|r| r.failed()) {
        eprintln!(
            "trial {} failed: {}",
            r.trial,
            r.failure.as_deref().unwrap_or("")
        );
    }
    println!(
        "mode {} trials {} diverged {} failed {} rms envelope [{:.3}, {:.3}, {:.3}] m/s",
        args.mode.name(),
        summary.trials,
        summary.diverged,
        summary.failed,
        summary.rms_envelope.x,
        summary.rms_envelope.y,
        summary.rms_envelope.z
    );
    Ok(summary.failed == 0)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_keys {
        for (key, default, meaning) in KEYS {
            println!("{key:<24} {default:<12} {meaning}");
        }
        return ExitCode::SUCCESS;
    }
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
