use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mcrcd_cli::{
    parse_config, parse_scenarios, parse_sweep, run_experiment, ExperimentSpec, Overrides,
};

/// Monte Carlo comparison of multicast, optimal D2D LAN and MCRCD.
#[derive(Parser, Debug)]
#[command(name = "mcrcd", version)]
struct Args {
    /// Config file of `key = value` lines
    #[arg(long)]
    config: Option<PathBuf>,

    /// Number of MUs (single sweep point)
    #[arg(long, conflicts_with = "sweep_k")]
    k: Option<usize>,

    /// Inclusive MU sweep, e.g. `4:8`
    #[arg(long, value_name = "MIN:MAX")]
    sweep_k: Option<String>,

    /// Monte Carlo replications per K
    #[arg(long)]
    runs: Option<usize>,

    /// Slots per content session
    #[arg(long)]
    slots: Option<usize>,

    /// Master RNG seed
    #[arg(long)]
    seed: Option<u64>,

    /// multicast, optimal, mcrcd or all
    #[arg(long)]
    scenario: Option<String>,

    /// Summary CSV path; the detail file is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MCRCD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("MCRCD_THREADS must be a non-negative integer, got `{raw}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn build_spec(args: &Args) -> Result<ExperimentSpec, String> {
    let mut spec = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentSpec::default(),
    };
    let overrides = Overrides {
        k: args.k,
        sweep_k: args
            .sweep_k
            .as_deref()
            .map(parse_sweep)
            .transpose()
            .map_err(|e| e.to_string())?,
        runs: args.runs,
        slots: args.slots,
        seed: args.seed,
        scenarios: args
            .scenario
            .as_deref()
            .map(parse_scenarios)
            .transpose()
            .map_err(|e| e.to_string())?,
        out: args.out.clone(),
    };
    overrides.apply(&mut spec);
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = init_threads()
        .and_then(|()| build_spec(&args))
        .and_then(|spec| {
            let mut stdout = std::io::stdout().lock();
            let out = run_experiment(&spec, &mut stdout).map_err(|e| e.to_string())?;
            println!(
                "wrote {} and {}",
                out.summary_path.display(),
                out.detail_path.display()
            );
            Ok(())
        });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
