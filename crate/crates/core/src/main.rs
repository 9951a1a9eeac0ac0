use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pamec::{
    emit_csv, init_solution, run_alternating, run_sweep, sample_devices, AoOptions, Error, Result,
    ScenarioConfig, SchemeId, SweepParam, SweepSpec, SystemModel,
};

#[derive(Parser)]
#[command(name = "pamec", version, about = "Pinching-antenna wireless-powered MEC optimizer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter over schemes and device drops.
    Run {
        /// Scenario file (`key = value` lines); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// bs_power_dbm, num_antennas or bandwidth (Hz).
        #[arg(long)]
        sweep: String,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "proposed,conventional_mimo,fixed_pa,tdma")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Convergence trace of the alternating optimization for one drop.
    Trace {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::parse(&fs::read_to_string(p)?),
        None => Ok(ScenarioConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, sweep, values, schemes, seeds, out, workers } => {
            let base = load_config(config.as_deref())?;
            let schemes = schemes.iter().map(|s| s.parse()).collect::<Result<Vec<SchemeId>>>()?;
            let mut spec = SweepSpec::new(sweep.parse::<SweepParam>()?, values, schemes, seeds);
            spec.workers = workers;
            let table = run_sweep(&spec, &base)?;
            for row in table.failures() {
                eprintln!(
                    "cell {}={} scheme={} seed={} failed: {}",
                    spec.param,
                    row.value,
                    row.scheme,
                    row.seed,
                    row.error.as_deref().unwrap_or("")
                );
            }
            if table.failures().count() == table.rows.len() {
                // surface a bad sweep value as the configuration error it is
                for &v in &spec.values {
                    spec.param.apply(&base, v)?;
                }
                return Err(Error::Infeasible("every sweep cell failed".into()));
            }
            emit_csv(&table, &out)?;
            for &v in &spec.values {
                for &s in &spec.schemes {
                    if let Some(m) = table.mean(v, s) {
                        println!(
                            "{}={v} {s}: {:.6e} bits, {:.6e} J ({} drops)",
                            spec.param, m.objective_bits, m.harvested_joules, m.samples
                        );
                    }
                }
            }
            Ok(())
        }
        Command::Trace { config, seed, out } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.rng_seed = seed;
            let devices = sample_devices(&cfg);
            let model = SystemModel::new(cfg, devices)?;
            let init = init_solution(&model)?;
            let mut rng = model.config.solver_rng();
            let (state, trace) = run_alternating(&model, init, &AoOptions::default(), &mut rng)?;
            fs::write(&out, trace.to_csv())?;
            println!(
                "{} outer iterations, {:.6e} bits (converged: {})",
                trace.outer.len(),
                state.objective,
                trace.converged
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
