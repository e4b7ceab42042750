use std::fmt::Write as _;
use std::io::{ErrorKind, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use stimavoid_core::analysis::{run_minimal_pair, PairSchedule};
use stimavoid_core::io::{
    analyze_dir, format_number, load_experiment_spec, load_sweep_spec, write_outputs,
    write_sweep_outputs,
};
use stimavoid_core::plasticity::{StdpParams, WeightBounds};
use stimavoid_core::{run_experiment, run_parameter_sweep, Error};

#[derive(Debug, Parser)]
#[command(name = "stimavoid", version, about = "Spiking-network stimulation-avoidance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one experiment and write its tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run closed/open-loop pairs over a grid of depression parameters.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the repeat count in the config file.
        #[arg(long)]
        repeats: Option<usize>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the summary of a run directory from its tables.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Weight trajectory of a single connection under an alternating
    /// pre/post spike schedule.
    Minimal {
        #[arg(long, allow_negative_numbers = true)]
        a_ltd: f64,
        #[arg(long, allow_negative_numbers = true)]
        tau_ltd: f64,
        #[arg(long, allow_negative_numbers = true)]
        dt_p: f64,
        #[arg(long, allow_negative_numbers = true)]
        dt_d: f64,
        #[arg(long, default_value_t = 1.0)]
        a_ltp: f64,
        #[arg(long, default_value_t = 20.0)]
        tau_ltp: f64,
        #[arg(long, default_value_t = 10.0)]
        initial_weight: f64,
        #[arg(long, default_value_t = 200)]
        cycles: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run { config, seed, out } => {
            let mut spec = load_experiment_spec(&config)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let started = Instant::now();
            let result = run_experiment(&spec)?;
            let manifest = write_outputs(&result, &out, Some(started.elapsed()))?;
            if let Some(fault) = &result.fault {
                eprintln!("run stopped early: {fault}");
            }
            println!(
                "wrote {} files to {} ({} spikes, final mean input weight {})",
                manifest.files.len(),
                out.display(),
                result.raster.len(),
                result
                    .final_mean_input_weight()
                    .map_or("n/a".to_string(), format_number),
            );
            if result.fault.is_some() {
                return Err(Error::NumericFault("run did not complete".into()));
            }
            Ok(())
        }
        Command::Sweep {
            config,
            repeats,
            jobs,
            out,
        } => {
            let mut spec = load_sweep_spec(&config)?;
            if let Some(r) = repeats {
                spec.sweep.repeats = r;
            }
            let started = Instant::now();
            let cells = run_parameter_sweep(&spec, jobs)?;
            write_sweep_outputs(&spec, &cells, &out, Some(started.elapsed()))?;
            let failed = cells.iter().filter(|c| c.error.is_some()).count();
            println!(
                "{} cells x {} repeats written to {}",
                cells.len(),
                spec.sweep.repeats,
                out.display()
            );
            if failed > 0 {
                return Err(Error::Analysis(format!("{failed} cells failed; see sweep.csv")));
            }
            Ok(())
        }
        Command::Analyze { input } => {
            emit(&analyze_dir(&input)?)
        }
        Command::Minimal {
            a_ltd,
            tau_ltd,
            dt_p,
            dt_d,
            a_ltp,
            tau_ltp,
            initial_weight,
            cycles,
        } => {
            let params = StdpParams::new(a_ltp, a_ltd, tau_ltp, tau_ltd)?;
            let schedule = PairSchedule {
                dt_p_ms: dt_p,
                dt_d_ms: dt_d,
                cycles,
            };
            let traj = run_minimal_pair(&params, &WeightBounds::default(), initial_weight, &schedule)?;
            let mut text = String::from("cycle,time_ms,weight\n");
            for s in traj {
                let _ = writeln!(
                    text,
                    "{},{},{}",
                    s.cycle,
                    format_number(s.time_ms),
                    format_number(s.weight)
                );
            }
            emit(&text)
        }
    }
}

// A closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}
