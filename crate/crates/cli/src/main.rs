use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rampsim_cli::output::RunError;
use rampsim_cli::sweep::{parse_values, write_table};
use rampsim_cli::{
    run_scenario, run_sweep, suites, validate, ConfigText, SweepSpec, VaryKey, EXIT_COLLISION, EXIT_VALIDATION,
};

#[derive(Parser)]
#[command(name = "rampsim", version, about = "Closed-loop on-ramp merging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write frames, events and summary CSVs.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "rampsim-out")]
        out: PathBuf,
    },
    /// Run every strategy for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// main_density_per_km, ramp_rate_per_min, decision_offset_m or ramp_length_m.
        #[arg(long)]
        vary: VaryKey,
        /// Comma-separated values, e.g. 200,400.
        #[arg(long)]
        values: String,
        /// Also write every run's artifacts and the table under this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant suites; exits 4 if any fails.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "duration-s")]
    duration_s: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ConfigText> {
        let mut text = match &self.config {
            Some(path) => {
                let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ConfigText::parse(&raw).with_context(|| format!("in {}", path.display()))?
            }
            None => ConfigText::default(),
        };
        if let Some(s) = &self.strategy {
            text.set("strategy", s.as_str())?;
        }
        if let Some(seed) = self.seed {
            text.set("seed", seed.to_string())?;
        }
        if let Some(d) = self.duration_s {
            text.set("duration_s", d.to_string())?;
        }
        Ok(text)
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let collided = e.downcast_ref::<RunError>().is_some_and(RunError::is_collision);
            ExitCode::from(if collided { EXIT_COLLISION } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run { common, out } => run(&common, &out),
        Command::Sweep {
            common,
            vary,
            values,
            out,
        } => {
            let values = parse_values(&values).map_err(anyhow::Error::msg)?;
            sweep(&common, vary, values, out.as_deref())
        }
        Command::Validate { common } => {
            let config = common.load()?.build()?;
            let reports = validate(&config);
            for r in &reports {
                println!("{r}");
            }
            Ok(if suites::all_passed(&reports) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            })
        }
    }
}

fn run(common: &Common, out: &Path) -> Result<ExitCode> {
    let config = common.load()?.build()?;
    let artifact = run_scenario(&config, out)?;
    let s = &artifact.output.summary;
    println!("strategy {} seed {}", config.strategy.name(), config.seed);
    println!("merged {}", s.total_throughput);
    match s.latency_to_fill.get(&100) {
        Some(t) => println!("latency_to_fill(100) {t} s"),
        None => println!("latency_to_fill(100) not reached"),
    }
    println!(
        "mean flow {} cars/s, mean velocity {} m/s",
        s.mean_flow, s.mean_velocity
    );
    println!("mean |a| {} m/s²", s.mean_abs_accel_overall);
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn sweep(common: &Common, vary: VaryKey, values: Vec<f64>, out: Option<&Path>) -> Result<ExitCode> {
    let base = common.load()?;
    let mut spec = SweepSpec::new(base, vary, values);
    if common.strategy.is_some() {
        spec.strategies = vec![spec.base.build()?.strategy];
    }
    let rows = run_sweep(&spec, out)?;
    write_table(io::stdout().lock(), vary, &rows)?;
    if let Some(dir) = out {
        let path = dir.join("sweep.csv");
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_table(file, vary, &rows)?;
    }
    Ok(ExitCode::SUCCESS)
}
