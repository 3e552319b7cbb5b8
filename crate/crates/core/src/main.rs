use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use emqa::analytic::analytic_row;
use emqa::experiment::{
    emit, inverse_map_checks, oracle_checks, require, sweep_and_minimize, table_configs, write_minima, write_records,
    Format, SimulationConfig,
};
use emqa::{Error, Result};

/// Annealing simulator with dual-state purification error mitigation.
#[derive(Parser, Debug)]
#[command(name = "emqa-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the annealing time for one configuration.
    Sweep(RunArgs),
    /// Every schedule x N in 3..=6 x lambda in {0, 0.004}.
    Table(RunArgs),
    /// Single-qubit closed forms on a T grid.
    Analytic(AnalyticArgs),
    /// Inverse-map and protocol/matrix equivalence checks.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config; fields not given keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file for the records (minima go to `<stem>_minima.<ext>`).
    /// Without it, records are written to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    overrides: Overrides,
}

/// One flag per config field.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    n_qubits: Option<String>,
    #[arg(long)]
    coupling: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    anisotropy: Option<String>,
    #[arg(long)]
    driver: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    flip_time: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    t_start: Option<String>,
    #[arg(long)]
    t_stop: Option<String>,
    #[arg(long)]
    t_step: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    denominator_floor: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    shots: Option<String>,
    #[arg(long)]
    route: Option<String>,
    #[arg(long)]
    refine: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(&'static str, &String)> {
        let fields = [
            ("n_qubits", &self.n_qubits),
            ("coupling", &self.coupling),
            ("anisotropy", &self.anisotropy),
            ("driver", &self.driver),
            ("lambda", &self.lambda),
            ("flip_time", &self.flip_time),
            ("schedule", &self.schedule),
            ("t_start", &self.t_start),
            ("t_stop", &self.t_stop),
            ("t_step", &self.t_step),
            ("dt", &self.dt),
            ("denominator_floor", &self.denominator_floor),
            ("seed", &self.seed),
            ("shots", &self.shots),
            ("route", &self.route),
            ("refine", &self.refine),
        ];
        fields.into_iter().filter_map(|(k, v)| v.as_ref().map(|v| (k, v))).collect()
    }
}

#[derive(Args, Debug)]
struct AnalyticArgs {
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    #[arg(long, default_value_t = 10.0)]
    t_stop: f64,
    #[arg(long, default_value_t = 0.01)]
    t_step: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Step for the unitary products.
    #[arg(long, default_value_t = 1e-2)]
    unitary_dt: f64,
    /// Step for the master-equation runs.
    #[arg(long, default_value_t = 5e-3)]
    dt: f64,
    /// Annealing time of the equivalence checks.
    #[arg(long, default_value_t = 1.0)]
    anneal_time: f64,
}

fn load_config(args: &RunArgs) -> Result<SimulationConfig> {
    let mut cfg = match &args.config {
        Some(path) => SimulationConfig::from_json_file(path)?,
        None => SimulationConfig::default(),
    };
    for (key, value) in args.overrides.pairs() {
        cfg.set(key, value)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stdout_io(source: std::io::Error) -> Error {
    Error::Io { path: "<stdout>".into(), source }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(args) => {
            let cfg = load_config(&args)?;
            let (records, min) = sweep_and_minimize(&cfg)?;
            match &args.out {
                Some(path) => emit(&records, &[min], args.format, path)?,
                None => {
                    let out = std::io::stdout().lock();
                    write_records(&records, args.format, out).map_err(stdout_io)?;
                }
            }
        }
        Command::Table(args) => {
            let base = load_config(&args)?;
            let mut records = Vec::new();
            let mut minima = Vec::new();
            for cfg in table_configs(&base) {
                let (r, m) = sweep_and_minimize(&cfg)?;
                records.extend(r);
                minima.push(m);
            }
            match &args.out {
                Some(path) => emit(&records, &minima, args.format, path)?,
                None => write_minima(&minima, args.format, std::io::stdout().lock()).map_err(stdout_io)?,
            }
        }
        Command::Analytic(args) => {
            if !(args.t_step > 0.0 && args.t_start >= 0.0 && args.t_stop >= args.t_start) {
                return Err(Error::Config("analytic grid needs 0 <= t_start <= t_stop and t_step > 0".into()));
            }
            let count = ((args.t_stop - args.t_start) / args.t_step + 1e-9).floor() as usize + 1;
            let rows = (0..count)
                .map(|k| analytic_row(args.t_start + k as f64 * args.t_step))
                .collect::<Result<Vec<_>>>()?;
            let sink: Box<dyn Write> = match &args.out {
                Some(path) => Box::new(
                    std::fs::File::create(path).map_err(|source| Error::Io { path: path.clone(), source })?,
                ),
                None => Box::new(std::io::stdout().lock()),
            };
            let target = args.out.clone().unwrap_or_else(|| "<stdout>".into());
            let mut w = csv::Writer::from_writer(sink);
            for row in &rows {
                w.serialize(row).map_err(|e| Error::Format { path: target.clone(), message: e.to_string() })?;
            }
            w.flush().map_err(|source| Error::Io { path: target, source })?;
        }
        Command::Verify(args) => {
            let mut checks = inverse_map_checks(args.unitary_dt)?;
            checks.extend(oracle_checks(args.anneal_time, args.dt)?);
            for c in &checks {
                println!("{c}");
            }
            require(&checks)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
