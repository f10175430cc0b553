use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monaas::sim::metrics::write_metrics_csv;
use monaas::sim::suite::{builtin, scenario_suite};
use monaas::sim::{run, ConfigError, MetricsReport, Scenario};
use monaas::strategy::StrategyTag;
use monaas::trace::write_csv;

#[derive(Parser)]
#[command(name = "monaas", version, about = "Service-oriented TSCH scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Runs one scenario under one strategy.
    Run {
        /// Scenario file, or a built-in name (s1_stable, s2, ...).
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "monaas")]
        strategy: StrategyTag,
        /// Defaults to the scenario's own seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs every built-in scenario under every strategy.
    Suite {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write each run's trace.
        #[arg(long)]
        traces: bool,
    },
    /// Parses and checks a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

enum Failure {
    Config(ConfigError),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

fn io<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn load(spec: &str) -> Result<Scenario, ConfigError> {
    let path = Path::new(spec);
    if path.exists() {
        return Scenario::from_file(path);
    }
    builtin(spec).ok_or_else(|| ConfigError::invalid("scenario", format!("no file or built-in scenario named {spec:?}")))
}

fn write_metrics(path: &Path, rows: &[MetricsReport]) -> Result<(), Failure> {
    let f = fs::File::create(path).map_err(io(path))?;
    write_metrics_csv(rows, f).map_err(io(path))
}

fn run_one(sc: &Scenario, tag: StrategyTag, seed: u64, dir: &Path, trace: bool) -> Result<MetricsReport, Failure> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let out = run(sc, tag, seed);
    if trace {
        let p = dir.join("trace.csv");
        write_csv(&out.trace, fs::File::create(&p).map_err(io(&p))?).map_err(io(&p))?;
        let p = dir.join("schedule.csv");
        fs::write(&p, &out.schedule).map_err(io(&p))?;
    }
    Ok(out.metrics)
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run { scenario, strategy, seed, out } => {
            let sc = load(&scenario)?;
            sc.validate()?;
            let seed = seed.unwrap_or(sc.seed);
            let m = run_one(&sc, strategy, seed, &out, true)?;
            write_metrics(&out.join("metrics.csv"), std::slice::from_ref(&m))?;
            println!(
                "{} {} seed={} pdr={:.3} tcr={:.2} overhead={:.3} rdc={:.4} violations={}",
                m.scenario, m.strategy, m.seed, m.pdr_hop, m.tcr, m.control_overhead, m.rdc, m.violations
            );
        }
        Cmd::Suite { seeds, out, traces } => {
            let mut rows = Vec::new();
            for sc in scenario_suite() {
                for tag in StrategyTag::ALL {
                    for seed in 1..=seeds {
                        let dir = out.join(&sc.name).join(tag.as_str()).join(format!("seed{seed}"));
                        let m = run_one(&sc, tag, seed, &dir, traces)?;
                        println!("{} {} seed={} tcr={:.2} violations={}", m.scenario, m.strategy, seed, m.tcr, m.violations);
                        rows.push(m);
                    }
                }
            }
            fs::create_dir_all(&out).map_err(io(&out))?;
            write_metrics(&out.join("metrics.csv"), &rows)?;
        }
        Cmd::Validate { scenario } => {
            let sc = Scenario::from_file(&scenario)?;
            sc.validate()?;
            println!("{}: ok ({} nodes, {} tasks, {} slots)", sc.name, sc.nodes.len(), sc.tasks.len(), sc.duration);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
