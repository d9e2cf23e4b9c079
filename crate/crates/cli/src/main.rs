use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bctrack_core::metrics::{replicate, SummaryMetrics, MEAN_FILE, SUMMARY_FILE};
use bctrack_core::scenario::{load_scenario, Preset, Scenario, ScenarioError};
use clap::{Parser, Subcommand, ValueEnum};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "BCTRACK_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "bctrack-out";

const EXIT_FAIL: u8 = 1;
const EXIT_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "bctrack", version, about = "Bipartite consensus tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunOpts {
    /// Base seed; run k uses seed + k. Defaults to the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of runs. Defaults to the scenario's n_runs.
    #[arg(long)]
    runs: Option<usize>,
    /// Output directory (default: $BCTRACK_OUT_DIR, else ./bctrack-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Numerical,
    Vehicle,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Numerical => Preset::Numerical,
            PresetArg::Vehicle => Preset::Vehicle,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a scenario file.
    Validate { file: PathBuf },
    /// Run the ensemble described by a scenario file.
    Run {
        file: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run one of the shipped scenarios.
    Replicate {
        #[arg(value_enum)]
        preset: PresetArg,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Print sigma and its derivative at the given times.
    FtpfTable {
        /// A preset name or a scenario file.
        profile: String,
        /// Comma-separated times.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        t_list: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { file } => match load(&file) {
            Ok(s) => {
                let cl = &s.closed_loop;
                println!(
                    "ok: {} ({} agents, h = {:.6}, {} runs of {} steps)",
                    s.name(),
                    cl.agents(),
                    cl.gain_constant,
                    s.n_runs(),
                    s.integrator.steps()
                );
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { file, opts } => match load(&file) {
            Ok(s) => execute(&s, &opts),
            Err(code) => code,
        },
        Command::Replicate { preset, opts } => execute(&Preset::from(preset).load(), &opts),
        Command::FtpfTable { profile, t_list } => {
            let scenario = match Preset::from_name(&profile) {
                Some(p) => p.load(),
                None => match load(Path::new(&profile)) {
                    Ok(s) => s,
                    Err(code) => return code,
                },
            };
            let p = scenario.closed_loop.profile;
            println!("t,sigma,sigma_dot");
            for t in t_list {
                println!("{t:?},{:?},{:?}", p.sigma(t), p.sigma_dot(t));
            }
            ExitCode::SUCCESS
        }
    }
}

fn load(path: &Path) -> Result<Scenario, ExitCode> {
    load_scenario(path).map_err(|e| {
        match &e {
            ScenarioError::Validation(v) => {
                eprintln!("{}: invalid scenario", path.display());
                for issue in &v.issues {
                    eprintln!("  - {issue}");
                }
            }
            other => eprintln!("{}: {other}", path.display()),
        }
        ExitCode::from(EXIT_INVALID)
    })
}

fn execute(s: &Scenario, opts: &RunOpts) -> ExitCode {
    let out = opts
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let runs = opts.runs.unwrap_or(s.n_runs());
    let seed = opts.seed.unwrap_or(s.seed());
    eprintln!("{}: {runs} runs from seed {seed}, writing to {}", s.name(), out.display());
    match replicate(s, runs, seed, Some(&out)) {
        Ok(summary) => {
            report(&summary);
            println!("wrote {} and {} to {}", SUMMARY_FILE, MEAN_FILE, out.display());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAIL)
        }
    }
}

fn report(s: &SummaryMetrics) {
    println!("scenario {}: {}/{} runs completed", s.scenario, s.completed, s.runs);
    for r in s.per_run.iter().filter(|r| !r.completed) {
        let at = r.failed_at.map_or(String::new(), |t| format!(" at t = {t:.4}"));
        println!("  seed {} stopped{at}: {}", r.seed, r.failure.as_deref().unwrap_or("?"));
    }
    let fmt = |v: f64| if v.is_nan() { "n/a".to_string() } else { format!("{v:.4}") };
    println!(
        "  from t = {}: worst mean |z| {}, worst mean ||e|| {}, steady bound {:.4}",
        s.from,
        fmt(s.worst_mean_abs_z),
        fmt(s.worst_mean_error_norm),
        s.error_bound
    );
    for c in &s.checks {
        println!("  [{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{}", if s.passed { "PASS" } else { "FAIL" });
}
