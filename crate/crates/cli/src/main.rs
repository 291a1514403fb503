use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use csm6lo_core::experiments::{
    self, matrix_checks, output, render_report, CheckReport, MatrixFilter, MatrixResult,
};
use csm6lo_core::{AttackKind, Knowledge, Mode, ScenarioConfig, Timing};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Fragment buffer-reservation attack simulator.
#[derive(Parser)]
#[command(name = "csm6lo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario for all of its rounds.
    Run(RunArgs),
    /// Run the mode × scenario grid (optionally narrowed by --mode/--attack/--timing).
    Matrix(RunArgs),
    /// Recompute summary.csv and report.md from a results directory's rounds.csv.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML scenario file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    /// none | full-packet | frag1-only | all-but-last
    #[arg(long)]
    attack: Option<AttackKind>,
    /// before | simultaneous | after
    #[arg(long)]
    timing: Option<Timing>,
    /// external | internal | spoof-link-addr
    #[arg(long)]
    knowledge: Option<Knowledge>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Base seed; round r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds per round.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Also write one event trace CSV per round under OUT/traces.
    #[arg(long)]
    trace: bool,
    /// Exit nonzero if any invariant or expected outcome is violated.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Results directory holding rounds.csv.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    check: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(k) = self.attack {
            cfg.attack.kind = k;
        }
        if let Some(t) = self.timing {
            cfg.attack.timing = t;
        }
        if let Some(k) = self.knowledge {
            cfg.attack.knowledge = k;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        if let Some(d) = self.duration {
            cfg.duration = d;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn filter(&self) -> MatrixFilter {
        MatrixFilter {
            mode: self.mode,
            kind: self.attack,
            timing: self.timing,
        }
    }
}

fn print_checks(checks: &CheckReport, violations: &[String]) {
    for w in &checks.warnings {
        eprintln!("warning: {w}");
    }
    for v in violations {
        eprintln!("violation: {v}");
    }
    for f in &checks.failures {
        eprintln!("check failed: {f}");
    }
}

fn finish(args: &RunArgs, cfg: &ScenarioConfig, result: MatrixResult) -> Result<ExitCode> {
    let checks = matrix_checks(&result.summaries, cfg.attack.knowledge);
    let files = output::write_results(&args.out, cfg, &result, &checks)
        .with_context(|| format!("writing results to {}", args.out.display()))?;
    print!("{}", render_report(&result.summaries));
    println!("results: {}", files.rounds.parent().unwrap_or(Path::new(".")).display());
    if args.check {
        print_checks(&checks, &result.violations);
        if !checks.passed() || !result.violations.is_empty() {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let result = experiments::run_scenario(&cfg, args.trace)?;
            finish(&args, &cfg, result)
        }
        Command::Matrix(args) => {
            let cfg = args.config()?;
            let result = experiments::run_matrix(&cfg, args.filter(), args.trace)?;
            finish(&args, &cfg, result)
        }
        Command::Report(args) => {
            let summaries = output::regenerate(&args.out)
                .with_context(|| format!("regenerating report in {}", args.out.display()))?;
            print!("{}", render_report(&summaries));
            if args.check {
                let cfg_path = args.out.join(output::CONFIG_FILE);
                let knowledge = if cfg_path.exists() {
                    ScenarioConfig::load(&cfg_path)?.attack.knowledge
                } else {
                    Knowledge::External
                };
                let checks = matrix_checks(&summaries, knowledge);
                print_checks(&checks, &[]);
                if !checks.passed() {
                    return Ok(ExitCode::from(1));
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
