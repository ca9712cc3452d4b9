use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use atomsim::engine::{write_trace, Predicate, RunOptions};
use atomsim::harness::runner::{read_trials_csv, Summary};
use atomsim::harness::{
    replay_counterexample, run_experiment, run_trial, write_outputs, ExperimentConfig, Overrides, TrialStats,
};
use atomsim::markov::{chain_report, ChainKind};
use atomsim::programs::RobotProgram;
use atomsim::schedulers::PolicyKind;
use atomsim::Result;

#[derive(Parser)]
#[command(name = "atomsim", version, about = "Gathering and scattering of oblivious robots in the ATOM model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trial 0 of a config once and print its record.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Write one JSON object per step to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a batch of trials and write trials.csv and summary.json.
    Experiment {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Hitting times and bounds of the bounding chains.
    Chain {
        #[arg(long, value_parser = parse_chain)]
        kind: ChainKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        from: usize,
        /// Defaults to the majority state for gathering and `n` for scattering.
        #[arg(long)]
        to: Option<usize>,
        /// Monte Carlo samples; 0 skips sampling.
        #[arg(long, default_value_t = 0)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Replay the scripted Byzantine counter-example.
    Counterexample {
        #[arg(long, default_value_t = 100)]
        cycles: usize,
        /// Save the activation and coin script as JSON.
        #[arg(long)]
        script_out: Option<PathBuf>,
    },
    /// Merge experiment output directories into one table.
    Report {
        dirs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_program)]
    program: Option<RobotProgram>,
    #[arg(long, value_parser = parse_policy)]
    scheduler: Option<PolicyKind>,
    /// `gathering` or `scattering`.
    #[arg(long)]
    predicate: Option<String>,
    #[arg(long)]
    weak: Option<bool>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&self.config)?)?;
        Overrides {
            n: self.n,
            trials: self.trials,
            seed: self.seed,
            program: self.program.clone(),
            policy: self.scheduler.clone(),
            predicate: self.predicate.clone(),
            weak: self.weak,
            max_steps: self.max_steps,
            out: self.out.clone(),
        }
        .apply(cfg)
    }
}

fn parse_chain(s: &str) -> std::result::Result<ChainKind, String> {
    s.parse().map_err(|e: atomsim::Error| e.to_string())
}

fn parse_program(s: &str) -> std::result::Result<RobotProgram, String> {
    s.parse().map_err(|e: atomsim::Error| e.to_string())
}

fn parse_policy(s: &str) -> std::result::Result<PolicyKind, String> {
    s.parse().map_err(|e: atomsim::Error| e.to_string())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn predicate_label(p: Predicate) -> String {
    let (name, weak) = match p {
        Predicate::Gathering { weak } => ("gathering", weak),
        Predicate::Scattering { weak } => ("scattering", weak),
    };
    if weak {
        format!("weak {name}")
    } else {
        name.to_string()
    }
}

fn report(dirs: &[PathBuf]) -> Result<String> {
    let mut table = String::from(
        "| run | n | program | scheduler | predicate | trials | converged | failed | mean steps | mean rounds |\n\
         |---|---|---|---|---|---|---|---|---|---|\n",
    );
    for dir in dirs {
        let summary: Summary = serde_json::from_str(&fs::read_to_string(dir.join("summary.json"))?)?;
        // Recompute from the rows so that a stale summary is not silently trusted.
        let stats = TrialStats::from_rows(&read_trials_csv(&dir.join("trials.csv"))?);
        let c = &summary.config;
        table.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:.4} | {} | {} | {} |\n",
            dir.file_name().map_or_else(|| dir.display().to_string(), |f| f.to_string_lossy().into_owned()),
            c.n,
            c.program,
            c.policy,
            predicate_label(c.predicate),
            stats.trials,
            stats.converged_fraction,
            stats.failed,
            fmt_opt(stats.mean_steps()),
            fmt_opt(stats.mean_rounds()),
        ));
    }
    Ok(table)
}

enum Failure {
    Error(atomsim::Error),
    Assertion(String),
}

impl From<atomsim::Error> for Failure {
    fn from(e: atomsim::Error) -> Self {
        Failure::Error(e)
    }
}

fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Simulate { exp, trace } => {
            let cfg = exp.load()?;
            let mut opts = RunOptions::new(cfg.max_steps, 0);
            if trace.is_some() {
                opts = opts.with_trace();
            }
            let mut record = run_trial(&cfg, 0, opts)?;
            if let (Some(path), Some(events)) = (trace, record.trace.take()) {
                write_trace(&events, io::BufWriter::new(fs::File::create(path).map_err(atomsim::Error::from)?))?;
            }
            print_json(&record)?;
        }
        Command::Experiment { exp, workers } => {
            let cfg = exp.load()?;
            let result = run_experiment(&cfg, workers)?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
            write_outputs(&dir, &cfg, &result)?;
            print_json(&result.stats)?;
        }
        Command::Chain { kind, n, from, to, trials, seed } => {
            print_json(&chain_report(kind, n, from, to, trials, seed)?)?;
        }
        Command::Counterexample { cycles, script_out } => {
            if let Some(path) = script_out {
                atomsim::harness::scenarios::counterexample_script(cycles).save(&path)?;
            }
            let r = replay_counterexample(cycles)?;
            print_json(&r)?;
            if !r.passed {
                return Err(Failure::Assertion(format!(
                    "counter-example broken at step {}",
                    r.first_divergence.map_or_else(|| "-".into(), |s| s.to_string())
                )));
            }
        }
        Command::Report { dirs, out } => {
            let table = report(&dirs)?;
            match out {
                Some(path) => write_file(&path, &table)?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(2)
        }
    }
}
