//! Scenario runner and trace tooling.
//!
//! Exit codes: 0 clean run, 1 internal error, 2 invalid config or
//! unparseable trace, 3 invariant or safety violations, 4 grid too
//! large.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use seesaw_core::scenario::ScenarioConfig;
use seesaw_core::sim::{enumerate_faults, run, GridDimension, GridSpec, SimError};
use seesaw_core::trace::{audit, Trace};

const EXIT_OK: u8 = 0;
const EXIT_INTERNAL: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_VIOLATIONS: u8 = 3;
const EXIT_GRID: u8 = 4;

#[derive(Parser)]
#[command(
    name = "seesaw",
    about = "Run, enumerate, audit and replay payment-channel re-balancing scenarios",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    /// Human-readable summary.
    #[default]
    Table,
    /// Stable JSON (schema-versioned by the crate).
    Structured,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one scenario, audit it, and print the final report.
    Run {
        /// Scenario config (TOML).
        config: PathBuf,
        /// Write the trace (JSON lines) to this path.
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Report format.
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Override the scenario seed (affects key and hash bytes
        /// only, never outcomes).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario across an adversary grid and summarize outcomes.
    Enumerate {
        /// Base scenario config (TOML).
        config: PathBuf,
        /// Comma-separated grid dimensions: banks, participants,
        /// alternatives.
        #[arg(long, default_value = "banks")]
        grid: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a recorded trace against every invariant.
    Audit {
        /// Trace file (JSON lines).
        trace: PathBuf,
    },
    /// Re-run a trace's scenario and verify byte-identical output.
    Replay {
        /// Trace file (JSON lines).
        trace: PathBuf,
        /// Write the reproduced trace to this path.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run {
            config,
            trace_out,
            format,
            seed,
        } => cmd_run(&config, trace_out.as_deref(), format, seed),
        Command::Enumerate {
            config,
            grid,
            format,
            seed,
        } => cmd_enumerate(&config, &grid, format, seed),
        Command::Audit { trace } => cmd_audit(&trace),
        Command::Replay { trace, trace_out } => cmd_replay(&trace, trace_out.as_deref()),
    };
    ExitCode::from(code)
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, u8> {
    match ScenarioConfig::from_path(path) {
        Ok(mut config) => {
            if let Some(seed) = seed {
                config.seed = seed;
            }
            Ok(config)
        }
        Err(err) => {
            eprintln!("error: {err}");
            Err(EXIT_INVALID)
        }
    }
}

fn sim_error_code(err: &SimError) -> u8 {
    match err {
        SimError::InvalidScenario(_) => EXIT_INVALID,
        SimError::GridTooLarge { .. } => EXIT_GRID,
    }
}

fn cmd_run(config: &Path, trace_out: Option<&Path>, format: Format, seed: Option<u64>) -> u8 {
    let config = match load_config(config, seed) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let output = match run(&config) {
        Ok(output) => output,
        Err(err) => {
            eprintln!("error: {err}");
            return sim_error_code(&err);
        }
    };
    if let Some(path) = trace_out {
        if let Err(err) = std::fs::write(path, output.trace.to_jsonl()) {
            eprintln!("error: cannot write trace: {err}");
            return EXIT_INTERNAL;
        }
    }
    let report = &output.report;
    match format {
        Format::Structured => println!(
            "{}",
            serde_json::to_string_pretty(report).expect("report serializes")
        ),
        Format::Table => {
            println!("outcome: {}", report.outcome.as_deref().unwrap_or("-"));
            println!(
                "channel: {} = {}, {} = {} (seq {}, anchor {})",
                report.channel.participant_a,
                report.channel.balance_a,
                report.channel.participant_i,
                report.channel.balance_i,
                report.channel.seq,
                report.channel.anchor,
            );
            for (customer, balance) in &report.fiat {
                println!("fiat:    {customer} = {balance}");
            }
            for (party, total) in &report.totals {
                println!("total:   {party} = {total}");
            }
            for verdict in &report.verdicts {
                println!(
                    "verdict: claimant {} -> culprit {} ({})",
                    verdict.claimant,
                    verdict.culprit.as_deref().unwrap_or("none"),
                    verdict.rationale,
                );
            }
            if report.violations.is_empty() {
                println!("violations: none");
            } else {
                for violation in &report.violations {
                    println!("violation: {violation}");
                }
            }
        }
    }
    if report.violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

fn cmd_enumerate(config: &Path, grid: &str, format: Format, seed: Option<u64>) -> u8 {
    let config = match load_config(config, seed) {
        Ok(config) => config,
        Err(code) => return code,
    };
    let mut dimensions = Vec::new();
    for name in grid.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match GridDimension::parse(name) {
            Some(dimension) => dimensions.push(dimension),
            None => {
                eprintln!("error: unknown grid dimension {name:?} (expected banks, participants, alternatives)");
                return EXIT_INVALID;
            }
        }
    }
    let spec = GridSpec { dimensions };
    let summary = match enumerate_faults(&config, &spec) {
        Ok(summary) => summary,
        Err(err) => {
            eprintln!("error: {err}");
            return sim_error_code(&err);
        }
    };
    match format {
        Format::Structured => println!(
            "{}",
            serde_json::to_string_pretty(&summary).expect("summary serializes")
        ),
        Format::Table => {
            println!("cells: {}", summary.cells.len());
            println!("outcomes:");
            for (outcome, count) in &summary.outcomes {
                println!("  {outcome}: {count}");
            }
            let convictions = summary
                .cells
                .iter()
                .flat_map(|c| c.verdicts.iter())
                .filter(|v| v.culprit.is_some())
                .count();
            println!("verdicts naming a culprit: {convictions}");
            println!("violations: {}", summary.total_violations);
            if summary.total_violations > 0 {
                for cell in summary.cells.iter().filter(|c| c.violations > 0) {
                    println!("  {} -> {} violations", cell.labels.join(" "), cell.violations);
                }
            }
        }
    }
    if summary.total_violations == 0 {
        EXIT_OK
    } else {
        EXIT_VIOLATIONS
    }
}

fn read_trace(path: &Path) -> Result<Trace, u8> {
    let input = match std::fs::read_to_string(path) {
        Ok(input) => input,
        Err(err) => {
            eprintln!("error: cannot read trace: {err}");
            return Err(EXIT_INVALID);
        }
    };
    match Trace::parse(&input) {
        Ok(trace) => Ok(trace),
        Err(err) => {
            eprintln!("error: {err}");
            Err(EXIT_INVALID)
        }
    }
}

fn cmd_audit(path: &Path) -> u8 {
    let trace = match read_trace(path) {
        Ok(trace) => trace,
        Err(code) => return code,
    };
    let violations = audit(&trace);
    if violations.is_empty() {
        println!("{} records, no violations", trace.records.len());
        EXIT_OK
    } else {
        for violation in &violations {
            println!("violation: {violation}");
        }
        EXIT_VIOLATIONS
    }
}

fn cmd_replay(path: &Path, trace_out: Option<&Path>) -> u8 {
    let trace = match read_trace(path) {
        Ok(trace) => trace,
        Err(code) => return code,
    };
    let output = match run(&trace.header.scenario) {
        Ok(output) => output,
        Err(err) => {
            eprintln!("error: {err}");
            return sim_error_code(&err);
        }
    };
    if let Some(out) = trace_out {
        if let Err(err) = std::fs::write(out, output.trace.to_jsonl()) {
            eprintln!("error: cannot write trace: {err}");
            return EXIT_INTERNAL;
        }
    }
    let original = trace.to_jsonl();
    let reproduced = output.trace.to_jsonl();
    if original == reproduced {
        println!("replay reproduced {} records byte-identically", trace.records.len());
        EXIT_OK
    } else {
        eprintln!("error: replay diverged from the recorded trace");
        EXIT_VIOLATIONS
    }
}
