use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsession::dynamics::ProofMode;
use dsession::runtime::{explore, run, Outcome, RunOptions, Runtime, Scheduler, Verdict};
use dsession::syntax::{parse_program, Program};
use dsession::typeck::check_program;

#[derive(Parser)]
#[command(name = "dsession", version, about = "Check, run and explore session-typed programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Exec {
    /// Seed of the random scheduler.
    #[arg(long, default_value_t = 1, conflicts_with = "round_robin")]
    seed: u64,
    #[arg(long)]
    round_robin: bool,
    /// Sends complete into order-preserving queues.
    #[arg(long)]
    buffered: bool,
    /// Keep proof functions as runtime markers instead of erasing them.
    #[arg(long)]
    materialized: bool,
    #[arg(long, default_value_t = 100_000)]
    max_steps: usize,
    /// Audit resources and retype the pool after every step.
    #[arg(long)]
    check_steps: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Type-check a program.
    Check { file: PathBuf },
    /// Run a program and print its output.
    Run {
        file: PathBuf,
        #[command(flatten)]
        exec: Exec,
        /// Write the step trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Explore all interleavings for deadlocks.
    Explore {
        file: PathBuf,
        /// Maximum number of states.
        #[arg(long, default_value_t = 10_000)]
        depth: usize,
        #[arg(long)]
        buffered: bool,
    },
    /// Run a program and print its step trace as JSON lines.
    Trace {
        file: PathBuf,
        #[command(flatten)]
        exec: Exec,
    },
}

fn load(file: &PathBuf) -> Result<Program, ExitCode> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        eprintln!("error: {}: {e}", file.display());
        ExitCode::from(1)
    })?;
    let prog = parse_program(&text).map_err(|e| {
        eprintln!("error[parse] at {}:{} \u{2014} {}", e.span.line, e.span.col, e.msg);
        ExitCode::from(1)
    })?;
    check_program(&prog).map_err(|errs| {
        for e in errs {
            eprintln!("{e}");
        }
        ExitCode::from(1)
    })?;
    Ok(prog)
}

fn execute(prog: &Program, exec: &Exec) -> Result<dsession::runtime::RunReport, ExitCode> {
    let mode = if exec.materialized { ProofMode::Materialized } else { ProofMode::Erased };
    let rt = Runtime::new(prog, mode, exec.buffered);
    let Some(pool) = rt.initial() else {
        eprintln!("error: the program has no main");
        return Err(ExitCode::from(1));
    };
    let opts = RunOptions {
        scheduler: if exec.round_robin { Scheduler::RoundRobin } else { Scheduler::Seeded(exec.seed) },
        max_steps: exec.max_steps,
        audit: exec.check_steps,
        retype: exec.check_steps && !exec.buffered,
    };
    Ok(run(&rt, pool, &opts))
}

fn report_outcome(r: &dsession::runtime::RunReport) -> ExitCode {
    for f in r.audit_failures.iter().chain(&r.type_failures) {
        eprintln!("check failed: {f}");
    }
    match &r.outcome {
        Outcome::Terminated(_) if !r.audit_failures.is_empty() || !r.type_failures.is_empty() => ExitCode::from(2),
        Outcome::Terminated(_) => ExitCode::SUCCESS,
        Outcome::Deadlock(report) => {
            eprintln!("deadlock after {} steps:", r.steps);
            report.iter().for_each(|l| eprintln!("  {l}"));
            ExitCode::from(2)
        }
        Outcome::Stuck(msg) => {
            eprintln!("stuck: {msg}");
            ExitCode::from(2)
        }
        Outcome::DepthExceeded => {
            eprintln!("step limit reached after {} steps", r.steps);
            ExitCode::from(3)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| -> Result<ExitCode, ExitCode> {
        match cli.cmd {
            Cmd::Check { file } => {
                load(&file)?;
                println!("ok");
                Ok(ExitCode::SUCCESS)
            }
            Cmd::Run { file, exec, trace } => {
                let prog = load(&file)?;
                let r = execute(&prog, &exec)?;
                for line in r.outputs() {
                    println!("{line}");
                }
                if let Outcome::Terminated(v) = &r.outcome {
                    println!("main: {v}");
                }
                if let Some(path) = trace {
                    std::fs::write(&path, r.trace_jsonl()).map_err(|e| {
                        eprintln!("error: {}: {e}", path.display());
                        ExitCode::from(1)
                    })?;
                }
                Ok(report_outcome(&r))
            }
            Cmd::Trace { file, exec } => {
                let prog = load(&file)?;
                let r = execute(&prog, &exec)?;
                print!("{}", r.trace_jsonl());
                Ok(report_outcome(&r))
            }
            Cmd::Explore { file, depth, buffered } => {
                let prog = load(&file)?;
                let rt = Runtime::new(&prog, ProofMode::Erased, buffered);
                let Some(pool) = rt.initial() else {
                    eprintln!("error: the program has no main");
                    return Err(ExitCode::from(1));
                };
                let rep = explore(&rt, pool, depth);
                match rep.verdict {
                    Verdict::AllPathsProgress => {
                        println!("AllPathsProgress ({} states)", rep.states);
                        Ok(ExitCode::SUCCESS)
                    }
                    Verdict::DeadlockFound { trace, report } => {
                        println!("DeadlockFound ({} states, {} steps)", rep.states, trace.len());
                        report.iter().for_each(|l| println!("  {l}"));
                        Ok(ExitCode::from(2))
                    }
                    Verdict::Stuck(msg) => {
                        println!("Stuck: {msg}");
                        Ok(ExitCode::from(2))
                    }
                    Verdict::DepthExceeded => {
                        println!("DepthExceeded ({} states)", rep.states);
                        Ok(ExitCode::from(3))
                    }
                }
            }
        }
    })();
    result.unwrap_or_else(|code| code)
}
