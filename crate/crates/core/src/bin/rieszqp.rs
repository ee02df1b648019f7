// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rieszqp::scenario::{builtin_scenarios, list_scenarios, load_scenarios, run_all, RunOverrides};
use rieszqp::Error;

#[derive(Parser)]
#[command(name = "rieszqp", version, about = "Discrete Riesz-energy problems with external fields")]
struct Cli {
    /// Worker threads for Gram assembly and potentials (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative solver tolerance; overrides the scenario files.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Also write nodes.csv, field.csv, gram.csv and gram.bin.
    #[arg(long, global = true)]
    emit_gram: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a built-in scenario by id.
    Run {
        scenario: String,
        /// Output root; each scenario writes to `<out>/<id>/`.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// List built-in scenarios.
    List {
        #[arg(long)]
        tag: Option<String>,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Io(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::List { tag } => match list_scenarios(tag.as_deref()) {
            Ok(list) => {
                for s in list {
                    println!("{:<30} [{}] {}", s.id, s.tags.join(","), s.description);
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { scenario, out } => {
            let path = PathBuf::from(&scenario);
            let scenarios = if path.exists() {
                load_scenarios(&path)
            } else {
                builtin_scenarios().and_then(|all| {
                    let found: Vec<_> = all.into_iter().filter(|s| s.id == scenario).collect();
                    if found.is_empty() {
                        Err(Error::config("scenario", format!("`{scenario}` is neither a file nor a built-in id")))
                    } else {
                        Ok(found)
                    }
                })
            };
            let scenarios = match scenarios {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let ov = RunOverrides { tol: cli.tol, emit_gram: cli.emit_gram };
            match run_all(&scenarios, &out, &ov) {
                Ok(summaries) => {
                    for s in &summaries {
                        println!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.id);
                        for t in &s.tasks {
                            let status = if !t.converged {
                                "not converged"
                            } else if t.passed {
                                "ok"
                            } else {
                                "failed"
                            };
                            println!("  {:>2} {:<20} {status}", t.index, t.kind);
                        }
                    }
                    if summaries.iter().all(|s| s.passed) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e),
            }
        }
    }
}
