mod args;
mod commands;
mod report;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::Cli;
use report::{is_input, Reporter};

const GRAMMAR: &str = "\
formula grammar:
  formula := (exists | forall) x y ... . formula
           | exists x in d(t) . formula
           | formula | formula,  formula & formula,  !formula,  (formula)
           | R(t, ...),  d(t, t),  t = t,  true,  false
  terms are variables or constant names; write x:sort to fix a sort";

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = match cli.jobs {
        Some(0) => {
            eprintln!("error: --jobs must be positive\n\n{GRAMMAR}");
            return ExitCode::from(2);
        }
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
        eprintln!("error: cannot start worker pool: {e}");
        return ExitCode::from(1);
    }
    let rep = Reporter::new(cli.output.clone(), cli.seed, jobs, cli.verbose);
    match commands::run(&cli.command, &rep) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_input(&e) => {
            fail(format_args!("error: {e:#}\n\n{GRAMMAR}"));
            ExitCode::from(2)
        }
        Err(e) => {
            fail(format_args!("internal error: {e:#}"));
            ExitCode::from(1)
        }
    }
}

/// Writes to stderr, ignoring a closed pipe.
fn fail(msg: std::fmt::Arguments<'_>) {
    let _ = writeln!(std::io::stderr().lock(), "{msg}");
}
