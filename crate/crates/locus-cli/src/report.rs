use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use serde_json::{json, Value};

/// Marks an error as caused by the user's input (exit status 2).
#[derive(Debug)]
pub struct InputError;

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("invalid input")
    }
}

pub fn input<E: Into<anyhow::Error>>(e: E) -> anyhow::Error {
    let e = e.into();
    if is_input(&e) {
        e
    } else {
        e.context(InputError)
    }
}

pub fn is_input(e: &anyhow::Error) -> bool {
    e.downcast_ref::<InputError>().is_some()
}

pub struct Reporter {
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
    pub verbose: bool,
    start: Instant,
}

impl Reporter {
    pub fn new(output: Option<PathBuf>, seed: u64, jobs: usize, verbose: bool) -> Self {
        Reporter { output, seed, jobs, verbose, start: Instant::now() }
    }

    pub fn note(&self, msg: impl fmt::Display) {
        if self.verbose {
            eprintln!("[{:>8.3}s] {msg}", self.start.elapsed().as_secs_f64());
        }
    }

    /// Writes raw text to the output file, or stdout.
    pub fn write(&self, text: &str) -> Result<()> {
        match &self.output {
            Some(p) => std::fs::write(p, format!("{text}\n")).with_context(|| format!("cannot write {}", p.display())),
            None => match writeln!(std::io::stdout().lock(), "{text}") {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("cannot write to stdout"),
            },
        }
    }

    /// Emits the JSON report. `elapsed_ms` is the only field that varies
    /// between identical runs.
    pub fn emit(&self, command: &str, verdict: Value, result: Value) -> Result<()> {
        let report = json!({
            "command": command,
            "verdict": verdict,
            "result": result,
            "seed": self.seed,
            "jobs": self.jobs,
            "elapsed_ms": self.start.elapsed().as_millis() as u64,
        });
        self.write(&serde_json::to_string_pretty(&report)?)
    }
}
