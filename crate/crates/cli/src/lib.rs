//! Library behind the `hsym` binary: configuration, analysis stages, the invariant suite
//! and the argument front end.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use hsym_core::shell::{CorruptedSabra, Sabra};
use hsym_core::Error;

use crate::config::RunConfig;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Process exit status for a failed stage.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Structural(_) => EXIT_CONFIG,
        Error::Domain(_) | Error::Unsupported(_) | Error::BlowUp { .. } | Error::NoConvergence { .. } => {
            EXIT_NUMERIC
        }
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
    }
}

#[derive(Parser, Debug)]
#[command(name = "hsym", version, about = "Shell-model turbulence through its temporal-scaling quotient")]
pub struct Cli {
    /// Run configuration (`key = value` lines); defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Falls back to $HSYM_OUT, then the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate the forced model and record the trajectory.
    Simulate,
    /// Write rescaled frames U^(m) for the configured scale band.
    Normalize,
    /// Single-scale PDFs and their collapse across scales.
    Pdf,
    /// Structure functions and fitted exponents.
    Sf,
    /// Exponents from the leading eigenvalue of the multiplier transfer operator.
    Pf,
    /// Run the invariant suite and print a JSON verdict.
    Verify {
        /// Swap in the sign-corrupted transfer term (negative control).
        #[arg(long, hide = true)]
        corrupt_sign: bool,
    },
}

fn resolve(cli: &Cli) -> hsym_core::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out.clone().or_else(|| std::env::var_os("HSYM_OUT").map(PathBuf::from)) {
        cfg.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.model.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_lines(out: &mut impl Write, lines: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in lines {
        writeln!(out, "{k},{v}")?;
    }
    Ok(())
}

fn execute(cli: &Cli, out: &mut impl Write, err: &mut impl Write) -> hsym_core::Result<i32> {
    let cfg = resolve(cli)?;
    let stdout_err = |e: std::io::Error| Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    };
    match &cli.command {
        Command::Simulate => {
            let (_, summary) = commands::simulate(&cfg)?;
            if !summary.stationary {
                let _ = writeln!(
                    err,
                    "warning: mean energy differs by more than 20% between halves of the record"
                );
            }
            print_lines(out, &summary.lines()).map_err(stdout_err)?;
        }
        Command::Normalize => {
            let m = commands::normalize(&cfg)?;
            let lines: Vec<_> = m
                .frames
                .iter()
                .map(|e| (format!("samples_m{}", e.m), e.samples.to_string()))
                .collect();
            print_lines(out, &lines).map_err(stdout_err)?;
        }
        Command::Pdf => {
            let s = commands::pdfs(&cfg)?;
            print_lines(out, &s.lines()).map_err(stdout_err)?;
        }
        Command::Sf => {
            let t = commands::structure_functions(&cfg)?;
            t.write_zeta_csv(out).map_err(stdout_err)?;
        }
        Command::Pf => {
            let r = commands::perron(&cfg)?;
            for c in r.density.regularized() {
                let _ = writeln!(err, "warning: conditional column {c} had no samples, filled with the marginal");
            }
            print_lines(out, &r.lines()).map_err(stdout_err)?;
        }
        Command::Verify { corrupt_sign } => {
            let verdict = if *corrupt_sign {
                verify::run_suite(&CorruptedSabra, cfg.model.seed)
            } else {
                verify::run_suite(&Sabra, cfg.model.seed)
            };
            let json = verdict.to_json();
            std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
                path: cfg.output_dir.clone(),
                source: e,
            })?;
            let path = cfg.output_dir.join("verify.json");
            std::fs::write(&path, format!("{json}\n")).map_err(|e| Error::Io { path, source: e })?;
            writeln!(out, "{json}").map_err(stdout_err)?;
            if !verdict.passed {
                let _ = writeln!(err, "verification failed: {}", verdict.failed.join(", "));
                return Ok(EXIT_NUMERIC);
            }
        }
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs the requested stage. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = write!(if e.use_stderr() { err as &mut dyn Write } else { out as &mut dyn Write }, "{}", e.render());
            return code;
        }
    };
    let threads = cli.threads;
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match execute(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
