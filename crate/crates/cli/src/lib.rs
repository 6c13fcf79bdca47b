//! `opennet` command-line front end: loads a JSON spec, runs one command and
//! reports the outcome as text or JSON.
//!
//! Exit codes: 0 success or verdict true, 1 verdict false, 2 parse error or
//! empty file, 3 dangling reference, 4 dimension mismatch, 5 any other
//! validation failure, 6 I/O error, 64 bad command line.

pub mod commands;
pub mod spec;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde_json::json;

use crate::spec::{ErrorKind, LoadError, Params, RawParams};

pub const USAGE_EXIT: i32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Compose,
    CheckFibration,
    EnumFibrations,
    FromGraph,
    VerifyMap,
    Simulate,
    Linrel,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Compose => "compose",
            Command::CheckFibration => "check-fibration",
            Command::EnumFibrations => "enum-fibrations",
            Command::FromGraph => "from-graph",
            Command::VerifyMap => "verify-map",
            Command::Simulate => "simulate",
            Command::Linrel => "linrel",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "opennet", version, about = "Compose open systems on networks and check maps between them")]
pub struct Cli {
    pub command: Command,
    /// JSON spec file.
    pub spec: PathBuf,
    /// Sample points per relatedness check.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Absolute tolerance for relatedness and 2-cell checks.
    #[arg(long)]
    pub tol: Option<f64>,
    /// RK4 step size.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration horizon.
    #[arg(long)]
    pub t1: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the report (or, for `simulate`, the trajectory CSV) here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the machine-readable report instead of text.
    #[arg(long)]
    pub json: bool,
    /// Restrict the command to one named entry of the spec.
    #[arg(long)]
    pub select: Option<String>,
}

impl Cli {
    fn flags(&self) -> RawParams {
        RawParams {
            samples: self.samples,
            tol: self.tol,
            dt: self.dt,
            t1: self.t1,
            seed: self.seed,
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            let code = match e.kind() {
                K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand => 0,
                _ => USAGE_EXIT,
            };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{rendered}") } else { write!(stderr, "{rendered}") };
            return code;
        }
    };
    execute(&cli, stdout, stderr)
}

fn fail(err: &LoadError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    err.kind.exit_code()
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let spec = match spec::load(&cli.spec) {
        Ok(s) => s,
        Err(e) => return fail(&e, stderr),
    };
    let params = Params::default().overlay(&spec.params).overlay(&cli.flags());
    if !(params.dt > 0.0 && params.t1 >= 0.0 && params.tol >= 0.0 && params.samples > 0) {
        let _ = writeln!(stderr, "error: parameters out of range: {params:?}");
        return USAGE_EXIT;
    }
    let select = cli.select.as_deref();
    let outcome = match cli.command {
        Command::Validate => commands::validate(&spec),
        Command::Compose => commands::compose(&spec, select),
        Command::CheckFibration => commands::check_fibration(&spec, select),
        Command::EnumFibrations => commands::enum_fibrations(&spec, select),
        Command::FromGraph => commands::from_graph(&spec, select),
        Command::VerifyMap => commands::verify_map(&spec, &params, select),
        Command::Simulate => commands::simulate(&spec, &params, select),
        Command::Linrel => commands::linrel(&spec),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => return fail(&e, stderr),
    };

    let report = json!({
        "tool": "opennet",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "spec": cli.spec.display().to_string(),
        "params": params,
        "result": outcome.result,
        "exit_code": outcome.exit,
    });
    let rendered = serde_json::to_string_pretty(&report).expect("reports are plain JSON values") + "\n";

    if let Some(path) = &cli.out {
        let written = if cli.command == Command::Simulate {
            match &outcome.trajectory {
                Some(tr) => std::fs::File::create(path)
                    .map_err(|e| e.to_string())
                    .and_then(|f| tr.write_csv(std::io::BufWriter::new(f)).map_err(|e| e.to_string())),
                None => {
                    let _ = writeln!(stderr, "error: --out needs exactly one finished simulation; use --select NAME");
                    return USAGE_EXIT;
                }
            }
        } else {
            std::fs::write(path, &rendered).map_err(|e| e.to_string())
        };
        if let Err(msg) = written {
            let err = LoadError {
                kind: ErrorKind::Io,
                file: path.clone(),
                location: "--out".into(),
                message: msg,
            };
            return fail(&err, stderr);
        }
    }

    let _ = if cli.json { write!(stdout, "{rendered}") } else { write!(stdout, "{}", outcome.text) };
    outcome.exit
}
