//! Command-line front end: configuration, CSV and SVG output, and the
//! study and solver subcommands.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod plot;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;

use commands::{execute, write_resolved, Cli, Command};
use config::RunConfig;
use error::{CliError, Result};

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 2 for configuration errors, 3 for numerical or I/O
/// failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.name(), e.to_string().lines().next().unwrap_or(""));
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = match cli.command {
        Command::Rerun { resolved } => {
            if cli.config.is_some() {
                return Err(CliError::Config("config: rerun takes its configuration from the resolved file".into()));
            }
            let mut cfg = RunConfig::load(&resolved)?;
            if cli.out.is_some() {
                cfg.out_dir = cli.out;
            }
            cfg
        }
        command => {
            let mut cfg = match &cli.config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if cli.out.is_some() {
                cfg.out_dir = cli.out;
            }
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            command.apply(&mut cfg);
            cfg
        }
    };
    cfg.validate()?;
    let out = cfg.resolve_out_dir();
    std::fs::create_dir_all(&out)?;
    write_resolved(&cfg, &out)?;
    log::info!("running {:?} into {}", cfg.command, out.display());
    let summary = execute(&cfg, &out)?;
    let doc = json!({ "command": cfg.command.join(" "), "seed": cfg.seed, "result": summary });
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}
