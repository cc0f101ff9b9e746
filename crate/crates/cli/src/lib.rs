//! Subcommands of the `mia-harness` binary.
//!
//! Every command is a plain function over parsed arguments so the pipeline
//! can be driven from tests without spawning processes. Errors carry enough
//! context for [`exit_code`] to map them onto the exit-code contract: 0 on
//! success, 1 for runtime or data errors, 2 for usage or configuration
//! errors.

pub mod args;
pub mod commands;
pub mod config;
pub mod e2e;
pub mod io;

use std::fmt;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Caps the rayon worker count when set to a positive integer.
pub const THREADS_ENV: &str = "MIA_HARNESS_THREADS";

/// A usage or configuration problem detected by the CLI layer itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

/// Exit code for a failed command, chosen by the first recognizable cause.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<toml::de::Error>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<mia_core::Error>() {
            return match e {
                mia_core::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
        }
    }
    EXIT_RUNTIME
}

/// Size the global rayon pool from [`THREADS_ENV`].
pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
        log::debug!("rayon pool already initialized; {THREADS_ENV} ignored");
    }
    Ok(())
}
