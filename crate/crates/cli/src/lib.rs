//! Config handling and command runners for the `fibresync` binary.
//!
//! Runs are described by a JSON config (family block plus optional command
//! block); every numeric range is validated up front with all violations
//! reported at once, unknown keys are rejected, and injected defaults are
//! echoed into the run manifest.

pub mod config;
pub mod run;

/// Process exit discipline: 0 success, 1 validation error, 2 certification
/// failure, 3 numerical failure (singularity or unsatisfiable `b0`).
#[derive(Debug)]
pub enum CliError {
    Validation(Vec<String>),
    Certification(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Certification(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn report(&self) {
        match self {
            CliError::Validation(errors) => {
                for e in errors {
                    eprintln!("config error: {e}");
                }
            }
            CliError::Certification(e) => eprintln!("certification failure: {e}"),
            CliError::Numerical(e) => eprintln!("numerical failure: {e}"),
            CliError::Io(e) => eprintln!("io error: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
