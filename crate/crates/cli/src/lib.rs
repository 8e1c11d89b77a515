//! Config-driven case runner for `dobkit-core`: loads a case file, runs the
//! requested analyses and writes CSV curves, a JSON report and a manifest.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{load_config, parse_config, CaseConfig, Format};
pub use emit::{emit, Manifest};
pub use run::{run_case, Command, ReportBundle, RunOptions};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("cannot read config {path}: {message}")]
    ConfigIo { path: String, message: String },
    #[error("{context}: {message}")]
    Numerical { context: String, message: String },
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    /// 1 for configuration problems, 2 for numerical or output failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Validation(_) | CliError::ConfigIo { .. } => 1,
            CliError::Numerical { .. } | CliError::Io { .. } => 2,
        }
    }
}

/// The bundled case studies.
pub const CASES: [(&str, &str); 5] = [
    ("case1", include_str!("../cases/case1.toml")),
    ("case2", include_str!("../cases/case2.toml")),
    ("case3", include_str!("../cases/case3.toml")),
    ("case4", include_str!("../cases/case4.toml")),
    ("case5", include_str!("../cases/case5.toml")),
];

pub fn bundled_case(n: usize) -> Result<(&'static str, CaseConfig), CliError> {
    let (name, text) = CASES
        .get(n.wrapping_sub(1))
        .ok_or_else(|| CliError::Validation(format!("no bundled case {n}; cases are 1 to 5")))?;
    Ok((name, parse_config(text)?))
}
