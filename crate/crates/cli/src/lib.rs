//! Experiment runner for `relubridge`: TOML experiment configs, the RPLN1
//! checkpoint format, experiment pipelines and CSV / SVG reports.

use std::path::{Path, PathBuf};

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod report;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(relubridge::Error),
    #[error("numeric error: {0}")]
    Numeric(relubridge::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn output(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Output {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Output { .. } => 1,
        }
    }
}

impl From<relubridge::Error> for CliError {
    fn from(e: relubridge::Error) -> Self {
        use relubridge::Error as E;
        if e.is_data() {
            return CliError::Data(e);
        }
        match e {
            E::Architecture(_)
            | E::InvalidArgument(_)
            | E::Dimension { .. }
            | E::OutOfRange { .. } => CliError::Config(e.to_string()),
            e => CliError::Numeric(e),
        }
    }
}
