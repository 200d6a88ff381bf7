use std::path::{Path, PathBuf};

use proxkit_core::Error as CoreError;

/// Failure of a subcommand, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Output { .. } => 2,
            Self::Data(_) | Self::Input { .. } => 3,
            Self::Numeric(_) => 4,
        }
    }

    pub fn output(path: &Path, source: std::io::Error) -> Self {
        Self::Output {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn input(path: &Path, source: std::io::Error) -> Self {
        Self::Input {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn describe(err: &CoreError) -> String {
    match err {
        CoreError::SingleLabel { missing } => {
            format!("single-label dataset: no windows with label {missing}")
        }
        other => other.to_string(),
    }
}

/// Tags a core error with the module it came from.
pub fn tagged(module: &'static str) -> impl Fn(CoreError) -> CliError {
    move |err| {
        let msg = format!("{module}: {}", describe(&err));
        match err {
            CoreError::InvalidConfig(_) => CliError::Config(msg),
            CoreError::Numeric(_) => CliError::Numeric(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        tagged("core")(err)
    }
}
