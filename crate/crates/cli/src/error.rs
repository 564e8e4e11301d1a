use std::path::PathBuf;

use recimatch::coarse2fine::C2fError;
use recimatch::grids::GridError;
use recimatch::losses::LossError;
use recimatch::matcher::MatchError;
use recimatch::synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Grid {
        path: PathBuf,
        #[source]
        source: GridError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("invalid {name}: {value}")]
    BadSetting { name: &'static str, value: String },
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    C2f(#[from] C2fError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type CliResult<T> = Result<T, CliError>;

/// Decoding failures are format errors; everything else a well-formed file
/// can trip over is an invariant violation.
fn grid_code(e: &GridError) -> u8 {
    match e {
        GridError::Io(_)
        | GridError::BadMagic { .. }
        | GridError::UnsupportedVersion(_)
        | GridError::Truncated { .. }
        | GridError::Parse { .. } => 1,
        _ => 2,
    }
}

impl CliError {
    /// 1 for I/O and format errors, 2 for invariant violations.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Grid { source, .. } => grid_code(source),
            CliError::Io { .. }
            | CliError::Json { .. }
            | CliError::Csv { .. }
            | CliError::Manifest { .. } => 1,
            CliError::BadSetting { .. } | CliError::Loss(_) => 2,
            CliError::Match(MatchError::Grid(e)) => grid_code(e),
            CliError::Match(_) => 2,
            CliError::C2f(C2fError::Provider { .. }) => 1,
            CliError::C2f(C2fError::Match(MatchError::Grid(e))) => grid_code(e),
            CliError::C2f(_) => 2,
            CliError::Synth(SynthError::Grid(e)) => grid_code(e),
            CliError::Synth(_) => 2,
        }
    }
}

pub trait GridContext<T> {
    fn at(self, path: &std::path::Path) -> CliResult<T>;
}

impl<T> GridContext<T> for Result<T, GridError> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|source| CliError::Grid {
            path: path.to_path_buf(),
            source,
        })
    }
}

impl<T> GridContext<T> for Result<T, std::io::Error> {
    fn at(self, path: &std::path::Path) -> CliResult<T> {
        self.map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}
