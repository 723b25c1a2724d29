use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] multiwave_core::Error),
    #[error("{scenario}, {cell}: {failed} of {total} replicates failed")]
    TooManyFailures {
        scenario: String,
        cell: String,
        failed: usize,
        total: usize,
    },
    #[error("refusing to write table: {0}")]
    InvalidTable(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 2 for bad configuration or input, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        use multiwave_core::Error as E;
        match self {
            Error::Config(_) | Error::Io { .. } | Error::Csv { .. } | Error::InvalidTable(_) => 2,
            Error::Core(E::InvalidInput(_) | E::MissingColumn(_) | E::ColumnLength { .. } | E::NotStratified) => 2,
            Error::Core(_) | Error::TooManyFailures { .. } => 3,
        }
    }
}
