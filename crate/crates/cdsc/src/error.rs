use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate payoff: x'Mx = 0 (distribution has no mass on the constraint set)")]
    DegeneratePayoff,

    #[error("gamma is undefined: median pairwise L1 distance is 0; pass an explicit gamma")]
    GammaUndefined,

    #[error("unknown zone for track {track}: camera {camera} zone {zone} is not declared")]
    UnknownZone {
        track: usize,
        camera: u32,
        zone: u32,
    },

    #[error("vertex {0} is not covered by any cluster")]
    Uncovered(usize),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
