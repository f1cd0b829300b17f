use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point is not in front of the camera (camera-frame z = {z})")]
    BehindCamera { z: f64 },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("the model set is empty")]
    EmptyModelSet,

    #[error("unknown object id `{0}`")]
    UnknownObject(String),

    #[error("ill-conditioned input: {0}")]
    IllConditioned(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("segment too small after cleaning ({points} points)")]
    SegmentTooSmall { points: usize },

    #[error("no correspondences within the cutoff of {cutoff} m")]
    Diverged { cutoff: f64 },

    #[error("no valid 4-point base could be drawn from the segment")]
    NoValidBase,

    #[error("all scene weights are zero: no scene matches the target poses")]
    NoMatchingScenes,

    #[error("no free predefined configuration is available")]
    NoFreeConfig,

    #[error("missing file referenced by the manifest: {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("malformed {what} (line {line}): {reason}")]
    Malformed {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
