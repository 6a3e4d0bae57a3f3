use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // geometry
    #[error("empty cluster")]
    EmptyCluster,
    #[error("bad resolution: {0}")]
    BadResolution(f64),
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(f64, f64),

    // ingest
    #[error("empty sequence")]
    EmptySequence,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("time regression at frame {0}")]
    TimeRegression(u32),
    #[error("frame order regression at line {line}: frame {frame} after frame {previous}")]
    FrameOrder {
        line: usize,
        frame: u32,
        previous: u32,
    },
    #[error("duplicate gt timestamp {t} at line {line}")]
    DuplicateGtTimestamp { line: usize, t: f64 },
    #[error("time regression in ground truth at line {line}")]
    GtTimeRegression { line: usize },
    #[error("bad binary sequence: {0}")]
    BadBinary(String),
    #[error("nothing to save")]
    NothingToSave,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // parameters
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    // cluster
    #[error("window longer than sequence ({length} > {frames})")]
    WindowTooLong { length: usize, frames: usize },

    // score
    #[error("empty window")]
    EmptyWindow,
    #[error("insufficient windows")]
    InsufficientWindows,
    #[error("insufficient temporal support: {active} active windows, need {required}")]
    InsufficientSupport { active: usize, required: usize },
    #[error("no candidate trajectory")]
    NoCandidate,

    // trajectory
    #[error("no trajectory points")]
    NoTrajectoryPoints,
    #[error("parameter out of range: u = {0}")]
    ParameterOutOfRange(f64),
    #[error("insufficient points for spline: {0} < 4")]
    InsufficientSplinePoints(usize),
    #[error("query timestamps must be strictly increasing (index {0})")]
    UnsortedQueries(usize),

    // eval
    #[error("nothing to score")]
    NothingToScore,

    // synth / config
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),
    #[error("bad config: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, looking through stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
