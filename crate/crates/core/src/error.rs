use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::geometry::FrameIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("absent box has no center")]
    AbsentBox,

    #[error("child `{child}` already attached to `{parent}`")]
    AlreadyAttached { child: String, parent: String },

    #[error("cycle rejected: `{parent}` is a descendant of `{child}`")]
    CycleRejected { child: String, parent: String },

    #[error("action child and parent are the same symbol `{0}`")]
    SelfAttachment(String),

    #[error("parent not localizable")]
    ParentNotLocalizable,

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: FrameIndex,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario {name}: {source}")]
    InScenario {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error("id `{0}` has no column mapping")]
    NoColumn(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_frame(self, frame: FrameIndex) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame {
                frame,
                source: Box::new(e),
            },
        }
    }

    pub fn in_scenario(self, name: &str) -> Self {
        Error::InScenario {
            name: name.to_string(),
            source: Box::new(self),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent user input, as
    /// opposed to failures while executing a well-formed run.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Invalid(_)
            | Error::Parse(_)
            | Error::Record { .. }
            | Error::LengthMismatch(_)
            | Error::NoColumn(_)
            | Error::Json(_) => true,
            Error::AtFrame { source, .. } | Error::InScenario { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
