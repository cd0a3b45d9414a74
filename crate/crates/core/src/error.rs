use std::path::PathBuf;

/// Errors produced anywhere in the transfer pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("pose is missing the neck or both hip joints")]
    MissingReferenceJoints,
    #[error("torso length {0} is too small to normalize")]
    DegenerateTorso(f64),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("no pose in the dataset could be normalized")]
    EmptyDataset,
    #[error("no indexed pose shares enough visible joints with the query")]
    NoComparablePose,
    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("prior has no background channel")]
    MissingBackground,
    #[error("no training samples")]
    EmptySampleSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class id {class} is out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no manifest found at {0}")]
    MissingManifest(PathBuf),
    #[error("{path}: mask is {got_width}x{got_height}, expected {want_width}x{want_height}")]
    BadMaskShape {
        path: PathBuf,
        got_width: u32,
        got_height: u32,
        want_width: u32,
        want_height: u32,
    },
    #[error("{path}: unknown joint name `{name}`")]
    UnknownJointName { path: PathBuf, name: String },
    #[error("{path}: value {value} is neither background nor a part id")]
    NonBinaryMask { path: PathBuf, value: u8 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("prediction and ground-truth sets share no example ids")]
    NoOverlap,
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("example `{id}`: {source}")]
    Example {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// The innermost error, looking through per-example wrappers.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Example { source, .. } => source.root_cause(),
            e => e,
        }
    }

    pub(crate) fn for_example(self, id: &str) -> Self {
        Error::Example {
            id: id.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
