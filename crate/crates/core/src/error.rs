use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("archive parse error at byte {offset}: {reason}")]
    ArchiveParse { offset: usize, reason: String },
    #[error("archive write error: {0}")]
    ArchiveWrite(String),
    #[error("manifest line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },
    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
    #[error("cannot sample entry {entry}: {reason}")]
    Sampling { entry: usize, reason: String },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: alloc::vec::Vec<usize>,
        found: alloc::vec::Vec<usize>,
    },
    #[error("unexpected parameter `{0}`")]
    UnexpectedParam(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {component} loss at step {step}")]
    NonFinite { step: u64, component: &'static str },
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}

macro_rules! domain_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Domain(alloc::format!($($arg)*))
    };
}

pub(crate) use {domain_err, shape_err};
