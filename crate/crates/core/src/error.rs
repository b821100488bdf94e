use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{what}`: {msg}")]
    Parameter { what: String, msg: String },

    #[error("mean of `{term}` does not exist")]
    UndefinedMoment { term: String },

    #[error("domain error in `{term}`: {msg}")]
    Domain { term: String, msg: String },

    #[error("`{term}` has no moment generating function")]
    NoMgf { term: String },

    #[error("`{term}`: {msg}")]
    Unsupported { term: String, msg: String },

    #[error("level {level} out of range for a {levels}-level variable")]
    Index { level: usize, levels: usize },

    #[error("solver `{solver}` requires the log link, got `{link}`")]
    WrongLink { solver: String, link: String },

    #[error("exact enumeration needs discrete covariates, `{term}` is continuous")]
    EngineMismatch { term: String },

    #[error("no root: {msg}")]
    NoRoot { msg: String },

    #[error("row {row}: mean {mu} outside [0, 1] (eta = {eta})")]
    OutOfRange { row: usize, eta: f64, mu: f64 },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("io: {0}")]
    Io(String),

    #[error("scenario `{id}`: {source}")]
    Scenario { id: String, source: Box<Error> },
}

impl Error {
    pub(crate) fn param(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parameter {
            what: what.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    /// Attaches a term name to errors that carry one. Used when a covariate
    /// spec reports an error under its generic name.
    pub(crate) fn for_term(self, name: &str) -> Self {
        let name = name.to_string();
        match self {
            Error::UndefinedMoment { .. } => Error::UndefinedMoment { term: name },
            Error::Domain { msg, .. } => Error::Domain { term: name, msg },
            Error::NoMgf { .. } => Error::NoMgf { term: name },
            Error::Unsupported { msg, .. } => Error::Unsupported { term: name, msg },
            Error::EngineMismatch { .. } => Error::EngineMismatch { term: name },
            Error::Parameter { what, msg } => Error::Parameter {
                what: format!("{name}.{what}"),
                msg,
            },
            other => other,
        }
    }

    /// True for mathematical infeasibility: the requested quantity does not
    /// exist or no intercept reaches the target.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::UndefinedMoment { .. }
            | Error::Domain { .. }
            | Error::NoMgf { .. }
            | Error::NoRoot { .. }
            | Error::OutOfRange { .. } => true,
            Error::Scenario { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
