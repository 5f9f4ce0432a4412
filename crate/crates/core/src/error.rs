use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("episode is finished; call reset before stepping again")]
    EpisodeDone,

    #[error("replay buffer holds {have} transitions, need {need}")]
    NotReady { have: usize, need: usize },

    #[error("search grid has {size} points, budget is {budget}")]
    Budget { size: u128, budget: u128 },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}
