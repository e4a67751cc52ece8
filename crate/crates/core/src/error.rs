use thiserror::Error;

use crate::conic::SolveStatus;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("steering angle {0} deg outside [0, 180]")]
    AngleOutOfRange(f64),

    #[error("{users} users cannot be split evenly into {groups} groups")]
    UnevenGroups { users: usize, groups: usize },

    #[error("conic solver returned {status:?}")]
    Solver { status: SolveStatus },

    #[error("no feasible randomization candidate after {draws} draws")]
    NoFeasibleCandidate { draws: usize },

    #[error("group {group} has zero gain towards its own worst user")]
    DegenerateGain { group: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
