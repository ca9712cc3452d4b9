use std::io;

use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no robots")]
    NoRobots,
    #[error("point coordinates must be finite")]
    NonFinite,
    #[error("site {0} is not one of the cell sites")]
    SiteNotInSites(Point),
    #[error("degenerate cell around {0}")]
    DegenerateCell(Point),
    #[error("scheduler contract violation: {0}")]
    SchedulerContract(String),
    #[error("no eligible robots to activate")]
    NoEligible,
    #[error("script exhausted after {0} activations")]
    ScriptExhausted(usize),
    #[error("scripted activation {index} is not a nonempty subset of the eligible robots")]
    ScriptNotEligible { index: usize },
    #[error("fault budget misuse: {0}")]
    FaultBudget(String),
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("singular linear system")]
    Singular,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("oracle value is zero")]
    ZeroOracle,
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
