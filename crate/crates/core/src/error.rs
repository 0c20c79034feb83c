use std::io;

use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tag record: {}", summarize(.0))]
    InvalidRecord(Vec<Violation>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bin range [{start}, {end}) ps exceeds record duration {duration} ps")]
    RangeExceedsRecord { start: i128, end: i128, duration: u64 },

    #[error("record of {duration} ps too short for {n_samples} disjoint bins of {tau} ps")]
    RecordTooShort {
        duration: u64,
        n_samples: usize,
        tau: u64,
    },

    #[error("bin width must be positive")]
    ZeroTau,

    #[error("bins have mixed widths ({first} ps and {other} ps)")]
    MixedTau { first: u64, other: u64 },

    #[error("estimator {0} is not valid here")]
    WrongEstimator(&'static str),

    #[error("no bins supplied")]
    NoBins,

    #[error("record contains no tags")]
    EmptyRecord,

    #[error("coincidence window must be positive")]
    NonPositiveWindow,

    #[error("count model has zero probability of a contributing bin")]
    NoContributingMass,

    #[error("truncation cap {cap} leaves tail mass {tail:e} (needs < 1e-12)")]
    TruncationTooSmall { cap: usize, tail: f64 },

    #[error("malformed tag file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn summarize(violations: &[Violation]) -> String {
    match violations {
        [] => "no violations".to_string(),
        [only] => only.to_string(),
        [first, rest @ ..] => format!("{first} (and {} more)", rest.len()),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
