//! Fixed-time-bin second-order correlation analysis for time-tagged photon
//! detections.
//!
//! - [`model`]: tags, records, per-bin counts, estimates and census results
//! - [`io`]: binary and CSV tag files
//! - [`sim`]: Poisson pair source with beam splitter, herald, dark counts
//!   and dead time
//! - [`binning`]: consecutive, anchored and randomly sampled bins
//! - [`estimators`]: per-bin g² terms, bin averages, census, and the
//!   conventional full-record estimators
//! - [`sweep`]: width and rate sweeps with CSV output
//! - [`oracle`]: exact expected g² under parametric count models
//! - [`pipeline`], [`manifest`], [`cli`]: reproduction runs and the
//!   `g2bin` command line

pub mod binning;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod manifest;
pub mod model;
pub mod oracle;
pub mod pipeline;
pub mod sim;
pub mod sweep;

pub use error::{Error, Result};
pub use estimators::{census, g2_aggregate, g2_binned, EstimatorKind, HeraldRule};
pub use model::{BinCensus, BinCounts, CensusMode, ChannelId, G2Estimate, TagRecord, TimeTag};
pub use sim::SourceConfig;
