//! Detection events, per-bin counts and estimator results.
//!
//! Timestamps are integer picoseconds since acquisition start. Records are
//! kept sorted by `(timestamp, channel)` with channels ordered `A < B < C`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Detector identity. `A` and `B` sit behind the 50:50 beam splitter, `C`
/// is the herald.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelId {
    A,
    B,
    C,
}

impl ChannelId {
    pub const ALL: [ChannelId; 3] = [ChannelId::A, ChannelId::B, ChannelId::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: u8) -> Option<ChannelId> {
        match index {
            0 => Some(ChannelId::A),
            1 => Some(ChannelId::B),
            2 => Some(ChannelId::C),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelId::A => "A",
            ChannelId::B => "B",
            ChannelId::C => "C",
        }
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" => Ok(ChannelId::A),
            "B" => Ok(ChannelId::B),
            "C" => Ok(ChannelId::C),
            other => Err(Error::Format(format!("unknown channel {other:?}"))),
        }
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTag {
    pub channel: ChannelId,
    pub timestamp: u64,
}

impl TimeTag {
    pub fn new(channel: ChannelId, timestamp: u64) -> Self {
        TimeTag { channel, timestamp }
    }

    fn sort_key(&self) -> (u64, ChannelId) {
        (self.timestamp, self.channel)
    }
}

impl PartialOrd for TimeTag {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TimeTag {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Unsorted { index: usize },
    BeyondDuration { index: usize, timestamp: u64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unsorted { index } => write!(f, "unsorted at index {index}"),
            Violation::BeyondDuration { index, timestamp } => {
                write!(f, "tag beyond duration at index {index} (t = {timestamp} ps)")
            }
        }
    }
}

/// Checks the record invariants and lists every violation found.
pub fn validate_record(tags: &[TimeTag], duration: u64) -> Vec<Violation> {
    let mut report = Vec::new();
    for (index, tag) in tags.iter().enumerate() {
        if index > 0 && tags[index - 1] > *tag {
            report.push(Violation::Unsorted { index });
        }
        if tag.timestamp >= duration {
            report.push(Violation::BeyondDuration {
                index,
                timestamp: tag.timestamp,
            });
        }
    }
    report
}

pub const META_CONFIG_HASH: &str = "config_hash";
pub const META_CREATION_MODE: &str = "creation_mode";
pub const META_SEED: &str = "seed";

/// A sorted multi-channel tag stream. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagRecord {
    tags: Vec<TimeTag>,
    duration: u64,
    meta: BTreeMap<String, String>,
}

impl TagRecord {
    pub fn new(tags: Vec<TimeTag>, duration: u64) -> Result<Self> {
        let report = validate_record(&tags, duration);
        if !report.is_empty() {
            return Err(Error::InvalidRecord(report));
        }
        Ok(TagRecord {
            tags,
            duration,
            meta: BTreeMap::new(),
        })
    }

    /// Sorts `tags` into canonical order before validating.
    pub fn from_unsorted(mut tags: Vec<TimeTag>, duration: u64) -> Result<Self> {
        tags.sort_unstable();
        Self::new(tags, duration)
    }

    pub fn empty(duration: u64) -> Self {
        TagRecord {
            tags: Vec::new(),
            duration,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Sorted timestamps of a single channel.
    pub fn channel_times(&self, channel: ChannelId) -> Vec<u64> {
        self.tags
            .iter()
            .filter(|t| t.channel == channel)
            .map(|t| t.timestamp)
            .collect()
    }

    pub fn channel_count(&self, channel: ChannelId) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    /// Index of the first tag with `timestamp >= t`.
    pub fn lower_bound(&self, t: u64) -> usize {
        self.tags.partition_point(|tag| tag.timestamp < t)
    }

    /// Per-channel counts of tags in the half-open interval `[start, end)`.
    pub fn count_in(&self, start: u64, end: u64) -> [u64; 3] {
        let mut counts = [0u64; 3];
        if end <= start {
            return counts;
        }
        let lo = self.lower_bound(start);
        for tag in self.tags[lo..].iter().take_while(|t| t.timestamp < end) {
            counts[tag.channel.index()] += 1;
        }
        counts
    }

    pub(crate) fn into_parts(self) -> (Vec<TimeTag>, u64, BTreeMap<String, String>) {
        (self.tags, self.duration, self.meta)
    }

    pub(crate) fn from_parts_unchecked(
        tags: Vec<TimeTag>,
        duration: u64,
        meta: BTreeMap<String, String>,
    ) -> Self {
        debug_assert!(validate_record(&tags, duration).is_empty());
        TagRecord {
            tags,
            duration,
            meta,
        }
    }
}

/// Counts per channel inside one time bin of width `tau` picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinCounts {
    pub c_a: u64,
    pub c_b: u64,
    pub c_c: u64,
    pub bin_index: i64,
    pub tau: u64,
}

impl BinCounts {
    pub fn new(c_a: u64, c_b: u64, c_c: u64, bin_index: i64, tau: u64) -> Self {
        BinCounts {
            c_a,
            c_b,
            c_c,
            bin_index,
            tau,
        }
    }

    pub(crate) fn from_array(counts: [u64; 3], bin_index: i64, tau: u64) -> Self {
        BinCounts::new(counts[0], counts[1], counts[2], bin_index, tau)
    }

    /// Signal-arm detections, `c_a + c_b`.
    pub fn signal(&self) -> u64 {
        self.c_a + self.c_b
    }

    pub fn total(&self) -> u64 {
        self.c_a + self.c_b + self.c_c
    }
}

/// Bin-averaged correlation value.
///
/// An estimate with no contributing bins is undefined; `value()` returns
/// `None` rather than zero or NaN in that case.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    value: Option<f64>,
    n_w: usize,
    n_total: usize,
    per_bin_terms: Option<Vec<f64>>,
    std_dev: Option<f64>,
}

impl G2Estimate {
    /// Builds an estimate from the contributing per-bin terms.
    pub fn from_terms(terms: Vec<f64>, n_total: usize, keep_terms: bool) -> Self {
        let n_w = terms.len();
        assert!(n_w <= n_total, "n_w ({n_w}) exceeds n_total ({n_total})");
        let (value, std_dev) = mean_and_sample_std(&terms);
        G2Estimate {
            value,
            n_w,
            n_total,
            per_bin_terms: keep_terms.then_some(terms),
            std_dev,
        }
    }

    pub fn undefined(n_total: usize) -> Self {
        G2Estimate {
            value: None,
            n_w: 0,
            n_total,
            per_bin_terms: None,
            std_dev: None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        self.value
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }

    pub fn n_w(&self) -> usize {
        self.n_w
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn per_bin_terms(&self) -> Option<&[f64]> {
        self.per_bin_terms.as_deref()
    }

    /// Sample (n - 1) standard deviation of the per-bin terms; needs `n_w >= 2`.
    pub fn std_dev(&self) -> Option<f64> {
        self.std_dev
    }

    /// Standard error of the mean, `std_dev / sqrt(n_w)`.
    pub fn std_err(&self) -> Option<f64> {
        self.std_dev.map(|s| s / (self.n_w as f64).sqrt())
    }
}

pub(crate) fn mean_and_sample_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt()
    });
    (Some(mean), std)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CensusMode {
    Unheralded,
    Heralded,
}

impl CensusMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CensusMode::Unheralded => "unheralded",
            CensusMode::Heralded => "heralded",
        }
    }
}

impl fmt::Display for CensusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classification of bins into no-, single- and multi-photon tallies.
///
/// Stored as integer tallies over a common denominator so the partition
/// is exact; fractions are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinCensus {
    pub n_no: u64,
    pub n_single: u64,
    pub n_multi: u64,
    pub n_total: u64,
    pub tau: u64,
    pub mode: CensusMode,
}

impl BinCensus {
    pub fn no_photon(&self) -> f64 {
        self.n_no as f64 / self.n_total as f64
    }

    pub fn single_photon(&self) -> f64 {
        self.n_single as f64 / self.n_total as f64
    }

    pub fn multi_photon(&self) -> f64 {
        self.n_multi as f64 / self.n_total as f64
    }

    pub fn is_partition(&self) -> bool {
        self.n_no + self.n_single + self.n_multi == self.n_total
    }
}
