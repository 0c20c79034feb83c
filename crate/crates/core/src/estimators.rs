//! Second-order correlation estimators.
//!
//! The binned estimators evaluate a per-bin term from the channel counts and
//! average it over the bins that saw at least one detection. Coincidences
//! inside a bin follow the min rule: `C_AB = min(C_A, C_B)`,
//! `C_AC = min(C_A, C_C)`, `C_BC = min(C_B, C_C)`,
//! `C_ABC = min(C_A, C_B, C_C)`.
//!
//! Unheralded term: `C_AB (C_A + C_B) / (C_A C_B)`.
//! Heralded term: `C_ABC C_C / (C_AC C_BC)`.
//!
//! A bin whose coincidence count is zero contributes a zero term (it still
//! counts towards `N_w`); only bins with no relevant detections at all are
//! left out of the average.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{BinCensus, BinCounts, CensusMode, ChannelId, G2Estimate, TagRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    /// `P_AB / (P_A P_B)` over the whole record.
    TwoDetector,
    /// `P_ABC / (P_AC P_BC)` over the whole record.
    ThreeDetector,
    /// Bin-averaged, two detectors, no herald.
    UnheraldedBinned,
    /// Bin-averaged, herald on C.
    HeraldedBinned,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::TwoDetector => "two_detector",
            EstimatorKind::ThreeDetector => "three_detector",
            EstimatorKind::UnheraldedBinned => "unheralded_binned",
            EstimatorKind::HeraldedBinned => "heralded_binned",
        }
    }

    pub fn census_mode(self) -> CensusMode {
        match self {
            EstimatorKind::TwoDetector | EstimatorKind::UnheraldedBinned => CensusMode::Unheralded,
            EstimatorKind::ThreeDetector | EstimatorKind::HeraldedBinned => CensusMode::Heralded,
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which heralded bins count towards `N_w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeraldRule {
    /// Any detection on A, B or C.
    #[default]
    AnyChannel,
    /// At least one herald on C.
    HeraldRequired,
}

/// The single predicate deciding whether a bin enters the average. Shared
/// with the oracle so both condition on the same event.
pub fn contributes(c_a: u64, c_b: u64, c_c: u64, kind: EstimatorKind, rule: HeraldRule) -> bool {
    match kind {
        EstimatorKind::UnheraldedBinned | EstimatorKind::TwoDetector => c_a + c_b > 0,
        EstimatorKind::HeraldedBinned | EstimatorKind::ThreeDetector => match rule {
            HeraldRule::AnyChannel => c_a + c_b + c_c > 0,
            HeraldRule::HeraldRequired => c_c > 0,
        },
    }
}

pub fn unheralded_value(c_a: u64, c_b: u64) -> f64 {
    let coincidences = c_a.min(c_b);
    if coincidences == 0 {
        return 0.0;
    }
    (coincidences * (c_a + c_b)) as f64 / (c_a * c_b) as f64
}

pub fn heralded_value(c_a: u64, c_b: u64, c_c: u64) -> f64 {
    let triples = c_a.min(c_b).min(c_c);
    if triples == 0 {
        return 0.0;
    }
    (triples * c_c) as f64 / (c_a.min(c_c) * c_b.min(c_c)) as f64
}

/// Per-bin unheralded term, or `None` for a bin with no A/B detection.
pub fn unheralded_term(bin: &BinCounts) -> Option<f64> {
    contributes(
        bin.c_a,
        bin.c_b,
        bin.c_c,
        EstimatorKind::UnheraldedBinned,
        HeraldRule::AnyChannel,
    )
    .then(|| unheralded_value(bin.c_a, bin.c_b))
}

/// Per-bin heralded term, or `None` when the bin does not contribute under
/// `rule`.
pub fn heralded_term(bin: &BinCounts, rule: HeraldRule) -> Option<f64> {
    contributes(bin.c_a, bin.c_b, bin.c_c, EstimatorKind::HeraldedBinned, rule)
        .then(|| heralded_value(bin.c_a, bin.c_b, bin.c_c))
}

fn binned_term(bin: &BinCounts, kind: EstimatorKind, rule: HeraldRule) -> Result<Option<f64>> {
    match kind {
        EstimatorKind::UnheraldedBinned => Ok(unheralded_term(bin)),
        EstimatorKind::HeraldedBinned => Ok(heralded_term(bin, rule)),
        other => Err(Error::WrongEstimator(other.as_str())),
    }
}

fn check_homogeneous(bins: &[BinCounts]) -> Result<u64> {
    let first = bins.first().ok_or(Error::NoBins)?.tau;
    if let Some(other) = bins.iter().find(|b| b.tau != first) {
        return Err(Error::MixedTau {
            first,
            other: other.tau,
        });
    }
    Ok(first)
}

/// Bin-averaged estimate with the default herald rule.
pub fn g2_binned(bins: &[BinCounts], kind: EstimatorKind) -> Result<G2Estimate> {
    g2_binned_with(bins, kind, HeraldRule::default(), false)
}

/// Bin-averaged estimate. `keep_terms` retains the contributing per-bin
/// terms in the result.
pub fn g2_binned_with(
    bins: &[BinCounts],
    kind: EstimatorKind,
    rule: HeraldRule,
    keep_terms: bool,
) -> Result<G2Estimate> {
    check_homogeneous(bins)?;
    let mut terms = Vec::with_capacity(bins.len());
    for bin in bins {
        if let Some(term) = binned_term(bin, kind, rule)? {
            terms.push(term);
        }
    }
    Ok(G2Estimate::from_terms(terms, bins.len(), keep_terms))
}

/// Greedy earliest-first matching of two sorted time lists. Two events
/// coincide when they fall inside a common window of width `window`, i.e.
/// `2 |t1 - t2| < window`. Returns how many disjoint pairs were matched.
fn match_pairs(first: &[u64], second: &[u64], window: u64) -> u64 {
    let mut j = 0;
    let mut matched = 0;
    for &t in first {
        while j < second.len() && second[j] < t && 2 * (t - second[j]) >= window {
            j += 1;
        }
        if j < second.len() && 2 * second[j].abs_diff(t) < window {
            matched += 1;
            j += 1;
        }
    }
    matched
}

/// Herald-anchored triple matching: for each C event, the earliest unused A
/// and B events both within the window make one triple.
fn match_triples(heralds: &[u64], a: &[u64], b: &[u64], window: u64) -> u64 {
    let (mut i, mut j) = (0, 0);
    let mut matched = 0;
    for &t in heralds {
        while i < a.len() && a[i] < t && 2 * (t - a[i]) >= window {
            i += 1;
        }
        while j < b.len() && b[j] < t && 2 * (t - b[j]) >= window {
            j += 1;
        }
        let a_hit = i < a.len() && 2 * a[i].abs_diff(t) < window;
        let b_hit = j < b.len() && 2 * b[j].abs_diff(t) < window;
        if a_hit && b_hit {
            matched += 1;
            i += 1;
            j += 1;
        }
    }
    matched
}

/// Conventional full-record estimator with coincidence window `window` (ps).
///
/// Two-detector: probabilities are per coincidence window over the record,
/// `P_X = N_X / (T / w)`, giving `N_AB T / (N_A N_B w)`. Three-detector:
/// probabilities are per herald, `P_X = N_X / N_C`, giving
/// `N_ABC N_C / (N_AC N_BC)`. A zero coincidence count yields 0.
pub fn g2_aggregate(record: &TagRecord, kind: EstimatorKind, window: u64) -> Result<f64> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    if window == 0 {
        return Err(Error::NonPositiveWindow);
    }
    let a = record.channel_times(ChannelId::A);
    let b = record.channel_times(ChannelId::B);
    match kind {
        EstimatorKind::TwoDetector => {
            let n_ab = match_pairs(&a, &b, window);
            if n_ab == 0 {
                return Ok(0.0);
            }
            let trials = record.duration() as f64 / window as f64;
            let p_a = a.len() as f64 / trials;
            let p_b = b.len() as f64 / trials;
            let p_ab = n_ab as f64 / trials;
            Ok(p_ab / (p_a * p_b))
        }
        EstimatorKind::ThreeDetector => {
            let c = record.channel_times(ChannelId::C);
            let n_abc = match_triples(&c, &a, &b, window);
            if n_abc == 0 {
                return Ok(0.0);
            }
            let n_ac = match_pairs(&c, &a, window);
            let n_bc = match_pairs(&c, &b, window);
            let heralds = c.len() as f64;
            let p_abc = n_abc as f64 / heralds;
            let p_ac = n_ac as f64 / heralds;
            let p_bc = n_bc as f64 / heralds;
            Ok(p_abc / (p_ac * p_bc))
        }
        other => Err(Error::WrongEstimator(other.as_str())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhotonClass {
    None,
    Single,
    Multi,
}

/// Classifies a bin on its signal count `c_a + c_b`. In heralded mode a bin
/// without a herald is a no-photon bin whatever the signal arms saw.
pub fn classify(bin: &BinCounts, mode: CensusMode) -> PhotonClass {
    if mode == CensusMode::Heralded && bin.c_c == 0 {
        return PhotonClass::None;
    }
    match bin.signal() {
        0 => PhotonClass::None,
        1 => PhotonClass::Single,
        _ => PhotonClass::Multi,
    }
}

pub fn census(bins: &[BinCounts], mode: CensusMode) -> Result<BinCensus> {
    let tau = check_homogeneous(bins)?;
    let (mut n_no, mut n_single, mut n_multi) = (0, 0, 0);
    for bin in bins {
        match classify(bin, mode) {
            PhotonClass::None => n_no += 1,
            PhotonClass::Single => n_single += 1,
            PhotonClass::Multi => n_multi += 1,
        }
    }
    let result = BinCensus {
        n_no,
        n_single,
        n_multi,
        n_total: bins.len() as u64,
        tau,
        mode,
    };
    assert!(result.is_partition());
    Ok(result)
}
