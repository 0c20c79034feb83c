//! Sweeps over bin width and source rate, and their CSV tables.
//!
//! Every cell derives its own seed from the master seed and its index, so
//! results are identical whether cells run serially or on the rayon pool.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binning::{bin_anchored, draw_bins, Direction, Sampling};
use crate::error::{Error, Result};
use crate::estimators::{census, g2_binned_with, EstimatorKind, HeraldRule};
use crate::model::{mean_and_sample_std, BinCensus, BinCounts, CensusMode, G2Estimate, TagRecord};
use crate::sim::{simulate, SourceConfig};

/// SplitMix64 finalizer over `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub sampling: Sampling,
    pub herald_rule: HeraldRule,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            sampling: Sampling::Random,
            herald_rule: HeraldRule::AnyChannel,
        }
    }
}

/// One row of a bin-width sweep. `tau` is negative for windows grown
/// backward from an anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct TauPoint {
    pub tau: i64,
    pub estimate: G2Estimate,
}

/// For each width, draws `n_samples` bins and averages the per-bin terms.
pub fn sweep_tau(
    record: &TagRecord,
    taus: &[u64],
    n_samples: usize,
    kind: EstimatorKind,
    seed: u64,
    options: SweepOptions,
) -> Result<Vec<TauPoint>> {
    taus.par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let bins = draw_bins(record, tau, n_samples, options.sampling, derive_seed(seed, i as u64))?;
            Ok(TauPoint {
                tau: tau as i64,
                estimate: g2_binned_with(&bins, kind, options.herald_rule, false)?,
            })
        })
        .collect()
}

/// Windows grown in both directions from `n_anchors` random anchor times.
/// Row `k tau` averages the forward windows `[t, t + k tau)` over anchors;
/// row `-k tau` the backward windows `[t - k tau, t)`. Rows run from the
/// widest backward window to the widest forward one.
pub fn sweep_anchored(
    record: &TagRecord,
    tau: u64,
    n_steps: usize,
    n_anchors: usize,
    kind: EstimatorKind,
    seed: u64,
    rule: HeraldRule,
) -> Result<Vec<TauPoint>> {
    if tau == 0 {
        return Err(Error::ZeroTau);
    }
    let reach = n_steps as u64 * tau;
    if record.duration() < 2 * reach {
        return Err(Error::RecordTooShort {
            duration: record.duration(),
            n_samples: 2 * n_steps,
            tau,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchors: Vec<u64> = (0..n_anchors)
        .map(|_| rng.random_range(reach..=record.duration() - reach))
        .collect();

    let mut backward: Vec<Vec<BinCounts>> = vec![Vec::with_capacity(n_anchors); n_steps];
    let mut forward: Vec<Vec<BinCounts>> = vec![Vec::with_capacity(n_anchors); n_steps];
    for &anchor in &anchors {
        for (slot, dir) in [(&mut backward, Direction::Backward), (&mut forward, Direction::Forward)] {
            for (k, bin) in bin_anchored(record, anchor, tau, n_steps, dir)?.into_iter().enumerate() {
                slot[k].push(bin);
            }
        }
    }

    let mut rows = Vec::with_capacity(2 * n_steps);
    for (k, bins) in backward.iter().enumerate().rev() {
        rows.push(TauPoint {
            tau: -((k as i64 + 1) * tau as i64),
            estimate: estimate_or_undefined(bins, kind, rule)?,
        });
    }
    for (k, bins) in forward.iter().enumerate() {
        rows.push(TauPoint {
            tau: (k as i64 + 1) * tau as i64,
            estimate: estimate_or_undefined(bins, kind, rule)?,
        });
    }
    Ok(rows)
}

fn estimate_or_undefined(
    bins: &[BinCounts],
    kind: EstimatorKind,
    rule: HeraldRule,
) -> Result<G2Estimate> {
    if bins.is_empty() {
        return Ok(G2Estimate::undefined(0));
    }
    g2_binned_with(bins, kind, rule, false)
}

/// Census at each width over the same drawn bins in both modes.
pub fn census_sweep(
    record: &TagRecord,
    taus: &[u64],
    n_samples: usize,
    modes: &[CensusMode],
    sampling: Sampling,
    seed: u64,
) -> Result<Vec<BinCensus>> {
    let per_tau: Vec<Vec<BinCensus>> = taus
        .par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let bins = draw_bins(record, tau, n_samples, sampling, derive_seed(seed, i as u64))?;
            modes.iter().map(|&mode| census(&bins, mode)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_tau.into_iter().flatten().collect())
}

/// Mean and spread, over repeats, of the estimate at one (rate, width) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerPoint {
    pub pair_rate: f64,
    pub tau: u64,
    /// Mean over repeats with a defined estimate.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_defined: usize,
    pub n_repeats: usize,
}

/// For each config, simulates `n_repeats` independent records (seeds
/// derived from `config.seed`) and evaluates the estimator on `n_samples`
/// bins at each width.
pub fn sweep_power(
    configs: &[SourceConfig],
    taus: &[u64],
    n_samples: usize,
    n_repeats: usize,
    kind: EstimatorKind,
    options: SweepOptions,
) -> Result<Vec<PowerPoint>> {
    for config in configs {
        config.validate()?;
    }
    let cells: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..n_repeats).map(move |r| (c, r)))
        .collect();
    // values[cell][tau]
    let values: Vec<Vec<Option<f64>>> = cells
        .par_iter()
        .map(|&(c, r)| {
            let config = SourceConfig {
                seed: derive_seed(configs[c].seed, r as u64),
                ..configs[c].clone()
            };
            let record = simulate(&config)?;
            taus.iter()
                .enumerate()
                .map(|(t, &tau)| {
                    let bins = draw_bins(
                        &record,
                        tau,
                        n_samples,
                        options.sampling,
                        derive_seed(config.seed, t as u64),
                    )?;
                    Ok(g2_binned_with(&bins, kind, options.herald_rule, false)?.value())
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(configs.len() * taus.len());
    for (c, config) in configs.iter().enumerate() {
        for (t, &tau) in taus.iter().enumerate() {
            let defined: Vec<f64> = (0..n_repeats)
                .filter_map(|r| values[c * n_repeats + r][t])
                .collect();
            let (mean, std) = mean_and_sample_std(&defined);
            points.push(PowerPoint {
                pair_rate: config.pair_rate,
                tau,
                mean,
                std,
                n_defined: defined.len(),
                n_repeats,
            });
        }
    }
    Ok(points)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_comment<W: Write>(out: &mut W, comment: Option<&str>) -> Result<()> {
    if let Some(comment) = comment {
        writeln!(out, "# {comment}")?;
    }
    Ok(())
}

/// `tau_ps,g2,n_w,n_total,std`; an undefined estimate prints `undefined`.
pub fn write_tau_csv<W: Write>(points: &[TauPoint], comment: Option<&str>, mut out: W) -> Result<()> {
    write_comment(&mut out, comment)?;
    writeln!(out, "tau_ps,g2,n_w,n_total,std")?;
    for p in points {
        let g2 = p
            .estimate
            .value()
            .map(|v| v.to_string())
            .unwrap_or_else(|| "undefined".into());
        writeln!(
            out,
            "{},{},{},{},{}",
            p.tau,
            g2,
            p.estimate.n_w(),
            p.estimate.n_total(),
            opt(p.estimate.std_dev())
        )?;
    }
    Ok(())
}

/// `pair_rate,tau_ps,min_g2_mean,min_g2_std`.
pub fn write_power_csv<W: Write>(points: &[PowerPoint], comment: Option<&str>, mut out: W) -> Result<()> {
    write_comment(&mut out, comment)?;
    writeln!(out, "pair_rate,tau_ps,min_g2_mean,min_g2_std")?;
    for p in points {
        writeln!(out, "{},{},{},{}", p.pair_rate, p.tau, opt(p.mean), opt(p.std))?;
    }
    Ok(())
}

/// `tau_ps,mode,no_photon,single,multi`.
pub fn write_census_csv<W: Write>(rows: &[BinCensus], comment: Option<&str>, mut out: W) -> Result<()> {
    write_comment(&mut out, comment)?;
    writeln!(out, "tau_ps,mode,no_photon,single,multi")?;
    for c in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.tau,
            c.mode,
            c.no_photon(),
            c.single_photon(),
            c.multi_photon()
        )?;
    }
    Ok(())
}
