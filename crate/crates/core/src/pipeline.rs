//! Desk-scale reproduction pipelines for the characterization figures.
//!
//! - `fig2`: g² against bin width grown both ways from fixed anchor times,
//!   unheralded and heralded, single-mode rates up to 1.5 Mcps.
//! - `fig5`: bin census (no/single/multi-photon) against bin width at
//!   1.5 Mcps with herald efficiency 0.25.
//! - `fig6`: mean and spread of the unheralded g² at 10/20/30 ns over 100
//!   records of 1000 bins each, at the three multi-mode rates.
//!
//! Detected rates are A+B rates after dead time; `pair_rate` is solved from
//! them with [`config_for_detected_rate`].

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::binning::Sampling;
use crate::error::Result;
use crate::estimators::{EstimatorKind, HeraldRule};
use crate::manifest::RunManifest;
use crate::model::{BinCensus, CensusMode};
use crate::sim::{config_for_detected_rate, fmt_f64, simulate, SourceConfig, PUMP_ANCHORS};
use crate::sweep::{
    census_sweep, derive_seed, sweep_anchored, sweep_power, write_census_csv, write_power_csv,
    write_tau_csv, PowerPoint, SweepOptions, TauPoint,
};

pub const NS: u64 = 1_000;

fn single_mode_rate() -> f64 {
    PUMP_ANCHORS[0].detected_rate_mcps * 1e6
}

fn multi_mode_rates() -> Vec<f64> {
    PUMP_ANCHORS[1..]
        .iter()
        .map(|a| a.detected_rate_mcps * 1e6)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Protocol {
    pub tau: u64,
    pub n_steps: usize,
    pub n_anchors: usize,
    /// Detected A+B rates in counts per second.
    pub detected_rates: Vec<f64>,
    pub base: SourceConfig,
    pub herald_rule: HeraldRule,
}

impl Default for Fig2Protocol {
    fn default() -> Self {
        let top = single_mode_rate();
        Fig2Protocol {
            tau: 30 * NS,
            n_steps: 20,
            n_anchors: 200,
            detected_rates: vec![top / 3.0, 2.0 * top / 3.0, top],
            base: SourceConfig {
                duration: 10_000_000_000,
                ..SourceConfig::default()
            },
            herald_rule: HeraldRule::AnyChannel,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Curve {
    pub detected_rate: f64,
    pub config: SourceConfig,
    pub kind: EstimatorKind,
    pub rows: Vec<TauPoint>,
}

pub fn run_fig2(protocol: &Fig2Protocol, seed: u64) -> Result<Vec<Fig2Curve>> {
    let per_rate: Vec<Vec<Fig2Curve>> = protocol
        .detected_rates
        .par_iter()
        .enumerate()
        .map(|(i, &rate)| {
            let mut config = config_for_detected_rate(&protocol.base, rate)?;
            config.seed = derive_seed(seed, i as u64);
            let record = simulate(&config)?;
            // same anchors for both estimators
            let anchor_seed = derive_seed(config.seed, u64::MAX);
            [EstimatorKind::UnheraldedBinned, EstimatorKind::HeraldedBinned]
                .into_iter()
                .map(|kind| {
                    Ok(Fig2Curve {
                        detected_rate: rate,
                        config: config.clone(),
                        kind,
                        rows: sweep_anchored(
                            &record,
                            protocol.tau,
                            protocol.n_steps,
                            protocol.n_anchors,
                            kind,
                            anchor_seed,
                            protocol.herald_rule,
                        )?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_rate.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig5Protocol {
    pub taus: Vec<u64>,
    pub n_samples: usize,
    pub detected_rate: f64,
    pub base: SourceConfig,
    pub sampling: Sampling,
}

impl Default for Fig5Protocol {
    fn default() -> Self {
        Fig5Protocol {
            taus: [5, 10, 15, 20, 30, 50, 100, 200, 300, 500, 1000]
                .iter()
                .map(|ns| ns * NS)
                .collect(),
            n_samples: 1000,
            detected_rate: single_mode_rate(),
            base: SourceConfig {
                eta_c: 0.25,
                duration: 10_000_000_000,
                ..SourceConfig::default()
            },
            sampling: Sampling::Random,
        }
    }
}

pub fn run_fig5(protocol: &Fig5Protocol, seed: u64) -> Result<Vec<BinCensus>> {
    let mut config = config_for_detected_rate(&protocol.base, protocol.detected_rate)?;
    config.seed = seed;
    let record = simulate(&config)?;
    census_sweep(
        &record,
        &protocol.taus,
        protocol.n_samples,
        &[CensusMode::Unheralded, CensusMode::Heralded],
        protocol.sampling,
        derive_seed(seed, u64::MAX),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig6Protocol {
    pub detected_rates: Vec<f64>,
    pub taus: Vec<u64>,
    pub n_samples: usize,
    pub n_repeats: usize,
    pub base: SourceConfig,
    pub options: SweepOptions,
}

impl Default for Fig6Protocol {
    fn default() -> Self {
        let taus = vec![10 * NS, 20 * NS, 30 * NS];
        let n_samples = 1000;
        let longest = *taus.iter().max().unwrap();
        Fig6Protocol {
            detected_rates: multi_mode_rates(),
            n_samples,
            n_repeats: 100,
            base: SourceConfig {
                duration: 4 * n_samples as u64 * longest,
                ..SourceConfig::default()
            },
            taus,
            options: SweepOptions::default(),
        }
    }
}

pub fn fig6_configs(protocol: &Fig6Protocol, seed: u64) -> Result<Vec<SourceConfig>> {
    protocol
        .detected_rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| {
            let mut config = config_for_detected_rate(&protocol.base, rate)?;
            config.seed = derive_seed(seed, i as u64);
            Ok(config)
        })
        .collect()
}

pub fn run_fig6(protocol: &Fig6Protocol, seed: u64) -> Result<Vec<PowerPoint>> {
    sweep_power(
        &fig6_configs(protocol, seed)?,
        &protocol.taus,
        protocol.n_samples,
        protocol.n_repeats,
        EstimatorKind::UnheraldedBinned,
        protocol.options,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig2,
    Fig5,
    Fig6,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
        }
    }
}

fn mode_name(kind: EstimatorKind) -> &'static str {
    kind.census_mode().as_str()
}

fn config_snapshot(prefix: &str, config: &SourceConfig) -> Vec<(String, String)> {
    config
        .to_pairs()
        .into_iter()
        .map(|(k, v)| (format!("{prefix}{k}"), v))
        .collect()
}

fn write_csv_with_manifest(
    dir: &Path,
    name: &str,
    manifest: &RunManifest,
    write: impl FnOnce(&str, BufWriter<File>) -> Result<()>,
) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut manifest = manifest.clone();
    manifest.outputs = vec![path.display().to_string()];
    write(&manifest.csv_comment(), BufWriter::new(File::create(&path)?))?;
    manifest.write_next_to(&path)?;
    Ok(path)
}

/// Runs a figure pipeline with its default protocol and writes the CSV
/// artifacts (each with a manifest) into `dir`.
pub fn reproduce(figure: Figure, seed: u64, dir: &Path, base: RunManifest) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match figure {
        Figure::Fig2 => {
            let protocol = Fig2Protocol::default();
            for curve in run_fig2(&protocol, seed)? {
                let manifest = base.clone().with_config(
                    [
                        ("figure".to_string(), "fig2".to_string()),
                        ("mode".to_string(), mode_name(curve.kind).to_string()),
                        ("detected_rate".to_string(), fmt_f64(curve.detected_rate)),
                        ("tau_ps".to_string(), protocol.tau.to_string()),
                        ("n_steps".to_string(), protocol.n_steps.to_string()),
                        ("n_anchors".to_string(), protocol.n_anchors.to_string()),
                    ]
                    .into_iter()
                    .chain(config_snapshot("source.", &curve.config)),
                );
                let name = format!(
                    "fig2_{}_{}mcps.csv",
                    mode_name(curve.kind),
                    curve.detected_rate / 1e6
                );
                written.push(write_csv_with_manifest(dir, &name, &manifest, |comment, out| {
                    write_tau_csv(&curve.rows, Some(comment), out)
                })?);
            }
        }
        Figure::Fig5 => {
            let protocol = Fig5Protocol::default();
            let rows = run_fig5(&protocol, seed)?;
            let mut config = config_for_detected_rate(&protocol.base, protocol.detected_rate)?;
            config.seed = seed;
            let manifest = base.with_config(
                [
                    ("figure".to_string(), "fig5".to_string()),
                    ("n_samples".to_string(), protocol.n_samples.to_string()),
                    (
                        "taus_ps".to_string(),
                        protocol.taus.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
                    ),
                ]
                .into_iter()
                .chain(config_snapshot("source.", &config)),
            );
            written.push(write_csv_with_manifest(dir, "fig5_census.csv", &manifest, |comment, out| {
                write_census_csv(&rows, Some(comment), out)
            })?);
        }
        Figure::Fig6 => {
            let protocol = Fig6Protocol::default();
            let points = run_fig6(&protocol, seed)?;
            let mut config = vec![
                ("figure".to_string(), "fig6".to_string()),
                ("n_samples".to_string(), protocol.n_samples.to_string()),
                ("n_repeats".to_string(), protocol.n_repeats.to_string()),
            ];
            for (i, c) in fig6_configs(&protocol, seed)?.iter().enumerate() {
                config.extend(config_snapshot(&format!("source{i}."), c));
            }
            let manifest = base.with_config(config);
            written.push(write_csv_with_manifest(dir, "fig6_min_g2.csv", &manifest, |comment, out| {
                write_power_csv(&points, Some(comment), out)
            })?);
        }
    }
    Ok(written)
}
