//! Synthetic detection records for a CW-pumped pair source.
//!
//! Pairs are emitted as a homogeneous Poisson process. Each signal photon
//! reaches detector A with probability `eta_a`, B with `eta_b`, or is lost;
//! its idler independently reaches the herald C with probability `eta_c`.
//! Dark counts are independent Poisson streams per channel, and each
//! detector has a non-paralyzable dead time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    ChannelId, TagRecord, TimeTag, META_CONFIG_HASH, META_CREATION_MODE, META_SEED,
};

pub const PS_PER_S: f64 = 1e12;

const STREAM_PAIRS: u64 = 0;
const STREAM_ROUTING: u64 = 1;
const STREAM_DARK: [u64; 3] = [2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    /// Generated pairs per second; stands in for pump power.
    pub pair_rate: f64,
    /// Probability that a signal photon is registered on A (includes the split).
    pub eta_a: f64,
    pub eta_b: f64,
    /// Herald detection probability.
    pub eta_c: f64,
    /// Dead time in picoseconds, applied to every channel.
    pub dead_time: u64,
    pub dark_rate_a: f64,
    pub dark_rate_b: f64,
    pub dark_rate_c: f64,
    /// Gaussian timing spread in picoseconds.
    pub jitter_sigma: f64,
    /// Idler arrival offset relative to the signal, picoseconds.
    pub pair_delay: i64,
    /// Acquisition length in picoseconds.
    pub duration: u64,
    pub seed: u64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            pair_rate: 1e6,
            eta_a: 0.1,
            eta_b: 0.1,
            eta_c: 0.25,
            dead_time: 22_000,
            dark_rate_a: 100.0,
            dark_rate_b: 100.0,
            dark_rate_c: 100.0,
            jitter_sigma: 0.0,
            pair_delay: 0,
            duration: 10_000_000_000,
            seed: 0,
        }
    }
}

pub const CONFIG_KEYS: [&str; 12] = [
    "pair_rate",
    "eta_a",
    "eta_b",
    "eta_c",
    "dead_time",
    "dark_rate_a",
    "dark_rate_b",
    "dark_rate_c",
    "jitter_sigma",
    "pair_delay",
    "duration",
    "seed",
];

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        let probability = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} outside [0, 1]")))
            }
        };
        probability("eta_a", self.eta_a)?;
        probability("eta_b", self.eta_b)?;
        probability("eta_c", self.eta_c)?;
        if self.eta_a + self.eta_b > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "eta_a + eta_b = {} exceeds 1",
                self.eta_a + self.eta_b
            )));
        }
        for (name, rate) in [
            ("pair_rate", self.pair_rate),
            ("dark_rate_a", self.dark_rate_a),
            ("dark_rate_b", self.dark_rate_b),
            ("dark_rate_c", self.dark_rate_c),
            ("jitter_sigma", self.jitter_sigma),
        ] {
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::InvalidConfig(format!("{name} = {rate} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn dark_rate(&self, channel: ChannelId) -> f64 {
        match channel {
            ChannelId::A => self.dark_rate_a,
            ChannelId::B => self.dark_rate_b,
            ChannelId::C => self.dark_rate_c,
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.duration as f64 / PS_PER_S
    }

    /// Ordered `(key, value)` pairs; the canonical text form used for
    /// config files, manifests and the config hash.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("pair_rate", fmt_f64(self.pair_rate)),
            ("eta_a", fmt_f64(self.eta_a)),
            ("eta_b", fmt_f64(self.eta_b)),
            ("eta_c", fmt_f64(self.eta_c)),
            ("dead_time", self.dead_time.to_string()),
            ("dark_rate_a", fmt_f64(self.dark_rate_a)),
            ("dark_rate_b", fmt_f64(self.dark_rate_b)),
            ("dark_rate_c", fmt_f64(self.dark_rate_c)),
            ("jitter_sigma", fmt_f64(self.jitter_sigma)),
            ("pair_delay", self.pair_delay.to_string()),
            ("duration", self.duration.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let float = || {
            value
                .parse::<f64>()
                .map_err(|e| Error::InvalidConfig(format!("{key}: {e}")))
        };
        let unsigned = || {
            parse_integer(value)
                .and_then(|v| u64::try_from(v).ok())
                .ok_or_else(|| Error::InvalidConfig(format!("{key}: expected non-negative integer, got {value:?}")))
        };
        match key.trim() {
            "pair_rate" => self.pair_rate = float()?,
            "eta_a" => self.eta_a = float()?,
            "eta_b" => self.eta_b = float()?,
            "eta_c" => self.eta_c = float()?,
            "dead_time" => self.dead_time = unsigned()?,
            "dark_rate_a" => self.dark_rate_a = float()?,
            "dark_rate_b" => self.dark_rate_b = float()?,
            "dark_rate_c" => self.dark_rate_c = float()?,
            "jitter_sigma" => self.jitter_sigma = float()?,
            "pair_delay" => {
                self.pair_delay = parse_integer(value)
                    .and_then(|v| i64::try_from(v).ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("pair_delay: bad integer {value:?}")))?
            }
            "duration" => self.duration = unsigned()?,
            "seed" => self.seed = unsigned()?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` text on top of the defaults. Blank lines and
    /// `#` comments are ignored.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut config = SourceConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split_once('#').map_or(line, |(head, _)| head).trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key=value", lineno + 1))
            })?;
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// First 16 hex digits of the SHA-256 of the canonical text form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv_text().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Accepts plain integers and integral floats such as `1e9`.
fn parse_integer(value: &str) -> Option<i128> {
    if let Ok(v) = value.parse::<i128>() {
        return Some(v);
    }
    let f = value.parse::<f64>().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.2e18).then_some(f as i128)
}

/// Shortest round-tripping decimal form.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Homogeneous Poisson arrivals on `[0, duration)` at `rate` per second.
///
/// Arrival times are floored to whole picoseconds; the rare arrival that
/// lands on an already-used picosecond is dropped so the output is strictly
/// increasing.
fn poisson_times<R: Rng>(rate: f64, duration: u64, rng: &mut R) -> Vec<u64> {
    if rate <= 0.0 || duration == 0 {
        return Vec::new();
    }
    let rate_per_ps = rate / PS_PER_S;
    let gaps = Exp::new(rate_per_ps).expect("positive finite rate");
    let expected = rate_per_ps * duration as f64;
    let mut times = Vec::with_capacity((expected + 4.0 * expected.sqrt() + 16.0) as usize);
    let end = duration as f64;
    let mut t = 0.0f64;
    loop {
        t += gaps.sample(rng);
        if t >= end {
            break;
        }
        let ps = t as u64;
        if times.last().is_none_or(|&last| ps > last) {
            times.push(ps);
        }
    }
    times
}

/// Pair emission times, strictly increasing within `[0, duration)`.
pub fn generate_pairs(config: &SourceConfig) -> Result<Vec<u64>> {
    config.validate()?;
    let mut rng = rng_for(config.seed, STREAM_PAIRS);
    Ok(poisson_times(config.pair_rate, config.duration, &mut rng))
}

fn place(t: i128, jitter: Option<&Normal<f64>>, rng: &mut ChaCha8Rng, duration: u64) -> u64 {
    let shifted = match jitter {
        Some(normal) => t + normal.sample(rng).round() as i128,
        None => t,
    };
    shifted.clamp(0, duration as i128 - 1) as u64
}

/// Routes each pair to the detectors and merges in dark counts. Dead time is
/// not applied here.
pub fn route_and_detect(pairs: &[u64], config: &SourceConfig) -> Result<TagRecord> {
    config.validate()?;
    let duration = config.duration;
    if duration == 0 {
        return Ok(TagRecord::empty(0));
    }
    let jitter = (config.jitter_sigma > 0.0)
        .then(|| Normal::new(0.0, config.jitter_sigma).expect("validated sigma"));
    let mut rng = rng_for(config.seed, STREAM_ROUTING);
    let mut tags = Vec::with_capacity(
        (pairs.len() as f64 * (config.eta_a + config.eta_b + config.eta_c)) as usize + 16,
    );
    for &t in pairs {
        let signal: f64 = rng.random();
        let herald: f64 = rng.random();
        let channel = if signal < config.eta_a {
            Some(ChannelId::A)
        } else if signal < config.eta_a + config.eta_b {
            Some(ChannelId::B)
        } else {
            None
        };
        if let Some(channel) = channel {
            let ts = place(t as i128, jitter.as_ref(), &mut rng, duration);
            tags.push(TimeTag::new(channel, ts));
        }
        if herald < config.eta_c {
            let ts = place(
                t as i128 + config.pair_delay as i128,
                jitter.as_ref(),
                &mut rng,
                duration,
            );
            tags.push(TimeTag::new(ChannelId::C, ts));
        }
    }
    for channel in ChannelId::ALL {
        let mut dark_rng = rng_for(config.seed, STREAM_DARK[channel.index()]);
        let dark = poisson_times(config.dark_rate(channel), duration, &mut dark_rng);
        tags.extend(dark.into_iter().map(|t| TimeTag::new(channel, t)));
    }
    TagRecord::from_unsorted(tags, duration)
}

/// Non-paralyzable dead time, independently per channel: a tag is dropped
/// when it falls less than `dead_time` after the last kept tag on its channel.
pub fn apply_dead_time(record: &TagRecord, dead_time: u64) -> TagRecord {
    if dead_time == 0 {
        return record.clone();
    }
    let mut last_kept: [Option<u64>; 3] = [None; 3];
    let tags = record
        .tags()
        .iter()
        .filter(|tag| {
            let slot = &mut last_kept[tag.channel.index()];
            match *slot {
                Some(last) if tag.timestamp - last < dead_time => false,
                _ => {
                    *slot = Some(tag.timestamp);
                    true
                }
            }
        })
        .copied()
        .collect();
    TagRecord::from_parts_unchecked(tags, record.duration(), record.meta().clone())
}

/// Full pipeline: pair generation, routing, dead time.
pub fn simulate(config: &SourceConfig) -> Result<TagRecord> {
    let pairs = generate_pairs(config)?;
    let raw = route_and_detect(&pairs, config)?;
    Ok(apply_dead_time(&raw, config.dead_time)
        .with_meta(META_CONFIG_HASH, config.hash())
        .with_meta(META_SEED, config.seed.to_string())
        .with_meta(META_CREATION_MODE, "simulated"))
}

/// Three mutually independent Poisson streams with no pair correlation and
/// no dead time. Used as the control whose estimator expectation the oracle
/// computes exactly.
pub fn generate_coherent_control(
    rate_a: f64,
    rate_b: f64,
    rate_c: f64,
    duration: u64,
    seed: u64,
) -> Result<TagRecord> {
    let rates = [rate_a, rate_b, rate_c];
    if let Some(bad) = rates.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(Error::InvalidConfig(format!("rate {bad} must be >= 0")));
    }
    let mut tags = Vec::new();
    for channel in ChannelId::ALL {
        let mut rng = rng_for(seed, STREAM_DARK[channel.index()]);
        let times = poisson_times(rates[channel.index()], duration, &mut rng);
        tags.extend(times.into_iter().map(|t| TimeTag::new(channel, t)));
    }
    let mut meta = BTreeMap::new();
    meta.insert(META_CREATION_MODE.to_string(), "simulated".to_string());
    meta.insert(META_SEED.to_string(), seed.to_string());
    let (tags, duration, _) = TagRecord::from_unsorted(tags, duration)?.into_parts();
    Ok(TagRecord::from_parts_unchecked(tags, duration, meta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fiber {
    SingleMode,
    MultiMode,
}

/// An empirical operating point: pump power and the detected A+B rate it
/// produced. These are measured anchors for choosing `pair_rate`, not a
/// physical model of the nonlinear conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpAnchor {
    pub pump_mw: f64,
    pub fiber: Fiber,
    pub detected_rate_mcps: f64,
}

pub const PUMP_ANCHORS: [PumpAnchor; 4] = [
    PumpAnchor {
        pump_mw: 30.0,
        fiber: Fiber::SingleMode,
        detected_rate_mcps: 1.5,
    },
    PumpAnchor {
        pump_mw: 4.0,
        fiber: Fiber::MultiMode,
        detected_rate_mcps: 5.4,
    },
    PumpAnchor {
        pump_mw: 16.0,
        fiber: Fiber::MultiMode,
        detected_rate_mcps: 17.2,
    },
    PumpAnchor {
        pump_mw: 28.0,
        fiber: Fiber::MultiMode,
        detected_rate_mcps: 25.6,
    },
];

pub fn anchor_for(pump_mw: f64, fiber: Fiber) -> Option<PumpAnchor> {
    PUMP_ANCHORS
        .iter()
        .copied()
        .find(|a| a.fiber == fiber && a.pump_mw == pump_mw)
}

/// Returns `base` with `pair_rate` chosen so the expected detected A+B rate,
/// after dark counts and non-paralyzable dead time, equals `target_cps`.
pub fn config_for_detected_rate(base: &SourceConfig, target_cps: f64) -> Result<SourceConfig> {
    base.validate()?;
    let eta_sum = base.eta_a + base.eta_b;
    if eta_sum <= 0.0 {
        return Err(Error::InvalidConfig("eta_a + eta_b must be > 0".into()));
    }
    if !target_cps.is_finite() || target_cps < 0.0 {
        return Err(Error::InvalidConfig(format!("target rate {target_cps} must be >= 0")));
    }
    let dead_s = base.dead_time as f64 / PS_PER_S;
    let mut weighted = 0.0;
    for (eta, dark) in [(base.eta_a, base.dark_rate_a), (base.eta_b, base.dark_rate_b)] {
        if eta == 0.0 {
            continue;
        }
        let observed = target_cps * eta / eta_sum;
        if observed * dead_s >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "{observed} cps per detector is unreachable with {} ps dead time",
                base.dead_time
            )));
        }
        let incident = observed / (1.0 - observed * dead_s);
        weighted += ((incident - dark).max(0.0) / eta) * eta / eta_sum;
    }
    Ok(SourceConfig {
        pair_rate: weighted,
        ..base.clone()
    })
}

/// Expected detected rate on one signal channel, the inverse of
/// [`config_for_detected_rate`].
pub fn expected_detected_rate(config: &SourceConfig, channel: ChannelId) -> f64 {
    let eta = match channel {
        ChannelId::A => config.eta_a,
        ChannelId::B => config.eta_b,
        ChannelId::C => config.eta_c,
    };
    let incident = config.pair_rate * eta + config.dark_rate(channel);
    let dead_s = config.dead_time as f64 / PS_PER_S;
    incident / (1.0 + incident * dead_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quiet(pair_rate: f64) -> SourceConfig {
        SourceConfig {
            pair_rate,
            dark_rate_a: 0.0,
            dark_rate_b: 0.0,
            dark_rate_c: 0.0,
            dead_time: 0,
            ..SourceConfig::default()
        }
    }

    fn record_a(times: &[u64], duration: u64) -> TagRecord {
        TagRecord::new(
            times.iter().map(|&t| TimeTag::new(ChannelId::A, t)).collect(),
            duration,
        )
        .unwrap()
    }

    #[test]
    fn zero_rate_gives_no_pairs() {
        assert!(generate_pairs(&quiet(0.0)).unwrap().is_empty());
        let zero_duration = SourceConfig {
            duration: 0,
            ..quiet(1e6)
        };
        assert!(generate_pairs(&zero_duration).unwrap().is_empty());
    }

    #[test]
    fn pair_count_matches_poisson_mean() {
        let config = SourceConfig {
            duration: 1_000_000_000_000,
            seed: 11,
            ..quiet(1e6)
        };
        let pairs = generate_pairs(&config).unwrap();
        // 5 sigma of Poisson(1e6)
        assert!((pairs.len() as f64 - 1e6).abs() < 5000.0, "{}", pairs.len());
        assert!(pairs.windows(2).all(|w| w[0] < w[1]));
        assert!(*pairs.last().unwrap() < config.duration);
    }

    #[test]
    fn pairs_are_deterministic_per_seed() {
        let config = SourceConfig {
            seed: 3,
            ..quiet(5e6)
        };
        assert_eq!(generate_pairs(&config).unwrap(), generate_pairs(&config).unwrap());
        let other = SourceConfig { seed: 4, ..config.clone() };
        assert_ne!(generate_pairs(&config).unwrap(), generate_pairs(&other).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = [
            SourceConfig { eta_a: 0.7, eta_b: 0.4, ..SourceConfig::default() },
            SourceConfig { eta_c: 1.5, ..SourceConfig::default() },
            SourceConfig { pair_rate: -1.0, ..SourceConfig::default() },
            SourceConfig { dark_rate_b: f64::NAN, ..SourceConfig::default() },
            SourceConfig { jitter_sigma: -2.0, ..SourceConfig::default() },
        ];
        for config in bad {
            assert!(matches!(generate_pairs(&config), Err(Error::InvalidConfig(_))));
            assert!(route_and_detect(&[], &config).is_err());
        }
    }

    #[test]
    fn certain_detection_one_pair() {
        let config = SourceConfig {
            eta_a: 0.5,
            eta_b: 0.5,
            eta_c: 1.0,
            duration: 1000,
            ..quiet(0.0)
        };
        let record = route_and_detect(&[100], &config).unwrap();
        assert_eq!(record.len(), 2);
        let signal: Vec<_> = record
            .tags()
            .iter()
            .filter(|t| t.channel != ChannelId::C)
            .collect();
        assert_eq!(signal.len(), 1);
        assert_eq!(signal[0].timestamp, 100);
        assert!(record.tags().contains(&TimeTag::new(ChannelId::C, 100)));
    }

    #[test]
    fn zero_efficiency_is_empty() {
        let config = SourceConfig {
            eta_a: 0.0,
            eta_b: 0.0,
            eta_c: 0.0,
            ..quiet(1e6)
        };
        let pairs = generate_pairs(&config).unwrap();
        assert!(!pairs.is_empty());
        assert!(route_and_detect(&pairs, &config).unwrap().is_empty());
    }

    #[test]
    fn balanced_split_is_binomial() {
        let config = SourceConfig {
            eta_a: 0.5,
            eta_b: 0.5,
            eta_c: 0.0,
            duration: 100_000_000,
            seed: 5,
            ..quiet(0.0)
        };
        let pairs: Vec<u64> = (0..100_000).map(|i| i * 1000).collect();
        let record = route_and_detect(&pairs, &config).unwrap();
        let n_a = record.channel_count(ChannelId::A) as f64;
        // binomial sigma = sqrt(1e5 * 0.25) ~ 158
        assert!((n_a - 50_000.0).abs() < 5.0 * 158.2, "{n_a}");
        assert_eq!(record.len(), 100_000);
    }

    #[test]
    fn pair_delay_and_clamping() {
        let config = SourceConfig {
            eta_a: 1.0,
            eta_b: 0.0,
            eta_c: 1.0,
            pair_delay: 500,
            duration: 1000,
            ..quiet(0.0)
        };
        let record = route_and_detect(&[100, 800], &config).unwrap();
        assert_eq!(record.channel_times(ChannelId::C), vec![600, 999]);
        assert_eq!(record.channel_times(ChannelId::A), vec![100, 800]);
    }

    #[test]
    fn jitter_spreads_tags() {
        let config = SourceConfig {
            eta_a: 1.0,
            eta_b: 0.0,
            eta_c: 0.0,
            jitter_sigma: 50.0,
            duration: 1_000_000_000,
            seed: 9,
            ..quiet(0.0)
        };
        let pairs: Vec<u64> = (1..=2000).map(|i| i * 100_000).collect();
        let record = route_and_detect(&pairs, &config).unwrap();
        let offsets: Vec<f64> = record
            .channel_times(ChannelId::A)
            .iter()
            .zip(&pairs)
            .map(|(&t, &p)| t as f64 - p as f64)
            .collect();
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        let var = offsets.iter().map(|o| (o - mean).powi(2)).sum::<f64>() / offsets.len() as f64;
        assert!(mean.abs() < 5.0 * 50.0 / (2000f64).sqrt());
        assert!((var.sqrt() - 50.0).abs() < 5.0, "{}", var.sqrt());
    }

    #[test]
    fn dead_time_examples() {
        let record = record_a(&[10_000, 15_000, 40_000], 100_000);
        let kept = apply_dead_time(&record, 22_000);
        assert_eq!(kept.channel_times(ChannelId::A), vec![10_000, 40_000]);

        assert_eq!(apply_dead_time(&record, 0), record);

        let mixed = TagRecord::new(
            vec![
                TimeTag::new(ChannelId::A, 0),
                TimeTag::new(ChannelId::B, 5_000),
                TimeTag::new(ChannelId::A, 10_000),
            ],
            100_000,
        )
        .unwrap();
        let kept = apply_dead_time(&mixed, 22_000);
        assert_eq!(kept.channel_times(ChannelId::A), vec![0]);
        assert_eq!(kept.channel_times(ChannelId::B), vec![5_000]);
    }

    #[test]
    fn dead_time_is_non_paralyzable() {
        // 15 000 is dropped but does not extend the dead period, so 25 000 survives
        let record = record_a(&[0, 15_000, 25_000], 100_000);
        let kept = apply_dead_time(&record, 22_000);
        assert_eq!(kept.channel_times(ChannelId::A), vec![0, 25_000]);
        // exactly dead_time apart is kept
        let record = record_a(&[0, 22_000], 100_000);
        assert_eq!(apply_dead_time(&record, 22_000).len(), 2);
    }

    #[test]
    fn simulate_composes_and_tags_metadata() {
        let config = SourceConfig {
            pair_rate: 2e7,
            duration: 200_000_000,
            seed: 21,
            ..SourceConfig::default()
        };
        let record = simulate(&config).unwrap();
        let manual = apply_dead_time(
            &route_and_detect(&generate_pairs(&config).unwrap(), &config).unwrap(),
            config.dead_time,
        );
        assert_eq!(record.tags(), manual.tags());
        assert_eq!(record.meta()[META_CONFIG_HASH], config.hash());
        assert_eq!(record.meta()[META_SEED], "21");
        assert_eq!(record.meta()[META_CREATION_MODE], "simulated");
        assert_eq!(simulate(&config).unwrap(), record);
    }

    #[test]
    fn all_zero_rates_simulate_empty() {
        let config = quiet(0.0);
        assert!(simulate(&config).unwrap().is_empty());
        assert!(generate_coherent_control(0.0, 0.0, 0.0, 1_000_000, 1)
            .unwrap()
            .is_empty());
        assert!(generate_coherent_control(-1.0, 0.0, 0.0, 10, 1).is_err());
    }

    #[test]
    fn coherent_control_counts_and_independence() {
        let record =
            generate_coherent_control(1e5, 1e5, 0.0, 1_000_000_000_000, 17).unwrap();
        for channel in [ChannelId::A, ChannelId::B] {
            let n = record.channel_count(channel) as f64;
            // 5 sigma of Poisson(1e5)
            assert!((n - 1e5).abs() < 5.0 * 1e5f64.sqrt(), "{channel}: {n}");
        }
        // 1e4 consecutive bins of 100 us: mean 10 counts per channel
        let tau = 100_000_000u64;
        let pairs: Vec<(f64, f64)> = (0..10_000u64)
            .map(|k| {
                let c = record.count_in(k * tau, (k + 1) * tau);
                (c[0] as f64, c[1] as f64)
            })
            .collect();
        let n = pairs.len() as f64;
        let (ma, mb) = pairs
            .iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
        let cov = pairs.iter().map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
        let (va, vb) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
            (a + (x - ma).powi(2) / (n - 1.0), b + (y - mb).powi(2) / (n - 1.0))
        });
        // standard error of the sample covariance for independent variables
        let se = (va * vb / n).sqrt();
        assert!(cov.abs() < 5.0 * se, "cov {cov}, se {se}");
    }

    #[test]
    fn efficiency_monotone() {
        let mut previous: f64 = -1.0;
        for eta in [0.0, 0.1, 0.2, 0.3, 0.4, 0.5] {
            let config = SourceConfig {
                eta_a: eta,
                eta_b: 0.0,
                duration: 1_000_000_000,
                seed: 2,
                ..quiet(1e7)
            };
            let record = simulate(&config).unwrap();
            let n = record.channel_count(ChannelId::A) as f64;
            // allow 3 sigma of downward noise between grid points
            assert!(n >= previous - 3.0 * previous.max(1.0).sqrt(), "eta {eta}: {n} < {previous}");
            previous = n;
        }
    }

    #[test]
    fn kv_round_trip_and_hash() {
        let config = SourceConfig {
            pair_rate: 1.25e6,
            pair_delay: -300,
            seed: 99,
            ..SourceConfig::default()
        };
        let text = config.to_kv_text();
        let back = SourceConfig::from_kv_text(&text).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.hash(), config.hash());
        assert_eq!(config.hash().len(), 16);
        let mut keys: Vec<_> = config.to_pairs().into_iter().map(|(k, _)| k).collect();
        keys.sort_unstable();
        let mut expected = CONFIG_KEYS.to_vec();
        expected.sort_unstable();
        assert_eq!(keys, expected);
    }

    #[test]
    fn kv_parsing_errors() {
        assert!(SourceConfig::from_kv_text("# comment\n\nduration=1e9\n").is_ok());
        let c = SourceConfig::from_kv_text("pair_rate = 3e6  # pairs/s\nseed = 4 #\n").unwrap();
        assert_eq!((c.pair_rate, c.seed), (3e6, 4));
        assert!(SourceConfig::from_kv_text("nonsense").is_err());
        assert!(SourceConfig::from_kv_text("colour=blue").is_err());
        assert!(SourceConfig::from_kv_text("dead_time=-5").is_err());
        assert!(SourceConfig::from_kv_text("eta_a=0.9\neta_b=0.9").is_err());
    }

    #[test]
    fn detected_rate_inverse() {
        let base = SourceConfig::default();
        for anchor in PUMP_ANCHORS {
            let target = anchor.detected_rate_mcps * 1e6;
            let config = config_for_detected_rate(&base, target).unwrap();
            let achieved = expected_detected_rate(&config, ChannelId::A)
                + expected_detected_rate(&config, ChannelId::B);
            assert!((achieved - target).abs() < 1e-6 * target, "{achieved} vs {target}");
        }
        assert!(config_for_detected_rate(&base, 100e6).is_err());
        assert_eq!(anchor_for(16.0, Fiber::MultiMode).unwrap().detected_rate_mcps, 17.2);
        assert!(anchor_for(16.0, Fiber::SingleMode).is_none());
    }

    #[test]
    fn detected_rate_matches_simulation() {
        let base = SourceConfig {
            duration: 20_000_000_000,
            seed: 8,
            ..SourceConfig::default()
        };
        let config = config_for_detected_rate(&base, 17.2e6).unwrap();
        let record = simulate(&config).unwrap();
        let rate = (record.channel_count(ChannelId::A) + record.channel_count(ChannelId::B)) as f64
            / config.duration_s();
        assert!((rate - 17.2e6).abs() < 0.02 * 17.2e6, "{rate}");
    }

    fn arb_record() -> impl Strategy<Value = TagRecord> {
        prop::collection::vec((0u8..3, 0u64..200_000), 0..300).prop_map(|raw| {
            let tags = raw
                .into_iter()
                .map(|(c, t)| TimeTag::new(ChannelId::from_index(c).unwrap(), t))
                .collect();
            TagRecord::from_unsorted(tags, 200_000).unwrap()
        })
    }

    proptest! {
        #[test]
        fn dead_time_exclusion_and_thinning(record in arb_record(), dead_time in 0u64..30_000) {
            let out = apply_dead_time(&record, dead_time);
            for channel in ChannelId::ALL {
                let times = out.channel_times(channel);
                prop_assert!(times.windows(2).all(|w| w[1] - w[0] >= dead_time));
            }
            let mut input = record.tags().iter();
            for tag in out.tags() {
                prop_assert!(input.any(|t| t == tag), "not a subsequence");
            }
        }
    }
}
