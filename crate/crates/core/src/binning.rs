//! Turning a tag stream into per-bin channel counts.
//!
//! All intervals are half-open `[start, end)`: a tag sitting exactly on a
//! boundary belongs to the later bin, and a backward-grown window never
//! contains its anchor.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{BinCounts, TagRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> i64 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinningScheme {
    /// `n_bins` adjacent bins of width `tau` starting at `offset`.
    Consecutive { tau: u64, n_bins: usize, offset: u64 },
    /// Windows `tau, 2 tau, .., n_steps tau` grown from `anchor`.
    Anchored {
        tau: u64,
        anchor: u64,
        direction: Direction,
        n_steps: usize,
    },
}

impl BinningScheme {
    pub fn apply(&self, record: &TagRecord) -> Result<Vec<BinCounts>> {
        match *self {
            BinningScheme::Consecutive {
                tau,
                n_bins,
                offset,
            } => bin_consecutive(record, tau, n_bins, offset),
            BinningScheme::Anchored {
                tau,
                anchor,
                direction,
                n_steps,
            } => bin_anchored(record, anchor, tau, n_steps, direction),
        }
    }
}

/// How bins are drawn from a record for estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    /// Disjoint bins at random positions.
    #[default]
    Random,
    /// Adjacent bins from the start of the record.
    Consecutive,
}

fn check_range(start: i128, end: i128, duration: u64) -> Result<()> {
    if start < 0 || end > duration as i128 {
        return Err(Error::RangeExceedsRecord {
            start,
            end,
            duration,
        });
    }
    Ok(())
}

/// Bin `k` covers `[offset + k tau, offset + (k + 1) tau)`.
pub fn bin_consecutive(
    record: &TagRecord,
    tau: u64,
    n_bins: usize,
    offset: u64,
) -> Result<Vec<BinCounts>> {
    if tau == 0 {
        return Err(Error::ZeroTau);
    }
    let end = offset as i128 + n_bins as i128 * tau as i128;
    check_range(offset as i128, end, record.duration())?;

    let mut counts = vec![[0u64; 3]; n_bins];
    let end = end as u64;
    let first = record.lower_bound(offset);
    for tag in record.tags()[first..]
        .iter()
        .take_while(|t| t.timestamp < end)
    {
        let k = ((tag.timestamp - offset) / tau) as usize;
        counts[k][tag.channel.index()] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| BinCounts::from_array(c, k as i64, tau))
        .collect())
}

/// Cumulative counts in windows grown from `anchor`. Step `k` (1-based)
/// covers `[anchor, anchor + k tau)` forward or `[anchor - k tau, anchor)`
/// backward; the returned bin has width `k tau` and index `+k` or `-k`.
pub fn bin_anchored(
    record: &TagRecord,
    anchor: u64,
    tau: u64,
    n_steps: usize,
    direction: Direction,
) -> Result<Vec<BinCounts>> {
    if tau == 0 {
        return Err(Error::ZeroTau);
    }
    let reach = n_steps as i128 * tau as i128;
    let (lo, hi) = match direction {
        Direction::Forward => (anchor as i128, anchor as i128 + reach),
        Direction::Backward => (anchor as i128 - reach, anchor as i128),
    };
    check_range(lo, hi, record.duration())?;

    let mut out = Vec::with_capacity(n_steps);
    let mut running = [0u64; 3];
    for k in 1..=n_steps as u64 {
        // only the newly added slice needs counting
        let (start, end) = match direction {
            Direction::Forward => (anchor + (k - 1) * tau, anchor + k * tau),
            Direction::Backward => (anchor - k * tau, anchor - (k - 1) * tau),
        };
        let slice = record.count_in(start, end);
        for (total, add) in running.iter_mut().zip(slice) {
            *total += add;
        }
        out.push(BinCounts::from_array(
            running,
            direction.sign() * k as i64,
            k * tau,
        ));
    }
    Ok(out)
}

/// Start times of `n_samples` disjoint bins of width `tau`, placed uniformly
/// at random inside `[0, duration)` and returned in ascending order.
pub fn sample_starts(duration: u64, tau: u64, n_samples: usize, seed: u64) -> Result<Vec<u64>> {
    if tau == 0 {
        return Err(Error::ZeroTau);
    }
    let span = n_samples as u128 * tau as u128;
    if span > duration as u128 {
        return Err(Error::RecordTooShort {
            duration,
            n_samples,
            tau,
        });
    }
    // Sorted uniform slack positions; shifting the i-th by i * tau turns
    // them into non-overlapping bins with uniformly random placement.
    let slack = duration - span as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps: Vec<u64> = (0..n_samples).map(|_| rng.random_range(0..=slack)).collect();
    gaps.sort_unstable();
    Ok(gaps
        .into_iter()
        .enumerate()
        .map(|(i, g)| g + i as u64 * tau)
        .collect())
}

/// Counts in `n_samples` disjoint randomly placed bins of width `tau`.
pub fn sample_bins(
    record: &TagRecord,
    tau: u64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<BinCounts>> {
    let starts = sample_starts(record.duration(), tau, n_samples, seed)?;
    Ok(starts
        .into_iter()
        .enumerate()
        .map(|(i, start)| BinCounts::from_array(record.count_in(start, start + tau), i as i64, tau))
        .collect())
}

/// Draws bins for estimation according to `sampling`.
pub fn draw_bins(
    record: &TagRecord,
    tau: u64,
    n_samples: usize,
    sampling: Sampling,
    seed: u64,
) -> Result<Vec<BinCounts>> {
    match sampling {
        Sampling::Random => sample_bins(record, tau, n_samples, seed),
        Sampling::Consecutive => bin_consecutive(record, tau, n_samples, 0),
    }
}

pub fn write_bins_csv<W: Write>(bins: &[BinCounts], mut out: W) -> Result<()> {
    writeln!(out, "bin_index,tau_ps,c_a,c_b,c_c")?;
    for b in bins {
        writeln!(out, "{},{},{},{},{}", b.bin_index, b.tau, b.c_a, b.c_b, b.c_c)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChannelId, TimeTag};
    use crate::sim::generate_coherent_control;
    use proptest::prelude::*;

    fn rec(tags: &[(ChannelId, u64)], duration: u64) -> TagRecord {
        TagRecord::from_unsorted(
            tags.iter().map(|&(c, t)| TimeTag::new(c, t)).collect(),
            duration,
        )
        .unwrap()
    }

    fn counts(b: &BinCounts) -> (u64, u64, u64) {
        (b.c_a, b.c_b, b.c_c)
    }

    #[test]
    fn consecutive_empty_record() {
        let bins = bin_consecutive(&TagRecord::empty(1000), 100, 10, 0).unwrap();
        assert_eq!(bins.len(), 10);
        assert!(bins.iter().all(|b| b.total() == 0 && b.tau == 100));
    }

    #[test]
    fn consecutive_interval_membership() {
        let record = rec(
            &[(ChannelId::A, 100), (ChannelId::A, 250), (ChannelId::B, 150)],
            1000,
        );
        let bins = bin_consecutive(&record, 200, 2, 0).unwrap();
        assert_eq!(counts(&bins[0]), (1, 1, 0));
        assert_eq!(counts(&bins[1]), (1, 0, 0));
        assert_eq!(bins[1].bin_index, 1);
    }

    #[test]
    fn boundary_tag_goes_to_next_bin() {
        let record = rec(&[(ChannelId::C, 200)], 1000);
        let bins = bin_consecutive(&record, 200, 2, 0).unwrap();
        assert_eq!(counts(&bins[0]), (0, 0, 0));
        assert_eq!(counts(&bins[1]), (0, 0, 1));
    }

    #[test]
    fn consecutive_with_offset_and_range_errors() {
        let record = rec(&[(ChannelId::A, 99), (ChannelId::A, 100)], 1000);
        let bins = bin_consecutive(&record, 50, 2, 100).unwrap();
        assert_eq!(bins[0].c_a, 1);
        assert!(matches!(
            bin_consecutive(&record, 100, 11, 0),
            Err(Error::RangeExceedsRecord { .. })
        ));
        assert!(bin_consecutive(&record, 100, 10, 0).is_ok());
        assert!(matches!(bin_consecutive(&record, 0, 1, 0), Err(Error::ZeroTau)));
    }

    #[test]
    fn anchored_examples() {
        let anchor = 5_000;
        let tau = 1_000;
        let empty = rec(&[(ChannelId::A, 100)], 20_000);
        for dir in [Direction::Forward, Direction::Backward] {
            let bins = bin_anchored(&empty, anchor, tau, 4, dir).unwrap();
            assert!(bins.iter().all(|b| b.total() == 0));
        }

        let one = rec(&[(ChannelId::A, anchor + tau / 2)], 20_000);
        let bins = bin_anchored(&one, anchor, tau, 5, Direction::Forward).unwrap();
        assert!(bins.iter().all(|b| b.c_a == 1));
        assert_eq!(bins[2].tau, 3 * tau);
        assert_eq!(bins[2].bin_index, 3);

        let at_anchor = rec(&[(ChannelId::B, anchor)], 20_000);
        let back = bin_anchored(&at_anchor, anchor, tau, 5, Direction::Backward).unwrap();
        assert!(back.iter().all(|b| b.c_b == 0));
        assert_eq!(back[0].bin_index, -1);
        let fwd = bin_anchored(&at_anchor, anchor, tau, 1, Direction::Forward).unwrap();
        assert_eq!(fwd[0].c_b, 1);
    }

    #[test]
    fn anchored_bounds() {
        let record = TagRecord::empty(10_000);
        assert!(bin_anchored(&record, 5_000, 1_000, 5, Direction::Forward).is_ok());
        assert!(bin_anchored(&record, 5_000, 1_000, 6, Direction::Forward).is_err());
        assert!(bin_anchored(&record, 5_000, 1_000, 5, Direction::Backward).is_ok());
        assert!(bin_anchored(&record, 5_000, 1_000, 6, Direction::Backward).is_err());
    }

    #[test]
    fn scheme_dispatch() {
        let record = rec(&[(ChannelId::A, 10)], 100);
        let scheme = BinningScheme::Consecutive {
            tau: 50,
            n_bins: 2,
            offset: 0,
        };
        assert_eq!(scheme.apply(&record).unwrap()[0].c_a, 1);
        let scheme = BinningScheme::Anchored {
            tau: 10,
            anchor: 50,
            direction: Direction::Backward,
            n_steps: 5,
        };
        assert_eq!(scheme.apply(&record).unwrap()[4].c_a, 1);
    }

    #[test]
    fn sampling_zero_and_too_short() {
        let record = TagRecord::empty(1000);
        assert!(sample_bins(&record, 10, 0, 1).unwrap().is_empty());
        assert!(sample_bins(&record, 10, 100, 1).is_ok());
        assert!(matches!(
            sample_bins(&record, 10, 101, 1),
            Err(Error::RecordTooShort { .. })
        ));
    }

    #[test]
    fn sampled_mean_matches_rate() {
        let rate = 1e7;
        let tau = 200_000u64; // mean 2 counts per bin
        let record = generate_coherent_control(rate, rate, 0.0, 2_000_000_000, 31).unwrap();
        let bins = sample_bins(&record, tau, 1000, 4).unwrap();
        let mean = bins.iter().map(|b| b.c_a as f64).sum::<f64>() / 1000.0;
        let lambda = rate * tau as f64 * 1e-12;
        assert!((mean - lambda).abs() < 5.0 * (lambda / 1000.0).sqrt(), "{mean}");
    }

    proptest! {
        #[test]
        fn sampled_bins_are_disjoint(duration in 1u64..1_000_000, tau in 1u64..5_000,
                                     n in 0usize..200, seed in any::<u64>()) {
            prop_assume!(n as u64 * tau <= duration);
            let starts = sample_starts(duration, tau, n, seed).unwrap();
            prop_assert_eq!(starts.len(), n);
            prop_assert!(starts.windows(2).all(|w| w[0] + tau <= w[1]));
            if let Some(&last) = starts.last() {
                prop_assert!(last + tau <= duration);
            }
        }

        #[test]
        fn consecutive_tiling_conserves_counts(
            raw in prop::collection::vec((0u8..3, 0u64..10_000), 0..200),
            tau in 1u64..500,
        ) {
            let n_bins = (10_000 / tau) as usize;
            let duration = n_bins as u64 * tau;
            let tags = raw.into_iter()
                .filter(|&(_, t)| t < duration)
                .map(|(c, t)| TimeTag::new(ChannelId::from_index(c).unwrap(), t))
                .collect();
            let record = TagRecord::from_unsorted(tags, duration).unwrap();
            let bins = bin_consecutive(&record, tau, n_bins, 0).unwrap();
            for ch in ChannelId::ALL {
                let summed: u64 = bins.iter().map(|b| [b.c_a, b.c_b, b.c_c][ch.index()]).sum();
                prop_assert_eq!(summed, record.channel_count(ch) as u64);
            }
        }

        #[test]
        fn anchored_counts_monotone(
            raw in prop::collection::vec((0u8..3, 0u64..20_000), 0..200),
            anchor in 5_000u64..15_000, tau in 1u64..1_000, forward in any::<bool>(),
        ) {
            let tags = raw.into_iter()
                .map(|(c, t)| TimeTag::new(ChannelId::from_index(c).unwrap(), t))
                .collect();
            let record = TagRecord::from_unsorted(tags, 20_000).unwrap();
            let dir = if forward { Direction::Forward } else { Direction::Backward };
            let bins = bin_anchored(&record, anchor, tau, 5, dir).unwrap();
            let monotone = bins.windows(2).all(|w| {
                w[0].c_a <= w[1].c_a && w[0].c_b <= w[1].c_b && w[0].c_c <= w[1].c_c
            });
            prop_assert!(monotone);
            // each step equals a direct count over its window
            for (k, b) in bins.iter().enumerate() {
                let width = (k as u64 + 1) * tau;
                let c = if forward {
                    record.count_in(anchor, anchor + width)
                } else {
                    record.count_in(anchor - width, anchor)
                };
                prop_assert_eq!([b.c_a, b.c_b, b.c_c], c);
            }
        }

        #[test]
        fn boundary_tags_agree_across_schemes(k in 1u64..9, tau in 1u64..1_000) {
            // tag exactly at a bin boundary
            let t = k * tau;
            let record = rec(&[(ChannelId::A, t)], 10 * tau);
            let bins = bin_consecutive(&record, tau, 10, 0).unwrap();
            prop_assert_eq!(bins[k as usize].c_a, 1);
            prop_assert_eq!(bins[k as usize - 1].c_a, 0);
            let fwd = bin_anchored(&record, t, tau, 1, Direction::Forward).unwrap();
            prop_assert_eq!(fwd[0].c_a, 1);
            let back = bin_anchored(&record, t, tau, 1, Direction::Backward).unwrap();
            prop_assert_eq!(back[0].c_a, 0);
            let back = bin_anchored(&record, t + tau, tau, 1, Direction::Backward).unwrap();
            prop_assert_eq!(back[0].c_a, 1);
        }
    }
}
