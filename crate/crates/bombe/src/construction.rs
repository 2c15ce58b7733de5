//! Code construction: unified Monte Carlo reliability ranking across all
//! levels and bit lanes, frozen-set selection for a target rate, and the
//! asymptotic capacity-rule allocator for comparison.
//!
//! Reliability is estimated by genie-aided rate-0 successive cancellation:
//! all-zero codewords are modulated, sent over the AWGN channel, and decoded
//! with every position frozen, counting how often each free decision would
//! have been wrong. Fewer errors = more reliable. Estimation runs over an
//! SNR grid; the ranking for a given rate is taken at the grid point whose
//! aggregate estimated capacity is closest to that rate, with neighboring
//! points breaking ties.

use std::io::{BufRead, Write};

use crate::channel::{frame_rng, GaussianStream, StreamDomain};
use crate::codec::{demod_full, marginalize_level};
use crate::constellation::ShapedConstellation;
use crate::crc::CrcSpec;
use crate::error::{Error, Result};
use crate::parallel::map_frames;
use crate::pmf::{KernelMode, SymbolPmf};
use crate::polar::{genie_sc_zero, PolarLevelCode};

/// One ranked bit position with its aggregate genie error count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeqEntry {
    pub level: usize,
    pub symbol: usize,
    pub lane: usize,
    pub errors: u64,
}

/// A unified reliability ranking over all `s * n_l * d` bit positions,
/// most-reliable-first.
#[derive(Debug, Clone)]
pub struct ReliabilitySequence {
    pub n_l: usize,
    pub d: usize,
    pub levels: usize,
    /// Noise standard deviation of the grid point the ranking was taken at.
    pub design_sigma: f64,
    pub trials: u64,
    pub entries: Vec<SeqEntry>,
}

impl ReliabilitySequence {
    pub fn position_count(&self) -> usize {
        self.levels * self.n_l * self.d
    }

    /// Per-level ranking `(symbol, lane)`, most-reliable-first, for payload
    /// placement inside [`PolarLevelCode`].
    pub fn level_ranking(&self, level: usize) -> Vec<(usize, usize)> {
        self.entries
            .iter()
            .filter(|e| e.level == level)
            .map(|e| (e.symbol, e.lane))
            .collect()
    }

    /// Writes the sequence as text, one line per
    /// `level symbol lane rank errors trials` (rank 0 = most reliable).
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# design_sigma {}", self.design_sigma)?;
        for (rank, e) in self.entries.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {rank} {} {}",
                e.level, e.symbol, e.lane, e.errors, self.trials
            )?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(r: R) -> Result<ReliabilitySequence> {
        let mut design_sigma = f64::NAN;
        let mut rows: Vec<(usize, SeqEntry)> = Vec::new();
        let mut trials = 0u64;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                if fields.len() == 2 && fields[0] == "design_sigma" {
                    design_sigma = fields[1].parse().map_err(|_| Error::Parse(line.into()))?;
                }
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(Error::Parse(format!("bad sequence line: {line}")));
            }
            let parse = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| Error::Parse(line.into()))
            };
            let rank = parse(f[3])?;
            trials = f[5].parse().map_err(|_| Error::Parse(line.into()))?;
            rows.push((
                rank,
                SeqEntry {
                    level: parse(f[0])?,
                    symbol: parse(f[1])?,
                    lane: parse(f[2])?,
                    errors: f[4].parse().map_err(|_| Error::Parse(line.into()))?,
                },
            ));
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty reliability sequence".into()));
        }
        rows.sort_by_key(|&(rank, _)| rank);
        let entries: Vec<SeqEntry> = rows.into_iter().map(|(_, e)| e).collect();
        let levels = entries.iter().map(|e| e.level).max().unwrap() + 1;
        let n_l = entries.iter().map(|e| e.symbol).max().unwrap() + 1;
        let d = entries.iter().map(|e| e.lane).max().unwrap() + 1;
        if entries.len() != levels * n_l * d {
            return Err(Error::Parse(
                "sequence is not a permutation of all positions".into(),
            ));
        }
        Ok(ReliabilitySequence {
            n_l,
            d,
            levels,
            design_sigma,
            trials,
            entries,
        })
    }
}

/// Raw genie error counts over an SNR (sigma) grid.
#[derive(Debug, Clone)]
pub struct ReliabilityGrid {
    pub n_l: usize,
    pub d: usize,
    pub levels: usize,
    pub sigmas: Vec<f64>,
    /// Trials per grid point.
    pub trials: u64,
    /// `errors[grid_point][(level * n_l + symbol) * d + lane]`.
    pub errors: Vec<Vec<u64>>,
}

/// Flat index of a bit position in the grid layout.
pub fn position_index(level: usize, symbol: usize, lane: usize, n_l: usize, d: usize) -> usize {
    (level * n_l + symbol) * d + lane
}

/// Genie error counts for one multilevel configuration at one noise level.
///
/// Transmits all-zero codewords (the zero coset representative repeated
/// `n_l` times) and runs one genie SC pass per level on the conditionally
/// marginalized PMFs, with the true (all-zero) lower-level hypothesis.
pub fn genie_error_counts(
    constellation: &ShapedConstellation,
    n_l: usize,
    sigma: f64,
    frames: std::ops::Range<u64>,
    master_seed: u64,
    mode: KernelMode,
) -> Vec<u64> {
    let d = constellation.dimension();
    let s = constellation.levels() as usize;
    let zero_point = constellation.modulate(&vec![0u64; d]).to_vec();
    let partials = map_frames(frames, |frame| {
        let mut noise =
            GaussianStream::new(frame_rng(master_seed, frame, StreamDomain::Construction));
        let rx: Vec<Vec<f64>> = (0..n_l)
            .map(|_| {
                zero_point
                    .iter()
                    .map(|&p| p + sigma * noise.next_standard())
                    .collect()
            })
            .collect();
        let full: Vec<Vec<f64>> = rx
            .iter()
            .map(|mu| demod_full(constellation, mu, sigma))
            .collect();
        let mut wrong = Vec::with_capacity(s * n_l * d);
        for level in 0..s {
            let h = vec![0u8; level];
            let pmfs: Vec<SymbolPmf> = full
                .iter()
                .map(|f| {
                    marginalize_level(constellation, f, level as u32, &h, mode)
                        .unwrap_or_else(|_| SymbolPmf::uniform(d))
                })
                .collect();
            wrong.extend(genie_sc_zero(n_l, d, &pmfs, mode));
        }
        wrong
    });
    let mut counts = vec![0u64; s * n_l * d];
    for wrong in partials {
        for (c, w) in counts.iter_mut().zip(wrong) {
            *c += w as u64;
        }
    }
    counts
}

/// Monte Carlo reliability estimation over a sigma grid.
pub fn estimate_reliabilities(
    constellation: &ShapedConstellation,
    n_l: usize,
    sigmas: &[f64],
    trials: u64,
    master_seed: u64,
    mode: KernelMode,
) -> Result<ReliabilityGrid> {
    if trials == 0 {
        return Err(Error::InvalidParameter("zero construction trials".into()));
    }
    if sigmas.is_empty() || sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
        return Err(Error::InvalidParameter(
            "sigma grid must be non-empty, finite and positive".into(),
        ));
    }
    let errors = sigmas
        .iter()
        .enumerate()
        .map(|(g, &sigma)| {
            let start = g as u64 * trials;
            genie_error_counts(constellation, n_l, sigma, start..start + trials, master_seed, mode)
        })
        .collect();
    Ok(ReliabilityGrid {
        n_l,
        d: constellation.dimension(),
        levels: constellation.levels() as usize,
        sigmas: sigmas.to_vec(),
        trials,
        errors,
    })
}

impl ReliabilityGrid {
    /// Extracts the ranking for a target spectral efficiency (coded bits per
    /// real dimension, `s * R`): errors at the grid point whose aggregate
    /// estimated capacity is closest to the target decide the order, errors
    /// at the neighboring grid points break ties, and remaining ties fall to
    /// (higher level, higher symbol, higher lane) first.
    pub fn sequence_for_rate(
        &self,
        constellation: &ShapedConstellation,
        bits_per_dim: f64,
        capacity_samples: u64,
        master_seed: u64,
        mode: KernelMode,
    ) -> Result<ReliabilitySequence> {
        let mut best = 0usize;
        let mut best_gap = f64::INFINITY;
        for (g, &sigma) in self.sigmas.iter().enumerate() {
            let rates = capacity_rule_rates(constellation, sigma, capacity_samples, master_seed, mode)?;
            let aggregate: f64 = rates.iter().sum();
            let gap = (aggregate - bits_per_dim).abs();
            if gap < best_gap {
                best_gap = gap;
                best = g;
            }
        }
        Ok(self.sequence_at(best))
    }

    /// Ranking taken directly at grid point `g`.
    pub fn sequence_at(&self, g: usize) -> ReliabilitySequence {
        assert!(g < self.sigmas.len());
        let neighbor_errors = |pos: usize| -> u64 {
            let mut acc = 0;
            if g > 0 {
                acc += self.errors[g - 1][pos];
            }
            if g + 1 < self.sigmas.len() {
                acc += self.errors[g + 1][pos];
            }
            acc
        };
        let mut entries: Vec<SeqEntry> = (0..self.levels)
            .flat_map(|level| {
                (0..self.n_l).flat_map(move |symbol| {
                    (0..self.d).map(move |lane| SeqEntry {
                        level,
                        symbol,
                        lane,
                        errors: 0,
                    })
                })
            })
            .collect();
        for e in entries.iter_mut() {
            e.errors = self.errors[g][position_index(e.level, e.symbol, e.lane, self.n_l, self.d)];
        }
        entries.sort_by(|a, b| {
            let pa = position_index(a.level, a.symbol, a.lane, self.n_l, self.d);
            let pb = position_index(b.level, b.symbol, b.lane, self.n_l, self.d);
            a.errors
                .cmp(&b.errors)
                .then(neighbor_errors(pa).cmp(&neighbor_errors(pb)))
                .then(b.level.cmp(&a.level))
                .then(b.symbol.cmp(&a.symbol))
                .then(b.lane.cmp(&a.lane))
        });
        ReliabilitySequence {
            n_l: self.n_l,
            d: self.d,
            levels: self.levels,
            design_sigma: self.sigmas[g],
            trials: self.trials,
            entries,
        }
    }
}

/// Per-level frozen masks unfreezing the `unfrozen_total` most reliable
/// positions across all levels (payload plus CRC bits).
pub fn select_frozen(seq: &ReliabilitySequence, unfrozen_total: usize) -> Result<Vec<Vec<bool>>> {
    if unfrozen_total > seq.position_count() {
        return Err(Error::Infeasible(format!(
            "cannot unfreeze {unfrozen_total} of {} positions",
            seq.position_count()
        )));
    }
    let mut masks = vec![vec![true; seq.n_l * seq.d]; seq.levels];
    for e in seq.entries.iter().take(unfrozen_total) {
        masks[e.level][e.symbol * seq.d + e.lane] = false;
    }
    Ok(masks)
}

/// Per-level frozen masks with fixed per-level unfrozen counts, each level
/// selecting its own most reliable positions.
pub fn select_frozen_per_level(
    seq: &ReliabilitySequence,
    counts: &[usize],
) -> Result<Vec<Vec<bool>>> {
    if counts.len() != seq.levels {
        return Err(Error::LengthMismatch {
            expected: seq.levels,
            got: counts.len(),
        });
    }
    let mut masks = Vec::with_capacity(seq.levels);
    for (level, &count) in counts.iter().enumerate() {
        if count > seq.n_l * seq.d {
            return Err(Error::Infeasible(format!(
                "level {level}: cannot unfreeze {count} of {} positions",
                seq.n_l * seq.d
            )));
        }
        let mut mask = vec![true; seq.n_l * seq.d];
        for (symbol, lane) in seq.level_ranking(level).into_iter().take(count) {
            mask[symbol * seq.d + lane] = false;
        }
        masks.push(mask);
    }
    Ok(masks)
}

/// CRC choice per level: CRC-11 while the level's information payload stays
/// at or below 200 bits, CRC-24C above, none when the level is too small to
/// carry a CRC at all.
pub fn crc_for_unfrozen(unfrozen: usize) -> Option<CrcSpec> {
    if unfrozen <= CrcSpec::CRC11.width {
        None
    } else if unfrozen <= 200 + CrcSpec::CRC11.width {
        Some(CrcSpec::CRC11)
    } else {
        Some(CrcSpec::CRC24C)
    }
}

/// Builds the per-level polar codes for a target number of transmitted
/// payload bits (info + CRC), using the unified ranking both for the frozen
/// sets and for payload placement.
pub fn build_level_codes(
    seq: &ReliabilitySequence,
    unfrozen_total: usize,
    with_crc: bool,
) -> Result<Vec<PolarLevelCode>> {
    let masks = select_frozen(seq, unfrozen_total)?;
    masks_to_codes(seq, masks, with_crc)
}

/// As [`build_level_codes`] but with a per-level allocation (capacity rule).
pub fn build_level_codes_per_level(
    seq: &ReliabilitySequence,
    counts: &[usize],
    with_crc: bool,
) -> Result<Vec<PolarLevelCode>> {
    let masks = select_frozen_per_level(seq, counts)?;
    masks_to_codes(seq, masks, with_crc)
}

pub fn masks_to_codes(
    seq: &ReliabilitySequence,
    masks: Vec<Vec<bool>>,
    with_crc: bool,
) -> Result<Vec<PolarLevelCode>> {
    masks
        .into_iter()
        .enumerate()
        .map(|(level, mask)| {
            let unfrozen = mask.iter().filter(|&&f| !f).count();
            let crc = if with_crc { crc_for_unfrozen(unfrozen) } else { None };
            let ranking = seq.level_ranking(level);
            PolarLevelCode::new(seq.n_l, seq.d, mask, Some(&ranking), crc)
        })
        .collect()
}

/// Monte Carlo estimate of each level's conditional mutual information under
/// multistage decoding, `I^(i) = d + E[log2 p^(i)(true symbol)]`, returned
/// normalized by the `d` bits a level carries per symbol (so each value lies
/// in `[0, 1]`).
pub fn capacity_rule_rates(
    constellation: &ShapedConstellation,
    sigma: f64,
    samples: u64,
    master_seed: u64,
    mode: KernelMode,
) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "sigma must be positive and finite, got {sigma}"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("zero capacity samples".into()));
    }
    let d = constellation.dimension();
    let s = constellation.levels() as usize;
    let n = constellation.num_points();
    let partials = map_frames(0..samples, |frame| {
        let mut rng = frame_rng(master_seed, frame, StreamDomain::Construction);
        use rand::Rng;
        let idx = rng.gen_range(0..n);
        let mut noise = GaussianStream::new(rng);
        let mu: Vec<f64> = constellation.points()[idx]
            .iter()
            .map(|&p| p + sigma * noise.next_standard())
            .collect();
        let full = demod_full(constellation, &mu, sigma);
        let mut logs = vec![0.0f64; s];
        let mut h = Vec::with_capacity(s);
        for (level, slot) in logs.iter_mut().enumerate() {
            let truth = constellation.level_residue(idx, level as u32);
            let p = match marginalize_level(constellation, &full, level as u32, &h, mode) {
                Ok(pmf) => pmf.values()[truth as usize],
                Err(_) => 0.0,
            };
            *slot = p.max(1e-300).log2();
            h.push(truth);
        }
        logs
    });
    let mut sums = vec![0.0f64; s];
    for logs in partials {
        for (acc, v) in sums.iter_mut().zip(logs) {
            *acc += v;
        }
    }
    Ok(sums
        .into_iter()
        .map(|sum| {
            let info = d as f64 + sum / samples as f64;
            (info / d as f64).clamp(0.0, 1.0)
        })
        .collect())
}

/// Noise level at which the summed capacity-rule rates match a target
/// spectral efficiency (coded bits per real dimension), found by bisection.
/// The same sample seed is reused at every candidate sigma so the estimated
/// curve is smooth and monotone.
pub fn design_sigma(
    constellation: &ShapedConstellation,
    bits_per_dim: f64,
    samples: u64,
    master_seed: u64,
    mode: KernelMode,
) -> Result<f64> {
    let s = constellation.levels() as f64;
    if !(bits_per_dim > 0.0 && bits_per_dim < s) {
        return Err(Error::InvalidParameter(format!(
            "bits per dimension must lie in (0, {s}), got {bits_per_dim}"
        )));
    }
    let aggregate = |sigma: f64| -> Result<f64> {
        let rates = capacity_rule_rates(constellation, sigma, samples, master_seed, mode)?;
        Ok(rates.iter().sum())
    };
    let mut lo = 1e-3;
    let mut hi = 0.25;
    while aggregate(hi)? > bits_per_dim {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Infeasible(
                "no sigma matches the target rate".into(),
            ));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if aggregate(mid)? > bits_per_dim {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;

    fn z1_constellation() -> ShapedConstellation {
        let lat = Lattice::integer(1);
        let dither = ShapedConstellation::default_dither(&lat, 2);
        ShapedConstellation::build(lat, 2, dither).unwrap()
    }

    fn d4_constellation() -> ShapedConstellation {
        let lat = Lattice::d4();
        let dither = ShapedConstellation::default_dither(&lat, 2);
        ShapedConstellation::build(lat, 2, dither).unwrap()
    }

    #[test]
    fn noiseless_ranking_is_tie_break_order() {
        let c = z1_constellation();
        let grid = estimate_reliabilities(&c, 8, &[1e-4], 4, 3, KernelMode::Exact).unwrap();
        assert!(grid.errors[0].iter().all(|&e| e == 0));
        let seq = grid.sequence_at(0);
        // All-zero error counts: pure (level desc, symbol desc, lane desc).
        let mut expect = Vec::new();
        for level in (0..2usize).rev() {
            for symbol in (0..8usize).rev() {
                expect.push((level, symbol, 0usize));
            }
        }
        let got: Vec<(usize, usize, usize)> = seq
            .entries
            .iter()
            .map(|e| (e.level, e.symbol, e.lane))
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn higher_level_is_more_reliable_at_moderate_snr() {
        let c = z1_constellation();
        let grid = estimate_reliabilities(&c, 16, &[0.45], 400, 7, KernelMode::Exact).unwrap();
        let seq = grid.sequence_at(0);
        let mean = |level: usize| -> f64 {
            let sum: u64 = seq
                .entries
                .iter()
                .filter(|e| e.level == level)
                .map(|e| e.errors)
                .sum();
            sum as f64 / 16.0
        };
        assert!(
            mean(1) < mean(0),
            "level 1 mean errors {} not below level 0 {}",
            mean(1),
            mean(0)
        );
    }

    #[test]
    fn capacity_limits() {
        let c = z1_constellation();
        let near_zero = capacity_rule_rates(&c, 1e-3, 2000, 11, KernelMode::Exact).unwrap();
        for r in &near_zero {
            assert!(*r > 0.999, "rate {r} at sigma -> 0");
        }
        let huge = capacity_rule_rates(&c, 1e3, 2000, 11, KernelMode::Exact).unwrap();
        for r in &huge {
            assert!(*r < 0.01, "rate {r} at sigma -> inf");
        }
    }

    #[test]
    fn capacity_is_monotone_and_level_ordered() {
        let c = z1_constellation();
        let sigmas = [1.6, 1.2, 0.9, 0.7, 0.55, 0.45, 0.35, 0.28, 0.22, 0.17];
        let mut prev = vec![0.0; 2];
        for &sigma in &sigmas {
            let rates = capacity_rule_rates(&c, sigma, 20_000, 13, KernelMode::Exact).unwrap();
            // Non-decreasing in SNR, with a small MC slack.
            for (r, p) in rates.iter().zip(&prev) {
                assert!(r + 0.01 >= *p, "rate dropped from {p} to {r} at sigma {sigma}");
            }
            // Level 1 sees the cleaner channel under multistage decoding.
            assert!(rates[1] + 0.01 >= rates[0], "levels out of order at sigma {sigma}");
            prev = rates;
        }
    }

    #[test]
    fn design_sigma_matches_target() {
        let c = z1_constellation();
        let target = 1.0;
        let sigma = design_sigma(&c, target, 20_000, 5, KernelMode::Exact).unwrap();
        let rates = capacity_rule_rates(&c, sigma, 20_000, 5, KernelMode::Exact).unwrap();
        let sum: f64 = rates.iter().sum();
        assert!((sum - target).abs() < 0.01, "matched {sum} vs {target}");
    }

    #[test]
    fn select_frozen_extremes() {
        let c = z1_constellation();
        let grid = estimate_reliabilities(&c, 8, &[0.5], 50, 1, KernelMode::Exact).unwrap();
        let seq = grid.sequence_at(0);
        let all = select_frozen(&seq, 16).unwrap();
        assert!(all.iter().flatten().all(|&f| !f));
        let none = select_frozen(&seq, 0).unwrap();
        assert!(none.iter().flatten().all(|&f| f));
        assert!(select_frozen(&seq, 17).is_err());
        let codes = build_level_codes(&seq, 16, false).unwrap();
        assert!(codes.iter().all(|code| (code.rate() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn build_level_codes_accounts_every_bit() {
        let c = d4_constellation();
        let grid = estimate_reliabilities(&c, 16, &[0.5], 100, 9, KernelMode::Exact).unwrap();
        let seq = grid.sequence_at(0);
        for unfrozen_total in [24usize, 64, 100] {
            let codes = build_level_codes(&seq, unfrozen_total, true).unwrap();
            let total: usize = codes.iter().map(|code| code.unfrozen_count()).sum();
            assert_eq!(total, unfrozen_total);
        }
    }

    #[test]
    fn crc_selection_thresholds() {
        assert_eq!(crc_for_unfrozen(0), None);
        assert_eq!(crc_for_unfrozen(11), None);
        assert_eq!(crc_for_unfrozen(12), Some(CrcSpec::CRC11));
        assert_eq!(crc_for_unfrozen(211), Some(CrcSpec::CRC11));
        assert_eq!(crc_for_unfrozen(212), Some(CrcSpec::CRC24C));
    }

    #[test]
    fn sequence_file_round_trip() {
        let c = z1_constellation();
        let grid = estimate_reliabilities(&c, 8, &[0.5], 60, 21, KernelMode::Exact).unwrap();
        let seq = grid.sequence_at(0);
        let mut buf = Vec::new();
        seq.save(&mut buf).unwrap();
        let loaded = ReliabilitySequence::load(&buf[..]).unwrap();
        assert_eq!(loaded.n_l, seq.n_l);
        assert_eq!(loaded.d, seq.d);
        assert_eq!(loaded.levels, seq.levels);
        assert_eq!(loaded.trials, seq.trials);
        assert!((loaded.design_sigma - seq.design_sigma).abs() < 1e-12);
        assert_eq!(loaded.entries, seq.entries);
    }

    #[test]
    fn ranking_is_stable_across_seeds() {
        // Two independent estimation runs should mostly agree on the
        // top-half membership.
        let c = z1_constellation();
        let top_half = |seed: u64| -> std::collections::HashSet<(usize, usize, usize)> {
            let grid = estimate_reliabilities(&c, 16, &[0.5], 1500, seed, KernelMode::Exact).unwrap();
            let seq = grid.sequence_at(0);
            seq.entries
                .iter()
                .take(16)
                .map(|e| (e.level, e.symbol, e.lane))
                .collect()
        };
        let a = top_half(101);
        let b = top_half(202);
        let overlap = a.intersection(&b).count();
        assert!(overlap >= 13, "top-half overlap only {overlap}/16");
    }

    #[test]
    fn capacity_allocation_hits_total() {
        let counts = capacity_rule_allocation(&[0.1, 0.9], 128, 1, 128);
        assert_eq!(counts.iter().sum::<usize>(), 128);
        assert!(counts[1] > counts[0]);
        let counts = capacity_rule_allocation(&[0.33, 0.66], 8, 4, 31);
        assert_eq!(counts.iter().sum::<usize>(), 31);
    }
}

/// Per-level unfrozen counts proportional to the capacity-rule rates,
/// rounded by largest remainder so the counts sum to `unfrozen_total`.
pub fn capacity_rule_allocation(
    rates: &[f64],
    n_l: usize,
    d: usize,
    unfrozen_total: usize,
) -> Vec<usize> {
    let cap = n_l * d;
    let total_rate: f64 = rates.iter().sum();
    let ideal: Vec<f64> = if total_rate > 0.0 {
        rates
            .iter()
            .map(|r| (r / total_rate) * unfrozen_total as f64)
            .collect()
    } else {
        vec![unfrozen_total as f64 / rates.len() as f64; rates.len()]
    };
    let mut counts: Vec<usize> = ideal.iter().map(|v| (v.floor() as usize).min(cap)).collect();
    let mut assigned: usize = counts.iter().sum();
    // Largest remainder first; capped levels drop out.
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.partial_cmp(&ra).unwrap().then(b.cmp(&a))
    });
    let mut i = 0;
    while assigned < unfrozen_total {
        let lvl = order[i % order.len()];
        if counts[lvl] < cap {
            counts[lvl] += 1;
            assigned += 1;
        }
        i += 1;
        if i > rates.len() * (unfrozen_total + 1) {
            break;
        }
    }
    counts
}
