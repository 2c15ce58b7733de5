//! Comparison schemes at equal spectral efficiency: BICM polar on
//! Gray-mapped 16-QAM, and MLC polar on 16-QAM realized as the scalar
//! (Z^2) instance of the core multilevel machinery.

use rand::seq::SliceRandom;

use crate::channel::{frame_rng, StreamDomain};
use crate::codec::DecodeResult;
use crate::constellation::ShapedConstellation;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::parallel::map_frames;
use crate::pmf::{KernelMode, SymbolPmf};
use crate::polar::{genie_sc_zero, PolarLevelCode, SclInput};

/// Gray-labeled 4-PAM rail: amplitude for `(msb, lsb)`, where the MSB is the
/// sign bit. Labels run 00, 01, 11, 10 across -1.5, -0.5, 0.5, 1.5.
pub fn gray_amplitude(msb: u8, lsb: u8) -> f64 {
    match (msb, lsb) {
        (0, 0) => -1.5,
        (0, 1) => -0.5,
        (1, 1) => 0.5,
        (1, 0) => 1.5,
        _ => panic!("bits must be 0 or 1"),
    }
}

/// The four rail amplitudes with their `(msb, lsb)` labels.
pub const PAM4_POINTS: [(f64, u8, u8); 4] = [
    (-1.5, 0, 0),
    (-0.5, 0, 1),
    (0.5, 1, 1),
    (1.5, 1, 0),
];

/// Exact per-bit posteriors for one received rail value: returns
/// `[pmf_msb, pmf_lsb]` with `pmf[b]` the posterior of bit value `b`,
/// computed by full summation over the four points (no max-log).
pub fn pam4_bit_posteriors(y: f64, sigma: f64) -> [[f64; 2]; 2] {
    let inv = 1.0 / (2.0 * sigma * sigma);
    // Max-subtraction keeps the exponentials in range at high SNR.
    let logw: Vec<f64> = PAM4_POINTS.iter().map(|&(a, _, _)| -(y - a) * (y - a) * inv).collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [[0.0f64; 2]; 2];
    for (i, &(_, msb, lsb)) in PAM4_POINTS.iter().enumerate() {
        let w = (logw[i] - max).exp();
        out[0][msb as usize] += w;
        out[1][lsb as usize] += w;
    }
    for pmf in out.iter_mut() {
        let s = pmf[0] + pmf[1];
        pmf[0] /= s;
        pmf[1] /= s;
    }
    out
}

/// Bit LLRs `ln(p(bit = 0) / p(bit = 1))` for one rail value, `[msb, lsb]`.
pub fn pam4_llrs(y: f64, sigma: f64) -> [f64; 2] {
    let p = pam4_bit_posteriors(y, sigma);
    [(p[0][0] / p[0][1]).ln(), (p[1][0] / p[1][1]).ln()]
}

/// BICM polar on Gray 16-QAM: one binary CA-SCL polar code of length `n_b`,
/// a seeded pseudorandom bit interleaver, and two independent 4-PAM rails
/// per complex symbol.
#[derive(Debug, Clone)]
pub struct BicmCode {
    code: PolarLevelCode,
    /// `interleaver[i]` is the rail-stream position of codeword bit `i`.
    interleaver: Vec<usize>,
}

impl BicmCode {
    pub fn new(code: PolarLevelCode, master_seed: u64) -> Result<Self> {
        if code.lanes() != 1 {
            return Err(Error::InvalidParameter(
                "BICM uses a binary (single-lane) polar code".into(),
            ));
        }
        if code.n_l() % 4 != 0 {
            return Err(Error::InvalidParameter(format!(
                "n_b = {} is not divisible by 4",
                code.n_l()
            )));
        }
        let interleaver = seeded_permutation(code.n_l(), master_seed);
        Ok(BicmCode { code, interleaver })
    }

    pub fn code(&self) -> &PolarLevelCode {
        &self.code
    }

    pub fn n_b(&self) -> usize {
        self.code.n_l()
    }

    pub fn payload_len(&self) -> usize {
        self.code.k_b()
    }

    /// Transmitted payload bits including CRC.
    pub fn k_b(&self) -> usize {
        self.code.unfrozen_count()
    }

    pub fn rate(&self) -> f64 {
        self.code.rate()
    }

    /// Coded bits per real dimension: 2 rail bits per dimension times `R`.
    pub fn bits_per_dim(&self) -> f64 {
        2.0 * self.rate()
    }

    /// Real dimensions per frame (`n_b / 2` rail uses).
    pub fn dims_per_frame(&self) -> usize {
        self.n_b() / 2
    }

    /// Mean rail energy per real dimension (4-PAM).
    pub fn es_per_dim(&self) -> f64 {
        1.25
    }

    /// Encodes, interleaves, and Gray-maps a payload onto `n_b / 2` rail
    /// amplitudes (two per complex 16-QAM symbol).
    pub fn encode(&self, payload: &[u8]) -> Result<Vec<f64>> {
        let cw = self.code.encode(payload)?;
        let mut stream = vec![0u8; self.n_b()];
        for (i, &bit) in cw.iter().enumerate() {
            stream[self.interleaver[i]] = bit;
        }
        Ok(stream
            .chunks_exact(2)
            .map(|pair| gray_amplitude(pair[0], pair[1]))
            .collect())
    }

    /// Per-codeword-bit posteriors, demapped and deinterleaved; shared by
    /// decoding and Monte Carlo construction.
    pub fn channel_pmfs(&self, received: &[f64], sigma: f64) -> Result<Vec<SymbolPmf>> {
        if received.len() != self.dims_per_frame() {
            return Err(Error::LengthMismatch {
                expected: self.dims_per_frame(),
                got: received.len(),
            });
        }
        let mut stream = vec![[0.5f64, 0.5]; self.n_b()];
        for (t, &y) in received.iter().enumerate() {
            let p = pam4_bit_posteriors(y, sigma);
            stream[2 * t] = p[0];
            stream[2 * t + 1] = p[1];
        }
        Ok((0..self.n_b())
            .map(|i| {
                let p = stream[self.interleaver[i]];
                SymbolPmf::from_weights(vec![p[0], p[1]]).expect("posteriors are normalized")
            })
            .collect())
    }

    pub fn decode(&self, received: &[f64], sigma: f64, list: usize) -> Result<DecodeResult> {
        let pmfs = self.channel_pmfs(received, sigma)?;
        let outcomes = self.code.decode_scl(
            &[SclInput {
                channel_pmfs: pmfs,
                initial_metric: 0.0,
                tag: 0,
            }],
            list,
            KernelMode::Exact,
        )?;
        let chosen = outcomes.iter().position(|o| o.crc_ok).unwrap_or(0);
        let o = &outcomes[chosen];
        Ok(DecodeResult {
            payload: o.info_bits.clone(),
            crc_ok: vec![o.crc_ok],
            all_crc_ok: o.crc_ok,
            metric: o.metric,
        })
    }
}

/// Fixed pseudorandom permutation derived from the master seed (frame 0 of
/// the interleaver RNG domain), shared by every frame of a run.
pub fn seeded_permutation(len: usize, master_seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    let mut rng = frame_rng(master_seed, 0, StreamDomain::Interleaver);
    perm.shuffle(&mut rng);
    perm
}

/// Genie error counts on the BICM equivalent channel (all-zero codeword
/// through interleaver, Gray 4-PAM, AWGN, demapper), for constructing the
/// BICM polar code with the same Monte Carlo machinery as the other schemes.
pub fn bicm_genie_counts(
    n_b: usize,
    master_seed: u64,
    sigma: f64,
    frames: std::ops::Range<u64>,
    mode: KernelMode,
) -> Vec<u64> {
    assert!(n_b.is_power_of_two() && n_b % 4 == 0);
    let interleaver = seeded_permutation(n_b, master_seed);
    let partials = map_frames(frames, |frame| {
        let mut noise = crate::channel::GaussianStream::new(frame_rng(
            master_seed,
            frame,
            StreamDomain::Construction,
        ));
        // All-zero codeword: every rail carries (0, 0) -> -1.5.
        let mut stream = vec![[0.0f64; 2]; n_b];
        for t in 0..n_b / 2 {
            let y = -1.5 + sigma * noise.next_standard();
            let p = pam4_bit_posteriors(y, sigma);
            stream[2 * t] = p[0];
            stream[2 * t + 1] = p[1];
        }
        let pmfs: Vec<SymbolPmf> = (0..n_b)
            .map(|i| {
                let p = stream[interleaver[i]];
                SymbolPmf::from_weights(vec![p[0], p[1]]).expect("normalized")
            })
            .collect();
        genie_sc_zero(n_b, 1, &pmfs, mode)
    });
    let mut counts = vec![0u64; n_b];
    for wrong in partials {
        for (c, w) in counts.iter_mut().zip(wrong) {
            *c += w as u64;
        }
    }
    counts
}

/// Monte Carlo estimate of the BICM capacity in bits per real dimension:
/// `2 + E[log2 p_msb(true) + log2 p_lsb(true)]` over uniform rail labels.
pub fn bicm_capacity_per_dim(sigma: f64, samples: u64, master_seed: u64) -> f64 {
    assert!(sigma > 0.0 && samples > 0);
    let partials = map_frames(0..samples, |frame| {
        let mut rng = frame_rng(master_seed, frame, StreamDomain::Construction);
        use rand::Rng;
        let msb: u8 = rng.gen_range(0..2);
        let lsb: u8 = rng.gen_range(0..2);
        let mut noise = crate::channel::GaussianStream::new(rng);
        let y = gray_amplitude(msb, lsb) + sigma * noise.next_standard();
        let p = pam4_bit_posteriors(y, sigma);
        p[0][msb as usize].max(1e-300).log2() + p[1][lsb as usize].max(1e-300).log2()
    });
    let sum: f64 = partials.into_iter().sum();
    (2.0 + sum / samples as f64).clamp(0.0, 2.0)
}

/// Noise level where the BICM capacity matches a target spectral efficiency,
/// by bisection with common random numbers.
pub fn bicm_design_sigma(bits_per_dim: f64, samples: u64, master_seed: u64) -> Result<f64> {
    if !(bits_per_dim > 0.0 && bits_per_dim < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "bits per dimension must lie in (0, 2), got {bits_per_dim}"
        )));
    }
    let mut lo = 1e-3;
    let mut hi = 0.25;
    while bicm_capacity_per_dim(hi, samples, master_seed) > bits_per_dim {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Infeasible("no sigma matches the target rate".into()));
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if bicm_capacity_per_dim(mid, samples, master_seed) > bits_per_dim {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The 16-QAM constellation as the `Z^2 / 4 Z^2` instance of the shaped
/// constellation machinery (dither `(-1.5, -1.5)` recovers the standard
/// grid), used by the MLC-polar baseline.
pub fn qam16_constellation() -> ShapedConstellation {
    let lat = Lattice::integer(2);
    let dither = ShapedConstellation::default_dither(&lat, 2);
    ShapedConstellation::build(lat, 2, dither).expect("Z^2 grid never hits a Voronoi boundary")
}
