//! AWGN channel, SNR bookkeeping, and reproducible per-frame random streams.
//!
//! All randomness is drawn from counter-based ChaCha streams keyed by
//! `(master seed, frame index, domain)`, so every frame's noise and payload
//! are pure functions of the seed and frame index regardless of scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Gaussian generation method recorded in output metadata.
pub const GAUSSIAN_METHOD: &str = "box-muller";

/// Noise and rate bookkeeping for one simulation point.
#[derive(Debug, Clone, Copy)]
pub struct ChannelSpec {
    /// Noise standard deviation per real dimension.
    pub sigma: f64,
    /// Average symbol energy per real dimension.
    pub es_dim: f64,
    /// Coded bits per real dimension (`s * R`).
    pub r_dim: f64,
}

impl ChannelSpec {
    pub fn from_ebn0(ebn0_db: f64, es_dim: f64, r_dim: f64) -> Result<Self> {
        let sigma = ebn0_to_sigma(ebn0_db, es_dim, r_dim)?;
        Ok(ChannelSpec {
            sigma,
            es_dim,
            r_dim,
        })
    }

    pub fn esn0_db(&self) -> f64 {
        10.0 * (self.es_dim / (2.0 * self.sigma * self.sigma)).log10()
    }
}

/// `sigma^2 = Es_dim / (2 * R_dim * 10^(EbN0_dB / 10))`.
pub fn ebn0_to_sigma(ebn0_db: f64, es_dim: f64, r_dim: f64) -> Result<f64> {
    if r_dim <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bits per dimension must be positive, got {r_dim}"
        )));
    }
    let snr = 10f64.powf(ebn0_db / 10.0);
    Ok((es_dim / (2.0 * r_dim * snr)).sqrt())
}

pub fn sigma_to_ebn0(sigma: f64, es_dim: f64, r_dim: f64) -> f64 {
    10.0 * (es_dim / (2.0 * r_dim * sigma * sigma)).log10()
}

/// RNG domains, kept disjoint per frame via the ChaCha stream id.
#[derive(Debug, Clone, Copy)]
pub enum StreamDomain {
    Noise = 0,
    Payload = 1,
    Construction = 2,
    Interleaver = 3,
}

/// Deterministic per-frame RNG: stream id packs the frame index and domain.
pub fn frame_rng(master_seed: u64, frame: u64, domain: StreamDomain) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(frame.wrapping_mul(4).wrapping_add(domain as u64));
    rng
}

/// Box-Muller Gaussian stream over a counter-based uniform source.
pub struct GaussianStream {
    rng: ChaCha12Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(rng: ChaCha12Rng) -> Self {
        GaussianStream { rng, spare: None }
    }

    pub fn for_frame(master_seed: u64, frame: u64) -> Self {
        Self::new(frame_rng(master_seed, frame, StreamDomain::Noise))
    }

    /// One standard normal sample.
    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] to keep the log finite.
        let u1: f64 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Adds i.i.d. zero-mean Gaussian noise with per-dimension variance
/// `sigma^2` to every coordinate.
pub fn transmit(points: &[f64], sigma: f64, noise: &mut GaussianStream) -> Vec<f64> {
    assert!(sigma >= 0.0);
    points
        .iter()
        .map(|&p| p + sigma * noise.next_standard())
        .collect()
}

/// Uniform random payload bits for a frame.
pub fn frame_payload(master_seed: u64, frame: u64, len: usize) -> Vec<u8> {
    let mut rng = frame_rng(master_seed, frame, StreamDomain::Payload);
    (0..len).map(|_| (rng.next_u32() & 1) as u8).collect()
}
