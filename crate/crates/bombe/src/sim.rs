//! Monte Carlo sweep orchestration: configuration, scheme assembly,
//! frame-parallel BER/BLER estimation with a stopping rule, CSV persistence,
//! and curve comparison.
//!
//! Everything downstream of a `(config, seed)` pair is deterministic: frames
//! use counter-based per-frame RNG streams, frames are simulated in fixed
//! batches, and partial results are folded in frame order, so the CSV output
//! is byte-identical for any worker count.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::baselines::{
    bicm_design_sigma, bicm_genie_counts, qam16_constellation, BicmCode,
};
use crate::channel::{ebn0_to_sigma, frame_payload, GaussianStream};
use crate::codec::{BombeCode, DecodeResult};
use crate::constellation::ShapedConstellation;
use crate::construction::{
    build_level_codes, design_sigma, estimate_reliabilities, ReliabilityGrid,
    ReliabilitySequence,
};
use crate::error::{Error, Result};
use crate::lattice::{Lattice, PartitionChain};
use crate::parallel::map_frames;
use crate::pmf::KernelMode;

/// Supported transmission schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Multilevel coset code on the shaped D4 constellation (s = 2, d = 4).
    BombeD4,
    /// MLC polar on 16-QAM, the Z^2 instance of the same machinery.
    MlcQam16,
    /// BICM polar on Gray-mapped 16-QAM.
    BicmQam16,
}

impl Scheme {
    pub fn parse(s: &str) -> Result<Scheme> {
        match s {
            "bombe-d4" => Ok(Scheme::BombeD4),
            "mlc-qam16" => Ok(Scheme::MlcQam16),
            "bicm-qam16" => Ok(Scheme::BicmQam16),
            _ => Err(Error::Parse(format!(
                "unknown scheme '{s}' (expected bombe-d4, mlc-qam16 or bicm-qam16)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::BombeD4 => "bombe-d4",
            Scheme::MlcQam16 => "mlc-qam16",
            Scheme::BicmQam16 => "bicm-qam16",
        }
    }

    /// Coded bits per lattice/QAM symbol (`n_b / n_l`).
    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Scheme::BombeD4 => 8,
            Scheme::MlcQam16 => 4,
            Scheme::BicmQam16 => 1,
        }
    }
}

/// Full simulation configuration; see `SimConfig::apply` for the flat
/// key-value names used in config files and CLI overrides.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub n_b: usize,
    pub rate_num: u64,
    pub rate_den: u64,
    pub list: usize,
    /// Attach per-level CRCs chosen by payload size (false = none).
    pub crc: bool,
    pub snr_start_db: f64,
    pub snr_stop_db: f64,
    pub snr_step_db: f64,
    pub min_frame_errors: u64,
    pub max_frames: u64,
    pub seed: u64,
    /// Worker thread count; 0 = library default. Never affects results.
    pub workers: usize,
    /// Reliability sequence file; constructed on the fly when absent.
    pub seq_path: Option<String>,
    /// Genie trials per construction grid point.
    pub construction_trials: u64,
    /// Monte Carlo samples for capacity estimates / design-SNR matching.
    pub capacity_samples: u64,
    /// Use the max-log decoding kernels instead of exact summation.
    pub max_log: bool,
    /// Re-marginalize later stages only under the best path's hypothesis.
    pub best_path_only: bool,
    /// Frames per stopping-rule check.
    pub batch: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scheme: Scheme::BombeD4,
            n_b: 256,
            rate_num: 11,
            rate_den: 16,
            list: 8,
            crc: true,
            snr_start_db: 1.0,
            snr_stop_db: 6.0,
            snr_step_db: 0.5,
            min_frame_errors: 100,
            max_frames: 1_000_000,
            seed: 1,
            workers: 0,
            seq_path: None,
            construction_trials: 2_000,
            capacity_samples: 20_000,
            max_log: false,
            best_path_only: false,
            batch: 256,
        }
    }
}

impl SimConfig {
    pub fn rate(&self) -> f64 {
        self.rate_num as f64 / self.rate_den as f64
    }

    /// Coded bits per real dimension (`s * R`, identical across schemes).
    pub fn bits_per_dim(&self) -> f64 {
        2.0 * self.rate()
    }

    pub fn kernel_mode(&self) -> KernelMode {
        if self.max_log {
            KernelMode::MaxLog
        } else {
            KernelMode::Exact
        }
    }

    /// Transmitted payload bits per frame, CRCs included.
    pub fn unfrozen_total(&self) -> usize {
        ((self.n_b as u64 * self.rate_num + self.rate_den / 2) / self.rate_den) as usize
    }

    /// Applies one `key = value` setting.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Parse(format!("bad value '{value}' for key '{key}'"));
        match key {
            "scheme" => self.scheme = Scheme::parse(value)?,
            "n_b" => self.n_b = value.parse().map_err(|_| bad())?,
            "rate" => {
                let (num, den) = value
                    .split_once('/')
                    .ok_or_else(|| Error::Parse(format!("rate '{value}' is not a fraction a/b")))?;
                self.rate_num = num.trim().parse().map_err(|_| bad())?;
                self.rate_den = den.trim().parse().map_err(|_| bad())?;
                if self.rate_den == 0 || self.rate_num > self.rate_den {
                    return Err(Error::InvalidParameter(format!(
                        "rate {value} outside (0, 1]"
                    )));
                }
            }
            "list" => self.list = value.parse().map_err(|_| bad())?,
            "crc" => self.crc = parse_bool(value).ok_or_else(bad)?,
            "snr_start_db" => self.snr_start_db = value.parse().map_err(|_| bad())?,
            "snr_stop_db" => self.snr_stop_db = value.parse().map_err(|_| bad())?,
            "snr_step_db" => self.snr_step_db = value.parse().map_err(|_| bad())?,
            "min_frame_errors" => self.min_frame_errors = value.parse().map_err(|_| bad())?,
            "max_frames" => self.max_frames = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "workers" => self.workers = value.parse().map_err(|_| bad())?,
            "seq_path" => self.seq_path = Some(value.to_string()),
            "construction_trials" => {
                self.construction_trials = value.parse().map_err(|_| bad())?
            }
            "capacity_samples" => self.capacity_samples = value.parse().map_err(|_| bad())?,
            "max_log" => self.max_log = parse_bool(value).ok_or_else(bad)?,
            "best_path_only" => self.best_path_only = parse_bool(value).ok_or_else(bad)?,
            "batch" => self.batch = value.parse().map_err(|_| bad())?,
            _ => return Err(Error::Parse(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses a flat key-value config file (`key = value`, `#` comments).
    pub fn load<R: BufRead>(r: R) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected 'key = value', got '{line}'")))?;
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Canonical text form; excludes `workers`, which must never change
    /// results. Hash input and provenance record.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "scheme={} n_b={} rate={}/{} list={} crc={} \
             snr={}:{}:{} min_fe={} max_frames={} seed={} seq_path={} \
             construction_trials={} capacity_samples={} max_log={} \
             best_path_only={} batch={}",
            self.scheme.name(),
            self.n_b,
            self.rate_num,
            self.rate_den,
            self.list,
            self.crc,
            self.snr_start_db,
            self.snr_stop_db,
            self.snr_step_db,
            self.min_frame_errors,
            self.max_frames,
            self.seed,
            self.seq_path.as_deref().unwrap_or("-"),
            self.construction_trials,
            self.capacity_samples,
            self.max_log,
            self.best_path_only,
            self.batch,
        );
        s
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn snr_grid(&self) -> Vec<f64> {
        let mut grid = Vec::new();
        let mut snr = self.snr_start_db;
        let step = self.snr_step_db.max(1e-9);
        while snr <= self.snr_stop_db + 1e-9 {
            grid.push(snr);
            snr += step;
        }
        grid
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// A ready-to-simulate transmitter/receiver pair for one scheme.
pub enum Transceiver {
    Mlc(BombeCode),
    Bicm(BicmCode),
}

impl Transceiver {
    pub fn payload_len(&self) -> usize {
        match self {
            Transceiver::Mlc(c) => c.payload_len(),
            Transceiver::Bicm(c) => c.payload_len(),
        }
    }

    /// Transmitted bits per frame, CRCs included.
    pub fn k_b(&self) -> usize {
        match self {
            Transceiver::Mlc(c) => c.k_b(),
            Transceiver::Bicm(c) => c.k_b(),
        }
    }

    pub fn dims_per_frame(&self) -> usize {
        match self {
            Transceiver::Mlc(c) => c.dims_per_frame(),
            Transceiver::Bicm(c) => c.dims_per_frame(),
        }
    }

    /// Mean transmit energy per real dimension.
    pub fn es_per_dim(&self) -> f64 {
        match self {
            Transceiver::Mlc(c) => c.constellation().es_per_dim(),
            Transceiver::Bicm(c) => c.es_per_dim(),
        }
    }

    /// Coded bits per real dimension, CRC bits counted as payload.
    pub fn bits_per_dim(&self) -> f64 {
        match self {
            Transceiver::Mlc(c) => c.bits_per_dim(),
            Transceiver::Bicm(c) => c.bits_per_dim(),
        }
    }

    pub fn encode(&self, payload: &[u8]) -> Result<Vec<f64>> {
        match self {
            Transceiver::Mlc(c) => c.encode_frame(payload),
            Transceiver::Bicm(c) => c.encode(payload),
        }
    }

    pub fn decode(&self, received: &[f64], sigma: f64, list: usize) -> Result<DecodeResult> {
        match self {
            Transceiver::Mlc(c) => c.decode_frame(received, sigma, list),
            Transceiver::Bicm(c) => c.decode(received, sigma, list),
        }
    }
}

fn mlc_geometry(scheme: Scheme) -> (Lattice, usize) {
    match scheme {
        Scheme::BombeD4 => (Lattice::d4(), 8),
        Scheme::MlcQam16 => (Lattice::integer(2), 4),
        Scheme::BicmQam16 => unreachable!("BICM has no lattice geometry"),
    }
}

fn scheme_constellation(scheme: Scheme) -> Result<ShapedConstellation> {
    match scheme {
        Scheme::BombeD4 => {
            let lat = Lattice::d4();
            let dither = ShapedConstellation::default_dither(&lat, 2);
            ShapedConstellation::build(lat, 2, dither)
        }
        Scheme::MlcQam16 => Ok(qam16_constellation()),
        Scheme::BicmQam16 => Err(Error::InvalidParameter(
            "BICM has no shaped constellation".into(),
        )),
    }
}

/// Relative grid around the design sigma used when constructing on the fly.
const GRID_FACTORS: [f64; 5] = [0.85, 0.95, 1.0, 1.05, 1.15];

/// Runs the Monte Carlo construction for a config and returns the unified
/// reliability sequence.
pub fn construct_sequence(cfg: &SimConfig) -> Result<ReliabilitySequence> {
    let mode = cfg.kernel_mode();
    let target = cfg.bits_per_dim();
    match cfg.scheme {
        Scheme::BombeD4 | Scheme::MlcQam16 => {
            let constellation = scheme_constellation(cfg.scheme)?;
            let (_, bits) = mlc_geometry(cfg.scheme);
            if cfg.n_b % bits != 0 {
                return Err(Error::InvalidParameter(format!(
                    "n_b = {} is not a multiple of {bits} for {}",
                    cfg.n_b,
                    cfg.scheme.name()
                )));
            }
            let n_l = cfg.n_b / bits;
            let ds = design_sigma(&constellation, target, cfg.capacity_samples, cfg.seed, mode)?;
            let sigmas: Vec<f64> = GRID_FACTORS.iter().map(|f| f * ds).collect();
            let grid = estimate_reliabilities(
                &constellation,
                n_l,
                &sigmas,
                cfg.construction_trials,
                cfg.seed,
                mode,
            )?;
            grid.sequence_for_rate(&constellation, target, cfg.capacity_samples, cfg.seed, mode)
        }
        Scheme::BicmQam16 => {
            if !cfg.n_b.is_power_of_two() || cfg.n_b % 4 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "BICM needs a power-of-two n_b divisible by 4, got {}",
                    cfg.n_b
                )));
            }
            let ds = bicm_design_sigma(target, cfg.capacity_samples, cfg.seed)?;
            let sigmas: Vec<f64> = GRID_FACTORS.iter().map(|f| f * ds).collect();
            let errors: Vec<Vec<u64>> = sigmas
                .iter()
                .enumerate()
                .map(|(g, &sigma)| {
                    let start = g as u64 * cfg.construction_trials;
                    bicm_genie_counts(
                        cfg.n_b,
                        cfg.seed,
                        sigma,
                        start..start + cfg.construction_trials,
                        mode,
                    )
                })
                .collect();
            let grid = ReliabilityGrid {
                n_l: cfg.n_b,
                d: 1,
                levels: 1,
                sigmas,
                trials: cfg.construction_trials,
                errors,
            };
            // The grid center is the rate-matched point by construction.
            Ok(grid.sequence_at(GRID_FACTORS.len() / 2))
        }
    }
}

/// Assembles the transceiver for a config, loading the reliability sequence
/// from `seq_path` when given and constructing it otherwise.
pub fn build_transceiver(cfg: &SimConfig) -> Result<Transceiver> {
    let seq = match &cfg.seq_path {
        Some(path) => {
            let file = std::fs::File::open(path)?;
            ReliabilitySequence::load(std::io::BufReader::new(file))?
        }
        None => construct_sequence(cfg)?,
    };
    build_transceiver_with_sequence(cfg, &seq)
}

pub fn build_transceiver_with_sequence(
    cfg: &SimConfig,
    seq: &ReliabilitySequence,
) -> Result<Transceiver> {
    let mode = cfg.kernel_mode();
    let unfrozen = cfg.unfrozen_total();
    match cfg.scheme {
        Scheme::BombeD4 | Scheme::MlcQam16 => {
            let constellation = scheme_constellation(cfg.scheme)?;
            let (lat, bits) = mlc_geometry(cfg.scheme);
            let n_l = cfg.n_b / bits;
            if seq.n_l != n_l || seq.d != constellation.dimension() || seq.levels != 2 {
                return Err(Error::InvalidParameter(format!(
                    "reliability sequence shape ({}, {}, {}) does not match {} n_b = {}",
                    seq.levels,
                    seq.n_l,
                    seq.d,
                    cfg.scheme.name(),
                    cfg.n_b
                )));
            }
            let codes = build_level_codes(seq, unfrozen, cfg.crc)?;
            let chain = PartitionChain::new(lat, 2);
            let code = BombeCode::new(constellation, chain, codes, mode)?
                .with_best_path_marginalization(cfg.best_path_only);
            Ok(Transceiver::Mlc(code))
        }
        Scheme::BicmQam16 => {
            if seq.n_l != cfg.n_b || seq.d != 1 || seq.levels != 1 {
                return Err(Error::InvalidParameter(
                    "reliability sequence shape does not match the BICM code".into(),
                ));
            }
            let mut codes = build_level_codes(seq, unfrozen, cfg.crc)?;
            Ok(Transceiver::Bicm(BicmCode::new(
                codes.remove(0),
                cfg.seed,
            )?))
        }
    }
}

/// One measured SNR point.
#[derive(Debug, Clone)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub sigma: f64,
    /// Symbol-energy SNR `Es_dim / (2 sigma^2)` in dB, for axis conversion.
    pub esn0_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub bler: f64,
    /// Measurement wall time; reported on the console but deliberately kept
    /// out of the CSV so identical runs produce identical files.
    pub wall_time_s: f64,
}

/// Simulates every SNR grid point until the stopping rule fires (default:
/// 100 frame errors or 10^6 frames, whichever first, checked at batch
/// boundaries so results are schedule-independent).
pub fn run_sweep(cfg: &SimConfig) -> Result<Vec<CurvePoint>> {
    let run = || -> Result<Vec<CurvePoint>> {
        let trx = build_transceiver(cfg)?;
        let grid = cfg.snr_grid();
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty SNR grid".into()));
        }
        let mut points = Vec::with_capacity(grid.len());
        for &snr_db in &grid {
            points.push(run_point(cfg, &trx, snr_db)?);
        }
        Ok(points)
    };
    #[cfg(feature = "parallel")]
    {
        if cfg.workers > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
            return pool.install(run);
        }
    }
    run()
}

fn run_point(cfg: &SimConfig, trx: &Transceiver, snr_db: f64) -> Result<CurvePoint> {
    let sigma = ebn0_to_sigma(snr_db, trx.es_per_dim(), trx.bits_per_dim())?;
    let payload_len = trx.payload_len();
    let start = Instant::now();
    let mut frames = 0u64;
    let mut bit_errors = 0u64;
    let mut frame_errors = 0u64;
    // The frame-index space is partitioned per SNR point so streams never
    // collide across points.
    let point_base = (snr_db * 1000.0).round() as i64 as u64 ^ (cfg.seed << 1);
    let base = point_base.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    while frames < cfg.max_frames && frame_errors < cfg.min_frame_errors {
        let batch = cfg.batch.min(cfg.max_frames - frames);
        let partials = map_frames(frames..frames + batch, |frame| {
            // 62 bits leave room for the 4 RNG domains inside the stream id.
            let idx = base.wrapping_add(frame) & ((1u64 << 62) - 1);
            let payload = frame_payload(cfg.seed, idx, payload_len);
            let tx = trx.encode(&payload).expect("payload length is fixed");
            let mut noise = GaussianStream::for_frame(cfg.seed, idx);
            let rx = crate::channel::transmit(&tx, sigma, &mut noise);
            let out = trx
                .decode(&rx, sigma, cfg.list)
                .expect("decode of a well-formed frame");
            let bits = payload
                .iter()
                .zip(&out.payload)
                .filter(|(a, b)| a != b)
                .count() as u64;
            (bits, u64::from(bits > 0))
        });
        for (bits, fe) in partials {
            bit_errors += bits;
            frame_errors += fe;
        }
        frames += batch;
    }
    Ok(CurvePoint {
        snr_db,
        sigma,
        esn0_db: 10.0 * (trx.es_per_dim() / (2.0 * sigma * sigma)).log10(),
        frames,
        bit_errors,
        frame_errors,
        ber: bit_errors as f64 / (frames as f64 * payload_len as f64),
        bler: frame_errors as f64 / frames as f64,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Writes a sweep as CSV. Every `CurvePoint` field except wall time, plus
/// the config hash, per row.
pub fn write_csv<W: Write>(points: &[CurvePoint], config_hash: &str, mut w: W) -> Result<()> {
    writeln!(
        w,
        "snr_db,sigma,esn0_db,frames,bit_errors,frame_errors,ber,bler,config_hash"
    )?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{config_hash}",
            p.snr_db, p.sigma, p.esn0_db, p.frames, p.bit_errors, p.frame_errors, p.ber, p.bler
        )?;
    }
    Ok(())
}

/// Which error-rate column a comparison targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ber,
    Bler,
}

impl Metric {
    pub fn parse(s: &str) -> Result<Metric> {
        match s {
            "ber" => Ok(Metric::Ber),
            "bler" => Ok(Metric::Bler),
            _ => Err(Error::Parse(format!("unknown metric '{s}'"))),
        }
    }
}

/// Reads `(snr_db, ber, bler)` rows back from a sweep CSV.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<(f64, f64, f64)>> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if !line.starts_with("snr_db,") {
                return Err(Error::Parse("not a sweep CSV (bad header)".into()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 8 {
            return Err(Error::Parse(format!("short CSV row: {line}")));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
        };
        rows.push((num(fields[0])?, num(fields[6])?, num(fields[7])?));
    }
    rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(rows)
}

/// SNR (dB) at which a curve crosses `target`, by log-linear interpolation
/// between the bracketing measured points.
pub fn snr_at_rate(curve: &[(f64, f64)], target: f64) -> Result<f64> {
    assert!(target > 0.0);
    let floor = 1e-12;
    for pair in curve.windows(2) {
        let (s0, m0) = (pair[0].0, pair[0].1.max(floor));
        let (s1, m1) = (pair[1].0, pair[1].1.max(floor));
        if (m0 >= target && m1 <= target) || (m0 <= target && m1 >= target) {
            if (m0 - m1).abs() < 1e-300 {
                return Ok(s0);
            }
            let t = (target.ln() - m0.ln()) / (m1.ln() - m0.ln());
            return Ok(s0 + t * (s1 - s0));
        }
    }
    Err(Error::Infeasible(format!(
        "curve does not bracket the target rate {target}"
    )))
}

/// Gain of curve A over curve B at a target error rate: `SNR_b - SNR_a` in
/// dB (positive = A reaches the target at lower SNR).
pub fn compare_curves(
    rows_a: &[(f64, f64, f64)],
    rows_b: &[(f64, f64, f64)],
    target: f64,
    metric: Metric,
) -> Result<f64> {
    let pick = |rows: &[(f64, f64, f64)]| -> Vec<(f64, f64)> {
        rows.iter()
            .map(|&(snr, ber, bler)| match metric {
                Metric::Ber => (snr, ber),
                Metric::Bler => (snr, bler),
            })
            .collect()
    };
    let a = snr_at_rate(&pick(rows_a), target)?;
    let b = snr_at_rate(&pick(rows_b), target)?;
    Ok(b - a)
}
