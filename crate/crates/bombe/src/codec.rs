//! The complete multilevel coset transceiver: per-level systematic polar
//! encoding onto the shaped constellation, Gaussian demodulation over the
//! full point set, per-stage conditional marginalization, and multistage
//! CA-SCL decoding with cross-level path propagation.

use crate::constellation::ShapedConstellation;
use crate::error::{Error, Result};
use crate::lattice::PartitionChain;
use crate::pmf::{normalize_slice, KernelMode, SymbolPmf};
use crate::polar::{PolarLevelCode, SclInput};

/// A multilevel coset code: one polar level code per partition-chain level,
/// all sharing the symbol count `n_l` and the lattice dimension `d`.
#[derive(Debug, Clone)]
pub struct BombeCode {
    constellation: ShapedConstellation,
    chain: PartitionChain,
    levels: Vec<PolarLevelCode>,
    mode: KernelMode,
    /// Re-marginalize later stages only under the best surviving path's
    /// hypothesis instead of per path (cheaper, slightly weaker).
    best_path_remarg: bool,
}

/// Result of decoding one frame.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub payload: Vec<u8>,
    pub crc_ok: Vec<bool>,
    /// True when every level's CRC checked out on the selected path.
    pub all_crc_ok: bool,
    pub metric: f64,
}

impl BombeCode {
    pub fn new(
        constellation: ShapedConstellation,
        chain: PartitionChain,
        levels: Vec<PolarLevelCode>,
        mode: KernelMode,
    ) -> Result<Self> {
        let s = chain.levels() as usize;
        if levels.len() != s {
            return Err(Error::LengthMismatch {
                expected: s,
                got: levels.len(),
            });
        }
        let d = constellation.dimension();
        let n_l = levels[0].n_l();
        for code in &levels {
            if code.lanes() != d || code.n_l() != n_l {
                return Err(Error::InvalidParameter(
                    "all levels must share n_l and the lattice dimension".into(),
                ));
            }
        }
        if constellation.levels() != chain.levels() {
            return Err(Error::InvalidParameter(
                "constellation and partition chain disagree on the level count".into(),
            ));
        }
        Ok(BombeCode {
            constellation,
            chain,
            levels,
            mode,
            best_path_remarg: false,
        })
    }

    /// Switches later decoding stages to re-marginalizing only under the
    /// best surviving path's hypothesis (all paths share those PMFs).
    pub fn with_best_path_marginalization(mut self, on: bool) -> Self {
        self.best_path_remarg = on;
        self
    }

    pub fn constellation(&self) -> &ShapedConstellation {
        &self.constellation
    }

    pub fn chain(&self) -> &PartitionChain {
        &self.chain
    }

    pub fn level_codes(&self) -> &[PolarLevelCode] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Lattice symbols per codeword.
    pub fn n_l(&self) -> usize {
        self.levels[0].n_l()
    }

    /// Total coded bits per codeword, `s * d * n_l`.
    pub fn n_b(&self) -> usize {
        self.num_levels() * self.constellation.dimension() * self.n_l()
    }

    /// Information bits per codeword (CRCs excluded).
    pub fn payload_len(&self) -> usize {
        self.levels.iter().map(|c| c.k_b()).sum()
    }

    /// Transmitted payload bits per codeword, CRCs included.
    pub fn k_b(&self) -> usize {
        self.levels.iter().map(|c| c.unfrozen_count()).sum()
    }

    /// Coding rate `k_b / n_b` (CRC bits counted as payload).
    pub fn rate(&self) -> f64 {
        self.k_b() as f64 / self.n_b() as f64
    }

    /// Coded bits per real dimension, `s * R`.
    pub fn bits_per_dim(&self) -> f64 {
        self.num_levels() as f64 * self.rate()
    }

    /// Real dimensions per frame.
    pub fn dims_per_frame(&self) -> usize {
        self.n_l() * self.constellation.dimension()
    }

    /// Encodes a payload into `n_l` lattice symbols, returned as a flat
    /// vector of `n_l * d` real coordinates.
    pub fn encode_frame(&self, payload: &[u8]) -> Result<Vec<f64>> {
        if payload.len() != self.payload_len() {
            return Err(Error::LengthMismatch {
                expected: self.payload_len(),
                got: payload.len(),
            });
        }
        let d = self.constellation.dimension();
        let n_l = self.n_l();
        let mut level_words = Vec::with_capacity(self.levels.len());
        let mut offset = 0;
        for code in &self.levels {
            let info = &payload[offset..offset + code.k_b()];
            offset += code.k_b();
            level_words.push(code.encode(info)?);
        }
        let mut out = Vec::with_capacity(n_l * d);
        let mut coeffs = vec![0u64; d];
        for t in 0..n_l {
            for (k, c) in coeffs.iter_mut().enumerate() {
                *c = 0;
                for (j, word) in level_words.iter().enumerate() {
                    *c |= (((word[t] >> k) & 1) as u64) << j;
                }
            }
            out.extend_from_slice(self.constellation.modulate(&coeffs));
        }
        Ok(out)
    }

    /// Full Gaussian PMF over all `r^d` constellation points for one noisy
    /// lattice symbol, `p(x | mu) ~ exp(-||x - mu||^2 / 2 sigma^2)`.
    pub fn demod_full(&self, mu: &[f64], sigma: f64) -> Vec<f64> {
        demod_full(&self.constellation, mu, sigma)
    }

    /// Conditional level PMF: restricts the full PMF to points agreeing
    /// with the decided lower-level residues `h` and buckets the remaining
    /// mass by the level-`i` residue.
    pub fn marginalize_level(
        &self,
        full: &[f64],
        level: u32,
        h: &[u8],
    ) -> Result<SymbolPmf> {
        marginalize_level(&self.constellation, full, level, h, self.mode)
    }

    /// Multistage CA-SCL decoding of one frame.
    ///
    /// Stage 0 list-decodes the level-0 marginals; every surviving path then
    /// re-marginalizes the full PMFs under its own hypothesis for the next
    /// stage, metrics accumulating across stages. The returned path has all
    /// CRCs valid with minimal metric when one exists, otherwise the
    /// minimal-metric path with `all_crc_ok = false`.
    pub fn decode_frame(&self, received: &[f64], sigma: f64, list: usize) -> Result<DecodeResult> {
        self.decode_frame_inner(received, sigma, list, None)
    }

    /// As [`BombeCode::decode_frame`], additionally returning a CSV debug
    /// dump with one row per surviving path and stage:
    /// `stage,path,metric,crc_ok`.
    pub fn decode_frame_traced(
        &self,
        received: &[f64],
        sigma: f64,
        list: usize,
    ) -> Result<(DecodeResult, Vec<String>)> {
        let mut trace = vec!["stage,path,metric,crc_ok".to_string()];
        let out = self.decode_frame_inner(received, sigma, list, Some(&mut trace))?;
        Ok((out, trace))
    }

    fn decode_frame_inner(
        &self,
        received: &[f64],
        sigma: f64,
        list: usize,
        mut trace: Option<&mut Vec<String>>,
    ) -> Result<DecodeResult> {
        let d = self.constellation.dimension();
        let n_l = self.n_l();
        if received.len() != n_l * d {
            return Err(Error::LengthMismatch {
                expected: n_l * d,
                got: received.len(),
            });
        }
        let penalty = d as f64 * std::f64::consts::LN_2;
        let full: Vec<Vec<f64>> = (0..n_l)
            .map(|t| self.demod_full(&received[t * d..(t + 1) * d], sigma))
            .collect();

        // Stage 0.
        let mut metric0 = 0.0;
        let pmfs0: Vec<SymbolPmf> = full
            .iter()
            .map(|f| {
                self.marginalize_level(f, 0, &[]).unwrap_or_else(|_| {
                    metric0 += penalty;
                    SymbolPmf::uniform(d)
                })
            })
            .collect();
        let outcomes = self.levels[0].decode_scl(
            &[SclInput {
                channel_pmfs: pmfs0,
                initial_metric: metric0,
                tag: 0,
            }],
            list,
            self.mode,
        )?;
        let mut hypotheses: Vec<Hypothesis> = outcomes
            .into_iter()
            .map(|o| Hypothesis {
                codewords: vec![o.codeword],
                info: vec![o.info_bits],
                crc_ok: vec![o.crc_ok],
                metric: o.metric,
            })
            .collect();
        if let Some(t) = trace.as_deref_mut() {
            dump_stage(t, 0, &hypotheses);
        }

        // Later stages: per-path re-marginalization, list propagation.
        for level in 1..self.levels.len() {
            let marginals_for = |hyp: &Hypothesis| -> (Vec<SymbolPmf>, f64) {
                let mut extra = 0.0;
                let pmfs = (0..n_l)
                    .map(|t| {
                        let h: Vec<u8> = hyp.codewords.iter().map(|cw| cw[t]).collect();
                        self.marginalize_level(&full[t], level as u32, &h)
                            .unwrap_or_else(|_| {
                                extra += penalty;
                                SymbolPmf::uniform(d)
                            })
                    })
                    .collect();
                (pmfs, extra)
            };
            let mut inputs = Vec::with_capacity(hypotheses.len());
            if self.best_path_remarg {
                // Outcomes arrive metric-sorted, so index 0 is the best path.
                let (pmfs, extra) = marginals_for(&hypotheses[0]);
                for (tag, hyp) in hypotheses.iter().enumerate() {
                    inputs.push(SclInput {
                        channel_pmfs: pmfs.clone(),
                        initial_metric: hyp.metric + extra,
                        tag,
                    });
                }
            } else {
                for (tag, hyp) in hypotheses.iter().enumerate() {
                    let (pmfs, extra) = marginals_for(hyp);
                    inputs.push(SclInput {
                        channel_pmfs: pmfs,
                        initial_metric: hyp.metric + extra,
                        tag,
                    });
                }
            }
            let outcomes = self.levels[level].decode_scl(&inputs, list, self.mode)?;
            hypotheses = outcomes
                .into_iter()
                .map(|o| {
                    let parent = &hypotheses[o.tag];
                    let mut codewords = parent.codewords.clone();
                    codewords.push(o.codeword);
                    let mut info = parent.info.clone();
                    info.push(o.info_bits);
                    let mut crc_ok = parent.crc_ok.clone();
                    crc_ok.push(o.crc_ok);
                    Hypothesis {
                        codewords,
                        info,
                        crc_ok,
                        metric: o.metric,
                    }
                })
                .collect();
            if let Some(t) = trace.as_deref_mut() {
                dump_stage(t, level, &hypotheses);
            }
        }

        // Outcomes arrive metric-sorted; prefer the first with all CRCs ok.
        let chosen = hypotheses
            .iter()
            .position(|h| h.crc_ok.iter().all(|&ok| ok))
            .unwrap_or(0);
        let hyp = &hypotheses[chosen];
        Ok(DecodeResult {
            payload: hyp.info.concat(),
            crc_ok: hyp.crc_ok.clone(),
            all_crc_ok: hyp.crc_ok.iter().all(|&ok| ok),
            metric: hyp.metric,
        })
    }
}

struct Hypothesis {
    codewords: Vec<Vec<u8>>,
    info: Vec<Vec<u8>>,
    crc_ok: Vec<bool>,
    metric: f64,
}

fn dump_stage(trace: &mut Vec<String>, stage: usize, hypotheses: &[Hypothesis]) {
    for (path, h) in hypotheses.iter().enumerate() {
        trace.push(format!(
            "{stage},{path},{},{}",
            h.metric,
            h.crc_ok.last().copied().unwrap_or(true)
        ));
    }
}

/// Standalone full demodulation, stabilized by max-subtraction.
pub fn demod_full(constellation: &ShapedConstellation, mu: &[f64], sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0);
    assert!(mu.iter().all(|v| v.is_finite()));
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut logp: Vec<f64> = constellation
        .points()
        .iter()
        .map(|p| {
            let d2: f64 = p.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
            -d2 * inv
        })
        .collect();
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for v in logp.iter_mut() {
        *v = (*v - max).exp();
    }
    normalize_slice(&mut logp).expect("at least one point has unit weight");
    logp
}

/// Standalone conditional level marginalization; see
/// [`BombeCode::marginalize_level`].
pub fn marginalize_level(
    constellation: &ShapedConstellation,
    full: &[f64],
    level: u32,
    h: &[u8],
    mode: KernelMode,
) -> Result<SymbolPmf> {
    assert_eq!(full.len(), constellation.num_points());
    assert!(level < constellation.levels());
    assert_eq!(h.len(), level as usize);
    let d = constellation.dimension();
    let mut buckets = vec![0.0f64; 1 << d];
    'points: for (idx, &mass) in full.iter().enumerate() {
        for (j, &hj) in h.iter().enumerate() {
            if constellation.level_residue(idx, j as u32) != hj {
                continue 'points;
            }
        }
        let label = constellation.level_residue(idx, level) as usize;
        match mode {
            KernelMode::Exact => buckets[label] += mass,
            KernelMode::MaxLog => {
                if mass > buckets[label] {
                    buckets[label] = mass;
                }
            }
        }
    }
    SymbolPmf::from_weights(buckets)
}
