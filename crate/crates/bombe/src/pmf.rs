//! Probability-mass-function algebra over the group `(Z/2Z)^d`.
//!
//! A [`SymbolPmf`] holds `2^d` nonnegative entries indexed by the d-bit group
//! element label. The two channel-splitting kernels of the non-binary polar
//! decoder live here: XOR-convolution (upper) and conditioned element-wise
//! product (lower), plus per-bit-lane marginalization and conditioning used
//! for bit-level freezing inside a symbol.
//!
//! PMFs are kept in the linear domain and renormalized per operation; the
//! normalization constants are absorbed into decoder path metrics.

use crate::error::{Error, Result};

/// Entries below this are treated as zero mass when normalizing.
pub const MASS_FLOOR: f64 = 1e-300;

/// Kernel flavor: exact sum-product or the max-log approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelMode {
    #[default]
    Exact,
    MaxLog,
}

/// A PMF over `(Z/2Z)^d`, stored as `2^d` nonnegative reals.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolPmf {
    values: Vec<f64>,
}

impl SymbolPmf {
    pub fn uniform(d: usize) -> Self {
        let n = 1usize << d;
        SymbolPmf {
            values: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass at group element `label`.
    pub fn point_mass(d: usize, label: u8) -> Self {
        let n = 1usize << d;
        let mut values = vec![0.0; n];
        values[label as usize] = 1.0;
        SymbolPmf { values }
    }

    /// Builds and normalizes a PMF from raw nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        assert!(weights.len().is_power_of_two());
        assert!(weights.iter().all(|&w| w >= 0.0 && w.is_finite()));
        let mut pmf = SymbolPmf { values: weights };
        pmf.normalize()?;
        Ok(pmf)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lanes(&self) -> usize {
        self.values.len().trailing_zeros() as usize
    }

    /// Rescales entries to sum to one.
    pub fn normalize(&mut self) -> Result<()> {
        normalize_slice(&mut self.values)
    }

    /// Index of the most probable group element (smallest label on ties).
    pub fn argmax(&self) -> u8 {
        let mut best = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best as u8
    }
}

pub(crate) fn normalize_slice(values: &mut [f64]) -> Result<()> {
    let sum: f64 = values.iter().sum();
    if !(sum > MASS_FLOOR) || !sum.is_finite() {
        return Err(Error::DegenerateEvidence);
    }
    for v in values.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

/// In-place Walsh-Hadamard transform (unnormalized, self-inverse up to `n`).
pub fn wht_inplace(buf: &mut [f64]) {
    debug_assert!(buf.len().is_power_of_two());
    let mut h = 1;
    while h < buf.len() {
        let mut i = 0;
        while i < buf.len() {
            for j in i..i + h {
                let a = buf[j];
                let b = buf[j + h];
                buf[j] = a + b;
                buf[j + h] = a - b;
            }
            i += 2 * h;
        }
        h *= 2;
    }
}

/// XOR-convolution into `out`: `out[a] = sum_b p[a^b] * q[b]`, via the fast
/// Walsh-Hadamard transform in `O(2^d d)`.
pub(crate) fn xor_convolve_into(p: &[f64], q: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    let n = p.len();
    debug_assert_eq!(q.len(), n);
    debug_assert_eq!(out.len(), n);
    out.copy_from_slice(p);
    scratch[..n].copy_from_slice(q);
    wht_inplace(out);
    wht_inplace(&mut scratch[..n]);
    for (o, s) in out.iter_mut().zip(scratch.iter()) {
        *o *= s;
    }
    wht_inplace(out);
    let inv = 1.0 / n as f64;
    for o in out.iter_mut() {
        // WHT of nonnegative inputs can leave tiny negative residue.
        *o = (*o * inv).max(0.0);
    }
}

/// Max-log counterpart of [`xor_convolve_into`]: `out[a] = max_b p[a^b]*q[b]`.
pub(crate) fn xor_convolve_max_into(p: &[f64], q: &[f64], out: &mut [f64]) {
    for (a, o) in out.iter_mut().enumerate() {
        let mut m = 0.0f64;
        for (b, &qb) in q.iter().enumerate() {
            let t = p[a ^ b] * qb;
            if t > m {
                m = t;
            }
        }
        *o = m;
    }
}

/// Upper channel-splitting kernel: PMF of the XOR of two independent symbols.
pub fn xor_convolve(p: &SymbolPmf, q: &SymbolPmf) -> SymbolPmf {
    xor_convolve_mode(p, q, KernelMode::Exact)
}

pub fn xor_convolve_mode(p: &SymbolPmf, q: &SymbolPmf, mode: KernelMode) -> SymbolPmf {
    let n = p.len();
    assert_eq!(q.len(), n);
    let mut out = vec![0.0; n];
    match mode {
        KernelMode::Exact => {
            let mut scratch = vec![0.0; n];
            xor_convolve_into(p.values(), q.values(), &mut out, &mut scratch);
        }
        KernelMode::MaxLog => xor_convolve_max_into(p.values(), q.values(), &mut out),
    }
    let mut pmf = SymbolPmf { values: out };
    // Inputs are never all-zero, so the convolution has positive mass.
    pmf.normalize().expect("convolution of valid PMFs");
    pmf
}

/// Lower kernel into `out`: `out[b] = p[u^b] * q[b]` (unnormalized).
pub(crate) fn condition_product_into(p: &[f64], q: &[f64], u: u8, out: &mut [f64]) {
    for (b, o) in out.iter_mut().enumerate() {
        *o = p[b ^ u as usize] * q[b];
    }
}

/// Lower channel-splitting kernel: conditional PMF of the second symbol given
/// the decided XOR value `u`, normalized.
pub fn condition_product(p: &SymbolPmf, q: &SymbolPmf, u: u8) -> Result<SymbolPmf> {
    let n = p.len();
    assert_eq!(q.len(), n);
    assert!((u as usize) < n);
    let mut out = vec![0.0; n];
    condition_product_into(p.values(), q.values(), u, &mut out);
    normalize_slice(&mut out)?;
    Ok(SymbolPmf { values: out })
}

/// Marginal binary PMF `[P(bit=0), P(bit=1)]` of one bit lane.
pub fn marginalize_bit(p: &SymbolPmf, lane: usize) -> [f64; 2] {
    marginalize_bit_slice(p.values(), lane, KernelMode::Exact)
}

pub(crate) fn marginalize_bit_slice(values: &[f64], lane: usize, mode: KernelMode) -> [f64; 2] {
    debug_assert!(lane < values.len().trailing_zeros() as usize);
    let mask = 1usize << lane;
    let mut out = [0.0f64; 2];
    match mode {
        KernelMode::Exact => {
            for (label, &v) in values.iter().enumerate() {
                out[usize::from(label & mask != 0)] += v;
            }
        }
        KernelMode::MaxLog => {
            for (label, &v) in values.iter().enumerate() {
                let i = usize::from(label & mask != 0);
                if v > out[i] {
                    out[i] = v;
                }
            }
        }
    }
    let sum = out[0] + out[1];
    if sum > MASS_FLOOR {
        out[0] /= sum;
        out[1] /= sum;
    }
    out
}

/// Conditions a PMF on one bit lane taking `value`, zeroing the disagreeing
/// half and renormalizing.
pub fn condition_bit(p: &SymbolPmf, lane: usize, value: u8) -> Result<SymbolPmf> {
    let mut out = p.clone();
    condition_bit_slice(&mut out.values, lane, value)?;
    Ok(out)
}

pub(crate) fn condition_bit_slice(values: &mut [f64], lane: usize, value: u8) -> Result<()> {
    debug_assert!(value <= 1);
    let mask = 1usize << lane;
    for (label, v) in values.iter_mut().enumerate() {
        if (label & mask != 0) != (value == 1) {
            *v = 0.0;
        }
    }
    normalize_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// Direct `O(4^d)` convolution, the test oracle for the fast transform.
    pub(crate) fn xor_convolve_direct(p: &[f64], q: &[f64]) -> Vec<f64> {
        let n = p.len();
        let mut out = vec![0.0; n];
        for (a, o) in out.iter_mut().enumerate() {
            for (b, &qb) in q.iter().enumerate() {
                *o += p[a ^ b] * qb;
            }
        }
        out
    }

    fn random_pmf(rng: &mut impl rand::Rng, d: usize) -> SymbolPmf {
        let w: Vec<f64> = (0..1usize << d).map(|_| rng.gen_range(0.01..1.0)).collect();
        SymbolPmf::from_weights(w).unwrap()
    }

    #[test]
    fn convolve_d1_example() {
        let p = SymbolPmf::from_weights(vec![0.8, 0.2]).unwrap();
        let q = SymbolPmf::from_weights(vec![0.6, 0.4]).unwrap();
        let out = xor_convolve(&p, &q);
        assert!((out.values()[0] - 0.56).abs() < 1e-12);
        assert!((out.values()[1] - 0.44).abs() < 1e-12);
    }

    #[test]
    fn convolve_point_masses() {
        for (a, b) in [(3u8, 5u8), (0, 0), (15, 15), (9, 6)] {
            let p = SymbolPmf::point_mass(4, a);
            let q = SymbolPmf::point_mass(4, b);
            let out = xor_convolve(&p, &q);
            assert_eq!(out.argmax(), a ^ b);
            assert!((out.values()[(a ^ b) as usize] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_matches_direct_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = random_pmf(&mut rng, 4);
            let q = random_pmf(&mut rng, 4);
            let fast = xor_convolve(&p, &q);
            let direct = xor_convolve_direct(p.values(), q.values());
            for (f, d) in fast.values().iter().zip(&direct) {
                assert!((f - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_is_absorbing() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let q = random_pmf(&mut rng, 4);
        let out = xor_convolve(&SymbolPmf::uniform(4), &q);
        for &v in out.values() {
            assert!((v - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn condition_product_cases() {
        // u = 0 with uniform p returns normalize(q).
        let q = SymbolPmf::from_weights(vec![1.0, 2.0, 3.0, 2.0]).unwrap();
        let out = condition_product(&SymbolPmf::uniform(2), &q, 0).unwrap();
        for (a, b) in out.values().iter().zip(q.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Point masses with a ^ b = u give a point mass at b.
        let p = SymbolPmf::point_mass(4, 0b1010);
        let q = SymbolPmf::point_mass(4, 0b0110);
        let out = condition_product(&p, &q, 0b1100).unwrap();
        assert!((out.values()[0b0110] - 1.0).abs() < 1e-12);
        // Inconsistent point masses are degenerate.
        assert!(condition_product(&p, &q, 0).is_err());
    }

    #[test]
    fn condition_product_matches_direct() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = random_pmf(&mut rng, 4);
            let q = random_pmf(&mut rng, 4);
            let u = rand::Rng::gen_range(&mut rng, 0u8..16);
            let out = condition_product(&p, &q, u).unwrap();
            let mut direct: Vec<f64> = (0..16)
                .map(|b| p.values()[b ^ u as usize] * q.values()[b])
                .collect();
            let s: f64 = direct.iter().sum();
            for v in &mut direct {
                *v /= s;
            }
            for (a, b) in out.values().iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bit_lane_ops() {
        let p = SymbolPmf::uniform(4);
        for lane in 0..4 {
            let m = marginalize_bit(&p, lane);
            assert!((m[0] - 0.5).abs() < 1e-12 && (m[1] - 0.5).abs() < 1e-12);
        }
        let p = SymbolPmf::point_mass(4, 0b1010);
        assert!((marginalize_bit(&p, 1)[1] - 1.0).abs() < 1e-12);
        assert!((marginalize_bit(&p, 0)[0] - 1.0).abs() < 1e-12);
        assert!(condition_bit(&p, 0, 1).is_err());
    }

    #[test]
    fn sequential_conditioning_reaches_point_mass() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let p = random_pmf(&mut rng, 4);
        let label = 0b0110u8;
        let mut cur = p.clone();
        for lane in 0..4 {
            cur = condition_bit(&cur, lane, (label >> lane) & 1).unwrap();
        }
        assert!((cur.values()[label as usize] - 1.0).abs() < 1e-12);
        // The surviving entry's original mass equals the product of the
        // per-lane conditional probabilities, i.e. the chain rule.
        let mut chain = 1.0;
        let mut probe = p.clone();
        for lane in 0..4 {
            let m = marginalize_bit(&probe, lane);
            chain *= m[((label >> lane) & 1) as usize];
            probe = condition_bit(&probe, lane, (label >> lane) & 1).unwrap();
        }
        assert!((chain - p.values()[label as usize]).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn convolve_commutes_and_associates(seed in 0u64..1000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let a = random_pmf(&mut rng, 4);
            let b = random_pmf(&mut rng, 4);
            let c = random_pmf(&mut rng, 4);
            let ab = xor_convolve(&a, &b);
            let ba = xor_convolve(&b, &a);
            for (x, y) in ab.values().iter().zip(ba.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let ab_c = xor_convolve(&ab, &c);
            let a_bc = xor_convolve(&a, &xor_convolve(&b, &c));
            for (x, y) in ab_c.values().iter().zip(a_bc.values()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn transform_domain_identity(seed in 0u64..1000) {
            // WHT of the convolution equals the entrywise product of WHTs.
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let p = random_pmf(&mut rng, 3);
            let q = random_pmf(&mut rng, 3);
            let conv = xor_convolve_direct(p.values(), q.values());
            let mut tp = p.values().to_vec();
            let mut tq = q.values().to_vec();
            let mut tc = conv.clone();
            wht_inplace(&mut tp);
            wht_inplace(&mut tq);
            wht_inplace(&mut tc);
            for i in 0..tc.len() {
                prop_assert!((tc[i] - tp[i] * tq[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn lane_marginals_are_pmfs(seed in 0u64..1000) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let p = random_pmf(&mut rng, 4);
            for lane in 0..4 {
                let m = marginalize_bit(&p, lane);
                prop_assert!((m[0] + m[1] - 1.0).abs() < 1e-12);
            }
        }
    }
}
