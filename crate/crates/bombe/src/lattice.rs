//! Lattice definitions, nearest-point quantization and partition-chain
//! arithmetic.
//!
//! A lattice is described by a full-rank `d x d` generator matrix whose rows
//! are basis vectors: the lattice point with coefficient vector `x` sits at
//! the ambient coordinates `x * M`. Two lattices are supported, the integer
//! lattice `Z^d` and the checkerboard lattice `D4` (integer vectors with even
//! coordinate sum).

use crate::error::{Error, Result};

/// Which lattice family a [`Lattice`] instance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    /// The integer lattice `Z^d` (identity generator).
    IntegerZd,
    /// The 4-dimensional checkerboard lattice.
    D4,
}

/// A full-rank lattice in `R^d`.
#[derive(Debug, Clone)]
pub struct Lattice {
    kind: LatticeKind,
    dim: usize,
    /// Rows are basis vectors.
    gen: Vec<Vec<f64>>,
    /// Inverse of the generator, for ambient -> coefficient conversion.
    gen_inv: Vec<Vec<f64>>,
}

/// A lattice point expressed both in lattice (coefficient) and ambient
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint {
    pub coeffs: Vec<i64>,
    pub ambient: Vec<f64>,
}

impl Lattice {
    /// The integer lattice `Z^d`.
    pub fn integer(dim: usize) -> Self {
        assert!(dim >= 1);
        let mut gen = vec![vec![0.0; dim]; dim];
        for (i, row) in gen.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let gen_inv = gen.clone();
        Lattice {
            kind: LatticeKind::IntegerZd,
            dim,
            gen,
            gen_inv,
        }
    }

    /// The `D4` lattice with the standard Conway-Sloane basis
    /// `(1,-1,0,0), (0,1,-1,0), (0,0,1,-1), (0,1,1,0)`.
    pub fn d4() -> Self {
        let gen = vec![
            vec![1.0, -1.0, 0.0, 0.0],
            vec![0.0, 1.0, -1.0, 0.0],
            vec![0.0, 0.0, 1.0, -1.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ];
        let gen_inv = invert(&gen);
        Lattice {
            kind: LatticeKind::D4,
            dim: 4,
            gen,
            gen_inv,
        }
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn generator(&self) -> &[Vec<f64>] {
        &self.gen
    }

    /// Ambient coordinates of the lattice point with coefficient vector `x`.
    pub fn ambient(&self, coeffs: &[i64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (i, &c) in coeffs.iter().enumerate() {
            if c != 0 {
                for (o, &g) in out.iter_mut().zip(&self.gen[i]) {
                    *o += c as f64 * g;
                }
            }
        }
        out
    }

    /// Coefficient vector of an ambient-coordinate lattice point.
    pub fn coeffs_of(&self, ambient: &[f64]) -> Vec<i64> {
        assert_eq!(ambient.len(), self.dim);
        (0..self.dim)
            .map(|j| {
                let v: f64 = (0..self.dim).map(|i| ambient[i] * self.gen_inv[i][j]).sum();
                v.round() as i64
            })
            .collect()
    }

    /// Nearest lattice point to `point`.
    ///
    /// For `Z^d` this rounds each coordinate. For `D4` it rounds each
    /// coordinate and, when the coordinate sum is odd, moves the coordinate
    /// with the largest rounding error to its second-nearest integer. Exact
    /// ties resolve to the candidate that is lexicographically smallest in
    /// ambient coordinates.
    pub fn quantize(&self, point: &[f64]) -> LatticePoint {
        assert_eq!(point.len(), self.dim);
        assert!(point.iter().all(|v| v.is_finite()));
        let ambient = match self.kind {
            LatticeKind::IntegerZd => point.iter().map(|&v| round_half_down(v)).collect(),
            LatticeKind::D4 => quantize_d4(point),
        };
        let ambient: Vec<f64> = ambient;
        LatticePoint {
            coeffs: self.coeffs_of(&ambient),
            ambient,
        }
    }

    /// Nearest point of the scaled lattice `scale * Lambda`.
    pub fn quantize_scaled(&self, point: &[f64], scale: f64) -> LatticePoint {
        let shrunk: Vec<f64> = point.iter().map(|&v| v / scale).collect();
        let mut p = self.quantize(&shrunk);
        for v in &mut p.ambient {
            *v *= scale;
        }
        p
    }

    /// Minimum distance of `2^i * Lambda`, computed by brute force over
    /// short coefficient vectors so it stays valid if the basis changes.
    pub fn min_distance(&self, scale_log2: u32) -> f64 {
        let mut best = f64::INFINITY;
        let mut coeffs = vec![0i64; self.dim];
        search_min(self, &mut coeffs, 0, &mut best);
        best.sqrt() * (1u64 << scale_log2) as f64
    }
}

fn search_min(lat: &Lattice, coeffs: &mut Vec<i64>, idx: usize, best: &mut f64) {
    if idx == lat.dim {
        if coeffs.iter().all(|&c| c == 0) {
            return;
        }
        let p = lat.ambient(coeffs);
        let n: f64 = p.iter().map(|v| v * v).sum();
        if n < *best {
            *best = n;
        }
        return;
    }
    for c in -2..=2 {
        coeffs[idx] = c;
        search_min(lat, coeffs, idx + 1, best);
    }
    coeffs[idx] = 0;
}

/// Round to nearest integer; exact `.5` ties go to the smaller integer.
fn round_half_down(v: f64) -> f64 {
    (v - 0.5).ceil()
}

fn quantize_d4(point: &[f64]) -> Vec<f64> {
    let g: Vec<f64> = point.iter().map(|&v| round_half_down(v)).collect();
    let sum: f64 = g.iter().sum();
    if (sum as i64) % 2 == 0 {
        return g;
    }
    // Parity fix: exactly one coordinate must move to its second-nearest
    // integer. Enumerate both directions for every coordinate and keep the
    // closest candidate, lexicographically smallest on ties.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..point.len() {
        for delta in [-1.0, 1.0] {
            let mut cand = g.clone();
            cand[i] += delta;
            let dist: f64 = cand
                .iter()
                .zip(point)
                .map(|(c, p)| (c - p) * (c - p))
                .sum();
            let better = match &best {
                None => true,
                Some((bd, bc)) => {
                    dist < bd - 1e-12 || ((dist - bd).abs() <= 1e-12 && lex_less(&cand, bc))
                }
            };
            if better {
                best = Some((dist, cand));
            }
        }
    }
    best.unwrap().1
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        assert!(a[pivot][col].abs() > 1e-12, "generator matrix is singular");
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for row in 0..n {
            if row != col && a[row][col] != 0.0 {
                let f = a[row][col];
                for j in 0..n {
                    a[row][j] -= f * a[col][j];
                    inv[row][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

/// Nested chain `Lambda > 2 Lambda > ... > 2^s Lambda` with unit steps.
///
/// Every quotient `Q_i = 2^i Lambda / 2^{i+1} Lambda` has `2^d` elements and
/// the quotient minimum distance doubles from one level to the next.
#[derive(Debug, Clone)]
pub struct PartitionChain {
    base: Lattice,
    levels: u32,
    scale_factors: Vec<u64>,
}

impl PartitionChain {
    pub fn new(base: Lattice, levels: u32) -> Self {
        assert!(levels >= 1);
        let scale_factors = (0..=levels).map(|i| 1u64 << i).collect();
        PartitionChain {
            base,
            levels,
            scale_factors,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.base
    }

    /// Number of levels `s`.
    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Quotient size `r = 2^s`.
    pub fn r(&self) -> u64 {
        1u64 << self.levels
    }

    pub fn scale_factors(&self) -> &[u64] {
        &self.scale_factors
    }

    /// Minimum distance of the level-`i` quotient `2^i Lambda / 2^{i+1} Lambda`,
    /// i.e. the minimum norm of `2^i Lambda` (distinct cosets differ by a
    /// point of `2^i Lambda` outside `2^{i+1} Lambda`).
    pub fn quotient_min_distance(&self, level: u32) -> f64 {
        assert!(level < self.levels);
        self.base.min_distance(level)
    }
}

/// Bit-level decomposition `x = x^(0) + 2 x^(1) + ... + 2^(s-1) x^(s-1)` of a
/// coefficient vector with entries in `[0, 2^s)`.
pub fn decompose_coeffs(x: &[u64], s: u32) -> Result<Vec<Vec<u8>>> {
    let r = 1u64 << s;
    for &e in x {
        if e >= r {
            return Err(Error::CoeffOutOfRange {
                value: e as i64,
                modulus: r,
            });
        }
    }
    Ok((0..s)
        .map(|i| x.iter().map(|&e| ((e >> i) & 1) as u8).collect())
        .collect())
}

/// Inverse of [`decompose_coeffs`].
pub fn recompose_coeffs(levels: &[Vec<u8>]) -> Vec<u64> {
    assert!(!levels.is_empty());
    let d = levels[0].len();
    let mut out = vec![0u64; d];
    for (i, lvl) in levels.iter().enumerate() {
        assert_eq!(lvl.len(), d);
        for (o, &b) in out.iter_mut().zip(lvl) {
            *o += (b as u64) << i;
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// Brute-force nearest point over all integer vectors (even-sum for D4)
    /// within radius 3 of the input. Test oracle only.
    pub(crate) fn brute_force_nearest(lat: &Lattice, point: &[f64]) -> (Vec<f64>, f64) {
        let d = point.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut cand = vec![0.0; d];
        fn rec(
            lat: &Lattice,
            point: &[f64],
            cand: &mut Vec<f64>,
            idx: usize,
            best: &mut Option<(f64, Vec<f64>)>,
        ) {
            if idx == point.len() {
                if lat.kind() == LatticeKind::D4 {
                    let s: f64 = cand.iter().sum();
                    if (s as i64) % 2 != 0 {
                        return;
                    }
                }
                let dist: f64 = cand
                    .iter()
                    .zip(point)
                    .map(|(c, p)| (c - p) * (c - p))
                    .sum();
                match best {
                    None => *best = Some((dist, cand.clone())),
                    Some((bd, bc)) => {
                        if dist < *bd - 1e-12
                            || ((dist - *bd).abs() <= 1e-12 && lex_less(cand, bc))
                        {
                            *best = Some((dist, cand.clone()));
                        }
                    }
                }
                return;
            }
            let lo = point[idx].floor() as i64 - 3;
            let hi = point[idx].ceil() as i64 + 3;
            for v in lo..=hi {
                cand[idx] = v as f64;
                rec(lat, point, cand, idx + 1, best);
            }
        }
        rec(lat, point, &mut cand, 0, &mut best);
        let (d, p) = best.unwrap();
        (p, d)
    }

    #[test]
    fn quantize_d4_examples() {
        let lat = Lattice::d4();
        assert_eq!(lat.quantize(&[0.0; 4]).ambient, vec![0.0; 4]);
        // Frozen from the brute-force oracle above.
        assert_eq!(
            lat.quantize(&[0.6, 0.6, 0.1, 0.1]).ambient,
            vec![1.0, 1.0, 0.0, 0.0]
        );
        assert_eq!(
            lat.quantize(&[1.3, 0.2, 0.1, 0.0]).ambient,
            vec![2.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn quantize_matches_brute_force() {
        let lat = Lattice::d4();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p: Vec<f64> = (0..4).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let q = lat.quantize(&p);
            let (bp, bd) = brute_force_nearest(&lat, &p);
            let qd: f64 = q
                .ambient
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!((qd - bd).abs() < 1e-9, "dist mismatch at {p:?}");
            if (qd - bd).abs() < 1e-12 && q.ambient != bp {
                // Tie: distances must still agree exactly (checked above).
            }
        }
    }

    #[test]
    fn quantize_round_trip_coeffs() {
        let lat = Lattice::d4();
        let q = lat.quantize(&[2.1, -1.2, 0.4, 3.3]);
        assert_eq!(lat.ambient(&q.coeffs), q.ambient);
    }

    #[test]
    fn quantize_scaled_d4() {
        let lat = Lattice::d4();
        let q = lat.quantize_scaled(&[4.3, 0.2, 0.1, 0.0], 4.0);
        // Nearest point of 4*D4 to a point near (4,0,0,0): origin wins over
        // (4,4,0,0) etc; (4,0,0,0) itself is not in D4 (odd sum /4).
        assert_eq!(lat.ambient(&q.coeffs), vec![q.ambient[0] / 4.0, q.ambient[1] / 4.0, q.ambient[2] / 4.0, q.ambient[3] / 4.0]);
        let d0: f64 = [4.3, 0.2, 0.1, 0.0]
            .iter()
            .zip(&q.ambient)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(d0 <= 4.3f64.powi(2) + 0.05);
    }

    #[test]
    fn min_distance_values() {
        let d4 = Lattice::d4();
        assert!((d4.min_distance(0) - 2f64.sqrt()).abs() < 1e-12);
        assert!((d4.min_distance(1) - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        let z1 = Lattice::integer(1);
        assert!((z1.min_distance(0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn distance_doubles_along_chain() {
        for lat in [Lattice::d4(), Lattice::integer(2)] {
            let chain = PartitionChain::new(lat, 4);
            for i in 0..3 {
                let a = chain.quotient_min_distance(i);
                let b = chain.quotient_min_distance(i + 1);
                assert!((b - 2.0 * a).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn decompose_examples() {
        let levels = decompose_coeffs(&[3, 2, 1, 0], 2).unwrap();
        assert_eq!(levels[0], vec![1, 0, 1, 0]);
        assert_eq!(levels[1], vec![1, 1, 0, 0]);
        assert_eq!(
            decompose_coeffs(&[0, 0, 0, 0], 2).unwrap(),
            vec![vec![0; 4]; 2]
        );
        assert_eq!(
            decompose_coeffs(&[15, 15], 4).unwrap(),
            vec![vec![1; 2]; 4]
        );
        assert!(decompose_coeffs(&[4, 0], 2).is_err());
    }

    #[test]
    fn decompose_round_trip_exhaustive() {
        // All 256 coefficient vectors at d = 4, r = 4.
        for code in 0u64..256 {
            let x: Vec<u64> = (0..4).map(|i| (code >> (2 * i)) & 3).collect();
            let levels = decompose_coeffs(&x, 2).unwrap();
            assert_eq!(recompose_coeffs(&levels), x);
        }
    }
}
