//! Voronoi-shaped constellations on a lattice quotient `Lambda / r Lambda`.
//!
//! The constellation carries one representative per coset, chosen inside the
//! Voronoi cell of `r Lambda` after a small dither shift. Shaping strictly
//! reduces mean energy relative to the unshaped representatives `M x`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::lattice::{decompose_coeffs, Lattice, LatticeKind};

/// The `r^d` Voronoi-shaped coset representatives of `Lambda / r Lambda`,
/// with per-level coset labels and energy statistics.
#[derive(Debug, Clone)]
pub struct ShapedConstellation {
    lattice: Lattice,
    levels: u32,
    r: u64,
    dither: Vec<f64>,
    /// Ambient coordinates, indexed by the linear index of the coefficient
    /// vector (digit 0 least significant).
    points: Vec<Vec<f64>>,
    /// `residues[point][level]` is the level's `(Z/2Z)^d` residue as a d-bit
    /// label (bit k = dimension k).
    residues: Vec<Vec<u8>>,
    /// Mean squared norm per lattice symbol.
    es: f64,
}

impl ShapedConstellation {
    /// Builds the shaped constellation for `Lambda / 2^s Lambda` with the
    /// given dither.
    ///
    /// Fails with [`Error::DitherBoundary`] if any representative lands on a
    /// Voronoi boundary of `r Lambda`; pick a different dither in that case.
    pub fn build(lattice: Lattice, levels: u32, dither: Vec<f64>) -> Result<Self> {
        assert!(levels >= 1);
        assert_eq!(dither.len(), lattice.dimension());
        let d = lattice.dimension();
        let r = 1u64 << levels;
        let count = (r as usize).checked_pow(d as u32).expect("r^d overflow");

        let mut points = Vec::with_capacity(count);
        let mut residues = Vec::with_capacity(count);
        let mut es = 0.0;
        for index in 0..count {
            let x = coeffs_of_index(index, r, d);
            let signed: Vec<i64> = x.iter().map(|&v| v as i64).collect();
            let mut t = lattice.ambient(&signed);
            for (ti, di) in t.iter_mut().zip(&dither) {
                *ti += di;
            }
            let q = lattice.quantize_scaled(&t, r as f64);
            let y: Vec<f64> = t.iter().zip(&q.ambient).map(|(a, b)| a - b).collect();
            let margin = voronoi_margin(&lattice, r as f64, &y);
            if margin <= 1e-9 {
                return Err(Error::DitherBoundary { index });
            }
            es += y.iter().map(|v| v * v).sum::<f64>();
            residues.push(residue_labels(&x, levels, d));
            points.push(y);
        }
        es /= count as f64;
        Ok(ShapedConstellation {
            lattice,
            levels,
            r,
            dither,
            points,
            residues,
            es,
        })
    }

    /// Default dither for each supported lattice: a generic non-symmetric
    /// vector for `D4`, and `-(r-1)/2` per coordinate for `Z^d` (recovering
    /// symmetric PAM/QAM).
    pub fn default_dither(lattice: &Lattice, levels: u32) -> Vec<f64> {
        match lattice.kind() {
            LatticeKind::D4 => vec![0.5, 0.25, 0.125, 0.0625],
            LatticeKind::IntegerZd => {
                let r = (1u64 << levels) as f64;
                vec![-(r - 1.0) / 2.0; lattice.dimension()]
            }
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dimension(&self) -> usize {
        self.lattice.dimension()
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn r(&self) -> u64 {
        self.r
    }

    pub fn dither(&self) -> &[f64] {
        &self.dither
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Mean squared norm per lattice symbol.
    pub fn es(&self) -> f64 {
        self.es
    }

    /// Mean squared norm per real dimension.
    pub fn es_per_dim(&self) -> f64 {
        self.es / self.dimension() as f64
    }

    /// Maps a coefficient vector to its shaped representative.
    pub fn modulate(&self, x: &[u64]) -> &[f64] {
        &self.points[self.index_of(x)]
    }

    /// Linear index of a coefficient vector (digit 0 least significant).
    pub fn index_of(&self, x: &[u64]) -> usize {
        assert_eq!(x.len(), self.dimension());
        let mut idx = 0usize;
        for &v in x.iter().rev() {
            assert!(v < self.r);
            idx = idx * self.r as usize + v as usize;
        }
        idx
    }

    /// Coefficient vector of a linear point index.
    pub fn coeffs_of(&self, index: usize) -> Vec<u64> {
        coeffs_of_index(index, self.r, self.dimension())
    }

    /// The level-`i` residue of a point, as a d-bit label.
    pub fn level_residue(&self, point_index: usize, level: u32) -> u8 {
        assert!(level < self.levels);
        self.residues[point_index][level as usize]
    }

    /// Mean squared norm of the unshaped representative set
    /// `{ M x : x in [0, r)^d }`.
    pub fn unshaped_es(&self) -> f64 {
        let d = self.dimension();
        let mut es = 0.0;
        for index in 0..self.num_points() {
            let x = coeffs_of_index(index, self.r, d);
            let signed: Vec<i64> = x.iter().map(|&v| v as i64).collect();
            let y = self.lattice.ambient(&signed);
            es += y.iter().map(|v| v * v).sum::<f64>();
        }
        es / self.num_points() as f64
    }

    /// Writes the constellation as CSV: `index, x_0..x_{d-1}, y_0..y_{d-1}`.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.dimension();
        write!(w, "index")?;
        for k in 0..d {
            write!(w, ",x_{k}")?;
        }
        for k in 0..d {
            write!(w, ",y_{k}")?;
        }
        writeln!(w)?;
        for (index, point) in self.points.iter().enumerate() {
            write!(w, "{index}")?;
            for v in self.coeffs_of(index) {
                write!(w, ",{v}")?;
            }
            for v in point {
                write!(w, ",{v:.10}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn coeffs_of_index(index: usize, r: u64, d: usize) -> Vec<u64> {
    let mut idx = index;
    (0..d)
        .map(|_| {
            let v = (idx % r as usize) as u64;
            idx /= r as usize;
            v
        })
        .collect()
}

fn residue_labels(x: &[u64], levels: u32, d: usize) -> Vec<u8> {
    let bits = decompose_coeffs(x, levels).expect("coefficients in range");
    bits.iter()
        .map(|lvl| {
            let mut label = 0u8;
            for k in 0..d {
                label |= lvl[k] << k;
            }
            label
        })
        .collect()
}

/// Distance margin between `y` and the Voronoi boundary of `scale * Lambda`
/// around the origin: `min_p (||y - p|| - ||y||) / 2` over nearby nonzero
/// points `p`.
fn voronoi_margin(lattice: &Lattice, scale: f64, y: &[f64]) -> f64 {
    let d = lattice.dimension();
    let norm_y = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut margin = f64::INFINITY;
    let mut coeffs = vec![0i64; d];
    fn rec(
        lattice: &Lattice,
        scale: f64,
        y: &[f64],
        norm_y: f64,
        coeffs: &mut Vec<i64>,
        idx: usize,
        margin: &mut f64,
    ) {
        if idx == coeffs.len() {
            if coeffs.iter().all(|&c| c == 0) {
                return;
            }
            let p = lattice.ambient(coeffs);
            let dist = y
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b * scale) * (a - b * scale))
                .sum::<f64>()
                .sqrt();
            let m = (dist - norm_y) / 2.0;
            if m < *margin {
                *margin = m;
            }
            return;
        }
        for c in -2..=2 {
            coeffs[idx] = c;
            rec(lattice, scale, y, norm_y, coeffs, idx + 1, margin);
        }
        coeffs[idx] = 0;
    }
    rec(lattice, scale, y, norm_y, &mut coeffs, 0, &mut margin);
    margin
}
