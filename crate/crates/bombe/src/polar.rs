//! Polar codes over the additive group `(Z/2Z)^d`.
//!
//! Encoding uses the Arikan kernel `[[1,0],[1,1]]` with natural (non
//! bit-reversed) indexing and is systematic: info and CRC bits appear
//! verbatim at the unfrozen codeword positions. Because only the additive
//! group structure is used, encoding reduces to `d` parallel binary polar
//! encoders, while decoding operates jointly on [`SymbolPmf`] messages with
//! XOR-convolution and conditioned-product splitting kernels.
//!
//! Freezing is per bit lane inside a symbol, so a symbol can be partially
//! frozen.

use std::io::{BufRead, Write};

use crate::crc::CrcSpec;
use crate::error::{Error, Result};
use crate::pmf::{
    condition_bit_slice, condition_product_into, marginalize_bit_slice, normalize_slice,
    xor_convolve_into, xor_convolve_max_into, KernelMode, SymbolPmf,
};

/// One level's code: `n_l` symbols of `d` bits with a per-bit frozen mask
/// and an optional CRC.
#[derive(Debug, Clone)]
pub struct PolarLevelCode {
    n_l: usize,
    d: usize,
    /// Flattened `[symbol * d + lane]`, true = frozen to zero.
    frozen: Vec<bool>,
    crc: Option<CrcSpec>,
    /// Unfrozen positions most-reliable-first; payload bit `i` (info then
    /// CRC) occupies `placement[i]` in the systematic codeword.
    placement: Vec<(usize, usize)>,
    k_b: usize,
}

/// Per-incoming-path input to the list decoder. For the first decoding stage
/// there is a single input with metric zero.
#[derive(Debug, Clone)]
pub struct SclInput {
    pub channel_pmfs: Vec<SymbolPmf>,
    pub initial_metric: f64,
    /// Caller-side identifier, carried through to the outcome.
    pub tag: usize,
}

/// One surviving list path after decoding.
#[derive(Debug, Clone)]
pub struct SclOutcome {
    pub tag: usize,
    pub metric: f64,
    /// Decoded codeword, one d-bit label per symbol.
    pub codeword: Vec<u8>,
    pub info_bits: Vec<u8>,
    pub crc_ok: bool,
}

impl PolarLevelCode {
    /// Builds a level code. `ranking`, when given, lists positions
    /// most-reliable-first and fixes the payload placement; otherwise
    /// unfrozen positions are used in natural order.
    pub fn new(
        n_l: usize,
        d: usize,
        frozen: Vec<bool>,
        ranking: Option<&[(usize, usize)]>,
        crc: Option<CrcSpec>,
    ) -> Result<Self> {
        if !n_l.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "n_l = {n_l} is not a power of two"
            )));
        }
        if frozen.len() != n_l * d {
            return Err(Error::LengthMismatch {
                expected: n_l * d,
                got: frozen.len(),
            });
        }
        let placement: Vec<(usize, usize)> = match ranking {
            Some(order) => order
                .iter()
                .copied()
                .filter(|&(sym, lane)| !frozen[sym * d + lane])
                .collect(),
            None => (0..n_l)
                .flat_map(|sym| (0..d).map(move |lane| (sym, lane)))
                .filter(|&(sym, lane)| !frozen[sym * d + lane])
                .collect(),
        };
        let unfrozen = frozen.iter().filter(|&&f| !f).count();
        if placement.len() != unfrozen {
            return Err(Error::InvalidParameter(
                "ranking does not cover all unfrozen positions".into(),
            ));
        }
        let crc_width = crc.map_or(0, |c| c.width);
        if unfrozen < crc_width {
            return Err(Error::Infeasible(format!(
                "{unfrozen} unfrozen positions cannot carry a {crc_width}-bit CRC"
            )));
        }
        Ok(PolarLevelCode {
            n_l,
            d,
            frozen,
            crc,
            placement,
            k_b: unfrozen - crc_width,
        })
    }

    pub fn n_l(&self) -> usize {
        self.n_l
    }

    pub fn lanes(&self) -> usize {
        self.d
    }

    /// Information bits per codeword (CRC excluded).
    pub fn k_b(&self) -> usize {
        self.k_b
    }

    /// Unfrozen positions, i.e. transmitted payload bits including CRC.
    pub fn unfrozen_count(&self) -> usize {
        self.placement.len()
    }

    pub fn crc(&self) -> Option<CrcSpec> {
        self.crc
    }

    pub fn frozen_mask(&self) -> &[bool] {
        &self.frozen
    }

    pub fn is_frozen(&self, symbol: usize, lane: usize) -> bool {
        self.frozen[symbol * self.d + lane]
    }

    /// Code rate counting CRC bits as transmitted payload.
    pub fn rate(&self) -> f64 {
        self.placement.len() as f64 / (self.n_l * self.d) as f64
    }

    /// Systematic encoding: appends the CRC to `info`, places info+CRC at
    /// the unfrozen codeword positions in reliability order, and solves for
    /// the frozen-consistent codeword lane by lane (back-substitution pass
    /// followed by the Arikan butterfly).
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>> {
        if info.len() != self.k_b {
            return Err(Error::LengthMismatch {
                expected: self.k_b,
                got: info.len(),
            });
        }
        let mut payload = info.to_vec();
        if let Some(crc) = self.crc {
            payload.extend(crc.compute(info));
        }
        let mut desired = vec![0u8; self.n_l * self.d];
        for (i, &(sym, lane)) in self.placement.iter().enumerate() {
            desired[sym * self.d + lane] = payload[i];
        }

        let mut labels = vec![0u8; self.n_l];
        let mut u = vec![0u8; self.n_l];
        for lane in 0..self.d {
            let a: Vec<usize> = (0..self.n_l)
                .filter(|&t| !self.frozen[t * self.d + lane])
                .collect();
            u.iter_mut().for_each(|v| *v = 0);
            // x_j = XOR over { i in A : i superset of j } of u_i, solved in
            // descending order (the diagonal term is u_j itself).
            for (pos, &j) in a.iter().enumerate().rev() {
                let mut acc = desired[j * self.d + lane];
                for &i in &a[pos + 1..] {
                    if (j & i) == j {
                        acc ^= u[i];
                    }
                }
                u[j] = acc;
            }
            butterfly(&mut u);
            for (t, &x) in u.iter().enumerate() {
                labels[t] |= x << lane;
            }
        }
        Ok(labels)
    }

    /// Reads the systematic positions of a codeword back into payload order
    /// and checks the CRC.
    pub fn extract(&self, codeword: &[u8]) -> (Vec<u8>, bool) {
        assert_eq!(codeword.len(), self.n_l);
        let payload: Vec<u8> = self
            .placement
            .iter()
            .map(|&(sym, lane)| (codeword[sym] >> lane) & 1)
            .collect();
        let info = payload[..self.k_b].to_vec();
        let crc_ok = match self.crc {
            Some(crc) => crc.check(&info, &payload[self.k_b..]),
            None => true,
        };
        (info, crc_ok)
    }

    /// CA-SCL decoding on PMF messages.
    ///
    /// Each input spawns its own decoding tree with its own channel PMFs and
    /// starting metric; the list is pruned to `list` across all of them
    /// after every information-lane branch. Outcomes are sorted by metric.
    pub fn decode_scl(
        &self,
        inputs: &[SclInput],
        list: usize,
        mode: KernelMode,
    ) -> Result<Vec<SclOutcome>> {
        assert!(list >= 1);
        if inputs.is_empty() {
            return Err(Error::InvalidParameter("no decoder inputs".into()));
        }
        let q = 1usize << self.d;
        let log_n = self.n_l.trailing_zeros() as usize;
        let depths = log_n + 1;
        let mut ctx = Ctx {
            q,
            n_l: self.n_l,
            log_n,
            list,
            mode,
            scratch: vec![0.0; q],
            next_order: 0,
            penalty: self.d as f64 * std::f64::consts::LN_2,
        };

        let mut paths: Vec<Path> = Vec::with_capacity(inputs.len());
        for inp in inputs {
            if inp.channel_pmfs.len() != self.n_l {
                return Err(Error::LengthMismatch {
                    expected: self.n_l,
                    got: inp.channel_pmfs.len(),
                });
            }
            let mut pmfs = vec![0.0; depths * self.n_l * q];
            for (t, pmf) in inp.channel_pmfs.iter().enumerate() {
                assert_eq!(pmf.len(), q);
                pmfs[t * q..(t + 1) * q].copy_from_slice(pmf.values());
            }
            paths.push(Path {
                metric: inp.initial_metric,
                pmfs,
                psums: vec![0u8; depths * self.n_l],
                tag: inp.tag,
                order: ctx.next_order,
                leaf_label: 0,
            });
            ctx.next_order += 1;
        }
        if paths.len() > list {
            paths.sort_by(|a, b| {
                a.metric
                    .partial_cmp(&b.metric)
                    .unwrap()
                    .then(a.order.cmp(&b.order))
            });
            paths.truncate(list);
        }

        self.node(0, 0, self.n_l, &mut paths, &mut ctx);

        paths.sort_by(|a, b| {
            a.metric
                .partial_cmp(&b.metric)
                .unwrap()
                .then(a.order.cmp(&b.order))
        });
        let out = paths
            .into_iter()
            .map(|p| {
                let codeword = p.psums[..self.n_l].to_vec();
                let (info_bits, crc_ok) = self.extract(&codeword);
                SclOutcome {
                    tag: p.tag,
                    metric: p.metric,
                    codeword,
                    info_bits,
                    crc_ok,
                }
            })
            .collect();
        Ok(out)
    }

    fn node(&self, depth: usize, base: usize, size: usize, paths: &mut Vec<Path>, ctx: &mut Ctx) {
        if size == 1 {
            self.leaf(depth, base, paths, ctx);
            return;
        }
        let half = size / 2;
        let q = ctx.q;
        let n_l = ctx.n_l;

        // Upper split: f_i = conv(P_i, P_{i+half}).
        for path in paths.iter_mut() {
            let child_off = (depth + 1) * n_l * q;
            let (par, chi) = path.pmfs.split_at_mut(child_off);
            for i in 0..half {
                let p = &par[depth * n_l * q + (base + i) * q..][..q];
                let qv = &par[depth * n_l * q + (base + half + i) * q..][..q];
                let out = &mut chi[(base + i) * q..][..q];
                match ctx.mode {
                    KernelMode::Exact => xor_convolve_into(p, qv, out, &mut ctx.scratch),
                    KernelMode::MaxLog => xor_convolve_max_into(p, qv, out),
                }
                if normalize_slice(out).is_err() {
                    out.fill(1.0 / q as f64);
                    path.metric += ctx.penalty;
                }
            }
        }
        self.node(depth + 1, base, half, paths, ctx);

        // Lower split conditioned on the decided left half.
        for path in paths.iter_mut() {
            let child_off = (depth + 1) * n_l * q;
            let (par, chi) = path.pmfs.split_at_mut(child_off);
            for i in 0..half {
                let u = path.psums[(depth + 1) * n_l + base + i];
                let p = &par[depth * n_l * q + (base + i) * q..][..q];
                let qv = &par[depth * n_l * q + (base + half + i) * q..][..q];
                let out = &mut chi[(base + half + i) * q..][..q];
                condition_product_into(p, qv, u, out);
                if normalize_slice(out).is_err() {
                    out.fill(1.0 / q as f64);
                    path.metric += ctx.penalty;
                }
            }
        }
        self.node(depth + 1, base + half, half, paths, ctx);

        // Recombine partial sums: parent = (left ^ right, right).
        for path in paths.iter_mut() {
            for i in 0..half {
                let l = path.psums[(depth + 1) * n_l + base + i];
                let r = path.psums[(depth + 1) * n_l + base + half + i];
                path.psums[depth * n_l + base + i] = l ^ r;
                path.psums[depth * n_l + base + half + i] = r;
            }
        }
    }

    fn leaf(&self, depth: usize, leaf: usize, paths: &mut Vec<Path>, ctx: &mut Ctx) {
        debug_assert_eq!(depth, ctx.log_n);
        let q = ctx.q;
        let n_l = ctx.n_l;
        let slot = depth * n_l * q + leaf * q;
        for path in paths.iter_mut() {
            path.leaf_label = 0;
        }
        for lane in 0..self.d {
            if self.frozen[leaf * self.d + lane] {
                for path in paths.iter_mut() {
                    let slice = &mut path.pmfs[slot..slot + q];
                    let m = marginalize_bit_slice(slice, lane, ctx.mode);
                    if condition_bit_slice(slice, lane, 0).is_err() {
                        uniform_conditioned(slice, lane, 0);
                        path.metric += ctx.penalty;
                    } else {
                        path.metric -= m[0].ln();
                    }
                }
            } else {
                self.branch_lane(slot, lane, paths, ctx);
            }
        }
        for path in paths.iter_mut() {
            path.psums[depth * n_l + leaf] = path.leaf_label;
        }
    }

    fn branch_lane(&self, slot: usize, lane: usize, paths: &mut Vec<Path>, ctx: &mut Ctx) {
        let q = ctx.q;
        // (parent index, bit, candidate metric, parent order)
        let mut cands: Vec<(usize, u8, f64, u64)> = Vec::with_capacity(2 * paths.len());
        for (pi, path) in paths.iter().enumerate() {
            let m = marginalize_bit_slice(&path.pmfs[slot..slot + q], lane, ctx.mode);
            for b in 0..2u8 {
                let met = if m[b as usize] > 0.0 {
                    path.metric - m[b as usize].ln()
                } else {
                    path.metric + ctx.penalty
                };
                cands.push((pi, b, met, path.order));
            }
        }
        if cands.len() > ctx.list {
            cands.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap().then(a.3.cmp(&b.3)).then(a.1.cmp(&b.1)));
            cands.truncate(ctx.list);
        }

        let old = std::mem::take(paths);
        let mut uses = vec![0u8; old.len()];
        for &(pi, _, _, _) in &cands {
            uses[pi] += 1;
        }
        let mut slots: Vec<Option<Path>> = old.into_iter().map(Some).collect();
        let mut new_paths = Vec::with_capacity(cands.len());
        for (pi, b, met, _) in cands {
            let mut p = if uses[pi] > 1 {
                uses[pi] -= 1;
                let mut c = slots[pi].as_ref().unwrap().clone();
                c.order = ctx.next_order;
                ctx.next_order += 1;
                c
            } else {
                slots[pi].take().unwrap()
            };
            p.metric = met;
            {
                let slice = &mut p.pmfs[slot..slot + q];
                if condition_bit_slice(slice, lane, b).is_err() {
                    uniform_conditioned(slice, lane, b);
                }
            }
            p.leaf_label |= b << lane;
            new_paths.push(p);
        }
        *paths = new_paths;
    }
}

struct Ctx {
    q: usize,
    n_l: usize,
    log_n: usize,
    list: usize,
    mode: KernelMode,
    scratch: Vec<f64>,
    next_order: u64,
    penalty: f64,
}

#[derive(Clone)]
struct Path {
    metric: f64,
    /// Flat PMF memory, `[depth][position][label]`.
    pmfs: Vec<f64>,
    /// Flat partial-sum memory, `[depth][position]`.
    psums: Vec<u8>,
    tag: usize,
    order: u64,
    leaf_label: u8,
}

fn uniform_conditioned(slice: &mut [f64], lane: usize, value: u8) {
    let mask = 1usize << lane;
    let w = 2.0 / slice.len() as f64;
    for (label, v) in slice.iter_mut().enumerate() {
        *v = if (label & mask != 0) == (value == 1) { w } else { 0.0 };
    }
}

/// In-place Arikan transform `x = u * F^{(x) log n}` in natural order;
/// works on d-bit labels (lane-parallel XOR).
pub fn butterfly(labels: &mut [u8]) {
    debug_assert!(labels.len().is_power_of_two());
    let n = labels.len();
    let mut h = 1;
    while h < n {
        for i in 0..n {
            if i & h == 0 {
                labels[i] ^= labels[i | h];
            }
        }
        h <<= 1;
    }
}

/// Genie-aided rate-0 successive cancellation for Monte Carlo construction.
///
/// Runs SC on the channel PMFs assuming the all-zero codeword was sent.
/// Every position is forced to zero after recording whether the free
/// decision would have been wrong; returns one flag per `(symbol, lane)`.
/// Relative decision margin below which a genie decision counts as wrong.
const GENIE_TIE_EPS: f64 = 1e-9;

pub fn genie_sc_zero(
    n_l: usize,
    d: usize,
    channel_pmfs: &[SymbolPmf],
    mode: KernelMode,
) -> Vec<bool> {
    assert!(n_l.is_power_of_two());
    assert_eq!(channel_pmfs.len(), n_l);
    let q = 1usize << d;
    let log_n = n_l.trailing_zeros() as usize;
    let depths = log_n + 1;
    let mut pmfs = vec![0.0; depths * n_l * q];
    for (t, pmf) in channel_pmfs.iter().enumerate() {
        pmfs[t * q..(t + 1) * q].copy_from_slice(pmf.values());
    }
    let mut wrong = vec![false; n_l * d];
    let mut scratch = vec![0.0; q];
    genie_node(0, 0, n_l, d, q, n_l, log_n, mode, &mut pmfs, &mut wrong, &mut scratch);
    wrong
}

#[allow(clippy::too_many_arguments)]
fn genie_node(
    depth: usize,
    base: usize,
    size: usize,
    d: usize,
    q: usize,
    n_l: usize,
    log_n: usize,
    mode: KernelMode,
    pmfs: &mut [f64],
    wrong: &mut [bool],
    scratch: &mut [f64],
) {
    if size == 1 {
        let slot = log_n * n_l * q + base * q;
        for lane in 0..d {
            let slice = &mut pmfs[slot..slot + q];
            let m = marginalize_bit_slice(slice, lane, mode);
            // A margin at rounding-noise scale means the posterior carries no
            // evidence; breaking the tie toward the all-zero truth would make
            // a useless position look reliable, so count it as an error.
            if m[0] - m[1] <= GENIE_TIE_EPS * (m[0] + m[1]) {
                wrong[base * d + lane] = true;
            }
            if condition_bit_slice(slice, lane, 0).is_err() {
                // The true value has zero mass: the free decision is wrong.
                wrong[base * d + lane] = true;
                uniform_conditioned(slice, lane, 0);
            }
        }
        return;
    }
    let half = size / 2;
    let child_off = (depth + 1) * n_l * q;
    {
        let (par, chi) = pmfs.split_at_mut(child_off);
        for i in 0..half {
            let p = &par[depth * n_l * q + (base + i) * q..][..q];
            let qv = &par[depth * n_l * q + (base + half + i) * q..][..q];
            let out = &mut chi[(base + i) * q..][..q];
            match mode {
                KernelMode::Exact => xor_convolve_into(p, qv, out, scratch),
                KernelMode::MaxLog => xor_convolve_max_into(p, qv, out),
            }
            if normalize_slice(out).is_err() {
                out.fill(1.0 / q as f64);
            }
        }
    }
    genie_node(depth + 1, base, half, d, q, n_l, log_n, mode, pmfs, wrong, scratch);
    {
        let (par, chi) = pmfs.split_at_mut(child_off);
        for i in 0..half {
            // All decisions are forced to zero, so the partial sum is zero.
            let p = &par[depth * n_l * q + (base + i) * q..][..q];
            let qv = &par[depth * n_l * q + (base + half + i) * q..][..q];
            let out = &mut chi[(base + half + i) * q..][..q];
            condition_product_into(p, qv, 0, out);
            if normalize_slice(out).is_err() {
                out.fill(1.0 / q as f64);
            }
        }
    }
    genie_node(depth + 1, base + half, half, d, q, n_l, log_n, mode, pmfs, wrong, scratch);
}

/// Writes frozen masks of a multi-level code as text, one line per
/// `(level, symbol, lane, frozen_flag)`.
pub fn save_frozen_masks<W: Write>(codes: &[PolarLevelCode], mut w: W) -> Result<()> {
    for (level, code) in codes.iter().enumerate() {
        for sym in 0..code.n_l() {
            for lane in 0..code.lanes() {
                writeln!(
                    w,
                    "{level} {sym} {lane} {}",
                    u8::from(code.is_frozen(sym, lane))
                )?;
            }
        }
    }
    Ok(())
}

/// Reads masks written by [`save_frozen_masks`]: `[level][symbol * d + lane]`.
pub fn load_frozen_masks<R: BufRead>(r: R) -> Result<Vec<Vec<bool>>> {
    let mut levels: Vec<Vec<(usize, usize, bool)>> = Vec::new();
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("bad mask line: {line}")));
        }
        let level: usize = fields[0].parse().map_err(|_| Error::Parse(line.into()))?;
        let sym: usize = fields[1].parse().map_err(|_| Error::Parse(line.into()))?;
        let lane: usize = fields[2].parse().map_err(|_| Error::Parse(line.into()))?;
        let flag = match fields[3] {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Parse(line.into())),
        };
        if levels.len() <= level {
            levels.resize(level + 1, Vec::new());
        }
        levels[level].push((sym, lane, flag));
    }
    let mut out = Vec::with_capacity(levels.len());
    for entries in levels {
        let d = entries.iter().map(|e| e.1).max().map_or(0, |m| m + 1);
        let n_l = entries.iter().map(|e| e.0).max().map_or(0, |m| m + 1);
        let mut mask = vec![false; n_l * d];
        if entries.len() != n_l * d {
            return Err(Error::Parse("incomplete frozen mask".into()));
        }
        for (sym, lane, flag) in entries {
            mask[sym * d + lane] = flag;
        }
        out.push(mask);
    }
    Ok(out)
}
