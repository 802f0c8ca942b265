//! Radial discretization and channel-block assembly.
//!
//! Each channel uses two staggered node sets: R nodes r_k = (k+1/2)h and S
//! nodes s_k = (k+1)h, k = 0..n. The spin component that carries the
//! normalizable zero mode of the channel (spin up for j >= 0, spin down for
//! j < 0) lives on R; the other one on S. The first-order operator maps R to
//! S by a forward difference plus a midpoint average, which makes the
//! discrete adjoint in the r dr inner product exactly the companion stencil.
//! Amplitudes are stored in the symmetrized basis u = sqrt(w) psi, so the
//! weighted inner product is the Euclidean one and h_j is a real symmetric
//! tridiagonal matrix in the interleaved order (R_0, S_0, R_1, S_1, ...).

use crate::error::{Error, Result};
use crate::fields::FluxProfile;
use crate::linalg::{self, SpMat};
use crate::par::*;
use crate::partition::{PartitionOfUnity, Which};
use crate::perturbation::AngularCoupling;
use crate::tuning::EnergyLevels;
use crate::verify::WeightSpec;
use faer::c64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub n: usize,
    pub h: f64,
}

impl RadialGrid {
    pub fn new(n: usize, r_max: f64) -> Result<Self> {
        if n < 2 || !(r_max > 0.0) {
            return Err(Error::Domain(format!("grid needs n >= 2 and r_max > 0 (got {n}, {r_max})")));
        }
        Ok(RadialGrid { n, h: r_max / n as f64 })
    }
    pub fn r_max(&self) -> f64 {
        self.n as f64 * self.h
    }
    pub fn r(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }
    pub fn s(&self, k: usize) -> f64 {
        (k as f64 + 1.0) * self.h
    }
    pub fn w_r(&self, k: usize) -> f64 {
        self.r(k) * self.h
    }
    pub fn w_s(&self, k: usize) -> f64 {
        self.s(k) * self.h
    }
    pub fn r_nodes(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.r(k)).collect()
    }
}

/// Spin up is the R-grid component exactly when j >= 0.
pub fn up_on_r(j: i64) -> bool {
    j >= 0
}

/// Local index of a component inside the 2n channel block.
pub fn local_index(j: i64, up: bool, k: usize) -> usize {
    if up == up_on_r(j) {
        2 * k
    } else {
        2 * k + 1
    }
}

/// (radius, is_spin_up) of a local index.
pub fn node_of(grid: &RadialGrid, j: i64, local: usize) -> (f64, bool) {
    let k = local / 2;
    if local.is_multiple_of(2) {
        (grid.r(k), up_on_r(j))
    } else {
        (grid.s(k), !up_on_r(j))
    }
}

/// Quadrature weight of a local index.
pub fn weight_of(grid: &RadialGrid, local: usize) -> f64 {
    let k = local / 2;
    if local.is_multiple_of(2) {
        grid.w_r(k)
    } else {
        grid.w_s(k)
    }
}

/// Forward stencil K (n x n, R -> S) of the channel before symmetrization:
/// returns (K_kk, K_{k,k+1}) per row k.
fn channel_stencil(grid: &RadialGrid, profile: &FluxProfile, j: i64) -> Vec<(f64, f64)> {
    let h = grid.h;
    (0..grid.n)
        .map(|k| {
            let s = grid.s(k);
            let a = profile.a(s);
            if j >= 0 {
                // d/dr - j/r + A on spin up
                let f = -(j as f64) / s + a;
                (-1.0 / h + 0.5 * f, 1.0 / h + 0.5 * f)
            } else {
                // -d/dr - (j+1)/r + A on spin down
                let g = -((j + 1) as f64) / s + a;
                (1.0 / h + 0.5 * g, -1.0 / h + 0.5 * g)
            }
        })
        .collect()
}

/// Symmetrized first-order block K~ = W_s^(1/2) K W_r^(-1/2) as (diag, super) pairs.
pub fn channel_first_order(grid: &RadialGrid, profile: &FluxProfile, j: i64) -> Vec<(f64, f64)> {
    channel_stencil(grid, profile, j)
        .into_iter()
        .enumerate()
        .map(|(k, (d, u))| {
            let ws = grid.w_s(k).sqrt();
            let up = if k + 1 < grid.n { ws * u / grid.w_r(k + 1).sqrt() } else { 0.0 };
            (ws * d / grid.w_r(k).sqrt(), up)
        })
        .collect()
}

fn channel_triplets(grid: &RadialGrid, profile: &FluxProfile, j: i64, offset: usize, out: &mut Vec<(usize, usize, c64)>) {
    for (k, (d, u)) in channel_first_order(grid, profile, j).into_iter().enumerate() {
        let (p, q) = (offset + 2 * k, offset + 2 * k + 1);
        out.push((q, p, c64::new(d, 0.0)));
        out.push((p, q, c64::new(d, 0.0)));
        if k + 1 < grid.n {
            out.push((q, p + 2, c64::new(u, 0.0)));
            out.push((p + 2, q, c64::new(u, 0.0)));
        }
    }
}

/// The 2n x 2n block h_j = [[0, d_j*], [d_j, 0]] in the symmetrized basis.
pub fn discretize_channel(grid: &RadialGrid, profile: &FluxProfile, j: i64) -> Result<SpMat> {
    let mut t = Vec::with_capacity(8 * grid.n);
    channel_triplets(grid, profile, j, 0, &mut t);
    Ok(linalg::sparse(2 * grid.n, &t))
}

/// Discrete d_j (acting on psi samples, not on the symmetrized amplitudes):
/// maps R-samples of the primary component to S-samples of the other one.
pub fn apply_first_order(grid: &RadialGrid, profile: &FluxProfile, j: i64, psi_r: &[c64]) -> Vec<c64> {
    let st = channel_stencil(grid, profile, j);
    (0..grid.n)
        .map(|k| {
            let next = if k + 1 < grid.n { psi_r[k + 1] } else { c64::new(0.0, 0.0) };
            psi_r[k] * st[k].0 + next * st[k].1
        })
        .collect()
}

/// Discrete adjoint W_r^-1 K^T W_s: maps S-samples back to R-samples.
pub fn apply_first_order_adjoint(grid: &RadialGrid, profile: &FluxProfile, j: i64, phi_s: &[c64]) -> Vec<c64> {
    let st = channel_stencil(grid, profile, j);
    (0..grid.n)
        .map(|m| {
            let mut acc = phi_s[m] * st[m].0 * grid.w_s(m);
            if m > 0 {
                acc += phi_s[m - 1] * st[m - 1].1 * grid.w_s(m - 1);
            }
            acc / grid.w_r(m)
        })
        .collect()
}

/// Channel-major block operator on channels jmin..=jmax.
#[derive(Clone, Debug)]
pub struct BlockOperator {
    pub grid: RadialGrid,
    pub jmin: i64,
    pub jmax: i64,
    /// Largest channel distance |j - k| of a nonzero block.
    pub band: usize,
    pub mat: SpMat,
}

impl BlockOperator {
    pub fn channels(&self) -> impl Iterator<Item = i64> + Clone {
        self.jmin..=self.jmax
    }
    pub fn channel_count(&self) -> usize {
        (self.jmax - self.jmin + 1) as usize
    }
    pub fn block_dim(&self) -> usize {
        2 * self.grid.n
    }
    pub fn dim(&self) -> usize {
        self.channel_count() * self.block_dim()
    }
    pub fn offset(&self, j: i64) -> usize {
        (j - self.jmin) as usize * self.block_dim()
    }
    /// (channel, local index) of a global index.
    pub fn locate(&self, idx: usize) -> (i64, usize) {
        (self.jmin + (idx / self.block_dim()) as i64, idx % self.block_dim())
    }
    pub fn is_block_diagonal(&self) -> bool {
        self.band == 0
    }

    fn like(&self, mat: SpMat, band: usize) -> Self {
        BlockOperator { grid: self.grid, jmin: self.jmin, jmax: self.jmax, band, mat }
    }

    pub fn same_shape(&self, o: &BlockOperator) -> Result<()> {
        if self.grid != o.grid || self.jmin != o.jmin || self.jmax != o.jmax {
            return Err(Error::Shape(format!(
                "operators on channels {}..{} / {}..{} or different grids",
                self.jmin, self.jmax, o.jmin, o.jmax
            )));
        }
        Ok(())
    }

    pub fn channel_block(&self, j: i64) -> SpMat {
        let (lo, d) = (self.offset(j), self.block_dim());
        let t: Vec<_> = self
            .mat
            .triplet_iter()
            .filter(|t| t.row >= lo && t.row < lo + d && t.col >= lo && t.col < lo + d)
            .map(|t| (t.row - lo, t.col - lo, *t.val))
            .collect();
        linalg::sparse(d, &t)
    }

    pub fn mul(&self, o: &BlockOperator) -> Result<BlockOperator> {
        self.same_shape(o)?;
        Ok(self.like(&self.mat * &o.mat, self.band + o.band))
    }

    pub fn lincomb(&self, alpha: f64, beta: f64, o: &BlockOperator) -> Result<BlockOperator> {
        self.same_shape(o)?;
        Ok(self.like(linalg::lincomb(alpha, &self.mat, beta, &o.mat), self.band.max(o.band)))
    }

    pub fn scale(&self, s: f64) -> BlockOperator {
        self.like(linalg::scale(&self.mat, s), self.band)
    }

    pub fn adjoint(&self) -> BlockOperator {
        self.like(linalg::adjoint(&self.mat), self.band)
    }

    /// Add a multiplication operator f(j, r, spin_up) on the nodes.
    pub fn add_multiplication(&self, f: impl Fn(i64, f64, bool) -> f64) -> BlockOperator {
        let d = multiplication_diagonal(&self.grid, self.jmin, self.jmax, f);
        self.like(linalg::add_diagonal(&self.mat, &d), self.band)
    }

    /// Multiplication operator f(j, r, spin_up) with the shape of `self`.
    pub fn multiplication(&self, f: impl Fn(i64, f64, bool) -> f64) -> BlockOperator {
        let d = multiplication_diagonal(&self.grid, self.jmin, self.jmax, f);
        self.like(linalg::diagonal(&d), 0)
    }

    pub fn hermitian_defect(&self) -> f64 {
        linalg::hermitian_defect(&self.mat)
    }

    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        linalg::apply(&self.mat, x)
    }

    /// Smallest eigenvalue, per channel when block diagonal.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        if self.is_block_diagonal() {
            let chans: Vec<i64> = self.channels().collect();
            let mins: Vec<Result<f64>> = chans.into_par_iter().map(|j| linalg::min_eigenvalue(&self.channel_block(j))).collect();
            mins.into_iter().try_fold(f64::INFINITY, |acc, m| Ok(acc.min(m?)))
        } else {
            linalg::min_eigenvalue(&self.mat)
        }
    }
}

pub fn multiplication_diagonal(grid: &RadialGrid, jmin: i64, jmax: i64, f: impl Fn(i64, f64, bool) -> f64) -> Vec<f64> {
    let mut d = Vec::with_capacity((jmax - jmin + 1) as usize * 2 * grid.n);
    for j in jmin..=jmax {
        for l in 0..2 * grid.n {
            let (r, up) = node_of(grid, j, l);
            d.push(f(j, r, up));
        }
    }
    d
}

/// H0 = direct sum of h_j for |j| <= J.
pub fn assemble_free(grid: &RadialGrid, profile: &FluxProfile, big_j: i64) -> BlockOperator {
    let chans: Vec<i64> = (-big_j..=big_j).collect();
    let d = 2 * grid.n;
    let parts: Vec<Vec<(usize, usize, c64)>> = chans
        .into_par_iter()
        .map(|j| {
            let mut t = Vec::with_capacity(4 * d);
            channel_triplets(grid, profile, j, (j + big_j) as usize * d, &mut t);
            t
        })
        .collect();
    let all: Vec<_> = parts.into_iter().flatten().collect();
    BlockOperator { grid: *grid, jmin: -big_j, jmax: big_j, band: 0, mat: linalg::sparse(d * (2 * big_j + 1) as usize, &all) }
}

/// Number of Fourier modes needed so that the dropped tail is below `band_tol`.
pub fn coupling_band(grid: &RadialGrid, coupling: &AngularCoupling, band_tol: f64) -> usize {
    if coupling.beta.is_infinite() {
        return 0;
    }
    let vmax = (0..grid.n).map(|k| coupling.envelope(grid.s(k))).fold(0.0, f64::max);
    if vmax <= band_tol {
        return 0;
    }
    let b = ((vmax / band_tol).ln() / coupling.beta).floor() as usize + 1;
    b.min(coupling.n_max)
}

/// The perturbation W as a block operator (coupling rows <phi_j, W~(j-k) psi_k>).
pub fn assemble_coupling(grid: &RadialGrid, coupling: &AngularCoupling, big_j: i64, band: usize) -> BlockOperator {
    let n = grid.n;
    let d = 2 * n;
    // h-basis modes at R and S nodes
    let at_r: Vec<Vec<[c64; 4]>> = (0..n).into_par_iter().map(|k| coupling.h_modes(grid.r(k))).collect();
    let at_s: Vec<Vec<[c64; 4]>> = (0..n).into_par_iter().map(|k| coupling.h_modes(grid.s(k))).collect();
    let nm = coupling.n_max as i64;
    let mut pairs = Vec::new();
    for j in -big_j..=big_j {
        for k in j..=(j + band as i64).min(big_j) {
            pairs.push((j, k));
        }
    }
    let parts: Vec<Vec<(usize, usize, c64)>> = pairs
        .into_par_iter()
        .map(|(j, k)| {
            let mut t = Vec::new();
            let nmode = j - k;
            if nmode.abs() > nm {
                return t;
            }
            let mi = (nmode + nm) as usize;
            let oj = (j + big_j) as usize * d;
            let ok = (k + big_j) as usize * d;
            for (a, up_a) in [(0usize, true), (1, false)] {
                for (b, up_b) in [(0usize, true), (1, false)] {
                    if j == k && a > b {
                        continue;
                    }
                    let e = 2 * a + b;
                    let row_on_r = up_a == up_on_r(j);
                    let col_on_r = up_b == up_on_r(k);
                    let diag_elem = j == k && a == b;
                    let mut push = |row: usize, col: usize, v: c64| {
                        if v.norm() == 0.0 {
                            return;
                        }
                        t.push((row, col, v));
                        if !diag_elem || row != col {
                            t.push((col, row, v.conj()));
                        }
                    };
                    match (row_on_r, col_on_r) {
                        (true, true) | (false, false) => {
                            for m in 0..n {
                                let (l_row, l_col) = if row_on_r { (2 * m, 2 * m) } else { (2 * m + 1, 2 * m + 1) };
                                let w = if row_on_r { at_r[m][mi][e] } else { at_s[m][mi][e] };
                                let w = if diag_elem { c64::new(w.re, 0.0) } else { w };
                                push(oj + l_row, ok + l_col, w);
                            }
                        }
                        (true, false) | (false, true) => {
                            for kk in 0..n {
                                let w = at_r[kk][mi][e];
                                for m in [kk.wrapping_sub(1), kk] {
                                    if m >= n {
                                        continue;
                                    }
                                    let f = grid.w_r(kk).sqrt() / (2.0 * grid.w_s(m).sqrt());
                                    let (lr, lc) = if row_on_r { (2 * kk, 2 * m + 1) } else { (2 * m + 1, 2 * kk) };
                                    push(oj + lr, ok + lc, w * f);
                                }
                            }
                        }
                    }
                }
            }
            t
        })
        .collect();
    let all: Vec<_> = parts.into_iter().flatten().collect();
    BlockOperator { grid: *grid, jmin: -big_j, jmax: big_j, band, mat: linalg::sparse(d * (2 * big_j + 1) as usize, &all) }
}

/// H = H0 + W on |j| <= J with the Fourier band fixed by `band_tol`.
pub fn assemble_full(
    grid: &RadialGrid,
    profile: &FluxProfile,
    coupling: Option<&AngularCoupling>,
    big_j: i64,
    band_tol: f64,
) -> Result<BlockOperator> {
    let h0 = assemble_free(grid, profile, big_j);
    let Some(c) = coupling else { return Ok(h0) };
    let band = coupling_band(grid, c, band_tol);
    if band as i64 > 2 * big_j {
        return Err(Error::Config(format!("channel cutoff J = {big_j} cannot hold a coupling band of {band}")));
    }
    let w = assemble_coupling(grid, c, big_j, band);
    let band = if c.is_trivial() { 0 } else { band };
    let mut h = h0.lincomb(1.0, 1.0, &w)?;
    h.band = band;
    Ok(h)
}

/// H~ = H + sigma_3 E chi, diagonal in channels.
pub fn assemble_comparison(h: &BlockOperator, levels: &EnergyLevels, partition: &PartitionOfUnity) -> Result<BlockOperator> {
    if levels.j_max < h.jmax.max(-h.jmin) {
        return Err(Error::Shape(format!("energy levels cover |j| <= {} but operator needs {}", levels.j_max, h.jmax.max(-h.jmin))));
    }
    Ok(h.add_multiplication(|j, r, up| {
        let v = levels.e(j) * partition.eval(j as f64, Which::Chi, r).0;
        if up {
            v
        } else {
            -v
        }
    }))
}

/// e^F Op e^-F for a channel-diagonal radial weight F.
pub fn weight_conjugate(op: &BlockOperator, weight: &WeightSpec) -> Result<BlockOperator> {
    let f = multiplication_diagonal(&op.grid, op.jmin, op.jmax, |j, r, _| weight.value(j, r));
    let fmax = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if fmax > 700.0 {
        let r_hint = op.grid.r_max() * (700.0 / fmax);
        return Err(Error::Overflow(format!("weight reaches {fmax:.1} on the grid; reduce r_max to about {r_hint:.2}")));
    }
    let t: Vec<_> = linalg::triplets(&op.mat)
        .into_iter()
        .map(|(i, j, v)| (i, j, v * (f[i] - f[j]).exp()))
        .collect();
    Ok(BlockOperator { mat: linalg::sparse(op.dim(), &t), ..op.clone() })
}

/// Smallest eigenvalue of rhs - lhs; >= -tol certifies lhs <= rhs on the grid.
pub fn form_inequality_margin(lhs: &BlockOperator, rhs: &BlockOperator) -> Result<f64> {
    rhs.same_shape(lhs)?;
    let diff = rhs.lincomb(1.0, -1.0, lhs)?;
    diff.min_eigenvalue()
}

/// Spinor amplitudes in the symmetrized basis, channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub grid: RadialGrid,
    pub jmin: i64,
    pub jmax: i64,
    pub amps: Vec<c64>,
}

impl StateVector {
    /// Sample psi(j, r, spin_up) on the nodes.
    pub fn from_fn(grid: &RadialGrid, jmin: i64, jmax: i64, f: impl Fn(i64, f64, bool) -> c64) -> Self {
        let mut amps = Vec::with_capacity((jmax - jmin + 1) as usize * 2 * grid.n);
        for j in jmin..=jmax {
            for l in 0..2 * grid.n {
                let (r, up) = node_of(grid, j, l);
                amps.push(f(j, r, up) * weight_of(grid, l).sqrt());
            }
        }
        StateVector { grid: *grid, jmin, jmax, amps }
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.amps)
    }

    pub fn channel(&self, j: i64) -> &[c64] {
        let d = 2 * self.grid.n;
        let o = (j - self.jmin) as usize * d;
        &self.amps[o..o + d]
    }
}
