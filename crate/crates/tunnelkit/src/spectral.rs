//! Eigensolves, spectral projections, and the Helffer-Sjostrand functional
//! calculus with resolvents of tridiagonal (or tridiagonalized) matrices.

use crate::assembly::{BlockOperator, RadialGrid};
use crate::error::{domain, Error, Result};
use crate::linalg::{self, SymTridiag};
use crate::par::*;
use crate::smooth::{smoothstep_jet, transition, Jet};
use faer::{c64, Mat};
use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::num::NonZeroUsize;

/// Largest dimension handled by dense eigensolves of coupled operators.
pub const DENSE_MAX: usize = 4000;

#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Mat<c64>,
}

fn check_hermitian(op: &BlockOperator) -> Result<()> {
    let d = op.hermitian_defect();
    let s = linalg::max_abs(&op.mat).max(1e-300);
    if d > 1e-12 * s {
        return Err(Error::Validation(format!("operator is not Hermitian (defect {d:.2e})")));
    }
    Ok(())
}

/// Full eigendecomposition, ascending. Block-diagonal operators are solved
/// channel by channel.
pub fn eigensolve(op: &BlockOperator) -> Result<Eigen> {
    check_hermitian(op)?;
    let n = op.dim();
    if n > DENSE_MAX {
        return Err(Error::Config(format!("dimension {n} exceeds the dense limit {DENSE_MAX}; use spectral_projection")));
    }
    if !op.is_block_diagonal() {
        let (values, vectors) = linalg::dense_eigh(&linalg::to_dense(&op.mat))?;
        return Ok(Eigen { values, vectors });
    }
    let bd = op.block_dim();
    let blocks: Vec<Result<(Vec<f64>, Mat<c64>)>> = op
        .channels()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| linalg::dense_eigh(&linalg::to_dense(&op.channel_block(j))))
        .collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
    let mut solved = Vec::with_capacity(blocks.len());
    for (b, res) in blocks.into_iter().enumerate() {
        let (vals, vecs) = res?;
        pairs.extend(vals.iter().enumerate().map(|(i, &v)| (v, b, i)));
        solved.push(vecs);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut vectors = Mat::<c64>::zeros(n, n);
    for (col, &(_, b, i)) in pairs.iter().enumerate() {
        for r in 0..bd {
            vectors[(b * bd + r, col)] = solved[b][(r, i)];
        }
    }
    Ok(Eigen { values: pairs.iter().map(|p| p.0).collect(), vectors })
}

/// An eigenvector stored on its support [offset, offset + data.len()).
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub offset: usize,
    pub data: Vec<c64>,
}

#[derive(Clone, Debug)]
pub struct SpectralProjection {
    pub energy: f64,
    pub values: Vec<f64>,
    pub columns: Vec<Column>,
    pub grid: RadialGrid,
    pub jmin: i64,
    pub jmax: i64,
    pub dim: usize,
    /// Some eigenvalue lies within 1e-6 of +-E.
    pub boundary_warning: bool,
}

impl SpectralProjection {
    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    /// P x.
    pub fn apply(&self, x: &[c64]) -> Vec<c64> {
        let mut out = vec![c64::new(0.0, 0.0); self.dim];
        for c in &self.columns {
            let s: c64 = c.data.iter().zip(&x[c.offset..]).map(|(v, y)| v.conj() * y).sum();
            for (o, v) in out[c.offset..].iter_mut().zip(&c.data) {
                *o += v * s;
            }
        }
        out
    }

    /// Coefficients <v_k, x>.
    pub fn coefficients(&self, x: &[c64]) -> Vec<c64> {
        self.columns
            .iter()
            .map(|c| c.data.iter().zip(&x[c.offset..]).map(|(v, y)| v.conj() * y).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for c in &self.columns {
            for (i, a) in c.data.iter().enumerate() {
                for (k, b) in c.data.iter().enumerate() {
                    m[(c.offset + i, c.offset + k)] += a * b.conj();
                }
            }
        }
        m
    }

    /// Dense factor (dim x rank) with orthonormal columns.
    pub fn factor(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dim, self.rank());
        for (k, c) in self.columns.iter().enumerate() {
            for (i, v) in c.data.iter().enumerate() {
                m[(c.offset + i, k)] = *v;
            }
        }
        m
    }
}

/// P_I(H) for I = [-E, E].
pub fn spectral_projection(op: &BlockOperator, energy: f64) -> Result<SpectralProjection> {
    if !(energy > 0.0) {
        return domain("spectral_projection needs E > 0");
    }
    check_hermitian(op)?;
    let guard = 1e-6;
    let mut values = Vec::new();
    let mut columns = Vec::new();
    let mut boundary = false;
    if op.is_block_diagonal() {
        let bd = op.block_dim();
        let per: Vec<(usize, Vec<f64>, Vec<Vec<c64>>, bool)> = op
            .channels()
            .enumerate()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(b, j)| {
                let block = op.channel_block(j);
                match linalg::as_tridiagonal(&block) {
                    Some(t) => {
                        let near = t.t.eigenvalues_in(energy - guard, energy + guard).len()
                            + t.t.eigenvalues_in(-energy - guard, -energy + guard).len();
                        let (v, vecs) = t.eigenpairs_in(-energy, next_up(energy));
                        (b, v, vecs, near > 0)
                    }
                    None => {
                        let (vals, vecs) = linalg::dense_eigh(&linalg::to_dense(&block)).expect("dense channel eigensolve");
                        let near = vals.iter().any(|v| (v.abs() - energy).abs() < guard);
                        let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= energy).collect();
                        let v = keep.iter().map(|&i| vals[i]).collect();
                        let cols = keep.iter().map(|&i| (0..bd).map(|r| vecs[(r, i)]).collect()).collect();
                        (b, v, cols, near)
                    }
                }
            })
            .collect();
        for (b, v, vecs, near) in per {
            boundary |= near;
            values.extend(v);
            columns.extend(vecs.into_iter().map(|data| Column { offset: b * bd, data }));
        }
    } else {
        let n = op.dim();
        if n > DENSE_MAX {
            return Err(Error::Config(format!("coupled operator of dimension {n} exceeds the dense limit {DENSE_MAX}")));
        }
        let (vals, vecs) = linalg::dense_eigh(&linalg::to_dense(&op.mat))?;
        for (i, &v) in vals.iter().enumerate() {
            boundary |= (v.abs() - energy).abs() < guard;
            if v.abs() <= energy {
                values.push(v);
                columns.push(Column { offset: 0, data: (0..n).map(|r| vecs[(r, i)]).collect() });
            }
        }
    }
    Ok(SpectralProjection {
        energy,
        values,
        columns,
        grid: op.grid,
        jmin: op.jmin,
        jmax: op.jmax,
        dim: op.dim(),
        boundary_warning: boundary,
    })
}

fn next_up(x: f64) -> f64 {
    x + x.abs() * f64::EPSILON + f64::MIN_POSITIVE
}

/// Smallest |eigenvalue|; channel-wise Sturm counts for block-diagonal
/// tridiagonal operators, sparse shift-invert otherwise.
pub fn min_abs_eigenvalue(op: &BlockOperator) -> Result<f64> {
    if op.is_block_diagonal() {
        let per: Vec<Result<f64>> = op
            .channels()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|j| {
                let block = op.channel_block(j);
                match linalg::as_tridiagonal(&block) {
                    Some(t) => Ok(tridiag_min_abs(&t.t)),
                    None => linalg::min_abs_eigenvalue(&block),
                }
            })
            .collect();
        let mut m = f64::INFINITY;
        for v in per {
            m = m.min(v?);
        }
        return Ok(m);
    }
    linalg::min_abs_eigenvalue(&op.mat)
}

fn tridiag_min_abs(t: &SymTridiag) -> f64 {
    let k = t.count_below(0.0);
    let mut m = f64::INFINITY;
    if k < t.len() {
        m = m.min(t.kth_eigenvalue(k).abs());
    }
    if k > 0 {
        m = m.min(t.kth_eigenvalue(k - 1).abs());
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub min_abs: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Does spec(op) avoid [-threshold, threshold]?
pub fn gap_check(op: &BlockOperator, threshold: f64) -> Result<GapReport> {
    let min_abs = min_abs_eigenvalue(op)?;
    Ok(GapReport { min_abs, threshold, pass: min_abs > threshold })
}

/// g = 1 on [-E, E], falls to 0 on E <= |x| <= E + taper through the
/// quarter-turn transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothIndicator {
    pub energy: f64,
    pub taper: f64,
}

impl SmoothIndicator {
    pub fn jet(&self, x: f64) -> Jet {
        let (e, w) = (self.energy, self.taper);
        let ax = x.abs();
        if ax <= e {
            Jet::constant(1.0)
        } else if ax >= e + w {
            Jet::constant(0.0)
        } else {
            let sgn = x.signum();
            let t = Jet::var(x).scale(sgn / w).shift(-e / w);
            transition(&t).1
        }
    }
    pub fn value(&self, x: f64) -> f64 {
        self.jet(x).value()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per x panel.
    pub gl_x: usize,
    /// Gauss-Legendre nodes per y panel.
    pub gl_y: usize,
    /// Dyadic y levels below eps/2 in the taper strips.
    pub levels: usize,
    /// x panels per taper strip.
    pub taper_panels: usize,
    /// Largest x panel width in units of eps.
    pub panel_width: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { gl_x: 8, gl_y: 10, levels: 8, taper_panels: 4, panel_width: 0.5 }
    }
}

/// Taylor almost-analytic extension of g with a y-cutoff tau(y/eps), and a
/// quadrature rule on the upper half of the rectangle |x| <= E + eps,
/// |y| <= eps. Nodes carry (1/pi) w dbar g~(z); the lower half is the
/// mirror image, so g(H) = X + X^* with X = sum_k c_k (H - z_k)^-1.
#[derive(Clone, Debug)]
pub struct AlmostAnalyticExtension {
    pub indicator: SmoothIndicator,
    pub eps: f64,
    pub order: usize,
    pub nodes: Vec<(c64, c64)>,
}

fn gl(n: usize) -> Vec<(f64, f64)> {
    let q = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    q.as_node_weight_pairs().to_vec()
}

fn tau_jet(s: f64) -> Jet {
    // tau(s) = 1 - S(2s - 1), flat 1 on [0, 1/2], 0 beyond 1
    let t = Jet::var(s).scale(2.0).shift(-1.0);
    Jet::constant(1.0).add(&smoothstep_jet(&t).scale(-1.0))
}

impl AlmostAnalyticExtension {
    /// Extension for the indicator of [-E, E] with taper width eps0/2 (or the
    /// override) and y-cutoff eps0.
    pub fn new(energy: f64, eps0: f64, taper: Option<f64>, order: usize, quad: QuadratureSpec) -> Result<Self> {
        if !(energy > 0.0 && eps0 > 0.0) {
            return domain("need E > 0 and eps0 > 0");
        }
        if !(1..=4).contains(&order) {
            return domain(format!("extension order must lie in 1..=4 (got {order})"));
        }
        let w = taper.unwrap_or(eps0 / 2.0);
        if !(w > 0.0) {
            return domain("taper width must be positive");
        }
        let indicator = SmoothIndicator { energy, taper: w };
        let mut ext = AlmostAnalyticExtension { indicator, eps: eps0, order, nodes: Vec::new() };
        ext.nodes = ext.build_nodes(&quad);
        Ok(ext)
    }

    /// dbar g~ at z = x + iy, y > 0.
    pub fn dbar(&self, z: c64) -> c64 {
        let (x, y) = (z.re, z.im);
        let n = self.order;
        let gj = self.indicator.jet(x);
        let tj = tau_jet(y / self.eps);
        let iy = c64::new(0.0, y);
        let mut fact = 1.0;
        for k in 1..=n {
            fact *= k as f64;
        }
        let mut out = iy.powi(n as i32) * (tj.value() * gj.deriv(n + 1) / fact);
        let tp = tj.deriv(1);
        if tp != 0.0 {
            let mut sum = c64::new(0.0, 0.0);
            let mut p = c64::new(1.0, 0.0);
            let mut f = 1.0;
            for k in 0..=n {
                if k > 0 {
                    p *= iy;
                    f *= k as f64;
                }
                sum += p * (gj.deriv(k) / f);
            }
            out += c64::new(0.0, tp / self.eps) * sum;
        }
        out * 0.5
    }

    /// g~(z) itself, for diagnostics.
    pub fn extension(&self, z: c64) -> c64 {
        let gj = self.indicator.jet(z.re);
        let iy = c64::new(0.0, z.im);
        let mut sum = c64::new(0.0, 0.0);
        let mut p = c64::new(1.0, 0.0);
        let mut f = 1.0;
        for k in 0..=self.order {
            if k > 0 {
                p *= iy;
                f *= k as f64;
            }
            sum += p * (gj.deriv(k) / f);
        }
        sum * tau_jet(z.im.abs() / self.eps).value()
    }

    fn build_nodes(&self, q: &QuadratureSpec) -> Vec<(c64, c64)> {
        let (e, w, eps) = (self.indicator.energy, self.indicator.taper, self.eps);
        let rx = gl(q.gl_x);
        let ry = gl(q.gl_y);
        let mut nodes = Vec::new();
        let panel = |x0: f64, x1: f64, y0: f64, y1: f64, nodes: &mut Vec<(c64, c64)>| {
            let (hx, hy) = ((x1 - x0) / 2.0, (y1 - y0) / 2.0);
            for &(u, wu) in &rx {
                for &(v, wv) in &ry {
                    let z = c64::new(x0 + hx * (u + 1.0), y0 + hy * (v + 1.0));
                    let c = self.dbar(z) * (wu * wv * hx * hy / PI);
                    if c.norm() > 0.0 {
                        nodes.push((z, c));
                    }
                }
            }
        };
        let split = |a: f64, b: f64, width: f64| -> Vec<(f64, f64)> {
            let k = ((b - a) / width).ceil().max(1.0) as usize;
            (0..k).map(|i| (a + (b - a) * i as f64 / k as f64, a + (b - a) * (i + 1) as f64 / k as f64)).collect()
        };
        // strip where the y-cutoff varies
        let width = q.panel_width * eps;
        let mut xs = Vec::new();
        xs.extend(split(-e - w, -e, (w / q.taper_panels as f64).min(width)));
        xs.extend(split(-e, e, width));
        xs.extend(split(e, e + w, (w / q.taper_panels as f64).min(width)));
        for &(a, b) in &xs {
            panel(a, b, eps / 2.0, eps, &mut nodes);
        }
        // taper strips below eps/2, dyadically refined toward the axis
        for side in [-1.0, 1.0] {
            let (a, b) = if side > 0.0 { (e, e + w) } else { (-e - w, -e) };
            for lvl in 0..q.levels {
                let y1 = eps / 2.0 * 0.5f64.powi(lvl as i32);
                let y0 = if lvl + 1 == q.levels { 0.0 } else { y1 / 2.0 };
                let pw = (w / q.taper_panels as f64).min(4.0 * y1);
                for (x0, x1) in split(a, b, pw) {
                    panel(x0, x1, y0, y1, &mut nodes);
                }
            }
        }
        nodes
    }

    /// Quadrature value of g at a real point.
    pub fn scalar(&self, t: f64) -> f64 {
        2.0 * self.nodes.iter().map(|(z, c)| (c / (c64::new(t, 0.0) - z)).re).sum::<f64>()
    }
}

/// Green's function of T - z for real symmetric tridiagonal T and Im z > 0.
/// With forward pivots p_k and backward pivots q_k,
/// G_jj = 1 / (p_j + q_j - (T_jj - z)) and G_ij = G_jj prod_{i<=k<j} (-e_k / p_k).
/// Both pivot families keep Im <= -Im z, so no pivot vanishes.
struct Green {
    diag: Vec<c64>,
    ratio: Vec<c64>,
}

impl Green {
    fn new(t: &SymTridiag, z: c64) -> Self {
        let n = t.len();
        let a: Vec<c64> = t.d.iter().map(|&x| c64::new(x, 0.0) - z).collect();
        let mut p = a.clone();
        for k in 1..n {
            p[k] = a[k] - t.e[k - 1] * t.e[k - 1] / p[k - 1];
        }
        let mut q = a.clone();
        for k in (0..n.saturating_sub(1)).rev() {
            q[k] = a[k] - t.e[k] * t.e[k] / q[k + 1];
        }
        let diag = (0..n).map(|j| (p[j] + q[j] - a[j]).inv()).collect();
        let ratio = (0..n.saturating_sub(1)).map(|k| -t.e[k] / p[k]).collect();
        Green { diag, ratio }
    }

    /// x += c G on the upper triangle (G is complex symmetric).
    fn add_upper(&self, c: c64, x: &mut Mat<c64>) {
        for j in 0..self.diag.len() {
            let mut g = c * self.diag[j];
            let col = x.col_mut(j).try_as_col_major_mut().expect("contiguous column").as_slice_mut();
            col[j] += g;
            for i in (0..j).rev() {
                g *= self.ratio[i];
                col[i] += g;
            }
        }
    }
}

/// X = sum_k c_k (T - z_k)^-1 for a real symmetric tridiagonal T.
fn accumulate_resolvents(t: &SymTridiag, nodes: &[(c64, c64)]) -> Mat<c64> {
    let n = t.len();
    let chunks: Vec<&[(c64, c64)]> = nodes.chunks(256).collect();
    let parts: Vec<Mat<c64>> = chunks
        .into_par_iter()
        .map(|chunk| {
            let mut x = Mat::<c64>::zeros(n, n);
            for &(z, c) in chunk {
                Green::new(t, z).add_upper(c, &mut x);
            }
            x
        })
        .collect();
    // fixed reduction order
    let mut x = Mat::<c64>::zeros(n, n);
    for p in parts {
        x += p;
    }
    for j in 0..n {
        for i in 0..j {
            x[(j, i)] = x[(i, j)];
        }
    }
    x
}

/// g(T) via the quadrature, in the basis of the phase-reduced tridiagonal.
fn hs_tridiagonal(t: &SymTridiag, ext: &AlmostAnalyticExtension) -> Mat<c64> {
    let x = accumulate_resolvents(t, &ext.nodes);
    &x + x.adjoint()
}

/// Tridiagonalize a dense Hermitian matrix: m = Q T Q^*.
fn tridiagonalize(m: &Mat<c64>) -> (Mat<c64>, SymTridiag) {
    let n = m.nrows();
    let a = nalgebra::DMatrix::<c64>::from_fn(n, n, |i, j| m[(i, j)]);
    let (q, d, e) = nalgebra::SymmetricTridiagonal::new(a).unpack();
    let qm = Mat::<c64>::from_fn(n, n, |i, j| q[(i, j)]);
    (qm, SymTridiag { d: d.iter().copied().collect(), e: e.iter().copied().collect() })
}

/// g(H) from the Helffer-Sjostrand quadrature of resolvents.
pub fn hs_functional_calculus(op: &BlockOperator, ext: &AlmostAnalyticExtension) -> Result<Mat<c64>> {
    check_hermitian(op)?;
    let n = op.dim();
    if op.is_block_diagonal() {
        let bd = op.block_dim();
        let mut out = Mat::<c64>::zeros(n, n);
        for (b, j) in op.channels().enumerate() {
            let block = op.channel_block(j);
            let g = match linalg::as_tridiagonal(&block) {
                Some(ht) => {
                    let gt = hs_tridiagonal(&ht.t, ext);
                    Mat::<c64>::from_fn(bd, bd, |i, k| ht.phases[i] * gt[(i, k)] * ht.phases[k].conj())
                }
                None => hs_dense(&linalg::to_dense(&block), ext),
            };
            for i in 0..bd {
                for k in 0..bd {
                    out[(b * bd + i, b * bd + k)] = g[(i, k)];
                }
            }
        }
        return Ok(out);
    }
    if n > DENSE_MAX {
        return Err(Error::Config(format!("dimension {n} exceeds the dense limit {DENSE_MAX}")));
    }
    Ok(hs_dense(&linalg::to_dense(&op.mat), ext))
}

fn hs_dense(m: &Mat<c64>, ext: &AlmostAnalyticExtension) -> Mat<c64> {
    let (q, t) = tridiagonalize(m);
    let gt = hs_tridiagonal(&t, ext);
    &q * &gt * q.adjoint()
}

/// g(H) by eigendecomposition, the reference for the quadrature.
pub fn g_by_eigen(op: &BlockOperator, g: &SmoothIndicator) -> Result<Mat<c64>> {
    let eig = eigensolve(op)?;
    let v = &eig.vectors;
    let n = op.dim();
    let gv: Vec<f64> = eig.values.iter().map(|&x| g.value(x)).collect();
    let scaled = Mat::<c64>::from_fn(n, n, |i, k| v[(i, k)] * gv[k]);
    Ok(&scaled * v.adjoint())
}

/// g(H) = (1/pi) int [(H - z)^-1 - (H~ - z)^-1] dbar g~, valid when H~ has no
/// spectrum in the rectangle.
pub fn resolvent_difference_projection(h: &BlockOperator, h_tilde: &BlockOperator, ext: &AlmostAnalyticExtension) -> Result<Mat<c64>> {
    h.same_shape(h_tilde)?;
    let need = ext.indicator.energy + ext.eps;
    let gap = gap_check(h_tilde, need)?;
    if !gap.pass {
        return Err(Error::Precondition(format!(
            "comparison operator has an eigenvalue of modulus {:.6e} <= E + eps0 = {need:.6e}",
            gap.min_abs
        )));
    }
    let a = hs_functional_calculus(h, ext)?;
    let b = hs_functional_calculus(h_tilde, ext)?;
    Ok(&a - &b)
}

/// Operator norm of a dense matrix.
pub fn op_norm(m: &Mat<c64>) -> Result<f64> {
    linalg::spectral_norm(m)
}
