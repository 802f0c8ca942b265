//! Linear-algebra plumbing: sparse Hermitian helpers on top of faer, a
//! shift-invert Lanczos for the bottom of the spectrum, and a Sturm-sequence
//! solver for Hermitian tridiagonal channel blocks.

use crate::error::{Error, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, Mat, Side};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SpMat = SparseColMat<usize, c64>;

/// Matrices up to this size are diagonalized densely.
pub const DENSE_LIMIT: usize = 1200;

pub fn sparse(dim: usize, trips: &[(usize, usize, c64)]) -> SpMat {
    let t: Vec<Triplet<usize, usize, c64>> = trips.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
    SparseColMat::try_new_from_triplets(dim, dim, &t).expect("valid triplets")
}

pub fn triplets(a: &SpMat) -> Vec<(usize, usize, c64)> {
    a.triplet_iter().map(|t| (t.row, t.col, *t.val)).collect()
}

pub fn identity(dim: usize) -> SpMat {
    diagonal(&vec![1.0; dim])
}

pub fn diagonal(d: &[f64]) -> SpMat {
    let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, c64::new(v, 0.0))).collect();
    sparse(d.len(), &t)
}

pub fn add_diagonal(a: &SpMat, d: &[f64]) -> SpMat {
    a + &diagonal(d)
}

pub fn scale(a: &SpMat, s: f64) -> SpMat {
    let t: Vec<_> = triplets(a).into_iter().map(|(i, j, v)| (i, j, v * s)).collect();
    sparse(a.nrows(), &t)
}

/// alpha a + beta b.
pub fn lincomb(alpha: f64, a: &SpMat, beta: f64, b: &SpMat) -> SpMat {
    &scale(a, alpha) + &scale(b, beta)
}

pub fn adjoint(a: &SpMat) -> SpMat {
    let t: Vec<_> = triplets(a).into_iter().map(|(i, j, v)| (j, i, v.conj())).collect();
    sparse(a.ncols(), &t)
}

/// max |a_ij - conj(a_ji)|.
pub fn hermitian_defect(a: &SpMat) -> f64 {
    let d = a - &adjoint(a);
    triplets(&d).iter().map(|t| t.2.norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &SpMat) -> f64 {
    a.triplet_iter().map(|t| t.val.norm()).fold(0.0, f64::max)
}

/// Upper bound on the operator norm via the maximal absolute row sum.
pub fn norm_bound(a: &SpMat) -> f64 {
    let mut rows = vec![0.0; a.nrows()];
    for t in a.triplet_iter() {
        rows[t.row] += t.val.norm();
    }
    rows.into_iter().fold(0.0, f64::max)
}

pub fn to_dense(a: &SpMat) -> Mat<c64> {
    a.to_dense()
}

pub fn apply(a: &SpMat, x: &[c64]) -> Vec<c64> {
    let mut y = vec![c64::new(0.0, 0.0); a.nrows()];
    for t in a.triplet_iter() {
        y[t.row] += *t.val * x[t.col];
    }
    y
}

/// Gershgorin lower bound for the spectrum of a Hermitian matrix.
pub fn gershgorin_lower(a: &SpMat) -> f64 {
    let n = a.nrows();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    for t in a.triplet_iter() {
        if t.row == t.col {
            diag[t.row] += t.val.re;
        } else {
            off[t.row] += t.val.norm();
        }
    }
    (0..n).map(|i| diag[i] - off[i]).fold(f64::INFINITY, f64::min)
}

/// Full Hermitian eigendecomposition (ascending).
pub fn dense_eigh(m: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let eig = m.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Numerical(format!("{e:?}")))?;
    let vals: Vec<f64> = eig.S().column_vector().iter().map(|v| v.re).collect();
    Ok((vals, eig.U().to_owned()))
}

pub fn dense_eigenvalues(m: &Mat<c64>) -> Result<Vec<f64>> {
    let mut v: Vec<f64> = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("{e:?}")))?;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn positive_definite(a: &SpMat, shift: f64) -> bool {
    let m = add_diagonal(a, &vec![-shift; a.nrows()]);
    m.sp_cholesky(Side::Lower).is_ok()
}

/// Ritz pairs of a Hermitian operator after `steps` Lanczos steps with full
/// reorthogonalization: (Ritz value, residual norm), ascending.
fn lanczos(dim: usize, steps: usize, op: &dyn Fn(&[c64]) -> Vec<c64>, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<c64> = (0..dim).map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let nrm = norm(&q);
    q.iter_mut().for_each(|z| *z /= nrm);
    let mut basis: Vec<Vec<c64>> = vec![q];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let steps = steps.min(dim);
    for k in 0..steps {
        let mut w = op(&basis[k]);
        let a: f64 = basis[k].iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c: c64 = b.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                w.iter_mut().zip(b).for_each(|(y, x)| *y -= c * x);
            }
        }
        let bnorm = norm(&w);
        beta.push(bnorm);
        if k + 1 == steps || bnorm < 1e-14 * a.abs().max(1e-300) {
            break;
        }
        w.iter_mut().for_each(|z| *z /= bnorm);
        basis.push(w);
    }
    let m = alpha.len();
    let t = Mat::<f64>::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = t.self_adjoint_eigen(Side::Lower).expect("small tridiagonal eigenproblem");
    let s = eig.S().column_vector();
    (0..m).map(|i| (s[i], beta[m - 1] * eig.U()[(m - 1, i)].abs())).collect()
}

fn lanczos_top(dim: usize, steps: usize, op: &dyn Fn(&[c64]) -> Vec<c64>, seed: u64) -> (f64, f64) {
    *lanczos(dim, steps, op, seed).last().expect("at least one Lanczos step")
}

/// Smallest |eigenvalue| of a sparse Hermitian matrix: dense for small
/// sizes, otherwise Lanczos on the inverse through a sparse LU.
pub fn min_abs_eigenvalue(a: &SpMat) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    if n <= DENSE_LIMIT {
        return Ok(dense_eigenvalues(&to_dense(a))?.into_iter().map(f64::abs).fold(f64::INFINITY, f64::min));
    }
    let lu = a.sp_lu().map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))?;
    let op = |x: &[c64]| -> Vec<c64> {
        let rhs = Mat::<c64>::from_fn(n, 1, |i, _| x[i]);
        let y = lu.solve(&rhs);
        (0..n).map(|i| y[(i, 0)]).collect()
    };
    let mut steps = 80;
    for round in 0..4 {
        let ritz = lanczos(n, steps, &op, 101 + round);
        let &(theta, resid) = ritz.iter().max_by(|a, b| a.0.abs().total_cmp(&b.0.abs())).unwrap();
        // |1/lambda - theta| <= resid  =>  relative error of 1/theta about resid/|theta|
        if resid <= 1e-10 * theta.abs() {
            return Ok(1.0 / theta.abs());
        }
        steps *= 2;
    }
    Err(Error::Numerical("inverse Lanczos did not converge".into()))
}

/// Smallest eigenvalue of a sparse Hermitian matrix. Dense for small sizes;
/// otherwise shift-invert Lanczos with Cholesky factorizations, finished by a
/// definiteness certificate just below the returned value.
pub fn min_eigenvalue(a: &SpMat) -> Result<f64> {
    let n = a.nrows();
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    if n <= DENSE_LIMIT {
        return Ok(dense_eigenvalues(&to_dense(a))?[0]);
    }
    let scale = norm_bound(a).max(1e-300);
    let mut s = gershgorin_lower(a) - 1e-3 * scale;
    let mut seed = 7u64;
    for _round in 0..40 {
        let shifted = add_diagonal(a, &vec![-s; n]);
        let llt = match shifted.sp_cholesky(Side::Lower) {
            Ok(f) => f,
            Err(_) => return Err(Error::Numerical("shift above the spectrum bottom".into())),
        };
        let op = |x: &[c64]| -> Vec<c64> {
            let rhs = Mat::<c64>::from_fn(n, 1, |i, _| x[i]);
            let y = llt.solve(&rhs);
            (0..n).map(|i| y[(i, 0)]).collect()
        };
        let (theta, resid) = lanczos_top(n, 60, &op, seed);
        seed += 1;
        let est = s + 1.0 / theta;
        let gap = est - s;
        // eigenvalue error of the Ritz pair, mapped back from 1/(lambda - s)
        let err = resid / (theta * theta);
        let tol = (1e-12 * scale).max(1e-14);
        if err <= tol.max(1e-10 * gap) {
            let cert = est - (10.0 * err).max(tol);
            if positive_definite(a, cert) {
                return Ok(est);
            }
        }
        let mut next = est - (0.05 * gap).max(100.0 * err);
        let mut tries = 0;
        while !positive_definite(a, next) && tries < 30 {
            next = s + 0.5 * (next - s);
            tries += 1;
        }
        s = next.min(est - tol);
    }
    Err(Error::Numerical("shift-invert Lanczos did not converge".into()))
}

/// Real symmetric tridiagonal matrix: diagonal d, off-diagonal e (len n-1).
#[derive(Clone, Debug)]
pub struct SymTridiag {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

/// A Hermitian tridiagonal matrix reduced to real form: A = P T P* with P a
/// diagonal of unit phases.
#[derive(Clone, Debug)]
pub struct HermTridiag {
    pub t: SymTridiag,
    pub phases: Vec<c64>,
}

/// Extract the tridiagonal structure if `a` has no entries beyond |i-j| = 1.
pub fn as_tridiagonal(a: &SpMat) -> Option<HermTridiag> {
    let n = a.nrows();
    let mut d = vec![0.0; n];
    let mut sub = vec![c64::new(0.0, 0.0); n.saturating_sub(1)];
    for t in a.triplet_iter() {
        if t.row == t.col {
            d[t.row] += t.val.re;
        } else if t.row == t.col + 1 {
            sub[t.col] += *t.val;
        } else if t.col != t.row + 1 {
            return None;
        }
    }
    let mut phases = vec![c64::new(1.0, 0.0); n];
    let mut e = vec![0.0; sub.len()];
    for i in 0..sub.len() {
        let m = sub[i].norm();
        e[i] = m;
        phases[i + 1] = if m > 0.0 { phases[i] * sub[i] / m } else { phases[i] };
    }
    Some(HermTridiag { t: SymTridiag { d, e }, phases })
}

impl SymTridiag {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn norm_bound(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { self.e[i - 1].abs() } else { 0.0 };
                let r = if i + 1 < n { self.e[i].abs() } else { 0.0 };
                self.d[i].abs() + l + r
            })
            .fold(0.0, f64::max)
    }

    /// Number of eigenvalues strictly below x (Sturm sequence).
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE.sqrt() * (1.0 + self.norm_bound());
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let off = if i > 0 { self.e[i - 1] * self.e[i - 1] / q } else { 0.0 };
            q = self.d[i] - x - off;
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The k-th smallest eigenvalue (0-based) by bisection.
    pub fn kth_eigenvalue(&self, k: usize) -> f64 {
        let b = self.norm_bound();
        let (mut lo, mut hi) = (-b - 1.0, b + 1.0);
        let tol = 4.0 * f64::EPSILON * b.max(1.0);
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvalues in [lo, hi), ascending.
    pub fn eigenvalues_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        let (a, b) = (self.count_below(lo), self.count_below(hi));
        (a..b).map(|k| self.kth_eigenvalue(k)).collect()
    }

    pub fn all_eigenvalues(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.kth_eigenvalue(k)).collect()
    }

    /// Solve (T - lambda) x = b with partial pivoting.
    fn shifted_solve(&self, lambda: f64, b: &[f64]) -> Vec<f64> {
        let n = self.len();
        if n == 1 {
            let p = self.d[0] - lambda;
            return vec![b[0] / if p == 0.0 { f64::EPSILON } else { p }];
        }
        let guard = f64::EPSILON * self.norm_bound().max(1e-300);
        let mut d: Vec<f64> = self.d.iter().map(|x| x - lambda).collect();
        let mut dl = self.e.clone();
        let mut du = self.e.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut x = b.to_vec();
        // LU with row interchanges, following the classic gtsv scheme
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = guard;
                }
                let f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                x[i + 1] -= f * x[i];
                dl[i] = 0.0;
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - f * tmp;
                if i + 2 < n {
                    dl[i] = du[i + 1];
                    du[i + 1] = -f * dl[i];
                    du2[i] = dl[i];
                    dl[i] = 0.0;
                } else {
                    dl[i] = 0.0;
                }
                du[i] = tmp;
                x.swap(i, i + 1);
                x[i + 1] -= f * x[i];
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = guard;
        }
        x[n - 1] /= d[n - 1];
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        x
    }

    /// Eigenpairs with eigenvalues in [lo, hi): bisection plus inverse
    /// iteration, Gram-Schmidt inside clusters.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let vals = self.eigenvalues_in(lo, hi);
        let n = self.len();
        let scale = self.norm_bound().max(1e-300);
        let cluster_tol = 1e-8 * scale;
        let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(vals.len());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cluster_start = 0;
        for (idx, &lam) in vals.iter().enumerate() {
            if idx > 0 && lam - vals[idx - 1] > cluster_tol {
                cluster_start = idx;
            }
            let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            for _ in 0..4 {
                x = self.shifted_solve(lam, &x);
                for v in &vecs[cluster_start..idx] {
                    let c: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
                    x.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
                }
                let nrm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
                x.iter_mut().for_each(|a| *a /= nrm);
            }
            vecs.push(x);
        }
        (vals, vecs)
    }
}

impl HermTridiag {
    /// Eigenpairs in [lo, hi) with complex eigenvectors of the original matrix.
    pub fn eigenpairs_in(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<Vec<c64>>) {
        let (vals, vecs) = self.t.eigenpairs_in(lo, hi);
        let cv = vecs
            .into_iter()
            .map(|v| v.into_iter().zip(&self.phases).map(|(x, p)| p * x).collect())
            .collect();
        (vals, cv)
    }
}

/// Euclidean norm.
pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value of a dense matrix (via the Gram matrix of the
/// smaller side).
pub fn spectral_norm(m: &Mat<c64>) -> Result<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let g = if m.nrows() >= m.ncols() { m.adjoint() * m } else { m * m.adjoint() };
    let v = dense_eigenvalues(&g)?;
    Ok(v.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}
