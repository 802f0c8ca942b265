//! The perturbation W: closed-form models and sampled tables, their angular
//! Fourier modes in the channel basis, the decay data (beta, v, mu_star),
//! and the constant C0 of the critical/non-critical split.

use crate::assembly::{self, RadialGrid, StateVector};
use crate::error::{domain, Error, Result};
use crate::fields::{FluxProfile, Tail};
use crate::linalg;
use crate::par::*;
use crate::partition::{build_partition, Which};
use crate::tuning::{auto_tune, derive, energy_levels, TunedParameters};
use crate::verify::{f3_margin, WeightSpec};
use faer::c64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// 2x2 complex matrix, row-major [[a, b], [c, d]].
pub type M2 = [[c64; 2]; 2];

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const I: c64 = c64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Radial {
    Const { value: f64 },
    /// amp * exp(-r^2 / width^2)
    Gaussian { amp: f64, width: f64 },
    /// amp * (1 + r^2)^(-p/2)
    Power { amp: f64, p: f64 },
    /// kappa * (1 + r^(2 alpha))^(1/2), i.e. kappa <A> for A = r^alpha.
    Growth { kappa: f64, alpha: f64 },
    /// Linear interpolation, constant beyond the ends.
    Table { r: Vec<f64>, v: Vec<f64> },
    /// -tail(lambda r) / (2 pi r): the vector potential of a flux tail.
    FluxTail { tail: Tail, lambda: f64 },
    /// lambda * inner(lambda r).
    Scaled { inner: Box<Radial>, lambda: f64 },
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

impl Radial {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Radial::Const { value } => *value,
            Radial::Gaussian { amp, width } => amp * (-(r / width).powi(2)).exp(),
            Radial::Power { amp, p } => amp * (1.0 + r * r).powf(-p / 2.0),
            Radial::Growth { kappa, alpha } => kappa * (1.0 + r.powf(2.0 * alpha)).sqrt(),
            Radial::Table { r: rs, v } => interp(rs, v, r),
            Radial::FluxTail { tail, lambda } => {
                let x = match tail {
                    Tail::Samples { r: rs, .. } => (lambda * r).clamp(rs[0], rs[rs.len() - 1]),
                    _ => lambda * r,
                };
                -tail.eval(x).unwrap_or(0.0) / (2.0 * PI * r)
            }
            Radial::Scaled { inner, lambda } => lambda * inner.eval(lambda * r),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Radial::Gaussian { width, .. } if !(*width > 0.0) => domain("gaussian width must be positive"),
            Radial::Table { r, v } if r.len() < 2 || r.len() != v.len() || r.windows(2).any(|w| w[1] <= w[0]) => {
                domain("radial table needs >= 2 strictly increasing radii with matching values")
            }
            _ => Ok(()),
        }
    }
}

/// Real trigonometric polynomial c0 + sum a_m cos(m theta) + b_m sin(m theta).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Angular {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub cos: Vec<(u32, f64)>,
    #[serde(default)]
    pub sin: Vec<(u32, f64)>,
}

impl Angular {
    pub fn constant(c: f64) -> Self {
        Angular { constant: c, ..Default::default() }
    }
    pub fn eval(&self, theta: f64) -> f64 {
        self.constant
            + self.cos.iter().map(|&(m, a)| a * (m as f64 * theta).cos()).sum::<f64>()
            + self.sin.iter().map(|&(m, b)| b * (m as f64 * theta).sin()).sum::<f64>()
    }
    pub fn degree(&self) -> u32 {
        self.cos.iter().chain(&self.sin).map(|p| p.0).max().unwrap_or(0)
    }
}

/// Hermitian matrix structure of a term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// Electric potential.
    Identity,
    SigmaX,
    SigmaY,
    /// Mass term.
    SigmaZ,
    /// sigma . e_r
    Radial,
    /// sigma . e_theta
    Azimuthal,
}

impl Structure {
    fn matrix(self, theta: f64) -> M2 {
        let (s, c) = theta.sin_cos();
        let r = |x: f64| c64::new(x, 0.0);
        match self {
            Structure::Identity => [[r(1.0), ZERO], [ZERO, r(1.0)]],
            Structure::SigmaX => [[ZERO, r(1.0)], [r(1.0), ZERO]],
            Structure::SigmaY => [[ZERO, -I], [I, ZERO]],
            Structure::SigmaZ => [[r(1.0), ZERO], [ZERO, r(-1.0)]],
            // cos s1 + sin s2 = [[0, e^{-i th}], [e^{i th}, 0]]
            Structure::Radial => [[ZERO, c64::new(c, -s)], [c64::new(c, s), ZERO]],
            // -sin s1 + cos s2 = [[0, -i e^{-i th}], [i e^{i th}, 0]]
            Structure::Azimuthal => [[ZERO, c64::new(-s, -c)], [c64::new(-s, c), ZERO]],
        }
    }
    fn degree(self) -> u32 {
        match self {
            Structure::Radial | Structure::Azimuthal => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub structure: Structure,
    pub radial: Radial,
    #[serde(default = "unit_angular")]
    pub angular: Angular,
}

fn unit_angular() -> Angular {
    Angular::constant(1.0)
}

/// W(r, theta) = sum of radial(r) angular(theta) structure(theta).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub terms: Vec<Term>,
}

impl Model {
    pub fn eval(&self, r: f64, theta: f64) -> M2 {
        let mut w = [[ZERO; 2]; 2];
        for t in &self.terms {
            let f = t.radial.eval(r) * t.angular.eval(theta);
            if f == 0.0 {
                continue;
            }
            let m = t.structure.matrix(theta);
            for a in 0..2 {
                for b in 0..2 {
                    w[a][b] += m[a][b] * f;
                }
            }
        }
        w
    }
    fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.angular.degree() + t.structure.degree()).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Model(Model),
    /// Raw entry modes w^_ab(r_k, n) for |n| <= n_max + 1, order [11, 12, 21, 22].
    Table { r: Vec<f64>, raw: Vec<Vec<[c64; 4]>> },
}

/// Fourier data of W with its decay constants.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularCoupling {
    pub n_max: usize,
    /// Angular decay rate; +inf for rotationally symmetric W.
    pub beta: f64,
    pub mu_star: f64,
    pub source: Source,
}

/// Uniform-grid DFT w^(n) = (1/M) sum_m w(theta_m) e^{-i n theta_m} for |n| <= k.
fn dft_modes(samples: &[M2], k: usize) -> Vec<[c64; 4]> {
    let m = samples.len();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(m);
    let mut out = vec![[ZERO; 4]; 2 * k + 1];
    for (e, (a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
        let mut buf: Vec<c64> = samples.iter().map(|w| w[a][b]).collect();
        fft.process(&mut buf);
        for n in -(k as i64)..=(k as i64) {
            let idx = n.rem_euclid(m as i64) as usize;
            out[(n + k as i64) as usize][e] = buf[idx] / m as f64;
        }
    }
    out
}

/// Largest singular value of a 2x2 matrix given as [a, b, c, d].
pub fn norm2(w: &[c64; 4]) -> f64 {
    let s: f64 = w.iter().map(|z| z.norm_sqr()).sum();
    let det = (w[0] * w[3] - w[1] * w[2]).norm();
    (0.5 * (s + (s * s - 4.0 * det * det).max(0.0).sqrt())).sqrt()
}

impl AngularCoupling {
    pub fn from_model(model: Model, n_max: usize, beta: f64, mu_star: f64) -> Result<Self> {
        for t in &model.terms {
            t.radial.validate()?;
        }
        if !(beta > 0.0) || !(0.0..1.0).contains(&mu_star) {
            return domain(format!("need beta > 0 and mu_star in [0,1) (got {beta}, {mu_star})"));
        }
        Ok(AngularCoupling { n_max, beta, mu_star, source: Source::Model(model) })
    }

    pub fn zero() -> Self {
        AngularCoupling { n_max: 0, beta: f64::INFINITY, mu_star: 0.0, source: Source::Model(Model::default()) }
    }

    fn raw_modes(&self, r: f64) -> Vec<[c64; 4]> {
        let k = self.n_max + 1;
        match &self.source {
            Source::Model(model) => {
                let need = 2 * (model.degree() as usize + k) + 2;
                let m = need.max(4 * k).max(16).next_power_of_two();
                let samples: Vec<M2> = (0..m).map(|i| model.eval(r, 2.0 * PI * i as f64 / m as f64)).collect();
                dft_modes(&samples, k)
            }
            Source::Table { r: rs, raw } => {
                let last = rs.len() - 1;
                if rs.len() == 1 || r <= rs[0] {
                    return raw[0].clone();
                }
                if r >= rs[last] {
                    return raw[last].clone();
                }
                let i = rs.partition_point(|&v| v <= r).clamp(1, last);
                let t = (r - rs[i - 1]) / (rs[i] - rs[i - 1]);
                raw[i - 1]
                    .iter()
                    .zip(&raw[i])
                    .map(|(a, b)| std::array::from_fn(|e| a[e] * (1.0 - t) + b[e] * t))
                    .collect()
            }
        }
    }

    /// Channel-coupling blocks W~(r, n), |n| <= n_max, in the basis where
    /// h_j is real: entries [uu, ud, du, dd] built from w^11(n), w^12(n-1),
    /// w^21(n+1), w^22(n) with the spin-down phase -i.
    pub fn h_modes(&self, r: f64) -> Vec<[c64; 4]> {
        let raw = self.raw_modes(r);
        let k = self.n_max as i64 + 1;
        let at = |n: i64, e: usize| raw[(n + k) as usize][e];
        (-(self.n_max as i64)..=self.n_max as i64)
            .map(|n| [at(n, 0), at(n - 1, 1) * -I, at(n + 1, 2) * I, at(n, 3)])
            .collect()
    }

    /// v(r) = max_n |W~(r,n)| e^{beta |n|}: the tightest envelope for beta.
    pub fn envelope(&self, r: f64) -> f64 {
        let modes = self.h_modes(r);
        let nm = self.n_max as i64;
        modes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.beta.is_finite() || *i as i64 == nm)
            .map(|(i, w)| {
                let n = (i as i64 - nm).abs() as f64;
                let g = if n == 0.0 { 1.0 } else { (self.beta * n).exp() };
                norm2(w) * g
            })
            .fold(0.0, f64::max)
    }

    /// coth(beta/4) v(r); coth = 1 for beta = inf.
    pub fn v_beta(&self, r: f64) -> f64 {
        coth_quarter(self.beta) * self.envelope(r)
    }

    /// No inter-channel coupling (only the n = 0 mode).
    pub fn is_trivial(&self) -> bool {
        self.beta.is_infinite()
    }

    /// W -> lambda W(lambda x).
    pub fn scaled(&self, lambda: f64) -> Self {
        let source = match &self.source {
            Source::Model(m) => Source::Model(Model {
                terms: m
                    .terms
                    .iter()
                    .map(|t| Term {
                        radial: Radial::Scaled { inner: Box::new(t.radial.clone()), lambda },
                        ..t.clone()
                    })
                    .collect(),
            }),
            Source::Table { r, raw } => Source::Table {
                r: r.iter().map(|x| x / lambda).collect(),
                raw: raw.iter().map(|row| row.iter().map(|w| w.map(|z| z * lambda)).collect()).collect(),
            },
        };
        AngularCoupling { source, ..self.clone() }
    }

    /// Adds the azimuthal vector potential of a flux tail (already in
    /// rescaled variables when lambda != 1). Only model sources accept it.
    pub fn with_tail(&self, tail: Tail, lambda: f64) -> Self {
        let mut c = self.clone();
        let term = Term { structure: Structure::Azimuthal, radial: Radial::FluxTail { tail, lambda }, angular: Angular::constant(1.0) };
        match &mut c.source {
            Source::Model(m) => m.terms.push(term),
            Source::Table { .. } => {
                // tables are sampled on their own radii; fold the tail in as a model sum is not possible
                c.source = Source::Model(Model { terms: vec![term] });
            }
        }
        c
    }

    /// W(r, theta) reconstructed from the retained modes.
    pub fn reconstruct(&self, r: f64, theta: f64) -> M2 {
        let raw = self.raw_modes(r);
        let k = self.n_max as i64 + 1;
        let mut w = [[ZERO; 2]; 2];
        for n in -k..=k {
            let ph = c64::from_polar(1.0, n as f64 * theta);
            let m = raw[(n + k) as usize];
            for (e, (a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                w[a][b] += m[e] * ph;
            }
        }
        w
    }
}

pub fn coth_quarter(beta: f64) -> f64 {
    if beta.is_infinite() {
        1.0
    } else {
        1.0 / (beta / 4.0).tanh()
    }
}

/// Samples W(r_k, theta_m) on a uniform theta grid, theta_m = 2 pi m / M.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularSamples {
    pub r: Vec<f64>,
    pub values: Vec<Vec<M2>>,
}

impl AngularSamples {
    pub fn from_model(model: &Model, r: Vec<f64>, m: usize) -> Self {
        let values = r
            .iter()
            .map(|&x| (0..m).map(|i| model.eval(x, 2.0 * PI * i as f64 / m as f64)).collect())
            .collect();
        AngularSamples { r, values }
    }
}

fn hermitian_defect(w: &M2) -> f64 {
    (w[0][0].im.abs()).max(w[1][1].im.abs()).max((w[0][1] - w[1][0].conj()).norm())
}

/// Table-backed coupling from angular samples. beta and mu_star are the
/// declared decay data (see [`verify_condition2`] to estimate them).
pub fn fourier_coefficients(samples: &AngularSamples, n_max: usize, beta: f64, mu_star: f64) -> Result<AngularCoupling> {
    if samples.r.is_empty() || samples.r.len() != samples.values.len() {
        return Err(Error::Shape("radii and sample rows differ".into()));
    }
    let m = samples.values[0].len();
    if m < 4 * n_max.max(1) || samples.values.iter().any(|row| row.len() != m) {
        return domain(format!("theta grid needs >= 4 n_max = {} points per radius (got {m})", 4 * n_max.max(1)));
    }
    for (k, row) in samples.values.iter().enumerate() {
        let worst = row.iter().map(hermitian_defect).fold(0.0, f64::max);
        if worst > 1e-10 {
            return Err(Error::Validation(format!("W not Hermitian at r = {} (defect {worst:.2e})", samples.r[k])));
        }
    }
    if !(beta > 0.0) || !(0.0..1.0).contains(&mu_star) {
        return domain("need beta > 0 and mu_star in [0,1)");
    }
    let raw = samples.values.iter().map(|row| dft_modes(row, n_max + 1)).collect();
    Ok(AngularCoupling { n_max, beta, mu_star, source: Source::Table { r: samples.r.clone(), raw } })
}

/// Per radius: |sum_n |w^(n)|_F^2 - mean_theta |W|_F^2| using all M modes.
pub fn parseval_defect(samples: &AngularSamples) -> Vec<f64> {
    samples
        .values
        .iter()
        .map(|row| {
            let m = row.len();
            let modes = dft_modes(row, m / 2);
            // the +-M/2 pair double counts one mode when M is even
            let mut total: f64 = modes.iter().map(|w| w.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
            if m % 2 == 0 {
                total -= modes[0].iter().map(|z| z.norm_sqr()).sum::<f64>();
            }
            let mean = row.iter().map(|w| w.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>() / m as f64;
            (total - mean).abs()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition2 {
    /// +inf when only the n = 0 mode is present.
    pub beta_hat: f64,
    /// (r, v(r)) on the outer decade.
    pub v_hat: Vec<(f64, f64)>,
    pub mu_star_hat: f64,
    pub pass: bool,
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Fit the angular decay rate from the modes and evaluate
/// coth^2(beta/4) v^2 / A^2 on the outer decade [r_outer/10, r_outer].
pub fn verify_condition2(coupling: &AngularCoupling, profile: &FluxProfile, r_outer: f64) -> Result<Condition2> {
    if !(r_outer > 0.0) {
        return Err(Error::Range("outer decade is empty".into()));
    }
    if let Source::Table { r, .. } = &coupling.source {
        if r[r.len() - 1] < r_outer / 10.0 {
            return Err(Error::Range(format!("table ends at {} before the outer decade", r[r.len() - 1])));
        }
    }
    let nm = coupling.n_max as i64;
    let radii = log_space(r_outer * 1e-3, r_outer, 96);
    let mut beta_hat = f64::INFINITY;
    for &r in &radii {
        let modes = coupling.h_modes(r);
        let norms: Vec<f64> = modes.iter().map(norm2).collect();
        let top = norms.iter().copied().fold(0.0, f64::max);
        if top == 0.0 {
            continue;
        }
        for (i, &v) in norms.iter().enumerate() {
            let n = (i as i64 - nm).abs();
            if n == 0 || v <= 1e-12 * top {
                continue;
            }
            // worst case over (r, n) of the log-linear decay rate
            beta_hat = beta_hat.min(-(v / top).ln() / n as f64);
        }
    }
    let beta_hat = beta_hat.max(0.0);
    let fitted = AngularCoupling { beta: beta_hat.max(f64::MIN_POSITIVE), ..coupling.clone() };
    let fitted = if beta_hat.is_infinite() { AngularCoupling { beta: f64::INFINITY, ..fitted } } else { fitted };
    let outer = log_space(r_outer / 10.0, r_outer, 64);
    let v_hat: Vec<(f64, f64)> = outer.iter().map(|&r| (r, fitted.envelope(r))).collect();
    let k = coth_quarter(fitted.beta);
    let mu_star_hat = v_hat.iter().map(|&(r, v)| (k * v / profile.a(r)).powi(2)).fold(0.0, f64::max);
    Ok(Condition2 { beta_hat, v_hat, mu_star_hat, pass: beta_hat > 0.0 && mu_star_hat < 1.0 })
}

/// max over the outer decade of coth^2(beta/4) v^2 / A^2 with the coupling's own beta.
pub fn limsup_ratio(coupling: &AngularCoupling, profile: &FluxProfile, r_outer: f64) -> f64 {
    let k = coth_quarter(coupling.beta);
    log_space(r_outer / 10.0, r_outer, 64)
        .into_iter()
        .map(|r| (k * coupling.envelope(r) / profile.a(r)).powi(2))
        .fold(0.0, f64::max)
}

/// sup over the grid of omega^2 = max(v_beta^2 - mu_star A^2, 0).
pub fn omega_sq_sup(coupling: &AngularCoupling, profile: &FluxProfile, grid: &RadialGrid) -> f64 {
    let mut rs = grid.r_nodes();
    rs.extend((0..grid.n).map(|k| grid.s(k)));
    rs.into_iter()
        .map(|r| {
            let vb = coupling.v_beta(r);
            let a = profile.a(r);
            (vb * vb - coupling.mu_star * a * a).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Smallest C0 >= 0 with
/// v_beta^2 <= (mu~/mu) H0^2 + mu_bar_star chi lambda^2 chi + C0
/// on the discretized channels |j| <= j_test. The right side is linear in
/// C0, so C0 = max(0, -min-eig of the C0 = 0 difference).
pub fn estimate_c0(coupling: &AngularCoupling, params: &TunedParameters, profile: &FluxProfile, grid: &RadialGrid, j_test: i64) -> Result<f64> {
    let d = derive(params);
    if !(d.mu_tilde < params.mu) {
        return domain("mu~ >= mu: the H0^2 coefficient leaves no room");
    }
    let part = build_partition(params.delta, params.c, params.j0, profile.sigma(), (-j_test..=j_test).collect())?;
    let levels = energy_levels(params, profile, j_test);
    let ratio = d.mu_tilde / params.mu;
    let per: Vec<Result<f64>> = (-j_test..=j_test)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let h = assembly::discretize_channel(grid, profile, j)?;
            let h2 = linalg::scale(&(&h * &h), ratio);
            let lam = levels.lambda_of(j as f64);
            let diag: Vec<f64> = (0..2 * grid.n)
                .map(|i| {
                    let (r, _) = assembly::node_of(grid, j, i);
                    let chi = part.eval(j as f64, Which::Chi, r).0;
                    let vb = coupling.v_beta(r);
                    d.mu_bar_star * chi * chi * lam * lam - vb * vb
                })
                .collect();
            linalg::min_eigenvalue(&linalg::add_diagonal(&h2, &diag))
        })
        .collect();
    let mut worst = f64::INFINITY;
    for v in per {
        worst = worst.min(v?);
    }
    let c0 = (-worst).max(0.0);
    if c0 > 1e6 {
        return Err(Error::Numerical(format!("C0 estimate {c0:.3e} exceeds 1e6: check mu, eps1, eps_star")));
    }
    Ok(c0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfConsistentTune {
    pub params: TunedParameters,
    pub c0: f64,
    pub iterations: usize,
}

/// Tune with C = C0 starting from sup omega^2, re-estimate C0 with the tuned
/// (mu, eps1, eps_star, partition), enlarge C by 10% over the estimate and retune
/// until C covers the estimate.
pub fn self_consistent_tune(
    coupling: &AngularCoupling,
    profile: &FluxProfile,
    energy: f64,
    grid: &RadialGrid,
    j_test: i64,
) -> Result<SelfConsistentTune> {
    let beta = if coupling.beta.is_finite() { coupling.beta } else { 1e3 };
    let mut c = omega_sq_sup(coupling, profile, grid);
    for it in 1..=5 {
        let params = auto_tune(profile.alpha, beta, coupling.mu_star, energy, c)?;
        let est = estimate_c0(coupling, &params, profile, grid, j_test)?;
        if est <= params.big_c {
            return Ok(SelfConsistentTune { params, c0: est, iterations: it });
        }
        c = 1.1 * est;
    }
    Err(Error::Numerical("C0 iteration did not settle in 5 rounds".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistedNorm {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// |e^F W e^-F psi|^2 against coth^2(beta/4) |v psi|^2 on the channels of psi.
pub fn twisted_norm_check(coupling: &AngularCoupling, weight: &WeightSpec, psi: &StateVector) -> Result<TwistedNorm> {
    let big_j = psi.jmax;
    if psi.jmin != -big_j {
        return Err(Error::Shape("state must cover a symmetric channel range".into()));
    }
    let f3 = f3_margin(weight, coupling.beta, -big_j, big_j, &psi.grid)?;
    if f3 < 0.0 {
        return Err(Error::Precondition(format!("weight violates F3 for beta = {} (margin {f3:.3e})", coupling.beta)));
    }
    let band = if coupling.is_trivial() { 0 } else { coupling.n_max.min(2 * big_j as usize) };
    let w = assembly::assemble_coupling(&psi.grid, coupling, big_j, band);
    let tw = assembly::weight_conjugate(&w, weight)?;
    let out = tw.apply(&psi.amps);
    let lhs = out.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let k = coth_quarter(coupling.beta);
    let v = assembly::multiplication_diagonal(&psi.grid, psi.jmin, psi.jmax, |_, r, _| coupling.envelope(r));
    let rhs = k * k * psi.amps.iter().zip(&v).map(|(z, v)| v * v * z.norm_sqr()).sum::<f64>();
    Ok(TwistedNorm { lhs, rhs, pass: lhs <= rhs * (1.0 + 1e-8) })
}
