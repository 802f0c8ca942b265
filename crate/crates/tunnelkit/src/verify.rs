//! Exponential weights, the admissibility conditions F1-F3, tunneling sums,
//! corollary norms and time-evolution diagnostics.

use crate::assembly::{self, RadialGrid, StateVector};
use crate::error::{domain, Error, Result};
use crate::fields::{bracket, m_j, FluxProfile};
use crate::linalg;
use crate::par::*;
use crate::partition::{PartitionOfUnity, Which};
use crate::spectral::SpectralProjection;
use crate::tuning::{derive, EnergyLevels, TunedParameters};
use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// gamma |j|^(1-s) (delta |j|^s / 4 - r)_+ on |j| > j0.
    F,
    /// gamma ((r / 4c)^(1+alpha) - <j>)_+.
    G,
    /// Per-channel linear interpolation of samples.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub gamma: f64,
    pub delta: f64,
    pub c: f64,
    pub j0: f64,
    pub alpha: f64,
    pub sigma: f64,
    /// (j, radii, values) for the custom kind; missing channels are 0.
    #[serde(default)]
    pub custom: Vec<(i64, Vec<f64>, Vec<f64>)>,
}

pub fn build_weight(kind: WeightKind, gamma: f64, params: &TunedParameters, profile: &FluxProfile) -> Result<WeightSpec> {
    if !(gamma > 0.0) {
        return domain(format!("weight needs gamma > 0 (got {gamma})"));
    }
    if kind == WeightKind::Custom {
        return domain("custom weights are built with WeightSpec::custom");
    }
    Ok(WeightSpec {
        kind,
        gamma,
        delta: params.delta,
        c: params.c,
        j0: params.j0,
        alpha: profile.alpha,
        sigma: profile.sigma(),
        custom: Vec::new(),
    })
}

impl WeightSpec {
    pub fn custom(channels: Vec<(i64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        for (j, r, v) in &channels {
            if r.len() < 2 || r.len() != v.len() || r.windows(2).any(|w| w[1] <= w[0]) {
                return domain(format!("custom weight for channel {j} needs >= 2 increasing radii"));
            }
        }
        Ok(WeightSpec { kind: WeightKind::Custom, gamma: 1.0, delta: 0.0, c: 1.0, j0: 0.0, alpha: 1.0, sigma: 0.5, custom: channels })
    }

    pub fn zero() -> Self {
        WeightSpec::custom(Vec::new()).expect("empty custom weight")
    }

    /// Radius of the positive-part kink in channel j (None when F_j = 0).
    pub fn kink(&self, j: f64) -> Option<f64> {
        match self.kind {
            WeightKind::F if j.abs() > self.j0 => Some(self.delta * j.abs().powf(self.sigma) / 4.0),
            WeightKind::G => Some(4.0 * self.c * bracket(j).powf(self.sigma)),
            _ => None,
        }
    }

    pub fn value_f(&self, j: f64, r: f64) -> f64 {
        match self.kind {
            WeightKind::F => {
                if j.abs() <= self.j0 {
                    0.0
                } else {
                    let aj = j.abs();
                    let edge = self.delta * aj.powf(self.sigma) / 4.0;
                    self.gamma * aj.powf(1.0 - self.sigma) * positive_part(edge - r, edge)
                }
            }
            WeightKind::G => {
                let bj = bracket(j);
                self.gamma * positive_part((r / (4.0 * self.c)).powf(1.0 + self.alpha) - bj, bj)
            }
            WeightKind::Custom => match self.custom.iter().find(|c| c.0 as f64 == j) {
                Some((_, rs, vs)) => interp(rs, vs, r),
                None => 0.0,
            },
        }
    }

    pub fn value(&self, j: i64, r: f64) -> f64 {
        self.value_f(j as f64, r)
    }

    /// dF_j/dr (one-sided at kinks: the value from the right).
    pub fn derivative(&self, j: f64, r: f64) -> f64 {
        match self.kind {
            WeightKind::F => {
                if j.abs() <= self.j0 || r >= self.delta * j.abs().powf(self.sigma) / 4.0 {
                    0.0
                } else {
                    -self.gamma * j.abs().powf(1.0 - self.sigma)
                }
            }
            WeightKind::G => {
                let x = r / (4.0 * self.c);
                if x.powf(1.0 + self.alpha) <= bracket(j) {
                    0.0
                } else {
                    self.gamma * (1.0 + self.alpha) / (4.0 * self.c) * x.powf(self.alpha)
                }
            }
            WeightKind::Custom => {
                let h = 1e-6 * r.max(1e-3);
                (self.value_f(j, r + h) - self.value_f(j, (r - h).max(0.0))) / (r + h - (r - h).max(0.0))
            }
        }
    }
}

/// (x)_+ with values at the rounding level of `scale` treated as zero, so the
/// weights vanish exactly up to their kinks.
fn positive_part(x: f64, scale: f64) -> f64 {
    if x <= 8.0 * f64::EPSILON * scale.abs() {
        0.0
    } else {
        x
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    ys[k - 1] + (x - xs[k - 1]) / (xs[k] - xs[k - 1]) * (ys[k] - ys[k - 1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaBounds {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma0: f64,
}

/// gamma1 = (2c)^(2 alpha) (mu - sqrt(mu mu_bar_star)) (mu - sqrt(mu mu~)) / 8,
/// gamma2 = min(beta / (delta <j0>), 1), gamma0 = min of both.
pub fn gamma_max(params: &TunedParameters) -> GammaBounds {
    let d = derive(params);
    let mu = params.mu;
    let alpha = params.externals.alpha;
    let gamma1 = (2.0 * params.c).powf(2.0 * alpha) * (mu - (mu * d.mu_bar_star).sqrt()) * (mu - (mu * d.mu_tilde).sqrt()) / 8.0;
    let beta = params.externals.beta;
    let gamma2 = if beta.is_infinite() { 1.0 } else { (beta / (params.delta * bracket(params.j0))).min(1.0) };
    GammaBounds { gamma1, gamma2, gamma0: gamma1.min(gamma2) }
}

/// min over channel pairs in [jmin, jmax] of (beta/2)|j-k| - sup_grid |F_j - F_k|.
pub fn f3_margin(weight: &WeightSpec, beta: f64, jmin: i64, jmax: i64, grid: &RadialGrid) -> Result<f64> {
    if jmin > jmax {
        return Err(Error::Shape("empty channel range".into()));
    }
    let mut rs = grid.r_nodes();
    rs.extend((0..grid.n).map(|k| grid.s(k)));
    let channels: Vec<f64> = (jmin..=jmax).map(|j| j as f64).collect();
    Ok(f3_pairs(weight, beta, &channels, &rs))
}

fn f3_pairs(weight: &WeightSpec, beta: f64, channels: &[f64], rs: &[f64]) -> f64 {
    if beta.is_infinite() {
        return f64::INFINITY;
    }
    let table: Vec<Vec<f64>> = channels.iter().map(|&j| rs.iter().map(|&r| weight.value_f(j, r)).collect()).collect();
    let mut margin = f64::INFINITY;
    for a in 0..channels.len() {
        for b in a + 1..channels.len() {
            let sup = table[a].iter().zip(&table[b]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            margin = margin.min(0.5 * beta * (channels[a] - channels[b]).abs() - sup);
        }
    }
    margin
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub pass: bool,
    pub margin: f64,
    pub worst_channel: f64,
}

impl Margin {
    fn from_min(values: impl Iterator<Item = (f64, f64)>) -> Self {
        let (mut margin, mut worst) = (f64::INFINITY, f64::NAN);
        for (j, m) in values {
            if m < margin {
                margin = m;
                worst = j;
            }
        }
        Margin { pass: margin >= 0.0, margin, worst_channel: worst }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FConditions {
    /// -sup |F_j chi_j| (0 when F vanishes on supp chi).
    pub f1: Margin,
    /// min of ((1-a)/2)^2 chi_perp^2 (V - E^2) - (F')^2 on supp chi_perp.
    pub f2: Margin,
    /// min of (beta/2)|j-k| - sup |F_j - F_k|.
    pub f3: Margin,
}

impl FConditions {
    pub fn all_pass(&self) -> bool {
        self.f1.pass && self.f2.pass && self.f3.pass
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let ratio = (hi / lo).ln();
    (0..n).map(move |i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
}

/// Radii covering supp chi_perp of channel j, the weight kink and its support.
fn sample_radii(weight: &WeightSpec, partition: &PartitionOfUnity, j: f64) -> Vec<f64> {
    let (pair, s) = partition.pair(j, Which::Chi);
    let outer = pair.b * s;
    let mut rs: Vec<f64> = log_space(outer, 1e3 * outer, 3000).collect();
    if j.abs() > partition.j0 {
        let inner = pair.a * s;
        rs.extend(log_space(inner * 1e-9, inner, 3000));
    }
    if let Some(k) = weight.kink(j) {
        rs.extend(log_space(k * 1e-9, k, 1000));
        rs.extend(log_space(k, 1e3 * k, 1000));
    }
    rs
}

/// Pointwise closed-form check of F1-F3 on the listed channels (which may
/// lie far beyond any grid).
pub fn check_f_conditions(
    weight: &WeightSpec,
    partition: &PartitionOfUnity,
    profile: &FluxProfile,
    levels: &EnergyLevels,
    params: &TunedParameters,
    channels: &[f64],
) -> FConditions {
    let d = derive(params);
    let k2 = ((1.0 - d.a) / 2.0).powi(2);
    let per: Vec<(f64, f64, f64)> = channels
        .par_iter()
        .map(|&j| {
            let rs = sample_radii(weight, partition, j);
            let e2 = levels.e_of(j).powi(2);
            let mut f1: f64 = 0.0;
            let mut f2 = f64::INFINITY;
            for &r in &rs {
                let (chi, perp) = partition.eval(j, Which::Chi, r);
                f1 = f1.max((weight.value_f(j, r) * chi).abs());
                if perp > 0.0 {
                    let (vp, vm) = profile.effective_pair(j, r);
                    let rhs = k2 * perp * perp * (vp.min(vm) - e2);
                    f2 = f2.min(rhs - weight.derivative(j, r).powi(2));
                }
            }
            (j, -f1, f2)
        })
        .collect();
    let f1 = Margin::from_min(per.iter().map(|p| (p.0, p.1)));
    let f2 = Margin::from_min(per.iter().map(|p| (p.0, p.2)));
    let mut rs: Vec<f64> = vec![0.0];
    for &j in channels {
        if let Some(k) = weight.kink(j) {
            rs.extend([k, 2.0 * k, 10.0 * k, 1e3 * k]);
        }
        let (pair, s) = partition.pair(j, Which::Chi);
        rs.extend(log_space(pair.a * s * 1e-3, pair.b * s * 1e3, 200));
    }
    let beta = params.externals.beta;
    let m3 = f3_pairs(weight, beta, channels, &rs);
    let f3 = Margin { pass: m3 >= 0.0, margin: m3, worst_channel: f64::NAN };
    FConditions { f1, f2, f3 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunnelSide {
    Interior,
    Exterior,
}

/// (zeta1, C1, zeta2, C2) from the proof: delta gamma/8, 8 delta, gamma/(2c), 8c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProofConstants {
    pub zeta1: f64,
    pub c1: f64,
    pub zeta2: f64,
    pub c2: f64,
}

pub fn proof_constants(params: &TunedParameters, gamma0: f64) -> ProofConstants {
    ProofConstants { zeta1: params.delta * gamma0 / 8.0, c1: 8.0 * params.delta, zeta2: gamma0 / (2.0 * params.c), c2: 8.0 * params.c }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunnelingSum {
    pub total: f64,
    pub terms: Vec<(i64, f64)>,
    /// Some exponent exceeded the overflow guard and was clamped.
    pub saturated: bool,
    /// Smallest j* beyond which the |j|-ordered terms never increase.
    pub monotone_from: Option<i64>,
}

const EXP_GUARD: f64 = 700.0;

fn node_radius(p: &SpectralProjection, idx: usize) -> (i64, f64) {
    let bd = 2 * p.grid.n;
    let j = p.jmin + (idx / bd) as i64;
    (j, assembly::node_of(&p.grid, j, idx % bd).0)
}

/// Largest singular value of diag(w) V restricted to rows of channel j.
fn weighted_channel_norm(p: &SpectralProjection, j: i64, w: &dyn Fn(f64) -> f64) -> f64 {
    let bd = 2 * p.grid.n;
    let lo = (j - p.jmin) as usize * bd;
    let hi = lo + bd;
    let cols: Vec<&crate::spectral::Column> =
        p.columns.iter().filter(|c| c.offset < hi && c.offset + c.data.len() > lo).collect();
    if cols.is_empty() {
        return 0.0;
    }
    let rows: Vec<(usize, f64)> = (lo..hi)
        .filter_map(|i| {
            let wi = w(node_radius(p, i).1);
            (wi != 0.0).then_some((i, wi))
        })
        .collect();
    if rows.is_empty() {
        return 0.0;
    }
    let m = Mat::<c64>::from_fn(rows.len(), cols.len(), |a, b| {
        let (i, wi) = rows[a];
        let c = cols[b];
        if i >= c.offset && i < c.offset + c.data.len() {
            c.data[i - c.offset] * wi
        } else {
            c64::new(0.0, 0.0)
        }
    });
    linalg::spectral_norm(&m).unwrap_or(f64::NAN)
}

/// Interior: sum_j |e^{zeta |j|} 1_[0, C|j|^s](r) P_j P|^2.
/// Exterior: sum_j |e^{zeta r^(1+alpha)} 1_[C<j>^s, inf)(r) P_j P|^2.
pub fn tunneling_sum(p: &SpectralProjection, side: TunnelSide, zeta: f64, cconst: f64, big_j: i64, profile: &FluxProfile) -> Result<TunnelingSum> {
    if big_j > p.jmax || -big_j < p.jmin {
        return Err(Error::Shape(format!("projection covers [{}, {}] but J = {big_j}", p.jmin, p.jmax)));
    }
    let sigma = profile.sigma();
    let alpha = profile.alpha;
    let per: Vec<(i64, f64, bool)> = (-big_j..=big_j)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let jf = j as f64;
            let sat = std::cell::Cell::new(false);
            let clamp = |x: f64| {
                if x > EXP_GUARD {
                    sat.set(true);
                    EXP_GUARD
                } else {
                    x
                }
            };
            let norm = match side {
                TunnelSide::Interior => {
                    let edge = cconst * jf.abs().powf(sigma);
                    let wj = clamp(zeta * jf.abs()).exp();
                    weighted_channel_norm(p, j, &|r| if r <= edge { wj } else { 0.0 })
                }
                TunnelSide::Exterior => {
                    let edge = cconst * bracket(jf).powf(sigma);
                    weighted_channel_norm(p, j, &|r| if r >= edge { clamp(zeta * r.powf(1.0 + alpha)).exp() } else { 0.0 })
                }
            };
            (j, norm * norm, sat.get())
        })
        .collect();
    let terms: Vec<(i64, f64)> = per.iter().map(|p| (p.0, p.1)).collect();
    let total = terms.iter().map(|t| t.1).sum();
    let saturated = per.iter().any(|p| p.2);
    Ok(TunnelingSum { total, monotone_from: monotone_from(&terms), terms, saturated })
}

/// Smallest m with term(|j|) non-increasing in |j| for |j| >= m (both signs).
fn monotone_from(terms: &[(i64, f64)]) -> Option<i64> {
    let jm = terms.iter().map(|t| t.0.abs()).max()?;
    let at = |j: i64| terms.iter().find(|t| t.0 == j).map(|t| t.1).unwrap_or(0.0);
    let mut m = jm;
    while m > 0 {
        let ok = at(m) <= at(m - 1) * (1.0 + 1e-12) + 1e-300 && at(-m) <= at(-(m - 1)) * (1.0 + 1e-12) + 1e-300;
        if !ok {
            break;
        }
        m -= 1;
    }
    Some(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryNorms {
    /// |(1 - theta) e^{xi1 |x|^(1+alpha)} P|
    pub radial: f64,
    /// |(1 - theta) e^{xi2 |J|} P|
    pub angular: f64,
    pub precondition_ok: bool,
}

/// Largest singular value of diag(w) V over all rows.
fn weighted_norm(p: &SpectralProjection, w: &dyn Fn(i64, f64) -> f64) -> f64 {
    let k = p.rank();
    if k == 0 {
        return 0.0;
    }
    let wts: Vec<f64> = (0..p.dim)
        .map(|i| {
            let (j, r) = node_radius(p, i);
            w(j, r)
        })
        .collect();
    let mut g = Mat::<c64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (ca, cb) = (&p.columns[a], &p.columns[b]);
            let lo = ca.offset.max(cb.offset);
            let hi = (ca.offset + ca.data.len()).min(cb.offset + cb.data.len());
            let mut s = c64::new(0.0, 0.0);
            for i in lo..hi {
                s += ca.data[i - ca.offset].conj() * cb.data[i - cb.offset] * (wts[i] * wts[i]);
            }
            g[(a, b)] = s;
            g[(b, a)] = s.conj();
        }
    }
    linalg::dense_eigenvalues(&g).map(|v| v.last().copied().unwrap_or(0.0).max(0.0).sqrt()).unwrap_or(f64::NAN)
}

pub fn corollary_p_norms(
    p: &SpectralProjection,
    consts: &ProofConstants,
    xi1: f64,
    xi2: f64,
    profile: &FluxProfile,
) -> CorollaryNorms {
    let (sigma, alpha) = (profile.sigma(), profile.alpha);
    let ok = xi1 <= (consts.c1.powf(1.0 + alpha) * consts.zeta1).min(consts.zeta2)
        && xi2 <= consts.zeta1.min(consts.zeta2 * consts.c2.powf(1.0 + alpha));
    let outside = |j: i64, r: f64| {
        let jf = j as f64;
        !(r > consts.c1 * jf.abs().powf(sigma) && r < consts.c2 * bracket(jf).powf(sigma))
    };
    let radial = weighted_norm(p, &|j, r| if outside(j, r) { (xi1 * r.powf(1.0 + alpha)).min(EXP_GUARD).exp() } else { 0.0 });
    let angular = weighted_norm(p, &|j, r| if outside(j, r) { (xi2 * m_j(j).abs()).min(EXP_GUARD).exp() } else { 0.0 });
    CorollaryNorms { radial, angular, precondition_ok: ok }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norm: Vec<f64>,
    /// <phi(t), r^nu phi(t)>
    pub radius: Vec<f64>,
    /// <phi(t), |J|^mu phi(t)>
    pub j_moment: Vec<f64>,
    /// |P phi0| / |phi0|
    pub retained: f64,
}

fn gram(p: &SpectralProjection, w: &[f64]) -> Mat<c64> {
    let k = p.rank();
    let mut g = Mat::<c64>::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let (ca, cb) = (&p.columns[a], &p.columns[b]);
            let lo = ca.offset.max(cb.offset);
            let hi = (ca.offset + ca.data.len()).min(cb.offset + cb.data.len());
            let mut s = c64::new(0.0, 0.0);
            for i in lo..hi {
                s += ca.data[i - ca.offset].conj() * cb.data[i - cb.offset] * w[i];
            }
            g[(a, b)] = s;
            g[(b, a)] = s.conj();
        }
    }
    g
}

fn quad_form(g: &Mat<c64>, x: &[c64]) -> f64 {
    let mut s = c64::new(0.0, 0.0);
    for a in 0..x.len() {
        let mut row = c64::new(0.0, 0.0);
        for b in 0..x.len() {
            row += g[(a, b)] * x[b];
        }
        s += x[a].conj() * row;
    }
    s.re
}

/// phi(t) = sum_k e^{-i lambda_k t} <v_k, phi0> v_k on ran P, with the radial
/// moment r^nu and the angular moment |m_j|^mu at each time.
pub fn evolve_and_measure(p: &SpectralProjection, phi0: &StateVector, times: &[f64], nu: f64, mu_exp: f64) -> Result<Trajectory> {
    if phi0.amps.len() != p.dim || phi0.jmin != p.jmin || phi0.jmax != p.jmax {
        return Err(Error::Shape("initial state and projection differ in shape".into()));
    }
    let c0 = p.coefficients(&phi0.amps);
    let kept = c0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let total = phi0.norm();
    if kept <= 1e-12 * total.max(1e-300) {
        return Err(Error::Precondition("initial state is orthogonal to ran P".into()));
    }
    let rw: Vec<f64> = (0..p.dim).map(|i| node_radius(p, i).1.powf(nu)).collect();
    let jw: Vec<f64> = (0..p.dim).map(|i| m_j(node_radius(p, i).0).abs().powf(mu_exp)).collect();
    let ones = vec![1.0; p.dim];
    let (g_r, g_j, g_1) = (gram(p, &rw), gram(p, &jw), gram(p, &ones));
    let rows: Vec<(f64, f64, f64)> = times
        .par_iter()
        .map(|&t| {
            let ct: Vec<c64> = c0.iter().zip(&p.values).map(|(c, &l)| c * c64::from_polar(1.0, -l * t)).collect();
            (quad_form(&g_1, &ct).sqrt(), quad_form(&g_r, &ct), quad_form(&g_j, &ct))
        })
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        norm: rows.iter().map(|r| r.0).collect(),
        radius: rows.iter().map(|r| r.1).collect(),
        j_moment: rows.iter().map(|r| r.2).collect(),
        retained: kept / total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineBound {
    pub c: f64,
    pub big_c: f64,
}

impl AffineBound {
    /// c <phi, |J|^(nu s) phi> + C |phi|^2 for a state on the projection's channels.
    pub fn eval(&self, phi: &StateVector, nu_sigma: f64) -> f64 {
        let mut jm = 0.0;
        for j in phi.jmin..=phi.jmax {
            jm += m_j(j).abs().powf(nu_sigma) * phi.channel(j).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        self.c * jm + self.big_c * phi.norm().powi(2)
    }
}

/// Fit R_phi <= c <|J|^(nu s)> + C |phi|^2 at t = 0 from the channel-compressed
/// r^nu: rho_j = |r^(nu/2) P_j P|^2, c from the upper half of the channel range,
/// C from the rest.
pub fn corollary1_constants(p: &SpectralProjection, nu: f64, sigma: f64) -> AffineBound {
    let rho: Vec<(i64, f64)> = (p.jmin..=p.jmax)
        .map(|j| {
            let n = weighted_channel_norm(p, j, &|r| r.powf(nu / 2.0));
            (j, n * n)
        })
        .collect();
    let split = (p.jmax.max(-p.jmin) / 2).max(1);
    let c = rho
        .iter()
        .filter(|(j, _)| j.abs() >= split)
        .map(|&(j, r)| r / m_j(j).abs().powf(nu * sigma))
        .fold(0.0, f64::max);
    let big_c = rho.iter().map(|&(j, r)| (r - c * m_j(j).abs().powf(nu * sigma)).max(0.0)).fold(0.0, f64::max);
    AffineBound { c, big_c }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub exponent: f64,
    pub window: (f64, f64),
}

/// Least-squares slope of ln(value) against ln(t) over the last decade of t.
pub fn fit_growth_exponent(times: &[f64], values: &[f64]) -> Result<GrowthFit> {
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let lo = t_max / 10.0;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= lo && **t > 0.0 && **v > 0.0)
        .map(|(t, v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Range("fewer than 3 positive samples in the last decade".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(GrowthFit { exponent: sxy / sxx, window: (lo, t_max) })
}
