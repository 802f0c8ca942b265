//! Smooth cutoff pairs and the channel partitions of unity (chi, eta).

use crate::assembly::{self, RadialGrid};
use crate::error::{domain, Error, Result};
use crate::fields::{bracket, FluxProfile};
use crate::linalg;
use crate::smooth::{transition, Jet, TRANSITION_SLOPE_MAX};
use faer::c64;
use serde::{Deserialize, Serialize};

/// sup |g'| * a for the bump profile: the rising quarter turn spans a/2.
pub const C_STAR: f64 = 2.0 * TRANSITION_SLOPE_MAX;

/// Derivative constant of the channel partitions. The chi family uses the
/// halved inner scale delta/2, which doubles the bump constant.
pub const C_STAR_PARTITION: f64 = 2.0 * C_STAR;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    /// 0 on (0,a/2], rises on [a/2,a], 1 on [a,b], falls on [b,2b], 0 beyond.
    Bump,
    /// 1 on (0,b], falls on [b,2b], 0 beyond.
    Capped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub a: f64,
    pub b: f64,
    pub kind: CutoffKind,
    pub c_star: f64,
}

impl CutoffPair {
    /// Derivative bound C*/a (bump) or C*/b (capped).
    pub fn derivative_bound(&self) -> f64 {
        match self.kind {
            CutoffKind::Bump => self.c_star / self.a,
            CutoffKind::Capped => self.c_star / self.b,
        }
    }

    /// (profile, complement) as jets in r.
    pub fn jets(&self, r: f64) -> (Jet, Jet) {
        let (a, b) = (self.a, self.b);
        let x = Jet::var(r);
        let one = (Jet::constant(1.0), Jet::constant(0.0));
        let zero = (Jet::constant(0.0), Jet::constant(1.0));
        if self.kind == CutoffKind::Bump && r <= a / 2.0 {
            zero
        } else if self.kind == CutoffKind::Bump && r < a {
            transition(&x.shift(-a / 2.0).scale(2.0 / a))
        } else if r <= b {
            one
        } else if r < 2.0 * b {
            let (s, c) = transition(&x.shift(-b).scale(1.0 / b));
            (c, s)
        } else {
            zero
        }
    }

    pub fn eval(&self, r: f64) -> (f64, f64) {
        let (p, q) = self.jets(r);
        (p.value(), q.value())
    }
}

pub fn build_bump(a: f64, b: f64, kind: CutoffKind) -> Result<CutoffPair> {
    if !(a > 0.0 && a < b) {
        return domain(format!("cutoff needs 0 < a < b (got a={a}, b={b})"));
    }
    Ok(CutoffPair { a, b, kind, c_star: C_STAR })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Chi,
    Eta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub delta: f64,
    pub c: f64,
    /// Stored as f64: tuned values are far beyond i64 comfort.
    pub j0: f64,
    pub sigma: f64,
    pub channels: Vec<i64>,
}

pub fn build_partition(delta: f64, c: f64, j0: f64, sigma: f64, channels: Vec<i64>) -> Result<PartitionOfUnity> {
    if !(delta > 0.0 && delta < 1.0) || !(c >= 1.0) || !(j0 >= 2.0) || !(sigma > 0.0 && sigma < 1.0) {
        return domain(format!("partition needs delta in (0,1), c >= 1, j0 >= 2 (got {delta}, {c}, {j0})"));
    }
    Ok(PartitionOfUnity { delta, c, j0, sigma, channels })
}

impl PartitionOfUnity {
    /// The cutoff pair and radial scale for channel j: theta_j(r) = pair(r / scale).
    pub fn pair(&self, j: f64, which: Which) -> (CutoffPair, f64) {
        let (a, b) = match which {
            Which::Chi => (self.delta / 2.0, 2.0 * self.c),
            Which::Eta => (self.delta, self.c),
        };
        if j.abs() <= self.j0 {
            (CutoffPair { a, b, kind: CutoffKind::Capped, c_star: C_STAR }, bracket(j).powf(self.sigma))
        } else {
            (CutoffPair { a, b, kind: CutoffKind::Bump, c_star: C_STAR }, j.abs().powf(self.sigma))
        }
    }

    /// (theta, theta_perp) with derivatives in r.
    pub fn jets(&self, j: f64, which: Which, r: f64) -> (Jet, Jet) {
        let (p, s) = self.pair(j, which);
        let (u, v) = p.jets(r / s);
        // chain rule: d^k/dr^k f(r/s) = s^-k f^(k)(r/s)
        let rescale = |mut jet: Jet| {
            let mut f = 1.0;
            for c in jet.0.iter_mut() {
                *c *= f;
                f /= s;
            }
            jet
        };
        (rescale(u), rescale(v))
    }

    pub fn eval(&self, j: f64, which: Which, r: f64) -> (f64, f64) {
        let (p, s) = self.pair(j, which);
        p.eval(r / s)
    }

    pub fn chi(&self, j: f64, r: f64) -> f64 {
        self.eval(j, Which::Chi, r).0
    }

    pub fn derivative_bound(&self) -> f64 {
        C_STAR_PARTITION * (1.0 / self.c).max(1.0 / (self.delta * self.j0.powf(self.sigma)))
    }

    /// Rows (r, chi, chi_perp, eta, eta_perp, chi', chi_perp', eta', eta_perp').
    pub fn samples(&self, j: i64, rs: &[f64]) -> Vec<[f64; 9]> {
        rs.iter()
            .map(|&r| {
                let (c, cp) = self.jets(j as f64, Which::Chi, r);
                let (e, ep) = self.jets(j as f64, Which::Eta, r);
                [r, c.value(), cp.value(), e.value(), ep.value(), c.deriv(1), cp.deriv(1), e.deriv(1), ep.deriv(1)]
            })
            .collect()
    }
}

/// Discrete kinetic form sum_k m_k h |(psi_{k+1} - psi_k)/h|^2 on R nodes,
/// weights at the staggered midpoints, Dirichlet beyond the last node.
fn kinetic_form(grid: &RadialGrid, psi: &[c64]) -> f64 {
    let h = grid.h;
    (0..grid.n)
        .map(|k| {
            let next = if k + 1 < grid.n { psi[k + 1] } else { c64::new(0.0, 0.0) };
            grid.s(k) * h * ((next - psi[k]) / h).norm_sqr()
        })
        .sum()
}

/// |<psi,T psi> - <th psi,T th psi> - <th' psi,T th' psi> + <psi,(|th'|^2+|thp'|^2) psi>|
/// for a channel spinor whose two components are sampled on the R nodes.
pub fn ims_residual(grid: &RadialGrid, up: &[c64], down: &[c64], partition: &PartitionOfUnity, j: i64, which: Which) -> Result<f64> {
    if up.len() != grid.n || down.len() != grid.n {
        return Err(Error::Shape(format!("spinor length {}/{} != grid size {}", up.len(), down.len(), grid.n)));
    }
    let th: Vec<(Jet, Jet)> = (0..grid.n).map(|k| partition.jets(j as f64, which, grid.r(k))).collect();
    let mut total = 0.0;
    for psi in [up, down] {
        let a: Vec<c64> = psi.iter().zip(&th).map(|(p, t)| p * t.0.value()).collect();
        let b: Vec<c64> = psi.iter().zip(&th).map(|(p, t)| p * t.1.value()).collect();
        let loc: f64 = (0..grid.n)
            .map(|k| grid.w_r(k) * psi[k].norm_sqr() * (th[k].0.deriv(1).powi(2) + th[k].1.deriv(1).powi(2)))
            .sum();
        total += kinetic_form(grid, psi) - kinetic_form(grid, &a) - kinetic_form(grid, &b) + loc;
    }
    Ok(total.abs())
}

/// Plain kinetic energy <psi, T psi> of an R-sampled spinor.
pub fn kinetic_energy(grid: &RadialGrid, up: &[c64], down: &[c64]) -> f64 {
    kinetic_form(grid, up) + kinetic_form(grid, down)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForbiddenMargins {
    pub channel: i64,
    /// min over supp(eta_perp) of V_j - mu A^2.
    pub eta_margin: f64,
    /// min over supp(chi_perp) of V_j - mu A(2c|j|^s)^2.
    pub chi_margin: f64,
    /// min-eig of H0^2 + 2 eps0^2 - chi_perp V chi_perp on the channel, when requested.
    pub matrix_margin: Option<f64>,
    /// Whether c >= c_mu and delta <= delta_mu_c held.
    pub applicable: bool,
}

fn sample_support(partition: &PartitionOfUnity, j: f64, which: Which) -> Vec<f64> {
    let (p, s) = partition.pair(j, which);
    let outer_lo = p.b * s;
    let mut rs: Vec<f64> = (0..4000).map(|i| outer_lo * 10f64.powf(i as f64 / 3999.0)).collect();
    if p.kind == CutoffKind::Bump {
        let inner_hi = p.a * s;
        rs.extend((0..4000).map(|i| inner_hi * 10f64.powf(-6.0 + 6.0 * i as f64 / 3999.0)));
    }
    rs
}

/// Effective-potential lower bounds on the forbidden supports, plus an
/// optional matrix check on a discretized channel.
pub fn forbidden_bound_check(
    partition: &PartitionOfUnity,
    profile: &FluxProfile,
    mu: f64,
    matrix: Option<(&RadialGrid, f64)>,
) -> Result<Vec<ForbiddenMargins>> {
    let (c_mu, d_mu) = crate::regions::region_constants(mu, partition.c.max(1.0), profile.alpha)?;
    let applicable = partition.c >= c_mu && partition.delta <= d_mu;
    let sigma = profile.sigma();
    partition
        .channels
        .iter()
        .map(|&j| {
            let jf = j as f64;
            let worst = |r: f64| {
                let (p, m) = profile.effective_pair(jf, r);
                p.min(m)
            };
            let eta_margin = sample_support(partition, jf, Which::Eta)
                .into_iter()
                .map(|r| worst(r) - mu * profile.a(r).powi(2))
                .fold(f64::INFINITY, f64::min);
            let lam = profile.a(2.0 * partition.c * jf.abs().powf(sigma));
            let chi_margin = sample_support(partition, jf, Which::Chi)
                .into_iter()
                .map(|r| worst(r) - mu * lam * lam)
                .fold(f64::INFINITY, f64::min);
            let matrix_margin = match matrix {
                Some((grid, eps0)) => Some(channel_matrix_margin(grid, profile, partition, j, eps0)?),
                None => None,
            };
            Ok(ForbiddenMargins { channel: j, eta_margin, chi_margin, matrix_margin, applicable })
        })
        .collect()
}

fn channel_matrix_margin(grid: &RadialGrid, profile: &FluxProfile, partition: &PartitionOfUnity, j: i64, eps0: f64) -> Result<f64> {
    let h = assembly::discretize_channel(grid, profile, j)?;
    let m = &h * &h;
    let diag: Vec<f64> = (0..2 * grid.n)
        .map(|i| {
            let (r, up) = assembly::node_of(grid, j, i);
            let (vp, vm) = profile.effective_pair(j as f64, r);
            let perp = partition.eval(j as f64, Which::Chi, r).1;
            2.0 * eps0 * eps0 - perp * perp * if up { vp } else { vm }
        })
        .collect();
    linalg::min_eigenvalue(&linalg::add_diagonal(&m, &diag))
}
