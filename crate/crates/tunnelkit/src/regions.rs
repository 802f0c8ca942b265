//! Classically allowed regions {V_j <= E_j^2} and the lower bounds on the
//! effective potentials away from them.

use crate::error::{domain, Result};
use crate::fields::{bracket, FluxProfile};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllowedRegion {
    pub channel: i64,
    pub energy: f64,
    pub intervals: Vec<(f64, f64)>,
    /// The region reaches the outer end of the scan.
    pub truncated: bool,
}

impl AllowedRegion {
    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, r: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= r && r <= b)
    }
}

/// Explicit constants (c_mu, delta_mu_c) of the effective-potential bounds.
pub fn region_constants(mu: f64, c: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(mu > 0.0 && mu < 1.0) {
        return domain(format!("mu must lie in (0,1), got {mu}"));
    }
    if !(c >= 1.0) || !(alpha > 0.0) {
        return domain("need c >= 1 and alpha > 0");
    }
    let sigma = 1.0 / (1.0 + alpha);
    let q = (1.0 / alpha).max(1.0 + alpha);
    let c_mu = (2.0 * 2f64.sqrt() + 1.0 + alpha).powf(q) * (1.0 - mu).powf(-q);
    let d1 = (4.0 * (2.0 + alpha)).powf(-sigma) * (1.0 - mu).powf(sigma);
    let d2 = 2f64.powf(-(1.0 + alpha)) * c.powf(-alpha);
    Ok((c_mu, d1.min(d2)))
}

fn worst_gap(profile: &FluxProfile, j: i64, e2: f64, r: f64) -> f64 {
    let (p, m) = profile.effective_pair(j as f64, r);
    p.max(m) - e2
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let ratio = (hi / lo).ln();
    (0..n).map(move |i| lo * (ratio * i as f64 / (n - 1) as f64).exp())
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    while (b - a) > 1e-10 * b.abs().max(1e-300) {
        let m = 0.5 * (a + b);
        if (f(m) <= 0.0) == (fa <= 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Scan max(V^+, V^-) - E^2 on a log-uniform sample of (0, r_max] and refine
/// sign changes by bisection.
pub fn allowed_region(profile: &FluxProfile, j: i64, energy: f64, r_max: f64, n: usize) -> Result<AllowedRegion> {
    if !(energy > 0.0) || !(r_max > 0.0) || n < 64 {
        return domain("allowed_region needs E > 0, r_max > 0 and n >= 64");
    }
    let e2 = energy * energy;
    let r_min = r_max * 1e-8;
    let f = |r: f64| worst_gap(profile, j, e2, r);
    let rs: Vec<f64> = log_space(r_min, r_max, n).collect();
    let inside: Vec<bool> = rs.iter().map(|&r| f(r) <= 0.0).collect();
    let mut intervals = Vec::new();
    let mut start = if inside[0] { Some(rs[0]) } else { None };
    for k in 1..n {
        match (inside[k - 1], inside[k]) {
            (false, true) => start = Some(bisect(f, rs[k - 1], rs[k])),
            (true, false) => {
                let end = bisect(f, rs[k - 1], rs[k]);
                intervals.push((start.take().unwrap(), end));
            }
            _ => {}
        }
    }
    let truncated = inside[n - 1];
    if let Some(s) = start {
        intervals.push((s, r_max));
    }
    Ok(AllowedRegion { channel: j, energy, intervals, truncated })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Interior,
    Exterior,
}

/// Exterior: min over r in [c<j>^s, 10 c<j>^s] of V_j - mu A(r)^2.
/// Interior: min over r in (0, delta |j|^s] of V_j - mu A(2c|j|^s)^2.
/// Both use the worse spin component; a nonnegative value certifies the bound.
pub fn lower_bound_margin(profile: &FluxProfile, j: i64, mu: f64, c: f64, delta: f64, side: Side) -> Result<f64> {
    let sigma = profile.sigma();
    let jf = j as f64;
    let margin_at = |r: f64, floor: f64| {
        let (p, m) = profile.effective_pair(jf, r);
        p.min(m) - floor
    };
    match side {
        Side::Exterior => {
            let lo = c * bracket(jf).powf(sigma);
            Ok(log_space(lo, 10.0 * lo, 10_000)
                .map(|r| {
                    let a = profile.a(r);
                    margin_at(r, mu * a * a)
                })
                .fold(f64::INFINITY, f64::min))
        }
        Side::Interior => {
            if j.abs() < 2 {
                return domain("interior bound needs |j| >= 2");
            }
            let hi = delta * jf.abs().powf(sigma);
            let a = profile.a(2.0 * c * jf.abs().powf(sigma));
            let floor = mu * a * a;
            Ok(log_space(hi * 1e-6, hi, 10_000).map(|r| margin_at(r, floor)).fold(f64::INFINITY, f64::min))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Containment {
    /// Whether E_j^2 < mu |j|^(2 alpha sigma), the regime where containment is guaranteed.
    pub applicable: bool,
    pub contained: bool,
    /// (lowest region point - delta|j|^s, c<j>^s - highest region point).
    pub slack: (f64, f64),
    pub region: AllowedRegion,
}

/// Is the allowed region inside [delta |j|^s, c <j>^s]? Computed whether or
/// not the energy precondition holds; `applicable` records the latter.
pub fn check_containment(profile: &FluxProfile, j: i64, energy: f64, delta: f64, c: f64, mu: f64) -> Result<Containment> {
    if j.abs() < 2 {
        return domain("containment needs |j| >= 2");
    }
    let sigma = profile.sigma();
    let jf = j as f64;
    let alpha = profile.alpha;
    let applicable = energy * energy < mu * jf.abs().powf(2.0 * alpha * sigma);
    let lo = delta * jf.abs().powf(sigma);
    let hi = c * bracket(jf).powf(sigma);
    let region = allowed_region(profile, j, energy, 4.0 * hi, 10_000)?;
    let (slack, contained) = match (region.intervals.first(), region.intervals.last()) {
        (Some(&(a, _)), Some(&(_, b))) => {
            let s = (a - lo, hi - b);
            (s, s.0 >= 0.0 && s.1 >= 0.0 && !region.truncated)
        }
        _ => ((f64::INFINITY, f64::INFINITY), true),
    };
    Ok(Containment { applicable, contained, slack, region })
}
