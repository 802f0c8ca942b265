//! Radial magnetic data: flux Phi(r) = phi0 r^(1+alpha) + tail(r), the
//! azimuthal vector potential A = Phi/(2 pi r), the field B = Phi'/(2 pi r)
//! and the channel effective potentials.

use crate::error::{domain, Error, Result};
use crate::perturbation::AngularCoupling;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Sub-leading flux correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tail {
    None,
    /// coef * r^p with p < 1 + alpha.
    Power { coef: f64, p: f64 },
    /// Linear interpolation through (r, phi) samples; r strictly increasing.
    Samples { r: Vec<f64>, phi: Vec<f64> },
}

impl Tail {
    pub(crate) fn eval(&self, r: f64) -> Result<f64> {
        match self {
            Tail::None => Ok(0.0),
            Tail::Power { coef, p } => Ok(coef * r.powf(*p)),
            Tail::Samples { r: rs, phi } => {
                let (lo, hi) = (rs[0], rs[rs.len() - 1]);
                if r < lo || r > hi {
                    return Err(Error::Extrapolation { r });
                }
                let k = rs.partition_point(|&x| x <= r).clamp(1, rs.len() - 1);
                let t = (r - rs[k - 1]) / (rs[k] - rs[k - 1]);
                Ok(phi[k - 1] + t * (phi[k] - phi[k - 1]))
            }
        }
    }

    /// Central-difference derivative, one-sided at the sample boundary.
    fn derivative(&self, r: f64) -> Result<f64> {
        match self {
            Tail::None => Ok(0.0),
            Tail::Power { .. } => {
                let h = 1e-5 * r.max(1e-3);
                Ok((self.eval(r + h)? - self.eval(r - h)?) / (2.0 * h))
            }
            Tail::Samples { r: rs, .. } => {
                let h = 1e-6 * (rs[rs.len() - 1] - rs[0]);
                let lo = (r - h).max(rs[0]);
                let hi = (r + h).min(rs[rs.len() - 1]);
                Ok((self.eval(hi)? - self.eval(lo)?) / (hi - lo))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxProfile {
    pub alpha: f64,
    pub phi0: f64,
    pub tail: Tail,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldValues {
    pub phi: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinSign {
    Plus,
    Minus,
}

impl SpinSign {
    pub fn sign(self) -> f64 {
        match self {
            SpinSign::Plus => 1.0,
            SpinSign::Minus => -1.0,
        }
    }
}

/// m_j = j + 1/2.
pub fn m_j(j: i64) -> f64 {
    j as f64 + 0.5
}

/// <j> = (1 + j^2)^(1/2). Takes f64 so that very large channel indices work.
pub fn bracket(j: f64) -> f64 {
    j.hypot(1.0)
}

impl FluxProfile {
    pub fn new(alpha: f64, phi0: f64, tail: Tail) -> Result<Self> {
        if !(alpha > 0.0) || !(phi0 > 0.0) {
            return domain(format!("alpha and phi0 must be positive (got {alpha}, {phi0})"));
        }
        if let Tail::Power { p, .. } = tail {
            if p >= 1.0 + alpha {
                return domain(format!("tail exponent {p} must be below 1 + alpha"));
            }
        }
        if let Tail::Samples { r, phi } = &tail {
            if r.len() < 2 || r.len() != phi.len() || r.windows(2).any(|w| w[1] <= w[0]) || r[0] <= 0.0 {
                return domain("tail samples need >= 2 strictly increasing positive radii");
            }
        }
        Ok(FluxProfile { alpha, phi0, tail })
    }

    /// A(r) = r^alpha, the normal form every profile is rescaled to.
    pub fn standard(alpha: f64) -> Self {
        FluxProfile { alpha, phi0: 2.0 * PI, tail: Tail::None }
    }

    pub fn sigma(&self) -> f64 {
        1.0 / (1.0 + self.alpha)
    }

    pub fn field_eval(&self, r: f64) -> Result<FieldValues> {
        if !(r > 0.0) {
            return domain(format!("radius must be positive (got {r})"));
        }
        let lead = self.phi0 * r.powf(1.0 + self.alpha);
        let phi = lead + self.tail.eval(r)?;
        let dphi = self.phi0 * (1.0 + self.alpha) * r.powf(self.alpha) + self.tail.derivative(r)?;
        let two_pi_r = 2.0 * PI * r;
        Ok(FieldValues { phi, a: phi / two_pi_r, b: dphi / two_pi_r })
    }

    /// A(r) without error plumbing for hot loops; panics only on invalid r.
    pub fn a(&self, r: f64) -> f64 {
        match self.tail {
            Tail::None => self.phi0 / (2.0 * PI) * r.powf(self.alpha),
            _ => self.field_eval(r).expect("radius inside profile range").a,
        }
    }

    pub fn b(&self, r: f64) -> f64 {
        match self.tail {
            Tail::None => self.phi0 * (1.0 + self.alpha) / (2.0 * PI) * r.powf(self.alpha - 1.0),
            _ => self.field_eval(r).expect("radius inside profile range").b,
        }
    }

    /// Central-difference version of B on a step h, used to study the
    /// convergence of the finite-difference path.
    pub fn b_finite_difference(&self, r: f64, h: f64) -> Result<f64> {
        let p = |x: f64| self.field_eval(x).map(|f| f.phi);
        Ok((p(r + h)? - p(r - h)?) / (2.0 * h) / (2.0 * PI * r))
    }

    pub fn effective_potential(&self, j: i64, s: SpinSign, r: f64) -> Result<f64> {
        let f = self.field_eval(r)?;
        Ok(effective_from(m_j(j), s, r, f.a, f.b))
    }

    /// Both spin components (V^+, V^-).
    pub fn effective_pair(&self, j: f64, r: f64) -> (f64, f64) {
        let m = j + 0.5;
        let (a, b) = (self.a(r), self.b(r));
        (effective_from(m, SpinSign::Plus, r, a, b), effective_from(m, SpinSign::Minus, r, a, b))
    }

    /// Relative size |tail(r)| / r^(1+alpha) at the outer end of the sampled
    /// range; the caller compares it against a tolerance.
    pub fn tail_decay_ratio(&self, r_lo: f64, r_hi: f64, samples: usize) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 0..samples {
            let r = r_lo * (r_hi / r_lo).powf(i as f64 / (samples.max(2) - 1) as f64);
            worst = worst.max(self.tail.eval(r)?.abs() / r.powf(1.0 + self.alpha));
        }
        Ok(worst)
    }

    pub fn check_tail_decay(&self, tol: f64) -> Result<f64> {
        let (lo, hi) = match &self.tail {
            Tail::None => return Ok(0.0),
            Tail::Power { .. } => (1e3, 1e4),
            Tail::Samples { r, .. } => (r[r.len() - 1] / 10.0, r[r.len() - 1]),
        };
        let ratio = self.tail_decay_ratio(lo.max(1e-300), hi, 64)?;
        if ratio > tol {
            return Err(Error::Validation(format!(
                "tail/r^(1+alpha) = {ratio:.3e} over the outer decade exceeds {tol:.1e}"
            )));
        }
        Ok(ratio)
    }
}

fn effective_from(m: f64, s: SpinSign, r: f64, a: f64, b: f64) -> f64 {
    let t = (m + 0.5 * s.sign()) / r - a;
    t * t + s.sign() * b
}

/// Bookkeeping of the length rescaling x -> lambda x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantMap {
    pub lambda: f64,
    pub alpha: f64,
    pub original_phi0: f64,
    pub original_tail: Tail,
}

impl ConstantMap {
    pub fn zeta1(&self, z: f64) -> f64 {
        z
    }
    pub fn zeta2(&self, z: f64) -> f64 {
        self.lambda.powf(-1.0 - self.alpha) * z
    }
    pub fn c1(&self, c: f64) -> f64 {
        self.lambda * c
    }
    pub fn c2(&self, c: f64) -> f64 {
        self.lambda * c
    }
}

/// Rescale lengths so that A(r) = r^alpha. The tail is moved into the
/// coupling as a rotationally symmetric azimuthal term.
pub fn rescale(profile: &FluxProfile, coupling: &AngularCoupling) -> (FluxProfile, AngularCoupling, ConstantMap) {
    let lambda = (2.0 * PI / profile.phi0).powf(profile.sigma());
    let map = ConstantMap {
        lambda,
        alpha: profile.alpha,
        original_phi0: profile.phi0,
        original_tail: profile.tail.clone(),
    };
    let mut c = coupling.scaled(lambda);
    if profile.tail != Tail::None {
        c = c.with_tail(profile.tail.clone(), lambda);
    }
    (FluxProfile::standard(profile.alpha), c, map)
}

/// Inverse of [`rescale`] on the profile.
pub fn unscale_profile(map: &ConstantMap) -> FluxProfile {
    FluxProfile { alpha: map.alpha, phi0: map.original_phi0, tail: map.original_tail.clone() }
}
