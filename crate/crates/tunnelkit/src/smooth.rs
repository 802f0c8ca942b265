//! Smooth transition functions and truncated Taylor arithmetic.
//!
//! Every cutoff in the crate is built from one monotone smoothstep `S` of
//! degree 9 whose first four derivatives vanish at both ends, composed with
//! sin/cos so that a profile and its complement square-sum to one exactly.
//! Derivatives are propagated with [`Jet`]s rather than finite differences.

use std::f64::consts::FRAC_PI_2;

/// Highest derivative order tracked by a [`Jet`].
pub const ORDER: usize = 5;

/// sup |S'| on [0,1], attained at t = 1/2.
pub const SMOOTHSTEP_SLOPE_MAX: f64 = 630.0 / 256.0;

/// Derivative bound of a quarter-turn transition of unit length:
/// sup |d/dt sin(pi/2 S(t))| = (pi/2) sup |S'|.
pub const TRANSITION_SLOPE_MAX: f64 = FRAC_PI_2 * SMOOTHSTEP_SLOPE_MAX;

/// Taylor coefficients `c[k] = f^(k)(x0) / k!` truncated at [`ORDER`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet(pub [f64; ORDER + 1]);

impl Jet {
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; ORDER + 1];
        c[0] = v;
        Jet(c)
    }

    /// The identity function expanded at `x`.
    pub fn var(x: f64) -> Self {
        let mut c = [0.0; ORDER + 1];
        c[0] = x;
        c[1] = 1.0;
        Jet(c)
    }

    pub fn value(&self) -> f64 {
        self.0[0]
    }

    /// k-th derivative at the expansion point.
    pub fn deriv(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=k {
            f *= i as f64;
        }
        self.0[k] * f
    }

    pub fn scale(mut self, s: f64) -> Self {
        for c in self.0.iter_mut() {
            *c *= s;
        }
        self
    }

    pub fn shift(mut self, s: f64) -> Self {
        self.0[0] += s;
        self
    }

    pub fn add(mut self, o: &Jet) -> Self {
        for (a, b) in self.0.iter_mut().zip(o.0.iter()) {
            *a += b;
        }
        self
    }

    pub fn mul(&self, o: &Jet) -> Self {
        let mut c = [0.0; ORDER + 1];
        for i in 0..=ORDER {
            for j in 0..=ORDER - i {
                c[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(c)
    }

    /// Horner evaluation of a polynomial with coefficients in ascending order.
    pub fn poly(&self, coeffs: &[f64]) -> Self {
        let mut acc = Jet::constant(0.0);
        for &a in coeffs.iter().rev() {
            acc = acc.mul(self).shift(a);
        }
        acc
    }

    /// (sin u, cos u) via the coupled recurrences k s_k = sum i u_i c_{k-i}.
    pub fn sin_cos(&self) -> (Jet, Jet) {
        let u = &self.0;
        let mut s = [0.0; ORDER + 1];
        let mut c = [0.0; ORDER + 1];
        s[0] = u[0].sin();
        c[0] = u[0].cos();
        for k in 1..=ORDER {
            let mut ds = 0.0;
            let mut dc = 0.0;
            for i in 1..=k {
                ds += i as f64 * u[i] * c[k - i];
                dc -= i as f64 * u[i] * s[k - i];
            }
            s[k] = ds / k as f64;
            c[k] = dc / k as f64;
        }
        (Jet(s), Jet(c))
    }
}

const SMOOTHSTEP: [f64; 10] = [0.0, 0.0, 0.0, 0.0, 0.0, 126.0, -420.0, 540.0, -315.0, 70.0];

/// S(t) = 126t^5 - 420t^6 + 540t^7 - 315t^8 + 70t^9 on [0,1], clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let t5 = t.powi(5);
        t5 * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + t * 70.0))))
    }
}

pub fn smoothstep_jet(t: &Jet) -> Jet {
    let x = t.value();
    if x <= 0.0 {
        Jet::constant(0.0)
    } else if x >= 1.0 {
        Jet::constant(1.0)
    } else {
        t.poly(&SMOOTHSTEP)
    }
}

/// Quarter-turn transition: returns (sin(pi/2 S(t)), cos(pi/2 S(t))) as jets.
/// The first member rises from 0 to 1, the second falls from 1 to 0.
/// Each member is taken from the sine branch (S(1-t) = 1 - S(t)) so neither
/// dips below zero by rounding near its endpoint.
pub fn transition(t: &Jet) -> (Jet, Jet) {
    let rise = smoothstep_jet(t).scale(FRAC_PI_2).sin_cos().0;
    let fall = smoothstep_jet(&(*t).scale(-1.0).shift(1.0)).scale(FRAC_PI_2).sin_cos().0;
    (rise, fall)
}
