//! Internal parameters, the tuning conditions P0-P5, reference energy levels.

use crate::error::{domain, Result};
use crate::fields::{bracket, FluxProfile};
use crate::partition::{PartitionOfUnity, Which, C_STAR_PARTITION};
use crate::regions::region_constants;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Externals {
    pub alpha: f64,
    pub beta: f64,
    pub mu_star: f64,
    pub energy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunedParameters {
    pub mu: f64,
    pub delta: f64,
    pub c: f64,
    pub j0: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub eps_star: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub externals: Externals,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Derived {
    pub mu_tilde: f64,
    pub mu_bar_star: f64,
    pub a: f64,
    pub b: f64,
    pub delta0: f64,
    pub c_over_a: f64,
    pub c_tilde0: f64,
    pub e_tilde_sq: f64,
    /// Whether E~^2 > 0.
    pub feasible: bool,
}

impl Derived {
    pub fn e_tilde(&self) -> f64 {
        if self.feasible {
            self.e_tilde_sq.sqrt()
        } else {
            f64::NAN
        }
    }
}

/// C/a with the conventions C/a = 0 for C = 0 and +inf for a = 0 < C.
fn c_over(c: f64, a: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else if a == 0.0 {
        f64::INFINITY
    } else {
        c / a
    }
}

pub fn derive(p: &TunedParameters) -> Derived {
    let ms = p.externals.mu_star;
    let mu_tilde = ms + p.eps1 + p.eps_star;
    let mu_bar_star = ms + p.eps_star;
    let a = (mu_tilde / p.mu).sqrt();
    let b = if mu_tilde == 0.0 { 0.0 } else { (mu_bar_star / mu_tilde).sqrt() };
    let delta0 = (1.0 - a).min(1.0 - b);
    let c_over_a = c_over(p.big_c, a);
    let c_tilde0 = (1.0 - a) * p.eps0 + c_over_a;
    let e_tilde_sq = (1.0 - p.eps0 / delta0) * p.u * p.u - 2.0 * p.eps0 * delta0 * delta0 - delta0 * c_over_a;
    Derived { mu_tilde, mu_bar_star, a, b, delta0, c_over_a, c_tilde0, e_tilde_sq, feasible: e_tilde_sq > 0.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub pass: bool,
    /// Smallest margin among the clauses (same units as the clause).
    pub slack: f64,
    pub clauses: Vec<(String, f64)>,
}

impl Check {
    fn of(clauses: Vec<(&str, f64)>) -> Self {
        let slack = clauses.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        Check { pass: slack >= 0.0, slack, clauses: clauses.into_iter().map(|(n, v)| (n.to_string(), v)).collect() }
    }
    fn strict(clauses: Vec<(&str, f64)>) -> Self {
        let mut c = Check::of(clauses);
        c.pass = c.slack > 0.0;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub p0: Check,
    pub p1: Check,
    pub p2: Check,
    pub p3: Check,
    pub p4: Check,
    pub p5: Check,
    pub derived: Derived,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        [&self.p0, &self.p1, &self.p2, &self.p3, &self.p4, &self.p5].iter().all(|c| c.pass)
    }
}

/// Half-width of the spectral window rectangle: sup |z| over |Re z| <= E + eps0, |Im z| <= eps0.
pub fn window_radius(energy: f64, eps0: f64) -> f64 {
    (energy + eps0).hypot(eps0)
}

pub fn check_conditions(p: &TunedParameters, profile: &FluxProfile, c0: f64) -> ConditionReport {
    let d = derive(p);
    let e = p.externals;
    let sigma = profile.sigma();
    let p0 = Check::strict(vec![
        ("mu - mu_star", p.mu - e.mu_star),
        ("1 - mu", 1.0 - p.mu),
        ("delta", p.delta),
        ("1 - delta", 1.0 - p.delta),
        ("c - 1", p.c - 1.0 + f64::MIN_POSITIVE),
        ("j0 - 1", p.j0 - 1.0 + f64::MIN_POSITIVE),
        ("U - 1", p.u - 1.0 + f64::MIN_POSITIVE),
        ("eps0", p.eps0),
        ("1/16 - eps0", 1.0 / 16.0 - p.eps0),
        ("eps1", p.eps1 + f64::MIN_POSITIVE),
        ("1 - eps1", 1.0 - p.eps1),
        ("eps_star", p.eps_star + f64::MIN_POSITIVE),
        ("1 - eps_star", 1.0 - p.eps_star),
    ]);
    let p1 = match region_constants(p.mu, p.c.max(1.0), e.alpha) {
        Ok((c_mu, d_mu)) => Check::of(vec![("c - c_mu", p.c - c_mu), ("delta_mu_c - delta", d_mu - p.delta)]),
        Err(_) => Check::of(vec![("mu in (0,1)", -1.0)]),
    };
    let loc = C_STAR_PARTITION * (1.0 / p.c).max(1.0 / (p.delta * p.j0.powf(sigma)));
    let p2 = Check::of(vec![("eps0 - C* max(1/c, 1/(delta j0^s))", p.eps0 - loc)]);
    let mut p3 = Check::of(vec![
        ("mu - mu_tilde", p.mu - d.mu_tilde),
        ("1 - mu_bar_star", 1.0 - d.mu_bar_star),
        ("C - C0", p.big_c - c0),
    ]);
    p3.pass = p.mu - d.mu_tilde > 0.0 && 1.0 - d.mu_bar_star > 0.0 && p.big_c - c0 >= 0.0;
    let et = if d.feasible { d.e_tilde_sq.sqrt() } else { f64::NEG_INFINITY };
    let p4 = Check::of(vec![
        ("E~ - (E + eps0)", et - (e.energy + p.eps0)),
        ("(1 - 2 eps0/delta0) U^2 - 2 delta0 C~0", (1.0 - 2.0 * p.eps0 / d.delta0) * p.u * p.u - 2.0 * d.delta0 * d.c_tilde0),
        ("U - 4 sup|z|", p.u - 4.0 * window_radius(e.energy, p.eps0)),
    ]);
    let a2c = profile.a(2.0 * p.c);
    let p5 = Check::of(vec![(
        "mu (1 - sqrt(mu_bar_star/mu)) A(2c)^2 - 2 U^2/delta0^2",
        p.mu * (1.0 - (d.mu_bar_star / p.mu).sqrt()) * a2c * a2c - 2.0 * p.u * p.u / (d.delta0 * d.delta0),
    )]);
    ConditionReport { p0, p1, p2, p3, p4, p5, derived: d }
}

/// Deterministic parameter choice in the order mu -> eps1, eps* -> C -> eps0 ->
/// U -> c, delta, j0, for the normal-form profile A(r) = r^alpha.
pub fn auto_tune(alpha: f64, beta: f64, mu_star: f64, energy: f64, c0: f64) -> Result<TunedParameters> {
    if !(c0 >= 0.0) {
        return domain(format!("C0 must be nonnegative (got {c0})"));
    }
    if !(0.0..1.0).contains(&mu_star) || !(alpha > 0.0) || !(beta > 0.0) || !(energy > 0.0) {
        return domain("need alpha, beta, E > 0 and mu_star in [0,1)");
    }
    let sigma = 1.0 / (1.0 + alpha);
    let mu = 0.5 * (1.0 + mu_star);
    let step = 0.05f64.min((mu - mu_star) / 4.0);
    let eps_star = if mu_star == 0.0 { 0.0 } else { step };
    // a = 0 would make C/a infinite, so eps1 stays positive whenever C0 > 0.
    let eps1 = if mu_star == 0.0 && c0 == 0.0 { 0.0 } else { step };
    let externals = Externals { alpha, beta, mu_star, energy };
    let mut p = TunedParameters { mu, delta: 0.5, c: 1.0, j0: 2.0, eps0: 0.0, eps1, eps_star, big_c: c0, u: 1.0, externals };
    let d = derive(&p);
    let d0 = d.delta0;
    p.eps0 = d0 / 32.0;
    let eps0 = p.eps0;
    let c_tilde0 = (1.0 - d.a) * eps0 + d.c_over_a;
    let u1 = (((energy + eps0).powi(2) + 2.0 * eps0 * d0 * d0 + d0 * d.c_over_a) / (1.0 - eps0 / d0)).sqrt();
    let u2 = (2.0 * d0 * c_tilde0 / (1.0 - 2.0 * eps0 / d0)).sqrt();
    let u3 = 4.0 * window_radius(energy, eps0);
    p.u = 1.1 * u1.max(u2).max(u3).max(1.0);
    let mbs = d.mu_bar_star;
    // mu (1 - sqrt(mbs/mu)) (2c)^(2 alpha) >= 2 U^2 / delta0^2
    let need = 2.0 * p.u * p.u / (d0 * d0 * mu * (1.0 - (mbs / mu).sqrt()));
    let c_p5 = 0.5 * need.powf(1.0 / (2.0 * alpha));
    let (c_mu, _) = region_constants(mu, 1.0, alpha)?;
    p.c = (1.1 * c_p5).max(1.01 * c_mu).max(1.01 * C_STAR_PARTITION / eps0).max(1.0);
    let (_, d_mu) = region_constants(mu, p.c, alpha)?;
    p.delta = 0.99 * d_mu;
    p.j0 = (1.01 * (C_STAR_PARTITION / (p.delta * eps0)).powf(1.0 / sigma)).ceil().max(2.0);
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLevels {
    pub j_max: i64,
    /// E_j for j = -j_max..=j_max.
    pub values: Vec<f64>,
    pub lambda: Vec<f64>,
    pub params: TunedParameters,
    /// Smallest m >= 2 with E_j^2 < mu |j|^(2 alpha sigma) for all m <= |j| <= j_max.
    pub j1: Option<i64>,
    sqrt_mu_mbs: f64,
    floor_sq: f64,
    profile: FluxProfile,
}

impl EnergyLevels {
    pub fn lambda_of(&self, j: f64) -> f64 {
        self.profile.a(2.0 * self.params.c * bracket(j).powf(self.profile.sigma()))
    }
    /// E_j for any (possibly huge) channel index.
    pub fn e_of(&self, j: f64) -> f64 {
        let l = self.lambda_of(j);
        (self.sqrt_mu_mbs * l * l + self.floor_sq).sqrt()
    }
    pub fn e(&self, j: i64) -> f64 {
        if j.abs() <= self.j_max {
            self.values[(j + self.j_max) as usize]
        } else {
            self.e_of(j as f64)
        }
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn energy_levels(params: &TunedParameters, profile: &FluxProfile, j_max: i64) -> EnergyLevels {
    let d = derive(params);
    let sqrt_mu_mbs = (params.mu * d.mu_bar_star).sqrt();
    let floor_sq = params.u * params.u / (d.delta0 * d.delta0);
    let mut lv = EnergyLevels {
        j_max,
        values: vec![],
        lambda: vec![],
        params: *params,
        j1: None,
        sqrt_mu_mbs,
        floor_sq,
        profile: profile.clone(),
    };
    lv.lambda = (-j_max..=j_max).map(|j| lv.lambda_of(j as f64)).collect();
    lv.values = (-j_max..=j_max).map(|j| lv.e_of(j as f64)).collect();
    let ok = |j: i64| {
        let e = lv.e(j);
        e * e < params.mu * (j.abs() as f64).powf(2.0 * profile.alpha * profile.sigma())
    };
    let mut j1 = None;
    for m in (2..=j_max).rev() {
        if ok(m) && ok(-m) {
            j1 = Some(m);
        } else {
            break;
        }
    }
    lv.j1 = j1;
    lv
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongruenceReport {
    /// min over channels and samples of chi_perp (V - E^2) chi_perp, worst spin.
    pub margin: f64,
    pub worst_channel: f64,
    /// min of LHS - (mu delta0/2) lambda_j^2 on |j| > j0, r <= delta|j|^s/4.
    pub interior_floor: Option<f64>,
    /// min of LHS - (mu delta0/2) A(r)^2 on r >= 4c<j>^s.
    pub exterior_floor: f64,
}

/// Pointwise check of chi_perp (V_j - E_j^2) chi_perp >= 0 and its
/// quantitative floors, on log-spaced radii covering supp chi_perp.
pub fn congruence_check(levels: &EnergyLevels, partition: &PartitionOfUnity, profile: &FluxProfile, channels: &[f64]) -> CongruenceReport {
    let p = &levels.params;
    let d = derive(p);
    let sigma = profile.sigma();
    let lhs = |j: f64, r: f64| {
        let perp = partition.eval(j, Which::Chi, r).1;
        let (vp, vm) = profile.effective_pair(j, r);
        let e = levels.e_of(j);
        perp * perp * (vp.min(vm) - e * e)
    };
    let mut margin = f64::INFINITY;
    let mut worst = 0.0;
    let mut interior: Option<f64> = None;
    let mut exterior = f64::INFINITY;
    for &j in channels {
        let (pair, s) = partition.pair(j, Which::Chi);
        let outer = pair.b * s;
        let mut rs: Vec<f64> = (0..2000).map(|i| outer * 10f64.powf(2.0 * i as f64 / 1999.0)).collect();
        if j.abs() > partition.j0 {
            let inner = pair.a * s;
            rs.extend((0..2000).map(|i| inner * 10f64.powf(-6.0 + 6.0 * i as f64 / 1999.0)));
            let lam = levels.lambda_of(j);
            let fl = 0.5 * p.mu * d.delta0 * lam * lam;
            let top = partition.delta * j.abs().powf(sigma) / 4.0;
            let m = (0..500)
                .map(|i| top * 10f64.powf(-4.0 + 4.0 * i as f64 / 499.0))
                .map(|r| lhs(j, r) - fl)
                .fold(f64::INFINITY, f64::min);
            interior = Some(interior.map_or(m, |v: f64| v.min(m)));
        }
        for &r in &rs {
            let v = lhs(j, r);
            if v < margin {
                margin = v;
                worst = j;
            }
        }
        let start = 4.0 * partition.c * bracket(j).powf(sigma);
        for i in 0..500 {
            let r = start * 10f64.powf(2.0 * i as f64 / 499.0);
            let a = profile.a(r);
            exterior = exterior.min(lhs(j, r) - 0.5 * p.mu * d.delta0 * a * a);
        }
    }
    CongruenceReport { margin, worst_channel: worst, interior_floor: interior, exterior_floor: exterior }
}
