use proptest::prelude::*;
use tunnelkit::assembly::{assemble_comparison, assemble_free, assemble_full, RadialGrid, StateVector};
use tunnelkit::c64;
use tunnelkit::fields::{bracket, FluxProfile};
use tunnelkit::partition::build_partition;
use tunnelkit::perturbation::{Angular, AngularCoupling, Model, Radial, Structure, Term};
use tunnelkit::spectral::spectral_projection;
use tunnelkit::tuning::{energy_levels, Externals, TunedParameters};
use tunnelkit::verify::{
    build_weight, check_f_conditions, corollary_p_norms, evolve_and_measure, fit_growth_exponent, gamma_max,
    proof_constants, tunneling_sum, TunnelSide, WeightKind,
};

use crate::desk_params;

fn small_j0() -> TunedParameters {
    TunedParameters { delta: 0.1, c: 10.0, j0: 4.0, ..desk_params() }
}

#[test]
fn weight_closed_forms() {
    let p = small_j0();
    let profile = FluxProfile::standard(1.0);
    let f = build_weight(WeightKind::F, 0.3, &p, &profile).unwrap();
    for j in -4..=4 {
        for &r in &[0.0, 0.01, 1.0] {
            assert_eq!(f.value(j, r), 0.0);
        }
    }
    let j = 16;
    assert!((f.value(j, 0.0) - 0.3 * p.delta * j as f64 / 4.0).abs() < 1e-14);
    assert_eq!(f.value(j, p.delta * 4.0 / 4.0 + 1e-9), 0.0);

    let g = build_weight(WeightKind::G, 0.3, &p, &profile).unwrap();
    for j in [0i64, 3, -7] {
        let kink = 4.0 * p.c * bracket(j as f64).sqrt();
        assert_eq!(g.value(j, kink), 0.0);
        assert_eq!(g.value(j, 0.5 * kink), 0.0);
        let r = 1.5 * kink;
        let want = 0.3 * ((r / (4.0 * p.c)).powi(2) - bracket(j as f64));
        assert!((g.value(j, r) - want).abs() < 1e-12 * want && want > 0.0);
    }
    assert!(build_weight(WeightKind::F, 0.0, &p, &profile).is_err());
}

#[test]
fn gamma_bounds() {
    let p = desk_params();
    let b = gamma_max(&p);
    assert!((b.gamma1 - (2.0 * p.c).powi(2) * p.mu * p.mu / 8.0).abs() < 1e-12 * b.gamma1);
    assert_eq!(b.gamma0, b.gamma1.min(b.gamma2));

    let q = TunedParameters { delta: 0.0025, j0: 1e3, externals: Externals { beta: 1.0, ..p.externals }, ..p };
    let g2 = gamma_max(&q).gamma2;
    let want = 1.0 / (0.0025 * (1.0f64 + 1e6).sqrt());
    assert!((g2 - want).abs() < 1e-14 * want && (g2 - 0.4).abs() < 1e-6);
}

#[test]
fn tuned_weights_satisfy_f_conditions() {
    let p = desk_params();
    let profile = FluxProfile::standard(1.0);
    let part = build_partition(p.delta, p.c, p.j0, 0.5, vec![]).unwrap();
    let levels = energy_levels(&p, &profile, 16);
    let mut channels: Vec<f64> = (-16..=16).map(|j| j as f64).collect();
    for f in [1.5, 4.0, 1e3] {
        channels.extend([f * p.j0, -f * p.j0]);
    }
    let g0 = gamma_max(&p).gamma0;
    for kind in [WeightKind::F, WeightKind::G] {
        let w = build_weight(kind, g0, &p, &profile).unwrap();
        let r = check_f_conditions(&w, &part, &profile, &levels, &p, &channels);
        assert!(r.all_pass(), "{kind:?}: {r:?}");
    }
}

#[test]
fn empty_projection_has_zero_sums() {
    let p = desk_params();
    let profile = FluxProfile::standard(1.0);
    let grid = RadialGrid::new(64, 8.0).unwrap();
    let h = assemble_free(&grid, &profile, 2);
    let part = build_partition(p.delta, p.c, p.j0, 0.5, (-2..=2).collect()).unwrap();
    let ht = assemble_comparison(&h, &energy_levels(&p, &profile, 2), &part).unwrap();
    let proj = spectral_projection(&ht, 1.0).unwrap();
    assert_eq!(proj.rank(), 0);
    let k = proof_constants(&p, gamma_max(&p).gamma0);
    for side in [TunnelSide::Interior, TunnelSide::Exterior] {
        let s = tunneling_sum(&proj, side, 1.0, 1.0, 2, &profile).unwrap();
        assert_eq!(s.total, 0.0);
    }
    let n = corollary_p_norms(&proj, &k, 0.1, 0.1, &profile);
    assert_eq!((n.radial, n.angular), (0.0, 0.0));
    assert!(tunneling_sum(&proj, TunnelSide::Interior, 1.0, 1.0, 3, &profile).is_err());
}

#[test]
fn proof_constant_arithmetic() {
    let p = desk_params();
    let k = proof_constants(&p, 2.0);
    assert_eq!((k.zeta1, k.c1, k.zeta2, k.c2), (p.delta * 2.0 / 8.0, 8.0 * p.delta, 2.0 / (2.0 * p.c), 8.0 * p.c));
}

fn evolution_setup(symmetric: bool) -> (tunnelkit::spectral::SpectralProjection, StateVector) {
    let grid = RadialGrid::new(48, 8.0).unwrap();
    let g = Radial::Gaussian { amp: 0.5, width: 2.0 };
    let mut terms = vec![Term { structure: Structure::Identity, radial: g.clone(), angular: Angular::constant(1.0) }];
    if !symmetric {
        terms.push(Term { structure: Structure::SigmaZ, radial: g, angular: Angular { constant: 0.0, cos: vec![(1, 0.4)], sin: vec![] } });
    }
    let beta = if symmetric { f64::INFINITY } else { 1.0 };
    let c = AngularCoupling::from_model(Model { terms }, 2, beta, 0.0).unwrap();
    let h = assemble_full(&grid, &FluxProfile::standard(1.0), Some(&c), 2, 1e-12).unwrap();
    let p = spectral_projection(&h, 3.0).unwrap();
    let phi = StateVector::from_fn(&grid, -2, 2, |j, r, up| c64::new((-(r - 1.0 - j as f64 * 0.2).powi(2)).exp(), if up { 0.3 } else { 0.0 }));
    (p, phi)
}

#[test]
fn evolution_is_unitary_and_conserves_j_for_symmetric_w() {
    let times: Vec<f64> = (0..200).map(|k| k as f64 * 5.0).collect();
    let (p, phi) = evolution_setup(true);
    let t = evolve_and_measure(&p, &phi, &times, 1.0, 1.0).unwrap();
    let n0 = t.norm[0];
    assert!(t.norm.iter().all(|n| (n - n0).abs() <= 1e-10 * n0));
    assert!(t.j_moment.iter().all(|m| (m - t.j_moment[0]).abs() <= 1e-9 * t.j_moment[0].max(1.0)));
    assert!(t.retained > 0.0 && t.retained <= 1.0 + 1e-12);

    let (p, phi) = evolution_setup(false);
    let t = evolve_and_measure(&p, &phi, &times, 1.0, 1.0).unwrap();
    let n0 = t.norm[0];
    assert!(t.norm.iter().all(|n| (n - n0).abs() <= 1e-10 * n0));
}

#[test]
fn growth_fit_on_known_power() {
    let times: Vec<f64> = (1..=1000).map(|k| k as f64).collect();
    let values: Vec<f64> = times.iter().map(|t| 3.0 * t.powf(0.37)).collect();
    let fit = fit_growth_exponent(&times, &values).unwrap();
    assert!((fit.exponent - 0.37).abs() < 1e-10);
    assert!(fit.window.0 >= 99.0);
}

proptest! {
    #[test]
    fn gamma0_grows_with_beta(b1 in 0.01f64..5.0, db in 0.0f64..5.0) {
        let p = desk_params();
        let at = |beta: f64| gamma_max(&TunedParameters { externals: Externals { beta, ..p.externals }, ..p }).gamma0;
        prop_assert!(at(b1 + db) >= at(b1));
    }

    #[test]
    fn f_weights_satisfy_f1_f3_below_gamma0(frac in 0.01f64..1.0) {
        let p = desk_params();
        let profile = FluxProfile::standard(1.0);
        let part = build_partition(p.delta, p.c, p.j0, 0.5, vec![]).unwrap();
        let levels = energy_levels(&p, &profile, 4);
        let channels = [0.0, 3.0, 2.0 * p.j0, -3.0 * p.j0];
        let w = build_weight(WeightKind::F, frac * gamma_max(&p).gamma0, &p, &profile).unwrap();
        let r = check_f_conditions(&w, &part, &profile, &levels, &p, &channels);
        prop_assert!(r.f1.pass && r.f3.pass);
    }
}
