use proptest::prelude::*;
use tunnelkit::fields::FluxProfile;
use tunnelkit::partition::build_partition;
use tunnelkit::tuning::{auto_tune, check_conditions, congruence_check, derive, energy_levels, Externals, TunedParameters};

use crate::desk_params;

fn manual(mu_star: f64, eps1: f64, eps_star: f64, mu: f64) -> TunedParameters {
    TunedParameters {
        mu,
        delta: 0.1,
        c: 10.0,
        j0: 4.0,
        eps0: 0.01,
        eps1,
        eps_star,
        big_c: 0.0,
        u: 10.0,
        externals: Externals { alpha: 1.0, beta: 1.0, mu_star, energy: 1.0 },
    }
}

#[test]
fn derived_arithmetic() {
    let d = derive(&manual(0.0, 0.0, 0.0, 0.25));
    assert_eq!((d.mu_tilde, d.a, d.b, d.delta0), (0.0, 0.0, 0.0, 1.0));

    let d = derive(&manual(0.25, 0.05, 0.05, 0.81));
    assert!((d.mu_tilde - 0.35).abs() < 1e-15 && (d.mu_bar_star - 0.30).abs() < 1e-15);
    assert!((d.a - (0.35f64 / 0.81).sqrt()).abs() < 1e-15 && (d.a - 0.657).abs() < 1e-3);
    assert!((d.b - (0.30f64 / 0.35).sqrt()).abs() < 1e-15 && (d.b - 0.926).abs() < 1e-3);
    assert!((d.delta0 - (1.0 - d.b)).abs() < 1e-15 && (d.delta0 - 0.0741).abs() < 1e-3);

    let mut p = manual(0.25, 0.05, 0.05, 0.81);
    p.eps0 = derive(&p).delta0;
    p.big_c = 1.0;
    let d = derive(&p);
    assert!(!d.feasible && d.e_tilde().is_nan());
    assert!((d.e_tilde_sq - (-2.0 * p.eps0 * d.delta0.powi(2) - d.delta0 * d.c_over_a)).abs() < 1e-12);
}

#[test]
fn condition_examples() {
    let profile = FluxProfile::standard(1.0);
    let p = desk_params();
    assert!(check_conditions(&p, &profile, 0.0).all_pass());

    let mut bad = p;
    bad.eps0 = 0.125;
    let r = check_conditions(&bad, &profile, 0.0);
    assert!(!r.p0.pass);

    // smallest c for P5: mu (1 - sqrt(mbs/mu)) (2c)^2 = 2 U^2 / delta0^2
    let mut q = auto_tune(1.0, 1.0, 0.25, 1.0, 0.0).unwrap();
    let d = derive(&q);
    let c_min = 0.5 * (2.0 * q.u * q.u / (d.delta0 * d.delta0 * q.mu * (1.0 - (d.mu_bar_star / q.mu).sqrt()))).sqrt();
    q.c = c_min + 1.0;
    assert!(check_conditions(&q, &profile, 0.0).p5.pass);
    q.c = 0.9 * c_min;
    assert!(!check_conditions(&q, &profile, 0.0).p5.pass);

    // P2 with j0 >= (C*/(delta eps0))^(1/s) only depends on the j0 branch once c is large
    let mut s = desk_params();
    s.j0 *= 0.25;
    assert!(!check_conditions(&s, &profile, 0.0).p2.pass);
}

#[test]
fn auto_tune_examples() {
    let profile = FluxProfile::standard(1.0);
    let p = auto_tune(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
    assert_eq!(derive(&p).mu_bar_star, 0.0);
    let p = auto_tune(1.0, 2.0, 0.25, 2.0, 5.0).unwrap();
    assert!(check_conditions(&p, &profile, 5.0).all_pass());
    let p = auto_tune(1.0, 1.0, 0.999, 1.0, 0.0).unwrap();
    assert!(check_conditions(&p, &profile, 0.0).all_pass());
    assert!(derive(&p).delta0 < 1e-2);
    assert!(auto_tune(1.0, 1.0, 0.0, 1.0, -1.0).is_err());
    assert_eq!(auto_tune(1.0, 1.0, 0.3, 2.0, 1.0).unwrap(), auto_tune(1.0, 1.0, 0.3, 2.0, 1.0).unwrap());
}

#[test]
fn energy_levels_structure() {
    let profile = FluxProfile::standard(1.0);
    let p = desk_params();
    let lv = energy_levels(&p, &profile, 16);
    let d = derive(&p);
    for &e in &lv.values {
        assert!((e - p.u / d.delta0).abs() < 1e-12 * e);
        assert!(e > p.externals.energy);
    }
    let q = auto_tune(1.0, 1.0, 0.25, 1.0, 0.0).unwrap();
    let dq = derive(&q);
    let lv = energy_levels(&q, &profile, 16);
    let lam0 = 2.0 * q.c;
    assert!((lv.lambda_of(0.0) - 2.0 * q.c * 1.0).abs() < 1e-12 * lam0);
    let e0 = ((q.mu * dq.mu_bar_star).sqrt() * lam0 * lam0 + q.u * q.u / (dq.delta0 * dq.delta0)).sqrt();
    assert!((lv.e(0) - e0).abs() < 1e-12 * e0);
    for j in 0..16 {
        assert!(lv.e(j + 1) >= lv.e(j) && lv.e(-j - 1) >= lv.e(-j));
        assert!(lv.e(j) > q.externals.energy);
    }
}

#[test]
fn congruence_and_inflation() {
    let profile = FluxProfile::standard(1.0);
    let p = desk_params();
    let part = build_partition(p.delta, p.c, p.j0, 0.5, vec![]).unwrap();
    let channels: Vec<f64> = (-32..=32).map(|j| j as f64).collect();
    let rep = congruence_check(&energy_levels(&p, &profile, 32), &part, &profile, &channels);
    assert!(rep.margin >= 0.0 && rep.exterior_floor >= 0.0);

    let far = [2.0 * p.j0, -4.0 * p.j0];
    let rep = congruence_check(&energy_levels(&p, &profile, 32), &part, &profile, &far);
    assert!(rep.interior_floor.unwrap() >= 0.0);

    // ten-fold inflation stays below V on the ramp of chi_perp at this scale,
    // so push E_j far above A(4c) instead
    let mut inflated = p;
    inflated.u = 1e3 * p.c * derive(&p).delta0;
    let rep = congruence_check(&energy_levels(&inflated, &profile, 32), &part, &profile, &channels);
    assert!(rep.margin < 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn auto_tune_round_trip(alpha in 0.5f64..3.0, beta in 0.2f64..5.0, mu_star in 0.0f64..0.9, e in 0.1f64..10.0, c0 in 0.0f64..10.0) {
        let p = auto_tune(alpha, beta, mu_star, e, c0).unwrap();
        let r = check_conditions(&p, &FluxProfile::standard(alpha), c0);
        prop_assert!(r.all_pass(), "{r:?}");
        prop_assert!(r.derived.e_tilde() >= e + p.eps0);
    }
}
