use proptest::prelude::*;
use tunnelkit::assembly::RadialGrid;
use tunnelkit::c64;
use tunnelkit::fields::{bracket, FluxProfile};
use tunnelkit::partition::{
    build_bump, build_partition, forbidden_bound_check, ims_residual, kinetic_energy, CutoffKind, Which, C_STAR,
};

use crate::desk_params;

#[test]
fn bump_tables() {
    let b = build_bump(1.0, 2.0, CutoffKind::Bump).unwrap();
    assert_eq!(b.eval(1.5).0, 1.0);
    assert_eq!(b.eval(0.4).0, 0.0);
    assert_eq!(b.eval(5.0).0, 0.0);
    let (g, h) = b.eval(0.75);
    assert!((g * g + h * h - 1.0).abs() < 1e-14 && g > 0.0 && g < 1.0);
    let c = build_bump(1.0, 2.0, CutoffKind::Capped).unwrap();
    assert_eq!(c.eval(0.1).0, 1.0);
    assert_eq!(c.eval(1.9).0, 1.0);
    assert_eq!(c.eval(4.5).0, 0.0);
    assert!(build_bump(2.0, 2.0, CutoffKind::Bump).is_err());
    assert!(C_STAR > 2.0);
}

#[test]
fn bump_derivative_bound() {
    for kind in [CutoffKind::Bump, CutoffKind::Capped] {
        let b = build_bump(0.7, 3.0, kind).unwrap();
        let sup = (1..20_000)
            .map(|i| b.jets(i as f64 * 1e-3).0.deriv(1).abs())
            .fold(0.0, f64::max);
        assert!(sup <= b.derivative_bound() * (1.0 + 1e-12), "{kind:?}: {sup}");
    }
}

#[test]
fn partition_branches() {
    let part = build_partition(0.1, 10.0, 4.0, 0.5, (-12..=12).collect()).unwrap();
    let top = 2.0 * 10.0 * bracket(2.0).sqrt();
    for i in 1..1000 {
        let r = top * i as f64 / 1000.0;
        assert_eq!(part.chi(2.0, r), 1.0);
    }
    let bottom = 0.1 / 4.0 * 10f64.sqrt();
    for i in 1..1000 {
        let r = bottom * i as f64 / 1000.0;
        assert_eq!(part.chi(10.0, r), 0.0);
    }
    assert!(build_partition(1.5, 10.0, 4.0, 0.5, vec![]).is_err());
    assert!(build_partition(0.1, 0.5, 4.0, 0.5, vec![]).is_err());
}

#[test]
fn partition_is_deterministic() {
    let rs: Vec<f64> = (1..500).map(|i| i as f64 * 0.05).collect();
    let a = build_partition(0.3, 2.0, 3.0, 0.5, (-8..=8).collect()).unwrap();
    let b = build_partition(0.3, 2.0, 3.0, 0.5, (-8..=8).collect()).unwrap();
    for j in -8..=8 {
        let (x, y) = (a.samples(j, &rs), b.samples(j, &rs));
        assert!(x.iter().flatten().zip(y.iter().flatten()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn ims_vanishes_on_the_plateau() {
    let part = build_partition(0.1, 10.0, 4.0, 0.5, (-4..=4).collect()).unwrap();
    let grid = RadialGrid::new(800, 40.0).unwrap();
    let f = |r: f64| c64::new((-(r - 5.0).powi(2)).exp(), 0.0);
    let up: Vec<c64> = (0..grid.n).map(|k| f(grid.r(k))).collect();
    let down: Vec<c64> = up.iter().map(|z| z * 0.5).collect();
    let t = kinetic_energy(&grid, &up, &down);
    let res = ims_residual(&grid, &up, &down, &part, 0, Which::Chi).unwrap();
    assert!(res <= 1e-10 * t, "{res} vs {t}");
}

#[test]
fn forbidden_margins_for_tuned_parameters() {
    let p = desk_params();
    let profile = FluxProfile::standard(1.0);
    let part = build_partition(p.delta, p.c, p.j0, 0.5, vec![0, 1, -3, 8]).unwrap();
    let grid = RadialGrid::new(512, 12.0).unwrap();
    let out = forbidden_bound_check(&part, &profile, p.mu, Some((&grid, p.eps0))).unwrap();
    for m in &out {
        assert!(m.applicable);
        assert!(m.eta_margin >= 0.0 && m.chi_margin >= 0.0, "{m:?}");
        if m.channel == 1 {
            assert!(m.matrix_margin.unwrap() >= -1e-8);
        }
    }
    let strict = forbidden_bound_check(&part, &profile, 0.99, None).unwrap();
    assert!(strict.iter().all(|m| !m.applicable));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn partition_invariants(delta in 0.05f64..0.9, c in 1.0f64..20.0, j0 in 2.0f64..40.0, j in -200i64..=200) {
        let part = build_partition(delta, c, j0, 0.5, vec![j]).unwrap();
        let bound = part.derivative_bound();
        let (pair, s) = part.pair(j as f64, Which::Chi);
        let (lo, hi) = (1e-3 * pair.a * s, 10.0 * pair.b * s);
        let rs: Vec<f64> = (0..10_000).map(|i| lo * (hi / lo).powf(i as f64 / 9999.0)).collect();
        for row in part.samples(j, &rs) {
            prop_assert!((row[1] * row[1] + row[2] * row[2] - 1.0).abs() <= 1e-12);
            prop_assert!((row[3] * row[3] + row[4] * row[4] - 1.0).abs() <= 1e-12);
            // eta <= chi and the supports nest both ways
            prop_assert!(row[3] <= row[1] + 1e-15, "{row:?}");
            prop_assert!(row[3] == 0.0 || row[1] > 0.0);
            prop_assert!(row[2] == 0.0 || row[4] > 0.0);
            for d in &row[5..] {
                prop_assert!(d.abs() <= bound * (1.0 + 1e-12));
            }
        }
    }
}
