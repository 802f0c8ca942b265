use proptest::prelude::*;
use tunnelkit::fields::FluxProfile;
use tunnelkit::regions::{allowed_region, check_containment, lower_bound_margin, region_constants, Side};
use tunnelkit::tuning::energy_levels;

use crate::desk_params;

#[test]
fn explicit_constants() {
    let (c_mu, _) = region_constants(0.5, 1.0, 1.0).unwrap();
    let oracle = (2.0 * 2f64.sqrt() + 2.0).powi(2) * 4.0;
    assert!((c_mu - oracle).abs() < 1e-10 && (c_mu - 93.25).abs() < 0.01);
    let (_, d) = region_constants(0.5, 100.0, 1.0).unwrap();
    let oracle = (12f64.powf(-0.5) * 0.5f64.sqrt()).min(1.0 / 400.0);
    assert!((d - oracle).abs() < 1e-15 && (d - 0.0025).abs() < 1e-15);
    // mu -> 0: c_mu -> (2 sqrt 2 + 2)^2, delta on the c branch does not see mu
    let (c0, d0) = region_constants(1e-12, 100.0, 1.0).unwrap();
    assert!((c0 - (2.0 * 2f64.sqrt() + 2.0).powi(2)).abs() < 1e-8);
    assert_eq!(d0, d);
    assert!(region_constants(1.0, 1.0, 1.0).is_err() && region_constants(0.0, 1.0, 1.0).is_err());
}

#[test]
fn landau_channel_zero_region() {
    let p = FluxProfile::standard(1.0);
    let reg = allowed_region(&p, 0, 2.0, 10.0, 10_000).unwrap();
    // (1/r - r)^2 <= 2 gives r in [(sqrt6 - sqrt2)/2, (sqrt6 + sqrt2)/2]; r^2 <= 6 is weaker
    let (lo, hi) = ((6f64.sqrt() - 2f64.sqrt()) / 2.0, (6f64.sqrt() + 2f64.sqrt()) / 2.0);
    assert_eq!(reg.intervals.len(), 1);
    let (a, b) = reg.intervals[0];
    assert!((a - lo).abs() < 1e-6 && (b - hi).abs() < 1e-6, "{a} {b}");
    assert!((lo - 0.5176).abs() < 1e-4 && (hi - 1.9319).abs() < 1e-4);
    assert!(!reg.truncated);
    assert!(allowed_region(&p, 0, 2f64.sqrt(), 10.0, 10_000).unwrap().is_empty());
    assert!(allowed_region(&p, 0, 2.0, 10.0, 10).is_err());
}

#[test]
fn endpoints_are_refined_roots() {
    let p = FluxProfile::standard(1.0);
    for (j, e) in [(0, 2.0), (3, 3.0), (-4, 2.5), (7, 5.0)] {
        let reg = allowed_region(&p, j, e, 20.0, 10_000).unwrap();
        for &(a, b) in &reg.intervals {
            for r in [a, b] {
                let (vp, vm) = p.effective_pair(j as f64, r);
                assert!((vp.max(vm) - e * e).abs() <= 1e-8 * e * e, "j={j} r={r}");
            }
        }
    }
}

#[test]
fn lower_bound_certificates() {
    let p = FluxProfile::standard(1.0);
    let (c_mu, _) = region_constants(0.5, 1.0, 1.0).unwrap();
    let (_, d_mu) = region_constants(0.5, c_mu, 1.0).unwrap();
    assert!(lower_bound_margin(&p, 0, 0.5, c_mu, d_mu, Side::Exterior).unwrap() >= 0.0);
    assert!(lower_bound_margin(&p, 0, 0.5, 1.0, d_mu, Side::Exterior).unwrap() < 0.0);
    assert!(lower_bound_margin(&p, 5, 0.5, c_mu, d_mu, Side::Interior).unwrap() >= 0.0);
    assert!(lower_bound_margin(&p, 1, 0.5, c_mu, d_mu, Side::Interior).is_err());
    for j in -8..=8 {
        assert!(lower_bound_margin(&p, j, 0.5, c_mu, d_mu, Side::Exterior).unwrap() >= 0.0, "j={j}");
    }
}

#[test]
fn containment_examples() {
    let prm = desk_params();
    let p = FluxProfile::standard(1.0);
    let lv = energy_levels(&prm, &p, 50);
    let c = check_containment(&p, 40, lv.e(40), prm.delta, prm.c, prm.mu).unwrap();
    assert!(c.contained);
    let c = check_containment(&p, 50, lv.e(50), prm.delta, prm.c, prm.mu).unwrap();
    assert!(c.contained);
    let tight = check_containment(&p, 40, 8.0, 0.9, 1.01, 0.5).unwrap();
    assert!(!tight.contained);
    let empty = check_containment(&p, 40, 0.1, 0.9, 1.01, 0.5).unwrap();
    assert!(empty.region.is_empty() && empty.contained && empty.slack.0.is_infinite());
    assert!(check_containment(&p, 1, 1.0, 0.1, 10.0, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn regions_grow_with_energy(j in -6i64..=6, e in 0.5f64..6.0, de in 0.0f64..3.0) {
        let p = FluxProfile::standard(1.0);
        let small = allowed_region(&p, j, e, 20.0, 2000).unwrap();
        let big = allowed_region(&p, j, e + de, 20.0, 2000).unwrap();
        for &(a, b) in &small.intervals {
            for t in 0..=20 {
                let r = a + (b - a) * t as f64 / 20.0;
                prop_assert!(big.contains(r) || big.intervals.iter().any(|&(x, y)| (r - x).abs() < 1e-8 * r || (r - y).abs() < 1e-8 * r));
            }
        }
    }

    #[test]
    fn interval_samples_are_allowed(j in -6i64..=6, e in 0.5f64..6.0) {
        let p = FluxProfile::standard(1.0);
        let reg = allowed_region(&p, j, e, 20.0, 2000).unwrap();
        for w in reg.intervals.windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
        for &(a, b) in &reg.intervals {
            prop_assert!(a > 0.0 && b <= 20.0);
            for t in 1..20 {
                let r = a + (b - a) * t as f64 / 20.0;
                let (vp, vm) = p.effective_pair(j as f64, r);
                prop_assert!(vp.max(vm) <= e * e * (1.0 + 1e-9));
            }
        }
    }
}
