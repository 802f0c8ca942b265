use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tunnelkit::assembly::{
    apply_first_order, apply_first_order_adjoint, assemble_comparison, assemble_coupling, assemble_free, assemble_full,
    coupling_band, form_inequality_margin, weight_conjugate, RadialGrid, StateVector,
};
use tunnelkit::fields::FluxProfile;
use tunnelkit::linalg;
use tunnelkit::partition::build_partition;
use tunnelkit::perturbation::{Angular, AngularCoupling, Model, Radial, Structure, Term};
use tunnelkit::spectral::{min_abs_eigenvalue, spectral_projection};
use tunnelkit::tuning::{derive, energy_levels};
use tunnelkit::verify::WeightSpec;
use tunnelkit::{c64, Error};

use crate::desk_params;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn two_mode() -> AngularCoupling {
    let g = Radial::Gaussian { amp: 1.0, width: 2.0 };
    let model = Model {
        terms: vec![
            Term { structure: Structure::Identity, radial: g.clone(), angular: Angular::constant(1.0) },
            Term { structure: Structure::SigmaZ, radial: g, angular: Angular { constant: 0.0, cos: vec![(1, 2.0 * (-2.0f64).exp())], sin: vec![] } },
        ],
    };
    AngularCoupling::from_model(model, 3, 2.0, 0.0).unwrap()
}

#[test]
fn landau_levels_of_channel_zero() {
    let grid = RadialGrid::new(1024, 12.0).unwrap();
    let h = assemble_free(&grid, &FluxProfile::standard(1.0), 0);
    let p = spectral_projection(&h, 4.0).unwrap();
    for want in [0.0, 2.0, 2.0 * 2f64.sqrt(), 2.0 * 3f64.sqrt()] {
        let near = p.values.iter().map(|v| (v - want).abs()).fold(f64::INFINITY, f64::min);
        assert!(near < 1e-2, "{want}: {near}");
    }
}

#[test]
fn assembled_operators_are_hermitian() {
    let grid = RadialGrid::new(64, 8.0).unwrap();
    let profile = FluxProfile::standard(1.0);
    let h = assemble_full(&grid, &profile, Some(&two_mode()), 4, 1e-12).unwrap();
    assert!(h.hermitian_defect() <= 1e-12 * linalg::max_abs(&h.mat));
    assert!(!h.is_block_diagonal() && h.band >= 1);
}

#[test]
fn trivial_coupling_keeps_channels_apart() {
    let grid = RadialGrid::new(64, 8.0).unwrap();
    let profile = FluxProfile::standard(1.0);
    let h0 = assemble_free(&grid, &profile, 3);
    assert!(h0.is_block_diagonal());
    let h = assemble_full(&grid, &profile, Some(&AngularCoupling::zero()), 3, 1e-12).unwrap();
    assert!(h.is_block_diagonal());
    assert!(linalg::max_abs(&h.lincomb(1.0, -1.0, &h0).unwrap().mat) == 0.0);

    let v = Radial::Power { amp: 0.5, p: 2.0 };
    let sym = Model { terms: vec![Term { structure: Structure::Identity, radial: v.clone(), angular: Angular::constant(1.0) }] };
    let c = AngularCoupling::from_model(sym, 0, f64::INFINITY, 0.0).unwrap();
    let h = assemble_full(&grid, &profile, Some(&c), 3, 1e-12).unwrap();
    assert!(h.is_block_diagonal() && h.band == 0);
    let diff = h.lincomb(1.0, -1.0, &h0).unwrap();
    for (i, k, z) in linalg::triplets(&diff.mat).into_iter().filter(|t| t.2.norm() != 0.0) {
        assert_eq!(i, k);
        let (_, local) = diff.locate(i);
        let (r, _) = tunnelkit::assembly::node_of(&grid, diff.locate(i).0, local);
        assert!((z.re - v.eval(r)).abs() < 1e-14);
    }
}

#[test]
fn banded_assembly_matches_wide_assembly() {
    let grid = RadialGrid::new(48, 8.0).unwrap();
    let c = two_mode();
    let band = coupling_band(&grid, &c, 1e-6);
    let narrow = assemble_coupling(&grid, &c, 8, band);
    let wide = assemble_coupling(&grid, &c, 8, 3);
    let diff = linalg::spectral_norm(&linalg::to_dense(&wide.lincomb(1.0, -1.0, &narrow).unwrap().mat)).unwrap();
    let vmax = 1.0;
    let tail: f64 = (band + 1..=3).map(|n| 2.0 * vmax * (-2.0 * n as f64).exp()).sum();
    assert!(diff <= tail + 1e-12, "{diff} vs {tail}");
}

#[test]
fn conjugation_by_weights() {
    let grid = RadialGrid::new(40, 6.0).unwrap();
    let h = assemble_full(&grid, &FluxProfile::standard(1.0), Some(&two_mode()), 2, 1e-12).unwrap();
    let same = weight_conjugate(&h, &WeightSpec::zero()).unwrap();
    assert_eq!(linalg::max_abs(&same.lincomb(1.0, -1.0, &h).unwrap().mat), 0.0);

    let w = WeightSpec::custom((-2..=2).map(|j| (j, vec![0.0, 10.0], vec![0.1 * j as f64, 0.1 * j as f64 + 2.0])).collect()).unwrap();
    let hf = weight_conjugate(&h, &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_vec(&mut rng, h.dim());
    let ef: Vec<f64> = (0..h.dim())
        .map(|i| {
            let (j, l) = h.locate(i);
            w.value(j, tunnelkit::assembly::node_of(&grid, j, l).0).exp()
        })
        .collect();
    // e^F H e^-F (e^F x) = e^F (H x)
    let lhs = hf.apply(&x.iter().zip(&ef).map(|(a, e)| a * e).collect::<Vec<_>>());
    let rhs: Vec<c64> = h.apply(&x).iter().zip(&ef).map(|(a, e)| a * e).collect();
    let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-12 * linalg::norm(&rhs));

    let huge = WeightSpec::custom(vec![(0, vec![0.0, 10.0], vec![1e3, 1e3])]).unwrap();
    assert!(matches!(weight_conjugate(&h, &huge), Err(Error::Overflow(_))));
}

#[test]
fn form_margin_primitives() {
    let grid = RadialGrid::new(48, 6.0).unwrap();
    let h0 = assemble_free(&grid, &FluxProfile::standard(1.0), 1);
    assert!(form_inequality_margin(&h0, &h0).unwrap().abs() < 1e-12);
    let zero = h0.scale(0.0);
    let sq = h0.mul(&h0).unwrap();
    assert!(form_inequality_margin(&zero, &sq).unwrap() >= -1e-10);
    assert!(form_inequality_margin(&sq, &zero).unwrap() < 0.0);
    let other = assemble_free(&grid, &FluxProfile::standard(1.0), 2);
    assert!(matches!(form_inequality_margin(&h0, &other), Err(Error::Shape(_))));
}

#[test]
fn comparison_operator() {
    let p = desk_params();
    let profile = FluxProfile::standard(1.0);
    let grid = RadialGrid::new(128, 10.0).unwrap();
    let h0 = assemble_free(&grid, &profile, 2);
    let levels = energy_levels(&p, &profile, 2);

    // a small partition whose chi vanishes inside the grid
    let part = build_partition(0.5, 1.0, 2.0, 0.5, (-2..=2).collect()).unwrap();
    let ht = assemble_comparison(&h0, &levels, &part).unwrap();
    assert!(ht.hermitian_defect() <= 1e-14);
    for (i, k, z) in linalg::triplets(&ht.lincomb(1.0, -1.0, &h0).unwrap().mat).into_iter().filter(|t| t.2.norm() != 0.0) {
        assert_eq!(i, k);
        let (j, l) = ht.locate(i);
        let (r, up) = tunnelkit::assembly::node_of(&grid, j, l);
        let want = levels.e(j) * part.chi(j as f64, r) * if up { 1.0 } else { -1.0 };
        assert!((z.re - want).abs() < 1e-12 * levels.e(j));
        if r > 4.0 * 5f64.powf(0.25) {
            assert_eq!(z.re, 0.0);
        }
    }
    assert!(assemble_comparison(&assemble_free(&grid, &profile, 3), &levels, &part).is_err());

    let tuned = build_partition(p.delta, p.c, p.j0, 0.5, (-2..=2).collect()).unwrap();
    let ht = assemble_comparison(&h0, &levels, &tuned).unwrap();
    let e_tilde = derive(&p).e_tilde();
    assert!(min_abs_eigenvalue(&ht).unwrap() >= e_tilde * (1.0 - 1e-6));

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eps0 = p.eps0;
    for _ in 0..50 {
        let x = random_vec(&mut rng, ht.dim());
        let hx = linalg::norm(&ht.apply(&x));
        let ex: Vec<c64> = x.iter().enumerate().map(|(i, v)| v * levels.e(ht.locate(i).0)).collect();
        assert!(hx >= (1.0 - 3.0 * eps0).sqrt() * linalg::norm(&ex));
    }
}

#[test]
fn state_vectors_carry_quadrature_weights() {
    let grid = RadialGrid::new(400, 10.0).unwrap();
    // int_0^inf e^{-r^2} r dr = 1/2 per spin component
    let s = StateVector::from_fn(&grid, 0, 0, |_, r, _| c64::new((-r * r / 2.0).exp(), 0.0));
    assert!((s.norm().powi(2) - 1.0).abs() < 1e-3);
    assert_eq!(s.channel(0).len(), 800);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn discrete_adjoint_is_exact(j in -8i64..=8, seed in any::<u64>(), alpha in 0.5f64..2.5) {
        let grid = RadialGrid::new(64, 7.0).unwrap();
        let profile = FluxProfile::standard(alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_vec(&mut rng, grid.n);
        let psi = random_vec(&mut rng, grid.n);
        let dphi = apply_first_order(&grid, &profile, j, &phi);
        let dstar = apply_first_order_adjoint(&grid, &profile, j, &psi);
        let lhs: c64 = (0..grid.n).map(|k| dphi[k].conj() * psi[k] * grid.w_s(k)).sum();
        let rhs: c64 = (0..grid.n).map(|k| phi[k].conj() * dstar[k] * grid.w_r(k)).sum();
        let scale = linalg::norm(&dphi) * linalg::norm(&psi) + linalg::norm(&phi) * linalg::norm(&dstar);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * scale);
    }
}
