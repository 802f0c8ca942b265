use faer::Mat;
use tunnelkit::assembly::{assemble_comparison, assemble_free, assemble_full, BlockOperator, RadialGrid};
use tunnelkit::c64;
use tunnelkit::fields::FluxProfile;
use tunnelkit::linalg;
use tunnelkit::partition::build_partition;
use tunnelkit::perturbation::{Angular, AngularCoupling, Model, Radial, Structure, Term};
use tunnelkit::spectral::{
    eigensolve, g_by_eigen, gap_check, hs_functional_calculus, op_norm, resolvent_difference_projection,
    spectral_projection, AlmostAnalyticExtension, QuadratureSpec,
};
use tunnelkit::tuning::energy_levels;
use tunnelkit::Error;

use crate::desk_params;

fn small_free(n: usize, big_j: i64) -> BlockOperator {
    assemble_free(&RadialGrid::new(n, 8.0).unwrap(), &FluxProfile::standard(1.0), big_j)
}

fn coupled() -> BlockOperator {
    let g = Radial::Gaussian { amp: 1.0, width: 2.0 };
    let model = Model {
        terms: vec![
            Term { structure: Structure::Identity, radial: g.clone(), angular: Angular::constant(1.0) },
            Term { structure: Structure::SigmaZ, radial: g, angular: Angular { constant: 0.0, cos: vec![(1, 0.3)], sin: vec![] } },
        ],
    };
    let c = AngularCoupling::from_model(model, 2, 2.0, 0.0).unwrap();
    assemble_full(&RadialGrid::new(24, 6.0).unwrap(), &FluxProfile::standard(1.0), Some(&c), 2, 1e-12).unwrap()
}

fn max_entry(m: &Mat<c64>) -> f64 {
    let mut s: f64 = 0.0;
    for i in 0..m.nrows() {
        for k in 0..m.ncols() {
            s = s.max(m[(i, k)].norm());
        }
    }
    s
}

#[test]
fn diagonal_eigenvalues_are_sorted_diagonal() {
    let h = small_free(8, 1).multiplication(|j, r, up| j as f64 * 10.0 - r + if up { 0.5 } else { 0.0 });
    let mut want: Vec<f64> = (0..h.dim())
        .map(|i| {
            let (j, l) = h.locate(i);
            let (r, up) = tunnelkit::assembly::node_of(&h.grid, j, l);
            j as f64 * 10.0 - r + if up { 0.5 } else { 0.0 }
        })
        .collect();
    want.sort_by(f64::total_cmp);
    let e = eigensolve(&h).unwrap();
    assert!(e.values.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn block_spectrum_is_union_of_channels() {
    let h = small_free(32, 2);
    let e = eigensolve(&h).unwrap();
    let mut union: Vec<f64> = h
        .channels()
        .flat_map(|j| linalg::dense_eigenvalues(&linalg::to_dense(&h.channel_block(j))).unwrap())
        .collect();
    union.sort_by(f64::total_cmp);
    assert!(e.values.iter().zip(&union).all(|(a, b)| (a - b).abs() < 1e-9));
    let scale = linalg::max_abs(&h.mat);
    for op in [h, coupled()] {
        let e = eigensolve(&op).unwrap();
        let dense = linalg::to_dense(&op.mat);
        let av = &dense * &e.vectors;
        for k in 0..op.dim() {
            let res = (0..op.dim()).map(|i| (av[(i, k)] - e.vectors[(i, k)] * e.values[k]).norm_sqr()).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * scale.max(1.0));
        }
    }
}

#[test]
fn projections_are_orthogonal_projectors() {
    for op in [small_free(32, 2), coupled()] {
        for energy in [0.5, 2.5, 1e6] {
            let p = spectral_projection(&op, energy).unwrap();
            assert!(p.values.iter().all(|v| v.abs() <= energy));
            let m = p.to_dense();
            let m2 = &m * &m;
            assert!(max_entry(&(&m2 - &m)) < 1e-10);
            assert!(max_entry(&(&m - m.adjoint())) < 1e-10);
            if energy == 1e6 {
                assert_eq!(p.rank(), op.dim());
            }
        }
    }
    assert!(spectral_projection(&small_free(8, 0), 0.0).is_err());
}

#[test]
fn rank_counts_eigenvalues_in_window() {
    let h = small_free(64, 3);
    let e = eigensolve(&h).unwrap();
    let p = spectral_projection(&h, 1.0).unwrap();
    assert_eq!(p.rank(), e.values.iter().filter(|v| v.abs() <= 1.0).count());
    // zero modes live in the channels j >= 0
    assert!(p.rank() >= 4);

    let prm = desk_params();
    let profile = FluxProfile::standard(1.0);
    let levels = energy_levels(&prm, &profile, 3);
    let part = build_partition(prm.delta, prm.c, prm.j0, 0.5, (-3..=3).collect()).unwrap();
    let ht = assemble_comparison(&h, &levels, &part).unwrap();
    assert_eq!(spectral_projection(&ht, 1.0).unwrap().rank(), 0);
}

#[test]
fn plateau_indicator_of_two_level_operator() {
    let energy = 1.0;
    let grid = RadialGrid::new(2, 2.0).unwrap();
    let op = assemble_free(&grid, &FluxProfile::standard(1.0), 0).multiplication(|_, r, up| if up && r < 1.0 { 0.0 } else { 3.0 * energy });
    let ext = AlmostAnalyticExtension::new(energy, 0.1, None, 3, QuadratureSpec::default()).unwrap();
    let g = hs_functional_calculus(&op, &ext).unwrap();
    for i in 0..op.dim() {
        let (j, l) = op.locate(i);
        let (r, up) = tunnelkit::assembly::node_of(&grid, j, l);
        let want = if up && r < 1.0 { 1.0 } else { 0.0 };
        assert!((g[(i, i)].re - want).abs() < 1e-6);
    }
}

#[test]
fn scalar_quadrature_matches_indicator() {
    let ext = AlmostAnalyticExtension::new(1.0, 0.1, None, 3, QuadratureSpec::default()).unwrap();
    let g = ext.indicator;
    let mut worst: f64 = 0.0;
    for i in 0..=4000 {
        let t = -2.0 + 4.0 * i as f64 / 4000.0;
        if (t.abs() - 1.025).abs() < 0.04 {
            continue;
        }
        worst = worst.max((ext.scalar(t) - g.value(t)).abs());
    }
    assert!(worst <= 1e-6, "{worst}");
    assert!(AlmostAnalyticExtension::new(1.0, 0.1, None, 7, QuadratureSpec::default()).is_err());
}

#[test]
fn hs_agrees_with_eigendecomposition() {
    let ext = AlmostAnalyticExtension::new(1.0, 0.1, None, 3, QuadratureSpec::default()).unwrap();
    for op in [small_free(32, 1), coupled()] {
        let hs = hs_functional_calculus(&op, &ext).unwrap();
        let eig = g_by_eigen(&op, &ext.indicator).unwrap();
        assert!(op_norm(&(&hs - &eig)).unwrap() <= 1e-6);
        let band = eigensolve(&op).unwrap().values.iter().any(|v| v.abs() > 1.0 && v.abs() < 1.05);
        if !band {
            let p = spectral_projection(&op, 1.0).unwrap().to_dense();
            assert!(op_norm(&(&eig - &p)).unwrap() <= 1e-12);
        }
    }
}

#[test]
fn resolvent_difference() {
    let prm = desk_params();
    let profile = FluxProfile::standard(1.0);
    let h = small_free(32, 1);
    let ext = AlmostAnalyticExtension::new(1.0, prm.eps0, None, 3, QuadratureSpec::default()).unwrap();
    let levels = energy_levels(&prm, &profile, 1);
    let part = build_partition(prm.delta, prm.c, prm.j0, 0.5, (-1..=1).collect()).unwrap();
    let ht = assemble_comparison(&h, &levels, &part).unwrap();
    assert!(gap_check(&ht, 1.0 + prm.eps0).unwrap().pass);
    let same = resolvent_difference_projection(&ht, &ht, &ext).unwrap();
    assert_eq!(max_entry(&same), 0.0);
    let diff = resolvent_difference_projection(&h, &ht, &ext).unwrap();
    let eig = g_by_eigen(&h, &ext.indicator).unwrap();
    assert!(op_norm(&(&diff - &eig)).unwrap() <= 1e-6);
    assert!(op_norm(&hs_functional_calculus(&ht, &ext).unwrap()).unwrap() <= 1e-8);
    assert!(matches!(resolvent_difference_projection(&h, &h, &ext), Err(Error::Precondition(_))));
}
