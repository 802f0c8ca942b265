use std::f64::consts::PI;
use tunnelkit::assembly::{RadialGrid, StateVector};
use tunnelkit::fields::FluxProfile;
use tunnelkit::perturbation::{
    coth_quarter, estimate_c0, fourier_coefficients, limsup_ratio, parseval_defect, twisted_norm_check,
    verify_condition2, Angular, AngularCoupling, AngularSamples, Model, Radial, Structure, Term,
};
use tunnelkit::tuning::auto_tune;
use tunnelkit::verify::WeightSpec;
use tunnelkit::{c64, Error};

fn term(structure: Structure, radial: Radial, angular: Angular) -> Term {
    Term { structure, radial, angular }
}

fn radii() -> Vec<f64> {
    vec![0.1, 0.5, 1.0, 2.0, 5.0]
}

#[test]
fn rotationally_symmetric_modes() {
    let model = Model { terms: vec![term(Structure::Identity, Radial::Gaussian { amp: 2.0, width: 1.5 }, Angular::constant(1.0))] };
    let samples = AngularSamples::from_model(&model, radii(), 32);
    let c = fourier_coefficients(&samples, 4, 1.0, 0.0).unwrap();
    for &r in &radii() {
        let v = 2.0 * (-(r / 1.5f64).powi(2)).exp();
        let modes = c.h_modes(r);
        for (i, w) in modes.iter().enumerate() {
            let n = i as i64 - 4;
            let want = if n == 0 { [v, 0.0, 0.0, v] } else { [0.0; 4] };
            for e in 0..4 {
                assert!((w[e] - c64::new(want[e], 0.0)).norm() < 1e-14);
            }
        }
    }
}

#[test]
fn cosine_mass_term_has_two_modes() {
    let model = Model {
        terms: vec![term(Structure::SigmaZ, Radial::Power { amp: 1.0, p: 2.0 }, Angular { constant: 0.0, cos: vec![(1, 1.0)], sin: vec![] })],
    };
    let samples = AngularSamples::from_model(&model, radii(), 64);
    let c = fourier_coefficients(&samples, 3, 1.0, 0.0).unwrap();
    for &r in &radii() {
        let w = 1.0 / (1.0 + r * r);
        for (i, m) in c.h_modes(r).iter().enumerate() {
            let n = i as i64 - 3;
            let (uu, dd) = if n.abs() == 1 { (w / 2.0, -w / 2.0) } else { (0.0, 0.0) };
            assert!((m[0].re - uu).abs() < 1e-14 && (m[3].re - dd).abs() < 1e-14 && m[1].norm() < 1e-14);
        }
    }
    assert!(parseval_defect(&samples).iter().all(|&d| d < 1e-10));
}

#[test]
fn reconstruction_and_parseval() {
    let model = Model {
        terms: vec![
            term(Structure::Identity, Radial::Const { value: 0.7 }, Angular { constant: 1.0, cos: vec![(2, 0.3)], sin: vec![(1, 0.2)] }),
            term(Structure::SigmaX, Radial::Gaussian { amp: 1.0, width: 2.0 }, Angular { constant: 0.5, cos: vec![], sin: vec![(3, 0.1)] }),
            term(Structure::Radial, Radial::Power { amp: 0.4, p: 1.0 }, Angular::constant(1.0)),
        ],
    };
    let samples = AngularSamples::from_model(&model, radii(), 64);
    assert!(parseval_defect(&samples).iter().all(|&d| d < 1e-10));
    let c = AngularCoupling::from_model(model.clone(), 6, 1.0, 0.0).unwrap();
    for &r in &radii() {
        for k in 0..17 {
            let th = 2.0 * PI * k as f64 / 17.0;
            let (a, b) = (c.reconstruct(r, th), model.eval(r, th));
            for x in 0..2 {
                for y in 0..2 {
                    assert!((a[x][y] - b[x][y]).norm() < 1e-10);
                }
            }
            assert!((b[0][1] - b[1][0].conj()).norm() < 1e-12);
        }
    }
}

#[test]
fn non_hermitian_samples_are_rejected() {
    let z = c64::new(0.0, 0.0);
    let bad = [[c64::new(1.0, 0.0), c64::new(1.0, 0.0)], [z, c64::new(1.0, 0.0)]];
    let samples = AngularSamples { r: vec![1.0], values: vec![vec![bad; 16]] };
    assert!(matches!(fourier_coefficients(&samples, 2, 1.0, 0.0), Err(Error::Validation(_))));
    let few = AngularSamples { r: vec![1.0], values: vec![vec![[[z; 2]; 2]; 4]] };
    assert!(fourier_coefficients(&few, 4, 1.0, 0.0).is_err());
}

#[test]
fn condition2_estimates() {
    let profile = FluxProfile::standard(1.0);
    let sym = Model { terms: vec![term(Structure::Identity, Radial::Gaussian { amp: 1.0, width: 1.0 }, Angular::constant(1.0))] };
    let c = AngularCoupling::from_model(sym, 4, f64::INFINITY, 0.0).unwrap();
    let r = verify_condition2(&c, &profile, 100.0).unwrap();
    assert!(r.beta_hat.is_infinite() && r.mu_star_hat < 1e-12 && r.pass);

    let cos: Vec<(u32, f64)> = (1..=6).map(|m| (m, 2.0 * (-2.0 * m as f64).exp())).collect();
    let decaying = Model { terms: vec![term(Structure::Identity, Radial::Const { value: 1.0 }, Angular { constant: 1.0, cos, sin: vec![] })] };
    let c = AngularCoupling::from_model(decaying, 6, 2.0, 0.0).unwrap();
    let r = verify_condition2(&c, &profile, 100.0).unwrap();
    assert!(r.beta_hat >= 2.0 - 1e-6, "{}", r.beta_hat);
    assert!(verify_condition2(&c, &profile, 0.0).is_err());

    let kappa = 0.5 / coth_quarter(1.0);
    let growth = Model { terms: vec![term(Structure::Identity, Radial::Growth { kappa, alpha: 1.0 }, Angular::constant(1.0))] };
    let c = AngularCoupling::from_model(growth, 2, 1.0, 0.25).unwrap();
    assert!((limsup_ratio(&c, &profile, 1e3) - 0.25).abs() < 1e-3);
}

#[test]
fn c0_estimates() {
    let profile = FluxProfile::standard(1.0);
    let grid = RadialGrid::new(64, 8.0).unwrap();
    let p = auto_tune(1.0, 1.0, 0.0, 1.0, 1.0).unwrap();
    assert!(estimate_c0(&AngularCoupling::zero(), &p, &profile, &grid, 2).unwrap() <= 1e-8);

    let w0 = 0.8;
    let bounded = Model { terms: vec![term(Structure::Identity, Radial::Const { value: w0 }, Angular::constant(1.0))] };
    let c = AngularCoupling::from_model(bounded, 0, f64::INFINITY, 0.0).unwrap();
    let c0 = estimate_c0(&c, &p, &profile, &grid, 2).unwrap();
    assert!(c0 > 0.0 && c0 <= w0 * w0 * (1.0 + 1e-10), "{c0}");

    let sweep = |f: &dyn Fn(&mut tunnelkit::tuning::TunedParameters, f64), xs: [f64; 3]| -> Vec<f64> {
        xs.iter()
            .map(|&x| {
                let mut q = p;
                f(&mut q, x);
                estimate_c0(&c, &q, &profile, &grid, 2).unwrap()
            })
            .collect()
    };
    let by_eps = sweep(&|q, x| q.eps1 = x, [0.01, 0.05, 0.1]);
    let tol = 1e-12 * w0 * w0;
    assert!(by_eps[0] + tol >= by_eps[1] && by_eps[1] + tol >= by_eps[2], "{by_eps:?}");
    // the H0^2 coefficient mu~/mu shrinks as mu grows, so C0 cannot decrease
    let by_mu = sweep(&|q, x| q.mu = x, [0.5, 0.7, 0.9]);
    assert!(by_mu[0] <= by_mu[1] + tol && by_mu[1] <= by_mu[2] + tol, "{by_mu:?}");
}

fn two_mode(beta: f64) -> AngularCoupling {
    let model = Model {
        terms: vec![
            term(Structure::Identity, Radial::Gaussian { amp: 1.0, width: 2.0 }, Angular::constant(1.0)),
            term(
                Structure::SigmaZ,
                Radial::Gaussian { amp: 1.0, width: 2.0 },
                Angular { constant: 0.0, cos: vec![(1, 2.0 * (-beta).exp())], sin: vec![] },
            ),
        ],
    };
    AngularCoupling::from_model(model, 2, beta, 0.0).unwrap()
}

#[test]
fn twisted_norm() {
    let grid = RadialGrid::new(48, 6.0).unwrap();
    let psi = StateVector::from_fn(&grid, -3, 3, |j, r, up| c64::new((-(r - 1.5).powi(2)).exp() / (1.0 + j.abs() as f64), if up { 0.1 } else { -0.2 }));

    let sym = Model { terms: vec![term(Structure::Identity, Radial::Gaussian { amp: 1.0, width: 2.0 }, Angular::constant(1.0))] };
    let c = AngularCoupling::from_model(sym, 0, f64::INFINITY, 0.0).unwrap();
    assert!(twisted_norm_check(&c, &WeightSpec::zero(), &psi).unwrap().pass);

    let beta = 1.0;
    let c = two_mode(beta);
    let slope = |s: f64| {
        WeightSpec::custom((-3..=3i64).map(|j| (j, vec![0.0, 10.0], vec![s * j.abs() as f64; 2])).collect()).unwrap()
    };
    let ok = twisted_norm_check(&c, &slope(0.4 * beta), &psi).unwrap();
    assert!(ok.pass && ok.lhs <= ok.rhs, "{ok:?}");
    assert!(matches!(twisted_norm_check(&c, &slope(beta), &psi), Err(Error::Precondition(_))));
}
