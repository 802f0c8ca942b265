//! Quadratic-form certificates on the discretized channels: the W bound, the
//! comparison-operator gap and norm bounds, W control, and the twisted gap.

use crate::assembly::{self, BlockOperator, RadialGrid};
use crate::error::{Error, Result};
use crate::fields::FluxProfile;
use crate::linalg;
use crate::par::*;
use crate::partition::{build_partition, PartitionOfUnity, Which};
use crate::perturbation::AngularCoupling;
use crate::tuning::{derive, energy_levels, EnergyLevels, TunedParameters};
use crate::verify::WeightSpec;
use faer::c64;
use serde::{Deserialize, Serialize};

/// Relative tolerance of a margin against the right-hand side norm.
pub const FORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormMargin {
    pub name: String,
    /// Smallest eigenvalue of rhs - lhs.
    pub margin: f64,
    pub rhs_norm: f64,
    pub pass: bool,
}

impl FormMargin {
    fn new(name: &str, margin: f64, rhs_norm: f64) -> Self {
        FormMargin { name: name.into(), margin, rhs_norm, pass: margin >= -FORM_TOL * rhs_norm }
    }
}

/// Everything the certificates share: H0, W, levels, partition and H~0, H~.
pub struct FormSetup {
    pub params: TunedParameters,
    pub c0: f64,
    pub h0: BlockOperator,
    pub w: BlockOperator,
    pub levels: EnergyLevels,
    pub partition: PartitionOfUnity,
    pub h0_tilde: BlockOperator,
    pub h_tilde: BlockOperator,
    coupling: AngularCoupling,
}

impl FormSetup {
    pub fn new(
        grid: &RadialGrid,
        profile: &FluxProfile,
        coupling: &AngularCoupling,
        params: &TunedParameters,
        c0: f64,
        big_j: i64,
        band_tol: f64,
    ) -> Result<Self> {
        let h0 = assembly::assemble_free(grid, profile, big_j);
        let band = assembly::coupling_band(grid, coupling, band_tol);
        if band as i64 > 2 * big_j {
            return Err(Error::Config(format!("channel cutoff J = {big_j} cannot hold a coupling band of {band}")));
        }
        let w = assembly::assemble_coupling(grid, coupling, big_j, band);
        let levels = energy_levels(params, profile, big_j);
        let partition = build_partition(params.delta, params.c, params.j0, profile.sigma(), (-big_j..=big_j).collect())?;
        let h0_tilde = assembly::assemble_comparison(&h0, &levels, &partition)?;
        let h_tilde = h0_tilde.lincomb(1.0, 1.0, &w)?;
        Ok(FormSetup { params: *params, c0, h0, w, levels, partition, h0_tilde, h_tilde, coupling: coupling.clone() })
    }

    fn chi(&self, j: i64, r: f64) -> f64 {
        self.partition.eval(j as f64, Which::Chi, r).0
    }

    /// v_beta^2 <= (mu~/mu) H0^2 + mu_bar_star chi lambda^2 chi + C0.
    pub fn theorem_w(&self) -> Result<FormMargin> {
        let d = derive(&self.params);
        let h2 = self.h0.mul(&self.h0)?.scale(d.mu_tilde / self.params.mu);
        let rhs = h2.add_multiplication(|j, r, _| {
            let chi = self.chi(j, r);
            let lam = self.levels.lambda_of(j as f64);
            d.mu_bar_star * chi * chi * lam * lam + self.c0
        });
        let lhs = self.h0.multiplication(|_, r, _| self.coupling.v_beta(r).powi(2));
        margin("theorem_w", &lhs, &rhs)
    }

    /// W^2 <= v_beta^2 (the left inequality of the same chain).
    pub fn w_below_v_beta(&self) -> Result<FormMargin> {
        let lhs = self.w.mul(&self.w)?;
        let rhs = self.h0.multiplication(|_, r, _| self.coupling.v_beta(r).powi(2));
        margin("w_below_v_beta", &lhs, &rhs)
    }

    /// H0^2 + chi E^2 chi >= E^2 - 2 eps0.
    pub fn comparison_gap(&self) -> Result<FormMargin> {
        let eps0 = self.params.eps0;
        let rhs = self.h0.mul(&self.h0)?.add_multiplication(|j, r, _| (self.levels.e(j) * self.chi(j, r)).powi(2));
        let lhs = self.h0.multiplication(|j, _, _| self.levels.e(j).powi(2) - 2.0 * eps0);
        margin("comparison_gap", &lhs, &rhs)
    }

    /// |H~0 phi|^2 >= (1 - 3 eps0) |E phi|^2.
    pub fn comparison_norm_e(&self) -> Result<FormMargin> {
        let eps0 = self.params.eps0;
        let rhs = self.h0_tilde.mul(&self.h0_tilde)?;
        let lhs = self.h0.multiplication(|j, _, _| (1.0 - 3.0 * eps0) * self.levels.e(j).powi(2));
        margin("comparison_norm_e", &lhs, &rhs)
    }

    /// |H~0 phi|^2 >= (1 - 2 eps0) |H0 phi|^2.
    pub fn comparison_norm_h0(&self) -> Result<FormMargin> {
        let eps0 = self.params.eps0;
        let rhs = self.h0_tilde.mul(&self.h0_tilde)?;
        let lhs = self.h0.mul(&self.h0)?.scale(1.0 - 2.0 * eps0);
        margin("comparison_norm_h0", &lhs, &rhs)
    }

    /// |W phi|^2 <= (mu~/mu)^(1/2) |H~0 phi|^2.
    pub fn w_control(&self) -> Result<FormMargin> {
        let d = derive(&self.params);
        let rhs = self.h0_tilde.mul(&self.h0_tilde)?.scale((d.mu_tilde / self.params.mu).sqrt());
        let lhs = self.w.mul(&self.w)?;
        margin("w_control", &lhs, &rhs)
    }

    /// min |eig(H~)| against E~ (the margin is min|eig| - E~(1 - FORM_TOL)).
    pub fn inverse_gap(&self) -> Result<InverseGap> {
        let e_tilde = derive(&self.params).e_tilde();
        let min_abs = crate::spectral::min_abs_eigenvalue(&self.h_tilde)?;
        Ok(InverseGap { min_abs, e_tilde, pass: min_abs >= e_tilde * (1.0 - FORM_TOL) })
    }

    pub fn all(&self) -> Result<FormReport> {
        Ok(FormReport {
            margins: vec![
                self.theorem_w()?,
                self.w_below_v_beta()?,
                self.comparison_gap()?,
                self.comparison_norm_e()?,
                self.comparison_norm_h0()?,
                self.w_control()?,
            ],
            inverse_gap: self.inverse_gap()?,
        })
    }

    /// sigma_min((H~^F - z) E^-1) against delta0/4 at each z, equivalently
    /// |E (H~^F - z)^-1| <= 4/delta0.
    pub fn twisted_gap(&self, weight: &WeightSpec, zs: &[c64]) -> Result<TwistedGap> {
        let d = derive(&self.params);
        let u = self.params.u;
        if let Some(z) = zs.iter().find(|z| z.norm() > u / 4.0) {
            return Err(Error::Precondition(format!("|z| = {:.4} exceeds U/4 = {:.4}", z.norm(), u / 4.0)));
        }
        let hf = assembly::weight_conjugate(&self.h_tilde, weight)?;
        let einv: Vec<f64> = assembly::multiplication_diagonal(&hf.grid, hf.jmin, hf.jmax, |j, _, _| 1.0 / self.levels.e(j));
        let n = hf.dim();
        let trips = linalg::triplets(&hf.mat);
        let sig: Vec<Result<f64>> = zs
            .par_iter()
            .map(|&z| {
                let mut t: Vec<(usize, usize, c64)> = trips.iter().map(|&(i, j, v)| (i, j, v * einv[j])).collect();
                t.extend((0..n).map(|i| (i, i, -z * einv[i])));
                let a = linalg::sparse(n, &t);
                let ata = &linalg::adjoint(&a) * &a;
                Ok(linalg::min_eigenvalue(&ata)?.max(0.0).sqrt())
            })
            .collect();
        let mut sigma_min = Vec::with_capacity(zs.len());
        for s in sig {
            sigma_min.push(s?);
        }
        let bound = d.delta0 / 4.0;
        let worst = sigma_min.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(TwistedGap { z: zs.iter().map(|z| (z.re, z.im)).collect(), sigma_min, bound, pass: worst * (1.0 + FORM_TOL) >= bound })
    }
}

fn margin(name: &str, lhs: &BlockOperator, rhs: &BlockOperator) -> Result<FormMargin> {
    let m = assembly::form_inequality_margin(lhs, rhs)?;
    Ok(FormMargin::new(name, m, linalg::norm_bound(&rhs.mat)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseGap {
    pub min_abs: f64,
    pub e_tilde: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormReport {
    pub margins: Vec<FormMargin>,
    pub inverse_gap: InverseGap,
}

impl FormReport {
    pub fn all_pass(&self) -> bool {
        self.margins.iter().all(|m| m.pass) && self.inverse_gap.pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistedGap {
    pub z: Vec<(f64, f64)>,
    pub sigma_min: Vec<f64>,
    /// delta0 / 4
    pub bound: f64,
    pub pass: bool,
}

/// `count` nodes spread evenly over a quadrature node list, restricted to |z| <= radius.
pub fn sample_nodes(nodes: &[(c64, c64)], count: usize, radius: f64) -> Vec<c64> {
    let inside: Vec<c64> = nodes.iter().map(|n| n.0).filter(|z| z.norm() <= radius).collect();
    if inside.len() <= count {
        return inside;
    }
    (0..count).map(|k| inside[k * (inside.len() - 1) / (count - 1).max(1)]).collect()
}
