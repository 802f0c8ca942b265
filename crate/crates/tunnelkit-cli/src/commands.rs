//! Subcommand bodies. Each reads a validated config and emits artifacts.

use serde_json::json;
use tunnelkit::assembly::{self, BlockOperator, RadialGrid, StateVector};
use tunnelkit::fields::FluxProfile;
use tunnelkit::inequalities::{sample_nodes, FormSetup};
use tunnelkit::partition::build_partition;
use tunnelkit::perturbation::{self_consistent_tune, verify_condition2, AngularCoupling};
use tunnelkit::regions::{allowed_region, check_containment, lower_bound_margin, region_constants, Side};
use tunnelkit::spectral::{self, AlmostAnalyticExtension, QuadratureSpec, SpectralProjection};
use tunnelkit::tuning::{auto_tune, check_conditions, congruence_check, derive, energy_levels, TunedParameters};
use tunnelkit::verify::{self, TunnelSide, WeightKind};
use tunnelkit::{c64, linalg};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{num, Output};

type Res = Result<(), CliError>;

pub struct Context {
    pub cfg: RunConfig,
    pub profile: FluxProfile,
    pub coupling: AngularCoupling,
    pub grid: RadialGrid,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let profile = cfg.flux_profile()?;
        let coupling = cfg.coupling()?;
        let grid = RadialGrid::new(cfg.grid.n, cfg.grid.r_max).map_err(|e| CliError::config("grid", e.to_string()))?;
        Ok(Context { cfg, profile, coupling, grid })
    }

    /// Tuned parameters with the config overrides applied, and C0.
    pub fn tuned(&self) -> Result<(TunedParameters, f64, &'static str), CliError> {
        let pc = &self.cfg.perturbation;
        let (mut p, c0, source) = match pc.c0 {
            Some(c0) => (auto_tune(self.profile.alpha, pc.beta, pc.mu_star, self.cfg.energy, c0)?, c0, "config"),
            None if self.coupling.is_trivial() => (auto_tune(self.profile.alpha, pc.beta, pc.mu_star, self.cfg.energy, 0.0)?, 0.0, "trivial"),
            None => {
                let t = self_consistent_tune(&self.coupling, &self.profile, self.cfg.energy, &self.grid, 2)?;
                let mut p = t.params;
                p.externals.beta = pc.beta;
                p.externals.mu_star = pc.mu_star;
                (p, t.c0, "estimated")
            }
        };
        let o = &self.cfg.tuning;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.mu, o.mu);
        set(&mut p.delta, o.delta);
        set(&mut p.c, o.c);
        set(&mut p.j0, o.j0);
        set(&mut p.eps0, o.eps0);
        set(&mut p.eps1, o.eps1);
        set(&mut p.eps_star, o.eps_star);
        set(&mut p.big_c, o.big_c);
        set(&mut p.u, o.u);
        Ok((p, c0, source))
    }

    pub fn hamiltonian(&self) -> Result<BlockOperator, CliError> {
        let coupling = if self.coupling.is_trivial() { None } else { Some(&self.coupling) };
        Ok(assembly::assemble_full(&self.grid, &self.profile, coupling, self.cfg.channels, self.cfg.band_tol)?)
    }
}

/// Channel carrying most of a projection column's weight, with that weight.
fn dominant_channel(p: &SpectralProjection, k: usize) -> (i64, f64) {
    let col = &p.columns[k];
    let block = 2 * p.grid.n;
    let mut best = (p.jmin, 0.0);
    let mut total = 0.0;
    let mut acc = std::collections::BTreeMap::new();
    for (i, z) in col.data.iter().enumerate() {
        let j = p.jmin + ((col.offset + i) / block) as i64;
        *acc.entry(j).or_insert(0.0) += z.norm_sqr();
        total += z.norm_sqr();
    }
    for (j, w) in acc {
        if w > best.1 {
            best = (j, w);
        }
    }
    (best.0, if total > 0.0 { best.1 / total } else { 0.0 })
}

pub fn spectrum(ctx: &Context, out: &mut Output) -> Res {
    let h = ctx.hamiltonian()?;
    let window = ctx.cfg.spectrum.window;
    let keep = |v: f64| window.is_none_or(|w| v.abs() <= w);
    let mut rows = Vec::new();
    if h.is_block_diagonal() {
        for j in h.channels() {
            let vals = linalg::dense_eigenvalues(&linalg::to_dense(&h.channel_block(j)))?;
            rows.extend(vals.into_iter().filter(|&v| keep(v)).enumerate().map(|(k, v)| vec![j.to_string(), k.to_string(), num(v), num(1.0)]));
        }
    } else {
        let e = spectral::eigensolve(&h)?;
        let bd = h.dim() / h.channels().count();
        for (k, &v) in e.values.iter().enumerate().filter(|(_, v)| keep(**v)) {
            let mut w = vec![0.0; h.channels().count()];
            for i in 0..h.dim() {
                w[i / bd] += e.vectors[(i, k)].norm_sqr();
            }
            let (b, wb) = w.iter().enumerate().fold((0, 0.0), |acc, (b, &x)| if x > acc.1 { (b, x) } else { acc });
            rows.push(vec![(h.jmin + b as i64).to_string(), k.to_string(), num(v), num(wb)]);
        }
    }
    out.csv("spectrum.csv", &["channel", "index", "eigenvalue", "channel_weight"], &rows)?;
    out.json(
        "spectrum.json",
        &json!({
            "dimension": h.dim(),
            "channels": [h.jmin, h.jmax],
            "band": h.band,
            "block_diagonal": h.is_block_diagonal(),
            "eigenvalues_written": rows.len(),
            "window": window,
        }),
    )
}

pub fn tune(ctx: &Context, out: &mut Output) -> Res {
    let (p, c0, source) = ctx.tuned()?;
    let report = check_conditions(&p, &ctx.profile, c0);
    let j_max = ctx.cfg.channels.max(2);
    let levels = energy_levels(&p, &ctx.profile, j_max);
    let part = build_partition(p.delta, p.c, p.j0, ctx.profile.sigma(), vec![])?;
    let chans: Vec<f64> = (-j_max..=j_max).map(|j| j as f64).collect();
    let congruence = congruence_check(&levels, &part, &ctx.profile, &chans);
    let rows: Vec<Vec<String>> =
        (-j_max..=j_max).map(|j| vec![j.to_string(), num(levels.e(j)), num(levels.lambda_of(j as f64))]).collect();
    out.csv("energy_levels.csv", &["channel", "e_j", "lambda_j"], &rows)?;
    out.json(
        "tune.json",
        &json!({
            "params": p,
            "c0": c0,
            "c0_source": source,
            "derived": derive(&p),
            "e_tilde": derive(&p).e_tilde(),
            "conditions": report,
            "all_pass": report.all_pass(),
            "gamma": verify::gamma_max(&p),
            "congruence": congruence,
        }),
    )
}

pub fn regions(ctx: &Context, out: &mut Output) -> Res {
    let (p, _, _) = ctx.tuned()?;
    let j_max = ctx.cfg.regions.j_max.unwrap_or(ctx.cfg.channels);
    let levels = energy_levels(&p, &ctx.profile, j_max);
    let (c_mu, delta_mu) = region_constants(p.mu, p.c, ctx.profile.alpha)?;
    let mut rows = Vec::new();
    let mut intervals = Vec::new();
    let (mut bounds_ok, mut contained_ok) = (true, true);
    let scan = ctx.cfg.regions.scan.unwrap_or(4000);
    for j in -j_max..=j_max {
        let outer = lower_bound_margin(&ctx.profile, j, p.mu, p.c, p.delta, Side::Exterior)?;
        bounds_ok &= outer >= 0.0;
        // the interior bound and containment only exist for |j| >= 2
        let mut row = vec![j.to_string(), num(levels.e(j)), String::new(), num(outer)];
        if j.abs() >= 2 {
            let inner = lower_bound_margin(&ctx.profile, j, p.mu, p.c, p.delta, Side::Interior)?;
            let cont = check_containment(&ctx.profile, j, levels.e(j), p.delta, p.c, p.mu)?;
            bounds_ok &= inner >= 0.0;
            contained_ok &= cont.contained;
            row[2] = num(inner);
            for (k, &(a, b)) in cont.region.intervals.iter().enumerate() {
                intervals.push(vec![j.to_string(), k.to_string(), num(a), num(b)]);
            }
            row.extend([
                cont.region.intervals.len().to_string(),
                cont.region.truncated.to_string(),
                cont.applicable.to_string(),
                cont.contained.to_string(),
                num(cont.slack.0),
                num(cont.slack.1),
            ]);
        } else {
            let region = allowed_region(&ctx.profile, j, levels.e(j), ctx.cfg.grid.r_max, scan)?;
            for (k, &(a, b)) in region.intervals.iter().enumerate() {
                intervals.push(vec![j.to_string(), k.to_string(), num(a), num(b)]);
            }
            row.extend([region.intervals.len().to_string(), region.truncated.to_string()]);
            row.extend(std::iter::repeat_n(String::new(), 4));
        }
        rows.push(row);
    }
    out.csv(
        "regions.csv",
        &["channel", "e_j", "margin_inner", "margin_outer", "intervals", "truncated", "applicable", "contained", "slack_inner", "slack_outer"],
        &rows,
    )?;
    out.csv("region_intervals.csv", &["channel", "k", "r_lo", "r_hi"], &intervals)?;
    out.json(
        "regions.json",
        &json!({
            "c_mu": c_mu,
            "delta_mu": delta_mu,
            "lower_bounds_pass": bounds_ok,
            "containment_pass": contained_ok,
            "channels": [-j_max, j_max],
        }),
    )
}

pub fn inequalities(ctx: &Context, out: &mut Output) -> Res {
    let (p, c0, _) = ctx.tuned()?;
    let setup = FormSetup::new(&ctx.grid, &ctx.profile, &ctx.coupling, &p, c0, ctx.cfg.channels, ctx.cfg.band_tol)?;
    let report = setup.all()?;
    let ext = AlmostAnalyticExtension::new(ctx.cfg.energy, p.eps0, None, 3, QuadratureSpec::default())?;
    let zs = sample_nodes(&ext.nodes, ctx.cfg.inequalities.twisted_nodes.unwrap_or(20), p.u / 4.0);
    let weight = verify::build_weight(WeightKind::F, verify::gamma_max(&p).gamma0, &p, &ctx.profile)?;
    let twisted = setup.twisted_gap(&weight, &zs)?;
    let mut rows: Vec<Vec<String>> =
        report.margins.iter().map(|m| vec![m.name.clone(), num(m.margin), num(m.rhs_norm), m.pass.to_string()]).collect();
    rows.push(vec![
        "inverse_gap".into(),
        num(report.inverse_gap.min_abs - report.inverse_gap.e_tilde),
        num(report.inverse_gap.e_tilde),
        report.inverse_gap.pass.to_string(),
    ]);
    let worst = twisted.sigma_min.iter().copied().fold(f64::INFINITY, f64::min);
    rows.push(vec!["twisted_gap".into(), num(worst - twisted.bound), num(twisted.bound), twisted.pass.to_string()]);
    out.csv("margins.csv", &["name", "margin", "scale", "pass"], &rows)?;
    let cond2 = verify_condition2(&ctx.coupling, &ctx.profile, ctx.cfg.grid.r_max)?;
    out.json(
        "inequalities.json",
        &json!({
            "forms": report,
            "twisted_gap": twisted,
            "condition2": cond2,
            "all_pass": report.all_pass() && twisted.pass,
        }),
    )
}

pub fn project(ctx: &Context, out: &mut Output) -> Res {
    let (p, _, _) = ctx.tuned()?;
    let h = ctx.hamiltonian()?;
    let energy = ctx.cfg.energy;
    let proj = spectral::spectral_projection(&h, energy)?;
    let rows: Vec<Vec<String>> = (0..proj.rank())
        .map(|k| {
            let (j, w) = dominant_channel(&proj, k);
            vec![k.to_string(), num(proj.values[k]), j.to_string(), num(w)]
        })
        .collect();
    out.csv("projection.csv", &["index", "eigenvalue", "channel", "channel_weight"], &rows)?;

    let levels = energy_levels(&p, &ctx.profile, ctx.cfg.channels);
    let part = build_partition(p.delta, p.c, p.j0, ctx.profile.sigma(), (-ctx.cfg.channels..=ctx.cfg.channels).collect())?;
    let h0 = assembly::assemble_free(&ctx.grid, &ctx.profile, ctx.cfg.channels);
    let h0t = assembly::assemble_comparison(&h0, &levels, &part)?;
    let ht = h0t.lincomb(1.0, 1.0, &h.lincomb(1.0, -1.0, &h0)?)?;
    let gap = spectral::gap_check(&ht, energy + p.eps0)?;
    let max_dim = ctx.cfg.project.hs_max_dim.unwrap_or(600);
    let hs = if h.dim() <= max_dim {
        let ext = AlmostAnalyticExtension::new(energy, p.eps0, None, ctx.cfg.project.order.unwrap_or(3), QuadratureSpec::default())?;
        let via_hs = spectral::hs_functional_calculus(&h, &ext)?;
        let via_eig = spectral::g_by_eigen(&h, &ext.indicator)?;
        let d_hs = spectral::op_norm(&(&via_hs - &via_eig))?;
        let g_ht = spectral::op_norm(&spectral::hs_functional_calculus(&ht, &ext)?)?;
        let diff = if gap.pass {
            let via_diff = spectral::resolvent_difference_projection(&h, &ht, &ext)?;
            Some(spectral::op_norm(&(&via_diff - &via_eig))?)
        } else {
            None
        };
        json!({
            "nodes": ext.nodes.len(),
            "hs_vs_eigen": d_hs,
            "g_of_h_tilde": g_ht,
            "resolvent_difference_vs_eigen": diff,
            "pass": d_hs <= 1e-6 && g_ht <= 1e-8 && diff.is_some_and(|d| d <= 1e-6),
        })
    } else {
        json!({ "skipped": format!("dimension {} above project.hs_max_dim = {max_dim}", h.dim()) })
    };
    out.json(
        "project.json",
        &json!({
            "energy": energy,
            "dimension": h.dim(),
            "rank": proj.rank(),
            "boundary_warning": proj.boundary_warning,
            "gap": gap,
            "functional_calculus": hs,
        }),
    )
}

pub fn tunneling(ctx: &Context, out: &mut Output) -> Res {
    let (p, _, _) = ctx.tuned()?;
    let h = ctx.hamiltonian()?;
    let proj = spectral::spectral_projection(&h, ctx.cfg.energy)?;
    let gamma0 = verify::gamma_max(&p).gamma0;
    let mut k = verify::proof_constants(&p, gamma0);
    let o = &ctx.cfg.tunneling;
    k.zeta1 = o.zeta1.unwrap_or(k.zeta1);
    k.c1 = o.c1.unwrap_or(k.c1);
    k.zeta2 = o.zeta2.unwrap_or(k.zeta2);
    k.c2 = o.c2.unwrap_or(k.c2);
    let big_j = ctx.cfg.channels;
    let inner = verify::tunneling_sum(&proj, TunnelSide::Interior, k.zeta1, k.c1, big_j, &ctx.profile)?;
    let outer = verify::tunneling_sum(&proj, TunnelSide::Exterior, k.zeta2, k.c2, big_j, &ctx.profile)?;
    let alpha = ctx.profile.alpha;
    let xi1 = o.xi1.unwrap_or((k.c1.powf(1.0 + alpha) * k.zeta1).min(k.zeta2));
    let xi2 = o.xi2.unwrap_or(k.zeta1.min(k.zeta2 * k.c2.powf(1.0 + alpha)));
    let norms = verify::corollary_p_norms(&proj, &k, xi1, xi2, &ctx.profile);
    let mut rows = Vec::new();
    for (side, s) in [("interior", &inner), ("exterior", &outer)] {
        rows.extend(s.terms.iter().map(|&(j, t)| vec![side.to_string(), j.to_string(), num(t)]));
    }
    out.csv("tunneling_terms.csv", &["side", "channel", "term"], &rows)?;
    out.json(
        "tunneling.json",
        &json!({
            "rank": proj.rank(),
            "gamma0": gamma0,
            "constants": k,
            "interior": { "total": inner.total, "saturated": inner.saturated, "monotone_from": inner.monotone_from },
            "exterior": { "total": outer.total, "saturated": outer.saturated, "monotone_from": outer.monotone_from },
            "xi": [xi1, xi2],
            "p_norms": norms,
        }),
    )
}

pub fn evolve(ctx: &Context, out: &mut Output) -> Res {
    let o = &ctx.cfg.evolve;
    let h = ctx.hamiltonian()?;
    let proj = spectral::spectral_projection(&h, o.window.unwrap_or(ctx.cfg.energy))?;
    let (center, width) = (o.center.unwrap_or(1.5), o.width.unwrap_or(1.0));
    let phi0 = StateVector::from_fn(&ctx.grid, h.jmin, h.jmax, |_, r, up| {
        let g = (-((r - center) / width).powi(2)).exp();
        c64::new(if up { g } else { 0.5 * g }, 0.0)
    });
    let t_max = o.t_max.unwrap_or(1e3);
    let samples = o.samples.unwrap_or(1001);
    let times: Vec<f64> = (0..samples).map(|k| t_max * k as f64 / (samples - 1) as f64).collect();
    let (nu, mu) = (o.nu.unwrap_or(1.0), o.mu.unwrap_or(2.0));
    let tr = verify::evolve_and_measure(&proj, &phi0, &times, nu, mu)?;
    let sigma = ctx.profile.sigma();
    let bound = verify::corollary1_constants(&proj, nu, sigma);
    let p0 = StateVector { amps: proj.apply(&phi0.amps), ..phi0.clone() };
    let rhs = bound.eval(&p0, nu * sigma);
    let r_sup = tr.radius.iter().copied().fold(0.0, f64::max);
    let growth = if tr.j_moment.iter().skip(1).all(|&v| v > 0.0) {
        verify::fit_growth_exponent(&tr.times[1..], &tr.j_moment[1..]).ok()
    } else {
        None
    };
    let rows: Vec<Vec<String>> = (0..tr.times.len())
        .map(|k| vec![num(tr.times[k]), num(tr.norm[k]), num(tr.radius[k]), num(tr.j_moment[k])])
        .collect();
    out.csv("trajectory.csv", &["t", "norm", "radius_moment", "j_moment"], &rows)?;
    let unitarity = tr.norm.iter().map(|n| (n - tr.norm[0]).abs()).fold(0.0, f64::max);
    out.json(
        "evolve.json",
        &json!({
            "rank": proj.rank(),
            "retained": tr.retained,
            "nu": nu,
            "mu": mu,
            "unitarity_defect": unitarity,
            "radius_bound": { "constants": bound, "bound": rhs, "sup": r_sup, "pass": r_sup <= rhs },
            "j_growth": growth,
        }),
    )
}
