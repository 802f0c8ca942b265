//! Run configuration: TOML, `--override` patches, validation with key paths.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use tunnelkit::fields::{FluxProfile, Tail};
use tunnelkit::perturbation::{AngularCoupling, Model, Term};

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Spectral window E.
    pub energy: f64,
    pub profile: ProfileConfig,
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// Channel cutoff J: channels -J..=J.
    #[serde(default = "default_channels")]
    pub channels: i64,
    /// Drop coupling modes whose envelope stays below this.
    #[serde(default = "default_band_tol")]
    pub band_tol: f64,
    #[serde(default)]
    pub tuning: TuningOverrides,
    #[serde(default)]
    pub spectrum: SpectrumOptions,
    #[serde(default)]
    pub regions: RegionOptions,
    #[serde(default)]
    pub inequalities: InequalityOptions,
    #[serde(default)]
    pub project: ProjectOptions,
    #[serde(default)]
    pub tunneling: TunnelingOptions,
    #[serde(default)]
    pub evolve: EvolveOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub alpha: f64,
    #[serde(default = "two_pi")]
    pub phi0: f64,
    #[serde(default)]
    pub tail: Option<Tail>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub beta: f64,
    pub mu_star: f64,
    /// Highest Fourier mode kept.
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// C0; estimated self-consistently when absent and W is nontrivial.
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub terms: Vec<Term>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub r_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 256, r_max: 12.0 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningOverrides {
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub c: Option<f64>,
    pub j0: Option<f64>,
    pub eps0: Option<f64>,
    pub eps1: Option<f64>,
    pub eps_star: Option<f64>,
    pub big_c: Option<f64>,
    pub u: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumOptions {
    /// Keep only eigenvalues with |lambda| <= window.
    pub window: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionOptions {
    /// Channels -j_max..=j_max (defaults to `channels`).
    pub j_max: Option<i64>,
    /// Scan points per channel.
    pub scan: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityOptions {
    /// Quadrature nodes sampled for the twisted gap.
    pub twisted_nodes: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectOptions {
    /// Almost-analytic extension order (1..=4).
    pub order: Option<usize>,
    /// Skip the quadrature comparison above this dimension.
    pub hs_max_dim: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunnelingOptions {
    pub zeta1: Option<f64>,
    pub c1: Option<f64>,
    pub zeta2: Option<f64>,
    pub c2: Option<f64>,
    pub xi1: Option<f64>,
    pub xi2: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveOptions {
    /// Projection window for the evolution (defaults to `energy`).
    pub window: Option<f64>,
    pub t_max: Option<f64>,
    pub samples: Option<usize>,
    /// Radial moment exponent.
    pub nu: Option<f64>,
    /// Channel moment exponent.
    pub mu: Option<f64>,
    /// Initial Gaussian packet: centre and width in r.
    pub center: Option<f64>,
    pub width: Option<f64>,
}

fn two_pi() -> f64 {
    2.0 * PI
}
fn default_channels() -> i64 {
    8
}
fn default_band_tol() -> f64 {
    1e-12
}
fn default_n_max() -> usize {
    4
}

/// Parse `KEY=VALUE` with a dotted key; the value is read as a TOML literal,
/// falling back to a bare string.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| CliError::config(spec, "override must be KEY=VALUE"))?;
    let key = key.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config(key, "empty path segment"));
    }
    let mut table = doc;
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        let entry = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| CliError::config(parts[..=i].join("."), "not a table"))?;
    }
    unreachable!()
}

impl RunConfig {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            CliError::config("<document>", e.message().to_string())
        })?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string().lines().next().unwrap_or_default().to_string();
            // missing fields are reported on the parent; name the field itself
            let key = match inner.strip_prefix("missing field `").and_then(|s| s.split('`').next()) {
                Some(f) if path == "." => f.to_string(),
                Some(f) => format!("{path}.{f}"),
                None => path,
            };
            CliError::config(key, inner)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(key, format!("must be positive and finite (got {v})")))
            }
        };
        positive("energy", self.energy)?;
        positive("profile.alpha", self.profile.alpha)?;
        positive("profile.phi0", self.profile.phi0)?;
        if !(self.perturbation.beta > 0.0) {
            return Err(CliError::config("perturbation.beta", format!("must be positive (got {})", self.perturbation.beta)));
        }
        if !(0.0..1.0).contains(&self.perturbation.mu_star) {
            return Err(CliError::config("perturbation.mu_star", format!("must lie in [0, 1) (got {})", self.perturbation.mu_star)));
        }
        if let Some(c0) = self.perturbation.c0 {
            if !(c0 >= 0.0) {
                return Err(CliError::config("perturbation.c0", format!("must be nonnegative (got {c0})")));
            }
        }
        if self.grid.n < 2 {
            return Err(CliError::config("grid.n", format!("need at least 2 nodes (got {})", self.grid.n)));
        }
        positive("grid.r_max", self.grid.r_max)?;
        if self.channels < 0 {
            return Err(CliError::config("channels", format!("must be nonnegative (got {})", self.channels)));
        }
        if let Some(o) = self.project.order {
            if !(1..=4).contains(&o) {
                return Err(CliError::config("project.order", format!("must be 1..=4 (got {o})")));
            }
        }
        if let Some(s) = self.evolve.samples {
            if s < 2 {
                return Err(CliError::config("evolve.samples", format!("need at least 2 samples (got {s})")));
            }
        }
        if let Some(t) = self.evolve.t_max {
            positive("evolve.t_max", t)?;
        }
        self.flux_profile()?;
        self.coupling()?;
        Ok(())
    }

    pub fn flux_profile(&self) -> Result<FluxProfile, CliError> {
        let tail = self.profile.tail.clone().unwrap_or(Tail::None);
        FluxProfile::new(self.profile.alpha, self.profile.phi0, tail).map_err(|e| CliError::config("profile", e.to_string()))
    }

    pub fn coupling(&self) -> Result<AngularCoupling, CliError> {
        let p = &self.perturbation;
        if p.terms.is_empty() {
            return Ok(AngularCoupling::zero());
        }
        AngularCoupling::from_model(Model { terms: p.terms.clone() }, p.n_max, p.beta, p.mu_star)
            .map_err(|e| CliError::config("perturbation.terms", e.to_string()))
    }
}
