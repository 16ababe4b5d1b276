//! Experiment configuration: JSON layout and fail-fast validation.
//!
//! Every numeric field is checked against the preconditions of the module
//! that will consume it before any solve starts, and every rejection names
//! the offending field.

use std::path::PathBuf;

use serde::Deserialize;

use outflux::geometry::{build_outlet_domain, DomainSpec, OutletDomain};

/// Scalar-or-list field: a single value for plain runs, a list for
/// continuation schedules and sweep axes.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    One(f64),
    Many(Vec<f64>),
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Axis::One(v) => vec![*v],
            Axis::Many(vs) => vs.clone(),
        }
    }

    /// The single value, or a config error naming `field`.
    pub fn single(&self, field: &str) -> Result<f64, ConfigError> {
        let vs = self.values();
        if vs.len() == 1 {
            Ok(vs[0])
        } else {
            Err(ConfigError(format!(
                "{field}: expected a single value, got a list of {}",
                vs.len()
            )))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    /// Power-law exponent p (>= 2); a list is a sweep axis.
    pub p: Axis,
    /// Truncation length T: a list is a continuation schedule for `run`
    /// and a grid axis for `sweep`.
    pub t: Axis,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub domain: DomainSpec,
    pub law: LawConfig,
    /// Flux alpha; a list is a sweep axis.
    pub flux: Axis,
    pub mesh_h: f64,
    /// Diagnostic window half-length t.
    pub window_t: f64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Rejected configuration; the message names the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Full precondition sweep; returns the built domain on success.
    pub fn validate(&self) -> Result<OutletDomain, ConfigError> {
        if self.version != 1 {
            return Err(ConfigError(format!(
                "version: unsupported config version {} (expected 1)",
                self.version
            )));
        }
        let domain =
            build_outlet_domain(&self.domain).map_err(|e| ConfigError(format!("domain: {e}")))?;
        let ps = self.law.p.values();
        if ps.is_empty() {
            return Err(ConfigError("law.p: empty list".into()));
        }
        for p in &ps {
            if !(p.is_finite() && *p >= 2.0) {
                return Err(ConfigError(format!("law.p: {p} out of range (need p >= 2)")));
            }
        }
        let ts = self.law.t.values();
        if ts.is_empty() {
            return Err(ConfigError("law.t: empty list".into()));
        }
        for t in &ts {
            if !(t.is_finite() && *t > 0.0) {
                return Err(ConfigError(format!("law.t: {t} out of range (need T > 0)")));
            }
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ConfigError("law.t: values must be strictly increasing".into()));
        }
        for a in self.flux.values() {
            if !a.is_finite() {
                return Err(ConfigError(format!("flux: {a} is not finite")));
            }
        }
        if self.flux.values().is_empty() {
            return Err(ConfigError("flux: empty list".into()));
        }
        if !(self.mesh_h.is_finite() && self.mesh_h > 0.0) {
            return Err(ConfigError(format!("mesh_h: {} out of range", self.mesh_h)));
        }
        if self.mesh_h >= domain.l1() / 4.0 {
            return Err(ConfigError(format!(
                "mesh_h: {} too coarse for this domain (need h < l1/4 = {})",
                self.mesh_h,
                domain.l1() / 4.0
            )));
        }
        if !(self.window_t.is_finite() && self.window_t >= 1.0) {
            return Err(ConfigError(format!(
                "window_t: {} out of range (need t >= 1)",
                self.window_t
            )));
        }
        Ok(domain)
    }
}

/// Parse a config document, mapping serde's field-naming errors through.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError(format!("config: {e}")))
}
