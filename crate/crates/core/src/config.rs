//! Experiment configuration and its JSON form.
//!
//! Every quantity is in SI units (meters, hertz, watts). The file carries a
//! `schema` version; unknown keys are rejected. A PEB threshold of `null`
//! means the UE has no positioning constraint.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "bs":  {"rows": 2, "cols": 2, "spacing_m": null, "position_m": [0, 0, 10]},
//!   "ris": {"rows": 4, "cols": 4, "spacing_m": null, "position_m": [0, 20, 10], "partitions": 1},
//!   "ue_positions_m": [[30, 8, 1.5], [33, 12, 1.5], [35, 6, 1.5]],
//!   "obstruction": [1, 1, 1],
//!   "fc_hz": 3.0e10, "delta_f_hz": 1.5e7, "n_subcarriers": 8,
//!   "n0_w_per_hz": 3.98e-21, "noise_figure_db": 8.0,
//!   "rate_req_bpshz": [1, 1, 1], "peb_threshold_m": [1.0, 1.0, null],
//!   "phase_mode": {"kind": "discrete", "q_bits": 2},
//!   "position_dim": 2, "peb_mode": "strict", "seed": 1,
//!   "max_power_w": null,
//!   "solver": {"tol": 1e-8, "max_iter": 100, "randomization_trials": 100, "stage1_starts": 8, "stage1_max_sweeps": 50}
//! }
//! ```
//!
//! The configuration contains no angles: directions are derived from the
//! positions.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ConfigIssue, CoreError, Result};
use crate::geometry::{upa_coordinates, ArrayGeometry, SPEED_OF_LIGHT};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseMode {
    Discrete { q_bits: u32 },
    Continuous,
    Random,
    Identity,
}

impl PhaseMode {
    pub fn name(&self) -> &'static str {
        match self {
            PhaseMode::Discrete { .. } => "discrete",
            PhaseMode::Continuous => "continuous",
            PhaseMode::Random => "random",
            PhaseMode::Identity => "identity",
        }
    }

    pub fn q_bits(&self) -> Option<u32> {
        match self {
            PhaseMode::Discrete { q_bits } => Some(*q_bits),
            _ => None,
        }
    }

    /// Parses `continuous`, `random`, `identity` or `discrete:<q>`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "continuous" => Some(PhaseMode::Continuous),
            "random" => Some(PhaseMode::Random),
            "identity" => Some(PhaseMode::Identity),
            _ => s
                .strip_prefix("discrete:")
                .or_else(|| s.strip_prefix("q"))
                .and_then(|q| q.parse().ok())
                .map(|q_bits| PhaseMode::Discrete { q_bits }),
        }
    }

    /// Short label, e.g. `q2` for two-bit discrete phases.
    pub fn label(&self) -> String {
        match self {
            PhaseMode::Discrete { q_bits } => format!("q{q_bits}"),
            other => other.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PebMode {
    /// Full inverse; rank-deficient information is an error.
    #[default]
    Strict,
    /// Pseudo-inverse over the observable subspace.
    Pseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    /// Element spacing; `null` selects half a carrier wavelength.
    #[serde(default)]
    pub spacing_m: Option<f64>,
    pub position_m: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RisSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub spacing_m: Option<f64>,
    pub position_m: [f64; 3],
    /// Number of column-wise sub-arrays acting as separate anchors.
    #[serde(default = "one")]
    pub partitions: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub randomization_trials: usize,
    pub stage1_starts: usize,
    pub stage1_max_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            randomization_trials: 100,
            stage1_starts: 8,
            stage1_max_sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub schema: u32,
    pub bs: ArraySpec,
    pub ris: RisSpec,
    pub ue_positions_m: Vec<[f64; 3]>,
    pub obstruction: Vec<u8>,
    pub fc_hz: f64,
    pub delta_f_hz: f64,
    pub n_subcarriers: usize,
    pub n0_w_per_hz: f64,
    pub noise_figure_db: f64,
    pub rate_req_bpshz: Vec<f64>,
    pub peb_threshold_m: Vec<Option<f64>>,
    pub phase_mode: PhaseMode,
    #[serde(default = "two")]
    pub position_dim: usize,
    #[serde(default)]
    pub peb_mode: PebMode,
    pub seed: u64,
    /// Optional cap on total transmit power; exceeding it is infeasible.
    #[serde(default)]
    pub max_power_w: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// `-174 dBm/Hz` in W/Hz.
pub fn thermal_noise_w_per_hz() -> f64 {
    dbm_to_w(-174.0)
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

impl SystemConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(s)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Loads a file, applies dotted `key=value` overrides and validates.
    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_with_overrides(&text, overrides)
    }

    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: SystemConfig = serde_json::from_value(value)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Returns a copy with the override applied.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        apply_override(&mut value, assignment)?;
        let cfg: SystemConfig = serde_json::from_value(value)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(CoreError::InvalidConfig(issues))
        }
    }

    /// Every invariant violation, keyed by the offending field.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |k: &str, m: String| out.push(ConfigIssue::new(k, m));
        if self.schema != SCHEMA_VERSION {
            bad(
                "schema",
                format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema),
            );
        }
        for (name, rows, cols, spacing, pos) in [
            ("bs", self.bs.rows, self.bs.cols, self.bs.spacing_m, self.bs.position_m),
            (
                "ris",
                self.ris.rows,
                self.ris.cols,
                self.ris.spacing_m,
                self.ris.position_m,
            ),
        ] {
            if rows == 0 || cols == 0 {
                bad(&format!("{name}.rows"), "array dimensions must be >= 1".into());
            }
            if let Some(s) = spacing {
                if !(s > 0.0 && s.is_finite()) {
                    bad(&format!("{name}.spacing_m"), "spacing must be positive".into());
                }
            }
            if pos.iter().any(|v| !v.is_finite()) {
                bad(&format!("{name}.position_m"), "non-finite coordinate".into());
            }
        }
        if self.ris.partitions == 0 {
            bad("ris.partitions", "must be >= 1".into());
        } else if self.ris.cols % self.ris.partitions != 0 {
            bad(
                "ris.partitions",
                format!(
                    "{} columns are not divisible into {} sub-arrays",
                    self.ris.cols, self.ris.partitions
                ),
            );
        }
        let k = self.ue_positions_m.len();
        if k == 0 {
            bad("ue_positions_m", "at least one UE is required".into());
        }
        let bs = Vector3::from(self.bs.position_m);
        let ris = Vector3::from(self.ris.position_m);
        if (bs - ris).norm() == 0.0 {
            bad("ris.position_m", "RIS coincides with the BS".into());
        }
        for (i, u) in self.ue_positions_m.iter().enumerate() {
            let u = Vector3::from(*u);
            if u.iter().any(|v| !v.is_finite()) {
                bad(&format!("ue_positions_m[{i}]"), "non-finite coordinate".into());
            } else if (u - bs).norm() == 0.0 || (u - ris).norm() == 0.0 {
                bad(
                    &format!("ue_positions_m[{i}]"),
                    "UE coincides with the BS or RIS".into(),
                );
            }
        }
        if self.obstruction.len() != k {
            bad(
                "obstruction",
                format!("length {} does not match {k} UEs", self.obstruction.len()),
            );
        }
        if self.obstruction.iter().any(|&c| c > 1) {
            bad("obstruction", "entries must be 0 or 1".into());
        }
        if self.rate_req_bpshz.len() != k {
            bad(
                "rate_req_bpshz",
                format!("length {} does not match {k} UEs", self.rate_req_bpshz.len()),
            );
        }
        if self.rate_req_bpshz.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
            bad("rate_req_bpshz", "rates must be finite and >= 0".into());
        }
        if self.peb_threshold_m.len() != k {
            bad(
                "peb_threshold_m",
                format!("length {} does not match {k} UEs", self.peb_threshold_m.len()),
            );
        }
        if self.peb_threshold_m.iter().flatten().any(|&d| !(d > 0.0)) {
            bad("peb_threshold_m", "thresholds must be > 0 (null for none)".into());
        }
        for (key, v) in [
            ("fc_hz", self.fc_hz),
            ("delta_f_hz", self.delta_f_hz),
            ("n0_w_per_hz", self.n0_w_per_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(key, "must be strictly positive".into());
            }
        }
        if !self.noise_figure_db.is_finite() {
            bad("noise_figure_db", "must be finite".into());
        }
        if self.n_subcarriers == 0 {
            bad("n_subcarriers", "must be >= 1".into());
        }
        if let PhaseMode::Discrete { q_bits } = self.phase_mode {
            if q_bits == 0 {
                bad(
                    "phase_mode.q_bits",
                    "discrete mode needs q >= 1 (L = 2^q >= 2 levels)".into(),
                );
            } else if q_bits > 16 {
                bad("phase_mode.q_bits", "at most 16 bits are supported".into());
            }
        }
        if !(self.position_dim == 2 || self.position_dim == 3) {
            bad("position_dim", "must be 2 or 3".into());
        }
        if let Some(p) = self.max_power_w {
            if !(p > 0.0) {
                bad("max_power_w", "must be positive".into());
            }
        }
        if !(self.solver.tol > 0.0) {
            bad("solver.tol", "must be positive".into());
        }
        if self.solver.max_iter == 0 {
            bad("solver.max_iter", "must be >= 1".into());
        }
        if self.solver.randomization_trials == 0 {
            bad("solver.randomization_trials", "must be >= 1".into());
        }
        if self.solver.stage1_max_sweeps == 0 {
            bad("solver.stage1_max_sweeps", "must be >= 1".into());
        }
        out
    }

    pub fn n_users(&self) -> usize {
        self.ue_positions_m.len()
    }

    pub fn chi(&self, k: usize) -> f64 {
        f64::from(self.obstruction[k])
    }

    /// Per-subcarrier noise power `N0 * delta_f * NF` in watts.
    pub fn noise_power(&self) -> f64 {
        self.n0_w_per_hz * self.delta_f_hz * 10f64.powf(self.noise_figure_db / 10.0)
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc_hz
    }

    /// Rate weight `2^r - 1`.
    pub fn beta(&self, k: usize) -> f64 {
        2f64.powf(self.rate_req_bpshz[k]) - 1.0
    }

    /// PEB threshold, infinite when unconstrained.
    pub fn peb_threshold(&self, k: usize) -> f64 {
        self.peb_threshold_m[k].unwrap_or(f64::INFINITY)
    }

    pub fn ue_position(&self, k: usize) -> Vector3<f64> {
        Vector3::from(self.ue_positions_m[k])
    }

    pub fn bs_geometry(&self) -> ArrayGeometry {
        let d = self.bs.spacing_m.unwrap_or(self.carrier_wavelength() / 2.0);
        upa_coordinates(self.bs.rows, self.bs.cols, d)
            .expect("validated dimensions")
            .placed_at(Vector3::from(self.bs.position_m))
    }

    pub fn ris_geometry(&self) -> ArrayGeometry {
        let d = self.ris.spacing_m.unwrap_or(self.carrier_wavelength() / 2.0);
        upa_coordinates(self.ris.rows, self.ris.cols, d)
            .expect("validated dimensions")
            .placed_at(Vector3::from(self.ris.position_m))
    }
}

/// Applies `a.b.c=value` to a JSON tree. The path must already exist; the
/// value is parsed as JSON and falls back to a plain string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        CoreError::InvalidConfig(vec![ConfigIssue::new(assignment, "override must look like key=value")])
    })?;
    let key = key.trim();
    let parsed: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let missing = || CoreError::InvalidConfig(vec![ConfigIssue::new(key, "no such config key")]);
    let mut node = root;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part).ok_or_else(missing)?,
            Value::Array(items) => {
                let i: usize = part.parse().map_err(|_| missing())?;
                items.get_mut(i).ok_or_else(missing)?
            }
            _ => return Err(missing()),
        };
    }
    *node = parsed;
    Ok(())
}
