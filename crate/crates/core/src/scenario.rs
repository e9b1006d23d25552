//! Scenario presets, RIS partitioning and parameter sweeps.
//!
//! Scenario 1 has every direct link available, Scenario 2 blocks the second
//! UE's direct link and Scenario 3 blocks all of them. The default geometry
//! places the BS at the origin 10 m up, the RIS 20 m along +y at the same
//! height, and three UEs at ground level about 30-35 m in front of both.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beamform::two_stage::run_two_stage;
use crate::config::{
    thermal_noise_w_per_hz, ArraySpec, PebMode, PhaseMode, RisSpec, SolverOptions, SystemConfig, SCHEMA_VERSION,
};
use crate::error::{CoreError, Result};
use crate::metrics::report::fmt_f64;

pub const DEFAULT_UES: [[f64; 3]; 3] = [[30.0, 8.0, 1.5], [33.0, 12.0, 1.5], [35.0, 6.0, 1.5]];

/// Desk-scale total power cap, watts.
pub const DESK_MAX_POWER_W: f64 = 1e12;

/// Scenario 3 sub-beams share one BS-RIS line of sight, so their effective
/// channels are nearly collinear and the SINR saturates near 0.5. Rates must
/// stay below `log2(1.5)`.
pub const S3_RATE_BPSHZ: f64 = 0.5;
/// Sub-array centroids sit a few wavelengths apart, so 2-D positioning
/// needs large power even at decameter accuracy.
pub const S3_PEB_M: f64 = 30.0;

/// Scenario preset. Desk scale uses a 2x2 BS, a 4x4 RIS (4x6 split into
/// three column blocks for Scenario 3) and 8 subcarriers spread over the
/// same 120 MHz bandwidth as the full-size setup.
pub fn build_scenario(id: u8, desk_scale: bool) -> Result<SystemConfig> {
    let chi: Vec<u8> = match id {
        1 => vec![1, 1, 1],
        2 => vec![1, 0, 1],
        3 => vec![0, 0, 0],
        other => {
            return Err(CoreError::InvalidArgument(format!(
                "scenario id must be 1, 2 or 3, got {other}"
            )))
        }
    };
    let (bs_n, ris_rows, ris_cols, delta_f, n_sub) = if desk_scale {
        (2, 4, if id == 3 { 6 } else { 4 }, 15e6, 8)
    } else {
        (4, 12, 12, 120e3, 1000)
    };
    let cfg = SystemConfig {
        schema: SCHEMA_VERSION,
        bs: ArraySpec {
            rows: bs_n,
            cols: bs_n,
            spacing_m: None,
            position_m: [0.0, 0.0, 10.0],
        },
        ris: RisSpec {
            rows: ris_rows,
            cols: ris_cols,
            spacing_m: None,
            position_m: [0.0, 20.0, 10.0],
            partitions: if id == 3 { 3 } else { 1 },
        },
        ue_positions_m: DEFAULT_UES.to_vec(),
        obstruction: chi,
        fc_hz: 30e9,
        delta_f_hz: delta_f,
        n_subcarriers: n_sub,
        n0_w_per_hz: thermal_noise_w_per_hz(),
        noise_figure_db: 8.0,
        rate_req_bpshz: vec![if id == 3 { S3_RATE_BPSHZ } else { 1.0 }; 3],
        peb_threshold_m: vec![Some(if id == 3 { S3_PEB_M } else { 1.0 }); 3],
        phase_mode: PhaseMode::Discrete { q_bits: 2 },
        position_dim: 2,
        peb_mode: if id == 2 { PebMode::Pseudo } else { PebMode::Strict },
        seed: 1,
        max_power_w: if desk_scale { Some(DESK_MAX_POWER_W) } else { None },
        solver: SolverOptions::default(),
    };
    cfg.check()?;
    Ok(cfg)
}

/// Splits the RIS into `parts` column blocks, each acting as its own anchor.
pub fn partition_ris(cfg: &SystemConfig, parts: usize) -> Result<SystemConfig> {
    if parts == 0 || cfg.ris.cols % parts != 0 {
        return Err(CoreError::InvalidArgument(format!(
            "{} RIS columns cannot be split into {parts} equal blocks",
            cfg.ris.cols
        )));
    }
    let mut out = cfg.clone();
    out.ris.partitions = parts;
    out.check()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParam {
    RateReq,
    PebThreshold,
}

impl SweptParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweptParam::RateReq => "rate",
            SweptParam::PebThreshold => "peb",
        }
    }
}

/// One sweep: every value, for every phase mode and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario_id: u8,
    pub swept_param: SweptParam,
    /// Strictly ascending.
    pub values: Vec<f64>,
    /// Value of the other requirement for every UE (`null` for no PEB limit).
    pub fixed_other: Option<f64>,
    pub phase_modes: Vec<PhaseMode>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidArgument(m.to_string()));
        if self.values.is_empty() || self.phase_modes.is_empty() || self.seeds.is_empty() {
            return bad("sweep lists must be non-empty");
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("sweep values must be strictly ascending");
        }
        if self.swept_param == SweptParam::PebThreshold && self.values.iter().any(|&v| !(v > 0.0)) {
            return bad("PEB thresholds must be positive");
        }
        if self.swept_param == SweptParam::RateReq && self.values.iter().any(|&v| !(v >= 0.0)) {
            return bad("rate requirements must be >= 0");
        }
        Ok(())
    }

    /// Configuration of one sweep point.
    pub fn point_config(&self, base: &SystemConfig, mode: PhaseMode, seed: u64, value: f64) -> SystemConfig {
        let mut cfg = base.clone();
        let k = cfg.n_users();
        cfg.phase_mode = mode;
        cfg.seed = seed;
        match self.swept_param {
            SweptParam::RateReq => {
                cfg.rate_req_bpshz = vec![value; k];
                cfg.peb_threshold_m = vec![self.fixed_other; k];
            }
            SweptParam::PebThreshold => {
                cfg.peb_threshold_m = vec![Some(value); k];
                cfg.rate_req_bpshz = vec![self.fixed_other.unwrap_or(0.0); k];
            }
        }
        cfg
    }
}

/// `Option<f64>` as a JSON number, `"inf"`/`"-inf"`/`"nan"` for non-finite
/// values and `null` for missing ones.
pub mod opt_num {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_f64(*x),
            Some(x) => s.serialize_str(&super::fmt_f64(*x)),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => None,
            Some(Repr::Num(x)) => Some(x),
            Some(Repr::Tag(t)) => Some(match t.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                _ => f64::NAN,
            }),
        })
    }

    pub mod vec {
        use super::Repr;
        use serde::{ser::SerializeSeq, Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                match x {
                    None => seq.serialize_element(&Option::<f64>::None)?,
                    Some(x) if x.is_finite() => seq.serialize_element(x)?,
                    Some(x) => seq.serialize_element(&super::super::fmt_f64(*x))?,
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<f64>>, D::Error> {
            let raw = Vec::<Option<Repr>>::deserialize(d)?;
            Ok(raw
                .into_iter()
                .map(|r| match r {
                    None => None,
                    Some(Repr::Num(x)) => Some(x),
                    Some(Repr::Tag(t)) => Some(match t.as_str() {
                        "inf" => f64::INFINITY,
                        "-inf" => f64::NEG_INFINITY,
                        _ => f64::NAN,
                    }),
                })
                .collect())
        }
    }
}

/// One result row; metric fields are `None` when the point failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario_id: u8,
    pub phase_mode: String,
    pub q_bits: Option<u32>,
    pub seed: u64,
    pub rate_req_bpshz: f64,
    /// `None` when the PEB is unconstrained.
    #[serde(with = "opt_num")]
    pub peb_threshold_m: Option<f64>,
    #[serde(with = "opt_num")]
    pub power_total_dbm: Option<f64>,
    #[serde(with = "opt_num")]
    pub power_total_w: Option<f64>,
    #[serde(with = "opt_num::vec")]
    pub rate_bpshz: Vec<Option<f64>>,
    #[serde(with = "opt_num::vec")]
    pub peb_m: Vec<Option<f64>>,
    #[serde(with = "opt_num")]
    pub sdr_gap: Option<f64>,
    pub solver_status: String,
    pub wall_ms: u64,
}

impl SweepRow {
    pub fn is_optimal(&self) -> bool {
        self.solver_status == "optimal"
    }
}

/// Runs one point and turns the outcome, success or failure, into a row.
pub fn run_point(scenario_id: u8, cfg: &SystemConfig, record_timing: bool) -> SweepRow {
    let start = Instant::now();
    let k = cfg.n_users();
    let result = run_two_stage(cfg);
    let wall_ms = if record_timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    };
    let base = SweepRow {
        scenario_id,
        phase_mode: cfg.phase_mode.name().to_string(),
        q_bits: cfg.phase_mode.q_bits(),
        seed: cfg.seed,
        rate_req_bpshz: cfg.rate_req_bpshz[0],
        peb_threshold_m: cfg.peb_threshold_m[0],
        power_total_dbm: None,
        power_total_w: None,
        rate_bpshz: vec![None; k],
        peb_m: vec![None; k],
        sdr_gap: None,
        solver_status: String::new(),
        wall_ms,
    };
    match result {
        Ok(r) => SweepRow {
            power_total_dbm: Some(r.report.power_total_dbm),
            power_total_w: Some(r.report.power_total_w),
            rate_bpshz: r.report.per_ue.iter().map(|u| Some(u.rate_bpshz)).collect(),
            peb_m: r.report.per_ue.iter().map(|u| Some(u.peb_m)).collect(),
            sdr_gap: Some(r.beams.sdr_gap()),
            solver_status: "optimal".into(),
            ..base
        },
        Err(e) => SweepRow {
            solver_status: e.status().into(),
            ..base
        },
    }
}

/// Runs every point of `spec` on top of `base`, in parallel over `jobs`
/// threads. Rows come back ordered by phase mode, then seed, then value.
pub fn run_sweep(spec: &SweepSpec, base: &SystemConfig, jobs: usize, record_timing: bool) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut points = Vec::new();
    for &mode in &spec.phase_modes {
        for &seed in &spec.seeds {
            for &value in &spec.values {
                let cfg = spec.point_config(base, mode, seed, value);
                cfg.check()?;
                points.push(cfg);
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CoreError::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        points
            .par_iter()
            .map(|cfg| run_point(spec.scenario_id, cfg, record_timing))
            .collect()
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

/// CSV header for `k` UEs.
pub fn csv_header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "scenario_id",
        "phase_mode",
        "q_bits",
        "seed",
        "rate_req_bpshz",
        "peb_threshold_m",
        "power_total_dbm",
        "power_total_w",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=k).map(|i| format!("rate_k{i}_bpshz")));
    h.extend((1..=k).map(|i| format!("peb_k{i}_m")));
    h.extend(["sdr_gap", "solver_status", "wall_ms"].iter().map(|s| s.to_string()));
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Writes the table as CSV. `n_users` fixes the per-UE column count when
/// the table is empty.
pub fn write_csv<W: Write>(rows: &[SweepRow], n_users: usize, out: W) -> Result<()> {
    let k = rows.first().map(|r| r.rate_bpshz.len()).unwrap_or(n_users);
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| CoreError::Csv(e.to_string());
    w.write_record(csv_header(k)).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.scenario_id.to_string(),
            r.phase_mode.clone(),
            r.q_bits.map(|q| q.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            fmt_f64(r.rate_req_bpshz),
            fmt_f64(r.peb_threshold_m.unwrap_or(f64::INFINITY)),
            opt(r.power_total_dbm),
            opt(r.power_total_w),
        ];
        rec.extend(r.rate_bpshz.iter().map(|v| opt(*v)));
        rec.extend(r.peb_m.iter().map(|v| opt(*v)));
        rec.push(opt(r.sdr_gap));
        rec.push(r.solver_status.clone());
        rec.push(r.wall_ms.to_string());
        w.write_record(rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CoreError::Csv(e.to_string()))?;
    Ok(())
}

pub fn to_csv_string(rows: &[SweepRow], n_users: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, n_users, &mut buf)?;
    String::from_utf8(buf).map_err(|e| CoreError::Csv(e.to_string()))
}

/// Writes the table to `path` in the requested format.
pub fn emit(rows: &[SweepRow], n_users: usize, format: TableFormat, path: &Path) -> Result<()> {
    let io = |source| CoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = match format {
        TableFormat::Csv => to_csv_string(rows, n_users)?,
        TableFormat::Json => serde_json::to_string_pretty(rows)?,
    };
    std::fs::write(path, text).map_err(io)
}

/// Default output name `{scenario}_{param}_{mode}.csv`.
pub fn default_file_name(spec: &SweepSpec, format: TableFormat) -> String {
    let modes: Vec<String> = spec.phase_modes.iter().map(|m| m.label()).collect();
    let ext = match format {
        TableFormat::Csv => "csv",
        TableFormat::Json => "json",
    };
    format!(
        "s{}_{}_{}.{ext}",
        spec.scenario_id,
        spec.swept_param.name(),
        modes.join("-")
    )
}
