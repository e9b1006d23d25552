use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::{w_to_dbm, PebMode, SystemConfig};
use crate::error::{CoreError, Result};
use crate::metrics::bounds::crb_peb;
use crate::metrics::comm::sinr_rate;
use crate::metrics::fim::efim_closed_form;
use crate::phase::PhaseProfile;
use crate::C64;

/// Serializes non-finite values as `null` and reads `null` back as +inf.
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeMetrics {
    pub sinr: f64,
    pub rate_bpshz: f64,
    #[serde(with = "inf_as_null")]
    pub crb_m2: f64,
    #[serde(with = "inf_as_null")]
    pub peb_m: f64,
    pub efim_rank: usize,
    #[serde(with = "inf_as_null")]
    pub efim_condition: f64,
    /// Achieved rate minus the requirement.
    pub rate_margin: f64,
    /// Threshold minus achieved PEB; `null` when either side is infinite.
    #[serde(with = "inf_as_null")]
    pub peb_margin_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_ue: Vec<UeMetrics>,
    pub power_total_w: f64,
    #[serde(with = "inf_as_null")]
    pub power_total_dbm: f64,
}

pub fn total_power(w: &[Vec<DVector<C64>>]) -> f64 {
    w.iter().flatten().map(|x| x.norm_squared()).sum()
}

/// Rates, PEBs and total power of a complete solution. In strict mode a
/// rank-deficient EFIM is reported as an infinite PEB rather than an error.
pub fn evaluate(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    w: &[Vec<DVector<C64>>],
    cfg: &SystemConfig,
) -> Result<MetricsReport> {
    let mut per_ue = Vec::with_capacity(ch.n_users);
    for k in 0..ch.n_users {
        let (sinr, rate) = sinr_rate(ch, w, phase, k);
        let efim = efim_closed_form(ch, w, phase, k, cfg.position_dim)?.efim;
        let (crb, peb, rank, cond) = match crb_peb(&efim, cfg.peb_mode) {
            Ok(r) => (r.crb, r.peb, r.rank, r.condition),
            Err(CoreError::SingularInformation { .. }) => {
                let r = crb_peb(&efim, PebMode::Pseudo)?;
                (f64::INFINITY, f64::INFINITY, r.rank, f64::INFINITY)
            }
            Err(e) => return Err(e),
        };
        let delta = cfg.peb_threshold(k);
        let peb_margin = if delta.is_finite() && peb.is_finite() {
            delta - peb
        } else {
            f64::INFINITY
        };
        per_ue.push(UeMetrics {
            sinr,
            rate_bpshz: rate,
            crb_m2: crb,
            peb_m: peb,
            efim_rank: rank,
            efim_condition: cond,
            rate_margin: rate - cfg.rate_req_bpshz[k],
            peb_margin_m: peb_margin,
        });
    }
    let p = total_power(w);
    Ok(MetricsReport {
        per_ue,
        power_total_w: p,
        power_total_dbm: w_to_dbm(p),
    })
}

impl MetricsReport {
    /// Column names of [`MetricsReport::csv_values`] for `k` UEs.
    pub fn csv_header(k: usize) -> Vec<String> {
        let mut h = vec!["power_total_dbm".to_string(), "power_total_w".to_string()];
        h.extend((1..=k).map(|i| format!("rate_k{i}_bpshz")));
        h.extend((1..=k).map(|i| format!("peb_k{i}_m")));
        h.extend((1..=k).map(|i| format!("sinr_k{i}")));
        h
    }

    pub fn csv_values(&self) -> Vec<String> {
        let mut v = vec![fmt_f64(self.power_total_dbm), fmt_f64(self.power_total_w)];
        v.extend(self.per_ue.iter().map(|u| fmt_f64(u.rate_bpshz)));
        v.extend(self.per_ue.iter().map(|u| fmt_f64(u.peb_m)));
        v.extend(self.per_ue.iter().map(|u| fmt_f64(u.sinr)));
        v
    }

    /// Checks the rate and PEB requirements with the given tolerances.
    pub fn satisfies(&self, cfg: &SystemConfig, rate_tol: f64, peb_rel_tol: f64) -> bool {
        self.per_ue.iter().enumerate().all(|(k, u)| {
            let r_ok = cfg.rate_req_bpshz[k] == 0.0 || u.rate_bpshz >= cfg.rate_req_bpshz[k] - rate_tol;
            let d = cfg.peb_threshold(k);
            let p_ok = !d.is_finite() || u.peb_m <= d * (1.0 + peb_rel_tol);
            r_ok && p_ok
        })
    }
}

/// Shortest round-trip representation; non-finite values print as `inf`/`nan`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}
