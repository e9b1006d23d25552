//! Transmit beamforming for a fixed RIS profile.
//!
//! The relaxation is over `W_{n,k} = w_{n,k} w_{n,k}^H`, one real-embedded
//! PSD block per subcarrier and UE. Rate requirements become linear
//! constraints. Each PEB requirement becomes an LMI
//! `[[Lambda, I], [I, J~]] >= 0` with `<R^2, Lambda> <= delta^2`, where
//! `J~ = T J T^T` is the EFIM whitened by a reference solution so that the
//! problem stays well scaled for any power level. All blocks are expressed
//! in units of a reference power `P0`.

use ipac_sdp::{
    gaussian_randomize, hermitian_embed, hermitian_from_embedding, rank_ratio_of, reduce_rank, BlockKind, Coeff,
    Constraint, Functional, RandomizationError, RandomizationOutcome, Relation, Score, SdpProblem, SolveStatus,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamform::BeamSolution;
use crate::channel::ChannelSet;
use crate::config::{PebMode, SystemConfig};
use crate::error::{CoreError, Result};
use crate::metrics::bounds::{crb_peb, EIGEN_CUTOFF};
use crate::metrics::comm::{effective_channel, segment_reflected_channel, sinr_rate};
use crate::metrics::fim::{efim_closed_form, efim_prefactor, path_directions};
use crate::metrics::report::total_power;
use crate::phase::PhaseProfile;
use crate::C64;

/// Options shared by the relaxation and the extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Options {
    pub tol: f64,
    pub max_iter: usize,
    pub trials: usize,
    pub max_power_w: Option<f64>,
    pub position_dim: usize,
    pub peb_mode: PebMode,
}

impl Stage2Options {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            tol: cfg.solver.tol,
            max_iter: cfg.solver.max_iter,
            trials: cfg.solver.randomization_trials,
            max_power_w: cfg.max_power_w,
            position_dim: cfg.position_dim,
            peb_mode: cfg.peb_mode,
        }
    }
}

/// Per-UE requirements.
#[derive(Debug, Clone, PartialEq)]
pub struct Requirements {
    pub rate_bpshz: Vec<f64>,
    /// Infinite when unconstrained.
    pub peb_m: Vec<f64>,
}

impl Requirements {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Self {
            rate_bpshz: cfg.rate_req_bpshz.clone(),
            peb_m: (0..cfg.n_users()).map(|k| cfg.peb_threshold(k)).collect(),
        }
    }

    pub fn beta(&self, k: usize) -> f64 {
        2f64.powf(self.rate_bpshz[k]) - 1.0
    }
}

/// One information-carrying path of one UE on one subcarrier.
struct PathTerm {
    /// `8 pi^2 df^2 n^2 weight / (c^2 sigma^2)`.
    coef: f64,
    h: DVector<C64>,
    /// Index into the UE's direction list.
    dir: usize,
}

/// Positioning data of one PEB-constrained UE.
struct PebData {
    k: usize,
    /// `terms[n - 1]`.
    terms: Vec<Vec<PathTerm>>,
    dirs: Vec<DVector<f64>>,
    /// Orthonormal basis of the constrained subspace, `pd x r`.
    basis: DMatrix<f64>,
}

impl PebData {
    /// EFIM for isotropic beams with unit total power.
    fn unit_power_efim(&self, n_sub: usize, n_users: usize, n_tx: usize) -> DMatrix<f64> {
        let pd = self.dirs[0].len();
        let per_block = 1.0 / (n_sub * n_users * n_tx) as f64;
        let mut j = DMatrix::zeros(pd, pd);
        for terms in &self.terms {
            for t in terms {
                let q = &self.dirs[t.dir];
                j += q * q.transpose() * (t.coef * t.h.norm_squared() * per_block * n_users as f64);
            }
        }
        j
    }
}

impl PebData {
    /// Power below which no beams can meet `PEB <= delta`: with `r`
    /// constrained directions `tr(J^-1) >= r^2 / tr(J)`, and `tr(J)` is at
    /// most the total power times the strongest per-subcarrier path sum.
    fn power_lower_bound(&self, delta: f64) -> f64 {
        let r = self.basis.ncols() as f64;
        let gain = self
            .terms
            .iter()
            .map(|terms| {
                terms
                    .iter()
                    .map(|t| t.coef * t.h.norm_squared() * (self.basis.transpose() * &self.dirs[t.dir]).norm_squared())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        if gain > 0.0 {
            r * r / (delta * delta * gain)
        } else {
            f64::INFINITY
        }
    }
}

fn sym_inv_sqrt(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let e = m.clone().symmetric_eigen();
    if e.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&e.eigenvectors * d * e.eigenvectors.transpose())
}

fn peb_data(ch: &ChannelSet, phase: &PhaseProfile, k: usize, opts: &Stage2Options) -> Result<PebData> {
    let pd = opts.position_dim;
    let dirs = path_directions(ch, k, pd)?;
    let pre = efim_prefactor(ch.delta_f) / ch.noise_power;
    let chi = ch.chi[k];
    let mut terms = Vec::with_capacity(ch.n_subcarriers);
    for idx in 0..ch.n_subcarriers {
        let n2 = ((idx + 1) * (idx + 1)) as f64;
        let mut t = Vec::new();
        if chi > 0.0 {
            t.push(PathTerm {
                coef: pre * n2 * chi,
                h: ch.h_direct[idx][k].clone(),
                dir: 0,
            });
        }
        for j in 0..ch.segments.len() {
            t.push(PathTerm {
                coef: pre * n2,
                h: segment_reflected_channel(ch, phase, j, k, idx),
                dir: j + 1,
            });
        }
        terms.push(t);
    }
    // Structural span of the active path directions.
    let mut s = DMatrix::<f64>::zeros(pd, pd);
    if chi > 0.0 {
        s += &dirs[0] * dirs[0].transpose();
    }
    for q in &dirs[1..] {
        s += q * q.transpose();
    }
    let e = s.symmetric_eigen();
    let lmax = e.eigenvalues.max();
    let (obs, unobs): (Vec<usize>, Vec<usize>) =
        (0..pd).partition(|&i| lmax > 0.0 && e.eigenvalues[i] > EIGEN_CUTOFF * lmax);
    let basis = match opts.peb_mode {
        PebMode::Strict => {
            if !unobs.is_empty() {
                return Err(CoreError::SingularInformation {
                    directions: unobs
                        .iter()
                        .map(|&i| e.eigenvectors.column(i).iter().copied().collect())
                        .collect(),
                });
            }
            DMatrix::identity(pd, pd)
        }
        PebMode::Pseudo => e.eigenvectors.select_columns(&obs),
    };
    Ok(PebData { k, terms, dirs, basis })
}

/// Labels used when reporting which requirements make the problem infeasible.
fn rate_label(k: usize) -> String {
    format!("rate[k={}]", k + 1)
}

fn peb_label(k: usize) -> String {
    format!("peb[k={}]", k + 1)
}

const BUDGET_LABEL: &str = "power_budget";

/// The assembled relaxation together with the bookkeeping needed to read it back.
pub struct Stage2Relaxation {
    pub problem: SdpProblem,
    /// Constraint labels, one per row.
    pub labels: Vec<String>,
    /// Frobenius norm of every constraint row.
    pub row_norms: Vec<f64>,
    /// Block index of `W_{n,k}`: `w_blocks[n - 1][k]`.
    pub w_blocks: Vec<Vec<usize>>,
    /// Reference power: block values are in units of `p0` watts.
    pub p0: f64,
}

fn row_norm(c: &Constraint, sizes: &[usize]) -> f64 {
    c.terms
        .iter()
        .map(|t| t.coeff.to_dense(sizes[t.block]).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Builds the relaxation, or returns `Ok(None)` when no UE carries a requirement.
pub fn build_relaxation(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    req: &Requirements,
    opts: &Stage2Options,
) -> Result<Option<Stage2Relaxation>> {
    let (n_sub, n_users, n_tx) = (ch.n_subcarriers, ch.n_users, ch.n_tx);
    let sigma2 = ch.noise_power;
    let rate_users: Vec<usize> = (0..n_users).filter(|&k| req.rate_bpshz[k] > 0.0).collect();
    let peb_users: Vec<usize> = (0..n_users).filter(|&k| req.peb_m[k].is_finite()).collect();
    if rate_users.is_empty() && peb_users.is_empty() {
        return Ok(None);
    }

    let g: Vec<Vec<DVector<C64>>> = (0..n_sub)
        .map(|idx| (0..n_users).map(|k| effective_channel(ch, phase, k, idx)).collect())
        .collect();

    // Reference power from the single-constraint requirements.
    let mut p0 = 0.0_f64;
    for &k in &rate_users {
        let best = (0..n_sub).map(|i| g[i][k].norm_squared()).fold(0.0, f64::max);
        if best == 0.0 {
            return Err(CoreError::Infeasible {
                binding: vec![rate_label(k)],
            });
        }
        p0 = p0.max(req.beta(k) * sigma2 / best);
        if opts.max_power_w.is_some_and(|pmax| req.beta(k) * sigma2 / best > pmax) {
            return Err(CoreError::Infeasible {
                binding: vec![rate_label(k), BUDGET_LABEL.to_string()],
            });
        }
    }
    let mut peb = Vec::with_capacity(peb_users.len());
    for &k in &peb_users {
        let d = peb_data(ch, phase, k, opts)?;
        let ju = d.unit_power_efim(n_sub, n_users, n_tx);
        let m = d.basis.transpose() * &ju * &d.basis;
        let inv = m
            .clone()
            .try_inverse()
            .filter(|i| i.iter().all(|v| v.is_finite()) && i.trace() > 0.0)
            .ok_or_else(|| CoreError::Infeasible {
                binding: vec![peb_label(k)],
            })?;
        p0 = p0.max(inv.trace() / (req.peb_m[k] * req.peb_m[k]));
        if let Some(pmax) = opts.max_power_w {
            if d.power_lower_bound(req.peb_m[k]) > pmax {
                return Err(CoreError::Infeasible {
                    binding: vec![peb_label(k), BUDGET_LABEL.to_string()],
                });
            }
        }
        peb.push((d, ju));
    }
    if !(p0 > 0.0 && p0.is_finite()) {
        return Err(CoreError::SolverFailure(format!("reference power {p0} is not usable")));
    }

    let mut prob = SdpProblem::new();
    let w_blocks: Vec<Vec<usize>> = (0..n_sub)
        .map(|_| (0..n_users).map(|_| prob.add_block(BlockKind::Psd, 2 * n_tx)).collect())
        .collect();
    for row in &w_blocks {
        for &b in row {
            prob.add_objective(b, Coeff::sparse((0..2 * n_tx).map(|i| (i, i, 0.5)).collect()));
        }
    }
    let mut labels = Vec::new();

    // Rate: sum_n g^H W_k g - beta sum_{j != k} sum_n g^H W_j g >= beta sigma^2,
    // divided through by beta sigma^2 and by p0 / p0_k so the coefficients stay
    // O(1) when another requirement sets the reference power.
    for &k in &rate_users {
        let beta = req.beta(k);
        let best = (0..n_sub).map(|i| g[i][k].norm_squared()).fold(0.0, f64::max);
        let ratio = (p0 * best / (beta * sigma2)).max(1.0);
        let mut c = Constraint::new(Relation::Ge, 1.0 / ratio);
        for idx in 0..n_sub {
            let gg = &g[idx][k] * g[idx][k].adjoint();
            let e = hermitian_embed(&gg)? * (0.5 * p0 / (beta * sigma2 * ratio));
            for j in 0..n_users {
                let f = if j == k { 1.0 } else { -beta };
                c.push(w_blocks[idx][j], Coeff::dense(&(&e * f)));
            }
        }
        prob.add_constraint(c);
        labels.push(rate_label(k));
    }

    // PEB: Z_k = [[Lambda, I], [I, J~]] >= 0 and <R^2, Lambda> <= delta^2.
    for (d, ju) in &peb {
        let k = d.k;
        let r = d.basis.ncols();
        let m_ref = d.basis.transpose() * (ju * p0) * &d.basis;
        let rw = sym_inv_sqrt(&m_ref).ok_or_else(|| CoreError::Infeasible {
            binding: vec![peb_label(k)],
        })?;
        let t = &rw * d.basis.transpose();
        let z = prob.add_block(BlockKind::Psd, 2 * r);
        for a in 0..r {
            for b in 0..r {
                let rhs = if a == b { 1.0 } else { 0.0 };
                prob.add_constraint(Constraint::new(Relation::Eq, rhs).with(z, Coeff::entry(a, r + b, 0.5)));
                labels.push(peb_label(k));
            }
        }
        let tq: Vec<DVector<f64>> = d.dirs.iter().map(|q| &t * q).collect();
        for a in 0..r {
            for b in a..r {
                let zc = if a == b {
                    Coeff::entry(r + a, r + a, 1.0)
                } else {
                    Coeff::entry(r + a, r + b, 0.5)
                };
                let mut c = Constraint::new(Relation::Eq, 0.0).with(z, zc);
                for (idx, terms) in d.terms.iter().enumerate() {
                    let mut h = DMatrix::<C64>::zeros(n_tx, n_tx);
                    for term in terms {
                        let f = term.coef * tq[term.dir][a] * tq[term.dir][b];
                        if f != 0.0 {
                            h += &term.h * term.h.adjoint() * C64::from(f);
                        }
                    }
                    let e = hermitian_embed(&((&h + h.adjoint()) * C64::new(0.5, 0.0)))? * (-0.5 * p0);
                    if e.iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    let coeff = Coeff::dense(&e);
                    for j in 0..n_users {
                        c.push(w_blocks[idx][j], coeff.clone());
                    }
                }
                prob.add_constraint(c);
                labels.push(peb_label(k));
            }
        }
        let r2 = &rw * &rw;
        let mut entries = Vec::new();
        for a in 0..r {
            for b in a..r {
                entries.push((a, b, r2[(a, b)]));
            }
        }
        let delta = req.peb_m[k];
        prob.add_constraint(Constraint::new(Relation::Le, delta * delta).with(z, Coeff::sparse(entries)));
        labels.push(peb_label(k));
    }

    if let Some(pmax) = opts.max_power_w {
        // Normalized to rhs 1 so a loose budget does not dominate ||b||.
        let f = 0.5 * p0 / pmax;
        let mut c = Constraint::new(Relation::Le, 1.0);
        for row in &w_blocks {
            for &b in row {
                c.push(b, Coeff::sparse((0..2 * n_tx).map(|i| (i, i, f)).collect()));
            }
        }
        prob.add_constraint(c);
        labels.push(BUDGET_LABEL.to_string());
    }

    let sizes: Vec<usize> = prob.blocks.iter().map(|b| b.size).collect();
    let row_norms = prob.constraints.iter().map(|c| row_norm(c, &sizes)).collect();
    Ok(Some(Stage2Relaxation {
        problem: prob,
        labels,
        row_norms,
        w_blocks,
        p0,
    }))
}

/// Every linear functional of the beam blocks the relaxation depends on:
/// the W part of each constraint row plus the objective. Block indices refer
/// to the flattened `[n - 1][k]` order.
fn w_functionals(relax: &Stage2Relaxation, n_users: usize) -> Vec<Functional> {
    let mut flat = std::collections::HashMap::new();
    for (idx, row) in relax.w_blocks.iter().enumerate() {
        for (k, &b) in row.iter().enumerate() {
            flat.insert(b, idx * n_users + k);
        }
    }
    let sizes: Vec<usize> = relax.problem.blocks.iter().map(|b| b.size).collect();
    let mut out: Vec<Functional> = relax
        .problem
        .constraints
        .iter()
        .map(|c| {
            c.terms
                .iter()
                .filter_map(|t| flat.get(&t.block).map(|&f| (f, t.coeff.to_dense(sizes[t.block]))))
                .collect::<Functional>()
        })
        .filter(|f| !f.is_empty())
        .collect();
    out.push(
        relax
            .problem
            .objective
            .iter()
            .filter_map(|t| flat.get(&t.block).map(|&f| (f, t.coeff.to_dense(sizes[t.block]))))
            .collect(),
    );
    out
}

/// Re-optimizes the power of every beam with its direction held fixed.
/// The restricted problem keeps all constraints of the relaxation but
/// replaces each `W_{n,k}` by `p_{n,k} u u^H`, so its solution is rank one.
fn reallocate_power(
    relax: &Stage2Relaxation,
    dirs: &[DVector<C64>],
    n_users: usize,
    opts: &Stage2Options,
) -> Option<Vec<DVector<C64>>> {
    let mut problem = relax.problem.clone();
    let mut units = vec![DVector::zeros(0); dirs.len()];
    let mut flat = std::collections::HashMap::new();
    for (idx, row) in relax.w_blocks.iter().enumerate() {
        for (k, &b) in row.iter().enumerate() {
            let f = idx * n_users + k;
            let d = &dirs[f];
            let norm = d.norm();
            let u = if norm > 0.0 {
                d / C64::from(norm)
            } else {
                let mut e = DVector::zeros(d.len());
                e[0] = C64::from(1.0);
                e
            };
            let emb = hermitian_embed(&(&u * u.adjoint())).ok()?;
            flat.insert(b, emb);
            units[f] = u;
            problem.blocks[b].kind = BlockKind::Nonneg;
            problem.blocks[b].size = 1;
        }
    }
    let sizes: Vec<usize> = relax.problem.blocks.iter().map(|b| b.size).collect();
    let restrict = |t: &mut ipac_sdp::BlockTerm| {
        if let Some(emb) = flat.get(&t.block) {
            let v = t.coeff.to_dense(sizes[t.block]).dot(emb);
            t.coeff = Coeff::entry(0, 0, v);
        }
    };
    problem.objective.iter_mut().for_each(restrict);
    for c in &mut problem.constraints {
        c.terms.iter_mut().for_each(restrict);
    }
    let sol = ipac_sdp::solve(&problem, opts.tol, opts.max_iter).ok()?;
    if !sol.is_near_optimal(ACCEPT_TOL) {
        return None;
    }
    let mut out = units;
    for (idx, row) in relax.w_blocks.iter().enumerate() {
        for (k, &b) in row.iter().enumerate() {
            let p = sol.x[b].as_nonneg()?[0].max(0.0);
            let f = idx * n_users + k;
            out[f] *= C64::from((p * relax.p0).sqrt());
        }
    }
    Some(out)
}

/// Labels of the constraint families carrying weight in an infeasibility certificate.
fn binding_families(relax: &Stage2Relaxation, y: &DVector<f64>) -> Vec<String> {
    let weights: Vec<f64> = y.iter().zip(&relax.row_norms).map(|(y, n)| (y * n).abs()).collect();
    let max = weights.iter().copied().fold(0.0, f64::max);
    let mut out: Vec<String> = Vec::new();
    for (w, l) in weights.iter().zip(&relax.labels) {
        if *w > 1e-6 * max && !out.contains(l) {
            out.push(l.clone());
        }
    }
    out
}

/// Exact per-UE check of a candidate. Returns `(rate shortfall, PEB ratio)`
/// where the ratio is `PEB / delta` (infinite when unobservable).
fn ue_status(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    w: &[Vec<DVector<C64>>],
    req: &Requirements,
    opts: &Stage2Options,
    k: usize,
) -> (f64, f64) {
    let rate_short = if req.rate_bpshz[k] > 0.0 {
        req.rate_bpshz[k] - sinr_rate(ch, w, phase, k).1
    } else {
        f64::NEG_INFINITY
    };
    let ratio = if req.peb_m[k].is_finite() {
        match efim_closed_form(ch, w, phase, k, opts.position_dim).and_then(|e| crb_peb(&e.efim, opts.peb_mode)) {
            Ok(r) => r.peb / req.peb_m[k],
            Err(_) => f64::INFINITY,
        }
    } else {
        0.0
    };
    (rate_short, ratio)
}

/// Smallest common scale making every requirement hold, or `None` when the
/// candidate is interference limited or unobservable.
pub fn min_feasible_scale(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    w: &[Vec<DVector<C64>>],
    req: &Requirements,
    opts: &Stage2Options,
) -> Option<f64> {
    let mut s2 = 0.0_f64;
    for k in 0..ch.n_users {
        if req.rate_bpshz[k] > 0.0 {
            let beta = req.beta(k);
            let (mut sig, mut intf) = (0.0, 0.0);
            for idx in 0..ch.n_subcarriers {
                let g = effective_channel(ch, phase, k, idx);
                for (j, wj) in w[idx].iter().enumerate() {
                    let p = g.dotc(wj).norm_sqr();
                    if j == k {
                        sig += p;
                    } else {
                        intf += p;
                    }
                }
            }
            let margin = sig - beta * intf;
            if !(margin > 0.0) {
                return None;
            }
            s2 = s2.max(beta * ch.noise_power / margin);
        }
        if req.peb_m[k].is_finite() {
            let (_, ratio) = ue_status(ch, phase, w, req, opts, k);
            if !ratio.is_finite() {
                return None;
            }
            s2 = s2.max(ratio * ratio);
        }
    }
    // Guard against rounding so the scaled candidate passes the exact recheck.
    Some(s2.sqrt() * (1.0 + 1e-9))
}

fn score_candidate(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    w: &[Vec<DVector<C64>>],
    req: &Requirements,
    opts: &Stage2Options,
) -> Score {
    let mut violation = 0.0;
    for k in 0..ch.n_users {
        let (short, ratio) = ue_status(ch, phase, w, req, opts, k);
        if short > 1e-9 {
            violation += short;
        }
        if ratio > 1.0 + 1e-9 {
            violation += if ratio.is_finite() { ratio - 1.0 } else { 1e6 };
        }
    }
    let power = total_power(w);
    if let Some(pmax) = opts.max_power_w {
        if power > pmax * (1.0 + 1e-9) {
            violation += power / pmax - 1.0;
        }
    }
    Score {
        feasible: violation == 0.0,
        cost: power,
        violation,
    }
}

fn unflatten(flat: Vec<DVector<C64>>, n_sub: usize, n_users: usize) -> Vec<Vec<DVector<C64>>> {
    let mut it = flat.into_iter();
    (0..n_sub)
        .map(|_| (0..n_users).map(|_| it.next().expect("block count")).collect())
        .collect()
}

/// Solves the relaxation and extracts rank-one beamformers.
/// Residual level at which a relaxation that stopped early is still used;
/// extraction rescales to exact feasibility afterwards.
pub const ACCEPT_TOL: f64 = 1e-4;

pub fn stage2_beamforming<R: Rng + ?Sized>(
    ch: &ChannelSet,
    phase: &PhaseProfile,
    req: &Requirements,
    opts: &Stage2Options,
    rng: &mut R,
) -> Result<BeamSolution> {
    let (n_sub, n_users, n_tx) = (ch.n_subcarriers, ch.n_users, ch.n_tx);
    let relax = match build_relaxation(ch, phase, req, opts)? {
        Some(r) => r,
        None => return Ok(BeamSolution::zeros(n_sub, n_users, n_tx)),
    };
    let sol = ipac_sdp::solve(&relax.problem, opts.tol, opts.max_iter)?;
    match sol.status {
        _ if sol.is_near_optimal(ACCEPT_TOL) => {}
        SolveStatus::Infeasible => {
            return Err(CoreError::Infeasible {
                binding: binding_families(&relax, &sol.y),
            })
        }
        other => {
            return Err(CoreError::SolverFailure(format!(
                "beamforming relaxation ended with status {other} after {} iterations",
                sol.iterations
            )))
        }
    }

    let mut blocks = Vec::with_capacity(n_sub * n_users);
    for row in &relax.w_blocks {
        for &b in row {
            let x = sol.x[b].as_psd().expect("psd block");
            blocks.push(hermitian_from_embedding(x)? * C64::from(relax.p0));
        }
    }
    let sdr_power: f64 = blocks.iter().map(|b| b.trace().re).sum();
    reduce_rank(&mut blocks, &w_functionals(&relax, n_users));

    let shaper = |flat: Vec<DVector<C64>>| -> Vec<DVector<C64>> {
        let w = unflatten(flat.clone(), n_sub, n_users);
        match min_feasible_scale(ch, phase, &w, req, opts) {
            Some(s) => flat.into_iter().map(|x| x * C64::from(s)).collect(),
            None => flat,
        }
    };
    let scorer = |flat: &[DVector<C64>]| -> Score {
        let w = unflatten(flat.to_vec(), n_sub, n_users);
        score_candidate(ch, phase, &w, req, opts)
    };
    let dominant: Vec<DVector<C64>> = blocks
        .iter()
        .map(|b| {
            let e = b.clone().symmetric_eigen();
            let i = e.eigenvalues.imax();
            e.eigenvectors.column(i).into_owned()
        })
        .collect();
    let mut out = match gaussian_randomize(&blocks, opts.trials, &shaper, &scorer, rng) {
        Ok(out) => Ok(out),
        Err(RandomizationError::NoFeasibleCandidate {
            best,
            violation,
            trials,
        }) => Err((best, violation, trials)),
        Err(e) => return Err(e.into()),
    };
    let mut seeds = vec![dominant];
    match &out {
        Ok(o) => seeds.push(o.vectors.clone()),
        Err((best, _, _)) => seeds.push(best.clone()),
    }
    for dirs in seeds {
        let Some(cand) = reallocate_power(&relax, &dirs, n_users, opts) else {
            continue;
        };
        let cand = shaper(cand);
        let score = scorer(&cand);
        if !score.feasible {
            continue;
        }
        match &mut out {
            Ok(o) if !score.better_than(&o.score) => {}
            Ok(o) => {
                o.vectors = cand;
                o.score = score;
            }
            Err(_) => {
                let rank_ratios = blocks.iter().map(|b| rank_ratio_of(b)).collect();
                out = Ok(RandomizationOutcome {
                    vectors: cand,
                    score,
                    trials_used: opts.trials,
                    rank_one: false,
                    rank_ratios,
                });
            }
        }
    }
    let out = out.map_err(|(best, violation, trials)| {
        CoreError::from(RandomizationError::NoFeasibleCandidate {
            best,
            violation,
            trials,
        })
    })?;
    let w = unflatten(out.vectors, n_sub, n_users);
    let ratios = unflatten(
        out.rank_ratios
            .iter()
            .map(|r| DVector::from_element(1, C64::from(*r)))
            .collect(),
        n_sub,
        n_users,
    )
    .into_iter()
    .map(|row| row.into_iter().map(|v| v[0].re).collect())
    .collect();
    let power = total_power(&w);
    Ok(BeamSolution {
        w,
        power_total_w: power,
        sdr_power_w: sdr_power,
        sdr_rank_ratios: ratios,
        randomization_trials: out.trials_used,
        rank_one: out.rank_one,
        solver_iterations: sol.iterations,
    })
}
