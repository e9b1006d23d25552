//! Infeasible-start primal-dual interior-point method.
//!
//! Inequalities are turned into equalities with a trailing nonnegative slack
//! block. All nonnegative blocks (user blocks and slacks) share one internal
//! diagonal cone. Constraint rows are scaled to unit Frobenius norm and the
//! objective to norm at most one; reported quantities are in the original
//! units.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::problem::{BlockKind, Coeff, Relation, SdpProblem};
use crate::SdpError;

const STEP_FRACTION: f64 = 0.98;
const CERT_TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-12;
const STALL_STEP: f64 = 1e-9;
const STALL_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIter => "max_iter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Psd(DMatrix<f64>),
    Nonneg(DVector<f64>),
}

impl BlockValue {
    pub fn as_psd(&self) -> Option<&DMatrix<f64>> {
        match self {
            BlockValue::Psd(m) => Some(m),
            BlockValue::Nonneg(_) => None,
        }
    }

    pub fn as_nonneg(&self) -> Option<&DVector<f64>> {
        match self {
            BlockValue::Nonneg(v) => Some(v),
            BlockValue::Psd(_) => None,
        }
    }
}

/// One interior-point iterate, in original units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Complementarity `<X, Z>`.
    pub complementarity: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub step_primal: f64,
    pub step_dual: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Primal value of every declared block.
    pub x: Vec<BlockValue>,
    /// One multiplier per declared constraint.
    pub y: DVector<f64>,
    /// Dual slack of every declared block.
    pub z: Vec<BlockValue>,
    pub status: SolveStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `max(|pobj - dobj|, <X, Z>) / (1 + |pobj| + |dobj|)`.
    pub relative_gap: f64,
    /// `||b - A(X)|| / (1 + ||b||)`, slacks included.
    pub primal_residual: f64,
    /// `||C - Z - A^T y|| / (1 + ||C||)`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    /// Number of Newton systems that needed a diagonal ridge to factor.
    pub ridge_events: usize,
}

impl SdpSolution {
    pub fn gap(&self) -> f64 {
        self.primal_objective - self.dual_objective
    }

    /// Optimal, or stopped early with every residual and the gap below `tol`.
    pub fn is_near_optimal(&self, tol: f64) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIter => {
                self.relative_gap <= tol && self.primal_residual <= tol && self.dual_residual <= tol
            }
            _ => false,
        }
    }
}

/// Anything able to solve an [`SdpProblem`].
pub trait SdpBackend: Send + Sync {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution, SdpError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorPoint {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

impl SdpBackend for InteriorPoint {
    fn solve(&self, problem: &SdpProblem) -> Result<SdpSolution, SdpError> {
        solve(problem, self.tol, self.max_iter)
    }
}

/// Solves `problem` to relative tolerance `tol`.
pub fn solve(problem: &SdpProblem, tol: f64, max_iter: usize) -> Result<SdpSolution, SdpError> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SdpError::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    problem.validate()?;
    let compiled = match Compiled::new(problem) {
        Ok(c) => c,
        Err(Trivial::Infeasible(row)) => return Ok(trivially_infeasible(problem, row)),
    };
    let first = compiled.run(problem, tol, max_iter, DirectionKind::Nt);
    if first.status != SolveStatus::MaxIter {
        return Ok(first);
    }
    // The two directions fail on different degenerate problems; retry with
    // the other one and keep the more accurate outcome.
    let second = compiled.run(problem, tol, max_iter, DirectionKind::Hkm);
    let merit = |s: &SdpSolution| s.relative_gap.max(s.primal_residual).max(s.dual_residual);
    let out = if second.status != SolveStatus::MaxIter || merit(&second) < merit(&first) {
        second
    } else {
        first
    };
    Ok(out)
}

#[derive(Debug, Clone)]
enum Mat {
    /// Upper-triangle triplets with merged duplicates.
    Sparse(Vec<(usize, usize, f64)>),
    Dense(DMatrix<f64>),
}

impl Mat {
    fn from_map(map: BTreeMap<(usize, usize), f64>, n: usize) -> Self {
        let entries: Vec<(usize, usize, f64)> = map
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        if entries.len() < n {
            Mat::Sparse(entries)
        } else {
            let mut m = DMatrix::zeros(n, n);
            for (i, j, v) in entries {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            Mat::Dense(m)
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Mat::Sparse(e) => e.is_empty(),
            Mat::Dense(m) => m.iter().all(|&v| v == 0.0),
        }
    }

    fn fro2(&self) -> f64 {
        match self {
            Mat::Sparse(e) => e
                .iter()
                .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
                .sum(),
            Mat::Dense(m) => m.norm_squared(),
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            Mat::Sparse(e) => e.iter_mut().for_each(|t| t.2 *= s),
            Mat::Dense(m) => *m *= s,
        }
    }

    /// `<A, G>` for symmetric `A` and arbitrary square `G`.
    fn inner(&self, g: &DMatrix<f64>) -> f64 {
        match self {
            Mat::Sparse(e) => e
                .iter()
                .map(|&(i, j, v)| {
                    if i == j {
                        v * g[(i, i)]
                    } else {
                        v * (g[(i, j)] + g[(j, i)])
                    }
                })
                .sum(),
            Mat::Dense(m) => m.dot(g),
        }
    }

    fn add_to(&self, target: &mut DMatrix<f64>, s: f64) {
        match self {
            Mat::Sparse(e) => {
                for &(i, j, v) in e {
                    target[(i, j)] += s * v;
                    if i != j {
                        target[(j, i)] += s * v;
                    }
                }
            }
            Mat::Dense(m) => *target += m * s,
        }
    }

    /// `X A Zinv` for symmetric `X` and `Zinv`.
    fn sandwich(&self, x: &DMatrix<f64>, zinv: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Mat::Sparse(e) => {
                let n = x.nrows();
                let mut out = DMatrix::zeros(n, n);
                for &(r, s, v) in e {
                    out.ger(v, &x.column(r), &zinv.column(s), 1.0);
                    if r != s {
                        out.ger(v, &x.column(s), &zinv.column(r), 1.0);
                    }
                }
                out
            }
            Mat::Dense(m) => x * m * zinv,
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Row {
    psd: Vec<(usize, Mat)>,
    lp: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Psd(usize),
    Lp(usize),
}

enum Trivial {
    Infeasible(usize),
}

struct Compiled {
    psd_sizes: Vec<usize>,
    lp_n: usize,
    slots: Vec<Slot>,
    c_psd: Vec<DMatrix<f64>>,
    c_lp: DVector<f64>,
    rows: Vec<Row>,
    b: DVector<f64>,
    /// Factor applied to each compiled row.
    row_scale: Vec<f64>,
    /// Original constraint index of each compiled row.
    row_map: Vec<usize>,
    n_constraints: usize,
    c_scale: f64,
    b_norm: f64,
    c_norm: f64,
    touching: Vec<Vec<(usize, usize)>>,
    lp_touching: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone)]
struct Iterate {
    xs: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    y: DVector<f64>,
    zs: Vec<DMatrix<f64>>,
    zl: DVector<f64>,
}

struct Direction {
    xs: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    y: DVector<f64>,
    zs: Vec<DMatrix<f64>>,
    zl: DVector<f64>,
}

struct Measures {
    pobj: f64,
    dobj: f64,
    xz: f64,
    rel_gap: f64,
    pinf: f64,
    dinf: f64,
}

impl Compiled {
    fn new(p: &SdpProblem) -> Result<Self, Trivial> {
        let mut psd_sizes = Vec::new();
        let mut slots = Vec::with_capacity(p.blocks.len());
        let mut lp_n = 0;
        for b in &p.blocks {
            match b.kind {
                BlockKind::Psd => {
                    slots.push(Slot::Psd(psd_sizes.len()));
                    psd_sizes.push(b.size);
                }
                BlockKind::Nonneg => {
                    slots.push(Slot::Lp(lp_n));
                    lp_n += b.size;
                }
            }
        }
        let mut slack_next = lp_n;
        lp_n += p.constraints.iter().filter(|c| c.relation != Relation::Eq).count();

        let mut c_psd: Vec<DMatrix<f64>> = psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut c_lp: DVector<f64> = DVector::zeros(lp_n);
        for t in &p.objective {
            match slots[t.block] {
                Slot::Psd(k) => c_psd[k] += t.coeff.to_dense(psd_sizes[k]),
                Slot::Lp(off) => add_diag(&t.coeff, p.blocks[t.block].size, |i, v| c_lp[off + i] += v),
            }
        }

        let mut rows = Vec::new();
        let mut b = Vec::new();
        let mut row_scale = Vec::new();
        let mut row_map = Vec::new();
        let mut b_norm2 = 0.0;
        for (ci, c) in p.constraints.iter().enumerate() {
            b_norm2 += c.rhs * c.rhs;
            let mut psd_maps: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
            let mut lp_map: BTreeMap<usize, f64> = BTreeMap::new();
            for t in &c.terms {
                match slots[t.block] {
                    Slot::Psd(k) => {
                        let map = psd_maps.entry(k).or_default();
                        accumulate_upper(&t.coeff, psd_sizes[k], map);
                    }
                    Slot::Lp(off) => add_diag(&t.coeff, p.blocks[t.block].size, |i, v| {
                        *lp_map.entry(off + i).or_insert(0.0) += v
                    }),
                }
            }
            match c.relation {
                Relation::Eq => {}
                Relation::Le => {
                    lp_map.insert(slack_next, 1.0);
                    slack_next += 1;
                }
                Relation::Ge => {
                    lp_map.insert(slack_next, -1.0);
                    slack_next += 1;
                }
            }
            let mut row = Row {
                psd: psd_maps
                    .into_iter()
                    .map(|(k, m)| (k, Mat::from_map(m, psd_sizes[k])))
                    .filter(|(_, m)| !m.is_zero())
                    .collect(),
                lp: lp_map.into_iter().filter(|&(_, v)| v != 0.0).collect(),
            };
            let norm2: f64 =
                row.psd.iter().map(|(_, m)| m.fro2()).sum::<f64>() + row.lp.iter().map(|&(_, v)| v * v).sum::<f64>();
            if norm2 == 0.0 {
                if c.rhs != 0.0 {
                    return Err(Trivial::Infeasible(ci));
                }
                continue;
            }
            let s = 1.0 / norm2.sqrt();
            row.psd.iter_mut().for_each(|(_, m)| m.scale(s));
            row.lp.iter_mut().for_each(|t| t.1 *= s);
            rows.push(row);
            b.push(c.rhs * s);
            row_scale.push(s);
            row_map.push(ci);
        }

        let c_norm = (c_psd.iter().map(|m| m.norm_squared()).sum::<f64>() + c_lp.norm_squared()).sqrt();
        let c_scale = 1.0 / c_norm.max(1.0);
        c_psd.iter_mut().for_each(|m| *m *= c_scale);
        c_lp *= c_scale;

        let mut touching = vec![Vec::new(); psd_sizes.len()];
        let mut lp_touching = vec![Vec::new(); lp_n];
        for (i, row) in rows.iter().enumerate() {
            for (pos, (k, _)) in row.psd.iter().enumerate() {
                touching[*k].push((i, pos));
            }
            for &(t, v) in &row.lp {
                lp_touching[t].push((i, v));
            }
        }

        Ok(Self {
            psd_sizes,
            lp_n,
            slots,
            c_psd,
            c_lp,
            rows,
            b: DVector::from_vec(b),
            row_scale,
            row_map,
            n_constraints: p.constraints.len(),
            c_scale,
            b_norm: b_norm2.sqrt(),
            c_norm,
            touching,
            lp_touching,
        })
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn nu(&self) -> f64 {
        (self.psd_sizes.iter().sum::<usize>() + self.lp_n) as f64
    }

    fn a_op(&self, ps: &[DMatrix<f64>], l: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            self.rows.iter().map(|row| {
                row.psd.iter().map(|(k, a)| a.inner(&ps[*k])).sum::<f64>()
                    + row.lp.iter().map(|&(t, v)| v * l[t]).sum::<f64>()
            }),
        )
    }

    fn at_op(&self, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>) {
        let mut ps: Vec<DMatrix<f64>> = self.psd_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        let mut l = DVector::zeros(self.lp_n);
        for (row, &yi) in self.rows.iter().zip(y.iter()) {
            for (k, a) in &row.psd {
                a.add_to(&mut ps[*k], yi);
            }
            for &(t, v) in &row.lp {
                l[t] += yi * v;
            }
        }
        (ps, l)
    }

    /// `M_ij = <A_i, X A_j Zinv>` plus the diagonal-cone contribution.
    fn schur(&self, it: &Iterate, sc: &Scaling) -> DMatrix<f64> {
        let m = self.m();
        let mut out = DMatrix::zeros(m, m);
        for (k, list) in self.touching.iter().enumerate() {
            for (jj, &(j, pj)) in list.iter().enumerate() {
                let g = self.rows[j].psd[pj].1.sandwich(&sc.left[k], &sc.right[k]);
                for &(i, pi) in &list[..=jj] {
                    let v = self.rows[i].psd[pi].1.inner(&g);
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
        }
        for (t, list) in self.lp_touching.iter().enumerate() {
            let d = it.xl[t] / it.zl[t];
            for (jj, &(j, vj)) in list.iter().enumerate() {
                for &(i, vi) in &list[..=jj] {
                    let v = d * vi * vj;
                    out[(i, j)] += v;
                    if i != j {
                        out[(j, i)] += v;
                    }
                }
            }
        }
        out
    }

    fn starting_point(&self) -> Iterate {
        let norms = |k: Option<usize>| -> (f64, f64) {
            // (max_i (1 + |b_i|) / (1 + ||A_i||), max_i ||A_i||) restricted to one cone
            let mut ratio: f64 = 0.0;
            let mut amax: f64 = 0.0;
            for (i, row) in self.rows.iter().enumerate() {
                let a = match k {
                    Some(k) => row
                        .psd
                        .iter()
                        .filter(|(kk, _)| *kk == k)
                        .map(|(_, m)| m.fro2())
                        .sum::<f64>()
                        .sqrt(),
                    None => row.lp.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt(),
                };
                if a > 0.0 {
                    ratio = ratio.max((1.0 + self.b[i].abs()) / (1.0 + a));
                    amax = amax.max(a);
                }
            }
            (ratio, amax)
        };
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for (k, &n) in self.psd_sizes.iter().enumerate() {
            let (ratio, amax) = norms(Some(k));
            let sq = (n as f64).sqrt();
            let xi = 10f64.max(sq).max(sq * ratio);
            let eta = 10f64.max(sq).max(amax.max(self.c_psd[k].norm()));
            xs.push(DMatrix::identity(n, n) * xi);
            zs.push(DMatrix::identity(n, n) * eta);
        }
        let (ratio, amax) = norms(None);
        let sq = (self.lp_n as f64).sqrt();
        let xi = 10f64.max(sq).max(sq * ratio);
        let eta = 10f64.max(sq).max(amax.max(self.c_lp.norm()));
        Iterate {
            xs,
            xl: DVector::from_element(self.lp_n, xi),
            y: DVector::zeros(self.m()),
            zs,
            zl: DVector::from_element(self.lp_n, eta),
        }
    }

    fn residuals(&self, it: &Iterate) -> (DVector<f64>, Vec<DMatrix<f64>>, DVector<f64>) {
        let rp = &self.b - self.a_op(&it.xs, &it.xl);
        let (aty, atyl) = self.at_op(&it.y);
        let rd: Vec<DMatrix<f64>> = (0..self.psd_sizes.len())
            .map(|k| &self.c_psd[k] - &it.zs[k] - &aty[k])
            .collect();
        let rdl = &self.c_lp - &it.zl - atyl;
        (rp, rd, rdl)
    }

    fn measures(&self, it: &Iterate, rp: &DVector<f64>, rd: &[DMatrix<f64>], rdl: &DVector<f64>) -> Measures {
        let pobj_s = inner_all(&self.c_psd, &self.c_lp, &it.xs, &it.xl);
        let dobj_s = self.b.dot(&it.y);
        let xz_s = inner_all(&it.xs, &it.xl, &it.zs, &it.zl);
        let pobj = pobj_s / self.c_scale;
        let dobj = dobj_s / self.c_scale;
        let xz = xz_s / self.c_scale;
        let rp_orig: f64 = rp
            .iter()
            .zip(&self.row_scale)
            .map(|(r, s)| (r / s) * (r / s))
            .sum::<f64>()
            .sqrt();
        let rd_norm = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt() / self.c_scale;
        let denom = 1.0 + pobj.abs() + dobj.abs();
        Measures {
            pobj,
            dobj,
            xz,
            rel_gap: (pobj - dobj).abs().max(xz) / denom,
            pinf: rp_orig / (1.0 + self.b_norm),
            dinf: rd_norm / (1.0 + self.c_norm),
        }
    }

    /// Solves the Newton system for one right-hand side.
    ///
    /// `corr` holds the second-order term `dXa dZa Zinv` of the corrector.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        it: &Iterate,
        chol: &Cholesky<f64, nalgebra::Dyn>,
        sc: &Scaling,
        rd: &[DMatrix<f64>],
        rdl: &DVector<f64>,
        sigma_mu: f64,
        corr: Option<(&[DMatrix<f64>], &DVector<f64>)>,
    ) -> Direction {
        let npsd = self.psd_sizes.len();
        // Per-cone target T with dX = T + X (A^T dy) Zinv, symmetrized.
        let mut t_psd: Vec<DMatrix<f64>> = (0..npsd)
            .map(|k| &sc.zinv[k] * sigma_mu - &it.xs[k] - &sc.left[k] * &rd[k] * &sc.right[k])
            .collect();
        let mut t_lp = DVector::from_fn(self.lp_n, |t, _| {
            sigma_mu / it.zl[t] - it.xl[t] - it.xl[t] * rdl[t] / it.zl[t]
        });
        if let Some((cp, cl)) = corr {
            for k in 0..npsd {
                t_psd[k] -= &cp[k];
            }
            t_lp -= cl;
        }
        // A(dX) = rp  =>  M dy = rp - A(T)
        let rp = &self.b - self.a_op(&it.xs, &it.xl);
        let rhs = rp - self.a_op(&t_psd, &t_lp);
        let mut dy = chol.solve(&rhs);
        // Iterative refinement against the exact operator; the factored Schur
        // matrix loses accuracy near the optimum. A correction is kept only
        // when it shrinks the residual.
        let newton_residual = |dy: &DVector<f64>| {
            let (aty, atyl) = self.at_op(dy);
            let ms: Vec<DMatrix<f64>> = (0..npsd)
                .map(|k| {
                    let d = &sc.left[k] * &aty[k] * &sc.right[k];
                    (&d + d.transpose()) * 0.5
                })
                .collect();
            let ml = DVector::from_fn(self.lp_n, |t, _| it.xl[t] * atyl[t] / it.zl[t]);
            &rhs - self.a_op(&ms, &ml)
        };
        let mut resid = newton_residual(&dy);
        for _ in 0..REFINE_STEPS {
            if resid.norm() <= 1e-15 * rhs.norm() {
                break;
            }
            let trial = &dy + chol.solve(&resid);
            let r = newton_residual(&trial);
            if !(r.norm() < resid.norm()) {
                break;
            }
            dy = trial;
            resid = r;
        }
        let (aty, atyl) = self.at_op(&dy);
        let dzs: Vec<DMatrix<f64>> = (0..npsd).map(|k| &rd[k] - &aty[k]).collect();
        let dzl = rdl - &atyl;
        let dxs: Vec<DMatrix<f64>> = (0..npsd)
            .map(|k| {
                let d = &t_psd[k] + &sc.left[k] * &aty[k] * &sc.right[k];
                (&d + d.transpose()) * 0.5
            })
            .collect();
        let dxl = DVector::from_fn(self.lp_n, |t, _| t_lp[t] + it.xl[t] * atyl[t] / it.zl[t]);
        Direction {
            xs: dxs,
            xl: dxl,
            y: dy,
            zs: dzs,
            zl: dzl,
        }
    }

    fn run(&self, p: &SdpProblem, tol: f64, max_iter: usize, kind: DirectionKind) -> SdpSolution {
        let mut it = self.starting_point();
        let nu = self.nu();
        let mut history = Vec::new();
        let mut ridge_events = 0;
        let mut best: Option<(f64, Iterate, usize)> = None;
        let mut stalled = 0;
        let mut last_steps = (0.0, 0.0, 0.0);

        for iter in 0..=max_iter {
            let (rp, rd, rdl) = self.residuals(&it);
            let ms = self.measures(&it, &rp, &rd, &rdl);
            history.push(IterationRecord {
                iter,
                primal_objective: ms.pobj,
                dual_objective: ms.dobj,
                complementarity: ms.xz,
                primal_infeasibility: ms.pinf,
                dual_infeasibility: ms.dinf,
                step_primal: last_steps.0,
                step_dual: last_steps.1,
                sigma: last_steps.2,
            });
            let merit = ms.rel_gap.max(ms.pinf).max(ms.dinf);
            if merit.is_finite() && best.as_ref().is_none_or(|(m, _, _)| merit < *m) {
                best = Some((merit, it.clone(), iter));
            }
            if ms.rel_gap <= tol && ms.pinf <= tol && ms.dinf <= tol {
                return self.finish(p, &it, SolveStatus::Optimal, iter, history, ridge_events);
            }
            if let Some(status) = self.certificate(&it, &rd, &rdl) {
                return self.finish(p, &it, status, iter, history, ridge_events);
            }
            let since_best = match &best {
                Some((m, _, b)) if *m <= NO_PROGRESS_MERIT => iter - b,
                _ => 0,
            };
            if iter == max_iter || stalled >= STALL_LIMIT || since_best >= NO_PROGRESS_LIMIT {
                break;
            }

            let Some(sc) = Scaling::new(&it.xs, &it.zs, kind) else {
                break;
            };
            let mu = (inner_all(&it.xs, &it.xl, &it.zs, &it.zl)) / nu;
            let schur = self.schur(&it, &sc);
            let Some(chol) = factor_with_ridge(schur, &mut ridge_events) else {
                break;
            };

            let pred = self.direction(&it, &chol, &sc, &rd, &rdl, 0.0, None);
            let ap = (STEP_FRACTION * self.max_step(&it.xs, &it.xl, &pred.xs, &pred.xl)).min(1.0);
            let ad = (STEP_FRACTION * self.max_step(&it.zs, &it.zl, &pred.zs, &pred.zl)).min(1.0);
            let xa: Vec<DMatrix<f64>> = it.xs.iter().zip(&pred.xs).map(|(x, d)| x + d * ap).collect();
            let za: Vec<DMatrix<f64>> = it.zs.iter().zip(&pred.zs).map(|(z, d)| z + d * ad).collect();
            let mu_aff = inner_all(&xa, &(&it.xl + &pred.xl * ap), &za, &(&it.zl + &pred.zl * ad)) / nu;
            let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
            let sigma = if mu > 0.0 {
                (mu_aff.max(0.0) / mu).powf(expon).min(1.0)
            } else {
                0.0
            };

            let corr_psd: Vec<DMatrix<f64>> = (0..self.psd_sizes.len())
                .map(|k| &pred.xs[k] * &pred.zs[k] * &sc.zinv[k])
                .collect();
            let corr_lp = DVector::from_fn(self.lp_n, |t, _| pred.xl[t] * pred.zl[t] / it.zl[t]);
            let d = self.direction(&it, &chol, &sc, &rd, &rdl, sigma * mu, Some((&corr_psd, &corr_lp)));
            let ap = (STEP_FRACTION * self.max_step(&it.xs, &it.xl, &d.xs, &d.xl)).min(1.0);
            let ad = (STEP_FRACTION * self.max_step(&it.zs, &it.zl, &d.zs, &d.zl)).min(1.0);
            if !(ap.is_finite() && ad.is_finite()) {
                break;
            }
            for (x, dx) in it.xs.iter_mut().zip(&d.xs) {
                *x += dx * ap;
            }
            it.xl += &d.xl * ap;
            it.y += &d.y * ad;
            for (z, dz) in it.zs.iter_mut().zip(&d.zs) {
                *z += dz * ad;
            }
            it.zl += &d.zl * ad;
            last_steps = (ap, ad, sigma);
            if ap < STALL_STEP && ad < STALL_STEP {
                stalled += 1;
            } else {
                stalled = 0;
            }
        }

        let (_, mut best_it, _) = best.unwrap_or((f64::INFINITY, it, 0));
        self.polish_primal(&mut best_it, kind, &mut ridge_events);
        let iterations = history.len().saturating_sub(1);
        let mut sol = self.finish(p, &best_it, SolveStatus::MaxIter, iterations, history, ridge_events);
        sol.iterations = iterations;
        sol
    }

    /// Infeasibility or unboundedness certificate from the current iterate.
    fn certificate(&self, it: &Iterate, rd: &[DMatrix<f64>], rdl: &DVector<f64>) -> Option<SolveStatus> {
        let by = self.b.dot(&it.y);
        if by > 0.0 {
            // A^T y + Z = C - Rd
            let norm = (self
                .c_psd
                .iter()
                .zip(rd)
                .map(|(c, r)| (c - r).norm_squared())
                .sum::<f64>()
                + (&self.c_lp - rdl).norm_squared())
            .sqrt();
            if norm / by < CERT_TOL {
                return Some(SolveStatus::Infeasible);
            }
        }
        let cx = inner_all(&self.c_psd, &self.c_lp, &it.xs, &it.xl);
        if cx < 0.0 {
            let ax = self.a_op(&it.xs, &it.xl).norm();
            if ax / (-cx) < CERT_TOL {
                return Some(SolveStatus::Unbounded);
            }
        }
        None
    }

    fn max_step(&self, xs: &[DMatrix<f64>], xl: &DVector<f64>, dxs: &[DMatrix<f64>], dxl: &DVector<f64>) -> f64 {
        let mut a = f64::INFINITY;
        for (x, dx) in xs.iter().zip(dxs) {
            a = a.min(psd_step(x, dx));
        }
        for (x, dx) in xl.iter().zip(dxl.iter()) {
            if *dx < 0.0 {
                a = a.min(-x / dx);
            }
        }
        a
    }

    /// Reduces the primal residual of an early-stopped iterate with scaled
    /// least-norm corrections, keeping each one only when `X` stays positive
    /// definite and the residual shrinks.
    fn polish_primal(&self, it: &mut Iterate, kind: DirectionKind, ridge_events: &mut usize) {
        for _ in 0..POLISH_ROUNDS {
            let rp = &self.b - self.a_op(&it.xs, &it.xl);
            let r0 = rp.norm();
            if r0 == 0.0 {
                return;
            }
            let Some(sc) = Scaling::new(&it.xs, &it.zs, kind) else {
                return;
            };
            let Some(chol) = factor_with_ridge(self.schur(it, &sc), ridge_events) else {
                return;
            };
            let dy = chol.solve(&rp);
            let (aty, atyl) = self.at_op(&dy);
            let dxs: Vec<DMatrix<f64>> = (0..self.psd_sizes.len())
                .map(|k| {
                    let d = &sc.left[k] * &aty[k] * &sc.right[k];
                    (&d + d.transpose()) * 0.5
                })
                .collect();
            let dxl = DVector::from_fn(self.lp_n, |t, _| it.xl[t] * atyl[t] / it.zl[t]);
            let mut improved = false;
            for alpha in [1.0, 0.5, 0.25] {
                if self.max_step(&it.xs, &it.xl, &dxs, &dxl) <= alpha {
                    continue;
                }
                let xs: Vec<DMatrix<f64>> = it.xs.iter().zip(&dxs).map(|(x, d)| x + d * alpha).collect();
                let xl = &it.xl + &dxl * alpha;
                if (&self.b - self.a_op(&xs, &xl)).norm() < r0 {
                    it.xs = xs;
                    it.xl = xl;
                    improved = true;
                    break;
                }
            }
            if !improved {
                return;
            }
        }
    }

    fn finish(
        &self,
        p: &SdpProblem,
        it: &Iterate,
        status: SolveStatus,
        iterations: usize,
        history: Vec<IterationRecord>,
        ridge_events: usize,
    ) -> SdpSolution {
        let (rp, rd, rdl) = self.residuals(it);
        let ms = self.measures(it, &rp, &rd, &rdl);
        let mut y = DVector::zeros(self.n_constraints);
        for (i, &ci) in self.row_map.iter().enumerate() {
            y[ci] = it.y[i] * self.row_scale[i] / self.c_scale;
        }
        let zl = &it.zl / self.c_scale;
        let mut x = Vec::with_capacity(p.blocks.len());
        let mut z = Vec::with_capacity(p.blocks.len());
        for (slot, block) in self.slots.iter().zip(&p.blocks) {
            match *slot {
                Slot::Psd(k) => {
                    x.push(BlockValue::Psd(it.xs[k].clone()));
                    z.push(BlockValue::Psd(&it.zs[k] / self.c_scale));
                }
                Slot::Lp(off) => {
                    x.push(BlockValue::Nonneg(it.xl.rows(off, block.size).into_owned()));
                    z.push(BlockValue::Nonneg(zl.rows(off, block.size).into_owned()));
                }
            }
        }
        SdpSolution {
            x,
            y,
            z,
            status,
            primal_objective: ms.pobj,
            dual_objective: ms.dobj,
            relative_gap: ms.rel_gap,
            primal_residual: ms.pinf,
            dual_residual: ms.dinf,
            iterations,
            history,
            ridge_events,
        }
    }
}

fn inner_all(a: &[DMatrix<f64>], al: &DVector<f64>, b: &[DMatrix<f64>], bl: &DVector<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum::<f64>() + al.dot(bl)
}

/// Largest `alpha` with `X + alpha dX` PSD, infinite when unbounded.
fn psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(ch) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = ch.l();
    let Some(t) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&t.transpose()) else {
        return 0.0;
    };
    let w = (&w + w.transpose()) * 0.5;
    let lmin = w.symmetric_eigenvalues().min();
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

const REFINE_STEPS: usize = 2;
const POLISH_ROUNDS: usize = 4;
/// Iterations without a better merit after which the best iterate is returned.
const NO_PROGRESS_LIMIT: usize = 15;
/// The early stop applies only once the best iterate is this accurate.
const NO_PROGRESS_MERIT: f64 = 1e-4;

/// Search direction family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DirectionKind {
    /// Nesterov-Todd: `W (.) W` with `W Z W = X`.
    Nt,
    /// Helmberg-Kojima-Monteiro: `X (.) Z^-1`.
    Hkm,
}

/// Per-block scaling pair used in the Newton system.
struct Scaling {
    zinv: Vec<DMatrix<f64>>,
    left: Vec<DMatrix<f64>>,
    right: Vec<DMatrix<f64>>,
}

impl Scaling {
    fn new(xs: &[DMatrix<f64>], zs: &[DMatrix<f64>], kind: DirectionKind) -> Option<Self> {
        let mut zinv = Vec::with_capacity(xs.len());
        for z in zs {
            zinv.push(Cholesky::new(z.clone())?.inverse());
        }
        let (left, right) = match kind {
            DirectionKind::Nt => {
                let ws = xs
                    .iter()
                    .zip(zs)
                    .map(|(x, z)| nt_scaling(x, z))
                    .collect::<Option<Vec<_>>>()?;
                (ws.clone(), ws)
            }
            DirectionKind::Hkm => (xs.to_vec(), zinv.clone()),
        };
        Some(Self { zinv, left, right })
    }
}

/// `W = L Q D^-1/2 Q^T L^T` with `X = L L^T` and `L^T Z L = Q D Q^T`.
fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = Cholesky::new(x.clone())?.l();
    let m = l.transpose() * z * &l;
    let e = ((&m + m.transpose()) * 0.5).symmetric_eigen();
    if e.eigenvalues.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let g = &l * &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|d| d.powf(-0.25)));
    let w = &g * g.transpose();
    Some((&w + w.transpose()) * 0.5)
}

fn factor_with_ridge(mut m: DMatrix<f64>, ridge_events: &mut usize) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    *ridge_events += 1;
    let base = m.trace().abs().max(f64::MIN_POSITIVE);
    let mut ridge = RIDGE * base;
    for _ in 0..8 {
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(m.clone()) {
            return Some(c);
        }
        ridge *= 100.0;
    }
    None
}

fn accumulate_upper(c: &Coeff, n: usize, map: &mut BTreeMap<(usize, usize), f64>) {
    match c {
        Coeff::Sparse { entries } => {
            for &(i, j, v) in entries {
                *map.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
            }
        }
        Coeff::Dense { values, .. } => {
            for i in 0..n {
                for j in i..n {
                    let v = values[i * n + j];
                    if v != 0.0 {
                        *map.entry((i, j)).or_insert(0.0) += v;
                    }
                }
            }
        }
    }
}

fn add_diag(c: &Coeff, n: usize, mut f: impl FnMut(usize, f64)) {
    match c {
        Coeff::Sparse { entries } => {
            for &(i, _, v) in entries {
                f(i, v);
            }
        }
        Coeff::Dense { values, .. } => {
            for i in 0..n {
                f(i, values[i * n + i]);
            }
        }
    }
}

fn trivially_infeasible(p: &SdpProblem, row: usize) -> SdpSolution {
    let zero_blocks = || {
        p.blocks
            .iter()
            .map(|b| match b.kind {
                BlockKind::Psd => BlockValue::Psd(DMatrix::zeros(b.size, b.size)),
                BlockKind::Nonneg => BlockValue::Nonneg(DVector::zeros(b.size)),
            })
            .collect::<Vec<_>>()
    };
    let rhs = p.constraints[row].rhs;
    let b_norm = p.constraints.iter().map(|c| c.rhs * c.rhs).sum::<f64>().sqrt();
    SdpSolution {
        x: zero_blocks(),
        y: DVector::zeros(p.constraints.len()),
        z: zero_blocks(),
        status: SolveStatus::Infeasible,
        primal_objective: 0.0,
        dual_objective: 0.0,
        relative_gap: 0.0,
        primal_residual: rhs.abs() / (1.0 + b_norm),
        dual_residual: 0.0,
        iterations: 0,
        history: Vec::new(),
        ridge_events: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Constraint;

    #[test]
    fn trace_min_with_fixed_corner() {
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_objective(b, Coeff::identity(2));
        p.add_constraint(Constraint::new(Relation::Eq, 1.0).with(b, Coeff::entry(0, 0, 1.0)));
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 1.0).abs() < 1e-7);
        let x = s.x[0].as_psd().unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-7);
        assert!(x[(1, 1)].abs() < 1e-7);
    }

    #[test]
    fn lp_lower_bound() {
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Nonneg, 1);
        p.add_objective(b, Coeff::entry(0, 0, 1.0));
        p.add_constraint(Constraint::new(Relation::Ge, 3.0).with(b, Coeff::entry(0, 0, 1.0)));
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 3.0).abs() < 1e-7);
    }

    #[test]
    fn zero_row_with_nonzero_rhs_is_infeasible() {
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_objective(b, Coeff::identity(2));
        p.add_constraint(Constraint::new(Relation::Eq, 1.0));
        let s = solve(&p, 1e-8, 50).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_infeasibility() {
        // X_11 = -1 has no PSD solution.
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Psd, 2);
        p.add_objective(b, Coeff::identity(2));
        p.add_constraint(Constraint::new(Relation::Eq, -1.0).with(b, Coeff::entry(0, 0, 1.0)));
        let s = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        // min -x0 s.t. x0 - x1 = 0, x >= 0.
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Nonneg, 2);
        p.add_objective(b, Coeff::entry(0, 0, -1.0));
        p.add_constraint(Constraint::new(Relation::Eq, 0.0).with(b, Coeff::sparse(vec![(0, 0, 1.0), (1, 1, -1.0)])));
        let s = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let mut p = SdpProblem::new();
        p.add_block(BlockKind::Psd, 1);
        assert!(matches!(solve(&p, 0.0, 10), Err(SdpError::InvalidArgument(_))));
    }
}
