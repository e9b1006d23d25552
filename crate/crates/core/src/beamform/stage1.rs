//! RIS phase design: discrete coordinate ascent and the continuous SDR.
//!
//! Both maximize `f(v) = sum_k sum_n (1/beta_k) v^T A_{n,k} conj(v)` over
//! `|v_m| = 1/sqrt(M)`, with `A_{n,k} = C C^H` and
//! `C = diag(h_r^H) G` so that `v^T C w = h_r^H diag(v) G w`.

use std::f64::consts::PI;

use ipac_sdp::{
    gaussian_randomize, hermitian_embed, hermitian_from_embedding, BlockKind, Coeff, Constraint, Relation, Score,
    SdpProblem,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel::ChannelSet;
use crate::config::PhaseMode;
use crate::error::{CoreError, Result};
use crate::phase::PhaseProfile;
use crate::C64;

/// `(C, A)` for UE `k` on subcarrier index `idx`.
pub fn composite_matrices(ch: &ChannelSet, k: usize, idx: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let h = &ch.h_ris_ue[idx][k];
    let g = &ch.g_bs_ris[idx];
    let c = DMatrix::from_fn(g.nrows(), g.ncols(), |m, t| h[m].conj() * g[(m, t)]);
    let a = &c * c.adjoint();
    (c, a)
}

/// Stage I weights `1/beta_k`, normalized so the largest is 1. UEs without a
/// rate requirement get 0, and all UEs get 1 when no UE has one. The
/// normalization keeps the phase design identical under a common rate scale.
pub fn stage1_weights(betas: &[f64]) -> Vec<f64> {
    let Some(min) = betas.iter().copied().filter(|&b| b > 0.0).reduce(f64::min) else {
        return vec![1.0; betas.len()];
    };
    betas.iter().map(|&b| if b > 0.0 { min / b } else { 0.0 }).collect()
}

/// `B = sum_k weight_k sum_n A_{n,k}`. With several RIS segments, UE `k`
/// only contributes through segment `k mod parts`.
pub fn objective_matrix(ch: &ChannelSet, weights: &[f64]) -> DMatrix<C64> {
    let m = ch.n_ris;
    let parts = ch.segments.len();
    let mut b = DMatrix::<C64>::zeros(m, m);
    for (k, &wk) in weights.iter().enumerate() {
        if wk == 0.0 {
            continue;
        }
        let mut bk = DMatrix::<C64>::zeros(m, m);
        for idx in 0..ch.n_subcarriers {
            bk += composite_matrices(ch, k, idx).1;
        }
        if parts > 1 {
            let s = &ch.segments[k % parts];
            let mut masked = DMatrix::zeros(m, m);
            masked
                .view_mut((s.start, s.start), (s.len, s.len))
                .copy_from(&bk.view((s.start, s.start), (s.len, s.len)));
            bk = masked;
        }
        b += bk * C64::from(wk);
    }
    (&b + b.adjoint()) * C64::new(0.5, 0.0)
}

/// `f(v) = v^T B conj(v)`.
pub fn stage1_objective(b: &DMatrix<C64>, v: &DVector<C64>) -> f64 {
    (v.transpose() * b * v.map(|z| z.conj()))[(0, 0)].re
}

/// Result of one coordinate-ascent run from a fixed start.
#[derive(Debug, Clone)]
pub struct AscentRun {
    pub levels: Vec<usize>,
    /// Objective of the unit-modulus profile `x_m = e^{j 2 pi l_m / L}`.
    pub objective: f64,
    pub sweeps: usize,
    /// Objective after every coordinate update, when tracking was requested.
    pub trace: Vec<f64>,
}

fn unit_vector(levels: &[usize], n_levels: usize) -> DVector<C64> {
    DVector::from_iterator(
        levels.len(),
        levels
            .iter()
            .map(|&l| C64::from_polar(1.0, 2.0 * PI * l as f64 / n_levels as f64)),
    )
}

/// Level with the smallest circular distance to `xi`; ties go to the smaller index.
pub fn nearest_level(xi: f64, n_levels: usize) -> usize {
    let step = 2.0 * PI / n_levels as f64;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for l in 0..n_levels {
        let diff = (xi - l as f64 * step).rem_euclid(2.0 * PI);
        let d = diff.min(2.0 * PI - diff);
        if d < best_d - 1e-12 {
            best = l;
            best_d = d;
        }
    }
    best
}

/// Cyclic coordinate ascent on `x^T B conj(x)` over the `L`-level grid.
pub fn coordinate_ascent(
    b: &DMatrix<C64>,
    n_levels: usize,
    init: &[usize],
    max_sweeps: usize,
    track: bool,
) -> AscentRun {
    let m = init.len();
    let step = 2.0 * PI / n_levels as f64;
    let mut levels = init.to_vec();
    let mut x = unit_vector(&levels, n_levels);
    let mut trace = Vec::new();
    if track {
        trace.push(stage1_objective(b, &x));
    }
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut changed = false;
        for i in 0..m {
            let mut zeta = C64::new(0.0, 0.0);
            for l in 0..m {
                if l != i {
                    zeta += b[(i, l)] * x[l].conj();
                }
            }
            if zeta.norm() == 0.0 {
                continue;
            }
            let xi = -zeta.arg();
            let new = nearest_level(xi, n_levels);
            // Keep the current level when it is equally good.
            let gain = (C64::from_polar(1.0, new as f64 * step) * zeta).re
                - (C64::from_polar(1.0, levels[i] as f64 * step) * zeta).re;
            if new != levels[i] && gain > 0.0 {
                levels[i] = new;
                x[i] = C64::from_polar(1.0, new as f64 * step);
                changed = true;
            }
            if track {
                trace.push(stage1_objective(b, &x));
            }
        }
        if !changed {
            break;
        }
    }
    AscentRun {
        objective: stage1_objective(b, &x),
        levels,
        sweeps,
        trace,
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOutcome {
    pub profile: PhaseProfile,
    pub runs: Vec<AscentRun>,
}

/// Best of the all-zero start and `starts` random starts.
pub fn stage1_discrete<R: Rng + ?Sized>(
    ch: &ChannelSet,
    weights: &[f64],
    q_bits: u32,
    starts: usize,
    max_sweeps: usize,
    rng: &mut R,
) -> Result<DiscreteOutcome> {
    if q_bits == 0 {
        return Err(CoreError::InvalidArgument("discrete mode needs q >= 1".into()));
    }
    let b = objective_matrix(ch, weights);
    Ok(discrete_from_matrix(
        &b,
        q_bits,
        starts,
        max_sweeps,
        partition_of(ch),
        rng,
        false,
    ))
}

/// Discrete search on a given objective matrix.
pub fn discrete_from_matrix<R: Rng + ?Sized>(
    b: &DMatrix<C64>,
    q_bits: u32,
    starts: usize,
    max_sweeps: usize,
    partition: Vec<(usize, usize)>,
    rng: &mut R,
    track: bool,
) -> DiscreteOutcome {
    let m = b.nrows();
    let n_levels = 1usize << q_bits;
    let mut runs = Vec::with_capacity(starts + 1);
    runs.push(coordinate_ascent(b, n_levels, &vec![0; m], max_sweeps, track));
    for _ in 0..starts {
        let init: Vec<usize> = (0..m).map(|_| rng.random_range(0..n_levels)).collect();
        runs.push(coordinate_ascent(b, n_levels, &init, max_sweeps, track));
    }
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |bi, (i, r)| if r.objective > runs[bi].objective { i } else { bi });
    let mut profile = PhaseProfile::from_levels(&runs[best].levels, n_levels, q_bits, partition);
    profile.objective = Some(runs[best].objective / m as f64);
    DiscreteOutcome { profile, runs }
}

pub fn partition_of(ch: &ChannelSet) -> Vec<(usize, usize)> {
    ch.segments.iter().map(|s| (s.start, s.len)).collect()
}

#[derive(Debug, Clone)]
pub struct ContinuousOutcome {
    pub profile: PhaseProfile,
    /// Upper bound on the objective from the relaxation.
    pub sdr_bound: f64,
    pub relaxed: DMatrix<C64>,
    pub rank_ratio: f64,
    pub trials_used: usize,
}

/// SDR over the lifted `conj(v)`: maximize `tr(B V)` with `V_mm = 1/M`,
/// then Gaussian randomization with unit-modulus projection.
pub fn stage1_continuous<R: Rng + ?Sized>(
    ch: &ChannelSet,
    weights: &[f64],
    trials: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut R,
) -> Result<ContinuousOutcome> {
    let b = objective_matrix(ch, weights);
    continuous_from_matrix(&b, trials, tol, max_iter, partition_of(ch), rng)
}

pub fn continuous_from_matrix<R: Rng + ?Sized>(
    b: &DMatrix<C64>,
    trials: usize,
    tol: f64,
    max_iter: usize,
    partition: Vec<(usize, usize)>,
    rng: &mut R,
) -> Result<ContinuousOutcome> {
    let m = b.nrows();
    let scale = b.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if scale == 0.0 {
        // Every unit-modulus profile is optimal.
        let mut profile = PhaseProfile::from_phases(&vec![0.0; m], PhaseMode::Continuous, partition);
        profile.objective = Some(0.0);
        profile.sdr_bound = Some(0.0);
        return Ok(ContinuousOutcome {
            profile,
            sdr_bound: 0.0,
            relaxed: DMatrix::identity(m, m) * C64::from(1.0 / m as f64),
            rank_ratio: 1.0,
            trials_used: 0,
        });
    }
    let bn = b * C64::from(1.0 / scale);
    let eb = hermitian_embed(&bn)?;

    let mut prob = SdpProblem::new();
    let x = prob.add_block(BlockKind::Psd, 2 * m);
    prob.add_objective(x, Coeff::dense(&(eb * -0.5)));
    for i in 0..m {
        prob.add_constraint(
            Constraint::new(Relation::Eq, 2.0 / m as f64)
                .with(x, Coeff::sparse(vec![(i, i, 1.0), (i + m, i + m, 1.0)])),
        );
    }
    let sol = ipac_sdp::solve(&prob, tol, max_iter)?;
    if !sol.is_near_optimal(crate::beamform::stage2::ACCEPT_TOL) {
        return Err(CoreError::SolverFailure(format!(
            "stage I relaxation ended with status {}",
            sol.status
        )));
    }
    // The dual value is a certified bound for the minimization; negate for the max.
    let sdr_bound = -sol.primal_objective.min(sol.dual_objective) * scale;
    let relaxed = hermitian_from_embedding(sol.x[x].as_psd().expect("psd block"))?;

    let inv = 1.0 / (m as f64).sqrt();
    let shaper = |c: Vec<DVector<C64>>| -> Vec<DVector<C64>> {
        c.into_iter()
            .map(|y| {
                y.map(|z| {
                    if z.norm() > 0.0 {
                        z / z.norm() * inv
                    } else {
                        C64::new(inv, 0.0)
                    }
                })
            })
            .collect()
    };
    let scorer = |c: &[DVector<C64>]| -> Score {
        let v = c[0].map(|z| z.conj());
        Score {
            feasible: true,
            cost: -stage1_objective(b, &v),
            violation: 0.0,
        }
    };
    let out = gaussian_randomize(std::slice::from_ref(&relaxed), trials, shaper, scorer, rng)?;
    let v = out.vectors[0].map(|z| z.conj());
    let phases: Vec<f64> = v.iter().map(|z| z.arg()).collect();
    let mut profile = PhaseProfile::from_phases(&phases, PhaseMode::Continuous, partition);
    profile.objective = Some(stage1_objective(b, &profile.v));
    profile.sdr_bound = Some(sdr_bound);
    Ok(ContinuousOutcome {
        profile,
        sdr_bound,
        relaxed,
        rank_ratio: out.rank_ratios[0],
        trials_used: out.trials_used,
    })
}
