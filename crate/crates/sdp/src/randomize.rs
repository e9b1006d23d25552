//! Gaussian randomization for extracting rank-one candidates from relaxed
//! solutions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::C64;

/// Below this eigenvalue ratio `lambda_2 / lambda_1` a block counts as rank one.
pub const RANK_ONE_RATIO: f64 = 1e-8;

/// Feasibility and cost of one candidate, as judged by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub feasible: bool,
    /// Lower is better among feasible candidates.
    pub cost: f64,
    /// Nonnegative constraint violation, 0 when feasible.
    pub violation: f64,
}

impl Score {
    pub fn better_than(&self, other: &Score) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.cost < other.cost,
            (false, false) => self.violation < other.violation,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomizationOutcome {
    pub vectors: Vec<DVector<C64>>,
    pub score: Score,
    /// Number of random draws evaluated, 0 when the rank-one shortcut applied.
    pub trials_used: usize,
    pub rank_one: bool,
    /// `lambda_2 / lambda_1` for every input block.
    pub rank_ratios: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum RandomizationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no feasible candidate in {trials} trials (smallest violation {violation:e})")]
    NoFeasibleCandidate {
        best: Vec<DVector<C64>>,
        violation: f64,
        trials: usize,
    },
}

/// Draws `z ~ CN(0, I_n)`.
pub fn complex_gaussian_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(s * re, s * im)
    })
}

/// Returns `(F, eigenvalues descending)` with `X ~= F F^H`; negative
/// eigenvalues are clipped to zero.
pub fn psd_factor(x: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    let n = x.nrows();
    let herm = (x + x.adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut f = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (c, &i) in order.iter().enumerate() {
        let lam = eig.eigenvalues[i].max(0.0);
        values.push(lam);
        let s = C64::new(lam.sqrt(), 0.0);
        f.set_column(c, &(eig.eigenvectors.column(i) * s));
    }
    (f, values)
}

/// `lambda_2 / lambda_1` of a PSD matrix, zero for rank at most one.
pub fn rank_ratio_of(x: &DMatrix<C64>) -> f64 {
    rank_ratio(&psd_factor(x).1)
}

fn rank_ratio(values: &[f64]) -> f64 {
    match values {
        [] => 0.0,
        [l1, ..] if *l1 <= 0.0 => 0.0,
        [_] => 0.0,
        [l1, l2, ..] => l2 / l1,
    }
}

/// Samples `xi_b = F_b z_b` for every block, reshapes the set with `shaper`
/// and keeps the best according to `scorer`.
///
/// When every block is numerically rank one, the scaled dominant
/// eigenvectors are tried first and returned without sampling if feasible.
/// Otherwise the dominant-eigenvector candidate competes alongside
/// `n_trials` random draws.
pub fn gaussian_randomize<R, S, F>(
    blocks: &[DMatrix<C64>],
    n_trials: usize,
    mut shaper: S,
    mut scorer: F,
    rng: &mut R,
) -> Result<RandomizationOutcome, RandomizationError>
where
    R: Rng + ?Sized,
    S: FnMut(Vec<DVector<C64>>) -> Vec<DVector<C64>>,
    F: FnMut(&[DVector<C64>]) -> Score,
{
    if blocks.is_empty() {
        return Err(RandomizationError::InvalidInput("no blocks".into()));
    }
    if n_trials == 0 {
        return Err(RandomizationError::InvalidInput("n_trials must be >= 1".into()));
    }
    for (b, x) in blocks.iter().enumerate() {
        if x.nrows() != x.ncols() || x.nrows() == 0 {
            return Err(RandomizationError::InvalidInput(format!(
                "block {b} is not a nonempty square matrix"
            )));
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(RandomizationError::InvalidInput(format!(
                "block {b} has non-finite entries"
            )));
        }
    }

    let factors: Vec<(DMatrix<C64>, Vec<f64>)> = blocks.iter().map(psd_factor).collect();
    let rank_ratios: Vec<f64> = factors.iter().map(|(_, v)| rank_ratio(v)).collect();
    let rank_one = rank_ratios.iter().all(|&r| r < RANK_ONE_RATIO);

    let dominant: Vec<DVector<C64>> = factors.iter().map(|(f, _)| f.column(0).into_owned()).collect();
    let dominant = shaper(dominant);
    let dominant_score = scorer(&dominant);
    if rank_one && dominant_score.feasible {
        return Ok(RandomizationOutcome {
            vectors: dominant,
            score: dominant_score,
            trials_used: 0,
            rank_one,
            rank_ratios,
        });
    }

    let mut best = dominant;
    let mut best_score = dominant_score;
    for _ in 0..n_trials {
        let draw: Vec<DVector<C64>> = factors
            .iter()
            .map(|(f, _)| f * complex_gaussian_sample(f.ncols(), rng))
            .collect();
        let cand = shaper(draw);
        let score = scorer(&cand);
        if score.better_than(&best_score) {
            best = cand;
            best_score = score;
        }
    }

    if !best_score.feasible {
        return Err(RandomizationError::NoFeasibleCandidate {
            best,
            violation: best_score.violation,
            trials: n_trials,
        });
    }
    Ok(RandomizationOutcome {
        vectors: best,
        score: best_score,
        trials_used: n_trials,
        rank_one,
        rank_ratios,
    })
}
