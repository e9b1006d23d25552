//! Rank reduction of relaxed solutions.
//!
//! Given Hermitian PSD blocks `W_b` and a set of real linear functionals
//! `f_i(W) = sum_b <E_ib, embed(W_b)>`, moves along directions that leave
//! every `f_i` unchanged until `sum_b rank(W_b)^2` no longer exceeds the
//! number of functionals. Each step zeroes at least one eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::embed::hermitian_embed;
use crate::C64;

/// One functional: `(block, E)` pairs with `E` of size `2n x 2n`.
pub type Functional = Vec<(usize, DMatrix<f64>)>;

/// Eigenvalues below `RANK_TOL` times the largest block eigenvalue are zero.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PurifyReport {
    pub ranks_before: Vec<usize>,
    pub ranks_after: Vec<usize>,
    pub steps: usize,
    /// Largest relative change of any functional.
    pub max_drift: f64,
}

struct Factor {
    /// Columns scaled by the square roots of the eigenvalues.
    v: DMatrix<C64>,
}

fn factorize(w: &DMatrix<C64>, cutoff: f64) -> Factor {
    let herm = (w + w.adjoint()) * C64::new(0.5, 0.0);
    let e = herm.symmetric_eigen();
    let cols: Vec<DVector<C64>> = (0..e.eigenvalues.len())
        .filter(|&i| e.eigenvalues[i] > cutoff)
        .map(|i| e.eigenvectors.column(i) * C64::from(e.eigenvalues[i].sqrt()))
        .collect();
    let n = w.nrows();
    let v = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Factor { v }
}

/// Hermitian basis of `r x r` matrices, `r^2` elements.
fn hermitian_basis(r: usize) -> Vec<DMatrix<C64>> {
    let mut out = Vec::with_capacity(r * r);
    for i in 0..r {
        let mut m = DMatrix::zeros(r, r);
        m[(i, i)] = C64::from(1.0);
        out.push(m);
        for j in i + 1..r {
            let mut a = DMatrix::zeros(r, r);
            a[(i, j)] = C64::from(1.0);
            a[(j, i)] = C64::from(1.0);
            out.push(a);
            let mut b = DMatrix::zeros(r, r);
            b[(i, j)] = C64::new(0.0, 1.0);
            b[(j, i)] = C64::new(0.0, -1.0);
            out.push(b);
        }
    }
    out
}

fn evaluate(blocks: &[DMatrix<C64>], functionals: &[Functional]) -> Vec<f64> {
    let embedded: Vec<DMatrix<f64>> = blocks
        .iter()
        .map(|w| hermitian_embed(&((w + w.adjoint()) * C64::new(0.5, 0.0))).expect("hermitian"))
        .collect();
    functionals
        .iter()
        .map(|f| f.iter().map(|(b, e)| e.dot(&embedded[*b])).sum())
        .collect()
}

/// Reduces the ranks of `blocks` in place while keeping every functional.
pub fn reduce_rank(blocks: &mut [DMatrix<C64>], functionals: &[Functional]) -> PurifyReport {
    let scale = blocks
        .iter()
        .map(|w| w.diagonal().iter().map(|z| z.re).sum::<f64>())
        .fold(0.0, f64::max);
    let cutoff = RANK_TOL * scale.max(f64::MIN_POSITIVE);
    let rank_of =
        |blocks: &[DMatrix<C64>]| -> Vec<usize> { blocks.iter().map(|w| factorize(w, cutoff).v.ncols()).collect() };
    let ranks_before = rank_of(blocks);
    let reference = evaluate(blocks, functionals);
    let m = functionals.len();
    let mut steps = 0;

    // Per block, the functionals that touch it.
    let mut touching: Vec<Vec<(usize, &DMatrix<f64>)>> = vec![Vec::new(); blocks.len()];
    for (i, f) in functionals.iter().enumerate() {
        for (b, e) in f {
            touching[*b].push((i, e));
        }
    }

    loop {
        let factors: Vec<Factor> = blocks.iter().map(|w| factorize(w, cutoff)).collect();
        let n_params: usize = factors.iter().map(|f| f.v.ncols().pow(2)).sum();
        if n_params <= m || n_params == 0 {
            break;
        }
        // Column p holds the functional values of basis direction p.
        let mut a = DMatrix::<f64>::zeros(m.max(1), n_params);
        let mut owners = Vec::with_capacity(n_params);
        let mut p = 0;
        for (b, f) in factors.iter().enumerate() {
            let r = f.v.ncols();
            for d in hermitian_basis(r) {
                let dir = &f.v * d.clone() * f.v.adjoint();
                let emb = hermitian_embed(&((&dir + dir.adjoint()) * C64::new(0.5, 0.0))).expect("hermitian");
                for (i, e) in &touching[b] {
                    a[(*i, p)] += e.dot(&emb);
                }
                owners.push((b, d));
                p += 1;
            }
        }
        // A null vector of `a`: the right singular vector of the smallest
        // singular value of the padded square system.
        let mut padded = DMatrix::<f64>::zeros(n_params, n_params);
        padded.rows_mut(0, a.nrows()).copy_from(&a);
        let svd = padded.svd(false, true);
        let Some(vt) = svd.v_t else { break };
        let imin = (0..n_params)
            .min_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]))
            .unwrap_or(0);
        let x = vt.row(imin).transpose();

        // Assemble Delta_b and find the step that zeroes an eigenvalue.
        let mut deltas: Vec<DMatrix<C64>> = factors
            .iter()
            .map(|f| DMatrix::zeros(f.v.ncols(), f.v.ncols()))
            .collect();
        for (k, (b, d)) in owners.iter().enumerate() {
            deltas[*b] += d * C64::from(x[k]);
        }
        let mut lmax = f64::NEG_INFINITY;
        let mut lmin = f64::INFINITY;
        for d in &deltas {
            if d.nrows() == 0 {
                continue;
            }
            let e = d.clone().symmetric_eigen();
            lmax = lmax.max(e.eigenvalues.max());
            lmin = lmin.min(e.eigenvalues.min());
        }
        let t = if lmax.abs() >= lmin.abs() {
            1.0 / lmax
        } else {
            1.0 / lmin
        };
        if !t.is_finite() {
            break;
        }
        for (b, f) in factors.iter().enumerate() {
            let r = f.v.ncols();
            if r == 0 {
                blocks[b] = DMatrix::zeros(blocks[b].nrows(), blocks[b].ncols());
                continue;
            }
            let inner = DMatrix::<C64>::identity(r, r) - &deltas[b] * C64::from(t);
            let w = &f.v * inner * f.v.adjoint();
            blocks[b] = (&w + w.adjoint()) * C64::new(0.5, 0.0);
        }
        steps += 1;
        if steps > 4 * n_params {
            break;
        }
    }

    let after = evaluate(blocks, functionals);
    let max_drift = reference
        .iter()
        .zip(&after)
        .map(|(r, a)| (r - a).abs() / r.abs().max(1e-300).max(scale))
        .fold(0.0, f64::max);
    PurifyReport {
        ranks_before,
        ranks_after: rank_of(blocks),
        steps,
        max_drift,
    }
}
