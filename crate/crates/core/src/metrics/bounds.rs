use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::PebMode;
use crate::error::{CoreError, Result};

/// Eigenvalues at or below this fraction of the largest one count as zero.
pub const EIGEN_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PebResult {
    /// Cramér-Rao bound on the position MSE, m^2.
    pub crb: f64,
    /// `sqrt(crb)`, meters.
    pub peb: f64,
    pub rank: usize,
    /// Number of unobservable directions (pseudo mode).
    pub deficiency: usize,
    /// Ascending eigenvalues of the EFIM.
    pub eigenvalues: Vec<f64>,
    pub condition: f64,
}

/// CRB `tr(EFIM^-1)` and PEB.
///
/// Strict mode fails on rank deficiency and names the deficient directions.
/// Pseudo mode inverts only the observable subspace; an all-zero EFIM has no
/// observable subspace and yields an infinite bound.
pub fn crb_peb(efim: &DMatrix<f64>, mode: PebMode) -> Result<PebResult> {
    let d = efim.nrows();
    if d == 0 || d != efim.ncols() {
        return Err(CoreError::InvalidArgument("EFIM must be square and nonempty".into()));
    }
    let sym = (efim + efim.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let lmax = values[d - 1];
    let cutoff = EIGEN_CUTOFF * lmax.max(0.0);
    let observable: Vec<usize> = (0..d).filter(|&i| lmax > 0.0 && values[i] > cutoff).collect();
    let rank = observable.len();
    let deficiency = d - rank;
    let condition = if values[0] > 0.0 {
        lmax / values[0]
    } else {
        f64::INFINITY
    };
    if mode == PebMode::Strict && deficiency > 0 {
        let directions = (0..d)
            .filter(|i| !observable.contains(i))
            .map(|i| eig.eigenvectors.column(order[i]).iter().copied().collect())
            .collect();
        return Err(CoreError::SingularInformation { directions });
    }
    let crb = if rank == 0 {
        f64::INFINITY
    } else {
        observable.iter().map(|&i| 1.0 / values[i]).sum()
    };
    Ok(PebResult {
        crb,
        peb: crb.sqrt(),
        rank,
        deficiency,
        eigenvalues: values,
        condition,
    })
}
