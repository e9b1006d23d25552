use nalgebra::DMatrix;

use crate::{SdpError, C64};

const HERMITIAN_TOL: f64 = 1e-12;

/// True when `h` equals its conjugate transpose within `tol` (scaled by the
/// largest entry magnitude).
pub fn is_hermitian(h: &DMatrix<C64>, tol: f64) -> bool {
    if h.nrows() != h.ncols() {
        return false;
    }
    let scale = h.iter().fold(0.0_f64, |a, z| a.max(z.norm())).max(1.0);
    let n = h.nrows();
    for i in 0..n {
        for j in i..n {
            if (h[(i, j)] - h[(j, i)].conj()).norm() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Real symmetric embedding `[[Re H, -Im H], [Im H, Re H]]`.
///
/// `<embed(A), embed(B)> = 2 Re tr(A^H B)`, so callers halve inner products.
pub fn hermitian_embed(h: &DMatrix<C64>) -> Result<DMatrix<f64>, SdpError> {
    if !is_hermitian(h, HERMITIAN_TOL) {
        return Err(SdpError::InvalidArgument("matrix is not Hermitian within 1e-12".into()));
    }
    let d = h.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + d, j + d)] = z.re;
            out[(i, j + d)] = -z.im;
            out[(i + d, j)] = z.im;
        }
    }
    Ok(out)
}

/// Recovers the Hermitian matrix from a real `2d x 2d` symmetric block by
/// averaging the redundant copies.
pub fn hermitian_from_embedding(x: &DMatrix<f64>) -> Result<DMatrix<C64>, SdpError> {
    let n = x.nrows();
    if n != x.ncols() || n % 2 != 0 {
        return Err(SdpError::InvalidArgument(format!(
            "embedding must be square with even size, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    let d = n / 2;
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + d, j + d)]);
        let im = 0.5 * (x[(i + d, j)] - x[(i, j + d)]);
        C64::new(re, im)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_embeds_to_identity() {
        let h = DMatrix::<C64>::identity(3, 3);
        assert_eq!(hermitian_embed(&h).unwrap(), DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn pauli_y_spectrum_doubles() {
        let j = C64::new(0.0, 1.0);
        let h = DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), -j, j, C64::new(0.0, 0.0)]);
        let e = hermitian_embed(&h).unwrap().symmetric_eigen();
        let mut ev: Vec<f64> = e.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, 1.0),
                C64::new(1.0, 0.0),
            ],
        );
        assert!(matches!(hermitian_embed(&h), Err(SdpError::InvalidArgument(_))));
    }

    #[test]
    fn round_trip() {
        let h = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.5, -0.25),
                C64::new(0.5, 0.25),
                C64::new(1.0, 0.0),
            ],
        );
        let back = hermitian_from_embedding(&hermitian_embed(&h).unwrap()).unwrap();
        assert!((back - h).norm() < 1e-15);
    }
}
