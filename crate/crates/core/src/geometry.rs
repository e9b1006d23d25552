//! Array geometry, wavevectors and steering vectors.
//!
//! Arrays lie in the global y-z plane with boresight along +x. Rows run
//! along z and columns along y. Elements are stored column-major
//! (`index = col * rows + row`), so a block of whole columns is a
//! contiguous index range.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix3xX, Vector3};

use crate::error::{CoreError, Result};
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Element offsets from `reference_point`, one column per element.
    pub element_coords: Matrix3xX<f64>,
    pub reference_point: Vector3<f64>,
    pub rows: usize,
    pub cols: usize,
    pub element_spacing: f64,
}

/// Centered `rows x cols` grid with spacing `spacing`, located at the origin.
pub fn upa_coordinates(rows: usize, cols: usize, spacing: f64) -> Result<ArrayGeometry> {
    if rows == 0 || cols == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "array dimensions must be >= 1, got {rows}x{cols}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "element spacing must be positive, got {spacing}"
        )));
    }
    let zc = (rows as f64 - 1.0) / 2.0;
    let yc = (cols as f64 - 1.0) / 2.0;
    let coords = Matrix3xX::from_fn(rows * cols, |axis, i| {
        let (c, r) = (i / rows, i % rows);
        match axis {
            1 => (c as f64 - yc) * spacing,
            2 => (r as f64 - zc) * spacing,
            _ => 0.0,
        }
    });
    Ok(ArrayGeometry {
        element_coords: coords,
        reference_point: Vector3::zeros(),
        rows,
        cols,
        element_spacing: spacing,
    })
}

impl ArrayGeometry {
    pub fn n_elements(&self) -> usize {
        self.element_coords.ncols()
    }

    pub fn placed_at(mut self, reference: Vector3<f64>) -> Self {
        self.reference_point = reference;
        self
    }

    /// Global position of element `i`.
    pub fn element_position(&self, i: usize) -> Vector3<f64> {
        self.reference_point + self.element_coords.column(i)
    }

    /// Sub-array made of columns `c0..c1`, re-centered on its own centroid.
    pub fn column_block(&self, c0: usize, c1: usize) -> Result<ArrayGeometry> {
        if c0 >= c1 || c1 > self.cols {
            return Err(CoreError::InvalidArgument(format!(
                "column range {c0}..{c1} outside 0..{}",
                self.cols
            )));
        }
        let start = c0 * self.rows;
        let len = (c1 - c0) * self.rows;
        let block = self.element_coords.columns(start, len).into_owned();
        let centroid: Vector3<f64> = block.column_mean();
        let local = Matrix3xX::from_fn(len, |a, i| block[(a, i)] - centroid[a]);
        Ok(ArrayGeometry {
            element_coords: local,
            reference_point: self.reference_point + centroid,
            rows: self.rows,
            cols: c1 - c0,
            element_spacing: self.element_spacing,
        })
    }
}

/// `c / (fc + n * delta_f)`.
pub fn subcarrier_wavelength(fc: f64, delta_f: f64, n: usize) -> f64 {
    SPEED_OF_LIGHT / (fc + n as f64 * delta_f)
}

/// Unit direction `[sin(theta) cos(phi), sin(theta) sin(phi), cos(theta)]`.
pub fn unit_direction(phi: f64, theta: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

/// `(2 pi / lambda) * unit_direction(phi, theta)`.
pub fn wavevector(phi: f64, theta: f64, lambda: f64) -> Vector3<f64> {
    unit_direction(phi, theta) * (2.0 * PI / lambda)
}

/// Azimuth in `(-pi, pi]` and elevation from +z in `[0, pi]` of the
/// direction `to - from`.
pub fn angles_to(from: &Vector3<f64>, to: &Vector3<f64>) -> Result<(f64, f64)> {
    let d = to - from;
    let norm = d.norm();
    if !(norm > 0.0) {
        return Err(CoreError::InvalidArgument(
            "cannot take angles between coincident points".into(),
        ));
    }
    let u = d / norm;
    let theta = u.z.clamp(-1.0, 1.0).acos();
    let horizontal = u.x.hypot(u.y);
    let phi = if horizontal <= 1e-15 {
        0.0
    } else {
        let p = u.y.atan2(u.x);
        if p <= -PI {
            PI
        } else {
            p
        }
    };
    Ok((phi, theta))
}

/// `a_i = exp(j <coords_i, kappa>)`.
pub fn steering_vector(geom: &ArrayGeometry, phi: f64, theta: f64, lambda: f64) -> DVector<C64> {
    let kappa = wavevector(phi, theta, lambda);
    DVector::from_fn(geom.n_elements(), |i, _| {
        let ph = geom.element_coords.column(i).dot(&kappa);
        C64::from_polar(1.0, ph)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_at_origin() {
        let g = upa_coordinates(1, 1, 0.005).unwrap();
        assert_eq!(g.n_elements(), 1);
        assert_eq!(g.element_coords.column(0).norm(), 0.0);
        let a = steering_vector(&g, 0.3, 1.1, 0.01);
        assert_eq!(a[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn two_rows_sit_at_half_spacing() {
        let d = 0.02;
        let g = upa_coordinates(2, 1, d).unwrap();
        assert!((g.element_coords[(2, 0)] + d / 2.0).abs() < 1e-15);
        assert!((g.element_coords[(2, 1)] - d / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_dimension() {
        assert!(upa_coordinates(0, 3, 0.1).is_err());
        assert!(upa_coordinates(2, 2, 0.0).is_err());
    }

    #[test]
    fn wavevector_axis_cases() {
        let k = wavevector(1.234, 0.0, 1.0);
        assert!((k - Vector3::new(0.0, 0.0, 2.0 * PI)).norm() < 1e-12);
        let k = wavevector(0.0, PI / 2.0, 1.0);
        assert!((k - Vector3::new(2.0 * PI, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn angles_axis_cases() {
        let o = Vector3::zeros();
        let (phi, theta) = angles_to(&o, &Vector3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!((phi, theta), (0.0, 0.0));
        let (phi, theta) = angles_to(&o, &Vector3::new(3.0, 0.0, 0.0)).unwrap();
        assert!(phi.abs() < 1e-15 && (theta - PI / 2.0).abs() < 1e-15);
        let (phi, _) = angles_to(&o, &Vector3::new(-1.0, 0.0, 0.0)).unwrap();
        assert_eq!(phi, PI);
        assert!(angles_to(&o, &o).is_err());
    }

    #[test]
    fn boresight_steering_is_all_ones() {
        // kappa along +x is orthogonal to the y-z array plane.
        let g = upa_coordinates(3, 2, 0.004).unwrap();
        let a = steering_vector(&g, 0.0, PI / 2.0, 0.01);
        for z in a.iter() {
            assert!((z - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn column_block_is_contiguous_and_centered() {
        let g = upa_coordinates(4, 6, 0.01)
            .unwrap()
            .placed_at(Vector3::new(0.0, 20.0, 10.0));
        let b = g.column_block(2, 4).unwrap();
        assert_eq!(b.n_elements(), 8);
        assert!(b.element_coords.column_mean().norm() < 1e-15);
        for i in 0..8 {
            let global = g.element_position(8 + i);
            assert!((b.element_position(i) - global).norm() < 1e-12);
        }
    }
}
