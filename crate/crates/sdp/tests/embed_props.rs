use ipac_sdp::{hermitian_embed, hermitian_from_embedding, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn hermitian(d: usize, vals: &[f64]) -> DMatrix<C64> {
    let a = DMatrix::from_fn(d, d, |i, j| C64::new(vals[2 * (i * d + j)], vals[2 * (i * d + j) + 1]));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

fn sorted(v: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.collect();
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn embedding_preserves_semidefiniteness(
        d in 1usize..5,
        vals in prop::collection::vec(-1.0f64..1.0, 32),
        shift in -1.5f64..1.5,
    ) {
        let h = hermitian(d, &vals) + DMatrix::<C64>::identity(d, d) * C64::new(shift, 0.0);
        let lmin_h = h.symmetric_eigenvalues().min();
        let lmin_e = hermitian_embed(&h).unwrap().symmetric_eigenvalues().min();
        prop_assert!((lmin_h - lmin_e).abs() < 1e-10);
        prop_assert_eq!(lmin_h >= -1e-10, lmin_e >= -1e-10);
    }

    #[test]
    fn spectrum_doubles(d in 1usize..5, vals in prop::collection::vec(-1.0f64..1.0, 32)) {
        let h = hermitian(d, &vals);
        let eh = sorted(h.symmetric_eigenvalues().iter().flat_map(|&l| [l, l]));
        let ee = sorted(hermitian_embed(&h).unwrap().symmetric_eigenvalues().iter().copied());
        for (a, b) in eh.iter().zip(&ee) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_and_inner_product_scale_by_two(
        d in 1usize..5,
        va in prop::collection::vec(-1.0f64..1.0, 32),
        vb in prop::collection::vec(-1.0f64..1.0, 32),
    ) {
        let a = hermitian(d, &va);
        let b = hermitian(d, &vb);
        let ea = hermitian_embed(&a).unwrap();
        let eb = hermitian_embed(&b).unwrap();
        prop_assert!((ea.trace() - 2.0 * a.trace().re).abs() < 1e-12);
        let complex_inner = (a.adjoint() * &b).trace().re;
        prop_assert!((ea.dot(&eb) - 2.0 * complex_inner).abs() < 1e-10);
        let back = hermitian_from_embedding(&ea).unwrap();
        prop_assert!((back - a).norm() < 1e-14);
    }
}
