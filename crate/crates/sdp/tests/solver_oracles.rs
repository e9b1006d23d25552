use ipac_sdp::{solve, BlockKind, Coeff, Constraint, InteriorPoint, Relation, SdpBackend, SdpProblem, SolveStatus};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// min lambda s.t. lambda I - S psd, posed with a nonnegative shift so that
/// lambda = t - shift stays free in effect.
fn lambda_max_problem(s: &DMatrix<f64>, shift: f64) -> SdpProblem {
    let n = s.nrows();
    let mut p = SdpProblem::new();
    let y = p.add_block(BlockKind::Psd, n);
    let t = p.add_block(BlockKind::Nonneg, 1);
    p.add_objective(t, Coeff::entry(0, 0, 1.0));
    for i in 0..n {
        for j in i..n {
            let mut c = Constraint::new(Relation::Eq, if i == j { -s[(i, j)] - shift } else { -s[(i, j)] })
                .with(y, Coeff::entry(i, j, if i == j { 1.0 } else { 0.5 }));
            if i == j {
                c.push(t, Coeff::entry(0, 0, -1.0));
            }
            p.add_constraint(c);
        }
    }
    p
}

#[test]
fn lambda_max_matches_eigen_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let s = (&a + a.transpose()) * 0.5;
        let shift = 10.0;
        let sol = solve(&lambda_max_problem(&s, shift), 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        let lmax = s.symmetric_eigenvalues().max();
        let got = sol.primal_objective - shift;
        assert!((got - lmax).abs() / lmax.abs().max(1e-3) < 1e-6, "{got} vs {lmax}");
    }
}

#[test]
fn backend_trait_matches_free_function() {
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Psd, 2);
    p.add_objective(b, Coeff::identity(2));
    p.add_constraint(Constraint::new(Relation::Eq, 1.0).with(b, Coeff::entry(0, 0, 1.0)));
    let backend: Box<dyn SdpBackend> = Box::new(InteriorPoint::default());
    let a = backend.solve(&p).unwrap();
    let b = solve(&p, 1e-8, 100).unwrap();
    assert_eq!(a.primal_objective, b.primal_objective);
    let x = a.x[0].as_psd().unwrap();
    let e1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    assert!((x - e1).norm() < 1e-6);
}

#[test]
fn max_iter_returns_best_iterate() {
    let mut p = SdpProblem::new();
    let b = p.add_block(BlockKind::Psd, 3);
    p.add_objective(b, Coeff::identity(3));
    p.add_constraint(Constraint::new(Relation::Ge, 2.0).with(b, Coeff::sparse(vec![(0, 1, 1.0)])));
    let s = solve(&p, 1e-12, 2).unwrap();
    assert_eq!(s.status, SolveStatus::MaxIter);
    assert_eq!(s.iterations, 2);
}

#[test]
fn inequality_multiplier_signs() {
    // min x s.t. x >= 3 gives y = 1; min -x s.t. x <= 3 gives y = -1.
    for (rel, c, y) in [(Relation::Ge, 1.0, 1.0), (Relation::Le, -1.0, -1.0)] {
        let mut p = SdpProblem::new();
        let b = p.add_block(BlockKind::Nonneg, 1);
        p.add_objective(b, Coeff::entry(0, 0, c));
        p.add_constraint(Constraint::new(rel, 3.0).with(b, Coeff::entry(0, 0, 1.0)));
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.y[0] - y).abs() < 1e-6);
    }
}
