//! Invariant trail: every documented per-iteration property of the
//! solver, observed through the inspector hook on a reduced benchmark.

use rbdlr::eval::block_energy_ratio;
use rbdlr::model::l21_norm;
use rbdlr::solver;
use rbdlr::synth::{generate_subspace_data, SyntheticSpec};
use rbdlr::{Hyperparams, Mat};

fn reduced_benchmark(seed: u64) -> rbdlr::Dataset {
    generate_subspace_data(&SyntheticSpec {
        num_subspaces: 4,
        ambient_dim: 40,
        basis_dim: 4,
        samples_per_subspace: 6,
        seed,
    })
    .unwrap()
}

#[test]
fn every_iterate_satisfies_the_documented_invariants() {
    let data = reduced_benchmark(1);
    let x = data.x().clone();
    // gamma at data scale: the columns here are unit-variance, so the default
    // (tuned for much larger magnitudes) would divert clean mass into E
    let hp = Hyperparams {
        gamma: 1.0,
        max_iter: 400,
        ..Hyperparams::default()
    };
    let k = 4.0;

    let mut prev_mu = 0.0;
    let mut iterations = 0;
    let result = solver::fit_with_inspector(&data, &hp, |st| {
        iterations += 1;
        assert!(st.mu >= prev_mu && st.mu <= hp.mu_max);
        prev_mu = st.mu;

        assert!((&st.w - st.w.transpose()).amax() == 0.0);
        assert!(st.w.iter().all(|&v| v >= 0.0));
        assert_eq!(st.w.diagonal().amax(), 0.0);

        // M stays in the Fantope: symmetric, trace k, spectrum in [0,1]
        assert!((&st.m - st.m.transpose()).amax() < 1e-9);
        assert!((st.m.trace() - k).abs() < 1e-8);
        let eigs = st.m.symmetric_eigenvalues();
        assert!(eigs.iter().all(|&l| (-1e-9..=1.0 + 1e-9).contains(&l)));

        // the split constraint is enforced exactly, so r2 and Y2 vanish
        assert_eq!(&x - &st.e, st.u);
        assert_eq!(st.y2.amax(), 0.0);
    })
    .unwrap();

    assert!(result.report.converged, "no convergence in {iterations} iterations");
    assert_eq!(result.report.iterations, iterations);
    assert_eq!(result.report.residual_history.len(), iterations);
    assert_eq!(result.report.objective_history.len(), iterations);
    for &(r1, r2) in &result.report.residual_history {
        assert!(r1.is_finite());
        assert_eq!(r2, 0.0);
    }
    let (final_r1, _) = *result.report.residual_history.last().unwrap();
    assert!(final_r1 < hp.eps);

    // the learned weights concentrate on the true blocks
    let ratio = block_energy_ratio(&result.w, data.labels().unwrap()).unwrap();
    assert!(ratio > 0.75, "block energy ratio only {ratio}");
}

#[test]
fn huge_gamma_keeps_the_error_at_zero_throughout() {
    let data = reduced_benchmark(2);
    let hp = Hyperparams {
        gamma: 1e3,
        max_iter: 400,
        ..Hyperparams::default()
    };
    let result = solver::fit_with_inspector(&data, &hp, |st| {
        assert_eq!(st.e.amax(), 0.0);
    })
    .unwrap();
    assert_eq!(l21_norm(&result.e), 0.0);
}

#[test]
fn fllrr_history_matches_the_reduced_objective() {
    let data = reduced_benchmark(3);
    let hp = Hyperparams {
        max_iter: 150,
        ..Hyperparams::default()
    };
    let mut audited: Vec<f64> = Vec::new();
    let fllrr = hp.clone().fllrr();
    let result = solver::fit_with_inspector(&data, &fllrr, |st| {
        audited.push(st.z.norm_squared() + st.p.norm_squared() + hp.gamma * l21_norm(&st.e));
    })
    .unwrap();
    assert_eq!(result.report.objective_history.len(), audited.len());
    for (got, want) in result.report.objective_history.iter().zip(&audited) {
        assert!((got - want).abs() <= 1e-9 * want.max(1.0));
    }
    assert_eq!(result.w, Mat::zeros(24, 24));
}
