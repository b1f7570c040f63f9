//! Inexact augmented-Lagrangian solver. Every subproblem has a closed
//! form; one iteration sweeps Z, P, theta, (E, U), W, then the
//! multipliers and the penalty.

use std::time::Instant;

use crate::blockdiag;
use crate::error::{Error, Result};
use crate::model::{self, Dataset, FitReport, FitResult, Hyperparams, Mode, SolverState};
use crate::{Mat, Vec64};

/// Coefficient update: solves
/// `(2(1 + alpha) I + mu U^T U) Z = 2 alpha (W - theta 1^T) + U^T Y1 + mu U^T (U - P U)`.
pub fn update_coefficients(state: &SolverState, hp: &Hyperparams) -> Result<Mat> {
    let num = state.u.ncols();
    let utu = state.u.transpose() * &state.u;
    let mut lhs = utu * state.mu;
    for i in 0..num {
        lhs[(i, i)] += 2.0 * (1.0 + hp.alpha);
    }
    let u_minus_pu = &state.u - &state.p * &state.u;
    let mut rhs = state.u.transpose() * (&state.y1 + u_minus_pu * state.mu);
    if hp.alpha > 0.0 {
        let ones = Mat::from_element(1, num, 1.0);
        rhs += (&state.w - &state.theta * ones) * (2.0 * hp.alpha);
    }
    let chol = lhs
        .cholesky()
        .ok_or_else(|| Error::Numerical("coefficient system is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Projection update: solves `P (Gamma + 2 I) = Y1 U^T + mu (U - U Z) U^T`
/// with `Gamma = (2 beta + mu) U U^T - 4 beta (U W) U^T + 2 beta (U W)(U W)^T`.
pub fn update_projection(state: &SolverState, hp: &Hyperparams) -> Result<Mat> {
    let n = state.u.nrows();
    let uut = &state.u * state.u.transpose();
    let mut gamma = uut * (2.0 * hp.beta + state.mu);
    if hp.beta > 0.0 {
        let uw = &state.u * &state.w;
        gamma -= (&uw * state.u.transpose()) * (4.0 * hp.beta);
        gamma += (&uw * uw.transpose()) * (2.0 * hp.beta);
    }
    for i in 0..n {
        gamma[(i, i)] += 2.0;
    }
    let rhs = (&state.y1 + (&state.u - &state.u * &state.z) * state.mu) * state.u.transpose();
    // Gamma + 2I = mu U U^T + 2 beta (U - U W)(U - U W)^T + 2I, symmetric
    // positive definite; solve the transposed system and flip back.
    let chol = gamma
        .cholesky()
        .ok_or_else(|| Error::Numerical("projection system is not positive definite".into()))?;
    Ok(chol.solve(&rhs.transpose()).transpose())
}

/// Bias update: `theta = (W 1 - Z 1) / N`, the per-row mean gap between
/// the weights and the coefficients.
pub fn update_bias(state: &SolverState) -> Vec64 {
    let num = state.z.ncols();
    let ones = Vec64::from_element(num, 1.0);
    (&state.w * &ones - &state.z * ones) / num as f64
}

/// Proximal map of `tau * |.|_2,1`: scales every column of `a` by
/// `(|c| - tau) / |c|` when `|c| > tau` and zeroes it otherwise.
pub fn column_shrink(a: &Mat, tau: f64) -> Mat {
    assert!(tau >= 0.0 && tau.is_finite(), "shrink threshold must be nonnegative");
    let mut out = a.clone();
    for mut c in out.column_iter_mut() {
        let norm = c.norm();
        if norm > tau {
            c *= (norm - tau) / norm;
        } else {
            c.fill(0.0);
        }
    }
    out
}

/// Error update followed by the hard clean-data assignment: shrinks
/// `X - (U Z + P U) + Y2 / mu` columnwise at threshold `gamma / mu` and
/// returns `(E, U)` with `U = X - E` exactly.
pub fn update_error(x: &Mat, state: &SolverState, hp: &Hyperparams) -> Result<(Mat, Mat)> {
    if x.shape() != state.u.shape() {
        return Err(Error::invalid("data and state shapes differ"));
    }
    let recon = &state.u * &state.z + &state.p * &state.u;
    let target = x - recon + &state.y2 / state.mu;
    let e = column_shrink(&target, hp.gamma / state.mu);
    let u = x - &e;
    Ok((e, u))
}

/// One weight sweep: Fantope point from the previous weights, stacked
/// auxiliary pair at the fresh iterates, linear solve, feasibility
/// projection. Returns `(W, M)`.
pub fn update_weights(state: &SolverState, hp: &Hyperparams, k: usize) -> Result<(Mat, Mat)> {
    let lap = blockdiag::laplacian(&state.w)?;
    let m = blockdiag::update_fantope(&lap, k)?;
    let aux = blockdiag::assemble_aux(
        &state.z,
        &state.theta,
        &state.p,
        &state.u,
        hp.alpha,
        hp.beta,
    )?;
    let w = blockdiag::project_weights(&blockdiag::solve_weights(&aux, &m, hp.beta)?);
    Ok((w, m))
}

/// Multiplier and penalty schedule. Returns the updated `(Y1, Y2, mu)`
/// evaluated at the current iterates.
pub fn update_multipliers(x: &Mat, state: &SolverState, hp: &Hyperparams) -> (Mat, Mat, f64) {
    let (y1, y2, mu, _, _) = multipliers_with_residuals(x, state, hp);
    (y1, y2, mu)
}

/// As `update_multipliers`, also reporting the max-norm feasibility
/// residuals `r1 = |U - U Z - P U|_inf` and `r2 = |X - E - U|_inf` that
/// drive the stopping rule.
pub(crate) fn multipliers_with_residuals(
    x: &Mat,
    state: &SolverState,
    hp: &Hyperparams,
) -> (Mat, Mat, f64, f64, f64) {
    let res1 = &state.u - &state.u * &state.z - &state.p * &state.u;
    let res2 = x - &state.e - &state.u;
    let r1 = res1.amax();
    let r2 = res2.amax();
    let y1 = &state.y1 + &res1 * state.mu;
    let y2 = &state.y2 + &res2 * state.mu;
    let mu = (state.mu * hp.eta).min(hp.mu_max);
    (y1, y2, mu, r1, r2)
}

fn all_finite(m: &Mat) -> bool {
    m.iter().all(|v| v.is_finite())
}

fn diverged(iter: usize, e: Error) -> Error {
    match e {
        Error::Numerical(detail) => Error::Diverged { iter, detail },
        other => other,
    }
}

/// Runs the solver, calling `inspect` with the full state after every
/// completed iteration. The hook sees exactly the iterates the stopping
/// rule sees.
pub fn fit_with_inspector(
    data: &Dataset,
    hp: &Hyperparams,
    mut inspect: impl FnMut(&SolverState),
) -> Result<FitResult> {
    hp.validate(data.num_samples())?;
    let x = data.x();
    let mut hp = hp.clone();
    if hp.mode == Mode::Rbdlr && hp.k.is_none() {
        hp.k = Some(data.num_classes().ok_or_else(|| {
            Error::invalid("k is required: set it explicitly or provide labels")
        })?);
    }
    let k = hp.k;

    let start = Instant::now();
    let mut state = SolverState::init(x, &hp);
    let mut residual_history = Vec::new();
    let mut objective_history = Vec::new();
    let mut converged = false;

    for iter in 1..=hp.max_iter {
        state.z = update_coefficients(&state, &hp).map_err(|e| diverged(iter, e))?;
        state.p = update_projection(&state, &hp).map_err(|e| diverged(iter, e))?;
        if hp.mode == Mode::Rbdlr {
            state.theta = update_bias(&state);
        }
        let (e, u) = update_error(x, &state, &hp).map_err(|e| diverged(iter, e))?;
        state.e = e;
        state.u = u;
        if hp.mode == Mode::Rbdlr {
            let (w, m) = update_weights(&state, &hp, k.unwrap()).map_err(|e| diverged(iter, e))?;
            state.w = w;
            state.m = m;
        }
        let (y1, y2, mu, r1, r2) = multipliers_with_residuals(x, &state, &hp);
        state.y1 = y1;
        state.y2 = y2;
        state.mu = mu;
        state.iter = iter;

        let finite = r1.is_finite()
            && r2.is_finite()
            && all_finite(&state.z)
            && all_finite(&state.p)
            && all_finite(&state.e)
            && all_finite(&state.w);
        if !finite {
            return Err(Error::Diverged {
                iter,
                detail: "iterates left the finite range".into(),
            });
        }

        residual_history.push((r1, r2));
        objective_history
            .push(model::objective_value(x, &state, &hp).map_err(|e| diverged(iter, e))?);
        inspect(&state);
        if r1.max(r2) < hp.eps {
            converged = true;
            break;
        }
    }

    let report = FitReport {
        iterations: state.iter,
        converged,
        residual_history,
        objective_history,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(FitResult {
        z: state.z,
        p: state.p,
        e: state.e,
        w: state.w,
        theta: state.theta,
        report,
    })
}

/// Runs the full model to convergence or `max_iter`.
pub fn fit(data: &Dataset, hp: &Hyperparams) -> Result<FitResult> {
    fit_with_inspector(data, hp, |_| {})
}

/// Runs the reduction with `alpha = beta = 0`: no weight, Fantope or bias
/// steps, and `W`, `theta` stay identically zero.
pub fn fit_fllrr(data: &Dataset, hp: &Hyperparams) -> Result<FitResult> {
    fit(data, &hp.clone().fllrr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::l21_norm;
    use nalgebra::{dmatrix, DVector};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_state(n: usize, num: usize, mu: f64, rng: &mut StdRng) -> (Mat, SolverState) {
        let x = Mat::from_fn(n, num, |_, _| rng.random_range(-1.0..1.0));
        let hp = Hyperparams::default();
        let mut st = SolverState::init(&x, &hp);
        st.z = Mat::from_fn(num, num, |_, _| rng.random_range(-0.5..0.5));
        st.p = Mat::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
        st.e = Mat::from_fn(n, num, |_, _| rng.random_range(-0.2..0.2));
        st.u = &x - &st.e;
        let raw = Mat::from_fn(num, num, |_, _| rng.random_range(0.0..1.0));
        st.w = blockdiag::project_weights(&raw);
        st.theta = DVector::from_fn(num, |_, _| rng.random_range(-0.5..0.5));
        st.y1 = Mat::from_fn(n, num, |_, _| rng.random_range(-0.3..0.3));
        st.y2 = Mat::from_fn(n, num, |_, _| rng.random_range(-0.3..0.3));
        st.mu = mu;
        (x, st)
    }

    fn small_dataset(rng: &mut StdRng) -> Dataset {
        // two 1-dimensional subspaces in R^6, 5 samples each
        let b1 = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let b2 = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)).normalize();
        let mut x = Mat::zeros(6, 10);
        let mut labels = Vec::new();
        for j in 0..10 {
            let c: f64 = rng.random_range(0.5..1.5);
            let basis = if j < 5 { &b1 } else { &b2 };
            x.column_mut(j).copy_from(&(basis * c));
            labels.push(j / 5);
        }
        Dataset::new(x, Some(labels)).unwrap()
    }

    #[test]
    fn coefficient_update_satisfies_normal_equation() {
        let mut rng = StdRng::seed_from_u64(3);
        for mu in [1e-3, 1.0, 50.0] {
            let (_, st) = random_state(5, 7, mu, &mut rng);
            let hp = Hyperparams {
                alpha: 0.7,
                ..Hyperparams::default()
            };
            let z = update_coefficients(&st, &hp).unwrap();
            // gradient of the Z subproblem at the returned point
            let ones = Mat::from_element(1, 7, 1.0);
            let grad = &z * 2.0
                + (&z + &st.theta * ones - &st.w) * (2.0 * hp.alpha)
                - st.u.transpose() * &st.y1
                - st.u.transpose() * (&st.u - &st.u * &z - &st.p * &st.u) * mu;
            assert!(grad.amax() < 1e-9, "gradient {} at mu={mu}", grad.amax());
        }
    }

    #[test]
    fn projection_update_satisfies_normal_equation() {
        let mut rng = StdRng::seed_from_u64(5);
        for mu in [1e-3, 1.0, 50.0] {
            let (_, st) = random_state(5, 7, mu, &mut rng);
            let hp = Hyperparams {
                beta: 0.4,
                ..Hyperparams::default()
            };
            let p = update_projection(&st, &hp).unwrap();
            let uiw = &st.u - &st.u * &st.w;
            let grad = &p * 2.0
                + (&p * &uiw) * uiw.transpose() * (2.0 * hp.beta)
                - &st.y1 * st.u.transpose()
                - (&st.u - &st.u * &st.z - &p * &st.u) * st.u.transpose() * mu;
            assert!(grad.amax() < 1e-9, "gradient {} at mu={mu}", grad.amax());
        }
    }

    #[test]
    fn bias_update_zeroes_the_coupling_row_sums() {
        let mut rng = StdRng::seed_from_u64(8);
        let (_, mut st) = random_state(4, 6, 1.0, &mut rng);
        st.theta = update_bias(&st);
        // at the optimum each row of Z + theta 1^T - W sums to zero
        let ones = Mat::from_element(1, 6, 1.0);
        let gap = &st.z + &st.theta * ones - &st.w;
        for r in gap.row_iter() {
            assert!(r.sum().abs() < 1e-12);
        }
    }

    #[test]
    fn column_shrink_matches_closed_form() {
        let a = dmatrix![3.0, 0.1, 0.0; 4.0, 0.0, 0.0];
        let out = column_shrink(&a, 1.0);
        // column 0 has norm 5: scaled by 4/5
        assert!((out[(0, 0)] - 2.4).abs() < 1e-15);
        assert!((out[(1, 0)] - 3.2).abs() < 1e-15);
        // column 1 has norm 0.1 <= 1: zeroed
        assert_eq!(out[(0, 1)], 0.0);
        // zero column stays zero
        assert_eq!(out.column(2).norm(), 0.0);
    }

    #[test]
    fn column_shrink_at_zero_threshold_is_identity() {
        let mut rng = StdRng::seed_from_u64(13);
        let a = Mat::from_fn(4, 5, |_, _| rng.random_range(-1.0..1.0));
        assert_eq!(column_shrink(&a, 0.0), a);
    }

    #[test]
    fn column_shrink_zeroes_exactly_at_threshold() {
        let a = dmatrix![3.0; 4.0]; // norm 5
        assert_eq!(column_shrink(&a, 5.0).norm(), 0.0);
        assert!(column_shrink(&a, 5.0 - 1e-9).norm() > 0.0);
    }

    #[test]
    fn error_update_keeps_the_split_exact() {
        let mut rng = StdRng::seed_from_u64(17);
        let (x, st) = random_state(5, 7, 2.0, &mut rng);
        let hp = Hyperparams::default();
        let (e, u) = update_error(&x, &st, &hp).unwrap();
        // bitwise: u is literally x - e
        assert_eq!(&x - &e, u);
    }

    #[test]
    fn multiplier_step_grows_mu_up_to_the_cap() {
        let mut rng = StdRng::seed_from_u64(19);
        let (x, mut st) = random_state(4, 6, 1.0, &mut rng);
        let hp = Hyperparams::default();
        let (_, _, mu) = update_multipliers(&x, &st, &hp);
        assert!((mu - hp.eta).abs() < 1e-15);
        st.mu = hp.mu_max / 1.05;
        let (_, _, capped) = update_multipliers(&x, &st, &hp);
        assert_eq!(capped, hp.mu_max);
    }

    #[test]
    fn fit_converges_and_keeps_documented_invariants() {
        let mut rng = StdRng::seed_from_u64(29);
        let data = small_dataset(&mut rng);
        let hp = Hyperparams {
            max_iter: 400,
            ..Hyperparams::default()
        };
        let mut mus = Vec::new();
        let result = fit_with_inspector(&data, &hp, |st| {
            mus.push(st.mu);
            assert!(blockdiag::check_weights(&st.w).is_ok());
            assert!(st.w.diagonal().amax() == 0.0);
            assert_eq!(&(data.x() - &st.e), &st.u);
            assert_eq!(st.y2.amax(), 0.0);
            assert!((st.m.trace() - 2.0).abs() < 1e-8);
        })
        .unwrap();
        assert!(result.report.converged, "no convergence in 400 iterations");
        let (r1, r2) = *result.report.residual_history.last().unwrap();
        assert!(r1 < hp.eps && r2 == 0.0);
        assert!(mus.windows(2).all(|w| w[1] >= w[0]));
        assert!(mus.iter().all(|&m| m <= hp.mu_max));
    }

    #[test]
    fn fit_resolves_k_from_labels_or_rejects() {
        let mut rng = StdRng::seed_from_u64(31);
        let data = small_dataset(&mut rng);
        let unlabeled = Dataset::new(data.x().clone(), None).unwrap();
        let hp = Hyperparams::default();
        assert!(matches!(
            fit(&unlabeled, &hp),
            Err(Error::InvalidInput(_))
        ));
        let explicit = Hyperparams {
            k: Some(2),
            max_iter: 5,
            ..Hyperparams::default()
        };
        assert!(fit(&unlabeled, &explicit).is_ok());
    }

    #[test]
    fn fllrr_keeps_weights_and_bias_at_zero() {
        let mut rng = StdRng::seed_from_u64(37);
        let data = small_dataset(&mut rng);
        let hp = Hyperparams {
            max_iter: 200,
            ..Hyperparams::default()
        };
        let result = fit_fllrr(&data, &hp).unwrap();
        assert_eq!(result.w.amax(), 0.0);
        assert_eq!(result.theta.amax(), 0.0);
        // the monitored objective is exactly the three surviving terms
        let obj = result.report.objective_history.last().unwrap();
        let direct =
            result.z.norm_squared() + result.p.norm_squared() + hp.gamma * l21_norm(&result.e);
        assert!((obj - direct).abs() <= 1e-12 * direct.max(1.0));
    }

    #[test]
    fn fit_is_bitwise_deterministic() {
        let mut rng = StdRng::seed_from_u64(41);
        let data = small_dataset(&mut rng);
        let hp = Hyperparams {
            max_iter: 60,
            ..Hyperparams::default()
        };
        let a = fit(&data, &hp).unwrap();
        let b = fit(&data, &hp).unwrap();
        assert_eq!(a.z, b.z);
        assert_eq!(a.p, b.p);
        assert_eq!(a.e, b.e);
        assert_eq!(a.w, b.w);
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.report.residual_history, b.report.residual_history);
        assert_eq!(a.report.objective_history, b.report.objective_history);
    }

    #[test]
    fn fit_reports_divergence_on_astronomical_data() {
        let x = Mat::from_element(4, 6, 1e160);
        let data = Dataset::new(x, Some(vec![0, 0, 0, 1, 1, 1])).unwrap();
        let hp = Hyperparams {
            max_iter: 50,
            ..Hyperparams::default()
        };
        match fit(&data, &hp) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn clean_data_yields_negligible_error_term() {
        let mut rng = StdRng::seed_from_u64(43);
        let data = small_dataset(&mut rng);
        let hp = Hyperparams {
            gamma: 1e3,
            max_iter: 400,
            ..Hyperparams::default()
        };
        let result = fit(&data, &hp).unwrap();
        assert!(l21_norm(&result.e) <= 1e-6, "error mass {}", l21_norm(&result.e));
    }
}
