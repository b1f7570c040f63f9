//! Graph-Laplacian machinery behind the k-block-diagonal regularizer and
//! the closed-form weight update.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::Mat;

/// Stacked auxiliary matrices of the weight subproblem, both `(N+n) x N`:
/// the reconstruction residual `|a_plus - a_minus * W|_F^2` carries the
/// coefficient-coupling and locality terms at once.
#[derive(Debug, Clone)]
pub struct AuxPair {
    pub a_plus: Mat,
    pub a_minus: Mat,
}

pub(crate) fn check_symmetric(w: &Mat) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::invalid(format!(
            "weight matrix must be square, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    let mut amax = 0.0f64;
    for v in w.iter() {
        if !v.is_finite() {
            return Err(Error::invalid("weight matrix contains non-finite entries"));
        }
        amax = amax.max(v.abs());
    }
    let tol = 1e-8 * (1.0 + amax);
    for i in 0..w.nrows() {
        for j in (i + 1)..w.ncols() {
            if (w[(i, j)] - w[(j, i)]).abs() > tol {
                return Err(Error::invalid(format!(
                    "weight matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

pub(crate) fn check_weights(w: &Mat) -> Result<()> {
    check_symmetric(w)?;
    if w.iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("weight matrix has negative entries"));
    }
    Ok(())
}

/// Graph Laplacian `Diag(W 1) - W` of a symmetric weight matrix.
pub fn laplacian(w: &Mat) -> Result<Mat> {
    check_symmetric(w)?;
    let degrees: DVector<f64> = DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum()));
    let mut lap = -w.clone();
    for i in 0..w.nrows() {
        lap[(i, i)] += degrees[i];
    }
    Ok(lap)
}

/// Extremal point of the Fantope relaxation: the orthogonal projector onto
/// the `k` smallest-eigenvalue eigenvectors of `lap`, so that
/// `<lap, M>` equals the sum of the `k` smallest eigenvalues.
pub fn update_fantope(lap: &Mat, k: usize) -> Result<Mat> {
    check_symmetric(lap)?;
    let n = lap.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "block count k = {k} must lie in 1..={n}"
        )));
    }
    let eig = lap.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut v = Mat::zeros(n, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        v.column_mut(col).copy_from(&eig.eigenvectors.column(idx));
    }
    Ok(&v * v.transpose())
}

/// Builds the stacked pair
/// `a_plus = [sqrt(alpha)(Z + theta 1^T); sqrt(beta) P U]`,
/// `a_minus = [sqrt(alpha) I; sqrt(beta) P U]`.
pub fn assemble_aux(
    z: &Mat,
    theta: &DVector<f64>,
    p: &Mat,
    u: &Mat,
    alpha: f64,
    beta: f64,
) -> Result<AuxPair> {
    let (n, num) = (u.nrows(), u.ncols());
    if z.shape() != (num, num) || theta.len() != num || p.shape() != (n, n) {
        return Err(Error::invalid(
            "auxiliary assembly got inconsistent factor shapes",
        ));
    }
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::invalid("alpha and beta must be finite and nonnegative"));
    }
    let sa = alpha.sqrt();
    let sb = beta.sqrt();
    let ones_row = Mat::from_element(1, num, 1.0);
    let top_plus = (z + theta * ones_row) * sa;
    let bottom = (p * u) * sb;

    let mut a_plus = Mat::zeros(num + n, num);
    a_plus.view_mut((0, 0), (num, num)).copy_from(&top_plus);
    a_plus.view_mut((num, 0), (n, num)).copy_from(&bottom);

    let mut a_minus = Mat::zeros(num + n, num);
    a_minus
        .view_mut((0, 0), (num, num))
        .copy_from(&(Mat::identity(num, num) * sa));
    a_minus.view_mut((num, 0), (n, num)).copy_from(&bottom);

    Ok(AuxPair { a_plus, a_minus })
}

/// Unconstrained minimizer of
/// `|a_plus - a_minus W|_F^2 + beta <W, diag(M) 1^T - M>`:
/// solves `2 A-^T A- W = 2 A-^T A+ - beta (diag(M) 1^T - M)`.
///
/// `A-^T A- = alpha I + beta (PU)^T PU` is positive definite whenever
/// `alpha > 0`, so the Cholesky solve cannot fail on valid input.
pub fn solve_weights(aux: &AuxPair, m: &Mat, beta: f64) -> Result<Mat> {
    let num = aux.a_minus.ncols();
    if aux.a_plus.shape() != aux.a_minus.shape() || m.shape() != (num, num) {
        return Err(Error::invalid("weight solve got inconsistent shapes"));
    }
    let gram = aux.a_minus.transpose() * &aux.a_minus;
    let rhs = aux.a_minus.transpose() * &aux.a_plus * 2.0
        - (Mat::from_diagonal(&m.diagonal()) * Mat::from_element(num, num, 1.0) - m) * beta;
    let chol = (gram * 2.0)
        .cholesky()
        .ok_or_else(|| Error::Numerical("weight gram matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Feasibility projection of the weight iterate: symmetrize, clamp
/// negatives to zero, then zero the diagonal.
pub fn project_weights(w_hat: &Mat) -> Mat {
    assert_eq!(w_hat.nrows(), w_hat.ncols(), "weight iterate must be square");
    let mut w = (w_hat + w_hat.transpose()) * 0.5;
    w.apply(|v| *v = v.max(0.0));
    w.fill_diagonal(0.0);
    w
}
