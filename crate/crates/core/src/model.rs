//! Shared domain types, norms and the monitoring objective.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::blockdiag;
use crate::error::{Error, Result};
use crate::{Mat, Vec64};

/// A column-sample data matrix with optional integer labels.
///
/// `x` is `n x N`: `n` feature rows, `N` sample columns. Labels, when
/// present, assign one nonnegative class id per column.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Mat,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: Mat, labels: Option<Vec<usize>>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid(format!(
                "data matrix must be non-empty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("data matrix contains non-finite entries"));
        }
        if let Some(l) = &labels {
            if l.len() != x.ncols() {
                return Err(Error::invalid(format!(
                    "expected {} labels (one per sample column), got {}",
                    x.ncols(),
                    l.len()
                )));
            }
        }
        Ok(Dataset { x, labels })
    }

    pub fn x(&self) -> &Mat {
        &self.x
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Feature dimension `n`.
    pub fn num_features(&self) -> usize {
        self.x.nrows()
    }

    /// Sample count `N`.
    pub fn num_samples(&self) -> usize {
        self.x.ncols()
    }

    /// Number of distinct label values, when labels are present.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut seen: Vec<usize> = l.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        })
    }
}

/// Which objective the alternating solver minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Full model: block-diagonal weights, bias and salient projection.
    Rbdlr,
    /// Reduction with `alpha = beta = 0`; the weight, Fantope and bias
    /// steps are skipped and `W`, `theta` stay zero.
    Fllrr,
}

/// Tuning record for one solver run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of the coefficient/weight coupling term.
    pub alpha: f64,
    /// Weight of the locality reconstruction and block-diagonal terms.
    pub beta: f64,
    /// Weight of the column-sparse error norm.
    pub gamma: f64,
    /// Block count of the regularizer. `None` defers to the dataset's
    /// distinct label count at fit time.
    pub k: Option<usize>,
    /// Initial penalty parameter.
    pub mu0: f64,
    /// Penalty cap.
    pub mu_max: f64,
    /// Geometric growth factor of the penalty.
    pub eta: f64,
    /// Stopping tolerance on the max-norm residuals.
    pub eps: f64,
    pub max_iter: usize,
    pub mode: Mode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 1.0,
            beta: 1e-5,
            gamma: 1e-2,
            k: None,
            mu0: 1e-6,
            mu_max: 1e10,
            eta: 1.12,
            eps: 1e-7,
            max_iter: 500,
            mode: Mode::Rbdlr,
        }
    }
}

impl Hyperparams {
    /// Validates field ranges against a dataset of `num_samples` columns.
    pub fn validate(&self, num_samples: usize) -> Result<()> {
        let finite = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("mu0", self.mu0),
            ("mu_max", self.mu_max),
            ("eta", self.eta),
            ("eps", self.eps),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        if self.alpha < 0.0 {
            return Err(Error::invalid("alpha must be nonnegative"));
        }
        if self.beta < 0.0 {
            return Err(Error::invalid("beta must be nonnegative"));
        }
        if self.gamma <= 0.0 {
            return Err(Error::invalid("gamma must be positive"));
        }
        if self.mu0 <= 0.0 {
            return Err(Error::invalid("mu0 must be positive"));
        }
        if self.mu_max < self.mu0 {
            return Err(Error::invalid("mu_max must be at least mu0"));
        }
        if self.eta <= 1.0 {
            return Err(Error::invalid("eta must exceed 1"));
        }
        if self.eps <= 0.0 {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        match self.mode {
            Mode::Fllrr => {
                if self.alpha != 0.0 || self.beta != 0.0 {
                    return Err(Error::invalid(
                        "fllrr mode requires alpha = beta = 0; use Hyperparams::fllrr or solver::fit_fllrr",
                    ));
                }
            }
            Mode::Rbdlr => {
                if self.alpha == 0.0 {
                    return Err(Error::invalid(
                        "rbdlr mode requires alpha > 0 (the weight solve is singular otherwise)",
                    ));
                }
            }
        }
        if let Some(k) = self.k {
            if k == 0 {
                return Err(Error::invalid("k must be positive"));
            }
            if k > num_samples {
                return Err(Error::invalid(format!(
                    "k = {k} exceeds the sample count {num_samples}"
                )));
            }
        }
        Ok(())
    }

    /// The reduced model: `alpha = beta = 0`, weight and bias steps skipped.
    pub fn fllrr(mut self) -> Self {
        self.mode = Mode::Fllrr;
        self.alpha = 0.0;
        self.beta = 0.0;
        self
    }
}

/// All iterates of the augmented-Lagrangian loop.
///
/// After every full iteration `u == x - e` holds exactly, `w` is feasible
/// (symmetric, nonnegative, zero diagonal) and `mu` lies in `[mu0, mu_max]`.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Recovered clean data, `n x N`.
    pub u: Mat,
    /// Coefficients, `N x N`.
    pub z: Mat,
    /// Salient-feature projection, `n x n`.
    pub p: Mat,
    /// Column-sparse error, `n x N`.
    pub e: Mat,
    /// Adaptive block-diagonal weights, `N x N`.
    pub w: Mat,
    /// Fantope variable of the weight solve, `N x N`.
    pub m: Mat,
    /// Bias column, length `N`.
    pub theta: Vec64,
    /// Multiplier of the self-expression constraint, `n x N`.
    pub y1: Mat,
    /// Multiplier of the error-split constraint, `n x N`. Stays zero under
    /// the hard assignment `u = x - e`; kept for the multiplier schedule.
    pub y2: Mat,
    /// Penalty parameter.
    pub mu: f64,
    /// Completed iterations.
    pub iter: usize,
}

impl SolverState {
    /// Initial state: `u = x`, everything else zero, `mu = mu0`.
    pub fn init(x: &Mat, hp: &Hyperparams) -> Self {
        let (n, num) = (x.nrows(), x.ncols());
        SolverState {
            u: x.clone(),
            z: Mat::zeros(num, num),
            p: Mat::zeros(n, n),
            e: Mat::zeros(n, num),
            w: Mat::zeros(num, num),
            m: Mat::zeros(num, num),
            theta: DVector::zeros(num),
            y1: Mat::zeros(n, num),
            y2: Mat::zeros(n, num),
            mu: hp.mu0,
            iter: 0,
        }
    }
}

/// Per-run diagnostics recorded by the solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// `(r1, r2)` max-norm residuals per iteration.
    pub residual_history: Vec<(f64, f64)>,
    pub objective_history: Vec<f64>,
    pub wall_time_seconds: f64,
}

/// Final iterates plus the run report.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub z: Mat,
    pub p: Mat,
    pub e: Mat,
    pub w: Mat,
    pub theta: Vec64,
    pub report: FitReport,
}

/// Sum of the Euclidean norms of the columns of `a`.
pub fn l21_norm(a: &Mat) -> f64 {
    a.column_iter().map(|c| c.norm()).sum()
}

/// Value of the k-block-diagonal regularizer: the sum of the `k` smallest
/// eigenvalues of the graph Laplacian of `w`.
///
/// Zero exactly when the graph of `w` has at least `k` connected
/// components. Eigenvalues smaller than `1e-12` in magnitude are clamped
/// to zero before summation.
pub fn block_diag_value(w: &Mat, k: usize) -> Result<f64> {
    let n = w.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "block count k = {k} must lie in 1..={n}"
        )));
    }
    blockdiag::check_weights(w)?;
    let lap = blockdiag::laplacian(w)?;
    let mut eigs: Vec<f64> = lap.symmetric_eigenvalues().iter().copied().collect();
    eigs.sort_by(|a, b| a.total_cmp(b));
    Ok(eigs
        .iter()
        .take(k)
        .map(|&v| if v.abs() < 1e-12 { 0.0 } else { v })
        .sum())
}

/// Full objective at an arbitrary state, used for monitoring:
/// `|Z|_F^2 + |P|_F^2 + |A+ - A-W|_F^2 + beta*|W|_bd + gamma*|E|_2,1`
/// with the auxiliary pair evaluated at `u = x - e`.
pub fn objective_value(x: &Mat, state: &SolverState, hp: &Hyperparams) -> Result<f64> {
    let (n, num) = (x.nrows(), x.ncols());
    let shape_ok = state.e.shape() == (n, num)
        && state.z.shape() == (num, num)
        && state.p.shape() == (n, n)
        && state.w.shape() == (num, num)
        && state.theta.len() == num;
    if !shape_ok {
        return Err(Error::invalid(
            "state shapes are inconsistent with the data matrix",
        ));
    }
    let u = x - &state.e;
    let aux = blockdiag::assemble_aux(&state.z, &state.theta, &state.p, &u, hp.alpha, hp.beta)?;
    let recon = (&aux.a_plus - &aux.a_minus * &state.w).norm_squared();
    let bd = if hp.beta > 0.0 {
        let k = hp.k.ok_or_else(|| {
            Error::invalid("k is required to evaluate the block-diagonal term")
        })?;
        hp.beta * block_diag_value(&state.w, k)?
    } else {
        0.0
    };
    Ok(state.z.norm_squared() + state.p.norm_squared() + recon + bd
        + hp.gamma * l21_norm(&state.e))
}
