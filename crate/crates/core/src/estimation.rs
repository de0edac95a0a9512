//! Least-squares multi-step predictor `y = Theta phi`, its residual and
//! regressor covariances, and the causal (block lower-triangular) variant.

use crate::error::{ensure_dim, Result};
use crate::numkit::{self, default_rank_tol, pinv, svd, Matrix, Vector};
use crate::sysdata::{Dimensions, RegressorBundle};

/// Fitted predictor with the covariance factors the slack formulation needs.
///
/// `sigma_delta` is represented on its range by `delta_range_basis`
/// (`B`, orthonormal columns) and `delta_weights` (`s`, the positive
/// eigenvalues), so `Sigma_delta = B diag(s) B^T`. The same holds for
/// `sigma_phi`.
#[derive(Debug, Clone)]
pub struct PredictorModel {
    pub theta: Matrix,
    pub sigma_delta: Matrix,
    pub sigma_phi: Matrix,
    pub delta_range_basis: Matrix,
    pub delta_weights: Vector,
    pub phi_range_basis: Matrix,
    pub phi_weights: Vector,
    pub columns: usize,
    pub causal: bool,
    pub dims: Dimensions,
}

impl PredictorModel {
    pub fn theta_z(&self) -> Matrix {
        self.theta.columns(0, self.dims.n_z()).into_owned()
    }

    pub fn theta_u(&self) -> Matrix {
        self.theta
            .columns(self.dims.n_z(), self.dims.n_future_u())
            .into_owned()
    }

    pub fn predict(&self, phi: &Vector) -> Result<Vector> {
        ensure_dim("regressor", self.dims.n_phi(), phi.len())?;
        Ok(&self.theta * phi)
    }

    pub fn rank_delta(&self) -> usize {
        self.delta_weights.len()
    }

    pub fn rank_phi(&self) -> usize {
        self.phi_weights.len()
    }

    /// `phi^T Sigma_phi^+ phi`.
    pub fn phi_penalty(&self, phi: &Vector) -> f64 {
        let c = self.phi_range_basis.tr_mul(phi);
        c.iter().zip(self.phi_weights.iter()).map(|(c, w)| c * c / w).sum()
    }

    /// `d^T Sigma_delta^+ d`.
    pub fn slack_penalty(&self, slack: &Vector) -> f64 {
        let c = self.delta_range_basis.tr_mul(slack);
        c.iter().zip(self.delta_weights.iter()).map(|(c, s)| c * c / s).sum()
    }

    /// Norm of the component of `phi` outside `range(Sigma_phi)`.
    pub fn phi_range_residual(&self, phi: &Vector) -> f64 {
        let c = self.phi_range_basis.tr_mul(phi);
        (phi - &self.phi_range_basis * c).norm()
    }

    /// `Sigma_phi^+` as a dense matrix.
    pub fn sigma_phi_pinv(&self) -> Matrix {
        dense_pinv_from_eigen(&self.phi_range_basis, &self.phi_weights)
    }

    /// `Sigma_delta^+` as a dense matrix.
    pub fn sigma_delta_pinv(&self) -> Matrix {
        dense_pinv_from_eigen(&self.delta_range_basis, &self.delta_weights)
    }
}

fn dense_pinv_from_eigen(basis: &Matrix, weights: &Vector) -> Matrix {
    let mut scaled = basis.clone();
    for (j, w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / w);
    }
    scaled * basis.transpose()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Relative rank tolerance; `None` uses `1e-10 * max(rows, cols)` of
    /// the matrix being decomposed.
    pub rank_tol: Option<f64>,
}

impl FitOptions {
    fn tol(&self, rows: usize, cols: usize) -> f64 {
        self.rank_tol.unwrap_or_else(|| default_rank_tol(rows, cols))
    }
}

/// `Theta = Y Phi^+`, the minimum Frobenius norm minimizer of
/// `trace(Sigma_delta)`.
pub fn fit_least_squares(bundle: &RegressorBundle) -> Result<PredictorModel> {
    fit_least_squares_with(bundle, FitOptions::default())
}

pub fn fit_least_squares_with(bundle: &RegressorBundle, opts: FitOptions) -> Result<PredictorModel> {
    let phi = &bundle.phi;
    let n = bundle.columns();
    let f = svd(phi, opts.tol(phi.nrows(), n))?;
    let r = f.numerical_rank;
    let v = f.right_range(r);
    let yv = &bundle.y * &v;
    let mut yvs = yv.clone();
    for j in 0..r {
        yvs.column_mut(j).scale_mut(1.0 / f.singular_values[j]);
    }
    let theta = yvs * f.left_range(r).transpose();
    let residual = &bundle.y - yv * v.transpose();
    assemble(bundle, theta, residual, false, opts)
}

/// Causal predictor: the block of `y_{t+k}` is regressed on `z` and
/// `u_t .. u_{t+k}` only, so `Theta_u` is block lower-triangular.
pub fn fit_causal(bundle: &RegressorBundle) -> Result<PredictorModel> {
    fit_causal_with(bundle, FitOptions::default())
}

pub fn fit_causal_with(bundle: &RegressorBundle, opts: FitOptions) -> Result<PredictorModel> {
    let dims = bundle.dims;
    let (nu, ny) = (dims.n_u, dims.n_y);
    // Phi = L P with L = R^T lower trapezoidal and P = Q^T orthonormal rows,
    // so every leading row subset Phi_p = L[..p, :] P and Phi_p^+ = P^T L[..p, :]^+.
    let qr = bundle.phi.transpose().qr();
    let l = qr.r().transpose();
    let yq = &bundle.y * qr.q();
    let mut theta = Matrix::zeros(dims.n_future_y(), dims.n_phi());
    for k in 0..dims.future_horizon {
        let p = dims.n_z() + (k + 1) * nu;
        let lp = l.rows(0, p).into_owned();
        let lp_pinv = pinv(&lp, opts.tol(lp.nrows(), lp.ncols()))?;
        let block = yq.rows(k * ny, ny) * lp_pinv;
        theta.view_mut((k * ny, 0), (ny, p)).copy_from(&block);
    }
    let residual = &bundle.y - &theta * &bundle.phi;
    assemble(bundle, theta, residual, true, opts)
}

fn assemble(
    bundle: &RegressorBundle,
    theta: Matrix,
    residual: Matrix,
    causal: bool,
    opts: FitOptions,
) -> Result<PredictorModel> {
    let n = bundle.columns();
    let nf = n as f64;
    let sigma_delta = numkit::symmetrize(&(&residual * residual.transpose())) / nf;
    let sigma_phi = numkit::symmetrize(&(&bundle.phi * bundle.phi.transpose())) / nf;

    // The residual rank is judged against the scale of the data, not of the
    // residual itself: an exact fit leaves only round-off.
    let e = svd(&residual, 1.0)?;
    let threshold = opts.tol(residual.nrows(), n) * bundle.y.norm();
    let r_delta = e.rank_above(threshold);
    let delta_range_basis = e.left_range(r_delta);
    let delta_weights = e.singular_values.rows(0, r_delta).map(|s| s * s / nf);

    let p = svd(&bundle.phi, opts.tol(bundle.phi.nrows(), n))?;
    let r_phi = p.numerical_rank;
    let phi_range_basis = p.left_range(r_phi);
    let phi_weights = p.singular_values.rows(0, r_phi).map(|s| s * s / nf);

    Ok(PredictorModel {
        theta,
        sigma_delta,
        sigma_phi,
        delta_range_basis,
        delta_weights,
        phi_range_basis,
        phi_weights,
        columns: n,
        causal,
        dims: bundle.dims,
    })
}

/// Outcome of the positive-definiteness check on `Sigma_delta` and `Sigma_phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlackRank {
    pub holds: bool,
    pub rank_delta: usize,
    pub rank_phi: usize,
}

pub fn check_slack_rank(model: &PredictorModel) -> SlackRank {
    let rank_delta = model.rank_delta();
    let rank_phi = model.rank_phi();
    SlackRank {
        holds: rank_delta == model.dims.n_future_y() && rank_phi == model.dims.n_phi(),
        rank_delta,
        rank_phi,
    }
}
