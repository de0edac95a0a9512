//! Predictive-control formulations and their reduction to [`QuadProgram`]s.
//!
//! Every controller lifts the future inputs `u` and predictions `y_hat`
//! into the decision vector and ties them to the controller's internal
//! variables through equalities. Boxes act directly on those entries, and
//! the tracking cost `J = |y_hat - y_ref|_Q^2 + |u - u_ref|_R^2` is the same
//! block in every QP.
//!
//! The indirect slack formulation parameterizes `dy = B diag(sqrt(s)) nu`
//! where `Sigma_delta = B diag(s) B^T`, so the range constraint on the slack
//! is built in and its penalty `(l2/N) dy^T Sigma_delta^+ dy` becomes
//! `(l2/N) |nu|^2`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Cholesky;

use crate::error::{ensure_dim, Error, Result};
use crate::estimation::PredictorModel;
use crate::numkit::{self, default_rank_tol, LqBlocks, Matrix, Vector};
use crate::qpcore::{solve_qp, QpSolution, QpStatus, QuadProgram};
use crate::sysdata::{ArxPlant, Dimensions, PastWindow, RegressorBundle};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Drop the constraint `phi in range(Sigma_phi)` in the indirect
    /// formulation instead of failing when it cannot be met.
    pub relax_phi_range: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50_000,
            relax_phi_range: false,
        }
    }
}

/// Per-channel interval, repeated over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ChannelBox {
    pub fn uniform(channels: usize, lower: f64, upper: f64) -> Self {
        Self {
            lower: alloc::vec![lower; channels],
            upper: alloc::vec![upper; channels],
        }
    }

    fn validate(&self, channels: usize, what: &'static str) -> Result<()> {
        ensure_dim(what, channels, self.lower.len())?;
        ensure_dim(what, channels, self.upper.len())?;
        for c in 0..channels {
            if self.lower[c].is_nan() || self.upper[c].is_nan() || self.lower[c] > self.upper[c] {
                return Err(Error::InvalidInput(format!("{what}: invalid interval at channel {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub past_horizon: usize,
    pub future_horizon: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub z: Vector,
    pub y_ref: Vector,
    pub u_ref: Vector,
    pub q: Matrix,
    pub r: Matrix,
    pub input_box: Option<ChannelBox>,
    pub output_box: Option<ChannelBox>,
    pub options: SolveOptions,
}

impl ControlProblem {
    pub fn new(
        dims: &Dimensions,
        z: Vector,
        y_ref: Vector,
        u_ref: Vector,
        q: Matrix,
        r: Matrix,
    ) -> Result<Self> {
        let p = Self {
            past_horizon: dims.past_horizon,
            future_horizon: dims.future_horizon,
            n_u: dims.n_u,
            n_y: dims.n_y,
            z,
            y_ref,
            u_ref,
            q,
            r,
            input_box: None,
            output_box: None,
            options: SolveOptions::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Constant setpoint `y_ref`, zero input reference, `Q = q I`, `R = r I`.
    pub fn setpoint(dims: &Dimensions, z: Vector, y_ref: f64, q: f64, r: f64) -> Result<Self> {
        let (ny, nu) = (dims.n_future_y(), dims.n_future_u());
        Self::new(
            dims,
            z,
            Vector::from_element(ny, y_ref),
            Vector::zeros(nu),
            Matrix::identity(ny, ny) * q,
            Matrix::identity(nu, nu) * r,
        )
    }

    pub fn with_input_box(mut self, b: ChannelBox) -> Result<Self> {
        b.validate(self.n_u, "input box")?;
        self.input_box = Some(b);
        Ok(self)
    }

    pub fn with_output_box(mut self, b: ChannelBox) -> Result<Self> {
        b.validate(self.n_y, "output box")?;
        self.output_box = Some(b);
        Ok(self)
    }

    pub fn with_options(mut self, options: SolveOptions) -> Self {
        self.options = options;
        self
    }

    pub fn unconstrained(&self) -> Self {
        let mut p = self.clone();
        p.input_box = None;
        p.output_box = None;
        p
    }

    pub fn n_z(&self) -> usize {
        self.past_horizon * (self.n_u + self.n_y)
    }

    pub fn n_future_u(&self) -> usize {
        self.future_horizon * self.n_u
    }

    pub fn n_future_y(&self) -> usize {
        self.future_horizon * self.n_y
    }

    pub fn validate(&self) -> Result<()> {
        ensure_dim("past window", self.n_z(), self.z.len())?;
        ensure_dim("output reference", self.n_future_y(), self.y_ref.len())?;
        ensure_dim("input reference", self.n_future_u(), self.u_ref.len())?;
        ensure_dim("Q rows", self.n_future_y(), self.q.nrows())?;
        ensure_dim("Q cols", self.n_future_y(), self.q.ncols())?;
        ensure_dim("R rows", self.n_future_u(), self.r.nrows())?;
        ensure_dim("R cols", self.n_future_u(), self.r.ncols())?;
        numkit::ensure_finite_vec("past window", &self.z)?;
        numkit::ensure_finite_vec("output reference", &self.y_ref)?;
        numkit::ensure_finite_vec("input reference", &self.u_ref)?;
        for (name, w) in [("Q", &self.q), ("R", &self.r)] {
            numkit::ensure_finite(name, w)?;
            if !numkit::is_symmetric(w, 1e-12) || Cholesky::new(w.clone()).is_none() {
                return Err(Error::InvalidInput(format!("{name} must be symmetric positive definite")));
            }
        }
        if let Some(b) = &self.input_box {
            b.validate(self.n_u, "input box")?;
        }
        if let Some(b) = &self.output_box {
            b.validate(self.n_y, "output box")?;
        }
        Ok(())
    }

    fn check_dims(&self, dims: &Dimensions) -> Result<()> {
        ensure_dim("past horizon", dims.past_horizon, self.past_horizon)?;
        ensure_dim("future horizon", dims.future_horizon, self.future_horizon)?;
        ensure_dim("input channels", dims.n_u, self.n_u)?;
        ensure_dim("output channels", dims.n_y, self.n_y)
    }

    /// `J(u, y) = |y - y_ref|_Q^2 + |u - u_ref|_R^2`.
    pub fn tracking_cost(&self, u: &Vector, y: &Vector) -> f64 {
        let ey = y - &self.y_ref;
        let eu = u - &self.u_ref;
        ey.dot(&(&self.q * &ey)) + eu.dot(&(&self.r * &eu))
    }

    pub fn input_violation(&self, u: &Vector) -> f64 {
        let Some(b) = &self.input_box else { return 0.0 };
        (0..u.len()).fold(0.0_f64, |acc, i| {
            let c = i % self.n_u;
            acc.max(b.lower[c] - u[i]).max(u[i] - b.upper[c])
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer {
    /// `h(g) = |g|^2`.
    L2,
    /// `h(g) = |(I - Pi_Phi) g|^2`.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerSpec {
    Spc,
    CausalSpc,
    Deepc { regularizer: Regularizer, beta: f64 },
    GammaDdpc { beta2: f64, beta3: f64 },
    Indirect { lambda1: f64, lambda2: f64, causal: bool },
    Oracle,
}

impl ControllerSpec {
    pub fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            ControllerSpec::Deepc { beta, .. } => &[*beta],
            ControllerSpec::GammaDdpc { beta2, beta3 } => &[*beta2, *beta3],
            ControllerSpec::Indirect { lambda1, lambda2, .. } => &[*lambda1, *lambda2],
            _ => &[],
        };
        if params.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput("hyper-parameters must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Internal {
    None,
    G(Vector),
    Gamma { g1: Vector, g2: Vector, g3: Vector },
}

#[derive(Debug, Clone, Copy)]
pub struct QpSummary {
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub variables: usize,
    pub reduced_dim: usize,
}

impl QpSummary {
    fn from_qp(s: &QpSolution, variables: usize) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            variables,
            reduced_dim: s.reduced_dim,
        }
    }

    fn direct(variables: usize) -> Self {
        Self {
            status: QpStatus::Optimal,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            variables,
            reduced_dim: variables,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Vector,
    pub y_hat: Vector,
    pub slack: Vector,
    pub internal: Internal,
    /// Full objective of the formulation that was solved, constants included.
    pub objective: f64,
    pub qp: QpSummary,
}

/// Decision vector layout: named contiguous blocks.
struct Lifted {
    h: Matrix,
    f: Vector,
    eq_a: Vec<Matrix>,
    eq_b: Vec<Vector>,
    lower: Vector,
    upper: Vector,
}

impl Lifted {
    fn new(n: usize) -> Self {
        Self {
            h: Matrix::zeros(n, n),
            f: Vector::zeros(n),
            eq_a: Vec::new(),
            eq_b: Vec::new(),
            lower: Vector::from_element(n, f64::NEG_INFINITY),
            upper: Vector::from_element(n, f64::INFINITY),
        }
    }

    fn n(&self) -> usize {
        self.f.len()
    }

    fn add_hessian(&mut self, off: usize, block: &Matrix) {
        let mut v = self.h.view_mut((off, off), (block.nrows(), block.ncols()));
        v += block;
    }

    fn add_linear(&mut self, off: usize, g: &Vector) {
        let mut v = self.f.rows_mut(off, g.len());
        v += g;
    }

    fn add_tracking(&mut self, p: &ControlProblem, u_off: usize, y_off: usize) {
        self.add_hessian(u_off, &(&p.r * 2.0));
        self.add_hessian(y_off, &(&p.q * 2.0));
        self.add_linear(u_off, &(&p.r * &p.u_ref * -2.0));
        self.add_linear(y_off, &(&p.q * &p.y_ref * -2.0));
    }

    fn add_boxes(&mut self, p: &ControlProblem, u_off: usize, y_off: usize) {
        if let Some(b) = &p.input_box {
            for i in 0..p.n_future_u() {
                self.lower[u_off + i] = b.lower[i % p.n_u];
                self.upper[u_off + i] = b.upper[i % p.n_u];
            }
        }
        if let Some(b) = &p.output_box {
            for i in 0..p.n_future_y() {
                self.lower[y_off + i] = b.lower[i % p.n_y];
                self.upper[y_off + i] = b.upper[i % p.n_y];
            }
        }
    }

    /// Appends rows `sum_k A_k x[off_k..] = b`.
    fn add_equality(&mut self, terms: &[(usize, &Matrix)], b: Vector) {
        let mut a = Matrix::zeros(b.len(), self.n());
        for (off, m) in terms {
            let mut v = a.view_mut((0, *off), (m.nrows(), m.ncols()));
            v += *m;
        }
        self.eq_a.push(a);
        self.eq_b.push(b);
    }

    fn solve(self, opts: &SolveOptions, what: &str) -> Result<QpSolution> {
        let n = self.n();
        let a_refs: Vec<&Matrix> = self.eq_a.iter().collect();
        let a = if a_refs.is_empty() { Matrix::zeros(0, n) } else { numkit::vstack(&a_refs)? };
        let mut b = Vector::zeros(a.nrows());
        let mut row = 0;
        for part in &self.eq_b {
            b.rows_mut(row, part.len()).copy_from(part);
            row += part.len();
        }
        let prog = QuadProgram::new(numkit::symmetrize(&self.h), self.f)?
            .with_equalities(a, b)?
            .with_bounds(self.lower, self.upper)?;
        let s = solve_qp(&prog, opts.tol, opts.max_iter)?;
        if s.status == QpStatus::Infeasible {
            return Err(Error::Infeasible(format!("{what}: the constraints admit no solution")));
        }
        Ok(s)
    }
}

fn segment(x: &Vector, off: usize, len: usize) -> Vector {
    x.rows(off, len).into_owned()
}

/// SPC (or C-SPC when the model is causal): `y_hat = Theta phi(z, u)`.
pub fn solve_spc(problem: &ControlProblem, model: &PredictorModel) -> Result<Solution> {
    problem.validate()?;
    problem.check_dims(&model.dims)?;
    let (nu, ny) = (problem.n_future_u(), problem.n_future_y());
    let mut lp = Lifted::new(nu + ny);
    lp.add_tracking(problem, 0, nu);
    lp.add_boxes(problem, 0, nu);
    lp.add_equality(
        &[(0, &-model.theta_u()), (nu, &Matrix::identity(ny, ny))],
        model.theta_z() * &problem.z,
    );
    let s = lp.solve(&problem.options, "SPC")?;
    let u = segment(&s.x, 0, nu);
    let y_hat = segment(&s.x, nu, ny);
    Ok(Solution {
        objective: problem.tracking_cost(&u, &y_hat),
        u,
        y_hat,
        slack: Vector::zeros(ny),
        internal: Internal::None,
        qp: QpSummary::from_qp(&s, nu + ny),
    })
}

/// DeePC over `g`: `Z g = z`, `U g = u`, `Y g = y_hat`, cost `J + beta h(g)`.
pub fn solve_deepc(
    problem: &ControlProblem,
    bundle: &RegressorBundle,
    regularizer: Regularizer,
    beta: f64,
) -> Result<Solution> {
    problem.validate()?;
    problem.check_dims(&bundle.dims)?;
    ControllerSpec::Deepc { regularizer, beta }.validate()?;
    let n = bundle.columns();
    let (nu, ny) = (problem.n_future_u(), problem.n_future_y());
    let (u_off, y_off) = (n, n + nu);

    let f = numkit::svd(&bundle.phi, default_rank_tol(bundle.phi.nrows(), n))?;
    let v = f.right_range(f.numerical_rank);
    let null_proj = Matrix::identity(n, n) - &v * v.transpose();

    let z_feasible = {
        let zf = numkit::svd(&bundle.z, default_rank_tol(bundle.z.nrows(), n))?;
        let basis = zf.left_range(zf.numerical_rank);
        let res = (&problem.z - &basis * basis.tr_mul(&problem.z)).norm();
        res <= 1e-8 * (1.0 + problem.z.norm())
    };
    if !z_feasible {
        return Err(Error::Infeasible(
            "DeePC: the past window is not in the range of the Z data rows (Phi lacks full row rank)".into(),
        ));
    }

    let mut lp = Lifted::new(n + nu + ny);
    let reg = match regularizer {
        Regularizer::L2 => Matrix::identity(n, n),
        Regularizer::Projection => null_proj.clone(),
    };
    lp.add_hessian(0, &(reg * (2.0 * beta)));
    lp.add_tracking(problem, u_off, y_off);
    lp.add_boxes(problem, u_off, y_off);
    lp.add_equality(&[(0, &bundle.z)], problem.z.clone());
    lp.add_equality(&[(0, &bundle.u), (u_off, &-Matrix::identity(nu, nu))], Vector::zeros(nu));
    lp.add_equality(&[(0, &bundle.y), (y_off, &-Matrix::identity(ny, ny))], Vector::zeros(ny));
    let s = lp.solve(&problem.options, "DeePC")?;

    let g = segment(&s.x, 0, n);
    let u = segment(&s.x, u_off, nu);
    let y_hat = segment(&s.x, y_off, ny);
    let slack = &bundle.y * (&null_proj * &g);
    let h = match regularizer {
        Regularizer::L2 => g.norm_squared(),
        Regularizer::Projection => (&null_proj * &g).norm_squared(),
    };
    Ok(Solution {
        objective: problem.tracking_cost(&u, &y_hat) + beta * h,
        u,
        y_hat,
        slack,
        internal: Internal::G(g),
        qp: QpSummary::from_qp(&s, n + nu + ny),
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GammaOptions {
    /// Keep `gamma1` as a decision variable (fixed by `L11 gamma1 = z`) and
    /// add `beta2 |gamma1|^2` to the cost.
    pub penalize_gamma1: bool,
}

pub fn solve_gddpc(problem: &ControlProblem, lq: &LqBlocks, beta2: f64, beta3: f64) -> Result<Solution> {
    solve_gddpc_with(problem, lq, beta2, beta3, GammaOptions::default())
}

/// gamma-DDPC: `[u; y_hat] = [[L21 L22 0]; [L31 L32 L33]] [L11^-1 z; g2; g3]`
/// with cost `J + beta2 |g2|^2 + beta3 |g3|^2`.
pub fn solve_gddpc_with(
    problem: &ControlProblem,
    lq: &LqBlocks,
    beta2: f64,
    beta3: f64,
    opts: GammaOptions,
) -> Result<Solution> {
    problem.validate()?;
    ControllerSpec::GammaDdpc { beta2, beta3 }.validate()?;
    let (nz, nu, ny) = (problem.n_z(), problem.n_future_u(), problem.n_future_y());
    ensure_dim("LQ Z block", nz, lq.sizes[0])?;
    ensure_dim("LQ U block", nu, lq.sizes[1])?;
    ensure_dim("LQ Y block", ny, lq.sizes[2])?;
    if lq.degenerate {
        return Err(Error::Precondition(
            "gamma-DDPC needs Sigma_delta and Sigma_phi positive definite (nonsingular L blocks)".into(),
        ));
    }
    let l11 = lq.l11();
    let gamma1 = l11
        .solve_lower_triangular(&problem.z)
        .ok_or_else(|| Error::Precondition("L11 is singular".into()))?;
    let (l21, l22, l31, l32, l33) = (lq.l21(), lq.l22(), lq.l31(), lq.l32(), lq.l33());

    let g1_len = if opts.penalize_gamma1 { nz } else { 0 };
    let (o1, o2) = (0, g1_len);
    let o3 = o2 + nu;
    let u_off = o3 + ny;
    let y_off = u_off + nu;
    let mut lp = Lifted::new(y_off + ny);
    lp.add_hessian(o2, &(Matrix::identity(nu, nu) * (2.0 * beta2)));
    lp.add_hessian(o3, &(Matrix::identity(ny, ny) * (2.0 * beta3)));
    lp.add_tracking(problem, u_off, y_off);
    lp.add_boxes(problem, u_off, y_off);
    let eye_u = Matrix::identity(nu, nu);
    let eye_y = Matrix::identity(ny, ny);
    if opts.penalize_gamma1 {
        lp.add_hessian(o1, &(Matrix::identity(nz, nz) * (2.0 * beta2)));
        lp.add_equality(&[(o1, &l11)], problem.z.clone());
        lp.add_equality(&[(o1, &-&l21), (o2, &-&l22), (u_off, &eye_u)], Vector::zeros(nu));
        lp.add_equality(
            &[(o1, &-&l31), (o2, &-&l32), (o3, &-&l33), (y_off, &eye_y)],
            Vector::zeros(ny),
        );
    } else {
        lp.add_equality(&[(o2, &-&l22), (u_off, &eye_u)], &l21 * &gamma1);
        lp.add_equality(&[(o2, &-&l32), (o3, &-&l33), (y_off, &eye_y)], &l31 * &gamma1);
    }
    let s = lp.solve(&problem.options, "gamma-DDPC")?;
    let g1 = if opts.penalize_gamma1 { segment(&s.x, o1, nz) } else { gamma1 };
    let g2 = segment(&s.x, o2, nu);
    let g3 = segment(&s.x, o3, ny);
    let u = segment(&s.x, u_off, nu);
    let y_hat = segment(&s.x, y_off, ny);
    let mut objective =
        problem.tracking_cost(&u, &y_hat) + beta2 * g2.norm_squared() + beta3 * g3.norm_squared();
    if opts.penalize_gamma1 {
        objective += beta2 * g1.norm_squared();
    }
    Ok(Solution {
        objective,
        slack: &l33 * &g3,
        u,
        y_hat,
        internal: Internal::Gamma { g1, g2, g3 },
        qp: QpSummary::from_qp(&s, y_off + ny),
    })
}

/// Indirect slack formulation with cost
/// `J + (l1/N) |phi|^2_{Sigma_phi^+} + (l2/N) |dy|^2_{Sigma_delta^+}`,
/// `y_hat = Theta phi + dy`, `dy in range(Sigma_delta)` and (unless relaxed)
/// `phi in range(Sigma_phi)`.
pub fn solve_indirect(
    problem: &ControlProblem,
    model: &PredictorModel,
    lambda1: f64,
    lambda2: f64,
) -> Result<Solution> {
    problem.validate()?;
    problem.check_dims(&model.dims)?;
    ControllerSpec::Indirect { lambda1, lambda2, causal: model.causal }.validate()?;
    let (nz, nu, ny) = (problem.n_z(), problem.n_future_u(), problem.n_future_y());
    let nf = model.columns as f64;
    let k = model.rank_delta();
    let (u_off, nu_off, y_off) = (0, nu, nu + k);
    let mut lp = Lifted::new(nu + k + ny);
    lp.add_tracking(problem, u_off, y_off);
    lp.add_boxes(problem, u_off, y_off);
    lp.add_hessian(nu_off, &(Matrix::identity(k, k) * (2.0 * lambda2 / nf)));

    let basis = &model.phi_range_basis;
    let r_phi = basis.ncols();
    if lambda1 > 0.0 && r_phi > 0 {
        // |diag(w)^{-1/2} V^T phi|^2 with phi = [z; u].
        let mut g = basis.rows(nz, nu).transpose();
        let mut c = basis.rows(0, nz).tr_mul(&problem.z);
        for j in 0..r_phi {
            let s = 1.0 / libm::sqrt(model.phi_weights[j]);
            g.row_mut(j).scale_mut(s);
            c[j] *= s;
        }
        let w = 2.0 * lambda1 / nf;
        lp.add_hessian(u_off, &(g.tr_mul(&g) * w));
        lp.add_linear(u_off, &(g.tr_mul(&c) * w));
    }
    if !problem.options.relax_phi_range && r_phi < nz + nu {
        let comp = numkit::orthonormal_complement(basis);
        let cz = comp.rows(0, nz).tr_mul(&problem.z);
        lp.add_equality(&[(u_off, &comp.rows(nz, nu).transpose())], -cz);
    }

    let mut b_scaled = model.delta_range_basis.clone();
    for j in 0..k {
        b_scaled.column_mut(j).scale_mut(libm::sqrt(model.delta_weights[j]));
    }
    lp.add_equality(
        &[(u_off, &-model.theta_u()), (nu_off, &-&b_scaled), (y_off, &Matrix::identity(ny, ny))],
        model.theta_z() * &problem.z,
    );
    let s = lp.solve(&problem.options, "indirect").map_err(|e| match e {
        Error::Infeasible(_) if !problem.options.relax_phi_range => Error::Infeasible(
            "indirect: no future input puts phi in range(Sigma_phi); set relax_phi_range to project instead".into(),
        ),
        other => other,
    })?;
    let u = segment(&s.x, u_off, nu);
    let nu_v = segment(&s.x, nu_off, k);
    let y_hat = segment(&s.x, y_off, ny);
    let slack = &b_scaled * &nu_v;
    let phi = crate::sysdata::build_regressor(&model.dims, &problem.z, &u)?;
    let objective = problem.tracking_cost(&u, &y_hat)
        + lambda1 / nf * model.phi_penalty(&phi)
        + lambda2 / nf * nu_v.norm_squared();
    Ok(Solution {
        u,
        y_hat,
        slack,
        internal: Internal::None,
        objective,
        qp: QpSummary::from_qp(&s, nu + k + ny),
    })
}

/// `Q - Q (Q + (l2/N) Sigma_delta^-1)^-1 Q`.
pub fn reduced_tracking_weight(q: &Matrix, sigma_delta: &Matrix, lambda2: f64, columns: usize) -> Result<Matrix> {
    ensure_dim("Sigma_delta", q.nrows(), sigma_delta.nrows())?;
    if lambda2 == 0.0 {
        return Ok(Matrix::zeros(q.nrows(), q.ncols()));
    }
    let inner = q + spd_inverse(sigma_delta, "Sigma_delta")? * (lambda2 / columns as f64);
    let solved = spd_solve(&inner, q, "Q + (l2/N) Sigma_delta^-1")?;
    Ok(numkit::symmetrize(&(q - q * solved)))
}

fn spd_inverse(m: &Matrix, what: &str) -> Result<Matrix> {
    Cholesky::new(m.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Precondition(format!("{what} is not positive definite")))
}

fn spd_solve(m: &Matrix, rhs: &Matrix, what: &str) -> Result<Matrix> {
    Cholesky::new(m.clone())
        .map(|c| c.solve(rhs))
        .ok_or_else(|| Error::Precondition(format!("{what} is not positive definite")))
}

/// Unconstrained optimum of the indirect formulation through the reduced
/// tracking weight, by one dense solve.
pub fn solve_unconstrained_closed_form(
    problem: &ControlProblem,
    model: &PredictorModel,
    lambda1: f64,
    lambda2: f64,
) -> Result<Solution> {
    problem.validate()?;
    problem.check_dims(&model.dims)?;
    ControllerSpec::Indirect { lambda1, lambda2, causal: model.causal }.validate()?;
    let (nz, nu) = (problem.n_z(), problem.n_future_u());
    let nf = model.columns as f64;
    let sigma_phi_inv = spd_inverse(&model.sigma_phi, "Sigma_phi")?;
    if lambda2 > 0.0 {
        spd_inverse(&model.sigma_delta, "Sigma_delta")?;
    }
    let q_tilde = reduced_tracking_weight(&problem.q, &model.sigma_delta, lambda2, model.columns)?;
    let (tz, tu) = (model.theta_z(), model.theta_u());
    let s_uu = sigma_phi_inv.view((nz, nz), (nu, nu)).into_owned();
    let s_uz = sigma_phi_inv.view((nz, 0), (nu, nz)).into_owned();
    let w = lambda1 / nf;

    let free = &problem.y_ref - &tz * &problem.z;
    let lhs = tu.transpose() * &q_tilde * &tu + &problem.r + &s_uu * w;
    let rhs = tu.transpose() * (&q_tilde * &free) + &problem.r * &problem.u_ref - (&s_uz * &problem.z) * w;
    let lhs = numkit::symmetrize(&lhs);
    let u = Cholesky::new(lhs.clone())
        .map(|c| c.solve(&rhs))
        .or_else(|| lhs.lu().solve(&rhs))
        .ok_or_else(|| Error::Precondition("reduced normal equations are singular".into()))?;

    let phi = crate::sysdata::build_regressor(&model.dims, &problem.z, &u)?;
    let pred = &model.theta * &phi;
    let err = &problem.y_ref - &pred;
    let slack = if lambda2 == 0.0 {
        err
    } else {
        let inner = &problem.q + spd_inverse(&model.sigma_delta, "Sigma_delta")? * (lambda2 / nf);
        spd_solve(&inner, &Matrix::from_column_slice(err.len(), 1, (&problem.q * err).as_slice()), "Q + (l2/N) Sigma_delta^-1")?
            .column(0)
            .into_owned()
    };
    let y_hat = &pred + &slack;
    let slack_pen = if lambda2 == 0.0 { 0.0 } else { model.slack_penalty(&slack) };
    let objective = problem.tracking_cost(&u, &y_hat) + w * phi.dot(&(&sigma_phi_inv * &phi)) + lambda2 / nf * slack_pen;
    Ok(Solution {
        u,
        y_hat,
        slack,
        internal: Internal::None,
        objective,
        qp: QpSummary::direct(nu),
    })
}

/// Model-based MPC with the exact plant recursion started from the true past.
pub fn solve_oracle(problem: &ControlProblem, plant: &ArxPlant, true_past: &PastWindow) -> Result<Solution> {
    problem.validate()?;
    ensure_dim("plant inputs", problem.n_u, plant.n_u())?;
    ensure_dim("plant outputs", problem.n_y, plant.n_y())?;
    let (nu, ny) = (problem.n_future_u(), problem.n_future_y());
    let (offset, gain) = plant.prediction_affine(true_past, problem.future_horizon)?;
    let mut lp = Lifted::new(nu + ny);
    lp.add_tracking(problem, 0, nu);
    lp.add_boxes(problem, 0, nu);
    lp.add_equality(&[(0, &-gain), (nu, &Matrix::identity(ny, ny))], offset);
    let s = lp.solve(&problem.options, "oracle")?;
    let u = segment(&s.x, 0, nu);
    let y_hat = segment(&s.x, nu, ny);
    Ok(Solution {
        objective: problem.tracking_cost(&u, &y_hat),
        u,
        y_hat,
        slack: Vector::zeros(ny),
        internal: Internal::None,
        qp: QpSummary::from_qp(&s, nu + ny),
    })
}
