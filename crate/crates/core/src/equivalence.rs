//! Numerical certification of the direct/indirect equivalences, the
//! closed-form unconstrained solution and the LQ identities.
//!
//! Only `(u, y_hat, objective)` are compared: the internal `g` or `gamma`
//! of a direct method is not unique.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::controllers::{
    reduced_tracking_weight, solve_deepc, solve_gddpc, solve_gddpc_with, solve_indirect,
    solve_unconstrained_closed_form, ChannelBox, ControlProblem, GammaOptions, Regularizer, Solution,
};
use crate::error::{Error, Result};
use crate::estimation::{check_slack_rank, fit_least_squares, PredictorModel};
use crate::numkit::{self, lq_decompose, Matrix, Vector};
use crate::rng::{derive_seed, stream, STREAM_INSTANCE};
use crate::sysdata::{build_bundle, generate_training, simulate, ArxPlant, Dimensions, PastWindow, RegressorBundle};

/// Data-length regime relative to `n_phi` and `n_phi + n_y T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `N = n_phi`: exact fit, no slack.
    Square,
    /// `n_phi < N < n_phi + n_y T`: rank-deficient `Sigma_delta`.
    Partial,
    /// `N > n_phi + n_y T`.
    Full,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Square, Regime::Partial, Regime::Full];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Square => "square",
            Regime::Partial => "partial",
            Regime::Full => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceDescriptor {
    pub id: usize,
    pub seed: u64,
    pub past_horizon: usize,
    pub future_horizon: usize,
    pub columns: usize,
    pub regime: Regime,
    pub noise_std: f64,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub descriptor: InstanceDescriptor,
    pub bundle: RegressorBundle,
    pub problem: ControlProblem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Skipped => "skipped",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub check: &'static str,
    pub descriptor: Option<InstanceDescriptor>,
    /// Hyper-parameters as `(name, value)` pairs.
    pub params: Vec<(&'static str, f64)>,
    pub max_u_gap: f64,
    pub max_yhat_gap: f64,
    pub objective_gap: f64,
    pub full_slack_rank: bool,
    pub verdict: Verdict,
    /// Absolute tolerance applied to the `u` and `y_hat` gaps.
    pub tolerance: f64,
    pub objective_tolerance: f64,
    /// Check-specific diagnostics.
    pub extra: Vec<(&'static str, f64)>,
    pub note: String,
}

impl EquivalenceReport {
    fn new(check: &'static str, params: Vec<(&'static str, f64)>) -> Self {
        Self {
            check,
            descriptor: None,
            params,
            max_u_gap: 0.0,
            max_yhat_gap: 0.0,
            objective_gap: 0.0,
            full_slack_rank: false,
            verdict: Verdict::Skipped,
            tolerance: 0.0,
            objective_tolerance: 0.0,
            extra: Vec::new(),
            note: String::new(),
        }
    }

    fn skipped(mut self, why: String) -> Self {
        self.verdict = Verdict::Skipped;
        self.note = why;
        self
    }

    /// Fills the gaps between two solutions and decides the verdict.
    fn compare(mut self, a: &Solution, b: &Solution, objective_offset: f64, tol: &Tolerances) -> Self {
        self.max_u_gap = (&a.u - &b.u).amax();
        self.max_yhat_gap = (&a.y_hat - &b.y_hat).amax();
        self.objective_gap = (a.objective + objective_offset - b.objective).abs();
        let scale = 1.0 + a.u.amax().max(b.u.amax());
        self.tolerance = tol.variables * if tol.relative { scale } else { 1.0 };
        self.objective_tolerance = tol.objective * (1.0 + b.objective.abs());
        let within = self.max_u_gap <= self.tolerance
            && self.max_yhat_gap <= self.tolerance
            && self.objective_gap <= self.objective_tolerance;
        self.verdict = if within { Verdict::Pass } else { Verdict::Fail };
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub variables: f64,
    /// Scale `variables` by `1 + |u|_inf`.
    pub relative: bool,
    pub objective: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            variables: 1e-5,
            relative: true,
            objective: 1e-7,
        }
    }
}

fn skip_or_fail(report: EquivalenceReport, e: Error) -> Result<EquivalenceReport> {
    match e {
        Error::Infeasible(why) | Error::Precondition(why) => Ok(report.skipped(why)),
        other => Err(other),
    }
}

/// Direct DeePC against the indirect formulation with the matching
/// hyper-parameter map (`l1 = l2 = beta` for L2, `l1 = 0, l2 = beta` for
/// the projection regularizer).
pub fn check_deepc_equivalence(
    bundle: &RegressorBundle,
    problem: &ControlProblem,
    beta: f64,
    regularizer: Regularizer,
) -> Result<EquivalenceReport> {
    check_deepc_equivalence_with(bundle, problem, beta, regularizer, &Tolerances::default())
}

pub fn check_deepc_equivalence_with(
    bundle: &RegressorBundle,
    problem: &ControlProblem,
    beta: f64,
    regularizer: Regularizer,
    tol: &Tolerances,
) -> Result<EquivalenceReport> {
    let (name, lambda1) = match regularizer {
        Regularizer::L2 => ("deepc_l2", beta),
        Regularizer::Projection => ("deepc_proj", 0.0),
    };
    let mut report = EquivalenceReport::new(name, alloc::vec![("beta", beta), ("lambda1", lambda1), ("lambda2", beta)]);
    let model = fit_least_squares(bundle)?;
    report.full_slack_rank = check_slack_rank(&model).holds;
    report.extra.push(("rank_delta", model.rank_delta() as f64));
    let direct = match solve_deepc(problem, bundle, regularizer, beta) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(report, e),
    };
    let indirect = solve_indirect(problem, &model, lambda1, beta)?;
    Ok(report.compare(&direct, &indirect, 0.0, tol))
}

/// gamma-DDPC against the indirect formulation with `l1 = beta2`,
/// `l2 = beta3`. The gamma objective omits the constant `beta2 |gamma1|^2`.
pub fn check_gamma_equivalence(
    bundle: &RegressorBundle,
    problem: &ControlProblem,
    beta2: f64,
    beta3: f64,
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::new("gamma_ddpc", alloc::vec![("beta2", beta2), ("beta3", beta3)]);
    let model = fit_least_squares(bundle)?;
    let lq = lq_decompose(&bundle.z, &bundle.u, &bundle.y)?;
    report.full_slack_rank = check_slack_rank(&model).holds && !lq.degenerate;
    if !report.full_slack_rank {
        return Ok(report.skipped("Sigma_delta or Sigma_phi is rank deficient".into()));
    }
    let gamma = match solve_gddpc(problem, &lq, beta2, beta3) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(report, e),
    };
    let indirect = solve_indirect(problem, &model, beta2, beta3)?;
    let offset = match &gamma.internal {
        crate::controllers::Internal::Gamma { g1, .. } => beta2 * g1.norm_squared(),
        _ => 0.0,
    };
    report.extra.push(("variables", gamma.qp.reduced_dim as f64));
    Ok(report.compare(&gamma, &indirect, offset, &Tolerances::default()))
}

/// gamma-DDPC with and without `beta2 |gamma1|^2` in the cost.
pub fn check_gamma1_invariance(
    bundle: &RegressorBundle,
    problem: &ControlProblem,
    beta2: f64,
    beta3: f64,
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::new("gamma1_penalty", alloc::vec![("beta2", beta2), ("beta3", beta3)]);
    let lq = lq_decompose(&bundle.z, &bundle.u, &bundle.y)?;
    report.full_slack_rank = !lq.degenerate;
    let plain = match solve_gddpc(problem, &lq, beta2, beta3) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(report, e),
    };
    let penalized = solve_gddpc_with(problem, &lq, beta2, beta3, GammaOptions { penalize_gamma1: true })?;
    let offset = match &plain.internal {
        crate::controllers::Internal::Gamma { g1, .. } => beta2 * g1.norm_squared(),
        _ => 0.0,
    };
    Ok(report.compare(&plain, &penalized, offset, &Tolerances::default()))
}

/// gamma-DDPC with `beta2 = 0` against DeePC with the projection regularizer.
pub fn check_gamma_vs_projection(
    bundle: &RegressorBundle,
    problem: &ControlProblem,
    beta: f64,
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::new("gamma_vs_proj", alloc::vec![("beta", beta)]);
    let lq = lq_decompose(&bundle.z, &bundle.u, &bundle.y)?;
    report.full_slack_rank = !lq.degenerate;
    let gamma = match solve_gddpc(problem, &lq, 0.0, beta) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(report, e),
    };
    let direct = match solve_deepc(problem, bundle, Regularizer::Projection, beta) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(report, e),
    };
    Ok(report.compare(&gamma, &direct, 0.0, &Tolerances::default()))
}

/// Closed-form reduced-weight solution against the unconstrained indirect
/// QP; also checks `Q_tilde <= Q`.
pub fn check_closed_form(
    model: &PredictorModel,
    problem: &ControlProblem,
    lambda1: f64,
    lambda2: f64,
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport::new("closed_form", alloc::vec![("lambda1", lambda1), ("lambda2", lambda2)]);
    report.full_slack_rank = check_slack_rank(model).holds;
    let free = problem.unconstrained();
    let closed = match solve_unconstrained_closed_form(&free, model, lambda1, lambda2) {
        Ok(s) => s,
        Err(e) => return skip_or_fail(report, e),
    };
    let qp = solve_indirect(&free, model, lambda1, lambda2)?;
    let q_tilde = reduced_tracking_weight(&free.q, &model.sigma_delta, lambda2, model.columns)?;
    let min_eig = numkit::min_eigenvalue(&(&free.q - &q_tilde));
    report.extra.push(("min_eig_q_minus_qtilde", min_eig));
    let tol = Tolerances {
        variables: 1e-6,
        relative: false,
        objective: 1e-7,
    };
    let mut report = report.compare(&closed, &qp, 0.0, &tol);
    if min_eig < -1e-9 {
        report.verdict = Verdict::Fail;
        report.note = format!("Q - Q_tilde has eigenvalue {min_eig:e}");
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// `|L33 L33^T - N Sigma_delta| / |N Sigma_delta|` (Frobenius).
    pub delta_identity: f64,
    /// `|M1 M1^T - N Sigma_phi| / |N Sigma_phi|`.
    pub phi_identity: f64,
    /// Largest relative pseudo-inverse Gram identity error over pairs with `x` in `range(M)`.
    pub pinv_gram_max: f64,
    /// Same quantity for `x` with a component orthogonal to `range(M)`.
    pub pinv_gram_outside_range: f64,
    pub verdict: Verdict,
}

/// `|M^+ x|^2` and `x^T (M M^T)^+ x`.
pub fn pinv_gram_sides(m: &Matrix, x: &Vector) -> Result<(f64, f64)> {
    let lhs = (numkit::pinv_default(m)? * x).norm_squared();
    let gram = numkit::symmetrize(&(m * m.transpose()));
    let rhs = x.dot(&(numkit::pinv_default(&gram)? * x));
    Ok((lhs, rhs))
}

fn relative_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// LQ identities on `bundle` plus the pseudo-inverse Gram identity on `pairs` random matrices.
pub fn check_identities(bundle: &RegressorBundle, pairs: usize, seed: u64) -> Result<IdentityReport> {
    let rows = bundle.z.nrows() + bundle.u.nrows() + bundle.y.nrows();
    if bundle.columns() < rows {
        return Err(Error::Precondition(format!(
            "identities need N >= {rows} columns, got {}",
            bundle.columns()
        )));
    }
    let model = fit_least_squares(bundle)?;
    let lq = lq_decompose(&bundle.z, &bundle.u, &bundle.y)?;
    let nf = bundle.columns() as f64;
    let l33 = lq.l33();
    let m1 = lq.m1();
    let delta_identity = relative_frobenius(&(&l33 * l33.transpose()), &(&model.sigma_delta * nf));
    let phi_identity = relative_frobenius(&(&m1 * m1.transpose()), &(&bundle.phi * bundle.phi.transpose()));

    let mut rng = stream(seed, STREAM_INSTANCE);
    let mut pinv_gram_max = 0.0_f64;
    let mut outside = 0.0_f64;
    for _ in 0..pairs {
        let (m, v) = random_low_rank(&mut rng);
        let x = &m * &v;
        let (l, r) = pinv_gram_sides(&m, &x)?;
        pinv_gram_max = pinv_gram_max.max((l - r).abs() / l.abs().max(1e-300));

        let f = numkit::svd(&m, numkit::default_rank_tol(m.nrows(), m.ncols()))?;
        let comp = numkit::orthonormal_complement(&f.left_range(f.numerical_rank));
        if comp.ncols() > 0 {
            let w = comp.column(0) * 3.0;
            let (l, r) = pinv_gram_sides(&m, &(&x + w))?;
            outside = outside.max((l - r).abs() / l.abs().max(1e-300));
        }
    }
    let verdict = if delta_identity <= 1e-8 && phi_identity <= 1e-8 && pinv_gram_max <= 1e-9 {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(IdentityReport {
        delta_identity,
        phi_identity,
        pinv_gram_max,
        pinv_gram_outside_range: outside,
        verdict,
    })
}

/// Random `m x n` matrix of rank `r <= min(m, n)` and a vector `v`.
fn random_low_rank(rng: &mut ChaCha8Rng) -> (Matrix, Vector) {
    let m = rng.random_range(2..=8usize);
    let n = rng.random_range(2..=8usize);
    let r = rng.random_range(1..=m.min(n));
    let a = Matrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
    let b = Matrix::from_fn(r, n, |_, _| rng.random_range(-1.0..1.0));
    let v = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    (a * b, v)
}

/// Random noisy single-channel instance of the given regime. The same
/// `(seed, id)` always reproduces the same instance.
pub fn random_instance(seed: u64, id: usize, regime: Regime) -> Result<Instance> {
    let local = derive_seed(seed, &[id as u64, regime as u64]);
    let mut rng = stream(local, STREAM_INSTANCE);
    let rho = rng.random_range(2..=6usize);
    let t = rng.random_range(3..=8usize);
    let n_phi = 2 * rho + t;
    let columns = match regime {
        Regime::Square => n_phi,
        Regime::Partial => rng.random_range(n_phi + 1..n_phi + t),
        Regime::Full => rng.random_range(n_phi + t + 1..=n_phi + t + 3 * n_phi),
    };
    let noise_std = 0.1;
    let plant = ArxPlant::third_order_benchmark();
    let dims = Dimensions::new(rho, t, 1, 1, columns)?;
    let record = generate_training(&plant, &dims, 0.6, (-1.0, 1.0), noise_std, local)?;
    let bundle = build_bundle(&record, &dims)?;

    let warm = rho + plant.lag();
    let inputs: Vec<f64> = (0..warm).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, measured) = simulate(&plant, &inputs, &PastWindow::zeros(plant.lag(), 1, 1), noise_std, local ^ 0x5a5a)?;
    let past = PastWindow {
        n_u: 1,
        n_y: 1,
        inputs: inputs[warm - rho..].to_vec(),
        outputs: measured[warm - rho..].to_vec(),
    };
    let z = past.to_regressor(rho)?;
    let setpoint = rng.random_range(-1.0..1.0);
    let r = rng.random_range(0.05..1.0);
    let problem = ControlProblem::setpoint(&dims, z, setpoint, 1.0, r)?.with_input_box(ChannelBox::uniform(1, -1.0, 1.0))?;
    Ok(Instance {
        descriptor: InstanceDescriptor {
            id,
            seed: local,
            past_horizon: rho,
            future_horizon: t,
            columns,
            regime,
            noise_std,
        },
        bundle,
        problem,
    })
}

fn attach(mut r: EquivalenceReport, inst: &Instance) -> EquivalenceReport {
    r.descriptor = Some(inst.descriptor);
    r
}

/// Equivalence suite: `instances` draws cycling through the three regimes,
/// each checked for every `beta`.
pub fn deepc_suite(instances: usize, seed: u64, regularizer: Regularizer, betas: &[f64]) -> Result<Vec<EquivalenceReport>> {
    let mut out = Vec::new();
    for id in 0..instances {
        let inst = random_instance(seed, id, Regime::ALL[id % 3])?;
        for &beta in betas {
            out.push(attach(check_deepc_equivalence(&inst.bundle, &inst.problem, beta, regularizer)?, &inst));
        }
    }
    Ok(out)
}

/// gamma-DDPC suite on full-regime draws: the equivalence, the gamma1
/// invariance and the `beta2 = 0` link to projection DeePC.
pub fn gamma_suite(instances: usize, seed: u64) -> Result<Vec<EquivalenceReport>> {
    let mut out = Vec::new();
    for id in 0..instances {
        let inst = random_instance(seed, id, Regime::Full)?;
        let mut rng = stream(inst.descriptor.seed, STREAM_INSTANCE + 1);
        let beta2 = if id % 5 == 0 { 0.0 } else { libm::pow(10.0, rng.random_range(-1.0..3.0)) };
        let beta3 = libm::pow(10.0, rng.random_range(-1.0..3.0));
        out.push(attach(check_gamma_equivalence(&inst.bundle, &inst.problem, beta2, beta3)?, &inst));
        out.push(attach(check_gamma1_invariance(&inst.bundle, &inst.problem, beta2.max(1.0), beta3)?, &inst));
        if id % 5 == 0 {
            out.push(attach(check_gamma_vs_projection(&inst.bundle, &inst.problem, beta3)?, &inst));
        }
    }
    Ok(out)
}

pub fn closed_form_suite(instances: usize, seed: u64) -> Result<Vec<EquivalenceReport>> {
    let mut out = Vec::new();
    for id in 0..instances {
        let inst = random_instance(seed, id, Regime::Full)?;
        let model = fit_least_squares(&inst.bundle)?;
        let mut rng = stream(inst.descriptor.seed, STREAM_INSTANCE + 2);
        let lambda1 = if id % 4 == 0 { 0.0 } else { libm::pow(10.0, rng.random_range(-1.0..2.0)) };
        let lambda2 = if id % 7 == 3 { 0.0 } else { libm::pow(10.0, rng.random_range(-1.0..3.0)) };
        out.push(attach(check_closed_form(&model, &inst.problem, lambda1, lambda2)?, &inst));
    }
    Ok(out)
}

/// Identity checks on `bundles` full-regime draws.
pub fn identities_suite(bundles: usize, seed: u64) -> Result<Vec<IdentityReport>> {
    (0..bundles)
        .map(|id| {
            let inst = random_instance(seed, id, Regime::Full)?;
            check_identities(&inst.bundle, 20, inst.descriptor.seed)
        })
        .collect()
}
