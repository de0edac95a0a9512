//! Dense convex QP solver for
//!
//! ```text
//! minimize   1/2 x^T H x + f^T x
//! subject to A_eq x = b_eq,  lower <= x <= upper
//! ```
//!
//! Equalities are eliminated first through an orthonormal null-space basis
//! `x = x0 + B v`, which turns the box into general two-sided rows
//! `l <= C v <= u`. The reduced problem is equilibrated (Ruiz) and solved
//! by ADMM with a fixed penalty and over-relaxation. Every few hundred
//! iterations the current iterate's active set is polished: the
//! equality-constrained KKT system on the guessed active rows is solved
//! directly and accepted once it satisfies primal feasibility and the
//! multiplier signs. Polishing is what gets the KKT residuals to `1e-9`.
//!
//! When the reduced Hessian is only semidefinite a `1e-10`-relative
//! Tikhonov term is added, which selects (approximately) the minimum-norm
//! optimizer.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Cholesky;

use crate::error::{ensure_dim, Error, Result};
use crate::numkit::{
    self, default_rank_tol, ensure_finite, ensure_finite_vec, inf_norm, max_abs, Matrix, Vector,
};

#[derive(Debug, Clone)]
pub struct QuadProgram {
    pub h: Matrix,
    pub f: Vector,
    pub a_eq: Matrix,
    pub b_eq: Vector,
    pub lower: Vector,
    pub upper: Vector,
}

impl QuadProgram {
    /// Unconstrained program; add constraints with the `with_*` builders.
    pub fn new(h: Matrix, f: Vector) -> Result<Self> {
        let n = f.len();
        ensure_dim("Hessian rows", n, h.nrows())?;
        ensure_dim("Hessian cols", n, h.ncols())?;
        Ok(Self {
            h,
            f,
            a_eq: Matrix::zeros(0, n),
            b_eq: Vector::zeros(0),
            lower: Vector::from_element(n, f64::NEG_INFINITY),
            upper: Vector::from_element(n, f64::INFINITY),
        })
    }

    pub fn with_equalities(mut self, a_eq: Matrix, b_eq: Vector) -> Result<Self> {
        ensure_dim("equality columns", self.dim(), a_eq.ncols())?;
        ensure_dim("equality rhs", a_eq.nrows(), b_eq.len())?;
        self.a_eq = a_eq;
        self.b_eq = b_eq;
        Ok(self)
    }

    pub fn with_bounds(mut self, lower: Vector, upper: Vector) -> Result<Self> {
        ensure_dim("lower bounds", self.dim(), lower.len())?;
        ensure_dim("upper bounds", self.dim(), upper.len())?;
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        ensure_dim("Hessian rows", n, self.h.nrows())?;
        ensure_dim("Hessian cols", n, self.h.ncols())?;
        ensure_dim("equality columns", n, self.a_eq.ncols())?;
        ensure_dim("equality rhs", self.a_eq.nrows(), self.b_eq.len())?;
        ensure_dim("lower bounds", n, self.lower.len())?;
        ensure_dim("upper bounds", n, self.upper.len())?;
        ensure_finite("Hessian", &self.h)?;
        ensure_finite_vec("linear term", &self.f)?;
        ensure_finite("equality matrix", &self.a_eq)?;
        ensure_finite_vec("equality rhs", &self.b_eq)?;
        if self.lower.iter().chain(self.upper.iter()).any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("bounds contain NaN".into()));
        }
        if let Some(i) = (0..n).find(|&i| self.lower[i] > self.upper[i]) {
            return Err(Error::InvalidInput(format!("lower > upper at index {i}")));
        }
        if !numkit::is_symmetric(&self.h, 1e-12) {
            return Err(Error::InvalidInput("Hessian is not symmetric".into()));
        }
        let scale = max_abs(&self.h);
        if scale > 0.0 {
            let shift = 1e-8 * scale * n as f64;
            let shifted = &self.h + Matrix::identity(n, n) * shift;
            if Cholesky::new(shifted).is_none() {
                return Err(Error::InvalidInput("Hessian is not positive semidefinite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

impl QpStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vector,
    pub objective: f64,
    /// Constraint violation relative to `1 + |constraint values|`.
    pub primal_residual: f64,
    /// Stationarity violation relative to `1 + |gradient terms|`.
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    /// Free dimension left after eliminating the equalities.
    pub reduced_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// ADMM penalty on the scaled problem.
    pub rho: f64,
    pub sigma: f64,
    pub relaxation: f64,
    pub check_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            check_every: 25,
        }
    }
}

pub fn solve_qp(p: &QuadProgram, tol: f64, max_iter: usize) -> Result<QpSolution> {
    solve_qp_with(
        p,
        &QpSettings {
            tol,
            max_iter,
            ..QpSettings::default()
        },
    )
}

/// Reduced problem `min 1/2 v^T P v + q^T v, l <= C v <= u`.
struct Reduced {
    p: Matrix,
    q: Vector,
    c: Matrix,
    l: Vector,
    u: Vector,
}

struct ReducedSolution {
    v: Vector,
    iterations: usize,
    status: QpStatus,
    primal: f64,
    dual: f64,
}

pub fn solve_qp_with(prog: &QuadProgram, settings: &QpSettings) -> Result<QpSolution> {
    prog.validate()?;
    if !(settings.tol > 0.0) || settings.max_iter == 0 {
        return Err(Error::InvalidInput("tolerance and iteration cap must be positive".into()));
    }
    let n = prog.dim();
    let tol = settings.tol;

    // Null-space elimination of the equalities.
    let (x0, basis) = if prog.a_eq.nrows() > 0 {
        let f = numkit::svd(&prog.a_eq, default_rank_tol(prog.a_eq.nrows(), n))?;
        let x0 = numkit::pinv_from_factors(&f, f.numerical_rank) * &prog.b_eq;
        let res = inf_norm(&(&prog.a_eq * &x0 - &prog.b_eq));
        let scale = 1.0 + inf_norm(&prog.b_eq) + max_abs(&prog.a_eq) * inf_norm(&x0);
        if res > 1e-9 * scale {
            return Ok(finish(prog, x0, 0, QpStatus::Infeasible, res / scale, 0.0, n - f.numerical_rank));
        }
        let basis = numkit::orthonormal_complement(&f.right_range(f.numerical_rank));
        (x0, Some(basis))
    } else {
        (Vector::zeros(n), None)
    };
    let k = basis.as_ref().map_or(n, |b| b.ncols());
    let row_of = |i: usize| -> Vector {
        match &basis {
            Some(b) => b.row(i).transpose(),
            None => {
                let mut e = Vector::zeros(n);
                e[i] = 1.0;
                e
            }
        }
    };

    let mut rows = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for i in 0..n {
        if prog.lower[i].is_infinite() && prog.upper[i].is_infinite() {
            continue;
        }
        let r = row_of(i);
        let (l, u) = (prog.lower[i] - x0[i], prog.upper[i] - x0[i]);
        if r.norm() <= 1e-12 {
            let slack = 1e-9 * (1.0 + x0[i].abs());
            if l > slack || u < -slack {
                return Ok(finish(prog, x0, 0, QpStatus::Infeasible, l.max(-u), 0.0, k));
            }
            continue;
        }
        rows.push(r);
        lo.push(l);
        hi.push(u);
    }
    let m = rows.len();
    let mut c = Matrix::zeros(m, k);
    for (i, r) in rows.iter().enumerate() {
        c.row_mut(i).copy_from(&r.transpose());
    }
    let (p_red, q_red) = match &basis {
        Some(b) => (
            numkit::symmetrize(&(b.transpose() * &prog.h * b)),
            b.transpose() * (&prog.h * &x0 + &prog.f),
        ),
        None => (prog.h.clone(), prog.f.clone()),
    };

    if k == 0 {
        let viol = (0..m).fold(0.0_f64, |acc, i| acc.max(lo[i]).max(-hi[i]));
        let status = if viol <= tol { QpStatus::Optimal } else { QpStatus::Infeasible };
        return Ok(finish(prog, x0, 0, status, viol.max(0.0), 0.0, 0));
    }

    let p_reg = regularize(p_red);
    let reduced = Reduced {
        p: p_reg,
        q: q_red,
        c,
        l: Vector::from_vec(lo),
        u: Vector::from_vec(hi),
    };
    let sol = solve_reduced(&reduced, settings)?;
    let x = match &basis {
        Some(b) => &x0 + b * &sol.v,
        None => sol.v.clone(),
    };
    Ok(finish(prog, x, sol.iterations, sol.status, sol.primal, sol.dual, k))
}

fn finish(
    prog: &QuadProgram,
    x: Vector,
    iterations: usize,
    status: QpStatus,
    primal: f64,
    dual: f64,
    reduced_dim: usize,
) -> QpSolution {
    let eq = if prog.a_eq.nrows() > 0 {
        let r = inf_norm(&(&prog.a_eq * &x - &prog.b_eq));
        r / (1.0 + inf_norm(&prog.b_eq))
    } else {
        0.0
    };
    QpSolution {
        objective: prog.objective(&x),
        x,
        primal_residual: primal.max(eq),
        dual_residual: dual,
        iterations,
        status,
        reduced_dim,
    }
}

fn regularize(p: Matrix) -> Matrix {
    let k = p.nrows();
    let scale = max_abs(&p).max(1e-300);
    // Singular or nearly singular reduced Hessians get a tiny ridge.
    let singular = match Cholesky::new(p.clone()) {
        None => true,
        Some(ch) => {
            let d = ch.l_dirty().diagonal();
            let (mn, mx) = d
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
            mn * mn <= 1e-13 * mx * mx
        }
    };
    if singular {
        p + Matrix::identity(k, k) * (1e-10 * scale.max(1.0))
    } else {
        p
    }
}

fn residuals(r: &Reduced, v: &Vector, cv: &Vector, z: &Vector, y: &Vector) -> (f64, f64, f64, f64) {
    let pv = &r.p * v;
    let cty = r.c.tr_mul(y);
    let prim = inf_norm(&(cv - z));
    let dual = inf_norm(&(&pv + &r.q + &cty));
    let prim_scale = 1.0 + inf_norm(cv).max(inf_norm(z));
    let dual_scale = 1.0 + inf_norm(&pv).max(inf_norm(&r.q)).max(inf_norm(&cty));
    (prim, prim_scale, dual, dual_scale)
}

fn solve_reduced(r: &Reduced, s: &QpSettings) -> Result<ReducedSolution> {
    let k = r.p.nrows();
    let m = r.c.nrows();
    let chol_p = Cholesky::new(r.p.clone())
        .ok_or_else(|| Error::InvalidInput("reduced Hessian is not positive definite".into()))?;

    if m == 0 {
        let v = chol_p.solve(&(-&r.q));
        let (_, _, dual, ds) = residuals(r, &v, &Vector::zeros(0), &Vector::zeros(0), &Vector::zeros(0));
        return Ok(ReducedSolution {
            v,
            iterations: 0,
            status: QpStatus::Optimal,
            primal: 0.0,
            dual: dual / ds,
        });
    }

    // Ruiz equilibration: v = D vs, rows scaled by E, cost by c.
    let mut d = Vector::from_element(k, 1.0);
    let mut e = Vector::from_element(m, 1.0);
    let mut ps = r.p.clone();
    let mut cs = r.c.clone();
    for _ in 0..15 {
        let mut dd = Vector::zeros(k);
        for j in 0..k {
            let col = ps.column(j).amax().max(cs.column(j).amax());
            dd[j] = if col > 1e-12 { 1.0 / libm::sqrt(col) } else { 1.0 };
        }
        let mut ee = Vector::zeros(m);
        for i in 0..m {
            let row = cs.row(i).amax();
            ee[i] = if row > 1e-12 { 1.0 / libm::sqrt(row) } else { 1.0 };
        }
        for j in 0..k {
            for i in 0..k {
                ps[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                cs[(i, j)] *= ee[i] * dd[j];
            }
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&ee);
    }
    let qs0 = r.q.component_mul(&d);
    let mean_col = (0..k).map(|j| ps.column(j).amax()).sum::<f64>() / k as f64;
    let cost = 1.0 / mean_col.max(inf_norm(&qs0)).clamp(1e-4, 1e4);
    let cost = if cost.is_finite() { cost.clamp(1e-4, 1e4) } else { 1.0 };
    ps *= cost;
    let qs = qs0 * cost;
    let ls = r.l.component_mul(&e);
    let us = r.u.component_mul(&e);

    let rho_vec: Vector = Vector::from_iterator(
        m,
        (0..m).map(|i| if r.l[i] == r.u[i] { 1e3 * s.rho } else { s.rho }),
    );
    let mut kkt = ps.clone() + Matrix::identity(k, k) * s.sigma;
    {
        let mut rc = cs.clone();
        for i in 0..m {
            rc.row_mut(i).scale_mut(rho_vec[i]);
        }
        kkt += cs.transpose() * rc;
    }
    let chol = Cholesky::new(kkt)
        .ok_or_else(|| Error::InvalidInput("ADMM linear system is not positive definite".into()))?;

    let unscale = |xs: &Vector, zs: &Vector, ys: &Vector| -> (Vector, Vector, Vector) {
        (
            xs.component_mul(&d),
            zs.component_div(&e),
            ys.component_mul(&e) / cost,
        )
    };

    let mut xs = Vector::zeros(k);
    let mut zs = Vector::zeros(m);
    for i in 0..m {
        zs[i] = 0.0_f64.clamp(ls[i], us[i]);
    }
    let mut ys = Vector::zeros(m);
    let mut y_prev = ys.clone();
    let alpha = s.relaxation;
    let mut next_polish = 50usize;
    let mut best: Option<ReducedSolution> = None;

    for iter in 1..=s.max_iter {
        let mut w = &zs * 1.0;
        for i in 0..m {
            w[i] = rho_vec[i] * zs[i] - ys[i];
        }
        let rhs = &xs * s.sigma - &qs + cs.tr_mul(&w);
        let xt = chol.solve(&rhs);
        let zt = &cs * &xt;
        xs = &xt * alpha + &xs * (1.0 - alpha);
        let zh = &zt * alpha + &zs * (1.0 - alpha);
        for i in 0..m {
            let zn = (zh[i] + ys[i] / rho_vec[i]).clamp(ls[i], us[i]);
            ys[i] += rho_vec[i] * (zh[i] - zn);
            zs[i] = zn;
        }

        if iter % s.check_every != 0 && iter != s.max_iter {
            continue;
        }
        let (v, z, y) = unscale(&xs, &zs, &ys);
        let cv = &r.c * &v;
        let (prim, ps_, dual, ds_) = residuals(r, &v, &cv, &z, &y);
        let converged = prim <= s.tol * ps_ && dual <= s.tol * ds_;
        if converged || iter >= next_polish {
            next_polish = next_polish.saturating_mul(2);
            if let Some(mut pol) = polish(r, &chol_p, &z, &y, s.tol) {
                pol.iterations = iter;
                return Ok(pol);
            }
        }
        if converged {
            return Ok(ReducedSolution {
                v,
                iterations: iter,
                status: QpStatus::Optimal,
                primal: prim / ps_,
                dual: dual / ds_,
            });
        }
        if primal_infeasible(&cs, &ls, &us, &(&ys - &y_prev)) {
            return Ok(ReducedSolution {
                v,
                iterations: iter,
                status: QpStatus::Infeasible,
                primal: prim / ps_,
                dual: dual / ds_,
            });
        }
        y_prev = ys.clone();
        best = Some(ReducedSolution {
            v,
            iterations: iter,
            status: QpStatus::MaxIter,
            primal: prim / ps_,
            dual: dual / ds_,
        });
    }
    Ok(best.expect("at least one residual check"))
}

fn primal_infeasible(c: &Matrix, l: &Vector, u: &Vector, dy: &Vector) -> bool {
    let norm = inf_norm(dy);
    if norm < 1e-12 {
        return false;
    }
    let eps = 1e-7 * norm;
    if inf_norm(&c.tr_mul(dy)) > eps {
        return false;
    }
    let mut support = 0.0;
    for i in 0..dy.len() {
        if dy[i] > 0.0 {
            if u[i].is_infinite() {
                return false;
            }
            support += u[i] * dy[i];
        } else if dy[i] < 0.0 {
            if l[i].is_infinite() {
                return false;
            }
            support += l[i] * dy[i];
        }
    }
    support < -eps
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    Lower,
    Upper,
    Fixed,
}

/// Active-set refinement started from an ADMM iterate.
fn polish(r: &Reduced, chol_p: &Cholesky<f64, nalgebra::Dyn>, z: &Vector, y: &Vector, tol: f64) -> Option<ReducedSolution> {
    let m = r.c.nrows();
    let mut sides: Vec<Side> = (0..m)
        .map(|i| {
            if r.l[i] == r.u[i] {
                Side::Fixed
            } else if z[i] - r.l[i] < -y[i] {
                Side::Lower
            } else if r.u[i] - z[i] < y[i] {
                Side::Upper
            } else {
                Side::Free
            }
        })
        .collect();

    for _ in 0..40 {
        let active: Vec<usize> = (0..m).filter(|&i| sides[i] != Side::Free).collect();
        let a = active.len();
        let (v, y_act) = if a == 0 {
            (chol_p.solve(&(-&r.q)), Vector::zeros(0))
        } else {
            let mut ca = Matrix::zeros(a, r.c.ncols());
            let mut b = Vector::zeros(a);
            for (row, &i) in active.iter().enumerate() {
                ca.row_mut(row).copy_from(&r.c.row(i));
                b[row] = if sides[i] == Side::Upper { r.u[i] } else { r.l[i] };
            }
            solve_kkt(r, chol_p, &ca, &b)?
        };
        let mut y_full = Vector::zeros(m);
        for (row, &i) in active.iter().enumerate() {
            y_full[i] = y_act[row];
        }
        let cv = &r.c * &v;
        let pv = &r.p * &v;
        let cty = r.c.tr_mul(&y_full);
        let prim_scale = 1.0 + inf_norm(&cv);
        let dual_scale = 1.0 + inf_norm(&pv).max(inf_norm(&r.q)).max(inf_norm(&cty));
        let dp = tol * prim_scale;
        let dd = tol * dual_scale;

        let mut changed = false;
        let mut prim = 0.0_f64;
        for i in 0..m {
            match sides[i] {
                Side::Free => {
                    let viol = (r.l[i] - cv[i]).max(cv[i] - r.u[i]);
                    prim = prim.max(viol);
                    if viol > dp {
                        sides[i] = if cv[i] < r.l[i] { Side::Lower } else { Side::Upper };
                        changed = true;
                    }
                }
                Side::Lower => {
                    prim = prim.max((cv[i] - r.l[i]).abs());
                    if y_full[i] > dd {
                        sides[i] = Side::Free;
                        changed = true;
                    }
                }
                Side::Upper => {
                    prim = prim.max((cv[i] - r.u[i]).abs());
                    if y_full[i] < -dd {
                        sides[i] = Side::Free;
                        changed = true;
                    }
                }
                Side::Fixed => prim = prim.max((cv[i] - r.l[i]).abs()),
            }
        }
        if !changed {
            let dual = inf_norm(&(&pv + &r.q + &cty));
            if prim <= dp && dual <= dd {
                return Some(ReducedSolution {
                    v,
                    iterations: 0,
                    status: QpStatus::Optimal,
                    primal: prim / prim_scale,
                    dual: dual / dual_scale,
                });
            }
            return None;
        }
    }
    None
}

/// Solves `[P A^T; A 0] [v; y] = [-q; b]` through the Schur complement,
/// with two rounds of iterative refinement.
fn solve_kkt(
    r: &Reduced,
    chol_p: &Cholesky<f64, nalgebra::Dyn>,
    ca: &Matrix,
    b: &Vector,
) -> Option<(Vector, Vector)> {
    let w = chol_p.solve(&ca.transpose());
    let schur = numkit::symmetrize(&(ca * &w));
    let solver = SchurSolver::new(&schur)?;
    let mut y = solver.solve(&(-(b + ca * chol_p.solve(&r.q))));
    let mut v = -chol_p.solve(&(&r.q + ca.tr_mul(&y)));
    for _ in 0..2 {
        let r1 = &r.p * &v + &r.q + ca.tr_mul(&y);
        let r2 = ca * &v - b;
        let dy = solver.solve(&(&r2 - ca * chol_p.solve(&r1)));
        let dv = -chol_p.solve(&(&r1 + ca.tr_mul(&dy)));
        y += dy;
        v += dv;
    }
    if v.iter().chain(y.iter()).all(|x| x.is_finite()) {
        Some((v, y))
    } else {
        None
    }
}

enum SchurSolver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Pinv(Matrix),
}

impl SchurSolver {
    fn new(s: &Matrix) -> Option<Self> {
        if let Some(ch) = Cholesky::new(s.clone()) {
            let d = ch.l_dirty().diagonal();
            let (mn, mx) = d
                .iter()
                .fold((f64::INFINITY, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
            if mn > 1e-7 * mx {
                return Some(SchurSolver::Chol(ch));
            }
        }
        numkit::pinv(s, 1e-12).ok().map(SchurSolver::Pinv)
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        match self {
            SchurSolver::Chol(ch) => ch.solve(rhs),
            SchurSolver::Pinv(p) => p * rhs,
        }
    }
}
