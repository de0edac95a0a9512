//! Exhaustive active-set oracle and random box/equality QPs. Shared by the
//! solver tests and the acceptance target.

use ddpc_core::numkit::{pinv, Matrix, Vector};
use ddpc_core::qpcore::QuadProgram;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Minimum over all 3^n (free, lower, upper) assignments of the
/// equality-constrained minimizer, restricted to feasible candidates.
pub fn brute_force(p: &QuadProgram) -> Option<(Vector, f64)> {
    let n = p.dim();
    let me = p.a_eq.nrows();
    let mut best: Option<(Vector, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        let mut c = code;
        let mut fixed = Vec::new();
        for i in 0..n {
            match c % 3 {
                1 if p.lower[i].is_finite() => fixed.push((i, p.lower[i])),
                2 if p.upper[i].is_finite() => fixed.push((i, p.upper[i])),
                0 => {}
                _ => {
                    c = usize::MAX;
                    break;
                }
            }
            c /= 3;
        }
        if c == usize::MAX {
            continue;
        }
        let m = me + fixed.len();
        let mut kkt = Matrix::zeros(n + m, n + m);
        let mut rhs = Vector::zeros(n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.f));
        for r in 0..me {
            for j in 0..n {
                kkt[(n + r, j)] = p.a_eq[(r, j)];
                kkt[(j, n + r)] = p.a_eq[(r, j)];
            }
            rhs[n + r] = p.b_eq[r];
        }
        for (k, &(i, val)) in fixed.iter().enumerate() {
            kkt[(n + me + k, i)] = 1.0;
            kkt[(i, n + me + k)] = 1.0;
            rhs[n + me + k] = val;
        }
        let sol = pinv(&kkt, 1e-11).unwrap() * &rhs;
        let x = sol.rows(0, n).into_owned();
        let residual = (&kkt * &sol - &rhs).amax();
        if residual > 1e-8 * (1.0 + rhs.amax()) {
            continue;
        }
        let feasible = (0..n).all(|i| x[i] >= p.lower[i] - 1e-9 && x[i] <= p.upper[i] + 1e-9);
        if !feasible {
            continue;
        }
        let obj = p.objective(&x);
        if best.as_ref().is_none_or(|(_, b)| obj < *b) {
            best = Some((x, obj));
        }
    }
    best
}

pub fn random_instance(rng: &mut ChaCha8Rng, definite: bool) -> QuadProgram {
    let n = rng.random_range(1..=6usize);
    let rank = if definite { n } else { rng.random_range(1..=n) };
    let mut g = Matrix::zeros(n, rank);
    for v in g.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let mut h = &g * g.transpose();
    if definite {
        h += Matrix::identity(n, n) * 0.1;
    }
    let f = Vector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let lower = Vector::from_fn(n, |_, _| {
        if rng.random_bool(0.8) { rng.random_range(-1.5..0.0) } else { f64::NEG_INFINITY }
    });
    let upper = Vector::from_fn(n, |i, _| {
        if rng.random_bool(0.8) || (!definite && lower[i].is_infinite()) {
            rng.random_range(0.0..1.5)
        } else {
            f64::INFINITY
        }
    });
    // Semidefinite instances need a bounded feasible set for a finite optimum.
    let lower = if definite {
        lower
    } else {
        Vector::from_fn(n, |i, _| if lower[i].is_infinite() { -2.0 } else { lower[i] })
    };
    let me = if n > 1 { rng.random_range(0..n.min(3)) } else { 0 };
    let mut a = Matrix::zeros(me, n);
    for v in a.iter_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    // Equalities pass through a point inside the box so the instance is feasible.
    let interior = Vector::from_fn(n, |i, _| {
        let lo = lower[i].max(-1.0);
        let hi = upper[i].min(1.0);
        lo + (hi - lo) * rng.random_range(0.2..0.8)
    });
    let b = &a * &interior;
    QuadProgram::new(h, f)
        .unwrap()
        .with_equalities(a, b)
        .unwrap()
        .with_bounds(lower, upper)
        .unwrap()
}
