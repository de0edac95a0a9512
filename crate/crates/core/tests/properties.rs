//! Randomized invariants of the linear algebra, the data layer, the
//! estimators and the controllers.

use ddpc_core::controllers::{
    solve_deepc, solve_gddpc, solve_indirect, ChannelBox, ControlProblem, Regularizer,
};
use ddpc_core::equivalence::{check_deepc_equivalence, random_instance, Regime};
use ddpc_core::estimation::fit_least_squares;
use ddpc_core::numkit::{lq_decompose, pinv_default, range_projector, Matrix, Vector};
use ddpc_core::sysdata::{build_bundle, generate_training, ArxPlant, Dimensions, RegressorBundle, TrainingRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    let a = Matrix::from_fn(rows, rank, |_, _| rng.random_range(-1.0..1.0));
    let b = Matrix::from_fn(rank, cols, |_, _| rng.random_range(-1.0..1.0));
    a * b
}

fn matrix_case(seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=8usize);
    let cols = rng.random_range(1..=8usize);
    let rank = rng.random_range(1..=rows.min(cols));
    random_matrix(&mut rng, rows, cols, rank)
}

fn record(plant: &ArxPlant, dims: &Dimensions, noise: f64, seed: u64) -> TrainingRecord {
    generate_training(plant, dims, 0.6, (-1.0, 1.0), noise, seed).unwrap()
}

fn prefix(rec: &TrainingRecord, samples: usize) -> TrainingRecord {
    TrainingRecord {
        inputs: rec.inputs[..samples].to_vec(),
        measured_outputs: rec.measured_outputs[..samples].to_vec(),
        clean_outputs: rec.clean_outputs[..samples].to_vec(),
        ..rec.clone()
    }
}

fn lq(b: &RegressorBundle) -> ddpc_core::numkit::LqBlocks {
    lq_decompose(&b.z, &b.u, &b.y).unwrap()
}

fn small_bundle(seed: u64, noise: f64) -> RegressorBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho = rng.random_range(3..=5usize);
    let t = rng.random_range(2..=5usize);
    let n = rng.random_range(2 * rho + 2 * t + 2..=60);
    let dims = Dimensions::new(rho, t, 1, 1, n).unwrap();
    build_bundle(&record(&ArxPlant::third_order_benchmark(), &dims, noise, seed), &dims).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pinv_gram_identity_on_range(seed in any::<u64>()) {
        let m = matrix_case(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x = &m * Vector::from_fn(m.ncols(), |_, _| rng.random_range(-1.0..1.0));
        let lhs = (pinv_default(&m).unwrap() * &x).norm_squared();
        let gram = &m * m.transpose();
        let rhs = x.dot(&(pinv_default(&gram).unwrap() * &x));
        let scale = (m.amax() * m.amax()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()) * scale * scale + 1e-14, "{lhs} vs {rhs}");
    }

    #[test]
    fn projector_is_idempotent(seed in any::<u64>()) {
        let m = matrix_case(seed);
        let (p, _) = range_projector(&m).unwrap();
        prop_assert!((&p * &p - &p).amax() <= 1e-10);
    }

    #[test]
    fn pinv_is_an_involution(seed in any::<u64>()) {
        let m = matrix_case(seed);
        let back = pinv_default(&pinv_default(&m).unwrap()).unwrap();
        prop_assert!((&back - &m).amax() <= 1e-9 * (1.0 + m.amax()));
    }

    #[test]
    fn lq_reproduces_stack(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=20usize);
        let (a, b, c) = (rng.random_range(1..=4usize), rng.random_range(1..=4usize), rng.random_range(1..=4usize));
        let z = random_matrix(&mut rng, a, n, a.min(n));
        let u = random_matrix(&mut rng, b, n, b.min(n));
        let y = random_matrix(&mut rng, c, n, c.min(n));
        let lq = lq_decompose(&z, &u, &y).unwrap();
        let mut stack = Matrix::zeros(a + b + c, n);
        stack.rows_mut(0, a).copy_from(&z);
        stack.rows_mut(a, b).copy_from(&u);
        stack.rows_mut(a + b, c).copy_from(&y);
        prop_assert!((&lq.l * &lq.q - &stack).norm() <= 1e-10 * stack.norm().max(1e-300));
    }

    #[test]
    fn hankel_columns_shift_by_one_block(seed in any::<u64>()) {
        let b = small_bundle(seed, 0.1);
        let rho = b.dims.past_horizon;
        for j in 0..b.columns() - 1 {
            for r in 0..rho - 1 {
                prop_assert_eq!(b.z[(r, j + 1)], b.z[(r + 1, j)]);
                prop_assert_eq!(b.z[(rho + r, j + 1)], b.z[(rho + r + 1, j)]);
            }
            // Last past sample of column j+1 is the first future sample of column j.
            prop_assert_eq!(b.z[(rho - 1, j + 1)], b.u[(0, j)]);
            prop_assert_eq!(b.z[(2 * rho - 1, j + 1)], b.y[(0, j)]);
        }
    }

    #[test]
    fn noise_free_data_follows_the_plant_recursion(seed in any::<u64>()) {
        let b = small_bundle(seed, 0.0);
        let plant = ArxPlant::third_order_benchmark();
        let (tz, tu) = plant.multistep_map(b.dims.past_horizon, b.dims.future_horizon).unwrap();
        let pred = tz * &b.z + tu * &b.u;
        prop_assert!((&pred - &b.y).amax() <= 1e-9 * (1.0 + b.y.amax()));
    }

    #[test]
    fn seeds_determine_records(seed in any::<u64>()) {
        let plant = ArxPlant::third_order_benchmark();
        let dims = Dimensions::new(3, 3, 1, 1, 20).unwrap();
        prop_assert_eq!(record(&plant, &dims, 0.1, seed), record(&plant, &dims, 0.1, seed));
        prop_assert_ne!(record(&plant, &dims, 0.1, seed), record(&plant, &dims, 0.1, seed.wrapping_add(1)));
    }

    #[test]
    fn residual_is_orthogonal_to_regressors(seed in any::<u64>()) {
        let b = small_bundle(seed, 0.1);
        let m = fit_least_squares(&b).unwrap();
        let e = &b.y - &m.theta * &b.phi;
        let scale = b.y.norm() * b.phi.norm();
        prop_assert!((e * b.phi.transpose()).amax() <= 1e-8 * scale);
    }

    #[test]
    fn lq_factor_reproduces_predictor(seed in any::<u64>()) {
        let b = small_bundle(seed, 0.1);
        let m = fit_least_squares(&b).unwrap();
        let lq = lq_decompose(&b.z, &b.u, &b.y).unwrap();
        let (nz, nu) = (b.z.nrows(), b.u.nrows());
        let mut l3 = Matrix::zeros(b.y.nrows(), nz + nu);
        l3.columns_mut(0, nz).copy_from(&lq.l31());
        l3.columns_mut(nz, nu).copy_from(&lq.l32());
        let via = l3 * lq.m1().try_inverse().unwrap();
        prop_assert!((&via - &m.theta).norm() <= 1e-8 * m.theta.norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Nested prefixes of one record: the slack rank never drops and is
    /// full once the data outnumber the regressor plus output rows.
    #[test]
    fn slack_rank_grows_with_nested_data(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = rng.random_range(2..=5usize);
        let t = rng.random_range(2..=6usize);
        let n_phi = 2 * rho + t;
        let full = Dimensions::new(rho, t, 1, 1, n_phi + 2 * t).unwrap();
        let rec = record(&ArxPlant::third_order_benchmark(), &full, 0.1, seed);
        let mut prev = 0;
        for n in [n_phi, n_phi + t / 2, n_phi + t + 1, n_phi + 2 * t] {
            let d = full.with_columns(n).unwrap();
            let m = fit_least_squares(&build_bundle(&prefix(&rec, d.total_samples()), &d).unwrap()).unwrap();
            let r = m.rank_delta();
            prop_assert!(r >= prev, "rank dropped at N = {}", n);
            prev = r;
        }
        prop_assert_eq!(prev, t);
    }

    /// Direct solutions deviate from the least-squares prediction only
    /// inside range(Sigma_delta).
    #[test]
    fn direct_slack_stays_in_residual_range(seed in any::<u64>(), which in 0usize..3) {
        let regime = if which == 2 { Regime::Full } else { Regime::ALL[(seed % 3) as usize] };
        let inst = random_instance(seed, 0, regime).unwrap();
        let model = fit_least_squares(&inst.bundle).unwrap();
        let sol = match which {
            0 => solve_deepc(&inst.problem, &inst.bundle, Regularizer::L2, 10.0).unwrap(),
            1 => solve_deepc(&inst.problem, &inst.bundle, Regularizer::Projection, 10.0).unwrap(),
            _ => solve_gddpc(&inst.problem, &lq(&inst.bundle), 1.0, 10.0).unwrap(),
        };
        let phi = ddpc_core::sysdata::build_regressor(&model.dims, &inst.problem.z, &sol.u).unwrap();
        let slack = &sol.y_hat - &model.theta * phi;
        let b = &model.delta_range_basis;
        let outside = &slack - b * (b.transpose() * &slack);
        prop_assert!(outside.norm() <= 1e-7, "{}", outside.norm());
    }

    /// Equivalence verdicts are a function of the seed and descriptor.
    #[test]
    fn verdicts_are_reproducible(seed in any::<u64>()) {
        let run = || {
            let inst = random_instance(seed, 3, Regime::Partial).unwrap();
            check_deepc_equivalence(&inst.bundle, &inst.problem, 10.0, Regularizer::L2).unwrap()
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.verdict, b.verdict);
        prop_assert_eq!(a.max_u_gap.to_bits(), b.max_u_gap.to_bits());
        prop_assert_eq!(a.objective_gap.to_bits(), b.objective_gap.to_bits());
    }

    /// Unconstrained indirect problem: lowering lambda2 never raises the
    /// optimal cost, and the predicted tracking error shrinks with it.
    #[test]
    fn tracking_degrades_monotonically(seed in any::<u64>()) {
        let inst = random_instance(seed, 1, Regime::Full).unwrap();
        let model = fit_least_squares(&inst.bundle).unwrap();
        let p: ControlProblem = inst.problem.clone().unconstrained();
        let mut last: Option<(f64, f64)> = None;
        for l2 in [1e4, 1e3, 1e2, 10.0, 1.0, 0.1] {
            let s = solve_indirect(&p, &model, 0.0, l2).unwrap();
            let d = &s.y_hat - &p.y_ref;
            let tracking = d.dot(&(&p.q * &d));
            if let Some((obj, trk)) = last {
                prop_assert!(s.objective <= obj + 1e-8 * (1.0 + obj.abs()), "{} > {}", s.objective, obj);
                prop_assert!(tracking <= trk + 1e-8 * (1.0 + trk), "{} > {}", tracking, trk);
            }
            last = Some((s.objective, tracking));
        }
    }
}

#[test]
fn input_box_is_respected_by_every_formulation() {
    let inst = random_instance(77, 0, Regime::Full).unwrap();
    let p = inst.problem.clone().with_input_box(ChannelBox::uniform(1, -0.2, 0.2)).unwrap();
    let model = fit_least_squares(&inst.bundle).unwrap();
    for s in [
        solve_deepc(&p, &inst.bundle, Regularizer::L2, 1.0).unwrap(),
        solve_gddpc(&p, &lq(&inst.bundle), 0.0, 1.0).unwrap(),
        solve_indirect(&p, &model, 1.0, 1.0).unwrap(),
    ] {
        assert!(s.u.iter().all(|u| u.abs() <= 0.2 + 1e-8), "{}", s.u);
    }
}
