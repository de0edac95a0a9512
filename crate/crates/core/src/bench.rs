//! Monte-Carlo experiment on the third-order benchmark: slack use and
//! closed-loop-free (open-loop) performance against training length.
//!
//! A cell is one `(N_bar, training realization)`; its predictors are fitted
//! once and then evaluated for every noise realization of the past window.
//! All randomness is keyed by seeds derived from the base seed and the
//! cell coordinates, so any cell can be recomputed in isolation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::controllers::{solve_indirect, solve_oracle, solve_spc, ChannelBox, ControlProblem, Solution};
use crate::error::{Error, Result};
use crate::estimation::{fit_causal, fit_least_squares, PredictorModel};
use crate::numkit::Vector;
use crate::qpcore::QpStatus;
use crate::rng::{derive_seed, stream, STREAM_PAST_NOISE};
use crate::sysdata::{build_bundle, generate_training, simulate, ArxPlant, Dimensions, PastWindow};

const TRAIN_TAG: u64 = 0x7472_6169_6e00;
const NOISE_TAG: u64 = 0x6e6f_6973_6500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ControllerKind {
    Oracle,
    Spc,
    CausalSpc,
    /// Projection-regularized DeePC via its indirect equivalent
    /// `(l1, l2) = (0, beta)`, one run per grid value.
    Deepc,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Oracle => "oracle",
            ControllerKind::Spc => "spc",
            ControllerKind::CausalSpc => "cspc",
            ControllerKind::Deepc => "deepc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Some(ControllerKind::Oracle),
            "spc" => Some(ControllerKind::Spc),
            "cspc" | "c-spc" | "causal_spc" => Some(ControllerKind::CausalSpc),
            "deepc" => Some(ControllerKind::Deepc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `a_1..a_na` in `y_t = sum a_i y_{t-i} + sum b_j u_{t-j}`.
    pub output_coeffs: Vec<f64>,
    pub input_coeffs: Vec<f64>,
    pub past_horizon: usize,
    pub future_horizon: usize,
    pub q: f64,
    pub r: f64,
    pub setpoint: f64,
    pub input_box: (f64, f64),
    pub input_std: f64,
    /// Measurement noise on the training outputs.
    pub noise_std: f64,
    /// Measurement noise on the past window handed to the controllers.
    pub past_noise_std: f64,
    pub total_samples: Vec<usize>,
    pub lambda2: Vec<f64>,
    pub train_realizations: usize,
    pub noise_realizations: usize,
    pub base_seed: u64,
    pub controllers: Vec<ControllerKind>,
    pub output_dir: String,
}

impl ExperimentConfig {
    /// Default grid: five training lengths, 20 x 10 realizations.
    pub fn desk_scale() -> Self {
        Self {
            output_coeffs: vec![1.2, -0.3, -0.1],
            input_coeffs: vec![0.5, -0.4, 0.1],
            past_horizon: 20,
            future_horizon: 30,
            q: 1.0,
            r: 0.1,
            setpoint: 0.75,
            input_box: (-1.0, 1.0),
            input_std: 0.6,
            noise_std: 0.1,
            past_noise_std: 0.1,
            total_samples: vec![119, 300, 1000, 3000, 10_000],
            lambda2: vec![1.0, 10.0, 100.0, 1000.0],
            train_realizations: 20,
            noise_realizations: 10,
            base_seed: 2024,
            controllers: vec![
                ControllerKind::Oracle,
                ControllerKind::Spc,
                ControllerKind::CausalSpc,
                ControllerKind::Deepc,
            ],
            output_dir: String::from("bench_out"),
        }
    }

    /// Full grid: 200 training x 30 noise realizations.
    pub fn paper_scale() -> Self {
        Self {
            total_samples: vec![119, 150, 200, 300, 500, 1000, 2000, 3000, 5000, 10_000],
            train_realizations: 200,
            noise_realizations: 30,
            ..Self::desk_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(String::from(m)));
        if self.total_samples.is_empty() {
            return bad("total_samples grid is empty");
        }
        if self.controllers.contains(&ControllerKind::Deepc) && self.lambda2.is_empty() {
            return bad("lambda2 grid is empty");
        }
        if self.train_realizations == 0 || self.noise_realizations == 0 {
            return bad("realization counts must be at least 1");
        }
        if self.controllers.is_empty() {
            return bad("controller list is empty");
        }
        if self.lambda2.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("lambda2 values must be finite and nonnegative");
        }
        if !(self.q > 0.0) || !(self.r > 0.0) {
            return bad("q and r must be positive");
        }
        if !(self.input_std > 0.0) || !(self.noise_std >= 0.0) || !(self.past_noise_std >= 0.0) {
            return bad("noise levels must be nonnegative and input_std positive");
        }
        if !(self.input_box.0 <= self.input_box.1) {
            return bad("input box is inverted");
        }
        if self.past_horizon == 0 || self.future_horizon == 0 {
            return bad("horizons must be positive");
        }
        for &n in &self.total_samples {
            if n < self.past_horizon + self.future_horizon {
                return Err(Error::InvalidInput(format!(
                    "total_samples {n} cannot fill one data column (rho + T = {})",
                    self.past_horizon + self.future_horizon
                )));
            }
        }
        self.plant().map(|_| ())
    }

    pub fn plant(&self) -> Result<ArxPlant> {
        ArxPlant::siso(&self.output_coeffs, &self.input_coeffs)
    }

    pub fn dims(&self, total: usize) -> Result<Dimensions> {
        Dimensions::from_total_samples(self.past_horizon, self.future_horizon, 1, 1, total)
    }

    pub fn train_seed(&self, total: usize, index: usize) -> u64 {
        derive_seed(self.base_seed, &[TRAIN_TAG, total as u64, index as u64])
    }

    pub fn noise_seed(&self, index: usize) -> u64 {
        derive_seed(self.base_seed, &[NOISE_TAG, index as u64])
    }

    /// Number of independent rows a full sweep produces.
    pub fn run_count(&self) -> usize {
        let per_cell: usize = self
            .controllers
            .iter()
            .map(|c| if *c == ControllerKind::Deepc { self.lambda2.len() } else { 1 })
            .sum();
        per_cell * self.total_samples.len() * self.train_realizations * self.noise_realizations
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Optimal,
    MaxIter,
    Infeasible,
    Error,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Optimal => "optimal",
            RunStatus::MaxIter => "max_iter",
            RunStatus::Infeasible => "infeasible",
            RunStatus::Error => "error",
        }
    }

    fn from_qp(s: QpStatus) -> Self {
        match s {
            QpStatus::Optimal => RunStatus::Optimal,
            QpStatus::MaxIter => RunStatus::MaxIter,
            QpStatus::Infeasible => RunStatus::Infeasible,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub controller: ControllerKind,
    pub total_samples: usize,
    pub lambda2: Option<f64>,
    pub train_index: usize,
    pub noise_index: usize,
    pub train_seed: u64,
    pub noise_seed: u64,
    /// `|y~(u*) - y_ref|_Q^2 + |u*|_R^2`; NaN when the solve failed.
    pub j_star: f64,
    /// `|y~(u*) - y_o|_Q^2 + |u* - u_o|_R^2`; NaN when the solve failed.
    pub j_oracle: f64,
    /// Mean squared slack over the horizon.
    pub slack_ms: f64,
    pub status: RunStatus,
}

/// Predictors fitted on one training record.
#[derive(Debug, Clone)]
pub struct TrainedCell {
    pub total_samples: usize,
    pub train_index: usize,
    pub train_seed: u64,
    pub dims: Dimensions,
    pub least_squares: PredictorModel,
    pub causal: Option<PredictorModel>,
}

pub fn train_cell(config: &ExperimentConfig, total: usize, train_index: usize) -> Result<TrainedCell> {
    train_cell_seeded(config, total, train_index, config.train_seed(total, train_index))
}

pub fn train_cell_seeded(config: &ExperimentConfig, total: usize, train_index: usize, seed: u64) -> Result<TrainedCell> {
    let plant = config.plant()?;
    let dims = config.dims(total)?;
    let record = generate_training(&plant, &dims, config.input_std, config.input_box, config.noise_std, seed)?;
    let bundle = build_bundle(&record, &dims)?;
    let least_squares = fit_least_squares(&bundle)?;
    let causal = if config.controllers.contains(&ControllerKind::CausalSpc) {
        Some(fit_causal(&bundle)?)
    } else {
        None
    };
    Ok(TrainedCell {
        total_samples: total,
        train_index,
        train_seed: seed,
        dims,
        least_squares,
        causal,
    })
}

/// Noisy measurement of the null true past: zero inputs, pure-noise outputs.
pub fn measured_past(config: &ExperimentConfig, noise_seed: u64) -> Result<Vector> {
    let rho = config.past_horizon;
    let mut outputs = vec![0.0; rho];
    if config.past_noise_std > 0.0 {
        let normal = Normal::new(0.0, config.past_noise_std).map_err(|e| Error::InvalidInput(format!("{e}")))?;
        let mut rng = stream(noise_seed, STREAM_PAST_NOISE);
        for v in outputs.iter_mut() {
            *v = normal.sample(&mut rng);
        }
    }
    PastWindow {
        n_u: 1,
        n_y: 1,
        inputs: vec![0.0; rho],
        outputs,
    }
    .to_regressor(rho)
}

fn problem_for(config: &ExperimentConfig, dims: &Dimensions, z: Vector) -> Result<ControlProblem> {
    ControlProblem::setpoint(dims, z, config.setpoint, config.q, config.r)?
        .with_input_box(ChannelBox::uniform(1, config.input_box.0, config.input_box.1))
}

/// Oracle plan for the null true past, shared by every cell.
#[derive(Debug, Clone)]
pub struct OraclePlan {
    pub u: Vector,
    pub y: Vector,
    pub j_star: f64,
}

pub fn oracle_plan(config: &ExperimentConfig) -> Result<OraclePlan> {
    let plant = config.plant()?;
    let dims = config.dims(config.past_horizon + config.future_horizon)?;
    let past = PastWindow::zeros(config.past_horizon.max(plant.lag()), 1, 1);
    let problem = problem_for(config, &dims, Vector::zeros(dims.n_z()))?;
    let s = solve_oracle(&problem, &plant, &past)?;
    let y = response(&plant, &s.u, config.past_horizon.max(plant.lag()))?;
    let j_star = problem.tracking_cost(&s.u, &y);
    Ok(OraclePlan { u: s.u, y, j_star })
}

/// Noise-free plant response from the null past.
fn response(plant: &ArxPlant, u: &Vector, past_len: usize) -> Result<Vector> {
    let past = PastWindow::zeros(past_len, 1, 1);
    Ok(Vector::from_vec(simulate(plant, u.as_slice(), &past, 0.0, 0)?.0))
}

/// Runs every configured controller of one cell against one noise draw.
pub fn evaluate_cell(
    config: &ExperimentConfig,
    cell: &TrainedCell,
    oracle: &OraclePlan,
    noise_index: usize,
) -> Result<Vec<RunResult>> {
    evaluate_cell_seeded(config, cell, oracle, noise_index, config.noise_seed(noise_index))
}

pub fn evaluate_cell_seeded(
    config: &ExperimentConfig,
    cell: &TrainedCell,
    oracle: &OraclePlan,
    noise_index: usize,
    noise_seed: u64,
) -> Result<Vec<RunResult>> {
    let plant = config.plant()?;
    let z = measured_past(config, noise_seed)?;
    let problem = problem_for(config, &cell.dims, z)?;
    let past_len = config.past_horizon.max(plant.lag());
    let mut out = Vec::new();
    for &kind in &config.controllers {
        let runs: Vec<(Option<f64>, Result<Solution>)> = match kind {
            ControllerKind::Oracle => vec![(None, Ok(oracle_solution(oracle)))],
            ControllerKind::Spc => vec![(None, solve_spc(&problem, &cell.least_squares))],
            ControllerKind::CausalSpc => {
                let model = cell
                    .causal
                    .as_ref()
                    .ok_or_else(|| Error::Precondition("causal model was not fitted".into()))?;
                vec![(None, solve_spc(&problem, model))]
            }
            ControllerKind::Deepc => config
                .lambda2
                .iter()
                .map(|&l2| (Some(l2), solve_indirect(&problem, &cell.least_squares, 0.0, l2)))
                .collect(),
        };
        for (lambda2, sol) in runs {
            let mut row = RunResult {
                controller: kind,
                total_samples: cell.total_samples,
                lambda2,
                train_index: cell.train_index,
                noise_index,
                train_seed: cell.train_seed,
                noise_seed,
                j_star: f64::NAN,
                j_oracle: f64::NAN,
                slack_ms: f64::NAN,
                status: RunStatus::Error,
            };
            match sol {
                Ok(s) => {
                    let y = response(&plant, &s.u, past_len)?;
                    row.j_star = problem.tracking_cost(&s.u, &y);
                    let dy = &y - &oracle.y;
                    let du = &s.u - &oracle.u;
                    row.j_oracle = dy.dot(&(&problem.q * &dy)) + du.dot(&(&problem.r * &du));
                    row.slack_ms = s.slack.norm_squared() / s.slack.len() as f64;
                    row.status = RunStatus::from_qp(s.qp.status);
                }
                Err(Error::Infeasible(_)) => row.status = RunStatus::Infeasible,
                Err(_) => row.status = RunStatus::Error,
            }
            out.push(row);
        }
    }
    Ok(out)
}

fn oracle_solution(oracle: &OraclePlan) -> Solution {
    Solution {
        u: oracle.u.clone(),
        y_hat: oracle.y.clone(),
        slack: Vector::zeros(oracle.y.len()),
        internal: crate::controllers::Internal::None,
        objective: oracle.j_star,
        qp: crate::controllers::QpSummary {
            status: QpStatus::Optimal,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            variables: oracle.u.len(),
            reduced_dim: oracle.u.len(),
        },
    }
}

/// One run computed from scratch for explicit seeds. Indices in the result
/// are 0 since the run is not placed on the sweep grid.
pub fn run_single(
    config: &ExperimentConfig,
    controller: ControllerKind,
    lambda2: Option<f64>,
    total: usize,
    train_seed: u64,
    noise_seed: u64,
) -> Result<RunResult> {
    let mut cfg = config.clone();
    cfg.controllers = vec![controller];
    if let Some(l2) = lambda2 {
        cfg.lambda2 = vec![l2];
    }
    let cell = train_cell_seeded(&cfg, total, 0, train_seed)?;
    let oracle = oracle_plan(&cfg)?;
    evaluate_cell_seeded(&cfg, &cell, &oracle, 0, noise_seed)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidInput("no run produced".into()))
}

/// Cell coordinates in sweep order.
pub fn cells(config: &ExperimentConfig) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for &total in &config.total_samples {
        for t in 0..config.train_realizations {
            out.push((total, t));
        }
    }
    out
}

/// Sequential sweep in canonical order.
pub fn run_sweep_sequential(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    config.validate()?;
    let oracle = oracle_plan(config)?;
    let mut out = Vec::with_capacity(config.run_count());
    for (total, t) in cells(config) {
        out.extend(run_cell(config, &oracle, total, t)?);
    }
    Ok(out)
}

/// All noise draws of one cell.
pub fn run_cell(config: &ExperimentConfig, oracle: &OraclePlan, total: usize, train_index: usize) -> Result<Vec<RunResult>> {
    let cell = train_cell(config, total, train_index)?;
    let mut out = Vec::new();
    for k in 0..config.noise_realizations {
        out.extend(evaluate_cell(config, &cell, oracle, k)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Linear-interpolation quartiles of the finite values; `None` if empty.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let at = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos as usize;
        let hi = (lo + 1).min(v.len() - 1);
        let frac = pos - lo as f64;
        v[lo] + (v[hi] - v[lo]) * frac
    };
    Some(Quartiles {
        q1: at(0.25),
        median: at(0.5),
        q3: at(0.75),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub controller: ControllerKind,
    pub total_samples: usize,
    pub lambda2: Option<f64>,
    pub runs: usize,
    pub failed: usize,
    pub j_star: Option<Quartiles>,
    pub j_oracle: Option<Quartiles>,
    pub slack_ms: Option<Quartiles>,
}

/// Per `(controller, N_bar, lambda2)` statistics in sorted key order.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(ControllerKind, usize, Option<u64>)> = results
        .iter()
        .map(|r| (r.controller, r.total_samples, r.lambda2.map(f64::to_bits)))
        .collect();
    keys.sort_by(|a, b| {
        (a.0, a.1)
            .cmp(&(b.0, b.1))
            .then_with(|| {
                let fa = a.2.map(f64::from_bits).unwrap_or(-1.0);
                let fb = b.2.map(f64::from_bits).unwrap_or(-1.0);
                fa.partial_cmp(&fb).unwrap_or(core::cmp::Ordering::Equal)
            })
    });
    keys.dedup();
    keys.into_iter()
        .map(|(controller, total, l2)| {
            let rows: Vec<&RunResult> = results
                .iter()
                .filter(|r| r.controller == controller && r.total_samples == total && r.lambda2.map(f64::to_bits) == l2)
                .collect();
            let pick = |f: fn(&RunResult) -> f64| quartiles(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                controller,
                total_samples: total,
                lambda2: l2.map(f64::from_bits),
                runs: rows.len(),
                failed: rows.iter().filter(|r| !matches!(r.status, RunStatus::Optimal)).count(),
                j_star: pick(|r| r.j_star),
                j_oracle: pick(|r| r.j_oracle),
                slack_ms: pick(|r| r.slack_ms),
            }
        })
        .collect()
}
