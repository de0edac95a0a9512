//! ARX plant simulation, training-record generation and Hankel regressor
//! assembly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::error::{ensure_dim, Error, Result};
use crate::numkit::{vstack, Matrix, Vector};
use crate::rng;

const BLOW_UP: f64 = 1e12;

/// `y_t = sum_i A_i y_{t-i} + sum_j B_j u_{t-j}`, lags starting at one.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxPlant {
    n_u: usize,
    n_y: usize,
    /// `A_1 .. A_p`, each `n_y x n_y`.
    output_coeffs: Vec<Matrix>,
    /// `B_1 .. B_q`, each `n_y x n_u`.
    input_coeffs: Vec<Matrix>,
}

impl ArxPlant {
    pub fn new(output_coeffs: Vec<Matrix>, input_coeffs: Vec<Matrix>) -> Result<Self> {
        let (Some(a1), Some(b1)) = (output_coeffs.first(), input_coeffs.first()) else {
            return Err(Error::InvalidInput("ARX lag orders must be at least one".into()));
        };
        let n_y = a1.nrows();
        let n_u = b1.ncols();
        if n_y == 0 || n_u == 0 {
            return Err(Error::InvalidInput("plant needs at least one input and output".into()));
        }
        for a in &output_coeffs {
            ensure_dim("output coefficient rows", n_y, a.nrows())?;
            ensure_dim("output coefficient cols", n_y, a.ncols())?;
        }
        for b in &input_coeffs {
            ensure_dim("input coefficient rows", n_y, b.nrows())?;
            ensure_dim("input coefficient cols", n_u, b.ncols())?;
        }
        if output_coeffs
            .iter()
            .chain(&input_coeffs)
            .any(|m| m.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidInput("plant coefficients must be finite".into()));
        }
        Ok(Self {
            n_u,
            n_y,
            output_coeffs,
            input_coeffs,
        })
    }

    pub fn siso(a: &[f64], b: &[f64]) -> Result<Self> {
        let scalar = |v: &f64| Matrix::from_element(1, 1, *v);
        Self::new(a.iter().map(scalar).collect(), b.iter().map(scalar).collect())
    }

    /// Third-order single-input single-output plant used by the benchmark:
    /// `y_t = 1.2 y_{t-1} - 0.3 y_{t-2} - 0.1 y_{t-3} + 0.5 u_{t-1} - 0.4 u_{t-2} + 0.1 u_{t-3}`.
    pub fn third_order_benchmark() -> Self {
        Self::siso(&[1.2, -0.3, -0.1], &[0.5, -0.4, 0.1]).expect("valid coefficients")
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn output_coeffs(&self) -> &[Matrix] {
        &self.output_coeffs
    }

    pub fn input_coeffs(&self) -> &[Matrix] {
        &self.input_coeffs
    }

    /// Largest lag over both polynomials.
    pub fn lag(&self) -> usize {
        self.output_coeffs.len().max(self.input_coeffs.len())
    }

    /// Scalar coefficient lists for single-input single-output plants.
    pub fn siso_coeffs(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.n_u != 1 || self.n_y != 1 {
            return None;
        }
        Some((
            self.output_coeffs.iter().map(|m| m[(0, 0)]).collect(),
            self.input_coeffs.iter().map(|m| m[(0, 0)]).collect(),
        ))
    }

    /// Steady-state gain `(I - sum A_i)^{-1} sum B_j`.
    pub fn dc_gain(&self) -> Result<Matrix> {
        let mut lhs = Matrix::identity(self.n_y, self.n_y);
        for a in &self.output_coeffs {
            lhs -= a;
        }
        let mut rhs = Matrix::zeros(self.n_y, self.n_u);
        for b in &self.input_coeffs {
            rhs += b;
        }
        lhs.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Precondition("plant has an integrator (singular I - sum A)".into()))
    }

    /// Noise-free forward recursion over `u_history`/`y_history`, which hold
    /// `start` samples of history followed by room for the new outputs.
    fn recurse(&self, u_hist: &[f64], y_hist: &mut [f64], start: usize, steps: usize) -> Result<()> {
        let (nu, ny) = (self.n_u, self.n_y);
        for t in 0..steps {
            let g = start + t;
            for r in 0..ny {
                let mut acc = 0.0;
                for (i, a) in self.output_coeffs.iter().enumerate() {
                    let base = (g - 1 - i) * ny;
                    for c in 0..ny {
                        acc += a[(r, c)] * y_hist[base + c];
                    }
                }
                for (j, b) in self.input_coeffs.iter().enumerate() {
                    let base = (g - 1 - j) * nu;
                    for c in 0..nu {
                        acc += b[(r, c)] * u_hist[base + c];
                    }
                }
                if !acc.is_finite() || acc.abs() > BLOW_UP {
                    return Err(Error::Divergence { step: t });
                }
                y_hist[g * ny + r] = acc;
            }
        }
        Ok(())
    }

    /// `(offset, gain)` such that the next `horizon` outputs are
    /// `offset + gain * u` for future inputs `u` stacked in time order.
    pub fn prediction_affine(&self, past: &PastWindow, horizon: usize) -> Result<(Vector, Matrix)> {
        let zero_inputs = vec![0.0; horizon * self.n_u];
        let free = simulate(self, &zero_inputs, past, 0.0, 0)?.0;
        let rest = PastWindow::zeros(self.lag(), self.n_u, self.n_y);
        let mut gain = Matrix::zeros(horizon * self.n_y, horizon * self.n_u);
        let mut unit = zero_inputs;
        for k in 0..horizon * self.n_u {
            unit[k] = 1.0;
            let response = simulate(self, &unit, &rest, 0.0, 0)?.0;
            gain.set_column(k, &Vector::from_vec(response));
            unit[k] = 0.0;
        }
        Ok((Vector::from_vec(free), gain))
    }

    /// Exact multi-step output map `y = [Theta_z Theta_u] [z; u]` for a past
    /// window of `past_len` samples ordered as a regressor `z`.
    pub fn multistep_map(&self, past_len: usize, horizon: usize) -> Result<(Matrix, Matrix)> {
        if past_len < self.lag() {
            return Err(Error::Precondition(format!(
                "past window of {past_len} samples is shorter than the plant lag {}",
                self.lag()
            )));
        }
        let (nu, ny) = (self.n_u, self.n_y);
        let nz = past_len * (nu + ny);
        let mut theta_z = Matrix::zeros(horizon * ny, nz);
        let zero_u = vec![0.0; horizon * nu];
        for k in 0..nz {
            let mut z = Vector::zeros(nz);
            z[k] = 1.0;
            let past = PastWindow::from_regressor(&z, past_len, nu, ny)?;
            let out = simulate(self, &zero_u, &past, 0.0, 0)?.0;
            theta_z.set_column(k, &Vector::from_vec(out));
        }
        let (_, theta_u) = self.prediction_affine(&PastWindow::zeros(past_len, nu, ny), horizon)?;
        Ok((theta_z, theta_u))
    }
}

/// Past input/output samples, oldest first, channel-interleaved per step.
#[derive(Debug, Clone, PartialEq)]
pub struct PastWindow {
    pub n_u: usize,
    pub n_y: usize,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl PastWindow {
    pub fn zeros(len: usize, n_u: usize, n_y: usize) -> Self {
        Self {
            n_u,
            n_y,
            inputs: vec![0.0; len * n_u],
            outputs: vec![0.0; len * n_y],
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n_u.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Split a regressor `z = [u_{t-rho} .. u_{t-1}, y_{t-rho} .. y_{t-1}]`.
    pub fn from_regressor(z: &Vector, len: usize, n_u: usize, n_y: usize) -> Result<Self> {
        ensure_dim("past regressor", len * (n_u + n_y), z.len())?;
        let split = len * n_u;
        Ok(Self {
            n_u,
            n_y,
            inputs: z.as_slice()[..split].to_vec(),
            outputs: z.as_slice()[split..].to_vec(),
        })
    }

    /// Regressor built from the most recent `len` samples.
    pub fn to_regressor(&self, len: usize) -> Result<Vector> {
        if len > self.len() {
            return Err(Error::DimensionMismatch {
                what: "past window length",
                expected: len,
                found: self.len(),
            });
        }
        let u0 = self.inputs.len() - len * self.n_u;
        let y0 = self.outputs.len() - len * self.n_y;
        let mut out = Vec::with_capacity(len * (self.n_u + self.n_y));
        out.extend_from_slice(&self.inputs[u0..]);
        out.extend_from_slice(&self.outputs[y0..]);
        Ok(Vector::from_vec(out))
    }
}

/// Simulates `inputs.len() / n_u` steps from `initial`.
///
/// The recursion runs on the clean outputs; `measured` adds independent
/// Gaussian draws of standard deviation `noise_std` (measurement noise
/// only, never fed back).
pub fn simulate(
    plant: &ArxPlant,
    inputs: &[f64],
    initial: &PastWindow,
    noise_std: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nu, ny) = (plant.n_u, plant.n_y);
    if !inputs.len().is_multiple_of(nu) {
        return Err(Error::InvalidInput("input length is not a multiple of n_u".into()));
    }
    ensure_dim("initial window inputs", nu, initial.n_u)?;
    ensure_dim("initial window outputs", ny, initial.n_y)?;
    let w = initial.len();
    if w < plant.lag() || initial.outputs.len() != w * ny {
        return Err(Error::Precondition(format!(
            "initial window must cover the plant lag {} (got {w} samples)",
            plant.lag()
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidInput("noise_std must be nonnegative".into()));
    }
    let steps = inputs.len() / nu;
    let mut u_hist = Vec::with_capacity((w + steps) * nu);
    u_hist.extend_from_slice(&initial.inputs);
    u_hist.extend_from_slice(inputs);
    let mut y_hist = vec![0.0; (w + steps) * ny];
    y_hist[..w * ny].copy_from_slice(&initial.outputs);
    plant.recurse(&u_hist, &mut y_hist, w, steps)?;
    let clean = y_hist.split_off(w * ny);
    let measured = if noise_std > 0.0 {
        let normal = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidInput(format!("{e}")))?;
        let mut rng = rng::stream(seed, rng::STREAM_OUTPUT_NOISE);
        clean.iter().map(|y| y + normal.sample(&mut rng)).collect()
    } else {
        clean.clone()
    };
    Ok((clean, measured))
}

/// Shape contract for the Hankel data: horizons, channel counts and the
/// number of data columns `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dimensions {
    pub past_horizon: usize,
    pub future_horizon: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub columns: usize,
}

impl Dimensions {
    pub fn new(
        past_horizon: usize,
        future_horizon: usize,
        n_u: usize,
        n_y: usize,
        columns: usize,
    ) -> Result<Self> {
        if past_horizon == 0 || future_horizon == 0 || n_u == 0 || n_y == 0 || columns == 0 {
            return Err(Error::InvalidInput("all dimensions must be positive".into()));
        }
        Ok(Self {
            past_horizon,
            future_horizon,
            n_u,
            n_y,
            columns,
        })
    }

    /// Dimensions for a record of `total` samples (`N = total - rho - T + 1`).
    pub fn from_total_samples(
        past_horizon: usize,
        future_horizon: usize,
        n_u: usize,
        n_y: usize,
        total: usize,
    ) -> Result<Self> {
        let overhead = past_horizon + future_horizon;
        if total < overhead {
            return Err(Error::InvalidInput(format!(
                "{total} samples cannot fill a single column with rho + T = {overhead}"
            )));
        }
        Self::new(past_horizon, future_horizon, n_u, n_y, total + 1 - overhead)
    }

    /// Length of the past regressor `z`.
    pub fn n_z(&self) -> usize {
        self.past_horizon * (self.n_u + self.n_y)
    }

    /// Length of the full regressor `phi = [z; u]`.
    pub fn n_phi(&self) -> usize {
        self.n_z() + self.future_horizon * self.n_u
    }

    /// Length of the future input vector.
    pub fn n_future_u(&self) -> usize {
        self.future_horizon * self.n_u
    }

    /// Length of the predicted output vector.
    pub fn n_future_y(&self) -> usize {
        self.future_horizon * self.n_y
    }

    /// `rho + T + N - 1`.
    pub fn total_samples(&self) -> usize {
        self.past_horizon + self.future_horizon + self.columns - 1
    }

    pub fn with_columns(&self, columns: usize) -> Result<Self> {
        Self::new(self.past_horizon, self.future_horizon, self.n_u, self.n_y, columns)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub n_u: usize,
    pub n_y: usize,
    /// `samples * n_u` values, time-major.
    pub inputs: Vec<f64>,
    pub measured_outputs: Vec<f64>,
    pub clean_outputs: Vec<f64>,
    pub seed: u64,
}

impl TrainingRecord {
    pub fn samples(&self) -> usize {
        self.inputs.len() / self.n_u.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.samples();
        ensure_dim("input samples", n * self.n_u, self.inputs.len())?;
        ensure_dim("measured outputs", n * self.n_y, self.measured_outputs.len())?;
        ensure_dim("clean outputs", n * self.n_y, self.clean_outputs.len())?;
        Ok(())
    }
}

/// Saturated Gaussian excitation, burn-in discarded, measurement noise on
/// the recorded outputs.
pub fn generate_training(
    plant: &ArxPlant,
    dims: &Dimensions,
    input_std: f64,
    input_bounds: (f64, f64),
    noise_std: f64,
    seed: u64,
) -> Result<TrainingRecord> {
    if !(input_std > 0.0) {
        return Err(Error::InvalidInput("input_std must be positive".into()));
    }
    let (lo, hi) = input_bounds;
    if !(lo <= hi) {
        return Err(Error::InvalidInput("input bounds are inverted".into()));
    }
    ensure_dim("plant inputs", dims.n_u, plant.n_u)?;
    ensure_dim("plant outputs", dims.n_y, plant.n_y)?;
    let keep = dims.total_samples();
    let burn_in = dims.past_horizon + plant.lag();
    let steps = keep + burn_in;

    let normal = Normal::new(0.0, input_std).map_err(|e| Error::InvalidInput(format!("{e}")))?;
    let mut rng = rng::stream(seed, rng::STREAM_INPUT);
    let inputs: Vec<f64> = (0..steps * plant.n_u)
        .map(|_| normal.sample(&mut rng).clamp(lo, hi))
        .collect();
    let start = PastWindow::zeros(plant.lag(), plant.n_u, plant.n_y);
    let (clean, measured) = simulate(plant, &inputs, &start, noise_std, seed)?;

    Ok(TrainingRecord {
        n_u: plant.n_u,
        n_y: plant.n_y,
        inputs: inputs[burn_in * plant.n_u..].to_vec(),
        measured_outputs: measured[burn_in * plant.n_y..].to_vec(),
        clean_outputs: clean[burn_in * plant.n_y..].to_vec(),
        seed,
    })
}

/// Hankel data matrices built from one training record.
#[derive(Debug, Clone)]
pub struct RegressorBundle {
    pub z: Matrix,
    pub u: Matrix,
    pub y: Matrix,
    pub phi: Matrix,
    pub dims: Dimensions,
}

impl RegressorBundle {
    pub fn columns(&self) -> usize {
        self.dims.columns
    }

    pub fn regressor(&self, column: usize) -> Vector {
        self.phi.column(column).into_owned()
    }
}

pub fn build_bundle(record: &TrainingRecord, dims: &Dimensions) -> Result<RegressorBundle> {
    record.validate()?;
    ensure_dim("record samples", dims.total_samples(), record.samples())?;
    ensure_dim("record inputs", dims.n_u, record.n_u)?;
    ensure_dim("record outputs", dims.n_y, record.n_y)?;
    let (rho, t, nu, ny, n) = (
        dims.past_horizon,
        dims.future_horizon,
        dims.n_u,
        dims.n_y,
        dims.columns,
    );
    let u_at = |s: usize, c: usize| record.inputs[s * nu + c];
    let y_at = |s: usize, c: usize| record.measured_outputs[s * ny + c];

    let z = Matrix::from_fn(dims.n_z(), n, |r, j| {
        if r < rho * nu {
            u_at(j + r / nu, r % nu)
        } else {
            let r = r - rho * nu;
            y_at(j + r / ny, r % ny)
        }
    });
    let u = Matrix::from_fn(t * nu, n, |r, j| u_at(j + rho + r / nu, r % nu));
    let y = Matrix::from_fn(t * ny, n, |r, j| y_at(j + rho + r / ny, r % ny));
    let phi = vstack(&[&z, &u])?;
    Ok(RegressorBundle {
        z,
        u,
        y,
        phi,
        dims: *dims,
    })
}

/// `phi = [z; u]`.
pub fn build_regressor(dims: &Dimensions, z: &Vector, u: &Vector) -> Result<Vector> {
    ensure_dim("past regressor", dims.n_z(), z.len())?;
    ensure_dim("future inputs", dims.n_future_u(), u.len())?;
    let mut out = Vector::zeros(z.len() + u.len());
    out.rows_mut(0, z.len()).copy_from(z);
    out.rows_mut(z.len(), u.len()).copy_from(u);
    Ok(out)
}
