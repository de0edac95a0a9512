//! Inspection dump of a fitted predictor: row-major matrices with shapes.

use std::path::Path;

use ddpc_core::estimation::PredictorModel;
use ddpc_core::numkit::Matrix;
use serde_json::{json, Value};

use crate::{io_err, Result};

fn matrix(m: &Matrix) -> Value {
    let data: Vec<f64> = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub fn to_json(model: &PredictorModel) -> Value {
    let d = &model.dims;
    json!({
        "dims": {
            "rho": d.past_horizon,
            "T": d.future_horizon,
            "n_u": d.n_u,
            "n_y": d.n_y,
            "N": d.columns,
        },
        "causal": model.causal,
        "theta": matrix(&model.theta),
        "sigma_delta": matrix(&model.sigma_delta),
        "sigma_phi": matrix(&model.sigma_phi),
        "rank_delta": model.delta_weights.len(),
        "rank_phi": model.phi_weights.len(),
    })
}

pub fn save(path: &Path, model: &PredictorModel) -> Result<()> {
    let text = serde_json::to_string_pretty(&to_json(model)).expect("json values serialize");
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddpc_core::estimation::fit_least_squares;
    use ddpc_core::sysdata::{build_bundle, generate_training, ArxPlant, Dimensions};

    #[test]
    fn row_major_layout() {
        let plant = ArxPlant::third_order_benchmark();
        let dims = Dimensions::new(3, 2, 1, 1, 30).unwrap();
        let rec = generate_training(&plant, &dims, 0.6, (-1.0, 1.0), 0.1, 1).unwrap();
        let model = fit_least_squares(&build_bundle(&rec, &dims).unwrap()).unwrap();
        let v = to_json(&model);
        assert_eq!(v["theta"]["rows"], 2);
        assert_eq!(v["theta"]["cols"], 8);
        assert_eq!(v["theta"]["data"][1].as_f64().unwrap(), model.theta[(0, 1)]);
        assert_eq!(v["theta"]["data"][8].as_f64().unwrap(), model.theta[(1, 0)]);
        assert_eq!(v["rank_delta"], 2);
    }
}
