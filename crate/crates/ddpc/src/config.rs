//! Flat `key = value` experiment files.
//!
//! Keys mirror [`ExperimentConfig`]; lists are comma separated and `#`
//! starts a comment. Unset keys keep the preset value.
//!
//! ```text
//! output_coeffs = 1.2, -0.3, -0.1
//! input_coeffs = 0.5, -0.4, 0.1
//! past_horizon = 20
//! future_horizon = 30
//! q = 1
//! r = 0.1
//! setpoint = 0.75
//! input_box = -1, 1
//! input_std = 0.6
//! noise_std = 0.1
//! past_noise_std = 0.1
//! total_samples = 119, 300, 1000, 3000, 10000
//! lambda2 = 1, 10, 100, 1000
//! train_realizations = 20
//! noise_realizations = 10
//! base_seed = 2024
//! controllers = oracle, spc, cspc, deepc
//! output_dir = bench_out
//! ```

use std::path::Path;

use ddpc_core::bench::{ControllerKind, ExperimentConfig};

use crate::{io_err, Error, Result};

pub const KEYS: &[&str] = &[
    "output_coeffs",
    "input_coeffs",
    "past_horizon",
    "future_horizon",
    "q",
    "r",
    "setpoint",
    "input_box",
    "input_std",
    "noise_std",
    "past_noise_std",
    "total_samples",
    "lambda2",
    "train_realizations",
    "noise_realizations",
    "base_seed",
    "controllers",
    "output_dir",
];

fn scalar<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|x| scalar(x.trim())).collect()
}

fn apply(cfg: &mut ExperimentConfig, key: &str, v: &str) -> std::result::Result<(), String> {
    match key {
        "output_coeffs" => cfg.output_coeffs = list(v)?,
        "input_coeffs" => cfg.input_coeffs = list(v)?,
        "past_horizon" => cfg.past_horizon = scalar(v)?,
        "future_horizon" => cfg.future_horizon = scalar(v)?,
        "q" => cfg.q = scalar(v)?,
        "r" => cfg.r = scalar(v)?,
        "setpoint" => cfg.setpoint = scalar(v)?,
        "input_box" => match list::<f64>(v)?.as_slice() {
            [lo, hi] => cfg.input_box = (*lo, *hi),
            _ => return Err("input_box takes two values: lower, upper".into()),
        },
        "input_std" => cfg.input_std = scalar(v)?,
        "noise_std" => cfg.noise_std = scalar(v)?,
        "past_noise_std" => cfg.past_noise_std = scalar(v)?,
        "total_samples" => cfg.total_samples = list(v)?,
        "lambda2" => cfg.lambda2 = list(v)?,
        "train_realizations" => cfg.train_realizations = scalar(v)?,
        "noise_realizations" => cfg.noise_realizations = scalar(v)?,
        "base_seed" => cfg.base_seed = scalar(v)?,
        "controllers" => {
            cfg.controllers = v
                .split(',')
                .map(|c| ControllerKind::parse(c).ok_or_else(|| format!("unknown controller {:?}", c.trim())))
                .collect::<std::result::Result<_, _>>()?
        }
        "output_dir" => cfg.output_dir = v.to_string(),
        other => return Err(format!("unknown key {other:?}")),
    }
    Ok(())
}

/// Applies the assignments in `text` on top of `base`, then validates.
pub fn parse_str(text: &str, base: ExperimentConfig, origin: &Path) -> Result<ExperimentConfig> {
    let mut cfg = base;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
        apply(&mut cfg, k.trim(), v.trim()).map_err(err)?;
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load(path: &Path, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_str(&text, base, path)
}

/// Renders a config in the file format; `parse_str(render(c))` returns `c`.
pub fn render(cfg: &ExperimentConfig) -> String {
    fn join<T: ToString>(v: &[T]) -> String {
        v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
    }
    let controllers: Vec<&str> = cfg.controllers.iter().map(|c| c.as_str()).collect();
    [
        format!("output_coeffs = {}", join(&cfg.output_coeffs)),
        format!("input_coeffs = {}", join(&cfg.input_coeffs)),
        format!("past_horizon = {}", cfg.past_horizon),
        format!("future_horizon = {}", cfg.future_horizon),
        format!("q = {}", cfg.q),
        format!("r = {}", cfg.r),
        format!("setpoint = {}", cfg.setpoint),
        format!("input_box = {}, {}", cfg.input_box.0, cfg.input_box.1),
        format!("input_std = {}", cfg.input_std),
        format!("noise_std = {}", cfg.noise_std),
        format!("past_noise_std = {}", cfg.past_noise_std),
        format!("total_samples = {}", join(&cfg.total_samples)),
        format!("lambda2 = {}", join(&cfg.lambda2)),
        format!("train_realizations = {}", cfg.train_realizations),
        format!("noise_realizations = {}", cfg.noise_realizations),
        format!("base_seed = {}", cfg.base_seed),
        format!("controllers = {}", controllers.join(", ")),
        format!("output_dir = {}", cfg.output_dir),
    ]
    .join("\n")
        + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn origin() -> PathBuf {
        PathBuf::from("test.cfg")
    }

    #[test]
    fn overrides_and_comments() {
        let text = "# small run\nlambda2 = 1, 1000  # two values\n\ntrain_realizations=3\ncontrollers = spc, deepc\n";
        let cfg = parse_str(text, ExperimentConfig::desk_scale(), &origin()).unwrap();
        assert_eq!(cfg.lambda2, vec![1.0, 1000.0]);
        assert_eq!(cfg.train_realizations, 3);
        assert_eq!(cfg.controllers, vec![ControllerKind::Spc, ControllerKind::Deepc]);
        assert_eq!(cfg.past_horizon, 20);
    }

    #[test]
    fn render_round_trips() {
        let cfg = ExperimentConfig::paper_scale();
        let back = parse_str(&render(&cfg), ExperimentConfig::desk_scale(), &origin()).unwrap();
        assert_eq!(cfg, back);
        let text = render(&cfg);
        for k in KEYS {
            assert!(text.contains(&format!("{k} = ")), "{k}");
        }
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_str("q = 1\nbogus = 2\n", ExperimentConfig::desk_scale(), &origin()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_str("q = 1\nlambda2 = 1, x\n", ExperimentConfig::desk_scale(), &origin()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_str("train_realizations = 0\n", ExperimentConfig::desk_scale(), &origin()).unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{e}");
        let e = parse_str("total_samples =\n", ExperimentConfig::desk_scale(), &origin()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }), "{e}");
    }
}
