//! Single-input single-output training records as CSV.
//!
//! ```text
//! # rho=20 T=30 N=70 seed=7 coeffs=1.2,-0.3,-0.1/0.5,-0.4,0.1
//! t,u,y_measured,y_clean
//! 0,4.1e-1,...
//! ```
//!
//! `coeffs` lists the output coefficients, a slash, then the input
//! coefficients. Values are written with 17 significant digits so a
//! save/load round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ddpc_core::sysdata::{Dimensions, TrainingRecord};

use crate::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub past_horizon: usize,
    pub future_horizon: usize,
    pub columns: usize,
    pub seed: u64,
    pub output_coeffs: Vec<f64>,
    pub input_coeffs: Vec<f64>,
}

impl DatasetHeader {
    pub fn new(dims: &Dimensions, seed: u64, output_coeffs: &[f64], input_coeffs: &[f64]) -> Self {
        Self {
            past_horizon: dims.past_horizon,
            future_horizon: dims.future_horizon,
            columns: dims.columns,
            seed,
            output_coeffs: output_coeffs.to_vec(),
            input_coeffs: input_coeffs.to_vec(),
        }
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

pub fn to_csv(header: &DatasetHeader, record: &TrainingRecord) -> Result<String> {
    if record.n_u != 1 || record.n_y != 1 {
        return Err(Error::Config("dataset CSV holds single-input single-output records only".into()));
    }
    record.validate()?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# rho={} T={} N={} seed={} coeffs={}/{}",
        header.past_horizon,
        header.future_horizon,
        header.columns,
        header.seed,
        join(&header.output_coeffs),
        join(&header.input_coeffs)
    );
    s.push_str("t,u,y_measured,y_clean\n");
    for t in 0..record.samples() {
        let _ = writeln!(
            s,
            "{t},{:.16e},{:.16e},{:.16e}",
            record.inputs[t], record.measured_outputs[t], record.clean_outputs[t]
        );
    }
    Ok(s)
}

pub fn save(path: &Path, header: &DatasetHeader, record: &TrainingRecord) -> Result<()> {
    fs::write(path, to_csv(header, record)?).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<(DatasetHeader, TrainingRecord)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse(&text).map_err(|(line, msg)| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

type ParseResult<T> = std::result::Result<T, (usize, String)>;

fn number<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> ParseResult<T> {
    s.trim()
        .parse()
        .map_err(|_| (line, format!("cannot parse {what} from {s:?}")))
}

fn parse_header(line: &str) -> ParseResult<DatasetHeader> {
    let body = line
        .strip_prefix('#')
        .ok_or((1, "expected a '# rho=.. T=.. N=.. seed=.. coeffs=..' header".to_string()))?;
    let (mut rho, mut t, mut n, mut seed, mut coeffs) = (None, None, None, None, None);
    for field in body.split_whitespace() {
        let (k, v) = field
            .split_once('=')
            .ok_or_else(|| (1, format!("header field {field:?} is not key=value")))?;
        match k {
            "rho" => rho = Some(number(1, "rho", v)?),
            "T" => t = Some(number(1, "T", v)?),
            "N" => n = Some(number(1, "N", v)?),
            "seed" => seed = Some(number(1, "seed", v)?),
            "coeffs" => {
                let (a, b) = v
                    .split_once('/')
                    .ok_or((1, "coeffs must be '<output list>/<input list>'".to_string()))?;
                let list = |s: &str| -> ParseResult<Vec<f64>> {
                    s.split(',').filter(|x| !x.is_empty()).map(|x| number(1, "coefficient", x)).collect()
                };
                coeffs = Some((list(a)?, list(b)?));
            }
            other => return Err((1, format!("unknown header field {other:?}"))),
        }
    }
    let missing = |k: &str| (1, format!("header is missing {k}"));
    let (output_coeffs, input_coeffs) = coeffs.ok_or_else(|| missing("coeffs"))?;
    Ok(DatasetHeader {
        past_horizon: rho.ok_or_else(|| missing("rho"))?,
        future_horizon: t.ok_or_else(|| missing("T"))?,
        columns: n.ok_or_else(|| missing("N"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        output_coeffs,
        input_coeffs,
    })
}

fn parse(text: &str) -> ParseResult<(DatasetHeader, TrainingRecord)> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or((1, "empty file".to_string()))?;
    let header = parse_header(first)?;
    match lines.next() {
        Some((_, l)) if l.trim() == "t,u,y_measured,y_clean" => {}
        Some((i, l)) => return Err((i, format!("expected column line 't,u,y_measured,y_clean', found {l:?}"))),
        None => return Err((2, "missing column line".to_string())),
    }
    let mut record = TrainingRecord {
        n_u: 1,
        n_y: 1,
        inputs: Vec::new(),
        measured_outputs: Vec::new(),
        clean_outputs: Vec::new(),
        seed: header.seed,
    };
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 4 {
            return Err((i, format!("expected 4 fields, found {}", cells.len())));
        }
        let t: usize = number(i, "t", cells[0])?;
        if t != record.inputs.len() {
            return Err((i, format!("expected t = {}, found {t}", record.inputs.len())));
        }
        let vals: [f64; 3] = [
            number(i, "u", cells[1])?,
            number(i, "y_measured", cells[2])?,
            number(i, "y_clean", cells[3])?,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err((i, "non-finite value".to_string()));
        }
        record.inputs.push(vals[0]);
        record.measured_outputs.push(vals[1]);
        record.clean_outputs.push(vals[2]);
    }
    let need = header.past_horizon + header.future_horizon + header.columns - 1;
    if record.samples() != need {
        return Err((
            text.lines().count(),
            format!("header implies {need} samples (rho + T + N - 1), found {}", record.samples()),
        ));
    }
    Ok((header, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddpc_core::sysdata::{generate_training, ArxPlant};

    fn sample() -> (DatasetHeader, TrainingRecord) {
        let plant = ArxPlant::third_order_benchmark();
        let dims = Dimensions::new(3, 4, 1, 1, 12).unwrap();
        let rec = generate_training(&plant, &dims, 0.6, (-1.0, 1.0), 0.1, 9).unwrap();
        let (a, b) = plant.siso_coeffs().unwrap();
        (DatasetHeader::new(&dims, 9, &a, &b), rec)
    }

    #[test]
    fn round_trip_is_exact() {
        let (h, r) = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save(&path, &h, &r).unwrap();
        let (h2, r2) = load(&path).unwrap();
        assert_eq!(h, h2);
        assert_eq!(r, r2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let (h, r) = sample();
        let text = to_csv(&h, &r).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[5] = "3,0.1,abc,0.2".into();
        let err = parse(&lines.join("\n")).unwrap_err();
        assert_eq!(err.0, 6);
        assert!(err.1.contains("y_measured"));

        let short: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(parse(&short).unwrap_err().1.contains("samples"));
        assert_eq!(parse("rho=1").unwrap_err().0, 1);
    }
}
