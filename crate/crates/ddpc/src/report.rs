//! `results.csv` and `summary.csv`.
//!
//! Floats use Rust's shortest round-trip formatting, so identical runs give
//! identical bytes. Failed runs print `NaN` metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ddpc_core::bench::{summarize, Quartiles, RunResult, SummaryRow};

use crate::{io_err, Result};

pub const RESULTS_HEADER: &str =
    "controller,total_samples,lambda2,train_index,noise_index,train_seed,noise_seed,j_star,j_oracle,slack_ms,status";

pub const SUMMARY_HEADER: &str = "controller,total_samples,lambda2,runs,failed,\
j_star_q1,j_star_median,j_star_q3,j_oracle_q1,j_oracle_median,j_oracle_q3,slack_ms_q1,slack_ms_median,slack_ms_q3";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn result_line(r: &RunResult) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.controller.as_str(),
        r.total_samples,
        opt(r.lambda2),
        r.train_index,
        r.noise_index,
        r.train_seed,
        r.noise_seed,
        r.j_star,
        r.j_oracle,
        r.slack_ms,
        r.status.as_str()
    )
}

/// Streaming writer for `results.csv`.
pub struct ResultsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ResultsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        writeln!(w.out, "{RESULTS_HEADER}").map_err(io_err(path))?;
        Ok(w)
    }

    pub fn write(&mut self, rows: &[RunResult]) -> Result<()> {
        for r in rows {
            writeln!(self.out, "{}", result_line(r)).map_err(io_err(&self.path))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

fn quart(q: &Option<Quartiles>) -> String {
    match q {
        Some(q) => format!("{},{},{}", q.q1, q.median, q.q3),
        None => ",,".to_string(),
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.controller.as_str(),
            r.total_samples,
            opt(r.lambda2),
            r.runs,
            r.failed,
            quart(&r.j_star),
            quart(&r.j_oracle),
            quart(&r.slack_ms)
        ));
    }
    s
}

pub fn write_summary(path: &Path, results: &[RunResult]) -> Result<Vec<SummaryRow>> {
    let rows = summarize(results);
    std::fs::write(path, summary_csv(&rows)).map_err(io_err(path))?;
    Ok(rows)
}
