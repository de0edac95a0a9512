use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ddpc::config;
use ddpc::report::{write_summary, ResultsWriter};
use ddpc::sweep::run_sweep;
use ddpc::{dataset, model_json, plot, verify, Error};
use ddpc_core::bench::{evaluate_cell, oracle_plan, train_cell, ExperimentConfig};
use ddpc_core::sysdata::generate_training;

#[derive(Parser)]
#[command(name = "ddpc", version, about = "Data-driven predictive control benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo sweep over training length and slack weight.
    Bench {
        /// key = value file; unset keys keep the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from the 200 x 30 realization preset instead of 20 x 10.
        #[arg(long)]
        paper_scale: bool,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Direct/indirect equivalence suites; one JSON object per line.
    Verify {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// One benchmark instance; prints J* and J_oracle per controller.
    Demo {
        #[arg(long, default_value_t = 1000)]
        total_samples: usize,
        #[arg(long, default_value_t = 0)]
        train_index: usize,
        #[arg(long, default_value_t = 0)]
        noise_index: usize,
        /// Also write the training data and the fitted model here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Parse { .. } | Error::Config(_) => ExitCode::from(3),
        Error::Core(ddpc_core::Error::InvalidInput(_)) => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn bench(config: Option<PathBuf>, out: Option<PathBuf>, paper_scale: bool, jobs: Option<usize>) -> ddpc::Result<ExitCode> {
    let base = if paper_scale {
        ExperimentConfig::paper_scale()
    } else {
        ExperimentConfig::desk_scale()
    };
    let mut cfg = match &config {
        Some(p) => config::load(p, base)?,
        None => base,
    };
    if let Some(o) = &out {
        cfg.output_dir = o.display().to_string();
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    let dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    let cfg_path = dir.join("config.txt");
    std::fs::write(&cfg_path, config::render(&cfg)).map_err(|source| Error::Io { path: cfg_path, source })?;

    let start = Instant::now();
    eprintln!("{} runs over {} cells", cfg.run_count(), cfg.total_samples.len() * cfg.train_realizations);
    let mut writer = ResultsWriter::create(&dir.join("results.csv"))?;
    let outcome = run_sweep(&cfg, jobs, |rows| writer.write(rows))?;
    writer.finish()?;
    let summary = write_summary(&dir.join("summary.csv"), &outcome.results)?;
    plot::write_figures(&dir, &summary)?;
    eprintln!("done in {:.1} s, results in {}", start.elapsed().as_secs_f64(), dir.display());

    let failed = outcome.results.iter().filter(|r| !r.j_star.is_finite()).count();
    if failed > 0 {
        eprintln!("{failed} runs failed ({} untrainable cells)", outcome.failed_cells.len());
    }
    Ok(if outcome.any_infeasible() {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn demo(total: usize, train_index: usize, noise_index: usize, out: Option<PathBuf>) -> ddpc::Result<ExitCode> {
    let cfg = ExperimentConfig {
        total_samples: vec![total],
        ..ExperimentConfig::desk_scale()
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    let cell = train_cell(&cfg, total, train_index)?;
    let oracle = oracle_plan(&cfg)?;
    println!(
        "N_bar = {total} (N = {} columns), rank Sigma_delta = {}, train seed {}",
        cell.dims.columns,
        cell.least_squares.delta_weights.len(),
        cell.train_seed
    );
    println!("{:<14} {:>12} {:>12} {:>12}  status", "controller", "J*", "J_oracle", "slack_ms");
    for r in evaluate_cell(&cfg, &cell, &oracle, noise_index)? {
        let name = match r.lambda2 {
            Some(l) => format!("{} l2={l}", r.controller.as_str()),
            None => r.controller.as_str().to_string(),
        };
        println!("{name:<14} {:>12.6} {:>12.6} {:>12.3e}  {}", r.j_star, r.j_oracle, r.slack_ms, r.status.as_str());
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
        let plant = cfg.plant()?;
        let record = generate_training(&plant, &cell.dims, cfg.input_std, cfg.input_box, cfg.noise_std, cell.train_seed)?;
        let header = dataset::DatasetHeader::new(&cell.dims, cell.train_seed, &cfg.output_coeffs, &cfg.input_coeffs);
        dataset::save(&dir.join("dataset.csv"), &header, &record)?;
        model_json::save(&dir.join("model.json"), &cell.least_squares)?;
        println!("wrote {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Bench {
            config,
            out,
            paper_scale,
            jobs,
        } => bench(config, out, paper_scale, jobs),
        Command::Verify { instances, seed } => verify::run_all(instances, seed).map(|(lines, ok)| {
            for l in &lines {
                println!("{l}");
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }),
        Command::Demo {
            total_samples,
            train_index,
            noise_index,
            out,
        } => demo(total_samples, train_index, noise_index, out),
    };
    res.unwrap_or_else(fail)
}
