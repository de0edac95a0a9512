//! Directional trends of the benchmark on a reduced grid.

use ddpc::sweep::run_sweep;
use ddpc_core::bench::{summarize, ControllerKind, ExperimentConfig, SummaryRow};

fn median(rows: &[SummaryRow], c: ControllerKind, n: usize, l2: Option<f64>, pick: fn(&SummaryRow) -> f64) -> f64 {
    rows.iter()
        .find(|r| r.controller == c && r.total_samples == n && r.lambda2 == l2)
        .map(pick)
        .expect("row present")
}

#[test]
fn reduced_grid_trends() {
    let cfg = ExperimentConfig {
        total_samples: vec![119, 1000, 10_000],
        lambda2: vec![1.0, 1000.0],
        train_realizations: 8,
        noise_realizations: 5,
        base_seed: 11,
        ..ExperimentConfig::desk_scale()
    };
    let out = run_sweep(&cfg, None, |_| Ok(())).unwrap();
    assert!(out.results.iter().all(|r| r.j_star >= 0.0 && r.j_oracle >= 0.0));
    let rows = summarize(&out.results);
    let slack = |r: &SummaryRow| r.slack_ms.unwrap().median;
    let jstar = |r: &SummaryRow| r.j_star.unwrap().median;
    let jo = |r: &SummaryRow| r.j_oracle.unwrap().median;

    for l2 in [1.0, 1000.0] {
        let s: Vec<f64> = cfg.total_samples.iter().map(|&n| median(&rows, ControllerKind::Deepc, n, Some(l2), slack)).collect();
        assert_eq!(s[0], 0.0);
        assert!(s.windows(2).all(|w| w[1] >= w[0]), "l2 = {l2}: {s:?}");
    }

    let (small, big) = (119, 10_000);
    let d1 = median(&rows, ControllerKind::Deepc, big, Some(1.0), jstar);
    let d1000 = median(&rows, ControllerKind::Deepc, big, Some(1000.0), jstar);
    let spc = median(&rows, ControllerKind::Spc, big, None, jstar);
    assert!(d1 > d1000 && d1000 >= spc, "{d1} {d1000} {spc}");

    let spc_small = median(&rows, ControllerKind::Spc, small, None, jstar);
    for l2 in [1.0, 1000.0] {
        let d = median(&rows, ControllerKind::Deepc, small, Some(l2), jstar);
        assert!((d - spc_small).abs() <= 0.2 * spc_small, "{d} vs {spc_small}");
    }
    assert!(median(&rows, ControllerKind::CausalSpc, small, None, jo) <= median(&rows, ControllerKind::Spc, small, None, jo));
}
