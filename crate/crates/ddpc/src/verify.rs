//! Equivalence suites as JSON lines.

use ddpc_core::controllers::Regularizer;
use ddpc_core::equivalence::{
    closed_form_suite, gamma_suite, identities_suite, deepc_suite, EquivalenceReport, IdentityReport, Verdict,
};
use serde_json::{json, Map, Value};

use crate::Result;

pub const BETAS: [f64; 3] = [0.1, 10.0, 1000.0];

fn pairs(p: &[(&'static str, f64)]) -> Value {
    Value::Object(p.iter().map(|(k, v)| (k.to_string(), json!(v))).collect::<Map<_, _>>())
}

pub fn report_json(r: &EquivalenceReport) -> Value {
    let instance = r.descriptor.map(|d| {
        json!({
            "id": d.id,
            "seed": d.seed,
            "rho": d.past_horizon,
            "T": d.future_horizon,
            "N": d.columns,
            "regime": d.regime.as_str(),
            "noise_std": d.noise_std,
        })
    });
    json!({
        "check": r.check,
        "instance": instance,
        "params": pairs(&r.params),
        "max_u_gap": r.max_u_gap,
        "max_yhat_gap": r.max_yhat_gap,
        "objective_gap": r.objective_gap,
        "tolerance": r.tolerance,
        "objective_tolerance": r.objective_tolerance,
        "full_slack_rank": r.full_slack_rank,
        "extra": pairs(&r.extra),
        "verdict": r.verdict.as_str(),
        "note": r.note,
    })
}

pub fn identity_json(index: usize, r: &IdentityReport) -> Value {
    json!({
        "check": "identities",
        "bundle": index,
        "delta_identity": r.delta_identity,
        "phi_identity": r.phi_identity,
        "pinv_gram_max": r.pinv_gram_max,
        "pinv_gram_outside_range": r.pinv_gram_outside_range,
        "verdict": r.verdict.as_str(),
    })
}

/// All suites with `instances` instances each (and as many identity bundles).
/// Returns the JSON lines and whether every line passed.
pub fn run_all(instances: usize, seed: u64) -> Result<(Vec<Value>, bool)> {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut push = |r: &EquivalenceReport, lines: &mut Vec<Value>| {
        ok &= r.verdict == Verdict::Pass;
        lines.push(report_json(r));
    };
    for reg in [Regularizer::L2, Regularizer::Projection] {
        for r in deepc_suite(instances, seed, reg, &BETAS)? {
            push(&r, &mut lines);
        }
    }
    for r in gamma_suite(instances, seed.wrapping_add(1))? {
        push(&r, &mut lines);
    }
    for r in closed_form_suite(instances, seed.wrapping_add(2))? {
        push(&r, &mut lines);
    }
    for (i, r) in identities_suite(instances, seed.wrapping_add(3))?.iter().enumerate() {
        ok &= r.verdict == Verdict::Pass;
        lines.push(identity_json(i, r));
    }
    Ok((lines, ok))
}
