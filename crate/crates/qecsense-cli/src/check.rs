//! Correctability reports: evaluates every declared error set of a protocol
//! against the recoverability condition and compares the verdict with the
//! protocol's own declaration.

use std::path::Path;

use serde_json::{json, Value};

use qecsense::protocols::{
    build_protocol, check_correctability, CorrectabilityReport, ProtocolParams, PROTOCOL_NAMES,
};

use crate::CliError;

/// Representative build parameters per protocol. The correctability
/// verdicts are structural (they depend on the code words and error
/// operators, not on coupling values), so any parameter set that builds is
/// equivalent here; these are modest, perturbatively valid demo values.
pub fn demo_params(name: &str) -> ProtocolParams {
    let mut p = ProtocolParams::default();
    match name {
        "pulsed_dd" => {
            p.omega = 10.0;
        }
        "raman_t1" => {
            p.g = 2.0;
            p.omega = 2.0;
            p.delta = 40.0;
        }
        "ramsey_flipflop" => {
            p.omega = 1.0;
            p.delta = 0.2;
        }
        "sideband" => {
            p.eta = 0.1;
            p.omega = 10.0;
            p.gamma = 0.5;
        }
        "ms" => {
            p.delta = 100.0;
            p.extra.insert("epsilon".into(), 0.05);
        }
        "superradiance" => {
            p.omega_g = 0.5;
        }
        _ => {}
    }
    p
}

struct SetVerdict {
    report: CorrectabilityReport,
    expected: bool,
    matches: bool,
}

fn check_one(name: &str) -> Result<Vec<SetVerdict>, CliError> {
    let spec = build_protocol(name, &demo_params(name)).map_err(CliError::from_qec)?;
    Ok(spec
        .error_sets
        .iter()
        .map(|set| {
            let report = check_correctability(&spec.code, set);
            let matches = report.correctable == set.expect_correctable;
            SetVerdict {
                report,
                expected: set.expect_correctable,
                matches,
            }
        })
        .collect())
}

fn verdict_json(protocol: &str, sets: &[SetVerdict]) -> Value {
    let sets: Vec<Value> = sets
        .iter()
        .map(|v| {
            let errors: Vec<Value> = v
                .report
                .errors
                .iter()
                .map(|e| {
                    json!({
                        "name": e.name,
                        "correctable": e.correctable,
                        "violation_norm": e.violation_norm,
                        "distinguishable_from_signal": e.distinguishable_from_signal,
                    })
                })
                .collect();
            json!({
                "set": v.report.set_name,
                "correctable": v.report.correctable,
                "expected_correctable": v.expected,
                "matches_expectation": v.matches,
                "max_violation": v.report.max_violation,
                "errors": errors,
            })
        })
        .collect();
    json!({"protocol": protocol, "sets": sets})
}

pub fn run_check(target: &str, out: Option<&Path>) -> Result<(), CliError> {
    let names: Vec<&str> = if target == "all" {
        PROTOCOL_NAMES.to_vec()
    } else if PROTOCOL_NAMES.contains(&target) {
        vec![target]
    } else {
        return Err(CliError::validation(format!(
            "unknown protocol '{target}'; available: all, {}",
            PROTOCOL_NAMES.join(", ")
        )));
    };

    let mut mismatches = 0usize;
    let mut entries = Vec::new();
    println!(
        "{:<18} {:<18} {:<16} {:<16} {:>14}  status",
        "protocol", "error set", "verdict", "declared", "max violation"
    );
    for name in names {
        let sets = check_one(name)?;
        for v in &sets {
            let as_word = |b: bool| if b { "correctable" } else { "not-correctable" };
            println!(
                "{:<18} {:<18} {:<16} {:<16} {:>14.3e}  {}",
                name,
                v.report.set_name,
                as_word(v.report.correctable),
                as_word(v.expected),
                v.report.max_violation,
                if v.matches { "ok" } else { "MISMATCH" }
            );
            if !v.matches {
                mismatches += 1;
            }
        }
        entries.push(verdict_json(name, &sets));
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
        let path = dir.join("check.json");
        let doc = json!({
            "target": target,
            "all_match": mismatches == 0,
            "mismatches": mismatches,
            "protocols": entries,
        });
        let text = serde_json::to_string_pretty(&doc)
            .map_err(|e| CliError::runtime(format!("check serialization: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        println!("report written to {}", path.display());
    }

    if mismatches > 0 {
        Err(CliError::CheckMismatch(mismatches))
    } else {
        Ok(())
    }
}
