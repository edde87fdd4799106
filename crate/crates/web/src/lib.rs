//! Browser bindings for the `www/` demo page.
//!
//! Each export takes plain numbers or a JSON family description and returns
//! a JSON string. The `*_json` functions hold the logic and run natively.

use serde::Serialize;
use symposc::focal::{focal_count, Direction};
use symposc::lambdascan::{scan_rank_jumps, theta_jumps, BBlockTarget, JumpEvent, RhoTarget};
use symposc::osccount::{count_eigenvalues, CountMethod};
use symposc::symplectic::{Anchor, SymplecticFamily};
use symposc::systems::{trig_family, FamilySpec};
use symposc::ToleranceConfig;
use wasm_bindgen::prelude::*;

/// Upper bound on staircase samples per call.
pub const MAX_SAMPLES: usize = 4096;

#[derive(Serialize)]
struct Staircase {
    lambda: Vec<f64>,
    l_d: Vec<usize>,
    eigenvalues: Vec<f64>,
}

#[derive(Serialize)]
struct MethodTotal {
    method: String,
    total: Option<usize>,
    terms: Option<std::collections::BTreeMap<String, i64>>,
    error: Option<String>,
}

#[derive(Serialize)]
struct ScanEvent {
    k: Option<usize>,
    lambda0: f64,
    left_rank: usize,
    point_rank: usize,
    multiplicity: usize,
}

fn encode<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn family(json: &str) -> Result<std::sync::Arc<dyn SymplecticFamily>, String> {
    let desc: FamilySpec = serde_json::from_str(json).map_err(|e| format!("family: {e}"))?;
    desc.build().map_err(|e| format!("family: {e}"))
}

fn interval(a: f64, b: f64) -> Result<(), String> {
    if a.is_finite() && b.is_finite() && a < b {
        Ok(())
    } else {
        Err(format!("need finite a < b, got ({a}, {b}]"))
    }
}

/// `l_d(lambda)` of the principal solution at 0 of the trigonometric family
/// at `samples` points of `[lo, hi]`, plus the eigenvalues in `(lo, hi]`.
pub fn staircase_json(horizon: usize, lo: f64, hi: f64, samples: usize) -> Result<String, String> {
    interval(lo, hi)?;
    if !(2..=MAX_SAMPLES).contains(&samples) {
        return Err(format!("samples must lie in 2..={MAX_SAMPLES}"));
    }
    let cfg = ToleranceConfig::default();
    let fam = trig_family(horizon).map_err(|e| e.to_string())?;
    let lambda: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .collect();
    let l_d = lambda
        .iter()
        .map(|&l| focal_count(&fam, l, Anchor::Start, Direction::Forward, &cfg).map(|c| c.total))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let eigenvalues = theta_jumps(&fam, lo, hi, &cfg)
        .map_err(|e| e.to_string())?
        .iter()
        .flat_map(|e| std::iter::repeat_n(e.lambda0, e.multiplicity))
        .collect();
    encode(&Staircase {
        lambda,
        l_d,
        eigenvalues,
    })
}

/// Totals of every counting method that needs no transformation input.
/// A failing method reports its error instead of a total.
pub fn count_all_json(family_json: &str, a: f64, b: f64) -> Result<String, String> {
    interval(a, b)?;
    let fam = family(family_json)?;
    let cfg = ToleranceConfig::default();
    let rows: Vec<MethodTotal> = CountMethod::standard()
        .iter()
        .map(|m| match count_eigenvalues(&*fam, a, b, m, &cfg) {
            Ok(r) => MethodTotal {
                method: r.method,
                total: Some(r.total),
                terms: Some(r.terms),
                error: None,
            },
            Err(e) => MethodTotal {
                method: m.name(),
                total: None,
                terms: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    encode(&rows)
}

/// Rank-jump events over `(a, b]`. `target` is `eigen` (`X_{N+1}`),
/// `b-blocks` (`B_k`) or `rho` (`S_k(a) - S_k(lambda)`).
pub fn scan_json(family_json: &str, a: f64, b: f64, target: &str) -> Result<String, String> {
    interval(a, b)?;
    let fam = family(family_json)?;
    let fam = &*fam;
    let cfg = ToleranceConfig::default();
    let tag = |k: Option<usize>, ev: Vec<JumpEvent>| {
        ev.into_iter().map(move |e| ScanEvent {
            k,
            lambda0: e.lambda0,
            left_rank: e.left_rank,
            point_rank: e.point_rank,
            multiplicity: e.multiplicity,
        })
    };
    let mut out = Vec::new();
    match target {
        "eigen" => out.extend(tag(None, theta_jumps(fam, a, b, &cfg).map_err(|e| e.to_string())?)),
        "b-blocks" | "rho" => {
            for k in 0..=fam.horizon() {
                let ev = if target == "rho" {
                    RhoTarget::new(fam, k, a).and_then(|t| scan_rank_jumps(&t, a, b, &cfg))
                } else {
                    scan_rank_jumps(&BBlockTarget { fam, k }, a, b, &cfg)
                }
                .map_err(|e| format!("k = {k}: {e}"))?;
                out.extend(tag(Some(k), ev));
            }
        }
        other => return Err(format!("unknown scan target `{other}`")),
    }
    out.sort_by(|x, y| x.lambda0.total_cmp(&y.lambda0).then(x.k.cmp(&y.k)));
    encode(&out)
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn staircase(horizon: usize, lo: f64, hi: f64, samples: usize) -> Result<String, JsError> {
    js(staircase_json(horizon, lo, hi, samples))
}

#[wasm_bindgen]
pub fn count_all(family_json: &str, a: f64, b: f64) -> Result<String, JsError> {
    js(count_all_json(family_json, a, b))
}

#[wasm_bindgen]
pub fn scan(family_json: &str, a: f64, b: f64, target: &str) -> Result<String, JsError> {
    js(scan_json(family_json, a, b, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;
    use std::f64::consts::PI;

    const TRIG: &str = r#"{"kind": "trig", "N": 5}"#;

    #[test]
    fn staircase_steps_at_multiples_of_pi_over_six() {
        let v: Value = serde_json::from_str(&staircase_json(5, 0.0, PI, 61).unwrap()).unwrap();
        let lambda = v["lambda"].as_array().unwrap();
        let l_d = v["l_d"].as_array().unwrap();
        assert_eq!(lambda.len(), 61);
        for (l, c) in lambda.iter().zip(l_d) {
            let l = l.as_f64().unwrap();
            if l < PI - 1e-12 {
                assert_eq!(c.as_u64().unwrap(), (6.0 * l / PI + 1e-9).floor() as u64, "lambda = {l}");
            }
        }
        let eig: Vec<f64> = v["eigenvalues"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(eig.len(), 6);
        for (p, e) in eig.iter().enumerate() {
            assert!((e - PI * (p + 1) as f64 / 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn all_methods_agree_on_trig_interval() {
        let v: Value =
            serde_json::from_str(&count_all_json(TRIG, 2.0 * PI / 3.0, 5.0 * PI / 6.0).unwrap()).unwrap();
        let rows = v.as_array().unwrap();
        assert_eq!(rows.len(), CountMethod::standard().len());
        assert!(rows.iter().all(|r| r["total"] == 1), "{v}");
    }

    #[test]
    fn constant_family_counts_zero() {
        let fam = r#"{"kind": "linear", "w": [[[0.0]], [[0.0]]],
            "s": [[[1.0, 1.0], [0.0, 1.0]], [[0.0, 1.0], [-1.0, 0.0]]]}"#;
        let v: Value = serde_json::from_str(&count_all_json(fam, -1.0, 1.0).unwrap()).unwrap();
        assert!(v.as_array().unwrap().iter().all(|r| r["total"] == 0), "{v}");
    }

    #[test]
    fn scan_targets() {
        let v: Value = serde_json::from_str(&scan_json(TRIG, 3.0, 3.3, "b-blocks").unwrap()).unwrap();
        let ev = v.as_array().unwrap();
        assert_eq!(ev.len(), 6);
        assert!(ev.iter().all(|e| (e["lambda0"].as_f64().unwrap() - PI).abs() < 1e-9));
        let v: Value = serde_json::from_str(&scan_json(TRIG, 0.1, 1.2, "eigen").unwrap()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert!(scan_json(TRIG, 0.1, 1.2, "sturm").is_err());
        assert!(scan_json(TRIG, 1.2, 0.1, "eigen").is_err());
        assert!(scan_json("{", 0.1, 1.2, "eigen").is_err());
    }

    #[test]
    fn staircase_rejects_bad_input() {
        assert!(staircase_json(5, 1.0, 0.0, 10).is_err());
        assert!(staircase_json(5, 0.0, 1.0, 1).is_err());
        assert!(staircase_json(5, 0.0, 1.0, MAX_SAMPLES + 1).is_err());
    }
}
