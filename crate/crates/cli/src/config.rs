//! Run configuration: a single JSON document with a schema version.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use symposc::osccount::CountMethod;
use symposc::systems::FamilySpec;
use symposc::ToleranceConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// A lambda value: a number or an expression `[-]PI[*p][/q]` with integer
/// `p` and `q`, or `[-]p*PI[/q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaValue {
    Number(f64),
    Expr(String),
}

impl LambdaValue {
    pub fn value(&self) -> Result<f64, String> {
        match self {
            LambdaValue::Number(v) if v.is_finite() => Ok(*v),
            LambdaValue::Number(v) => Err(format!("lambda value {v} is not finite")),
            LambdaValue::Expr(s) => parse_lambda(s),
        }
    }
}

fn parse_int(s: &str, whole: &str) -> Result<i64, String> {
    s.parse::<i64>()
        .map_err(|_| format!("invalid integer `{s}` in lambda expression `{whole}`"))
}

/// Evaluates `PI * p / q` as one rounding of the exact rational multiple.
pub fn parse_lambda(text: &str) -> Result<f64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if !s.to_ascii_uppercase().contains("PI") {
        return s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("invalid lambda value `{text}`"));
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, s.strip_prefix('+').unwrap_or(&s)),
    };
    let (num, den) = match body.split_once('/') {
        Some((n, d)) => (n, parse_int(d, text)?),
        None => (body, 1),
    };
    if den == 0 {
        return Err(format!("zero denominator in `{text}`"));
    }
    let factors: Vec<&str> = num.split('*').collect();
    let mut p = sign;
    let mut seen_pi = false;
    for f in factors {
        if f.eq_ignore_ascii_case("PI") && !seen_pi {
            seen_pi = true;
        } else {
            p *= parse_int(f, text)?;
        }
    }
    if !seen_pi {
        return Err(format!("invalid lambda expression `{text}`"));
    }
    // p/q is reduced first so that PI*4/6 and PI*2/3 give the same float.
    let g = gcd(p.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
    let (p, q) = (p / g, den / g);
    Ok(PI * p as f64 / q as f64)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `"classical-forward"` or a full tagged method object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MethodEntry {
    Name(String),
    Full(CountMethod),
}

impl MethodEntry {
    pub fn resolve(&self, seed: u64) -> Result<CountMethod, String> {
        let m = match self {
            MethodEntry::Full(m) => m.clone(),
            MethodEntry::Name(name) => {
                if let Some(dir) = name.strip_prefix("transformed-") {
                    let direction = serde_json::from_value(serde_json::Value::String(dir.into()))
                        .map_err(|_| format!("unknown method `{name}`"))?;
                    CountMethod::Transformed {
                        direction,
                        r: None,
                        seed: None,
                    }
                } else {
                    serde_json::from_value(serde_json::json!({ "kind": name }))
                        .map_err(|_| format!("unknown method `{name}`"))?
                }
            }
        };
        Ok(match m {
            CountMethod::Transformed {
                direction,
                r: None,
                seed: None,
            } => CountMethod::Transformed {
                direction,
                r: None,
                seed: Some(seed),
            },
            other => other,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanTarget {
    /// `B_k(lambda)` for every `k`.
    BBlocks,
    /// `X_{N+1}(lambda)` of the principal solution at 0.
    Eigen,
    /// `S_k(a) - S_k(lambda)` for every `k`.
    Rho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub family: FamilySpec,
    pub interval: [LambdaValue; 2],
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub verify: bool,
    #[serde(default)]
    pub scan_target: Option<ScanTarget>,
    #[serde(default)]
    pub certify_grid: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "config: schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            ));
        }
        cfg.tolerances.validate().map_err(|e| format!("config: {e}"))?;
        let (a, b) = cfg.interval()?;
        if !(a < b) {
            return Err(format!("config: interval needs a < b, got ({a}, {b}]"));
        }
        Ok(cfg)
    }

    pub fn interval(&self) -> Result<(f64, f64), String> {
        Ok((self.interval[0].value()?, self.interval[1].value()?))
    }

    pub fn methods(&self, seed: u64) -> Result<Vec<CountMethod>, String> {
        if self.methods.is_empty() {
            return Err("config: `methods` must be nonempty".into());
        }
        self.methods.iter().map(|m| m.resolve(seed)).collect()
    }
}
