//! JSON and CSV encodings of reports. Both decode back to the same values.

use serde::{Deserialize, Serialize};
use symposc::osccount::{Agreement, CountReport, ReportEvent};
use symposc::selftest::CheckResult;
use symposc::symplectic::MonotonicityReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// One CSV line of a count report. `record` is `report`, `term`, `event` or
/// `agreement`; each kind fills only its own columns. On a `report` row,
/// `value` holds the length of the attached agreement table, if any.
#[derive(Debug, Default, Serialize, Deserialize)]
struct CountRow {
    record: String,
    method: String,
    a: Option<f64>,
    b: Option<f64>,
    total: Option<usize>,
    name: Option<String>,
    value: Option<i64>,
    k: Option<usize>,
    lambda0: Option<f64>,
    left_rank: Option<usize>,
    point_rank: Option<usize>,
    multiplicity: Option<usize>,
    error: Option<String>,
}

fn csv_text<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    String::from_utf8(bytes).map_err(|e| e.to_string())
}

fn csv_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, String> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| e.to_string())
}

pub fn reports_to_csv(reports: &[CountReport]) -> Result<String, String> {
    let mut rows = Vec::new();
    for r in reports {
        rows.push(CountRow {
            record: "report".into(),
            method: r.method.clone(),
            a: Some(r.a),
            b: Some(r.b),
            total: Some(r.total),
            value: r.agreement.as_ref().map(|t| t.len() as i64),
            ..CountRow::default()
        });
        for (name, value) in &r.terms {
            rows.push(CountRow {
                record: "term".into(),
                method: r.method.clone(),
                name: Some(name.clone()),
                value: Some(*value),
                ..CountRow::default()
            });
        }
        for e in &r.jump_events {
            rows.push(CountRow {
                record: "event".into(),
                method: r.method.clone(),
                name: Some(e.source.clone()),
                k: e.k,
                lambda0: Some(e.lambda0),
                left_rank: Some(e.left_rank),
                point_rank: Some(e.point_rank),
                multiplicity: Some(e.multiplicity),
                ..CountRow::default()
            });
        }
        for g in r.agreement.iter().flatten() {
            rows.push(CountRow {
                record: "agreement".into(),
                method: r.method.clone(),
                name: Some(g.method.clone()),
                total: g.total,
                error: g.error.clone(),
                ..CountRow::default()
            });
        }
    }
    csv_text(rows)
}

fn missing(field: &str, line: usize) -> String {
    format!("csv line {line}: missing {field}")
}

pub fn reports_from_csv(text: &str) -> Result<Vec<CountReport>, String> {
    let mut out: Vec<CountReport> = Vec::new();
    for (i, row) in csv_rows::<CountRow>(text)?.into_iter().enumerate() {
        let line = i + 2;
        if row.record == "report" {
            out.push(CountReport {
                method: row.method,
                a: row.a.ok_or_else(|| missing("a", line))?,
                b: row.b.ok_or_else(|| missing("b", line))?,
                terms: Default::default(),
                jump_events: Vec::new(),
                total: row.total.ok_or_else(|| missing("total", line))?,
                agreement: row.value.map(|_| Vec::new()),
            });
            continue;
        }
        let cur = out
            .last_mut()
            .ok_or_else(|| format!("csv line {line}: row before any report row"))?;
        match row.record.as_str() {
            "term" => {
                cur.terms.insert(
                    row.name.ok_or_else(|| missing("name", line))?,
                    row.value.ok_or_else(|| missing("value", line))?,
                );
            }
            "event" => cur.jump_events.push(ReportEvent {
                source: row.name.ok_or_else(|| missing("name", line))?,
                k: row.k,
                lambda0: row.lambda0.ok_or_else(|| missing("lambda0", line))?,
                left_rank: row.left_rank.ok_or_else(|| missing("left_rank", line))?,
                point_rank: row.point_rank.ok_or_else(|| missing("point_rank", line))?,
                multiplicity: row.multiplicity.ok_or_else(|| missing("multiplicity", line))?,
            }),
            "agreement" => cur.agreement.get_or_insert_with(Vec::new).push(Agreement {
                method: row.name.ok_or_else(|| missing("name", line))?,
                total: row.total,
                error: row.error,
            }),
            other => return Err(format!("csv line {line}: unknown record `{other}`")),
        }
    }
    Ok(out)
}

pub fn events_to_csv(events: &[ReportEvent]) -> Result<String, String> {
    csv_text(events)
}

pub fn events_from_csv(text: &str) -> Result<Vec<ReportEvent>, String> {
    csv_rows(text)
}

pub fn checks_to_csv(checks: &[CheckResult]) -> Result<String, String> {
    csv_text(checks)
}

#[derive(Serialize)]
struct CertifyRow<'a> {
    pass: bool,
    min_eigenvalue: f64,
    argmin_k: usize,
    argmin_lambda: f64,
    max_asymmetry: f64,
    warnings: &'a str,
}

pub fn certify_to_csv(r: &MonotonicityReport) -> Result<String, String> {
    let warnings = r.warnings.join("; ");
    csv_text([CertifyRow {
        pass: r.pass,
        min_eigenvalue: r.min_eigenvalue,
        argmin_k: r.argmin.0,
        argmin_lambda: r.argmin.1,
        max_asymmetry: r.max_asymmetry,
        warnings: &warnings,
    }])
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample() -> Vec<CountReport> {
        let mut terms = BTreeMap::new();
        terms.insert("l_d(b)".to_string(), 5);
        terms.insert("l_d(a)".to_string(), -4);
        vec![
            CountReport {
                method: "classical-forward".into(),
                a: 2.0943951023931953,
                b: 2.6179938779914944,
                terms,
                jump_events: vec![ReportEvent {
                    source: "B".into(),
                    k: Some(3),
                    lambda0: 0.1 + 0.2,
                    left_rank: 1,
                    point_rank: 0,
                    multiplicity: 1,
                }],
                total: 1,
                agreement: Some(vec![
                    Agreement {
                        method: "oracle".into(),
                        total: Some(1),
                        error: None,
                    },
                    Agreement {
                        method: "invariant".into(),
                        total: None,
                        error: Some("scan resolution error, at 1, 2".into()),
                    },
                ]),
            },
            CountReport {
                method: "oracle".into(),
                a: -1.0,
                b: 1e-300,
                terms: BTreeMap::new(),
                jump_events: vec![],
                total: 0,
                agreement: None,
            },
        ]
    }

    #[test]
    fn count_reports_round_trip_csv() {
        let r = sample();
        let text = reports_to_csv(&r).unwrap();
        assert_eq!(reports_from_csv(&text).unwrap(), r);
    }

    #[test]
    fn count_reports_round_trip_json() {
        let r = sample();
        let back: Vec<CountReport> = serde_json::from_str(&to_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn events_round_trip_csv() {
        let e = sample()[0].jump_events.clone();
        assert_eq!(events_from_csv(&events_to_csv(&e).unwrap()).unwrap(), e);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(reports_from_csv("record,method\nterm,x\n").is_err());
    }
}
