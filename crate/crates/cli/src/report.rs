use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use dyadic_cz::verify::{nullable_f64, spread, BoundReport, InstanceRecord};
use dyadic_cz::{Error, Result};

use crate::config::RunConfig;

pub const FORMAT: &str = "dyadic-cz-report/1";

/// One line of `report.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Line {
    Header {
        format: String,
        config_hash: String,
        config: RunConfig,
    },
    Record {
        claim: String,
        pass: bool,
        #[serde(flatten)]
        record: InstanceRecord,
    },
    Summary(Summary),
    Result {
        pass: bool,
        failed: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub claim: String,
    #[serde(deserialize_with = "nullable_f64")]
    pub ceiling: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub max: f64,
    #[serde(deserialize_with = "nullable_f64")]
    pub mean: f64,
    pub judged: usize,
    pub flagged: usize,
    pub violations: usize,
    pub pass: bool,
    /// Keyed by the finest level, written as a string.
    pub max_by_levels: BTreeMap<String, f64>,
    /// Largest over smallest of `max_by_levels`.
    #[serde(deserialize_with = "nullable_f64")]
    pub spread_levels: f64,
}

impl From<&BoundReport> for Summary {
    fn from(r: &BoundReport) -> Self {
        let by_levels = r.max_by_levels();
        Self {
            claim: r.claim.clone(),
            ceiling: r.ceiling,
            max: r.max,
            mean: r.mean,
            judged: r.judged,
            flagged: r.flagged,
            violations: r.violations,
            pass: r.pass,
            spread_levels: spread(&by_levels),
            max_by_levels: by_levels.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

fn record_pass(r: &InstanceRecord, ceiling: f64) -> bool {
    r.flagged || (r.ratio.is_finite() && r.ratio >= 0.0 && r.ratio <= ceiling)
}

/// Serializes the report. Non-finite values are written as `null`.
pub fn render_jsonl(config: &RunConfig, reports: &[BoundReport]) -> String {
    let mut lines = vec![Line::Header {
        format: FORMAT.into(),
        config_hash: config.hash(),
        config: config.clone(),
    }];
    for r in reports {
        for rec in &r.records {
            lines.push(Line::Record {
                claim: r.claim.clone(),
                pass: record_pass(rec, r.ceiling),
                record: rec.clone(),
            });
        }
    }
    lines.extend(reports.iter().map(|r| Line::Summary(r.into())));
    lines.push(Line::Result {
        pass: reports.iter().all(|r| r.pass),
        failed: reports.iter().filter(|r| !r.pass).map(|r| r.claim.clone()).collect(),
    });
    let mut out = String::new();
    for l in &lines {
        out.push_str(&serde_json::to_string(l).expect("report lines serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Line>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("report line {}: {e}", i + 1)))
        })
        .collect()
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// The flat plotting table.
pub fn render_table(lines: &[Line]) -> String {
    let mut out = String::from("claim,instance,levels,lambda,group,ratio,flagged,pass\n");
    for l in lines {
        if let Line::Record { claim, pass, record } = l {
            let _ = writeln!(
                out,
                "{claim},{},{},{},{},{:e},{},{pass}",
                record.instance,
                record.levels,
                opt(record.lambda.map(|v| format!("{v:e}"))),
                opt(record.group),
                record.ratio,
                record.flagged,
            );
        }
    }
    out
}

/// Per-claim maxima by finest level.
pub fn render_summary_table(lines: &[Line]) -> String {
    let mut out = String::from("claim,levels,max\n");
    for l in lines {
        if let Line::Summary(s) = l {
            for (k, v) in &s.max_by_levels {
                let _ = writeln!(out, "{},{k},{v:e}", s.claim);
            }
        }
    }
    out
}

pub fn render_text(lines: &[Line]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>6} {:>12} {:>12} {:>8} {:>7}  status",
        "claim", "judged", "max", "ceiling", "spread", "flagged"
    );
    for l in lines {
        if let Line::Summary(s) = l {
            let _ = writeln!(
                out,
                "{:<24} {:>6} {:>12.4e} {:>12.4e} {:>8.3} {:>7}  {}",
                s.claim,
                s.judged,
                s.max,
                s.ceiling,
                s.spread_levels,
                s.flagged,
                if s.pass { "pass" } else { "FAIL" }
            );
        }
    }
    out
}

pub fn overall_pass(lines: &[Line]) -> Result<bool> {
    lines
        .iter()
        .rev()
        .find_map(|l| match l {
            Line::Result { pass, .. } => Some(*pass),
            _ => None,
        })
        .ok_or_else(|| Error::Format("report has no result line".into()))
}
