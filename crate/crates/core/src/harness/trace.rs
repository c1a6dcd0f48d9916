//! Per-step trace records and their CSV form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One row of a run trace: an outer time step (recursive observers) or one
/// ADMM round (static estimator).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    /// `||x_i - x[t-depth+1]||` per node.
    pub state_error: Vec<f64>,
    /// `||x_i - mean_j x_j||` per node.
    pub consensus_error: Vec<f64>,
    pub primal_residual: Vec<f64>,
    pub dual_residual: Vec<f64>,
    pub rho: Vec<f64>,
    pub inner_rounds: usize,
    pub messages: usize,
}

impl TraceRecord {
    pub fn node_count(&self) -> usize {
        self.state_error.len()
    }

    pub fn max_state_error(&self) -> f64 {
        self.state_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_consensus_error(&self) -> f64 {
        self.consensus_error.iter().copied().fold(0.0, f64::max)
    }
}

const GROUPS: [&str; 5] = ["err", "cons", "r", "s", "rho"];

/// Header for an `nodes`-node trace.
pub fn header(nodes: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for g in GROUPS {
        cols.extend((1..=nodes).map(|i| format!("{g}_{i}")));
    }
    cols.push("inner_rounds".into());
    cols.push("messages".into());
    cols
}

/// 17 significant digits, which round-trips every finite `f64`.
fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn to_csv(records: &[TraceRecord], nodes: usize) -> String {
    let mut out = header(nodes).join(",");
    out.push('\n');
    for r in records {
        let mut row = r.step.to_string();
        for group in [&r.state_error, &r.consensus_error, &r.primal_residual, &r.dual_residual, &r.rho] {
            for v in group.iter() {
                row.push(',');
                row.push_str(&fmt_f64(*v));
            }
        }
        let _ = write!(row, ",{},{}", r.inner_rounds, r.messages);
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn write_trace(records: &[TraceRecord], nodes: usize, path: &Path) -> Result<()> {
    fs::write(path, to_csv(records, nodes))?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => s.parse().map_err(|_| Error::Parse(format!("bad number {s:?} in trace"))),
    }
}

/// Parses a trace produced by [`to_csv`]; returns the node count and records.
pub fn from_csv(text: &str) -> Result<(usize, Vec<TraceRecord>)> {
    let mut lines = text.lines();
    let head: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty trace".into()))?
        .split(',')
        .collect();
    if head.len() < 3 || !(head.len() - 3).is_multiple_of(GROUPS.len()) {
        return Err(Error::Parse("malformed trace header".into()));
    }
    let nodes = (head.len() - 3) / GROUPS.len();
    if head != header(nodes) {
        return Err(Error::Parse("unexpected trace columns".into()));
    }
    let mut records = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != head.len() {
            return Err(Error::Parse(format!("row has {} fields, expected {}", fields.len(), head.len())));
        }
        let step = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad step {:?}", fields[0])))?;
        let mut groups: Vec<Vec<f64>> = Vec::with_capacity(GROUPS.len());
        for g in 0..GROUPS.len() {
            let start = 1 + g * nodes;
            groups.push(fields[start..start + nodes].iter().map(|s| parse_f64(s)).collect::<Result<_>>()?);
        }
        let tail = &fields[fields.len() - 2..];
        let parse_count = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad count {s:?}")));
        let mut groups = groups.into_iter();
        records.push(TraceRecord {
            step,
            state_error: groups.next().unwrap(),
            consensus_error: groups.next().unwrap(),
            primal_residual: groups.next().unwrap(),
            dual_residual: groups.next().unwrap(),
            rho: groups.next().unwrap(),
            inner_rounds: parse_count(tail[0])?,
            messages: parse_count(tail[1])?,
        });
    }
    Ok((nodes, records))
}
