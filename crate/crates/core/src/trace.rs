//! CSV form of a simulation trace.
//!
//! Three comment lines come first: the column-count formula, then the state
//! order and actuator count of every agent. Values are written in Rust's
//! shortest round-trip notation, so reading a file back gives bit-identical
//! rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::engine::{AgentRecord, SimulationTrace, TraceLayout, TraceRow};

pub const COLUMN_FORMULA: &str = "# columns = 3 + sum_i (3 n_i + 2 m_i + 5) with n_i states and m_i actuators";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad trace header: {0}")]
    Header(String),
    #[error("line {line}, column {column}: cannot parse {text:?} as a number")]
    Value { line: u64, column: usize, text: String },
    #[error("line {line}: expected {expected} columns, got {got}")]
    Width { line: u64, expected: usize, got: usize },
}

pub fn column_count(layout: &TraceLayout) -> usize {
    3 + layout.orders.iter().zip(&layout.actuators).map(|(n, m)| 3 * n + 2 * m + 5).sum::<usize>()
}

pub fn column_names(layout: &TraceLayout) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "y_r".to_string()];
    for (i, (&n, &m)) in layout.orders.iter().zip(&layout.actuators).enumerate() {
        let a = i + 1;
        cols.extend((1..=n).map(|j| format!("x{a}_{j}")));
        cols.push(format!("z{a}"));
        cols.push(format!("e_star{a}"));
        cols.extend((1..=n).map(|j| format!("zeta_bar{a}_{j}")));
        cols.extend((1..=n).map(|j| format!("eta{a}_{j}")));
        cols.push(format!("theta_hat{a}"));
        cols.push(format!("vartheta_hat{a}"));
        cols.push(format!("varphi_hat{a}"));
        cols.extend((1..=m).map(|h| format!("u{a}_{h}")));
        cols.extend((1..=m).map(|h| format!("omega{a}_{h}")));
    }
    cols.push("sigma".to_string());
    cols
}

fn num(v: f64) -> String {
    // Debug formatting is the shortest string that parses back to `v`.
    format!("{v:?}")
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Streams rows to CSV as they are produced.
pub struct TraceWriter<W: Write> {
    csv: csv::Writer<W>,
    layout: TraceLayout,
    record: Vec<String>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, layout: TraceLayout) -> Result<Self, TraceError> {
        writeln!(out, "{COLUMN_FORMULA}")?;
        writeln!(out, "# orders = {}", join(&layout.orders))?;
        writeln!(out, "# actuators = {}", join(&layout.actuators))?;
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(column_names(&layout))?;
        Ok(Self { csv, record: Vec::with_capacity(column_count(&layout)), layout })
    }

    pub fn write_row(&mut self, row: &TraceRow) -> Result<(), TraceError> {
        if row.agents.len() != self.layout.orders.len() {
            return Err(TraceError::Header(format!(
                "row has {} agents, layout has {}",
                row.agents.len(),
                self.layout.orders.len()
            )));
        }
        let r = &mut self.record;
        r.clear();
        r.push(num(row.t));
        r.push(num(row.leader));
        for a in &row.agents {
            r.extend(a.x.iter().map(|v| num(*v)));
            r.push(num(a.z));
            r.push(num(a.e_star));
            r.extend(a.zeta_bar.iter().map(|v| num(*v)));
            r.extend(a.eta.iter().map(|v| num(*v)));
            r.push(num(a.theta_hat));
            r.push(num(a.vartheta_hat));
            r.push(num(a.varphi_hat));
            r.extend(a.u.iter().map(|v| num(*v)));
            r.extend(a.omega.iter().map(|v| num(*v)));
        }
        r.push(num(row.sigma));
        if r.len() != column_count(&self.layout) {
            return Err(TraceError::Header("row does not match the layout".into()));
        }
        self.csv.write_record(&*r)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TraceError> {
        self.csv.flush()?;
        self.csv.into_inner().map_err(|e| TraceError::Io(e.into_error()))
    }
}

pub fn write_trace<W: Write>(out: W, trace: &SimulationTrace) -> Result<W, TraceError> {
    let mut w = TraceWriter::new(out, trace.layout.clone())?;
    for row in &trace.rows {
        w.write_row(row)?;
    }
    w.finish()
}

pub fn save_trace(path: impl AsRef<Path>, trace: &SimulationTrace) -> Result<(), TraceError> {
    let out = write_trace(BufWriter::new(File::create(path)?), trace)?;
    out.into_inner().map_err(|e| TraceError::Io(e.into_error()))?;
    Ok(())
}

fn parse_list(line: &str, key: &str) -> Result<Vec<usize>, TraceError> {
    let bad = || TraceError::Header(format!("expected `# {key} = ...`, got {line:?}"));
    let rest = line.strip_prefix('#').ok_or_else(bad)?.trim();
    let rest = rest.strip_prefix(key).ok_or_else(bad)?.trim();
    let rest = rest.strip_prefix('=').ok_or_else(bad)?.trim();
    if rest.is_empty() {
        return Ok(Vec::new());
    }
    rest.split(',').map(|s| s.trim().parse::<usize>().map_err(|_| bad())).collect()
}

pub fn read_trace<R: Read>(input: R) -> Result<SimulationTrace, TraceError> {
    let mut input = BufReader::new(input);
    let mut comments = Vec::new();
    for _ in 0..3 {
        let mut line = String::new();
        input.read_line(&mut line)?;
        comments.push(line.trim_end().to_string());
    }
    if comments[0] != COLUMN_FORMULA {
        return Err(TraceError::Header(format!("missing column formula, got {:?}", comments[0])));
    }
    let orders = parse_list(&comments[1], "orders")?;
    let actuators = parse_list(&comments[2], "actuators")?;
    if orders.len() != actuators.len() {
        return Err(TraceError::Header("orders and actuators differ in length".into()));
    }
    let layout = TraceLayout { orders, actuators };
    let width = column_count(&layout);

    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let names: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if names != column_names(&layout) {
        return Err(TraceError::Header("column names do not match the declared layout".into()));
    }
    let mut rows = Vec::new();
    let mut values = Vec::with_capacity(width);
    for rec in csv.records() {
        let rec = rec?;
        // three comment lines and the column names precede the first record
        let line = rec.position().map_or(0, |p| p.line() + 3);
        if rec.len() != width {
            return Err(TraceError::Width { line, expected: width, got: rec.len() });
        }
        values.clear();
        for (column, field) in rec.iter().enumerate() {
            let v = field
                .parse::<f64>()
                .map_err(|_| TraceError::Value { line, column: column + 1, text: field.to_string() })?;
            values.push(v);
        }
        rows.push(unpack(&layout, &values));
    }
    Ok(SimulationTrace { layout, rows })
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<SimulationTrace, TraceError> {
    read_trace(File::open(path)?)
}

fn unpack(layout: &TraceLayout, v: &[f64]) -> TraceRow {
    let mut k = 2;
    let mut take = |len: usize| {
        let s = v[k..k + len].to_vec();
        k += len;
        s
    };
    let agents = layout
        .orders
        .iter()
        .zip(&layout.actuators)
        .map(|(&n, &m)| {
            let x = take(n);
            let ze = take(2);
            let zeta_bar = take(n);
            let eta = take(n);
            let est = take(3);
            let u = take(m);
            let omega = take(m);
            AgentRecord {
                x,
                z: ze[0],
                e_star: ze[1],
                zeta_bar,
                eta,
                theta_hat: est[0],
                vartheta_hat: est[1],
                varphi_hat: est[2],
                u,
                omega,
            }
        })
        .collect();
    TraceRow { t: v[0], sigma: v[v.len() - 1], leader: v[1], agents }
}
