//! Trajectory tables and run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::liealg::RotationMatrix;
use crate::verify::{Check, ConvergenceTable};

/// A numeric table with an integer index column. Missing cells stay empty.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index");
        for h in &self.header {
            out.push(',');
            out.push_str(h);
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            debug_assert_eq!(row.len(), self.header.len());
            write!(out, "{i}").expect("write to string");
            for cell in row {
                out.push(',');
                if let Some(x) = cell {
                    // Debug formatting is the shortest string that parses back to x.
                    write!(out, "{x:?}").expect("write to string");
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn columns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn rotation_columns() -> Vec<String> {
    (0..3).flat_map(|i| (0..3).map(move |j| format!("r{i}{j}"))).collect()
}

pub fn cells(xs: &[f64]) -> impl Iterator<Item = Option<f64>> + '_ {
    xs.iter().map(|&x| Some(x))
}

pub fn rotation_cells(r: &RotationMatrix) -> Vec<Option<f64>> {
    r.row_major().iter().map(|&x| Some(x)).collect()
}

/// `xs` if present, otherwise `n` empty cells.
pub fn optional_cells(xs: Option<&[f64]>, n: usize) -> Vec<Option<f64>> {
    match xs {
        Some(v) => v.iter().map(|&x| Some(x)).collect(),
        None => vec![None; n],
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub problem: &'static str,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint_max: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub residual_trace: Vec<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceTable>,
}

impl Report {
    pub fn new(name: &str, problem: &'static str) -> Self {
        Self {
            name: name.into(),
            problem,
            status: "ok",
            error: None,
            nodes: None,
            iterations: None,
            residual: None,
            action: None,
            constraint_max: None,
            residual_trace: Vec::new(),
            metrics: BTreeMap::new(),
            checks: Vec::new(),
            convergence: None,
        }
    }

    pub fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.rows.push(vec![Some(0.1), None]);
        t.rows.push(vec![Some(1e-20), Some(-3.0)]);
        assert_eq!(t.to_csv(), "index,a,b\n0,0.1,\n1,1e-20,-3.0\n");
    }

    #[test]
    fn floats_round_trip() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 6.02214076e23, -2.5e-300, f64::MIN_POSITIVE] {
            let mut t = Table::new(vec!["x".into()]);
            t.rows.push(vec![Some(x)]);
            let csv = t.to_csv();
            let cell = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
            assert_eq!(cell.parse::<f64>().unwrap(), x);
            let json = serde_json::to_string(&x).unwrap();
            assert_eq!(serde_json::from_str::<f64>(&json).unwrap(), x);
        }
    }

    #[test]
    fn rotation_is_row_major() {
        let r = RotationMatrix::new(nalgebra::Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(rotation_cells(&r)[1], Some(-1.0));
        assert_eq!(rotation_cells(&r)[3], Some(1.0));
        assert_eq!(rotation_columns()[5], "r12");
    }
}
