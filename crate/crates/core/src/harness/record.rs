//! Uniformly sampled output of one scenario run.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum System {
    OneDof,
    TwoDof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// A position coordinate reached the magnet face (|q| ≥ c).
    LeftDomain,
    ReturnedToDomain,
    /// The estimated force dropped to the floor of the linearizing law.
    ForceFloorEngaged,
    ForceFloorReleased,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// Per-step check that one parameter error never grows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityTrace {
    pub label: String,
    /// Steps whose error magnitude grew by more than the slack.
    pub violations: usize,
    /// Largest single-step growth of the error magnitude (≤ 0 when strictly decreasing).
    pub max_increase: f64,
    pub first_violation_t: Option<f64>,
}

impl MonotonicityTrace {
    /// Allowed per-step growth before a step counts as a violation.
    pub const SLACK: f64 = 1e-9;

    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            violations: 0,
            max_increase: f64::NEG_INFINITY,
            first_violation_t: None,
        }
    }

    pub fn observe(&mut self, t: f64, before: f64, after: f64) {
        let growth = after.abs() - before.abs();
        self.max_increase = self.max_increase.max(growth);
        if growth > Self::SLACK {
            self.violations += 1;
            self.first_violation_t.get_or_insert(t);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub name: String,
    pub system: System,
    pub dt: f64,
    pub record_dt: f64,
    pub columns: Vec<String>,
    /// Column-major samples, all of equal length.
    pub data: Vec<Vec<f64>>,
    pub events: Vec<Event>,
    pub monotonicity: Vec<MonotonicityTrace>,
}

impl RunRecord {
    pub fn new(name: &str, system: System, dt: f64, record_dt: f64, columns: Vec<String>) -> Self {
        let data = vec![Vec::new(); columns.len()];
        Self {
            name: name.to_string(),
            system,
            dt,
            record_dt,
            columns,
            data,
            events: Vec::new(),
            monotonicity: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        for (col, v) in self.data.iter_mut().zip(row) {
            col.push(*v);
        }
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().position(|c| c == name).map(|i| self.data[i].as_slice())
    }

    /// Like [`column`](Self::column) but panics on an unknown name.
    pub fn col(&self, name: &str) -> &[f64] {
        self.column(name).unwrap_or_else(|| panic!("no column `{name}` in record {}", self.name))
    }

    pub fn time(&self) -> &[f64] {
        self.col("t")
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.iter().map(|c| c[i]).collect()
    }
}
