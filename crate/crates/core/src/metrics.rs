//! Accuracy matrix and the four continual-learning metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, Schema};
use crate::learner::{LearnerError, Parser};
use crate::par::{self, ExecMode};
use crate::sqlrep::exact_match;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("accuracy {value} at ({i}, {j}) outside [0, 1]")]
    OutOfRange { i: usize, j: usize, value: f64 },
    #[error("test set of task {0} is empty")]
    EmptyTest(usize),
    #[error("entry ({i}, {j}) is required but missing")]
    Missing { i: usize, j: usize },
    #[error("{0} needs at least two tasks")]
    TooFewTasks(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("accuracy grid line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("test instance `{0}` has no gold SQL or unknown database")]
    BadTest(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
}

/// Outcome of evaluating a parser on one test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalCount {
    pub correct: usize,
    pub total: usize,
}

impl EvalCount {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Exact-match evaluation. A parser with an empty catalog gets every instance wrong.
pub fn evaluate<P: Parser + ?Sized>(
    parser: &P,
    test: &[Instance],
    schemas: &BTreeMap<String, Schema>,
    mode: ExecMode,
) -> Result<EvalCount, MetricsError> {
    let hits = par::try_map(mode, test, |inst| -> Result<bool, MetricsError> {
        let gold = inst
            .sql()
            .ok_or_else(|| MetricsError::BadTest(inst.id.clone()))?;
        let schema = schemas
            .get(&inst.db_id)
            .ok_or_else(|| MetricsError::BadTest(inst.id.clone()))?;
        match parser.predict(&inst.nlq, schema) {
            Ok(p) => Ok(exact_match(&p.sql, gold)),
            Err(LearnerError::NotTrained) => Ok(false),
            Err(e) => Err(e.into()),
        }
    })?;
    Ok(EvalCount {
        correct: hits.iter().filter(|h| **h).count(),
        total: test.len(),
    })
}

/// `K × K` grid; `get(i, j)` is the accuracy on task `i`'s test set after training
/// task `j` (both 1-based). Column 0 is unused; entries below `j = i - 1` stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccMatrix {
    k: usize,
    cells: Vec<Option<f64>>,
    test_sizes: Vec<usize>,
    baseline: Vec<f64>,
}

impl AccMatrix {
    pub fn new(test_sizes: Vec<usize>, baseline: Vec<f64>) -> Result<Self, MetricsError> {
        let k = test_sizes.len();
        if baseline.len() != k {
            return Err(MetricsError::Shape(format!(
                "{} test sizes but {} baseline values",
                k,
                baseline.len()
            )));
        }
        if let Some(i) = test_sizes.iter().position(|&n| n == 0) {
            return Err(MetricsError::EmptyTest(i + 1));
        }
        for (i, &b) in baseline.iter().enumerate() {
            check_range(i + 1, 0, b)?;
        }
        Ok(AccMatrix {
            k,
            cells: vec![None; k * k],
            test_sizes,
            baseline,
        })
    }

    /// Build from dense rows; `None` marks entries that were not computed.
    pub fn from_rows(
        rows: Vec<Vec<Option<f64>>>,
        test_sizes: Vec<usize>,
        baseline: Vec<f64>,
    ) -> Result<Self, MetricsError> {
        let mut m = AccMatrix::new(test_sizes, baseline)?;
        if rows.len() != m.k {
            return Err(MetricsError::Shape(format!("{} rows for K = {}", rows.len(), m.k)));
        }
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != m.k {
                return Err(MetricsError::Shape(format!("row {} has {} cells", i + 1, row.len())));
            }
            for (j, v) in row.into_iter().enumerate() {
                if let Some(v) = v {
                    m.set(i + 1, j + 1, v)?;
                }
            }
        }
        Ok(m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn test_sizes(&self) -> &[usize] {
        &self.test_sizes
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<(), MetricsError> {
        if i == 0 || j == 0 || i > self.k || j > self.k {
            return Err(MetricsError::Shape(format!("({i}, {j}) outside {0}×{0}", self.k)));
        }
        check_range(i, j, value)?;
        self.cells[(i - 1) * self.k + (j - 1)] = Some(value);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if i == 0 || j == 0 || i > self.k || j > self.k {
            return None;
        }
        self.cells[(i - 1) * self.k + (j - 1)]
    }

    fn need(&self, i: usize, j: usize) -> Result<f64, MetricsError> {
        self.get(i, j).ok_or(MetricsError::Missing { i, j })
    }

    /// Mean of the final column.
    pub fn acc_a(&self) -> Result<f64, MetricsError> {
        let mut sum = 0.0;
        for i in 1..=self.k {
            sum += self.need(i, self.k)?;
        }
        Ok(sum / self.k as f64)
    }

    /// Accuracy over the union of all test sets: the size-weighted final column.
    pub fn acc_w(&self) -> Result<f64, MetricsError> {
        let mut num = 0.0;
        let mut den = 0usize;
        for i in 1..=self.k {
            num += self.test_sizes[i - 1] as f64 * self.need(i, self.k)?;
            den += self.test_sizes[i - 1];
        }
        Ok(num / den as f64)
    }

    pub fn bwt(&self) -> Result<f64, MetricsError> {
        if self.k < 2 {
            return Err(MetricsError::TooFewTasks("BWT"));
        }
        let mut sum = 0.0;
        for i in 1..self.k {
            sum += self.need(i, self.k)? - self.need(i, i)?;
        }
        Ok(sum / (self.k - 1) as f64)
    }

    pub fn fwt(&self) -> Result<f64, MetricsError> {
        if self.k < 2 {
            return Err(MetricsError::TooFewTasks("FWT"));
        }
        let mut sum = 0.0;
        for i in 2..=self.k {
            sum += self.need(i, i - 1)? - self.baseline[i - 1];
        }
        Ok(sum / (self.k - 1) as f64)
    }

    /// Delimited text grid: one row per test task, cells after each training task,
    /// then test size and baseline. Missing cells are empty. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test_task");
        for j in 1..=self.k {
            write!(out, ",after_{j}").unwrap();
        }
        out.push_str(",test_size,baseline\n");
        for i in 1..=self.k {
            write!(out, "{i}").unwrap();
            for j in 1..=self.k {
                match self.get(i, j) {
                    Some(v) => write!(out, ",{v:?}").unwrap(),
                    None => out.push(','),
                }
            }
            writeln!(out, ",{},{:?}", self.test_sizes[i - 1], self.baseline[i - 1]).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let perr = |line: usize, message: String| MetricsError::Parse { line, message };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty grid".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "test_task" || cols[cols.len() - 2..] != ["test_size", "baseline"] {
            return Err(perr(1, "unexpected header".into()));
        }
        let k = cols.len() - 3;
        let mut rows = Vec::with_capacity(k);
        let mut sizes = Vec::with_capacity(k);
        let mut baseline = Vec::with_capacity(k);
        for (n, line) in lines {
            let line_no = n + 1;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != k + 3 {
                return Err(perr(line_no, format!("expected {} fields, got {}", k + 3, fields.len())));
            }
            if fields[0].trim().parse::<usize>().ok() != Some(rows.len() + 1) {
                return Err(perr(line_no, format!("expected test_task {}", rows.len() + 1)));
            }
            let mut row = Vec::with_capacity(k);
            for f in &fields[1..=k] {
                let f = f.trim();
                row.push(if f.is_empty() {
                    None
                } else {
                    Some(f.parse::<f64>().map_err(|e| perr(line_no, format!("`{f}`: {e}")))?)
                });
            }
            rows.push(row);
            sizes.push(
                fields[k + 1]
                    .trim()
                    .parse()
                    .map_err(|e| perr(line_no, format!("test_size: {e}")))?,
            );
            baseline.push(
                fields[k + 2]
                    .trim()
                    .parse()
                    .map_err(|e| perr(line_no, format!("baseline: {e}")))?,
            );
        }
        AccMatrix::from_rows(rows, sizes, baseline)
    }
}

fn check_range(i: usize, j: usize, value: f64) -> Result<(), MetricsError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::OutOfRange { i, j, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub task: usize,
    pub test_size: usize,
    /// Accuracy right after training this task.
    pub just_trained: Option<f64>,
    /// Accuracy after the last task.
    pub final_acc: Option<f64>,
    /// Accuracy before training this task (after the previous one).
    pub zero_shot: Option<f64>,
    pub baseline: f64,
}

/// Structured metrics report. BWT and FWT are absent for single-task streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub acc_a: f64,
    pub acc_w: f64,
    pub bwt: Option<f64>,
    pub fwt: Option<f64>,
    pub tasks: Vec<TaskRow>,
}

impl MetricsReport {
    pub fn from_matrix(m: &AccMatrix) -> Result<Self, MetricsError> {
        let k = m.k();
        let tasks = (1..=k)
            .map(|i| TaskRow {
                task: i,
                test_size: m.test_sizes()[i - 1],
                just_trained: m.get(i, i),
                final_acc: m.get(i, k),
                zero_shot: if i > 1 { m.get(i, i - 1) } else { None },
                baseline: m.baseline()[i - 1],
            })
            .collect();
        Ok(MetricsReport {
            k,
            acc_a: m.acc_a()?,
            acc_w: m.acc_w()?,
            bwt: if k >= 2 { Some(m.bwt()?) } else { None },
            fwt: if k >= 2 { Some(m.fwt()?) } else { None },
            tasks,
        })
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

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    fn grid3() -> AccMatrix {
        AccMatrix::from_rows(
            vec![
                vec![Some(0.8), Some(0.7), Some(0.6)],
                vec![Some(0.3), Some(0.7), Some(0.7)],
                vec![None, Some(0.5), Some(0.8)],
            ],
            vec![10, 10, 10],
            vec![0.0, 0.1, 0.2],
        )
        .unwrap()
    }

    #[test]
    fn worked_metrics() {
        let m = grid3();
        assert!(close(m.acc_a().unwrap(), 0.7));
        assert!(close(m.acc_w().unwrap(), 0.7));
        assert!(close(m.bwt().unwrap(), -0.1));
        assert!(close(m.fwt().unwrap(), 0.25));
    }

    #[test]
    fn weighted_accuracy() {
        let m = AccMatrix::from_rows(
            vec![vec![Some(0.9), Some(0.5)], vec![Some(0.2), Some(0.9)]],
            vec![10, 30],
            vec![0.0, 0.0],
        )
        .unwrap();
        assert!(close(m.acc_w().unwrap(), 0.8));
    }

    #[test]
    fn single_task() {
        let m = AccMatrix::from_rows(vec![vec![Some(0.4)]], vec![3], vec![0.0]).unwrap();
        assert_eq!(m.acc_a().unwrap(), 0.4);
        assert!(close(m.acc_w().unwrap(), 0.4));
        assert!(matches!(m.bwt(), Err(MetricsError::TooFewTasks("BWT"))));
        let r = MetricsReport::from_matrix(&m).unwrap();
        assert_eq!(r.bwt, None);
        assert_eq!(r.fwt, None);
    }

    #[test]
    fn validation() {
        assert!(matches!(AccMatrix::new(vec![1, 0], vec![0.0, 0.0]), Err(MetricsError::EmptyTest(2))));
        let mut m = AccMatrix::new(vec![1, 1], vec![0.0, 0.0]).unwrap();
        assert!(matches!(m.set(1, 1, 1.5), Err(MetricsError::OutOfRange { .. })));
        assert!(m.set(3, 1, 0.5).is_err());
        assert!(matches!(m.acc_a(), Err(MetricsError::Missing { i: 1, j: 2 })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut m = grid3();
        m.set(1, 1, 1.0 / 3.0).unwrap();
        let csv = m.to_csv();
        let back = AccMatrix::from_csv(&csv).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_csv(), csv);
        assert_eq!(
            MetricsReport::from_matrix(&back).unwrap().to_json(),
            MetricsReport::from_matrix(&m).unwrap().to_json()
        );
    }

    #[test]
    fn csv_errors_name_line() {
        let bad = "test_task,after_1,test_size,baseline\n1,zz,3,0.0\n";
        assert!(matches!(AccMatrix::from_csv(bad), Err(MetricsError::Parse { line: 2, .. })));
    }
}
