use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Lower-triangular accuracy matrix: row `s` holds accuracies on tasks
/// `0..=s` after training through task `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultMatrix {
    tasks: usize,
    rows: Vec<Vec<f64>>,
}

impl ResultMatrix {
    pub fn new(tasks: usize) -> Self {
        Self {
            tasks,
            rows: Vec::with_capacity(tasks),
        }
    }

    pub fn from_rows(tasks: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut r = Self::new(tasks);
        for row in rows {
            r.push_row(row)?;
        }
        Ok(r)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.tasks
    }

    pub fn get(&self, s: usize, t: usize) -> Option<f64> {
        self.rows.get(s).and_then(|r| r.get(t)).copied()
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        let s = self.rows.len();
        if s >= self.tasks {
            return Err(Error::Contract(format!(
                "result matrix already has {} rows",
                self.tasks
            )));
        }
        if row.len() != s + 1 {
            return Err(Error::Dimension(format!(
                "row {s} needs {} entries, got {}",
                s + 1,
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Contract(format!("accuracy {v} outside [0, 1]")));
        }
        self.rows.push(row);
        Ok(())
    }

    fn require_complete(&self) -> Result<&[f64]> {
        if !self.is_complete() || self.tasks == 0 {
            return Err(Error::Contract(format!(
                "result matrix has {} of {} rows",
                self.rows.len(),
                self.tasks
            )));
        }
        Ok(&self.rows[self.tasks - 1])
    }

    /// Mean final-row accuracy.
    pub fn acc(&self) -> Result<f64> {
        let last = self.require_complete()?;
        Ok(last.iter().sum::<f64>() / last.len() as f64)
    }

    /// Mean over earlier tasks of best recorded accuracy minus final accuracy.
    pub fn fgt(&self) -> Result<f64> {
        let last = self.require_complete()?;
        let t_count = self.tasks;
        if t_count == 1 {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (t, final_acc) in last.iter().enumerate().take(t_count - 1) {
            let best = (t..t_count).map(|s| self.rows[s][t]).fold(f64::NEG_INFINITY, f64::max);
            total += best - final_acc;
        }
        Ok(total / (t_count - 1) as f64)
    }

    /// Header `t0..t{T-1}`, one line per recorded row, blanks above the
    /// diagonal. Values use round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = (0..self.tasks).map(|t| format!("t{t}")).collect::<Vec<_>>().join(",");
        out.push('\n');
        for row in &self.rows {
            for t in 0..self.tasks {
                if t > 0 {
                    out.push(',');
                }
                if let Some(v) = row.get(t) {
                    write!(out, "{v:?}").expect("string write");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        for (i, h) in header.iter().enumerate() {
            if h.trim() != format!("t{i}") {
                return Err(Error::Parse {
                    offset: 0,
                    msg: format!("column {i} should be `t{i}`, found `{h}`"),
                });
            }
        }
        let mut r = Self::new(header.len());
        for (s, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut row = Vec::with_capacity(s + 1);
            for (t, cell) in rec.iter().enumerate() {
                let cell = cell.trim();
                if t <= s {
                    let v = cell.parse::<f64>().map_err(|e| Error::Parse {
                        offset: rec.position().map_or(0, |p| p.byte()),
                        msg: format!("R[{s},{t}] = `{cell}`: {e}"),
                    })?;
                    row.push(v);
                }
            }
            r.push_row(row)?;
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_task_hand_case() {
        let r = ResultMatrix::from_rows(2, vec![vec![1.0], vec![0.8, 1.0]]).unwrap();
        assert!((r.acc().unwrap() - 0.9).abs() < 1e-12);
        assert!((r.fgt().unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_task_has_no_forgetting() {
        let r = ResultMatrix::from_rows(1, vec![vec![0.7]]).unwrap();
        assert_eq!(r.fgt().unwrap(), 0.0);
        assert_eq!(r.acc().unwrap(), 0.7);
    }

    #[test]
    fn best_row_is_taken_after_training() {
        // Task 0 peaks at s = 1; FGT = ((0.9 − 0.5) + (0.8 − 0.8)) / 2.
        let r = ResultMatrix::from_rows(3, vec![vec![0.7], vec![0.9, 0.6], vec![0.5, 0.8, 1.0]]).unwrap();
        assert!((r.fgt().unwrap() - 0.2).abs() < 1e-12);
        assert!((r.acc().unwrap() - 2.3 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_and_invalid() {
        let r = ResultMatrix::from_rows(3, vec![vec![0.7]]).unwrap();
        assert!(r.acc().is_err());
        assert!(r.fgt().is_err());
        let mut r = ResultMatrix::new(2);
        assert!(r.push_row(vec![1.2]).is_err());
        assert!(r.push_row(vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let r =
            ResultMatrix::from_rows(3, vec![vec![0.1], vec![0.2, 0.30000000000000004], vec![1.0, 0.0, 0.5]]).unwrap();
        let text = r.to_csv();
        assert!(text.starts_with("t0,t1,t2\n0.1,,\n"));
        assert_eq!(ResultMatrix::from_csv(&text).unwrap(), r);
        assert!(ResultMatrix::from_csv("a,b\n1,\n").is_err());
    }
}
