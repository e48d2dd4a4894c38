use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// One `coeffs . x <= rhs` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// `min c.x` subject to `<=` rows and variable bounds; the first `p`
/// variables are integer.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub n: usize,
    pub p: usize,
    pub c: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowFile {
    coeffs: Vec<(usize, f64)>,
    sense: Sense,
    rhs: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n: usize,
    p: usize,
    c: Vec<f64>,
    /// `[lo, hi]`; `null` is unbounded on that side.
    bounds: Vec<(Option<f64>, Option<f64>)>,
    rows: Vec<RowFile>,
}

impl MilpInstance {
    /// Builds and validates an instance from `<=` rows.
    pub fn new(p: usize, c: Vec<f64>, lo: Vec<f64>, hi: Vec<f64>, rows: Vec<Row>) -> Result<Self> {
        let inst = Self { n: c.len(), p, c, lo, hi, rows };
        inst.validate()?;
        Ok(inst)
    }

    /// Adds a row of any sense, normalising it to `<=` form.
    pub fn push_row(rows: &mut Vec<Row>, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let neg = |cs: &[(usize, f64)]| cs.iter().map(|&(j, v)| (j, -v)).collect::<Vec<_>>();
        match sense {
            Sense::Le => rows.push(Row { coeffs, rhs }),
            Sense::Ge => rows.push(Row { coeffs: neg(&coeffs), rhs: -rhs }),
            Sense::Eq => {
                rows.push(Row { coeffs: neg(&coeffs), rhs: -rhs });
                rows.push(Row { coeffs, rhs });
            }
        }
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn is_integer(&self, j: usize) -> bool {
        j < self.p
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if self.p > self.n {
            return bad(format!("p = {} exceeds n = {}", self.p, self.n));
        }
        if self.lo.len() != self.n || self.hi.len() != self.n {
            return bad("bounds length differs from n".into());
        }
        for j in 0..self.n {
            if !self.c[j].is_finite() {
                return bad(format!("non-finite cost on x{j}"));
            }
            if self.lo[j].is_nan() || self.hi[j].is_nan() || self.lo[j] > self.hi[j] || self.lo[j] == f64::INFINITY {
                return bad(format!("inconsistent bounds on x{j}"));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return bad(format!("non-finite rhs on row {i}"));
            }
            for &(j, v) in &r.coeffs {
                if j >= self.n || !v.is_finite() {
                    return bad(format!("bad coefficient ({j}, {v}) on row {i}"));
                }
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    pub fn row_activity(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].coeffs.iter().map(|&(j, v)| v * x[j]).sum()
    }

    /// Bounds, rows and integrality all hold within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        (0..self.n).all(|j| {
            x[j] >= self.lo[j] - tol
                && x[j] <= self.hi[j] + tol
                && (!self.is_integer(j) || (x[j] - x[j].round()).abs() <= tol)
        }) && (0..self.m()).all(|i| self.row_activity(i, x) <= self.rows[i].rhs + tol)
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            n: self.n,
            p: self.p,
            c: self.c.clone(),
            bounds: self
                .lo
                .iter()
                .zip(&self.hi)
                .map(|(&l, &h)| (l.is_finite().then_some(l), h.is_finite().then_some(h)))
                .collect(),
            rows: self
                .rows
                .iter()
                .map(|r| RowFile { coeffs: r.coeffs.clone(), sense: Sense::Le, rhs: r.rhs })
                .collect(),
        };
        serde_json::to_string(&file).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: InstanceFile = serde_json::from_str(text)?;
        if f.c.len() != f.n || f.bounds.len() != f.n {
            return Err(Error::InvalidInstance(format!(
                "n = {} but {} costs and {} bounds",
                f.n,
                f.c.len(),
                f.bounds.len()
            )));
        }
        let lo = f.bounds.iter().map(|b| b.0.unwrap_or(f64::NEG_INFINITY)).collect();
        let hi = f.bounds.iter().map(|b| b.1.unwrap_or(f64::INFINITY)).collect();
        let mut rows = Vec::with_capacity(f.rows.len());
        for r in f.rows {
            Self::push_row(&mut rows, r.coeffs, r.sense, r.rhs);
        }
        Self::new(f.p, f.c, lo, hi, rows)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(write_atomic(path, self.to_json().as_bytes())?)
    }
}
