//! Dense column-major containers.
//!
//! Features are columns, individuals are rows. Column-major storage makes the
//! per-feature passes (fitting, testing, transforming) contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_columns(nrows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let ncols = columns.len();
        let mut data = Vec::with_capacity(nrows * ncols);
        for (j, c) in columns.into_iter().enumerate() {
            if c.len() != nrows {
                return Err(Error::Dimension(format!(
                    "column {j} has {} rows, expected {nrows}",
                    c.len()
                )));
            }
            data.extend(c);
        }
        Ok(Self { nrows, ncols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(nrows, ncols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {ncols}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.nrows + i] = v;
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.ncols).map(|j| self.get(i, j)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.nrows).map(|i| self.row(i)).collect()
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.ncols);
        for j in 0..self.ncols {
            let src = self.col(j);
            for (r, &i) in idx.iter().enumerate() {
                out.set(r, j, src[i]);
            }
        }
        out
    }
}

/// Nonnegative integer counts, individuals × features, with feature names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    nrows: usize,
    names: Vec<String>,
    data: Vec<u64>,
}

impl CountMatrix {
    pub fn from_columns(nrows: usize, columns: Vec<Vec<u64>>) -> Result<Self> {
        let names = (0..columns.len()).map(|j| format!("f{}", j + 1)).collect();
        Self::with_names(nrows, names, columns)
    }

    pub fn with_names(nrows: usize, names: Vec<String>, columns: Vec<Vec<u64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Dimension(format!(
                "{} feature names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut data = Vec::with_capacity(nrows * columns.len());
        for (j, c) in columns.into_iter().enumerate() {
            if c.len() != nrows {
                return Err(Error::Dimension(format!(
                    "feature {} has {} rows, expected {nrows}",
                    names[j],
                    c.len()
                )));
            }
            data.extend(c);
        }
        Ok(Self { nrows, names, data })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut columns = vec![Vec::with_capacity(nrows); ncols];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(Error::Dimension(format!("row {i} has {} entries, expected {ncols}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                columns[j].push(v);
            }
        }
        Self::from_columns(nrows, columns)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn set_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.ncols() {
            return Err(Error::Dimension("feature name count does not match columns".into()));
        }
        self.names = names;
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.data[j * self.nrows + i]
    }

    pub fn col(&self, j: usize) -> &[u64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn row(&self, i: usize) -> Vec<u64> {
        (0..self.ncols()).map(|j| self.get(i, j)).collect()
    }

    /// Per-individual totals; the sequencing depth when no depth column is given.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.nrows];
        for j in 0..self.ncols() {
            for (acc, &v) in s.iter_mut().zip(self.col(j)) {
                *acc += v as f64;
            }
        }
        s
    }

    pub fn to_f64(&self) -> Matrix {
        Matrix {
            nrows: self.nrows,
            ncols: self.ncols(),
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// One source: counts, binary outcome, covariates and sequencing depths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceData {
    pub counts: CountMatrix,
    pub labels: Vec<u8>,
    pub covariates: Matrix,
    pub depths: Vec<f64>,
}

impl SourceData {
    /// Checks shapes, label values and depth positivity.
    pub fn validate(&self) -> Result<()> {
        let n = self.counts.nrows();
        if self.labels.len() != n || self.covariates.nrows() != n || self.depths.len() != n {
            return Err(Error::Dimension(format!(
                "source has {n} count rows, {} labels, {} covariate rows, {} depths",
                self.labels.len(),
                self.covariates.nrows(),
                self.depths.len()
            )));
        }
        if self.labels.iter().any(|&y| y > 1) {
            return Err(Error::Data("labels must be binary (0/1)".into()));
        }
        if let Some(d) = self.depths.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Domain(format!("sequencing depth must be positive, got {d}")));
        }
        Ok(())
    }
}

/// Row sums with a floor of one, so that all-zero rows keep a finite log offset.
pub fn depths_from_counts(counts: &CountMatrix) -> Vec<f64> {
    counts.row_sums().into_iter().map(|s| s.max(1.0)).collect()
}
