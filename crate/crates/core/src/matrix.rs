//! Dense row-major square matrices, sized for desk-scale wrapped chains.

use crate::error::{Error, Result};

/// Square matrix stored row-major. Row `i` is the slice `data[i*n .. (i+1)*n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn zeros(n: usize) -> Self {
        RowMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {} has length {}, expected {}",
                    i,
                    row.len(),
                    n
                )));
            }
            data.extend_from_slice(&row);
        }
        Ok(RowMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    /// Matrix product `self * other`. Panics on size mismatch.
    pub fn matmul(&self, other: &RowMatrix) -> RowMatrix {
        assert_eq!(self.n, other.n, "matmul size mismatch");
        let n = self.n;
        let mut out = RowMatrix::zeros(n);
        for i in 0..n {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for j in 0..n {
                    out_row[j] += aik * b_row[j];
                }
            }
        }
        out
    }

    /// Row vector times matrix: `v * self`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "left_mul size mismatch");
        let n = self.n;
        let mut out = vec![0.0; n];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for j in 0..n {
                out[j] += vi * row[j];
            }
        }
        out
    }

    /// Largest deviation of any row sum from 1.
    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Max over rows of the L1 distance between corresponding rows.
    ///
    /// For stochastic matrices this equals twice the operator norm induced
    /// by total variation, and is the kernel-distance used by the
    /// perturbation and Lipschitz diagnostics.
    pub fn max_row_l1_distance(&self, other: &RowMatrix) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "matrix sizes {} vs {}",
                self.n, other.n
            )));
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let d: f64 = self
                .row(i)
                .iter()
                .zip(other.row(i))
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(d);
        }
        Ok(worst)
    }
}
