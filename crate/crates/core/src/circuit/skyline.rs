// SPDX-License-Identifier: Apache-2.0

//! Envelope (skyline) LDLᵀ factorization for sparse symmetric positive-definite systems.
//!
//! Row `i` of the lower triangle is stored densely from its first structural
//! nonzero column up to (but excluding) the diagonal. Fill-in during
//! factorization never leaves the envelope, so storage is fixed at assembly.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not positive definite: pivot {pivot} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("entry ({row}, {col}) lies above the diagonal")]
    UpperEntry { row: usize, col: usize },
}

/// Lower-triangular sparse matrix in coordinate form, duplicates summed.
#[derive(Debug, Clone, Default)]
pub struct SymmetricTriplets {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SymmetricTriplets {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at `(row, col)` with `col <= row`.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(col <= row && row < self.n);
        self.entries.push((row, col, value));
    }

    /// Stamps a two-terminal conductance between unknowns `a` and `b`.
    pub fn stamp_pair(&mut self, a: usize, b: usize, g: f64) {
        let (hi, lo) = if a > b { (a, b) } else { (b, a) };
        self.add(a, a, g);
        self.add(b, b, g);
        self.add(hi, lo, -g);
    }

    /// Compresses into row-sorted form with duplicates merged.
    pub fn compress(mut self) -> CompressedSymmetric {
        self.entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for (r, c, v) in self.entries {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }
        CompressedSymmetric { n: self.n, entries }
    }
}

/// Row-sorted lower triangle, kept alongside the factor for residual checks.
#[derive(Debug, Clone)]
pub struct CompressedSymmetric {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl CompressedSymmetric {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// y = A x using the symmetric lower-triangle storage.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    pub fn factor(&self) -> Result<SkylineLdl, FactorError> {
        SkylineLdl::factor(self)
    }
}

#[derive(Debug, Clone)]
pub struct SkylineLdl {
    first: Vec<usize>,
    offsets: Vec<usize>,
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl SkylineLdl {
    pub fn factor(matrix: &CompressedSymmetric) -> Result<Self, FactorError> {
        let n = matrix.n;
        let mut first: Vec<usize> = (0..n).collect();
        for &(r, c, _) in &matrix.entries {
            if c > r {
                return Err(FactorError::UpperEntry { row: r, col: c });
            }
            first[r] = first[r].min(c);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            offsets.push(offsets[i] + (i - first[i]));
        }
        let mut lower = vec![0.0; offsets[n]];
        let mut diag = vec![0.0; n];
        for &(r, c, v) in &matrix.entries {
            if r == c {
                diag[r] += v;
            } else {
                lower[offsets[r] + (c - first[r])] += v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            let (done, rest) = lower.split_at_mut(offsets[i]);
            let row_i = &mut rest[..i - fi];
            // Crout sweep: row_i[j] becomes l_ij * d_j.
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                if k0 < j {
                    let row_j = &done[offsets[j]..offsets[j + 1]];
                    let a = &row_i[k0 - fi..j - fi];
                    let b = &row_j[k0 - fj..j - fj];
                    let s: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                    row_i[j - fi] -= s;
                }
            }
            let mut d = diag[i];
            for j in fi..i {
                let w = row_i[j - fi];
                let l = w / diag[j];
                d -= w * l;
                row_i[j - fi] = l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(FactorError::NotPositiveDefinite { row: i, pivot: d });
            }
            diag[i] = d;
        }

        Ok(Self {
            first,
            offsets,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of stored off-diagonal factor entries.
    pub fn envelope_size(&self) -> usize {
        self.lower.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        let mut x = rhs.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            let s: f64 = row.iter().zip(&x[fi..i]).map(|(l, y)| l * y).sum();
            x[i] -= s;
        }
        for (xi, d) in x.iter_mut().zip(&self.diag) {
            *xi /= d;
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let xi = x[i];
            let row = &self.lower[self.offsets[i]..self.offsets[i + 1]];
            for (xj, l) in x[fi..i].iter_mut().zip(row) {
                *xj -= l * xi;
            }
        }
        x
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
