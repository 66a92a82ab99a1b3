//! Compressed-row storage for symmetric matrices.
//!
//! Both triangles are stored, so row `i` doubles as column `i`. That keeps
//! `Q * e_i` a contiguous slice, which the SWAP and FW updates rely on.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseSymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, row_ptr: vec![0; dim + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        Self {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim as u32).collect(),
            vals: diag.to_vec(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    /// Symmetry is the caller's job (see [`SparseSymMatrix::is_symmetric`]).
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for &(i, j, v) in triplets {
            assert!(i < dim && j < dim, "triplet ({i},{j}) outside {dim}x{dim}");
            rows[i].push((j as u32, v));
        }
        Self::from_rows(dim, rows)
    }

    /// Builds from per-row `(col, value)` lists in any order; duplicates are summed.
    pub fn from_rows<I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = Vec<(u32, f64)>>,
    {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut count = 0;
        for mut row in rows {
            count += 1;
            row.sort_unstable_by_key(|e| e.0);
            let mut last: Option<u32> = None;
            for (c, v) in row {
                debug_assert!((c as usize) < dim);
                if last == Some(c) {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        assert_eq!(count, dim, "expected {dim} rows, got {count}");
        Self { dim, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c as usize, v))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.iter().all(|(i, j, v)| libm::fabs(self.get(j, i) - v) <= tol)
    }

    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(out.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *o = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out += scale * Q e_i`, i.e. adds a scaled column.
    pub fn axpy_column(&self, i: usize, scale: f64, out: &mut [f64]) {
        let (cols, vals) = self.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            out[c as usize] += scale * v;
        }
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let mut acc = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(i);
            let r: f64 = cols.iter().zip(vals).map(|(&c, &v)| v * x[c as usize]).sum();
            acc += xi * r;
        }
        acc
    }

    pub fn add(&self, other: &SparseSymMatrix) -> SparseSymMatrix {
        assert_eq!(self.dim, other.dim);
        let rows = (0..self.dim).map(|i| {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let mut row: Vec<(u32, f64)> = Vec::with_capacity(ca.len() + cb.len());
            row.extend(ca.iter().copied().zip(va.iter().copied()));
            row.extend(cb.iter().copied().zip(vb.iter().copied()));
            row
        });
        SparseSymMatrix::from_rows(self.dim, rows)
    }

    /// Removes entries with `|v| < tol`.
    pub fn prune(&self, tol: f64) -> SparseSymMatrix {
        let rows = (0..self.dim).map(|i| {
            let (c, v) = self.row(i);
            c.iter().copied().zip(v.iter().copied()).filter(|e| libm::fabs(e.1) >= tol).collect()
        });
        SparseSymMatrix::from_rows(self.dim, rows)
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> SparseSymMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] = f(i, self.cols[k] as usize, self.vals[k]);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.dim]; self.dim];
        for (i, j, v) in self.iter() {
            m[i][j] += v;
        }
        m
    }
}
