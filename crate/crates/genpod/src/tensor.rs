//! Dense N-way coefficient tensors and the mode/permutation/vectorization
//! algebra on them.
//!
//! A [`CoeffTensor`] with dims `(d_1, ..., d_N)` stores the entry at
//! multi-index `(k_1, ..., k_N)` (0-based here, 1-based in the formulas) at
//! flat position
//!
//! ```text
//! k_1 + d_1*k_2 + d_1*d_2*k_3 + ...
//! ```
//!
//! i.e. the first index varies fastest.  Under this ordering `vec(X)` pairs
//! with Kronecker products written slowest-dimension-first,
//! `Psi_N (x) ... (x) Psi_1`, which is the contract kept by every routine in
//! this crate and by the serialized form `{"dims": [...], "data": [...]}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TensorError {
    #[error("dims must be nonempty with every entry positive, got {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("data length {got} does not match product of dims {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("mode {mode} out of range for a tensor of order {order}")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("matrix with {cols} columns cannot act on mode {mode} of size {dim}")]
    ModeSizeMismatch { mode: usize, dim: usize, cols: usize },
}

/// Dense real tensor of Galerkin coefficients, first index fastest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl CoeffTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidDims(dims));
        }
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(TensorError::DataLength {
                expected: len,
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self, TensorError> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(TensorError::InvalidDims(dims));
        }
        let len = dims.iter().product();
        Ok(Self {
            dims,
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every (0-based) multi-index.
    pub fn from_fn(
        dims: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self, TensorError> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0usize; t.order()];
        for pos in 0..t.len() {
            t.data[pos] = f(&idx);
            Self::advance(&mut idx, &t.dims);
        }
        Ok(t)
    }

    fn advance(idx: &mut [usize], dims: &[usize]) {
        for (i, d) in idx.iter_mut().zip(dims) {
            *i += 1;
            if *i < *d {
                return;
            }
            *i = 0;
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of dimensions N.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut pos = 0;
        let mut stride = 1;
        for (k, d) in idx.iter().zip(&self.dims) {
            debug_assert!(k < d);
            pos += k * stride;
            stride *= d;
        }
        pos
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let pos = self.flat_index(idx);
        self.data[pos] = value;
    }

    /// The flat coefficient vector `vec(X)` in the normative ordering.
    pub fn vec(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Mode-1 matricization: a `d_1 x (d_2*...*d_N)` matrix whose column
    /// `j = k_2 + d_2*k_3 + ...` is the fiber `X(., k_2, ..., k_N)`.
    ///
    /// Because the flat storage is first-index-fastest this is a pure
    /// reshape; folding the matrix back column-by-column is the inverse.
    pub fn matricize_mode1(&self) -> DMatrix<f64> {
        let d1 = self.dims[0];
        let rest = self.len() / d1;
        DMatrix::from_column_slice(d1, rest, &self.data)
    }

    /// Cyclic dimension permutation: dims rotate left, so the result has
    /// dims `(d_2, ..., d_N, d_1)` and entries
    /// `cycle(X)(k_2, ..., k_N, k_1) = X(k_1, k_2, ..., k_N)`.
    ///
    /// Applying it N times is the identity; for matrices it is the
    /// transpose.
    pub fn cycle(&self) -> CoeffTensor {
        let n = self.order();
        if n == 1 {
            return self.clone();
        }
        let mut new_dims = Vec::with_capacity(n);
        new_dims.extend_from_slice(&self.dims[1..]);
        new_dims.push(self.dims[0]);

        let d1 = self.dims[0];
        let rest = self.len() / d1;
        let mut data = vec![0.0; self.len()];
        // flat index of X is k1 + d1*r with r enumerating (k_2,...,k_N);
        // in the cycled tensor the same entry sits at r + rest*k1.
        for r in 0..rest {
            let base = r * d1;
            for k1 in 0..d1 {
                data[r + rest * k1] = self.data[base + k1];
            }
        }
        CoeffTensor {
            dims: new_dims,
            data,
        }
    }

    /// Applies `cycle` repeatedly so that dimension `dim` (0-based) becomes
    /// the first dimension.
    pub fn cycle_to_front(&self, dim: usize) -> Result<CoeffTensor, TensorError> {
        if dim >= self.order() {
            return Err(TensorError::ModeOutOfRange {
                mode: dim,
                order: self.order(),
            });
        }
        let mut t = self.clone();
        for _ in 0..dim {
            t = t.cycle();
        }
        Ok(t)
    }

    /// Mode product `m o_mode X` (0-based mode): contracts `m`'s columns
    /// against the `mode`-th dimension, replacing its size `d_mode` by
    /// `m.nrows()`.  Equivalent to folding `m * X^(mode)` and to
    /// `(I (x) ... (x) m (x) ... (x) I) vec(X)` with `m` in the `mode`-th
    /// Kronecker slot from the right.
    pub fn mode_product(&self, m: &DMatrix<f64>, mode: usize) -> Result<CoeffTensor, TensorError> {
        let n = self.order();
        if mode >= n {
            return Err(TensorError::ModeOutOfRange { mode, order: n });
        }
        let d = self.dims[mode];
        if m.ncols() != d {
            return Err(TensorError::ModeSizeMismatch {
                mode,
                dim: d,
                cols: m.ncols(),
            });
        }
        let rows = m.nrows();
        let left: usize = self.dims[..mode].iter().product();
        let right: usize = self.dims[mode + 1..].iter().product();

        let mut new_dims = self.dims.clone();
        new_dims[mode] = rows;
        let mut out = vec![0.0; left * rows * right];

        // view data as a (left, d, right) array, contract the middle axis
        for r in 0..right {
            let in_block = &self.data[r * left * d..(r + 1) * left * d];
            let out_block = &mut out[r * left * rows..(r + 1) * left * rows];
            for k in 0..d {
                let col = &in_block[k * left..(k + 1) * left];
                for kr in 0..rows {
                    let a = m[(kr, k)];
                    if a == 0.0 {
                        continue;
                    }
                    let dst = &mut out_block[kr * left..(kr + 1) * left];
                    for (o, x) in dst.iter_mut().zip(col) {
                        *o += a * x;
                    }
                }
            }
        }
        Ok(CoeffTensor {
            dims: new_dims,
            data: out,
        })
    }
}

/// Standard Kronecker product, `(a (x) b)` of shape
/// `(rows_a*rows_b) x (cols_a*cols_b)`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (pa, qa) = a.shape();
    let (pb, qb) = b.shape();
    let mut out = DMatrix::zeros(pa * pb, qa * qb);
    for i in 0..pa {
        for j in 0..qa {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..pb {
                for l in 0..qb {
                    out[(i * pb + k, j * qb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

impl<'de> Deserialize<'de> for CoeffTensor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            dims: Vec<usize>,
            data: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        CoeffTensor::new(raw.dims, raw.data).map_err(serde::de::Error::custom)
    }
}
