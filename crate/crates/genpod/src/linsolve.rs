//! Discrete operator storage and direct solves.
//!
//! Model operators are either small dense matrices or banded matrices from
//! structured-grid stencils.  Systems with up to [`DENSE_SOLVE_LIMIT`]
//! unknowns are solved by dense LU with partial pivoting; larger banded
//! systems use an in-band LU without pivoting, which is adequate for the
//! diagonally dominant convection-diffusion operators assembled here.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Largest system solved by dense LU.
pub const DENSE_SOLVE_LIMIT: usize = 2500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("matrix is singular (pivot {pivot:e} at row {row})")]
    Singular { row: usize, pivot: f64 },
    #[error("operator shapes do not match: {0} vs {1}")]
    ShapeMismatch(usize, usize),
}

/// Square banded matrix with equal lower/upper bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    /// Column-major band storage: entry `(i, j)` lives at
    /// `(i - j + bw) + j * (2 bw + 1)`.
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        assert!(bw < n.max(1));
        Self {
            n,
            bw,
            data: vec![0.0; (2 * bw + 1) * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.bw);
        (i + self.bw - j) + j * (2 * self.bw + 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.idx(i, j);
        self.data[p] += v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.bw);
            let hi = (j + self.bw).min(self.n - 1);
            for i in lo..=hi {
                m[(i, j)] = self.data[self.idx(i, j)];
            }
        }
        m
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = DVector::zeros(self.n);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let lo = j.saturating_sub(self.bw);
            let hi = (j + self.bw).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.data[self.idx(i, j)] * xj;
            }
        }
        y
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }

    /// In-band LU without pivoting, in place; fill stays inside the band.
    fn lu_in_place(&mut self) -> Result<(), SolveError> {
        let tol = 1e-14 * self.max_abs();
        for k in 0..self.n {
            let pivot = self.data[self.idx(k, k)];
            if pivot.abs() <= tol {
                return Err(SolveError::Singular { row: k, pivot });
            }
            let hi = (k + self.bw).min(self.n - 1);
            for i in k + 1..=hi {
                let pl = self.idx(i, k);
                let l = self.data[pl] / pivot;
                self.data[pl] = l;
                if l == 0.0 {
                    continue;
                }
                let jhi = (k + self.bw).min(self.n - 1);
                for j in k + 1..=jhi {
                    let ukj = self.data[self.idx(k, j)];
                    if ukj != 0.0 {
                        let p = self.idx(i, j);
                        self.data[p] -= l * ukj;
                    }
                }
            }
        }
        Ok(())
    }

    /// Solves `A x = b` by banded LU (destroys a copy of the band data).
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
        let mut lu = self.clone();
        lu.lu_in_place()?;
        let mut x = b.clone();
        // forward substitution with unit lower factor
        for i in 0..lu.n {
            let lo = i.saturating_sub(lu.bw);
            let mut s = x[i];
            for j in lo..i {
                s -= lu.data[lu.idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        // backward substitution
        for i in (0..lu.n).rev() {
            let hi = (i + lu.bw).min(lu.n - 1);
            let mut s = x[i];
            for j in i + 1..=hi {
                s -= lu.data[lu.idx(i, j)] * x[j];
            }
            x[i] = s / lu.data[lu.idx(i, i)];
        }
        Ok(x)
    }
}

/// A model operator in whichever storage its assembly produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DMatrix<f64>),
    Band(BandMatrix),
}

impl Operator {
    pub fn nrows(&self) -> usize {
        match self {
            Operator::Dense(m) => m.nrows(),
            Operator::Band(b) => b.n(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m.clone(),
            Operator::Band(b) => b.to_dense(),
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Operator::Dense(m) => m * x,
            Operator::Band(b) => b.matvec(x),
        }
    }

    /// `A * X` for a dense block of column vectors.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Operator::Dense(m) => m * x,
            Operator::Band(b) => {
                let mut out = DMatrix::zeros(b.n(), x.ncols());
                for j in 0..x.ncols() {
                    out.set_column(j, &b.matvec(&x.column(j).into_owned()));
                }
                out
            }
        }
    }

    /// `base + sum_i alpha_i comp_i`; all operators must share storage and
    /// shape.
    pub fn affine_combine(
        base: &Operator,
        comps: &[Operator],
        alpha: &[f64],
    ) -> Result<Operator, SolveError> {
        debug_assert_eq!(comps.len(), alpha.len());
        match base {
            Operator::Dense(m) => {
                let mut out = m.clone();
                for (c, &a) in comps.iter().zip(alpha) {
                    match c {
                        Operator::Dense(cm) => {
                            if cm.shape() != m.shape() {
                                return Err(SolveError::ShapeMismatch(cm.nrows(), m.nrows()));
                            }
                            for (o, x) in out.iter_mut().zip(cm.iter()) {
                                *o += a * x;
                            }
                        }
                        Operator::Band(_) => {
                            return Err(SolveError::ShapeMismatch(0, m.nrows()));
                        }
                    }
                }
                Ok(Operator::Dense(out))
            }
            Operator::Band(bm) => {
                let mut out = bm.clone();
                for (c, &a) in comps.iter().zip(alpha) {
                    match c {
                        Operator::Band(cb) => {
                            if cb.n() != bm.n() || cb.bandwidth() != bm.bandwidth() {
                                return Err(SolveError::ShapeMismatch(cb.n(), bm.n()));
                            }
                            for (o, x) in out.data.iter_mut().zip(&cb.data) {
                                *o += a * x;
                            }
                        }
                        Operator::Dense(_) => {
                            return Err(SolveError::ShapeMismatch(0, bm.n()));
                        }
                    }
                }
                Ok(Operator::Band(out))
            }
        }
    }

    /// Direct solve: dense LU with partial pivoting up to
    /// [`DENSE_SOLVE_LIMIT`] unknowns, banded LU above.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
        let n = self.nrows();
        match self {
            Operator::Band(bm) if n > DENSE_SOLVE_LIMIT => bm.solve(b),
            _ => dense_lu_solve(&self.to_dense(), b),
        }
    }

    /// Whether a pivoted LU goes through without a (near-)zero pivot.
    pub fn is_invertible(&self) -> bool {
        let m = self.to_dense();
        let lu = m.lu();
        let u = lu.u();
        let n = u.nrows().min(u.ncols());
        let mut max = 0.0f64;
        let mut min = f64::MAX;
        for i in 0..n {
            let d = u[(i, i)].abs();
            max = max.max(d);
            min = min.min(d);
        }
        max > 0.0 && min > 1e-12 * max
    }
}

pub(crate) fn dense_lu_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, SolveError> {
    let lu = m.clone().lu();
    let u = lu.u();
    let n = u.nrows().min(u.ncols());
    let mut max = 0.0f64;
    for i in 0..n {
        max = max.max(u[(i, i)].abs());
    }
    for i in 0..n {
        let d = u[(i, i)].abs();
        if d <= 1e-14 * max {
            return Err(SolveError::Singular { row: i, pivot: d });
        }
    }
    lu.solve(b).ok_or(SolveError::Singular { row: 0, pivot: 0.0 })
}
