//! Gauss quadrature with respect to uniform probability measures, the
//! Lagrange nodal bases living on the nodes, and their (diagonal) mass
//! matrices with factors `M = L L^T`.
//!
//! Nodes are computed by Newton iteration on the Legendre polynomials with
//! Chebyshev initial guesses and then mapped affinely onto the support; the
//! weights of a `d`-point rule sum to one and the rule integrates
//! polynomials of degree `2d - 1` exactly against the measure.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest supported number of quadrature points per rule.
pub const MAX_POINTS: usize = 64;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("uniform measure requires lo < hi, got [{lo}, {hi}]")]
    InvalidSupport { lo: f64, hi: f64 },
    #[error("a quadrature rule needs at least one point")]
    ZeroPoints,
    #[error("rules with more than {MAX_POINTS} points are not supported (requested {0})")]
    TooManyPoints(usize),
    #[error("Newton iteration for Legendre root {index} did not reach {NEWTON_TOL:e}")]
    NewtonDivergence { index: usize },
    #[error("matrix is not symmetric positive definite (size {0})")]
    NotSpd(usize),
    #[error("tensor grid needs at least one rule")]
    EmptyGrid,
}

/// Uniform probability measure on `[lo, hi]` with density `1/(hi-lo)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformMeasure {
    lo: f64,
    hi: f64,
}

impl UniformMeasure {
    pub fn new(lo: f64, hi: f64) -> Result<Self, QuadratureError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(QuadratureError::InvalidSupport { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Moment of the monomial `a^p` with respect to the measure,
    /// `(hi^(p+1) - lo^(p+1)) / ((p+1)(hi - lo))`.
    pub fn monomial_moment(&self, p: u32) -> f64 {
        let q = (p + 1) as f64;
        (self.hi.powi(p as i32 + 1) - self.lo.powi(p as i32 + 1)) / (q * (self.hi - self.lo))
    }
}

/// Gauss rule for a uniform probability measure; also fixes the Lagrange
/// nodal basis of the corresponding PCE dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    measure: UniformMeasure,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Gauss-Legendre nodes/weights on [-1, 1] for the *probability* measure
/// (weights sum to one).
fn gauss_legendre_reference(d: usize) -> Result<(Vec<f64>, Vec<f64>), QuadratureError> {
    let mut nodes = vec![0.0; d];
    let mut weights = vec![0.0; d];
    // exploit symmetry: compute the lower half, mirror the rest
    let half = d.div_ceil(2);
    for m in 0..half {
        let k = d - m; // root index counted from the right, 1-based
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (d as f64 + 0.5)).cos();
        let mut converged = false;
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, p1) = legendre_with_prev(d, x);
            dp = d as f64 * (x * p - p1) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() <= NEWTON_TOL {
                // one polishing step, then stop
                let (p, p1) = legendre_with_prev(d, x);
                dp = d as f64 * (x * p - p1) / (x * x - 1.0);
                x -= p / dp;
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(QuadratureError::NewtonDivergence { index: m });
        }
        let w = 1.0 / ((1.0 - x * x) * dp * dp);
        nodes[m] = -x.abs();
        nodes[d - 1 - m] = x.abs();
        weights[m] = w;
        weights[d - 1 - m] = w;
    }
    if d % 2 == 1 {
        nodes[d / 2] = 0.0;
    }
    // normalize against rounding so the weights sum to one exactly enough
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok((nodes, weights))
}

/// Evaluates `(P_d(x), P_{d-1}(x))` by the three-term recurrence.
fn legendre_with_prev(d: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=d {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

/// `d`-point Gauss rule for the uniform probability measure on the given
/// support.
pub fn gauss_rule(measure: UniformMeasure, d: usize) -> Result<QuadratureRule, QuadratureError> {
    if d == 0 {
        return Err(QuadratureError::ZeroPoints);
    }
    if d > MAX_POINTS {
        return Err(QuadratureError::TooManyPoints(d));
    }
    let (ref_nodes, weights) = gauss_legendre_reference(d)?;
    let mid = 0.5 * (measure.lo + measure.hi);
    let scale = 0.5 * (measure.hi - measure.lo);
    let nodes = ref_nodes.iter().map(|&x| mid + scale * x).collect();
    Ok(QuadratureRule {
        measure,
        nodes,
        weights,
    })
}

impl QuadratureRule {
    pub fn measure(&self) -> UniformMeasure {
        self.measure
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Quadrature sum `sum_k w_k z(a_k)`.
    pub fn integrate(&self, mut z: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&a, &w)| w * z(a))
            .sum()
    }

    /// Value at `alpha` of the Lagrange polynomial that is one at node `j`
    /// (0-based) and zero at the other nodes.
    pub fn lagrange_eval(&self, j: usize, alpha: f64) -> f64 {
        let aj = self.nodes[j];
        let mut v = 1.0;
        for (m, &am) in self.nodes.iter().enumerate() {
            if m != j {
                v *= (alpha - am) / (aj - am);
            }
        }
        v
    }

    /// All Lagrange basis values at `alpha`, i.e. `Psi(alpha)`.
    pub fn lagrange_all(&self, alpha: f64) -> DVector<f64> {
        DVector::from_fn(self.len(), |j, _| self.lagrange_eval(j, alpha))
    }
}

/// Diagonal mass matrix of the Lagrange nodal basis: `M = diag(w)`.  This is
/// exact because the products of two basis polynomials have degree
/// `2d - 2 <= 2d - 1`.
pub fn mass_matrix(rule: &QuadratureRule) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(rule.weights()))
}

/// A factor `L` with `M = L L^T` of a dimension's mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFactor {
    dim: usize,
    kind: FactorKind,
}

#[derive(Debug, Clone, PartialEq)]
enum FactorKind {
    Diagonal(DVector<f64>),
    Lower(DMatrix<f64>),
}

impl MassFactor {
    /// Cholesky-type factor of an SPD matrix; diagonal input yields the
    /// diagonal square-root factor.
    pub fn from_spd(m: &DMatrix<f64>) -> Result<Self, QuadratureError> {
        let n = m.nrows();
        if n != m.ncols() || n == 0 {
            return Err(QuadratureError::NotSpd(n));
        }
        let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        if is_diagonal {
            let mut d = DVector::zeros(n);
            for i in 0..n {
                if m[(i, i)] <= 0.0 {
                    return Err(QuadratureError::NotSpd(n));
                }
                d[i] = m[(i, i)].sqrt();
            }
            return Ok(Self {
                dim: n,
                kind: FactorKind::Diagonal(d),
            });
        }
        let chol = Cholesky::new(m.clone()).ok_or(QuadratureError::NotSpd(n))?;
        Ok(Self {
            dim: n,
            kind: FactorKind::Lower(chol.l()),
        })
    }

    /// Factor of `diag(w)`, i.e. `L = diag(sqrt(w))`.
    pub fn from_weights(w: &[f64]) -> Result<Self, QuadratureError> {
        if w.is_empty() || w.iter().any(|&x| x <= 0.0) {
            return Err(QuadratureError::NotSpd(w.len()));
        }
        Ok(Self {
            dim: w.len(),
            kind: FactorKind::Diagonal(DVector::from_iterator(
                w.len(),
                w.iter().map(|x| x.sqrt()),
            )),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            dim: n,
            kind: FactorKind::Diagonal(DVector::from_element(n, 1.0)),
        }
    }

    /// Factor of the rule's diagonal mass matrix.
    pub fn for_rule(rule: &QuadratureRule) -> Self {
        Self::from_weights(rule.weights()).expect("quadrature weights are positive")
    }

    /// Size `d_i` of the dimension this factor belongs to.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, FactorKind::Diagonal(_))
    }

    /// Dense `L`.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => DMatrix::from_diagonal(d),
            FactorKind::Lower(l) => l.clone(),
        }
    }

    /// Dense `L^T`.
    pub fn matrix_t(&self) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => DMatrix::from_diagonal(d),
            FactorKind::Lower(l) => l.transpose(),
        }
    }

    /// Reconstructed mass matrix `L L^T`.
    pub fn mass(&self) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => DMatrix::from_diagonal(&d.component_mul(d)),
            FactorKind::Lower(l) => l * l.transpose(),
        }
    }

    /// Solves `L X = B`.
    pub fn solve_l(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => scale_rows(b, d, true),
            FactorKind::Lower(l) => l
                .solve_lower_triangular(b)
                .expect("mass factor is invertible"),
        }
    }

    /// Solves `L^T X = B`.
    pub fn solve_lt(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => scale_rows(b, d, true),
            FactorKind::Lower(l) => l
                .transpose()
                .solve_upper_triangular(b)
                .expect("mass factor is invertible"),
        }
    }

    /// `L^T B`.
    pub fn mul_lt(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => scale_rows(b, d, false),
            FactorKind::Lower(l) => l.transpose() * b,
        }
    }

    /// `L B`.
    pub fn mul_l(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.kind {
            FactorKind::Diagonal(d) => scale_rows(b, d, false),
            FactorKind::Lower(l) => l * b,
        }
    }

    /// Condition estimate of `L`; for diagonal factors this is
    /// `max sqrt(w) / min sqrt(w)`.
    pub fn cond(&self) -> f64 {
        match &self.kind {
            FactorKind::Diagonal(d) => {
                let max = d.iter().cloned().fold(f64::MIN, f64::max);
                let min = d.iter().cloned().fold(f64::MAX, f64::min);
                max / min
            }
            FactorKind::Lower(l) => {
                let svd = l.clone().svd(false, false);
                let max = svd.singular_values.max();
                let min = svd.singular_values.min();
                max / min
            }
        }
    }
}

fn scale_rows(b: &DMatrix<f64>, d: &DVector<f64>, invert: bool) -> DMatrix<f64> {
    let mut out = b.clone();
    for i in 0..b.nrows() {
        let s = if invert { 1.0 / d[i] } else { d[i] };
        for j in 0..b.ncols() {
            out[(i, j)] *= s;
        }
    }
    out
}

/// General Cholesky-type factorization entry point (see [`MassFactor`]).
pub fn mass_factor(m: &DMatrix<f64>) -> Result<MassFactor, QuadratureError> {
    MassFactor::from_spd(m)
}

/// One node of the full tensor-product quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// 0-based index per dimension.
    pub multi_index: Vec<usize>,
    /// Node coordinate per dimension.
    pub nodes: Vec<f64>,
    /// Product of the per-dimension weights.
    pub weight: f64,
}

/// All combinations of the rules' nodes with joint weights, enumerated with
/// the first dimension's index varying fastest (the tensor flat ordering).
pub fn tensor_grid(rules: &[QuadratureRule]) -> Result<Vec<GridPoint>, QuadratureError> {
    if rules.is_empty() {
        return Err(QuadratureError::EmptyGrid);
    }
    let dims: Vec<usize> = rules.iter().map(|r| r.len()).collect();
    let total: usize = dims.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; rules.len()];
    for _ in 0..total {
        let mut weight = 1.0;
        let mut nodes = Vec::with_capacity(rules.len());
        for (i, rule) in rules.iter().enumerate() {
            nodes.push(rule.nodes()[idx[i]]);
            weight *= rule.weights()[idx[i]];
        }
        out.push(GridPoint {
            multi_index: idx.clone(),
            nodes,
            weight,
        });
        // first index fastest
        for (i, d) in idx.iter_mut().zip(&dims) {
            *i += 1;
            if *i < *d {
                break;
            }
            *i = 0;
        }
    }
    Ok(out)
}

impl Serialize for QuadratureRule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Raw<'a> {
            lo: f64,
            hi: f64,
            nodes: &'a [f64],
            weights: &'a [f64],
        }
        Raw {
            lo: self.measure.lo,
            hi: self.measure.hi,
            nodes: &self.nodes,
            weights: &self.weights,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for QuadratureRule {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            lo: f64,
            hi: f64,
            nodes: Vec<f64>,
            weights: Vec<f64>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let measure = UniformMeasure::new(raw.lo, raw.hi).map_err(serde::de::Error::custom)?;
        if raw.nodes.is_empty() || raw.nodes.len() != raw.weights.len() {
            return Err(serde::de::Error::custom("nodes/weights length mismatch"));
        }
        Ok(QuadratureRule {
            measure,
            nodes: raw.nodes,
            weights: raw.weights,
        })
    }
}
