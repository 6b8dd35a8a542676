//! Mass-weighted tensor norms, per-dimension optimal POD bases, projections
//! onto products of reduced spaces, and the HOSVD truncation bound.
//!
//! The V-norm of a coefficient tensor is the Frobenius norm of the tensor
//! after every dimension has been hit with the transposed mass factor of its
//! space.  The POD basis of dimension `i` collects the leading left singular
//! vectors of the weighted mode-`i` matricization; truncating several
//! dimensions at once is quasi-optimal with the error controlled by the
//! discarded singular values.

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::quadrature::MassFactor;
use crate::tensor::{CoeffTensor, TensorError};

/// Singular values below `sigma_1 * RANK_TOL` count as numerically zero.
pub const RANK_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PodError {
    #[error("expected {expected} mass factors, got {got}")]
    FactorCount { expected: usize, got: usize },
    #[error("factor for dimension {dim} has size {factor} but the tensor dimension is {tensor}")]
    FactorSize {
        dim: usize,
        factor: usize,
        tensor: usize,
    },
    #[error("dimension {dim} out of range for order-{order} tensor")]
    DimOutOfRange { dim: usize, order: usize },
    #[error("rank {k} out of range for dimension of size {dim_size}")]
    RankOutOfRange { k: usize, dim_size: usize },
    #[error("basis for dimension {basis_dim} of size {basis_size} does not fit dimension {dim} of size {tensor_size}")]
    BasisMismatch {
        basis_dim: usize,
        basis_size: usize,
        dim: usize,
        tensor_size: usize,
    },
    #[error("expected {expected} reductions, got {got}")]
    ReductionCount { expected: usize, got: usize },
    #[error("truncation rank {k} exceeds spectrum length {len}")]
    TruncationRank { k: usize, len: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

fn check_factors(t: &CoeffTensor, factors: &[MassFactor]) -> Result<(), PodError> {
    if factors.len() != t.order() {
        return Err(PodError::FactorCount {
            expected: t.order(),
            got: factors.len(),
        });
    }
    for (i, f) in factors.iter().enumerate() {
        if f.dim() != t.dims()[i] {
            return Err(PodError::FactorSize {
                dim: i,
                factor: f.dim(),
                tensor: t.dims()[i],
            });
        }
    }
    Ok(())
}

/// Applies `L^T` of `factor` to the given mode.
fn apply_lt_mode(t: &CoeffTensor, factor: &MassFactor, mode: usize) -> Result<CoeffTensor, PodError> {
    Ok(t.mode_product(&factor.matrix_t(), mode)?)
}

/// V-norm of the function represented by `t`:
/// `sqrt(vec(t)^T (M_N (x) ... (x) M_1) vec(t))`, evaluated as the Frobenius
/// norm of the tensor with `L_i^T` applied to every mode.
pub fn weighted_norm(t: &CoeffTensor, factors: &[MassFactor]) -> Result<f64, PodError> {
    check_factors(t, factors)?;
    let mut w = t.clone();
    for (mode, f) in factors.iter().enumerate() {
        w = apply_lt_mode(&w, f, mode)?;
    }
    Ok(w.frobenius_norm())
}

/// Same value computed through the cycled-dimension route: dimension `dim`
/// is brought to the front first and the factors follow it around.
pub fn weighted_norm_cycled(
    t: &CoeffTensor,
    factors: &[MassFactor],
    dim: usize,
) -> Result<f64, PodError> {
    check_factors(t, factors)?;
    let n = t.order();
    if dim >= n {
        return Err(PodError::DimOutOfRange { dim, order: n });
    }
    let mut w = t.cycle_to_front(dim)?;
    for mode in 0..n {
        let f = &factors[(dim + mode) % n];
        w = apply_lt_mode(&w, f, mode)?;
    }
    Ok(w.frobenius_norm())
}

/// Per-dimension reduction: `k` leading left singular vectors of the
/// weighted matricization, the full singular spectrum, and the maps between
/// original and reduced coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    dim: usize,
    k: usize,
    /// `d_i x k`, orthonormal columns.
    vectors: DMatrix<f64>,
    /// Full spectrum of the weighted matricization, nonincreasing.
    singular_values: Vec<f64>,
    /// `V^T L^{-1}`, maps original basis functions to reduced ones.
    coeff_map: DMatrix<f64>,
    /// `V^T L^T`, maps original coefficients to reduced coefficients.
    reduce_map: DMatrix<f64>,
}

impl PodBasis {
    fn assemble(
        dim: usize,
        k: usize,
        vectors: DMatrix<f64>,
        singular_values: Vec<f64>,
        factor: &MassFactor,
    ) -> Self {
        let coeff_map = factor.solve_lt(&vectors).transpose();
        let reduce_map = factor.mul_l(&vectors).transpose();
        Self {
            dim,
            k,
            vectors,
            singular_values,
            coeff_map,
            reduce_map,
        }
    }

    /// Rebuilds a basis from serialized vectors/spectrum plus the mass
    /// factor of its dimension.
    pub fn from_parts(
        dim: usize,
        vectors: DMatrix<f64>,
        singular_values: Vec<f64>,
        factor: &MassFactor,
    ) -> Result<Self, PodError> {
        if factor.dim() != vectors.nrows() {
            return Err(PodError::FactorSize {
                dim,
                factor: factor.dim(),
                tensor: vectors.nrows(),
            });
        }
        let k = vectors.ncols();
        if k == 0 || k > vectors.nrows() {
            return Err(PodError::RankOutOfRange {
                k,
                dim_size: vectors.nrows(),
            });
        }
        Ok(Self::assemble(dim, k, vectors, singular_values, factor))
    }

    /// Which tensor dimension (0-based) the basis reduces.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Reduced dimension.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Size `d_i` of the unreduced dimension.
    pub fn full_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `V^T L^{-1}`.
    pub fn coeff_map(&self) -> &DMatrix<f64> {
        &self.coeff_map
    }

    /// `V^T L^T`.
    pub fn reduce_map(&self) -> &DMatrix<f64> {
        &self.reduce_map
    }

    /// Number of singular values above `RANK_TOL * sigma_1`.
    pub fn numerical_rank(&self) -> usize {
        let s1 = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * s1)
            .count()
    }

    /// Tail energy `sqrt(sum_{j >= k} sigma_j^2)` for truncation at `k`.
    pub fn tail(&self, k: usize) -> f64 {
        self.singular_values[k.min(self.singular_values.len())..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

/// Makes the entry of largest magnitude in each column positive (ties
/// resolved by the first such entry) so serialized bases are reproducible.
fn normalize_signs(u: &mut DMatrix<f64>) {
    for j in 0..u.ncols() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for i in 0..u.nrows() {
            let a = u[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u[(best, j)] < 0.0 {
            for i in 0..u.nrows() {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Extends the orthonormal columns of `u` to `k` orthonormal columns by
/// Gram-Schmidt against canonical directions (deterministic).
fn complete_orthonormal(u: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let d = u.nrows();
    let r = u.ncols();
    debug_assert!(k <= d);
    let mut cols: Vec<DVector<f64>> = (0..r).map(|j| u.column(j).into_owned()).collect();
    let mut cand = 0usize;
    while cols.len() < k && cand < d {
        let mut v = DVector::zeros(d);
        v[cand] = 1.0;
        cand += 1;
        // two Gram-Schmidt passes keep the loss of orthogonality at eps level
        for _ in 0..2 {
            for c in &cols {
                let dot = c.dot(&v);
                v.axpy(-dot, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    let mut out = DMatrix::zeros(d, k);
    for (j, c) in cols.iter().enumerate().take(k) {
        out.set_column(j, c);
    }
    out
}

/// Weighted matricization of dimension `dim`:
/// `L_i^T (cycle^{i} t)^(1) [L_{i-1} (x) ... (x) L_{i+1}]`, returned as a
/// dense matrix.
fn weighted_matricization(
    t: &CoeffTensor,
    factors: &[MassFactor],
    dim: usize,
) -> Result<DMatrix<f64>, PodError> {
    let n = t.order();
    let mut w = t.cycle_to_front(dim)?;
    for mode in 0..n {
        let f = &factors[(dim + mode) % n];
        w = apply_lt_mode(&w, f, mode)?;
    }
    Ok(w.matricize_mode1())
}

/// POD basis of dimension `dim` from the SVD of the weighted matricization.
///
/// `k` up to `d_i` is accepted; ranks beyond the spectrum length are filled
/// with a deterministic orthonormal completion, ranks beyond the numerical
/// rank log a warning.
pub fn pod_basis(
    t: &CoeffTensor,
    factors: &[MassFactor],
    dim: usize,
    k: usize,
) -> Result<PodBasis, PodError> {
    check_factors(t, factors)?;
    let n = t.order();
    if dim >= n {
        return Err(PodError::DimOutOfRange { dim, order: n });
    }
    let d = t.dims()[dim];
    if k == 0 || k > d {
        return Err(PodError::RankOutOfRange { k, dim_size: d });
    }

    let w = weighted_matricization(t, factors, dim)?;
    let rest = w.ncols();

    // Gram route for strongly rectangular matricizations: the d x d Gram
    // matrix costs far less than the SVD and only the leading vectors are
    // kept anyway.
    let (mut u, sigma) = if rest > 50 * d {
        let gram = &w * w.transpose();
        let mut eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let u = DMatrix::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
        for v in eig.eigenvalues.iter_mut() {
            *v = v.max(0.0).sqrt();
        }
        let sigma: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
        (u, sigma)
    } else {
        let mut svd = w.svd(true, false);
        svd.sort_by_singular_values();
        let u = svd.u.expect("left singular vectors requested");
        let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
        (u, sigma)
    };

    if k > u.ncols() {
        u = complete_orthonormal(&u, k);
    }
    let mut vectors = u.columns(0, k).into_owned();
    normalize_signs(&mut vectors);

    let s1 = sigma.first().copied().unwrap_or(0.0);
    let zero_from = sigma.iter().filter(|&&s| s > RANK_TOL * s1).count();
    if k > zero_from {
        log::warn!(
            "dimension {dim}: requested rank {k} exceeds numerical rank {zero_from} (trailing singular values are numerically zero)"
        );
    }

    Ok(PodBasis::assemble(dim, k, vectors, sigma, &factors[dim]))
}

/// Per-dimension instruction for [`project`], [`reduce`] and [`expand`].
#[derive(Debug, Clone, Copy)]
pub enum DimReduction<'a> {
    /// Leave this dimension untouched.
    Keep,
    /// Project/reduce this dimension with the given basis.
    Reduce(&'a PodBasis),
}

fn check_reductions(
    t: &CoeffTensor,
    reductions: &[DimReduction],
    reduced_side: bool,
) -> Result<(), PodError> {
    if reductions.len() != t.order() {
        return Err(PodError::ReductionCount {
            expected: t.order(),
            got: reductions.len(),
        });
    }
    for (i, r) in reductions.iter().enumerate() {
        if let DimReduction::Reduce(b) = r {
            let want = if reduced_side { b.k() } else { b.full_dim() };
            if b.dim() != i || t.dims()[i] != want {
                return Err(PodError::BasisMismatch {
                    basis_dim: b.dim(),
                    basis_size: want,
                    dim: i,
                    tensor_size: t.dims()[i],
                });
            }
        }
    }
    Ok(())
}

/// Coefficients (w.r.t. the original bases) of the V-orthogonal projection
/// of `t` onto the product of the reduced spaces: applies
/// `P_i = L_i^{-T} V_i V_i^T L_i^T` per reduced dimension.
pub fn project(t: &CoeffTensor, reductions: &[DimReduction]) -> Result<CoeffTensor, PodError> {
    check_reductions(t, reductions, false)?;
    let mut out = t.clone();
    for (i, r) in reductions.iter().enumerate() {
        if let DimReduction::Reduce(b) = r {
            let p = b.coeff_map.transpose() * &b.reduce_map;
            out = out.mode_product(&p, i)?;
        }
    }
    Ok(out)
}

/// Coefficients of the projection w.r.t. the reduced (hatted) bases:
/// applies `V_i^T L_i^T` per reduced dimension, shrinking it to `k_i`.
pub fn reduce(t: &CoeffTensor, reductions: &[DimReduction]) -> Result<CoeffTensor, PodError> {
    check_reductions(t, reductions, false)?;
    let mut out = t.clone();
    for (i, r) in reductions.iter().enumerate() {
        if let DimReduction::Reduce(b) = r {
            out = out.mode_product(&b.reduce_map, i)?;
        }
    }
    Ok(out)
}

/// Back from reduced coefficients to coefficients w.r.t. the original
/// bases: applies `L_i^{-T} V_i` per reduced dimension.  Composed with
/// [`reduce`] this reproduces [`project`].
pub fn expand(t: &CoeffTensor, reductions: &[DimReduction]) -> Result<CoeffTensor, PodError> {
    check_reductions(t, reductions, true)?;
    let mut out = t.clone();
    for (i, r) in reductions.iter().enumerate() {
        if let DimReduction::Reduce(b) = r {
            let m = b.coeff_map.transpose();
            out = out.mode_product(&m, i)?;
        }
    }
    Ok(out)
}

/// HOSVD bound on the V-norm projection error when dimension `i` is
/// truncated at rank `ks[i]`: `sqrt(sum_i sum_{j > k_i} sigma_j^2)`.
pub fn projection_error_bound(bases: &[&PodBasis], ks: &[usize]) -> Result<f64, PodError> {
    if bases.len() != ks.len() {
        return Err(PodError::ReductionCount {
            expected: bases.len(),
            got: ks.len(),
        });
    }
    let mut total = 0.0;
    for (b, &k) in bases.iter().zip(ks) {
        if k > b.singular_values.len() {
            return Err(PodError::TruncationRank {
                k,
                len: b.singular_values.len(),
            });
        }
        total += b.singular_values[k..].iter().map(|s| s * s).sum::<f64>();
    }
    Ok(total.sqrt())
}

impl Serialize for PodBasis {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("PodBasis", 4)?;
        st.serialize_field("dim", &self.dim)?;
        st.serialize_field("k", &self.k)?;
        let rows: Vec<Vec<f64>> = (0..self.vectors.nrows())
            .map(|i| (0..self.vectors.ncols()).map(|j| self.vectors[(i, j)]).collect())
            .collect();
        st.serialize_field("vectors", &rows)?;
        st.serialize_field("singular_values", &self.singular_values)?;
        st.end()
    }
}

/// Serialized form of a [`PodBasis`]; the coefficient maps are rebuilt from
/// the vectors and the dimension's mass factor.
#[derive(Debug, Clone, Deserialize)]
pub struct PodBasisData {
    pub dim: usize,
    pub k: usize,
    pub vectors: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
}

impl PodBasisData {
    pub fn into_basis(self, factor: &MassFactor) -> Result<PodBasis, PodError> {
        let nrows = self.vectors.len();
        let ncols = self.vectors.first().map_or(0, |r| r.len());
        if ncols != self.k || self.vectors.iter().any(|r| r.len() != ncols) {
            return Err(PodError::RankOutOfRange {
                k: self.k,
                dim_size: nrows,
            });
        }
        let m = DMatrix::from_fn(nrows, ncols, |i, j| self.vectors[i][j]);
        PodBasis::from_parts(self.dim, m, self.singular_values, factor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{gauss_rule, UniformMeasure};
    use crate::tensor::kron;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_tensor(rng: &mut StdRng, dims: &[usize]) -> CoeffTensor {
        let len = dims.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        CoeffTensor::new(dims.to_vec(), data).unwrap()
    }

    fn random_spd_factor(rng: &mut StdRng, n: usize) -> MassFactor {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let m = a.transpose() * &a + DMatrix::identity(n, n);
        MassFactor::from_spd(&m).unwrap()
    }

    fn identity_factors(dims: &[usize]) -> Vec<MassFactor> {
        dims.iter().map(|&d| MassFactor::identity(d)).collect()
    }

    /// Dense Kronecker quadratic form vec(t)^T (M_N (x) ... (x) M_1) vec(t).
    fn kron_quadratic_form(t: &CoeffTensor, factors: &[MassFactor]) -> f64 {
        let mut big = DMatrix::identity(1, 1);
        for f in factors.iter().rev() {
            big = kron(&big, &f.mass());
        }
        let v = DMatrix::from_column_slice(t.len(), 1, t.vec());
        (v.transpose() * big * &v)[(0, 0)].sqrt()
    }

    #[test]
    fn weighted_norm_identity_factors_is_frobenius() {
        let mut rng = StdRng::seed_from_u64(20);
        let t = random_tensor(&mut rng, &[3, 2, 4]);
        let n = weighted_norm(&t, &identity_factors(t.dims())).unwrap();
        assert_relative_eq!(n, t.frobenius_norm(), max_relative = 1e-14);
    }

    #[test]
    fn weighted_norm_1d_diagonal() {
        let t = CoeffTensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap();
        let w = [0.2, 0.5, 0.3];
        let f = MassFactor::from_weights(&w).unwrap();
        let n = weighted_norm(&t, &[f]).unwrap();
        let expect = (0.2 + 0.5 * 4.0 + 0.3 * 9.0f64).sqrt();
        assert_relative_eq!(n, expect, max_relative = 1e-14);
    }

    #[test]
    fn weighted_norm_matches_kron_quadratic_form() {
        let mut rng = StdRng::seed_from_u64(21);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let a = weighted_norm(&t, &factors).unwrap();
        let b = kron_quadratic_form(&t, &factors);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn weighted_norm_rejects_mismatched_factors() {
        let t = CoeffTensor::zeros(vec![2, 3]).unwrap();
        let f = identity_factors(&[2]);
        assert!(matches!(
            weighted_norm(&t, &f),
            Err(PodError::FactorCount { expected: 2, got: 1 })
        ));
        let f = identity_factors(&[2, 4]);
        assert!(matches!(
            weighted_norm(&t, &f),
            Err(PodError::FactorSize { dim: 1, .. })
        ));
    }

    #[test]
    fn cycled_norm_agrees_for_every_dimension() {
        let mut rng = StdRng::seed_from_u64(22);
        let t = random_tensor(&mut rng, &[2, 3, 4]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let base = weighted_norm(&t, &factors).unwrap();
        for dim in 0..3 {
            let c = weighted_norm_cycled(&t, &factors, dim).unwrap();
            assert_relative_eq!(c, base, max_relative = 1e-13);
        }
    }

    #[test]
    fn cycled_norm_matrix_transpose_case() {
        let mut rng = StdRng::seed_from_u64(23);
        let t = random_tensor(&mut rng, &[4, 3]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let a = weighted_norm_cycled(&t, &factors, 0).unwrap();
        let b = weighted_norm_cycled(&t, &factors, 1).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-13);
    }

    #[test]
    fn pod_basis_rank1_along_mode() {
        // t = u (x) rest: one nonzero singular value, V spans u/|u|
        let u = [1.0, 2.0, -2.0];
        let rest = [0.5, -1.5];
        let t = CoeffTensor::from_fn(vec![3, 2], |i| u[i[0]] * rest[i[1]]).unwrap();
        let factors = identity_factors(t.dims());
        let b = pod_basis(&t, &factors, 0, 1).unwrap();
        assert_eq!(b.singular_values().len(), 2);
        assert!(b.singular_values()[1].abs() <= 1e-14 * b.singular_values()[0]);
        let norm_u = 3.0;
        for i in 0..3 {
            assert_relative_eq!(b.vectors()[(i, 0)].abs(), u[i].abs() / norm_u, epsilon = 1e-13);
        }
        // largest-magnitude entry is positive
        assert!(b.vectors()[(1, 0)] > 0.0);
    }

    #[test]
    fn pod_basis_identity_factors_is_plain_svd() {
        let mut rng = StdRng::seed_from_u64(24);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let factors = identity_factors(t.dims());
        for dim in 0..3 {
            let b = pod_basis(&t, &factors, dim, t.dims()[dim]).unwrap();
            // reference: SVD of the explicit mode-i matricization
            let m = t.cycle_to_front(dim).unwrap().matricize_mode1();
            let mut svd = m.clone().svd(true, false);
            svd.sort_by_singular_values();
            let su = svd.u.unwrap();
            for (a, b2) in b.singular_values().iter().zip(svd.singular_values.iter()) {
                assert_relative_eq!(a, b2, epsilon = 1e-12);
            }
            // subspaces agree: compare projectors
            let p1 = b.vectors() * b.vectors().transpose();
            let p2 = &su * su.transpose();
            assert!((p1 - p2).norm() <= 1e-10);
        }
    }

    #[test]
    fn singular_spectrum_carries_the_norm() {
        let mut rng = StdRng::seed_from_u64(25);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let norm = weighted_norm(&t, &factors).unwrap();
        for dim in 0..3 {
            let b = pod_basis(&t, &factors, dim, 1).unwrap();
            let energy: f64 = b.singular_values().iter().map(|s| s * s).sum();
            assert_relative_eq!(energy.sqrt(), norm, max_relative = 1e-12);
        }
    }

    #[test]
    fn pod_basis_rejects_bad_ranks() {
        let t = CoeffTensor::zeros(vec![3, 2]).unwrap();
        let factors = identity_factors(t.dims());
        assert!(matches!(
            pod_basis(&t, &factors, 0, 4),
            Err(PodError::RankOutOfRange { k: 4, dim_size: 3 })
        ));
        assert!(matches!(
            pod_basis(&t, &factors, 0, 0),
            Err(PodError::RankOutOfRange { k: 0, .. })
        ));
    }

    #[test]
    fn rank_beyond_numerical_rank_stays_orthonormal() {
        // 4 x 2 matricization has spectrum length 2; request full rank 4
        let mut rng = StdRng::seed_from_u64(26);
        let t = random_tensor(&mut rng, &[4, 2]);
        let factors = identity_factors(t.dims());
        let b = pod_basis(&t, &factors, 0, 4).unwrap();
        let gram = b.vectors().transpose() * b.vectors();
        assert!((gram - DMatrix::identity(4, 4)).norm() <= 1e-12);
        assert_eq!(b.singular_values().len(), 2);
        assert_eq!(b.numerical_rank(), 2);
    }

    #[test]
    fn gram_route_matches_svd_route() {
        // rest = 128 > 50 * 2 triggers the Gram path for the first dim
        let mut rng = StdRng::seed_from_u64(27);
        let t = random_tensor(&mut rng, &[2, 8, 16]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let b = pod_basis(&t, &factors, 0, 2).unwrap();
        // svd oracle on the explicit weighted matricization
        let w = weighted_matricization(&t, &factors, 0).unwrap();
        let svd = w.svd(false, false);
        let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for (a, b2) in b.singular_values().iter().zip(&s) {
            assert_relative_eq!(a, b2, max_relative = 1e-9);
        }
        let gram = b.vectors().transpose() * b.vectors();
        assert!((gram - DMatrix::identity(2, 2)).norm() <= 1e-12);
    }

    #[test]
    fn project_keep_everything_is_identity() {
        let mut rng = StdRng::seed_from_u64(28);
        let t = random_tensor(&mut rng, &[3, 2, 2]);
        let kept = vec![DimReduction::Keep; 3];
        assert_eq!(project(&t, &kept).unwrap(), t);
    }

    #[test]
    fn project_full_rank_recovers_tensor() {
        let mut rng = StdRng::seed_from_u64(29);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let bases: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, t.dims()[i]).unwrap())
            .collect();
        let reds: Vec<DimReduction> = bases.iter().map(DimReduction::Reduce).collect();
        let p = project(&t, &reds).unwrap();
        let err = p
            .vec()
            .iter()
            .zip(t.vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err <= 1e-12 * t.frobenius_norm());
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = StdRng::seed_from_u64(30);
        let t = random_tensor(&mut rng, &[4, 3, 3]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let bases: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, 2).unwrap())
            .collect();
        let reds: Vec<DimReduction> = bases.iter().map(DimReduction::Reduce).collect();
        let p1 = project(&t, &reds).unwrap();
        let p2 = project(&p1, &reds).unwrap();
        let diff: f64 = p1
            .vec()
            .iter()
            .zip(p2.vec())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12 * p1.frobenius_norm().max(1.0));
    }

    #[test]
    fn reduce_preserves_norm_at_full_rank() {
        let mut rng = StdRng::seed_from_u64(31);
        let t = random_tensor(&mut rng, &[3, 4, 2]);
        let factors = identity_factors(t.dims());
        let bases: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, t.dims()[i]).unwrap())
            .collect();
        let reds: Vec<DimReduction> = bases.iter().map(DimReduction::Reduce).collect();
        let r = reduce(&t, &reds).unwrap();
        assert_relative_eq!(r.frobenius_norm(), t.frobenius_norm(), max_relative = 1e-12);
    }

    #[test]
    fn rank1_reduces_to_single_entry_with_v_norm_magnitude() {
        let mut rng = StdRng::seed_from_u64(32);
        let us: Vec<Vec<f64>> = [3usize, 4, 2]
            .iter()
            .map(|&d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let t = CoeffTensor::from_fn(vec![3, 4, 2], |i| {
            us[0][i[0]] * us[1][i[1]] * us[2][i[2]]
        })
        .unwrap();
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let bases: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, 1).unwrap())
            .collect();
        let reds: Vec<DimReduction> = bases.iter().map(DimReduction::Reduce).collect();
        let r = reduce(&t, &reds).unwrap();
        assert_eq!(r.dims(), &[1, 1, 1]);
        let vnorm = weighted_norm(&t, &factors).unwrap();
        assert_relative_eq!(r.vec()[0].abs(), vnorm, max_relative = 1e-12);
    }

    #[test]
    fn expand_of_reduce_equals_project() {
        let mut rng = StdRng::seed_from_u64(33);
        let t = random_tensor(&mut rng, &[4, 3, 2]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let bases: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, 2.min(t.dims()[i])).unwrap())
            .collect();
        let reds: Vec<DimReduction> = bases.iter().map(DimReduction::Reduce).collect();
        let a = expand(&reduce(&t, &reds).unwrap(), &reds).unwrap();
        let b = project(&t, &reds).unwrap();
        let diff: f64 = a
            .vec()
            .iter()
            .zip(b.vec())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        assert!(diff <= 1e-12 * b.frobenius_norm().max(1.0));
    }

    #[test]
    fn error_bound_zero_at_full_rank() {
        let mut rng = StdRng::seed_from_u64(34);
        let t = random_tensor(&mut rng, &[3, 3, 3]);
        let factors = identity_factors(t.dims());
        let bases: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, 3).unwrap())
            .collect();
        let refs: Vec<&PodBasis> = bases.iter().collect();
        let ks: Vec<usize> = bases.iter().map(|b| b.singular_values().len()).collect();
        assert_eq!(projection_error_bound(&refs, &ks).unwrap(), 0.0);
        assert!(matches!(
            projection_error_bound(&refs, &[20, 3, 3]),
            Err(PodError::TruncationRank { .. })
        ));
    }

    #[test]
    fn single_dimension_truncation_bound_is_exact() {
        let mut rng = StdRng::seed_from_u64(35);
        let t = random_tensor(&mut rng, &[5, 4, 3]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        for k in 1..5usize {
            let b = pod_basis(&t, &factors, 0, k).unwrap();
            let reds = [
                DimReduction::Reduce(&b),
                DimReduction::Keep,
                DimReduction::Keep,
            ];
            let p = project(&t, &reds).unwrap();
            let resid = CoeffTensor::new(
                t.dims().to_vec(),
                t.vec().iter().zip(p.vec()).map(|(a, b)| a - b).collect(),
            )
            .unwrap();
            let exact = weighted_norm(&resid, &factors).unwrap();
            let bound = b.tail(k);
            if bound > 1e-12 {
                assert_relative_eq!(exact, bound, max_relative = 1e-10);
            } else {
                assert!(exact <= 1e-10);
            }
        }
    }

    #[test]
    fn multi_dimension_error_within_bound() {
        let mut rng = StdRng::seed_from_u64(36);
        let t = random_tensor(&mut rng, &[4, 4, 4]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let full: Vec<PodBasis> = (0..3)
            .map(|i| pod_basis(&t, &factors, i, 4).unwrap())
            .collect();
        for _ in 0..20 {
            let ks: Vec<usize> = (0..3).map(|_| rng.random_range(1..=4usize)).collect();
            let bases: Vec<PodBasis> = (0..3)
                .map(|i| pod_basis(&t, &factors, i, ks[i]).unwrap())
                .collect();
            let reds: Vec<DimReduction> = bases.iter().map(DimReduction::Reduce).collect();
            let p = project(&t, &reds).unwrap();
            let resid = CoeffTensor::new(
                t.dims().to_vec(),
                t.vec().iter().zip(p.vec()).map(|(a, b)| a - b).collect(),
            )
            .unwrap();
            let exact = weighted_norm(&resid, &factors).unwrap();
            let refs: Vec<&PodBasis> = full.iter().collect();
            let bound = projection_error_bound(&refs, &ks).unwrap();
            assert!(
                exact <= bound + 1e-12,
                "exact {exact} exceeded bound {bound} at ks {ks:?}"
            );
        }
    }

    #[test]
    fn pod_beats_random_orthonormal_alternatives() {
        // Eckart-Young at tensor level for a single reduced dimension: no
        // random M-orthonormal basis does better.
        let mut rng = StdRng::seed_from_u64(37);
        let t = random_tensor(&mut rng, &[5, 4, 3]);
        let factors: Vec<MassFactor> =
            t.dims().iter().map(|&d| random_spd_factor(&mut rng, d)).collect();
        let k = 2usize;
        let b = pod_basis(&t, &factors, 0, k).unwrap();
        let reds = [
            DimReduction::Reduce(&b),
            DimReduction::Keep,
            DimReduction::Keep,
        ];
        let p = project(&t, &reds).unwrap();
        let resid = CoeffTensor::new(
            t.dims().to_vec(),
            t.vec().iter().zip(p.vec()).map(|(a, b)| a - b).collect(),
        )
        .unwrap();
        let pod_err = weighted_norm(&resid, &factors).unwrap();

        let m0 = factors[0].mass();
        for _ in 0..50 {
            // random k-dim subspace, Gram-Schmidt in the M inner product
            let mut cols: Vec<DVector<f64>> = Vec::new();
            while cols.len() < k {
                let mut v = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
                for c in &cols {
                    let dot = (c.transpose() * &m0 * &v)[(0, 0)];
                    v.axpy(-dot, c, 1.0);
                }
                let norm = (v.transpose() * &m0 * &v)[(0, 0)].sqrt();
                if norm > 1e-8 {
                    cols.push(v / norm);
                }
            }
            let mut q = DMatrix::zeros(5, k);
            for (j, c) in cols.iter().enumerate() {
                q.set_column(j, c);
            }
            // projector onto span(Q), orthogonal in the M inner product
            let p_alt = &q * q.transpose() * &m0;
            let alt = t.mode_product(&p_alt, 0).unwrap();
            let resid_alt = CoeffTensor::new(
                t.dims().to_vec(),
                t.vec().iter().zip(alt.vec()).map(|(a, b)| a - b).collect(),
            )
            .unwrap();
            let alt_err = weighted_norm(&resid_alt, &factors).unwrap();
            assert!(
                alt_err >= pod_err,
                "random basis beat POD: {alt_err} < {pod_err}"
            );
        }
    }

    #[test]
    fn coeff_map_is_mass_orthonormal() {
        let m = UniformMeasure::new(3e-4, 7e-4).unwrap();
        for d in 2..=6usize {
            let rule = gauss_rule(m, d).unwrap();
            let factor = MassFactor::for_rule(&rule);
            let mut rng = StdRng::seed_from_u64(38 + d as u64);
            let t = random_tensor(&mut rng, &[4, d]);
            let factors = vec![MassFactor::identity(4), factor.clone()];
            for k in 1..=d {
                let b = pod_basis(&t, &factors, 1, k).unwrap();
                let gram = b.coeff_map() * factor.mass() * b.coeff_map().transpose();
                assert!(
                    (gram - DMatrix::identity(k, k)).norm() <= 1e-12,
                    "coeff_map not M-orthonormal at d={d}, k={k}"
                );
                let gram2 = b.coeff_map() * factor.matrix();
                let gg = &gram2 * gram2.transpose();
                assert!((gg - DMatrix::identity(k, k)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn serde_round_trip_reconstructs_maps() {
        let mut rng = StdRng::seed_from_u64(39);
        let t = random_tensor(&mut rng, &[4, 3]);
        let f0 = random_spd_factor(&mut rng, 4);
        let factors = vec![f0.clone(), MassFactor::identity(3)];
        let b = pod_basis(&t, &factors, 0, 2).unwrap();
        let json = serde_json::to_string(&b).unwrap();
        let data: PodBasisData = serde_json::from_str(&json).unwrap();
        let back = data.into_basis(&f0).unwrap();
        assert_eq!(back, b);
    }
}
