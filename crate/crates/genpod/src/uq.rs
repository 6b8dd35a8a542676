//! The uncertainty-quantification pipeline: decoupled full-order sweeps
//! over tensor quadrature grids, moment statistics, reduced Galerkin
//! systems with offline/online splitting, seeded Monte Carlo, and the
//! random-snapshot POD baseline.
//!
//! Determinism: sweeps and sampling loops run data-parallel over
//! independent solves, but results are written by index and reduced in a
//! fixed order, so thread count never changes any reported digit.  Monte
//! Carlo and snapshot draws come from a seeded ChaCha generator with one
//! child stream per parameter dimension (dimension `i` reads stream `i`,
//! replacement draws read stream `N`), so equal seeds give bit-identical
//! results.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linsolve::dense_lu_solve;
use crate::models::{ModelError, ParametricModel};
use crate::pod::{pod_basis, DimReduction, PodBasis, PodError};
use crate::quadrature::{tensor_grid, MassFactor, QuadratureError, QuadratureRule};
use crate::tensor::{kron, CoeffTensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UqError {
    #[error("expected {expected} quadrature rules, got {got}")]
    RuleCount { expected: usize, got: usize },
    #[error("rule {dim} has support [{rule_lo}, {rule_hi}] but the model parameter lives on [{model_lo}, {model_hi}]")]
    DomainMismatch {
        dim: usize,
        rule_lo: f64,
        rule_hi: f64,
        model_lo: f64,
        model_hi: f64,
    },
    #[error("singular system at grid node {multi_index:?}")]
    SingularSystem { multi_index: Vec<usize> },
    #[error("singular system for sample {sample} (after resampling)")]
    SingularSample { sample: usize },
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("snapshot counts must satisfy kprime <= k <= n_dof, got kprime={kprime}, k={k}, n_dof={n_dof}")]
    SnapshotCounts { k: usize, kprime: usize, n_dof: usize },
    #[error("spatial basis (dim {dim}, size {size}) does not match the model ({n_dof} dofs) and its mass factor")]
    SpatialBasisMismatch { dim: usize, size: usize, n_dof: usize },
    #[error("PCE basis for dimension {dim} has size {size} but the training rule has {rule} points")]
    PceBasisMismatch { dim: usize, size: usize, rule: usize },
    #[error("snapshot tensor of shape {dims:?} does not match {expected:?}")]
    ShapeMismatch { dims: Vec<usize>, expected: Vec<usize> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pod(#[from] PodError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Spatial coefficients of the full-order solutions stacked over the
/// quadrature grid; dimension 0 is space, dimensions `1..=N` are the
/// uncertainty dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotTensor {
    tensor: CoeffTensor,
}

impl SnapshotTensor {
    pub fn tensor(&self) -> &CoeffTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> CoeffTensor {
        self.tensor
    }

    pub fn n_dof(&self) -> usize {
        self.tensor.dims()[0]
    }

    pub fn grid_dims(&self) -> &[usize] {
        &self.tensor.dims()[1..]
    }

    /// Solution vector at the given (0-based) grid multi-index.
    pub fn slice(&self, multi_index: &[usize]) -> DVector<f64> {
        let n0 = self.n_dof();
        let mut pos = 0;
        let mut stride = 1;
        for (k, d) in multi_index.iter().zip(self.grid_dims()) {
            pos += k * stride;
            stride *= d;
        }
        DVector::from_column_slice(&self.tensor.vec()[pos * n0..(pos + 1) * n0])
    }
}

/// How a statistic was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodTag {
    Pce,
    PcePod,
    Mc,
    McPod,
}

impl std::fmt::Display for MethodTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodTag::Pce => "pce",
            MethodTag::PcePod => "pce-pod",
            MethodTag::Mc => "mc",
            MethodTag::McPod => "mc-pod",
        })
    }
}

/// Mean/variance of the observed quantity together with solve bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UqResult {
    pub method: MethodTag,
    pub mean: f64,
    pub variance: f64,
    pub n_solves: usize,
    pub wall_time_s: f64,
    /// Magnitude clipped off a (slightly) negative raw variance.
    pub variance_clip: f64,
    /// Monte Carlo draws that had to be replaced after a singular system.
    pub resamples: usize,
}

impl UqResult {
    fn from_moments(method: MethodTag, mean: f64, second: f64, n_solves: usize) -> Self {
        let raw = second - mean * mean;
        let variance = raw.max(0.0);
        let variance_clip = (-raw).max(0.0);
        if raw < -1e-12 * mean * mean {
            log::warn!("variance clipped from {raw:e} to zero (mean {mean:e})");
        }
        Self {
            method,
            mean,
            variance,
            n_solves,
            wall_time_s: 0.0,
            variance_clip,
            resamples: 0,
        }
    }

    pub fn with_wall_time(mut self, seconds: f64) -> Self {
        self.wall_time_s = seconds;
        self
    }

    pub fn with_method(mut self, method: MethodTag) -> Self {
        self.method = method;
        self
    }
}

fn check_rules(model: &ParametricModel, rules: &[QuadratureRule]) -> Result<(), UqError> {
    if rules.len() != model.n_params() {
        return Err(UqError::RuleCount {
            expected: model.n_params(),
            got: rules.len(),
        });
    }
    for (i, (rule, dom)) in rules.iter().zip(model.param_domains()).enumerate() {
        let m = rule.measure();
        if m != *dom {
            return Err(UqError::DomainMismatch {
                dim: i,
                rule_lo: m.lo(),
                rule_hi: m.hi(),
                model_lo: dom.lo(),
                model_hi: dom.hi(),
            });
        }
    }
    Ok(())
}

/// Solves `A_alpha y = f` at every tensor-grid node independently and
/// stacks the solutions into a [`SnapshotTensor`]; `prod d_i` solves.
pub fn pce_sweep(
    model: &ParametricModel,
    rules: &[QuadratureRule],
) -> Result<SnapshotTensor, UqError> {
    check_rules(model, rules)?;
    let grid = tensor_grid(rules)?;
    let n0 = model.n_dof();
    let solutions: Vec<DVector<f64>> = grid
        .par_iter()
        .map(|p| {
            model.solve(&p.nodes).map_err(|_| UqError::SingularSystem {
                multi_index: p.multi_index.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut dims = Vec::with_capacity(rules.len() + 1);
    dims.push(n0);
    dims.extend(rules.iter().map(|r| r.len()));
    let mut data = Vec::with_capacity(n0 * grid.len());
    for y in &solutions {
        data.extend_from_slice(y.as_slice());
    }
    Ok(SnapshotTensor {
        tensor: CoeffTensor::new(dims, data)?,
    })
}

fn weighted_moments(values: &[f64], weights: &[f64]) -> (f64, f64) {
    debug_assert_eq!(values.len(), weights.len());
    let mut mean = 0.0;
    let mut second = 0.0;
    for (v, w) in values.iter().zip(weights) {
        mean += w * v;
        second += w * v * v;
    }
    (mean, second)
}

/// Quadrature statistics of the observed quantity over the snapshot grid:
/// `mean = sum w Cy`, `variance = sum w (Cy)^2 - mean^2`.
pub fn statistics(
    snapshots: &SnapshotTensor,
    rules: &[QuadratureRule],
    observation: &RowDVector<f64>,
) -> Result<UqResult, UqError> {
    let expected: Vec<usize> = std::iter::once(observation.len())
        .chain(rules.iter().map(|r| r.len()))
        .collect();
    if snapshots.tensor.dims() != expected.as_slice() {
        return Err(UqError::ShapeMismatch {
            dims: snapshots.tensor.dims().to_vec(),
            expected,
        });
    }
    let grid = tensor_grid(rules)?;
    let n0 = snapshots.n_dof();
    let data = snapshots.tensor.vec();
    let values: Vec<f64> = (0..grid.len())
        .map(|j| {
            let y = &data[j * n0..(j + 1) * n0];
            observation
                .iter()
                .zip(y)
                .map(|(c, v)| c * v)
                .sum::<f64>()
        })
        .collect();
    let weights: Vec<f64> = grid.iter().map(|p| p.weight).collect();
    let (mean, second) = weighted_moments(&values, &weights);
    Ok(UqResult::from_moments(
        MethodTag::Pce,
        mean,
        second,
        grid.len(),
    ))
}

/// Galerkin-reduced parametric model: each affine operator component is
/// projected once offline; evaluating at new parameter points needs no
/// re-projection.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    spatial_basis: PodBasis,
    pce_bases: Vec<Option<PodBasis>>,
    train_rules: Vec<QuadratureRule>,
    reduced_base: DMatrix<f64>,
    reduced_ops: Vec<DMatrix<f64>>,
    reduced_load: DVector<f64>,
    reduced_obs: RowDVector<f64>,
}

impl ReducedModel {
    pub fn spatial_basis(&self) -> &PodBasis {
        &self.spatial_basis
    }

    pub fn pce_bases(&self) -> &[Option<PodBasis>] {
        &self.pce_bases
    }

    pub fn k0(&self) -> usize {
        self.spatial_basis.k()
    }

    /// Reduced operator at a parameter point.
    pub fn assemble(&self, alpha: &[f64]) -> DMatrix<f64> {
        let mut a = self.reduced_base.clone();
        for (c, &ai) in self.reduced_ops.iter().zip(alpha) {
            for (o, x) in a.iter_mut().zip(c.iter()) {
                *o += ai * x;
            }
        }
        a
    }
}

/// Projects the model onto the spatial POD basis (and optionally per-PCE-dim
/// bases): `A_hat_c = V^T L^{-1} A_c L^{-T} V` for every affine component,
/// plus the reduced load and observation.
pub fn build_reduced_model(
    model: &ParametricModel,
    train_rules: &[QuadratureRule],
    spatial_basis: PodBasis,
    pce_bases: Vec<Option<PodBasis>>,
) -> Result<ReducedModel, UqError> {
    check_rules(model, train_rules)?;
    if spatial_basis.dim() != 0 || spatial_basis.full_dim() != model.n_dof() {
        return Err(UqError::SpatialBasisMismatch {
            dim: spatial_basis.dim(),
            size: spatial_basis.full_dim(),
            n_dof: model.n_dof(),
        });
    }
    // the basis must have been built against this model's mass factor:
    // coeff_map * M * coeff_map^T == I detects a factor mismatch
    let factor = model.spatial_mass_factor();
    let cl = factor.mul_lt(&spatial_basis.coeff_map().transpose());
    let gram = cl.transpose() * &cl;
    let k = spatial_basis.k();
    if (gram - DMatrix::identity(k, k)).norm() > 1e-8 * (k as f64).sqrt() {
        return Err(UqError::SpatialBasisMismatch {
            dim: spatial_basis.dim(),
            size: spatial_basis.full_dim(),
            n_dof: model.n_dof(),
        });
    }
    if pce_bases.len() != model.n_params() {
        return Err(UqError::RuleCount {
            expected: model.n_params(),
            got: pce_bases.len(),
        });
    }
    for (i, b) in pce_bases.iter().enumerate() {
        if let Some(b) = b {
            if b.dim() != i + 1 || b.full_dim() != train_rules[i].len() {
                return Err(UqError::PceBasisMismatch {
                    dim: i + 1,
                    size: b.full_dim(),
                    rule: train_rules[i].len(),
                });
            }
        }
    }

    // offline projection of every affine component
    let expand = spatial_basis.coeff_map().transpose(); // L^{-T} V, d0 x k
    let project = |op: &crate::linsolve::Operator| -> DMatrix<f64> {
        spatial_basis.coeff_map() * op.mul_dense(&expand)
    };
    let reduced_base = project(model.base_op());
    let reduced_ops: Vec<DMatrix<f64>> = model.param_ops().iter().map(&project).collect();
    let reduced_load = spatial_basis.coeff_map() * model.load();
    let reduced_obs = model.observation() * &expand;

    Ok(ReducedModel {
        spatial_basis,
        pce_bases,
        train_rules: train_rules.to_vec(),
        reduced_base,
        reduced_ops,
        reduced_load,
        reduced_obs,
    })
}

/// Evaluates the reduced model over an evaluation quadrature grid.
///
/// Without PCE-dimension bases the online stage decouples into one
/// `k0 x k0` solve per grid node.  With reduced PCE dimensions the Galerkin
/// system couples across them; any dimension left unreduced still
/// decouples, so one coupled system is solved per combination of unreduced
/// node indices.
pub fn solve_reduced(
    rm: &ReducedModel,
    eval_rules: &[QuadratureRule],
) -> Result<UqResult, UqError> {
    if eval_rules.len() != rm.train_rules.len() {
        return Err(UqError::RuleCount {
            expected: rm.train_rules.len(),
            got: eval_rules.len(),
        });
    }
    for (i, (er, tr)) in eval_rules.iter().zip(&rm.train_rules).enumerate() {
        if er.measure() != tr.measure() {
            let m = er.measure();
            let d = tr.measure();
            return Err(UqError::DomainMismatch {
                dim: i,
                rule_lo: m.lo(),
                rule_hi: m.hi(),
                model_lo: d.lo(),
                model_hi: d.hi(),
            });
        }
    }
    if rm.pce_bases.iter().all(Option::is_none) {
        solve_reduced_decoupled(rm, eval_rules)
    } else {
        solve_reduced_coupled(rm, eval_rules)
    }
}

fn solve_reduced_decoupled(
    rm: &ReducedModel,
    eval_rules: &[QuadratureRule],
) -> Result<UqResult, UqError> {
    let grid = tensor_grid(eval_rules)?;
    let values: Vec<f64> = grid
        .par_iter()
        .map(|p| {
            let a = rm.assemble(&p.nodes);
            dense_lu_solve(&a, &rm.reduced_load)
                .map(|y| (&rm.reduced_obs * &y)[(0, 0)])
                .map_err(|_| UqError::SingularSystem {
                    multi_index: p.multi_index.clone(),
                })
        })
        .collect::<Result<_, _>>()?;
    let weights: Vec<f64> = grid.iter().map(|p| p.weight).collect();
    let (mean, second) = weighted_moments(&values, &weights);
    Ok(UqResult::from_moments(
        MethodTag::PcePod,
        mean,
        second,
        grid.len(),
    ))
}

fn solve_reduced_coupled(
    rm: &ReducedModel,
    eval_rules: &[QuadratureRule],
) -> Result<UqResult, UqError> {
    let n = eval_rules.len();
    let k0 = rm.k0();
    let reduced: Vec<usize> = (0..n).filter(|&i| rm.pce_bases[i].is_some()).collect();
    let unreduced: Vec<usize> = (0..n).filter(|&i| rm.pce_bases[i].is_none()).collect();

    // reduced-basis evaluations at the eval nodes:
    // psi_hat_i(alpha) = coeff_map_i * Psi_i^train(alpha)
    let mut phi: Vec<Vec<DVector<f64>>> = vec![Vec::new(); n];
    for &i in &reduced {
        let basis = rm.pce_bases[i].as_ref().expect("reduced dim");
        phi[i] = eval_rules[i]
            .nodes()
            .iter()
            .map(|&a| basis.coeff_map() * rm.train_rules[i].lagrange_all(a))
            .collect();
    }

    let sys_size: usize = k0 * reduced.iter().map(|&i| rm.pce_bases[i].as_ref().unwrap().k()).product::<usize>();
    let outer_dims: Vec<usize> = unreduced.iter().map(|&i| eval_rules[i].len()).collect();
    let n_outer: usize = outer_dims.iter().product();
    let inner_dims: Vec<usize> = reduced.iter().map(|&i| eval_rules[i].len()).collect();
    let n_inner: usize = inner_dims.iter().product();

    let unflatten = |mut flat: usize, dims: &[usize]| -> Vec<usize> {
        dims.iter()
            .map(|&d| {
                let k = flat % d;
                flat /= d;
                k
            })
            .collect()
    };

    // one coupled solve per combination of unreduced node indices; each
    // returns the weighted (value, value^2) contributions of its nodes
    let contributions: Vec<(f64, f64, usize)> = (0..n_outer)
        .into_par_iter()
        .map(|outer_flat| -> Result<(f64, f64, usize), UqError> {
            let outer_idx = unflatten(outer_flat, &outer_dims);
            let mut alpha = vec![0.0; n];
            let mut w_outer = 1.0;
            for (pos, &i) in unreduced.iter().enumerate() {
                alpha[i] = eval_rules[i].nodes()[outer_idx[pos]];
                w_outer *= eval_rules[i].weights()[outer_idx[pos]];
            }

            let mut g = DMatrix::zeros(sys_size, sys_size);
            let mut b = DVector::zeros(sys_size);
            for inner_flat in 0..n_inner {
                let inner_idx = unflatten(inner_flat, &inner_dims);
                let mut w = w_outer;
                for (pos, &i) in reduced.iter().enumerate() {
                    alpha[i] = eval_rules[i].nodes()[inner_idx[pos]];
                    w *= eval_rules[i].weights()[inner_idx[pos]];
                }
                let a_hat = rm.assemble(&alpha);
                // Kronecker chain, slowest dimension first
                let mut kmat = DMatrix::identity(1, 1);
                let mut kvec = DMatrix::identity(1, 1);
                for (pos, &i) in reduced.iter().enumerate().rev() {
                    let p = &phi[i][inner_idx[pos]];
                    let pm = DMatrix::from_column_slice(p.len(), 1, p.as_slice());
                    kmat = kron(&kmat, &(&pm * pm.transpose()));
                    kvec = kron(&kvec, &pm);
                }
                let term = kron(&kmat, &a_hat);
                for (o, x) in g.iter_mut().zip(term.iter()) {
                    *o += w * x;
                }
                let fm = DMatrix::from_column_slice(k0, 1, rm.reduced_load.as_slice());
                let rhs = kron(&kvec, &fm);
                for (o, x) in b.iter_mut().zip(rhs.iter()) {
                    *o += w * x;
                }
            }
            let y = dense_lu_solve(&g, &b).map_err(|_| UqError::SingularSystem {
                multi_index: outer_idx.clone(),
            })?;

            // statistics contributions of this block's nodes
            let mut dims = Vec::with_capacity(1 + reduced.len());
            dims.push(k0);
            for &i in &reduced {
                dims.push(rm.pce_bases[i].as_ref().unwrap().k());
            }
            let ytensor = CoeffTensor::new(dims, y.as_slice().to_vec())?;
            let mut mean = 0.0;
            let mut second = 0.0;
            for inner_flat in 0..n_inner {
                let inner_idx = unflatten(inner_flat, &inner_dims);
                let mut w = w_outer;
                for (pos, &i) in reduced.iter().enumerate() {
                    w *= eval_rules[i].weights()[inner_idx[pos]];
                }
                // contract the reduced PCE dimensions with their basis values
                let mut spatial = ytensor.clone();
                for (pos, &i) in reduced.iter().enumerate().rev() {
                    let p = &phi[i][inner_idx[pos]];
                    let row = DMatrix::from_row_slice(1, p.len(), p.as_slice());
                    spatial = spatial.mode_product(&row, 1 + pos)?;
                }
                let yv = DVector::from_column_slice(spatial.vec());
                let cy = (&rm.reduced_obs * &yv)[(0, 0)];
                mean += w * cy;
                second += w * cy * cy;
            }
            Ok((mean, second, 1))
        })
        .collect::<Result<_, _>>()?;

    let mut mean = 0.0;
    let mut second = 0.0;
    let mut solves = 0;
    for (m, s, c) in contributions {
        mean += m;
        second += s;
        solves += c;
    }
    Ok(UqResult::from_moments(MethodTag::PcePod, mean, second, solves))
}

/// Uniform draws for `n` samples: dimension `i` reads stream `i` of a
/// ChaCha generator seeded with `seed`.
fn sample_tuples(
    domains: &[crate::quadrature::UniformMeasure],
    n: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let per_dim: Vec<Vec<f64>> = domains
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let dist = Uniform::new(d.lo(), d.hi()).expect("valid support");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        })
        .collect();
    (0..n)
        .map(|j| per_dim.iter().map(|col| col[j]).collect())
        .collect()
}

/// Plain Monte Carlo with population-normalized variance
/// (`E[(Cy)^2] - (E[Cy])^2` structure).  A singular draw is replaced once
/// from the reserve stream and counted.
pub fn monte_carlo(
    model: &ParametricModel,
    n: usize,
    seed: u64,
) -> Result<UqResult, UqError> {
    if n == 0 {
        return Err(UqError::NoSamples);
    }
    let tuples = sample_tuples(model.param_domains(), n, seed);
    let mut values: Vec<Option<f64>> = tuples
        .par_iter()
        .map(|alpha| model.observe_at(alpha).ok())
        .collect();

    // deterministic replacement pass, in sample order
    let failed: Vec<usize> = (0..n).filter(|&j| values[j].is_none()).collect();
    let mut resamples = 0;
    if !failed.is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(model.n_params() as u64);
        let dists: Vec<Uniform<f64>> = model
            .param_domains()
            .iter()
            .map(|d| Uniform::new(d.lo(), d.hi()).expect("valid support"))
            .collect();
        for &j in &failed {
            let alpha: Vec<f64> = dists.iter().map(|d| d.sample(&mut rng)).collect();
            resamples += 1;
            match model.observe_at(&alpha) {
                Ok(v) => values[j] = Some(v),
                Err(_) => return Err(UqError::SingularSample { sample: j }),
            }
        }
        log::warn!("{resamples} Monte Carlo draws replaced after singular systems");
    }

    let inv_n = 1.0 / n as f64;
    let mut mean = 0.0;
    let mut second = 0.0;
    for v in &values {
        let v = v.expect("all samples resolved");
        mean += inv_n * v;
        second += inv_n * v * v;
    }
    let mut out = UqResult::from_moments(MethodTag::Mc, mean, second, n);
    out.resamples = resamples;
    Ok(out)
}

/// Random-snapshot POD baseline.
#[derive(Debug, Clone)]
pub struct RandomSnapshotPod {
    /// Spatial basis from the `kprime` leading weighted singular vectors.
    pub basis: PodBasis,
    /// Projection error in the estimated mean,
    /// `(1/k) |C (I - P) [y_1 ... y_k]|_1`.
    pub e_proj: f64,
    /// Magnitude reference `(1/k) sum |C y_j|`.
    pub scale: f64,
    pub n_solves: usize,
}

/// Draws `k` random parameter tuples, solves, and builds the spatial POD
/// basis from the mass-weighted snapshot matrix.
pub fn random_snapshot_pod(
    model: &ParametricModel,
    k: usize,
    kprime: usize,
    seed: u64,
    factor: &MassFactor,
) -> Result<RandomSnapshotPod, UqError> {
    let n_dof = model.n_dof();
    if kprime == 0 || kprime > k || k > n_dof {
        return Err(UqError::SnapshotCounts { k, kprime, n_dof });
    }
    if factor.dim() != n_dof {
        return Err(UqError::SpatialBasisMismatch {
            dim: 0,
            size: factor.dim(),
            n_dof,
        });
    }
    let tuples = sample_tuples(model.param_domains(), k, seed);
    let snapshots: Vec<DVector<f64>> = tuples
        .par_iter()
        .enumerate()
        .map(|(j, alpha)| {
            model.solve(alpha).map_err(|_| UqError::SingularSystem {
                multi_index: vec![j],
            })
        })
        .collect::<Result<_, _>>()?;

    let mut data = Vec::with_capacity(n_dof * k);
    for y in &snapshots {
        data.extend_from_slice(y.as_slice());
    }
    let t = CoeffTensor::new(vec![n_dof, k], data)?;
    let factors = [factor.clone(), MassFactor::identity(k)];
    let basis = pod_basis(&t, &factors, 0, kprime)?;

    let reds = [DimReduction::Reduce(&basis), DimReduction::Keep];
    let projected = crate::pod::expand(&crate::pod::reduce(&t, &reds)?, &reds)?;
    let c = model.observation();
    let mut e = 0.0;
    let mut scale = 0.0;
    for j in 0..k {
        let y = &t.vec()[j * n_dof..(j + 1) * n_dof];
        let p = &projected.vec()[j * n_dof..(j + 1) * n_dof];
        let mut cy = 0.0;
        let mut cr = 0.0;
        for i in 0..n_dof {
            cy += c[i] * y[i];
            cr += c[i] * (y[i] - p[i]);
        }
        e += cr.abs();
        scale += cy.abs();
    }
    Ok(RandomSnapshotPod {
        basis,
        e_proj: e / k as f64,
        scale: scale / k as f64,
        n_solves: k,
    })
}
