//! Parametric discrete models `alpha -> (A_alpha, f, C)`.
//!
//! Three families are provided:
//!
//! * [`toy1d_model`]: the scalar benchmark `y = 1/alpha_1`,
//! * [`toy2d_model`]: two coupled compartments with
//!   `A = [[a1, eps], [eps, a2]]`,
//! * [`convdiff_model`]: a 2-D finite-difference convection-diffusion
//!   problem on the unit square with per-subdomain random diffusivity,
//!   Dirichlet conditions at the bottom edge and Neumann conditions
//!   elsewhere.
//!
//! Every operator depends affinely on the parameters,
//! `A_alpha = A_0 + sum_i alpha_i A_i`, which the reduced-order pipeline
//! exploits by projecting each component once.

use nalgebra::{DMatrix, DVector, RowDVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::linsolve::{BandMatrix, Operator, SolveError};
use crate::quadrature::{MassFactor, UniformMeasure};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter domain [{lo}, {hi}] must satisfy 0 < lo < hi")]
    NonpositiveDomain { lo: f64, hi: f64 },
    #[error("coupling eps={eps} violates invertibility: lo1*lo2 = {prod} <= eps^2")]
    CouplingTooLarge { eps: f64, prod: f64 },
    #[error("grid must be at least 8x8, got {0}x{0}")]
    GridTooSmall(usize),
    #[error("cell {cell} assigned to subdomain {sub} but only {n_subdomains} exist")]
    BadAssignment {
        cell: usize,
        sub: usize,
        n_subdomains: usize,
    },
    #[error("diffusivity not positive over the parameter box: kappa_bar={kappa_bar}, lo={lo}")]
    NotElliptic { kappa_bar: f64, lo: f64 },
    #[error("observation patch [{lo}, {hi}] selects no cells")]
    DegeneratePatch { lo: f64, hi: f64 },
    #[error("operator is singular at alpha = {alpha:?}")]
    SingularAtParam { alpha: Vec<f64> },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("reference integration did not converge (last change {last:e})")]
    NonConvergentIntegral { last: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Discrete parametric model with affine operator decomposition
/// `A_alpha = A_0 + sum_i alpha_i A_i`, fixed load `f`, observation row `C`
/// and a diagonal spatial mass matrix.
#[derive(Debug, Clone)]
pub struct ParametricModel {
    n_dof: usize,
    param_domains: Vec<UniformMeasure>,
    base_op: Operator,
    param_ops: Vec<Operator>,
    load: DVector<f64>,
    observation: RowDVector<f64>,
    mass_diag: DVector<f64>,
}

impl ParametricModel {
    fn new_checked(
        param_domains: Vec<UniformMeasure>,
        base_op: Operator,
        param_ops: Vec<Operator>,
        load: DVector<f64>,
        observation: RowDVector<f64>,
        mass_diag: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let model = Self {
            n_dof: load.len(),
            param_domains,
            base_op,
            param_ops,
            load,
            observation,
            mass_diag,
        };
        model.check_invertible_on_box()?;
        Ok(model)
    }

    /// Verifies invertibility of `A_alpha` at the box corners and center.
    fn check_invertible_on_box(&self) -> Result<(), ModelError> {
        let n = self.n_params();
        let mut probes: Vec<Vec<f64>> = Vec::with_capacity((1 << n) + 1);
        for corner in 0..(1usize << n) {
            let alpha: Vec<f64> = (0..n)
                .map(|i| {
                    let d = &self.param_domains[i];
                    if corner >> i & 1 == 0 {
                        d.lo()
                    } else {
                        d.hi()
                    }
                })
                .collect();
            probes.push(alpha);
        }
        probes.push(
            self.param_domains
                .iter()
                .map(|d| 0.5 * (d.lo() + d.hi()))
                .collect(),
        );
        let bad = probes
            .par_iter()
            .find_any(|alpha| match self.assemble(alpha) {
                Ok(op) => !op.is_invertible(),
                Err(_) => true,
            });
        match bad {
            Some(alpha) => Err(ModelError::SingularAtParam {
                alpha: alpha.clone(),
            }),
            None => Ok(()),
        }
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    pub fn n_params(&self) -> usize {
        self.param_domains.len()
    }

    pub fn param_domains(&self) -> &[UniformMeasure] {
        &self.param_domains
    }

    pub fn base_op(&self) -> &Operator {
        &self.base_op
    }

    pub fn param_ops(&self) -> &[Operator] {
        &self.param_ops
    }

    pub fn load(&self) -> &DVector<f64> {
        &self.load
    }

    pub fn observation(&self) -> &RowDVector<f64> {
        &self.observation
    }

    /// Spatial mass matrix (diagonal for the models built here).
    pub fn spatial_mass(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.mass_diag)
    }

    pub fn spatial_mass_factor(&self) -> MassFactor {
        MassFactor::from_weights(self.mass_diag.as_slice()).expect("mass diagonal is positive")
    }

    /// Assembles `A_alpha`.
    pub fn assemble(&self, alpha: &[f64]) -> Result<Operator, ModelError> {
        if alpha.len() != self.n_params() {
            return Err(ModelError::ParamCount {
                expected: self.n_params(),
                got: alpha.len(),
            });
        }
        Ok(Operator::affine_combine(
            &self.base_op,
            &self.param_ops,
            alpha,
        )?)
    }

    /// Solves `A_alpha y = f`; tiny systems take closed-form paths.
    pub fn solve(&self, alpha: &[f64]) -> Result<DVector<f64>, ModelError> {
        if alpha.len() != self.n_params() {
            return Err(ModelError::ParamCount {
                expected: self.n_params(),
                got: alpha.len(),
            });
        }
        match self.n_dof {
            1 => {
                let a = self.entry(0, 0, alpha);
                if a.abs() <= f64::MIN_POSITIVE {
                    return Err(ModelError::SingularAtParam {
                        alpha: alpha.to_vec(),
                    });
                }
                Ok(DVector::from_element(1, self.load[0] / a))
            }
            2 => {
                let a11 = self.entry(0, 0, alpha);
                let a12 = self.entry(0, 1, alpha);
                let a21 = self.entry(1, 0, alpha);
                let a22 = self.entry(1, 1, alpha);
                let det = a11 * a22 - a12 * a21;
                let scale = a11.abs().max(a12.abs()).max(a21.abs()).max(a22.abs());
                if det.abs() <= f64::EPSILON * scale * scale {
                    return Err(ModelError::SingularAtParam {
                        alpha: alpha.to_vec(),
                    });
                }
                let f1 = self.load[0];
                let f2 = self.load[1];
                Ok(DVector::from_column_slice(&[
                    (a22 * f1 - a12 * f2) / det,
                    (a11 * f2 - a21 * f1) / det,
                ]))
            }
            _ => {
                let op = self.assemble(alpha)?;
                op.solve(&self.load)
                    .map_err(|_| ModelError::SingularAtParam {
                        alpha: alpha.to_vec(),
                    })
            }
        }
    }

    fn entry(&self, i: usize, j: usize, alpha: &[f64]) -> f64 {
        let read = |op: &Operator| match op {
            Operator::Dense(m) => m[(i, j)],
            Operator::Band(b) => b.get(i, j),
        };
        read(&self.base_op)
            + self
                .param_ops
                .iter()
                .zip(alpha)
                .map(|(op, &a)| a * read(op))
                .sum::<f64>()
    }

    /// Applies the observation functional to a solution vector.
    pub fn observe(&self, y: &DVector<f64>) -> f64 {
        (&self.observation * y)[(0, 0)]
    }

    /// Solve-and-observe shortcut.
    pub fn observe_at(&self, alpha: &[f64]) -> Result<f64, ModelError> {
        Ok(self.observe(&self.solve(alpha)?))
    }
}

/// Scalar benchmark `A = [alpha_1]`, `f = C = 1`, so `C y = 1/alpha_1`.
pub fn toy1d_model(lo: f64, hi: f64) -> Result<ParametricModel, ModelError> {
    if !(0.0 < lo && lo < hi) {
        return Err(ModelError::NonpositiveDomain { lo, hi });
    }
    let domain = UniformMeasure::new(lo, hi).expect("validated above");
    ParametricModel::new_checked(
        vec![domain],
        Operator::Dense(DMatrix::zeros(1, 1)),
        vec![Operator::Dense(DMatrix::from_element(1, 1, 1.0))],
        DVector::from_element(1, 1.0),
        RowDVector::from_element(1, 1.0),
        DVector::from_element(1, 1.0),
    )
}

/// Two-compartment diffusion benchmark with coupling `eps`:
/// `A = [[alpha_1, eps], [eps, alpha_2]]`, `f = (1,1)^T`, `C = (1,1)`, so
/// `C y = (alpha_1 + alpha_2 - 2 eps) / (alpha_1 alpha_2 - eps^2)`.
pub fn toy2d_model(
    lo1: f64,
    hi1: f64,
    lo2: f64,
    hi2: f64,
    eps: f64,
) -> Result<ParametricModel, ModelError> {
    if !(0.0 < lo1 && lo1 < hi1) {
        return Err(ModelError::NonpositiveDomain { lo: lo1, hi: hi1 });
    }
    if !(0.0 < lo2 && lo2 < hi2) {
        return Err(ModelError::NonpositiveDomain { lo: lo2, hi: hi2 });
    }
    if lo1 * lo2 <= eps * eps {
        return Err(ModelError::CouplingTooLarge {
            eps,
            prod: lo1 * lo2,
        });
    }
    let base = DMatrix::from_row_slice(2, 2, &[0.0, eps, eps, 0.0]);
    let mut e11 = DMatrix::zeros(2, 2);
    e11[(0, 0)] = 1.0;
    let mut e22 = DMatrix::zeros(2, 2);
    e22[(1, 1)] = 1.0;
    ParametricModel::new_checked(
        vec![
            UniformMeasure::new(lo1, hi1).expect("validated"),
            UniformMeasure::new(lo2, hi2).expect("validated"),
        ],
        Operator::Dense(base),
        vec![Operator::Dense(e11), Operator::Dense(e22)],
        DVector::from_element(2, 1.0),
        RowDVector::from_element(2, 1.0),
        DVector::from_element(2, 1.0),
    )
}

/// Assignment of grid cells to subdomains together with the reference
/// diffusivity and the per-cell convection and source data.
#[derive(Debug, Clone)]
pub struct SubdomainMap {
    grid: usize,
    n_subdomains: usize,
    kappa_bar: f64,
    assignment: Vec<usize>,
    convection: Vec<[f64; 2]>,
    source: Vec<f64>,
}

fn quadrant_of(x: f64, y: f64) -> usize {
    match (x >= 0.5, y >= 0.5) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 2,
        (true, false) => 3,
    }
}

impl SubdomainMap {
    /// Four quadrants of the unit square, counterclockwise from the
    /// top-right, with the solid-rotation convection
    /// `b = (y - 1/2, -(x - 1/2))` and the source
    /// `f = sin(2 pi x) sin(4 pi y)` on quadrants 1 and 3.
    pub fn quadrants(grid: usize, kappa_bar: f64) -> Result<Self, ModelError> {
        use std::f64::consts::PI;
        Self::custom(
            grid,
            kappa_bar,
            4,
            quadrant_of,
            |x, y| [y - 0.5, -(x - 0.5)],
            |x, y| {
                if quadrant_of(x, y) % 2 == 0 {
                    (2.0 * PI * x).sin() * (4.0 * PI * y).sin()
                } else {
                    0.0
                }
            },
        )
    }

    /// Builds a map from closures evaluated at the cell centers.
    pub fn custom(
        grid: usize,
        kappa_bar: f64,
        n_subdomains: usize,
        assign: impl Fn(f64, f64) -> usize,
        convection: impl Fn(f64, f64) -> [f64; 2],
        source: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, ModelError> {
        if grid < 8 {
            return Err(ModelError::GridTooSmall(grid));
        }
        let h = 1.0 / grid as f64;
        let mut assignment = vec![0usize; grid * grid];
        let mut conv = vec![[0.0; 2]; grid * grid];
        let mut src = vec![0.0; grid * grid];
        for j in 0..grid {
            for i in 0..grid {
                let c = i + grid * j;
                let x = (i as f64 + 0.5) * h;
                let y = (j as f64 + 0.5) * h;
                let s = assign(x, y);
                if s >= n_subdomains {
                    return Err(ModelError::BadAssignment {
                        cell: c,
                        sub: s,
                        n_subdomains,
                    });
                }
                assignment[c] = s;
                conv[c] = convection(x, y);
                src[c] = source(x, y);
            }
        }
        Ok(Self {
            grid,
            n_subdomains,
            kappa_bar,
            assignment,
            convection: conv,
            source: src,
        })
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn n_subdomains(&self) -> usize {
        self.n_subdomains
    }

    pub fn kappa_bar(&self) -> f64 {
        self.kappa_bar
    }

    pub fn subdomain_of(&self, cell: usize) -> usize {
        self.assignment[cell]
    }
}

/// Cell-centered finite differences on the unit square for
/// `b . grad y - div(kappa grad y) = f` with `kappa = kappa_bar + alpha_s`
/// on subdomain `s`: centered diffusion with harmonic-mean face
/// diffusivities (the arithmetic mean across subdomain interfaces, which
/// keeps `A_alpha` exactly affine in `alpha`), first-order upwind
/// convection, Dirichlet at the bottom edge, Neumann elsewhere.
///
/// The observation is the mean over the top-edge cells overlapping
/// `obs_x`; the spatial mass matrix is the diagonal of cell areas.
pub fn convdiff_model(
    subdomains: &SubdomainMap,
    alpha_domain: UniformMeasure,
    obs_x: (f64, f64),
) -> Result<ParametricModel, ModelError> {
    let n = subdomains.grid;
    let h = 1.0 / n as f64;
    let ndof = n * n;
    let kappa_bar = subdomains.kappa_bar;
    if kappa_bar + alpha_domain.lo() <= 0.0 {
        return Err(ModelError::NotElliptic {
            kappa_bar,
            lo: alpha_domain.lo(),
        });
    }

    let inv_h2 = 1.0 / (h * h);
    let inv_h = 1.0 / h;
    let mut diff: Vec<BandMatrix> = (0..subdomains.n_subdomains)
        .map(|_| BandMatrix::zeros(ndof, n))
        .collect();

    let face = |mats: &mut [BandMatrix], c1: usize, c2: usize| {
        let s1 = subdomains.assignment[c1];
        let s2 = subdomains.assignment[c2];
        let stamps: &[(usize, f64)] = if s1 == s2 {
            &[(s1, 1.0)]
        } else {
            // face between different subdomains: split evenly
            &[(s1, 0.5), (s2, 0.5)]
        };
        for &(s, t) in stamps {
            let v = t * inv_h2;
            mats[s].add(c1, c1, v);
            mats[s].add(c1, c2, -v);
            mats[s].add(c2, c2, v);
            mats[s].add(c2, c1, -v);
        }
    };

    for j in 0..n {
        for i in 0..n {
            let c = i + n * j;
            if i + 1 < n {
                face(&mut diff, c, c + 1);
            }
            if j + 1 < n {
                face(&mut diff, c, c + n);
            }
        }
    }
    // Dirichlet value 0 at the bottom wall, half a cell away
    for i in 0..n {
        let c = i; // j = 0
        let s = subdomains.assignment[c];
        diff[s].add(c, c, 2.0 * inv_h2);
    }

    let mut conv = BandMatrix::zeros(ndof, n);
    for j in 0..n {
        for i in 0..n {
            let c = i + n * j;
            let [bx, by] = subdomains.convection[c];
            if bx > 0.0 {
                // upwind from the left; the zero normal derivative at the
                // Neumann wall makes the term vanish there
                if i > 0 {
                    conv.add(c, c, bx * inv_h);
                    conv.add(c, c - 1, -bx * inv_h);
                }
            } else if bx < 0.0 && i + 1 < n {
                conv.add(c, c, -bx * inv_h);
                conv.add(c, c + 1, bx * inv_h);
            }
            if by > 0.0 {
                if j > 0 {
                    conv.add(c, c, by * inv_h);
                    conv.add(c, c - n, -by * inv_h);
                } else {
                    // Dirichlet wall half a cell below
                    conv.add(c, c, by * 2.0 * inv_h);
                }
            } else if by < 0.0 && j + 1 < n {
                conv.add(c, c, -by * inv_h);
                conv.add(c, c + n, by * inv_h);
            }
        }
    }

    // base operator: convection plus kappa_bar times the total diffusion
    let diff_ops: Vec<Operator> = diff.into_iter().map(Operator::Band).collect();
    let total = Operator::affine_combine(
        &Operator::Band(conv),
        &diff_ops,
        &vec![kappa_bar; diff_ops.len()],
    )?;

    // observation: mean over top-edge cells whose x-extent overlaps obs_x
    let (olo, ohi) = obs_x;
    let mut patch = Vec::new();
    for i in 0..n {
        let x0 = i as f64 * h;
        let x1 = (i + 1) as f64 * h;
        if x0 < ohi && x1 > olo {
            patch.push(i + n * (n - 1));
        }
    }
    if patch.is_empty() {
        return Err(ModelError::DegeneratePatch { lo: olo, hi: ohi });
    }
    let mut observation = RowDVector::zeros(ndof);
    for &c in &patch {
        observation[c] = 1.0 / patch.len() as f64;
    }

    let load = DVector::from_column_slice(&subdomains.source);
    let mass = DVector::from_element(ndof, h * h);

    ParametricModel::new_checked(
        vec![alpha_domain; subdomains.n_subdomains],
        total,
        diff_ops,
        load,
        observation,
        mass,
    )
}

/// Which analytic toy model a reference value belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ToyModelSpec {
    Toy1d {
        lo: f64,
        hi: f64,
    },
    Toy2d {
        lo1: f64,
        hi1: f64,
        lo2: f64,
        hi2: f64,
        eps: f64,
    },
}

/// Exact mean/variance of the observed quantity: closed form for the 1-D
/// model, converged tensor quadrature for the 2-D model.
pub fn analytic_reference(spec: &ToyModelSpec) -> Result<(f64, f64), ModelError> {
    match *spec {
        ToyModelSpec::Toy1d { lo, hi } => {
            if !(0.0 < lo && lo < hi) {
                return Err(ModelError::NonpositiveDomain { lo, hi });
            }
            let mean = (hi / lo).ln() / (hi - lo);
            let second = 1.0 / (lo * hi);
            Ok((mean, second - mean * mean))
        }
        ToyModelSpec::Toy2d {
            lo1,
            hi1,
            lo2,
            hi2,
            eps,
        } => {
            if !(0.0 < lo1 && lo1 < hi1 && 0.0 < lo2 && lo2 < hi2) {
                return Err(ModelError::NonpositiveDomain { lo: lo1, hi: hi1 });
            }
            if lo1 * lo2 <= eps * eps {
                return Err(ModelError::CouplingTooLarge {
                    eps,
                    prod: lo1 * lo2,
                });
            }
            let g = |a1: f64, a2: f64| (a1 + a2 - 2.0 * eps) / (a1 * a2 - eps * eps);
            let d1 = UniformMeasure::new(lo1, hi1).expect("validated");
            let d2 = UniformMeasure::new(lo2, hi2).expect("validated");
            // the integrand is analytic on the box, so tensor Gauss rules
            // converge geometrically; stop when two refinements agree
            let mut prev: Option<(f64, f64)> = None;
            let mut last_change = f64::MAX;
            for d in [16, 24, 32, 48, 64] {
                let r1 = crate::quadrature::gauss_rule(d1, d).expect("valid rule");
                let r2 = crate::quadrature::gauss_rule(d2, d).expect("valid rule");
                let mut mean = 0.0;
                let mut second = 0.0;
                for (a1, w1) in r1.nodes().iter().zip(r1.weights()) {
                    for (a2, w2) in r2.nodes().iter().zip(r2.weights()) {
                        let v = g(*a1, *a2);
                        let w = w1 * w2;
                        mean += w * v;
                        second += w * v * v;
                    }
                }
                let var = second - mean * mean;
                if let Some((pm, pv)) = prev {
                    last_change = ((mean - pm) / mean).abs().max(((var - pv) / var).abs());
                    if last_change <= 1e-12 {
                        return Ok((mean, var));
                    }
                }
                prev = Some((mean, var));
            }
            Err(ModelError::NonConvergentIntegral { last: last_change })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const PAPER_E1: f64 = 2118.24465097;
    const PAPER_V1: f64 = 274944.360550;
    const PAPER_E2: f64 = 3504.22709343;
    const PAPER_V2: f64 = 261037.034256;

    #[test]
    fn toy1d_pointwise_and_reference() {
        let m = toy1d_model(3e-4, 7e-4).unwrap();
        assert_eq!(m.n_dof(), 1);
        assert_eq!(m.n_params(), 1);
        let cy = m.observe_at(&[5e-4]).unwrap();
        assert_relative_eq!(cy, 2000.0, max_relative = 1e-14);

        let (e, v) = analytic_reference(&ToyModelSpec::Toy1d { lo: 3e-4, hi: 7e-4 }).unwrap();
        assert_relative_eq!(e, PAPER_E1, max_relative = 5e-12);
        assert_relative_eq!(v, PAPER_V1, max_relative = 5e-12);
    }

    #[test]
    fn toy1d_rejects_nonpositive_lower() {
        assert!(matches!(
            toy1d_model(0.0, 1.0),
            Err(ModelError::NonpositiveDomain { .. })
        ));
        assert!(toy1d_model(-1.0, 1.0).is_err());
    }

    #[test]
    fn toy2d_pointwise_and_reference() {
        let m = toy2d_model(3e-4, 7e-4, 3e-4, 7e-4, 0.0).unwrap();
        let cy = m.observe_at(&[5e-4, 5e-4]).unwrap();
        assert_relative_eq!(cy, 4000.0, max_relative = 1e-13);

        let (e, v) = analytic_reference(&ToyModelSpec::Toy2d {
            lo1: 3e-4,
            hi1: 7e-4,
            lo2: 3e-4,
            hi2: 7e-4,
            eps: 1e-4,
        })
        .unwrap();
        assert_relative_eq!(e, PAPER_E2, max_relative = 5e-12);
        assert_relative_eq!(v, PAPER_V2, max_relative = 5e-12);
    }

    #[test]
    fn toy2d_decouples_at_zero_eps() {
        let (e, _) = analytic_reference(&ToyModelSpec::Toy2d {
            lo1: 3e-4,
            hi1: 7e-4,
            lo2: 3e-4,
            hi2: 7e-4,
            eps: 0.0,
        })
        .unwrap();
        let (e1, _) = analytic_reference(&ToyModelSpec::Toy1d { lo: 3e-4, hi: 7e-4 }).unwrap();
        assert_relative_eq!(e, 2.0 * e1, max_relative = 1e-11);
    }

    #[test]
    fn toy2d_rejects_invertibility_violation() {
        assert!(matches!(
            toy2d_model(3e-4, 7e-4, 3e-4, 7e-4, 3.1e-4),
            Err(ModelError::CouplingTooLarge { .. })
        ));
    }

    fn paper_style_model(grid: usize) -> ParametricModel {
        let sub = SubdomainMap::quadrants(grid, 5e-4).unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        convdiff_model(&sub, domain, (0.45, 0.55)).unwrap()
    }

    fn quadrant_assign(x: f64, y: f64) -> usize {
        (if x >= 0.5 { 1 } else { 0 }) + 2 * (if y >= 0.5 { 1 } else { 0 })
    }

    #[test]
    fn convdiff_zero_source_gives_zero_solution() {
        let sub =
            SubdomainMap::custom(16, 5e-4, 4, quadrant_assign, |_, _| [0.0, 0.0], |_, _| 0.0)
                .unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        let m = convdiff_model(&sub, domain, (0.45, 0.55)).unwrap();
        let mut rng = StdRng::seed_from_u64(50);
        for _ in 0..5 {
            let alpha: Vec<f64> = (0..4).map(|_| rng.random_range(-2e-4..2e-4)).collect();
            let y = m.solve(&alpha).unwrap();
            assert!(y.norm() == 0.0);
        }
    }

    #[test]
    fn convdiff_constant_kappa_matches_full_pivot_oracle() {
        let sub =
            SubdomainMap::custom(16, 5e-4, 4, quadrant_assign, |_, _| [0.0, 0.0], |_, _| 1.0)
                .unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        let m = convdiff_model(&sub, domain, (0.45, 0.55)).unwrap();
        let alpha = vec![1e-4; 4]; // same shift everywhere: constant kappa
        let y = m.solve(&alpha).unwrap();
        let dense = m.assemble(&alpha).unwrap().to_dense();
        let oracle = dense.full_piv_lu().solve(m.load()).unwrap();
        assert!((&y - &oracle).norm() <= 1e-12 * oracle.norm());
    }

    #[test]
    fn convdiff_affinity_is_exact() {
        // dyadic kappa_bar, parameters and grid spacing keep every assembly
        // product and sum exact, so the affine structure holds bitwise
        let kappa_bar = 2f64.powi(-11);
        let sub = SubdomainMap::custom(
            16,
            kappa_bar,
            4,
            quadrant_assign,
            |x, y| [y - 0.5, -(x - 0.5)],
            |_, _| 1.0,
        )
        .unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        let m = convdiff_model(&sub, domain, (0.45, 0.55)).unwrap();
        let mut rng = StdRng::seed_from_u64(51);
        for i in 0..4 {
            let alpha: Vec<f64> = (0..4)
                .map(|_| rng.random_range(-838i32..=838) as f64 * 2f64.powi(-22))
                .collect();
            let delta = 2f64.powi(-13);
            let mut alpha2 = alpha.clone();
            alpha2[i] += delta;
            let a1 = m.assemble(&alpha).unwrap().to_dense();
            let a2 = m.assemble(&alpha2).unwrap().to_dense();
            let comp = m.param_ops()[i].to_dense();
            let diff = &a2 - &a1;
            let expect = delta * &comp;
            assert_eq!(diff, expect, "affinity violated in component {i}");
        }
    }

    #[test]
    fn convdiff_elliptic_over_box() {
        let m = paper_style_model(16);
        let mut rng = StdRng::seed_from_u64(52);
        for _ in 0..100 {
            let alpha: Vec<f64> = (0..4).map(|_| rng.random_range(-2e-4..2e-4)).collect();
            assert!(m.assemble(&alpha).unwrap().is_invertible());
        }
    }

    #[test]
    fn convdiff_symmetric_without_convection() {
        let sub =
            SubdomainMap::custom(8, 5e-4, 4, quadrant_assign, |_, _| [0.0, 0.0], |x, _| x)
                .unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        let m = convdiff_model(&sub, domain, (0.4, 0.6)).unwrap();
        for corner in 0..16usize {
            let alpha: Vec<f64> = (0..4)
                .map(|i| if corner >> i & 1 == 0 { -2e-4 } else { 2e-4 })
                .collect();
            let a = m.assemble(&alpha).unwrap().to_dense();
            let asym = (&a - a.transpose()).norm();
            assert!(asym <= 1e-14 * a.norm());
            assert!(
                nalgebra::Cholesky::new(a).is_some(),
                "not SPD at {alpha:?}"
            );
        }
    }

    #[test]
    fn observation_is_linear() {
        // integer-valued vectors and a power-of-two patch give exact sums
        let m = paper_style_model(16);
        let mut rng = StdRng::seed_from_u64(53);
        let n = m.n_dof();
        let y1 = DVector::from_fn(n, |_, _| rng.random_range(-8i32..8) as f64);
        let y2 = DVector::from_fn(n, |_, _| rng.random_range(-8i32..8) as f64);
        let lhs = m.observe(&(&y1 + &y2));
        let rhs = m.observe(&y1) + m.observe(&y2);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn observation_patch_and_mass() {
        let m = paper_style_model(32);
        let obs = m.observation();
        let nonzero: Vec<usize> = (0..m.n_dof()).filter(|&i| obs[i] != 0.0).collect();
        // cells overlapping [0.45, 0.55] on the top edge of a 32-grid
        let top = 32 * 31;
        assert_eq!(nonzero, vec![top + 14, top + 15, top + 16, top + 17]);
        assert_relative_eq!(obs[nonzero[0]], 0.25, max_relative = 1e-15);

        let mass = m.spatial_mass();
        assert_relative_eq!(mass[(0, 0)], 1.0 / 1024.0, max_relative = 1e-15);
    }

    #[test]
    fn degenerate_patch_rejected() {
        let sub = SubdomainMap::quadrants(16, 5e-4).unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        assert!(matches!(
            convdiff_model(&sub, domain, (1.5, 1.6)),
            Err(ModelError::DegeneratePatch { .. })
        ));
    }

    #[test]
    fn grid_and_ellipticity_guards() {
        assert!(matches!(
            SubdomainMap::quadrants(4, 5e-4),
            Err(ModelError::GridTooSmall(4))
        ));
        let sub = SubdomainMap::quadrants(8, 1e-4).unwrap();
        let domain = UniformMeasure::new(-2e-4, 2e-4).unwrap();
        assert!(matches!(
            convdiff_model(&sub, domain, (0.4, 0.6)),
            Err(ModelError::NotElliptic { .. })
        ));
    }

    #[test]
    fn assemble_rejects_wrong_param_count() {
        let m = toy2d_model(3e-4, 7e-4, 3e-4, 7e-4, 1e-4).unwrap();
        assert!(matches!(
            m.solve(&[1e-4]),
            Err(ModelError::ParamCount {
                expected: 2,
                got: 1
            })
        ));
    }
}
