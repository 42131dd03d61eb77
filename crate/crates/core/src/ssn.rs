//! Semi-smooth Newton solver for the tangent-constrained proximal subproblem
//!
//! ```text
//! min_D ⟨∇F, D⟩ + ‖D‖²/(2t) + λ‖H + D‖_{2,1}   s.t.  DᵀMH + HᵀMD = 0.
//! ```
//!
//! Eliminating `D` through the first-order condition leaves the multiplier
//! equation `Q(Λ) = 0` over symmetric `r × r` matrices, with
//! `D(Λ) = prox(B(Λ), tλ) − H` and `B(Λ) = H − t(∇F − 2MHΛ)`. `Q` is monotone,
//! and each Newton system is built on the `r(r+1)/2`-dimensional space of
//! symmetric matrices using the isometric half-vectorization (off-diagonal
//! coordinates scaled by √2), which makes the reduced generalized Jacobian a
//! symmetric positive semi-definite matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::ViewMetric;
use crate::prox::{l21_norm, row_norm, shrink_rows};

/// Iteration cap for the multiplier iteration.
pub const MAX_ITER: usize = 50;
/// Halvings tried before the regularization is increased.
pub const MAX_HALVINGS: usize = 20;
/// Tolerance band within which `‖b_j‖ = tλ` counts as the kink.
const KINK_TOL: f64 = 1e-14;

/// Data of one proximal subproblem at `H`.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    h: &'a DMatrix<f64>,
    grad: &'a DMatrix<f64>,
    metric: &'a ViewMetric,
    t: f64,
    lambda: f64,
    mh: DMatrix<f64>,
}

impl<'a> SubproblemSpec<'a> {
    pub fn new(
        h: &'a DMatrix<f64>,
        grad: &'a DMatrix<f64>,
        metric: &'a ViewMetric,
        t: f64,
        lambda: f64,
    ) -> Result<Self> {
        if h.shape() != grad.shape() {
            return Err(Error::Dimension(format!(
                "point {:?} vs gradient {:?}",
                h.shape(),
                grad.shape()
            )));
        }
        if h.nrows() != metric.dim() {
            return Err(Error::Dimension(format!(
                "point has {} rows, metric is {}x{}",
                h.nrows(),
                metric.dim(),
                metric.dim()
            )));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Parameter(format!("step parameter must be positive, got {t}")));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("sparsity weight must be >= 0, got {lambda}")));
        }
        let mh = metric.matrix() * h;
        Ok(Self {
            h,
            grad,
            metric,
            t,
            lambda,
            mh,
        })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        self.h
    }

    pub fn grad(&self) -> &DMatrix<f64> {
        self.grad
    }

    pub fn metric(&self) -> &ViewMetric {
        self.metric
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn rank(&self) -> usize {
        self.h.ncols()
    }

    fn threshold(&self) -> f64 {
        self.t * self.lambda
    }

    /// `B(Λ) = H − t(∇F − 2MHΛ)`.
    pub fn b(&self, lam: &MultiplierState) -> DMatrix<f64> {
        self.h - (self.grad - &self.mh * (lam.matrix() * 2.0)) * self.t
    }

    /// `⟨∇F, D⟩ + ‖D‖²/(2t) + λ‖H + D‖_{2,1}`.
    pub fn objective(&self, d: &DMatrix<f64>) -> f64 {
        self.grad.dot(d) + d.norm_squared() / (2.0 * self.t) + self.lambda * l21_norm(&(self.h + d))
    }

    /// `Dᵀ M H + Hᵀ M D` for an arbitrary `D`.
    fn constraint(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let s = d.transpose() * &self.mh;
        &s + s.transpose()
    }
}

/// Symmetric multiplier `Λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierState {
    lam: DMatrix<f64>,
}

impl MultiplierState {
    pub fn zeros(r: usize) -> Self {
        Self {
            lam: DMatrix::zeros(r, r),
        }
    }

    /// Stores the symmetric part of `lam`.
    pub fn new(lam: DMatrix<f64>) -> Result<Self> {
        if !lam.is_square() {
            return Err(Error::Dimension(format!("{}x{} multiplier", lam.nrows(), lam.ncols())));
        }
        let lam = (&lam + lam.transpose()) * 0.5;
        Ok(Self { lam })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.lam
    }

    fn shifted(&self, step: &DMatrix<f64>, scale: f64) -> Self {
        let lam = &self.lam + step * scale;
        Self {
            lam: (&lam + lam.transpose()) * 0.5,
        }
    }
}

/// Number of free entries of a symmetric `r × r` matrix.
pub fn half_vec_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Isometric half-vectorization: lower triangle, column by column, with
/// off-diagonal entries scaled by √2 so that `⟨A, B⟩_F = half_vec(A)·half_vec(B)`.
pub fn half_vec(a: &DMatrix<f64>) -> DVector<f64> {
    let r = a.nrows();
    let mut v = DVector::zeros(half_vec_len(r));
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            v[k] = if i == j {
                a[(i, i)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (a[(i, j)] + a[(j, i)])
            };
            k += 1;
        }
    }
    v
}

/// Inverse of [`half_vec`].
pub fn from_half_vec(v: &DVector<f64>, r: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), half_vec_len(r), "half-vector length");
    let mut a = DMatrix::zeros(r, r);
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            if i == j {
                a[(i, i)] = v[k];
            } else {
                let x = v[k] / std::f64::consts::SQRT_2;
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
            k += 1;
        }
    }
    a
}

/// `D(Λ) = prox_{2,1}(B(Λ), tλ) − H`.
pub fn direction_from_multiplier(lam: &MultiplierState, spec: &SubproblemSpec) -> DMatrix<f64> {
    shrink_rows(&spec.b(lam), spec.threshold()) - spec.h
}

/// `Q(Λ) = DᵀMH + HᵀMD` at `D = D(Λ)`.
pub fn kkt_residual(lam: &MultiplierState, spec: &SubproblemSpec) -> DMatrix<f64> {
    spec.constraint(&direction_from_multiplier(lam, spec))
}

/// Generalized Jacobian element of the row-wise prox at each row `b_j` of `b`.
pub fn jacobian_blocks(b: &DMatrix<f64>, t: f64, lambda: f64) -> Vec<DMatrix<f64>> {
    let r = b.ncols();
    let thr = t * lambda;
    (0..b.nrows())
        .map(|j| {
            if thr == 0.0 {
                return DMatrix::identity(r, r);
            }
            let norm = row_norm(b, j);
            if norm > thr + KINK_TOL {
                let bj = b.row(j).transpose();
                let proj = DMatrix::identity(r, r) - &bj * bj.transpose() / (norm * norm);
                DMatrix::identity(r, r) - proj * (thr / norm)
            } else {
                DMatrix::zeros(r, r)
            }
        })
        .collect()
}

/// Row-wise action of the prox Jacobian at `b` on `v` without forming blocks.
fn apply_prox_jacobian(b: &DMatrix<f64>, norms: &[f64], thr: f64, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = v.clone();
    if thr == 0.0 {
        return out;
    }
    for j in 0..b.nrows() {
        let norm = norms[j];
        let mut row = out.row_mut(j);
        if norm > thr + KINK_TOL {
            let bj = b.row(j);
            let along = bj.dot(&v.row(j)) / (norm * norm);
            let shrink = thr / norm;
            // v − (thr/‖b‖)(v − b (bᵀv)/‖b‖²)
            row *= 1.0 - shrink;
            row += bj * (shrink * along);
        } else {
            row.fill(0.0);
        }
    }
    out
}

/// Reduced generalized Jacobian of `Q` at `Λ` in half-vectorized coordinates.
pub fn reduced_jacobian(lam: &MultiplierState, spec: &SubproblemSpec) -> DMatrix<f64> {
    let r = spec.rank();
    let n = half_vec_len(r);
    let b = spec.b(lam);
    let norms: Vec<f64> = (0..b.nrows()).map(|j| row_norm(&b, j)).collect();
    let thr = spec.threshold();
    let mut v = DMatrix::zeros(n, n);
    let mut basis = DVector::zeros(n);
    for k in 0..n {
        basis.fill(0.0);
        basis[k] = 1.0;
        let delta = from_half_vec(&basis, r);
        let db = &spec.mh * delta * (2.0 * spec.t);
        let dd = apply_prox_jacobian(&b, &norms, thr, &db);
        v.set_column(k, &half_vec(&spec.constraint(&dd)));
    }
    (&v + v.transpose()) * 0.5
}

/// Solves `(V̄ + ηI) d = −half_vec(Q(Λ))` for the Newton direction.
pub fn newton_step(lam: &MultiplierState, spec: &SubproblemSpec, eta: f64) -> Result<DVector<f64>> {
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!("regularization must be positive, got {eta}")));
    }
    let q = half_vec(&kkt_residual(lam, spec));
    solve_regularized(reduced_jacobian(lam, spec), &q, eta)
}

fn solve_regularized(mut v: DMatrix<f64>, q: &DVector<f64>, eta: f64) -> Result<DVector<f64>> {
    for i in 0..v.nrows() {
        v[(i, i)] += eta;
    }
    let rhs = -q;
    let sol = match v.clone().cholesky() {
        Some(ch) => Some(ch.solve(&rhs)),
        None => v.lu().solve(&rhs),
    };
    match sol {
        Some(d) if d.iter().all(|x| x.is_finite()) => Ok(d),
        _ => Err(Error::Numeric("regularized Newton system is singular".into())),
    }
}

/// Outcome of [`solve_subproblem`].
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub d: DMatrix<f64>,
    pub lam: MultiplierState,
    /// `‖Q(Λ)‖_F` at the returned multiplier.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Stopping tolerance `1e-8 · max(1, ‖H‖_F)`.
pub fn inner_tolerance(h: &DMatrix<f64>) -> f64 {
    1e-8 * h.norm().max(1.0)
}

/// Damped regularized semi-smooth Newton iteration on `Q(Λ) = 0` from `Λ = 0`.
///
/// Steps are halved until `‖Q‖_F` strictly decreases; if twenty halvings do
/// not help, `η` grows tenfold and the system is re-solved. Returns the last
/// accepted iterate with `converged = false` when the cap is reached.
pub fn solve_subproblem(spec: &SubproblemSpec) -> SubproblemSolution {
    let r = spec.rank();
    let tol = inner_tolerance(spec.h);
    let mut lam = MultiplierState::zeros(r);
    let mut q = kkt_residual(&lam, spec);
    let mut res = q.norm();
    let mut iterations = 0;

    'outer: while res > tol && iterations < MAX_ITER {
        iterations += 1;
        let qv = half_vec(&q);
        let jac = reduced_jacobian(&lam, spec);
        let mut eta = 1e-4 * qv.norm().max(1.0);
        loop {
            if eta > 1e12 {
                break 'outer;
            }
            let step = match solve_regularized(jac.clone(), &qv, eta) {
                Ok(d) => from_half_vec(&d, r),
                Err(_) => {
                    eta *= 10.0;
                    continue;
                }
            };
            let mut scale = 1.0;
            for _ in 0..=MAX_HALVINGS {
                let trial = lam.shifted(&step, scale);
                let trial_q = kkt_residual(&trial, spec);
                let trial_res = trial_q.norm();
                if trial_res < res {
                    lam = trial;
                    q = trial_q;
                    res = trial_res;
                    continue 'outer;
                }
                scale *= 0.5;
            }
            eta *= 10.0;
        }
    }
    SubproblemSolution {
        d: direction_from_multiplier(&lam, spec),
        lam,
        residual: res,
        iterations,
        converged: res <= tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{random_point, tangent_violation, InitStrategy};
    use crate::prox::prox_l21;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        h: DMatrix<f64>,
        grad: DMatrix<f64>,
        metric: ViewMetric,
    }

    fn fixture(d: usize, r: usize, seed: u64) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(d, 3 * d, |_, _| rng.random_range(-1.0..1.0));
        let metric = ViewMetric::from_view(&x).unwrap();
        let h = random_point(d, r, &metric, seed, InitStrategy::Random)
            .unwrap()
            .into_matrix();
        let grad = DMatrix::from_fn(d, r, |_, _| rng.random_range(-1.0..1.0));
        Fixture { h, grad, metric }
    }

    #[test]
    fn half_vec_is_isometric() {
        let a = DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 4., 5., 3., 5., 6.]);
        let b = DMatrix::from_row_slice(3, 3, &[0., 1., -1., 1., 2., 0.5, -1., 0.5, 3.]);
        assert!((half_vec(&a).dot(&half_vec(&b)) - a.dot(&b)).abs() < 1e-12);
        assert_eq!(from_half_vec(&half_vec(&a), 3), a);
    }

    #[test]
    fn direction_examples() {
        let f = fixture(5, 2, 1);
        let zero = DMatrix::zeros(5, 2);
        let spec = SubproblemSpec::new(&f.h, &zero, &f.metric, 0.1, 0.0).unwrap();
        let lam = MultiplierState::zeros(2);
        assert_eq!(direction_from_multiplier(&lam, &spec), DMatrix::zeros(5, 2));
        assert_eq!(kkt_residual(&lam, &spec), DMatrix::zeros(2, 2));

        let spec = SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.1, 0.0).unwrap();
        let d = direction_from_multiplier(&lam, &spec);
        assert!((d + &f.grad * 0.1).norm() < 1e-14);
    }

    #[test]
    fn residual_of_h_direction_is_two_identity() {
        let f = fixture(5, 3, 2);
        let spec = SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.1, 0.0).unwrap();
        let q = spec.constraint(&f.h);
        assert!((q - DMatrix::identity(3, 3) * 2.0).norm() < 1e-10);
    }

    #[test]
    fn spec_rejects_bad_parameters() {
        let f = fixture(4, 2, 3);
        assert!(SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.0, 0.1).is_err());
        assert!(SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.1, -1.0).is_err());
        let g = DMatrix::zeros(4, 3);
        assert!(SubproblemSpec::new(&f.h, &g, &f.metric, 0.1, 0.1).is_err());
    }

    #[test]
    fn jacobian_block_branches() {
        let b = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.1, 0.0]);
        for blk in jacobian_blocks(&b, 0.5, 0.0) {
            assert_eq!(blk, DMatrix::identity(2, 2));
        }
        let blocks = jacobian_blocks(&b, 1.0, 1.0);
        assert_eq!(blocks[1], DMatrix::zeros(2, 2));
        // at the kink the zero element is chosen
        let kink = DMatrix::from_row_slice(1, 2, &[0.6, 0.8]);
        assert_eq!(jacobian_blocks(&kink, 1.0, 1.0)[0], DMatrix::zeros(2, 2));
    }

    #[test]
    fn jacobian_blocks_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (t, lambda) = (0.5, 0.6);
        for _ in 0..5 {
            let b = DMatrix::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0));
            if b.norm() <= t * lambda + 0.05 {
                continue;
            }
            let blk = &jacobian_blocks(&b, t, lambda)[0];
            for _ in 0..5 {
                let v = DMatrix::from_fn(1, 3, |_, _| rng.random_range(-1.0..1.0));
                let eps = 1e-6;
                let fd = (prox_l21(&(&b + &v * eps), t * lambda).unwrap()
                    - prox_l21(&(&b - &v * eps), t * lambda).unwrap())
                    / (2.0 * eps);
                let an = (blk * v.transpose()).transpose();
                assert!((fd - an).norm() < 1e-5);
            }
        }
    }

    #[test]
    fn newton_step_examples() {
        let f = fixture(5, 2, 5);
        let zero = DMatrix::zeros(5, 2);
        let spec = SubproblemSpec::new(&f.h, &zero, &f.metric, 0.1, 0.0).unwrap();
        let d = newton_step(&MultiplierState::zeros(2), &spec, 1e-4).unwrap();
        assert_eq!(d, DVector::zeros(3));
        assert!(newton_step(&MultiplierState::zeros(2), &spec, 0.0).is_err());

        // smooth case: the regularized linear system is solved accurately
        let spec = SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.1, 0.0).unwrap();
        let lam = MultiplierState::zeros(2);
        let eta = 1e-4;
        let d = newton_step(&lam, &spec, eta).unwrap();
        let mut sys = reduced_jacobian(&lam, &spec);
        for i in 0..3 {
            sys[(i, i)] += eta;
        }
        let q = half_vec(&kkt_residual(&lam, &spec));
        assert!((sys * &d + q).norm() < 1e-8);
    }

    #[test]
    fn reduced_jacobian_is_psd() {
        for seed in 0..10 {
            let r = 1 + (seed as usize % 6);
            let f = fixture(8, r, 100 + seed);
            let spec = SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.3, 0.5).unwrap();
            let lam = MultiplierState::new(DMatrix::from_fn(r, r, |i, j| {
                0.1 * ((i + 2 * j) as f64).sin()
            }))
            .unwrap();
            let v = reduced_jacobian(&lam, &spec);
            let min_eig = v.symmetric_eigenvalues().min();
            assert!(min_eig > -1e-10, "min eigenvalue {min_eig}");
        }
    }

    #[test]
    fn stationary_input_gives_zero_direction() {
        let f = fixture(5, 2, 6);
        let zero = DMatrix::zeros(5, 2);
        let spec = SubproblemSpec::new(&f.h, &zero, &f.metric, 0.1, 0.0).unwrap();
        let sol = solve_subproblem(&spec);
        assert!(sol.converged);
        assert_eq!(sol.d, DMatrix::zeros(5, 2));
        assert_eq!(sol.lam, MultiplierState::zeros(2));
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn sparse_solution_satisfies_kkt() {
        for seed in 0..10 {
            let f = fixture(7, 3, 200 + seed);
            let spec = SubproblemSpec::new(&f.h, &f.grad, &f.metric, 0.2, 0.8).unwrap();
            let sol = solve_subproblem(&spec);
            assert!(sol.converged, "seed {seed}: residual {}", sol.residual);
            assert!(sol.residual <= inner_tolerance(&f.h));
            assert!(tangent_violation(&f.h, &sol.d, &f.metric) <= 1e-7);
            let b = spec.b(&sol.lam);
            let y = &f.h + &sol.d;
            assert!(prox_optimality_check(&b, &y, 0.2 * 0.8));
            assert!(spec.objective(&sol.d) <= spec.objective(&DMatrix::zeros(7, 3)));
        }
    }

    use crate::prox::prox_optimality_check;
}
