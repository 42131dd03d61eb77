//! Generalized Stiefel geometry for `{H : Hᵀ M H = I_r}` with `M = X Xᵀ + εI`.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative ridge added to `X Xᵀ`.
pub const RIDGE: f64 = 1e-8;

/// Feasibility tolerance carried by every [`StiefelPoint`].
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// SPD metric `M = X Xᵀ + εI` of one view together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct ViewMetric {
    m: DMatrix<f64>,
    epsilon: f64,
    chol: Cholesky<f64, Dyn>,
}

impl ViewMetric {
    /// Builds the metric from a `d × N` view. `ε = 1e-8 · tr(XXᵀ)/d`, or
    /// `1e-8` when the trace vanishes.
    pub fn from_view(x: &DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Data("empty view".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("view contains non-finite values".into()));
        }
        let mut m = x * x.transpose();
        // exact symmetry; the product above can differ in the last ulp
        m = (&m + m.transpose()) * 0.5;
        let d = m.nrows();
        let trace = m.trace();
        let epsilon = if trace > 0.0 {
            RIDGE * trace / d as f64
        } else {
            RIDGE
        };
        for i in 0..d {
            m[(i, i)] += epsilon;
        }
        Self::from_matrix(m, epsilon)
    }

    /// Wraps an already-regularized SPD matrix.
    pub fn from_matrix(m: DMatrix<f64>, epsilon: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "metric must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let chol = Cholesky::new(m.clone())
            .ok_or_else(|| Error::Numeric("metric is not positive definite".into()))?;
        Ok(Self { m, epsilon, chol })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Lower-triangular `L` with `M = L Lᵀ`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `‖Hᵀ M H − I‖_F`.
    pub fn feasibility(&self, h: &DMatrix<f64>) -> f64 {
        let g = h.transpose() * &self.m * h;
        (g - DMatrix::identity(h.ncols(), h.ncols())).norm()
    }
}

/// A `d × r` matrix satisfying `Hᵀ M H = I_r` for the metric it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    h: DMatrix<f64>,
}

impl StiefelPoint {
    /// Accepts `h` only if it is feasible to [`FEASIBILITY_TOL`].
    pub fn new(h: DMatrix<f64>, metric: &ViewMetric) -> Result<Self> {
        if h.nrows() != metric.dim() {
            return Err(Error::Dimension(format!(
                "point has {} rows, metric is {}x{}",
                h.nrows(),
                metric.dim(),
                metric.dim()
            )));
        }
        let res = metric.feasibility(&h);
        if res > FEASIBILITY_TOL {
            return Err(Error::Parameter(format!("infeasible point, residual {res:.3e}")));
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.h
    }
}

/// `A R⁻¹` where `Rᵀ R = Aᵀ M A` is the Cholesky factorization with positive
/// diagonal.
pub fn m_orthonormalize(a: &DMatrix<f64>, metric: &ViewMetric) -> Result<StiefelPoint> {
    if a.nrows() != metric.dim() {
        return Err(Error::Dimension(format!(
            "matrix has {} rows, metric is {}x{}",
            a.nrows(),
            metric.dim(),
            metric.dim()
        )));
    }
    let r = a.ncols();
    if r == 0 {
        return Err(Error::Dimension("matrix has no columns".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite entries".into()));
    }
    // Aᵀ M A = (Lᵀ A)ᵀ (Lᵀ A)
    let k = metric.chol.l().transpose() * a;
    let mut gram = k.transpose() * &k;
    gram = (&gram + gram.transpose()) * 0.5;
    let scale = (0..r).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    let chol = Cholesky::new(gram)
        .ok_or_else(|| Error::Rank(format!("matrix is rank deficient in the metric (r = {r})")))?;
    let lower = chol.l();
    let min_diag = (0..r).map(|i| lower[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_diag > 1e-12 * scale.sqrt()) {
        return Err(Error::Rank(format!(
            "matrix is numerically rank deficient in the metric (pivot {min_diag:.3e})"
        )));
    }
    // H = A R⁻¹ with R = Lᵀ  ⇔  Hᵀ = L⁻¹ Aᵀ
    let ht = lower
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    Ok(StiefelPoint { h: ht.transpose() })
}

/// Cholesky-based retraction `m_orthonormalize(H + step)`.
pub fn retract(
    point: &StiefelPoint,
    step: &DMatrix<f64>,
    metric: &ViewMetric,
) -> Result<StiefelPoint> {
    if step.shape() != point.h.shape() {
        return Err(Error::Dimension(format!(
            "step {:?} vs point {:?}",
            step.shape(),
            point.h.shape()
        )));
    }
    m_orthonormalize(&(&point.h + step), metric)
}

/// `‖Dᵀ M H + Hᵀ M D‖_F`; zero exactly on the tangent space at `H`.
pub fn tangent_violation(h: &DMatrix<f64>, d: &DMatrix<f64>, metric: &ViewMetric) -> f64 {
    let s = d.transpose() * (metric.matrix() * h);
    (&s + s.transpose()).norm()
}

/// Initialization strategies for the projection matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitStrategy {
    #[default]
    Random,
    Svd,
    Identity,
    Orthogonal,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "svd" => Ok(Self::Svd),
            "identity" => Ok(Self::Identity),
            "orthogonal" => Ok(Self::Orthogonal),
            other => Err(Error::Parameter(format!("unknown init strategy {other:?}"))),
        }
    }
}

fn gaussian(d: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(d, r, |_, _| StandardNormal.sample(rng))
}

/// Flips column signs so the largest-magnitude entry of each column is positive.
pub(crate) fn fix_column_signs(a: &mut DMatrix<f64>) {
    for mut col in a.column_iter_mut() {
        let mut pivot = 0.0_f64;
        for &v in col.iter() {
            if v.abs() > pivot.abs() {
                pivot = v;
            }
        }
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Initial feasible point. Deterministic per `(strategy, seed)`.
pub fn random_point(
    d: usize,
    r: usize,
    metric: &ViewMetric,
    seed: u64,
    strategy: InitStrategy,
) -> Result<StiefelPoint> {
    if r == 0 || r > d {
        return Err(Error::Parameter(format!("need 1 <= r <= d, got r = {r}, d = {d}")));
    }
    if metric.dim() != d {
        return Err(Error::Dimension(format!("metric is {0}x{0}, d = {d}", metric.dim())));
    }
    match strategy {
        InitStrategy::Random | InitStrategy::Orthogonal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut last = None;
            // a Gaussian draw is rank deficient with probability zero; retry anyway
            for _ in 0..8 {
                let mut a = gaussian(d, r, &mut rng);
                if strategy == InitStrategy::Orthogonal {
                    a = a.qr().q();
                }
                match m_orthonormalize(&a, metric) {
                    Ok(p) => return Ok(p),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.unwrap_or_else(|| Error::Rank("initialization failed".into())))
        }
        InitStrategy::Identity => m_orthonormalize(&DMatrix::identity(d, r), metric),
        InitStrategy::Svd => {
            // leading eigenvectors of M are the leading left singular vectors of X
            let eig = SymmetricEigen::new(metric.matrix().clone());
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            let mut a = DMatrix::zeros(d, r);
            for (c, &i) in order.iter().take(r).enumerate() {
                a.set_column(c, &eig.eigenvectors.column(i));
            }
            fix_column_signs(&mut a);
            m_orthonormalize(&a, metric)
        }
    }
}
