//! Alternating manifold proximal-gradient solver.
//!
//! Minimizes
//!
//! ```text
//! G({H_p}) = −½‖C ×_1 H_1ᵀ ⋯ ×_m H_mᵀ‖² + Σ_p λ_p ‖H_p‖_{2,1} + Σ_p Tr(Z_pᵀ L_p Z_p),   Z_p = X_pᵀ H_p
//! ```
//!
//! subject to `H_pᵀ M_p H_p = I`. Views are updated in ascending order; each
//! update solves the tangent-space proximal subproblem with the semi-smooth
//! Newton solver, backtracks on `G`, and retracts.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphConfig, LaplacianOperator};
use crate::manifold::{random_point, retract, InitStrategy, StiefelPoint, ViewMetric, FEASIBILITY_TOL};
use crate::prox::{l21_norm, shrink_rows};
use crate::ssn::{solve_subproblem, SubproblemSpec};
use crate::tensor::{contract_all, contract_all_but, covariance_tensor, DenseTensor};

/// Smallest step the backtracking search will try.
pub const ALPHA_FLOOR: f64 = 1e-10;
/// Step-parameter reductions tried when the inner solver does not converge.
const INNER_RETRIES: usize = 3;

/// Which terms of the model are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub sparsity: bool,
    pub laplacian: bool,
    pub orthogonality: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            sparsity: true,
            laplacian: true,
            orthogonality: true,
        }
    }
}

impl Ablation {
    /// Drops the orthogonality constraint.
    pub const NO_ORTHOGONALITY: Self = Self {
        sparsity: true,
        laplacian: true,
        orthogonality: false,
    };
    /// Drops row sparsity.
    pub const NO_SPARSITY: Self = Self {
        sparsity: false,
        laplacian: true,
        orthogonality: true,
    };
    /// Drops graph regularization.
    pub const NO_LAPLACIAN: Self = Self {
        sparsity: true,
        laplacian: false,
        orthogonality: true,
    };
    /// Orthogonal tensor CCA: tensor term alone.
    pub const TENSOR_ONLY: Self = Self {
        sparsity: false,
        laplacian: false,
        orthogonality: true,
    };
}

/// Function tested by the backtracking search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LineSearchTarget {
    /// The full objective including the ℓ2,1 term.
    #[default]
    Full,
    /// Only the smooth part `F`.
    Smooth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Sparsity weights, one per view or a single shared value.
    pub lambda: Vec<f64>,
    pub graph: GraphConfig,
    /// Embedding dimension.
    pub r: usize,
    /// Proximal step parameter.
    pub t: f64,
    /// Backtracking factor.
    pub gamma: f64,
    pub max_iter: usize,
    /// Stationarity tolerance on `max_p ‖D_p‖_F`.
    pub tol: f64,
    pub seed: u64,
    pub init: InitStrategy,
    pub ablation: Ablation,
    pub line_search: LineSearchTarget,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            lambda: vec![1e-3],
            graph: GraphConfig::default(),
            r: 2,
            t: 1e-2,
            gamma: 0.5,
            max_iter: 100,
            tol: 1e-6,
            seed: 0,
            init: InitStrategy::Random,
            ablation: Ablation::default(),
            line_search: LineSearchTarget::Full,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(Error::Config(format!("t must be positive, got {}", self.t)));
        }
        if self.r == 0 {
            return Err(Error::Config("r must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.lambda.is_empty() {
            return Err(Error::Config("lambda needs at least one value".into()));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {l}")));
        }
        if self.graph.k == 0 {
            return Err(Error::Config("graph k must be at least 1".into()));
        }
        if let Some(s) = self.graph.sigma {
            if !(s > 0.0) {
                return Err(Error::Config(format!("graph sigma must be positive, got {s}")));
            }
        }
        self.graph.orders.validate()
    }

    /// Effective sparsity weight of view `p` (zero when sparsity is ablated).
    pub fn lambda_for(&self, p: usize) -> f64 {
        if !self.ablation.sparsity {
            return 0.0;
        }
        if self.lambda.len() == 1 {
            self.lambda[0]
        } else {
            self.lambda[p]
        }
    }
}

/// The canonical projection matrices, one `d_p × r` matrix per view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    views: Vec<DMatrix<f64>>,
}

impl ProjectionSet {
    pub fn new(views: Vec<DMatrix<f64>>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Dimension("empty projection set".into()));
        }
        let r = views[0].ncols();
        if let Some((p, h)) = views.iter().enumerate().find(|(_, h)| h.ncols() != r) {
            return Err(Error::Dimension(format!(
                "projection {p} has {} columns, expected {r}",
                h.ncols()
            )));
        }
        Ok(Self { views })
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn into_views(self) -> Vec<DMatrix<f64>> {
        self.views
    }

    pub fn rank(&self) -> usize {
        self.views[0].ncols()
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}

/// Value of each model term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    /// `−½‖P‖²`.
    pub tensor: f64,
    /// `Σ λ_p ‖H_p‖_{2,1}`.
    pub sparsity: f64,
    /// `Σ Tr(Z_pᵀ L_p Z_p)`.
    pub laplacian: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.tensor + self.sparsity + self.laplacian
    }

    pub fn smooth(&self) -> f64 {
        self.tensor + self.laplacian
    }
}

/// Precomputed per-fit data: covariance tensor, metrics, Laplacians.
#[derive(Debug, Clone)]
pub struct Problem {
    views: Vec<DMatrix<f64>>,
    metrics: Vec<ViewMetric>,
    covariance: DenseTensor,
    laplacians: Option<Vec<LaplacianOperator>>,
    lambda: Vec<f64>,
    cfg: ProblemConfig,
}

impl Problem {
    /// Builds the covariance tensor, metrics, and (unless ablated) per-view
    /// multi-order Laplacians.
    pub fn new(views: &[DMatrix<f64>], cfg: &ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        if views.is_empty() {
            return Err(Error::Dataset("no views".into()));
        }
        let m = views.len();
        if cfg.lambda.len() != 1 && cfg.lambda.len() != m {
            return Err(Error::Config(format!(
                "{} lambda values for {m} views",
                cfg.lambda.len()
            )));
        }
        for (p, x) in views.iter().enumerate() {
            if cfg.r > x.nrows() {
                return Err(Error::Config(format!(
                    "r = {} exceeds view {p} dimension {}",
                    cfg.r,
                    x.nrows()
                )));
            }
        }
        let covariance = covariance_tensor(views)?;
        let metrics = views
            .iter()
            .enumerate()
            .map(|(p, x)| ViewMetric::from_view(x).map_err(|e| e.in_view(p)))
            .collect::<Result<Vec<_>>>()?;
        let laplacians = if cfg.ablation.laplacian {
            Some(
                views
                    .iter()
                    .enumerate()
                    .map(|(p, x)| {
                        build_graph(x, &cfg.graph)
                            .and_then(|g| LaplacianOperator::new(g, &cfg.graph.orders))
                            .map_err(|e| e.in_view(p))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(Self {
            views: views.to_vec(),
            metrics,
            covariance,
            laplacians,
            lambda: (0..m).map(|p| cfg.lambda_for(p)).collect(),
            cfg: cfg.clone(),
        })
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn metrics(&self) -> &[ViewMetric] {
        &self.metrics
    }

    pub fn covariance(&self) -> &DenseTensor {
        &self.covariance
    }

    pub fn laplacians(&self) -> Option<&[LaplacianOperator]> {
        self.laplacians.as_deref()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    fn check_shapes(&self, hs: &[DMatrix<f64>]) -> Result<()> {
        if hs.len() != self.views.len() {
            return Err(Error::Dimension(format!(
                "{} projections for {} views",
                hs.len(),
                self.views.len()
            )));
        }
        for (p, (h, x)) in hs.iter().zip(&self.views).enumerate() {
            if h.nrows() != x.nrows() || h.ncols() != self.cfg.r {
                return Err(Error::Dimension(format!(
                    "projection {p} is {}x{}, expected {}x{}",
                    h.nrows(),
                    h.ncols(),
                    x.nrows(),
                    self.cfg.r
                )));
            }
        }
        Ok(())
    }

    fn laplacian_term(&self, p: usize, h: &DMatrix<f64>) -> f64 {
        match &self.laplacians {
            Some(ops) => ops[p].quadratic(&(self.views[p].transpose() * h)),
            None => 0.0,
        }
    }

    fn terms_unchecked(&self, hs: &[DMatrix<f64>]) -> ObjectiveTerms {
        let tensor = match contract_all(&self.covariance, hs) {
            Ok(pt) => -0.5 * pt.frobenius_norm_sq(),
            Err(_) => f64::NAN,
        };
        let sparsity = hs.iter().zip(&self.lambda).map(|(h, l)| l * l21_norm(h)).sum();
        let laplacian = hs.iter().enumerate().map(|(p, h)| self.laplacian_term(p, h)).sum();
        ObjectiveTerms {
            tensor,
            sparsity,
            laplacian,
        }
    }

    /// Objective terms at `hs`. Shapes are checked; feasibility is checked when
    /// the orthogonality constraint is active.
    pub fn terms(&self, hs: &[DMatrix<f64>]) -> Result<ObjectiveTerms> {
        self.check_shapes(hs)?;
        if self.cfg.ablation.orthogonality {
            for (p, (h, metric)) in hs.iter().zip(&self.metrics).enumerate() {
                let res = metric.feasibility(h);
                if !(res <= FEASIBILITY_TOL) {
                    return Err(Error::Parameter(format!(
                        "projection {p} is infeasible (residual {res:.3e})"
                    )));
                }
            }
        }
        Ok(self.terms_unchecked(hs))
    }

    /// Full objective `G`.
    pub fn objective(&self, hs: &[DMatrix<f64>]) -> Result<f64> {
        Ok(self.terms(hs)?.total())
    }

    /// Euclidean gradient of the smooth part with respect to `H_p`:
    /// `−U_p U_pᵀ H_p + 2 X_p L_p X_pᵀ H_p`, `U_p` the mode-`p` unfolding of
    /// `C ×_{q≠p} H_qᵀ`.
    pub fn euclidean_grad(&self, hs: &[DMatrix<f64>], p: usize) -> Result<DMatrix<f64>> {
        self.check_shapes(hs)?;
        if p >= self.views.len() {
            return Err(Error::Index(format!("view {p} of {}", self.views.len())));
        }
        let u = contract_all_but(&self.covariance, hs, p)?.unfold(p)?;
        let h = &hs[p];
        let mut grad = -(&u * (u.transpose() * h));
        if let Some(ops) = &self.laplacians {
            let x = &self.views[p];
            grad += x * ops[p].apply(&(x.transpose() * h)) * 2.0;
        }
        Ok(grad)
    }

    /// Objective as a function of `H_p` alone, with the other views fixed at `hs`.
    fn view_objective(&self, hs: &[DMatrix<f64>], p: usize) -> Result<ViewObjective<'_>> {
        let partial = contract_all_but(&self.covariance, hs, p)?;
        let mut others_sparsity = 0.0;
        let mut others_laplacian = 0.0;
        for (q, h) in hs.iter().enumerate() {
            if q != p {
                others_sparsity += self.lambda[q] * l21_norm(h);
                others_laplacian += self.laplacian_term(q, h);
            }
        }
        Ok(ViewObjective {
            problem: self,
            p,
            partial,
            others_sparsity,
            others_laplacian,
        })
    }
}

struct ViewObjective<'a> {
    problem: &'a Problem,
    p: usize,
    partial: DenseTensor,
    others_sparsity: f64,
    others_laplacian: f64,
}

impl ViewObjective<'_> {
    fn terms(&self, h: &DMatrix<f64>) -> ObjectiveTerms {
        let tensor = match self.partial.mode_product(&h.transpose(), self.p) {
            Ok(pt) => -0.5 * pt.frobenius_norm_sq(),
            Err(_) => f64::NAN,
        };
        ObjectiveTerms {
            tensor,
            sparsity: self.others_sparsity + self.problem.lambda[self.p] * l21_norm(h),
            laplacian: self.others_laplacian + self.problem.laplacian_term(self.p, h),
        }
    }

    fn value(&self, h: &DMatrix<f64>, target: LineSearchTarget) -> f64 {
        let terms = self.terms(h);
        match target {
            LineSearchTarget::Full => terms.total(),
            LineSearchTarget::Smooth => terms.smooth(),
        }
    }
}

/// Result of [`line_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    /// Trial point at `alpha`; `None` if even the floor step could not be retracted.
    pub point: Option<DMatrix<f64>>,
    /// Objective at the trial point.
    pub value: f64,
    /// True when no `α ≥ ALPHA_FLOOR` satisfied the decrease test.
    pub stalled: bool,
    pub trials: usize,
}

/// Backtracking on `α ∈ {1, γ, γ², …}` until
/// `f(step(α)) ≤ f0 − α‖D‖²/(2t)`.
///
/// `step` maps `α` to the trial point (or fails, which counts as rejection);
/// non-finite trial values are rejected.
pub fn line_search(
    f0: f64,
    direction_norm_sq: f64,
    t: f64,
    gamma: f64,
    mut step: impl FnMut(f64) -> Option<DMatrix<f64>>,
    mut objective: impl FnMut(&DMatrix<f64>) -> f64,
) -> LineSearchOutcome {
    let mut alpha = 1.0;
    let mut trials = 0;
    let mut last = None;
    let mut last_value = f64::INFINITY;
    while alpha >= ALPHA_FLOOR {
        trials += 1;
        if let Some(point) = step(alpha) {
            let value = objective(&point);
            if value.is_finite() && value <= f0 - alpha * direction_norm_sq / (2.0 * t) {
                return LineSearchOutcome {
                    alpha,
                    point: Some(point),
                    value,
                    stalled: false,
                    trials,
                };
            }
            last = Some(point);
            last_value = value;
        }
        alpha *= gamma;
    }
    LineSearchOutcome {
        alpha: alpha / gamma,
        point: last,
        value: last_value,
        stalled: true,
        trials,
    }
}

/// One accepted (or rejected) view update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub iteration: usize,
    pub view: usize,
    pub alpha: f64,
    pub direction_norm: f64,
    /// Step parameter used for this view (smaller than the configured one if
    /// the inner solver needed a retry).
    pub t: f64,
    pub before: f64,
    pub after: f64,
    pub stalled: bool,
    pub accepted: bool,
    pub inner_iterations: usize,
    pub inner_residual: f64,
}

impl StepRecord {
    /// Required decrease `α‖D‖²/(2t)`.
    pub fn required_decrease(&self) -> f64 {
        self.alpha * self.direction_norm * self.direction_norm / (2.0 * self.t)
    }
}

/// Iterate state of the outer loop.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub projections: Vec<DMatrix<f64>>,
    pub iteration: usize,
    /// Objective after initialization and after every sweep.
    pub objective_trace: Vec<f64>,
    /// `max_p ‖D_p‖_F` of every sweep.
    pub direction_norms: Vec<f64>,
    /// `max_p ‖H_pᵀ M_p H_p − I‖_F` after initialization and every sweep.
    pub feasibility_trace: Vec<f64>,
    /// `‖D_p‖_F` of the latest sweep.
    pub last_norms: Vec<f64>,
    pub steps: Vec<StepRecord>,
}

impl SolverState {
    /// Largest most-recent direction norm; zero means every view is stationary.
    pub fn stationarity(&self) -> f64 {
        stationarity(&self.last_norms)
    }
}

/// `max_p ‖D_p‖_F`.
pub fn stationarity(norms: &[f64]) -> f64 {
    norms.iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub projections: ProjectionSet,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_terms: ObjectiveTerms,
    pub final_stationarity: f64,
    pub wall_time: Duration,
    pub state: SolverState,
}

impl FitResult {
    pub fn summary(&self) -> FitSummary {
        FitSummary {
            converged: self.converged,
            iterations: self.iterations,
            final_objective: self.final_objective,
            final_terms: self.final_terms,
            final_stationarity: self.final_stationarity,
            objective_trace: self.state.objective_trace.clone(),
            direction_norms: self.state.direction_norms.clone(),
            projections: self
                .projections
                .views()
                .iter()
                .map(|h| h.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

/// Serializable digest of a [`FitResult`] without timings. Projections are
/// stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_terms: ObjectiveTerms,
    pub final_stationarity: f64,
    pub objective_trace: Vec<f64>,
    pub direction_norms: Vec<f64>,
    pub projections: Vec<Vec<Vec<f64>>>,
}

/// Initial feasible projections, view `p` seeded with `seed + p`.
pub fn initialize(problem: &Problem) -> Result<Vec<DMatrix<f64>>> {
    let cfg = problem.config();
    problem
        .metrics
        .iter()
        .enumerate()
        .map(|(p, metric)| {
            random_point(metric.dim(), cfg.r, metric, cfg.seed.wrapping_add(p as u64), cfg.init)
                .map(StiefelPoint::into_matrix)
                .map_err(|e| e.in_view(p))
        })
        .collect()
}

fn max_feasibility(problem: &Problem, hs: &[DMatrix<f64>]) -> f64 {
    hs.iter()
        .zip(&problem.metrics)
        .map(|(h, m)| m.feasibility(h))
        .fold(0.0, f64::max)
}

/// Runs the alternating solver on the views of `dataset`.
pub fn fit(dataset: &MultiViewDataset, cfg: &ProblemConfig) -> Result<FitResult> {
    fit_views(dataset.views(), cfg)
}

pub fn fit_views(views: &[DMatrix<f64>], cfg: &ProblemConfig) -> Result<FitResult> {
    let start = Instant::now();
    let problem = Problem::new(views, cfg)?;
    let init = initialize(&problem)?;
    let mut result = run(&problem, init)?;
    result.wall_time = start.elapsed();
    Ok(result)
}

struct Direction {
    d: DMatrix<f64>,
    t: f64,
    inner_iterations: usize,
    inner_residual: f64,
}

fn manifold_direction(
    problem: &Problem,
    h: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    p: usize,
) -> Result<Direction> {
    let cfg = problem.config();
    let mut t = cfg.t;
    let mut best: Option<Direction> = None;
    for attempt in 0..=INNER_RETRIES {
        let spec = SubproblemSpec::new(h, grad, &problem.metrics[p], t, problem.lambda[p])?;
        let sol = solve_subproblem(&spec);
        let candidate = Direction {
            d: sol.d,
            t,
            inner_iterations: sol.iterations,
            inner_residual: sol.residual,
        };
        if sol.converged {
            return Ok(candidate);
        }
        log::debug!(
            "view {p}: inner solver stopped at residual {:.3e} (t = {t:e}, attempt {attempt})",
            sol.residual
        );
        if best
            .as_ref()
            .is_none_or(|b| candidate.inner_residual < b.inner_residual)
        {
            best = Some(candidate);
        }
        t *= 0.1;
    }
    Ok(best.expect("at least one attempt"))
}

/// Runs the outer loop from the given starting projections.
pub fn run(problem: &Problem, init: Vec<DMatrix<f64>>) -> Result<FitResult> {
    let start = Instant::now();
    let cfg = problem.config().clone();
    problem.check_shapes(&init)?;
    let m = problem.n_views();
    let mut hs = init;
    let mut state = SolverState {
        objective_trace: vec![problem.terms_unchecked(&hs).total()],
        feasibility_trace: vec![max_feasibility(problem, &hs)],
        projections: Vec::new(),
        iteration: 0,
        direction_norms: Vec::new(),
        last_norms: Vec::new(),
        steps: Vec::new(),
    };
    let mut converged = false;

    for k in 0..cfg.max_iter {
        state.iteration = k + 1;
        let mut norms = Vec::with_capacity(m);
        for p in 0..m {
            let grad = problem.euclidean_grad(&hs, p)?;
            let dir = if cfg.ablation.orthogonality {
                manifold_direction(problem, &hs[p], &grad, p)?
            } else {
                let b = &hs[p] - &grad * cfg.t;
                Direction {
                    d: shrink_rows(&b, cfg.t * problem.lambda[p]) - &hs[p],
                    t: cfg.t,
                    inner_iterations: 0,
                    inner_residual: 0.0,
                }
            };
            let dnorm = dir.d.norm();
            norms.push(dnorm);
            if dnorm == 0.0 {
                continue;
            }
            let view_obj = problem.view_objective(&hs, p).map_err(|e| e.in_view(p))?;
            let f0 = view_obj.value(&hs[p], cfg.line_search);
            let metric = &problem.metrics[p];
            let current = hs[p].clone();
            let outcome = line_search(
                f0,
                dnorm * dnorm,
                dir.t,
                cfg.gamma,
                |alpha| {
                    let step = &dir.d * alpha;
                    if cfg.ablation.orthogonality {
                        let point = StiefelPoint::new(current.clone(), metric).ok()?;
                        retract(&point, &step, metric).ok().map(StiefelPoint::into_matrix)
                    } else {
                        let next = &current + step;
                        next.iter().all(|v| v.is_finite()).then_some(next)
                    }
                },
                |h| view_obj.value(h, cfg.line_search),
            );
            let accepted = match (&outcome.point, outcome.stalled) {
                (Some(_), false) => true,
                (Some(_), true) => outcome.value <= f0,
                (None, _) => false,
            };
            if outcome.stalled {
                log::debug!("view {p}: line search stalled at iteration {k}");
            }
            state.steps.push(StepRecord {
                iteration: k,
                view: p,
                alpha: outcome.alpha,
                direction_norm: dnorm,
                t: dir.t,
                before: f0,
                after: if accepted { outcome.value } else { f0 },
                stalled: outcome.stalled,
                accepted,
                inner_iterations: dir.inner_iterations,
                inner_residual: dir.inner_residual,
            });
            if accepted {
                hs[p] = outcome.point.expect("accepted step has a point");
            }
        }
        let sweep = stationarity(&norms);
        state.direction_norms.push(sweep);
        state.last_norms = norms;
        state.objective_trace.push(problem.terms_unchecked(&hs).total());
        state.feasibility_trace.push(max_feasibility(problem, &hs));
        log::trace!(
            "iteration {k}: objective {:.12e}, stationarity {sweep:.3e}",
            state.objective_trace.last().unwrap()
        );
        if sweep <= cfg.tol {
            converged = true;
            break;
        }
    }

    let final_terms = problem.terms_unchecked(&hs);
    state.projections = hs.clone();
    Ok(FitResult {
        projections: ProjectionSet::new(hs)?,
        converged,
        iterations: state.iteration,
        final_objective: final_terms.total(),
        final_terms,
        final_stationarity: state.stationarity(),
        wall_time: start.elapsed(),
        state,
    })
}
