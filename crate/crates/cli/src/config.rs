//! Run configuration file: a flat TOML table, every key optional.

use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use stcca::eval::EvalConfig;
use stcca::graph::{GraphConfig, GraphMethod, MultiOrderConfig};
use stcca::manifold::InitStrategy;
use stcca::solver::{Ablation, LineSearchTarget, ProblemConfig};

/// A single value or one value per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerView {
    One(f64),
    Many(Vec<f64>),
}

impl PerView {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: PerView,
    pub r: usize,
    pub t: f64,
    pub gamma: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub init: InitStrategy,
    pub line_search: LineSearchTarget,

    pub graph_method: GraphMethod,
    pub k: usize,
    pub sigma: Option<f64>,
    /// Maximum graph order `l`.
    pub order: usize,
    /// Decay of the geometric order weights.
    pub rho: f64,
    /// Explicit order weights; overrides `order` and `rho`.
    pub order_weights: Option<Vec<f64>>,

    pub sparsity: bool,
    pub laplacian: bool,
    pub orthogonality: bool,

    pub repeats: usize,
    pub test_ratio: f64,
    pub knn_k: usize,
    /// Per-view PCA dimension cap; 0 disables PCA (features are only centered).
    pub pca_dim: usize,
    /// Noise standard deviation in units of the per-feature standard deviation.
    pub noise_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let problem = ProblemConfig::default();
        let eval = EvalConfig::default();
        Self {
            lambda: PerView::One(problem.lambda[0]),
            r: problem.r,
            t: problem.t,
            gamma: problem.gamma,
            max_iter: problem.max_iter,
            tol: problem.tol,
            seed: 0,
            init: problem.init,
            line_search: problem.line_search,
            graph_method: problem.graph.method,
            k: problem.graph.k,
            sigma: None,
            order: problem.graph.orders.order(),
            rho: 0.5,
            order_weights: None,
            sparsity: true,
            laplacian: true,
            orthogonality: true,
            repeats: eval.repeats,
            test_ratio: eval.test_ratio,
            knn_k: eval.knn_k,
            pca_dim: eval.pca_dim.unwrap_or(0),
            noise_sigma: 1.0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: Self =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn orders(&self) -> stcca::Result<MultiOrderConfig> {
        match &self.order_weights {
            Some(w) => MultiOrderConfig::new(w.clone()),
            None => MultiOrderConfig::geometric(self.order, self.rho),
        }
    }

    pub fn problem(&self) -> stcca::Result<ProblemConfig> {
        Ok(ProblemConfig {
            lambda: self.lambda.to_vec(),
            graph: GraphConfig {
                method: self.graph_method,
                k: self.k,
                sigma: self.sigma,
                orders: self.orders()?,
            },
            r: self.r,
            t: self.t,
            gamma: self.gamma,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
            init: self.init,
            ablation: Ablation {
                sparsity: self.sparsity,
                laplacian: self.laplacian,
                orthogonality: self.orthogonality,
            },
            line_search: self.line_search,
        })
    }

    pub fn eval(&self) -> EvalConfig {
        EvalConfig {
            repeats: self.repeats,
            test_ratio: self.test_ratio,
            knn_k: self.knn_k,
            pca_dim: (self.pca_dim > 0).then_some(self.pca_dim),
            seed: self.seed,
        }
    }

    /// Every schema violation, so they can be reported together.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.problem() {
            Ok(p) => {
                if let Err(e) = p.validate() {
                    out.push(e.to_string());
                }
            }
            Err(e) => out.push(e.to_string()),
        }
        if let Err(e) = self.eval().validate() {
            out.push(e.to_string());
        }
        if !(self.noise_sigma > 0.0) {
            out.push(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        out
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let v = self.violations();
        if !v.is_empty() {
            bail!("invalid configuration: {}", v.join("; "));
        }
        Ok(())
    }
}
