//! Per-view affinity graphs, their powers, and multi-order Laplacians.
//!
//! First-order graphs are stored sparsely (CSR) since every construction here
//! keeps at most `k` neighbors per sample. Powers are only ever formed densely
//! for inspection and export; the solver applies `L = S − Σ q_i Ŵ^i` through
//! repeated sparse products ([`LaplacianOperator`]), which keeps the cost per
//! application linear in the number of samples.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric, nonnegative affinity matrix with zero diagonal (CSR storage).
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl AffinityGraph {
    /// Builds `(W + Wᵀ)/2` from directed weighted edges. Self-loops are dropped.
    pub fn symmetrized(n: usize, directed: &[Vec<(usize, f64)>]) -> Result<Self> {
        if directed.len() != n {
            return Err(Error::Dimension(format!(
                "{} adjacency rows for {n} nodes",
                directed.len()
            )));
        }
        let mut triplets = Vec::with_capacity(2 * directed.iter().map(Vec::len).sum::<usize>());
        for (i, row) in directed.iter().enumerate() {
            for &(j, w) in row {
                if j >= n {
                    return Err(Error::Index(format!("edge ({i}, {j}) outside {n} nodes")));
                }
                if !(w >= 0.0) || !w.is_finite() {
                    return Err(Error::Data(format!("edge ({i}, {j}) has weight {w}")));
                }
                if i != j && w > 0.0 {
                    triplets.push((i, j, 0.5 * w));
                    triplets.push((j, i, 0.5 * w));
                }
            }
        }
        Ok(Self::from_triplets(n, triplets))
    }

    /// Sums duplicate entries.
    fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0; n + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, w) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += w;
            } else {
                indices.push(j);
                values.push(w);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    /// Validates and compresses a dense affinity matrix.
    pub fn from_dense(w: &DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::Dimension(format!("{}x{} affinity", w.nrows(), w.ncols())));
        }
        let n = w.nrows();
        let mut triplets = Vec::new();
        for i in 0..n {
            if w[(i, i)] != 0.0 {
                return Err(Error::Data(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = w[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Data(format!("entry ({i}, {j}) = {v}")));
                }
                if (v - w[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Data(format!("asymmetric at ({i}, {j})")));
                }
                if v > 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Ok(Self::from_triplets(n, triplets))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                w[(i, j)] = v;
            }
        }
        w
    }

    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()))
    }

    /// `D^{-1/2} W D^{-1/2}`; isolated nodes keep empty rows.
    pub fn normalized(&self) -> Self {
        let inv_sqrt: Vec<f64> = self
            .degrees()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut out = self.clone();
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] *= inv_sqrt[i] * inv_sqrt[self.indices[k]];
            }
        }
        out
    }

    /// `W Z` for a dense `N × c` block.
    pub fn mul_dense(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(z.nrows(), self.n, "row count must match node count");
        let mut out = DMatrix::zeros(self.n, z.ncols());
        for c in 0..z.ncols() {
            let src = z.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.n {
                let mut acc = 0.0;
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.values[k] * src[self.indices[k]];
                }
                dst[i] = acc;
            }
        }
        out
    }
}

/// Construction method for the first-order graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GraphMethod {
    #[default]
    Adaptive,
    Gaussian,
    Knn,
    Cosine,
}

impl std::str::FromStr for GraphMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "gaussian" => Ok(Self::Gaussian),
            "knn" => Ok(Self::Knn),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::Parameter(format!("unknown graph method {other:?}"))),
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if n < 2 || k == 0 || k > n - 1 {
        return Err(Error::Parameter(format!(
            "neighbor count k = {k} must lie in [1, {}] for {n} samples",
            n.saturating_sub(1)
        )));
    }
    Ok(())
}

fn squared_distance(x: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    x.column(i)
        .iter()
        .zip(x.column(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// For every sample, the `count` nearest other samples as `(index, squared
/// distance)`, ascending; equal distances are ordered by index.
pub(crate) fn nearest_neighbors(x: &DMatrix<f64>, count: usize) -> Vec<Vec<(usize, f64)>> {
    let n = x.ncols();
    let mut buf: Vec<(usize, f64)> = Vec::with_capacity(n);
    (0..n)
        .map(|i| {
            buf.clear();
            buf.extend((0..n).filter(|&j| j != i).map(|j| (j, squared_distance(x, i, j))));
            let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
            let count = count.min(buf.len());
            if count < buf.len() {
                buf.select_nth_unstable_by(count, cmp);
            }
            let mut near = buf[..count].to_vec();
            near.sort_by(cmp);
            near
        })
        .collect()
}

/// Directed adaptive-neighbor weights: each row is supported on the `k`
/// nearest samples and sums to one,
/// `w_ij = (d_{(k+1)} − d_ij) / (k d_{(k+1)} − Σ_{h≤k} d_{(h)})` with squared
/// distances `d`. A vanishing denominator, or `k = N − 1` (no `(k+1)`-th
/// neighbor), falls back to uniform weights `1/k`.
pub fn adaptive_neighbor_weights(x: &DMatrix<f64>, k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = x.ncols();
    check_k(n, k)?;
    let neighbors = nearest_neighbors(x, k + 1);
    Ok(neighbors
        .into_iter()
        .map(|near| {
            let uniform = || near[..k].iter().map(|&(j, _)| (j, 1.0 / k as f64)).collect();
            if near.len() <= k {
                return uniform();
            }
            let cutoff = near[k].1;
            let head: f64 = near[..k].iter().map(|&(_, d)| d).sum();
            let denom = k as f64 * cutoff - head;
            if !(denom > f64::EPSILON * k as f64 * cutoff) {
                return uniform();
            }
            near[..k]
                .iter()
                .map(|&(j, d)| (j, (cutoff - d) / denom))
                .filter(|&(_, w)| w > 0.0)
                .collect()
        })
        .collect())
}

pub fn adaptive_neighbor_graph(x: &DMatrix<f64>, k: usize) -> Result<AffinityGraph> {
    let rows = adaptive_neighbor_weights(x, k)?;
    AffinityGraph::symmetrized(x.ncols(), &rows)
}

/// Fixed-kernel graphs restricted to the `k` nearest neighbors.
///
/// * `Gaussian`: `exp(−‖x_i − x_j‖² / (2σ²))`; `sigma = None` uses the mean
///   Euclidean distance to the `k` nearest neighbors.
/// * `Knn`: binary mutual-neighbor graph (`i` and `j` each among the other's
///   `k` nearest).
/// * `Cosine`: `max(0, cos(x_i, x_j))`.
pub fn baseline_graph(
    x: &DMatrix<f64>,
    method: GraphMethod,
    k: usize,
    sigma: Option<f64>,
) -> Result<AffinityGraph> {
    let n = x.ncols();
    check_k(n, k)?;
    if let Some(s) = sigma {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Parameter(format!("gaussian sigma must be positive, got {s}")));
        }
    }
    let neighbors = nearest_neighbors(x, k);
    let directed: Vec<Vec<(usize, f64)>> = match method {
        GraphMethod::Adaptive => return adaptive_neighbor_graph(x, k),
        GraphMethod::Gaussian => {
            let sigma = sigma.unwrap_or_else(|| {
                let total: f64 = neighbors.iter().flatten().map(|&(_, d)| d.sqrt()).sum();
                let mean = total / (n * k) as f64;
                if mean > 0.0 {
                    mean
                } else {
                    1.0
                }
            });
            let scale = 1.0 / (2.0 * sigma * sigma);
            neighbors
                .iter()
                .map(|near| near.iter().map(|&(j, d)| (j, (-d * scale).exp())).collect())
                .collect()
        }
        GraphMethod::Knn => {
            let mut is_near = vec![std::collections::HashSet::new(); n];
            for (i, near) in neighbors.iter().enumerate() {
                is_near[i].extend(near.iter().map(|&(j, _)| j));
            }
            neighbors
                .iter()
                .enumerate()
                .map(|(i, near)| {
                    near.iter()
                        .filter(|&&(j, _)| is_near[j].contains(&i))
                        .map(|&(j, _)| (j, 1.0))
                        .collect()
                })
                .collect()
        }
        GraphMethod::Cosine => {
            let norms: Vec<f64> = (0..n).map(|i| x.column(i).norm()).collect();
            neighbors
                .iter()
                .enumerate()
                .map(|(i, near)| {
                    near.iter()
                        .map(|&(j, _)| {
                            let denom = norms[i] * norms[j];
                            let cos = if denom > 0.0 {
                                x.column(i).dot(&x.column(j)) / denom
                            } else {
                                0.0
                            };
                            (j, cos.max(0.0))
                        })
                        .collect()
                })
                .collect()
        }
    };
    AffinityGraph::symmetrized(n, &directed)
}

/// Maximum order and order weights of a multi-order graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOrderConfig {
    weights: Vec<f64>,
}

impl MultiOrderConfig {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let cfg = Self { weights };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `q_i ∝ rho^{i−1}`, normalized to sum to one.
    pub fn geometric(order: usize, rho: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("maximum order must be at least 1".into()));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::Config(format!("decay must be positive, got {rho}")));
        }
        let raw: Vec<f64> = (0..order).map(|i| rho.powi(i as i32)).collect();
        let total: f64 = raw.iter().sum();
        Self::new(raw.into_iter().map(|v| v / total).collect())
    }

    pub fn order(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::Config("maximum order must be at least 1".into()));
        }
        if let Some(q) = self.weights.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::Config(format!("order weight {q} outside [0, 1]")));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("order weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

impl Default for MultiOrderConfig {
    fn default() -> Self {
        Self::geometric(2, 0.5).expect("valid default")
    }
}

/// Full graph-construction recipe for one view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub method: GraphMethod,
    pub k: usize,
    pub sigma: Option<f64>,
    pub orders: MultiOrderConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            method: GraphMethod::Adaptive,
            k: 10,
            sigma: None,
            orders: MultiOrderConfig::default(),
        }
    }
}

/// First-order graph of the chosen method, symmetrically normalized. This is
/// the matrix whose powers enter the multi-order graph.
pub fn build_graph(x: &DMatrix<f64>, cfg: &GraphConfig) -> Result<AffinityGraph> {
    let k = cfg.k.min(x.ncols().saturating_sub(1));
    let w = match cfg.method {
        GraphMethod::Adaptive => adaptive_neighbor_graph(x, k)?,
        m => baseline_graph(x, m, k, cfg.sigma)?,
    };
    Ok(w.normalized())
}

/// Dense `W^h = W^{h−1} W`, with `W^1 = W`.
pub fn high_order(w: &AffinityGraph, h: usize) -> Result<DMatrix<f64>> {
    if h == 0 {
        return Err(Error::Parameter("graph order must be at least 1".into()));
    }
    let base = w.to_dense();
    let mut power = base.clone();
    for _ in 1..h {
        power = &power * &base;
    }
    Ok(power)
}

/// Dense multi-order graph `W^l = Σ q_i W^i` and its Laplacian `S − W^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiOrderLaplacian {
    pub w_multi: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
}

/// `L = S − W` with `S` the diagonal of row sums.
pub fn degree_laplacian(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = -w.clone();
    for i in 0..w.nrows() {
        l[(i, i)] += w.row(i).sum();
    }
    l
}

pub fn multi_order(w: &AffinityGraph, cfg: &MultiOrderConfig) -> Result<MultiOrderLaplacian> {
    cfg.validate()?;
    let base = w.to_dense();
    let mut power = base.clone();
    let mut w_multi = &base * cfg.weights[0];
    for &q in &cfg.weights[1..] {
        power = &power * &base;
        w_multi += &power * q;
    }
    // exact symmetry for the Laplacian
    let w_multi = (&w_multi + w_multi.transpose()) * 0.5;
    let laplacian = degree_laplacian(&w_multi);
    Ok(MultiOrderLaplacian { w_multi, laplacian })
}

/// Matrix-free `L = S − Σ_i q_i W^i` acting on `N × c` blocks.
#[derive(Debug, Clone)]
pub struct LaplacianOperator {
    graph: AffinityGraph,
    weights: Vec<f64>,
    degree: DVector<f64>,
}

impl LaplacianOperator {
    pub fn new(graph: AffinityGraph, cfg: &MultiOrderConfig) -> Result<Self> {
        cfg.validate()?;
        let ones = DMatrix::from_element(graph.n(), 1, 1.0);
        let mut op = Self {
            graph,
            weights: cfg.weights.clone(),
            degree: DVector::zeros(0),
        };
        op.degree = op.apply_multi(&ones).column(0).into_owned();
        Ok(op)
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// `W^l Z`.
    pub fn apply_multi(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut power = self.graph.mul_dense(z);
        let mut out = &power * self.weights[0];
        for &q in &self.weights[1..] {
            power = self.graph.mul_dense(&power);
            out += &power * q;
        }
        out
    }

    /// `L Z`.
    pub fn apply(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = -self.apply_multi(z);
        for c in 0..z.ncols() {
            for i in 0..z.nrows() {
                out[(i, c)] += self.degree[i] * z[(i, c)];
            }
        }
        out
    }

    /// `Tr(Zᵀ L Z)`.
    pub fn quadratic(&self, z: &DMatrix<f64>) -> f64 {
        z.dot(&self.apply(z))
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        Ok(multi_order(&self.graph, &MultiOrderConfig::new(self.weights.clone())?)?.laplacian)
    }
}
