//! Evaluation protocol: PCA preprocessing, projection, KNN classification,
//! metrics, repeated stratified splits, noise injection and timing.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};
use crate::manifold::fix_column_signs;
use crate::solver::{fit_views, ProblemConfig, ProjectionSet};

/// Principal directions of a `d × N` matrix (columns are samples).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    components: DMatrix<f64>,
    variances: DVector<f64>,
    total_variance: f64,
}

impl PcaModel {
    pub fn fit(x: &DMatrix<f64>, target_dim: usize) -> Result<Self> {
        let (d, n) = x.shape();
        if target_dim == 0 || target_dim > d.min(n) {
            return Err(Error::Parameter(format!(
                "PCA dimension {target_dim} outside [1, {}]",
                d.min(n)
            )));
        }
        let mean = x.column_mean();
        let mut xc = x.clone();
        for mut col in xc.column_iter_mut() {
            col -= &mean;
        }
        let total_variance = xc.norm_squared() / n as f64;
        let (mut components, variances) = if d <= n {
            let cov = (&xc * xc.transpose()) / n as f64;
            let (vecs, vals) = sorted_eigen(cov, target_dim);
            (vecs, vals)
        } else {
            // Gram trick: eigenvectors of XᵀX/N mapped back through X
            let gram = (xc.transpose() * &xc) / n as f64;
            let (vecs, vals) = sorted_eigen(gram, target_dim);
            let mut u = &xc * vecs;
            for (j, mut col) in u.column_iter_mut().enumerate() {
                let norm = col.norm();
                if norm > 0.0 {
                    col /= norm;
                } else {
                    col.fill(0.0);
                    col[j.min(d - 1)] = 1.0;
                }
            }
            (u, vals)
        };
        fix_column_signs(&mut components);
        Ok(Self {
            mean,
            components,
            variances,
            total_variance,
        })
    }

    /// `target_dim × N` scores of `x` (centered with the fitted mean).
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.mean.len() {
            return Err(Error::Dimension(format!(
                "PCA fitted on {} features, got {}",
                self.mean.len(),
                x.nrows()
            )));
        }
        let mut xc = x.clone();
        for mut col in xc.column_iter_mut() {
            col -= &self.mean;
        }
        Ok(self.components.transpose() * xc)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `d × target_dim`, orthonormal columns.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Variance along each component, descending.
    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn explained_variance_ratio(&self) -> f64 {
        if self.total_variance > 0.0 {
            self.variances.sum() / self.total_variance
        } else {
            1.0
        }
    }
}

fn sorted_eigen(a: DMatrix<f64>, k: usize) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    order.truncate(k);
    let vecs = DMatrix::from_columns(
        &order.iter().map(|&i| eig.eigenvectors.column(i)).collect::<Vec<_>>(),
    );
    let vals = DVector::from_iterator(k, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    (vecs, vals)
}

/// Centers the rows of `x` and projects onto its top `target_dim` principal
/// directions.
pub fn pca_reduce(x: &DMatrix<f64>, target_dim: usize) -> Result<DMatrix<f64>> {
    PcaModel::fit(x, target_dim)?.transform(x)
}

/// `[X_1ᵀH_1, …, X_mᵀH_m]`, an `N × (m·r)` sample-per-row matrix.
pub fn project(views: &[DMatrix<f64>], projections: &ProjectionSet) -> Result<DMatrix<f64>> {
    let hs = projections.views();
    if hs.len() != views.len() {
        return Err(Error::Dimension(format!(
            "{} projections for {} views",
            hs.len(),
            views.len()
        )));
    }
    let n = views[0].ncols();
    let r = projections.rank();
    let mut z = DMatrix::zeros(n, views.len() * r);
    for (p, (x, h)) in views.iter().zip(hs).enumerate() {
        if x.nrows() != h.nrows() || x.ncols() != n {
            return Err(Error::Dimension(format!(
                "view {p} is {}x{}, projection has {} rows",
                x.nrows(),
                x.ncols(),
                h.nrows()
            )));
        }
        z.columns_mut(p * r, r).copy_from(&(x.transpose() * h));
    }
    Ok(z)
}

/// Euclidean k-nearest-neighbour vote. Rows are samples. Ties go to the class
/// with the smaller summed distance, then to the smaller label.
pub fn knn_classify(
    train_z: &DMatrix<f64>,
    train_labels: &[usize],
    test_z: &DMatrix<f64>,
    k: usize,
) -> Result<Vec<usize>> {
    let n = train_z.nrows();
    if n == 0 {
        return Err(Error::Parameter("empty training set".into()));
    }
    if train_labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} rows", train_labels.len())));
    }
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k = {k} with {n} training samples")));
    }
    if test_z.ncols() != train_z.ncols() {
        return Err(Error::Dimension(format!(
            "train has {} features, test has {}",
            train_z.ncols(),
            test_z.ncols()
        )));
    }
    let n_classes = train_labels.iter().max().map_or(0, |&c| c + 1);
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(test_z.nrows());
    for t in 0..test_z.nrows() {
        let row = test_z.row(t);
        dist.clear();
        dist.extend((0..n).map(|i| ((train_z.row(i) - row).norm(), i)));
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![(0usize, 0.0f64); n_classes];
        for &(dd, i) in &dist[..k] {
            votes[train_labels[i]].0 += 1;
            votes[train_labels[i]].1 += dd;
        }
        let best = (0..n_classes)
            .filter(|&c| votes[c].0 > 0)
            .min_by(|&a, &b| {
                votes[b].0
                    .cmp(&votes[a].0)
                    .then(votes[a].1.total_cmp(&votes[b].1))
                    .then(a.cmp(&b))
            })
            .expect("k >= 1 gives at least one vote");
        out.push(best);
    }
    Ok(out)
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Unweighted mean of per-class `2TP / (2TP + FP + FN)` over classes
/// `0..=max label`; a class absent from both sequences scores 1.
pub fn f1_macro(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let c = pred.iter().chain(truth).max().map_or(0, |&c| c + 1);
    if c == 0 {
        return Ok(1.0);
    }
    let mut tp = vec![0usize; c];
    let mut fp = vec![0usize; c];
    let mut fnn = vec![0usize; c];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let sum: f64 = (0..c)
        .map(|i| {
            let den = 2 * tp[i] + fp[i] + fnn[i];
            if den == 0 {
                1.0
            } else {
                2.0 * tp[i] as f64 / den as f64
            }
        })
        .sum();
    Ok(sum / c as f64)
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Train and test indices, both ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per class, `round(n_c · test_ratio)` samples (clamped to `[1, n_c − 1]`)
/// go to the test set.
pub fn stratified_split<R: Rng>(labels: &[usize], test_ratio: f64, rng: &mut R) -> Result<Split> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::Parameter(format!("test ratio {test_ratio} outside (0, 1)")));
    }
    let c = labels.iter().max().map_or(0, |&c| c + 1);
    let mut by_class = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for (class, mut idx) in by_class.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            return Err(Error::Dataset(format!(
                "class {class} has {} sample; stratification needs 2",
                idx.len()
            )));
        }
        idx.shuffle(rng);
        let n_test = ((idx.len() as f64 * test_ratio).round() as usize).clamp(1, idx.len() - 1);
        split.test.extend_from_slice(&idx[..n_test]);
        split.train.extend_from_slice(&idx[n_test..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub repeats: usize,
    pub test_ratio: f64,
    /// Neighbours in the KNN vote.
    pub knn_k: usize,
    /// Per-view PCA dimension cap; `None` only centers.
    pub pca_dim: Option<usize>,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            test_ratio: 0.3,
            knn_k: 5,
            pca_dim: Some(20),
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if !(self.test_ratio > 0.0 && self.test_ratio < 1.0) {
            return Err(Error::Config(format!("test_ratio {} outside (0, 1)", self.test_ratio)));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be at least 1".into()));
        }
        if self.pca_dim == Some(0) {
            return Err(Error::Config("pca_dim must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub accuracy: Vec<f64>,
    pub f1: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_f1: f64,
    pub std_f1: f64,
    pub problem: Option<ProblemConfig>,
    pub eval: EvalConfig,
    /// Seconds per repeat. Not serialized, so summaries stay reproducible.
    #[serde(skip)]
    pub wall_times: Vec<f64>,
}

impl Report {
    fn from_repeats(
        accuracy: Vec<f64>,
        f1: Vec<f64>,
        wall_times: Vec<f64>,
        problem: Option<ProblemConfig>,
        eval: EvalConfig,
    ) -> Self {
        let (mean_accuracy, std_accuracy) = mean_std(&accuracy);
        let (mean_f1, std_f1) = mean_std(&f1);
        Self {
            accuracy,
            f1,
            mean_accuracy,
            std_accuracy,
            mean_f1,
            std_f1,
            problem,
            eval,
            wall_times,
        }
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-view PCA fitted on the train columns, applied to train and test.
pub fn preprocess(
    train: &MultiViewDataset,
    test: &MultiViewDataset,
    pca_dim: Option<usize>,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let mut tr = Vec::with_capacity(train.n_views());
    let mut te = Vec::with_capacity(train.n_views());
    for (p, (x, y)) in train.views().iter().zip(test.views()).enumerate() {
        let dim = pca_dim.unwrap_or(x.nrows()).min(x.nrows()).min(x.ncols());
        let model = PcaModel::fit(x, dim).map_err(|e| e.in_view(p))?;
        if pca_dim.is_some() {
            tr.push(model.transform(x)?);
            te.push(model.transform(y)?);
        } else {
            tr.push(center_with(x, model.mean()));
            te.push(center_with(y, model.mean()));
        }
    }
    Ok((tr, te))
}

fn center_with(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

fn split_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

/// One repeat: split, PCA on train, fit, project, classify.
pub fn evaluate_split(
    dataset: &MultiViewDataset,
    split: &Split,
    problem: &ProblemConfig,
    eval: &EvalConfig,
) -> Result<(f64, f64)> {
    let train = dataset.select(&split.train);
    let test = dataset.select(&split.test);
    let (xtr, xte) = preprocess(&train, &test, eval.pca_dim)?;
    let fit = fit_views(&xtr, problem)?;
    let ztr = project(&xtr, &fit.projections)?;
    let zte = project(&xte, &fit.projections)?;
    let pred = knn_classify(&ztr, train.labels(), &zte, eval.knn_k.min(split.train.len()))?;
    Ok((accuracy(&pred, test.labels())?, f1_macro(&pred, test.labels())?))
}

/// Repeated stratified evaluation of the full pipeline. Repeat `i` draws its
/// split from stream `i` of a generator seeded with `eval.seed`.
pub fn benchmark(
    dataset: &MultiViewDataset,
    problem: &ProblemConfig,
    eval: &EvalConfig,
) -> Result<Report> {
    benchmark_with(dataset, eval, Some(problem.clone()), |split| {
        evaluate_split(dataset, split, problem, eval)
    })
}

/// Plain baseline: per-view PCA on train, concatenated, KNN.
pub fn baseline_benchmark(dataset: &MultiViewDataset, eval: &EvalConfig) -> Result<Report> {
    benchmark_with(dataset, eval, None, |split| {
        let train = dataset.select(&split.train);
        let test = dataset.select(&split.test);
        let (xtr, xte) = preprocess(&train, &test, eval.pca_dim)?;
        let ztr = stack_rows(&xtr);
        let zte = stack_rows(&xte);
        let pred = knn_classify(&ztr, train.labels(), &zte, eval.knn_k.min(split.train.len()))?;
        Ok((accuracy(&pred, test.labels())?, f1_macro(&pred, test.labels())?))
    })
}

fn stack_rows(views: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = views[0].ncols();
    let d: usize = views.iter().map(|v| v.nrows()).sum();
    let mut out = DMatrix::zeros(n, d);
    let mut off = 0;
    for v in views {
        out.columns_mut(off, v.nrows()).copy_from(&v.transpose());
        off += v.nrows();
    }
    out
}

fn benchmark_with(
    dataset: &MultiViewDataset,
    eval: &EvalConfig,
    problem: Option<ProblemConfig>,
    mut run: impl FnMut(&Split) -> Result<(f64, f64)>,
) -> Result<Report> {
    eval.validate()?;
    let mut acc = Vec::with_capacity(eval.repeats);
    let mut f1 = Vec::with_capacity(eval.repeats);
    let mut times = Vec::with_capacity(eval.repeats);
    for i in 0..eval.repeats {
        let split = stratified_split(dataset.labels(), eval.test_ratio, &mut split_rng(eval.seed, i))?;
        let start = Instant::now();
        let (a, f) = run(&split)?;
        times.push(start.elapsed().as_secs_f64());
        log::debug!("repeat {i}: accuracy {a:.4}, macro-F1 {f:.4}");
        acc.push(a);
        f1.push(f);
    }
    Ok(Report::from_repeats(acc, f1, times, problem, eval.clone()))
}

/// Adds `N(0, (sigma · s_j)²)` noise to a uniformly drawn `fraction` of the
/// entries of every view, `s_j` the standard deviation of feature `j`.
pub fn inject_noise(
    dataset: &MultiViewDataset,
    fraction: f64,
    sigma: f64,
    seed: u64,
) -> Result<MultiViewDataset> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Parameter(format!("noise fraction {fraction} outside [0, 1]")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("noise sigma must be positive, got {sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(dataset.map_views(|_, x| {
        let mut out = x.clone();
        let total = x.len();
        let count = ((total as f64) * fraction).round() as usize;
        if count == 0 {
            return out;
        }
        let stds: Vec<f64> = (0..x.nrows())
            .map(|j| {
                let row = x.row(j);
                let mean = row.mean();
                let n = row.len() as f64;
                (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
            })
            .collect();
        let picked = rand::seq::index::sample(&mut rng, total, count);
        let mut picked: Vec<usize> = picked.into_vec();
        picked.sort_unstable();
        for idx in picked {
            let row = idx % x.nrows();
            let e: f64 = rng.sample(StandardNormal);
            out[idx] += sigma * stds[row] * e;
        }
        out
    }))
}

/// One fit per ratio on a stratified subsample; returns `(N_sub, seconds)`.
/// The fit runs on the (already preprocessed) views without PCA.
pub fn runtime_scaling(
    dataset: &MultiViewDataset,
    cfg: &ProblemConfig,
    ratios: &[f64],
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    let mut rows = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Parameter(format!("ratio {ratio} outside (0, 1]")));
        }
        let sub = if ratio == 1.0 {
            dataset.clone()
        } else {
            let split = stratified_split(dataset.labels(), ratio, &mut split_rng(seed, i))?;
            dataset.select(&split.test)
        };
        let start = Instant::now();
        fit_views(sub.views(), cfg)?;
        rows.push((sub.n_samples(), start.elapsed().as_secs_f64()));
    }
    Ok(rows)
}

/// Least-squares line `y = a + b x`; returns `(a, b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (a, b, r2)
}
