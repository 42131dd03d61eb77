//! Seeded synthetic multi-view datasets.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewDataset;
use crate::error::{Error, Result};

/// Views that share a low-dimensional latent variable with class-dependent
/// means: `x_p = A_p u + noise`, `u = μ_c + ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub dims: Vec<usize>,
    pub latent_dim: usize,
    /// Spread of the class means in latent space.
    pub separation: f64,
    pub latent_noise: f64,
    pub view_noise: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            per_class: 100,
            dims: vec![10, 10, 10],
            latent_dim: 3,
            separation: 3.0,
            latent_noise: 1.0,
            view_noise: 0.5,
            seed: 0,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn check_shape(n_classes: usize, per_class: usize, dims: &[usize]) -> Result<()> {
    if n_classes == 0 || per_class == 0 || dims.is_empty() || dims.contains(&0) {
        return Err(Error::Parameter("synthetic shape has a zero extent".into()));
    }
    Ok(())
}

fn labels(n_classes: usize, per_class: usize) -> Vec<usize> {
    (0..n_classes * per_class).map(|i| i / per_class).collect()
}

/// Random linear maps of a latent matrix (columns are samples) plus noise.
fn embed(latent: &DMatrix<f64>, dims: &[usize], noise: f64, rng: &mut ChaCha8Rng) -> Vec<DMatrix<f64>> {
    let k = latent.nrows();
    dims.iter()
        .map(|&d| {
            let a = DMatrix::from_fn(d, k, |_, _| normal(rng) / (k as f64).sqrt());
            let mut x = a * latent;
            x.apply(|v| *v += noise * normal(rng));
            x
        })
        .collect()
}

pub fn latent_blobs(spec: &BlobSpec) -> Result<MultiViewDataset> {
    check_shape(spec.n_classes, spec.per_class, &spec.dims)?;
    if spec.latent_dim == 0 {
        return Err(Error::Parameter("latent_dim must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means: Vec<DVector<f64>> = (0..spec.n_classes)
        .map(|_| DVector::from_fn(spec.latent_dim, |_, _| spec.separation * normal(&mut rng)))
        .collect();
    let n = spec.n_classes * spec.per_class;
    let labels = labels(spec.n_classes, spec.per_class);
    let latent = DMatrix::from_fn(spec.latent_dim, n, |i, j| {
        means[labels[j]][i] + spec.latent_noise * normal(&mut rng)
    });
    let views = embed(&latent, &spec.dims, spec.view_noise, &mut rng);
    MultiViewDataset::new(views, labels)
}

/// Classes on parallel noisy arcs of a 2-D latent sheet, embedded linearly in
/// each view together with `distractors` pure-noise features. Classes are
/// close in Euclidean terms but separated along the arc structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub n_classes: usize,
    pub per_class: usize,
    /// Informative features per view.
    pub dims: Vec<usize>,
    pub distractors: usize,
    /// Gap between neighbouring arcs.
    pub gap: f64,
    pub arc_noise: f64,
    pub view_noise: f64,
    pub seed: u64,
}

impl Default for ArcSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            per_class: 60,
            dims: vec![8, 8, 8],
            distractors: 4,
            gap: 0.6,
            arc_noise: 0.08,
            view_noise: 0.05,
            seed: 0,
        }
    }
}

pub fn manifold_arcs(spec: &ArcSpec) -> Result<MultiViewDataset> {
    check_shape(spec.n_classes, spec.per_class, &spec.dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_classes * spec.per_class;
    let labels = labels(spec.n_classes, spec.per_class);
    let mut latent = DMatrix::zeros(3, n);
    for j in 0..n {
        let c = labels[j] as f64;
        let s: f64 = rng.random_range(-2.0..2.0);
        latent[(0, j)] = s;
        latent[(1, j)] = c * spec.gap + 0.5 * s * s + spec.arc_noise * normal(&mut rng);
        latent[(2, j)] = (1.5 * s).sin() + spec.arc_noise * normal(&mut rng);
    }
    let informative = embed(&latent, &spec.dims, spec.view_noise, &mut rng);
    let views = informative
        .into_iter()
        .map(|x| {
            if spec.distractors == 0 {
                return x;
            }
            let extra = DMatrix::from_fn(spec.distractors, n, |_, _| normal(&mut rng));
            let mut full = DMatrix::zeros(x.nrows() + spec.distractors, n);
            full.rows_mut(0, x.nrows()).copy_from(&x);
            full.rows_mut(x.nrows(), spec.distractors).copy_from(&extra);
            full
        })
        .collect();
    MultiViewDataset::new(views, labels)
}

/// Centers every feature of every view.
pub fn centered(ds: &MultiViewDataset) -> MultiViewDataset {
    ds.map_views(|_, x| {
        let mut out = x.clone();
        for mut row in out.row_iter_mut() {
            let mean = row.mean();
            row.add_scalar_mut(-mean);
        }
        out
    })
}
