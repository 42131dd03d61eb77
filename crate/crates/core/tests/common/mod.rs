//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stcca::graph::{build_graph, GraphConfig, GraphMethod, MultiOrderConfig};
use stcca::solver::{Ablation, ProblemConfig};
use stcca::synthetic::{centered, latent_blobs, manifold_arcs, ArcSpec, BlobSpec};
use stcca::MultiViewDataset;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn centered_rows(mut x: DMatrix<f64>) -> DMatrix<f64> {
    for mut row in x.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    x
}

/// Dense multi-order Laplacian built from scratch: powers of the normalized
/// first-order graph, symmetrized, `S − W`.
pub fn dense_laplacian(x: &DMatrix<f64>, cfg: &GraphConfig) -> DMatrix<f64> {
    let w = build_graph(x, cfg).unwrap().to_dense();
    let mut power = DMatrix::identity(w.nrows(), w.nrows());
    let mut wl = DMatrix::zeros(w.nrows(), w.nrows());
    for &q in cfg.orders.weights() {
        power = &power * &w;
        wl += &power * q;
    }
    let wl = (&wl + wl.transpose()) * 0.5;
    let mut l = -wl.clone();
    for i in 0..wl.nrows() {
        l[(i, i)] += wl.row(i).sum();
    }
    l
}

/// Smooth objective `F` assembled sample by sample:
/// `−½ (1/N²) Σ_{n,n'} Π_p ⟨z_pn, z_pn'⟩ + Σ_p Tr(Z_pᵀ L_p Z_p)`.
pub fn smooth_objective(
    xs: &[DMatrix<f64>],
    hs: &[DMatrix<f64>],
    laplacians: Option<&[DMatrix<f64>]>,
) -> f64 {
    let n = xs[0].ncols();
    let zs: Vec<_> = xs.iter().zip(hs).map(|(x, h)| x.transpose() * h).collect();
    let mut s = 0.0;
    for a in 0..n {
        for b in 0..n {
            s += zs.iter().map(|z| z.row(a).dot(&z.row(b))).product::<f64>();
        }
    }
    let mut f = -0.5 * s / (n * n) as f64;
    if let Some(ls) = laplacians {
        for (z, l) in zs.iter().zip(ls) {
            f += (z.transpose() * l * z).trace();
        }
    }
    f
}

/// Central differences of [`smooth_objective`] with respect to `H_p`.
pub fn fd_gradient(
    xs: &[DMatrix<f64>],
    hs: &[DMatrix<f64>],
    laplacians: Option<&[DMatrix<f64>]>,
    p: usize,
    step: f64,
) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(hs[p].nrows(), hs[p].ncols());
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let mut plus = hs.to_vec();
            plus[p][(i, j)] += step;
            let mut minus = hs.to_vec();
            minus[p][(i, j)] -= step;
            g[(i, j)] = (smooth_objective(xs, &plus, laplacians)
                - smooth_objective(xs, &minus, laplacians))
                / (2.0 * step);
        }
    }
    g
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - phi * (hi - lo);
    let mut b = lo + phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// Row-wise numeric minimizer of `½‖y − x‖² + β‖y‖`. The minimizer of each
/// row lies on the ray through `x_i` (any orthogonal component only adds to
/// both terms), so a scalar search along the ray suffices.
pub fn prox_numeric(x: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        let row = x.row(i);
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let s = golden_section(|s| 0.5 * (s - norm).powi(2) + beta * s.abs(), -1.0, norm + 1.0, 1e-12);
        let s = if s.abs() < 1e-10 { 0.0 } else { s };
        y.set_row(i, &(row * (s / norm)));
    }
    y
}

/// Multiplier of the smooth (λ = 0) subproblem from the Lyapunov equation
/// `ΛK + KΛ = S/2`, `K = HᵀM²H`, `S = GᵀMH + HᵀMG`; returns `(D, Λ)`.
pub fn lyapunov_direction(
    h: &DMatrix<f64>,
    grad: &DMatrix<f64>,
    m: &DMatrix<f64>,
    t: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mh = m * h;
    let k = mh.transpose() * &mh;
    let s = grad.transpose() * &mh + mh.transpose() * grad;
    let eig = SymmetricEigen::new((&k + k.transpose()) * 0.5);
    let v = &eig.eigenvectors;
    let st = v.transpose() * s * v;
    let r = h.ncols();
    let lt = DMatrix::from_fn(r, r, |i, j| {
        0.5 * st[(i, j)] / (eig.eigenvalues[i] + eig.eigenvalues[j])
    });
    let lam = v * lt * v.transpose();
    let d = -(grad - &mh * &lam * 2.0) * t;
    (d, lam)
}

/// Three views, two classes of twenty, six features each, centered.
pub fn convergence_instance() -> MultiViewDataset {
    centered(
        &latent_blobs(&BlobSpec {
            n_classes: 2,
            per_class: 20,
            dims: vec![6, 6, 6],
            latent_dim: 2,
            seed: 11,
            ..BlobSpec::default()
        })
        .unwrap(),
    )
}

pub fn convergence_config() -> ProblemConfig {
    ProblemConfig {
        lambda: vec![1e-3],
        r: 2,
        t: 1e-2,
        max_iter: 500,
        tol: 1e-6,
        graph: GraphConfig {
            orders: MultiOrderConfig::geometric(2, 0.5).unwrap(),
            ..GraphConfig::default()
        },
        ..ProblemConfig::default()
    }
}

/// Three classes of 100, three 10-feature views sharing a 3-D latent space.
pub fn blob_dataset() -> MultiViewDataset {
    latent_blobs(&BlobSpec::default()).unwrap()
}

pub fn arc_dataset() -> MultiViewDataset {
    manifold_arcs(&ArcSpec::default()).unwrap()
}

pub const METHODS: [GraphMethod; 4] = [
    GraphMethod::Adaptive,
    GraphMethod::Gaussian,
    GraphMethod::Knn,
    GraphMethod::Cosine,
];

pub const CASES: [(&str, Ablation); 3] = [
    ("no orthogonality", Ablation::NO_ORTHOGONALITY),
    ("no sparsity", Ablation::NO_SPARSITY),
    ("no laplacian", Ablation::NO_LAPLACIAN),
];

/// Smallest eigenvalue and largest absolute row sum.
pub fn laplacian_checks(l: &DMatrix<f64>) -> (f64, f64) {
    let min_eig = SymmetricEigen::new((l + l.transpose()) * 0.5)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let max_row = (0..l.nrows()).map(|i| l.row(i).sum().abs()).fold(0.0, f64::max);
    (min_eig, max_row)
}
