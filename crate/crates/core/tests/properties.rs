mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

use stcca::graph::{build_graph, multi_order, GraphConfig, GraphMethod, MultiOrderConfig};
use stcca::manifold::{m_orthonormalize, retract, ViewMetric};
use stcca::prox::{l21_norm, prox_l21};
use stcca::tensor::{covariance_tensor, DenseTensor};

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..4, 2..5)
}

fn tensor() -> impl Strategy<Value = DenseTensor> {
    shape().prop_flat_map(|s| {
        let len: usize = s.iter().product();
        prop::collection::vec(-5.0..5.0f64, len)
            .prop_map(move |data| DenseTensor::new(s.clone(), data).unwrap())
    })
}

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0..3.0f64, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

fn method() -> impl Strategy<Value = GraphMethod> {
    prop::sample::select(vec![
        GraphMethod::Adaptive,
        GraphMethod::Gaussian,
        GraphMethod::Knn,
        GraphMethod::Cosine,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfold_then_fold_is_identity(t in tensor(), mode in 0usize..4) {
        let mode = mode % t.order();
        let back = DenseTensor::fold(&t.unfold(mode).unwrap(), mode, t.shape()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn norm_is_preserved_by_unfolding(t in tensor(), mode in 0usize..4) {
        let mode = mode % t.order();
        let u = t.unfold(mode).unwrap();
        prop_assert!((u.norm_squared() - t.frobenius_norm_sq()).abs() <= 1e-10 * t.frobenius_norm_sq().max(1.0));
    }

    #[test]
    fn mode_products_on_distinct_modes_commute(t in tensor(), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let a = common::uniform(2, t.shape()[0], &mut rng);
        let b = common::uniform(3, t.shape()[1], &mut rng);
        let ab = t.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
        let ba = t.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
        prop_assert_eq!(ab.shape(), ba.shape());
        for (x, y) in ab.data().iter().zip(ba.data()) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn same_mode_products_compose(t in tensor(), seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let a = common::uniform(3, t.shape()[0], &mut rng);
        let b = common::uniform(2, 3, &mut rng);
        let twice = t.mode_product(&a, 0).unwrap().mode_product(&b, 0).unwrap();
        let once = t.mode_product(&(&b * &a), 0).unwrap();
        for (x, y) in twice.data().iter().zip(once.data()) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn covariance_permutes_with_views(n in 1usize..6, seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let a = common::uniform(2, n, &mut rng);
        let b = common::uniform(3, n, &mut rng);
        let ab = covariance_tensor(&[a.clone(), b.clone()]).unwrap();
        let ba = covariance_tensor(&[b, a]).unwrap();
        // swapping two views transposes the two-way tensor
        prop_assert!((ab.unfold(0).unwrap() - ba.unfold(0).unwrap().transpose()).norm() < 1e-12);
    }

    #[test]
    fn prox_is_nonexpansive(x in matrix(6, 4), beta in 0.01..2.0f64, seed in 0u64..1000) {
        let mut rng = common::rng(seed);
        let y = &x + common::uniform(x.nrows(), x.ncols(), &mut rng);
        let px = prox_l21(&x, beta).unwrap();
        let py = prox_l21(&y, beta).unwrap();
        prop_assert!((&px - &py).norm() <= (&x - &y).norm() + 1e-12);
    }

    #[test]
    fn prox_support_and_norm(x in matrix(6, 4), beta in 0.01..2.0f64) {
        let y = prox_l21(&x, beta).unwrap();
        for i in 0..x.nrows() {
            let nx = x.row(i).norm();
            let ny = y.row(i).norm();
            if nx <= beta {
                prop_assert_eq!(ny, 0.0);
            } else {
                prop_assert!((ny - (nx - beta)).abs() < 1e-12);
            }
        }
        prop_assert!(l21_norm(&y) <= l21_norm(&x));
    }

    #[test]
    fn prox_tends_to_identity(x in matrix(5, 3)) {
        let y = prox_l21(&x, 1e-12).unwrap();
        prop_assert!((y - &x).amax() <= 1e-11);
    }

    #[test]
    fn laplacians_are_psd_with_zero_rows(method in method(), order in 1usize..6, seed in 0u64..500) {
        let mut rng = common::rng(seed);
        let x = common::uniform(3, 20, &mut rng);
        let cfg = GraphConfig { method, k: 4, ..GraphConfig::default() };
        let w = build_graph(&x, &cfg).unwrap();
        let dense = w.to_dense();
        prop_assert!((&dense - dense.transpose()).amax() < 1e-14);
        prop_assert!(dense.iter().all(|&v| v >= 0.0));
        // normalized adjacency has spectral radius at most one
        let radius = SymmetricEigen::new(dense).eigenvalues.amax();
        prop_assert!(radius <= 1.0 + 1e-10);
        let lap = multi_order(&w, &MultiOrderConfig::geometric(order, 0.5).unwrap()).unwrap().laplacian;
        let (min_eig, max_row) = common::laplacian_checks(&lap);
        prop_assert!(min_eig >= -1e-10);
        prop_assert!(max_row <= 1e-10);
    }

    #[test]
    fn retraction_stays_feasible(seed in 0u64..500, scale in 0.0..3.0f64) {
        let mut rng = common::rng(seed);
        let x = common::uniform(5, 15, &mut rng);
        let metric = ViewMetric::from_view(&x).unwrap();
        let p = m_orthonormalize(&common::uniform(5, 2, &mut rng), &metric).unwrap();
        let step = common::uniform(5, 2, &mut rng) * scale;
        if let Ok(q) = retract(&p, &step, &metric) {
            prop_assert!(metric.feasibility(q.matrix()) <= 1e-8);
        }
    }
}
