mod common;

use common::*;
use pcdist::chamfer::{chamfer_with, NnStrategy};
use pcdist::cloud::{dot, norm};
use pcdist::morph::{sample_shape, ShapeKind};
use pcdist::sliced::{frozen_slices_pth_power, slice_directions};
use pcdist::*;
use rand::Rng;

#[test]
fn polytope_example_two_by_three() {
    let (xs, ys) = ([0.0, 1.0], [0.0, 0.5, 1.0]);
    let lp = transport_polytope_min(&xs, &ys, DistanceOrder::ONE);
    assert!((lp - 1.0 / 6.0).abs() < 1e-15, "{lp}");
    assert!((wasserstein_1d(&xs, &ys, DistanceOrder::ONE).unwrap() - lp).abs() <= 1e-12);
}

#[test]
fn closed_form_matches_polytope_on_unequal_sizes() {
    let mut g = gen(31);
    for _ in 0..200 {
        let n = g.random_range(1..=5);
        let m = loop {
            let m = g.random_range(1..=5);
            if m != n {
                break m;
            }
        };
        let xs: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..m).map(|_| g.random_range(-1.0..1.0)).collect();
        for order in [DistanceOrder::ONE, DistanceOrder::TWO] {
            let lp = transport_polytope_min(&xs, &ys, order);
            let cf = wasserstein_1d(&xs, &ys, order).unwrap();
            assert!((lp - cf).abs() <= 1e-12, "{xs:?} {ys:?} p={}: {lp} vs {cf}", order.p());
        }
    }
}

#[test]
fn hungarian_matches_permutation_enumeration_n7() {
    let mut g = gen(7);
    for _ in 0..10 {
        let (p, q) = (cloud(&mut g, 7, 3), cloud(&mut g, 7, 3));
        for order in [DistanceOrder::ONE, DistanceOrder::TWO] {
            let exact = emd_exact(&p, &q, order).unwrap().0;
            let oracle = permutation_min(&p, &q, order);
            assert!((exact - oracle).abs() <= 1e-12, "{exact} vs {oracle}");
        }
    }
}

#[test]
fn swd_singleton_sphere_averages() {
    let mut g = gen(11);
    for _ in 0..5 {
        let (x, y) = (cloud(&mut g, 1, 3), cloud(&mut g, 1, 3));
        let v = norm(&[x.point(0)[0] - y.point(0)[0], x.point(0)[1] - y.point(0)[1], x.point(0)[2] - y.point(0)[2]]);
        for (order, truth) in [(DistanceOrder::TWO, v / 3f64.sqrt()), (DistanceOrder::ONE, v / 2.0)] {
            for seed in [1, 2] {
                let cfg = SlicingConfig::new(100_000, order, SeededRng::from_seed(seed)).unwrap();
                let est = swd_monte_carlo(&x, &y, &cfg).unwrap().value;
                assert!((est - truth).abs() <= 0.01 * truth, "{est} vs {truth}");
            }
        }
    }
}

#[test]
fn max_sliced_singletons_find_the_chord() {
    let x = make_cloud(&[[0.2, -0.1, 0.4]]).unwrap();
    let y = make_cloud(&[[-0.5, 0.3, 0.1]]).unwrap();
    let chord = [0.7, -0.4, 0.3];
    let len = norm(&chord);
    for order in [DistanceOrder::ONE, DistanceOrder::TWO] {
        let (value, dir) = max_sliced(&x, &y, order, 4, &SeededRng::from_seed(3)).unwrap();
        assert!((value - len).abs() <= 1e-9, "{value} vs {len}");
        assert!((dot(dir.components(), &chord).abs() / len - 1.0).abs() <= 1e-9);
        // no sampled direction does better
        let dense = slice_directions(&SeededRng::from_seed(4), 10_000, 3);
        let best = dense.iter().map(|t| dot(t.components(), &chord).abs()).fold(0.0, f64::max);
        assert!(best <= value + 1e-12);
    }
}

#[test]
fn max_sliced_beats_dense_sampling() {
    let mut g = gen(16);
    for trial in 0..5 {
        let (p, q) = (cloud(&mut g, 16, 3), cloud(&mut g, 16, 3));
        let order = DistanceOrder::TWO;
        let (value, _) = max_sliced(&p, &q, order, 16, &SeededRng::from_seed(trial)).unwrap();
        let dense = slice_directions(&SeededRng::from_seed(100 + trial), 10_000, 3);
        let best = dense
            .iter()
            .map(|t| order.root(frozen_slices_pth_power(&p, &q, std::slice::from_ref(t), order).unwrap()))
            .fold(0.0, f64::max);
        assert!(value >= best - 1e-6, "{value} < {best}");
    }
}

#[test]
fn sinkhorn_bias_and_accuracy() {
    let mut g = gen(5);
    let p = cloud(&mut g, 6, 3);
    for eps in [1e-1, 1e-2, 1e-3] {
        let cfg = SinkhornConfig::new(eps, 100_000, 1e-7).unwrap();
        let v = sinkhorn_approx(&p, &p, DistanceOrder::ONE, &cfg).unwrap();
        assert!((0.0..=10.0 * eps).contains(&v), "eps {eps}: {v}");
    }
    for _ in 0..5 {
        let (p, q) = (cloud(&mut g, 6, 3), cloud(&mut g, 6, 3));
        for order in [DistanceOrder::ONE, DistanceOrder::TWO] {
            let exact = order.cost(emd_exact(&p, &q, order).unwrap().0);
            let cfg = SinkhornConfig::new(1e-3, 100_000, 1e-5).unwrap();
            let approx = sinkhorn_approx(&p, &q, order, &cfg).unwrap();
            assert!((approx - exact).abs() <= 0.02 * exact, "{approx} vs {exact}");
        }
    }
}

#[test]
fn chamfer_gradient_finite_differences() {
    let mut g = gen(60);
    let mut checked = 0;
    while checked < 20 {
        let (p, q) = (cloud(&mut g, 6, 3), cloud(&mut g, 6, 3));
        if nn_gap(&p, &q).min(nn_gap(&q, &p)) < 1e-3 {
            continue;
        }
        let numeric = central_difference(&p, 1e-5, |x| chamfer(x, &q).unwrap());
        let analytic = chamfer_grad(&p, &q).unwrap();
        assert!(rel_err(analytic.as_flat(), &numeric) <= 1e-4);
        checked += 1;
    }
}

#[test]
fn emd_gradient_finite_differences() {
    let mut g = gen(61);
    let mut checked = 0;
    while checked < 20 {
        let (p, q) = (cloud(&mut g, 6, 3), cloud(&mut g, 6, 3));
        let order = if checked % 2 == 0 { DistanceOrder::TWO } else { DistanceOrder::ONE };
        if matching_gap(&p, &q, order) < 1e-3 {
            continue;
        }
        let numeric = central_difference(&p, 1e-5, |x| order.cost(emd_exact(x, &q, order).unwrap().0));
        let analytic = emd_grad(&p, &q, order).unwrap();
        assert!(rel_err(analytic.as_flat(), &numeric) <= 1e-4);
        checked += 1;
    }
}

#[test]
fn swd_gradient_finite_differences() {
    let mut g = gen(62);
    let mut checked = 0;
    while checked < 20 {
        let (p, q) = (cloud(&mut g, 8, 3), cloud(&mut g, 8, 3));
        let dirs = slice_directions(&SeededRng::from_seed(checked), 32, 3);
        if dirs.iter().any(|t| projection_gap(&p, t.components()) < 1e-3) {
            continue;
        }
        let order = DistanceOrder::TWO;
        let numeric = central_difference(&p, 1e-5, |x| frozen_slices_pth_power(x, &q, &dirs, order).unwrap());
        let analytic = swd_grad(&p, &q, &dirs, order).unwrap();
        assert!(rel_err(analytic.as_flat(), &numeric) <= 1e-4);
        checked += 1;
    }
}

#[test]
fn chamfer_matches_double_loop_and_modified_bounds() {
    let mut g = gen(8);
    for _ in 0..200 {
        let (n, m) = (g.random_range(1..=12), g.random_range(1..=12));
        let (p, q) = (cloud(&mut g, n, 3), cloud(&mut g, m, 3));
        let mean_min = |a: &PointCloud, b: &PointCloud| {
            a.points()
                .map(|x| b.points().map(|y| pcdist::cloud::sq_dist(x, y)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / a.len() as f64
        };
        let (f, b) = (mean_min(&p, &q), mean_min(&q, &p));
        assert_eq!(chamfer_with(&p, &q, NnStrategy::BruteForce).unwrap(), f + b);
        let (cd, mcd) = (chamfer(&p, &q).unwrap(), modified_chamfer(&p, &q).unwrap());
        assert!(mcd <= cd && cd <= 2.0 * mcd);
    }
}

#[test]
fn cube_faces_get_area_proportional_counts() {
    let n = 100_000;
    let cube = sample_shape(ShapeKind::Cube, n, &SeededRng::from_seed(2)).unwrap();
    let mut counts = [0usize; 6];
    for x in cube.points() {
        let axis = (0..3).find(|&a| x[a].abs() == 1.0).unwrap();
        counts[axis + if x[axis] > 0.0 { 3 } else { 0 }] += 1;
    }
    let expect = n as f64 / 6.0;
    for c in counts {
        assert!((c as f64 - expect).abs() <= 0.05 * expect, "{counts:?}");
    }
}

#[test]
fn sphere_directions_have_isotropic_moments() {
    let dirs = slice_directions(&SeededRng::from_seed(9), 100_000, 3);
    let mut mean = [0.0; 3];
    let mut cov = [[0.0; 3]; 3];
    for t in &dirs {
        let c = t.components();
        for a in 0..3 {
            mean[a] += c[a];
            for b in 0..3 {
                cov[a][b] += c[a] * c[b];
            }
        }
    }
    let n = dirs.len() as f64;
    for a in 0..3 {
        assert!((mean[a] / n).abs() <= 0.01);
        for b in 0..3 {
            let target = if a == b { 1.0 / 3.0 } else { 0.0 };
            assert!((cov[a][b] / n - target).abs() <= 0.01);
        }
    }
}

#[test]
fn diameter_example() {
    let p = make_cloud(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).unwrap();
    let q = make_cloud(&[[0.0, 0.0, 0.0]]).unwrap();
    assert_eq!(diameter(&p, &q).unwrap(), 5.0);
}
