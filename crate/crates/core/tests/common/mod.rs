#![allow(dead_code)]

use pcdist::{DistanceOrder, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn gen(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cloud(g: &mut ChaCha8Rng, n: usize, dim: usize) -> PointCloud {
    let coords = (0..n * dim).map(|_| g.random_range(-1.0..=1.0)).collect();
    PointCloud::from_flat(dim, coords).unwrap()
}

fn cost(order: DistanceOrder, a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    d.powf(order.p())
}

/// Minimum of the mean matching cost over every permutation, by recursion.
pub fn permutation_min(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> f64 {
    fn go(i: usize, used: &mut [bool], acc: f64, c: &[Vec<f64>], best: &mut f64) {
        if i == c.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..c.len() {
            if !used[j] {
                used[j] = true;
                go(i + 1, used, acc + c[i][j], c, best);
                used[j] = false;
            }
        }
    }
    let c: Vec<Vec<f64>> = p.points().map(|x| q.points().map(|y| cost(order, x, y)).collect()).collect();
    let mut best = f64::INFINITY;
    go(0, &mut vec![false; c.len()], 0.0, &c, &mut best);
    (best / c.len() as f64).powf(1.0 / order.p())
}

/// `W_p` between uniform measures on `xs` and `ys` as the minimum over all
/// vertices of the transportation polytope.
///
/// Masses are scaled to integers (row supply `m`, column demand `n`). Every
/// vertex is supported on a spanning tree of the complete bipartite graph,
/// and the tree fixes the flows; infeasible trees carry a negative flow.
pub fn transport_polytope_min(xs: &[f64], ys: &[f64], order: DistanceOrder) -> f64 {
    let (n, m) = (xs.len(), ys.len());
    let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, n + j))).collect();
    let mut best = f64::INFINITY;
    let labels: Vec<usize> = (0..n + m).collect();
    let mut chosen = Vec::new();
    enumerate_trees(&edges, 0, &labels, &mut chosen, n + m - 1, &mut |tree| {
        if let Some(flows) = tree_flows(tree, n, m) {
            let total: f64 = tree
                .iter()
                .zip(&flows)
                .map(|(&(i, c), &f)| f as f64 * cost(order, &[xs[i]], &[ys[c - n]]))
                .sum();
            best = best.min(total / (n * m) as f64);
        }
    });
    best.powf(1.0 / order.p())
}

fn enumerate_trees(
    edges: &[(usize, usize)],
    next: usize,
    labels: &[usize],
    chosen: &mut Vec<(usize, usize)>,
    need: usize,
    visit: &mut dyn FnMut(&[(usize, usize)]),
) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    if edges.len() - next < need - chosen.len() {
        return;
    }
    let (a, b) = edges[next];
    if labels[a] != labels[b] {
        let (from, to) = (labels[b], labels[a]);
        let merged: Vec<usize> = labels.iter().map(|&l| if l == from { to } else { l }).collect();
        chosen.push((a, b));
        enumerate_trees(edges, next + 1, &merged, chosen, need, visit);
        chosen.pop();
    }
    enumerate_trees(edges, next + 1, labels, chosen, need, visit);
}

fn tree_flows(tree: &[(usize, usize)], n: usize, m: usize) -> Option<Vec<i64>> {
    let mut left: Vec<i64> = (0..n + m).map(|v| if v < n { m as i64 } else { n as i64 }).collect();
    let mut degree = vec![0usize; n + m];
    for &(a, b) in tree {
        degree[a] += 1;
        degree[b] += 1;
    }
    let mut flows = vec![None; tree.len()];
    for _ in 0..tree.len() {
        let (e, leaf) = tree
            .iter()
            .enumerate()
            .filter(|(e, _)| flows[*e].is_none())
            .find_map(|(e, &(a, b))| {
                if degree[a] == 1 {
                    Some((e, a))
                } else if degree[b] == 1 {
                    Some((e, b))
                } else {
                    None
                }
            })?;
        let (a, b) = tree[e];
        let other = if leaf == a { b } else { a };
        let f = left[leaf];
        flows[e] = Some(f);
        left[leaf] = 0;
        left[other] -= f;
        degree[a] -= 1;
        degree[b] -= 1;
    }
    let flows: Vec<i64> = flows.into_iter().map(Option::unwrap).collect();
    (flows.iter().all(|&f| f >= 0) && left.iter().all(|&r| r == 0)).then_some(flows)
}

/// Central differences with step `h` over every coordinate.
pub fn central_difference(p: &PointCloud, h: f64, f: impl Fn(&PointCloud) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.as_flat().len());
    let mut coords = p.as_flat().to_vec();
    for k in 0..coords.len() {
        let x = coords[k];
        coords[k] = x + h;
        let plus = f(&PointCloud::from_flat(p.dim(), coords.clone()).unwrap());
        coords[k] = x - h;
        let minus = f(&PointCloud::from_flat(p.dim(), coords.clone()).unwrap());
        coords[k] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    out
}

/// Max-norm relative error of `analytic` against `numeric`.
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = numeric.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    diff / scale.max(1e-8)
}

/// Smallest gap between the best and second-best squared distance from any
/// point of `p` to `q`.
pub fn nn_gap(p: &PointCloud, q: &PointCloud) -> f64 {
    p.points()
        .map(|x| {
            let mut d: Vec<f64> = q.points().map(|y| pcdist::cloud::sq_dist(x, y)).collect();
            d.sort_by(f64::total_cmp);
            if d.len() > 1 { d[1] - d[0] } else { f64::INFINITY }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Gap between the best and second-best matching cost, over all permutations.
pub fn matching_gap(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> f64 {
    fn go(i: usize, used: &mut [bool], acc: f64, c: &[Vec<f64>], all: &mut Vec<f64>) {
        if i == c.len() {
            all.push(acc);
            return;
        }
        for j in 0..c.len() {
            if !used[j] {
                used[j] = true;
                go(i + 1, used, acc + c[i][j], c, all);
                used[j] = false;
            }
        }
    }
    let c: Vec<Vec<f64>> = p.points().map(|x| q.points().map(|y| cost(order, x, y)).collect()).collect();
    let mut all = Vec::new();
    go(0, &mut vec![false; c.len()], 0.0, &c, &mut all);
    all.sort_by(f64::total_cmp);
    if all.len() > 1 { all[1] - all[0] } else { f64::INFINITY }
}

/// Smallest gap between consecutive sorted projections of `p` on `theta`.
pub fn projection_gap(p: &PointCloud, theta: &[f64]) -> f64 {
    let mut v: Vec<f64> = p.points().map(|x| pcdist::cloud::dot(x, theta)).collect();
    v.sort_by(f64::total_cmp);
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}
