//! Chamfer discrepancy (sum and max variants) and its subgradient.
//!
//! Nearest-neighbor queries are exact. Clouds with at least
//! [`KD_THRESHOLD`] points are indexed with a k-d tree; smaller ones use a
//! linear scan. Both paths break distance ties by lowest point index and
//! compute squared distances with the same arithmetic, so they agree bitwise.

use rayon::prelude::*;

use crate::cloud::{sq_dist, PointCloud};
use crate::error::{check_same_dim, Result};
use crate::gradient::Gradient;

/// Clouds smaller than this are scanned linearly.
pub const KD_THRESHOLD: usize = 64;
const LEAF_SIZE: usize = 8;
const NO_CHILD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnStrategy {
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

#[derive(Debug, Clone)]
struct KdNode {
    lo: u32,
    hi: u32,
    axis: u32,
    split: f64,
    left: u32,
    right: u32,
}

/// Immutable exact nearest-neighbor index over a cloud.
#[derive(Debug, Clone)]
pub struct NnIndex<'a> {
    cloud: &'a PointCloud,
    tree: Option<KdTree>,
}

#[derive(Debug, Clone)]
struct KdTree {
    order: Vec<u32>,
    nodes: Vec<KdNode>,
}

/// Result of a query: point index and squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub sq_dist: f64,
}

impl Neighbor {
    #[inline]
    fn beats(&self, other: &Neighbor) -> bool {
        self.sq_dist < other.sq_dist || (self.sq_dist == other.sq_dist && self.index < other.index)
    }
}

impl<'a> NnIndex<'a> {
    pub fn new(cloud: &'a PointCloud, strategy: NnStrategy) -> Self {
        let use_tree = match strategy {
            NnStrategy::Auto => cloud.len() >= KD_THRESHOLD,
            NnStrategy::BruteForce => false,
            NnStrategy::KdTree => true,
        };
        let tree = use_tree.then(|| KdTree::build(cloud));
        Self { cloud, tree }
    }

    pub fn is_tree(&self) -> bool {
        self.tree.is_some()
    }

    pub fn nearest(&self, query: &[f64]) -> Neighbor {
        match &self.tree {
            Some(tree) => tree.nearest(self.cloud, query),
            None => brute_nearest(self.cloud, query),
        }
    }
}

fn brute_nearest(cloud: &PointCloud, query: &[f64]) -> Neighbor {
    let mut best = Neighbor {
        index: usize::MAX,
        sq_dist: f64::INFINITY,
    };
    for (index, x) in cloud.points().enumerate() {
        let cand = Neighbor {
            index,
            sq_dist: sq_dist(query, x),
        };
        if cand.beats(&best) {
            best = cand;
        }
    }
    best
}

impl KdTree {
    fn build(cloud: &PointCloud) -> Self {
        let mut tree = KdTree {
            order: (0..cloud.len() as u32).collect(),
            nodes: Vec::with_capacity(2 * cloud.len() / LEAF_SIZE + 1),
        };
        tree.build_node(cloud, 0, cloud.len());
        tree
    }

    fn build_node(&mut self, cloud: &PointCloud, lo: usize, hi: usize) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(KdNode {
            lo: lo as u32,
            hi: hi as u32,
            axis: 0,
            split: 0.0,
            left: NO_CHILD,
            right: NO_CHILD,
        });
        if hi - lo <= LEAF_SIZE {
            return id;
        }
        // split along the axis of largest extent
        let dim = cloud.dim();
        let mut axis = 0;
        let mut widest = -1.0;
        for a in 0..dim {
            let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[lo..hi] {
                let c = cloud.point(i as usize)[a];
                min = min.min(c);
                max = max.max(c);
            }
            if max - min > widest {
                widest = max - min;
                axis = a;
            }
        }
        let mid = lo + (hi - lo) / 2;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&i, &j| {
            let (ci, cj) = (cloud.point(i as usize)[axis], cloud.point(j as usize)[axis]);
            ci.total_cmp(&cj).then(i.cmp(&j))
        });
        let split = cloud.point(self.order[mid] as usize)[axis];
        let left = self.build_node(cloud, lo, mid);
        let right = self.build_node(cloud, mid, hi);
        let node = &mut self.nodes[id as usize];
        node.axis = axis as u32;
        node.split = split;
        node.left = left;
        node.right = right;
        id
    }

    fn nearest(&self, cloud: &PointCloud, query: &[f64]) -> Neighbor {
        let mut best = Neighbor {
            index: usize::MAX,
            sq_dist: f64::INFINITY,
        };
        self.search(cloud, 0, query, &mut best);
        best
    }

    fn search(&self, cloud: &PointCloud, id: u32, query: &[f64], best: &mut Neighbor) {
        let node = &self.nodes[id as usize];
        if node.left == NO_CHILD {
            for &i in &self.order[node.lo as usize..node.hi as usize] {
                let cand = Neighbor {
                    index: i as usize,
                    sq_dist: sq_dist(query, cloud.point(i as usize)),
                };
                if cand.beats(best) {
                    *best = cand;
                }
            }
            return;
        }
        let diff = query[node.axis as usize] - node.split;
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(cloud, near, query, best);
        // Every point across the plane is at least |diff| away; equality is
        // still visited so index tie-breaking matches the linear scan.
        if diff * diff <= best.sq_dist {
            self.search(cloud, far, query, best);
        }
    }
}

/// Nearest neighbor in `target` for every point of `source`, in source order.
pub fn nearest_neighbors(source: &PointCloud, target: &PointCloud, strategy: NnStrategy) -> Vec<Neighbor> {
    let index = NnIndex::new(target, strategy);
    let queries: Vec<&[f64]> = source.points().collect();
    queries.par_iter().map(|q| index.nearest(q)).collect()
}

fn mean_sq(neighbors: &[Neighbor]) -> f64 {
    neighbors.iter().map(|n| n.sq_dist).sum::<f64>() / neighbors.len() as f64
}

fn directional_terms(p: &PointCloud, q: &PointCloud, strategy: NnStrategy) -> Result<(f64, f64)> {
    check_same_dim(p.dim(), q.dim())?;
    let forward = mean_sq(&nearest_neighbors(p, q, strategy));
    let backward = mean_sq(&nearest_neighbors(q, p, strategy));
    Ok((forward, backward))
}

/// `mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2`.
pub fn chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    chamfer_with(p, q, NnStrategy::Auto)
}

pub fn chamfer_with(p: &PointCloud, q: &PointCloud, strategy: NnStrategy) -> Result<f64> {
    let (f, b) = directional_terms(p, q, strategy)?;
    Ok(f + b)
}

/// Max of the two directional terms instead of their sum.
pub fn modified_chamfer(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    let (f, b) = directional_terms(p, q, NnStrategy::Auto)?;
    Ok(f.max(b))
}

/// Subgradient of [`chamfer`] with respect to the points of `p`.
///
/// Point `x_i` receives `2/|P| (x_i - nn_Q(x_i))` plus `2/|Q| (x_i - y)` for
/// every `y` in `Q` whose nearest neighbor in `P` is `x_i`.
pub fn chamfer_grad(p: &PointCloud, q: &PointCloud) -> Result<Gradient> {
    check_same_dim(p.dim(), q.dim())?;
    let forward = nearest_neighbors(p, q, NnStrategy::Auto);
    let backward = nearest_neighbors(q, p, NnStrategy::Auto);
    let wp = 2.0 / p.len() as f64;
    let wq = 2.0 / q.len() as f64;
    let mut grad = Gradient::zeros(p.len(), p.dim());
    for (i, nn) in forward.iter().enumerate() {
        let (x, y) = (p.point(i), q.point(nn.index));
        for ((g, a), b) in grad.row_mut(i).iter_mut().zip(x).zip(y) {
            *g += wp * (a - b);
        }
    }
    for (j, nn) in backward.iter().enumerate() {
        let (x, y) = (p.point(nn.index), q.point(j));
        for ((g, a), b) in grad.row_mut(nn.index).iter_mut().zip(x).zip(y) {
            *g += wq * (a - b);
        }
    }
    Ok(grad)
}
