//! Wasserstein distances between uniform discrete measures.
//!
//! All values are normalized: `W_p = (min_T (1/n) sum |x_i - T(x_i)|^p)^(1/p)`.
//! The unnormalized matching cost over `n` pairs at `p = 1` is `n * W_1`.

use rayon::prelude::*;

use crate::cloud::{sq_dist, DistanceOrder, PointCloud};
use crate::error::{check_same_dim, check_same_len, Error, Result};
use crate::gradient::Gradient;

/// Largest size accepted by [`emd_bruteforce`].
pub const BRUTE_FORCE_MAX: usize = 9;

/// `W_p` between the uniform empirical measures on `xs` and `ys`.
///
/// Equal sizes reduce to matching sorted values. Otherwise the quantile
/// functions are integrated exactly over their merged breakpoints.
pub fn wasserstein_1d(xs: &[f64], ys: &[f64], order: DistanceOrder) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut xs = xs.to_vec();
    let mut ys = ys.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    ys.sort_unstable_by(f64::total_cmp);
    Ok(order.root(sorted_pth_power(&xs, &ys, order)))
}

/// `W_p^p` of two already sorted samples.
pub(crate) fn sorted_pth_power(xs: &[f64], ys: &[f64], order: DistanceOrder) -> f64 {
    if xs.len() == ys.len() {
        let total: f64 = xs.iter().zip(ys).map(|(x, y)| order.cost(x - y)).sum();
        return total / xs.len() as f64;
    }
    let mut total = 0.0;
    for (i, j, w) in QuantileCoupling::new(xs.len(), ys.len()) {
        total += w as f64 * order.cost(xs[i] - ys[j]);
    }
    total / (xs.len() as f64 * ys.len() as f64)
}

/// Monotone coupling of two sorted samples of sizes `n` and `m`.
///
/// Yields `(i, j, w)` where `w / (n m)` is the mass moved from the i-th
/// smallest `x` to the j-th smallest `y`. Widths are integers so the
/// breakpoints are exact.
#[derive(Debug, Clone)]
pub(crate) struct QuantileCoupling {
    n: usize,
    m: usize,
    i: usize,
    j: usize,
    left_x: usize,
    left_y: usize,
}

impl QuantileCoupling {
    pub(crate) fn new(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            i: 0,
            j: 0,
            left_x: m,
            left_y: n,
        }
    }
}

impl Iterator for QuantileCoupling {
    type Item = (usize, usize, usize);

    fn next(&mut self) -> Option<Self::Item> {
        if self.i >= self.n || self.j >= self.m {
            return None;
        }
        let w = self.left_x.min(self.left_y);
        let item = (self.i, self.j, w);
        self.left_x -= w;
        self.left_y -= w;
        if self.left_x == 0 {
            self.i += 1;
            self.left_x = self.m;
        }
        if self.left_y == 0 {
            self.j += 1;
            self.left_y = self.n;
        }
        Some(item)
    }
}

/// A bijection pairing point `i` of `P` with point `mapping[i]` of `Q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; mapping.len()];
        for &j in &mapping {
            if j >= mapping.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::InvalidParameter("mapping is not a permutation".into()));
            }
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn mapping(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mean cost `(1/n) sum_i cost[i][mapping[i]]`, summed in row order.
    pub fn mean_cost(&self, cost: &CostMatrix) -> f64 {
        let total: f64 = self.0.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
        total / self.0.len() as f64
    }
}

/// Dense row-major `rows x cols` matrix of `|x_i - y_j|^p`.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> Result<Self> {
        check_same_dim(p.dim(), q.dim())?;
        let cols = q.len();
        let mut data = vec![0.0; p.len() * cols];
        data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
            let x = p.point(i);
            for (c, y) in row.iter_mut().zip(q.points()) {
                *c = order.cost_from_sq(sq_dist(x, y));
            }
        });
        if data.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("transport cost overflows f64".into()));
        }
        Ok(Self {
            rows: p.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Shortest augmenting paths with row and column potentials, O(n^3).
///
/// With uniform masses `1/n` on both sides the transport polytope is the set
/// of doubly stochastic matrices scaled by `1/n`. Its vertices are permutation
/// matrices (Birkhoff-von Neumann), so the linear program over couplings
/// attains its minimum at a permutation and a matching is an exact solver.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let n = cost.rows;
    assert_eq!(n, cost.cols, "assignment needs a square cost matrix");
    // 1-based bookkeeping; column 0 is a virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut min_to = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        min_to.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = cost.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = row[j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut mapping = vec![0; n];
    for j in 1..=n {
        mapping[row_of[j] - 1] = j - 1;
    }
    Assignment(mapping)
}

/// Exact `W_p` between equal-size clouds and an optimal assignment.
pub fn emd_exact(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> Result<(f64, Assignment)> {
    check_same_dim(p.dim(), q.dim())?;
    check_same_len(p.len(), q.len())?;
    let cost = CostMatrix::new(p, q, order)?;
    let assignment = hungarian(&cost);
    Ok((order.root(assignment.mean_cost(&cost)), assignment))
}

/// Exhaustive minimum over all `n!` matchings. Test oracle for [`emd_exact`].
pub fn emd_bruteforce(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> Result<f64> {
    check_same_dim(p.dim(), q.dim())?;
    check_same_len(p.len(), q.len())?;
    let n = p.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooLargeForBruteForce {
            n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let cost = CostMatrix::new(p, q, order)?;
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |perm: &[usize]| -> f64 {
        perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>()
    };
    let mut best = eval(&perm);
    // Heap's algorithm, iterative form
    let mut counters = vec![0usize; n];
    let mut k = 1;
    while k < n {
        if counters[k] < k {
            if k % 2 == 0 {
                perm.swap(0, k);
            } else {
                perm.swap(counters[k], k);
            }
            best = best.min(eval(&perm));
            counters[k] += 1;
            k = 1;
        } else {
            counters[k] = 0;
            k += 1;
        }
    }
    Ok(order.root(best / n as f64))
}

/// Subgradient of the exact transport objective with the optimal matching
/// held fixed.
///
/// `p = 2` differentiates `W_2^2`; `p = 1` differentiates `W_1`, using the
/// zero vector for coincident pairs.
pub fn emd_grad(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> Result<Gradient> {
    check_same_dim(p.dim(), q.dim())?;
    check_same_len(p.len(), q.len())?;
    if order != DistanceOrder::ONE && order != DistanceOrder::TWO {
        return Err(Error::UnsupportedOrder(order.p()));
    }
    let (_, assignment) = emd_exact(p, q, order)?;
    Ok(matching_grad(p, q, &assignment, order))
}

pub(crate) fn matching_grad(p: &PointCloud, q: &PointCloud, assignment: &Assignment, order: DistanceOrder) -> Gradient {
    let n = p.len() as f64;
    let mut grad = Gradient::zeros(p.len(), p.dim());
    for (i, &j) in assignment.mapping().iter().enumerate() {
        let (x, y) = (p.point(i), q.point(j));
        let scale = if order == DistanceOrder::TWO {
            2.0 / n
        } else {
            let dist = sq_dist(x, y).sqrt();
            if dist == 0.0 {
                continue;
            }
            1.0 / (n * dist)
        };
        for ((g, a), b) in grad.row_mut(i).iter_mut().zip(x).zip(y) {
            *g = scale * (a - b);
        }
    }
    grad
}

/// Parameters of the entropic solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub epsilon_reg: f64,
    pub max_iters: usize,
    /// Allowed marginal violation, in total variation.
    pub tolerance: f64,
}

impl SinkhornConfig {
    pub const DEFAULT_MAX_ITERS: usize = 10_000;
    pub const DEFAULT_TOLERANCE: f64 = 1e-9;
    /// Default regularization relative to the mean pairwise cost.
    pub const DEFAULT_RELATIVE_EPSILON: f64 = 1e-2;

    pub fn new(epsilon_reg: f64, max_iters: usize, tolerance: f64) -> Result<Self> {
        if !(epsilon_reg > 0.0 && epsilon_reg.is_finite()) {
            return Err(Error::InvalidParameter("epsilon_reg must be positive".into()));
        }
        if !(tolerance > 0.0) || max_iters == 0 {
            return Err(Error::InvalidParameter(
                "tolerance and max_iters must be positive".into(),
            ));
        }
        Ok(Self {
            epsilon_reg,
            max_iters,
            tolerance,
        })
    }

    /// Default configuration: `epsilon_reg = 1e-2 * mean cost`.
    pub fn scaled_to(p: &PointCloud, q: &PointCloud, order: DistanceOrder) -> Result<Self> {
        let mean = CostMatrix::new(p, q, order)?.mean();
        let eps = if mean > 0.0 {
            Self::DEFAULT_RELATIVE_EPSILON * mean
        } else {
            Self::DEFAULT_RELATIVE_EPSILON
        };
        Self::new(eps, Self::DEFAULT_MAX_ITERS, Self::DEFAULT_TOLERANCE)
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Entropic approximation of `W_p^p`: transport cost `<plan, C>` of the
/// Sinkhorn plan, excluding the entropy term.
///
/// Iterates in the log domain on the dual potentials. The regularization is
/// annealed geometrically from the largest cost down to `epsilon_reg`,
/// warm-starting each stage, and iteration counts accumulate against
/// `max_iters`.
pub fn sinkhorn_approx(p: &PointCloud, q: &PointCloud, order: DistanceOrder, cfg: &SinkhornConfig) -> Result<f64> {
    let cost = CostMatrix::new(p, q, order)?;
    let (n, m) = (cost.rows, cost.cols);
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let max_cost = cost.data.iter().fold(0.0f64, |a, &b| a.max(b));
    let target = cfg.epsilon_reg;
    let mut eps = max_cost.max(target);
    let mut iters = 0;
    let mut violation;

    loop {
        let last_stage = eps <= target;
        let stage_tol = if last_stage { cfg.tolerance } else { 1e-3 };
        loop {
            for (j, gj) in g.iter_mut().enumerate() {
                let terms = (0..n).map(|i| (f[i] - cost.get(i, j)) / eps);
                *gj = eps * (log_b - log_sum_exp(terms));
            }
            for (i, fi) in f.iter_mut().enumerate() {
                let row = cost.row(i);
                let terms = g.iter().zip(row).map(|(gj, c)| (gj - c) / eps);
                *fi = eps * (log_a - log_sum_exp(terms));
            }
            iters += 1;
            // rows are exact after the f update; measure column mass
            violation = 0.5
                * (0..m)
                    .map(|j| {
                        let col: f64 = (0..n)
                            .map(|i| ((f[i] + g[j] - cost.get(i, j)) / eps).exp())
                            .sum();
                        (col - 1.0 / m as f64).abs()
                    })
                    .sum::<f64>();
            if violation <= stage_tol || iters >= cfg.max_iters || !violation.is_finite() {
                break;
            }
        }
        if last_stage || iters >= cfg.max_iters {
            break;
        }
        eps = (eps * 0.5).max(target);
    }

    let mut value = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = cost.get(i, j);
            value += ((f[i] + g[j] - c) / eps).exp() * c;
        }
    }
    if violation > cfg.tolerance || eps > target {
        return Err(Error::NotConverged {
            iters,
            violation,
            value,
        });
    }
    Ok(value)
}
