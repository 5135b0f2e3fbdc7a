//! Sliced Wasserstein estimators.
//!
//! Slice `i` of a run always uses the direction drawn from
//! `rng.derive(i)`, so per-slice values do not depend on evaluation order,
//! thread count, or (for the adaptive estimator) batch boundaries. Per-slice
//! values are reduced sequentially in slice order.

use std::cell::RefCell;
use std::cmp::Ordering;

use rayon::prelude::*;

use crate::cloud::{dot, sample_uniform_sphere, sq_dist, Direction, DistanceOrder, PointCloud};
use crate::error::{check_same_dim, check_same_len, Error, Result};
use crate::gradient::Gradient;
use crate::rng::SeededRng;
use crate::sort::SortScratch;
use crate::wasserstein::{sorted_pth_power, QuantileCoupling};

/// How a point is mapped to the real line for a slice parameter `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProjectionKind {
    /// `theta . x`
    #[default]
    Linear,
    /// `|x - theta|`, the circular defining function of generalized slicing.
    Circular,
}

/// Pushes every point of `cloud` through the slice map, keeping point order.
pub fn project(cloud: &PointCloud, theta: &Direction, kind: ProjectionKind) -> Result<Vec<f64>> {
    check_same_dim(cloud.dim(), theta.dim())?;
    let mut out = vec![0.0; cloud.len()];
    project_into(cloud, theta.components(), kind, &mut out);
    Ok(out)
}

fn project_into(cloud: &PointCloud, theta: &[f64], kind: ProjectionKind, out: &mut [f64]) {
    match kind {
        ProjectionKind::Linear if theta.len() == 3 => {
            let (a, b, c) = (theta[0], theta[1], theta[2]);
            for (o, x) in out.iter_mut().zip(cloud.as_flat().chunks_exact(3)) {
                *o = a * x[0] + b * x[1] + c * x[2];
            }
        }
        ProjectionKind::Linear => {
            for (o, x) in out.iter_mut().zip(cloud.points()) {
                *o = dot(theta, x);
            }
        }
        ProjectionKind::Circular => {
            for (o, x) in out.iter_mut().zip(cloud.points()) {
                *o = sq_dist(x, theta).sqrt();
            }
        }
    }
}

fn warn_outside_unit_ball(kind: ProjectionKind, clouds: [&PointCloud; 2]) {
    if kind != ProjectionKind::Circular {
        return;
    }
    let outside = clouds
        .iter()
        .flat_map(|c| c.points())
        .any(|x| dot(x, x) > 1.0);
    if outside {
        log::warn!("circular slicing: some points lie outside the unit ball");
    }
}

/// Direction of slice `index` in a run seeded by `rng`.
pub fn slice_direction(rng: &SeededRng, index: u64, dim: usize) -> Direction {
    sample_uniform_sphere(&rng.derive(index), dim)
}

/// Directions of slices `0..count`.
pub fn slice_directions(rng: &SeededRng, count: usize, dim: usize) -> Vec<Direction> {
    (0..count as u64).map(|i| slice_direction(rng, i, dim)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicingConfig {
    pub n_slices: usize,
    pub order: DistanceOrder,
    pub rng: SeededRng,
    pub projection: ProjectionKind,
}

impl SlicingConfig {
    pub fn new(n_slices: usize, order: DistanceOrder, rng: SeededRng) -> Result<Self> {
        if n_slices == 0 {
            return Err(Error::InvalidParameter("n_slices must be at least 1".into()));
        }
        Ok(Self {
            n_slices,
            order,
            rng,
            projection: ProjectionKind::Linear,
        })
    }

    pub fn with_projection(mut self, projection: ProjectionKind) -> Self {
        self.projection = projection;
        self
    }
}

/// A sliced estimate with its running moments.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedEstimate {
    /// `mean_pth_power^(1/p)`.
    pub value: f64,
    /// Mean of the per-slice `W_p^p`.
    pub mean_pth_power: f64,
    /// Mean of the squared per-slice `W_p^p`.
    pub mean_sq: f64,
    pub n_used: usize,
    pub converged: bool,
    /// `k * sqrt(unbiased variance / N)`; infinite when `N < 2`.
    pub half_width: f64,
}

/// Multiplier of the CLT error bound; two standard errors.
pub const DEFAULT_K_SIGMA: f64 = 2.0;

fn half_width(mean: f64, mean_sq: f64, n: usize, k_sigma: f64) -> f64 {
    if n < 2 {
        return f64::INFINITY;
    }
    let biased = (mean_sq - mean * mean).max(0.0);
    k_sigma * (biased / (n - 1) as f64).sqrt()
}

/// Per-slice `W_p^p` for slices `start..start + count`.
#[derive(Default)]
struct SliceScratch {
    px: Vec<f64>,
    qx: Vec<f64>,
    sp: SortScratch,
    sq: SortScratch,
}

thread_local! {
    static SCRATCH: RefCell<SliceScratch> = RefCell::new(SliceScratch::default());
}

/// Projected `W_p^p` of one slice, using this thread's buffers.
fn slice_pth_power(p: &PointCloud, q: &PointCloud, theta: &[f64], kind: ProjectionKind, order: DistanceOrder) -> f64 {
    SCRATCH.with(|cell| {
        let s = &mut *cell.borrow_mut();
        s.px.resize(p.len(), 0.0);
        s.qx.resize(q.len(), 0.0);
        project_into(p, theta, kind, &mut s.px);
        project_into(q, theta, kind, &mut s.qx);
        sorted_pth_power(s.sp.sorted(&s.px), s.sq.sorted(&s.qx), order)
    })
}

fn slice_values(
    p: &PointCloud,
    q: &PointCloud,
    order: DistanceOrder,
    kind: ProjectionKind,
    rng: &SeededRng,
    start: usize,
    count: usize,
) -> Vec<f64> {
    let dim = p.dim();
    (start..start + count)
        .into_par_iter()
        .map(|i| {
            let theta = slice_direction(rng, i as u64, dim);
            slice_pth_power(p, q, theta.components(), kind, order)
        })
        .collect()
}

fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    (sum / n, sum_sq / n)
}

/// Monte Carlo sliced (or, with [`ProjectionKind::Circular`], generalized
/// sliced) Wasserstein distance over `cfg.n_slices` uniform directions.
pub fn swd_monte_carlo(p: &PointCloud, q: &PointCloud, cfg: &SlicingConfig) -> Result<SlicedEstimate> {
    check_same_dim(p.dim(), q.dim())?;
    if cfg.n_slices == 0 {
        return Err(Error::InvalidParameter("n_slices must be at least 1".into()));
    }
    warn_outside_unit_ball(cfg.projection, [p, q]);
    let values = slice_values(p, q, cfg.order, cfg.projection, &cfg.rng, 0, cfg.n_slices);
    let (mean, mean_sq) = moments(&values);
    Ok(SlicedEstimate {
        value: cfg.order.root(mean),
        mean_pth_power: mean,
        mean_sq,
        n_used: cfg.n_slices,
        converged: true,
        half_width: half_width(mean, mean_sq, cfg.n_slices, DEFAULT_K_SIGMA),
    })
}

/// Same as [`swd_monte_carlo`] but also returns the per-slice `W_p^p`.
pub fn swd_slice_values(p: &PointCloud, q: &PointCloud, cfg: &SlicingConfig) -> Result<Vec<f64>> {
    check_same_dim(p.dim(), q.dim())?;
    Ok(slice_values(p, q, cfg.order, cfg.projection, &cfg.rng, 0, cfg.n_slices))
}

/// Parameters of the adaptive estimator.
///
/// `epsilon` is an absolute tolerance on the estimated mean of the per-slice
/// `W_p^p`, not on its p-th root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AswConfig {
    pub n0: usize,
    pub s: usize,
    pub epsilon: f64,
    pub max_projections: usize,
    pub k_sigma: f64,
}

impl AswConfig {
    pub fn new(n0: usize, s: usize, epsilon: f64, max_projections: usize) -> Result<Self> {
        if n0 < 2 {
            return Err(Error::InvalidParameter("n0 must be at least 2".into()));
        }
        if s == 0 {
            return Err(Error::InvalidParameter("s must be at least 1".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if max_projections < n0 {
            return Err(Error::InvalidParameter("max_projections must be >= n0".into()));
        }
        Ok(Self {
            n0,
            s,
            epsilon,
            max_projections,
            k_sigma: DEFAULT_K_SIGMA,
        })
    }
}

impl Default for AswConfig {
    fn default() -> Self {
        Self {
            n0: 2,
            s: 1,
            epsilon: 0.5,
            max_projections: 500,
            k_sigma: DEFAULT_K_SIGMA,
        }
    }
}

/// Loop guard of the adaptive estimator: true while the estimated variance
/// is too large for `k * sbar_N / sqrt(N) <= epsilon`.
pub fn variance_exceeds(mean: f64, mean_sq: f64, n: usize, epsilon: f64, k_sigma: f64) -> bool {
    mean_sq - mean * mean > (n as f64 - 1.0) * epsilon * epsilon / (k_sigma * k_sigma)
}

/// Adaptive sliced Wasserstein: add `s` slices at a time until the CLT
/// half-width drops below `epsilon` or more than `max_projections` slices
/// have been drawn.
///
/// The guard `N <= M` is checked before each batch, so the final count can
/// exceed `max_projections` by up to `s`.
pub fn swd_adaptive(
    p: &PointCloud,
    q: &PointCloud,
    cfg: &AswConfig,
    order: DistanceOrder,
    kind: ProjectionKind,
    rng: &SeededRng,
) -> Result<SlicedEstimate> {
    check_same_dim(p.dim(), q.dim())?;
    warn_outside_unit_ball(kind, [p, q]);
    let initial = slice_values(p, q, order, kind, rng, 0, cfg.n0);
    let (mut mean, mut mean_sq) = moments(&initial);
    let mut n = cfg.n0;
    while variance_exceeds(mean, mean_sq, n, cfg.epsilon, cfg.k_sigma) && n <= cfg.max_projections {
        let batch = slice_values(p, q, order, kind, rng, n, cfg.s);
        let (batch_mean, batch_sq) = moments(&batch);
        let (nf, sf) = (n as f64, cfg.s as f64);
        mean = (nf * mean + sf * batch_mean) / (nf + sf);
        mean_sq = (nf * mean_sq + sf * batch_sq) / (nf + sf);
        n += cfg.s;
    }
    Ok(SlicedEstimate {
        value: order.root(mean),
        mean_pth_power: mean,
        mean_sq,
        n_used: n,
        converged: !variance_exceeds(mean, mean_sq, n, cfg.epsilon, cfg.k_sigma),
        half_width: half_width(mean, mean_sq, n, cfg.k_sigma),
    })
}

fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&a, &b| match values[a].total_cmp(&values[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx
}

/// Projected `W_p^p` along `theta` and its Euclidean gradient in `theta`,
/// with the monotone coupling held fixed.
fn directional_objective(p: &PointCloud, q: &PointCloud, theta: &[f64], order: DistanceOrder) -> (f64, Vec<f64>) {
    let mut px = vec![0.0; p.len()];
    let mut qx = vec![0.0; q.len()];
    project_into(p, theta, ProjectionKind::Linear, &mut px);
    project_into(q, theta, ProjectionKind::Linear, &mut qx);
    let (ip, iq) = (argsort(&px), argsort(&qx));
    let norm = (p.len() * q.len()) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; theta.len()];
    for (a, b, w) in QuantileCoupling::new(p.len(), q.len()) {
        let (i, j) = (ip[a], iq[b]);
        let delta = px[i] - qx[j];
        let w = w as f64 / norm;
        value += w * order.cost(delta);
        let slope = match order.p() {
            1.0 => delta.signum() * (delta != 0.0) as u8 as f64,
            2.0 => 2.0 * delta,
            x => x * delta.abs().powf(x - 1.0) * delta.signum(),
        };
        for ((g, xa), yb) in grad.iter_mut().zip(p.point(i)).zip(q.point(j)) {
            *g += w * slope * (xa - yb);
        }
    }
    (value, grad)
}

fn projected_pth_power(p: &PointCloud, q: &PointCloud, theta: &[f64], order: DistanceOrder) -> f64 {
    slice_pth_power(p, q, theta, ProjectionKind::Linear, order)
}

const ASCENT_MIN_GAIN: f64 = 1e-10;
const ASCENT_MAX_STEPS: usize = 10_000;

fn renormalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|c| *c /= n);
}

/// Riemannian ascent on the sphere with backtracking, from one start.
fn ascend(p: &PointCloud, q: &PointCloud, start: Direction, order: DistanceOrder) -> (f64, Vec<f64>) {
    let mut theta = start.into_inner();
    let (mut value, mut grad) = directional_objective(p, q, &theta, order);
    let mut step = 0.5;
    for _ in 0..ASCENT_MAX_STEPS {
        let radial = dot(&grad, &theta);
        let mut tangent: Vec<f64> = grad.iter().zip(&theta).map(|(g, t)| g - radial * t).collect();
        let tnorm = dot(&tangent, &tangent).sqrt();
        if tnorm == 0.0 || !tnorm.is_finite() {
            break;
        }
        tangent.iter_mut().for_each(|t| *t /= tnorm);
        let mut accepted = None;
        while step > 1e-12 {
            let mut cand: Vec<f64> = theta.iter().zip(&tangent).map(|(t, d)| t + step * d).collect();
            renormalize(&mut cand);
            let cand_value = projected_pth_power(p, q, &cand, order);
            if cand_value > value {
                accepted = Some((cand, cand_value));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_value)) = accepted else {
            break;
        };
        let gain = cand_value - value;
        theta = cand;
        (value, grad) = directional_objective(p, q, &theta, order);
        step = (step * 2.0).min(1.0);
        if gain < ASCENT_MIN_GAIN {
            break;
        }
    }
    (value, theta)
}

/// Max-sliced Wasserstein distance by multi-start ascent over directions.
///
/// Returns `W_p` (not `W_p^p`) along the best direction found.
pub fn max_sliced(
    p: &PointCloud,
    q: &PointCloud,
    order: DistanceOrder,
    restarts: usize,
    rng: &SeededRng,
) -> Result<(f64, Direction)> {
    check_same_dim(p.dim(), q.dim())?;
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1".into()));
    }
    let dim = p.dim();
    let runs: Vec<(f64, Vec<f64>)> = (0..restarts as u64)
        .into_par_iter()
        .map(|r| ascend(p, q, slice_direction(rng, r, dim), order))
        .collect();
    let (best, theta) = runs
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one restart");
    Ok((order.root(best), Direction::normalize(theta)?))
}

/// Subgradient of the frozen-direction Monte Carlo `SW_p^p` with respect to
/// the points of `p`. Linear slices only; `p` in {1, 2}.
pub fn swd_grad(p: &PointCloud, q: &PointCloud, directions: &[Direction], order: DistanceOrder) -> Result<Gradient> {
    check_same_dim(p.dim(), q.dim())?;
    check_same_len(p.len(), q.len())?;
    if order != DistanceOrder::ONE && order != DistanceOrder::TWO {
        return Err(Error::UnsupportedOrder(order.p()));
    }
    if directions.is_empty() {
        return Err(Error::EmptyDirectionSet);
    }
    for theta in directions {
        check_same_dim(p.dim(), theta.dim())?;
    }
    let n = p.len();
    let scale = order.p() / (directions.len() * n) as f64;
    let partial: Vec<Vec<f64>> = directions
        .par_iter()
        .map(|theta| {
            let t = theta.components();
            let mut px = vec![0.0; n];
            let mut qx = vec![0.0; n];
            project_into(p, t, ProjectionKind::Linear, &mut px);
            project_into(q, t, ProjectionKind::Linear, &mut qx);
            let (ip, iq) = (argsort(&px), argsort(&qx));
            // per-point scalar coefficient along theta
            let mut coef = vec![0.0; n];
            for (&i, &j) in ip.iter().zip(&iq) {
                let delta = px[i] - qx[j];
                coef[i] = if order == DistanceOrder::TWO {
                    delta
                } else if delta == 0.0 {
                    0.0
                } else {
                    delta.signum()
                };
            }
            coef
        })
        .collect();
    let mut grad = Gradient::zeros(n, p.dim());
    for (theta, coef) in directions.iter().zip(&partial) {
        let t = theta.components();
        for (i, c) in coef.iter().enumerate() {
            for (g, tc) in grad.row_mut(i).iter_mut().zip(t) {
                *g += scale * c * tc;
            }
        }
    }
    Ok(grad)
}


/// Frozen-direction Monte Carlo `SW_p^p`: mean of the projected `W_p^p`
/// over the given linear slices.
pub fn frozen_slices_pth_power(p: &PointCloud, q: &PointCloud, directions: &[Direction], order: DistanceOrder) -> Result<f64> {
    check_same_dim(p.dim(), q.dim())?;
    if directions.is_empty() {
        return Err(Error::EmptyDirectionSet);
    }
    let mut total = 0.0;
    for theta in directions {
        check_same_dim(p.dim(), theta.dim())?;
        total += projected_pth_power(p, q, theta.components(), order);
    }
    Ok(total / directions.len() as f64)
}
