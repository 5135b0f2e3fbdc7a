//! Gradient-descent morphing of a source cloud toward a target, with exact
//! EMD to the target logged as the convergence yardstick.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::chamfer::{chamfer, chamfer_grad};
use crate::cloud::{DistanceOrder, PointCloud};
use crate::error::{check_same_dim, check_same_len, Error, Result};
use crate::gradient::Gradient;
use crate::io::format_real;
use crate::rng::SeededRng;
use crate::sliced::{frozen_slices_pth_power, max_sliced, slice_directions, swd_grad};
use crate::wasserstein::{emd_exact, matching_grad, CostMatrix, hungarian};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Chamfer,
    Emd,
    Swd,
    Msw,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cd" | "chamfer" => Ok(LossKind::Chamfer),
            "emd" => Ok(LossKind::Emd),
            "swd" => Ok(LossKind::Swd),
            "msw" => Ok(LossKind::Msw),
            _ => Err(Error::InvalidParameter(format!("unknown loss `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphConfig {
    pub loss: LossKind,
    pub step_size: f64,
    pub max_iters: usize,
    /// Directions drawn per step for the `swd` loss.
    pub swd_slices: usize,
    pub eval_every: usize,
    /// Stop once EMD (W_1) to the target is at or below this.
    pub emd_stop: f64,
    pub rng: SeededRng,
    /// Order for the `emd`, `swd` and `msw` losses; 1 or 2.
    pub order: DistanceOrder,
    /// Reuse one direction set for the whole run instead of resampling.
    pub frozen_directions: bool,
    pub msw_restarts: usize,
}

impl MorphConfig {
    pub const DEFAULT_EMD_STOP: f64 = 0.05;

    pub fn new(loss: LossKind, step_size: f64, max_iters: usize) -> Result<Self> {
        let cfg = Self {
            loss,
            step_size,
            max_iters,
            swd_slices: 100,
            eval_every: 10,
            emd_stop: Self::DEFAULT_EMD_STOP,
            rng: SeededRng::default(),
            order: DistanceOrder::TWO,
            frozen_directions: false,
            msw_restarts: 4,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter("step_size must be positive".into()));
        }
        if self.max_iters == 0 || self.eval_every == 0 || self.swd_slices == 0 || self.msw_restarts == 0 {
            return Err(Error::InvalidParameter(
                "max_iters, eval_every, swd_slices and msw_restarts must be positive".into(),
            ));
        }
        if !(self.emd_stop >= 0.0) {
            return Err(Error::InvalidParameter("emd_stop must be non-negative".into()));
        }
        if self.order != DistanceOrder::ONE && self.order != DistanceOrder::TWO {
            return Err(Error::UnsupportedOrder(self.order.p()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub emd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MorphTrace {
    pub rows: Vec<TraceRow>,
    pub final_cloud: PointCloud,
    /// First evaluated iteration with EMD at or below `emd_stop`.
    pub iterations_to_stop: Option<usize>,
}

impl MorphTrace {
    /// `iter,loss,emd` with empty cells where EMD was not evaluated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,loss,emd\n");
        for row in &self.rows {
            let emd = row.emd.map(format_real).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", row.iteration, format_real(row.loss), emd);
        }
        out
    }

    /// EMD logged at `iteration`, if it was evaluated.
    pub fn emd_at(&self, iteration: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.iteration == iteration)
            .and_then(|r| r.emd)
    }
}

fn loss_and_grad(x: &PointCloud, target: &PointCloud, cfg: &MorphConfig, iteration: usize) -> Result<(f64, Gradient)> {
    match cfg.loss {
        LossKind::Chamfer => Ok((chamfer(x, target)?, chamfer_grad(x, target)?)),
        LossKind::Emd => {
            let cost = CostMatrix::new(x, target, cfg.order)?;
            let assignment = hungarian(&cost);
            let value = assignment.mean_cost(&cost);
            Ok((value, matching_grad(x, target, &assignment, cfg.order)))
        }
        LossKind::Swd => {
            let stream = if cfg.frozen_directions {
                cfg.rng
            } else {
                cfg.rng.derive(iteration as u64)
            };
            let dirs = slice_directions(&stream, cfg.swd_slices, x.dim());
            let value = frozen_slices_pth_power(x, target, &dirs, cfg.order)?;
            Ok((value, swd_grad(x, target, &dirs, cfg.order)?))
        }
        LossKind::Msw => {
            let (value, theta) = max_sliced(x, target, cfg.order, cfg.msw_restarts, &cfg.rng.derive(iteration as u64))?;
            let grad = swd_grad(x, target, std::slice::from_ref(&theta), cfg.order)?;
            Ok((cfg.order.cost(value), grad))
        }
    }
}

/// Runs [`morph`] and calls `observe(iteration, cloud)` at every iteration
/// where EMD to the target is evaluated.
pub fn morph_with_observer<F>(source: &PointCloud, target: &PointCloud, cfg: &MorphConfig, mut observe: F) -> Result<MorphTrace>
where
    F: FnMut(usize, &PointCloud) -> Result<()>,
{
    cfg.validate()?;
    check_same_dim(source.dim(), target.dim())?;
    if matches!(cfg.loss, LossKind::Emd | LossKind::Swd | LossKind::Msw) {
        check_same_len(source.len(), target.len())?;
    }
    let emd_defined = source.len() == target.len();
    let mut x = source.clone();
    let mut rows = Vec::new();
    let mut iterations_to_stop = None;
    for iteration in 0..=cfg.max_iters {
        if !x.all_finite() {
            return Err(Error::DivergedLoss { iteration });
        }
        let (loss, grad) = match loss_and_grad(&x, target, cfg, iteration) {
            Err(Error::InvalidParameter(_)) if iteration > 0 => return Err(Error::DivergedLoss { iteration }),
            other => other?,
        };
        if !loss.is_finite() {
            return Err(Error::DivergedLoss { iteration });
        }
        let evaluate = emd_defined && (iteration % cfg.eval_every == 0 || iteration == cfg.max_iters);
        let emd = if evaluate {
            observe(iteration, &x)?;
            Some(emd_exact(&x, target, DistanceOrder::ONE)?.0)
        } else {
            None
        };
        rows.push(TraceRow { iteration, loss, emd });
        if emd.is_some_and(|e| e <= cfg.emd_stop) {
            iterations_to_stop = Some(iteration);
            break;
        }
        if iteration == cfg.max_iters {
            break;
        }
        x.descend(grad.as_flat(), cfg.step_size);
    }
    Ok(MorphTrace {
        rows,
        final_cloud: x,
        iterations_to_stop,
    })
}

/// Plain fixed-step gradient descent `x <- x - step * grad loss(x, target)`.
pub fn morph(source: &PointCloud, target: &PointCloud, cfg: &MorphConfig) -> Result<MorphTrace> {
    morph_with_observer(source, target, cfg, |_, _| Ok(()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    /// Unit sphere surface.
    Sphere,
    /// Surface of the cube `[-1, 1]^3`.
    Cube,
    /// Torus with major radius 1 and minor radius 0.3 around the z axis.
    Torus,
    /// Planar annulus with radii 0.5 and 1.
    Annulus2d,
}

pub const TORUS_MAJOR: f64 = 1.0;
pub const TORUS_MINOR: f64 = 0.3;
pub const ANNULUS_INNER: f64 = 0.5;
pub const ANNULUS_OUTER: f64 = 1.0;

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(ShapeKind::Sphere),
            "cube" => Ok(ShapeKind::Cube),
            "torus" => Ok(ShapeKind::Torus),
            "annulus2d" => Ok(ShapeKind::Annulus2d),
            _ => Err(Error::InvalidParameter(format!("unknown shape `{s}`"))),
        }
    }
}

/// `n` points uniform on the named shape, centered at the origin.
pub fn sample_shape(kind: ShapeKind, n: usize, rng: &SeededRng) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut g = rng.generator();
    let mut coords = Vec::with_capacity(3 * n);
    let dim = if kind == ShapeKind::Annulus2d { 2 } else { 3 };
    for _ in 0..n {
        match kind {
            ShapeKind::Sphere => loop {
                let v: [f64; 3] = [g.sample(StandardNormal), g.sample(StandardNormal), g.sample(StandardNormal)];
                let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if r > 1e-12 {
                    coords.extend(v.iter().map(|c| c / r));
                    break;
                }
            },
            ShapeKind::Cube => {
                // faces have equal area
                let face = g.random_range(0..6usize);
                let axis = face % 3;
                let side = if face < 3 { -1.0 } else { 1.0 };
                let mut p = [g.random_range(-1.0..=1.0), g.random_range(-1.0..=1.0), 0.0];
                p.swap(axis, 2);
                p[axis] = side;
                coords.extend_from_slice(&p);
            }
            ShapeKind::Torus => {
                let u = g.random_range(0.0..TAU);
                // area element is proportional to R + r cos v
                let v = loop {
                    let v = g.random_range(0.0..TAU);
                    let w: f64 = g.random_range(0.0..TORUS_MAJOR + TORUS_MINOR);
                    if w <= TORUS_MAJOR + TORUS_MINOR * v.cos() {
                        break v;
                    }
                };
                let ring = TORUS_MAJOR + TORUS_MINOR * v.cos();
                coords.extend_from_slice(&[ring * u.cos(), ring * u.sin(), TORUS_MINOR * v.sin()]);
            }
            ShapeKind::Annulus2d => {
                let (a, b) = (ANNULUS_INNER * ANNULUS_INNER, ANNULUS_OUTER * ANNULUS_OUTER);
                let r = g.random_range(a..b).sqrt();
                let t = g.random_range(0.0..TAU);
                coords.extend_from_slice(&[r * t.cos(), r * t.sin()]);
            }
        }
    }
    PointCloud::from_flat(dim, coords)
}
