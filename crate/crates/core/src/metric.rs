//! Uniform front end over every distance in the crate.

use std::fmt;
use std::str::FromStr;

use crate::chamfer::{chamfer, modified_chamfer};
use crate::cloud::{DistanceOrder, PointCloud};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::sliced::{max_sliced, swd_adaptive, swd_monte_carlo, AswConfig, ProjectionKind, SlicingConfig};
use crate::wasserstein::{emd_exact, sinkhorn_approx, SinkhornConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Chamfer discrepancy.
    Cd,
    /// Max-variant Chamfer discrepancy.
    Mcd,
    Emd,
    Sinkhorn,
    Swd,
    Asw,
    Msw,
    Gsw,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Cd,
        Metric::Mcd,
        Metric::Emd,
        Metric::Sinkhorn,
        Metric::Swd,
        Metric::Asw,
        Metric::Msw,
        Metric::Gsw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Cd => "cd",
            Metric::Mcd => "mcd",
            Metric::Emd => "emd",
            Metric::Sinkhorn => "sinkhorn",
            Metric::Swd => "swd",
            Metric::Asw => "asw",
            Metric::Msw => "msw",
            Metric::Gsw => "gsw",
        }
    }

    /// Order used when none is given. Chamfer variants always use squared
    /// norms and ignore `p`.
    pub fn default_order(self) -> DistanceOrder {
        match self {
            Metric::Emd | Metric::Sinkhorn => DistanceOrder::ONE,
            _ => DistanceOrder::TWO,
        }
    }

    pub fn requires_equal_sizes(self) -> bool {
        matches!(self, Metric::Emd)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metric `{s}`")))
    }
}

#[derive(Debug, Clone)]
pub struct MetricParams {
    /// `None` selects [`Metric::default_order`].
    pub order: Option<DistanceOrder>,
    pub slices: usize,
    pub asw: AswConfig,
    pub restarts: usize,
    pub rng: SeededRng,
    /// `None` selects [`SinkhornConfig::scaled_to`].
    pub sinkhorn: Option<SinkhornConfig>,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            order: None,
            slices: 100,
            asw: AswConfig::default(),
            restarts: 16,
            rng: SeededRng::default(),
            sinkhorn: None,
        }
    }
}

/// One evaluated distance. Optional fields are filled only by the metrics
/// that produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: Metric,
    pub value: f64,
    pub p: f64,
    pub n_slices: Option<usize>,
    pub n_used: Option<usize>,
    pub converged: Option<bool>,
    pub half_width: Option<f64>,
    pub direction: Option<Vec<f64>>,
}

impl MetricReport {
    fn plain(metric: Metric, value: f64, order: DistanceOrder) -> Self {
        Self {
            metric,
            value,
            p: order.p(),
            n_slices: None,
            n_used: None,
            converged: None,
            half_width: None,
            direction: None,
        }
    }
}

/// Evaluates `metric` between `p` and `q`. Sinkhorn reports the p-th root
/// of its transport cost so it is on the same scale as `emd`.
pub fn evaluate(metric: Metric, p: &PointCloud, q: &PointCloud, params: &MetricParams) -> Result<MetricReport> {
    let order = params.order.unwrap_or(metric.default_order());
    let report = match metric {
        Metric::Cd => MetricReport::plain(metric, chamfer(p, q)?, DistanceOrder::TWO),
        Metric::Mcd => MetricReport::plain(metric, modified_chamfer(p, q)?, DistanceOrder::TWO),
        Metric::Emd => MetricReport::plain(metric, emd_exact(p, q, order)?.0, order),
        Metric::Sinkhorn => {
            let cfg = match params.sinkhorn {
                Some(cfg) => cfg,
                None => SinkhornConfig::scaled_to(p, q, order)?,
            };
            MetricReport::plain(metric, order.root(sinkhorn_approx(p, q, order, &cfg)?), order)
        }
        Metric::Swd | Metric::Gsw => {
            let kind = if metric == Metric::Gsw {
                ProjectionKind::Circular
            } else {
                ProjectionKind::Linear
            };
            let cfg = SlicingConfig::new(params.slices, order, params.rng)?.with_projection(kind);
            let est = swd_monte_carlo(p, q, &cfg)?;
            MetricReport {
                n_slices: Some(params.slices),
                ..MetricReport::plain(metric, est.value, order)
            }
        }
        Metric::Asw => {
            let est = swd_adaptive(p, q, &params.asw, order, ProjectionKind::Linear, &params.rng)?;
            MetricReport {
                n_used: Some(est.n_used),
                converged: Some(est.converged),
                half_width: Some(est.half_width),
                ..MetricReport::plain(metric, est.value, order)
            }
        }
        Metric::Msw => {
            let (value, dir) = max_sliced(p, q, order, params.restarts, &params.rng)?;
            MetricReport {
                direction: Some(dir.into_inner()),
                ..MetricReport::plain(metric, value, order)
            }
        }
    };
    Ok(report)
}
