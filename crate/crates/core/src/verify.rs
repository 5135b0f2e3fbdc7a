//! Fuzzed invariant suites. Every trial draws from `rng.derive(trial)`, so a
//! reported counterexample is reproduced by its seed and stream id alone.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chamfer::{chamfer, chamfer_grad, nearest_neighbors, NnStrategy};
use crate::cloud::{diameter, dot, sq_dist, DistanceOrder, PointCloud};
use crate::error::{Error, Result};
use crate::gradient::Gradient;
use crate::rng::SeededRng;
use crate::sliced::{
    frozen_slices_pth_power, slice_directions, swd_adaptive, swd_grad, swd_monte_carlo, variance_exceeds, AswConfig,
    ProjectionKind, SlicingConfig,
};
use crate::wasserstein::{emd_exact, hungarian, matching_grad, CostMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemma1,
    MetricAxioms,
    SwLeWd,
    GradCheck,
    AswCoverage,
    All,
}

impl Suite {
    pub const EACH: [Suite; 5] = [
        Suite::Lemma1,
        Suite::MetricAxioms,
        Suite::SwLeWd,
        Suite::GradCheck,
        Suite::AswCoverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemma1 => "lemma1",
            Suite::MetricAxioms => "metric-axioms",
            Suite::SwLeWd => "sw-le-wd",
            Suite::GradCheck => "grad-check",
            Suite::AswCoverage => "asw-coverage",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown suite `{s}`")))
    }
}

/// A failing trial with the clouds that triggered it.
#[derive(Debug, Clone)]
pub struct Counterexample {
    pub trial: usize,
    pub rng: SeededRng,
    pub message: String,
    pub clouds: Vec<PointCloud>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    /// Trials that ran to completion without a failure or a miss.
    pub passes: usize,
    pub failures: Vec<Counterexample>,
    /// Fraction of runs inside the tolerance, for `asw-coverage`.
    pub coverage: Option<f64>,
}

/// Minimum empirical coverage accepted by `asw-coverage`.
pub const MIN_COVERAGE: f64 = 0.90;

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs one suite, or every suite for [`Suite::All`].
pub fn run(suite: Suite, trials: usize, rng: &SeededRng) -> Result<Vec<SuiteReport>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let suites: Vec<Suite> = if suite == Suite::All {
        Suite::EACH.to_vec()
    } else {
        vec![suite]
    };
    suites.into_iter().map(|s| run_one(s, trials, rng)).collect()
}

fn run_one(suite: Suite, trials: usize, rng: &SeededRng) -> Result<SuiteReport> {
    let check: fn(&SeededRng) -> Result<Trial> = match suite {
        Suite::Lemma1 => lemma1_trial,
        Suite::MetricAxioms => axioms_trial,
        Suite::SwLeWd => sw_le_wd_trial,
        Suite::GradCheck => grad_trial,
        Suite::AswCoverage => coverage_trial,
        Suite::All => unreachable!(),
    };
    let mut failures = Vec::new();
    let mut covered = 0usize;
    for trial in 0..trials {
        let stream = rng.derive(trial as u64);
        match check(&stream)? {
            Trial::Pass => covered += 1,
            Trial::Miss => {}
            Trial::Fail(message, clouds) => failures.push(Counterexample {
                trial,
                rng: stream,
                message,
                clouds,
            }),
        }
    }
    let coverage = (suite == Suite::AswCoverage).then(|| covered as f64 / trials as f64);
    if let Some(c) = coverage.filter(|&c| c < MIN_COVERAGE) {
        failures.push(Counterexample {
            trial: trials,
            rng: *rng,
            message: format!("coverage {c} below {MIN_COVERAGE}"),
            clouds: Vec::new(),
        });
    }
    Ok(SuiteReport {
        suite,
        trials,
        passes: covered,
        failures,
        coverage,
    })
}

enum Trial {
    Pass,
    /// Not a failure on its own; counts against coverage.
    Miss,
    Fail(String, Vec<PointCloud>),
}

fn fail(message: String, clouds: &[&PointCloud]) -> Trial {
    Trial::Fail(message, clouds.iter().map(|c| (*c).clone()).collect())
}

/// `n` points with coordinates uniform in `[-1, 1]`.
pub fn random_cloud(g: &mut ChaCha8Rng, n: usize, dim: usize) -> PointCloud {
    let coords = (0..n * dim).map(|_| g.random_range(-1.0..=1.0)).collect();
    PointCloud::from_flat(dim, coords).expect("finite coordinates")
}

fn lemma1_trial(rng: &SeededRng) -> Result<Trial> {
    let mut g = rng.generator();
    let n = g.random_range(1..=9);
    let dim = g.random_range(2..=3);
    let (p, q) = (random_cloud(&mut g, n, dim), random_cloud(&mut g, n, dim));
    let cd = chamfer(&p, &q)?;
    let k = diameter(&p, &q)?;
    let matching_cost = n as f64 * emd_exact(&p, &q, DistanceOrder::ONE)?.0;
    let bound = 2.0 * k * matching_cost;
    Ok(if cd <= bound + 1e-9 {
        Trial::Pass
    } else {
        fail(format!("chamfer {cd} > 2K n W_1 = {bound}"), &[&p, &q])
    })
}

fn axioms_trial(rng: &SeededRng) -> Result<Trial> {
    let mut g = rng.generator();
    let n = g.random_range(1..=8);
    let dim = g.random_range(1..=3);
    let p = random_cloud(&mut g, n, dim);
    let q = random_cloud(&mut g, n, dim);
    let r = random_cloud(&mut g, n, dim);
    for order in [DistanceOrder::ONE, DistanceOrder::TWO] {
        let w = |a: &PointCloud, b: &PointCloud| emd_exact(a, b, order).map(|(v, _)| v);
        let (pq, qp, qr, pr) = (w(&p, &q)?, w(&q, &p)?, w(&q, &r)?, w(&p, &r)?);
        if (pq - qp).abs() > 1e-12 {
            return Ok(fail(format!("W_{} asymmetric: {pq} vs {qp}", order.p()), &[&p, &q]));
        }
        if w(&p, &p)? != 0.0 {
            return Ok(fail(format!("W_{}(P, P) != 0", order.p()), &[&p]));
        }
        if pr > pq + qr + 1e-9 {
            return Ok(fail(format!("W_{} triangle: {pr} > {pq} + {qr}", order.p()), &[&p, &q, &r]));
        }
        if pq < 0.0 {
            return Ok(fail(format!("W_{} negative", order.p()), &[&p, &q]));
        }
    }
    // chamfer vanishes on a pair of distinct clouds with the same support
    let mut doubled = p.to_rows();
    doubled.push(doubled[0].clone());
    let doubled = PointCloud::from_rows(&doubled)?;
    let cd = chamfer(&p, &doubled)?;
    if cd != 0.0 || chamfer(&p, &q)? != chamfer(&q, &p)? {
        return Ok(fail(format!("chamfer pseudo-distance witness gave {cd}"), &[&p, &doubled]));
    }
    Ok(Trial::Pass)
}

fn sw_le_wd_trial(rng: &SeededRng) -> Result<Trial> {
    let mut g = rng.generator();
    let n = g.random_range(1..=8);
    let dim = g.random_range(1..=4);
    let (p, q) = (random_cloud(&mut g, n, dim), random_cloud(&mut g, n, dim));
    for order in [DistanceOrder::ONE, DistanceOrder::TWO] {
        let wd = emd_exact(&p, &q, order)?.0;
        for slices in [1, 10, 100] {
            let cfg = SlicingConfig::new(slices, order, rng.derive(slices as u64))?;
            let sw = swd_monte_carlo(&p, &q, &cfg)?.value;
            if sw > wd + 1e-9 {
                return Ok(fail(
                    format!("SW_{} = {sw} > W_{} = {wd} with N = {slices}", order.p(), order.p()),
                    &[&p, &q],
                ));
            }
        }
    }
    Ok(Trial::Pass)
}

/// Relative tolerance of the finite-difference gradient check.
pub const GRAD_RTOL: f64 = 1e-4;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
const MARGIN: f64 = 1e-3;

/// Central differences of `f` in every coordinate of `p`.
pub fn finite_difference<F>(p: &PointCloud, mut f: F) -> Result<Gradient>
where
    F: FnMut(&PointCloud) -> Result<f64>,
{
    let mut grad = Gradient::zeros(p.len(), p.dim());
    let mut coords = p.as_flat().to_vec();
    for k in 0..coords.len() {
        let x = coords[k];
        coords[k] = x + FD_STEP;
        let plus = f(&PointCloud::from_flat(p.dim(), coords.clone())?)?;
        coords[k] = x - FD_STEP;
        let minus = f(&PointCloud::from_flat(p.dim(), coords.clone())?)?;
        coords[k] = x;
        grad.row_mut(k / p.dim())[k % p.dim()] = (plus - minus) / (2.0 * FD_STEP);
    }
    Ok(grad)
}

/// `max |a - b| / max(max |b|, 1e-8)`.
pub fn relative_error(analytic: &Gradient, numeric: &Gradient) -> f64 {
    let diff = analytic
        .as_flat()
        .iter()
        .zip(numeric.as_flat())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    diff / numeric.max_abs().max(1e-8)
}

fn nn_gap_ok(p: &PointCloud, q: &PointCloud) -> bool {
    let nn = nearest_neighbors(p, q, NnStrategy::BruteForce);
    p.points().zip(&nn).all(|(x, best)| {
        q.points()
            .enumerate()
            .all(|(j, y)| j == best.index || sq_dist(x, y) - best.sq_dist > MARGIN)
    })
}

/// True when the best matching beats every other by more than the margin.
fn unique_matching(cost: &CostMatrix) -> bool {
    let best = hungarian(cost).mean_cost(cost) * cost.rows() as f64;
    let n = cost.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut counters = vec![0usize; n];
    let mut second = f64::INFINITY;
    let mut seen_best = false;
    let mut visit = |perm: &[usize]| {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
        if !seen_best && (c - best).abs() <= 1e-12 {
            seen_best = true;
        } else {
            second = second.min(c);
        }
    };
    visit(&perm);
    let mut k = 1;
    while k < n {
        if counters[k] < k {
            perm.swap(if k % 2 == 0 { 0 } else { counters[k] }, k);
            visit(&perm);
            counters[k] += 1;
            k = 1;
        } else {
            counters[k] = 0;
            k += 1;
        }
    }
    second - best > MARGIN
}

fn projections_separated(p: &PointCloud, q: &PointCloud, theta: &[f64], order: DistanceOrder) -> bool {
    let mut px: Vec<f64> = p.points().map(|x| dot(x, theta)).collect();
    let mut qx: Vec<f64> = q.points().map(|y| dot(y, theta)).collect();
    px.sort_unstable_by(f64::total_cmp);
    qx.sort_unstable_by(f64::total_cmp);
    let spread = px.windows(2).all(|w| w[1] - w[0] > MARGIN);
    let off_kink = order == DistanceOrder::TWO || px.iter().zip(&qx).all(|(a, b)| (a - b).abs() > MARGIN);
    spread && off_kink
}

fn grad_trial(rng: &SeededRng) -> Result<Trial> {
    let mut g = rng.generator();
    // resample until the instance is away from every tie
    for _ in 0..100 {
        let n = g.random_range(2..=8);
        let dim = g.random_range(2..=3);
        let order = if g.random_bool(0.5) { DistanceOrder::TWO } else { DistanceOrder::ONE };
        let (p, q) = (random_cloud(&mut g, n, dim), random_cloud(&mut g, n, dim));
        let cost = CostMatrix::new(&p, &q, order)?;
        let directions = slice_directions(&rng.derive(1), 10, dim);
        if !(nn_gap_ok(&p, &q) && nn_gap_ok(&q, &p) && unique_matching(&cost)) {
            continue;
        }
        if !directions
            .iter()
            .all(|t| projections_separated(&p, &q, t.components(), order))
        {
            continue;
        }
        let checks: [(&str, Gradient, Gradient); 3] = [
            ("chamfer", chamfer_grad(&p, &q)?, finite_difference(&p, |x| chamfer(x, &q))?),
            (
                "emd",
                matching_grad(&p, &q, &hungarian(&cost), order),
                finite_difference(&p, |x| {
                    let c = CostMatrix::new(x, &q, order)?;
                    Ok(hungarian(&c).mean_cost(&c))
                })?,
            ),
            (
                "swd",
                swd_grad(&p, &q, &directions, order)?,
                finite_difference(&p, |x| frozen_slices_pth_power(x, &q, &directions, order))?,
            ),
        ];
        for (name, analytic, numeric) in checks {
            let err = relative_error(&analytic, &numeric);
            if !(err <= GRAD_RTOL) {
                return Ok(fail(format!("{name} gradient relative error {err} (p = {})", order.p()), &[&p, &q]));
            }
        }
        return Ok(Trial::Pass);
    }
    Ok(Trial::Miss)
}

fn coverage_trial(rng: &SeededRng) -> Result<Trial> {
    let mut g = rng.generator();
    let x = random_cloud(&mut g, 1, 3);
    let v = crate::cloud::sample_uniform_sphere(&rng.derive(0), 3);
    let y: Vec<f64> = x.point(0).iter().zip(v.components()).map(|(a, b)| a + b).collect();
    let y = PointCloud::from_flat(3, y)?;
    let cfg = AswConfig::default();
    for (order, truth) in [(DistanceOrder::TWO, 1.0 / 3.0), (DistanceOrder::ONE, 0.5)] {
        let est = swd_adaptive(&x, &y, &cfg, order, ProjectionKind::Linear, &rng.derive(1))?;
        if est.converged && variance_exceeds(est.mean_pth_power, est.mean_sq, est.n_used, cfg.epsilon, cfg.k_sigma) {
            return Ok(fail("converged return violates the stopping guard".into(), &[&x, &y]));
        }
        if (est.mean_pth_power - truth).abs() > cfg.epsilon {
            return Ok(Trial::Miss);
        }
    }
    Ok(Trial::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_small() {
        let reports = run(Suite::All, 20, &SeededRng::from_seed(3)).unwrap();
        assert_eq!(reports.len(), 5);
        for r in reports {
            assert!(r.passed(), "{}: {:?}", r.suite, r.failures.first().map(|f| &f.message));
        }
    }

    #[test]
    fn names_round_trip() {
        for s in Suite::EACH {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
        let grad = run(Suite::GradCheck, 50, &SeededRng::from_seed(9)).unwrap();
        assert!(grad[0].passes >= 45, "{}", grad[0].passes);
        assert!(run(Suite::Lemma1, 0, &SeededRng::default()).is_err());
    }

    #[test]
    fn fd_detects_wrong_gradient() {
        let p = random_cloud(&mut SeededRng::from_seed(1).generator(), 3, 2);
        let q = random_cloud(&mut SeededRng::from_seed(2).generator(), 3, 2);
        let numeric = finite_difference(&p, |x| chamfer(x, &q)).unwrap();
        let zero = Gradient::zeros(3, 2);
        assert!(relative_error(&zero, &numeric) > GRAD_RTOL);
    }
}
