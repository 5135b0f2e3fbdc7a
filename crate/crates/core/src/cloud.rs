//! Point clouds, sphere directions, and the transport order `p`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_same_dim, Error, Result};
use crate::rng::SeededRng;

/// A finite multiset of `dim`-dimensional points, each carrying mass `1/len`.
///
/// Coordinates are stored row-major in one flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
}

impl PointCloud {
    /// Validates rows and infers the dimension from the first one.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyCloud)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(dim * rows.len());
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::RaggedRows {
                    line: i + 1,
                    expected: dim,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(dim, coords)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if coords.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::RaggedRows {
                line: coords.len() / dim + 1,
                expected: dim,
                found: coords.len() % dim,
            });
        }
        if let Some(k) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFiniteCoordinate {
                point: k / dim,
                axis: k % dim,
            });
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false for a validated cloud.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points().map(<[f64]>::to_vec).collect()
    }

    pub fn translated(&self, offset: &[f64]) -> Result<Self> {
        check_same_dim(self.dim, offset.len())?;
        let coords = self
            .coords
            .iter()
            .enumerate()
            .map(|(k, c)| c + offset[k % self.dim])
            .collect();
        Self::from_flat(self.dim, coords)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_flat(self.dim, self.coords.iter().map(|c| c * factor).collect())
    }

    /// Applies a row-major `dim x dim` matrix to every point.
    pub fn transformed(&self, matrix: &[f64]) -> Result<Self> {
        let d = self.dim;
        if matrix.len() != d * d {
            return Err(Error::InvalidParameter(format!(
                "expected a {d}x{d} matrix, got {} entries",
                matrix.len()
            )));
        }
        let mut coords = Vec::with_capacity(self.coords.len());
        for x in self.points() {
            for row in matrix.chunks_exact(d) {
                coords.push(dot(row, x));
            }
        }
        Self::from_flat(d, coords)
    }

    /// Moves every point by `-step * grad[i]`; used by the morphing loop.
    pub(crate) fn descend(&mut self, grad: &[f64], step: f64) {
        debug_assert_eq!(grad.len(), self.coords.len());
        for (c, g) in self.coords.iter_mut().zip(grad) {
            *c -= step * g;
        }
    }

    pub(crate) fn all_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }
}

/// Shorthand for [`PointCloud::from_rows`].
pub fn make_cloud<R: AsRef<[f64]>>(rows: &[R]) -> Result<PointCloud> {
    PointCloud::from_rows(rows)
}

/// A unit vector on the sphere `S^{d-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    /// Normalizes `v`. Fails on zero or non-finite input.
    pub fn normalize(mut v: Vec<f64>) -> Result<Self> {
        let norm = norm(&v);
        if !norm.is_finite() || norm == 0.0 || v.is_empty() {
            return Err(Error::InvalidParameter(
                "direction must be a finite non-zero vector".into(),
            ));
        }
        v.iter_mut().for_each(|c| *c /= norm);
        Ok(Self(v))
    }

    /// Accepts `v` as-is if its norm is within `NORM_TOLERANCE` of one.
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        if v.is_empty() || (norm(&v) - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::InvalidParameter("direction is not a unit vector".into()));
        }
        Ok(Self(v))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Transport order `p >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct DistanceOrder(f64);

impl DistanceOrder {
    pub const ONE: Self = Self(1.0);
    pub const TWO: Self = Self(2.0);

    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidParameter(format!("order p must be >= 1, got {p}")));
        }
        Ok(Self(p))
    }

    pub fn p(self) -> f64 {
        self.0
    }

    /// `|d|^p`, exact for p = 1 and p = 2.
    #[inline]
    pub fn cost(self, d: f64) -> f64 {
        if self.0 == 1.0 {
            d.abs()
        } else if self.0 == 2.0 {
            d * d
        } else {
            d.abs().powf(self.0)
        }
    }

    /// `x^(1/p)`.
    #[inline]
    pub fn root(self, x: f64) -> f64 {
        if self.0 == 1.0 {
            x
        } else if self.0 == 2.0 {
            x.sqrt()
        } else {
            x.powf(1.0 / self.0)
        }
    }

    /// Euclidean distance raised to the p-th power, from the squared distance.
    #[inline]
    pub(crate) fn cost_from_sq(self, sq: f64) -> f64 {
        if self.0 == 2.0 {
            sq
        } else if self.0 == 1.0 {
            sq.sqrt()
        } else {
            sq.sqrt().powf(self.0)
        }
    }
}

impl Default for DistanceOrder {
    fn default() -> Self {
        Self::ONE
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest pairwise Euclidean distance over `P ∪ Q`, computed exhaustively.
pub fn diameter(p: &PointCloud, q: &PointCloud) -> Result<f64> {
    check_same_dim(p.dim(), q.dim())?;
    let union: Vec<&[f64]> = p.points().chain(q.points()).collect();
    let mut best = 0.0f64;
    for (i, a) in union.iter().enumerate() {
        for b in &union[i + 1..] {
            best = best.max(sq_dist(a, b));
        }
    }
    Ok(best.sqrt())
}

/// Uniform direction on `S^{d-1}` from normalized standard normals.
pub fn sample_uniform_sphere(rng: &SeededRng, d: usize) -> Direction {
    assert!(d >= 1, "sphere dimension must be at least 1");
    let mut gen = rng.generator();
    loop {
        let v: Vec<f64> = (0..d).map(|_| gen.sample(StandardNormal)).collect();
        if let Ok(dir) = Direction::normalize(v) {
            return dir;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_cloud_basic() {
        let c = make_cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.dim(), 3);
        let dup = make_cloud(&[[0.0, 0.0], [0.0, 0.0]]).unwrap();
        assert_eq!(dup.len(), 2);
    }

    #[test]
    fn make_cloud_errors() {
        assert!(matches!(
            make_cloud(&[[0.0, 0.0, f64::NAN]]),
            Err(Error::NonFiniteCoordinate { point: 0, axis: 2 })
        ));
        let empty: [[f64; 3]; 0] = [];
        assert!(matches!(make_cloud(&empty), Err(Error::EmptyCloud)));
        let ragged = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0]];
        assert!(matches!(
            make_cloud(&ragged),
            Err(Error::RaggedRows { line: 2, .. })
        ));
    }

    #[test]
    fn diameter_examples() {
        let o = make_cloud(&[[0.0, 0.0, 0.0]]).unwrap();
        let x = make_cloud(&[[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(diameter(&o, &x).unwrap(), 1.0);
        assert_eq!(diameter(&o, &o).unwrap(), 0.0);
        let p = make_cloud(&[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]).unwrap();
        assert_eq!(diameter(&p, &o).unwrap(), 5.0);
        let flat = make_cloud(&[[0.0, 0.0]]).unwrap();
        assert!(matches!(diameter(&o, &flat), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn sphere_d1_is_sign() {
        for s in 0..32 {
            let d = sample_uniform_sphere(&SeededRng::from_seed(s), 1);
            assert!(d.components() == [1.0] || d.components() == [-1.0]);
        }
    }

    #[test]
    fn sphere_norm_and_determinism() {
        let rng = SeededRng::new(42, 9);
        let a = sample_uniform_sphere(&rng, 3);
        let b = sample_uniform_sphere(&rng, 3);
        assert_eq!(a, b);
        assert!((norm(a.components()) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn order_validation() {
        assert!(DistanceOrder::new(0.5).is_err());
        assert!(DistanceOrder::new(f64::NAN).is_err());
        assert_eq!(DistanceOrder::new(3.0).unwrap().cost(-2.0), 8.0);
    }

    #[test]
    fn direction_checks() {
        assert!(Direction::from_unit(vec![1.0, 1.0]).is_err());
        assert!(Direction::normalize(vec![0.0, 0.0]).is_err());
        let d = Direction::normalize(vec![3.0, 4.0]).unwrap();
        assert_eq!(d.components(), &[0.6, 0.8]);
    }
}
