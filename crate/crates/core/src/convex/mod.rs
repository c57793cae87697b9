//! Exact geometry of the fixed convex body `A`.
//!
//! Every body is nonempty, closed, convex and bounded. Balls, boxes and
//! ellipsoids are projected in closed form (the ellipsoid through a scalar
//! secular equation); half-space polytopes are projected with Dykstra's
//! alternating scheme, certified either by the KKT conditions of the
//! projection problem or by the iterate/violation stopping rule.

mod directions;
mod gap;
mod oracle;
mod polytope;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

pub use directions::sphere_directions;
pub use gap::{projection_gap_search, thin_segment, triangle, CounterexampleInstance, SEGMENT_THICKNESS};
pub use oracle::project_oracle;
pub use polytope::{HalfSpace, Polytope};

/// A point (or vector) of the state space.
pub type Point = DVector<f64>;

/// Largest supported state-space dimension.
pub const MAX_DIM: usize = 8;

/// Membership / projection tolerance for closed-form bodies.
pub const EXACT_TOL: f64 = 1e-10;

/// Stopping tolerance of the iterative (Dykstra) projection.
pub const ITERATIVE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {0} outside the supported range 1..=8")]
    BadDimension(usize),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("invalid body: {0}")]
    InvalidBody(String),
    #[error("projection did not converge after {iterations} sweeps (violation {violation:e})")]
    NonConvergence { iterations: usize, violation: f64 },
    #[error("support function needs a nonzero direction")]
    ZeroDirection,
    #[error("point lies {distance:e} outside the body; its normal cone is empty")]
    PointOutsideBody { distance: f64 },
    #[error("grid oracle supports dimension <= 3, got {0}")]
    DimensionTooLarge(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no counterexample found within {0} trials")]
    NotFound(usize),
}

pub(crate) fn check_point(p: &Point, what: &'static str) -> Result<(), ConvexError> {
    if p.is_empty() || p.len() > MAX_DIM {
        return Err(ConvexError::BadDimension(p.len()));
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(ConvexError::NonFinite(what));
    }
    Ok(())
}

fn check_dim(expected: usize, p: &Point) -> Result<(), ConvexError> {
    if p.len() != expected {
        return Err(ConvexError::DimensionMismatch { expected, got: p.len() });
    }
    Ok(())
}

/// Closed Euclidean ball. A zero radius is allowed (a single point).
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    center: Point,
    radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self, ConvexError> {
        check_point(&center, "ball center")?;
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(ConvexError::InvalidBody(format!("ball radius {radius} must be finite and >= 0")));
        }
        Ok(Self { center, radius })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Axis-aligned box `lower <= x <= upper`; `lower == upper` is allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lower: Point,
    upper: Point,
}

impl AxisBox {
    pub fn new(lower: Point, upper: Point) -> Result<Self, ConvexError> {
        check_point(&lower, "box lower corner")?;
        check_point(&upper, "box upper corner")?;
        check_dim(lower.len(), &upper)?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(ConvexError::InvalidBody("box needs lower <= upper componentwise".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &Point {
        &self.lower
    }

    pub fn upper(&self) -> &Point {
        &self.upper
    }
}

/// Ellipsoid `{x : (x-c)^T M^{-1} (x-c) <= 1}` for a symmetric positive-definite `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: Point,
    shape: DMatrix<f64>,
    inverse: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Ellipsoid {
    pub fn new(center: Point, shape: DMatrix<f64>) -> Result<Self, ConvexError> {
        check_point(&center, "ellipsoid center")?;
        let d = center.len();
        if shape.nrows() != d || shape.ncols() != d {
            return Err(ConvexError::DimensionMismatch { expected: d, got: shape.nrows() });
        }
        if shape.iter().any(|v| !v.is_finite()) {
            return Err(ConvexError::NonFinite("ellipsoid shape matrix"));
        }
        let asym = (&shape - shape.transpose()).amax();
        if asym > 1e-12 * (1.0 + shape.amax()) {
            return Err(ConvexError::InvalidBody("ellipsoid shape matrix must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(shape.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(ConvexError::InvalidBody("ellipsoid shape matrix must be positive definite".into()));
        }
        let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
        let inverse = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
        Ok(Self { center, shape, inverse, eigenvalues: eig.eigenvalues, eigenvectors: eig.eigenvectors })
    }

    pub fn center(&self) -> &Point {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    /// `M^{-1}`, used by the boundary oracle.
    pub fn inverse_shape(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    fn quadratic_form(&self, p: &Point) -> f64 {
        let y = p - &self.center;
        y.dot(&(&self.inverse * &y))
    }

    fn project(&self, p: &Point) -> Point {
        if self.quadratic_form(p) <= 1.0 {
            return p.clone();
        }
        // Work in the eigenbasis: minimise |x - y|^2 subject to sum x_i^2 / l_i <= 1.
        // The multiplier mu solves sum l_i y_i^2 / (l_i + mu)^2 = 1, a convex
        // decreasing equation on mu >= 0, so Newton from mu = 0 is monotone.
        let y = self.eigenvectors.transpose() * (p - &self.center);
        let l = &self.eigenvalues;
        let phi = |mu: f64| -> (f64, f64) {
            let mut val = -1.0;
            let mut der = 0.0;
            for i in 0..y.len() {
                let den = l[i] + mu;
                let t = l[i] * y[i] * y[i] / (den * den);
                val += t;
                der -= 2.0 * t / den;
            }
            (val, der)
        };
        let mut mu = 0.0_f64;
        for _ in 0..200 {
            let (val, der) = phi(mu);
            if val <= 0.0 || der == 0.0 {
                break;
            }
            let next = mu - val / der;
            if !(next > mu) || (next - mu) <= 1e-16 * next.max(1.0) {
                mu = next.max(mu);
                break;
            }
            mu = next;
        }
        let x = DVector::from_iterator(y.len(), (0..y.len()).map(|i| l[i] * y[i] / (l[i] + mu)));
        &self.center + &self.eigenvectors * x
    }
}

/// The fixed convex set `A` (and its translates).
#[derive(Debug, Clone, PartialEq)]
pub enum ConvexBody {
    Ball(Ball),
    Box(AxisBox),
    Polytope(Polytope),
    Ellipsoid(Ellipsoid),
}

impl ConvexBody {
    pub fn ball(center: Point, radius: f64) -> Result<Self, ConvexError> {
        Ball::new(center, radius).map(ConvexBody::Ball)
    }

    pub fn axis_box(lower: Point, upper: Point) -> Result<Self, ConvexError> {
        AxisBox::new(lower, upper).map(ConvexBody::Box)
    }

    pub fn polytope(rows: Vec<HalfSpace>, bounding_radius: f64, interior_point: Point) -> Result<Self, ConvexError> {
        Polytope::new(rows, bounding_radius, interior_point).map(ConvexBody::Polytope)
    }

    pub fn ellipsoid(center: Point, shape: DMatrix<f64>) -> Result<Self, ConvexError> {
        Ellipsoid::new(center, shape).map(ConvexBody::Ellipsoid)
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Ball(b) => b.center.len(),
            ConvexBody::Box(b) => b.lower.len(),
            ConvexBody::Polytope(p) => p.dim(),
            ConvexBody::Ellipsoid(e) => e.center.len(),
        }
    }

    /// Short lowercase name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            ConvexBody::Ball(_) => "ball",
            ConvexBody::Box(_) => "box",
            ConvexBody::Polytope(_) => "polytope",
            ConvexBody::Ellipsoid(_) => "ellipsoid",
        }
    }

    /// Tolerance the projection of this body is accurate to.
    pub fn tolerance(&self) -> f64 {
        match self {
            ConvexBody::Polytope(_) => ITERATIVE_TOL,
            _ => EXACT_TOL,
        }
    }

    /// The body `self + shift`.
    pub fn translated(&self, shift: &Point) -> Result<Self, ConvexError> {
        check_dim(self.dim(), shift)?;
        Ok(match self {
            ConvexBody::Ball(b) => ConvexBody::Ball(Ball { center: &b.center + shift, radius: b.radius }),
            ConvexBody::Box(b) => ConvexBody::Box(AxisBox { lower: &b.lower + shift, upper: &b.upper + shift }),
            ConvexBody::Polytope(p) => ConvexBody::Polytope(p.translated(shift)),
            ConvexBody::Ellipsoid(e) => {
                let mut e = e.clone();
                e.center += shift;
                ConvexBody::Ellipsoid(e)
            }
        })
    }

    /// Euclidean projection of `p` onto the body.
    pub fn project(&self, p: &Point) -> Result<Point, ConvexError> {
        check_dim(self.dim(), p)?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(ConvexError::NonFinite("projected point"));
        }
        Ok(match self {
            ConvexBody::Ball(b) => {
                let offset = p - &b.center;
                let norm = offset.norm();
                if norm <= b.radius {
                    p.clone()
                } else {
                    &b.center + offset * (b.radius / norm)
                }
            }
            ConvexBody::Box(b) => {
                DVector::from_iterator(p.len(), (0..p.len()).map(|i| p[i].clamp(b.lower[i], b.upper[i])))
            }
            ConvexBody::Polytope(poly) => poly.project(p, ITERATIVE_TOL)?,
            ConvexBody::Ellipsoid(e) => e.project(p),
        })
    }

    /// Projection onto `self + shift`, without building the translated body.
    pub fn project_translated(&self, p: &Point, shift: &Point) -> Result<Point, ConvexError> {
        check_dim(self.dim(), shift)?;
        Ok(self.project(&(p - shift))? + shift)
    }

    pub fn distance(&self, p: &Point) -> Result<f64, ConvexError> {
        Ok((p - self.project(p)?).norm())
    }

    /// Membership within `tol`, tested without projecting.
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        match self {
            ConvexBody::Ball(b) => (p - &b.center).norm() <= b.radius + tol,
            ConvexBody::Box(b) => (0..p.len()).all(|i| p[i] >= b.lower[i] - tol && p[i] <= b.upper[i] + tol),
            ConvexBody::Polytope(poly) => poly.max_violation(p) <= tol,
            ConvexBody::Ellipsoid(e) => e.quadratic_form(p).sqrt() <= 1.0 + tol,
        }
    }

    /// Support function `max_{c in B} <c, dir>`.
    pub fn support(&self, dir: &Point) -> Result<f64, ConvexError> {
        check_dim(self.dim(), dir)?;
        let norm = dir.norm();
        if !norm.is_finite() {
            return Err(ConvexError::NonFinite("support direction"));
        }
        if norm == 0.0 {
            return Err(ConvexError::ZeroDirection);
        }
        Ok(self.support_unchecked(dir))
    }

    pub(crate) fn support_unchecked(&self, dir: &Point) -> f64 {
        match self {
            ConvexBody::Ball(b) => b.center.dot(dir) + b.radius * dir.norm(),
            ConvexBody::Box(b) => (0..dir.len()).map(|i| (b.lower[i] * dir[i]).max(b.upper[i] * dir[i])).sum(),
            ConvexBody::Polytope(p) => p.support(dir),
            ConvexBody::Ellipsoid(e) => e.center.dot(dir) + dir.dot(&(&e.shape * dir)).max(0.0).sqrt(),
        }
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (Point, Point) {
        match self {
            ConvexBody::Ball(b) => (b.center.add_scalar(-b.radius), b.center.add_scalar(b.radius)),
            ConvexBody::Box(b) => (b.lower.clone(), b.upper.clone()),
            ConvexBody::Polytope(p) => p.bounding_box(),
            ConvexBody::Ellipsoid(e) => {
                let half = e.shape.diagonal().map(|v| v.sqrt());
                (&e.center - &half, &e.center + &half)
            }
        }
    }

    /// `sup_{b in B + shift} |b|`. Exact for balls, boxes and polytopes; an
    /// upper bound `|c + shift| + sqrt(lambda_max(M))` for ellipsoids.
    pub fn max_norm_translated(&self, shift: &Point) -> f64 {
        match self {
            ConvexBody::Ball(b) => (&b.center + shift).norm() + b.radius,
            ConvexBody::Box(b) => (0..shift.len())
                .map(|i| {
                    let lo = (b.lower[i] + shift[i]).abs();
                    let hi = (b.upper[i] + shift[i]).abs();
                    lo.max(hi).powi(2)
                })
                .sum::<f64>()
                .sqrt(),
            ConvexBody::Polytope(p) => {
                p.vertices().iter().map(|v| (v + shift).norm()).fold(0.0, f64::max)
            }
            ConvexBody::Ellipsoid(e) => (&e.center + shift).norm() + e.eigenvalues.max().sqrt(),
        }
    }
}

pub fn project(p: &Point, body: &ConvexBody) -> Result<Point, ConvexError> {
    body.project(p)
}

pub fn distance(p: &Point, body: &ConvexBody) -> Result<f64, ConvexError> {
    body.distance(p)
}

pub fn support(body: &ConvexBody, dir: &Point) -> Result<f64, ConvexError> {
    body.support(dir)
}

/// Hausdorff distance estimated as the largest support-function gap over
/// `n_dirs` deterministic unit directions (see [`sphere_directions`]).
///
/// The direction sets are nested, so the estimate never decreases with `n_dirs`.
pub fn hausdorff(a: &ConvexBody, b: &ConvexBody, n_dirs: usize) -> Result<f64, ConvexError> {
    if a.dim() != b.dim() {
        return Err(ConvexError::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    if n_dirs < 16 {
        return Err(ConvexError::InvalidArgument(format!("hausdorff needs n_dirs >= 16, got {n_dirs}")));
    }
    Ok(sphere_directions(a.dim(), n_dirs)
        .iter()
        .map(|v| (a.support_unchecked(v) - b.support_unchecked(v)).abs())
        .fold(0.0, f64::max))
}

/// `support(B, xi) - <xi, x>`: nonpositive (up to tolerance) exactly when
/// `xi` lies in the normal cone of `B` at `x`.
pub fn normal_cone_residual(body: &ConvexBody, x: &Point, xi: &Point) -> Result<f64, ConvexError> {
    check_dim(body.dim(), x)?;
    check_dim(body.dim(), xi)?;
    let dist = body.distance(x)?;
    let tol = 10.0 * body.tolerance();
    if dist > tol {
        return Err(ConvexError::PointOutsideBody { distance: dist });
    }
    if xi.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(body.support(xi)? - xi.dot(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn unit_ball() -> ConvexBody {
        ConvexBody::ball(dvector![0.0, 0.0], 1.0).unwrap()
    }

    fn square() -> ConvexBody {
        ConvexBody::axis_box(dvector![-1.0, -1.0], dvector![1.0, 1.0]).unwrap()
    }

    #[test]
    fn ball_projection_scales_radially() {
        let q = unit_ball().project(&dvector![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(q, dvector![1.0, 0.0], epsilon = 1e-15);
    }

    #[test]
    fn box_interior_point_is_fixed() {
        let p = dvector![0.3, 0.2];
        assert_eq!(square().project(&p).unwrap(), p);
    }

    #[test]
    fn distances() {
        assert_abs_diff_eq!(unit_ball().distance(&dvector![2.0, 0.0]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(unit_ball().distance(&dvector![0.0, 0.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(square().distance(&dvector![2.0, 2.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn support_values() {
        assert_abs_diff_eq!(unit_ball().support(&dvector![0.0, 3.0]).unwrap(), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(square().support(&dvector![1.0, 1.0]).unwrap(), 2.0, epsilon = 1e-15);
        let e = ConvexBody::ellipsoid(dvector![0.0, 0.0], DMatrix::from_diagonal(&dvector![4.0, 1.0])).unwrap();
        assert_abs_diff_eq!(e.support(&dvector![1.0, 0.0]).unwrap(), 2.0, epsilon = 1e-15);
        assert_eq!(unit_ball().support(&dvector![0.0, 0.0]), Err(ConvexError::ZeroDirection));
    }

    #[test]
    fn hausdorff_examples() {
        let shifted = ConvexBody::ball(dvector![0.5, 0.0], 1.0).unwrap();
        let big = ConvexBody::ball(dvector![0.0, 0.0], 2.0).unwrap();
        assert_eq!(hausdorff(&unit_ball(), &unit_ball(), 64).unwrap(), 0.0);
        assert_abs_diff_eq!(hausdorff(&unit_ball(), &shifted, 256).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(hausdorff(&unit_ball(), &big, 64).unwrap(), 1.0, epsilon = 1e-12);
        assert!(hausdorff(&unit_ball(), &big, 8).is_err());
    }

    #[test]
    fn normal_cone_residual_examples() {
        let r = normal_cone_residual(&unit_ball(), &dvector![1.0, 0.0], &dvector![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
        let r = normal_cone_residual(&unit_ball(), &dvector![0.0, 0.0], &dvector![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
        let r = normal_cone_residual(&square(), &dvector![1.0, 1.0], &dvector![1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-15);
        assert_eq!(normal_cone_residual(&unit_ball(), &dvector![0.5, 0.0], &dvector![0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            normal_cone_residual(&unit_ball(), &dvector![2.0, 0.0], &dvector![1.0, 0.0]),
            Err(ConvexError::PointOutsideBody { .. })
        ));
    }

    #[test]
    fn ellipsoid_projection_satisfies_optimality() {
        let shape = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let e = ConvexBody::ellipsoid(dvector![0.5, -0.2], shape).unwrap();
        for p in [dvector![3.0, 1.0], dvector![-2.0, 4.0], dvector![0.0, -5.0]] {
            let q = e.project(&p).unwrap();
            assert!(e.contains(&q, 1e-12));
            // variational inequality against boundary samples
            for k in 0..400 {
                let th = k as f64 * std::f64::consts::TAU / 400.0;
                let v = dvector![th.cos(), th.sin()];
                let c = e.project(&(&q + v * 10.0)).unwrap();
                assert!((&p - &q).dot(&(c - &q)) <= 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_bodies() {
        let point = ConvexBody::ball(dvector![1.0, 2.0], 0.0).unwrap();
        assert_eq!(point.project(&dvector![5.0, 5.0]).unwrap(), dvector![1.0, 2.0]);
        let flat = ConvexBody::axis_box(dvector![0.0, 1.0], dvector![0.0, 1.0]).unwrap();
        assert_eq!(flat.project(&dvector![-3.0, 7.0]).unwrap(), dvector![0.0, 1.0]);
    }

    #[test]
    fn invalid_bodies_are_rejected() {
        assert!(ConvexBody::ball(dvector![0.0], -1.0).is_err());
        assert!(ConvexBody::axis_box(dvector![1.0], dvector![0.0]).is_err());
        let indefinite = DMatrix::from_diagonal(&dvector![1.0, -1.0]);
        assert!(ConvexBody::ellipsoid(dvector![0.0, 0.0], indefinite).is_err());
        assert!(ConvexBody::ball(Point::zeros(9), 1.0).is_err());
    }

    #[test]
    fn max_norm_of_translates() {
        let b = unit_ball();
        assert_abs_diff_eq!(b.max_norm_translated(&dvector![0.5, 0.0]), 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(square().max_norm_translated(&dvector![1.0, 0.0]), 5f64.sqrt(), epsilon = 1e-15);
    }
}
