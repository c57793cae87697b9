use nalgebra::dvector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{hausdorff, ConvexBody, ConvexError, HalfSpace, Point};

/// Thickness given to planar segments so they become proper polytopes.
pub const SEGMENT_THICKNESS: f64 = 1e-6;

/// Directions used for the Hausdorff distance inside the search.
const SEARCH_DIRECTIONS: usize = 2048;

/// Ratio `lhs / rhs` an instance must reach to be reported.
const REQUIRED_RATIO: f64 = 1.1;

/// A probe point and two bodies whose projections differ by more than the
/// Hausdorff distance between the bodies.
#[derive(Debug, Clone)]
pub struct CounterexampleInstance {
    pub u: Point,
    pub c: ConvexBody,
    pub d: ConvexBody,
    /// `|proj(u, C) - proj(u, D)|`
    pub lhs: f64,
    /// `d_H(C, D)`
    pub rhs: f64,
}

impl CounterexampleInstance {
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }

    /// `sqrt(2 (dist(u,C) + dist(u,D))) * sqrt(d_H(C,D))`, which does bound `lhs`.
    pub fn sqrt_bound(&self) -> Result<f64, ConvexError> {
        let dc = self.c.distance(&self.u)?;
        let dd = self.d.distance(&self.u)?;
        Ok((2.0 * (dc + dd)).sqrt() * self.rhs.sqrt())
    }
}

/// Planar segment `[a, b]` as a rectangle of the given thickness.
pub fn thin_segment(a: &Point, b: &Point, thickness: f64) -> Result<ConvexBody, ConvexError> {
    if a.len() != 2 || b.len() != 2 {
        return Err(ConvexError::InvalidArgument("segments are planar".into()));
    }
    let along = b - a;
    let len = along.norm();
    if len == 0.0 {
        return Err(ConvexError::InvalidBody("segment endpoints coincide".into()));
    }
    let t = along / len;
    let n = dvector![-t[1], t[0]];
    let rows = vec![
        HalfSpace::new(n.clone(), n.dot(a) + thickness / 2.0),
        HalfSpace::new(-&n, -n.dot(a) + thickness / 2.0),
        HalfSpace::new(t.clone(), t.dot(b)),
        HalfSpace::new(-&t, -t.dot(a)),
    ];
    let mid = (a + b) / 2.0;
    ConvexBody::polytope(rows, 0.51 * len + thickness, mid)
}

/// Planar triangle with the given vertices (any orientation).
pub fn triangle(p0: &Point, p1: &Point, p2: &Point) -> Result<ConvexBody, ConvexError> {
    let cross = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0]);
    if cross == 0.0 {
        return Err(ConvexError::InvalidBody("collinear triangle".into()));
    }
    let verts: [&Point; 3] = if cross > 0.0 { [p0, p1, p2] } else { [p0, p2, p1] };
    let mut rows = Vec::with_capacity(3);
    for k in 0..3 {
        let (a, b) = (verts[k], verts[(k + 1) % 3]);
        let n = dvector![b[1] - a[1], -(b[0] - a[0])];
        let off = n.dot(a);
        rows.push(HalfSpace::new(n, off));
    }
    let centroid = (p0 + p1 + p2) / 3.0;
    let radius = verts.iter().map(|v| (*v - &centroid).norm()).fold(0.0, f64::max);
    ConvexBody::polytope(rows, 1.01 * radius + 1e-9, centroid)
}

fn random_point<R: Rng>(rng: &mut R, half_width: f64) -> Point {
    dvector![rng.gen_range(-half_width..half_width), rng.gen_range(-half_width..half_width)]
}

fn random_body<R: Rng>(rng: &mut R) -> Result<ConvexBody, ConvexError> {
    let a = random_point(rng, 1.0);
    let b = random_point(rng, 1.0);
    if rng.gen_bool(0.5) {
        let c = random_point(rng, 1.0);
        let area2 = ((&b - &a)[0] * (&c - &a)[1] - (&b - &a)[1] * (&c - &a)[0]).abs();
        if area2 > 0.1 {
            return triangle(&a, &b, &c);
        }
    }
    thin_segment(&a, &b, SEGMENT_THICKNESS)
}

/// Randomized search over planar segment/triangle pairs and probe points for
/// an instance with `|proj(u,C) - proj(u,D)| >= 1.1 d_H(C,D)`.
pub fn projection_gap_search(seed: u64, budget: usize) -> Result<CounterexampleInstance, ConvexError> {
    if budget < 1000 {
        return Err(ConvexError::InvalidArgument(format!("search budget must be >= 1000, got {budget}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        let c = match random_body(&mut rng) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let d = match random_body(&mut rng) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let u = random_point(&mut rng, 3.0);
        let lhs = (c.project(&u)? - d.project(&u)?).norm();
        let rhs = hausdorff(&c, &d, SEARCH_DIRECTIONS)?;
        if rhs > 1e-9 && lhs >= REQUIRED_RATIO * rhs {
            return Ok(CounterexampleInstance { u, c, d, lhs, rhs });
        }
    }
    Err(ConvexError::NotFound(budget))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn search_finds_an_instance() {
        let inst = projection_gap_search(1, 10_000).unwrap();
        assert!(inst.lhs > inst.rhs);
        assert!(inst.ratio() >= 1.1);
        assert!(inst.lhs <= inst.sqrt_bound().unwrap());
    }

    #[test]
    fn identical_bodies_have_no_gap() {
        let c = thin_segment(&dvector![0.0, 0.0], &dvector![1.0, 0.0], SEGMENT_THICKNESS).unwrap();
        let u = dvector![0.4, 3.0];
        assert_eq!((c.project(&u).unwrap() - c.project(&u).unwrap()).norm(), 0.0);
        assert_eq!(hausdorff(&c, &c, 64).unwrap(), 0.0);
    }

    #[test]
    fn small_budget_is_rejected() {
        assert!(projection_gap_search(1, 10).is_err());
    }
}
