use nalgebra::{DMatrix, DVector};

use super::{check_dim, check_point, ConvexError, Point};

/// Sweep budget of the Dykstra iteration.
const DYKSTRA_BUDGET: usize = 100_000;

/// Upper bound on vertex-enumeration work at construction.
const MAX_VERTEX_SUBSETS: u128 = 5_000_000;

/// Closed half-space `<normal, x> <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub normal: Point,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Point, offset: f64) -> Self {
        Self { normal, offset }
    }

    fn violation(&self, p: &Point) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// Bounded polytope `{x : <n_i, x> <= b_i}`.
///
/// Construction enumerates the vertices of the polytope intersected with a
/// cube of half-width `2 * bounding_radius` around the interior point. All of
/// them must lie within `bounding_radius` of that point, which certifies both
/// boundedness and the declared radius. The vertices are kept for exact
/// support-function evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    rows: Vec<HalfSpace>,
    norms_sq: Vec<f64>,
    bounding_radius: f64,
    interior_point: Point,
    vertices: Vec<Point>,
}

impl Polytope {
    pub fn new(rows: Vec<HalfSpace>, bounding_radius: f64, interior_point: Point) -> Result<Self, ConvexError> {
        check_point(&interior_point, "polytope interior point")?;
        let d = interior_point.len();
        if rows.is_empty() {
            return Err(ConvexError::InvalidBody("polytope needs at least one half-space".into()));
        }
        if !(bounding_radius.is_finite() && bounding_radius > 0.0) {
            return Err(ConvexError::InvalidBody("polytope bounding radius must be positive".into()));
        }
        let mut norms_sq = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            check_dim(d, &row.normal)?;
            if row.normal.iter().any(|v| !v.is_finite()) || !row.offset.is_finite() {
                return Err(ConvexError::NonFinite("polytope row"));
            }
            let n2 = row.normal.norm_squared();
            if n2 == 0.0 {
                return Err(ConvexError::InvalidBody(format!("row {i} has a zero normal")));
            }
            norms_sq.push(n2);
        }
        let scale = 1.0 + interior_point.amax() + bounding_radius;
        for (i, row) in rows.iter().enumerate() {
            let v = row.violation(&interior_point) / norms_sq[i].sqrt();
            if v > 1e-12 * scale {
                return Err(ConvexError::InvalidBody(format!(
                    "interior point violates row {i} by {v:e}; feasibility is not certified"
                )));
            }
        }
        let mut poly = Self { rows, norms_sq, bounding_radius, interior_point, vertices: Vec::new() };
        poly.vertices = poly.enumerate_vertices()?;
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.interior_point.len()
    }

    pub fn rows(&self) -> &[HalfSpace] {
        &self.rows
    }

    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    pub fn interior_point(&self) -> &Point {
        &self.interior_point
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub(super) fn translated(&self, shift: &Point) -> Self {
        Self {
            rows: self
                .rows
                .iter()
                .map(|r| HalfSpace { normal: r.normal.clone(), offset: r.offset + r.normal.dot(shift) })
                .collect(),
            norms_sq: self.norms_sq.clone(),
            bounding_radius: self.bounding_radius,
            interior_point: &self.interior_point + shift,
            vertices: self.vertices.iter().map(|v| v + shift).collect(),
        }
    }

    /// Largest row violation, measured as a Euclidean distance to the half-space.
    pub fn max_violation(&self, p: &Point) -> f64 {
        self.rows
            .iter()
            .zip(&self.norms_sq)
            .map(|(r, n2)| r.violation(p) / n2.sqrt())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub(super) fn support(&self, dir: &Point) -> f64 {
        self.vertices.iter().map(|v| v.dot(dir)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub(super) fn bounding_box(&self) -> (Point, Point) {
        let d = self.dim();
        let mut lo = Point::from_element(d, f64::INFINITY);
        let mut hi = Point::from_element(d, f64::NEG_INFINITY);
        for v in &self.vertices {
            for i in 0..d {
                lo[i] = lo[i].min(v[i]);
                hi[i] = hi[i].max(v[i]);
            }
        }
        (lo, hi)
    }

    fn enumerate_vertices(&self) -> Result<Vec<Point>, ConvexError> {
        let d = self.dim();
        let half = 2.0 * self.bounding_radius;
        let mut all: Vec<(Point, f64)> = self.rows.iter().map(|r| (r.normal.clone(), r.offset)).collect();
        for i in 0..d {
            let mut e = Point::zeros(d);
            e[i] = 1.0;
            all.push((e.clone(), self.interior_point[i] + half));
            all.push((-e, -(self.interior_point[i] - half)));
        }
        let m = all.len();
        if binomial(m, d) > MAX_VERTEX_SUBSETS {
            return Err(ConvexError::InvalidBody(format!(
                "{} half-spaces in dimension {d} exceed the vertex-enumeration budget",
                self.rows.len()
            )));
        }
        let scale = 1.0 + self.interior_point.amax() + self.bounding_radius;
        let feas_tol = 1e-9 * scale;
        let mut vertices = Vec::new();
        let mut idx: Vec<usize> = (0..d).collect();
        loop {
            if let Some(v) = solve_subset(&all, &idx) {
                let feasible = all.iter().all(|(n, b)| n.dot(&v) - b <= feas_tol * n.norm().max(1.0));
                if feasible {
                    let r = (&v - &self.interior_point).norm();
                    if r > self.bounding_radius * (1.0 + 1e-9) + feas_tol {
                        return Err(ConvexError::InvalidBody(format!(
                            "polytope is unbounded or exceeds its bounding radius ({r:.6e} > {:.6e})",
                            self.bounding_radius
                        )));
                    }
                    if !vertices.iter().any(|w: &Point| (w - &v).amax() <= feas_tol) {
                        vertices.push(v);
                    }
                }
            }
            if !next_combination(&mut idx, m) {
                break;
            }
        }
        if vertices.is_empty() {
            return Err(ConvexError::InvalidBody("polytope has no vertices".into()));
        }
        Ok(vertices)
    }

    /// Dykstra projection onto the intersection of the half-spaces.
    ///
    /// Accepted once either (a) an active-set KKT solve certifies optimality,
    /// or (b) successive sweeps move the iterate and the corrections by at
    /// most `tol/10` each and every violation is at most `tol`.
    pub(super) fn project(&self, p: &Point, tol: f64) -> Result<Point, ConvexError> {
        if self.max_violation(p) <= 0.0 {
            return Ok(p.clone());
        }
        let m = self.rows.len();
        let mut x = p.clone();
        let mut increments = vec![Point::zeros(p.len()); m];
        for sweep in 1..=DYKSTRA_BUDGET {
            let prev = x.clone();
            let mut corrections_moved = 0.0;
            for (i, row) in self.rows.iter().enumerate() {
                let z = &x + &increments[i];
                let v = row.violation(&z);
                let next = if v > 0.0 { &z - &row.normal * (v / self.norms_sq[i]) } else { z.clone() };
                let inc = z - &next;
                corrections_moved += (&inc - &increments[i]).norm();
                increments[i] = inc;
                x = next;
            }
            if sweep <= 4 || sweep % 16 == 0 {
                if let Some(y) = self.kkt_polish(p, &x) {
                    return Ok(y);
                }
            }
            let moved = (&x - &prev).norm();
            // the iterate can sit still for a sweep while the corrections are still moving
            if moved <= tol / 10.0 && corrections_moved <= tol / 10.0 && self.max_violation(&x) <= tol {
                return Ok(self.kkt_polish(p, &x).unwrap_or(x));
            }
        }
        Err(ConvexError::NonConvergence { iterations: DYKSTRA_BUDGET, violation: self.max_violation(&x) })
    }

    /// Guess the active set from an approximate projection `x`, solve the
    /// equality-constrained problem exactly and return it if it satisfies the
    /// KKT conditions (feasible, nonnegative multipliers).
    fn kkt_polish(&self, p: &Point, x: &Point) -> Option<Point> {
        let scale = 1.0 + p.amax();
        for &gap in &[1e-10, 1e-7, 1e-4] {
            let active: Vec<usize> = (0..self.rows.len())
                .filter(|&i| self.rows[i].violation(x) / self.norms_sq[i].sqrt() >= -gap * scale)
                .collect();
            if active.is_empty() || active.len() > 2 * self.dim() {
                continue;
            }
            let k = active.len();
            let a = DMatrix::from_fn(k, p.len(), |r, c| self.rows[active[r]].normal[c]);
            let rhs = DVector::from_fn(k, |r, _| self.rows[active[r]].violation(p));
            let gram = &a * a.transpose();
            let mu = match gram.clone().svd(true, true).solve(&rhs, 1e-12 * gram.amax()) {
                Ok(mu) => mu,
                Err(_) => continue,
            };
            if mu.iter().any(|&v| v < -1e-12 * (1.0 + mu.amax())) {
                continue;
            }
            let y = p - a.transpose() * &mu;
            let residual = (&a * &y - DVector::from_fn(k, |r, _| self.rows[active[r]].offset)).amax();
            if residual <= 1e-11 * scale && self.max_violation(&y) <= 1e-12 * scale {
                return Some(y);
            }
        }
        None
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Intersection point of the hyperplanes `rows[idx]`, if they are independent.
fn solve_subset(rows: &[(Point, f64)], idx: &[usize]) -> Option<Point> {
    let d = idx.len();
    let mut a = [[0.0f64; 9]; 8];
    for (r, &i) in idx.iter().enumerate() {
        for c in 0..d {
            a[r][c] = rows[i].0[c];
        }
        a[r][d] = rows[i].1;
    }
    for col in 0..d {
        let piv = (col..d).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        let row_scale = (0..d).map(|c| a[piv][c].abs()).fold(0.0, f64::max);
        if a[piv][col].abs() <= 1e-12 * row_scale.max(1e-300) {
            return None;
        }
        a.swap(col, piv);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=d {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    Some(Point::from_iterator(d, (0..d).map(|r| a[r][d] / a[r][r])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexBody;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn simplex() -> ConvexBody {
        ConvexBody::polytope(
            vec![
                HalfSpace::new(dvector![1.0, 1.0], 1.0),
                HalfSpace::new(dvector![-1.0, 0.0], 0.0),
                HalfSpace::new(dvector![0.0, -1.0], 0.0),
            ],
            2.0,
            dvector![0.25, 0.25],
        )
        .unwrap()
    }

    #[test]
    fn simplex_vertices() {
        let ConvexBody::Polytope(p) = simplex() else { unreachable!() };
        assert_eq!(p.vertices().len(), 3);
    }

    #[test]
    fn simplex_projection_matches_grid_value() {
        // (0.5, 0.5) is the grid-oracle answer at step 1e-3.
        let q = simplex().project(&dvector![0.9, 0.9]).unwrap();
        assert_abs_diff_eq!(q, dvector![0.5, 0.5], epsilon = 1e-12);
        let q = simplex().project(&dvector![-1.0, -2.0]).unwrap();
        assert_abs_diff_eq!(q, dvector![0.0, 0.0], epsilon = 1e-12);
    }

    #[test]
    fn unbounded_or_infeasible_polytopes_are_rejected() {
        let halfplane = ConvexBody::polytope(vec![HalfSpace::new(dvector![1.0, 0.0], 1.0)], 5.0, dvector![0.0, 0.0]);
        assert!(halfplane.is_err());
        let outside = ConvexBody::polytope(
            vec![HalfSpace::new(dvector![1.0, 1.0], 1.0), HalfSpace::new(dvector![-1.0, 0.0], 0.0), HalfSpace::new(dvector![0.0, -1.0], 0.0)],
            2.0,
            dvector![2.0, 2.0],
        );
        assert!(outside.is_err());
        // radius too small for the declared body
        let tight = ConvexBody::polytope(
            vec![HalfSpace::new(dvector![1.0, 1.0], 1.0), HalfSpace::new(dvector![-1.0, 0.0], 0.0), HalfSpace::new(dvector![0.0, -1.0], 0.0)],
            0.1,
            dvector![0.25, 0.25],
        );
        assert!(tight.is_err());
    }

    #[test]
    fn support_and_translation() {
        let s = simplex();
        assert_abs_diff_eq!(s.support(&dvector![1.0, 1.0]).unwrap(), 1.0, epsilon = 1e-14);
        let t = s.translated(&dvector![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(t.support(&dvector![1.0, 0.0]).unwrap(), 2.0, epsilon = 1e-14);
        let q = t.project(&dvector![1.9, 0.9]).unwrap();
        assert_abs_diff_eq!(q, dvector![1.5, 0.5], epsilon = 1e-12);
    }

    #[test]
    fn thin_segment_projection() {
        // segment from (0,0) to (1,0) thickened to 1e-6
        let eps = 1e-6;
        let seg = ConvexBody::polytope(
            vec![
                HalfSpace::new(dvector![0.0, 1.0], eps / 2.0),
                HalfSpace::new(dvector![0.0, -1.0], eps / 2.0),
                HalfSpace::new(dvector![1.0, 0.0], 1.0),
                HalfSpace::new(dvector![-1.0, 0.0], 0.0),
            ],
            2.0,
            dvector![0.5, 0.0],
        )
        .unwrap();
        let q = seg.project(&dvector![0.3, 4.0]).unwrap();
        assert_abs_diff_eq!(q, dvector![0.3, eps / 2.0], epsilon = 1e-12);
        let q = seg.project(&dvector![3.0, -1.0]).unwrap();
        assert_abs_diff_eq!(q, dvector![1.0, -eps / 2.0], epsilon = 1e-12);
    }

    #[test]
    fn combination_walk_covers_all_subsets() {
        let mut idx = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut idx, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(binomial(20, 4), 4845);
    }

    #[test]
    fn stalled_iterate_is_not_mistaken_for_convergence() {
        // the Dykstra iterate is unchanged after the first sweep here while the
        // corrections are not
        let a = [
            [1.0, 0.0],
            [-1.0, 0.0],
            [0.0, 1.0],
            [0.0, -1.0],
            [-0.9135126620354275, 0.4068102952248712],
            [0.9428777230550708, 0.3331390090735177],
            [0.904596256757259, 0.42626941276703745],
            [-0.4216333916420847, -0.9067663883561148],
            [0.7895551094841772, -0.6136796632506482],
        ];
        let b = [
            0.42529740270411953,
            1.5747025972958806,
            0.1507757462755288,
            1.8492242537244712,
            1.116285201085593,
            -0.36237324495525375,
            -0.15997194821245708,
            1.9820328924771724,
            0.6452103486923839,
        ];
        let rows = a.iter().zip(b).map(|(r, o)| HalfSpace::new(dvector![r[0], r[1]], o)).collect();
        let body = ConvexBody::polytope(rows, 1.5, dvector![-0.5747025972958806, -0.8492242537244712]).unwrap();
        let u = dvector![1.8761840625992985, -2.304655626319091];
        let q = body.project(&u).unwrap();
        let oracle = crate::convex::project_oracle(&u, &body, 1e-3).unwrap();
        assert!((&q - &oracle).norm() <= 3e-3, "{q:?} vs {oracle:?}");
        assert!((&u - &q).norm() <= (&u - &oracle).norm() + 1e-9);
    }
}
