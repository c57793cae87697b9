//! Randomized checks of the projection inequalities the integrator relies on,
//! plus trajectory-level checks of the step bound and the Moreau inequality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catchup::{self, CatchupError};
use crate::convex::{projection_gap_search, ConvexBody, ConvexError, HalfSpace, Point};
use crate::scenario::SweepingScenario;

/// Slack every inequality must keep.
pub const SLACK_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    /// Smallest `rhs - lhs` observed.
    pub worst_slack: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &'static str, instances: usize, worst_slack: f64) -> Self {
        Self { name, instances, worst_slack, passed: worst_slack >= SLACK_FLOOR }
    }
}

fn gaussian_unit<R: Rng>(rng: &mut R, d: usize) -> Point {
    loop {
        let v = Point::from_iterator(d, (0..d).map(|_| rng.gen_range(-1.0..=1.0)));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random ball, box or polytope in dimension `d`, with coordinates of order one.
pub fn random_body<R: Rng>(rng: &mut R, d: usize) -> Result<ConvexBody, ConvexError> {
    let center = Point::from_iterator(d, (0..d).map(|_| rng.gen_range(-1.0..=1.0)));
    match rng.gen_range(0..3) {
        0 => ConvexBody::ball(center, rng.gen_range(0.1..=1.5)),
        1 => {
            let half = Point::from_iterator(d, (0..d).map(|_| rng.gen_range(0.05..=1.0)));
            ConvexBody::axis_box(&center - &half, &center + &half)
        }
        _ => {
            let extra = rng.gen_range(1..=d + 3);
            let mut rows = Vec::with_capacity(2 * d + extra);
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut e = Point::zeros(d);
                    e[i] = sign;
                    rows.push(HalfSpace::new(e.clone(), sign * center[i] + 1.0));
                }
            }
            for _ in 0..extra {
                let a = gaussian_unit(rng, d);
                let off = a.dot(&center) + rng.gen_range(0.2..=1.0);
                rows.push(HalfSpace::new(a, off));
            }
            ConvexBody::polytope(rows, 1.01 * (d as f64).sqrt(), center)
        }
    }
}

fn random_point<R: Rng>(rng: &mut R, d: usize, half_width: f64) -> Point {
    Point::from_iterator(d, (0..d).map(|_| rng.gen_range(-half_width..=half_width)))
}

/// Nonexpansiveness `|proj(u,C) - proj(ū,C)| <= |u - ū|` and the translation
/// bound `|proj(u,C) - proj(u,C+c)| <= |c|` on `count` random instances with
/// `d` uniform in `1..=max_dim`.
pub fn projection_suite(seed: u64, count: usize, max_dim: usize) -> Result<[CheckOutcome; 2], ConvexError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut nonexp, mut transl) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..count {
        let d = rng.gen_range(1..=max_dim);
        let body = random_body(&mut rng, d)?;
        let u = random_point(&mut rng, d, 3.0);
        let v = random_point(&mut rng, d, 3.0);
        let shift = random_point(&mut rng, d, 1.0);
        let pu = body.project(&u)?;
        let pv = body.project(&v)?;
        nonexp = nonexp.min((&u - &v).norm() - (&pu - &pv).norm());
        let moved = body.project_translated(&u, &shift)?;
        transl = transl.min(shift.norm() - (&pu - &moved).norm());
    }
    Ok([CheckOutcome::new("nonexpansiveness", count, nonexp), CheckOutcome::new("translation_bound", count, transl)])
}

/// `|proj(u,C) - proj(u,D)| <= sqrt(2(dist(u,C) + dist(u,D))) sqrt(d_H(C,D))`
/// on pairs whose Hausdorff distance is known exactly: two balls, or a body
/// and a translate of it.
pub fn sqrt_bound_suite(seed: u64, count: usize, max_dim: usize) -> Result<CheckOutcome, ConvexError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for k in 0..count {
        let d = rng.gen_range(1..=max_dim);
        let u = random_point(&mut rng, d, 3.0);
        let (c, dd, dh) = if k % 2 == 0 {
            let (c1, c2) = (random_point(&mut rng, d, 1.0), random_point(&mut rng, d, 1.0));
            let (r1, r2) = (rng.gen_range(0.1..=1.5), rng.gen_range(0.1..=1.5));
            let dh = (&c1 - &c2).norm() + f64::abs(r1 - r2);
            (ConvexBody::ball(c1, r1)?, ConvexBody::ball(c2, r2)?, dh)
        } else {
            let body = random_body(&mut rng, d)?;
            let shift = random_point(&mut rng, d, 1.0);
            let moved = body.translated(&shift)?;
            (body, moved, shift.norm())
        };
        let lhs = (c.project(&u)? - dd.project(&u)?).norm();
        let bound = (2.0 * (c.distance(&u)? + dd.distance(&u)?)).sqrt() * dh.sqrt();
        worst = worst.min(bound - lhs);
    }
    Ok(CheckOutcome::new("sqrt_hausdorff_bound", count, worst))
}

/// The naive Hausdorff bound fails: a planar instance with ratio >= 1.1 is
/// found within `budget` trials and still obeys the square-root bound.
pub fn counterexample_check(seed: u64, budget: usize) -> Result<(CheckOutcome, f64), ConvexError> {
    let inst = projection_gap_search(seed, budget)?;
    let slack = inst.sqrt_bound()? - inst.lhs;
    Ok((CheckOutcome::new("hausdorff_counterexample", 1, slack), inst.ratio()))
}

/// Step bound and Moreau inequality on one trajectory of the scenario.
pub fn trajectory_checks(scn: &SweepingScenario, lambda: f64, q: &Point, n: usize) -> Result<[CheckOutcome; 2], CatchupError> {
    let traj = catchup::run(scn, lambda, q, n)?;
    let step_slack = traj.per_step.iter().map(|s| s.bound + catchup::STEP_BOUND_SLACK - s.step_increment).fold(f64::INFINITY, f64::min);
    let moreau = catchup::moreau_residual(&traj, scn)? + catchup::moreau_epsilon(&traj);
    Ok([
        CheckOutcome { name: "step_bound", instances: n, worst_slack: step_slack, passed: step_slack >= 0.0 },
        CheckOutcome { name: "moreau_inequality", instances: 1, worst_slack: moreau, passed: moreau >= 0.0 },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_on_small_samples() {
        for c in projection_suite(3, 300, 4).unwrap() {
            assert!(c.passed, "{c:?}");
        }
        assert!(sqrt_bound_suite(3, 300, 4).unwrap().passed);
        let (c, ratio) = counterexample_check(1, 10_000).unwrap();
        assert!(c.passed && ratio >= 1.1);
    }

    #[test]
    fn random_bodies_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let d = rng.gen_range(1..=4);
            let body = random_body(&mut rng, d).unwrap();
            assert_eq!(body.dim(), d);
        }
    }
}
