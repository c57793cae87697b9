//! Discrete Poincaré map `q ↦ x_n(T)`, periodic-orbit search, planar
//! degree, and continuation in λ.

use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use thiserror::Error;

use crate::catchup::{self, CatchupError, Trajectory};
use crate::convex::{Ball, ConvexBody, Point};
use crate::scenario::{ScenarioError, SweepingScenario};

pub use crate::catchup::generalized_ic;

/// Default `n` ladder of [`find_periodic`].
pub const DEFAULT_N_SCHEDULE: [usize; 3] = [128, 512, 2048];

/// Damping factors tried in order when Picard iteration stalls.
pub const DAMPING: [f64; 3] = [1.0, 0.5, 0.25];

/// Iterations without a new best residual after which a damping level is abandoned.
const STALL_WINDOW: usize = 50;

pub const MIN_MESH: usize = 64;
pub const MAX_MESH: usize = 1 << 12;

/// Below this the winding number of `q - P(V(q))` is refused.
pub const MIN_FIELD_NORM: f64 = 1e-9;

/// Half side of the square used for the degree check of a found orbit.
const CHECK_HALF_SIDE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoincareError {
    #[error("periodic search at lambda = {lambda} did not converge (best residual {best_residual:e})")]
    NoConvergence { lambda: f64, best_residual: f64, best_q: Point },
    #[error("q - P(V(q)) nearly vanishes on the polygon (min norm {min_field_norm:e}); degree undefined")]
    FieldVanishesOnBoundary { min_field_norm: f64 },
    #[error("angle increments still exceed pi/2 at mesh {mesh} per edge")]
    MeshExhausted { mesh: usize },
    #[error("degree is only defined for planar scenarios, got dimension {0}")]
    NotPlanar(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Catchup(#[from] CatchupError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeResult {
    pub degree: i64,
    pub min_field_norm: f64,
    /// Mesh points per edge actually used.
    pub mesh_points: usize,
    pub polygon: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub q_star: Point,
    pub trajectory: Trajectory,
    /// `|x(T) - x(0)|`
    pub residual: f64,
    pub n_used: usize,
    pub lambda: f64,
    pub picard_iterations: usize,
    /// Degree on a small square around `q_star` (planar scenarios only).
    pub degree_check: Option<Result<DegreeResult, PoincareError>>,
}

/// `P^{λ,n}(q) = x_n(T)` of the trajectory started at `V(q)`.
pub fn poincare_map(scn: &SweepingScenario, lambda: f64, n: usize, q: &Point) -> Result<Point, PoincareError> {
    Ok(catchup::run(scn, lambda, q, n)?.terminal().clone())
}

fn check_schedule(n_schedule: &[usize]) -> Result<(), PoincareError> {
    if n_schedule.is_empty() || n_schedule.contains(&0) || n_schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PoincareError::InvalidArgument("n schedule must be a non-empty ascending list of positive integers".into()));
    }
    Ok(())
}

/// Periodic orbit search started from the fixed point of `c(·, λ)`.
pub fn find_periodic(
    scn: &SweepingScenario,
    lambda: f64,
    tol: f64,
    n_schedule: &[usize],
    max_picard: usize,
) -> Result<PeriodicOrbit, PoincareError> {
    let xi = scn.contraction_fixed_point(lambda, 1e-13)?;
    find_periodic_from(scn, lambda, &xi, tol, n_schedule, max_picard)
}

/// Fixed-point iteration `q ← q + β (P(V(q)) - V(q))` projected onto the
/// closed Ω ball, run for each `n` of the schedule in turn. The finest `n`
/// must reach `|x(T) - x(0)| <= tol`.
pub fn find_periodic_from(
    scn: &SweepingScenario,
    lambda: f64,
    q0: &Point,
    tol: f64,
    n_schedule: &[usize],
    max_picard: usize,
) -> Result<PeriodicOrbit, PoincareError> {
    check_schedule(n_schedule)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(PoincareError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if max_picard == 0 {
        return Err(PoincareError::InvalidArgument("max_picard must be >= 1".into()));
    }
    let omega = scn.omega_region(lambda)?;
    let step_tol = (tol / 100.0).min(1e-10);
    let mut q = clamp(&omega, q0);
    let mut total_iters = 0;
    let mut last_best = (f64::INFINITY, q.clone());
    for (stage, &n) in n_schedule.iter().enumerate() {
        let finest = stage + 1 == n_schedule.len();
        let (best_r, best_q, best_traj, iters) = picard_stage(scn, lambda, &omega, &q, n, tol, step_tol, max_picard)?;
        total_iters += iters;
        q = best_q.clone();
        last_best = (best_r, best_q);
        if finest && best_r <= tol {
            let degree_check = (scn.dim() == 2).then(|| {
                let c = &best_traj.x_nodes[0];
                let h = CHECK_HALF_SIDE;
                let square: Vec<Point> = [(-h, -h), (h, -h), (h, h), (-h, h)]
                    .iter()
                    .map(|&(dx, dy)| Point::from_vec(vec![c[0] + dx, c[1] + dy]))
                    .collect();
                degree_2d(scn, lambda, n, &square, MIN_MESH)
            });
            return Ok(PeriodicOrbit {
                q_star: best_traj.x_nodes[0].clone(),
                residual: best_r,
                trajectory: best_traj,
                n_used: n,
                lambda,
                picard_iterations: total_iters,
                degree_check,
            });
        }
    }
    Err(PoincareError::NoConvergence { lambda, best_residual: last_best.0, best_q: last_best.1 })
}

fn clamp(omega: &Ball, q: &Point) -> Point {
    let offset = q - omega.center();
    let r = offset.norm();
    if r <= omega.radius() {
        q.clone()
    } else {
        omega.center() + offset * (omega.radius() / r)
    }
}

/// Returns the best `(residual, V(q), trajectory)` seen at this `n` and the iteration count.
#[allow(clippy::too_many_arguments)]
fn picard_stage(
    scn: &SweepingScenario,
    lambda: f64,
    omega: &Ball,
    q0: &Point,
    n: usize,
    tol: f64,
    step_tol: f64,
    max_picard: usize,
) -> Result<(f64, Point, Trajectory, usize), PoincareError> {
    let first = catchup::run_with_tol(scn, lambda, q0, n, step_tol)?;
    let mut best_r = (first.terminal() - first.initial()).norm();
    let mut best_traj = first;
    let mut iters = 0;
    for beta in DAMPING {
        if best_r <= tol {
            break;
        }
        let mut traj = best_traj.clone();
        let mut since_best = 0;
        for _ in 0..max_picard {
            let x0 = traj.initial();
            let next = clamp(omega, &(x0 + (traj.terminal() - x0) * beta));
            traj = catchup::run_with_tol(scn, lambda, &next, n, step_tol)?;
            iters += 1;
            let r = (traj.terminal() - traj.initial()).norm();
            if r < best_r {
                best_r = r;
                best_traj = traj.clone();
                since_best = 0;
                if r <= tol {
                    break;
                }
            } else {
                since_best += 1;
                if since_best >= STALL_WINDOW {
                    break;
                }
            }
        }
    }
    let q = best_traj.initial().clone();
    Ok((best_r, q, best_traj, iters))
}

fn segments_cross(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let orient = |p: &Point, q: &Point, r: &Point| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0
}

fn check_polygon(polygon: &[Point]) -> Result<(), PoincareError> {
    let m = polygon.len();
    if m < 3 {
        return Err(PoincareError::InvalidArgument("polygon needs at least 3 vertices".into()));
    }
    if polygon.iter().any(|p| p.len() != 2 || p.iter().any(|v| !v.is_finite())) {
        return Err(PoincareError::InvalidArgument("polygon vertices must be finite planar points".into()));
    }
    for i in 0..m {
        if polygon[i] == polygon[(i + 1) % m] {
            return Err(PoincareError::InvalidArgument(format!("polygon edge {i} has zero length")));
        }
        for j in i + 2..m {
            if i == 0 && j == m - 1 {
                continue;
            }
            if segments_cross(&polygon[i], &polygon[(i + 1) % m], &polygon[j], &polygon[(j + 1) % m]) {
                return Err(PoincareError::InvalidArgument(format!("polygon edges {i} and {j} intersect")));
            }
        }
    }
    Ok(())
}

fn wrap_angle(d: f64) -> f64 {
    let mut d = (d + PI).rem_euclid(TAU) - PI;
    if d == -PI {
        d = PI;
    }
    d
}

/// Winding number of `g(q) = q - P^{λ,n}(V(q))` along a simple polygon.
///
/// Each edge is sampled at `mesh` points; the mesh is doubled (up to 4096)
/// until every angle increment of `g` is below π/2 in magnitude.
pub fn degree_2d(scn: &SweepingScenario, lambda: f64, n: usize, polygon: &[Point], mesh: usize) -> Result<DegreeResult, PoincareError> {
    if scn.dim() != 2 {
        return Err(PoincareError::NotPlanar(scn.dim()));
    }
    check_polygon(polygon)?;
    if mesh < MIN_MESH {
        return Err(PoincareError::InvalidArgument(format!("mesh must be >= {MIN_MESH} per edge, got {mesh}")));
    }
    let field = |q: &Point| -> Result<Point, PoincareError> { Ok(q - poincare_map(scn, lambda, n, q)?) };
    let m = polygon.len();
    let mut mesh = mesh;
    loop {
        let points: Vec<Point> = (0..m)
            .flat_map(|e| {
                let (a, b) = (&polygon[e], &polygon[(e + 1) % m]);
                (0..mesh).map(move |k| a + (b - a) * (k as f64 / mesh as f64))
            })
            .collect();
        let values: Vec<Point> = points.par_iter().map(field).collect::<Result<_, _>>()?;
        let min_field_norm = values.iter().map(|g| g.norm()).fold(f64::INFINITY, f64::min);
        if min_field_norm < MIN_FIELD_NORM {
            return Err(PoincareError::FieldVanishesOnBoundary { min_field_norm });
        }
        let angles: Vec<f64> = values.iter().map(|g| g[1].atan2(g[0])).collect();
        let mut total = 0.0;
        let mut coarse = false;
        for k in 0..angles.len() {
            let d = wrap_angle(angles[(k + 1) % angles.len()] - angles[k]);
            if d.abs() >= FRAC_PI_2 {
                coarse = true;
                break;
            }
            total += d;
        }
        if !coarse {
            return Ok(DegreeResult {
                degree: (total / TAU).round() as i64,
                min_field_norm,
                mesh_points: mesh,
                polygon: polygon.to_vec(),
            });
        }
        if mesh >= MAX_MESH {
            return Err(PoincareError::MeshExhausted { mesh });
        }
        mesh = (mesh * 2).min(MAX_MESH);
    }
}

/// One grid point of [`continue_branch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub lambda: f64,
    pub orbit: Result<PeriodicOrbit, PoincareError>,
    /// `max_t |x_λ(t) - seed|` for converged orbits.
    pub distance_to_seed: Option<f64>,
}

/// Periodic orbits along an ascending λ grid. With `warm_start` each search
/// starts from the previous converged `q_star`; otherwise every λ starts from
/// `seed_q` and the searches run in parallel.
pub fn continue_branch(
    scn: &SweepingScenario,
    lambda_grid: &[f64],
    seed_q: &Point,
    tol: f64,
    n_schedule: &[usize],
    max_picard: usize,
    warm_start: bool,
) -> Result<Vec<BranchPoint>, PoincareError> {
    if lambda_grid.is_empty() || lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(PoincareError::InvalidArgument("lambda grid must be non-empty and strictly ascending".into()));
    }
    if let Some(bad) = lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(ScenarioError::LambdaOutOfRange(*bad).into());
    }
    if seed_q.len() != scn.dim() {
        return Err(PoincareError::InvalidArgument(format!("seed has dimension {}, scenario has {}", seed_q.len(), scn.dim())));
    }
    check_schedule(n_schedule)?;
    let solve = |lambda: f64, start: &Point| -> BranchPoint {
        let orbit = find_periodic_from(scn, lambda, start, tol, n_schedule, max_picard);
        let distance_to_seed = orbit.as_ref().ok().map(|o| o.trajectory.max_distance_to(seed_q));
        BranchPoint { lambda, orbit, distance_to_seed }
    };
    if warm_start {
        let mut start = seed_q.clone();
        let mut out = Vec::with_capacity(lambda_grid.len());
        for &lambda in lambda_grid {
            let point = solve(lambda, &start);
            if let Ok(orbit) = &point.orbit {
                start = orbit.q_star.clone();
            }
            out.push(point);
        }
        Ok(out)
    } else {
        Ok(lambda_grid.par_iter().map(|&lambda| solve(lambda, seed_q)).collect())
    }
}

/// Convenience: every body point of Ω is a valid start.
pub fn omega_contains(omega: &Ball, q: &Point, tol: f64) -> bool {
    ConvexBody::Ball(omega.clone()).contains(q, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ContractionKind, ContractionSpec, DriftShape, DriftSpec, FourierSeries, ForceSpec, LambdaCoupling};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix};

    fn disk(drift: DriftSpec, contraction: ContractionSpec, force: ForceSpec, l1: f64) -> SweepingScenario {
        SweepingScenario::new(
            ConvexBody::ball(dvector![0.0, 0.0], 1.0).unwrap(),
            dvector![0.0, 0.0],
            drift,
            contraction,
            force,
            1.0,
            l1,
        )
        .unwrap()
    }

    fn autonomous_disk() -> SweepingScenario {
        disk(DriftSpec::zero(2), ContractionSpec::zero(2), ForceSpec::affine(DMatrix::identity(2, 2), dvector![-2.0, 0.0], 1.0).unwrap(), 4.0)
    }

    fn forced_disk() -> SweepingScenario {
        let forcing = FourierSeries { cos: vec![dvector![0.0, 0.0], dvector![1.0, 0.0]], sin: vec![dvector![0.0, 0.0], dvector![0.0, 1.0]], period: 1.0 };
        let force = ForceSpec::new(DMatrix::identity(2, 2), dvector![-2.0, 0.0], vec![], forcing, LambdaCoupling::LinearInLambda, 1.0).unwrap();
        disk(DriftSpec::zero(2), ContractionSpec::zero(2), force, 8.0)
    }

    #[test]
    fn generalized_ic_examples() {
        let plain = disk(DriftSpec::zero(2), ContractionSpec::zero(2), ForceSpec::affine(DMatrix::zeros(2, 2), Point::zeros(2), 0.0).unwrap(), 0.0);
        assert_eq!(generalized_ic(&plain, 0.0, &dvector![3.0, 0.0], 1e-12).unwrap(), dvector![1.0, 0.0]);
        assert_eq!(generalized_ic(&plain, 0.0, &dvector![0.3, 0.1], 1e-12).unwrap(), dvector![0.3, 0.1]);
        let half = ContractionSpec::new(
            ContractionKind::Affine { matrix: DMatrix::identity(2, 2) * 0.5, offset: Point::zeros(2) },
            LambdaCoupling::Constant,
            0.5,
            2,
        )
        .unwrap();
        let scn = disk(DriftSpec::zero(2), half, ForceSpec::affine(DMatrix::zeros(2, 2), Point::zeros(2), 0.0).unwrap(), 0.0);
        let v = generalized_ic(&scn, 1.0, &dvector![3.0, 0.0], 1e-12).unwrap();
        assert!((v - dvector![2.0, 0.0]).norm() <= 1e-11);
        // f = 0, a = 0: the map reduces to V
        let q = dvector![3.0, 4.0];
        assert_eq!(poincare_map(&plain, 0.0, 64, &q).unwrap(), generalized_ic(&plain, 0.0, &q, 1e-12).unwrap());
    }

    #[test]
    fn switched_equilibrium_is_a_fixed_point() {
        let scn = autonomous_disk();
        let p = poincare_map(&scn, 0.0, 512, &dvector![1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p, dvector![1.0, 0.0], epsilon = 1e-12);
        let orbit = find_periodic(&scn, 0.0, 1e-8, &DEFAULT_N_SCHEDULE, 500).unwrap();
        assert!((&orbit.q_star - dvector![1.0, 0.0]).norm() <= 1e-6);
        assert!(orbit.residual <= 1e-8);
        assert!(omega_contains(&scn.omega_region(0.0).unwrap(), &orbit.q_star, 1e-12));
        assert_eq!(orbit.degree_check.unwrap().unwrap().degree, 1);
        // λ = 0 with coupled forcing is the same problem
        let coupled = find_periodic(&forced_disk(), 0.0, 1e-8, &DEFAULT_N_SCHEDULE, 500).unwrap();
        assert!((&coupled.q_star - &orbit.q_star).norm() <= 1e-8);
    }

    #[test]
    fn fourier_drift_orbit() {
        let drift = DriftSpec::new(
            DriftShape::Fourier(FourierSeries { cos: vec![dvector![0.0, 0.0], dvector![0.8, 0.0]], sin: vec![dvector![0.0, 0.0], dvector![0.0, 0.5]], period: 1.0 }),
            LambdaCoupling::Constant,
            2,
        )
        .unwrap();
        let scn = disk(drift, ContractionSpec::zero(2), ForceSpec::affine(DMatrix::zeros(2, 2), Point::zeros(2), 0.0).unwrap(), 0.0);
        let orbit = find_periodic(&scn, 1.0, 1e-7, &[64, 256], 500).unwrap();
        assert!(orbit.residual <= 1e-7);
        assert!(catchup::step_variation_check(&orbit.trajectory));
    }

    #[test]
    fn degree_examples() {
        let scn = autonomous_disk();
        let square: Vec<Point> = vec![dvector![0.9, -0.1], dvector![1.1, -0.1], dvector![1.1, 0.1], dvector![0.9, 0.1]];
        let d = degree_2d(&scn, 0.0, 128, &square, 64).unwrap();
        assert_eq!(d.degree, 1);
        assert!(d.min_field_norm > 0.0);
        let reversed: Vec<Point> = square.iter().rev().cloned().collect();
        assert_eq!(degree_2d(&scn, 0.0, 128, &reversed, 64).unwrap().degree, -1);
        let far: Vec<Point> = vec![dvector![-0.5, -0.2], dvector![-0.3, -0.2], dvector![-0.3, 0.0], dvector![-0.5, 0.0]];
        assert_eq!(degree_2d(&scn, 0.0, 128, &far, 64).unwrap().degree, 0);
        let through: Vec<Point> = vec![dvector![1.0, 0.0], dvector![1.2, 0.0], dvector![1.2, 0.2]];
        assert!(matches!(degree_2d(&scn, 0.0, 128, &through, 64), Err(PoincareError::FieldVanishesOnBoundary { .. })));
        assert!(degree_2d(&scn, 0.0, 128, &square, 16).is_err());
        let bowtie: Vec<Point> = vec![dvector![0.0, 0.0], dvector![1.0, 1.0], dvector![1.0, 0.0], dvector![0.0, 1.0]];
        assert!(degree_2d(&scn, 0.0, 128, &bowtie, 64).is_err());
    }

    #[test]
    fn continuation_single_zero() {
        let scn = autonomous_disk();
        let branch = continue_branch(&scn, &[0.0], &dvector![1.0, 0.0], 1e-8, &[128, 512], 200, true).unwrap();
        assert_eq!(branch.len(), 1);
        assert!(branch[0].distance_to_seed.unwrap() <= 1e-6);
        assert!(continue_branch(&scn, &[0.2, 0.1], &dvector![1.0, 0.0], 1e-8, &[128], 200, true).is_err());
    }

    #[test]
    fn warm_and_cold_agree() {
        let scn = forced_disk();
        let grid = [0.05, 0.1];
        let warm = continue_branch(&scn, &grid, &dvector![1.0, 0.0], 1e-8, &[128, 512], 500, true).unwrap();
        let cold = continue_branch(&scn, &grid, &dvector![1.0, 0.0], 1e-8, &[128, 512], 500, false).unwrap();
        let qw = &warm[0].orbit.as_ref().unwrap().q_star;
        let qc = &cold[0].orbit.as_ref().unwrap().q_star;
        assert!((qw - qc).norm() <= 1e-6);
        assert!(warm[0].distance_to_seed.unwrap() < warm[1].distance_to_seed.unwrap());
    }
}
