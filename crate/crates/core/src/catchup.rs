//! Implicit catching-up scheme.
//!
//! With `J(t) = ∫₀ᵗ f(τ, x(τ), λ) dτ` and `tᵢ = iT/n`:
//!
//! ```text
//! u_{i+1} = proj(u_i, A + a(t_{i+1}, λ) + c(u_{i+1} - J(t_i), λ) + J(t_i))
//! x_{i+1} = u_{i+1} - J(t_i)
//! ```
//!
//! The implicit projection is a fixed point of an L2-contraction and is
//! solved by Picard iteration. `J` is accumulated with the trapezoid rule on
//! the piecewise-linear interpolant of the x-nodes.

use thiserror::Error;

use crate::convex::{ConvexBody, ConvexError, Point};
use crate::scenario::{ContractionKind, LambdaCoupling, ScenarioError, SweepingScenario};

/// Picard budget of a single implicit step.
pub const STEP_BUDGET: usize = 100_000;

/// Default accuracy of the implicit solve in [`run`].
pub const DEFAULT_STEP_TOL: f64 = 1e-12;

/// Slack allowed by [`step_variation_check`].
pub const STEP_BOUND_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatchupError {
    #[error("implicit step at t = {t} did not converge in {iterations} iterations (last change {residual:e}); declared L2 is probably violated")]
    NonConvergence { t: f64, iterations: usize, residual: f64 },
    #[error("refinement reached n = {n} without meeting the tolerance (last residual {residual:e})")]
    BudgetExhausted { n: usize, residual: f64, residuals: Vec<f64> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub fixed_point_iters: usize,
    /// `|u_{i+1} - u_i|`
    pub step_increment: f64,
    /// `(var(a, [t_i, t_{i+1}]) + L1 T/n) / (1 - L2)`
    pub bound: f64,
}

/// Discrete solution: nodes `(tᵢ, uᵢ, xᵢ, J(tᵢ))`, linear in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub lambda: f64,
    pub times: Vec<f64>,
    pub u_nodes: Vec<Point>,
    pub x_nodes: Vec<Point>,
    pub j_nodes: Vec<Point>,
    pub per_step: Vec<StepRecord>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.x_nodes[0].len()
    }

    pub fn period(&self) -> f64 {
        self.times[self.n]
    }

    pub fn initial(&self) -> &Point {
        &self.x_nodes[0]
    }

    pub fn terminal(&self) -> &Point {
        &self.x_nodes[self.n]
    }

    /// Piecewise-linear interpolant of the x-nodes, clamped to `[0, T]`.
    pub fn x_at(&self, t: f64) -> Point {
        let t = t.clamp(0.0, self.period());
        let dt = self.period() / self.n as f64;
        let i = ((t / dt).floor() as usize).min(self.n - 1);
        let w = ((t - self.times[i]) / (self.times[i + 1] - self.times[i])).clamp(0.0, 1.0);
        &self.x_nodes[i] * (1.0 - w) + &self.x_nodes[i + 1] * w
    }

    pub fn max_step_increment(&self) -> f64 {
        self.per_step.iter().map(|s| s.step_increment).fold(0.0, f64::max)
    }

    /// `var(u_n, [0, T])`
    pub fn u_variation(&self) -> f64 {
        self.per_step.iter().map(|s| s.step_increment).sum()
    }

    /// `max_i |xᵢ - p|`
    pub fn max_distance_to(&self, p: &Point) -> f64 {
        self.x_nodes.iter().map(|x| (x - p).norm()).fold(0.0, f64::max)
    }
}

fn contraction_is_inert(scn: &SweepingScenario, lambda: f64) -> bool {
    let spec = scn.contraction_spec();
    matches!(spec.kind(), ContractionKind::Zero) || (spec.coupling() == LambdaCoupling::LinearInLambda && lambda == 0.0)
}

/// Solves `v = proj(u_prev, A + a(t_next, λ) + c(v - J_prev, λ) + J_prev)`.
///
/// Picard iteration from `u_prev`, stopped once `|v_{k+1} - v_k| <= tol (1 - L2)`.
/// Returns the solution and the number of projections performed.
pub fn implicit_step(
    scn: &SweepingScenario,
    lambda: f64,
    u_prev: &Point,
    j_prev: &Point,
    t_next: f64,
    tol: f64,
) -> Result<(Point, usize), CatchupError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CatchupError::InvalidArgument(format!("step tolerance must be positive, got {tol}")));
    }
    let a = scn.drift(t_next, lambda)?;
    let base_shift = a + j_prev;
    let body = scn.body();
    if contraction_is_inert(scn, lambda) {
        return Ok((body.project_translated(u_prev, &base_shift)?, 1));
    }
    // Dykstra output carries its own noise, below which Picard differences are meaningless.
    let floor = if matches!(body, ConvexBody::Polytope(_)) { body.tolerance() } else { 0.0 };
    let stop = tol.max(floor) * (1.0 - scn.l2());
    let mut v = u_prev.clone();
    let mut change = f64::INFINITY;
    for k in 1..=STEP_BUDGET {
        let shift = &base_shift + scn.contraction(&(&v - j_prev), lambda);
        let next = body.project_translated(u_prev, &shift)?;
        change = (&next - &v).norm();
        v = next;
        if change <= stop {
            return Ok((v, k));
        }
    }
    Err(CatchupError::NonConvergence { t: t_next, iterations: STEP_BUDGET, residual: change })
}

/// Generalized initial condition `V(q) = proj(q, A + a(0,λ) + c(V(q),λ))`.
pub fn generalized_ic(scn: &SweepingScenario, lambda: f64, q: &Point, tol: f64) -> Result<Point, CatchupError> {
    check_point(scn, q)?;
    Ok(implicit_step(scn, lambda, q, &Point::zeros(scn.dim()), 0.0, tol)?.0)
}

fn check_point(scn: &SweepingScenario, q: &Point) -> Result<(), CatchupError> {
    if q.len() != scn.dim() {
        return Err(CatchupError::InvalidArgument(format!("point has dimension {}, scenario has {}", q.len(), scn.dim())));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(CatchupError::InvalidArgument("point has a non-finite entry".into()));
    }
    Ok(())
}

/// Runs the scheme from `V(q)` with `n` uniform steps over `[0, T]`.
pub fn run(scn: &SweepingScenario, lambda: f64, q: &Point, n: usize) -> Result<Trajectory, CatchupError> {
    run_with_tol(scn, lambda, q, n, DEFAULT_STEP_TOL)
}

/// [`run`] with an explicit accuracy for the implicit steps.
pub fn run_with_tol(scn: &SweepingScenario, lambda: f64, q: &Point, n: usize, step_tol: f64) -> Result<Trajectory, CatchupError> {
    if n == 0 {
        return Err(CatchupError::InvalidArgument("step count must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(ScenarioError::LambdaOutOfRange(lambda).into());
    }
    let period = scn.period();
    let dt = period / n as f64;
    let x0 = generalized_ic(scn, lambda, q, step_tol)?;

    let mut times = Vec::with_capacity(n + 1);
    let mut u_nodes = Vec::with_capacity(n + 1);
    let mut x_nodes = Vec::with_capacity(n + 1);
    let mut j_nodes = Vec::with_capacity(n + 1);
    let mut per_step = Vec::with_capacity(n);
    times.push(0.0);
    u_nodes.push(x0.clone());
    j_nodes.push(Point::zeros(scn.dim()));
    let mut f_prev = scn.force(0.0, &x0, lambda);
    x_nodes.push(x0);

    for i in 0..n {
        let t_i = times[i];
        let t_next = if i + 1 == n { period } else { period * (i + 1) as f64 / n as f64 };
        let j_i = &j_nodes[i];
        let (u_next, iters) = implicit_step(scn, lambda, &u_nodes[i], j_i, t_next, step_tol)?;
        let x_next = &u_next - j_i;
        let f_next = scn.force(t_next, &x_next, lambda);
        let j_next = j_i + (&f_prev + &f_next) * (0.5 * (t_next - t_i));
        let bound = (scn.drift_variation_bound(t_i, t_next)? + scn.l1() * dt) / (1.0 - scn.l2());
        per_step.push(StepRecord { fixed_point_iters: iters, step_increment: (&u_next - &u_nodes[i]).norm(), bound });
        times.push(t_next);
        u_nodes.push(u_next);
        x_nodes.push(x_next);
        j_nodes.push(j_next);
        f_prev = f_next;
    }
    Ok(Trajectory { n, lambda, times, u_nodes, x_nodes, j_nodes, per_step })
}

/// Result of [`refine`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub trajectory: Trajectory,
    /// `sup |x_{2n} - x_n|` over common nodes, one entry per doubling.
    pub residuals: Vec<f64>,
    pub achieved: f64,
}

/// Doubles `n` from `n0` until consecutive trajectories agree to `tol` on
/// their common nodes. Implicit steps are solved to `tol / 100`.
pub fn refine(scn: &SweepingScenario, lambda: f64, q: &Point, tol: f64, n0: usize, n_max: usize) -> Result<Refinement, CatchupError> {
    if n0 < 8 {
        return Err(CatchupError::InvalidArgument(format!("n0 must be >= 8, got {n0}")));
    }
    if n_max < n0 || !n_max.is_multiple_of(n0) || !(n_max / n0).is_power_of_two() {
        return Err(CatchupError::InvalidArgument(format!("n_max = {n_max} is not a power-of-two multiple of n0 = {n0}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(CatchupError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let step_tol = (tol / 100.0).min(1e-9);
    let mut coarse = run_with_tol(scn, lambda, q, n0, step_tol)?;
    let mut residuals = Vec::new();
    let mut n = n0;
    while n < n_max {
        n *= 2;
        let fine = run_with_tol(scn, lambda, q, n, step_tol)?;
        let residual = coarse
            .x_nodes
            .iter()
            .enumerate()
            .map(|(i, x)| (x - &fine.x_nodes[2 * i]).norm())
            .fold(0.0, f64::max);
        residuals.push(residual);
        coarse = fine;
        if residual <= tol {
            return Ok(Refinement { trajectory: coarse, residuals, achieved: residual });
        }
    }
    let residual = residuals.last().copied().unwrap_or(f64::INFINITY);
    Err(CatchupError::BudgetExhausted { n, residual, residuals })
}

/// Signed slack of the discrete Moreau inequality
/// `Σ ⟨φ(tᵢ), u_{i+1} - uᵢ⟩ - ½(|u_n|² - |u_0|²)` with the selector
/// `φ(tᵢ) = b0 + a(tᵢ,λ) + c(xᵢ,λ) + J(t_{i-1})`, `J(t_{-1}) = 0`.
pub fn moreau_residual(traj: &Trajectory, scn: &SweepingScenario) -> Result<f64, CatchupError> {
    let lambda = traj.lambda;
    let zero = Point::zeros(traj.dim());
    let mut sum = 0.0;
    for i in 0..traj.n {
        let j_lag = if i == 0 { &zero } else { &traj.j_nodes[i - 1] };
        let phi = scn.interior_point() + scn.drift(traj.times[i], lambda)? + scn.contraction(&traj.x_nodes[i], lambda) + j_lag;
        sum += phi.dot(&(&traj.u_nodes[i + 1] - &traj.u_nodes[i]));
    }
    Ok(sum - 0.5 * (traj.u_nodes[traj.n].norm_squared() - traj.u_nodes[0].norm_squared()))
}

/// Admissible negative part of [`moreau_residual`]: `var(u) · max |Δu|`.
pub fn moreau_epsilon(traj: &Trajectory) -> f64 {
    traj.u_variation() * traj.max_step_increment()
}

/// Every step obeys `|u_{i+1} - u_i| <= bound + 1e-7`.
pub fn step_variation_check(traj: &Trajectory) -> bool {
    traj.per_step.iter().all(|s| s.step_increment <= s.bound + STEP_BOUND_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ContractionSpec, DriftShape, DriftSpec, ForceSpec};
    use approx::assert_abs_diff_eq;
    use nalgebra::{dvector, DMatrix};

    fn disk(drift: DriftSpec, contraction: ContractionSpec, force: ForceSpec, period: f64, l1: f64) -> SweepingScenario {
        SweepingScenario::new(
            ConvexBody::ball(dvector![0.0, 0.0], 1.0).unwrap(),
            dvector![0.0, 0.0],
            drift,
            contraction,
            force,
            period,
            l1,
        )
        .unwrap()
    }

    fn no_force() -> ForceSpec {
        ForceSpec::affine(DMatrix::zeros(2, 2), Point::zeros(2), 0.0).unwrap()
    }

    fn half_contraction() -> ContractionSpec {
        ContractionSpec::new(
            ContractionKind::Affine { matrix: DMatrix::identity(2, 2) * 0.5, offset: Point::zeros(2) },
            LambdaCoupling::Constant,
            0.5,
            2,
        )
        .unwrap()
    }

    fn drag(period: f64) -> SweepingScenario {
        let drift = DriftSpec::new(
            DriftShape::PiecewiseLinear { times: vec![0.0, period], values: vec![dvector![0.0, 0.0], dvector![2.0 * period, 0.0]] },
            LambdaCoupling::Constant,
            2,
        )
        .unwrap();
        disk(drift, ContractionSpec::zero(2), no_force(), period, 0.0)
    }

    #[test]
    fn implicit_step_examples() {
        let plain = disk(DriftSpec::zero(2), ContractionSpec::zero(2), no_force(), 1.0, 0.0);
        let (v, _) = implicit_step(&plain, 1.0, &dvector![3.0, 0.0], &Point::zeros(2), 0.5, 1e-12).unwrap();
        assert_abs_diff_eq!(v, dvector![1.0, 0.0], epsilon = 1e-15);

        let scn = disk(DriftSpec::zero(2), half_contraction(), no_force(), 1.0, 0.0);
        let (v, iters) = implicit_step(&scn, 1.0, &dvector![3.0, 0.0], &Point::zeros(2), 0.5, 1e-12).unwrap();
        assert!((v - dvector![2.0, 0.0]).norm() <= 1e-11);
        assert!(iters > 1);

        let (v, iters) = implicit_step(&scn, 1.0, &dvector![0.1, 0.2], &Point::zeros(2), 0.5, 1e-12).unwrap();
        assert_eq!(v, dvector![0.1, 0.2]);
        assert!(iters <= 2);
    }

    #[test]
    fn constant_scenario_does_not_move() {
        let scn = disk(DriftSpec::zero(2), ContractionSpec::zero(2), no_force(), 1.0, 0.0);
        let traj = run(&scn, 0.5, &dvector![0.2, 0.0], 64).unwrap();
        assert!(traj.x_nodes.iter().all(|x| *x == dvector![0.2, 0.0]));
        assert_eq!(traj.u_nodes, traj.x_nodes);
        assert!(traj.per_step.iter().all(|s| s.step_increment == 0.0));
        assert_eq!(moreau_residual(&traj, &scn).unwrap(), 0.0);
        assert!(step_variation_check(&traj));
        let r = refine(&scn, 0.5, &dvector![0.2, 0.0], 1e-6, 8, 64).unwrap();
        assert_eq!(r.trajectory.n, 16);
        assert_eq!(r.achieved, 0.0);
    }

    #[test]
    fn drag_matches_the_play_operator() {
        let scn = drag(1.5);
        let n = 2048;
        let traj = run(&scn, 1.0, &dvector![1.0, 0.0], n).unwrap();
        let exact = |t: f64| dvector![(2.0 * t - 1.0).max(1.0), 0.0];
        let node_err = traj.times.iter().zip(&traj.x_nodes).map(|(&t, x)| (x - exact(t)).norm()).fold(0.0, f64::max);
        assert!(node_err <= 5.0 / n as f64);
        assert!(step_variation_check(&traj));
        for s in &traj.per_step {
            assert_abs_diff_eq!(s.bound, (2.0 * 1.5 / n as f64) / (1.0 - 1e-6), epsilon = 1e-15);
        }
        let eps = moreau_epsilon(&traj);
        assert!(moreau_residual(&traj, &scn).unwrap() >= -eps);
        let finer = run(&scn, 1.0, &dvector![1.0, 0.0], 2 * n).unwrap();
        assert!(moreau_epsilon(&finer) < eps);
    }

    #[test]
    fn drag_refinement_terminates() {
        let r = refine(&drag(1.5), 1.0, &dvector![1.0, 0.0], 1e-3, 16, 1 << 14).unwrap();
        assert!(r.trajectory.n <= 1 << 14);
        assert!(r.residuals.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn node_link_feasibility_and_uniform_bound() {
        let drift = DriftSpec::new(
            DriftShape::SqrtCusp { direction: dvector![0.6, 0.3], cusp_time: 0.4 },
            LambdaCoupling::Constant,
            2,
        )
        .unwrap();
        let force = ForceSpec::affine(DMatrix::identity(2, 2) * 0.5, dvector![0.2, -0.1], 0.5).unwrap();
        let scn = disk(drift, half_contraction(), force, 1.0, 6.0);
        let traj = run(&scn, 0.8, &dvector![2.5, -1.0], 256).unwrap();
        for i in 1..=traj.n {
            assert!((&traj.u_nodes[i] - &traj.j_nodes[i - 1] - &traj.x_nodes[i]).norm() <= 1e-9);
            let shift = scn.drift(traj.times[i], 0.8).unwrap() + scn.contraction(&traj.x_nodes[i], 0.8);
            let moved = scn.body().translated(&shift).unwrap();
            assert!(moved.distance(&traj.x_nodes[i]).unwrap() <= 1e-7);
        }
        let bound = traj.u_nodes[0].norm() + (scn.drift_variation_bound(0.0, 1.0).unwrap() + 6.0) / 0.5 + 1e-7;
        assert!(traj.u_nodes.iter().all(|u| u.norm() <= bound));
        assert!(step_variation_check(&traj));
        assert_eq!(traj, run(&scn, 0.8, &dvector![2.5, -1.0], 256).unwrap());
    }

    #[test]
    fn linear_coupling_at_zero_is_the_constant_set_process() {
        let coupled = disk(
            DriftSpec::new(DriftShape::SqrtCusp { direction: dvector![1.0, 0.0], cusp_time: 0.3 }, LambdaCoupling::LinearInLambda, 2).unwrap(),
            ContractionSpec::new(
                ContractionKind::Affine { matrix: DMatrix::identity(2, 2) * 0.5, offset: dvector![0.3, 0.0] },
                LambdaCoupling::LinearInLambda,
                0.5,
                2,
            )
            .unwrap(),
            ForceSpec::affine(DMatrix::identity(2, 2), dvector![-2.0, 0.0], 1.0).unwrap(),
            1.0,
            4.0,
        );
        let plain = disk(DriftSpec::zero(2), ContractionSpec::zero(2), ForceSpec::affine(DMatrix::identity(2, 2), dvector![-2.0, 0.0], 1.0).unwrap(), 1.0, 4.0);
        let q = dvector![0.3, 0.9];
        assert_eq!(run(&coupled, 0.0, &q, 128).unwrap().x_nodes, run(&plain, 0.0, &q, 128).unwrap().x_nodes);
    }

    #[test]
    fn interpolation_is_piecewise_linear() {
        let traj = run(&drag(1.5), 1.0, &dvector![1.0, 0.0], 16).unwrap();
        assert_eq!(traj.x_at(0.0), traj.x_nodes[0]);
        assert_eq!(traj.x_at(1.5), traj.x_nodes[16]);
        let mid = traj.x_at((traj.times[12] + traj.times[13]) / 2.0);
        assert_abs_diff_eq!(mid, (&traj.x_nodes[12] + &traj.x_nodes[13]) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn bad_arguments() {
        let scn = drag(1.0);
        assert!(run(&scn, 1.0, &dvector![1.0, 0.0], 0).is_err());
        assert!(run(&scn, 1.0, &dvector![1.0], 4).is_err());
        assert!(refine(&scn, 1.0, &dvector![1.0, 0.0], 1e-3, 4, 64).is_err());
        assert!(refine(&scn, 1.0, &dvector![1.0, 0.0], 1e-3, 16, 48).is_err());
    }
}
