//! Switched boundary equilibria of `-ẋ ∈ N_A(x) + f₀(x)` for bodies with a
//! smooth boundary, and their stability through the sliding field.
//!
//! Eigenvalues are always those of the flow `ẋ = -f̄(x)`.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::catchup::{self, CatchupError};
use crate::convex::{Ball, ConvexBody, ConvexError, Point};
use crate::scenario::SweepingScenario;

/// Newton iteration cap.
const NEWTON_BUDGET: usize = 100;
/// Step halvings per Newton iteration.
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EquilibriumError {
    #[error("boundary of a {0} body is not smooth")]
    NonSmoothBody(&'static str),
    #[error("Newton iteration stagnated after {iterations} iterations (residual {residual:e})")]
    NotFound { iterations: usize, residual: f64 },
    #[error("converged to x = {x:?} with alpha = {alpha} >= 0; not a switched equilibrium")]
    WrongSign { x: Vec<f64>, alpha: f64 },
    #[error("gradient of H vanishes at {0:?}")]
    DegenerateGradient(Vec<f64>),
    #[error("{count} eigenvalues lie below the noise threshold {fd_noise:e}; the structural zero is ambiguous")]
    AmbiguousZeroMode { count: usize, fd_noise: f64 },
    #[error("no eigenvalue lies below the noise threshold {fd_noise:e}; point is not a sliding equilibrium")]
    MissingZeroMode { fd_noise: f64 },
    #[error("point is off the boundary (|H| = {0:e})")]
    NotOnBoundary(f64),
    #[error("scenario is not autonomous at lambda = 0")]
    NotAutonomous,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Catchup(#[from] CatchupError),
}

#[derive(Debug, Clone, PartialEq)]
enum Level {
    /// `|x - c|² - r²`
    Ball { center: Point, radius: f64 },
    /// `(x - c)ᵀ M⁻¹ (x - c) - 1`
    Ellipsoid { center: Point, inverse: DMatrix<f64> },
}

/// Level-set description `∂A = {H = 0}` of a smooth body.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOracle {
    level: Level,
    valid_region: Ball,
}

impl BoundaryOracle {
    pub fn h(&self, x: &Point) -> f64 {
        match &self.level {
            Level::Ball { center, radius } => (x - center).norm_squared() - radius * radius,
            Level::Ellipsoid { center, inverse } => {
                let y = x - center;
                y.dot(&(inverse * &y)) - 1.0
            }
        }
    }

    pub fn grad(&self, x: &Point) -> Point {
        match &self.level {
            Level::Ball { center, .. } => (x - center) * 2.0,
            Level::Ellipsoid { center, inverse } => (inverse * (x - center)) * 2.0,
        }
    }

    pub fn valid_region(&self) -> &Ball {
        &self.valid_region
    }

    pub fn dim(&self) -> usize {
        self.valid_region.center().len()
    }

    /// First-order distance to the level set, `|H| / |∇H|`.
    pub fn boundary_distance(&self, x: &Point) -> f64 {
        let g = self.grad(x).norm();
        if g == 0.0 {
            f64::INFINITY
        } else {
            self.h(x).abs() / g
        }
    }
}

/// Level-set oracle of a ball or ellipsoid.
pub fn boundary_oracle(body: &ConvexBody) -> Result<BoundaryOracle, EquilibriumError> {
    match body {
        ConvexBody::Ball(b) => Ok(BoundaryOracle {
            level: Level::Ball { center: b.center().clone(), radius: b.radius() },
            valid_region: Ball::new(b.center().clone(), 2.0 * b.radius())?,
        }),
        ConvexBody::Ellipsoid(e) => {
            let semi_axis = e.shape().clone().symmetric_eigenvalues().max().sqrt();
            Ok(BoundaryOracle {
                level: Level::Ellipsoid { center: e.center().clone(), inverse: e.inverse_shape().clone() },
                valid_region: Ball::new(e.center().clone(), 2.0 * semi_axis)?,
            })
        }
        other => Err(EquilibriumError::NonSmoothBody(other.kind())),
    }
}

fn newton_residual(oracle: &BoundaryOracle, f0: &dyn Fn(&Point) -> Point, z: &DVector<f64>) -> DVector<f64> {
    let d = oracle.dim();
    let x = z.rows(0, d).into_owned();
    let alpha = z[d];
    let mut r = DVector::zeros(d + 1);
    r[0] = oracle.h(&x);
    r.rows_mut(1, d).copy_from(&(oracle.grad(&x) - f0(&x) * alpha));
    r
}

/// Solves `H(x) = 0, ∇H(x) = α f₀(x)` by damped Newton with a
/// central-difference Jacobian, starting from `seed`.
pub fn find_equilibrium_with(
    oracle: &BoundaryOracle,
    f0: &dyn Fn(&Point) -> Point,
    seed: &Point,
    tol: f64,
) -> Result<(Point, f64), EquilibriumError> {
    let d = oracle.dim();
    if seed.len() != d || seed.iter().any(|v| !v.is_finite()) {
        return Err(EquilibriumError::InvalidArgument(format!("seed must be a finite point of dimension {d}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(EquilibriumError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let g0 = f0(seed);
    let alpha0 = if g0.norm_squared() > 0.0 { oracle.grad(seed).dot(&g0) / g0.norm_squared() } else { -1.0 };
    let mut z = DVector::from_iterator(d + 1, seed.iter().copied().chain(std::iter::once(alpha0)));
    let mut r = newton_residual(oracle, f0, &z);
    let mut iterations = 0;
    while r.norm() > tol {
        if iterations == NEWTON_BUDGET {
            return Err(EquilibriumError::NotFound { iterations, residual: r.norm() });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(d + 1, d + 1);
        for j in 0..=d {
            let h = 1e-7 * (1.0 + z[j].abs());
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += h;
            zm[j] -= h;
            jac.set_column(j, &((newton_residual(oracle, f0, &zp) - newton_residual(oracle, f0, &zm)) / (2.0 * h)));
        }
        let step = jac.svd(true, true).solve(&(-&r), 1e-14).map_err(|e| EquilibriumError::InvalidArgument(e.to_string()))?;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &z + &step * scale;
            let rt = newton_residual(oracle, f0, &trial);
            if rt.norm() < r.norm() {
                z = trial;
                r = rt;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(EquilibriumError::NotFound { iterations, residual: r.norm() });
        }
    }
    let x = z.rows(0, d).into_owned();
    let alpha = z[d];
    let fx = f0(&x);
    if !(alpha < 0.0 && fx.dot(&oracle.grad(&x)) < 0.0) {
        return Err(EquilibriumError::WrongSign { x: x.iter().copied().collect(), alpha });
    }
    Ok((x, alpha))
}

/// [`find_equilibrium_with`] for the body and autonomous force of a scenario.
pub fn find_switched_equilibrium(scn: &SweepingScenario, seed: &Point, tol: f64) -> Result<(Point, f64), EquilibriumError> {
    if !scn.is_autonomous_at_zero() {
        return Err(EquilibriumError::NotAutonomous);
    }
    let oracle = boundary_oracle(scn.body())?;
    find_equilibrium_with(&oracle, &|x: &Point| scn.autonomous_force(x), seed, tol)
}

/// `f̄(x) = f₀(x) - ⟨f₀(x), ∇H(x)⟩ ∇H(x) / |∇H(x)|²`
pub fn sliding_field(oracle: &BoundaryOracle, f0: &dyn Fn(&Point) -> Point, x: &Point) -> Result<Point, EquilibriumError> {
    let g = oracle.grad(x);
    let gg = g.norm_squared();
    if !(gg > 1e-24) {
        return Err(EquilibriumError::DegenerateGradient(x.iter().copied().collect()));
    }
    let fx = f0(x);
    let normal = fx.dot(&g) / gg;
    Ok(fx - g * normal)
}

/// Central-difference Jacobian of the flow `-f̄` at a boundary point.
pub fn sliding_jacobian(oracle: &BoundaryOracle, f0: &dyn Fn(&Point) -> Point, x0: &Point, h: f64) -> Result<DMatrix<f64>, EquilibriumError> {
    if !(h.is_finite() && h > 0.0) {
        return Err(EquilibriumError::InvalidArgument(format!("difference step must be positive, got {h}")));
    }
    let level = oracle.h(x0);
    if level.abs() > 1e-8 {
        return Err(EquilibriumError::NotOnBoundary(level));
    }
    let d = x0.len();
    let mut jac = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += h;
        xm[j] -= h;
        let col = (sliding_field(oracle, f0, &xp)? - sliding_field(oracle, f0, &xm)?) / (-2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "Stable",
            Verdict::Unstable => "Unstable",
            Verdict::Marginal => "Marginal",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityAssessment {
    pub eigenvalues: Vec<Complex<f64>>,
    pub zero_mode_index: usize,
    pub verdict: Verdict,
}

/// Verdict from a list of flow eigenvalues: exactly one must have magnitude
/// at most `fd_noise` (the structural zero); the rest decide.
pub fn verdict_from_eigenvalues(eigenvalues: &[Complex<f64>], fd_noise: f64) -> Result<StabilityAssessment, EquilibriumError> {
    let small: Vec<usize> = (0..eigenvalues.len()).filter(|&i| eigenvalues[i].norm() <= fd_noise).collect();
    match small.len() {
        0 => return Err(EquilibriumError::MissingZeroMode { fd_noise }),
        1 => {}
        count => return Err(EquilibriumError::AmbiguousZeroMode { count, fd_noise }),
    }
    let zero_mode_index = small[0];
    let rest = eigenvalues.iter().enumerate().filter(|&(i, _)| i != zero_mode_index).map(|(_, e)| e.re);
    let mut verdict = Verdict::Stable;
    for re in rest {
        if re.abs() <= fd_noise {
            verdict = Verdict::Marginal;
            break;
        }
        if re > 0.0 {
            verdict = Verdict::Unstable;
        }
    }
    Ok(StabilityAssessment { eigenvalues: eigenvalues.to_vec(), zero_mode_index, verdict })
}

/// Eigenvalues of a flow Jacobian followed by [`verdict_from_eigenvalues`].
pub fn stability_verdict(jac: &DMatrix<f64>, fd_noise: f64) -> Result<StabilityAssessment, EquilibriumError> {
    if !jac.is_square() || jac.iter().any(|v| !v.is_finite()) {
        return Err(EquilibriumError::InvalidArgument("Jacobian must be square and finite".into()));
    }
    let eigenvalues: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    verdict_from_eigenvalues(&eigenvalues, fd_noise)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumReport {
    pub x0: Point,
    pub alpha: f64,
    /// Eigenvalues of the flow linearization `(-f̄)'(x₀)`.
    pub sliding_eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalues of `f̄'(x₀)` itself (the negated list).
    pub literal_eigenvalues: Vec<Complex<f64>>,
    pub zero_mode_index: usize,
    pub verdict: Verdict,
    pub fd_step: f64,
    pub fd_noise: f64,
}

/// Default finite-difference step at `x₀`.
pub fn default_fd_step(x0: &Point) -> f64 {
    1e-5 * (1.0 + x0.norm())
}

/// Full pipeline for a scenario autonomous at λ = 0.
pub fn analyze(scn: &SweepingScenario, seed: &Point, tol: f64) -> Result<EquilibriumReport, EquilibriumError> {
    let (x0, alpha) = find_switched_equilibrium(scn, seed, tol)?;
    let oracle = boundary_oracle(scn.body())?;
    let f0 = |x: &Point| scn.autonomous_force(x);
    analyze_at(&oracle, &f0, x0, alpha)
}

/// Jacobian, noise threshold and verdict at a known equilibrium.
pub fn analyze_at(oracle: &BoundaryOracle, f0: &dyn Fn(&Point) -> Point, x0: Point, alpha: f64) -> Result<EquilibriumReport, EquilibriumError> {
    let fd_step = default_fd_step(&x0);
    let jac = sliding_jacobian(oracle, f0, &x0, fd_step)?;
    let fd_noise = 1e-4 * jac.norm();
    let assessment = stability_verdict(&jac, fd_noise)?;
    Ok(EquilibriumReport {
        literal_eigenvalues: assessment.eigenvalues.iter().map(|e| -e).collect(),
        sliding_eigenvalues: assessment.eigenvalues,
        zero_mode_index: assessment.zero_mode_index,
        verdict: assessment.verdict,
        x0,
        alpha,
        fd_step,
        fd_noise,
    })
}

/// Outcome of simulating from boundary points near an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub starts: Vec<Point>,
    pub final_distances: Vec<f64>,
    /// Largest `|H|/|∇H|` over all nodes of all runs.
    pub max_boundary_distance: f64,
}

/// `count` boundary points within `spread` of `x₀`, spaced along tangent directions.
pub fn boundary_starts(scn: &SweepingScenario, oracle: &BoundaryOracle, x0: &Point, count: usize, spread: f64) -> Result<Vec<Point>, EquilibriumError> {
    let d = x0.len();
    let normal = oracle.grad(x0).normalize();
    // tangent basis by Gram-Schmidt against the normal
    let mut tangents: Vec<Point> = Vec::new();
    for i in 0..d {
        let mut e = Point::zeros(d);
        e[i] = 1.0;
        let mut t = &e - &normal * normal.dot(&e);
        for b in &tangents {
            t -= b * b.dot(&t);
        }
        if t.norm() > 1e-8 {
            tangents.push(t.normalize());
        }
    }
    if tangents.is_empty() {
        return Err(EquilibriumError::InvalidArgument("no tangent directions in dimension 1".into()));
    }
    let mut starts = Vec::with_capacity(count);
    for k in 0..count {
        let dir = &tangents[(k / 2) % tangents.len()] * if k % 2 == 0 { 1.0 } else { -1.0 };
        // tangential offset, then outward nudge so the projection lands on the boundary
        let offset = 0.9 * spread * ((k / 2) as f64 + 1.0) / count.div_ceil(2) as f64;
        let guess = x0 + dir * offset + &normal * spread;
        starts.push(scn.body().project(&guess)?);
    }
    Ok(starts)
}

/// Runs the catching-up scheme at λ = 0 from each start over `horizon`.
pub fn boundary_consistency(
    scn: &SweepingScenario,
    x0: &Point,
    starts: &[Point],
    horizon: f64,
    n: usize,
) -> Result<ConsistencyReport, EquilibriumError> {
    let oracle = boundary_oracle(scn.body())?;
    let long = scn.with_period(horizon).map_err(|e| EquilibriumError::InvalidArgument(e.to_string()))?;
    let mut final_distances = Vec::with_capacity(starts.len());
    let mut max_boundary_distance = 0.0f64;
    for q in starts {
        let traj = catchup::run(&long, 0.0, q, n)?;
        final_distances.push((traj.terminal() - x0).norm());
        for x in &traj.x_nodes {
            max_boundary_distance = max_boundary_distance.max(oracle.boundary_distance(x));
        }
    }
    Ok(ConsistencyReport { starts: starts.to_vec(), final_distances, max_boundary_distance })
}
