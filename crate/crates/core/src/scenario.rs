//! Problem data: the moving set `A + a(t,λ) + c(x,λ)`, the perturbation
//! `f(t,x,λ)`, the declared Lipschitz constants, and the derived objects
//! (fixed point of `c`, invariant ball Ω).
//!
//! The λ-homotopy is expressed through [`LambdaCoupling`]: a
//! `LinearInLambda` component is multiplied by λ, so at λ = 0 the drift and
//! the contraction vanish and the force reduces to its autonomous part.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use thiserror::Error;

use crate::convex::{Ball, ConvexBody, ConvexError, Point, MAX_DIM};

/// Budget of the Picard iteration for the fixed point of `c`.
pub const FIXED_POINT_BUDGET: usize = 100_000;

/// Declared L2 used by convention for the zero contraction.
pub const ZERO_CONTRACTION_L2: f64 = 1e-6;

/// Number of time samples used for Ω.
pub const OMEGA_TIME_GRID: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("{what}: dimension {got} does not match scenario dimension {expected}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("lambda {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
    #[error("fixed-point iteration for c did not converge in {iterations} steps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error(transparent)]
    Convex(#[from] ConvexError),
}

fn expect_dim(what: &str, expected: usize, p: &Point) -> Result<(), ScenarioError> {
    if p.len() != expected {
        return Err(ScenarioError::DimensionMismatch { what: what.to_string(), expected, got: p.len() });
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(ScenarioError::Invalid(format!("{what} has a non-finite entry")));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(ScenarioError::LambdaOutOfRange(lambda))
    }
}

/// How a component depends on the continuation parameter λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaCoupling {
    Constant,
    LinearInLambda,
}

impl LambdaCoupling {
    fn factor(self, lambda: f64) -> f64 {
        match self {
            LambdaCoupling::Constant => 1.0,
            LambdaCoupling::LinearInLambda => lambda,
        }
    }
}

/// Trigonometric polynomial `Σ_k cos_k cos(2πkt/P) + sin_k sin(2πkt/P)`,
/// with the harmonic index `k` starting at 0 for both lists (so `cos[0]` is
/// a constant term and `sin[0]` has no effect).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSeries {
    pub cos: Vec<Point>,
    pub sin: Vec<Point>,
    pub period: f64,
}

impl FourierSeries {
    pub fn zero(d: usize) -> Self {
        Self { cos: vec![Point::zeros(d)], sin: Vec::new(), period: 1.0 }
    }

    fn validate(&self, what: &str, d: usize) -> Result<(), ScenarioError> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(ScenarioError::Invalid(format!("{what}: Fourier period must be positive")));
        }
        for (k, c) in self.cos.iter().enumerate() {
            expect_dim(&format!("{what}.cos[{k}]"), d, c)?;
        }
        for (k, s) in self.sin.iter().enumerate() {
            expect_dim(&format!("{what}.sin[{k}]"), d, s)?;
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, d: usize) -> Point {
        let w = TAU * t / self.period;
        let mut out = Point::zeros(d);
        for (k, c) in self.cos.iter().enumerate() {
            out += c * (w * k as f64).cos();
        }
        for (k, s) in self.sin.iter().enumerate().skip(1) {
            out += s * (w * k as f64).sin();
        }
        out
    }

    /// Upper bound on `|d/dt|` of the series.
    pub fn speed_bound(&self) -> f64 {
        let harmonics = self.cos.len().max(self.sin.len());
        (1..harmonics)
            .map(|k| {
                let c = self.cos.get(k).map_or(0.0, |v| v.norm());
                let s = self.sin.get(k).map_or(0.0, |v| v.norm());
                (c + s) * TAU * k as f64 / self.period
            })
            .sum()
    }

    fn is_zero(&self) -> bool {
        self.cos.iter().all(|c| c.iter().all(|v| *v == 0.0))
            && self.sin.iter().skip(1).all(|s| s.iter().all(|v| *v == 0.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftShape {
    Fourier(FourierSeries),
    /// Linear interpolation through `(times[k], values[k])`, constant outside.
    PiecewiseLinear { times: Vec<f64>, values: Vec<Point> },
    /// `direction * sqrt(|t - cusp_time|)`: continuous, of bounded variation, not Lipschitz.
    SqrtCusp { direction: Point, cusp_time: f64 },
}

/// The translation `a(t, λ)` of the fixed body.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    shape: DriftShape,
    coupling: LambdaCoupling,
    dim: usize,
}

impl DriftSpec {
    pub fn new(shape: DriftShape, coupling: LambdaCoupling, dim: usize) -> Result<Self, ScenarioError> {
        match &shape {
            DriftShape::Fourier(f) => f.validate("drift", dim)?,
            DriftShape::PiecewiseLinear { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(ScenarioError::Invalid(
                        "piecewise-linear drift needs equally many (>= 1) times and values".into(),
                    ));
                }
                if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(ScenarioError::Invalid("piecewise-linear drift times must increase strictly".into()));
                }
                for (k, v) in values.iter().enumerate() {
                    expect_dim(&format!("drift.values[{k}]"), dim, v)?;
                }
            }
            DriftShape::SqrtCusp { direction, cusp_time } => {
                expect_dim("drift.direction", dim, direction)?;
                if !cusp_time.is_finite() {
                    return Err(ScenarioError::Invalid("cusp time must be finite".into()));
                }
            }
        }
        Ok(Self { shape, coupling, dim })
    }

    pub fn zero(dim: usize) -> Self {
        Self { shape: DriftShape::Fourier(FourierSeries::zero(dim)), coupling: LambdaCoupling::Constant, dim }
    }

    pub fn shape(&self) -> &DriftShape {
        &self.shape
    }

    pub fn coupling(&self) -> LambdaCoupling {
        self.coupling
    }

    fn base(&self, t: f64) -> Point {
        match &self.shape {
            DriftShape::Fourier(f) => f.eval(t, self.dim),
            DriftShape::PiecewiseLinear { times, values } => {
                if t <= times[0] {
                    return values[0].clone();
                }
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last].clone();
                }
                let k = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                &values[k] * (1.0 - w) + &values[k + 1] * w
            }
            DriftShape::SqrtCusp { direction, cusp_time } => direction * (t - cusp_time).abs().sqrt(),
        }
    }

    /// `a(t, λ)`.
    pub fn eval(&self, t: f64, lambda: f64) -> Result<Point, ScenarioError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(ScenarioError::TimeOutOfRange { t, horizon: f64::INFINITY });
        }
        check_lambda(lambda)?;
        Ok(self.base(t) * self.coupling.factor(lambda))
    }

    /// Upper bound on `var(a(·,λ), [s,t])`, uniform in λ ∈ [0,1].
    pub fn variation_bound(&self, s: f64, t: f64) -> Result<f64, ScenarioError> {
        if !(s.is_finite() && t.is_finite() && 0.0 <= s && s <= t) {
            return Err(ScenarioError::TimeOutOfRange { t: if s < 0.0 { s } else { t }, horizon: f64::INFINITY });
        }
        Ok(match &self.shape {
            DriftShape::Fourier(f) => f.speed_bound() * (t - s),
            DriftShape::PiecewiseLinear { times, values } => times
                .windows(2)
                .zip(values.windows(2))
                .map(|(tw, vw)| {
                    let overlap = (t.min(tw[1]) - s.max(tw[0])).max(0.0);
                    (&vw[1] - &vw[0]).norm() * overlap / (tw[1] - tw[0])
                })
                .sum(),
            DriftShape::SqrtCusp { direction, cusp_time } => {
                let c = *cusp_time;
                let profile = if t <= c {
                    (c - s).sqrt() - (c - t).sqrt()
                } else if s >= c {
                    (t - c).sqrt() - (s - c).sqrt()
                } else {
                    (c - s).sqrt() + (t - c).sqrt()
                };
                direction.norm() * profile
            }
        })
    }

    /// `a(·, 0) ≡ 0`.
    pub fn vanishes_at_zero(&self) -> bool {
        if self.coupling == LambdaCoupling::LinearInLambda {
            return true;
        }
        match &self.shape {
            DriftShape::Fourier(f) => f.is_zero(),
            DriftShape::PiecewiseLinear { values, .. } => values.iter().all(|v| v.iter().all(|x| *x == 0.0)),
            DriftShape::SqrtCusp { direction, .. } => direction.iter().all(|x| *x == 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContractionKind {
    Zero,
    /// `c(x) = M x + offset`
    Affine { matrix: DMatrix<f64>, offset: Point },
    /// `c(x) = gain * tanh(|x - center|) * (x - center) / |x - center|`; Lipschitz constant `|gain|`.
    TanhRadial { gain: f64, center: Point },
}

/// The state-dependent translation `c(x, λ)` with its declared Lipschitz constant L2.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionSpec {
    kind: ContractionKind,
    coupling: LambdaCoupling,
    declared_l2: f64,
    dim: usize,
}

impl ContractionSpec {
    pub fn new(kind: ContractionKind, coupling: LambdaCoupling, declared_l2: f64, dim: usize) -> Result<Self, ScenarioError> {
        if !(declared_l2 > 0.0 && declared_l2 < 1.0) {
            return Err(ScenarioError::Invalid(format!("L2 must lie in (0,1), got {declared_l2}")));
        }
        match &kind {
            ContractionKind::Zero => {}
            ContractionKind::Affine { matrix, offset } => {
                if matrix.nrows() != dim || matrix.ncols() != dim {
                    return Err(ScenarioError::DimensionMismatch {
                        what: "contraction.matrix".into(),
                        expected: dim,
                        got: matrix.nrows(),
                    });
                }
                if matrix.iter().any(|v| !v.is_finite()) {
                    return Err(ScenarioError::Invalid("contraction matrix has a non-finite entry".into()));
                }
                expect_dim("contraction.offset", dim, offset)?;
            }
            ContractionKind::TanhRadial { gain, center } => {
                if !gain.is_finite() {
                    return Err(ScenarioError::Invalid("tanh gain must be finite".into()));
                }
                expect_dim("contraction.center", dim, center)?;
            }
        }
        Ok(Self { kind, coupling, declared_l2, dim })
    }

    pub fn zero(dim: usize) -> Self {
        Self { kind: ContractionKind::Zero, coupling: LambdaCoupling::Constant, declared_l2: ZERO_CONTRACTION_L2, dim }
    }

    pub fn kind(&self) -> &ContractionKind {
        &self.kind
    }

    pub fn coupling(&self) -> LambdaCoupling {
        self.coupling
    }

    pub fn declared_l2(&self) -> f64 {
        self.declared_l2
    }

    /// `c(x, λ)`.
    pub fn eval(&self, x: &Point, lambda: f64) -> Point {
        let base = match &self.kind {
            ContractionKind::Zero => return Point::zeros(self.dim),
            ContractionKind::Affine { matrix, offset } => matrix * x + offset,
            ContractionKind::TanhRadial { gain, center } => {
                let y = x - center;
                let r = y.norm();
                if r == 0.0 {
                    Point::zeros(self.dim)
                } else {
                    y * (gain * r.tanh() / r)
                }
            }
        };
        base * self.coupling.factor(lambda)
    }

    /// Unique `ξ` with `c(ξ, λ) = ξ`, by Picard iteration from the origin.
    pub fn fixed_point(&self, lambda: f64, tol: f64) -> Result<Point, ScenarioError> {
        check_lambda(lambda)?;
        let mut xi = Point::zeros(self.dim);
        let mut residual = f64::INFINITY;
        for _ in 0..FIXED_POINT_BUDGET {
            let next = self.eval(&xi, lambda);
            residual = (&next - &xi).norm();
            if residual <= tol {
                return Ok(xi);
            }
            xi = next;
        }
        Err(ScenarioError::NonConvergence { iterations: FIXED_POINT_BUDGET, residual })
    }

    pub fn vanishes_at_zero(&self) -> bool {
        self.coupling == LambdaCoupling::LinearInLambda || matches!(self.kind, ContractionKind::Zero)
    }
}

/// `gain * tanh(<direction, x - center>) * direction`
#[derive(Debug, Clone, PartialEq)]
pub struct TanhTerm {
    pub gain: f64,
    pub direction: Point,
    pub center: Point,
}

/// Perturbation `f(t,x,λ) = L x + offset + Σ tanh terms + forcing(t,λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceSpec {
    linear: DMatrix<f64>,
    offset: Point,
    tanh_terms: Vec<TanhTerm>,
    forcing: FourierSeries,
    forcing_coupling: LambdaCoupling,
    declared_lf: f64,
}

impl ForceSpec {
    pub fn new(
        linear: DMatrix<f64>,
        offset: Point,
        tanh_terms: Vec<TanhTerm>,
        forcing: FourierSeries,
        forcing_coupling: LambdaCoupling,
        declared_lf: f64,
    ) -> Result<Self, ScenarioError> {
        let d = offset.len();
        if linear.nrows() != d || linear.ncols() != d {
            return Err(ScenarioError::DimensionMismatch { what: "force.linear".into(), expected: d, got: linear.nrows() });
        }
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(ScenarioError::Invalid("force matrix has a non-finite entry".into()));
        }
        expect_dim("force.offset", d, &offset)?;
        for (k, term) in tanh_terms.iter().enumerate() {
            expect_dim(&format!("force.tanh_terms[{k}].direction"), d, &term.direction)?;
            expect_dim(&format!("force.tanh_terms[{k}].center"), d, &term.center)?;
            if !term.gain.is_finite() {
                return Err(ScenarioError::Invalid(format!("force.tanh_terms[{k}].gain is not finite")));
            }
        }
        forcing.validate("force.forcing", d)?;
        if !(declared_lf.is_finite() && declared_lf >= 0.0) {
            return Err(ScenarioError::Invalid(format!("Lf must be finite and >= 0, got {declared_lf}")));
        }
        Ok(Self { linear, offset, tanh_terms, forcing, forcing_coupling, declared_lf })
    }

    /// Affine force `L x + offset` with no forcing.
    pub fn affine(linear: DMatrix<f64>, offset: Point, declared_lf: f64) -> Result<Self, ScenarioError> {
        let d = offset.len();
        Self::new(linear, offset, Vec::new(), FourierSeries::zero(d), LambdaCoupling::Constant, declared_lf)
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn declared_lf(&self) -> f64 {
        self.declared_lf
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn offset(&self) -> &Point {
        &self.offset
    }

    pub fn tanh_terms(&self) -> &[TanhTerm] {
        &self.tanh_terms
    }

    pub fn forcing(&self) -> &FourierSeries {
        &self.forcing
    }

    pub fn forcing_coupling(&self) -> LambdaCoupling {
        self.forcing_coupling
    }

    /// The time-independent part `f₀(x)`.
    pub fn autonomous(&self, x: &Point) -> Point {
        let mut out = &self.linear * x + &self.offset;
        for term in &self.tanh_terms {
            out += &term.direction * (term.gain * term.direction.dot(&(x - &term.center)).tanh());
        }
        out
    }

    /// `f(t, x, λ)`.
    pub fn eval(&self, t: f64, x: &Point, lambda: f64) -> Point {
        self.autonomous(x) + self.forcing.eval(t, self.dim()) * self.forcing_coupling.factor(lambda)
    }

    /// Lipschitz bound in `x` implied by the construction.
    pub fn structural_lipschitz(&self) -> f64 {
        let svd = self.linear.clone().svd(false, false);
        let op = svd.singular_values.max();
        op + self.tanh_terms.iter().map(|t| t.gain.abs() * t.direction.norm_squared()).sum::<f64>()
    }

    pub fn forcing_vanishes_at_zero(&self) -> bool {
        self.forcing_coupling == LambdaCoupling::LinearInLambda || self.forcing.is_zero()
    }
}

/// Empirical check of the declared constants.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub l2_empirical: f64,
    pub lf_empirical: f64,
    pub var_a_empirical: f64,
    /// `(1 + L2) sup |f|` over Ω; informational, compare with the declared L1.
    pub l1_empirical: f64,
    pub samples_used: usize,
    pub pass: bool,
}

/// Complete problem datum of `-dx ∈ N_{A + a(t,λ) + c(x,λ)}(x) + f(t,x,λ) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepingScenario {
    body: ConvexBody,
    interior_point: Point,
    drift: DriftSpec,
    contraction: ContractionSpec,
    force: ForceSpec,
    period: f64,
    l1: f64,
}

impl SweepingScenario {
    pub fn new(
        body: ConvexBody,
        interior_point: Point,
        drift: DriftSpec,
        contraction: ContractionSpec,
        force: ForceSpec,
        period: f64,
        l1: f64,
    ) -> Result<Self, ScenarioError> {
        let d = body.dim();
        if d == 0 || d > MAX_DIM {
            return Err(ScenarioError::Invalid(format!("dimension {d} outside 1..=8")));
        }
        expect_dim("interior_point", d, &interior_point)?;
        for (what, got) in [("drift", drift.dim), ("contraction", contraction.dim), ("force", force.dim())] {
            if got != d {
                return Err(ScenarioError::DimensionMismatch { what: what.into(), expected: d, got });
            }
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(ScenarioError::Invalid(format!("period must be positive, got {period}")));
        }
        if !(l1.is_finite() && l1 >= 0.0) {
            return Err(ScenarioError::Invalid(format!("L1 must be finite and >= 0, got {l1}")));
        }
        let gap = body.distance(&interior_point)?;
        if gap > 1e-10 {
            return Err(ScenarioError::Invalid(format!("interior point lies {gap:e} outside the body")));
        }
        Ok(Self { body, interior_point, drift, contraction, force, period, l1 })
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn interior_point(&self) -> &Point {
        &self.interior_point
    }

    pub fn drift_spec(&self) -> &DriftSpec {
        &self.drift
    }

    pub fn contraction_spec(&self) -> &ContractionSpec {
        &self.contraction
    }

    pub fn force_spec(&self) -> &ForceSpec {
        &self.force
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.contraction.declared_l2
    }

    pub fn lf(&self) -> f64 {
        self.force.declared_lf
    }

    /// Same data over a different horizon.
    pub fn with_period(&self, period: f64) -> Result<Self, ScenarioError> {
        Self::new(
            self.body.clone(),
            self.interior_point.clone(),
            self.drift.clone(),
            self.contraction.clone(),
            self.force.clone(),
            period,
            self.l1,
        )
    }

    fn check_time(&self, t: f64) -> Result<(), ScenarioError> {
        if t.is_finite() && t >= 0.0 && t <= self.period * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(ScenarioError::TimeOutOfRange { t, horizon: self.period })
        }
    }

    pub fn drift(&self, t: f64, lambda: f64) -> Result<Point, ScenarioError> {
        self.check_time(t)?;
        self.drift.eval(t, lambda)
    }

    pub fn drift_variation_bound(&self, s: f64, t: f64) -> Result<f64, ScenarioError> {
        self.check_time(s)?;
        self.check_time(t)?;
        self.drift.variation_bound(s, t)
    }

    pub fn contraction(&self, x: &Point, lambda: f64) -> Point {
        self.contraction.eval(x, lambda)
    }

    pub fn force(&self, t: f64, x: &Point, lambda: f64) -> Point {
        self.force.eval(t, x, lambda)
    }

    /// `f₀ = f(·,·,0)` when the scenario is autonomous at λ = 0.
    pub fn autonomous_force(&self, x: &Point) -> Point {
        self.force.eval(0.0, x, 0.0)
    }

    /// Drift and contraction vanish and the force is time-independent at λ = 0.
    pub fn is_autonomous_at_zero(&self) -> bool {
        self.drift.vanishes_at_zero() && self.contraction.vanishes_at_zero() && self.force.forcing_vanishes_at_zero()
    }

    /// Fixed point `ξ` of `c(·, λ)`.
    pub fn contraction_fixed_point(&self, lambda: f64, tol: f64) -> Result<Point, ScenarioError> {
        self.contraction.fixed_point(lambda, tol)
    }

    /// Invariant ball Ω = B(ξ, R) with `R = sup_t sup_{b ∈ A + a(t,λ)} |b| / (1 - L2)`.
    ///
    /// The sup over time uses a 256-point grid; between grid points the drift
    /// can move by at most its variation bound, which is added to each sample.
    pub fn omega_region(&self, lambda: f64) -> Result<Ball, ScenarioError> {
        let xi = self.contraction_fixed_point(lambda, 1e-13)?;
        let n = OMEGA_TIME_GRID - 1;
        let mut sup_b = 0.0f64;
        for k in 0..=n {
            let t = self.period * k as f64 / n as f64;
            let a = self.drift(t, lambda)?;
            let mut bound = self.body.max_norm_translated(&a);
            if k < n {
                let t_next = self.period * (k + 1) as f64 / n as f64;
                bound += self.drift.coupling.factor(lambda) * self.drift.variation_bound(t, t_next)?;
            }
            sup_b = sup_b.max(bound);
        }
        Ok(Ball::new(xi, sup_b / (1.0 - self.l2()))?)
    }

    /// Difference-quotient estimates of the Lipschitz constants of `c` and
    /// `f` on pairs drawn uniformly from the doubled Ω ball (at λ = 1, where
    /// the λ-coupled parts are largest).
    pub fn lipschitz_audit(&self, n_samples: usize, seed: u64) -> Result<AuditReport, ScenarioError> {
        let n_samples = n_samples.max(1000);
        let omega = self.omega_region(1.0)?;
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sample_ball = |rng: &mut ChaCha8Rng, radius: f64| -> Point {
            loop {
                let p = Point::from_iterator(d, (0..d).map(|_| rng.gen_range(-1.0..=1.0)));
                if p.norm() <= 1.0 {
                    return omega.center() + p * radius;
                }
            }
        };
        let (mut l2_emp, mut lf_emp, mut f_sup) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..n_samples {
            let x = sample_ball(&mut rng, 2.0 * omega.radius());
            let y = sample_ball(&mut rng, 2.0 * omega.radius());
            let dist = (&x - &y).norm();
            if dist == 0.0 {
                continue;
            }
            let t = rng.gen_range(0.0..=self.period);
            l2_emp = l2_emp.max((self.contraction(&x, 1.0) - self.contraction(&y, 1.0)).norm() / dist);
            lf_emp = lf_emp.max((self.force(t, &x, 1.0) - self.force(t, &y, 1.0)).norm() / dist);
            let z = sample_ball(&mut rng, omega.radius());
            f_sup = f_sup.max(self.force(t, &z, 1.0).norm());
        }
        let grid = 4096;
        let mut var_a = 0.0;
        let mut prev = self.drift(0.0, 1.0)?;
        for k in 1..=grid {
            let a = self.drift(self.period * k as f64 / grid as f64, 1.0)?;
            var_a += (&a - &prev).norm();
            prev = a;
        }
        let slack = 1.0 + 1e-9;
        let pass = l2_emp <= self.l2() * slack && lf_emp <= self.lf() * slack;
        Ok(AuditReport {
            l2_empirical: l2_emp,
            lf_empirical: lf_emp,
            var_a_empirical: var_a,
            l1_empirical: (1.0 + l2_emp) * f_sup,
            samples_used: n_samples,
            pass,
        })
    }
}
