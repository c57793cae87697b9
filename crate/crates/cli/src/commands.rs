use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sweeper::catchup::{self, DEFAULT_STEP_TOL};
use sweeper::convex::Point;
use sweeper::equilibrium::{self, Verdict};
use sweeper::poincare::{self, BranchPoint, DegreeResult, PeriodicOrbit, DEFAULT_N_SCHEDULE};
use sweeper::scenario::{AuditReport, SweepingScenario};
use sweeper::validation::{self, CheckOutcome};

use crate::error::CliError;
use crate::output::{self, meta, vec_of, write_atomic};
use crate::schema::{parse_scenario, scenario_hash, AUDIT_SAMPLES, AUDIT_SEED};

pub const DEFAULT_STEPS: usize = 1024;
pub const DEFAULT_DEGREE_STEPS: usize = 512;
pub const DEFAULT_PERIODIC_TOL: f64 = 1e-8;
pub const DEFAULT_EQUILIBRIUM_TOL: f64 = 1e-12;
pub const MAX_PICARD: usize = 500;
pub const VALIDATION_INSTANCES: usize = 10_000;

#[derive(Debug, Parser)]
#[command(name = "sweeper", version, about = "Simulation and periodic-orbit analysis of perturbed sweeping processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and write it as CSV
    Simulate,
    /// Search for a periodic orbit at one lambda
    Periodic,
    /// Find and classify a switched boundary equilibrium
    Equilibrium,
    /// Winding number of q - P(V(q)) along a polygon (2-D only)
    Degree,
    /// Periodic orbits along a lambda grid
    Continue,
    /// Run the projection inequality suite (and trajectory checks with --scenario)
    Validate,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Scenario JSON document
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Output file (stdout when absent)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Time steps per period
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Tolerance of the main solve
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0.0)]
    pub lambda: f64,
    /// a:b:steps, inclusive of both ends
    #[arg(long = "lambda-grid", global = true)]
    pub lambda_grid: Option<String>,
    /// "x1,y1;x2,y2;..."
    #[arg(long, global = true)]
    pub polygon: Option<String>,
    /// Boundary mesh points per polygon edge
    #[arg(long, global = true, default_value_t = poincare::MIN_MESH)]
    pub mesh: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Start or seed point "x1,x2,..."
    #[arg(long, global = true)]
    pub point: Option<String>,
    /// Skip the Lipschitz audit of the scenario
    #[arg(long = "no-audit", global = true)]
    pub no_audit: bool,
    /// Solve every lambda of a continuation from the seed (in parallel)
    #[arg(long = "no-warm-start", global = true)]
    pub no_warm_start: bool,
}

/// Parses `a:b:steps` into `steps` equally spaced values in ascending order.
pub fn parse_lambda_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("--lambda-grid expects a:b:steps, got {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if steps == 0 || !a.is_finite() || !b.is_finite() || (steps == 1 && a != b) {
        return Err(bad());
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
        return Err(CliError::Config(format!("lambda values must lie in [0,1], got {text:?}")));
    }
    if steps == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..steps).map(|k| if k + 1 == steps { hi } else { lo + (hi - lo) * k as f64 / (steps - 1) as f64 }).collect())
}

fn parse_coords(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect::<Option<Vec<f64>>>()
        .ok_or_else(|| CliError::Config(format!("{what}: cannot parse {text:?}")))
}

/// Parses `"x1,y1;x2,y2;..."`.
pub fn parse_polygon(text: &str) -> Result<Vec<Point>, CliError> {
    let pts = text
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let c = parse_coords(s, "--polygon")?;
            if c.len() != 2 {
                return Err(CliError::Config(format!("--polygon vertices are planar, got {s:?}")));
            }
            Ok(Point::from_vec(c))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if pts.len() < 3 {
        return Err(CliError::Config("--polygon needs at least 3 vertices".into()));
    }
    Ok(pts)
}

fn parse_point(text: &str, d: usize) -> Result<Point, CliError> {
    let c = parse_coords(text, "--point")?;
    if c.len() != d {
        return Err(CliError::Config(format!("--point needs {d} coordinates, got {}", c.len())));
    }
    Ok(Point::from_vec(c))
}

struct Loaded {
    scn: SweepingScenario,
    hash: String,
    audit: Option<AuditReport>,
}

fn load(opts: &Options) -> Result<Loaded, CliError> {
    let path = opts.scenario.as_ref().ok_or_else(|| CliError::Config("--scenario is required".into()))?;
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    let (scn, audit) = parse_scenario(&text, !opts.no_audit)?;
    Ok(Loaded { scn, hash: scenario_hash(&text), audit })
}

fn audit_json(audit: &Option<AuditReport>) -> Value {
    match audit {
        None => Value::Null,
        Some(a) => json!({
            "samples": a.samples_used,
            "seed": AUDIT_SEED,
            "l2_empirical": a.l2_empirical,
            "lf_empirical": a.lf_empirical,
            "var_a_empirical": a.var_a_empirical,
            "l1_empirical": a.l1_empirical,
            "pass": a.pass,
        }),
    }
}

fn check_lambda(lambda: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(CliError::Config(format!("--lambda must lie in [0,1], got {lambda}")))
    }
}

fn check_tol(tol: f64) -> Result<f64, CliError> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(CliError::Config(format!("--tol must be positive, got {tol}")))
    }
}

fn steps(opts: &Options, default: usize) -> Result<usize, CliError> {
    match opts.n {
        Some(0) => Err(CliError::Config("--n must be >= 1".into())),
        Some(n) => Ok(n),
        None => Ok(default),
    }
}

fn schedule(opts: &Options) -> Result<Vec<usize>, CliError> {
    Ok(match opts.n {
        None => DEFAULT_N_SCHEDULE.to_vec(),
        Some(_) => vec![steps(opts, 0)?],
    })
}

/// Writes `body` to `--out` (printing `summary` instead) or returns it for stdout.
fn emit(opts: &Options, body: String, summary: Option<Value>) -> Result<String, CliError> {
    match &opts.out {
        Some(path) => {
            write_atomic(path, &body)?;
            Ok(summary.map(|s| output::to_pretty(&s)).unwrap_or_default())
        }
        None => Ok(body),
    }
}

fn degree_json(d: &DegreeResult) -> Value {
    json!({
        "degree": d.degree,
        "min_field_norm": d.min_field_norm,
        "mesh_points": d.mesh_points,
        "polygon": d.polygon.iter().map(vec_of).collect::<Vec<_>>(),
    })
}

fn orbit_json(o: &PeriodicOrbit) -> Value {
    json!({
        "lambda": o.lambda,
        "q_star": vec_of(&o.q_star),
        "residual": o.residual,
        "n_used": o.n_used,
        "picard_iterations": o.picard_iterations,
        "max_distance_to_q_star": o.trajectory.max_distance_to(&o.q_star),
        "step_bounds_hold": catchup::step_variation_check(&o.trajectory),
        "degree_check": match &o.degree_check {
            None => Value::Null,
            Some(Ok(d)) => degree_json(d),
            Some(Err(e)) => json!({ "error": e.to_string() }),
        },
        "trajectory": output::trajectory_summary(&o.trajectory),
    })
}

/// Executes a parsed command line and returns what goes to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let opts = &cli.opts;
    check_lambda(opts.lambda)?;
    match cli.command {
        Command::Simulate => simulate(opts),
        Command::Periodic => periodic(opts),
        Command::Equilibrium => equilibrium_cmd(opts),
        Command::Degree => degree(opts),
        Command::Continue => continuation(opts),
        Command::Validate => validate(opts),
    }
}

fn simulate(opts: &Options) -> Result<String, CliError> {
    let Loaded { scn, hash, audit } = load(opts)?;
    let n = steps(opts, DEFAULT_STEPS)?;
    let tol = check_tol(opts.tol.unwrap_or(DEFAULT_STEP_TOL))?;
    let q = match &opts.point {
        Some(p) => parse_point(p, scn.dim())?,
        None => scn.interior_point().clone(),
    };
    let traj = catchup::run_with_tol(&scn, opts.lambda, &q, n, tol).map_err(|e| CliError::from_catchup("simulate", e))?;
    let csv = output::trajectory_csv(&traj);
    if let Some(path) = &opts.out {
        write_atomic(&output::plot_path(path), &output::trajectory_plot_csv(&traj))?;
    }
    let moreau = catchup::moreau_residual(&traj, &scn).map_err(|e| CliError::from_catchup("simulate", e))?;
    let summary = json!({
        "meta": meta(Some(&hash), json!({ "step_tol": tol })),
        "audit": audit_json(&audit),
        "trajectory": output::trajectory_summary(&traj),
        "step_bounds_hold": catchup::step_variation_check(&traj),
        "moreau_slack": moreau,
        "moreau_epsilon": catchup::moreau_epsilon(&traj),
    });
    emit(opts, csv, Some(summary))
}

fn periodic(opts: &Options) -> Result<String, CliError> {
    let Loaded { scn, hash, audit } = load(opts)?;
    let tol = check_tol(opts.tol.unwrap_or(DEFAULT_PERIODIC_TOL))?;
    let sched = schedule(opts)?;
    let orbit = match &opts.point {
        Some(p) => poincare::find_periodic_from(&scn, opts.lambda, &parse_point(p, scn.dim())?, tol, &sched, MAX_PICARD),
        None => poincare::find_periodic(&scn, opts.lambda, tol, &sched, MAX_PICARD),
    }
    .map_err(|e| CliError::from_poincare("find_periodic", e))?;
    let omega = scn.omega_region(opts.lambda).map_err(|e| CliError::Config(e.to_string()))?;
    let doc = json!({
        "meta": meta(Some(&hash), json!({ "tol": tol, "n_schedule": sched, "max_picard": MAX_PICARD })),
        "audit": audit_json(&audit),
        "omega": { "center": vec_of(omega.center()), "radius": omega.radius() },
        "orbit": orbit_json(&orbit),
    });
    let body = output::to_pretty(&doc);
    emit(opts, body, None)
}

/// Boundary point where `f₀` points straight into the body from outside.
fn default_equilibrium_seed(scn: &SweepingScenario) -> Result<Point, CliError> {
    let b0 = scn.interior_point();
    let f = scn.autonomous_force(b0);
    let reach = 2.0 * scn.body().max_norm_translated(&Point::zeros(scn.dim())) + 1.0;
    let guess = if f.norm() > 0.0 { b0 - f.normalize() * reach } else { b0.clone() };
    scn.body().project(&guess).map_err(|e| CliError::Config(e.to_string()))
}

fn equilibrium_cmd(opts: &Options) -> Result<String, CliError> {
    let Loaded { scn, hash, audit } = load(opts)?;
    let tol = check_tol(opts.tol.unwrap_or(DEFAULT_EQUILIBRIUM_TOL))?;
    let seed = match &opts.point {
        Some(p) => parse_point(p, scn.dim())?,
        None => default_equilibrium_seed(&scn)?,
    };
    let report = equilibrium::analyze(&scn, &seed, tol).map_err(|e| CliError::from_equilibrium("find_switched_equilibrium", e))?;
    let eig = |list: &[nalgebra::Complex<f64>]| list.iter().map(|e| json!([e.re, e.im])).collect::<Vec<_>>();
    let doc = json!({
        "meta": meta(Some(&hash), json!({ "newton_tol": tol, "fd_step": report.fd_step, "fd_noise": report.fd_noise })),
        "audit": audit_json(&audit),
        "seed": vec_of(&seed),
        "x0": vec_of(&report.x0),
        "alpha": report.alpha,
        "sliding_eigenvalues": eig(&report.sliding_eigenvalues),
        "literal_jacobian_eigenvalues": eig(&report.literal_eigenvalues),
        "eigenvalue_convention": "flow x' = -fbar(x); literal_jacobian_eigenvalues are those of fbar'(x0)",
        "zero_mode_index": report.zero_mode_index,
        "verdict": report.verdict.as_str(),
        "stable": report.verdict == Verdict::Stable,
    });
    emit(opts, output::to_pretty(&doc), None)
}

fn degree(opts: &Options) -> Result<String, CliError> {
    let Loaded { scn, hash, audit } = load(opts)?;
    let polygon = parse_polygon(opts.polygon.as_deref().ok_or_else(|| CliError::Config("--polygon is required".into()))?)?;
    let n = steps(opts, DEFAULT_DEGREE_STEPS)?;
    let result = poincare::degree_2d(&scn, opts.lambda, n, &polygon, opts.mesh).map_err(|e| CliError::from_poincare("degree_2d", e))?;
    let doc = json!({
        "meta": meta(Some(&hash), json!({ "n": n, "mesh": opts.mesh, "min_field_norm_floor": poincare::MIN_FIELD_NORM })),
        "audit": audit_json(&audit),
        "lambda": opts.lambda,
        "result": degree_json(&result),
    });
    emit(opts, output::to_pretty(&doc), None)
}

fn branch_json(p: &BranchPoint) -> Value {
    match &p.orbit {
        Ok(o) => json!({
            "lambda": p.lambda,
            "converged": true,
            "distance_to_seed": p.distance_to_seed,
            "orbit": orbit_json(o),
        }),
        Err(e) => json!({ "lambda": p.lambda, "converged": false, "error": e.to_string() }),
    }
}

fn continuation(opts: &Options) -> Result<String, CliError> {
    let Loaded { scn, hash, audit } = load(opts)?;
    let grid = parse_lambda_grid(opts.lambda_grid.as_deref().ok_or_else(|| CliError::Config("--lambda-grid is required".into()))?)?;
    let tol = check_tol(opts.tol.unwrap_or(DEFAULT_PERIODIC_TOL))?;
    let sched = schedule(opts)?;
    let seed = match &opts.point {
        Some(p) => parse_point(p, scn.dim())?,
        None => poincare::find_periodic(&scn, 0.0, tol, &sched, MAX_PICARD).map_err(|e| CliError::from_poincare("find_periodic at lambda = 0", e))?.q_star,
    };
    let warm = !opts.no_warm_start;
    let branch = poincare::continue_branch(&scn, &grid, &seed, tol, &sched, MAX_PICARD, warm)
        .map_err(|e| CliError::from_poincare("continue_branch", e))?;
    if let Some(path) = &opts.out {
        let mut plot = String::from("lambda,distance_to_seed,residual\n");
        for p in &branch {
            if let (Ok(o), Some(dist)) = (&p.orbit, p.distance_to_seed) {
                plot.push_str(&format!("{},{},{}\n", p.lambda, dist, o.residual));
            }
        }
        write_atomic(&output::plot_path(path), &plot)?;
    }
    let doc = json!({
        "meta": meta(Some(&hash), json!({ "tol": tol, "n_schedule": sched, "max_picard": MAX_PICARD, "warm_start": warm })),
        "audit": audit_json(&audit),
        "seed": vec_of(&seed),
        "branch": branch.iter().map(branch_json).collect::<Vec<_>>(),
    });
    emit(opts, output::to_pretty(&doc), None)
}

fn check_json(c: &CheckOutcome) -> Value {
    json!({ "name": c.name, "instances": c.instances, "worst_slack": c.worst_slack, "passed": c.passed })
}

fn validate(opts: &Options) -> Result<String, CliError> {
    let convex = |e: sweeper::convex::ConvexError| CliError::Config(e.to_string());
    let mut checks: Vec<CheckOutcome> = validation::projection_suite(opts.seed, VALIDATION_INSTANCES, 4).map_err(convex)?.to_vec();
    checks.push(validation::sqrt_bound_suite(opts.seed, VALIDATION_INSTANCES, 4).map_err(convex)?);
    let (gap, ratio) = validation::counterexample_check(opts.seed, VALIDATION_INSTANCES).map_err(|e| CliError::NonConvergence {
        operation: "projection_gap_search",
        message: e.to_string(),
    })?;
    checks.push(gap);
    let mut hash = None;
    if opts.scenario.is_some() {
        let loaded = load(opts)?;
        let n = steps(opts, DEFAULT_STEPS)?;
        let q = match &opts.point {
            Some(p) => parse_point(p, loaded.scn.dim())?,
            None => loaded.scn.interior_point().clone(),
        };
        let traj_checks = validation::trajectory_checks(&loaded.scn, opts.lambda, &q, n).map_err(|e| CliError::from_catchup("validate", e))?;
        checks.extend(traj_checks);
        hash = Some(loaded.hash);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let doc = json!({
        "meta": meta(hash.as_deref(), json!({ "slack_floor": validation::SLACK_FLOOR, "instances": VALIDATION_INSTANCES, "seed": opts.seed, "audit_samples": AUDIT_SAMPLES })),
        "counterexample_ratio": ratio,
        "checks": checks.iter().map(check_json).collect::<Vec<_>>(),
        "all_passed": failed == 0,
    });
    let out = emit(opts, output::to_pretty(&doc), None)?;
    if failed > 0 {
        print!("{out}");
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(out)
}

/// Caps the rayon pool from `SWEEPER_THREADS`.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SWEEPER_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config(format!("SWEEPER_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_grid_parsing() {
        assert_eq!(parse_lambda_grid("0:0.2:3").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(parse_lambda_grid("0.2:0:3").unwrap(), vec![0.0, 0.1, 0.2]);
        assert_eq!(parse_lambda_grid("0.5:0.5:1").unwrap(), vec![0.5]);
        assert!(parse_lambda_grid("0:2:3").is_err());
        assert!(parse_lambda_grid("0:1").is_err());
        assert!(parse_lambda_grid("0:1:0").is_err());
    }

    #[test]
    fn polygon_parsing() {
        let p = parse_polygon("0.9,-0.1; 1.1,-0.1; 1.1,0.1; 0.9,0.1").unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p[1], Point::from_vec(vec![1.1, -0.1]));
        assert!(parse_polygon("0,0;1,1").is_err());
        assert!(parse_polygon("0,0;1,1,1;2,0").is_err());
        assert!(parse_polygon("0,0;a,1;2,0").is_err());
    }
}
