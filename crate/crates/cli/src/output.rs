use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sweeper::catchup::Trajectory;
use sweeper::convex::Point;

use crate::error::CliError;

/// Rows kept in a `*.plot.csv` companion.
pub const PLOT_ROWS: usize = 2000;

pub fn vec_of(p: &Point) -> Vec<f64> {
    p.iter().copied().collect()
}

/// Writes through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |source| CliError::Io { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io)
}

/// `foo.csv` -> `foo.plot.csv`
pub fn plot_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.plot.csv"))
}

/// One row per node: `t, u_1..u_d, x_1..x_d, step_iters, step_bound`. The
/// step columns of node `i >= 1` describe the step that produced it.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.dim();
    let mut out = String::from("t");
    for i in 1..=d {
        let _ = write!(out, ",u_{i}");
    }
    for i in 1..=d {
        let _ = write!(out, ",x_{i}");
    }
    out.push_str(",step_iters,step_bound\n");
    for k in 0..=traj.n {
        let _ = write!(out, "{}", traj.times[k]);
        for v in traj.u_nodes[k].iter().chain(traj.x_nodes[k].iter()) {
            let _ = write!(out, ",{v}");
        }
        match k.checked_sub(1).map(|i| &traj.per_step[i]) {
            Some(s) => {
                let _ = writeln!(out, ",{},{}", s.fixed_point_iters, s.bound);
            }
            None => out.push_str(",0,0\n"),
        }
    }
    out
}

/// `t, x_1..x_d`, thinned to at most [`PLOT_ROWS`] + 1 rows.
pub fn trajectory_plot_csv(traj: &Trajectory) -> String {
    let d = traj.dim();
    let mut out = String::from("t");
    for i in 1..=d {
        let _ = write!(out, ",x_{i}");
    }
    out.push('\n');
    let stride = traj.n.div_ceil(PLOT_ROWS).max(1);
    let mut k = 0;
    loop {
        let _ = write!(out, "{}", traj.times[k]);
        for v in traj.x_nodes[k].iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
        if k == traj.n {
            break;
        }
        k = (k + stride).min(traj.n);
    }
    out
}

/// Provenance block embedded in every JSON output.
pub fn meta(scenario_hash: Option<&str>, tolerances: Value) -> Value {
    json!({
        "tool": "sweeper",
        "version": env!("CARGO_PKG_VERSION"),
        "scenario_sha256": scenario_hash,
        "tolerances": tolerances,
    })
}

pub fn trajectory_summary(traj: &Trajectory) -> Value {
    json!({
        "n": traj.n,
        "lambda": traj.lambda,
        "period": traj.period(),
        "x_initial": vec_of(traj.initial()),
        "x_terminal": vec_of(traj.terminal()),
        "max_step_increment": traj.max_step_increment(),
        "u_variation": traj.u_variation(),
    })
}

pub fn to_pretty(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    s.push('\n');
    s
}
