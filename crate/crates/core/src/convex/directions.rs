use statrs::distribution::{ContinuousCDF, Normal};

use super::Point;

/// Deterministic unit directions for support-function sampling.
///
/// The first `2d` directions are `±e_i`. The rest follow a golden-angle
/// sequence on the circle (d = 2) or an additive-recurrence (Kronecker)
/// sequence mapped to the sphere through the Gaussian quantile function
/// (d >= 3). Each list is a prefix of the list for any larger `n`.
pub fn sphere_directions(d: usize, n: usize) -> Vec<Point> {
    let mut dirs = Vec::with_capacity(n);
    for i in 0..d {
        for sign in [1.0, -1.0] {
            if dirs.len() == n {
                return dirs;
            }
            let mut e = Point::zeros(d);
            e[i] = sign;
            dirs.push(e);
        }
    }
    if d == 1 {
        return dirs;
    }
    let mut k = 1usize;
    if d == 2 {
        let golden = std::f64::consts::TAU * (1.0 - (5f64.sqrt() - 1.0) / 2.0);
        while dirs.len() < n {
            let th = golden * k as f64;
            dirs.push(Point::from_vec(vec![th.cos(), th.sin()]));
            k += 1;
        }
        return dirs;
    }
    let alpha = kronecker_constants(d);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    while dirs.len() < n {
        let g = Point::from_iterator(
            d,
            alpha.iter().map(|a| {
                let u = (0.5 + a * k as f64).fract();
                normal.inverse_cdf(u.clamp(1e-12, 1.0 - 1e-12))
            }),
        );
        let norm = g.norm();
        k += 1;
        if norm > 1e-12 {
            dirs.push(g / norm);
        }
    }
    dirs
}

/// `1/phi_d^j` for the generalized golden ratio `phi_d` (root of x^{d+1} = x + 1).
fn kronecker_constants(d: usize) -> Vec<f64> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
    }
    (1..=d).map(|j| phi.powi(-(j as i32)).fract()).collect()
}
