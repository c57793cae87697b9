use super::{ConvexBody, ConvexError, Point};

const MAX_GRID_POINTS: f64 = 1e8;

/// Brute-force projection used as an independent test oracle.
///
/// Scans a grid of spacing `step` over the body's bounding box, keeps the
/// members (membership test only, never the projection routines), and then
/// slides the best few candidates along the segment towards `p` to the last
/// member point by bisection. Only defined for `d <= 3`.
pub fn project_oracle(p: &Point, body: &ConvexBody, step: f64) -> Result<Point, ConvexError> {
    let d = body.dim();
    if d > 3 {
        return Err(ConvexError::DimensionTooLarge(d));
    }
    if p.len() != d {
        return Err(ConvexError::DimensionMismatch { expected: d, got: p.len() });
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(ConvexError::InvalidArgument(format!("grid step must be positive, got {step}")));
    }
    if body.contains(p, 0.0) {
        return Ok(p.clone());
    }
    let (lo, hi) = body.bounding_box();
    let counts: Vec<usize> = (0..d).map(|i| ((hi[i] - lo[i]) / step).floor() as usize + 2).collect();
    let total: f64 = counts.iter().map(|&c| c as f64).product();
    if total > MAX_GRID_POINTS {
        return Err(ConvexError::InvalidArgument(format!("grid of {total:e} points is too large")));
    }
    let coord = |i: usize, k: usize| -> f64 { (lo[i] + k as f64 * step).min(hi[i]) };

    let mut members: Vec<(f64, Point)> = Vec::new();
    let mut best = f64::INFINITY;
    let slack = 2.0 * step * (d as f64).sqrt();
    let mut idx = vec![0usize; d];
    let mut g = Point::zeros(d);
    'grid: loop {
        for i in 0..d {
            g[i] = coord(i, idx[i]);
        }
        if body.contains(&g, 0.0) {
            let dist = (&g - p).norm();
            if dist <= best + slack {
                best = best.min(dist);
                members.push((dist, g.clone()));
                if members.len() > 4096 {
                    members.retain(|(dm, _)| *dm <= best + slack);
                }
            }
        }
        for i in 0..d {
            idx[i] += 1;
            if idx[i] < counts[i] {
                continue 'grid;
            }
            idx[i] = 0;
        }
        break;
    }
    if members.is_empty() {
        return Err(ConvexError::InvalidArgument("no grid point lies inside the body; refine the step".into()));
    }
    members.retain(|(dm, _)| *dm <= best + slack);

    let mut answer = members[0].1.clone();
    let mut answer_dist = f64::INFINITY;
    for (_, g) in members {
        // last member point on the segment g -> p
        let (mut inside, mut outside) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (inside + outside);
            if body.contains(&(&g + (p - &g) * mid), 0.0) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        let q = &g + (p - &g) * inside;
        let dist = (&q - p).norm();
        if dist < answer_dist {
            answer_dist = dist;
            answer = q;
        }
    }
    Ok(answer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn oracle_examples() {
        let ball = ConvexBody::ball(dvector![0.0, 0.0], 1.0).unwrap();
        let q = project_oracle(&dvector![2.0, 0.0], &ball, 1e-3).unwrap();
        assert!((q - dvector![1.0, 0.0]).norm() <= 2e-3);
        let b = ConvexBody::axis_box(dvector![1.0, 1.0], dvector![2.0, 2.0]).unwrap();
        let q = project_oracle(&dvector![0.0, 0.0], &b, 1e-3).unwrap();
        assert!((q - dvector![1.0, 1.0]).norm() <= 2e-3);
    }

    #[test]
    fn oracle_rejects_high_dimension() {
        let ball = ConvexBody::ball(Point::zeros(4), 1.0).unwrap();
        assert_eq!(project_oracle(&Point::zeros(4), &ball, 0.1), Err(ConvexError::DimensionTooLarge(4)));
    }
}
