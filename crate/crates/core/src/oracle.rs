//! Independent verification oracles used by the test suites.
//!
//! Nothing in here shares code with the implementations under test: the
//! gradient oracle is plain central finite differences, and the projection
//! oracle models each pixel as a unit square and computes exact geometric
//! overlap areas with detector strips (clipped-polygon areas), rather than
//! splatting point masses. Tests freeze expectations against these.

use crate::image::{center, Image};
use crate::radon::{AngleSet, Sinogram};

/// Central finite-difference gradient of a scalar function at `x0`.
pub fn finite_diff_grad(f: &mut dyn FnMut(&[f64]) -> f64, x0: &[f64], h: f64) -> Vec<f64> {
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let fp = f(&x);
        x[i] = x0[i] - h;
        let fm = f(&x);
        x[i] = x0[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Largest elementwise relative error between two gradients. `floor` guards
/// the denominator so near-zero entries compare absolutely against it.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs()).max(floor);
        worst = worst.max((a - n).abs() / denom);
    }
    worst
}

/// Relative L2 distance `|a - b| / |b|` between two flat buffers.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Clips a convex polygon against the half-plane `dot(normal, p) <= bound`.
fn clip_halfplane(poly: &[(f64, f64)], normal: (f64, f64), bound: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let inside = |p: (f64, f64)| normal.0 * p.0 + normal.1 * p.1 <= bound;
    for k in 0..poly.len() {
        let cur = poly[k];
        let next = poly[(k + 1) % poly.len()];
        let cur_in = inside(cur);
        let next_in = inside(next);
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in {
            // Edge crosses the boundary; add the intersection point.
            let dc = normal.0 * cur.0 + normal.1 * cur.1 - bound;
            let dn = normal.0 * next.0 + normal.1 * next.1 - bound;
            let t = dc / (dc - dn);
            out.push((cur.0 + t * (next.0 - cur.0), cur.1 + t * (next.1 - cur.1)));
        }
    }
    out
}

/// Shoelace area of a polygon.
fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in 0..poly.len() {
        let (x0, y0) = poly[k];
        let (x1, y1) = poly[(k + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

/// Reference parallel-beam projection by exact pixel/strip overlap.
///
/// Each pixel is a unit square; detector bin `j` is the strip of points
/// whose detector coordinate lies in `[j - 0.5, j + 0.5]`. The bin receives
/// `pixel value * overlap area`. This is a different discretization from the
/// production transform (area weighting vs. two-tap splatting), which is the
/// point: the two must agree only up to discretization error.
pub fn radon_strip_overlap(image: &Image, angles: &AngleSet) -> Sinogram {
    let side = image.side();
    let c = center(side);
    let mut sino = Sinogram::zeros(angles.clone(), side);
    for (i, theta) in angles.clone().iter().enumerate() {
        let (sin_t, cos_t) = theta.sin_cos();
        // Width of a pixel's footprint along the detector axis.
        let half_span = (cos_t.abs() + sin_t.abs()) / 2.0;
        for row in 0..side {
            for col in 0..side {
                let value = image.get(row, col);
                if value == 0.0 {
                    continue;
                }
                let u = col as f64 - c;
                let v = row as f64 - c;
                let t_center = u * cos_t + v * sin_t + c;
                let square = [
                    (u - 0.5, v - 0.5),
                    (u + 0.5, v - 0.5),
                    (u + 0.5, v + 0.5),
                    (u - 0.5, v + 0.5),
                ];
                let j_lo = ((t_center - half_span - 0.5).floor().max(0.0)) as usize;
                let j_hi = ((t_center + half_span + 0.5).ceil().min(side as f64 - 1.0)) as usize;
                for j in j_lo..=j_hi.min(side - 1) {
                    // Strip: j - 0.5 <= (p . d) + c <= j + 0.5, in centered
                    // coordinates bound = j +- 0.5 - c.
                    let lo = j as f64 - 0.5 - c;
                    let hi = j as f64 + 0.5 - c;
                    let clipped = clip_halfplane(&square, (cos_t, sin_t), hi);
                    let clipped = clip_halfplane(&clipped, (-cos_t, -sin_t), -lo);
                    let area = polygon_area(&clipped);
                    if area > 0.0 {
                        sino.row_mut(i)[j] += value * area;
                    }
                }
            }
        }
    }
    sino
}
