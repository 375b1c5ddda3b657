//! Bilinear interpolation kernels shared by the sampling op and its adjoint.
//!
//! Sampling grids use normalized coordinates in `[-1, 1]` where `-1` maps to
//! pixel 0 and `+1` to pixel `side - 1` (corner-aligned). A grid is stored
//! row-major as `(gx, gy)` pairs: `gx` selects the source column, `gy` the
//! source row. Taps that fall outside the source image contribute zero, and
//! gradients never flow into the grid itself — grids describe fixed geometry.

/// Converts a normalized coordinate in `[-1, 1]` to a pixel coordinate in
/// `[0, side - 1]`.
#[inline]
pub fn denormalize(g: f64, side: usize) -> f64 {
    (g + 1.0) / 2.0 * (side as f64 - 1.0)
}

/// Converts a pixel coordinate in `[0, side - 1]` to a normalized coordinate.
#[inline]
pub fn normalize(p: f64, side: usize) -> f64 {
    2.0 * p / (side as f64 - 1.0) - 1.0
}

/// The four taps of one bilinear read: `(row, col, weight)` with out-of-range
/// taps already dropped.
#[inline]
fn taps(height: usize, width: usize, row: f64, col: f64) -> [(isize, isize, f64); 4] {
    let r0 = row.floor();
    let c0 = col.floor();
    let fr = row - r0;
    let fc = col - c0;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let _ = (height, width);
    [
        (r0, c0, (1.0 - fr) * (1.0 - fc)),
        (r0, c0 + 1, (1.0 - fr) * fc),
        (r0 + 1, c0, fr * (1.0 - fc)),
        (r0 + 1, c0 + 1, fr * fc),
    ]
}

#[inline]
fn in_bounds(height: usize, width: usize, r: isize, c: isize) -> bool {
    r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width
}

/// Reads `src` (a `height x width` plane) at one bilinear location given in
/// pixel coordinates.
#[inline]
pub fn sample_at(src: &[f64], height: usize, width: usize, row: f64, col: f64) -> f64 {
    let mut acc = 0.0;
    for (r, c, w) in taps(height, width, row, col) {
        if in_bounds(height, width, r, c) {
            acc += w * src[r as usize * width + c as usize];
        }
    }
    acc
}

/// Adjoint of [`sample_at`]: deposits `value` into `dst` at the same four
/// taps with the same weights.
#[inline]
pub fn scatter_at(dst: &mut [f64], height: usize, width: usize, row: f64, col: f64, value: f64) {
    for (r, c, w) in taps(height, width, row, col) {
        if in_bounds(height, width, r, c) {
            dst[r as usize * width + c as usize] += w * value;
        }
    }
}

/// Samples a whole plane through a normalized `(gx, gy)` grid. `grid` holds
/// `out_h * out_w` pairs; `out` receives one value per grid entry.
pub fn sample_plane(
    src: &[f64],
    height: usize,
    width: usize,
    grid: &[f64],
    out_h: usize,
    out_w: usize,
    out: &mut [f64],
) {
    assert_eq!(grid.len(), out_h * out_w * 2);
    assert_eq!(out.len(), out_h * out_w);
    assert_eq!(src.len(), height * width);
    for idx in 0..out_h * out_w {
        let col = denormalize(grid[2 * idx], width);
        let row = denormalize(grid[2 * idx + 1], height);
        out[idx] = sample_at(src, height, width, row, col);
    }
}

/// Adjoint of [`sample_plane`]: scatters `grad_out` back into `grad_src`.
pub fn scatter_plane(
    grad_src: &mut [f64],
    height: usize,
    width: usize,
    grid: &[f64],
    out_h: usize,
    out_w: usize,
    grad_out: &[f64],
) {
    assert_eq!(grid.len(), out_h * out_w * 2);
    assert_eq!(grad_out.len(), out_h * out_w);
    assert_eq!(grad_src.len(), height * width);
    for idx in 0..out_h * out_w {
        let col = denormalize(grid[2 * idx], width);
        let row = denormalize(grid[2 * idx + 1], height);
        scatter_at(grad_src, height, width, row, col, grad_out[idx]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_endpoints_hit_first_and_last_pixel() {
        assert_eq!(denormalize(-1.0, 9), 0.0);
        assert_eq!(denormalize(1.0, 9), 8.0);
        assert_eq!(normalize(0.0, 9), -1.0);
        assert_eq!(normalize(8.0, 9), 1.0);
    }

    #[test]
    fn integer_locations_read_exactly() {
        let src = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        assert_eq!(sample_at(&src, 3, 3, 1.0, 2.0), 6.0);
        assert_eq!(sample_at(&src, 3, 3, 2.0, 0.0), 7.0);
    }

    #[test]
    fn midpoint_averages_four_neighbors() {
        let src = vec![1.0, 2.0, 3.0, 4.0];
        let v = sample_at(&src, 2, 2, 0.5, 0.5);
        assert!((v - 2.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_reads_zero() {
        let src = vec![5.0; 9];
        assert_eq!(sample_at(&src, 3, 3, -1.5, 1.0), 0.0);
        assert_eq!(sample_at(&src, 3, 3, 1.0, 7.0), 0.0);
        // Half-out locations keep only the in-range taps.
        let v = sample_at(&src, 3, 3, -0.5, 1.0);
        assert!((v - 2.5).abs() < 1e-15);
    }

    #[test]
    fn scatter_is_adjoint_of_sample() {
        // <A x, y> == <x, A^T y> for random-ish fixed data.
        let height = 5;
        let width = 4;
        let src: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let grid: Vec<f64> = (0..12)
            .map(|i| ((i as f64 * 0.71).cos() * 1.2).clamp(-1.3, 1.3))
            .collect();
        let (out_h, out_w) = (3, 2);
        let y: Vec<f64> = (0..6).map(|i| (i as f64 * 0.13).cos()).collect();

        let mut ax = vec![0.0; 6];
        sample_plane(&src, height, width, &grid, out_h, out_w, &mut ax);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();

        let mut aty = vec![0.0; 20];
        scatter_plane(&mut aty, height, width, &grid, out_h, out_w, &y);
        let rhs: f64 = src.iter().zip(&aty).map(|(a, b)| a * b).sum();

        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }
}
