//! Square grayscale images and the inscribed-circle field of view.
//!
//! Everything downstream (projection, reconstruction, metrics) works on
//! square images and only trusts pixels inside the circle inscribed in the
//! square: a parallel-beam scan only covers that disc at every angle, so the
//! corners are unmeasured and are pinned to zero.

/// A square image stored row-major as `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    side: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// All-zero image of the given side length.
    pub fn zeros(side: usize) -> Self {
        assert!(side > 0, "image side must be positive");
        Image { side, pixels: vec![0.0; side * side] }
    }

    /// Wraps an existing row-major pixel buffer. `pixels.len()` must equal
    /// `side * side`.
    pub fn from_pixels(side: usize, pixels: Vec<f64>) -> Self {
        assert!(side > 0, "image side must be positive");
        assert_eq!(pixels.len(), side * side, "pixel buffer does not match side length");
        Image { side, pixels }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * self.side + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.pixels
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    /// Sum of all pixels.
    pub fn total_mass(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Zeroes every pixel outside the inscribed circle.
    pub fn apply_circle_mask(&mut self) {
        let mask = circle_mask(self.side);
        for (p, m) in self.pixels.iter_mut().zip(&mask) {
            *p *= m;
        }
    }
}

/// Geometric center of an `side`-pixel axis: pixel centers sit at integer
/// coordinates, so the center falls between pixels for even sides.
pub fn center(side: usize) -> f64 {
    (side as f64 - 1.0) / 2.0
}

/// Returns true when pixel `(row, col)` lies inside the circle of radius
/// `side / 2` centered on the image.
pub fn in_circle(side: usize, row: usize, col: usize) -> bool {
    let c = center(side);
    let dr = row as f64 - c;
    let dc = col as f64 - c;
    let r = side as f64 / 2.0;
    dr * dr + dc * dc <= r * r
}

/// Row-major 0/1 mask of the inscribed circle.
pub fn circle_mask(side: usize) -> Vec<f64> {
    let mut mask = vec![0.0; side * side];
    for row in 0..side {
        for col in 0..side {
            if in_circle(side, row, col) {
                mask[row * side + col] = 1.0;
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_keeps_center_and_drops_corners() {
        let side = 8;
        let mask = circle_mask(side);
        // Center pixels are inside.
        assert_eq!(mask[3 * side + 3], 1.0);
        assert_eq!(mask[4 * side + 4], 1.0);
        // Corners are at distance 3.5 * sqrt(2) ≈ 4.95 > 4 from the center.
        assert_eq!(mask[0], 0.0);
        assert_eq!(mask[side - 1], 0.0);
        assert_eq!(mask[(side - 1) * side], 0.0);
        assert_eq!(mask[side * side - 1], 0.0);
    }

    #[test]
    fn mask_edge_midpoints_are_inside() {
        // For even sides the edge midpoint pixels, e.g. (0, 3) and (0, 4) for
        // side 8, sit at distance sqrt(3.5^2 + 0.5^2) ≈ 3.54 <= 4.
        let side = 8;
        let mask = circle_mask(side);
        assert_eq!(mask[3], 1.0);
        assert_eq!(mask[4], 1.0);
    }

    #[test]
    fn apply_mask_zeroes_corners_only() {
        let side = 6;
        let mut img = Image::from_pixels(side, vec![1.0; side * side]);
        img.apply_circle_mask();
        assert_eq!(img.get(0, 0), 0.0);
        assert_eq!(img.get(2, 2), 1.0);
        let inside: f64 = circle_mask(side).iter().sum();
        assert_eq!(img.total_mass(), inside);
    }

    #[test]
    #[should_panic(expected = "pixel buffer")]
    fn mismatched_buffer_panics() {
        let _ = Image::from_pixels(4, vec![0.0; 15]);
    }
}
