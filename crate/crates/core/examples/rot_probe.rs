use sparseproj::image::Image;
use sparseproj::radon::rotate_image;

fn gauss(side: usize, r0: f64, c0: f64, sigma: f64, trunc: f64) -> Image {
    let mut img = Image::zeros(side);
    for r in 0..side {
        for c in 0..side {
            let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
            if d2.sqrt() < trunc {
                img.set(r, c, (-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
    }
    img
}

fn main() {
    let side = 64;
    let g = gauss(side, 31.5, 31.5, 8.0, 28.0);
    for delta in [0.02f64, 0.1, std::f64::consts::PI / 2.0] {
        let r = rotate_image(&g, delta);
        let mut max_abs: f64 = 0.0;
        let mut at = (0, 0);
        for row in 0..side {
            for col in 0..side {
                let d = (r.get(row, col) - g.get(row, col)).abs();
                if d > max_abs {
                    max_abs = d;
                    at = (row, col);
                }
            }
        }
        println!(
            "delta={delta:.4}: image max abs diff {max_abs:.3e} at {at:?} (g there {:.3e}, rot {:.3e})",
            g.get(at.0, at.1), r.get(at.0, at.1)
        );
    }
    // Sanity: mass before/after small rotation.
    let r = rotate_image(&g, 0.02);
    println!("mass orig {:.6} rot {:.6}", g.total_mass(), r.total_mass());
}
