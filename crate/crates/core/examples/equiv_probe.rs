use sparseproj::image::Image;
use sparseproj::radon::{radon_forward, rotate_image, AngleSet};

fn cos_bump(side: usize, r0: f64, c0: f64, radius: f64, pow: i32) -> Image {
    let mut img = Image::zeros(side);
    for r in 0..side {
        for c in 0..side {
            let d = ((r as f64 - r0).powi(2) + (c as f64 - c0).powi(2)).sqrt();
            if d < radius {
                img.set(r, c, (std::f64::consts::PI * d / (2.0 * radius)).cos().powi(pow));
            }
        }
    }
    img
}

fn probe(name: &str, img: &Image, n: usize, delta: f64) {
    let base = AngleSet::uniform(n);
    let shifted = AngleSet::from_angles(base.iter().map(|a| a - delta).collect());
    let rot = rotate_image(img, delta);
    let (s_rot, s_shift) = (radon_forward(&rot, &base), radon_forward(img, &shifted));
    let mut max_abs: f64 = 0.0;
    let mut peak: f64 = 0.0;
    for (a, b) in s_rot.data().iter().zip(s_shift.data()) {
        max_abs = max_abs.max((a - b).abs());
        peak = peak.max(b.abs());
    }
    println!("{name:30} delta={delta:.4} max_abs={max_abs:.3e} peak={peak:.2} rel={:.3e}", max_abs / peak);
}

fn main() {
    let side = 64;
    let b2c = cos_bump(side, 31.5, 31.5, 28.0, 2);
    let b4c = cos_bump(side, 31.5, 31.5, 28.0, 4);
    let b2o = cos_bump(side, 34.0, 28.5, 24.0, 2);
    let b4o = cos_bump(side, 34.0, 28.5, 24.0, 4);
    for delta in [std::f64::consts::PI / 8.0, 0.1] {
        probe("cos2 R=28 centered", &b2c, 8, delta);
        probe("cos4 R=28 centered", &b4c, 8, delta);
        probe("cos2 R=24 off-center", &b2o, 8, delta);
        probe("cos4 R=24 off-center", &b4o, 8, delta);
    }
}
