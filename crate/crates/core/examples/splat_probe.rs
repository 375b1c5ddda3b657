use sparseproj::image::Image;
use sparseproj::radon::{radon_forward, AngleSet};

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
    let angles = AngleSet::from_angles(vec![0.0, 0.02, 0.3927, 0.7854]);
    let s = radon_forward(&g, &angles);
    // Radially symmetric image: all rows should be near-identical profiles.
    for i in 1..4 {
        let mut max_abs: f64 = 0.0;
        let mut at = 0;
        for j in 0..side {
            let d = (s.row(i)[j] - s.row(0)[j]).abs();
            if d > max_abs { max_abs = d; at = j; }
        }
        println!("angle {:.4} vs 0: max_abs={:.3e} at bin {} (row0 {:.4}, rowi {:.4})",
            angles.get(i), max_abs, at, s.row(0)[at], s.row(i)[at]);
    }
    println!("row0 bins 28..36: {:?}", &s.row(0)[28..36].iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
    println!("row1 bins 28..36: {:?}", &s.row(1)[28..36].iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
    println!("row3 bins 28..36: {:?}", &s.row(3)[28..36].iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
}
