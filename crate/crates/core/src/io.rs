//! File formats for images and sinograms.
//!
//! Two families per object: a raw little-endian `f64` format whose
//! round-trip is bit-exact, and a human-inspectable format (16-bit PGM for
//! images, CSV for sinograms). PGM export rescales linearly and records the
//! original min/max in a sidecar text file so the mapping stays invertible;
//! a constant image maps to mid-scale (32768).
//!
//! Format is chosen by extension: `.pgm` / `.csv` select the inspectable
//! forms, anything else the raw form.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::image::Image;
use crate::phantom::SensorModel;
use crate::radon::{AngleSet, Sinogram};

/// Eight-byte magic prefixes for the raw formats.
const IMAGE_MAGIC: &[u8; 8] = b"SPRIMG1\0";
const SINO_MAGIC: &[u8; 8] = b"SPRSIN1\0";

/// Failure while reading or writing a file.
#[derive(Debug)]
pub enum FileError {
    Io(std::io::Error),
    /// Malformed content; `offset` is the byte position where parsing gave up.
    Format { offset: usize, detail: String },
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileError::Io(e) => write!(f, "i/o failure: {e}"),
            FileError::Format { offset, detail } => {
                write!(f, "malformed file at byte {offset}: {detail}")
            }
        }
    }
}

impl std::error::Error for FileError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            FileError::Io(e) => Some(e),
            FileError::Format { .. } => None,
        }
    }
}

impl From<std::io::Error> for FileError {
    fn from(e: std::io::Error) -> Self {
        FileError::Io(e)
    }
}

fn bad(offset: usize, detail: impl Into<String>) -> FileError {
    FileError::Format { offset, detail: detail.into() }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().map(|e| e.eq_ignore_ascii_case(ext)).unwrap_or(false)
}

/// Writes an image; `.pgm` selects 16-bit PGM plus sidecar, anything else
/// the raw float format.
pub fn save_image(path: &Path, image: &Image) -> Result<(), FileError> {
    if has_ext(path, "pgm") {
        save_image_pgm(path, image)
    } else {
        save_image_raw(path, image)
    }
}

/// Reads an image written by [`save_image`], keyed on extension.
pub fn load_image(path: &Path) -> Result<Image, FileError> {
    if has_ext(path, "pgm") {
        load_image_pgm(path)
    } else {
        load_image_raw(path)
    }
}

/// Writes a sinogram; `.csv` selects the text format, anything else raw.
pub fn save_sinogram(path: &Path, sino: &Sinogram) -> Result<(), FileError> {
    if has_ext(path, "csv") {
        save_sinogram_csv(path, sino)
    } else {
        save_sinogram_raw(path, sino)
    }
}

/// Reads a sinogram written by [`save_sinogram`], keyed on extension.
pub fn load_sinogram(path: &Path) -> Result<Sinogram, FileError> {
    if has_ext(path, "csv") {
        load_sinogram_csv(path)
    } else {
        load_sinogram_raw(path)
    }
}

/// Raw image format: 16-byte header (magic, side as little-endian u32,
/// reserved u32), then `side * side` little-endian `f64` pixels row-major.
pub fn save_image_raw(path: &Path, image: &Image) -> Result<(), FileError> {
    let side = image.side();
    let mut bytes = Vec::with_capacity(16 + side * side * 8);
    bytes.extend_from_slice(IMAGE_MAGIC);
    bytes.extend_from_slice(&(side as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for v in image.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_image_raw(path: &Path) -> Result<Image, FileError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(bad(bytes.len(), "file shorter than the 16-byte header"));
    }
    if &bytes[..8] != IMAGE_MAGIC {
        return Err(bad(0, "expected image magic \"SPRIMG1\""));
    }
    let side = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 16 + side * side * 8;
    if bytes.len() != expected {
        return Err(bad(
            bytes.len().min(expected),
            format!("side {side} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let pixels = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Image::from_pixels(side, pixels))
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// 16-bit PGM export. Pixels rescale linearly from `[min, max]` to
/// `[0, 65535]`; a constant image maps to mid-scale 32768. The original
/// `min` and `max` go to a `<path>.meta` sidecar so the scaling inverts.
pub fn save_image_pgm(path: &Path, image: &Image) -> Result<(), FileError> {
    let side = image.side();
    let pixels = image.as_slice();
    let min = pixels.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pixels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;

    let mut bytes = Vec::with_capacity(side * side * 2 + 32);
    write!(&mut bytes, "P5\n{side} {side}\n65535\n")?;
    for &v in pixels {
        let q = if span > 0.0 { ((v - min) / span * 65535.0).round() as u16 } else { 32768 };
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, bytes)?;
    fs::write(sidecar_path(path), format!("min={min}\nmax={max}\n"))?;
    Ok(())
}

/// Reads a PGM written by [`save_image_pgm`] and undoes the rescale using
/// the sidecar. Recovery is exact only up to 16-bit quantization.
pub fn load_image_pgm(path: &Path) -> Result<Image, FileError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut fields = Vec::new();
    // Parse "P5", width, height, maxval as whitespace-separated tokens.
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad(pos, "truncated PGM header"));
        }
        fields.push((start, String::from_utf8_lossy(&bytes[start..pos]).into_owned()));
    }
    if fields[0].1 != "P5" {
        return Err(bad(fields[0].0, "expected binary PGM magic \"P5\""));
    }
    let dim = |i: usize| -> Result<usize, FileError> {
        let (off, ref s) = fields[i];
        s.parse().map_err(|_| bad(off, format!("bad PGM header field {s:?}")))
    };
    let (w, h, maxval) = (dim(1)?, dim(2)?, dim(3)?);
    if w != h {
        return Err(bad(fields[1].0, format!("image must be square, got {w}x{h}")));
    }
    if maxval != 65535 {
        return Err(bad(fields[3].0, format!("expected 16-bit maxval 65535, got {maxval}")));
    }
    pos += 1; // single whitespace byte after maxval
    let expected = pos + w * h * 2;
    if bytes.len() != expected {
        return Err(bad(
            bytes.len().min(expected),
            format!("{w}x{h} PGM needs {expected} bytes, file has {}", bytes.len()),
        ));
    }

    let meta = fs::read_to_string(sidecar_path(path))?;
    let mut min = None;
    let mut max = None;
    for line in meta.lines() {
        if let Some(v) = line.strip_prefix("min=") {
            min = v.trim().parse::<f64>().ok();
        } else if let Some(v) = line.strip_prefix("max=") {
            max = v.trim().parse::<f64>().ok();
        }
    }
    let (min, max) = match (min, max) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(bad(0, "sidecar missing min=/max= lines")),
    };

    let span = max - min;
    let pixels = bytes[pos..]
        .chunks_exact(2)
        .map(|c| {
            let q = u16::from_be_bytes(c.try_into().unwrap()) as f64;
            if span > 0.0 {
                min + q / 65535.0 * span
            } else {
                min
            }
        })
        .collect();
    Ok(Image::from_pixels(w, pixels))
}

/// Raw sinogram format: 16-byte header (magic, angle count, bin count as
/// little-endian u32s), the angles in radians, then the detector rows —
/// all little-endian `f64`.
pub fn save_sinogram_raw(path: &Path, sino: &Sinogram) -> Result<(), FileError> {
    let n = sino.angle_count();
    let m = sino.bins();
    let mut bytes = Vec::with_capacity(16 + (n + n * m) * 8);
    bytes.extend_from_slice(SINO_MAGIC);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(m as u32).to_le_bytes());
    for a in sino.angles().iter() {
        bytes.extend_from_slice(&a.to_le_bytes());
    }
    for v in sino.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_sinogram_raw(path: &Path) -> Result<Sinogram, FileError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(bad(bytes.len(), "file shorter than the 16-byte header"));
    }
    if &bytes[..8] != SINO_MAGIC {
        return Err(bad(0, "expected sinogram magic \"SPRSIN1\""));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let m = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = 16 + (n + n * m) * 8;
    if bytes.len() != expected {
        return Err(bad(
            bytes.len().min(expected),
            format!("{n} angles x {m} bins needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut reals = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let angles: Vec<f64> = reals.by_ref().take(n).collect();
    let data: Vec<f64> = reals.collect();
    Ok(Sinogram::from_parts(AngleSet::from_angles(angles), m, data))
}

/// CSV sinogram: first row lists the angles in radians, each following row
/// one angle's detector readings. `f64` values print in shortest
/// round-trip form, so a CSV round-trip is also exact.
pub fn save_sinogram_csv(path: &Path, sino: &Sinogram) -> Result<(), FileError> {
    let mut out = String::new();
    let join = |row: &mut String, vals: &mut dyn Iterator<Item = f64>| {
        for (i, v) in vals.enumerate() {
            if i > 0 {
                row.push(',');
            }
            row.push_str(&v.to_string());
        }
        row.push('\n');
    };
    join(&mut out, &mut sino.angles().iter());
    for i in 0..sino.angle_count() {
        join(&mut out, &mut sino.row(i).iter().copied());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_sinogram_csv(path: &Path) -> Result<Sinogram, FileError> {
    let text = fs::read_to_string(path)?;
    let mut offset = 0usize;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines() {
        let line_start = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        let mut col_off = line_start;
        for field in line.split(',') {
            let v = field.trim().parse::<f64>().map_err(|_| {
                bad(col_off, format!("expected a number, found {:?}", field.trim()))
            })?;
            row.push(v);
            col_off += field.len() + 1;
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(bad(0, "need an angle header row and at least one data row"));
    }
    let angles = rows.remove(0);
    if rows.len() != angles.len() {
        return Err(bad(
            0,
            format!("header lists {} angles but file has {} data rows", angles.len(), rows.len()),
        ));
    }
    let m = rows[0].len();
    if let Some(r) = rows.iter().find(|r| r.len() != m) {
        return Err(bad(0, format!("ragged rows: {m} columns vs {}", r.len())));
    }
    let data = rows.into_iter().flatten().collect();
    Ok(Sinogram::from_parts(AngleSet::from_angles(angles), m, data))
}

/// Sensor model as CSV: a `gain,offset` header, then one row per angle.
/// Values print in shortest round-trip form, so the file is exact.
pub fn save_sensor_model(path: &Path, model: &SensorModel) -> Result<(), FileError> {
    let mut out = String::from("gain,offset\n");
    for (w, b) in model.gains.iter().zip(&model.offsets) {
        out.push_str(&format!("{w},{b}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a sensor model written by [`save_sensor_model`].
pub fn load_sensor_model(path: &Path) -> Result<SensorModel, FileError> {
    let text = fs::read_to_string(path)?;
    let mut gains = Vec::new();
    let mut offsets = Vec::new();
    let mut offset = 0usize;
    for (idx, line) in text.lines().enumerate() {
        let line_start = offset;
        offset += line.len() + 1;
        if idx == 0 {
            if line.trim() != "gain,offset" {
                return Err(bad(0, format!("expected a gain,offset header, found {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| -> Result<f64, FileError> {
            let field = fields
                .next()
                .ok_or_else(|| bad(line_start, format!("row {idx} is missing the {name} field")))?;
            field
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(line_start, format!("expected a number, found {:?}", field.trim())))
        };
        gains.push(next("gain")?);
        offsets.push(next("offset")?);
        if fields.next().is_some() {
            return Err(bad(line_start, format!("row {idx} has more than two fields")));
        }
    }
    if gains.is_empty() {
        return Err(bad(0, "sensor model has no rows"));
    }
    Ok(SensorModel { gains, offsets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_image() -> Image {
        let side = 9;
        let pixels = (0..side * side).map(|i| (i as f64 * 0.37).sin() * 3.0 - 0.5).collect();
        Image::from_pixels(side, pixels)
    }

    fn sample_sinogram() -> Sinogram {
        let angles = AngleSet::uniform(4);
        let data = (0..4 * 6).map(|i| (i as f64 * 0.91).cos() * 7.0).collect();
        Sinogram::from_parts(angles, 6, data)
    }

    #[test]
    fn raw_image_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.f64");
        let img = sample_image();
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn raw_sinogram_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sino.f64");
        let sino = sample_sinogram();
        save_sinogram(&path, &sino).unwrap();
        let back = load_sinogram(&path).unwrap();
        assert_eq!(back.bins(), sino.bins());
        for (a, b) in sino.angles().iter().zip(back.angles().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in sino.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pgm_round_trip_recovers_within_quantization() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = sample_image();
        save_image(&path, &img).unwrap();
        let back = load_image(&path).unwrap();
        let span = 3.0 - (-3.5); // generous bound on the sample's range
        let tol = span / 65535.0;
        for (a, b) in img.as_slice().iter().zip(back.as_slice()) {
            assert!((a - b).abs() <= tol, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_image_exports_to_mid_scale() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        let img = Image::from_pixels(3, vec![2.5; 9]);
        save_image(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"P5\n3 3\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        for c in bytes[header.len()..].chunks_exact(2) {
            assert_eq!(u16::from_be_bytes([c[0], c[1]]), 32768);
        }
        // And the sidecar still restores the original value exactly.
        let back = load_image(&path).unwrap();
        assert!(back.as_slice().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn sidecar_records_min_and_max() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = Image::from_pixels(2, vec![-1.25, 0.0, 0.5, 4.0]);
        save_image(&path, &img).unwrap();
        let meta = fs::read_to_string(dir.path().join("img.pgm.meta")).unwrap();
        assert_eq!(meta, "min=-1.25\nmax=4\n");
    }

    #[test]
    fn csv_header_lists_quarter_turn_angles() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sino.csv");
        save_sinogram(&path, &Sinogram::zeros(AngleSet::uniform(4), 2)).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "0,0.7853981633974483,1.5707963267948966,2.356194490192345");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sino.csv");
        let sino = sample_sinogram();
        save_sinogram(&path, &sino).unwrap();
        let back = load_sinogram(&path).unwrap();
        // Shortest round-trip printing makes even the text format exact.
        assert_eq!(back, sino);
    }

    #[test]
    fn wrong_magic_reports_offset_zero() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.f64");
        fs::write(&path, b"NOTMAGIC________________").unwrap();
        match load_image(&path) {
            Err(FileError::Format { offset: 0, .. }) => {}
            other => panic!("expected format error at offset 0, got {other:?}"),
        }
    }

    #[test]
    fn truncated_raw_image_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.f64");
        let img = sample_image();
        save_image(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_image(&path), Err(FileError::Format { .. })));
    }

    #[test]
    fn csv_with_bad_number_reports_its_position() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sino.csv");
        fs::write(&path, "0,1.57\n1,2\nbogus,4\n").unwrap();
        match load_sinogram(&path) {
            Err(FileError::Format { offset, detail }) => {
                assert_eq!(offset, 11, "offset should point at the bad line");
                assert!(detail.contains("bogus"));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn csv_row_count_must_match_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sino.csv");
        fs::write(&path, "0,1.57\n1,2\n").unwrap();
        assert!(matches!(load_sinogram(&path), Err(FileError::Format { .. })));
    }

    #[test]
    fn sensor_model_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sensors.csv");
        let model = SensorModel {
            gains: vec![1.0, -0.3, 0.123456789012345],
            offsets: vec![0.0, 2.5, -1e-9],
        };
        save_sensor_model(&path, &model).unwrap();
        let back = load_sensor_model(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn sensor_model_rejects_short_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sensors.csv");
        fs::write(&path, "gain,offset\n1.0,0.0\n0.5\n").unwrap();
        match load_sensor_model(&path) {
            Err(FileError::Format { offset, detail }) => {
                assert_eq!(offset, 20, "offset should point at the short row");
                assert!(detail.contains("missing"), "{detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
