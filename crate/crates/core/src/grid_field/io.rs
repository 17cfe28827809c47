//! On-disk formats: 16-bit PGM intensity images, raw little-endian complex
//! field dumps, and the `key=value` sidecar that calibrates both.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;

use super::field::{IntensityImage, JonesField, ScalarField};
use super::grid::Grid2D;
use crate::error::{Error, Result};

/// Calibration metadata stored next to every image or field dump.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub pitch_m: Option<f64>,
    pub pitch_y_m: Option<f64>,
    pub scale: Option<f64>,
    pub wavelength_m: Option<f64>,
    pub z_m: Option<f64>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub components: Option<usize>,
    /// Keys this crate does not interpret, preserved on round trip.
    pub extra: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        if let Some(v) = self.nx {
            put("nx", v.to_string());
        }
        if let Some(v) = self.ny {
            put("ny", v.to_string());
        }
        if let Some(v) = self.components {
            put("components", v.to_string());
        }
        if let Some(v) = self.pitch_m {
            put("pitch_m", format!("{v:e}"));
        }
        if let Some(v) = self.pitch_y_m {
            put("pitch_y_m", format!("{v:e}"));
        }
        if let Some(v) = self.scale {
            put("scale", format!("{v:e}"));
        }
        if let Some(v) = self.wavelength_m {
            put("wavelength_m", format!("{v:e}"));
        }
        if let Some(v) = self.z_m {
            put("z_m", format!("{v:e}"));
        }
        for (k, v) in &self.extra {
            put(k, v.clone());
        }
        out
    }

    pub fn parse(text: &str) -> Result<Sidecar> {
        let mut s = Sidecar::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("sidecar line {}: expected key=value", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let float = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| Error::Format(format!("sidecar key {k}: not a number: {v}")))
            };
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Format(format!("sidecar key {k}: not an integer: {v}")))
            };
            match k {
                "pitch_m" => s.pitch_m = Some(float(v)?),
                "pitch_y_m" => s.pitch_y_m = Some(float(v)?),
                "scale" => s.scale = Some(float(v)?),
                "wavelength_m" => s.wavelength_m = Some(float(v)?),
                "z_m" => s.z_m = Some(float(v)?),
                "nx" => s.nx = Some(int(v)?),
                "ny" => s.ny = Some(int(v)?),
                "components" => s.components = Some(int(v)?),
                _ => {
                    s.extra.insert(k.to_string(), v.to_string());
                }
            }
        }
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Sidecar> {
        Sidecar::parse(&fs::read_to_string(path)?)
    }
}

/// `foo.pgm` -> `foo.meta.txt`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.meta.txt"))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Encodes an array as a binary 16-bit PGM (`P5`, maxval 65535, big-endian)
/// with the maximum mapped to 65535. Image rows follow the y index, columns
/// the x index. Returns the bytes and the applied scale factor.
pub fn encode_pgm16(values: &Array2<f64>) -> (Vec<u8>, f64) {
    let (nx, ny) = values.dim();
    let max = values.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 1.0 };
    let mut out = format!("P5\n{nx} {ny}\n65535\n").into_bytes();
    out.reserve(nx * ny * 2);
    for j in 0..ny {
        for i in 0..nx {
            let q = (values[[i, j]].max(0.0) * scale).round().min(65535.0) as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    (out, scale)
}

/// Decodes a binary PGM (8- or 16-bit) into raw integer sample values.
pub fn decode_pgm(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (expected P5)".into()));
    }
    let parse = |t: String| t.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM header value {t}")));
    let nx = parse(token()?)?;
    let ny = parse(token()?)?;
    let maxval = parse(token()?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let wide = maxval > 255;
    let need = nx * ny * if wide { 2 } else { 1 };
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::Format(format!("PGM raster truncated: need {need} bytes")))?;
    let mut out = Array2::zeros((nx, ny));
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            out[[i, j]] = if wide {
                u16::from_be_bytes([data[2 * k], data[2 * k + 1]]) as f64
            } else {
                data[k] as f64
            };
        }
    }
    Ok(out)
}

/// Writes `<path>` (PGM) and `<stem>.meta.txt`. Returns the sidecar written.
pub fn write_intensity_pgm(path: &Path, image: &IntensityImage, wavelength: Option<f64>, z: Option<f64>) -> Result<Sidecar> {
    let (bytes, scale) = encode_pgm16(image.values());
    let g = image.grid();
    let meta = Sidecar {
        pitch_m: Some(g.dx()),
        pitch_y_m: (g.dy() != g.dx()).then_some(g.dy()),
        scale: Some(scale),
        wavelength_m: wavelength,
        z_m: z,
        ..Default::default()
    };
    write_atomic(path, &bytes)?;
    write_atomic(&sidecar_path(path), meta.to_text().as_bytes())?;
    Ok(meta)
}

/// An image read back from disk together with its calibration.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image: IntensityImage,
    pub sidecar: Option<Sidecar>,
}

impl LoadedImage {
    /// True when the sidecar supplied a physical pitch.
    pub fn calibrated(&self) -> bool {
        self.sidecar.as_ref().and_then(|s| s.pitch_m).is_some()
    }
}

/// Reads a PGM and its sidecar (if present). Values are divided by the
/// sidecar scale; without a pitch the grid uses a unit pitch (pixels).
pub fn read_intensity_pgm(path: &Path) -> Result<LoadedImage> {
    let raw = decode_pgm(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() { Some(Sidecar::read(&side)?) } else { None };
    let (nx, ny) = raw.dim();
    let scale = sidecar.as_ref().and_then(|s| s.scale).unwrap_or(1.0);
    if !(scale > 0.0) {
        return Err(Error::Format(format!("sidecar scale must be positive, got {scale}")));
    }
    let dx = sidecar.as_ref().and_then(|s| s.pitch_m).unwrap_or(1.0);
    let dy = sidecar.as_ref().and_then(|s| s.pitch_y_m).unwrap_or(dx);
    let grid = Grid2D::new(nx, ny, dx, dy)?;
    let image = IntensityImage::new(grid, raw.mapv(|v| v / scale))?;
    Ok(LoadedImage { image, sidecar })
}

fn field_sidecar(grid: &Grid2D, wavelength: f64, z: Option<f64>, components: usize) -> Sidecar {
    Sidecar {
        nx: Some(grid.nx()),
        ny: Some(grid.ny()),
        components: Some(components),
        pitch_m: Some(grid.dx()),
        pitch_y_m: (grid.dy() != grid.dx()).then_some(grid.dy()),
        scale: Some(1.0),
        wavelength_m: Some(wavelength),
        z_m: z,
        ..Default::default()
    }
}

fn encode_complex(arrays: &[&Array2<Complex64>]) -> Vec<u8> {
    let (nx, ny) = arrays[0].dim();
    let mut out = Vec::with_capacity(nx * ny * 16 * arrays.len());
    for i in 0..nx {
        for j in 0..ny {
            for a in arrays {
                let c = a[[i, j]];
                out.extend_from_slice(&c.re.to_le_bytes());
                out.extend_from_slice(&c.im.to_le_bytes());
            }
        }
    }
    out
}

fn decode_complex(bytes: &[u8], nx: usize, ny: usize, components: usize) -> Result<Vec<Array2<Complex64>>> {
    let need = nx * ny * components * 16;
    if bytes.len() != need {
        return Err(Error::Format(format!("field dump has {} bytes, expected {need}", bytes.len())));
    }
    let mut out = vec![Array2::zeros((nx, ny)); components];
    let f = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let mut k = 0;
    for i in 0..nx {
        for j in 0..ny {
            for a in out.iter_mut() {
                a[[i, j]] = Complex64::new(f(k), f(k + 1));
                k += 2;
            }
        }
    }
    Ok(out)
}

/// Raw dump: little-endian f64 `(re, im)` pairs, row-major over `[[i, j]]`.
pub fn write_scalar_field(path: &Path, field: &ScalarField, z: Option<f64>) -> Result<Sidecar> {
    let meta = field_sidecar(field.grid(), field.wavelength(), z, 1);
    write_atomic(path, &encode_complex(&[field.amplitudes()]))?;
    write_atomic(&sidecar_path(path), meta.to_text().as_bytes())?;
    Ok(meta)
}

/// Raw dump: little-endian f64 `(re_R, im_R, re_L, im_L)` per sample.
pub fn write_jones_field(path: &Path, field: &JonesField, z: Option<f64>) -> Result<Sidecar> {
    let meta = field_sidecar(field.grid(), field.wavelength(), z, 2);
    write_atomic(path, &encode_complex(&[field.r(), field.l()]))?;
    write_atomic(&sidecar_path(path), meta.to_text().as_bytes())?;
    Ok(meta)
}

fn read_field_parts(path: &Path, components: usize) -> Result<(Grid2D, f64, Vec<Array2<Complex64>>)> {
    let meta = Sidecar::read(&sidecar_path(path))?;
    let missing = |k: &str| Error::Format(format!("field sidecar lacks {k}"));
    let nx = meta.nx.ok_or_else(|| missing("nx"))?;
    let ny = meta.ny.ok_or_else(|| missing("ny"))?;
    let dx = meta.pitch_m.ok_or_else(|| missing("pitch_m"))?;
    let dy = meta.pitch_y_m.unwrap_or(dx);
    let lambda = meta.wavelength_m.ok_or_else(|| missing("wavelength_m"))?;
    if meta.components.unwrap_or(components) != components {
        return Err(Error::Format(format!(
            "field dump has {} components, expected {components}",
            meta.components.unwrap_or(0)
        )));
    }
    let grid = Grid2D::new(nx, ny, dx, dy)?;
    let arrays = decode_complex(&fs::read(path)?, nx, ny, components)?;
    Ok((grid, lambda, arrays))
}

pub fn read_scalar_field(path: &Path) -> Result<ScalarField> {
    let (grid, lambda, mut a) = read_field_parts(path, 1)?;
    ScalarField::new(grid, a.remove(0), lambda)
}

pub fn read_jones_field(path: &Path) -> Result<JonesField> {
    let (grid, lambda, mut a) = read_field_parts(path, 2)?;
    let l = a.remove(1);
    let r = a.remove(0);
    JonesField::new(grid, r, l, lambda)
}
