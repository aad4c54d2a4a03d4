//! On-disk formats: grayscale PGM/PNG images, frame directories, and the
//! little-endian `FLD1` (flow) and `MAT1` (matrix) binary files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{DynamicImage, ExtendedColorType, ImageEncoder};
use lrtrack::rpca::Matrix;
use lrtrack::{FlowField, Image, LabelMap};

use crate::error::CliError;

const FIELD_MAGIC: &[u8; 4] = b"FLD1";
const MATRIX_MAGIC: &[u8; 4] = b"MAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Png,
    Pgm,
}

fn image_kind(path: &Path) -> Result<ImageKind, CliError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(ImageKind::Png),
        Some("pgm") => Ok(ImageKind::Pgm),
        _ => Err(CliError::data(format!("{}: unsupported image format (expected .png or .pgm)", path.display()))),
    }
}

/// Raw grayscale samples and the format's maximum value.
fn read_gray(path: &Path) -> Result<(usize, usize, Vec<u16>, u16), CliError> {
    image_kind(path)?;
    let img = image::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(b) => Ok((h, w, b.into_raw().into_iter().map(u16::from).collect(), 255)),
        DynamicImage::ImageLuma16(b) => Ok((h, w, b.into_raw(), 65535)),
        other => Err(CliError::data(format!(
            "{}: unsupported pixel type {:?} (expected 8- or 16-bit grayscale)",
            path.display(),
            other.color()
        ))),
    }
}

/// Intensities are `sample / max_value`.
pub fn read_image(path: &Path) -> Result<Image, CliError> {
    let (h, w, raw, max) = read_gray(path)?;
    let max = f64::from(max);
    Image::new(h, w, raw.into_iter().map(|v| f64::from(v) / max).collect())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Raw sample values as labels.
pub fn read_labels(path: &Path) -> Result<LabelMap, CliError> {
    let (h, w, raw, _) = read_gray(path)?;
    LabelMap::new(h, w, raw).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn quantize(v: f64, max: f64) -> f64 {
    (v.clamp(0.0, 1.0) * max + 0.5).floor()
}

fn encode_gray(kind: ImageKind, w: u32, h: u32, samples: &[u16], sixteen_bit: bool) -> Result<Vec<u8>, CliError> {
    match kind {
        ImageKind::Png => {
            let (bytes, color): (Vec<u8>, _) = if sixteen_bit {
                // The encoder takes 16-bit samples in native byte order.
                (samples.iter().flat_map(|v| v.to_ne_bytes()).collect(), ExtendedColorType::L16)
            } else {
                (samples.iter().map(|&v| v as u8).collect(), ExtendedColorType::L8)
            };
            let mut out = Vec::new();
            PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
                .write_image(&bytes, w, h, color)
                .map_err(|e| CliError::data(format!("image encoding failed: {e}")))?;
            Ok(out)
        }
        ImageKind::Pgm => {
            // Binary P5; 16-bit samples are big-endian.
            let max = if sixteen_bit { 65535 } else { 255 };
            let mut out = format!("P5\n{w} {h}\n{max}\n").into_bytes();
            for &v in samples {
                if sixteen_bit {
                    out.extend_from_slice(&v.to_be_bytes());
                } else {
                    out.push(v as u8);
                }
            }
            Ok(out)
        }
    }
}

/// Encodes intensities clamped to [0, 1] with round-half-up quantization.
pub fn encode_image(img: &Image, kind: ImageKind, sixteen_bit: bool) -> Result<Vec<u8>, CliError> {
    let (h, w) = img.dims();
    let max = if sixteen_bit { 65535.0 } else { 255.0 };
    let samples: Vec<u16> = img.data().iter().map(|&v| quantize(v, max) as u16).collect();
    encode_gray(kind, w as u32, h as u32, &samples, sixteen_bit)
}

/// Binary masks as 0/255, other labels as their raw value (8-bit when they fit).
pub fn encode_labels(labels: &LabelMap, kind: ImageKind) -> Result<Vec<u8>, CliError> {
    let (h, w) = labels.dims();
    let max = labels.labels().iter().copied().max().unwrap_or(0);
    let samples: Vec<u16> = if max <= 1 {
        labels.labels().iter().map(|&l| if l > 0 { 255 } else { 0 }).collect()
    } else {
        labels.labels().to_vec()
    };
    encode_gray(kind, w as u32, h as u32, &samples, max > 255)
}

pub fn encode_rgb_png(img: &image::RgbImage) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(img.as_raw(), img.width(), img.height(), ExtendedColorType::Rgb8)
        .map_err(|e| CliError::data(format!("image encoding failed: {e}")))?;
    Ok(out)
}

pub fn encode_luma_png(img: &image::GrayImage) -> Result<Vec<u8>, CliError> {
    let samples: Vec<u16> = img.as_raw().iter().map(|&v| u16::from(v)).collect();
    encode_gray(ImageKind::Png, img.width(), img.height(), &samples, false)
}

fn encode_grid(magic: &[u8; 4], rows: usize, cols: usize, parts: &[&[f64]]) -> Result<Vec<u8>, CliError> {
    let r = u32::try_from(rows).map_err(|_| CliError::data("dimension exceeds 32 bits"))?;
    let c = u32::try_from(cols).map_err(|_| CliError::data("dimension exceeds 32 bits"))?;
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(12 + 8 * n);
    out.extend_from_slice(magic);
    out.extend_from_slice(&r.to_le_bytes());
    out.extend_from_slice(&c.to_le_bytes());
    for p in parts {
        for v in *p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, msg: &str) -> CliError {
        CliError::data(format!("{}: {msg} at byte offset {}", self.path.display(), self.pos))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8], CliError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(&format!("truncated {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize, CliError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
        let need = n.checked_mul(8).ok_or_else(|| self.err("payload size overflows"))?;
        let b = self.take(need, what)?;
        Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

fn decode_grid<'a>(bytes: &'a [u8], path: &'a Path, magic: &[u8; 4]) -> Result<(Reader<'a>, usize, usize), CliError> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != magic {
        r.pos = 0;
        return Err(r.err(&format!("bad magic (expected {})", String::from_utf8_lossy(magic))));
    }
    let rows = r.u32("row count")?;
    let cols = r.u32("column count")?;
    Ok((r, rows, cols))
}

pub fn encode_field(flow: &FlowField) -> Result<Vec<u8>, CliError> {
    let (h, w) = flow.dims();
    encode_grid(FIELD_MAGIC, h, w, &[flow.vx(), flow.vy()])
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<FlowField, CliError> {
    let (mut r, h, w) = decode_grid(bytes, path, FIELD_MAGIC)?;
    let n = h.checked_mul(w).ok_or_else(|| r.err("dimensions overflow"))?;
    let vx = r.f64s(n, "vx payload")?;
    let vy = r.f64s(n, "vy payload")?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes"));
    }
    FlowField::new(h, w, vx, vy).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn read_field(path: &Path) -> Result<FlowField, CliError> {
    decode_field(&read_bytes(path)?, path)
}

/// Column-major payload.
pub fn encode_matrix(m: &Matrix) -> Result<Vec<u8>, CliError> {
    encode_grid(MATRIX_MAGIC, m.nrows(), m.ncols(), &[m.as_slice()])
}

pub fn decode_matrix(bytes: &[u8], path: &Path) -> Result<Matrix, CliError> {
    let (mut r, rows, cols) = decode_grid(bytes, path, MATRIX_MAGIC)?;
    let n = rows.checked_mul(cols).ok_or_else(|| r.err("dimensions overflow"))?;
    let data = r.f64s(n, "payload")?;
    if r.pos != bytes.len() {
        return Err(r.err("trailing bytes"));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CliError::data(format!("{}: non-finite matrix entry", path.display())));
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn read_matrix(path: &Path) -> Result<Matrix, CliError> {
    decode_matrix(&read_bytes(path)?, path)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn frame_name(index: usize, ext: &str) -> String {
    format!("frame_{index:03}.{ext}")
}

/// `frame_NNN.png` / `frame_NNN.pgm` files of a directory in index order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(rest) = name.strip_prefix("frame_") else { continue };
        let Some((digits, ext)) = rest.split_once('.') else { continue };
        if !matches!(ext.to_ascii_lowercase().as_str(), "png" | "pgm") || digits.is_empty() {
            continue;
        }
        if let Ok(index) = digits.parse::<usize>() {
            frames.push((index, path));
        }
    }
    if frames.is_empty() {
        return Err(CliError::data(format!("{}: no frame_NNN.png or frame_NNN.pgm files", dir.display())));
    }
    frames.sort();
    if frames.windows(2).any(|p| p[0].0 == p[1].0) {
        return Err(CliError::data(format!("{}: duplicate frame index", dir.display())));
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

pub fn read_frames(dir: &Path) -> Result<Vec<Image>, CliError> {
    list_frames(dir)?.iter().map(|p| read_image(p)).collect()
}

/// Collects output files in a private staging directory and moves them
/// into place only when the command succeeds.
pub struct Output {
    staging: tempfile::TempDir,
    target: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    /// Output rooted at directory `target`.
    pub fn directory(target: &Path) -> Result<Self, CliError> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        let staging = tempfile::Builder::new()
            .prefix(".lrtrack-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
        Ok(Self { staging, target: target.to_path_buf(), files: Vec::new() })
    }

    pub fn put(&mut self, relative: impl AsRef<Path>, bytes: &[u8]) -> Result<(), CliError> {
        let rel = relative.as_ref().to_path_buf();
        let path = self.staging.path().join(&rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
        }
        let file = fs::File::create(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        w.write_all(bytes)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        self.files.push(rel);
        Ok(())
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut written = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let dest = self.target.join(rel);
            if let Some(dir) = dest.parent() {
                fs::create_dir_all(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
            }
            fs::rename(self.staging.path().join(rel), &dest)
                .map_err(|e| CliError::data(format!("{}: {e}", dest.display())))?;
            written.push(dest);
        }
        Ok(written)
    }
}

/// Writes one file through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".lrtrack-")
        .tempfile_in(&dir)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    tmp.write_all(bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    tmp.persist(path).map_err(|e| CliError::data(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
