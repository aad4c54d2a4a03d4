//! Deterministic synthetic inputs with known ground truth.
//!
//! Shapes have a one-pixel linear edge ramp, so a pixel is above 0.5 exactly
//! when its centre lies inside the ideal shape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{warp_bilinear, FlowField, Image, ImageStack, LabelMap};

fn edge(signed_distance: f64) -> f64 {
    (signed_distance + 0.5).clamp(0.0, 1.0)
}

fn check_disk(height: usize, width: usize, cx: f64, cy: f64, r: f64) -> Result<()> {
    if !(r >= 0.0) || cx - r < 0.0 || cy - r < 0.0 || cx + r > (width - 1) as f64 || cy + r > (height - 1) as f64 {
        return invalid(format!(
            "disk at ({cx}, {cy}) with radius {r} does not fit a {height}x{width} image"
        ));
    }
    Ok(())
}

/// White disk on black.
pub fn make_circle(height: usize, width: usize, center: (f64, f64), radius: f64) -> Result<Image> {
    if height == 0 || width == 0 {
        return invalid("empty image");
    }
    let (cx, cy) = center;
    check_disk(height, width, cx, cy, radius)?;
    if radius == 0.0 {
        return Ok(Image::zeros(height, width));
    }
    Ok(Image::from_fn(height, width, |x, y| {
        edge(radius - (x as f64 - cx).hypot(y as f64 - cy))
    }))
}

/// Annulus of outer `radius` and width `thickness` with a wedge of
/// `gap_degrees` removed around the +x direction.
pub fn make_c(
    height: usize,
    width: usize,
    center: (f64, f64),
    radius: f64,
    thickness: f64,
    gap_degrees: f64,
) -> Result<Image> {
    if height == 0 || width == 0 {
        return invalid("empty image");
    }
    let (cx, cy) = center;
    check_disk(height, width, cx, cy, radius)?;
    if !(thickness > 0.0 && thickness <= radius) {
        return invalid(format!("C thickness {thickness} must be in (0, {radius}]"));
    }
    if !(0.0..360.0).contains(&gap_degrees) {
        return invalid(format!("C gap {gap_degrees} must be in [0, 360)"));
    }
    let half_gap = gap_degrees.to_radians() / 2.0;
    let inner = radius - thickness;
    Ok(Image::from_fn(height, width, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        let d = dx.hypot(dy);
        let ring = edge(radius - d).min(edge(d - inner));
        if half_gap == 0.0 {
            return ring;
        }
        // Distance to the wedge boundary rays, measured perpendicular to them.
        let phi = dy.atan2(dx).abs();
        let wedge = if phi >= half_gap {
            d * (phi - half_gap).min(std::f64::consts::FRAC_PI_2).sin()
        } else {
            -d * (half_gap - phi).min(std::f64::consts::FRAC_PI_2).sin()
        };
        ring.min(edge(wedge))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskGeometry {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Per-frame disks with linearly interpolated centre and radius.
pub fn linear_disk_path(t: usize, start: DiskGeometry, end: DiskGeometry) -> Vec<DiskGeometry> {
    (0..t)
        .map(|j| {
            let a = if t > 1 { j as f64 / (t - 1) as f64 } else { 0.0 };
            DiskGeometry {
                cx: start.cx + a * (end.cx - start.cx),
                cy: start.cy + a * (end.cy - start.cy),
                radius: start.radius + a * (end.radius - start.radius),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DiskSequence {
    pub frames: ImageStack,
    pub masks: Vec<LabelMap>,
}

pub fn make_disk_sequence(height: usize, width: usize, geometry: &[DiskGeometry]) -> Result<DiskSequence> {
    if geometry.len() < 2 {
        return invalid(format!("disk sequence needs at least 2 frames, got {}", geometry.len()));
    }
    let frames = geometry
        .iter()
        .map(|g| make_circle(height, width, (g.cx, g.cy), g.radius))
        .collect::<Result<Vec<_>>>()?;
    let masks = frames.iter().map(|f| f.threshold(0.5)).collect();
    Ok(DiskSequence { frames: ImageStack::new(frames)?, masks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobVideoSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    pub seed: u64,
    /// Peak added intensity of the blob.
    pub blob_amplitude: f64,
    /// Radius of the blob's flat top.
    pub blob_radius: f64,
    /// Blob centre in the first and last frame.
    pub path_start: (f64, f64),
    pub path_end: (f64, f64),
    pub noise_sigma: f64,
}

impl Default for BlobVideoSpec {
    fn default() -> Self {
        Self {
            height: 96,
            width: 128,
            frames: 16,
            seed: 7,
            blob_amplitude: 0.4,
            blob_radius: 6.0,
            path_start: (16.0, 30.0),
            path_end: (112.0, 66.0),
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlobVideo {
    pub frames: ImageStack,
    /// The static background every frame is built on.
    pub background: Image,
    /// Pixels touched by the blob in each frame.
    pub blob_masks: Vec<LabelMap>,
}

/// Smooth random texture in [0.1, 0.5]: a handful of random plane waves.
pub fn smooth_texture(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let kx = rng.random_range(-0.35..0.35);
            let ky = rng.random_range(-0.35..0.35);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let amp = rng.random_range(0.5..1.0);
            (kx, ky, phase, amp)
        })
        .collect();
    let raw = Image::from_fn(height, width, |x, y| {
        waves
            .iter()
            .map(|&(kx, ky, ph, a)| a * (kx * x as f64 + ky * y as f64 + ph).sin())
            .sum()
    });
    let (lo, hi) = raw.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    Image::from_fn(height, width, |x, y| 0.1 + 0.4 * (raw.get(x, y) - lo) / span)
}

pub fn make_blob_video(spec: &BlobVideoSpec) -> Result<BlobVideo> {
    let (h, w, t) = (spec.height, spec.width, spec.frames);
    if t < 2 {
        return invalid(format!("blob video needs at least 2 frames, got {t}"));
    }
    if h == 0 || w == 0 {
        return invalid("empty image");
    }
    if !(spec.blob_amplitude >= 0.0 && spec.blob_amplitude <= 0.5) {
        return invalid(format!("blob amplitude {} must be in [0, 0.5]", spec.blob_amplitude));
    }
    if !(spec.noise_sigma >= 0.0) || !(spec.blob_radius > 0.0) {
        return invalid("noise sigma must be >= 0 and blob radius > 0");
    }
    for &(cx, cy) in &[spec.path_start, spec.path_end] {
        check_disk(h, w, cx, cy, spec.blob_radius)?;
    }
    let background = smooth_texture(h, w, spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut frames = Vec::with_capacity(t);
    let mut masks = Vec::with_capacity(t);
    for j in 0..t {
        let a = j as f64 / (t - 1) as f64;
        let cx = spec.path_start.0 + a * (spec.path_end.0 - spec.path_start.0);
        let cy = spec.path_start.1 + a * (spec.path_end.1 - spec.path_start.1);
        let blob = Image::from_fn(h, w, |x, y| {
            spec.blob_amplitude * edge(spec.blob_radius - (x as f64 - cx).hypot(y as f64 - cy))
        });
        masks.push(LabelMap::from_fn(h, w, |x, y| u16::from(blob.get(x, y) > 0.0)));
        let mut frame = Image::from_fn(h, w, |x, y| background.get(x, y) + blob.get(x, y));
        if spec.noise_sigma > 0.0 {
            for v in frame.data_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
        frames.push(frame);
    }
    Ok(BlobVideo { frames: ImageStack::new(frames)?, background, blob_masks: masks })
}

#[derive(Debug, Clone)]
pub struct TexturedWarp {
    pub source: Image,
    pub target: Image,
    /// Field with `warp_bilinear(source, truth) == target`.
    pub truth: FlowField,
}

/// Smooth texture pulled back through a smooth sinusoidal field of the given
/// peak amplitude.
pub fn textured_warp(height: usize, width: usize, amplitude: f64, seed: u64) -> Result<TexturedWarp> {
    if height < 2 || width < 2 {
        return invalid("textured warp needs at least 2x2 pixels");
    }
    let source = smooth_texture(height, width, seed);
    let (fh, fw) = (height as f64, width as f64);
    let truth = FlowField::from_fn(height, width, |x, y| {
        let (u, v) = (x as f64 / fw, y as f64 / fh);
        (
            amplitude * (std::f64::consts::TAU * v).sin() * (std::f64::consts::PI * u).sin(),
            amplitude * (std::f64::consts::TAU * u).cos() * (std::f64::consts::PI * v).sin(),
        )
    });
    let target = warp_bilinear(&source, &truth)?;
    Ok(TexturedWarp { source, target, truth })
}
