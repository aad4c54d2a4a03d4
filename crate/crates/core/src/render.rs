//! Flow visualizations: HSV direction/magnitude coding and deformed grids.

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::error::{invalid, Result};
use crate::grid::FlowField;

/// `h` in degrees, `s` and `v` in [0, 1].
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Hue encodes direction (0 degrees along +x), value encodes magnitude
/// relative to the largest one, saturation is 1.
pub fn render_hsv(flow: &FlowField) -> Result<RgbImage> {
    if !flow.all_finite() {
        return invalid("render_hsv: non-finite flow");
    }
    let (h, w) = flow.dims();
    let max = (0..h * w).map(|i| flow.magnitude(i)).fold(0.0, f64::max);
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (vx, vy) = (flow.vx()[i], flow.vy()[i]);
            let value = if max > 0.0 { flow.magnitude(i) / max } else { 0.0 };
            let hue = vy.atan2(vx).to_degrees().rem_euclid(360.0);
            let [r, g, b] = hsv_to_rgb(hue, 1.0, value);
            img.put_pixel(x as u32, y as u32, Rgb([to_u8(r), to_u8(g), to_u8(b)]));
        }
    }
    Ok(img)
}

/// White grid lines every `spacing` pixels, each drawn through the mapping
/// `p -> p + flow[p]` with 1-px strokes on a black background.
pub fn render_grid(flow: &FlowField, spacing: usize) -> Result<GrayImage> {
    if spacing < 2 {
        return invalid(format!("grid spacing must be >= 2, got {spacing}"));
    }
    if !flow.all_finite() {
        return invalid("render_grid: non-finite flow");
    }
    let (h, w) = flow.dims();
    let mut img = GrayImage::new(w as u32, h as u32);
    let map = |x: usize, y: usize| {
        let (dx, dy) = flow.get(x, y);
        (x as f64 + dx, y as f64 + dy)
    };
    for y in (0..h).step_by(spacing) {
        let pts: Vec<_> = (0..w).map(|x| map(x, y)).collect();
        draw_polyline(&mut img, &pts);
    }
    for x in (0..w).step_by(spacing) {
        let pts: Vec<_> = (0..h).map(|y| map(x, y)).collect();
        draw_polyline(&mut img, &pts);
    }
    Ok(img)
}

fn plot(img: &mut GrayImage, x: f64, y: f64) {
    let (xi, yi) = (x.round(), y.round());
    if xi >= 0.0 && yi >= 0.0 && xi < img.width() as f64 && yi < img.height() as f64 {
        img.put_pixel(xi as u32, yi as u32, Luma([255]));
    }
}

fn draw_polyline(img: &mut GrayImage, pts: &[(f64, f64)]) {
    if let Some(&(x, y)) = pts.first() {
        plot(img, x, y);
    }
    for pair in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (pair[0], pair[1]);
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
        for k in 1..=steps {
            let t = k as f64 / steps as f64;
            plot(img, x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_black() {
        let img = render_hsv(&FlowField::zeros(4, 5)).unwrap();
        assert!(img.pixels().all(|p| p.0 == [0, 0, 0]));
    }

    #[test]
    fn plus_x_is_red() {
        let img = render_hsv(&FlowField::constant(3, 3, 1.0, 0.0)).unwrap();
        assert!(img.pixels().all(|p| p.0 == [255, 0, 0]));
    }

    #[test]
    fn antipodal_directions_are_complementary() {
        let up = render_hsv(&FlowField::constant(2, 2, 0.0, 1.0)).unwrap();
        let down = render_hsv(&FlowField::constant(2, 2, 0.0, -1.0)).unwrap();
        assert_eq!(up.get_pixel(0, 0).0, [128, 255, 0]);
        assert_eq!(down.get_pixel(0, 0).0, [128, 0, 255]);
    }

    #[test]
    fn zero_flow_grid_is_rectilinear() {
        let img = render_grid(&FlowField::zeros(9, 9), 4).unwrap();
        for y in 0..9u32 {
            for x in 0..9u32 {
                let on = x % 4 == 0 || y % 4 == 0;
                assert_eq!(img.get_pixel(x, y).0[0] == 255, on, "({x},{y})");
            }
        }
        assert!(render_grid(&FlowField::zeros(9, 9), 1).is_err());
    }

    #[test]
    fn constant_flow_translates_grid() {
        let base = render_grid(&FlowField::zeros(16, 16), 5).unwrap();
        let moved = render_grid(&FlowField::constant(16, 16, 2.0, 1.0), 5).unwrap();
        for y in 0..14u32 {
            for x in 0..13u32 {
                assert_eq!(base.get_pixel(x, y), moved.get_pixel(x + 2, y + 1));
            }
        }
    }
}
