//! Raster renderings of fields for inspection.

use image::{Rgb, RgbImage};
use metamorph_core::{SampleGrid, ScalarField};

use crate::io::quantize8;

const NEGATIVE: [f64; 3] = [0.230, 0.299, 0.754];
const POSITIVE: [f64; 3] = [0.706, 0.016, 0.150];

/// Blue-white-red color for `x` on the symmetric range `[-scale, scale]`.
pub fn diverging_color(x: f64, scale: f64) -> Rgb<u8> {
    let t = if scale > 0.0 { (x / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let end = if t < 0.0 { NEGATIVE } else { POSITIVE };
    let a = t.abs();
    Rgb(std::array::from_fn(|c| ((1.0 - a + a * end[c]) * 255.0).round() as u8))
}

pub fn heatmap(field: &ScalarField, scale: f64) -> RgbImage {
    let g = field.geometry();
    RgbImage::from_fn(g.width() as u32, g.height() as u32, |x, y| {
        diverging_color(field.get(y as usize, x as usize), scale)
    })
}

pub fn grayscale(field: &ScalarField) -> RgbImage {
    let g = field.geometry();
    let q = quantize8(field);
    RgbImage::from_fn(g.width() as u32, g.height() as u32, |x, y| {
        let v = q[y as usize * g.width() + x as usize];
        Rgb([v, v, v])
    })
}

fn draw_segment(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], color: Rgb<u8>) {
    let n = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()) * 2.0).ceil().max(1.0) as usize;
    for s in 0..=n {
        let t = s as f64 / n as f64;
        let row = (a[0] + t * (b[0] - a[0])).round();
        let col = (a[1] + t * (b[1] - a[1])).round();
        if row >= 0.0 && col >= 0.0 && (row as u32) < img.height() && (col as u32) < img.width() {
            img.put_pixel(col as u32, row as u32, color);
        }
    }
}

/// Draws every `spacing`-th row and column line of the sampling grid as
/// polylines through its mapped points, dark on white.
pub fn deformation_grid(grid: &SampleGrid, spacing: usize) -> RgbImage {
    let g = grid.geometry();
    let (h, w) = (g.height(), g.width());
    let mut img = RgbImage::from_pixel(w as u32, h as u32, Rgb([255, 255, 255]));
    let ink = Rgb([20, 20, 20]);
    for i in (0..h).step_by(spacing) {
        for j in 1..w {
            draw_segment(&mut img, grid.get(i, j - 1), grid.get(i, j), ink);
        }
    }
    for j in (0..w).step_by(spacing) {
        for i in 1..h {
            draw_segment(&mut img, grid.get(i - 1, j), grid.get(i, j), ink);
        }
    }
    img
}

/// Tiles `rows` of equally sized images, separated by `gap` white pixels.
pub fn montage(rows: &[Vec<RgbImage>], gap: u32) -> RgbImage {
    let (tw, th) = rows
        .iter()
        .flatten()
        .next()
        .map(|t| (t.width(), t.height()))
        .unwrap_or((0, 0));
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let nrows = rows.len() as u32;
    let span = |n: u32, t: u32| if n == 0 { 1 } else { n * t + (n - 1) * gap };
    let mut out = RgbImage::from_pixel(span(ncols, tw), span(nrows, th), Rgb([255, 255, 255]));
    for (r, row) in rows.iter().enumerate() {
        for (c, tile) in row.iter().enumerate() {
            let x0 = c as u32 * (tw + gap);
            let y0 = r as u32 * (th + gap);
            for (x, y, p) in tile.enumerate_pixels() {
                if x < tw && y < th {
                    out.put_pixel(x0 + x, y0 + y, *p);
                }
            }
        }
    }
    out
}
