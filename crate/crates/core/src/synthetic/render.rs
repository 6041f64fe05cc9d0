//! Deterministic rasterization of a scene: scanline polygon fill on a white
//! background, then 1-px black edges. Pixel centers sample the unit square
//! with `y` pointing up, so image row 0 is the top edge `y = 1`.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::scene::{Region, SceneDescription};
use super::script::Rgb;
use crate::raster::RasterImage;

fn fill_row(row: &mut [u8], py: u32, width: u32, height: u32, regions: &[Region]) {
    let y = 1.0 - (py as f64 + 0.5) / height as f64;
    let w = width as f64;
    for region in regions {
        let Some(Rgb(rgb)) = region.color else {
            continue;
        };
        let v = region.polygon.vertices();
        let n = v.len();
        let mut xs: Vec<f64> = Vec::with_capacity(4);
        for i in 0..n {
            let (a, b) = (v[i], v[(i + 1) % n]);
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            let start = (span[0] * w - 0.5).ceil().max(0.0) as i64;
            let end = ((span[1] * w - 0.5).floor() as i64).min(width as i64 - 1);
            for px in start..=end {
                let i = px as usize * 3;
                row[i..i + 3].copy_from_slice(&rgb);
            }
        }
    }
}

fn to_pixel(v: f64, size: u32) -> i64 {
    ((v * size as f64).floor() as i64).clamp(0, size as i64 - 1)
}

fn draw_segment(img: &mut RasterImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        img.set_pixel(x as u32, y as u32, Rgb::BLACK.0);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Renders `scene` at `width x height`. Panics if either dimension is zero.
pub fn render_scene(scene: &SceneDescription, width: u32, height: u32) -> RasterImage {
    assert!(width > 0 && height > 0, "render size must be positive");
    let mut pixels = vec![255u8; width as usize * height as usize * 3];
    let stride = width as usize * 3;
    let regions = scene.regions();

    #[cfg(feature = "parallel")]
    pixels
        .par_chunks_mut(stride)
        .enumerate()
        .for_each(|(py, row)| fill_row(row, py as u32, width, height, regions));
    #[cfg(not(feature = "parallel"))]
    pixels
        .chunks_mut(stride)
        .enumerate()
        .for_each(|(py, row)| fill_row(row, py as u32, width, height, regions));

    let mut img = RasterImage::new(width, height, pixels).expect("sized above");
    for region in regions {
        let v = region.polygon.vertices();
        for i in 0..v.len() {
            let (a, b) = (v[i], v[(i + 1) % v.len()]);
            draw_segment(
                &mut img,
                (to_pixel(a.x, width), to_pixel(1.0 - a.y, height)),
                (to_pixel(b.x, width), to_pixel(1.0 - b.y, height)),
            );
        }
    }
    img
}
