//! Static overlay images: colorized instances plus an optional grasp.

use image::{Rgb, RgbImage};

use crate::camgeom::{crop_aligned_rect, nearest_pixel, RectFrame};
use crate::maskio::{InstanceId, InstanceLabelMap, BACKGROUND};
use crate::planner::{identify_subsectors, PoseDocument, Sector, DEFAULT_GB_PX, DEFAULT_GW_PX};

pub const OUTLINE: Rgb<u8> = Rgb([255, 220, 0]);
pub const CENTER: Rgb<u8> = Rgb([30, 90, 255]);
const TEXT: Rgb<u8> = Rgb([255, 255, 255]);
const TEXT_BG: Rgb<u8> = Rgb([0, 0, 0]);

/// Stable color for an instance id: golden-ratio hue steps in HSV.
pub fn id_color(id: InstanceId) -> Rgb<u8> {
    let h = (id as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let (s, v) = (0.7, 0.95);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let to_u8 = |f: f64| ((f + m) * 255.0).round() as u8;
    Rgb([to_u8(r), to_u8(g), to_u8(b)])
}

fn sector_color(s: Sector) -> Rgb<u8> {
    match s {
        Sector::Contact => Rgb([40, 200, 60]),
        Sector::Free => Rgb([255, 255, 255]),
        Sector::Collision => Rgb([230, 40, 40]),
    }
}

fn blend(a: Rgb<u8>, b: Rgb<u8>, alpha: f64) -> Rgb<u8> {
    let mix = |x: u8, y: u8| (x as f64 * (1.0 - alpha) + y as f64 * alpha).round() as u8;
    Rgb([mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])])
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], c: Rgb<u8>) {
    let steps = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()) * 4.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        put(
            img,
            nearest_pixel(a[0] + (b[0] - a[0]) * t),
            nearest_pixel(a[1] + (b[1] - a[1]) * t),
            c,
        );
    }
}

/// 3x5 glyphs, one row per nibble (bit 2 = left column).
fn glyph(ch: char) -> [u8; 5] {
    match ch {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '=' => [0, 7, 0, 7, 0],
        'Q' => [7, 5, 5, 7, 1],
        _ => [0; 5],
    }
}

fn text(img: &mut RgbImage, x0: i64, y0: i64, s: &str) {
    let w = s.chars().count() as i64 * 4 + 1;
    for y in y0 - 1..y0 + 6 {
        for x in x0 - 1..x0 + w {
            put(img, x, y, TEXT_BG);
        }
    }
    for (i, ch) in s.chars().enumerate() {
        let g = glyph(ch);
        for (row, bits) in g.iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    put(img, x0 + i as i64 * 4 + col, y0 + row as i64, TEXT);
                }
            }
        }
    }
}

/// Instances painted over `base` (black when absent). Background pixels keep
/// the base color; instance pixels become their id color, blended half-way
/// when a base image is given.
pub fn colorize(map: &InstanceLabelMap, base: Option<&RgbImage>) -> RgbImage {
    let (w, h) = (map.width(), map.height());
    let mut img = match base {
        Some(b) => b.clone(),
        None => RgbImage::new(w, h),
    };
    for y in 0..h {
        for x in 0..w {
            let id = map.get(x as i64, y as i64);
            if id == BACKGROUND {
                continue;
            }
            let c = id_color(id);
            let px = match base {
                Some(_) => blend(*img.get_pixel(x, y), c, 0.5),
                None => c,
            };
            img.put_pixel(x, y, px);
        }
    }
    img
}

/// Draws the grasp rectangle with its sector tint, the center marker and
/// the quality index.
pub fn draw_pose(img: &mut RgbImage, map: &InstanceLabelMap, pose: &PoseDocument) {
    let [gw, gb] = pose.rect_px.unwrap_or([DEFAULT_GW_PX, DEFAULT_GB_PX]);
    let (gw, gb) = (gw.max(1), gb.max(1));
    let frame = RectFrame::new(pose.center_px, pose.angle_rad, gw, gb);

    if pose.instance != BACKGROUND {
        let crop = crop_aligned_rect(map, pose.center_px, pose.angle_rad, gw, gb);
        let sub = identify_subsectors(&crop, pose.instance).expect("nonzero target");
        for r in 0..gb {
            for c in 0..gw {
                let [x, y] = frame.to_image(c as f64, r as f64);
                let (x, y) = (nearest_pixel(x), nearest_pixel(y));
                if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                    let under = *img.get_pixel(x as u32, y as u32);
                    img.put_pixel(x as u32, y as u32, blend(under, sector_color(sub.get(r, c)), 0.4));
                }
            }
        }
    }

    // outline along the outermost cell centers so it stays on the tinted cells
    let (w, b) = ((gw - 1) as f64, (gb - 1) as f64);
    let corners = [
        frame.to_image(0.0, 0.0),
        frame.to_image(w, 0.0),
        frame.to_image(w, b),
        frame.to_image(0.0, b),
    ];
    for i in 0..4 {
        line(img, corners[i], corners[(i + 1) % 4], OUTLINE);
    }

    let (cx, cy) = (nearest_pixel(pose.center_px[0]), nearest_pixel(pose.center_px[1]));
    for d in -2..=2 {
        put(img, cx + d, cy, CENTER);
        put(img, cx, cy + d, CENTER);
    }

    text(img, 1, 1, &format!("Q={:.1}", pose.quality));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::QualityBreakdown;

    fn doc(center: [f64; 2], angle: f64, rect: [u32; 2]) -> PoseDocument {
        PoseDocument {
            valid: true,
            center_px: center,
            angle_rad: angle,
            width_px: 5.0,
            width_m: 0.005,
            quality: 87.5,
            breakdown: QualityBreakdown::default(),
            instance: 1,
            world: None,
            rect_px: Some(rect),
            rejection: None,
        }
    }

    #[test]
    fn colors_are_distinct_and_stable() {
        let colors: Vec<Rgb<u8>> = (1..=20).map(id_color).collect();
        for i in 0..colors.len() {
            for j in i + 1..colors.len() {
                assert_ne!(colors[i], colors[j], "ids {} and {}", i + 1, j + 1);
            }
        }
        assert_eq!(id_color(7), id_color(7));
    }

    #[test]
    fn background_untouched() {
        let map = InstanceLabelMap::with_unit_scores(3, 1, vec![0, 1, 2]).unwrap();
        let img = colorize(&map, None);
        assert_eq!(*img.get_pixel(0, 0), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(1, 0), id_color(1));
        let base = RgbImage::from_pixel(3, 1, Rgb([10, 20, 30]));
        let img = colorize(&map, Some(&base));
        assert_eq!(*img.get_pixel(0, 0), Rgb([10, 20, 30]));
        assert_ne!(*img.get_pixel(2, 0), Rgb([10, 20, 30]));
    }

    #[test]
    fn zero_angle_rectangle_is_axis_aligned() {
        let mut px = vec![0u16; 40 * 30];
        for y in 13..=17 {
            for x in 18..=22 {
                px[y * 40 + x] = 1;
            }
        }
        let map = InstanceLabelMap::with_unit_scores(40, 30, px).unwrap();
        let mut img = colorize(&map, None);
        draw_pose(&mut img, &map, &doc([20.0, 15.0], 0.0, [21, 9]));
        let outline: Vec<(u32, u32)> = img
            .enumerate_pixels()
            .filter(|(_, _, p)| **p == OUTLINE)
            .map(|(x, y, _)| (x, y))
            .collect();
        assert!(!outline.is_empty());
        // cells span x 10..=30, y 11..=19
        for &(x, y) in &outline {
            assert!(x == 10 || x == 30 || y == 11 || y == 19, "({x},{y})");
            assert!((10..=30).contains(&x) && (11..=19).contains(&y));
        }
        assert!(outline.len() >= 2 * 21 + 2 * 9 - 4 - 2);
        assert_eq!(*img.get_pixel(20, 15), CENTER);
    }
}
