//! Raster plots: indicator scatter plots and mask/landmark overlays.

use autosame_core::Point;
use image::{Rgb, RgbImage};
use ndarray::Array2;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([200, 200, 200]);
const POINT: Rgb<u8> = Rgb([31, 119, 180]);
pub const TRUTH: Rgb<u8> = Rgb([44, 160, 44]);
pub const PREDICTED: Rgb<u8> = Rgb([214, 39, 40]);

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = ((x1 - x0).signum(), (y1 - y0).signum());
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, c);
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

fn disk(img: &mut RgbImage, (cx, cy): (i64, i64), r: i64, c: Rgb<u8>) {
    for y in -r..=r {
        for x in -r..=r {
            if x * x + y * y <= r * r {
                put(img, cx + x, cy + y, c);
            }
        }
    }
}

fn cross(img: &mut RgbImage, (cx, cy): (i64, i64), r: i64, c: Rgb<u8>) {
    line(img, (cx - r, cy - r), (cx + r, cy + r), c);
    line(img, (cx - r, cy + r), (cx + r, cy - r), c);
}

/// Predicted (y) against true (x) values on a square canvas with a shared
/// range, grid lines at tenths, and the identity diagonal. Non-finite pairs
/// are skipped.
pub fn scatter(truth: &[f64], pred: &[f64], side: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(side, side, WHITE);
    let pairs: Vec<(f64, f64)> = truth
        .iter()
        .zip(pred)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    let (mut lo, mut hi) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(a, b)| (lo.min(a).min(b), hi.max(a).max(b)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    let (lo, hi) = (lo - pad, hi + pad);
    let margin = (side / 10) as i64;
    let span = side as i64 - 2 * margin;
    let to_px = |v: f64| ((v - lo) / (hi - lo) * span as f64).round() as i64;
    let at = |a: f64, b: f64| (margin + to_px(a), side as i64 - margin - to_px(b));
    for k in 1..10 {
        let o = span * k / 10;
        line(&mut img, (margin + o, margin), (margin + o, margin + span), GRID);
        line(&mut img, (margin, margin + o), (margin + span, margin + o), GRID);
    }
    line(&mut img, at(lo, lo), at(hi, hi), GRID);
    line(&mut img, (margin, margin), (margin, margin + span), AXIS);
    line(&mut img, (margin, margin + span), (margin + span, margin + span), AXIS);
    for (a, b) in pairs {
        disk(&mut img, at(a, b), 3, POINT);
    }
    img
}

fn contour(mask: &Array2<u8>) -> impl Iterator<Item = (usize, usize)> + '_ {
    let (h, w) = mask.dim();
    mask.indexed_iter().filter_map(move |((r, c), &v)| {
        if v == 0 {
            return None;
        }
        let edge = r == 0
            || c == 0
            || r + 1 == h
            || c + 1 == w
            || mask[[r - 1, c]] == 0
            || mask[[r + 1, c]] == 0
            || mask[[r, c - 1]] == 0
            || mask[[r, c + 1]] == 0;
        edge.then_some((r, c))
    })
}

/// Grayscale frame in [0, 1] with true (green) and predicted (red) mask
/// outlines; true landmarks as crosses, predicted ones as dots.
pub fn overlay(image: &Array2<f32>, truth: (&Array2<u8>, &[Point]), pred: (&Array2<u8>, &[Point])) -> RgbImage {
    let (h, w) = image.dim();
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = (image[[y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    for ((mask, points), color) in [(truth, TRUTH), (pred, PREDICTED)] {
        for (r, c) in contour(mask) {
            put(&mut img, c as i64, r as i64, color);
        }
        for p in points {
            let at = (p.x.round() as i64, p.y.round() as i64);
            if color == TRUTH {
                cross(&mut img, at, 4, color);
            } else {
                disk(&mut img, at, 2, color);
            }
        }
    }
    img
}
