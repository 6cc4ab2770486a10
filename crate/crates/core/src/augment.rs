//! Geometry-consistent augmentation: rotation, center crop and a mild
//! perspective warp, composed into one homography and applied identically to
//! image (bilinear), mask (nearest) and landmarks (exact).

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Landmarks, Point};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("image {image:?} and mask {mask:?} shapes differ")]
    ShapeMismatch { image: (usize, usize), mask: (usize, usize) },
    #[error("landmarks left the frame in {attempts} transform draws; sample skipped")]
    SkipSample { attempts: usize },
    #[error("transform is singular")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub min_crop_scale: f64,
    pub max_crop_scale: f64,
    /// Largest corner displacement, as a fraction of the image side.
    pub perspective: f64,
    pub max_retries: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 15.0,
            min_crop_scale: 0.8,
            max_crop_scale: 1.0,
            perspective: 0.05,
            max_retries: 10,
        }
    }
}

/// One sampled transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub rotation_deg: f64,
    /// Side of the centered crop relative to the frame; the crop is resized
    /// back to the full frame.
    pub crop_scale: f64,
    /// Displacement of the corners (top-left, top-right, bottom-right,
    /// bottom-left) in output pixels.
    pub corner_offsets: [Point; 4],
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            crop_scale: 1.0,
            corner_offsets: [Point::default(); 4],
        }
    }

    pub fn rotation(deg: f64) -> Self {
        Self {
            rotation_deg: deg,
            ..Self::identity()
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R, cfg: &AugmentConfig, (h, w): (usize, usize)) -> Self {
        let max_off = cfg.perspective * h.max(w) as f64;
        let mut off = || {
            if max_off > 0.0 {
                rng.random_range(-max_off..=max_off)
            } else {
                0.0
            }
        };
        let corner_offsets = [
            Point::new(off(), off()),
            Point::new(off(), off()),
            Point::new(off(), off()),
            Point::new(off(), off()),
        ];
        let rotation_deg = if cfg.max_rotation_deg > 0.0 {
            rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
        } else {
            0.0
        };
        let crop_scale = if cfg.max_crop_scale > cfg.min_crop_scale {
            rng.random_range(cfg.min_crop_scale..=cfg.max_crop_scale)
        } else {
            cfg.max_crop_scale
        };
        Self {
            rotation_deg,
            crop_scale,
            corner_offsets,
        }
    }

    /// Forward map from source to output pixel coordinates.
    pub fn homography(&self, (h, w): (usize, usize)) -> Result<Matrix3<f64>, AugmentError> {
        let c = Point::new((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let about_center = |m: Matrix3<f64>| {
            let to = Matrix3::new(1.0, 0.0, c.x, 0.0, 1.0, c.y, 0.0, 0.0, 1.0);
            let from = Matrix3::new(1.0, 0.0, -c.x, 0.0, 1.0, -c.y, 0.0, 0.0, 1.0);
            to * m * from
        };
        let (s, co) = self.rotation_deg.to_radians().sin_cos();
        let rot = about_center(Matrix3::new(co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0));
        let k = 1.0 / self.crop_scale;
        let zoom = about_center(Matrix3::new(k, 0.0, 0.0, 0.0, k, 0.0, 0.0, 0.0, 1.0));
        let persp = if self.corner_offsets.iter().all(|o| *o == Point::default()) {
            Matrix3::identity()
        } else {
            let corners = frame_corners((h, w));
            let moved = [0, 1, 2, 3].map(|i| corners[i] + self.corner_offsets[i]);
            quad_homography(&corners, &moved)?
        };
        Ok(persp * zoom * rot)
    }
}

pub fn frame_corners((h, w): (usize, usize)) -> [Point; 4] {
    let (x1, y1) = (w as f64 - 1.0, h as f64 - 1.0);
    [
        Point::new(0.0, 0.0),
        Point::new(x1, 0.0),
        Point::new(x1, y1),
        Point::new(0.0, y1),
    ]
}

/// Homography taking `src[i]` to `dst[i]`, with `H[2][2] = 1`.
pub fn quad_homography(src: &[Point; 4], dst: &[Point; 4]) -> Result<Matrix3<f64>, AugmentError> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let (x, y) = (src[i].x, src[i].y);
        let (u, v) = (dst[i].x, dst[i].y);
        let r = 2 * i;
        a.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let sol = a.lu().solve(&b).ok_or(AugmentError::Singular)?;
    Ok(Matrix3::new(sol[0], sol[1], sol[2], sol[3], sol[4], sol[5], sol[6], sol[7], 1.0))
}

pub fn warp_point(hm: &Matrix3<f64>, p: Point) -> Point {
    let v = hm * Vector3::new(p.x, p.y, 1.0);
    Point::new(v.x / v.z, v.y / v.z)
}

/// Bilinear resampling through `hm` (source to output); zero outside.
pub fn warp_image(src: &Array2<f32>, hm: &Matrix3<f64>) -> Result<Array2<f32>, AugmentError> {
    let inv = hm.try_inverse().ok_or(AugmentError::Singular)?;
    let (h, w) = src.dim();
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        let p = warp_point(&inv, Point::new(c as f64, r as f64));
        bilinear(src, p)
    }))
}

/// Nearest-neighbor resampling; output stays binary when the input is.
pub fn warp_mask(src: &Array2<u8>, hm: &Matrix3<f64>) -> Result<Array2<u8>, AugmentError> {
    let inv = hm.try_inverse().ok_or(AugmentError::Singular)?;
    let (h, w) = src.dim();
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        let p = warp_point(&inv, Point::new(c as f64, r as f64));
        let (rr, cc) = (p.y.round(), p.x.round());
        if rr >= 0.0 && cc >= 0.0 && rr < h as f64 && cc < w as f64 {
            src[[rr as usize, cc as usize]]
        } else {
            0
        }
    }))
}

pub fn bilinear(src: &Array2<f32>, p: Point) -> f32 {
    let (h, w) = src.dim();
    let x0 = p.x.floor();
    let y0 = p.y.floor();
    let fx = (p.x - x0) as f32;
    let fy = (p.y - y0) as f32;
    let at = |r: f64, c: f64| -> f32 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            src[[r as usize, c as usize]]
        }
    };
    let mut v = 0.0;
    if fy < 1.0 {
        let top = if fx > 0.0 {
            at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx
        } else {
            at(y0, x0)
        };
        v += top * (1.0 - fy);
    }
    if fy > 0.0 {
        let bottom = if fx > 0.0 {
            at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx
        } else {
            at(y0 + 1.0, x0)
        };
        v += bottom * fy;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub image: Array2<f32>,
    pub mask: Array2<u8>,
    pub landmarks: Landmarks,
    pub draw: AugmentDraw,
}

/// Applies one fixed draw. Errors with `SkipSample { attempts: 1 }` if a
/// landmark leaves the frame.
pub fn apply_draw(
    draw: &AugmentDraw,
    image: &Array2<f32>,
    mask: &Array2<u8>,
    lm: &Landmarks,
) -> Result<Augmented, AugmentError> {
    if image.dim() != mask.dim() {
        return Err(AugmentError::ShapeMismatch {
            image: image.dim(),
            mask: mask.dim(),
        });
    }
    let shape = image.dim();
    let hm = draw.homography(shape)?;
    let landmarks = lm
        .map(|p| warp_point(&hm, p))
        .ok()
        .filter(|l| l.check_in_grid(shape).is_ok())
        .ok_or(AugmentError::SkipSample { attempts: 1 })?;
    Ok(Augmented {
        image: warp_image(image, &hm)?,
        mask: warp_mask(mask, &hm)?,
        landmarks,
        draw: *draw,
    })
}

/// Samples transforms until the landmarks stay in frame, up to
/// `cfg.max_retries` draws.
pub fn augment<R: Rng + ?Sized>(
    image: &Array2<f32>,
    mask: &Array2<u8>,
    lm: &Landmarks,
    rng: &mut R,
    cfg: &AugmentConfig,
) -> Result<Augmented, AugmentError> {
    let attempts = cfg.max_retries.max(1);
    for _ in 0..attempts {
        let draw = AugmentDraw::sample(rng, cfg, image.dim());
        match apply_draw(&draw, image, mask, lm) {
            Err(AugmentError::SkipSample { .. }) => continue,
            other => return other,
        }
    }
    Err(AugmentError::SkipSample { attempts })
}
