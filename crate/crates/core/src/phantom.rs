//! Synthetic apical echo phantoms with known LV geometry.
//!
//! Each frame holds a half-ellipse cavity (semi-axes `L` along the long axis
//! and `D/2` across it) cut at the mitral plane. Pairing the A4C and A2C
//! half-ellipses gives a half-ellipsoid whose volume is `pi * L * D4 * D2 / 6`,
//! so the measurement engine can be checked against closed-form values.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::geometry::{Landmarks, Phase, Point, View, VIEW_PHASES};
use crate::quant::{LVIndicators, QuantError, StudyQuad, ViewEntry, ViewMask};

pub const IMAGE_SIZE: usize = 256;

/// Landmarks and cavity must stay this far inside the frame.
const FRAME_MARGIN: f64 = 6.0;
const RIM_PX: f64 = 9.0;
const BLUR_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhantomError {
    #[error("invalid phantom parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum CavityShape {
    #[default]
    HalfEllipse,
    /// A circular bite taken out of the left wall. `level` is the bite
    /// center as a fraction of the long axis from the base; `radius` is a
    /// fraction of the local half-width and stays below 0.9 so the bite
    /// never reaches the axis.
    Notched { level: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    pub l_ed_mm: f64,
    pub l_es_mm: f64,
    pub d4_ed_mm: f64,
    pub d4_es_mm: f64,
    pub d2_ed_mm: f64,
    pub d2_es_mm: f64,
    pub spacing_mm: f64,
    pub tilt_deg: f64,
    /// Speckle strength in `[0, 1]`.
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub shape: CavityShape,
}

impl PhantomParams {
    /// Draws a plausible adult LV that fits a 256 px frame.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, seed: u64) -> Self {
        let l_ed = rng.random_range(70.0..95.0);
        let d4_ed = rng.random_range(38.0..55.0);
        let d2_ed = d4_ed * rng.random_range(0.85..1.15);
        let shrink_l = rng.random_range(0.85..0.97);
        let shrink_d = rng.random_range(0.6..0.9);
        let spacing = l_ed / rng.random_range(120.0..165.0);
        Self {
            l_ed_mm: l_ed,
            l_es_mm: l_ed * shrink_l,
            d4_ed_mm: d4_ed,
            d4_es_mm: d4_ed * shrink_d * rng.random_range(0.95..1.0),
            d2_ed_mm: d2_ed,
            d2_es_mm: d2_ed * shrink_d * rng.random_range(0.95..1.0),
            spacing_mm: spacing,
            tilt_deg: rng.random_range(-20.0..20.0),
            noise: rng.random_range(0.2..0.5),
            seed,
            shape: CavityShape::HalfEllipse,
        }
    }

    /// Solves equal A4C/A2C basal diameters that give the requested volumes.
    pub fn from_volumes(
        edv_ml: f64,
        esv_ml: f64,
        l_ed_mm: f64,
        l_es_mm: f64,
        spacing_mm: f64,
        seed: u64,
    ) -> Result<Self, PhantomError> {
        let diameter = |v_ml: f64, l: f64| (6.0 * v_ml * 1000.0 / (std::f64::consts::PI * l)).sqrt();
        let d_ed = diameter(edv_ml, l_ed_mm);
        let d_es = diameter(esv_ml, l_es_mm);
        let p = Self {
            l_ed_mm,
            l_es_mm,
            d4_ed_mm: d_ed,
            d4_es_mm: d_es,
            d2_ed_mm: d_ed,
            d2_es_mm: d_es,
            spacing_mm,
            tilt_deg: 0.0,
            noise: 0.3,
            seed,
            shape: CavityShape::HalfEllipse,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::InvalidParams(m));
        let dims = [
            ("l_ed_mm", self.l_ed_mm),
            ("l_es_mm", self.l_es_mm),
            ("d4_ed_mm", self.d4_ed_mm),
            ("d4_es_mm", self.d4_es_mm),
            ("d2_ed_mm", self.d2_ed_mm),
            ("d2_es_mm", self.d2_es_mm),
            ("spacing_mm", self.spacing_mm),
        ];
        for (name, v) in dims {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.l_es_mm > self.l_ed_mm || self.d4_es_mm > self.d4_ed_mm || self.d2_es_mm > self.d2_ed_mm {
            return bad("end-systolic dimensions exceed end-diastolic ones".into());
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return bad(format!("noise must be in [0, 1], got {}", self.noise));
        }
        if !self.tilt_deg.is_finite() {
            return bad("tilt must be finite".into());
        }
        if let CavityShape::Notched { level, radius } = self.shape {
            if !(0.05..=0.9).contains(&level) || !(0.0..0.9).contains(&radius) {
                return bad(format!("notch level {level} / radius {radius} out of range"));
            }
        }
        let ef = self.analytic_indicators_unchecked().EF;
        if !(ef > 0.0 && ef < 100.0) {
            return bad(format!("analytic EF {ef} is not in (0, 100)"));
        }
        Ok(())
    }

    fn diameters(&self, view: View, phase: Phase) -> f64 {
        match (view, phase) {
            (View::A4C, Phase::ED) => self.d4_ed_mm,
            (View::A4C, Phase::ES) => self.d4_es_mm,
            (View::A2C, Phase::ED) => self.d2_ed_mm,
            (View::A2C, Phase::ES) => self.d2_es_mm,
        }
    }

    fn length(&self, phase: Phase) -> f64 {
        match phase {
            Phase::ED => self.l_ed_mm,
            Phase::ES => self.l_es_mm,
        }
    }

    /// Reference indicators for the continuous geometry.
    pub fn analytic_indicators(&self) -> Result<LVIndicators, PhantomError> {
        self.validate()?;
        Ok(self.analytic_indicators_unchecked())
    }

    fn analytic_indicators_unchecked(&self) -> LVIndicators {
        let volume = |phase: Phase| match self.shape {
            CavityShape::HalfEllipse => {
                std::f64::consts::PI
                    * self.length(phase)
                    * self.diameters(View::A4C, phase)
                    * self.diameters(View::A2C, phase)
                    / 6.0
                    / 1000.0
            }
            CavityShape::Notched { .. } => self.integrated_volume(phase),
        };
        let (edv, esv) = (volume(Phase::ED), volume(Phase::ES));
        LVIndicators {
            EDL: self.l_ed_mm,
            ESL: self.l_es_mm,
            EDV: edv,
            ESV: esv,
            EF: 100.0 * (edv - esv) / edv,
        }
    }

    /// Disk integral of the exact chord functions (mL), for shapes without a
    /// closed form.
    fn integrated_volume(&self, phase: Phase) -> f64 {
        const SLICES: usize = 20_000;
        let l = self.length(phase);
        let a = CavityGeometry::local(l, self.diameters(View::A4C, phase), self.shape);
        let b = CavityGeometry::local(l, self.diameters(View::A2C, phase), self.shape);
        let dz = l / SLICES as f64;
        let sum: f64 = (0..SLICES)
            .map(|i| {
                let z = (i as f64 + 0.5) * dz;
                a.chord(z) * b.chord(z)
            })
            .sum();
        std::f64::consts::FRAC_PI_4 * sum * dz / 1000.0
    }
}

/// Cavity outline in a frame: base midpoint, axis direction toward the apex
/// and the perpendicular. Lengths here are in whatever unit the geometry was
/// built with (mm for analytic chords, px for rasterization).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityGeometry {
    pub base_mid: Point,
    pub axis: Point,
    pub normal: Point,
    pub length: f64,
    pub half_width: f64,
    pub shape: CavityShape,
}

impl CavityGeometry {
    fn local(length: f64, diameter: f64, shape: CavityShape) -> Self {
        Self {
            base_mid: Point::default(),
            axis: Point::new(0.0, 1.0),
            normal: Point::new(1.0, 0.0),
            length,
            half_width: diameter / 2.0,
            shape,
        }
    }

    /// `(z, s)`: distance along the axis from the base and signed offset
    /// along the normal.
    pub fn to_local(&self, p: Point) -> (f64, f64) {
        let d = p - self.base_mid;
        (d.dot(self.axis), d.dot(self.normal))
    }

    pub fn half_width_at(&self, z: f64) -> f64 {
        if !(0.0..=self.length).contains(&z) {
            return 0.0;
        }
        self.half_width * (1.0 - (z / self.length).powi(2)).max(0.0).sqrt()
    }

    /// Notch disk as `(center_z, center_s, radius)`.
    fn notch(&self) -> Option<(f64, f64, f64)> {
        match self.shape {
            CavityShape::HalfEllipse => None,
            CavityShape::Notched { level, radius } => {
                let z = level * self.length;
                let w = self.half_width_at(z);
                Some((z, -w, radius * w))
            }
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let (z, s) = self.to_local(p);
        if !(0.0..=self.length).contains(&z) {
            return false;
        }
        let w = self.half_width;
        if (s / w).powi(2) + (z / self.length).powi(2) > 1.0 {
            return false;
        }
        match self.notch() {
            Some((cz, cs, r)) => (z - cz).powi(2) + (s - cs).powi(2) > r * r,
            None => true,
        }
    }

    /// Exact length of the cavity run through the axis at level `z`.
    pub fn chord(&self, z: f64) -> f64 {
        let w = self.half_width_at(z);
        if w <= 0.0 {
            return 0.0;
        }
        let mut left = -w;
        if let Some((cz, cs, r)) = self.notch() {
            let dz = z - cz;
            if dz.abs() < r {
                let reach = cs + (r * r - dz * dz).sqrt();
                left = left.max(reach);
            }
        }
        (w - left).max(0.0)
    }

    pub fn apex(&self) -> Point {
        self.base_mid + self.axis * self.length
    }

    pub fn left_annulus(&self) -> Point {
        self.base_mid - self.normal * self.half_width
    }

    pub fn right_annulus(&self) -> Point {
        self.base_mid + self.normal * self.half_width
    }
}

/// Per-frame pixel geometry of a phantom.
pub fn frame_geometry(params: &PhantomParams, view: View, phase: Phase) -> CavityGeometry {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ view_salt(view));
    let jitter = Point::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
    let tilt = params.tilt_deg.to_radians();
    // Tilt 0 puts the apex straight up; P_L is then on the left.
    let axis = Point::new(tilt.sin(), -tilt.cos());
    let normal = Point::new(tilt.cos(), tilt.sin());
    let c = (IMAGE_SIZE as f64 - 1.0) / 2.0;
    let l_ed_px = params.l_ed_mm / params.spacing_mm;
    // The base stays put between ED and ES; the apex moves.
    let base_mid = Point::new(c, c) + jitter - axis * (l_ed_px / 2.0);
    CavityGeometry {
        base_mid,
        axis,
        normal,
        length: params.length(phase) / params.spacing_mm,
        half_width: params.diameters(view, phase) / params.spacing_mm / 2.0,
        shape: params.shape,
    }
}

fn view_salt(view: View) -> u64 {
    match view {
        View::A4C => 0x4a4c_0000_0000_0001,
        View::A2C => 0x4a2c_0000_0000_0002,
    }
}

pub fn rasterize(geom: &CavityGeometry, (h, w): (usize, usize)) -> Array2<u8> {
    Array2::from_shape_fn((h, w), |(r, c)| geom.contains(Point::new(c as f64, r as f64)) as u8)
}

/// Mask-conditioned echo-like texture: dark cavity and atrium, bright
/// myocardial rim and valve plane, multiplicative speckle, mild blur.
/// Values are quantized to multiples of 1/255 so they survive 8-bit PNG.
pub fn render_image(geom: &CavityGeometry, noise: f64, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let n = IMAGE_SIZE;
    let w0 = geom.half_width;
    let l = geom.length;
    let mut img = Array2::from_shape_fn((n, n), |(r, c)| {
        let p = Point::new(c as f64, r as f64);
        let (z, s) = geom.to_local(p);
        if geom.contains(p) {
            return 0.06;
        }
        if z.abs() <= 1.5 && s.abs() <= w0 + RIM_PX {
            return 0.55;
        }
        if z >= 0.0 {
            let rho = ((s / (w0 + RIM_PX)).powi(2) + (z / (l + RIM_PX)).powi(2)).sqrt();
            if rho <= 1.0 {
                return 0.8;
            }
        } else if (s / (0.9 * w0)).powi(2) + (z / (0.35 * l)).powi(2) <= 1.0 {
            return 0.12;
        }
        0.3
    });
    img.mapv_inplace(|v| {
        let e: f64 = Exp1.sample(rng);
        v * ((1.0 - noise) + noise * e)
    });
    let blurred = gaussian_blur(&img, BLUR_SIGMA);
    blurred.mapv(|v| (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0)
}

fn gaussian_blur(img: &Array2<f64>, sigma: f64) -> Array2<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (h, w) = img.dim();
    let pass = |src: &Array2<f64>, horizontal: bool| {
        Array2::from_shape_fn((h, w), |(r, c)| {
            let mut acc = 0.0;
            for (k, wt) in kernel.iter().enumerate() {
                let off = k as isize - radius;
                let (rr, cc) = if horizontal {
                    (r as isize, (c as isize + off).clamp(0, w as isize - 1))
                } else {
                    ((r as isize + off).clamp(0, h as isize - 1), c as isize)
                };
                acc += wt * src[[rr as usize, cc as usize]];
            }
            acc / norm
        })
    };
    pass(&pass(img, true), false)
}

/// Rasterized study plus the reference indicators of its continuous geometry.
pub fn generate_phantom_study(
    params: &PhantomParams,
    id: impl Into<String>,
) -> Result<(StudyQuad, LVIndicators), PhantomError> {
    params.validate()?;
    let mut entries = Vec::with_capacity(4);
    for (view, phase) in VIEW_PHASES {
        let geom = frame_geometry(params, view, phase);
        check_fits(&geom)?;
        let mask = ViewMask::new(rasterize(&geom, (IMAGE_SIZE, IMAGE_SIZE)), view, phase, params.spacing_mm)?;
        let landmarks = Landmarks::new(geom.apex(), geom.left_annulus(), geom.right_annulus())
            .map_err(|e| PhantomError::InvalidParams(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ view_salt(view) ^ phase_salt(phase));
        let image = render_image(&geom, params.noise, &mut rng);
        entries.push(ViewEntry::new(mask, landmarks, Some(image))?);
    }
    let study = StudyQuad::new(id, entries)?;
    Ok((study, params.analytic_indicators()?))
}

fn phase_salt(phase: Phase) -> u64 {
    match phase {
        Phase::ED => 0x0ed0,
        Phase::ES => 0x0e50,
    }
}

fn check_fits(geom: &CavityGeometry) -> Result<(), PhantomError> {
    let hi = IMAGE_SIZE as f64 - 1.0 - FRAME_MARGIN;
    let corners = [
        geom.apex(),
        geom.left_annulus(),
        geom.right_annulus(),
        geom.left_annulus() + geom.axis * (geom.length * 0.5),
        geom.right_annulus() + geom.axis * (geom.length * 0.5),
    ];
    for p in corners {
        if !(p.x >= FRAME_MARGIN && p.x <= hi && p.y >= FRAME_MARGIN && p.y <= hi) {
            return Err(PhantomError::InvalidParams(format!(
                "cavity extends outside the {IMAGE_SIZE} px frame at ({:.1}, {:.1})",
                p.x, p.y
            )));
        }
    }
    Ok(())
}

/// `count` random studies named `phantom_0000`, ... from one seed.
pub fn generate_dataset(count: usize, seed: u64) -> Result<Vec<(StudyQuad, LVIndicators)>, PhantomError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let study_seed = rng.random();
            let params = PhantomParams::random(&mut rng, study_seed);
            generate_phantom_study(&params, format!("phantom_{i:04}"))
        })
        .collect()
}
