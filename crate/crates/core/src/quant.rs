//! Biplane Simpson's method of disks.
//!
//! Masks and landmarks for the four apical frames go in, LV indicators come
//! out. Everything here is a pure function of its inputs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geometry::{LandmarkError, Landmarks, Phase, Point, View, VIEW_PHASES};

/// Default number of disks.
pub const DEFAULT_DISKS: usize = 20;

/// Smallest accepted grid side.
pub const MIN_GRID: usize = 16;

/// Step, in pixels, used when walking a chord outward from the axis.
const CHORD_STEP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantError {
    #[error("degenerate long axis: apex is {length_px:.3} px from the mitral midpoint")]
    DegenerateAxis { length_px: f64 },
    #[error("disk count mismatch: A4C has {a4c}, A2C has {a2c}")]
    DiskCountMismatch { a4c: usize, a2c: usize },
    #[error("end-diastolic volume must be positive, got {0}")]
    NonPositiveEdv(f64),
    #[error("end-systolic volume must be nonnegative, got {0}")]
    NegativeEsv(f64),
    #[error("number of disks must be at least 1")]
    ZeroDisks,
    #[error("study is missing the {view}/{phase} frame")]
    MissingView { view: View, phase: Phase },
    #[error("study has more than one {view}/{phase} frame")]
    DuplicateView { view: View, phase: Phase },
    #[error("{view}: ED spacing {ed} mm differs from ES spacing {es} mm")]
    InconsistentSpacing { view: View, ed: f64, es: f64 },
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("landmarks do not fit the mask grid: {0}")]
    Landmarks(#[from] LandmarkError),
    #[error("{view}/{phase}: {source}")]
    InFrame {
        view: View,
        phase: Phase,
        #[source]
        source: Box<QuantError>,
    },
}

impl QuantError {
    fn in_frame(self, view: View, phase: Phase) -> Self {
        QuantError::InFrame {
            view,
            phase,
            source: Box::new(self),
        }
    }
}

/// Binary LV cavity mask (1 = cavity) with isotropic pixel spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMask {
    grid: Array2<u8>,
    view: View,
    phase: Phase,
    spacing_mm: f64,
}

impl ViewMask {
    pub fn new(grid: Array2<u8>, view: View, phase: Phase, spacing_mm: f64) -> Result<Self, QuantError> {
        let (h, w) = grid.dim();
        if h < MIN_GRID || w < MIN_GRID {
            return Err(QuantError::InvalidMask(format!(
                "grid {h}x{w} is smaller than {MIN_GRID}x{MIN_GRID}"
            )));
        }
        if let Some(v) = grid.iter().find(|&&v| v > 1) {
            return Err(QuantError::InvalidMask(format!("value {v} is not binary")));
        }
        if !(spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(QuantError::InvalidMask(format!(
                "spacing must be positive, got {spacing_mm}"
            )));
        }
        Ok(Self {
            grid,
            view,
            phase,
            spacing_mm,
        })
    }

    pub fn grid(&self) -> &Array2<u8> {
        &self.grid
    }

    pub fn view(&self) -> View {
        self.view
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    /// `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        self.grid.dim()
    }

    pub fn area_px(&self) -> usize {
        self.grid.iter().filter(|&&v| v == 1).count()
    }

    /// Same mask with a different physical spacing.
    pub fn with_spacing(&self, spacing_mm: f64) -> Result<Self, QuantError> {
        Self::new(self.grid.clone(), self.view, self.phase, spacing_mm)
    }

    /// Same frame and spacing with a different grid.
    pub fn with_grid(&self, grid: Array2<u8>) -> Result<Self, QuantError> {
        Self::new(grid, self.view, self.phase, self.spacing_mm)
    }

    /// Bilinear interpolation of the binary grid at a subpixel position;
    /// zero outside the grid.
    fn sample(&self, p: Point) -> f64 {
        let (h, w) = self.grid.dim();
        let x0 = p.x.floor();
        let y0 = p.y.floor();
        let fx = p.x - x0;
        let fy = p.y - y0;
        let at = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
                0.0
            } else {
                self.grid[[r as usize, c as usize]] as f64
            }
        };
        let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
        let bottom = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// One annotated apical frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEntry {
    pub mask: ViewMask,
    pub landmarks: Landmarks,
    /// Grayscale intensities in `[0, 1]`; absent when only the geometry is known.
    pub image: Option<Array2<f32>>,
}

impl ViewEntry {
    pub fn new(mask: ViewMask, landmarks: Landmarks, image: Option<Array2<f32>>) -> Result<Self, QuantError> {
        landmarks.check_in_grid(mask.shape())?;
        if let Some(img) = &image {
            if img.dim() != mask.shape() {
                return Err(QuantError::InvalidMask(format!(
                    "image is {:?} but mask is {:?}",
                    img.dim(),
                    mask.shape()
                )));
            }
        }
        Ok(Self { mask, landmarks, image })
    }

    pub fn view(&self) -> View {
        self.mask.view()
    }

    pub fn phase(&self) -> Phase {
        self.mask.phase()
    }
}

/// The A4C/A2C x ED/ES frames of one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyQuad {
    id: String,
    // Canonical `VIEW_PHASES` order.
    entries: Vec<ViewEntry>,
}

impl StudyQuad {
    pub fn new(id: impl Into<String>, entries: Vec<ViewEntry>) -> Result<Self, QuantError> {
        let mut slots: [Option<ViewEntry>; 4] = Default::default();
        for e in entries {
            let idx = slot_index(e.view(), e.phase());
            if slots[idx].is_some() {
                return Err(QuantError::DuplicateView {
                    view: e.view(),
                    phase: e.phase(),
                });
            }
            slots[idx] = Some(e);
        }
        let mut ordered = Vec::with_capacity(4);
        for (slot, (view, phase)) in slots.into_iter().zip(VIEW_PHASES) {
            ordered.push(slot.ok_or(QuantError::MissingView { view, phase })?);
        }
        for view in View::ALL {
            let ed = ordered[slot_index(view, Phase::ED)].mask.spacing_mm();
            let es = ordered[slot_index(view, Phase::ES)].mask.spacing_mm();
            if ed != es {
                return Err(QuantError::InconsistentSpacing { view, ed, es });
            }
        }
        Ok(Self {
            id: id.into(),
            entries: ordered,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn get(&self, view: View, phase: Phase) -> &ViewEntry {
        &self.entries[slot_index(view, phase)]
    }

    /// Frames in canonical (A4C ED, A4C ES, A2C ED, A2C ES) order.
    pub fn entries(&self) -> &[ViewEntry] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<ViewEntry> {
        self.entries
    }
}

fn slot_index(view: View, phase: Phase) -> usize {
    VIEW_PHASES
        .iter()
        .position(|&vp| vp == (view, phase))
        .expect("every pair is listed")
}

/// Clinical LV outputs: lengths in mm, volumes in mL, EF in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct LVIndicators {
    pub EDL: f64,
    pub ESL: f64,
    pub EDV: f64,
    pub ESV: f64,
    pub EF: f64,
}

impl LVIndicators {
    /// Assembles indicators from lengths and volumes, deriving EF.
    pub fn from_volumes(edl: f64, esl: f64, edv: f64, esv: f64) -> Result<Self, QuantError> {
        Ok(Self {
            EDL: edl,
            ESL: esl,
            EDV: edv,
            ESV: esv,
            EF: ejection_fraction(edv, esv)?,
        })
    }

    /// `[EDL, ESL, EDV, ESV, EF]`.
    pub fn to_array(&self) -> [f64; 5] {
        [self.EDL, self.ESL, self.EDV, self.ESV, self.EF]
    }

    pub const NAMES: [&'static str; 5] = ["EDL", "ESL", "EDV", "ESV", "EF"];
}

/// Disk diameters ordered from base to apex.
#[derive(Debug, Clone, PartialEq)]
pub struct DiskProfile {
    pub diameters_mm: Vec<f64>,
    pub axis_length_mm: f64,
}

impl DiskProfile {
    pub fn n_disks(&self) -> usize {
        self.diameters_mm.len()
    }
}

/// Long axis from the mitral midpoint toward the apex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongAxis {
    pub origin: Point,
    pub direction: Point,
    pub length_px: f64,
    pub length_mm: f64,
}

impl LongAxis {
    /// Unit normal used for chord sampling.
    pub fn normal(&self) -> Point {
        Point::new(-self.direction.y, self.direction.x)
    }
}

pub fn mitral_midpoint(lm: &Landmarks) -> Point {
    (lm.left() + lm.right()) * 0.5
}

pub fn long_axis(lm: &Landmarks, spacing_mm: f64) -> Result<LongAxis, QuantError> {
    let origin = mitral_midpoint(lm);
    let d = lm.apex() - origin;
    let length_px = d.norm();
    if length_px < 1.0 {
        return Err(QuantError::DegenerateAxis { length_px });
    }
    Ok(LongAxis {
        origin,
        direction: d * (1.0 / length_px),
        length_px,
        length_mm: length_px * spacing_mm,
    })
}

/// Chord diameters at the midpoints of `n_disks` equal slices of the long axis.
///
/// Each chord is the connected run of cavity containing the axis point along
/// the perpendicular, with endpoints at the 0.5 crossing of the bilinearly
/// interpolated mask. A slice whose axis point is outside the cavity has
/// diameter zero.
pub fn diameter_profile(mask: &ViewMask, lm: &Landmarks, n_disks: usize) -> Result<DiskProfile, QuantError> {
    if n_disks == 0 {
        return Err(QuantError::ZeroDisks);
    }
    lm.check_in_grid(mask.shape())?;
    let axis = long_axis(lm, mask.spacing_mm())?;
    let normal = axis.normal();
    let diameters_mm = (0..n_disks)
        .map(|i| {
            let t = (i as f64 + 0.5) / n_disks as f64;
            let center = axis.origin + axis.direction * (t * axis.length_px);
            chord_length_px(mask, center, normal) * mask.spacing_mm()
        })
        .collect();
    Ok(DiskProfile {
        diameters_mm,
        axis_length_mm: axis.length_mm,
    })
}

fn chord_length_px(mask: &ViewMask, center: Point, normal: Point) -> f64 {
    let v0 = mask.sample(center);
    if v0 < 0.5 {
        return 0.0;
    }
    half_chord(mask, center, normal, v0) + half_chord(mask, center, normal * -1.0, v0)
}

/// Distance from `center` to the first 0.5 crossing along `dir`.
fn half_chord(mask: &ViewMask, center: Point, dir: Point, v0: f64) -> f64 {
    let (h, w) = mask.shape();
    let limit = (h + w) as f64;
    let mut prev_s = 0.0;
    let mut prev_v = v0;
    let mut s = CHORD_STEP;
    while s <= limit {
        let v = mask.sample(center + dir * s);
        if v < 0.5 {
            return prev_s + (prev_v - 0.5) / (prev_v - v) * (s - prev_s);
        }
        prev_s = s;
        prev_v = v;
        s += CHORD_STEP;
    }
    prev_s
}

/// Biplane disk summation in mL.
pub fn simpson_biplane(a4c: &DiskProfile, a2c: &DiskProfile) -> Result<f64, QuantError> {
    if a4c.n_disks() != a2c.n_disks() {
        return Err(QuantError::DiskCountMismatch {
            a4c: a4c.n_disks(),
            a2c: a2c.n_disks(),
        });
    }
    let n = a4c.n_disks();
    if n == 0 {
        return Err(QuantError::ZeroDisks);
    }
    let length = a4c.axis_length_mm.max(a2c.axis_length_mm);
    let sum: f64 = a4c
        .diameters_mm
        .iter()
        .zip(&a2c.diameters_mm)
        .map(|(a, b)| a * b)
        .sum();
    let mm3 = std::f64::consts::FRAC_PI_4 * (length / n as f64) * sum;
    Ok(mm3 / 1000.0)
}

pub fn ejection_fraction(edv: f64, esv: f64) -> Result<f64, QuantError> {
    if !(edv > 0.0) {
        return Err(QuantError::NonPositiveEdv(edv));
    }
    if !(esv >= 0.0) {
        return Err(QuantError::NegativeEsv(esv));
    }
    Ok(100.0 * (edv - esv) / edv)
}

/// Volume and reported length for one phase.
pub fn measure_phase(study: &StudyQuad, phase: Phase, n_disks: usize) -> Result<(f64, f64), QuantError> {
    let profile = |view: View| {
        let e = study.get(view, phase);
        diameter_profile(&e.mask, &e.landmarks, n_disks).map_err(|err| err.in_frame(view, phase))
    };
    let a4c = profile(View::A4C)?;
    let a2c = profile(View::A2C)?;
    let volume = simpson_biplane(&a4c, &a2c)?;
    Ok((a4c.axis_length_mm.max(a2c.axis_length_mm), volume))
}

pub fn measure_study(study: &StudyQuad, n_disks: usize) -> Result<LVIndicators, QuantError> {
    let (edl, edv) = measure_phase(study, Phase::ED, n_disks)?;
    let (esl, esv) = measure_phase(study, Phase::ES, n_disks)?;
    LVIndicators::from_volumes(edl, esl, edv, esv)
}

#[cfg(test)]
mod tests {
    use super::*;
    fn lm(a: (f64, f64), l: (f64, f64), r: (f64, f64)) -> Landmarks {
        Landmarks::new(Point::new(a.0, a.1), Point::new(l.0, l.1), Point::new(r.0, r.1)).unwrap()
    }

    fn rect_mask(h: usize, w: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Array2<u8> {
        Array2::from_shape_fn((h, w), |(r, c)| (rows.contains(&r) && cols.contains(&c)) as u8)
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(mitral_midpoint(&lm((0.0, 0.0), (10.0, 20.0), (30.0, 20.0))), Point::new(20.0, 20.0));
        assert_eq!(mitral_midpoint(&lm((0.0, 0.0), (5.0, 7.0), (9.0, 3.0))), Point::new(7.0, 5.0));
    }

    #[test]
    fn long_axis_examples() {
        let ax = long_axis(&lm((20.0, 0.0), (10.0, 100.0), (30.0, 100.0)), 0.5).unwrap();
        assert_eq!(ax.direction, Point::new(0.0, -1.0));
        assert_close!(ax.length_mm, 50.0, 1e-12);

        let ax = long_axis(&lm((50.0, 10.0), (30.0, 90.0), (70.0, 90.0)), 1.0).unwrap();
        assert_close!(ax.length_mm, 80.0, 1e-12);
    }

    #[test]
    fn degenerate_axis() {
        let l = lm((20.3, 100.2), (10.0, 100.0), (30.0, 100.0));
        assert!(matches!(long_axis(&l, 1.0), Err(QuantError::DegenerateAxis { .. })));
    }

    #[test]
    fn constant_width_rectangle() {
        // Columns 30..70 are set: 40 pixels wide.
        let grid = rect_mask(128, 128, 10..110, 30..70);
        let mask = ViewMask::new(grid, View::A4C, Phase::ED, 1.0).unwrap();
        let l = lm((49.5, 12.0), (30.0, 108.0), (69.0, 108.0));
        for n in [1, 7, 20] {
            let p = diameter_profile(&mask, &l, n).unwrap();
            assert_eq!(p.n_disks(), n);
            for d in p.diameters_mm {
                assert_close!(d, 40.0, 1e-6);
            }
        }
    }

    #[test]
    fn empty_apex_levels_give_zero() {
        // Cavity only in the lower half; the axis continues to row 5.
        let grid = rect_mask(128, 128, 64..120, 30..70);
        let mask = ViewMask::new(grid, View::A2C, Phase::ES, 1.0).unwrap();
        let l = lm((50.0, 5.0), (30.0, 118.0), (69.0, 118.0));
        let p = diameter_profile(&mask, &l, 10).unwrap();
        assert!(p.diameters_mm[0] > 30.0);
        assert_eq!(*p.diameters_mm.last().unwrap(), 0.0);
        assert_eq!(p.diameters_mm[9], 0.0);
    }

    #[test]
    fn chord_is_the_run_through_the_axis() {
        // Two bars separated by a gap; only the one under the axis counts.
        let mut grid = rect_mask(64, 64, 0..64, 20..40);
        for r in 0..64 {
            for c in 45..60 {
                grid[[r, c]] = 1;
            }
        }
        let mask = ViewMask::new(grid, View::A4C, Phase::ED, 1.0).unwrap();
        let l = lm((29.5, 2.0), (20.0, 60.0), (39.0, 60.0));
        let p = diameter_profile(&mask, &l, 4).unwrap();
        for d in p.diameters_mm {
            assert_close!(d, 20.0, 1e-6);
        }
    }

    #[test]
    fn simpson_examples() {
        let zero = DiskProfile {
            diameters_mm: vec![0.0; 20],
            axis_length_mm: 80.0,
        };
        assert_eq!(simpson_biplane(&zero, &zero).unwrap(), 0.0);
        let short = DiskProfile {
            diameters_mm: vec![1.0; 10],
            axis_length_mm: 80.0,
        };
        assert_eq!(
            simpson_biplane(&zero, &short),
            Err(QuantError::DiskCountMismatch { a4c: 20, a2c: 10 })
        );
        // Cylinder: pi/4 * 10^2 * 50 mm^3.
        let cyl = DiskProfile {
            diameters_mm: vec![10.0; 5],
            axis_length_mm: 50.0,
        };
        let v = simpson_biplane(&cyl, &cyl).unwrap();
        assert_close!(v, std::f64::consts::FRAC_PI_4 * 100.0 * 50.0 / 1000.0, 1e-12);
    }

    #[test]
    fn simpson_uses_longer_axis() {
        let a = DiskProfile {
            diameters_mm: vec![10.0; 4],
            axis_length_mm: 50.0,
        };
        let b = DiskProfile {
            diameters_mm: vec![10.0; 4],
            axis_length_mm: 60.0,
        };
        assert_eq!(simpson_biplane(&a, &b).unwrap(), simpson_biplane(&b, &b).unwrap());
    }

    #[test]
    fn ejection_fraction_examples() {
        assert_close!(ejection_fraction(120.0, 48.0).unwrap(), 60.0, 1e-12);
        assert_eq!(ejection_fraction(87.5, 87.5).unwrap(), 0.0);
        assert_eq!(ejection_fraction(100.0, 0.0).unwrap(), 100.0);
        assert_eq!(ejection_fraction(0.0, 0.0), Err(QuantError::NonPositiveEdv(0.0)));
        assert_eq!(ejection_fraction(-3.0, 1.0), Err(QuantError::NonPositiveEdv(-3.0)));
    }

    fn rect_entry(view: View, phase: Phase, spacing: f64) -> ViewEntry {
        let mask = ViewMask::new(rect_mask(64, 64, 8..56, 20..44), view, phase, spacing).unwrap();
        ViewEntry::new(mask, lm((31.5, 10.0), (20.0, 54.0), (43.0, 54.0)), None).unwrap()
    }

    #[test]
    fn study_requires_all_frames() {
        let entries = vec![
            rect_entry(View::A4C, Phase::ED, 1.0),
            rect_entry(View::A4C, Phase::ES, 1.0),
            rect_entry(View::A2C, Phase::ED, 1.0),
        ];
        let err = StudyQuad::new("s", entries).unwrap_err();
        assert_eq!(
            err,
            QuantError::MissingView {
                view: View::A2C,
                phase: Phase::ES
            }
        );
        assert!(err.to_string().contains("A2C/ES"));
    }

    #[test]
    fn study_rejects_duplicates_and_spacing_mismatch() {
        let dup = vec![
            rect_entry(View::A4C, Phase::ED, 1.0),
            rect_entry(View::A4C, Phase::ED, 1.0),
        ];
        assert!(matches!(StudyQuad::new("s", dup), Err(QuantError::DuplicateView { .. })));
        let mixed = vec![
            rect_entry(View::A4C, Phase::ED, 1.0),
            rect_entry(View::A4C, Phase::ES, 0.9),
            rect_entry(View::A2C, Phase::ED, 1.0),
            rect_entry(View::A2C, Phase::ES, 1.0),
        ];
        assert!(matches!(
            StudyQuad::new("s", mixed),
            Err(QuantError::InconsistentSpacing { view: View::A4C, .. })
        ));
    }

    #[test]
    fn identical_phases_give_zero_ef() {
        let entries = crate::geometry::VIEW_PHASES
            .iter()
            .map(|&(v, p)| rect_entry(v, p, 0.7))
            .collect();
        let study = StudyQuad::new("s", entries).unwrap();
        let ind = measure_study(&study, DEFAULT_DISKS).unwrap();
        assert_eq!(ind.EF, 0.0);
        assert_eq!(ind.EDV, ind.ESV);
        assert_close!(ind.EDL, ind.ESL, 0.0);
    }

    #[test]
    fn sub_errors_name_the_frame() {
        let mut entries: Vec<ViewEntry> = crate::geometry::VIEW_PHASES
            .iter()
            .map(|&(v, p)| rect_entry(v, p, 1.0))
            .collect();
        // Apex 0.5 px from the mitral midpoint.
        entries[3].landmarks = lm((31.5, 53.5), (20.0, 54.0), (43.0, 54.0));
        let study = StudyQuad::new("s", entries).unwrap();
        let err = measure_study(&study, 20).unwrap_err();
        assert!(matches!(
            err,
            QuantError::InFrame {
                view: View::A2C,
                phase: Phase::ES,
                ..
            }
        ));
    }

    #[test]
    fn mask_validation() {
        assert!(ViewMask::new(Array2::zeros((8, 64)), View::A4C, Phase::ED, 1.0).is_err());
        assert!(ViewMask::new(Array2::from_elem((16, 16), 2), View::A4C, Phase::ED, 1.0).is_err());
        assert!(ViewMask::new(Array2::zeros((16, 16)), View::A4C, Phase::ED, 0.0).is_err());
        assert!(ViewMask::new(Array2::zeros((16, 16)), View::A4C, Phase::ED, 0.3).is_ok());
    }
}
