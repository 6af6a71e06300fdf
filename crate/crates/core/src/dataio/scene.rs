use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::descriptors::{DescriptorFile, DescriptorRecord};
use super::mot::MotLine;
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

const MARGIN: f64 = 20.0;
const DETECTION_SCORE: f64 = 0.9;
const FALSE_POSITIVE_SCORE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionModel {
    /// Parallel rows, alternating direction.
    Linear,
    /// Pairs of targets moving in opposite directions that meet mid-sequence
    /// and swap vertical position.
    Crossing,
    /// Each target circles its own grid cell once over the sequence.
    Circular,
}

impl MotionModel {
    pub fn name(self) -> &'static str {
        match self {
            MotionModel::Linear => "linear",
            MotionModel::Crossing => "crossing",
            MotionModel::Circular => "circular",
        }
    }
}

impl fmt::Display for MotionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(MotionModel::Linear),
            "crossing" => Ok(MotionModel::Crossing),
            "circular" => Ok(MotionModel::Circular),
            _ => Err(Error::invalid(format!("unknown motion model {s:?} (linear, crossing, circular)"))),
        }
    }
}

/// Frames `start .. start + len` (1-based) in which `target` (0-based) has
/// no detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcclusionWindow {
    pub target: usize,
    pub start: u32,
    pub len: u32,
}

impl OcclusionWindow {
    pub fn contains(&self, target: usize, frame: u32) -> bool {
        target == self.target && frame >= self.start && frame < self.start + self.len
    }
}

impl FromStr for OcclusionWindow {
    type Err = Error;

    /// `target:start:len`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::invalid(format!("occlusion window {s:?} is not target:start:len"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            target: parts[0].parse().map_err(|_| bad())?,
            start: parts[1].parse().map_err(|_| bad())?,
            len: parts[2].parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub targets: usize,
    pub frames: u32,
    pub motion: MotionModel,
    pub occlusions: Vec<OcclusionWindow>,
    /// Standard deviation of the Gaussian pixel noise on detection boxes.
    pub noise_std: f64,
    /// Class-descriptor dimension; 0 writes no descriptor records.
    pub descriptor_dim: u32,
    /// Per-component Gaussian noise added to descriptors before
    /// re-normalization.
    pub descriptor_noise: f64,
    /// Probability per frame of one spurious detection.
    pub false_positive_rate: f64,
    pub width: f64,
    pub height: f64,
    pub box_width: f64,
    pub box_height: f64,
    /// Vertical offset swapped by each crossing pair.
    pub crossing_dy: f64,
    /// Seed of the xoshiro256++ generator.
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            targets: 10,
            frames: 100,
            motion: MotionModel::Crossing,
            occlusions: Vec::new(),
            noise_std: 0.0,
            descriptor_dim: 16,
            descriptor_noise: 0.0,
            false_positive_rate: 0.0,
            width: 1920.0,
            height: 1080.0,
            box_width: 40.0,
            box_height: 100.0,
            crossing_dy: 60.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub gt: Vec<MotLine>,
    pub detections: Vec<MotLine>,
    pub descriptors: DescriptorFile,
}

impl SceneSpec {
    fn validate(&self) -> Result<()> {
        if self.targets == 0 || self.frames == 0 {
            return Err(Error::invalid("scene needs at least one target and one frame"));
        }
        let positive = [self.width, self.height, self.box_width, self.box_height];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("image and box sizes must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.descriptor_noise >= 0.0 && self.crossing_dy >= 0.0) {
            return Err(Error::invalid("noise levels and crossing_dy must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.false_positive_rate) {
            return Err(Error::invalid("false_positive_rate must be in [0, 1]"));
        }
        for w in &self.occlusions {
            if w.target >= self.targets || w.start == 0 || w.start as u64 + w.len as u64 > self.frames as u64 + 1 {
                return Err(Error::InfeasibleScene(format!("occlusion window {w:?} is outside the scene")));
            }
        }
        Ok(())
    }

    /// Top-left corner of target `i` at 0-based frame `t`.
    fn position(&self, i: usize, t: u32) -> (f64, f64) {
        let n = self.targets;
        let s = if self.frames > 1 { t as f64 / (self.frames - 1) as f64 } else { 0.0 };
        let span = |lo: f64, hi: f64| if i.is_multiple_of(2) { lo + s * (hi - lo) } else { hi - s * (hi - lo) };
        let x_lo = MARGIN;
        let x_hi = self.width - MARGIN - self.box_width;
        match self.motion {
            MotionModel::Linear => {
                let free = self.height - 2.0 * MARGIN - self.box_height;
                let y = if n == 1 { free / 2.0 } else { i as f64 * free / (n - 1) as f64 };
                (span(x_lo, x_hi), MARGIN + y)
            }
            MotionModel::Crossing => {
                let pairs = n.div_ceil(2);
                let free = self.height - 2.0 * MARGIN - self.box_height - self.crossing_dy;
                let lane = if pairs == 1 { free / 2.0 } else { (i / 2) as f64 * free / (pairs - 1) as f64 };
                let top = MARGIN + lane;
                let y = if i.is_multiple_of(2) {
                    top + s * self.crossing_dy
                } else {
                    top + self.crossing_dy - s * self.crossing_dy
                };
                (span(x_lo, x_hi), y)
            }
            MotionModel::Circular => {
                let cols = (n as f64).sqrt().ceil() as usize;
                let rows = n.div_ceil(cols);
                let (cw, ch) = (self.width / cols as f64, self.height / rows as f64);
                let (cx, cy) = (((i % cols) as f64 + 0.5) * cw, ((i / cols) as f64 + 0.5) * ch);
                let radius = circle_radius(cw, ch, self.box_width, self.box_height);
                let angle = 0.7 * i as f64 + TAU * s;
                (
                    cx + radius * angle.cos() - self.box_width / 2.0,
                    cy + radius * angle.sin() - self.box_height / 2.0,
                )
            }
        }
    }

    fn gt_box(&self, i: usize, t: u32) -> BBox {
        let (x, y) = self.position(i, t);
        BBox { x, y, w: self.box_width, h: self.box_height }
    }
}

fn circle_radius(cell_w: f64, cell_h: f64, box_w: f64, box_h: f64) -> f64 {
    ((cell_w - box_w).min(cell_h - box_h) / 2.0 - MARGIN).max(0.0)
}

fn random_unit(rng: &mut Xoshiro256PlusPlus, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rand_distr::StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn to_unit_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

/// Generates ground truth, noisy detections and per-detection class
/// descriptors. Fully determined by `spec`, including its seed.
///
/// Identity descriptors are one-hot when `descriptor_dim >= targets` and
/// random unit vectors otherwise. Detections within a frame are shuffled;
/// descriptor records are keyed by the detection's position in its frame.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    if spec.motion == MotionModel::Circular {
        let cols = (spec.targets as f64).sqrt().ceil() as usize;
        let rows = spec.targets.div_ceil(cols);
        let r = circle_radius(spec.width / cols as f64, spec.height / rows as f64, spec.box_width, spec.box_height);
        if r <= 0.0 {
            return Err(Error::InfeasibleScene("targets do not fit on the circular grid".into()));
        }
    }
    for i in 0..spec.targets {
        for j in i + 1..spec.targets {
            if iou(&spec.gt_box(i, 0), &spec.gt_box(j, 0)) > 0.0 {
                return Err(Error::InfeasibleScene(format!("targets {i} and {j} overlap at spawn")));
            }
        }
    }

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let pixel_noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let feature_noise = Normal::new(0.0, spec.descriptor_noise).map_err(|e| Error::invalid(e.to_string()))?;
    let dim = spec.descriptor_dim as usize;
    let identities: Vec<Vec<f64>> = (0..spec.targets)
        .map(|i| {
            if dim >= spec.targets {
                (0..dim).map(|k| if k == i { 1.0 } else { 0.0 }).collect()
            } else if dim > 0 {
                random_unit(&mut rng, dim)
            } else {
                Vec::new()
            }
        })
        .collect();

    let mut gt = Vec::new();
    let mut detections = Vec::new();
    let mut descriptors = DescriptorFile::new(spec.descriptor_dim, 0, 0);

    for t in 0..spec.frames {
        let frame = t + 1;
        let mut frame_dets: Vec<(BBox, f64, Vec<f64>)> = Vec::new();
        for (i, identity) in identities.iter().enumerate() {
            let b = spec.gt_box(i, t);
            gt.push(MotLine::new(frame, i as i64 + 1, &b, 1.0));
            if spec.occlusions.iter().any(|w| w.contains(i, frame)) {
                continue;
            }
            let mut noisy = [b.x, b.y, b.w, b.h];
            for v in &mut noisy {
                *v += pixel_noise.sample(&mut rng);
            }
            let det = BBox { x: noisy[0], y: noisy[1], w: noisy[2].max(1.0), h: noisy[3].max(1.0) };
            let mut feature = identity.clone();
            for v in &mut feature {
                *v += feature_noise.sample(&mut rng);
            }
            frame_dets.push((det, DETECTION_SCORE, feature));
        }
        if spec.false_positive_rate > 0.0 && rng.random_bool(spec.false_positive_rate) {
            let x = rng.random_range(0.0..spec.width - spec.box_width);
            let y = rng.random_range(0.0..spec.height - spec.box_height);
            let feature = if dim > 0 { random_unit(&mut rng, dim) } else { Vec::new() };
            frame_dets.push((BBox { x, y, w: spec.box_width, h: spec.box_height }, FALSE_POSITIVE_SCORE, feature));
        }
        frame_dets.shuffle(&mut rng);
        for (k, (b, score, feature)) in frame_dets.into_iter().enumerate() {
            detections.push(MotLine::new(frame, -1, &b, score));
            if dim > 0 {
                descriptors.records.push(DescriptorRecord {
                    frame,
                    det_index: k as u32,
                    cls: to_unit_f32(&feature),
                    reg: Vec::new(),
                    head: Vec::new(),
                });
            }
        }
    }

    Ok(Scene { gt, detections, descriptors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::format_mot;

    fn one_target(motion: MotionModel) -> SceneSpec {
        SceneSpec { targets: 1, frames: 30, motion, ..Default::default() }
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        for motion in [MotionModel::Linear, MotionModel::Crossing, MotionModel::Circular] {
            let scene = generate_scene(&one_target(motion)).unwrap();
            assert_eq!(scene.gt.len(), 30);
            assert_eq!(scene.detections.len(), 30);
            for (g, d) in scene.gt.iter().zip(&scene.detections) {
                assert_eq!(g.bbox().unwrap(), d.bbox().unwrap());
                assert_eq!((d.id, g.id), (-1, 1));
            }
        }
    }

    #[test]
    fn occlusion_removes_exactly_its_frames() {
        let spec = SceneSpec {
            occlusions: vec![OcclusionWindow { target: 3, start: 10, len: 7 }],
            ..Default::default()
        };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.detections.len(), 10 * 100 - 7);
        // Target 3 is the only one with a one-hot descriptor on axis 3.
        let missing: Vec<u32> = (1..=100)
            .filter(|&f| {
                !scene.descriptors.records.iter().any(|r| r.frame == f && r.cls[3] == 1.0)
            })
            .collect();
        assert_eq!(missing, (10..17).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SceneSpec { noise_std: 1.0, descriptor_noise: 0.05, false_positive_rate: 0.2, ..Default::default() };
        let a = generate_scene(&spec).unwrap();
        let b = generate_scene(&spec).unwrap();
        assert_eq!(format_mot(&a.detections), format_mot(&b.detections));
        assert_eq!(a.descriptors.to_bytes().unwrap(), b.descriptors.to_bytes().unwrap());
        let c = generate_scene(&SceneSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(format_mot(&a.detections), format_mot(&c.detections));
    }

    #[test]
    fn crossing_pairs_meet_and_swap() {
        let spec = SceneSpec { frames: 101, ..Default::default() };
        let (a0, b0) = (spec.gt_box(0, 0), spec.gt_box(1, 0));
        let (am, bm) = (spec.gt_box(0, 50), spec.gt_box(1, 50));
        let (a1, b1) = (spec.gt_box(0, 100), spec.gt_box(1, 100));
        assert!(a0.x < b0.x && a1.x > b1.x);
        assert!((am.x - bm.x).abs() < 1e-9 && (am.y - bm.y).abs() < 1e-9);
        assert!((a0.y - b1.y).abs() < 1e-9 && (a1.y - b0.y).abs() < 1e-9);
        assert!((b0.y - a0.y - 60.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_specs_rejected() {
        let crowded = SceneSpec { targets: 40, motion: MotionModel::Linear, ..Default::default() };
        assert!(matches!(generate_scene(&crowded), Err(Error::InfeasibleScene(_))));
        let window = SceneSpec { occlusions: vec![OcclusionWindow { target: 0, start: 95, len: 10 }], ..Default::default() };
        assert!(matches!(generate_scene(&window), Err(Error::InfeasibleScene(_))));
        let no_target = SceneSpec { occlusions: vec![OcclusionWindow { target: 10, start: 1, len: 1 }], ..Default::default() };
        assert!(generate_scene(&no_target).is_err());
        assert!(generate_scene(&SceneSpec { targets: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn descriptors_are_unit_and_keyed() {
        let spec = SceneSpec { descriptor_dim: 4, descriptor_noise: 0.1, false_positive_rate: 0.5, ..Default::default() };
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.descriptors.records.len(), scene.detections.len());
        assert!(scene.descriptors.index().is_ok());
        let bytes = scene.descriptors.to_bytes().unwrap();
        assert_eq!(DescriptorFile::read_from(&mut bytes.as_slice()).unwrap(), scene.descriptors);
    }

    #[test]
    fn parses_occlusion_windows() {
        assert_eq!("2:10:5".parse::<OcclusionWindow>().unwrap(), OcclusionWindow { target: 2, start: 10, len: 5 });
        assert!("2:10".parse::<OcclusionWindow>().is_err());
        assert_eq!("circular".parse::<MotionModel>().unwrap(), MotionModel::Circular);
    }
}
