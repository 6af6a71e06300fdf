//! Offline trajectory completion. Boxes are lifted to 3D with a ground-plane
//! pseudo-depth, gaps are filled by one of four interpolators, and the result
//! is projected back to image boxes.

mod se3;

pub use se3::{hat, interpolate_se3, se3_exp, se3_log, so3_log, Pose3, Twist};

use std::fmt;
use std::str::FromStr;

use nalgebra::{SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoDepthConfig {
    /// Minimum depth `d`.
    pub d_min: f64,
    /// Offset keeping `1 / (y + eta)` finite.
    pub depth_eta: f64,
    /// Divide the bottom edge by `image_height` before applying the formula.
    pub y_normalized: bool,
    pub image_height: f64,
}

impl Default for PseudoDepthConfig {
    fn default() -> Self {
        Self {
            d_min: 1.0,
            depth_eta: 0.05,
            y_normalized: true,
            image_height: 1080.0,
        }
    }
}

impl PseudoDepthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_eta > 0.0) {
            return Err(Error::invalid("depth_eta must be positive"));
        }
        if !(self.d_min >= 0.0) {
            return Err(Error::invalid("d_min must be non-negative"));
        }
        if self.y_normalized && !(self.image_height > 0.0) {
            return Err(Error::invalid("image_height must be positive"));
        }
        Ok(())
    }
}

/// `z = d_min + 1 / (y + depth_eta)`. Negative `y` is clamped to 0.
pub fn pseudo_depth(y_bottom: f64, cfg: &PseudoDepthConfig) -> f64 {
    cfg.d_min + 1.0 / (y_bottom.max(0.0) + cfg.depth_eta)
}

/// Lifts a box to a pose with translation `(u, v, z)` and identity rotation.
pub fn lift(bbox: &BBox, cfg: &PseudoDepthConfig) -> Pose3 {
    lift_with_yaw(bbox, 0.0, cfg)
}

/// Like [`lift`] but with a rotation of `yaw` about the depth axis.
pub fn lift_with_yaw(bbox: &BBox, yaw: f64, cfg: &PseudoDepthConfig) -> Pose3 {
    let (u, v) = bbox.center();
    let y = if cfg.y_normalized {
        bbox.bottom() / cfg.image_height
    } else {
        bbox.bottom()
    };
    Pose3::from_yaw(yaw, Vector3::new(u, v, pseudo_depth(y, cfg)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionMethod {
    Linear2d,
    Linear3d,
    Se3Linear,
    Se3Kalman,
}

impl CompletionMethod {
    pub const ALL: [CompletionMethod; 4] = [
        CompletionMethod::Linear2d,
        CompletionMethod::Linear3d,
        CompletionMethod::Se3Linear,
        CompletionMethod::Se3Kalman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CompletionMethod::Linear2d => "linear2d",
            CompletionMethod::Linear3d => "linear3d",
            CompletionMethod::Se3Linear => "se3_linear",
            CompletionMethod::Se3Kalman => "se3_kalman",
        }
    }
}

impl fmt::Display for CompletionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CompletionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CompletionMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown completion method `{s}`")))
    }
}

/// How lifted poses get their rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationMode {
    #[default]
    Identity,
    /// Yaw about the depth axis from the local image-plane velocity.
    Heading,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistFilterConfig {
    pub process_std: f64,
    pub measurement_std: f64,
    /// Observed frames used on each side of a gap.
    pub context: usize,
}

impl Default for TwistFilterConfig {
    fn default() -> Self {
        Self {
            process_std: 0.1,
            measurement_std: 0.01,
            context: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompletionConfig {
    pub depth: PseudoDepthConfig,
    pub rotation: RotationMode,
    pub filter: TwistFilterConfig,
    /// Full frame range of the sequence; frames outside the observed range
    /// but inside the span are reported as unfillable.
    pub span: Option<(u32, u32)>,
    /// Gaps longer than this are left open.
    pub max_gap: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnfilledReason {
    MissingAnchor,
    TooLong,
    RotationBranch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnfilledGap {
    pub frames: Vec<u32>,
    pub reason: UnfilledReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub boxes: Vec<(u32, BBox)>,
    pub filled: Vec<u32>,
    pub unfilled: Vec<UnfilledGap>,
}

/// Fills every interior gap of a trajectory. Observed frames are returned
/// unchanged; the output is sorted by frame.
pub fn complete(traj: &[(u32, BBox)], method: CompletionMethod, cfg: &CompletionConfig) -> Result<Completion> {
    cfg.depth.validate()?;
    let mut obs: Vec<(u32, BBox)> = traj.to_vec();
    obs.sort_by_key(|o| o.0);
    if obs.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("trajectory has duplicate frames"));
    }

    let mut boxes = Vec::with_capacity(obs.len());
    let mut filled = Vec::new();
    let mut unfilled = Vec::new();

    if let (Some((lo, _)), Some(&(first, _))) = (cfg.span, obs.first()) {
        if lo < first {
            unfilled.push(UnfilledGap {
                frames: (lo..first).collect(),
                reason: UnfilledReason::MissingAnchor,
            });
        }
    }

    for k in 0..obs.len() {
        boxes.push(obs[k]);
        let Some(&(next_frame, _)) = obs.get(k + 1) else { break };
        let frame = obs[k].0;
        if next_frame == frame + 1 {
            continue;
        }
        let missing: Vec<u32> = (frame + 1..next_frame).collect();
        if cfg.max_gap.is_some_and(|m| missing.len() as u32 > m) {
            unfilled.push(UnfilledGap {
                frames: missing,
                reason: UnfilledReason::TooLong,
            });
            continue;
        }
        match fill_gap(&obs, k, method, cfg) {
            Ok(fill) => {
                filled.extend(fill.iter().map(|f| f.0));
                boxes.extend(fill);
            }
            Err(Error::BranchAmbiguity { .. }) => unfilled.push(UnfilledGap {
                frames: missing,
                reason: UnfilledReason::RotationBranch,
            }),
            Err(e) => return Err(e),
        }
    }

    if let (Some((_, hi)), Some(&(last, _))) = (cfg.span, obs.last()) {
        if hi > last {
            unfilled.push(UnfilledGap {
                frames: (last + 1..=hi).collect(),
                reason: UnfilledReason::MissingAnchor,
            });
        }
    }

    Ok(Completion {
        boxes,
        filled,
        unfilled,
    })
}

/// Fills the gap between `obs[k]` and `obs[k + 1]`.
fn fill_gap(obs: &[(u32, BBox)], k: usize, method: CompletionMethod, cfg: &CompletionConfig) -> Result<Vec<(u32, BBox)>> {
    let (f0, b0) = obs[k];
    let (f1, b1) = obs[k + 1];
    let span = (f1 - f0) as f64;
    let alpha = |f: u32| (f - f0) as f64 / span;
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let size = |t: f64| (lerp(b0.w, b1.w, t), lerp(b0.h, b1.h, t));

    let centers: Vec<(f64, f64)> = match method {
        CompletionMethod::Linear2d => {
            let (u0, v0) = b0.center();
            let (u1, v1) = b1.center();
            (f0 + 1..f1).map(|f| (lerp(u0, u1, alpha(f)), lerp(v0, v1, alpha(f)))).collect()
        }
        CompletionMethod::Linear3d => {
            let t0 = lift(&b0, &cfg.depth).translation;
            let t1 = lift(&b1, &cfg.depth).translation;
            (f0 + 1..f1)
                .map(|f| {
                    let t = t0.lerp(&t1, alpha(f));
                    (t.x, t.y)
                })
                .collect()
        }
        CompletionMethod::Se3Linear => {
            let p0 = lift_anchor(obs, k, cfg);
            let p1 = lift_anchor(obs, k + 1, cfg);
            let delta = se3_log(&(p0.inverse() * p1))?;
            (f0 + 1..f1)
                .map(|f| {
                    let p = p0 * se3_exp(&(delta * alpha(f)));
                    (p.translation.x, p.translation.y)
                })
                .collect()
        }
        CompletionMethod::Se3Kalman => smooth_gap(obs, k, cfg)?,
    };

    (f0 + 1..f1)
        .zip(centers)
        .map(|(f, (u, v))| {
            let (w, h) = size(alpha(f));
            Ok((f, BBox::from_center(u, v, w, h)?))
        })
        .collect()
}

/// Image-plane heading at observation `k`. Uses frame-adjacent neighbours
/// when they exist and falls back to whatever neighbour is available.
fn heading(obs: &[(u32, BBox)], k: usize) -> f64 {
    let center = |i: usize| obs[i].1.center();
    let frame = obs[k].0;
    let prev = k.checked_sub(1);
    let next = (k + 1 < obs.len()).then_some(k + 1);
    let adj_prev = prev.filter(|&p| obs[p].0 + 1 == frame);
    let adj_next = next.filter(|&n| obs[n].0 == frame + 1);
    let (a, b) = match (adj_prev, adj_next, prev, next) {
        (Some(p), Some(n), _, _) => (p, n),
        (Some(p), None, _, _) => (p, k),
        (None, Some(n), _, _) => (k, n),
        (None, None, Some(p), _) => (p, k),
        (None, None, None, Some(n)) => (k, n),
        (None, None, None, None) => return 0.0,
    };
    let (ua, va) = center(a);
    let (ub, vb) = center(b);
    let dt = (obs[b].0 - obs[a].0) as f64;
    ((vb - va) / dt).atan2((ub - ua) / dt)
}

fn lift_anchor(obs: &[(u32, BBox)], k: usize, cfg: &CompletionConfig) -> Pose3 {
    match cfg.rotation {
        RotationMode::Identity => lift(&obs[k].1, &cfg.depth),
        RotationMode::Heading => lift_with_yaw(&obs[k].1, heading(obs, k), &cfg.depth),
    }
}

type FilterState = SVector<f64, 12>;
type FilterCov = SMatrix<f64, 12, 12>;

/// Constant-velocity Kalman filter plus Rauch-Tung-Striebel smoother over
/// the twist coordinates of the poses around the gap, expressed relative to
/// the anchor before the gap. Returns smoothed centers for the gap frames.
fn smooth_gap(obs: &[(u32, BBox)], k: usize, cfg: &CompletionConfig) -> Result<Vec<(f64, f64)>> {
    let fc = &cfg.filter;
    let lo = k.saturating_sub(fc.context.saturating_sub(1));
    let hi = (k + fc.context).min(obs.len() - 1);
    let reference = lift_anchor(obs, k, cfg);
    let ref_inv = reference.inverse();

    let mut measurements = Vec::with_capacity(hi - lo + 1);
    for i in lo..=hi {
        let twist = se3_log(&(ref_inv * lift_anchor(obs, i, cfg)))?;
        measurements.push((obs[i].0, twist));
    }

    let first = measurements[0].0;
    let last = measurements[measurements.len() - 1].0;
    let steps = (last - first + 1) as usize;

    let mut f = FilterCov::identity();
    for i in 0..6 {
        f[(i, i + 6)] = 1.0;
    }
    // Piecewise-constant white acceleration.
    let q_var = fc.process_std * fc.process_std;
    let mut q = FilterCov::zeros();
    for i in 0..6 {
        q[(i, i)] = 0.25 * q_var;
        q[(i, i + 6)] = 0.5 * q_var;
        q[(i + 6, i)] = 0.5 * q_var;
        q[(i + 6, i + 6)] = q_var;
    }
    let r_var = fc.measurement_std * fc.measurement_std;
    let mut h = SMatrix::<f64, 6, 12>::zeros();
    for i in 0..6 {
        h[(i, i)] = 1.0;
    }
    let r = SMatrix::<f64, 6, 6>::identity() * r_var;

    let mut x = FilterState::zeros();
    x.fixed_rows_mut::<6>(0).copy_from(&measurements[0].1);
    let mut p = FilterCov::zeros();
    for i in 0..6 {
        p[(i, i)] = r_var;
        p[(i + 6, i + 6)] = 1e4;
    }

    let mut filtered = Vec::with_capacity(steps);
    let mut predicted = Vec::with_capacity(steps);
    let mut next_meas = measurements.iter().peekable();
    for step in 0..steps {
        let frame = first + step as u32;
        let (xp, pp) = if step == 0 {
            (x, p)
        } else {
            (f * x, f * p * f.transpose() + q)
        };
        predicted.push((xp, pp));
        let (mut xu, mut pu) = (xp, pp);
        if let Some((_, z)) = next_meas.next_if(|m| m.0 == frame) {
            let s = h * pp * h.transpose() + r;
            let s_inv = s.try_inverse().ok_or(Error::SingularInnovation)?;
            let gain = pp * h.transpose() * s_inv;
            xu = xp + gain * (z - h * xp);
            pu = (FilterCov::identity() - gain * h) * pp;
            pu = (pu + pu.transpose()) * 0.5;
        }
        filtered.push((xu, pu));
        x = xu;
        p = pu;
    }

    let mut smoothed = filtered.clone();
    for step in (0..steps - 1).rev() {
        let (xf, pf) = &filtered[step];
        let (xp, pp) = &predicted[step + 1];
        let pp_inv = pp.try_inverse().ok_or(Error::SingularInnovation)?;
        let c = pf * f.transpose() * pp_inv;
        let (xs_next, ps_next) = smoothed[step + 1];
        let xs = xf + c * (xs_next - xp);
        let ps = pf + c * (ps_next - pp) * c.transpose();
        smoothed[step] = (xs, ps);
    }

    let (f0, _) = obs[k];
    let (f1, _) = obs[k + 1];
    Ok((f0 + 1..f1)
        .map(|frame| {
            let xs = smoothed[(frame - first) as usize].0;
            let twist = Twist::from_iterator(xs.fixed_rows::<6>(0).iter().copied());
            let pose = reference * se3_exp(&twist);
            (pose.translation.x, pose.translation.y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn with_gap(full: &[(u32, BBox)], gap: std::ops::RangeInclusive<u32>) -> Vec<(u32, BBox)> {
        full.iter().copied().filter(|(f, _)| !gap.contains(f)).collect()
    }

    fn max_err(a: &[(u32, BBox)], b: &[(u32, BBox)]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .map(|((fa, x), (fb, y))| {
                assert_eq!(fa, fb);
                [x.x - y.x, x.y - y.y, x.w - y.w, x.h - y.h].iter().fold(0.0f64, |m, d| m.max(d.abs()))
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn pseudo_depth_examples() {
        let cfg = PseudoDepthConfig { d_min: 1.0, depth_eta: 1.0, ..Default::default() };
        assert_eq!(pseudo_depth(1.0, &cfg), 1.5);
        let cfg = PseudoDepthConfig { d_min: 0.0, depth_eta: 0.05, ..Default::default() };
        assert!((pseudo_depth(0.0, &cfg) - 20.0).abs() < 1e-12);
        assert!(pseudo_depth(0.2, &cfg) > pseudo_depth(0.8, &cfg));
    }

    #[test]
    fn lift_example() {
        let cfg = PseudoDepthConfig { d_min: 1.0, depth_eta: 0.05, y_normalized: true, image_height: 1000.0 };
        let p = lift(&bb(100.0, 200.0, 50.0, 100.0), &cfg);
        // bottom edge 300 / 1000 = 0.3
        assert!((p.translation.z - (1.0 + 1.0 / 0.35)).abs() < 1e-12);
        assert!((p.translation.z - 3.857_142_857_142_857).abs() < 1e-12);
        assert_eq!((p.translation.x, p.translation.y), (125.0, 250.0));
        assert!(p.is_valid(1e-12));
    }

    #[test]
    fn lift_depth_decreases_down_image() {
        let cfg = PseudoDepthConfig::default();
        let same = lift(&bb(10.0, 10.0, 20.0, 40.0), &cfg);
        assert_eq!(same, lift(&bb(10.0, 10.0, 20.0, 40.0), &cfg));
        let zs: Vec<f64> = (0..10).map(|i| lift(&bb(10.0, 10.0 + 30.0 * i as f64, 20.0, 40.0), &cfg).translation.z).collect();
        assert!(zs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn linear2d_recovers_constant_velocity_exactly() {
        let full: Vec<(u32, BBox)> = (1..=20).map(|f| (f, bb(10.0 + 3.5 * f as f64, 50.0 - 1.25 * f as f64, 40.0 + 0.5 * f as f64, 90.0))).collect();
        let traj = with_gap(&full, 8..=12);
        let out = complete(&traj, CompletionMethod::Linear2d, &CompletionConfig::default()).unwrap();
        assert_eq!(out.filled, vec![8, 9, 10, 11, 12]);
        assert!(max_err(&out.boxes, &full) < 1e-9);
    }

    #[test]
    fn translation_only_lifts_agree() {
        let full: Vec<(u32, BBox)> = (1..=15).map(|f| (f, bb(100.0 + 7.0 * f as f64, 300.0 + 4.0 * f as f64, 40.0, 100.0))).collect();
        let traj = with_gap(&full, 5..=9);
        let cfg = CompletionConfig::default();
        let a = complete(&traj, CompletionMethod::Linear3d, &cfg).unwrap();
        let b = complete(&traj, CompletionMethod::Se3Linear, &cfg).unwrap();
        assert!(max_err(&a.boxes, &b.boxes) < 1e-9);
    }

    #[test]
    fn observed_frames_untouched_by_all_methods() {
        let traj: Vec<(u32, BBox)> = [1u32, 2, 3, 7, 8, 12, 13]
            .iter()
            .map(|&f| (f, bb(f as f64 * 5.0 + (f as f64).sin() * 9.0, 100.0 + (f as f64).cos() * 12.0, 30.0, 80.0)))
            .collect();
        for method in CompletionMethod::ALL {
            for rotation in [RotationMode::Identity, RotationMode::Heading] {
                let cfg = CompletionConfig { rotation, ..Default::default() };
                let out = complete(&traj, method, &cfg).unwrap();
                assert_eq!(out.boxes.len(), 13);
                for o in &traj {
                    assert!(out.boxes.contains(o), "{method} altered frame {}", o.0);
                }
                assert!(out.boxes.windows(2).all(|w| w[1].0 == w[0].0 + 1));
            }
        }
    }

    #[test]
    fn gap_free_input_is_identity() {
        let traj: Vec<(u32, BBox)> = (1..=6).map(|f| (f, bb(f as f64, 0.0, 10.0, 10.0))).collect();
        for method in CompletionMethod::ALL {
            let out = complete(&traj, method, &CompletionConfig::default()).unwrap();
            assert_eq!(out.boxes, traj);
            assert!(out.filled.is_empty() && out.unfilled.is_empty());
        }
    }

    #[test]
    fn span_reports_missing_anchors() {
        let traj: Vec<(u32, BBox)> = (5..=8).map(|f| (f, bb(f as f64, 0.0, 10.0, 10.0))).collect();
        let cfg = CompletionConfig { span: Some((1, 10)), ..Default::default() };
        let out = complete(&traj, CompletionMethod::Linear2d, &cfg).unwrap();
        assert_eq!(out.unfilled.len(), 2);
        assert_eq!(out.unfilled[0].frames, vec![1, 2, 3, 4]);
        assert_eq!(out.unfilled[1].frames, vec![9, 10]);
        assert!(out.unfilled.iter().all(|g| g.reason == UnfilledReason::MissingAnchor));
    }

    #[test]
    fn max_gap_leaves_long_gaps_open() {
        let traj = vec![(1, bb(0.0, 0.0, 10.0, 10.0)), (10, bb(9.0, 0.0, 10.0, 10.0))];
        let cfg = CompletionConfig { max_gap: Some(3), ..Default::default() };
        let out = complete(&traj, CompletionMethod::Linear2d, &cfg).unwrap();
        assert_eq!(out.boxes.len(), 2);
        assert_eq!(out.unfilled[0].reason, UnfilledReason::TooLong);
    }

    #[test]
    fn heading_se3_follows_circular_arc() {
        // Constant-speed circle: the SE(3) geodesic between tangent-aligned
        // anchors is the arc itself.
        let (cx, cy, r) = (500.0, 500.0, 200.0);
        let step = 0.05f64;
        let full: Vec<(u32, BBox)> = (0..40u32)
            .map(|f| {
                let a = f as f64 * step;
                (f + 1, BBox::from_center(cx + r * a.cos(), cy + r * a.sin(), 40.0, 100.0).unwrap())
            })
            .collect();
        let traj = with_gap(&full, 15..=24);
        let heading = CompletionConfig { rotation: RotationMode::Heading, depth: PseudoDepthConfig { y_normalized: true, ..Default::default() }, ..Default::default() };
        let se3 = complete(&traj, CompletionMethod::Se3Linear, &heading).unwrap();
        let lin = complete(&traj, CompletionMethod::Linear2d, &heading).unwrap();
        assert!(max_err(&se3.boxes, &full) < max_err(&lin.boxes, &full));
    }

    #[test]
    fn method_names_round_trip() {
        for m in CompletionMethod::ALL {
            assert_eq!(m.name().parse::<CompletionMethod>().unwrap(), m);
        }
        assert!("cubic".parse::<CompletionMethod>().is_err());
    }
}
