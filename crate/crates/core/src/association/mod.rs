//! Track-to-detection association: fused appearance and motion costs, gating
//! and minimum-cost matching.

mod appearance;
mod lap;

pub use appearance::{
    appearance_cost, cosine_cost, gaussian_weighted_descriptor, AppearanceDescriptor, Embedding,
    FeatureKind, FeatureMap, FeaturePatch, FeatureWeights, PatchCell,
};
pub use lap::{solve_assignment, CostMatrix};

use crate::error::{Error, Result};
use crate::kalman::KalmanState;
use crate::tracker::{Detection, Track};

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationConfig {
    pub w_app: f64,
    pub w_mot: f64,
    pub feature_weights: FeatureWeights,
    /// Pairs with fused cost above this are never matched.
    pub gate_g: f64,
    /// Pixel distance that maps to a motion cost of 1.
    pub motion_scale: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            w_app: 0.5,
            w_mot: 0.5,
            feature_weights: FeatureWeights::default(),
            gate_g: 0.3,
            motion_scale: image_diagonal(1920.0, 1080.0),
        }
    }
}

pub fn image_diagonal(width: f64, height: f64) -> f64 {
    width.hypot(height)
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_app < 0.0 || self.w_mot < 0.0 || !(self.w_app + self.w_mot > 0.0) {
            return Err(Error::invalid("w_app and w_mot must be non-negative with a positive sum"));
        }
        if !(self.gate_g > 0.0) {
            return Err(Error::invalid("gate_g must be positive"));
        }
        if !(self.motion_scale > 0.0) {
            return Err(Error::invalid("motion_scale must be positive"));
        }
        let fw = self.feature_weights;
        if [fw.cls, fw.reg, fw.head].iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("feature weights must be non-negative"));
        }
        Ok(())
    }
}

/// Center distance between the predicted track and the detection, divided
/// by `motion_scale`.
pub fn motion_cost(track: &KalmanState, det: &Detection, cfg: &AssociationConfig) -> f64 {
    let (pu, pv) = track.center();
    let (du, dv) = det.bbox.center();
    (pu - du).hypot(pv - dv) / cfg.motion_scale
}

/// Fused cost `w_app * C_app + w_mot * C_mot` for one pair. When the pair
/// shares no appearance feature the motion term alone is used, scaled by
/// `w_app + w_mot`.
pub fn pair_cost(track: &Track, det: &Detection, cfg: &AssociationConfig) -> Result<f64> {
    let mot = motion_cost(&track.kf, det, cfg);
    let app = match &det.descriptor {
        Some(d) => appearance_cost(&track.descriptor, d, &cfg.feature_weights)?,
        None => None,
    };
    Ok(match app {
        Some(app) => cfg.w_app * app + cfg.w_mot * mot,
        None => (cfg.w_app + cfg.w_mot) * mot,
    })
}

/// Cost matrix over predicted tracks (rows) and detections (columns), gated
/// at `gate_g`.
pub fn build_cost_matrix(tracks: &[Track], detections: &[Detection], cfg: &AssociationConfig) -> Result<CostMatrix> {
    let mut values = Vec::with_capacity(tracks.len() * detections.len());
    for t in tracks {
        for d in detections {
            values.push(pair_cost(t, d, cfg)?);
        }
    }
    CostMatrix::gated(tracks.len(), detections.len(), values, cfg.gate_g)
}
