//! Per-frame track lifecycle: predict, associate, update, spawn, age out.

use crate::association::{build_cost_matrix, solve_assignment, AppearanceDescriptor, AssociationConfig};
use crate::error::{Error, Result};
use crate::geometry::{BBox, HeadKeypoint};
use crate::kalman::{
    iterated_update_with_jitter, predict, IteratedUpdateConfig, KalmanState, LinearMeasurement, Measurement,
    NoiseConfig,
};

/// One detector output for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
    pub head: Option<HeadKeypoint>,
    pub descriptor: Option<AppearanceDescriptor>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, score: f64) -> Self {
        Self {
            frame,
            bbox,
            score,
            head: None,
            descriptor: None,
        }
    }

    pub fn with_descriptor(mut self, descriptor: AppearanceDescriptor) -> Self {
        self.descriptor = Some(descriptor);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub kf: KalmanState,
    pub descriptor: AppearanceDescriptor,
    /// Consecutive frames without a match.
    pub miss_count: u32,
    pub hit_count: u32,
    pub status: TrackStatus,
    pub head: Option<HeadKeypoint>,
    /// Filtered box for every matched frame, in frame order.
    pub history: Vec<(u32, BBox)>,
}

impl Track {
    pub fn new(id: u64, kf: KalmanState, descriptor: AppearanceDescriptor, frame: u32, bbox: BBox) -> Self {
        Self {
            id,
            kf,
            descriptor,
            miss_count: 0,
            hit_count: 1,
            status: TrackStatus::Tentative,
            head: None,
            history: vec![(frame, bbox)],
        }
    }

    pub fn last_frame(&self) -> Option<u32> {
        self.history.last().map(|h| h.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    /// Frames a track may go unmatched before it is removed.
    pub patience_w: u32,
    pub init_score_min: f64,
    pub min_hits: u32,
    /// Also emit coasting (predicted) boxes of confirmed tracks.
    pub emit_predictions: bool,
    pub descriptor_momentum: f64,
    pub association: AssociationConfig,
    pub noise: NoiseConfig,
    pub iterated: IteratedUpdateConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            patience_w: 30,
            init_score_min: 0.25,
            min_hits: 3,
            emit_predictions: false,
            descriptor_momentum: 0.9,
            association: AssociationConfig::default(),
            noise: NoiseConfig::default(),
            iterated: IteratedUpdateConfig::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience_w < 1 {
            return Err(Error::invalid("patience_w must be at least 1"));
        }
        if self.min_hits < 1 {
            return Err(Error::invalid("min_hits must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.descriptor_momentum) {
            return Err(Error::invalid("descriptor_momentum must lie in [0, 1]"));
        }
        if !(self.noise.h_min > 0.0) {
            return Err(Error::invalid("h_min must be positive"));
        }
        self.association.validate()?;
        self.iterated.validate()
    }
}

/// Complete history of one confirmed identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u64,
    pub boxes: Vec<(u32, BBox)>,
}

/// Tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    live: Vec<Track>,
    finished: Vec<Track>,
    next_id: u64,
    last_frame: Option<u32>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            live: Vec::new(),
            finished: Vec::new(),
            next_id: 1,
            last_frame: None,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn live_tracks(&self) -> &[Track] {
        &self.live
    }

    pub fn removed_tracks(&self) -> &[Track] {
        &self.finished
    }

    /// Processes one frame and returns the `(id, box)` pairs emitted for it,
    /// sorted by id.
    pub fn step(&mut self, frame: u32, detections: &[Detection]) -> Result<Vec<(u64, BBox)>> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(Error::FrameOrder { previous, got: frame });
            }
        }
        if let Some(bad) = detections.iter().find(|d| d.frame != frame) {
            return Err(Error::FrameMismatch {
                expected: frame,
                got: bad.frame,
            });
        }
        self.last_frame = Some(frame);

        for track in &mut self.live {
            let model = self.cfg.noise.model_for_height(track.kf.x[3]);
            match predict(&track.kf, &model) {
                Ok(kf) => track.kf = kf,
                Err(_) => track.status = TrackStatus::Removed,
            }
        }
        self.retire_removed();

        let cost = build_cost_matrix(&self.live, detections, &self.cfg.association)?;
        let pairs = solve_assignment(&cost);

        let mut track_matched = vec![false; self.live.len()];
        let mut det_matched = vec![false; detections.len()];
        for &(ti, di) in &pairs {
            track_matched[ti] = true;
            det_matched[di] = true;
            self.apply_match(ti, &detections[di], frame);
        }

        for (track, matched) in self.live.iter_mut().zip(&track_matched) {
            if !matched {
                track.miss_count += 1;
                if track.miss_count >= self.cfg.patience_w {
                    track.status = TrackStatus::Removed;
                }
            }
        }

        let mut emitted: Vec<(u64, BBox)> = Vec::new();
        for (track, &matched) in self.live.iter().zip(&track_matched) {
            if track.status != TrackStatus::Confirmed {
                continue;
            }
            if matched {
                let (_, bbox) = track.history.last().expect("matched track has history");
                emitted.push((track.id, *bbox));
            } else if self.cfg.emit_predictions {
                if let Ok(b) = track.kf.to_bbox() {
                    emitted.push((track.id, b));
                }
            }
        }
        self.retire_removed();

        for (det, _) in detections.iter().zip(&det_matched).filter(|(_, &m)| !m) {
            if det.score < self.cfg.init_score_min {
                continue;
            }
            let track = self.spawn(det);
            if track.status == TrackStatus::Confirmed {
                emitted.push((track.id, det.bbox));
            }
            self.live.push(track);
        }

        emitted.sort_by_key(|e| e.0);
        Ok(emitted)
    }

    fn apply_match(&mut self, ti: usize, det: &Detection, frame: u32) {
        let cfg = &self.cfg;
        let track = &mut self.live[ti];
        let model = cfg.noise.model_for_height(track.kf.x[3]);
        let z = Measurement::from(det.bbox.to_measurement());
        let outcome = iterated_update_with_jitter(&track.kf, &z, &model, &LinearMeasurement::of(&model), &cfg.iterated);
        match outcome {
            Ok(out) => track.kf = out.state,
            Err(_) => {
                track.status = TrackStatus::Removed;
                return;
            }
        }
        track.miss_count = 0;
        track.hit_count += 1;
        if let Some(d) = &det.descriptor {
            track.descriptor = track.descriptor.blend(d, cfg.descriptor_momentum);
        }
        if det.head.is_some() {
            track.head = det.head;
        }
        let bbox = track.kf.to_bbox().unwrap_or(det.bbox);
        track.history.push((frame, bbox));
        if track.status == TrackStatus::Tentative && track.hit_count >= cfg.min_hits {
            track.status = TrackStatus::Confirmed;
        }
    }

    fn spawn(&mut self, det: &Detection) -> Track {
        let id = self.next_id;
        self.next_id += 1;
        let mut track = Track::new(
            id,
            self.cfg.noise.initiate(&det.bbox),
            det.descriptor.clone().unwrap_or_default(),
            det.frame,
            det.bbox,
        );
        track.head = det.head;
        if self.cfg.min_hits <= 1 {
            track.status = TrackStatus::Confirmed;
        }
        track
    }

    fn retire_removed(&mut self) {
        let (removed, live): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.live).into_iter().partition(|t| t.status == TrackStatus::Removed);
        self.live = live;
        self.finished.extend(removed);
    }

    /// Histories of every track that reached `min_hits`, sorted by id.
    pub fn finalize(&self) -> Vec<Trajectory> {
        let mut out: Vec<Trajectory> = self
            .live
            .iter()
            .chain(&self.finished)
            .filter(|t| t.hit_count >= self.cfg.min_hits)
            .map(|t| Trajectory {
                id: t.id,
                boxes: t.history.clone(),
            })
            .collect();
        out.sort_by_key(|t| t.id);
        out
    }
}
