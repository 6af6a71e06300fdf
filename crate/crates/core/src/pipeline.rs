//! End-to-end helpers joining file records, the tracker, trajectory
//! completion and evaluation.

use std::collections::BTreeMap;

use crate::dataio::{DescriptorFile, MotLine};
use crate::error::{Error, Result};
use crate::lifting::{complete, CompletionConfig, CompletionMethod, UnfilledGap};
use crate::metrics::EvalFrame;
use crate::tracker::{Detection, Tracker, TrackerConfig, Trajectory};

/// Groups detection lines by frame. A detection's index within its frame
/// keys its descriptor record. With `head_mode` the trailing fields are read
/// as a head keypoint.
pub fn detections_by_frame(
    lines: &[MotLine],
    descriptors: Option<&DescriptorFile>,
    head_mode: bool,
) -> Result<BTreeMap<u32, Vec<Detection>>> {
    let index = descriptors.map(DescriptorFile::index).transpose()?;
    let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for line in lines {
        let dets = frames.entry(line.frame).or_default();
        let mut det = Detection::new(line.frame, line.bbox()?, line.conf);
        if head_mode {
            det.head = line.head()?;
        }
        if let (Some(file), Some(index)) = (descriptors, &index) {
            if let Some(&i) = index.get(&(line.frame, dets.len() as u32)) {
                det.descriptor = Some(file.records[i].to_descriptor()?);
            }
        }
        dets.push(det);
    }
    if let (Some(file), Some(_)) = (descriptors, &index) {
        for r in &file.records {
            let known = frames.get(&r.frame).is_some_and(|d| (r.det_index as usize) < d.len());
            if !known {
                return Err(Error::DescriptorFormat(format!(
                    "record for frame {} detection {} has no matching detection line",
                    r.frame, r.det_index
                )));
            }
        }
    }
    Ok(frames)
}

/// Runs the tracker over every frame from the first to the last detection
/// frame, including frames without detections, and returns the finalized
/// trajectories.
pub fn run_tracker(frames: &BTreeMap<u32, Vec<Detection>>, cfg: &TrackerConfig) -> Result<Vec<Trajectory>> {
    let mut tracker = Tracker::new(cfg.clone())?;
    if let (Some(&first), Some(&last)) = (frames.keys().next(), frames.keys().next_back()) {
        for frame in first..=last {
            let dets = frames.get(&frame).map_or(&[][..], Vec::as_slice);
            tracker.step(frame, dets)?;
        }
    }
    Ok(tracker.finalize())
}

pub fn trajectories_to_mot(trajectories: &[Trajectory]) -> Vec<MotLine> {
    trajectories
        .iter()
        .flat_map(|t| t.boxes.iter().map(move |(f, b)| MotLine::new(*f, t.id as i64, b, 1.0)))
        .collect()
}

/// Groups result lines by id. Negative ids and repeated `(id, frame)` pairs
/// are rejected.
pub fn mot_to_trajectories(lines: &[MotLine]) -> Result<Vec<Trajectory>> {
    let mut by_id: BTreeMap<u64, Vec<(u32, crate::geometry::BBox)>> = BTreeMap::new();
    for l in lines {
        let id = u64::try_from(l.id).map_err(|_| Error::invalid(format!("negative track id {} in frame {}", l.id, l.frame)))?;
        by_id.entry(id).or_default().push((l.frame, l.bbox()?));
    }
    by_id
        .into_iter()
        .map(|(id, mut boxes)| {
            boxes.sort_by_key(|b| b.0);
            if boxes.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::invalid(format!("track {id} has two boxes in one frame")));
            }
            Ok(Trajectory { id, boxes })
        })
        .collect()
}

/// Completed trajectories plus the gaps left open, tagged with track id.
pub type CompletedSet = (Vec<Trajectory>, Vec<(u64, UnfilledGap)>);

/// Gap filling over all trajectories; also returns the gaps left open.
pub fn complete_trajectories(
    trajectories: &[Trajectory],
    method: CompletionMethod,
    cfg: &CompletionConfig,
) -> Result<CompletedSet> {
    let mut out = Vec::with_capacity(trajectories.len());
    let mut open = Vec::new();
    for t in trajectories {
        let c = complete(&t.boxes, method, cfg)?;
        open.extend(c.unfilled.into_iter().map(|g| (t.id, g)));
        out.push(Trajectory { id: t.id, boxes: c.boxes });
    }
    Ok((out, open))
}

/// Detection lines plus optional descriptors in, result lines out.
pub fn track_lines(
    detections: &[MotLine],
    descriptors: Option<&DescriptorFile>,
    head_mode: bool,
    cfg: &TrackerConfig,
) -> Result<Vec<MotLine>> {
    let frames = detections_by_frame(detections, descriptors, head_mode)?;
    Ok(trajectories_to_mot(&run_tracker(&frames, cfg)?))
}

/// Aligns ground-truth and result lines into evaluation frames covering
/// every frame either side mentions. Ground-truth lines with a zero
/// confidence flag are ignored.
pub fn eval_frames(gt: &[MotLine], hyp: &[MotLine]) -> Result<Vec<EvalFrame>> {
    let mut frames: BTreeMap<u32, EvalFrame> = BTreeMap::new();
    let id_of = |l: &MotLine| {
        u64::try_from(l.id).map_err(|_| Error::invalid(format!("negative id {} in frame {}", l.id, l.frame)))
    };
    for l in gt.iter().filter(|l| l.conf != 0.0) {
        frames.entry(l.frame).or_default().gt.push((id_of(l)?, l.bbox()?));
    }
    for l in hyp {
        frames.entry(l.frame).or_default().hyp.push((id_of(l)?, l.bbox()?));
    }
    Ok(frames.into_values().collect())
}
