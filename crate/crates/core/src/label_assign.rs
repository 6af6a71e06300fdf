//! Training-time anchor/ground-truth matching and the detector loss terms,
//! as plain functions over predictions supplied as data.

use nalgebra::DMatrix;

use crate::geometry::{ciou_loss, iou, BBox, HeadKeypoint, Stride};

const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub cx: f64,
    pub cy: f64,
    pub stride: Stride,
    pub pred_box: BBox,
    pub pred_cls: f64,
    pub pred_obj: f64,
    pub pred_head: HeadKeypoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub bbox: BBox,
    pub head: HeadKeypoint,
    /// Half-width of the square center region in pixels. `None` uses
    /// `center_radius_factor * stride` of the anchor being tested.
    pub center_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eps_iou: f64,
    pub q_topk: usize,
    pub center_radius_factor: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            beta: 1e5,
            eps_iou: 1e-8,
            q_topk: 10,
            center_radius_factor: 2.5,
        }
    }
}

fn half_width(anchor: &Anchor, gt: &GtInstance, cfg: &AssignConfig) -> f64 {
    gt.center_radius
        .unwrap_or(cfg.center_radius_factor * anchor.stride.pixels() as f64)
}

pub fn in_box(anchor: &Anchor, gt: &GtInstance) -> bool {
    let b = &gt.bbox;
    anchor.cx > b.x && anchor.cx < b.right() && anchor.cy > b.y && anchor.cy < b.bottom()
}

pub fn in_center_region(anchor: &Anchor, gt: &GtInstance, cfg: &AssignConfig) -> bool {
    let (gx, gy) = gt.bbox.center();
    let r = half_width(anchor, gt, cfg);
    (anchor.cx - gx).abs() < r && (anchor.cy - gy).abs() < r
}

/// `A x G` mask: anchor center inside the box or inside its center region.
pub fn foreground_mask(anchors: &[Anchor], gts: &[GtInstance], cfg: &AssignConfig) -> DMatrix<bool> {
    DMatrix::from_fn(anchors.len(), gts.len(), |a, g| {
        in_box(&anchors[a], &gts[g]) || in_center_region(&anchors[a], &gts[g], cfg)
    })
}

/// Binary cross-entropy with `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `-ln(IoU + eps)`.
pub fn iou_cost(pred: &BBox, gt: &BBox, eps_iou: f64) -> f64 {
    -(iou(pred, gt) + eps_iou).ln()
}

/// Classification cost plus weighted IoU cost plus the center-region penalty.
pub fn assign_cost(anchor: &Anchor, gt: &GtInstance, cfg: &AssignConfig) -> f64 {
    let penalty = if in_center_region(anchor, gt, cfg) { 0.0 } else { 1.0 };
    bce(anchor.pred_cls, 1.0) + cfg.alpha * iou_cost(&anchor.pred_box, &gt.bbox, cfg.eps_iou) + cfg.beta * penalty
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicKAssignment {
    /// Dynamic k per ground truth (0 when it has no foreground anchors).
    pub k: Vec<usize>,
    /// Positive anchors per ground truth, cheapest first.
    pub positives: Vec<Vec<usize>>,
    /// Ground truth owning each anchor, if any.
    pub owner: Vec<Option<usize>>,
    /// Ground truths with no foreground anchor at all.
    pub unsupported: Vec<usize>,
}

impl DynamicKAssignment {
    pub fn num_foreground(&self) -> usize {
        self.owner.iter().filter(|o| o.is_some()).count()
    }
}

/// Dynamic-k matching.
///
/// For each ground truth, `k = clamp(round(sum of its top-q IoUs over
/// foreground anchors), 1, #foreground)`, and its `k` cheapest foreground
/// anchors are taken. Anchors whose cost carries the `beta` penalty are never
/// taken. An anchor claimed by several ground truths goes to the cheapest
/// (lowest index on ties); the losers then top up from their next cheapest
/// free anchors.
pub fn dynamic_k_match(
    cost: &DMatrix<f64>,
    ious: &DMatrix<f64>,
    fg: &DMatrix<bool>,
    cfg: &AssignConfig,
) -> DynamicKAssignment {
    let (n_anchors, n_gts) = cost.shape();
    let mut k = vec![0; n_gts];
    let mut ranked: Vec<Vec<usize>> = vec![Vec::new(); n_gts];
    let mut unsupported = Vec::new();

    for g in 0..n_gts {
        let mut cand: Vec<usize> = (0..n_anchors).filter(|&a| fg[(a, g)]).collect();
        if cand.is_empty() {
            unsupported.push(g);
            continue;
        }
        let mut top: Vec<f64> = cand.iter().map(|&a| ious[(a, g)]).collect();
        top.sort_by(|a, b| b.total_cmp(a));
        let sum: f64 = top.iter().take(cfg.q_topk).sum();
        k[g] = (sum.round() as usize).clamp(1, cand.len());
        cand.sort_by(|&a, &b| cost[(a, g)].total_cmp(&cost[(b, g)]).then(a.cmp(&b)));
        cand.retain(|&a| cost[(a, g)] < cfg.beta);
        ranked[g] = cand;
    }

    let mut claims: Vec<Vec<usize>> = vec![Vec::new(); n_anchors];
    for g in 0..n_gts {
        for &a in ranked[g].iter().take(k[g]) {
            claims[a].push(g);
        }
    }
    let mut owner: Vec<Option<usize>> = claims
        .iter()
        .enumerate()
        .map(|(a, gs)| {
            gs.iter()
                .copied()
                .min_by(|&x, &y| cost[(a, x)].total_cmp(&cost[(a, y)]).then(x.cmp(&y)))
        })
        .collect();

    for g in 0..n_gts {
        let mut have = owner.iter().filter(|o| **o == Some(g)).count();
        for &a in &ranked[g] {
            if have >= k[g] {
                break;
            }
            if owner[a].is_none() {
                owner[a] = Some(g);
                have += 1;
            }
        }
    }

    let mut positives: Vec<Vec<usize>> = vec![Vec::new(); n_gts];
    for g in 0..n_gts {
        positives[g] = ranked[g].iter().copied().filter(|&a| owner[a] == Some(g)).collect();
    }

    DynamicKAssignment {
        k,
        positives,
        owner,
        unsupported,
    }
}

/// Builds the cost, IoU and foreground matrices and runs [`dynamic_k_match`].
pub fn assign(anchors: &[Anchor], gts: &[GtInstance], cfg: &AssignConfig) -> (DMatrix<f64>, DynamicKAssignment) {
    let fg = foreground_mask(anchors, gts, cfg);
    let ious = DMatrix::from_fn(anchors.len(), gts.len(), |a, g| iou(&anchors[a].pred_box, &gts[g].bbox));
    let cost = DMatrix::from_fn(anchors.len(), gts.len(), |a, g| assign_cost(&anchors[a], &gts[g], cfg));
    let assignment = dynamic_k_match(&cost, &ious, &fg, cfg);
    (cost, assignment)
}

/// Individual loss terms. `l1` is `None` when the optional L1 term is off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub box_iou: f64,
    pub objectness: f64,
    pub l1: Option<f64>,
    pub head_keypoint: f64,
    pub head_visibility: f64,
}

impl LossBreakdown {
    pub fn box_loss(&self) -> f64 {
        self.box_iou + self.objectness
    }

    pub fn head_loss(&self) -> f64 {
        self.head_keypoint + self.head_visibility
    }

    /// Classification + box + head, plus L1 when enabled.
    pub fn total(&self) -> f64 {
        self.cls + self.box_loss() + self.head_loss() + self.l1.unwrap_or(0.0)
    }
}

/// Foreground `(anchor, gt)` pairs of an assignment, ordered by anchor.
fn fg_pairs(assignment: &DynamicKAssignment) -> impl Iterator<Item = (usize, usize)> + '_ {
    assignment.owner.iter().enumerate().filter_map(|(a, g)| g.map(|g| (a, g)))
}

fn fg_mean(assignment: &DynamicKAssignment, term: impl Fn(usize, usize) -> f64) -> f64 {
    let n = assignment.num_foreground();
    if n == 0 {
        return 0.0;
    }
    fg_pairs(assignment).map(|(a, g)| term(a, g)).sum::<f64>() / n as f64
}

/// Mean BCE of the class score against 1 over foreground anchors.
pub fn loss_cls(anchors: &[Anchor], assignment: &DynamicKAssignment) -> f64 {
    fg_mean(assignment, |a, _| bce(anchors[a].pred_cls, 1.0))
}

/// `(CIoU term over foreground, objectness BCE summed over all anchors)`,
/// both divided by the foreground count (1 when there is none).
pub fn loss_box(anchors: &[Anchor], gts: &[GtInstance], assignment: &DynamicKAssignment) -> (f64, f64) {
    let iou_term = fg_mean(assignment, |a, g| ciou_loss(&anchors[a].pred_box, &gts[g].bbox));
    let norm = assignment.num_foreground().max(1) as f64;
    let obj: f64 = anchors
        .iter()
        .zip(&assignment.owner)
        .map(|(anchor, owner)| bce(anchor.pred_obj, if owner.is_some() { 1.0 } else { 0.0 }))
        .sum();
    (iou_term, obj / norm)
}

/// Mean L1 distance between predicted and target `(x, y, w, h)`.
pub fn loss_l1(anchors: &[Anchor], gts: &[GtInstance], assignment: &DynamicKAssignment) -> f64 {
    fg_mean(assignment, |a, g| {
        let p = &anchors[a].pred_box;
        let t = &gts[g].bbox;
        (p.x - t.x).abs() + (p.y - t.y).abs() + (p.w - t.w).abs() + (p.h - t.h).abs()
    })
}

/// `(squared keypoint error, visibility BCE)`, each averaged over foreground.
pub fn loss_head(anchors: &[Anchor], gts: &[GtInstance], assignment: &DynamicKAssignment) -> (f64, f64) {
    let kpt = fg_mean(assignment, |a, g| {
        let p = &anchors[a].pred_head;
        let t = &gts[g].head;
        (p.x - t.x).powi(2) + (p.y - t.y).powi(2)
    });
    let vis = fg_mean(assignment, |a, g| bce(anchors[a].pred_head.visibility, gts[g].head.visibility));
    (kpt, vis)
}

pub fn loss_suite(anchors: &[Anchor], gts: &[GtInstance], assignment: &DynamicKAssignment, use_l1: bool) -> LossBreakdown {
    let (box_iou, objectness) = loss_box(anchors, gts, assignment);
    let (head_keypoint, head_visibility) = loss_head(anchors, gts, assignment);
    LossBreakdown {
        cls: loss_cls(anchors, assignment),
        box_iou,
        objectness,
        l1: use_l1.then(|| loss_l1(anchors, gts, assignment)),
        head_keypoint,
        head_visibility,
    }
}
