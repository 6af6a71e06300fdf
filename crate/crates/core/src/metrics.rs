//! CLEAR-MOT and IDF1 evaluation of tracker output against ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::association::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geometry::{iou, BBox};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Ground-truth and hypothesis boxes of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalFrame {
    pub gt: Vec<(u64, BBox)>,
    pub hyp: Vec<(u64, BBox)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub mota: f64,
    /// Mean IoU over matched pairs (0 when nothing matched).
    pub motp: f64,
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub matches: usize,
    pub gt_total: usize,
    pub hyp_total: usize,
    pub idtp: usize,
}

impl EvalReport {
    /// `key=value` lines in a fixed order.
    pub fn to_key_values(&self) -> String {
        format!(
            "mota={:?}\nmotp={:?}\nidf1={:?}\nidp={:?}\nidr={:?}\nfp={}\nfn={}\nids={}\nmatches={}\ngt_total={}\nhyp_total={}\nidtp={}\n",
            self.mota,
            self.motp,
            self.idf1,
            self.idp,
            self.idr,
            self.fp,
            self.fn_,
            self.ids,
            self.matches,
            self.gt_total,
            self.hyp_total,
            self.idtp
        )
    }
}

fn sorted_unique(list: &[(u64, BBox)], what: &str, frame: usize) -> Result<Vec<(u64, BBox)>> {
    let mut v = list.to_vec();
    v.sort_by_key(|(id, _)| *id);
    if v.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid(format!("duplicate {what} id in frame index {frame}")));
    }
    Ok(v)
}

/// Per-frame matching: gts first keep their previous hypothesis when it is
/// still above the threshold, the rest are matched by minimum `1 - IoU`
/// among pairs with IoU at or above the threshold.
fn match_frame(
    gt: &[(u64, BBox)],
    hyp: &[(u64, BBox)],
    previous: &HashMap<u64, u64>,
    threshold: f64,
) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];

    for (gi, (gid, gbox)) in gt.iter().enumerate() {
        let Some(prev) = previous.get(gid) else { continue };
        let Ok(hi) = hyp.binary_search_by_key(prev, |(id, _)| *id) else { continue };
        if !hyp_used[hi] && iou(gbox, &hyp[hi].1) >= threshold {
            pairs.push((gi, hi));
            gt_used[gi] = true;
            hyp_used[hi] = true;
        }
    }

    let free_gt: Vec<usize> = (0..gt.len()).filter(|&i| !gt_used[i]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&j| !hyp_used[j]).collect();
    let mut cost = CostMatrix::empty(free_gt.len(), free_hyp.len());
    for (r, &gi) in free_gt.iter().enumerate() {
        for (c, &hi) in free_hyp.iter().enumerate() {
            let o = iou(&gt[gi].1, &hyp[hi].1);
            cost.set(r, c, 1.0 - o, o >= threshold);
        }
    }
    for (r, c) in solve_assignment(&cost) {
        pairs.push((free_gt[r], free_hyp[c]));
    }
    pairs
}

/// Evaluates a frame-ordered sequence. Empty ground truth is an error since
/// MOTA is undefined there.
pub fn evaluate(frames: &[EvalFrame], iou_threshold: f64) -> Result<EvalReport> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::invalid("iou_threshold must be in (0, 1]"));
    }
    let (mut fp, mut fn_, mut ids, mut matches) = (0, 0, 0, 0);
    let (mut gt_total, mut hyp_total) = (0, 0);
    let mut iou_sum = 0.0;
    let mut previous: HashMap<u64, u64> = HashMap::new();
    let mut overlap: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut gt_ids = BTreeSet::new();
    let mut hyp_ids = BTreeSet::new();

    for (f, frame) in frames.iter().enumerate() {
        let gt = sorted_unique(&frame.gt, "gt", f)?;
        let hyp = sorted_unique(&frame.hyp, "hypothesis", f)?;
        gt_total += gt.len();
        hyp_total += hyp.len();
        gt_ids.extend(gt.iter().map(|(id, _)| *id));
        hyp_ids.extend(hyp.iter().map(|(id, _)| *id));

        for (gid, gbox) in &gt {
            for (hid, hbox) in &hyp {
                if iou(gbox, hbox) >= iou_threshold {
                    *overlap.entry((*gid, *hid)).or_default() += 1;
                }
            }
        }

        let pairs = match_frame(&gt, &hyp, &previous, iou_threshold);
        for &(gi, hi) in &pairs {
            let (gid, hid) = (gt[gi].0, hyp[hi].0);
            if previous.get(&gid).is_some_and(|&p| p != hid) {
                ids += 1;
            }
            previous.insert(gid, hid);
            iou_sum += iou(&gt[gi].1, &hyp[hi].1);
        }
        matches += pairs.len();
        fp += hyp.len() - pairs.len();
        fn_ += gt.len() - pairs.len();
    }

    if gt_total == 0 {
        return Err(Error::EmptyGroundTruth);
    }

    let idtp = global_id_overlap(&gt_ids, &hyp_ids, &overlap);
    let mota = 1.0 - (fp + fn_ + ids) as f64 / gt_total as f64;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Ok(EvalReport {
        mota,
        motp: if matches == 0 { 0.0 } else { iou_sum / matches as f64 },
        idf1: ratio(2 * idtp, gt_total + hyp_total),
        idp: ratio(idtp, hyp_total),
        idr: ratio(idtp, gt_total),
        fp,
        fn_,
        ids,
        matches,
        gt_total,
        hyp_total,
        idtp,
    })
}

/// Largest total overlap achievable by a one-to-one gt-id to hyp-id mapping.
fn global_id_overlap(gt_ids: &BTreeSet<u64>, hyp_ids: &BTreeSet<u64>, overlap: &BTreeMap<(u64, u64), usize>) -> usize {
    let gt_ids: Vec<u64> = gt_ids.iter().copied().collect();
    let hyp_ids: Vec<u64> = hyp_ids.iter().copied().collect();
    let mut cost = CostMatrix::empty(gt_ids.len(), hyp_ids.len());
    for (r, g) in gt_ids.iter().enumerate() {
        for (c, h) in hyp_ids.iter().enumerate() {
            let n = overlap.get(&(*g, *h)).copied().unwrap_or(0);
            cost.set(r, c, -(n as f64), true);
        }
    }
    solve_assignment(&cost)
        .into_iter()
        .map(|(r, c)| overlap.get(&(gt_ids[r], hyp_ids[c])).copied().unwrap_or(0))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bb(x: f64, y: f64) -> BBox {
        BBox::new(x, y, 20.0, 50.0).unwrap()
    }

    /// `objects` targets moving right one pixel per frame, well separated.
    fn gt_sequence(objects: u64, frames: u32) -> Vec<EvalFrame> {
        (0..frames)
            .map(|t| EvalFrame {
                gt: (0..objects).map(|k| (k + 1, bb(t as f64, 100.0 * k as f64))).collect(),
                hyp: Vec::new(),
            })
            .collect()
    }

    #[test]
    fn perfect_tracking() {
        let mut frames = gt_sequence(3, 8);
        for f in &mut frames {
            f.hyp = f.gt.iter().map(|(id, b)| (id + 40, *b)).collect();
        }
        let r = evaluate(&frames, 0.5).unwrap();
        assert_eq!((r.mota, r.idf1, r.fp, r.fn_, r.ids), (1.0, 1.0, 0, 0, 0));
        assert_eq!(r.motp, 1.0);
    }

    #[test]
    fn one_spurious_box() {
        let mut frames = gt_sequence(10, 10);
        for f in &mut frames {
            f.hyp = f.gt.clone();
        }
        frames[4].hyp.push((99, bb(5000.0, 5000.0)));
        let r = evaluate(&frames, 0.5).unwrap();
        assert_eq!(r.gt_total, 100);
        assert_eq!((r.fp, r.fn_, r.ids), (1, 0, 0));
        assert_eq!(r.mota, 0.99);
    }

    #[test]
    fn single_identity_switch() {
        let mut frames = gt_sequence(1, 10);
        for (t, f) in frames.iter_mut().enumerate() {
            let id = if t < 5 { 7 } else { 8 };
            f.hyp = vec![(id, f.gt[0].1)];
        }
        let r = evaluate(&frames, 0.5).unwrap();
        assert_eq!(r.ids, 1);
        assert_eq!(r.mota, 0.9);
        assert_eq!(r.idtp, 5);
        assert_eq!(r.idf1, 0.5);
    }

    #[test]
    fn continuity_beats_better_overlap() {
        // gt 1 was matched to hyp 10; in frame 2 hyp 11 overlaps more but
        // hyp 10 is still above threshold, so no switch is counted.
        let g = bb(0.0, 0.0);
        let frames = vec![
            EvalFrame { gt: vec![(1, g)], hyp: vec![(10, g)] },
            EvalFrame { gt: vec![(1, g)], hyp: vec![(10, g.translated(0.0, 10.0)), (11, g)] },
        ];
        let r = evaluate(&frames, 0.5).unwrap();
        assert_eq!((r.ids, r.fp), (0, 1));
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let frames = vec![EvalFrame { gt: vec![], hyp: vec![(1, bb(0.0, 0.0))] }];
        assert!(matches!(evaluate(&frames, 0.5), Err(Error::EmptyGroundTruth)));
        assert!(matches!(evaluate(&[], 0.5), Err(Error::EmptyGroundTruth)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let frames = vec![EvalFrame { gt: vec![(1, bb(0.0, 0.0)), (1, bb(50.0, 0.0))], hyp: vec![] }];
        assert!(evaluate(&frames, 0.5).is_err());
    }

    /// Brute-force IDTP over all injective gt-id -> hyp-id maps.
    fn brute_idtp(frames: &[EvalFrame], threshold: f64) -> usize {
        let gts: BTreeSet<u64> = frames.iter().flat_map(|f| f.gt.iter().map(|g| g.0)).collect();
        let hyps: BTreeSet<u64> = frames.iter().flat_map(|f| f.hyp.iter().map(|h| h.0)).collect();
        let gts: Vec<u64> = gts.into_iter().collect();
        let hyps: Vec<u64> = hyps.into_iter().collect();
        let count = |g: u64, h: u64| {
            frames
                .iter()
                .filter(|f| {
                    let gb = f.gt.iter().find(|x| x.0 == g);
                    let hb = f.hyp.iter().find(|x| x.0 == h);
                    matches!((gb, hb), (Some(a), Some(b)) if iou(&a.1, &b.1) >= threshold)
                })
                .count()
        };
        fn rec(i: usize, gts: &[u64], hyps: &[u64], used: &mut Vec<bool>, count: &dyn Fn(u64, u64) -> usize) -> usize {
            if i == gts.len() {
                return 0;
            }
            let mut best = rec(i + 1, gts, hyps, used, count);
            for j in 0..hyps.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.max(count(gts[i], hyps[j]) + rec(i + 1, gts, hyps, used, count));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, &gts, &hyps, &mut vec![false; hyps.len()], &count)
    }

    /// Random sequences on a coarse grid so overlaps of every kind occur.
    /// The sub-pixel jitter keeps exact IoU ties out of the picture.
    fn arb_frames() -> impl Strategy<Value = Vec<EvalFrame>> {
        let cell = || (0u8..4, 0u8..3, 0.0f64..0.5);
        let frame = (
            proptest::collection::btree_map(1u64..5, cell(), 1..4),
            proptest::collection::btree_map(1u64..6, cell(), 0..5),
        );
        proptest::collection::vec(frame, 1..8).prop_map(|fs| {
            let place = |(cx, cy, j): (u8, u8, f64)| BBox::new(cx as f64 * 12.0 + j, cy as f64 * 30.0, 20.0, 50.0).unwrap();
            fs.into_iter()
                .map(|(g, h)| EvalFrame {
                    gt: g.into_iter().map(|(id, c)| (id, place(c))).collect(),
                    hyp: h.into_iter().map(|(id, c)| (id, place(c))).collect(),
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn report_identities(frames in arb_frames()) {
            let r = evaluate(&frames, 0.5).unwrap();
            prop_assert_eq!(r.mota, 1.0 - (r.fp + r.fn_ + r.ids) as f64 / r.gt_total as f64);
            prop_assert_eq!(r.matches + r.fn_, r.gt_total);
            prop_assert_eq!(r.matches + r.fp, r.hyp_total);
            prop_assert!((0.0..=1.0).contains(&r.idf1));
            prop_assert_eq!(r.idtp, brute_idtp(&frames, 0.5));
        }

        #[test]
        fn relabeling_hypotheses_is_invisible(frames in arb_frames(), offset in 100u64..1000) {
            let base = evaluate(&frames, 0.5).unwrap();
            // Reverse the id order as well as shifting it.
            let relabeled: Vec<EvalFrame> = frames
                .iter()
                .map(|f| EvalFrame {
                    gt: f.gt.clone(),
                    hyp: f.hyp.iter().map(|(id, b)| (offset - id, *b)).collect(),
                })
                .collect();
            let r = evaluate(&relabeled, 0.5).unwrap();
            prop_assert_eq!(base.mota, r.mota);
            prop_assert_eq!(base.idf1, r.idf1);
            prop_assert_eq!(base.idtp, r.idtp);
        }

        #[test]
        fn reordering_within_frames_is_invisible(frames in arb_frames()) {
            let base = evaluate(&frames, 0.5).unwrap();
            let reversed: Vec<EvalFrame> = frames
                .iter()
                .map(|f| EvalFrame {
                    gt: f.gt.iter().rev().copied().collect(),
                    hyp: f.hyp.iter().rev().copied().collect(),
                })
                .collect();
            prop_assert_eq!(base, evaluate(&reversed, 0.5).unwrap());
        }
    }

    #[test]
    fn perfect_bijection_gives_unit_idf1() {
        let mut frames = gt_sequence(4, 6);
        for f in &mut frames {
            f.hyp = f.gt.iter().map(|(id, b)| (10 - id, *b)).collect();
        }
        assert_eq!(evaluate(&frames, 0.5).unwrap().idf1, 1.0);
    }
}
