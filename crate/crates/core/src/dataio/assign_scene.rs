use std::fmt::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{BBox, HeadKeypoint, Stride};
use crate::label_assign::{Anchor, DynamicKAssignment, GtInstance};

/// Anchors and ground truths of a label-assignment scene file.
///
/// One record per line, whitespace separated, `#` starts a comment:
///
/// ```text
/// gt     x y w h  head_x head_y head_v  [center_radius]
/// anchor cx cy stride  x y w h  cls obj  head_x head_y head_v
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignScene {
    pub anchors: Vec<Anchor>,
    pub gts: Vec<GtInstance>,
}

pub fn parse_assign_scene(text: &str) -> Result<AssignScene> {
    let mut scene = AssignScene::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        let mut words = content.split_whitespace();
        let kind = words.next().unwrap_or_default();
        let nums: Vec<f64> = words
            .map(|w| w.parse::<f64>().map_err(|_| err(format!("not a number: {w:?}"))))
            .collect::<Result<_>>()?;
        let with_line = |e: Error| err(e.to_string());
        match (kind, nums.len()) {
            ("gt", 7 | 8) => scene.gts.push(GtInstance {
                bbox: BBox::new(nums[0], nums[1], nums[2], nums[3]).map_err(with_line)?,
                head: HeadKeypoint::new(nums[4], nums[5], nums[6]).map_err(with_line)?,
                center_radius: nums.get(7).copied(),
            }),
            ("anchor", 12) => {
                let stride = nums[2];
                if stride.fract() != 0.0 || stride < 0.0 {
                    return Err(err(format!("stride {stride} is not an integer")));
                }
                let (cls, obj) = (nums[7], nums[8]);
                if !(0.0..=1.0).contains(&cls) || !(0.0..=1.0).contains(&obj) {
                    return Err(err("probabilities must lie in [0, 1]".into()));
                }
                scene.anchors.push(Anchor {
                    cx: nums[0],
                    cy: nums[1],
                    stride: Stride::try_from(stride as u32).map_err(with_line)?,
                    pred_box: BBox::new(nums[3], nums[4], nums[5], nums[6]).map_err(with_line)?,
                    pred_cls: cls,
                    pred_obj: obj,
                    pred_head: HeadKeypoint::new(nums[9], nums[10], nums[11]).map_err(with_line)?,
                });
            }
            ("gt", n) => return Err(err(format!("gt takes 7 or 8 numbers, found {n}"))),
            ("anchor", n) => return Err(err(format!("anchor takes 12 numbers, found {n}"))),
            (other, _) => return Err(err(format!("unknown record {other:?}"))),
        }
    }
    Ok(scene)
}

/// Plain-text table: one line per ground truth with its `k` and positives
/// (cheapest first), then one line per anchor with its owner and costs.
pub fn format_assignment_table(cost: &DMatrix<f64>, assignment: &DynamicKAssignment) -> String {
    let mut out = String::new();
    for (g, positives) in assignment.positives.iter().enumerate() {
        let list: Vec<String> = positives.iter().map(|a| a.to_string()).collect();
        let status = if assignment.unsupported.contains(&g) { " unsupported" } else { "" };
        let _ = writeln!(out, "gt {g} k={} positives={}{status}", assignment.k[g], list.join(","));
    }
    for (a, owner) in assignment.owner.iter().enumerate() {
        let owner = owner.map_or_else(|| "-".to_string(), |g| g.to_string());
        let costs: Vec<String> = (0..cost.ncols()).map(|g| format!("{:.6}", cost[(a, g)])).collect();
        let _ = writeln!(out, "anchor {a} owner={owner} cost={}", costs.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_assign::{assign, AssignConfig};

    const TOY: &str = "\
# one 100x100 gt, five anchors near its center
gt 0 0 100 100  50 20 1
anchor 45 50 8   0 0 90 100   0.5 0.5  50 20 1
anchor 55 50 8   0 0 80 100   0.5 0.5  50 20 1
anchor 50 45 8   0 0 5 100    0.5 0.5  50 20 1
anchor 50 55 8   95 0 5 100   0.5 0.5  50 20 1
anchor 300 300 8 0 0 100 100  0.9 0.9  50 20 1
";

    #[test]
    fn parses_and_assigns_toy_scene() {
        let scene = parse_assign_scene(TOY).unwrap();
        assert_eq!((scene.anchors.len(), scene.gts.len()), (5, 1));
        let (cost, asg) = assign(&scene.anchors, &scene.gts, &AssignConfig::default());
        // IoU sum 0.9 + 0.8 + 0.05 + 0.05 = 1.8 -> k = 2.
        assert_eq!(asg.k, vec![2]);
        assert_eq!(asg.positives[0], vec![0, 1]);
        let table = format_assignment_table(&cost, &asg);
        assert!(table.starts_with("gt 0 k=2 positives=0,1\n"));
        assert!(table.contains("anchor 4 owner=-"));
    }

    #[test]
    fn reports_bad_lines() {
        for (text, line) in [
            ("gt 0 0 1 1 0 0 1\nanchor 1 2 3\n", 2),
            ("bogus 1\n", 1),
            ("gt 0 0 -1 1 0 0 1\n", 1),
            ("\n\nanchor 1 1 12 0 0 1 1 0.5 0.5 0 0 1\n", 3),
            ("anchor 1 1 8 0 0 1 1 1.5 0.5 0 0 1\n", 1),
        ] {
            match parse_assign_scene(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?} gave {other:?}"),
            }
        }
    }
}
