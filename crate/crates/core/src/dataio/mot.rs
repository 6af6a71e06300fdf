use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BBox, HeadKeypoint};

/// One MOTChallenge record: `frame,id,x,y,w,h,conf,e0,e1,e2`.
///
/// Detections carry `id = -1`. The trailing three fields are `-1`
/// placeholders, or the head keypoint `(x, y, visibility)` in head mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotLine {
    pub frame: u32,
    pub id: i64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub conf: f64,
    pub extra: [f64; 3],
}

impl MotLine {
    pub fn new(frame: u32, id: i64, bbox: &BBox, conf: f64) -> Self {
        Self {
            frame,
            id,
            x: bbox.x,
            y: bbox.y,
            w: bbox.w,
            h: bbox.h,
            conf,
            extra: [-1.0; 3],
        }
    }

    pub fn with_head(mut self, head: &HeadKeypoint) -> Self {
        self.extra = [head.x, head.y, head.visibility];
        self
    }

    pub fn bbox(&self) -> Result<BBox> {
        BBox::new(self.x, self.y, self.w, self.h)
    }

    /// Head keypoint from the trailing fields, `None` for placeholders.
    pub fn head(&self) -> Result<Option<HeadKeypoint>> {
        if self.extra == [-1.0; 3] {
            return Ok(None);
        }
        HeadKeypoint::new(self.extra[0], self.extra[1], self.extra[2]).map(Some)
    }

    fn parse(text: &str, line: usize) -> Result<Self> {
        let err = |message: String| Error::Parse { line, message };
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if !(7..=10).contains(&fields.len()) {
            return Err(err(format!("expected 7 to 10 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| err(format!("field {} is not a number: {:?}", i + 1, fields[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("field {} is not finite", i + 1)))
            }
        };
        let frame: u32 = fields[0]
            .parse()
            .map_err(|_| err(format!("frame is not a non-negative integer: {:?}", fields[0])))?;
        if frame == 0 {
            return Err(err("frame numbers start at 1".into()));
        }
        let id: i64 = fields[1]
            .parse()
            .map_err(|_| err(format!("id is not an integer: {:?}", fields[1])))?;
        let mut extra = [-1.0; 3];
        for (k, slot) in extra.iter_mut().enumerate() {
            if 7 + k < fields.len() {
                *slot = num(7 + k)?;
            }
        }
        let rec = Self {
            frame,
            id,
            x: num(2)?,
            y: num(3)?,
            w: num(4)?,
            h: num(5)?,
            conf: num(6)?,
            extra,
        };
        if !(rec.w > 0.0 && rec.h > 0.0) {
            return Err(err("box width and height must be positive".into()));
        }
        Ok(rec)
    }
}

impl std::fmt::Display for MotLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            self.frame, self.id, self.x, self.y, self.w, self.h, self.conf, self.extra[0], self.extra[1], self.extra[2]
        )
    }
}

fn sort_lines(lines: &mut [MotLine]) {
    lines.sort_by_key(|l| (l.frame, l.id));
}

/// Parses MOT text, skipping blank lines. Output is stably sorted by
/// `(frame, id)`, so detections keep their file order within a frame.
pub fn parse_mot<R: BufRead>(reader: R) -> Result<Vec<MotLine>> {
    let mut lines = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        lines.push(MotLine::parse(&text, i + 1)?);
    }
    sort_lines(&mut lines);
    Ok(lines)
}

pub fn read_mot(path: &Path) -> Result<Vec<MotLine>> {
    parse_mot(fs::read(path)?.as_slice())
}

/// One line per record, sorted by `(frame, id)`.
pub fn format_mot(lines: &[MotLine]) -> String {
    let mut sorted = lines.to_vec();
    sort_lines(&mut sorted);
    let mut out = String::new();
    for l in &sorted {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

pub fn write_mot(path: &Path, lines: &[MotLine]) -> Result<()> {
    Ok(fs::write(path, format_mot(lines))?)
}
