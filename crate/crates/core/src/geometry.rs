//! Box and keypoint arithmetic.
//!
//! Boxes use the MOTChallenge convention: top-left corner plus width and
//! height, all in pixels. Corner form is only used inside the overlap
//! computations.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Axis-aligned box: top-left corner `(x, y)`, width `w`, height `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let ok = [x, y, w, h].iter().all(|v| v.is_finite()) && w > 0.0 && h > 0.0;
        if ok {
            Ok(Self { x, y, w, h })
        } else {
            Err(Error::InvalidBox { x, y, w, h })
        }
    }

    /// Builds a box from center, aspect ratio (`w / h`) and height.
    pub fn from_center_aspect(u: f64, v: f64, aspect: f64, h: f64) -> Result<Self> {
        let w = aspect * h;
        Self::new(u - w / 2.0, v - h / 2.0, w, h)
    }

    pub fn from_center(u: f64, v: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(u - w / 2.0, v - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn aspect(&self) -> f64 {
        self.w / self.h
    }

    /// `(u, v, a, h)` measurement vector used by the Kalman filter.
    pub fn to_measurement(&self) -> [f64; 4] {
        let (u, v) = self.center();
        [u, v, self.aspect(), self.h]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x: self.x + dx,
            y: self.y + dy,
            ..*self
        }
    }

    fn intersection(&self, other: &BBox) -> f64 {
        let iw = (self.right().min(other.right()) - self.x.max(other.x)).max(0.0);
        let ih = (self.bottom().min(other.bottom()) - self.y.max(other.y)).max(0.0);
        iw * ih
    }
}

/// Head keypoint: pixel position plus a visibility score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadKeypoint {
    pub x: f64,
    pub y: f64,
    pub visibility: f64,
}

impl HeadKeypoint {
    pub fn new(x: f64, y: f64, visibility: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::NonFinite("head keypoint"));
        }
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::invalid(format!(
                "head visibility {visibility} outside [0, 1]"
            )));
        }
        Ok(Self { x, y, visibility })
    }
}

/// Feature-map stride of one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stride {
    S8,
    S16,
    S32,
}

impl Stride {
    pub fn pixels(self) -> u32 {
        match self {
            Stride::S8 => 8,
            Stride::S16 => 16,
            Stride::S32 => 32,
        }
    }
}

impl TryFrom<u32> for Stride {
    type Error = Error;

    fn try_from(s: u32) -> Result<Self> {
        match s {
            8 => Ok(Stride::S8),
            16 => Ok(Stride::S16),
            32 => Ok(Stride::S32),
            other => Err(Error::invalid(format!("stride {other} not in {{8, 16, 32}}"))),
        }
    }
}

/// Integer cell position on a feature map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridIndex {
    pub i: u32,
    pub j: u32,
    pub stride: Stride,
}

impl GridIndex {
    /// Pixel-space center of the cell.
    pub fn cell_center(&self) -> (f64, f64) {
        let s = self.stride.pixels() as f64;
        ((self.i as f64 + 0.5) * s, (self.j as f64 + 0.5) * s)
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Complete-IoU loss: `1 - IoU + rho^2 / c^2 + alpha * v`, where `rho` is the
/// center distance, `c` the diagonal of the smallest enclosing box and `v`
/// the aspect-consistency term.
pub fn ciou_loss(pred: &BBox, gt: &BBox) -> f64 {
    let overlap = iou(pred, gt);
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let rho2 = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);

    let ex0 = pred.x.min(gt.x);
    let ey0 = pred.y.min(gt.y);
    let ex1 = pred.right().max(gt.right());
    let ey1 = pred.bottom().max(gt.bottom());
    let c2 = (ex1 - ex0).powi(2) + (ey1 - ey0).powi(2);

    let v = 4.0 / (PI * PI) * ((gt.w / gt.h).atan() - (pred.w / pred.h).atan()).powi(2);
    let alpha = if v > 0.0 { v / ((1.0 - overlap) + v) } else { 0.0 };

    1.0 - overlap + rho2 / c2 + alpha * v
}

/// Maps an image point to the feature-map cell containing it.
pub fn grid_map(x_c: f64, y_c: f64, stride: Stride) -> Result<GridIndex> {
    if !(x_c.is_finite() && y_c.is_finite()) {
        return Err(Error::NonFinite("grid_map point"));
    }
    if x_c < 0.0 || y_c < 0.0 {
        return Err(Error::invalid(format!(
            "grid_map requires non-negative coordinates, got ({x_c}, {y_c})"
        )));
    }
    let s = stride.pixels() as f64;
    Ok(GridIndex {
        i: (x_c / s).floor() as u32,
        j: (y_c / s).floor() as u32,
        stride,
    })
}

/// Isotropic Gaussian weight of `p` around the head point.
pub fn gaussian_weight(p: (f64, f64), center: &HeadKeypoint, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let d2 = (p.0 - center.x).powi(2) + (p.1 - center.y).powi(2);
    Ok((-d2 / (2.0 * sigma * sigma)).exp())
}
