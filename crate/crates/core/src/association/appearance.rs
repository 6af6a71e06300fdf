//! Detector-feature appearance descriptors.

use crate::error::{Error, Result};
use crate::geometry::{gaussian_weight, grid_map, GridIndex, HeadKeypoint, Stride};

const UNIT_TOLERANCE: f64 = 1e-6;

/// Unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wraps a vector that is already unit-norm.
    pub fn new(v: Vec<f64>) -> Result<Self> {
        let norm = l2(&v);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("embedding norm {norm} is not 1")));
        }
        Ok(Self(v))
    }

    /// Rescales `v` to unit norm.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        let norm = l2(&v);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateDescriptor);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(v))
    }

    pub fn one_hot(dim: usize, index: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[index] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `momentum * self + (1 - momentum) * other`, renormalised. Falls back
    /// to `other` if the blend cancels out.
    pub fn blend(&self, other: &Embedding, momentum: f64) -> Result<Embedding> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let mixed = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| momentum * a + (1.0 - momentum) * b)
            .collect();
        Ok(Embedding::normalized(mixed).unwrap_or_else(|_| other.clone()))
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Cls,
    Reg,
    Head,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Cls, FeatureKind::Reg, FeatureKind::Head];
}

/// Per-detection (or per-track) features from the detector's branches. Any
/// subset may be missing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppearanceDescriptor {
    pub cls: Option<Embedding>,
    pub reg: Option<Embedding>,
    pub head: Option<Embedding>,
}

impl AppearanceDescriptor {
    pub fn get(&self, kind: FeatureKind) -> Option<&Embedding> {
        match kind {
            FeatureKind::Cls => self.cls.as_ref(),
            FeatureKind::Reg => self.reg.as_ref(),
            FeatureKind::Head => self.head.as_ref(),
        }
    }

    pub fn slot(&mut self, kind: FeatureKind) -> &mut Option<Embedding> {
        match kind {
            FeatureKind::Cls => &mut self.cls,
            FeatureKind::Reg => &mut self.reg,
            FeatureKind::Head => &mut self.head,
        }
    }

    pub fn is_empty(&self) -> bool {
        FeatureKind::ALL.iter().all(|&k| self.get(k).is_none())
    }

    /// Exponential moving average with `observed`, kind by kind. Kinds only
    /// present on one side are taken from that side.
    pub fn blend(&self, observed: &AppearanceDescriptor, momentum: f64) -> AppearanceDescriptor {
        let mut out = AppearanceDescriptor::default();
        for kind in FeatureKind::ALL {
            *out.slot(kind) = match (self.get(kind), observed.get(kind)) {
                (Some(old), Some(new)) => Some(old.blend(new, momentum).unwrap_or_else(|_| new.clone())),
                (Some(old), None) => Some(old.clone()),
                (None, new) => new.cloned(),
            };
        }
        out
    }
}

/// Relative weights of the three feature kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureWeights {
    pub cls: f64,
    pub reg: f64,
    pub head: f64,
}

impl Default for FeatureWeights {
    fn default() -> Self {
        Self {
            cls: 0.5,
            reg: 0.5,
            head: 0.0,
        }
    }
}

impl FeatureWeights {
    pub fn get(&self, kind: FeatureKind) -> f64 {
        match kind {
            FeatureKind::Cls => self.cls,
            FeatureKind::Reg => self.reg,
            FeatureKind::Head => self.head,
        }
    }
}

/// `1 - <p, q>` for unit vectors.
pub fn cosine_cost(p: &Embedding, q: &Embedding) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            actual: q.dim(),
        });
    }
    let dot: f64 = p.0.iter().zip(&q.0).map(|(a, b)| a * b).sum();
    Ok((1.0 - dot).clamp(0.0, 2.0))
}

/// Weighted cosine cost over the feature kinds both descriptors carry, with
/// the weights renormalised over that subset. `Ok(None)` means no usable
/// kind is shared and the caller should fall back to motion alone.
pub fn appearance_cost(
    track: &AppearanceDescriptor,
    det: &AppearanceDescriptor,
    weights: &FeatureWeights,
) -> Result<Option<f64>> {
    let mut weighted = 0.0;
    let mut total_weight = 0.0;
    for kind in FeatureKind::ALL {
        let w = weights.get(kind);
        if w <= 0.0 {
            continue;
        }
        if let (Some(a), Some(b)) = (track.get(kind), det.get(kind)) {
            weighted += w * cosine_cost(a, b)?;
            total_weight += w;
        }
    }
    Ok((total_weight > 0.0).then(|| weighted / total_weight))
}

/// One feature-map cell and the pixel coordinates of its center.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCell {
    pub center: (f64, f64),
    pub feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeaturePatch {
    pub cells: Vec<PatchCell>,
}

/// Scales every cell by its Gaussian weight around the head point, then
/// flattens and renormalises.
pub fn gaussian_weighted_descriptor(
    patch: &FeaturePatch,
    head: &HeadKeypoint,
    sigma: f64,
) -> Result<Embedding> {
    let mut flat = Vec::with_capacity(patch.cells.iter().map(|c| c.feature.len()).sum());
    for cell in &patch.cells {
        let w = gaussian_weight(cell.center, head, sigma)?;
        flat.extend(cell.feature.iter().map(|f| f * w));
    }
    Embedding::normalized(flat)
}

/// A single-level `height x width x channels` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub stride: Stride,
    pub width: u32,
    pub height: u32,
    pub channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(stride: Stride, width: u32, height: u32, channels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize * channels;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            stride,
            width,
            height,
            channels,
            data,
        })
    }

    pub fn cell(&self, idx: GridIndex) -> Option<&[f64]> {
        if idx.stride != self.stride || idx.i >= self.width || idx.j >= self.height {
            return None;
        }
        let start = (idx.j as usize * self.width as usize + idx.i as usize) * self.channels;
        Some(&self.data[start..start + self.channels])
    }

    /// Feature vector of the cell containing image point `(x, y)`.
    pub fn query(&self, x: f64, y: f64) -> Result<&[f64]> {
        let idx = grid_map(x, y, self.stride)?;
        self.cell(idx)
            .ok_or_else(|| Error::invalid(format!("point ({x}, {y}) is outside the feature map")))
    }

    /// Cells within `radius` cells (Chebyshev) of the cell containing `(x, y)`,
    /// clipped to the map, in row-major order.
    pub fn patch(&self, x: f64, y: f64, radius: u32) -> Result<FeaturePatch> {
        let c = grid_map(x, y, self.stride)?;
        if c.i >= self.width || c.j >= self.height {
            return Err(Error::invalid(format!("point ({x}, {y}) is outside the feature map")));
        }
        let mut cells = Vec::new();
        for j in c.j.saturating_sub(radius)..=(c.j + radius).min(self.height - 1) {
            for i in c.i.saturating_sub(radius)..=(c.i + radius).min(self.width - 1) {
                let idx = GridIndex { i, j, stride: self.stride };
                cells.push(PatchCell {
                    center: idx.cell_center(),
                    feature: self.cell(idx).expect("index clipped to map").to_vec(),
                });
            }
        }
        Ok(FeaturePatch { cells })
    }
}
