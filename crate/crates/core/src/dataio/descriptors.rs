use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::association::{AppearanceDescriptor, Embedding};
use crate::error::{Error, Result};

pub const DESCRIPTOR_MAGIC: [u8; 4] = *b"FTFV";
pub const DESCRIPTOR_VERSION: u16 = 1;
const NORM_TOLERANCE: f64 = 1e-4;

/// Descriptor vectors of one detection. Empty vectors mean the feature is
/// absent for the whole file (its dimension is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorRecord {
    pub frame: u32,
    pub det_index: u32,
    pub cls: Vec<f32>,
    pub reg: Vec<f32>,
    pub head: Vec<f32>,
}

impl DescriptorRecord {
    pub fn to_descriptor(&self) -> Result<AppearanceDescriptor> {
        let conv = |v: &[f32]| -> Result<Option<Embedding>> {
            if v.is_empty() {
                Ok(None)
            } else {
                Embedding::normalized(v.iter().map(|&x| x as f64).collect()).map(Some)
            }
        };
        Ok(AppearanceDescriptor {
            cls: conv(&self.cls)?,
            reg: conv(&self.reg)?,
            head: conv(&self.head)?,
        })
    }
}

/// Little-endian sidecar keyed by `(frame, det_index)`:
/// magic, version `u16`, three `u32` dimensions, record count `u64`, then
/// per record `frame u32`, `det_index u32` and the three `f32` arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorFile {
    pub dim_cls: u32,
    pub dim_reg: u32,
    pub dim_head: u32,
    pub records: Vec<DescriptorRecord>,
}

fn check_norm(v: &[f32], frame: u32, det: u32) -> Result<()> {
    if v.is_empty() {
        return Ok(());
    }
    let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::DescriptorFormat(format!(
            "vector of frame {frame} detection {det} has norm {n}"
        )));
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::DescriptorFormat("file is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_f32s(r: &mut impl Read, n: u32) -> Result<Vec<f32>> {
    (0..n).map(|_| Ok(f32::from_le_bytes(read_array(r)?))).collect()
}

impl DescriptorFile {
    pub fn new(dim_cls: u32, dim_reg: u32, dim_head: u32) -> Self {
        Self { dim_cls, dim_reg, dim_head, records: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        for r in &self.records {
            let dims = [
                (r.cls.len(), self.dim_cls),
                (r.reg.len(), self.dim_reg),
                (r.head.len(), self.dim_head),
            ];
            for (len, dim) in dims {
                if len != dim as usize {
                    return Err(Error::DimensionMismatch { expected: dim as usize, actual: len });
                }
            }
            for v in [&r.cls, &r.reg, &r.head] {
                check_norm(v, r.frame, r.det_index)?;
            }
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        self.validate()?;
        w.write_all(&DESCRIPTOR_MAGIC)?;
        w.write_all(&DESCRIPTOR_VERSION.to_le_bytes())?;
        for d in [self.dim_cls, self.dim_reg, self.dim_head] {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            w.write_all(&r.frame.to_le_bytes())?;
            w.write_all(&r.det_index.to_le_bytes())?;
            for v in r.cls.iter().chain(&r.reg).chain(&r.head) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if read_array::<4>(r)? != DESCRIPTOR_MAGIC {
            return Err(Error::DescriptorFormat("bad magic".into()));
        }
        let version = u16::from_le_bytes(read_array(r)?);
        if version != DESCRIPTOR_VERSION {
            return Err(Error::DescriptorFormat(format!("unsupported version {version}")));
        }
        let dim_cls = u32::from_le_bytes(read_array(r)?);
        let dim_reg = u32::from_le_bytes(read_array(r)?);
        let dim_head = u32::from_le_bytes(read_array(r)?);
        let count = u64::from_le_bytes(read_array(r)?);
        let mut records = Vec::new();
        for _ in 0..count {
            let frame = u32::from_le_bytes(read_array(r)?);
            let det_index = u32::from_le_bytes(read_array(r)?);
            records.push(DescriptorRecord {
                frame,
                det_index,
                cls: read_f32s(r, dim_cls)?,
                reg: read_f32s(r, dim_reg)?,
                head: read_f32s(r, dim_head)?,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::DescriptorFormat("trailing bytes after the last record".into()));
        }
        let file = Self { dim_cls, dim_reg, dim_head, records };
        file.validate()?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut fs::read(path)?.as_slice())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_bytes()?)?)
    }

    /// Record position by `(frame, det_index)`; duplicate keys are an error.
    pub fn index(&self) -> Result<HashMap<(u32, u32), usize>> {
        let mut map = HashMap::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if map.insert((r.frame, r.det_index), i).is_some() {
                return Err(Error::DescriptorFormat(format!(
                    "duplicate record for frame {} detection {}",
                    r.frame, r.det_index
                )));
            }
        }
        Ok(map)
    }
}
