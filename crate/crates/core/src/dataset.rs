//! Dataset representation and bit-exact `.fvecs` / `.bvecs` / `.ivecs` I/O.
//!
//! All three formats share the same record layout: a 32-bit little-endian
//! signed integer `d` followed by `d` components (f32, u8 or i32). Every
//! record in one file must carry the same `d`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Sanity cap on the per-record dimension of untrusted files.
pub const MAX_DIM: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Float32,
    Uint8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Fvecs,
    Bvecs,
    Ivecs,
}

impl Format {
    pub fn element_kind(self) -> ElementKind {
        match self {
            Format::Bvecs => ElementKind::Uint8,
            _ => ElementKind::Float32,
        }
    }
}

/// An immutable set of `count` vectors of dimension `dim`, stored contiguously.
///
/// Byte-valued data is promoted to f32 once at load time (the promotion is
/// exact), so a single distance kernel serves both element kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    data: Vec<f32>,
    kind: ElementKind,
}

impl Dataset {
    pub fn from_vec(dim: usize, data: Vec<f32>, kind: ElementKind) -> Self {
        assert!(dim > 0 && data.len() % dim == 0);
        Dataset { dim, data, kind }
    }

    pub fn empty() -> Self {
        Dataset {
            dim: 0,
            data: Vec::new(),
            kind: ElementKind::Float32,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn element_kind(&self) -> ElementKind {
        self.kind
    }

    pub fn get(&self, id: usize) -> &[f32] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Parses a dataset from a reader. Safe on untrusted input: allocation
    /// grows only as records are actually read.
    pub fn read(mut r: impl Read, format: Format) -> Result<Dataset> {
        let mut data: Vec<f32> = Vec::new();
        let mut dim = 0usize;
        let mut record = 0usize;
        loop {
            let d = match r.read_i32::<LittleEndian>() {
                Ok(d) => d,
                Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            };
            if d <= 0 || d as usize > MAX_DIM {
                return Err(Error::InvalidDim(d as i64));
            }
            let d = d as usize;
            if record == 0 {
                dim = d;
            } else if d != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: d,
                    record,
                });
            }
            read_components(&mut r, format, d, &mut data)
                .map_err(|_| Error::Truncated(format!("record {record}")))?;
            record += 1;
        }
        if record == 0 {
            return Ok(Dataset::empty());
        }
        Ok(Dataset {
            dim,
            data,
            kind: format.element_kind(),
        })
    }

    pub fn write(&self, mut w: impl Write, format: Format) -> Result<()> {
        for v in self.iter() {
            w.write_i32::<LittleEndian>(self.dim as i32)?;
            for &x in v {
                match format {
                    Format::Fvecs => w.write_f32::<LittleEndian>(x)?,
                    Format::Bvecs => w.write_u8(x as u8)?,
                    Format::Ivecs => w.write_i32::<LittleEndian>(x as i32)?,
                }
            }
        }
        Ok(())
    }
}

fn read_components(
    r: &mut impl Read,
    format: Format,
    d: usize,
    out: &mut Vec<f32>,
) -> std::io::Result<()> {
    match format {
        Format::Fvecs => {
            for _ in 0..d {
                out.push(r.read_f32::<LittleEndian>()?);
            }
        }
        Format::Bvecs => {
            for _ in 0..d {
                out.push(r.read_u8()? as f32);
            }
        }
        Format::Ivecs => {
            for _ in 0..d {
                out.push(r.read_i32::<LittleEndian>()? as f32);
            }
        }
    }
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let f = File::open(path)?;
    Dataset::read(BufReader::new(f), format)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let f = File::create(path)?;
    let mut w = BufWriter::new(f);
    ds.write(&mut w, format)?;
    w.flush()?;
    Ok(())
}

/// Reads an `.ivecs` file as per-record id lists (ground-truth neighbor ids).
pub fn read_id_lists(mut r: impl Read) -> Result<Vec<Vec<u32>>> {
    let mut lists = Vec::new();
    loop {
        let d = match r.read_i32::<LittleEndian>() {
            Ok(d) => d,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        };
        if d < 0 || d as usize > MAX_DIM {
            return Err(Error::InvalidDim(d as i64));
        }
        let mut list = Vec::new();
        for _ in 0..d {
            let v = r
                .read_i32::<LittleEndian>()
                .map_err(|_| Error::Truncated(format!("record {}", lists.len())))?;
            list.push(v as u32);
        }
        lists.push(list);
    }
    Ok(lists)
}

pub fn write_id_lists(lists: &[Vec<u32>], mut w: impl Write) -> Result<()> {
    for list in lists {
        w.write_i32::<LittleEndian>(list.len() as i32)?;
        for &id in list {
            w.write_i32::<LittleEndian>(id as i32)?;
        }
    }
    Ok(())
}

/// Per-query instrumentation counters. Never shared across threads.
#[derive(Debug, Default, Clone, Copy)]
pub struct DistanceCounter {
    /// Full d-dimensional distance evaluations.
    pub full_dist_evals: u64,
    /// Subvector distance evaluations.
    pub sub_dist_evals: u64,
    /// Priority-queue push/pop operations.
    pub heap_ops: u64,
}

impl DistanceCounter {
    pub fn reset(&mut self) {
        *self = DistanceCounter::default();
    }
}

/// Squared Euclidean distance. Panics on dimension mismatch.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "sq_dist: dimension mismatch");
    let mut acc = 0.0f32;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Counted variant of [`sq_dist`].
#[inline]
pub fn sq_dist_counted(a: &[f32], b: &[f32], counter: &mut DistanceCounter) -> f32 {
    counter.full_dist_evals += 1;
    sq_dist(a, b)
}

/// Ascending order on (distance, id); the total tie-break used everywhere.
#[inline]
pub fn cmp_dist_id(a: &(u32, f32), b: &(u32, f32)) -> std::cmp::Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Exact k nearest neighbors by linear scan, ascending by (distance, id).
pub fn brute_force_knn(
    ds: &Dataset,
    query: &[f32],
    k: usize,
    counter: &mut DistanceCounter,
) -> Result<Vec<(u32, f32)>> {
    if ds.count() == 0 {
        return Err(Error::EmptyDataset);
    }
    if query.len() != ds.dim() {
        return Err(Error::Dimension {
            left: query.len(),
            right: ds.dim(),
        });
    }
    if k > ds.count() {
        return Err(Error::KTooLarge { k, n: ds.count() });
    }
    let mut all: Vec<(u32, f32)> = ds
        .iter()
        .enumerate()
        .map(|(i, v)| (i as u32, sq_dist_counted(query, v, counter)))
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k, cmp_dist_id);
        all.truncate(k);
    }
    all.sort_unstable_by(cmp_dist_id);
    Ok(all)
}
