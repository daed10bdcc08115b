//! Binary index persistence.
//!
//! `ANNB` holds an augmented-graph index: header, codebooks, fixed-width
//! neighborhood adjacency, then the sparse bridge graph. `ANNV` (see
//! [`crate::ivf`]) embeds an `ANNB` blob for its coarse centers. All integers
//! little-endian, floats IEEE-754 LE. Readers validate untrusted input and
//! never trust header counts for up-front allocation.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataset::{ElementKind, MAX_DIM};
use crate::error::{Error, Result};
use crate::graph::{
    compute_stats, AugmentedGraph, BridgeGraph, IndexParams, NeighborhoodGraph,
};
use crate::quantizer::{ProductQuantizer, SubspaceLayout};

pub const INDEX_MAGIC: [u8; 4] = *b"ANNB";
pub const IVF_MAGIC: [u8; 4] = *b"ANNV";
pub const FORMAT_VERSION: u32 = 1;

fn kind_byte(kind: ElementKind) -> u8 {
    match kind {
        ElementKind::Float32 => 0,
        ElementKind::Uint8 => 1,
    }
}

fn byte_kind(b: u8) -> Result<ElementKind> {
    match b {
        0 => Ok(ElementKind::Float32),
        1 => Ok(ElementKind::Uint8),
        _ => Err(Error::InvalidParam(format!("unknown element kind {b}"))),
    }
}

pub(crate) fn check_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<()> {
    let mut found = [0u8; 4];
    r.read_exact(&mut found)
        .map_err(|_| Error::Truncated("magic".into()))?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(Error::BadVersion(version));
    }
    Ok(())
}

pub(crate) fn write_pq(pq: &ProductQuantizer, w: &mut impl Write) -> Result<()> {
    w.write_u32::<LittleEndian>(pq.num_subspaces() as u32)?;
    for &d in pq.layout().dims() {
        w.write_u32::<LittleEndian>(d as u32)?;
    }
    w.write_u32::<LittleEndian>(pq.clusters() as u32)?;
    w.write_u64::<LittleEndian>(pq.seed())?;
    for cb in pq.codebooks() {
        for &x in cb {
            w.write_f32::<LittleEndian>(x)?;
        }
    }
    Ok(())
}

pub(crate) fn read_pq(r: &mut impl Read) -> Result<ProductQuantizer> {
    let m = r.read_u32::<LittleEndian>()? as usize;
    if m == 0 || m > MAX_DIM {
        return Err(Error::InvalidParam(format!("subspace count {m}")));
    }
    let mut dims = Vec::with_capacity(m.min(1024));
    for _ in 0..m {
        let d = r.read_u32::<LittleEndian>()? as usize;
        if d == 0 || d > MAX_DIM {
            return Err(Error::InvalidParam(format!("subspace dim {d}")));
        }
        dims.push(d);
    }
    let layout = SubspaceLayout::from_dims(dims)?;
    if layout.dim() > MAX_DIM {
        return Err(Error::InvalidParam("dimension too large".into()));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n < 2 || n > u16::MAX as usize + 1 {
        return Err(Error::InvalidParam(format!("clusters per subspace {n}")));
    }
    let seed = r.read_u64::<LittleEndian>()?;
    let mut codebooks = Vec::with_capacity(m);
    for i in 0..m {
        let len = n * layout.dims()[i];
        let mut cb = Vec::new();
        for _ in 0..len {
            let x = r
                .read_f32::<LittleEndian>()
                .map_err(|_| Error::Truncated(format!("codebook {i}")))?;
            if !x.is_finite() {
                return Err(Error::InvalidParam("non-finite codebook entry".into()));
            }
            cb.push(x);
        }
        codebooks.push(cb);
    }
    Ok(ProductQuantizer::new(layout, n, codebooks, seed))
}

pub fn write_index(g: &AugmentedGraph, w: &mut impl Write) -> Result<()> {
    w.write_all(&INDEX_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u8(kind_byte(g.element_kind))?;
    w.write_u32::<LittleEndian>(g.pq.layout().dim() as u32)?;
    w.write_u32::<LittleEndian>(g.ngraph.num_nodes() as u32)?;
    w.write_u32::<LittleEndian>(g.params.m as u32)?;
    w.write_u32::<LittleEndian>(g.params.n as u32)?;
    w.write_u32::<LittleEndian>(g.params.r as u32)?;
    w.write_u32::<LittleEndian>(g.params.t as u32)?;
    w.write_u32::<LittleEndian>(g.params.b as u32)?;
    w.write_u64::<LittleEndian>(g.params.seed)?;
    write_pq(&g.pq, w)?;
    for id in 0..g.ngraph.num_nodes() as u32 {
        for &(nb, dist) in g.ngraph.neighbors(id) {
            w.write_u32::<LittleEndian>(nb)?;
            w.write_f32::<LittleEndian>(dist)?;
        }
    }
    w.write_u64::<LittleEndian>(g.bgraph.num_bridges() as u64)?;
    for (bid, list) in g.bgraph.iter() {
        w.write_u64::<LittleEndian>(bid)?;
        w.write_u32::<LittleEndian>(list.len() as u32)?;
        for &(id, dist) in list {
            w.write_u32::<LittleEndian>(id)?;
            w.write_f32::<LittleEndian>(dist)?;
        }
    }
    Ok(())
}

pub fn read_index(r: &mut impl Read) -> Result<AugmentedGraph> {
    check_magic(r, INDEX_MAGIC)?;
    let kind = byte_kind(r.read_u8()?)?;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let n_nodes = r.read_u32::<LittleEndian>()? as usize;
    let m = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let degree = r.read_u32::<LittleEndian>()? as usize;
    let t = r.read_u32::<LittleEndian>()? as usize;
    let b = r.read_u32::<LittleEndian>()? as usize;
    let seed = r.read_u64::<LittleEndian>()?;
    if d == 0 || d > MAX_DIM {
        return Err(Error::InvalidDim(d as i64));
    }
    if n_nodes == 0 || degree == 0 || degree >= n_nodes || t == 0 || b == 0 {
        return Err(Error::InvalidParam("bad index header".into()));
    }
    let pq = read_pq(r)?;
    if pq.layout().dim() != d || pq.num_subspaces() != m || pq.clusters() != n || pq.seed() != seed
    {
        return Err(Error::InvalidParam("header/quantizer mismatch".into()));
    }
    let mut adj = Vec::new();
    for node in 0..n_nodes {
        for _ in 0..degree {
            let id = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Truncated(format!("adjacency of node {node}")))?;
            let dist = r
                .read_f32::<LittleEndian>()
                .map_err(|_| Error::Truncated(format!("adjacency of node {node}")))?;
            if id as usize >= n_nodes || !dist.is_finite() {
                return Err(Error::InvalidParam("bad adjacency entry".into()));
            }
            adj.push((id, dist));
        }
    }
    let ngraph = NeighborhoodGraph::from_flat(degree, adj);
    let bridge_total = pq.bridge_count();
    let num_bridges = r.read_u64::<LittleEndian>()?;
    let mut entries = Vec::new();
    let mut prev: Option<u64> = None;
    for _ in 0..num_bridges {
        let bid = r
            .read_u64::<LittleEndian>()
            .map_err(|_| Error::Truncated("bridge graph".into()))?;
        if prev.is_some_and(|p| p >= bid) {
            return Err(Error::InvalidParam("bridge ids not ascending".into()));
        }
        if bridge_total.is_some_and(|total| bid >= total) {
            return Err(Error::InvalidParam("bridge id out of range".into()));
        }
        prev = Some(bid);
        let len = r.read_u32::<LittleEndian>()? as usize;
        if len == 0 || len > b {
            return Err(Error::InvalidParam("bad bridge list length".into()));
        }
        let mut list = Vec::with_capacity(len);
        for _ in 0..len {
            let id = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Truncated("bridge list".into()))?;
            let dist = r
                .read_f32::<LittleEndian>()
                .map_err(|_| Error::Truncated("bridge list".into()))?;
            if id as usize >= n_nodes || !dist.is_finite() {
                return Err(Error::InvalidParam("bad bridge entry".into()));
            }
            list.push((id, dist));
        }
        entries.push((bid, list));
    }
    let bgraph = BridgeGraph::from_entries(entries);
    let stats = compute_stats(&bgraph, bridge_total.unwrap_or(0));
    Ok(AugmentedGraph {
        pq,
        ngraph,
        bgraph,
        params: IndexParams {
            m,
            n,
            r: degree,
            t,
            b,
            seed,
        },
        stats,
        element_kind: kind,
    })
}

pub fn save_index(g: &AugmentedGraph, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_index(g, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_index(path: impl AsRef<Path>) -> Result<AugmentedGraph> {
    let mut r = BufReader::new(File::open(path)?);
    read_index(&mut r)
}
