//! Inverted-file index whose coarse quantizer is searched with the augmented
//! graph, with product-quantized residuals and asymmetric-distance reranking.

use rayon::prelude::*;

use crate::dataset::{cmp_dist_id, sq_dist, sq_dist_counted, Dataset, DistanceCounter, ElementKind};
use crate::error::{Error, Result};
use crate::graph::{build_index, AugmentedGraph, IndexParams};
use crate::quantizer::{PQCode, ProductQuantizer};
use crate::search::{SearchParams, Searcher};

#[derive(Debug, Clone, Copy)]
pub struct IvfBuildParams {
    /// Number of coarse centers (inverted lists).
    pub num_centers: usize,
    /// Lloyd iterations for the coarse vocabulary.
    pub coarse_iters: usize,
    /// Augmented-graph parameters for the index over the centers.
    pub coarse_graph: IndexParams,
    /// Residual product quantizer: partitions and clusters per partition.
    pub residual_m: usize,
    pub residual_n: usize,
    pub residual_iters: usize,
    /// Visit budget when assigning a vector to its nearest center via the
    /// center graph; brute force kicks in when the graph search comes back
    /// empty (counted in `assign_fallbacks`).
    pub assign_budget: usize,
    pub seed: u64,
}

impl Default for IvfBuildParams {
    fn default() -> Self {
        IvfBuildParams {
            num_centers: 1024,
            coarse_iters: 10,
            coarse_graph: IndexParams {
                m: 4,
                n: 32,
                r: 10,
                t: 50,
                b: 5,
                seed: 0,
            },
            residual_m: 8,
            residual_n: 256,
            residual_iters: 10,
            assign_budget: 64,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RerankParams {
    /// Nearest inverted lists visited (M).
    pub probes: usize,
    /// Candidates kept for exact reranking (L).
    pub list_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseIndex {
    pub centers: Dataset,
    pub center_graph: AugmentedGraph,
    pub residual_pq: ProductQuantizer,
    /// Per center: (reference id, residual code), in ascending id order.
    pub lists: Vec<Vec<(u32, PQCode)>>,
    /// References whose graph-based assignment fell back to brute force.
    pub assign_fallbacks: u64,
    pub assign_budget: usize,
}

impl CoarseIndex {
    pub fn num_centers(&self) -> usize {
        self.lists.len()
    }

    pub fn num_vectors(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    /// Extra bytes per vector spent on the residual code.
    pub fn code_bytes(&self) -> usize {
        let per_index = if self.residual_pq.clusters() > 256 { 2 } else { 1 };
        self.residual_pq.num_subspaces() * per_index
    }
}

pub fn build_ivf(ds: &Dataset, params: IvfBuildParams) -> Result<CoarseIndex> {
    let n = ds.count();
    let k = params.num_centers;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let km = crate::kmeans::kmeans(ds.data(), ds.dim(), k, params.seed, params.coarse_iters)?;
    let centers = Dataset::from_vec(ds.dim(), km.centers, ElementKind::Float32);
    let center_graph = build_index(&centers, params.coarse_graph, params.coarse_iters.max(10))?;

    // graph-based nearest-center assignment with brute-force fallback; once
    // the budget covers every center the graph adds nothing, so scan exactly
    let assigned: Vec<(u32, bool)> = if params.assign_budget >= k {
        crate::dense::nearest_centers(ds.data(), centers.data(), ds.dim())
            .into_iter()
            .map(|(c, _)| (c, false))
            .collect()
    } else {
        (0..n)
        .into_par_iter()
        .map_init(
            || Searcher::new(&center_graph, &centers).unwrap(),
            |searcher, i| {
                let mut c = DistanceCounter::default();
                let res = searcher
                    .search(
                        ds.get(i),
                        SearchParams {
                            k: 1,
                            t_max: params.assign_budget,
                        },
                        &mut c,
                    )
                    .unwrap();
                match res.first() {
                    Some(&(center, _)) => (center, false),
                    None => {
                        let best = centers
                            .iter()
                            .enumerate()
                            .map(|(c, v)| (c as u32, sq_dist(ds.get(i), v)))
                            .min_by(cmp_dist_id)
                            .unwrap();
                        (best.0, true)
                    }
                }
            },
        )
        .collect()
    };
    let assign_fallbacks = assigned.iter().filter(|&&(_, fb)| fb).count() as u64;

    let mut residuals = Vec::with_capacity(n * ds.dim());
    for (i, &(c, _)) in assigned.iter().enumerate() {
        let x = ds.get(i);
        let ctr = centers.get(c as usize);
        residuals.extend(x.iter().zip(ctr).map(|(a, b)| a - b));
    }
    let residual_ds = Dataset::from_vec(ds.dim(), residuals, ElementKind::Float32);
    let residual_pq = ProductQuantizer::train(
        &residual_ds,
        params.residual_m,
        params.residual_n.min(n),
        params.seed.wrapping_add(1),
        params.residual_iters,
    )?;
    let codes: Vec<PQCode> = (0..n)
        .into_par_iter()
        .map(|i| residual_pq.encode(residual_ds.get(i)).unwrap())
        .collect();
    let mut lists: Vec<Vec<(u32, PQCode)>> = vec![Vec::new(); k];
    for (i, (&(c, _), code)) in assigned.iter().zip(codes).enumerate() {
        lists[c as usize].push((i as u32, code));
    }
    Ok(CoarseIndex {
        centers,
        center_graph,
        residual_pq,
        lists,
        assign_fallbacks,
        assign_budget: params.assign_budget,
    })
}

/// Probes the nearest lists, scores their members by asymmetric distance on
/// the residual codes, exact-reranks the top L and returns the top k.
pub fn search_ivf(
    ix: &CoarseIndex,
    ds: &Dataset,
    q: &[f32],
    rerank: RerankParams,
    k: usize,
    counter: &mut DistanceCounter,
) -> Result<Vec<(u32, f32)>> {
    if rerank.probes == 0 || rerank.list_len == 0 || k == 0 {
        return Err(Error::InvalidParam("probes, list_len and k must be >= 1".into()));
    }
    let probes = rerank.probes.min(ix.num_centers());
    let budget = ix.assign_budget.max(4 * probes);
    let mut probed = if budget >= ix.num_centers() {
        let mut all: Vec<(u32, f32)> = ix
            .centers
            .iter()
            .enumerate()
            .map(|(c, v)| (c as u32, sq_dist_counted(q, v, counter)))
            .collect();
        all.sort_unstable_by(cmp_dist_id);
        all.truncate(probes);
        all
    } else {
        let mut searcher = Searcher::new(&ix.center_graph, &ix.centers)?;
        searcher.search(
            q,
            SearchParams {
                k: probes,
                t_max: budget,
            },
            counter,
        )?
    };
    if probed.len() < probes {
        // graph search could not reach enough centers; complete the probe
        // list by exact distance so large probe counts stay exhaustive
        let have: std::collections::HashSet<u32> = probed.iter().map(|e| e.0).collect();
        let mut rest: Vec<(u32, f32)> = ix
            .centers
            .iter()
            .enumerate()
            .filter(|(c, _)| !have.contains(&(*c as u32)))
            .map(|(c, v)| (c as u32, sq_dist_counted(q, v, counter)))
            .collect();
        rest.sort_unstable_by(cmp_dist_id);
        probed.extend(rest.into_iter().take(probes - probed.len()));
    }

    let mut scored: Vec<(u32, f32)> = Vec::new();
    let mut residual = vec![0.0f32; ds.dim()];
    for &(center, _) in &probed {
        let ctr = ix.centers.get(center as usize);
        for (r, (qx, cx)) in residual.iter_mut().zip(q.iter().zip(ctr)) {
            *r = qx - cx;
        }
        let tables = ix.residual_pq.build_tables(&residual, counter)?;
        for (id, code) in &ix.lists[center as usize] {
            scored.push((*id, tables.asymmetric_distance(code)));
        }
    }
    if rerank.list_len < scored.len() {
        scored.select_nth_unstable_by(rerank.list_len, cmp_dist_id);
        scored.truncate(rerank.list_len);
    }
    let mut exact: Vec<(u32, f32)> = scored
        .iter()
        .map(|&(id, _)| (id, sq_dist_counted(q, ds.get(id as usize), counter)))
        .collect();
    exact.sort_unstable_by(cmp_dist_id);
    exact.truncate(k);
    Ok(exact)
}

pub fn write_ivf(ix: &CoarseIndex, w: &mut impl std::io::Write) -> Result<()> {
    use byteorder::{LittleEndian, WriteBytesExt};
    w.write_all(&crate::io::IVF_MAGIC)?;
    w.write_u32::<LittleEndian>(crate::io::FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(ix.centers.dim() as u32)?;
    w.write_u32::<LittleEndian>(ix.num_vectors() as u32)?;
    w.write_u32::<LittleEndian>(ix.num_centers() as u32)?;
    w.write_u32::<LittleEndian>(ix.assign_budget as u32)?;
    w.write_u64::<LittleEndian>(ix.assign_fallbacks)?;
    for &x in ix.centers.data() {
        w.write_f32::<LittleEndian>(x)?;
    }
    crate::io::write_index(&ix.center_graph, w)?;
    crate::io::write_pq(&ix.residual_pq, w)?;
    for list in &ix.lists {
        w.write_u32::<LittleEndian>(list.len() as u32)?;
        for (id, code) in list {
            w.write_u32::<LittleEndian>(*id)?;
            for &c in code {
                w.write_u16::<LittleEndian>(c)?;
            }
        }
    }
    Ok(())
}

pub fn read_ivf(r: &mut impl std::io::Read) -> Result<CoarseIndex> {
    use byteorder::{LittleEndian, ReadBytesExt};
    crate::io::check_magic(r, crate::io::IVF_MAGIC)?;
    let d = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let k = r.read_u32::<LittleEndian>()? as usize;
    let assign_budget = r.read_u32::<LittleEndian>()? as usize;
    let assign_fallbacks = r.read_u64::<LittleEndian>()?;
    if d == 0 || d > crate::dataset::MAX_DIM || k == 0 {
        return Err(Error::InvalidParam("bad ivf header".into()));
    }
    let mut center_data = Vec::new();
    for _ in 0..k {
        for _ in 0..d {
            let x = r
                .read_f32::<LittleEndian>()
                .map_err(|_| Error::Truncated("coarse centers".into()))?;
            if !x.is_finite() {
                return Err(Error::InvalidParam("non-finite center".into()));
            }
            center_data.push(x);
        }
    }
    let centers = Dataset::from_vec(d, center_data, ElementKind::Float32);
    let center_graph = crate::io::read_index(r)?;
    if center_graph.pq.layout().dim() != d || center_graph.ngraph.num_nodes() != k {
        return Err(Error::InvalidParam("center graph mismatch".into()));
    }
    let residual_pq = crate::io::read_pq(r)?;
    if residual_pq.layout().dim() != d {
        return Err(Error::InvalidParam("residual quantizer mismatch".into()));
    }
    let m = residual_pq.num_subspaces();
    let rn = residual_pq.clusters();
    let mut lists = Vec::with_capacity(k.min(1 << 20));
    let mut seen = vec![false; n];
    for _ in 0..k {
        let len = r
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::Truncated("inverted list".into()))? as usize;
        let mut list = Vec::new();
        for _ in 0..len {
            let id = r
                .read_u32::<LittleEndian>()
                .map_err(|_| Error::Truncated("inverted list".into()))?;
            if id as usize >= n || seen[id as usize] {
                return Err(Error::InvalidParam("bad or duplicate list member".into()));
            }
            seen[id as usize] = true;
            let mut code = Vec::with_capacity(m);
            for _ in 0..m {
                let c = r
                    .read_u16::<LittleEndian>()
                    .map_err(|_| Error::Truncated("residual code".into()))?;
                if c as usize >= rn {
                    return Err(Error::InvalidParam("residual code out of range".into()));
                }
                code.push(c);
            }
            list.push((id, code));
        }
        lists.push(list);
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::InvalidParam("lists do not partition the ids".into()));
    }
    Ok(CoarseIndex {
        centers,
        center_graph,
        residual_pq,
        lists,
        assign_fallbacks,
        assign_budget,
    })
}

pub fn save_ivf(ix: &CoarseIndex, path: impl AsRef<std::path::Path>) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_ivf(ix, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_ivf(path: impl AsRef<std::path::Path>) -> Result<CoarseIndex> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    read_ivf(&mut r)
}
