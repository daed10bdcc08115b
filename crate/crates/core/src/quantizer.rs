//! Product quantizer: per-subspace codebooks trained with Lloyd k-means.
//!
//! The codebooks implicitly define the bridge-vector set, the Cartesian
//! concatenation of the m per-subspace center sets (n^m vectors that are
//! never materialized). A bridge vector is identified by its codeword-index
//! tuple packed row-major into a single integer.

use crate::dataset::{sq_dist, Dataset, DistanceCounter};
use crate::error::{Error, Result};
use crate::kmeans::kmeans;

/// Contiguous split of the d dimensions into m subspaces. When m does not
/// divide d, the first d mod m subspaces get one extra dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubspaceLayout {
    dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl SubspaceLayout {
    pub fn split(d: usize, m: usize) -> Result<Self> {
        if m == 0 || m > d {
            return Err(Error::InvalidParam(format!(
                "cannot split {d} dims into {m} subspaces"
            )));
        }
        let base = d / m;
        let extra = d % m;
        let dims: Vec<usize> = (0..m).map(|i| base + usize::from(i < extra)).collect();
        Self::from_dims(dims)
    }

    pub fn from_dims(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&x| x == 0) {
            return Err(Error::InvalidParam("empty subspace".into()));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut acc = 0;
        for &w in &dims {
            offsets.push(acc);
            acc += w;
        }
        offsets.push(acc);
        Ok(SubspaceLayout { dims, offsets })
    }

    pub fn num_subspaces(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// The i-th subvector of a full-dimensional vector.
    pub fn subvector<'a>(&self, v: &'a [f32], i: usize) -> &'a [f32] {
        &v[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// PQ code: one codeword index per subspace, each in 0..n.
pub type PQCode = Vec<u16>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProductQuantizer {
    layout: SubspaceLayout,
    /// Clusters per subspace (equal across subspaces).
    n: usize,
    /// Per subspace: n centers of dimension dims[i], row-major.
    codebooks: Vec<Vec<f32>>,
    seed: u64,
}

impl ProductQuantizer {
    pub fn new(layout: SubspaceLayout, n: usize, codebooks: Vec<Vec<f32>>, seed: u64) -> Self {
        assert_eq!(codebooks.len(), layout.num_subspaces());
        for (i, cb) in codebooks.iter().enumerate() {
            assert_eq!(cb.len(), n * layout.dims()[i]);
        }
        ProductQuantizer {
            layout,
            n,
            codebooks,
            seed,
        }
    }

    /// Trains one codebook per subspace on the corresponding subvectors.
    /// Deterministic for fixed (dataset, m, n, seed, iters).
    pub fn train(ds: &Dataset, m: usize, n: usize, seed: u64, iters: usize) -> Result<Self> {
        if ds.count() == 0 {
            return Err(Error::EmptyDataset);
        }
        if n < 2 || n > u16::MAX as usize + 1 {
            return Err(Error::InvalidParam(format!("clusters per subspace {n}")));
        }
        if ds.count() < n {
            return Err(Error::InvalidParam(format!(
                "{} vectors cannot seed {n} clusters",
                ds.count()
            )));
        }
        let layout = SubspaceLayout::split(ds.dim(), m)?;
        let mut codebooks = Vec::with_capacity(m);
        for i in 0..m {
            let di = layout.dims()[i];
            let mut sub = Vec::with_capacity(ds.count() * di);
            for v in ds.iter() {
                sub.extend_from_slice(layout.subvector(v, i));
            }
            let out = kmeans(&sub, di, n, subspace_seed(seed, i), iters)?;
            codebooks.push(out.centers);
        }
        Ok(ProductQuantizer {
            layout,
            n,
            codebooks,
            seed,
        })
    }

    pub fn layout(&self) -> &SubspaceLayout {
        &self.layout
    }

    pub fn num_subspaces(&self) -> usize {
        self.layout.num_subspaces()
    }

    pub fn clusters(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn codebooks(&self) -> &[Vec<f32>] {
        &self.codebooks
    }

    pub fn center(&self, subspace: usize, idx: usize) -> &[f32] {
        let di = self.layout.dims()[subspace];
        &self.codebooks[subspace][idx * di..(idx + 1) * di]
    }

    /// Number of bridge vectors, n^m; None on overflow.
    pub fn bridge_count(&self) -> Option<u64> {
        (self.n as u64).checked_pow(self.num_subspaces() as u32)
    }

    /// Per-subspace nearest-center indices; ties go to the smaller index.
    pub fn encode(&self, x: &[f32]) -> Result<PQCode> {
        if x.len() != self.layout.dim() {
            return Err(Error::Dimension {
                left: x.len(),
                right: self.layout.dim(),
            });
        }
        let mut code = Vec::with_capacity(self.num_subspaces());
        for i in 0..self.num_subspaces() {
            let sub = self.layout.subvector(x, i);
            let mut best = (0u16, f32::INFINITY);
            for c in 0..self.n {
                let d = sq_dist(sub, self.center(i, c));
                if d < best.1 {
                    best = (c as u16, d);
                }
            }
            code.push(best.0);
        }
        Ok(code)
    }

    /// Concatenation of the selected centers.
    pub fn decode(&self, code: &[u16]) -> Result<Vec<f32>> {
        if code.len() != self.num_subspaces() {
            return Err(Error::Dimension {
                left: code.len(),
                right: self.num_subspaces(),
            });
        }
        let mut out = Vec::with_capacity(self.layout.dim());
        for (i, &k) in code.iter().enumerate() {
            if k as usize >= self.n {
                return Err(Error::InvalidParam(format!(
                    "codeword index {k} out of range 0..{}",
                    self.n
                )));
            }
            out.extend_from_slice(self.center(i, k as usize));
        }
        Ok(out)
    }

    /// Packs a codeword tuple into a bridge id, row-major (k_1 most
    /// significant).
    pub fn pack_bridge_id(&self, code: &[u16]) -> u64 {
        let mut id = 0u64;
        for &k in code {
            id = id * self.n as u64 + k as u64;
        }
        id
    }

    pub fn unpack_bridge_id(&self, mut id: u64) -> PQCode {
        let m = self.num_subspaces();
        let mut code = vec![0u16; m];
        for i in (0..m).rev() {
            code[i] = (id % self.n as u64) as u16;
            id /= self.n as u64;
        }
        code
    }

    pub fn decode_bridge(&self, id: u64) -> Vec<f32> {
        self.decode(&self.unpack_bridge_id(id)).unwrap()
    }

    /// Per-subspace squared distances from the query subvectors to every
    /// center, plus the ascending sort permutation of each row. Costs exactly
    /// m*n subvector distance evaluations, independent of n^m.
    pub fn build_tables(&self, q: &[f32], counter: &mut DistanceCounter) -> Result<DistanceTables> {
        if q.len() != self.layout.dim() {
            return Err(Error::Dimension {
                left: q.len(),
                right: self.layout.dim(),
            });
        }
        let m = self.num_subspaces();
        let mut tables = Vec::with_capacity(m);
        let mut perms = Vec::with_capacity(m);
        for i in 0..m {
            let sub = self.layout.subvector(q, i);
            let row: Vec<f32> = (0..self.n).map(|c| sq_dist(sub, self.center(i, c))).collect();
            counter.sub_dist_evals += self.n as u64;
            let mut perm: Vec<u32> = (0..self.n as u32).collect();
            perm.sort_by(|&a, &b| {
                row[a as usize].total_cmp(&row[b as usize]).then(a.cmp(&b))
            });
            tables.push(row);
            perms.push(perm);
        }
        Ok(DistanceTables { tables, perms })
    }
}

fn subspace_seed(seed: u64, subspace: usize) -> u64 {
    seed ^ (subspace as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-query distance tables: for each subspace, n squared distances from the
/// query subvector to each center, with the ascending sort permutation.
#[derive(Debug, Clone)]
pub struct DistanceTables {
    tables: Vec<Vec<f32>>,
    perms: Vec<Vec<u32>>,
}

impl DistanceTables {
    /// Builds tables directly from raw rows (no quantizer involved); used by
    /// the multi-sequence stream and its oracles.
    pub fn from_rows(tables: Vec<Vec<f32>>) -> Self {
        let perms = tables
            .iter()
            .map(|row| {
                let mut perm: Vec<u32> = (0..row.len() as u32).collect();
                perm.sort_by(|&a, &b| {
                    row[a as usize].total_cmp(&row[b as usize]).then(a.cmp(&b))
                });
                perm
            })
            .collect();
        DistanceTables { tables, perms }
    }

    pub fn num_subspaces(&self) -> usize {
        self.tables.len()
    }

    pub fn clusters(&self) -> usize {
        self.tables[0].len()
    }

    pub fn row(&self, subspace: usize) -> &[f32] {
        &self.tables[subspace]
    }

    /// Ascending order of `row(subspace)`: `perm(i)[0]` indexes its minimum.
    pub fn perm(&self, subspace: usize) -> &[u32] {
        &self.perms[subspace]
    }

    /// Value at the given ascending rank of a row.
    pub fn ranked(&self, subspace: usize, rank: usize) -> f32 {
        self.tables[subspace][self.perms[subspace][rank] as usize]
    }

    /// Asymmetric distance: the sum of the per-subspace table entries chosen
    /// by the code. No full-vector distance evaluation.
    pub fn asymmetric_distance(&self, code: &[u16]) -> f32 {
        assert_eq!(code.len(), self.tables.len());
        let mut acc = 0.0f32;
        for (i, &k) in code.iter().enumerate() {
            acc += self.tables[i][k as usize];
        }
        acc
    }
}
