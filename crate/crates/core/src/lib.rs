//! Approximate nearest neighbor search over an augmented neighborhood graph.
//!
//! The index combines a k-NN graph over the reference vectors with a bridge
//! graph into a large, never-materialized set of bridge vectors (the
//! Cartesian concatenation of per-subspace codebooks from a product
//! quantizer). Queries traverse both graphs best-first with a shared priority
//! queue, pulling bridge vectors lazily from a multi-sequence stream.

pub mod dataset;
pub mod dense;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod ivf;
pub mod kmeans;
pub mod multiseq;
pub mod quantizer;
pub mod search;

pub use dataset::{
    brute_force_knn, load_dataset, read_id_lists, save_dataset, sq_dist, write_id_lists, Dataset,
    DistanceCounter, ElementKind, Format,
};
pub use error::{Error, Result};
pub use graph::{
    build_bgraph, build_index, build_ngraph, AugmentedGraph, BridgeGraph, GraphStats, IndexParams,
    NeighborhoodGraph,
};
pub use io::{load_index, save_index};
pub use ivf::{build_ivf, load_ivf, save_ivf, CoarseIndex, IvfBuildParams, RerankParams};
pub use multiseq::MultiSeq;
pub use quantizer::{DistanceTables, PQCode, ProductQuantizer, SubspaceLayout};
pub use search::{accuracy, recall_at, search_plain, SearchParams, Searcher};
