//! Analysis of per-layer entity embeddings exported from a model: loading,
//! PCA projection, silhouette and pair-distance statistics, SVG scatters.

mod load;
mod pca;
mod report;
mod silhouette;
mod svg;

pub use load::{load_embeddings, EmbeddingExport, EmbeddingRecord, EntityKind, RejectedLine};
pub use pca::{pca_project, Projection};
pub use report::{layer_report, LayerReport, LayerStats, Point};
pub use silhouette::{silhouette, Distance};
pub use svg::{render_scatter_svg, scatter_svg};

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing header line with model and pooling")]
    MissingHeader { path: String },
    #[error("{path}:{line}: bad header: {message}")]
    BadHeader { path: String, line: usize, message: String },
    #[error("layer {layer} mixes vector dimensions {dims:?}")]
    MixedDimensions { layer: u32, dims: Vec<usize> },
    #[error("projection needs at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("cannot project {dim}-dimensional vectors onto {out_dims} dimensions")]
    BadOutDims { dim: usize, out_dims: usize },
    #[error("vectors have differing dimensions")]
    Ragged,
    #[error("silhouette needs at least two distinct labels, got {0}")]
    TooFewLabels(usize),
    #[error("vectors and labels differ in length")]
    LengthMismatch,
    #[error("requested layers {missing:?} are missing; available layers: {available:?}")]
    MissingLayers { missing: Vec<u32>, available: Vec<u32> },
    #[error("coordinates must be finite")]
    NonFinite,
}

impl EmbedError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EmbedError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
