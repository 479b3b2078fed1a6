//! On-disk formats: PFTN tensors, COCO-style panoptic PNGs, ensemble manifests.

mod manifest;
mod panoptic_png;
mod tensor;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use manifest::{load_ensemble, write_ensemble, EnsembleManifest};
pub use panoptic_png::{
    decode_segment_id, encode_segment_id, read_panoptic_png, sidecar_path, write_panoptic_png, SegmentInfo,
    SegmentTable, MAX_SEGMENT_ID,
};
pub use tensor::{read_tensor, write_tensor, ElemType, Tensor, TensorData};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad magic bytes {0:?}, expected \"PFTN\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown element type code {0}")]
    UnknownElemType(u8),
    #[error("rank {0} outside 1..=4")]
    BadRank(usize),
    #[error("invalid dims {0:?}")]
    BadDim(Vec<usize>),
    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("element count mismatch: dims imply {expected}, payload holds {found}")]
    ElementCountMismatch { expected: usize, found: usize },
    #[error("segment id {0} does not fit in 24 bits")]
    SegmentIdOutOfRange(u32),
    #[error("segment id 0 is reserved for void")]
    ReservedSegmentId,
    #[error("no segment-table entry for label (class {class_id}, instance {instance_id})")]
    MissingSegment { class_id: u32, instance_id: u32 },
    #[error("png references segment id {0} absent from the annotation")]
    UnknownSegmentId(u32),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("json in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("{what} shape mismatch: manifest implies {expected:?}, file has {found:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{what} is not float32")]
    WrongElemType { what: &'static str },
    #[error(transparent)]
    Batch(#[from] crate::per_sample::BatchError),
    #[error("catalog: {0}")]
    Catalog(#[from] crate::catalog::CatalogError),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, source: serde_json::Error) -> Self {
        StoreError::Json {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for failures caused by the input files rather than their absence
    /// or the environment.
    pub fn is_missing_file(&self) -> bool {
        matches!(self, StoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}
