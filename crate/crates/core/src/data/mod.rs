//! Feature files, manifests and synthetic corpora.

pub mod dataset;
pub mod feature_file;
pub mod manifest;
pub mod synthetic;

pub use dataset::{Dataset, QuerySample, VideoData};
pub use feature_file::{read_feature_file, write_feature_file};
pub use manifest::{load_manifest, Annotation, ManifestEntry};
pub use synthetic::{generate_corpus, generate_synthetic_dataset, SyntheticSpec, SyntheticVideo};
