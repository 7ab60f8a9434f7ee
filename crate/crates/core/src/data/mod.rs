//! Manifests, synthetic corpora and checkpoint files.

mod checkpoint;
mod manifest;
mod sample;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use manifest::{
    format_manifest, format_matrix_csv, load_manifest, parse_manifest, parse_matrix_csv, read_matrix_csv, CorpusInfo,
    Dataset, FeatureSpec, ManifestRow, CORPUS_FILE, MANIFEST_HEADER,
};
pub use sample::UtteranceSample;
pub use synth::{
    generate_synthetic, random_anchors, speaker_id, speaker_offsets, synthesize, synthetic_feature_spec,
    SyntheticSpec, SyntheticUtterance, MANIFEST_FILE, SPEC_FILE, SYNTH_FEATURE_DIM, SYNTH_HOP_SECONDS,
};
