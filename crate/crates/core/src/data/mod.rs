//! Audio I/O, synthetic stems and dataset manifests.

mod dataset;
pub mod synth;
pub mod wav;

pub use dataset::{
    build_dataset, ingest_stems, item_seed, load_segments, splitmix64, synth_item, synth_labels, DatasetManifest,
    IngestReport, ManifestItem, Rejection, Segment, Split, SynthConfig, MANIFEST_FILE, MANIFEST_SCHEMA,
    MANIFEST_VERSION, MIX_PEAK,
};
pub use synth::{synth_source, InstrumentFamily, InstrumentSpec, FAMILY_LABELS, FAMILY_ORDER};
pub use wav::{decode_wav, encode_wav, parse_header, read_wav, write_wav, BitDepth, WavInfo};
