//! Record files, manifests, preprocessing and synthetic datasets.

pub mod manifest;
pub mod preprocess;
pub mod record;
pub mod synth;

pub use manifest::{Dataset, DatasetManifest, ManifestEntry};
pub use preprocess::{
    preprocess, standard_lead_index, LeadSelection, Normalization, PreprocessedInput,
    STANDARD_LEADS,
};
pub use record::{load_record, AmplitudeUnit, Demographics, EcgRecord, Sex};
pub use synth::{
    load_mask, synth_dataset, synth_records, RecordDraw, SynthClass, SynthRecord, SynthSpec,
};
