//! Shared setup for the examples: a synthetic dataset and a model that is
//! either loaded from a checkpoint or trained quickly on the spot.
#![allow(dead_code)]

use std::path::Path;

use leadwise::compress::load_checkpoint;
use leadwise::data::{synth_records, Dataset, LeadSelection, Normalization, SynthClass, SynthRecord, SynthSpec};
use leadwise::model::{BackboneConfig, LeadwiseNet, ModelConfig, StageConfig, Task};
use leadwise::training::{fit, TrainConfig};
use leadwise::{Result, Stream};

/// The four-class synthetic task (normal, no P wave, ST elevation, wide
/// QRS) with its evidence masks.
pub fn synthetic(per_class: usize, seed: u64) -> Result<(Vec<SynthRecord>, Dataset)> {
    let spec = SynthSpec::new(SynthClass::first(4)?, per_class, seed);
    let records = synth_records(&spec)?;
    let data = Dataset::from_records(
        records.iter().map(|r| &r.record),
        &LeadSelection::default(),
        Normalization::Standardize,
        spec.class_names(),
        Task::MultiClass,
    )?;
    Ok((records, data))
}

/// A backbone narrow enough to train in a minute or two on one core.
pub fn quick_backbone() -> BackboneConfig {
    let stage = |channels, stride| StageConfig {
        blocks: 1,
        channels,
        kernel: 7,
        stride,
    };
    BackboneConfig {
        stages: vec![stage(12, 1), stage(16, 2), stage(24, 1)],
        ..BackboneConfig::desk()
    }
}

/// Loads the checkpoint named by the first command-line argument, or trains
/// the quick model on `data` when none is given.
pub fn model_from_args_or_train(data: &Dataset) -> Result<LeadwiseNet<f32>> {
    if let Some(path) = std::env::args().nth(1) {
        let (model, _) = load_checkpoint(Path::new(&path))?;
        println!("loaded {path}");
        return Ok(model);
    }
    let cfg = TrainConfig {
        epochs_total: 12,
        epochs_cosine: 8,
        ..TrainConfig::desk()
    };
    let mut model = LeadwiseNet::new(ModelConfig::new(quick_backbone(), data.n_classes(), Task::MultiClass), &Stream::new(1))?;
    println!("no checkpoint given; training a quick model for {} epochs", cfg.epochs_total);
    fit(&mut model, data, &cfg, &Stream::new(2), |s| println!("  epoch {}  loss {:.4}", s.epoch, s.loss))?;
    Ok(model)
}
