//! Multi-label training: records may carry two abnormal edits at once, the
//! head uses sigmoid outputs, and a per-class decision threshold is chosen
//! on the validation fold from the 0.05..0.95 grid.

use leadwise::data::{synth_records, Dataset, LeadSelection, Normalization, SynthClass, SynthSpec};
use leadwise::model::{ModelConfig, Task};
use leadwise::training::{run_round, stratified_kfold, TrainConfig};

mod common;

fn main() -> leadwise::Result<()> {
    let mut spec = SynthSpec::new(SynthClass::first(4)?, 80, 9);
    spec.task = Task::MultiLabel;
    let records = synth_records(&spec)?;
    let data = Dataset::from_records(
        records.iter().map(|r| &r.record),
        &LeadSelection::default(),
        Normalization::Standardize,
        spec.class_names(),
        Task::MultiLabel,
    )?;
    let two_labels = data.labels.iter().filter(|l| l.len() > 1).count();
    println!("{} records, {two_labels} with two labels", data.len());

    let cfg = TrainConfig {
        epochs_total: 12,
        epochs_cosine: 8,
        k: 5,
        ..TrainConfig::desk()
    };
    let model_cfg = ModelConfig::new(common::quick_backbone(), data.n_classes(), Task::MultiLabel);
    let plan = stratified_kfold(&data.labels, cfg.k, cfg.seed)?;
    let round = run_round(&data, &plan, 0, &model_cfg, &cfg)?;
    if let Some(thresholds) = &round.thresholds {
        for (class, t) in data.classes.iter().zip(thresholds) {
            println!("threshold {class:<9} {t:.2}");
        }
    }
    print!("{}", round.report.to_text());
    Ok(())
}
