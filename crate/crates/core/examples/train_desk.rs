//! Trains the narrow desk model on 800 synthetic records with one held-out
//! fold, reports macro F1 and saves the checkpoint. Takes several minutes on
//! one core.
//!
//! ```text
//! cargo run --release --example train_desk -- [checkpoint-out]
//! ```

use std::path::PathBuf;
use std::time::Instant;

use leadwise::compress::{save_checkpoint, Format};
use leadwise::model::{BackboneConfig, ModelConfig, Task};
use leadwise::training::{run_round, stratified_kfold, TrainConfig};

mod common;

fn main() -> leadwise::Result<()> {
    let (_, data) = common::synthetic(200, 7)?;
    let cfg = TrainConfig::desk();
    let model_cfg = ModelConfig::new(BackboneConfig::desk(), data.n_classes(), Task::MultiClass);
    let plan = stratified_kfold(&data.labels, cfg.k, cfg.seed)?;
    println!(
        "{} records, {} epochs (cosine over {}), batch {}",
        data.len(),
        cfg.epochs_total,
        cfg.epochs_cosine,
        cfg.batch_size
    );
    let start = Instant::now();
    let round = run_round(&data, &plan, 0, &model_cfg, &cfg)?;
    for s in &round.history {
        println!("epoch {:>2}  lr {:.2e}  loss {:.4}", s.epoch, s.lr, s.loss);
    }
    print!("{}", round.report.to_text());
    println!("trained in {:.0}s", start.elapsed().as_secs_f64());

    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("leadwise-desk.ckpt"));
    let bytes = save_checkpoint(&out, &round.model, Format::Dense, "")?;
    println!("saved {} ({bytes} bytes)", out.display());
    Ok(())
}
