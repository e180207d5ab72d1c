//! Global L1 magnitude pruning at 80% sparsity, fine-tuning of the
//! survivors, and the dense versus sparse checkpoint sizes.
//!
//! ```text
//! cargo run --release --example prune_and_compress -- [checkpoint]
//! ```

use leadwise::compress::{deserialize, fine_tune, prune_global_l1, serialize, size_stats, Format, PruneScope};
use leadwise::training::{evaluate, TrainConfig};
use leadwise::Stream;

mod common;

fn main() -> leadwise::Result<()> {
    let (_, data) = common::synthetic(80, 5)?;
    let (_, held_out) = common::synthetic(10, 6)?;
    let model = common::model_from_args_or_train(&data)?;
    let f1 = |m: &mut _| evaluate(m, &held_out, None, 16).map(|r| r.macro_avg.f1);

    let mut pruned = model.clone();
    let mask = prune_global_l1(&mut pruned, 0.8, PruneScope::Global)?;
    println!("zeroed {} weights", mask.pruned_count());
    for (name, keep) in mask.iter().take(6) {
        let kept = keep.iter().filter(|k| **k).count();
        println!("  {name:<40} keeps {kept:>5} of {:>5}", keep.len());
    }
    println!("macro F1: dense {:.3}, pruned {:.3}", f1(&mut model.clone())?, f1(&mut pruned)?);

    // The quick model is far narrower than the desk preset, so a global 80%
    // cut removes whole layers; give the survivors a longer, faster recovery.
    let cfg = TrainConfig {
        finetune_epochs: 10,
        finetune_lr: 1e-3,
        ..TrainConfig::desk()
    };
    fine_tune(&mut pruned, &data, &mask, &cfg, &Stream::new(3), |s| println!("  fine-tune epoch {}  loss {:.4}", s.epoch, s.loss))?;
    println!("macro F1 after fine-tuning: {:.3}", f1(&mut pruned)?);

    let sizes = size_stats(&pruned);
    println!(
        "checkpoint bytes: dense {}, sparse {} ({:.3} of dense); {} of {} weights non-zero",
        sizes.dense_bytes,
        sizes.sparse_bytes,
        sizes.ratio(),
        sizes.nonzero_weights,
        sizes.total_weights
    );
    let (mut restored, _) = deserialize(&serialize(&pruned, Format::Sparse, ""))?;
    let x = held_out.inputs.select_rows(&[0]);
    let same = restored.forward_eval(&x)?.logits == pruned.forward_eval(&x)?.logits;
    println!("sparse round trip forwards identically: {same}");
    Ok(())
}
