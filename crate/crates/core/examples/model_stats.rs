//! Parameter and FLOP accounting for the full and desk configurations, with
//! the per-layer breakdown of one backbone, checked against instrumented
//! counting of an actual forward pass.

use leadwise::compress::{count_stats, measure_flops};
use leadwise::model::{BackboneConfig, LeadwiseNet, ModelConfig, Task};
use leadwise::Stream;

fn main() -> leadwise::Result<()> {
    for (name, backbone) in [("full", BackboneConfig::default()), ("desk", BackboneConfig::desk())] {
        let cfg = ModelConfig::new(backbone, 4, Task::MultiClass);
        let stats = count_stats(&cfg);
        println!("{name}: {} parameters, {:.3} GFLOPs per record", stats.params, stats.flops as f64 / 1e9);
        if name == "desk" {
            for layer in &stats.layers {
                println!("  {:<28} {:>8} params {:>12} FLOPs", layer.name, layer.params, layer.flops);
            }
            let mut model = LeadwiseNet::<f32>::new(cfg, &Stream::new(0))?;
            println!("  instrumented forward: {} FLOPs", measure_flops(&mut model)?);
        }
    }
    Ok(())
}
