//! Closed-form parameter and FLOP accounting, checkpoint sizes.
//!
//! FLOPs count convolutions and fully connected layers for one record of
//! `3 x input_length`: a multiply-accumulate is 2 FLOPs (taps over zero
//! padding included) and each bias addition is 1. BatchNorm, activations,
//! pooling and the SE/attention rescaling multiplies are not counted.
//! Parameter counts cover trainable tensors only (BatchNorm running
//! statistics are excluded).

use std::fmt::Write as _;

use crate::compress::checkpoint::{serialize, Format};
use crate::error::Result;
use crate::model::config::{ModelConfig, INPUT_LEADS};
use crate::model::net::LeadwiseNet;
use crate::ops::instrument::count_flops;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerStats {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelStats {
    pub params: u64,
    pub flops: u64,
    /// Per-layer breakdown for one backbone followed by the head layers.
    pub layers: Vec<LayerStats>,
}

struct Acc {
    layers: Vec<LayerStats>,
}

impl Acc {
    fn push(&mut self, name: String, params: u64, flops: u64) {
        self.layers.push(LayerStats { name, params, flops });
    }

    /// Conv with `groups`, returning the output length.
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: String,
        c_in: u64,
        c_out: u64,
        k: u64,
        stride: u64,
        pad: u64,
        groups: u64,
        bias: bool,
        len: u64,
    ) -> u64 {
        let l_out = (len + 2 * pad - k) / stride + 1;
        let b = u64::from(bias);
        let params = c_out * (c_in / groups) * k + b * c_out;
        let flops = 2 * c_out * l_out * (c_in / groups) * k + b * c_out * l_out;
        self.push(name, params, flops);
        l_out
    }

    fn dsconv(&mut self, name: &str, c_in: u64, c_out: u64, k: u64, stride: u64, len: u64) -> u64 {
        let l = self.conv(format!("{name}.dw"), c_in, c_in, k, stride, k / 2, c_in, false, len);
        self.conv(format!("{name}.pw"), c_in, c_out, 1, 1, 0, 1, false, l)
    }

    fn bn(&mut self, name: String, c: u64) {
        self.push(name, 2 * c, 0);
    }

    fn fc(&mut self, name: String, n_in: u64, n_out: u64) {
        self.push(name, n_out * n_in + n_out, n_out * (2 * n_in + 1));
    }
}

/// Closed-form counts for a whole model.
pub fn count_stats(config: &ModelConfig) -> ModelStats {
    let b = &config.backbone;
    let mut acc = Acc { layers: Vec::new() };
    let mut len = config.input_length as u64;
    let mut ch = b.stem_channels as u64;
    len = acc.dsconv("stem", 1, ch, b.stem_kernel as u64, b.stem_stride as u64, len);
    acc.bn("stem.bn".into(), ch);
    if b.stem_pool {
        len = (len + 2 - 3) / 2 + 1;
    }
    for (s, st) in b.stages.iter().enumerate() {
        for i in 0..st.blocks {
            let name = format!("stage{s}.block{i}");
            let stride = if i == 0 { st.stride as u64 } else { 1 };
            let out = st.channels as u64;
            let k = st.kernel as u64;
            let l1 = acc.dsconv(&format!("{name}.conv1"), ch, out, k, stride, len);
            acc.bn(format!("{name}.bn1"), out);
            acc.dsconv(&format!("{name}.conv2"), out, out, k, 1, l1);
            acc.bn(format!("{name}.bn2"), out);
            let hidden = b.se_hidden(st.channels) as u64;
            acc.fc(format!("{name}.se.fc1"), out, hidden);
            acc.fc(format!("{name}.se.fc2"), hidden, out);
            if ch != out || stride != 1 {
                acc.conv(format!("{name}.proj.conv"), ch, out, 1, stride, 0, 1, false, len);
                acc.bn(format!("{name}.proj.bn"), out);
            }
            ch = out;
            len = l1;
        }
    }
    let backbone_layers = acc.layers.len();
    let dim = config.feature_dim() as u64;
    let hidden = config.attention_hidden as u64;
    acc.fc("attention.fc1".into(), INPUT_LEADS as u64 * dim, hidden);
    acc.bn("attention.bn".into(), hidden);
    acc.fc("attention.fc2".into(), hidden, INPUT_LEADS as u64);
    acc.fc("classifier".into(), dim, config.n_classes as u64);

    let (bb, head) = acc.layers.split_at(backbone_layers);
    let sum = |ls: &[LayerStats], f: fn(&LayerStats) -> u64| ls.iter().map(f).sum::<u64>();
    let leads = INPUT_LEADS as u64;
    ModelStats {
        params: leads * sum(bb, |l| l.params) + sum(head, |l| l.params),
        flops: leads * sum(bb, |l| l.flops) + sum(head, |l| l.flops),
        layers: acc.layers,
    }
}

/// FLOPs of one eval-mode forward on a single zero record, counted by the
/// instrumented layer implementations.
pub fn measure_flops(model: &mut LeadwiseNet<f32>) -> Result<u64> {
    let x = Tensor3::zeros(1, INPUT_LEADS, model.config.input_length);
    let (out, flops) = count_flops(|| model.forward_eval(&x));
    out?;
    model.clear_cache();
    Ok(flops)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeStats {
    pub dense_bytes: usize,
    pub sparse_bytes: usize,
    pub nonzero_weights: usize,
    pub total_weights: usize,
}

impl SizeStats {
    pub fn ratio(&self) -> f64 {
        self.sparse_bytes as f64 / self.dense_bytes as f64
    }
}

/// Serialized sizes of a model in both formats (empty provenance text).
pub fn size_stats(model: &LeadwiseNet<f32>) -> SizeStats {
    use crate::model::params::Parameterized;
    let mut nonzero = 0;
    let mut total = 0;
    model.visit("", &mut |p| {
        if p.kind.is_weight() {
            total += p.value.len();
            nonzero += p.value.iter().filter(|v| **v != 0.0).count();
        }
    });
    SizeStats {
        dense_bytes: serialize(model, Format::Dense, "").len(),
        sparse_bytes: serialize(model, Format::Sparse, "").len(),
        nonzero_weights: nonzero,
        total_weights: total,
    }
}

/// `key = value` stats block.
pub fn stats_text(stats: &ModelStats, sizes: Option<&SizeStats>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "params = {}", stats.params);
    let _ = writeln!(out, "flops = {}", stats.flops);
    if let Some(s) = sizes {
        let _ = writeln!(out, "dense_bytes = {}", s.dense_bytes);
        let _ = writeln!(out, "sparse_bytes = {}", s.sparse_bytes);
        let _ = writeln!(out, "sparse_ratio = {:.4}", s.ratio());
        let _ = writeln!(out, "nonzero_weights = {}", s.nonzero_weights);
        let _ = writeln!(out, "total_weights = {}", s.total_weights);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::{BackboneConfig, Task};
    use crate::model::params::Parameterized;
    use crate::rng::Stream;

    #[test]
    fn conv_and_fc_closed_forms() {
        let mut acc = Acc { layers: Vec::new() };
        acc.conv("c".into(), 4, 8, 3, 1, 1, 1, true, 10);
        acc.fc("fc".into(), 512, 4);
        assert_eq!(acc.layers[0].params, 104);
        assert_eq!(acc.layers[1].params, 2052);
        assert_eq!(acc.layers[1].flops, 4100);
    }

    #[test]
    fn closed_form_matches_model_and_instrumented_count() {
        let mut cfg = ModelConfig::new(BackboneConfig::tiny(), 3, Task::MultiClass);
        cfg.input_length = 50;
        let stats = count_stats(&cfg);
        let mut model = LeadwiseNet::<f32>::new(cfg, &Stream::new(1)).unwrap();
        assert_eq!(stats.params as usize, model.param_count());
        assert_eq!(stats.flops, measure_flops(&mut model).unwrap());
    }
}
