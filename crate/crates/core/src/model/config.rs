//! Architecture description.
//!
//! Configs serialize to `key = value` lines so the same text can live in a
//! run config file and inside checkpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// One label per record, softmax + cross-entropy.
    MultiClass,
    /// Any subset of labels per record, sigmoid + binary cross-entropy.
    MultiLabel,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::MultiClass => "multi_class",
            Task::MultiLabel => "multi_label",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "multi_class" | "multi-class" => Ok(Task::MultiClass),
            "multi_label" | "multi-label" => Ok(Task::MultiLabel),
            other => Err(Error::Config(format!(
                "unknown task `{other}` (expected multi_class or multi_label)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub blocks: usize,
    pub channels: usize,
    pub kernel: usize,
    /// Stride of the first block; later blocks use stride 1.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneConfig {
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stem_channels: usize,
    /// `3/2` max pool after the stem.
    pub stem_pool: bool,
    pub stages: Vec<StageConfig>,
    pub se_reduction: usize,
}

impl Default for BackboneConfig {
    /// ResNet18 stage plan (4 stages of 2 blocks, 64..512 channels) with a
    /// kernel-15 stem and kernel-7 blocks. The stem stride of 3 puts the
    /// forward cost at about 1.27 GFLOPs for a 3 x 5000 record; stride 2
    /// would cost about 1.90 GFLOPs.
    fn default() -> Self {
        let stage = |channels, stride| StageConfig {
            blocks: 2,
            channels,
            kernel: 7,
            stride,
        };
        Self {
            stem_kernel: 15,
            stem_stride: 3,
            stem_channels: 64,
            stem_pool: true,
            stages: vec![stage(64, 1), stage(128, 2), stage(256, 2), stage(512, 2)],
            se_reduction: 16,
        }
    }
}

impl BackboneConfig {
    /// Narrow variant for single-core training runs. The feature map keeps
    /// one position per eight input samples so explanations stay sharp.
    pub fn desk() -> Self {
        let stage = |blocks, channels, stride| StageConfig {
            blocks,
            channels,
            kernel: 7,
            stride,
        };
        Self {
            stem_kernel: 15,
            stem_stride: 2,
            stem_channels: 16,
            stem_pool: true,
            stages: vec![
                stage(1, 24, 1),
                stage(1, 32, 2),
                stage(1, 48, 1),
                stage(1, 48, 1),
            ],
            se_reduction: 4,
        }
    }

    /// Smallest sensible network, used by tests.
    pub fn tiny() -> Self {
        Self {
            stem_kernel: 5,
            stem_stride: 2,
            stem_channels: 4,
            stem_pool: false,
            stages: vec![
                StageConfig {
                    blocks: 1,
                    channels: 4,
                    kernel: 3,
                    stride: 1,
                },
                StageConfig {
                    blocks: 1,
                    channels: 6,
                    kernel: 3,
                    stride: 2,
                },
            ],
            se_reduction: 2,
        }
    }

    /// Feature dimension `D` emitted after global average pooling.
    pub fn feature_dim(&self) -> usize {
        self.stages
            .last()
            .map_or(self.stem_channels, |s| s.channels)
    }

    /// Stem + two convolutions per block + the classifier.
    pub fn main_layer_count(&self) -> usize {
        1 + 2 * self.stages.iter().map(|s| s.blocks).sum::<usize>() + 1
    }

    /// Squeeze width of an SE unit over `channels`.
    pub fn se_hidden(&self, channels: usize) -> usize {
        (channels / self.se_reduction.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("backbone needs at least one stage".into()));
        }
        let positive = [
            self.stem_kernel,
            self.stem_stride,
            self.stem_channels,
            self.se_reduction,
        ];
        if positive.contains(&0)
            || self
                .stages
                .iter()
                .any(|s| s.blocks == 0 || s.channels == 0 || s.kernel == 0 || s.stride == 0)
        {
            return Err(Error::Config(
                "backbone sizes, kernels and strides must be positive".into(),
            ));
        }
        Ok(())
    }

    fn stages_to_string(&self) -> String {
        self.stages
            .iter()
            .map(|s| format!("{}:{}:{}:{}", s.blocks, s.channels, s.kernel, s.stride))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn parse_stages(text: &str) -> Result<Vec<StageConfig>> {
        text.split(',')
            .map(|chunk| {
                let parts: Vec<usize> = chunk
                    .trim()
                    .split(':')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::Config(format!(
                            "stage `{chunk}` must be blocks:channels:kernel:stride"
                        ))
                    })?;
                match parts[..] {
                    [blocks, channels, kernel, stride] => Ok(StageConfig {
                        blocks,
                        channels,
                        kernel,
                        stride,
                    }),
                    _ => Err(Error::Config(format!(
                        "stage `{chunk}` must be blocks:channels:kernel:stride"
                    ))),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub n_classes: usize,
    pub task: Task,
    /// Hidden width of the attention MLP; defaults to the feature dimension.
    pub attention_hidden: usize,
    pub attention_dropout: f64,
    pub input_length: usize,
}

pub const INPUT_LEADS: usize = 3;
pub const INPUT_LENGTH: usize = 5000;

impl ModelConfig {
    pub fn new(backbone: BackboneConfig, n_classes: usize, task: Task) -> Self {
        let hidden = backbone.feature_dim();
        Self {
            backbone,
            n_classes,
            task,
            attention_hidden: hidden,
            attention_dropout: 0.3,
            input_length: INPUT_LENGTH,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.n_classes == 0 || self.attention_hidden == 0 || self.input_length == 0 {
            return Err(Error::Config(
                "n_classes, attention_hidden and input_length must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.attention_dropout) {
            return Err(Error::Config(format!(
                "attention_dropout {} outside [0, 1)",
                self.attention_dropout
            )));
        }
        Ok(())
    }

    /// `key = value` pairs, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let b = &self.backbone;
        vec![
            ("model.n_classes", self.n_classes.to_string()),
            ("model.task", self.task.to_string()),
            ("model.input_length", self.input_length.to_string()),
            ("model.attention_hidden", self.attention_hidden.to_string()),
            ("model.attention_dropout", self.attention_dropout.to_string()),
            ("backbone.stem_kernel", b.stem_kernel.to_string()),
            ("backbone.stem_stride", b.stem_stride.to_string()),
            ("backbone.stem_channels", b.stem_channels.to_string()),
            ("backbone.stem_pool", b.stem_pool.to_string()),
            ("backbone.stages", b.stages_to_string()),
            ("backbone.se_reduction", b.se_reduction.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies one `key = value` setting. Returns `false` if the key is not
    /// a model key, so callers can route it elsewhere.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = |what: &str| Error::Config(format!("invalid value `{value}` for {what}"));
        let v = value.trim();
        match key {
            "model.n_classes" => self.n_classes = v.parse().map_err(|_| bad(key))?,
            "model.task" => self.task = v.parse()?,
            "model.input_length" => self.input_length = v.parse().map_err(|_| bad(key))?,
            "model.attention_hidden" => {
                self.attention_hidden = v.parse().map_err(|_| bad(key))?
            }
            "model.attention_dropout" => {
                self.attention_dropout = v.parse().map_err(|_| bad(key))?
            }
            "backbone.stem_kernel" => {
                self.backbone.stem_kernel = v.parse().map_err(|_| bad(key))?
            }
            "backbone.stem_stride" => {
                self.backbone.stem_stride = v.parse().map_err(|_| bad(key))?
            }
            "backbone.stem_channels" => {
                self.backbone.stem_channels = v.parse().map_err(|_| bad(key))?
            }
            "backbone.stem_pool" => self.backbone.stem_pool = v.parse().map_err(|_| bad(key))?,
            "backbone.stages" => self.backbone.stages = BackboneConfig::parse_stages(v)?,
            "backbone.se_reduction" => {
                self.backbone.se_reduction = v.parse().map_err(|_| bad(key))?
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let mut cfg = ModelConfig::new(BackboneConfig::default(), 4, Task::MultiClass);
        let mut hidden_set = false;
        for (k, v) in &pairs {
            if !cfg.apply(k, v)? {
                return Err(Error::Config(format!("unknown model key `{k}`")));
            }
            hidden_set |= k == "model.attention_hidden";
        }
        if !hidden_set {
            cfg.attention_hidden = cfg.feature_dim();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
/// Later duplicates override earlier ones.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
