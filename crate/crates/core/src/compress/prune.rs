//! L1 magnitude pruning of conv and FC weights.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::data::manifest::Dataset;
use crate::error::{Error, Result};
use crate::model::net::LeadwiseNet;
use crate::model::params::Parameterized;
use crate::real::Real;
use crate::rng::Stream;
use crate::training::adam::AdamState;
use crate::training::schedule::TrainConfig;
use crate::training::trainer::{train_epoch, EpochStats};

/// Whether the magnitude ranking spans all prunable tensors or each tensor
/// separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PruneScope {
    #[default]
    Global,
    PerLayer,
}

impl fmt::Display for PruneScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PruneScope::Global => "global",
            PruneScope::PerLayer => "per_layer",
        })
    }
}

impl FromStr for PruneScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "global" => Ok(PruneScope::Global),
            "per_layer" | "per-layer" => Ok(PruneScope::PerLayer),
            other => Err(Error::Config(format!(
                "unknown prune scope `{other}` (expected global or per_layer)"
            ))),
        }
    }
}

/// Survivor flags for every prunable tensor, by parameter name. Tensors
/// not listed are not subject to the mask.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneMask {
    keep: BTreeMap<String, Vec<bool>>,
}

impl PruneMask {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<bool>)>) -> Self {
        Self {
            keep: pairs.into_iter().collect(),
        }
    }

    pub fn keep(&self, name: &str) -> Option<&[bool]> {
        self.keep.get(name).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[bool])> {
        self.keep.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Total number of masked elements.
    pub fn len(&self) -> usize {
        self.keep.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn pruned_count(&self) -> usize {
        self.keep.values().flatten().filter(|&&k| !k).count()
    }

    /// The mask implied by the zero entries of a model's weights.
    pub fn from_zeros<T: Real, M: Parameterized<T> + ?Sized>(model: &M) -> Self {
        let mut keep = BTreeMap::new();
        model.visit("", &mut |p| {
            if p.kind.is_weight() {
                keep.insert(p.name, p.value.iter().map(|v| *v != T::zero()).collect());
            }
        });
        Self { keep }
    }
}

/// Zeroes `floor(sparsity * N)` conv/FC weights with the smallest `|w|`.
///
/// In global scope `N` counts every prunable weight and the ranking is
/// shared; ties fall to the earlier tensor in traversal order, then the
/// lower flat index. In per-layer scope each tensor loses
/// `floor(sparsity * n_tensor)` of its own weights. BN parameters and biases
/// are never pruned.
pub fn prune_global_l1<T: Real, M: Parameterized<T> + ?Sized>(
    model: &mut M,
    sparsity: f64,
    scope: PruneScope,
) -> Result<PruneMask> {
    if !(sparsity > 0.0 && sparsity < 1.0) {
        return Err(Error::invalid(format!("sparsity {sparsity} must lie in (0, 1)")));
    }
    let mut names = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    model.visit("", &mut |p| {
        if p.kind.is_weight() {
            names.push(p.name);
            values.push(p.value.iter().map(|v| v.as_f64().abs()).collect());
        }
    });
    let mut keep: Vec<Vec<bool>> = values.iter().map(|v| vec![true; v.len()]).collect();
    let by_magnitude = |a: &(usize, usize, f64), b: &(usize, usize, f64)| {
        a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    };
    match scope {
        PruneScope::Global => {
            let mut all: Vec<(usize, usize, f64)> = values
                .iter()
                .enumerate()
                .flat_map(|(t, v)| v.iter().enumerate().map(move |(i, &a)| (t, i, a)))
                .collect();
            let n_prune = (sparsity * all.len() as f64).floor() as usize;
            if n_prune > 0 {
                all.select_nth_unstable_by(n_prune - 1, by_magnitude);
                for &(t, i, _) in &all[..n_prune] {
                    keep[t][i] = false;
                }
            }
        }
        PruneScope::PerLayer => {
            for (t, v) in values.iter().enumerate() {
                let mut entries: Vec<(usize, usize, f64)> =
                    v.iter().enumerate().map(|(i, &a)| (t, i, a)).collect();
                let n_prune = (sparsity * entries.len() as f64).floor() as usize;
                if n_prune > 0 {
                    entries.select_nth_unstable_by(n_prune - 1, by_magnitude);
                    for &(_, i, _) in &entries[..n_prune] {
                        keep[t][i] = false;
                    }
                }
            }
        }
    }
    let mask = PruneMask::from_pairs(names.into_iter().zip(keep));
    apply_mask(model, &mask);
    Ok(mask)
}

/// Sets every masked-out weight to zero.
pub fn apply_mask<T: Real, M: Parameterized<T> + ?Sized>(model: &mut M, mask: &PruneMask) {
    model.visit_mut("", &mut |p| {
        if let Some(keep) = mask.keep(&p.name) {
            for (v, &k) in p.value.iter_mut().zip(keep) {
                if !k {
                    *v = T::zero();
                }
            }
        }
    });
}

/// Retrains a pruned model at a constant learning rate with fresh Adam
/// state; masked weights receive no updates and stay exactly zero.
pub fn fine_tune(
    model: &mut LeadwiseNet<f32>,
    data: &Dataset,
    mask: &PruneMask,
    cfg: &TrainConfig,
    rng: &Stream,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    let mut adam = AdamState::new();
    let mut history = Vec::with_capacity(cfg.finetune_epochs);
    for epoch in 0..cfg.finetune_epochs {
        let loss = train_epoch(
            model,
            data,
            cfg,
            cfg.finetune_lr,
            &mut adam,
            Some(mask),
            &mut rng.split(epoch as u64),
        )?;
        let stats = EpochStats {
            epoch,
            lr: cfg.finetune_lr,
            loss,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}
