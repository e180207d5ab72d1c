//! Mini-batch training, evaluation and cross-validation rounds.

use crate::compress::PruneMask;
use crate::data::manifest::Dataset;
use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, Task};
use crate::model::net::LeadwiseNet;
use crate::model::params::Parameterized;
use crate::model::predict::{argmax, probabilities};
use crate::ops::{binary_cross_entropy, cross_entropy};
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::training::adam::{adam_step, AdamState};
use crate::training::droplead::drop_lead;
use crate::training::folds::{stratified_kfold, FoldPlan, RoundSplit};
use crate::training::metrics::{threshold_search, MetricsReport};
use crate::training::schedule::{lr_schedule, TrainConfig};
use crate::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
}

/// Mean loss and `d loss / d logits` for a batch.
pub fn loss_and_grad(
    logits: &Tensor3<f32>,
    labels: &[Vec<usize>],
    task: Task,
) -> Result<(f32, Tensor3<f32>)> {
    match task {
        Task::MultiClass => {
            let targets: Vec<usize> = labels.iter().map(|l| l[0]).collect();
            cross_entropy(logits, &targets)
        }
        Task::MultiLabel => {
            let n = logits.row_len();
            let mut targets = vec![0.0f32; logits.batch() * n];
            for (b, l) in labels.iter().enumerate() {
                for &c in l {
                    if c >= n {
                        return Err(Error::invalid(format!("label {c} outside {n} classes")));
                    }
                    targets[b * n + c] = 1.0;
                }
            }
            binary_cross_entropy(logits, &targets)
        }
    }
}

/// Shuffled mini-batches covering `0..n`. A trailing batch of one record
/// joins the previous batch, since batch statistics need two rows.
pub fn batches(n: usize, batch_size: usize, rng: &mut Stream) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(last);
    }
    out
}

/// One pass over `data` at a fixed learning rate. `rng` drives batch
/// order, DropLead and dropout.
pub fn train_epoch(
    model: &mut LeadwiseNet<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    lr: f64,
    adam: &mut AdamState<f32>,
    mask: Option<&PruneMask>,
    rng: &mut Stream,
) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::invalid("training needs at least two records"));
    }
    let task = model.config.task;
    let mut total = 0.0;
    let plan = batches(data.len(), cfg.batch_size, rng);
    for batch in &plan {
        let x = data.inputs.select_rows(batch);
        let (x, _) = drop_lead(&x, cfg.droplead_p, rng, Mode::Train);
        let labels: Vec<Vec<usize>> = batch.iter().map(|&i| data.labels[i].clone()).collect();
        model.zero_grad();
        let out = model.forward(&x, Mode::Train, rng)?;
        let (loss, grad) = loss_and_grad(&out.logits, &labels, task)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                param: "training loss".into(),
            });
        }
        model.backward(&grad)?;
        adam_step(model, adam, lr, cfg.weight_decay, mask)?;
        total += loss as f64;
    }
    model.clear_cache();
    Ok(total / plan.len() as f64)
}

/// Trains for `cfg.epochs_total` epochs on the cosine schedule and keeps
/// the final-epoch weights. `on_epoch` sees each epoch's statistics.
pub fn fit(
    model: &mut LeadwiseNet<f32>,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &Stream,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    let mut adam = AdamState::new();
    let mut history = Vec::with_capacity(cfg.epochs_total);
    for epoch in 0..cfg.epochs_total {
        let lr = lr_schedule(epoch, cfg)?;
        let loss = train_epoch(model, data, cfg, lr, &mut adam, None, &mut rng.split(epoch as u64))?;
        let stats = EpochStats { epoch, lr, loss };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Eval-mode class probabilities for every row of `inputs`.
pub fn predict_probs(
    model: &mut LeadwiseNet<f32>,
    inputs: &Tensor3<f32>,
    batch_size: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut probs = Vec::with_capacity(inputs.batch());
    let rows: Vec<usize> = (0..inputs.batch()).collect();
    for chunk in rows.chunks(batch_size.max(1)) {
        let out = model.forward_eval(&inputs.select_rows(chunk))?;
        probs.extend(probabilities(&out.logits, model.config.task));
    }
    model.clear_cache();
    Ok(probs)
}

/// Label sets predicted from probabilities: argmax for multi-class,
/// `p >= threshold` per class for multi-label.
pub fn decide(probs: &[Vec<f64>], task: Task, thresholds: Option<&[f64]>) -> Result<Vec<Vec<usize>>> {
    match task {
        Task::MultiClass => Ok(probs.iter().map(|p| vec![argmax(p)]).collect()),
        Task::MultiLabel => {
            let th = thresholds
                .ok_or_else(|| Error::invalid("multi-label prediction needs per-class thresholds"))?;
            if let Some(p) = probs.iter().find(|p| p.len() != th.len()) {
                return Err(Error::shape(format!("{} thresholds for {} classes", th.len(), p.len())));
            }
            Ok(probs
                .iter()
                .map(|p| (0..p.len()).filter(|&c| p[c] >= th[c]).collect())
                .collect())
        }
    }
}

pub fn evaluate(
    model: &mut LeadwiseNet<f32>,
    data: &Dataset,
    thresholds: Option<&[f64]>,
    batch_size: usize,
) -> Result<MetricsReport> {
    let probs = predict_probs(model, &data.inputs, batch_size)?;
    let predicted = decide(&probs, model.config.task, thresholds)?;
    MetricsReport::from_predictions(&predicted, &data.labels, &data.classes)
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub round: usize,
    pub split: RoundSplit,
    pub model: LeadwiseNet<f32>,
    /// Multi-label only: per-class thresholds chosen on the validation fold.
    pub thresholds: Option<Vec<f64>>,
    pub history: Vec<EpochStats>,
    /// Test-fold metrics.
    pub report: MetricsReport,
}

/// Trains and scores round `round` of `plan`. The model's initial weights
/// and the training stream both derive from `cfg.seed` and the round.
pub fn run_round(
    data: &Dataset,
    plan: &FoldPlan,
    round: usize,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<RoundResult> {
    let split = plan.round(round)?;
    let seed = Stream::new(cfg.seed);
    let mut model = LeadwiseNet::new(model_cfg.clone(), &seed.split(round as u64))?;
    let train = data.subset(&split.train);
    let history = fit(&mut model, &train, cfg, &seed.split(1000 + round as u64), |s| {
        log::info!(
            "round {round} epoch {:>3}  lr {:.2e}  loss {:.4}",
            s.epoch,
            s.lr,
            s.loss
        );
    })?;
    let thresholds = match model_cfg.task {
        Task::MultiClass => None,
        Task::MultiLabel => {
            let val = data.subset(&split.val);
            let probs = predict_probs(&mut model, &val.inputs, cfg.batch_size)?;
            Some(threshold_search(&probs, &val.labels, data.n_classes()))
        }
    };
    let test = data.subset(&split.test);
    let report = evaluate(&mut model, &test, thresholds.as_deref(), cfg.batch_size)?;
    Ok(RoundResult {
        round,
        split,
        model,
        thresholds,
        history,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct CvSummary {
    pub plan: FoldPlan,
    pub reports: Vec<MetricsReport>,
    pub mean: MetricsReport,
}

/// Runs the first `cfg.rounds` rounds of stratified `cfg.k`-fold
/// cross-validation. `on_round` receives each finished round (for
/// checkpointing); a failing round aborts the run with its index.
pub fn run_cv(
    data: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut on_round: impl FnMut(&RoundResult) -> Result<()>,
) -> Result<CvSummary> {
    cfg.validate()?;
    if model_cfg.n_classes != data.n_classes() || model_cfg.task != data.task {
        return Err(Error::Config(format!(
            "model is configured for {} {} classes but the dataset has {} {} classes",
            model_cfg.n_classes,
            model_cfg.task,
            data.n_classes(),
            data.task
        )));
    }
    let plan = stratified_kfold(&data.labels, cfg.k, cfg.seed)?;
    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let wrap = |e: Error| Error::Round {
            round,
            source: Box::new(e),
        };
        let result = run_round(data, &plan, round, model_cfg, cfg).map_err(wrap)?;
        log::info!(
            "round {round}: test macro F1 {:.4}",
            result.report.macro_avg.f1
        );
        on_round(&result).map_err(wrap)?;
        reports.push(result.report);
    }
    let mean = MetricsReport::mean(&reports)?;
    Ok(CvSummary {
        plan,
        reports,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let b = batches(65, 32, &mut Stream::new(0));
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![32, 33]);
        let mut all: Vec<usize> = b.into_iter().flatten().collect();
        all.sort_unstable();
        assert_eq!(all, (0..65).collect::<Vec<_>>());
    }

    #[test]
    fn decide_matches_probabilities() {
        let probs = vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]];
        assert_eq!(decide(&probs, Task::MultiClass, None).unwrap(), vec![vec![1], vec![0]]);
        let th = [0.5, 0.4, 0.3];
        assert_eq!(
            decide(&probs, Task::MultiLabel, Some(&th)).unwrap(),
            vec![vec![1, 2], vec![1]]
        );
    }
}
