//! Command implementations.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::cli::config::RunConfig;
use crate::cli::rundir::{self, RunDir};
use crate::cli::{
    Command, ConfigArgs, EvalArgs, ExplainArgs, PruneArgs, StatsArgs, SynthArgs, TrainArgs,
};
use crate::compress::{
    count_stats, fine_tune, load_checkpoint, prune_global_l1, save_checkpoint, size_stats, stats_text,
    Format,
};
use crate::data::{
    load_mask, load_record, preprocess, synth_dataset, Dataset, DatasetManifest, LeadSelection,
    Normalization, SynthClass, SynthSpec,
};
use crate::error::{Error, Result};
use crate::explain::{explain_batch_with, lead_wise_explanation_with, mass_inside, render_explanation, sanity_check};
use crate::model::config::parse_pairs;
use crate::model::{argmax, LeadwiseNet, ModelConfig};
use crate::rng::Stream;
use crate::training::{evaluate, predict_probs, run_cv, stratified_kfold};

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Stats(a) => cmd_stats(a),
    }
}

/// Preset, then the config file, then `named` flag settings, then `--set`.
fn resolve_config(args: &ConfigArgs, named: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::preset(args.preset);
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for (key, value) in named {
        if let Some(v) = value {
            cfg.apply(key, v)?;
        }
    }
    cfg.apply_overrides(&args.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Provenance stored inside checkpoints: what explain/eval need to feed the
/// model the same inputs it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub classes: Vec<String>,
    pub leads: LeadSelection,
    pub normalization: Normalization,
}

impl CheckpointMeta {
    pub fn to_text(&self) -> String {
        format!(
            "classes = {}\ndata.leads = {}\ndata.normalization = {}\n",
            self.classes.join(","),
            self.leads,
            self.normalization
        )
    }

    /// Missing keys fall back to defaults; classes default to `class{i}`.
    pub fn from_text(text: &str, n_classes: usize) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let classes = match pairs.get("classes") {
            Some(v) if !v.is_empty() => v.split(',').map(|c| c.trim().to_string()).collect(),
            _ => (0..n_classes).map(|i| format!("class{i}")).collect(),
        };
        Ok(Self {
            classes,
            leads: pairs.get("data.leads").map(|v| v.parse()).transpose()?.unwrap_or_default(),
            normalization: pairs
                .get("data.normalization")
                .map(|v| v.parse())
                .transpose()?
                .unwrap_or_default(),
        })
    }
}

fn load_model(path: &Path) -> Result<(LeadwiseNet<f32>, CheckpointMeta)> {
    let (model, meta) = load_checkpoint(path)?;
    let meta = CheckpointMeta::from_text(&meta, model.config.n_classes)?;
    Ok((model, meta))
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SynthSpec::new(SynthClass::first(a.classes)?, a.per_class, a.seed);
    spec.task = a.task;
    spec.noise_mv = a.noise_mv;
    let manifest = synth_dataset(&spec, &a.out)?;
    log::info!(
        "wrote {} records ({} classes) and {}",
        manifest.records.len(),
        manifest.n_classes(),
        a.out.join("manifest.txt").display()
    );
    Ok(())
}

/// Loads the manifest with the configured lead selection and records the
/// resolved selection, class count and task in `cfg`.
fn load_dataset(cfg: &mut RunConfig) -> Result<Dataset> {
    let path = cfg
        .manifest
        .clone()
        .ok_or_else(|| Error::Config("no dataset manifest (pass --manifest or set data.manifest)".into()))?;
    let mut manifest = DatasetManifest::load(&path)?;
    match &cfg.leads {
        Some(leads) => manifest.leads = leads.clone(),
        None => cfg.leads = Some(manifest.leads.clone()),
    }
    if cfg.model.n_classes != manifest.n_classes() || cfg.model.task != manifest.task {
        log::info!(
            "model head set to {} {} classes from the manifest",
            manifest.n_classes(),
            manifest.task
        );
        cfg.model.n_classes = manifest.n_classes();
        cfg.model.task = manifest.task;
    }
    log::info!("loading {} records from {}", manifest.records.len(), path.display());
    Dataset::load(&manifest, cfg.normalization)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    let mut cfg = resolve_config(
        &a.cfg,
        &[
            ("data.manifest", path_str(&a.manifest)),
            ("run.name", a.name.clone()),
            ("run.dir", path_str(&a.runs_dir)),
            ("train.rounds", a.folds.map(|v| v.to_string())),
            ("train.epochs_total", a.epochs.map(|v| v.to_string())),
            ("train.seed", a.seed.map(|v| v.to_string())),
            ("data.leads", a.leads.clone()),
        ],
    )?;
    let data = load_dataset(&mut cfg)?;
    cfg.validate()?;
    let run = RunDir::open(&cfg.run_dir())?;
    run.write(&run.config_path(), &cfg.to_text())?;
    let meta = CheckpointMeta {
        classes: data.classes.clone(),
        leads: cfg.leads.clone().unwrap_or_default(),
        normalization: cfg.normalization,
    };
    let mut metrics = String::from("fold,class,metric,value\n");
    let summary = run_cv(&data, &cfg.model, &cfg.train, |r| {
        let path = run.checkpoint_path(r.round);
        save_checkpoint(&path, &r.model, Format::Dense, &meta.to_text())?;
        if let Some(th) = &r.thresholds {
            write_file(&rundir::thresholds_path(&path), rundir::thresholds_to_text(&data.classes, th))?;
        }
        for line in r.report.csv_lines(&r.round.to_string()) {
            metrics.push_str(&line);
            metrics.push('\n');
        }
        log::info!("saved {}", path.display());
        Ok(())
    })?;
    for line in summary.mean.csv_lines("mean") {
        metrics.push_str(&line);
        metrics.push('\n');
    }
    run.write(&run.metrics_path(), &metrics)?;
    eprint!("{}", summary.mean.to_text());
    log::info!("run written to {}", run.root().display());
    Ok(())
}

fn read_thresholds(checkpoint: &Path) -> Result<Option<Vec<f64>>> {
    let path = rundir::thresholds_path(checkpoint);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    rundir::thresholds_from_text(&text, &path.display().to_string()).map(Some)
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let (checkpoint, data, out) = if let Some(run) = &a.run {
        let cfg_path = run.join("config");
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let mut cfg = RunConfig::from_text(&text)?;
        let data = load_dataset(&mut cfg)?;
        let plan = stratified_kfold(&data.labels, cfg.train.k, cfg.train.seed)?;
        let test = data.subset(&plan.round(a.round)?.test);
        let out = a.out.clone().unwrap_or_else(|| run.join(format!("eval_round{}", a.round)));
        (rundir::checkpoint_path(run, a.round), test, out)
    } else {
        let checkpoint = a
            .checkpoint
            .clone()
            .ok_or_else(|| Error::Config("pass --run or --checkpoint with --manifest".into()))?;
        let manifest = a
            .manifest
            .clone()
            .ok_or_else(|| Error::Config("--checkpoint needs --manifest".into()))?;
        let (_, meta) = load_model(&checkpoint)?;
        let mut m = DatasetManifest::load(&manifest)?;
        m.leads = meta.leads;
        let data = Dataset::load(&m, meta.normalization)?;
        let out = a.out.clone().unwrap_or_else(|| checkpoint.with_extension("eval"));
        (checkpoint, data, out)
    };
    let (mut model, _) = load_model(&checkpoint)?;
    if model.config.n_classes != data.n_classes() {
        return Err(Error::invalid(format!(
            "checkpoint has {} classes but the dataset has {}",
            model.config.n_classes,
            data.n_classes()
        )));
    }
    let thresholds = read_thresholds(&checkpoint)?;
    let report = evaluate(&mut model, &data, thresholds.as_deref(), 32)?;
    let mut text = String::from("fold,class,metric,value\n");
    for line in report.csv_lines("eval") {
        let _ = writeln!(text, "{line}");
    }
    write_file(&out, text)?;
    eprint!("{}", report.to_text());
    log::info!("metrics written to {}", out.display());
    Ok(())
}

fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let (mut model, meta) = load_model(&a.checkpoint)?;
    if let Some(c) = a.class {
        if c >= model.config.n_classes {
            return Err(Error::Config(format!(
                "--class {c} out of range for {} classes",
                model.config.n_classes
            )));
        }
    }
    match (&a.record, &a.manifest) {
        (Some(record), _) => explain_record(&mut model, &meta, record, a),
        (None, Some(manifest)) => explain_manifest(&model, &meta, manifest, a),
        (None, None) => Err(Error::Config("pass --record or --manifest".into())),
    }
}

fn explain_record(model: &mut LeadwiseNet<f32>, meta: &CheckpointMeta, path: &Path, a: &ExplainArgs) -> Result<()> {
    let record = load_record(path)?;
    let input = preprocess(&record, &meta.leads, meta.normalization)?;
    let class = match a.class {
        Some(c) => c,
        None => {
            let probs = predict_probs(model, &input.x, 1)?;
            argmax(&probs[0])
        }
    };
    let explanation = lead_wise_explanation_with(model, &input.x, class, a.score)?;
    let out = a.out.clone().unwrap_or_else(|| path.with_extension("svg"));
    let class_name = meta.classes.get(class).cloned().unwrap_or_else(|| class.to_string());
    render_explanation(
        &out,
        &input.x,
        &explanation,
        &meta.leads.0,
        &format!("{} explained for {class_name}", record.id),
    )?;
    println!("record = {}", record.id);
    println!("class = {class} ({class_name})");
    for (lead, alpha) in meta.leads.0.iter().zip(explanation.alpha) {
        println!("alpha[{lead}] = {alpha:.6}");
    }
    if let Ok(mask) = load_mask(path) {
        if !mask.is_empty() {
            println!("mass_inside_evidence = {:.4}", mass_inside(&explanation, &mask));
        }
    }
    log::info!("figure written to {}", out.display());
    Ok(())
}

/// Localization over masked records and the classifier randomization check
/// over the first `limit` records, each explained for its first label.
fn explain_manifest(model: &LeadwiseNet<f32>, meta: &CheckpointMeta, path: &Path, a: &ExplainArgs) -> Result<()> {
    let mut manifest = DatasetManifest::load(path)?;
    manifest.leads = meta.leads.clone();
    manifest.records.truncate(a.limit);
    let data = Dataset::load(&manifest, meta.normalization)?;
    let out_dir = a.out_dir.clone().unwrap_or_else(|| PathBuf::from("explain"));
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let classes: Vec<usize> = data.labels.iter().map(|l| l.first().copied().unwrap_or(0)).collect();

    let mut model = model.clone();
    let mut loc = String::from("recording_id,class,mass_inside\n");
    let (mut hits, mut scored) = (0usize, 0usize);
    for (i, entry) in manifest.records.iter().enumerate() {
        let Ok(mask) = load_mask(&manifest.root.join(&entry.path)) else { continue };
        if mask.is_empty() {
            continue;
        }
        let e = explain_batch_with(&mut model, &data.inputs.select_rows(&[i]), &classes[i..=i], a.score)?.remove(0);
        let m = mass_inside(&e, &mask);
        scored += 1;
        hits += usize::from(m >= 0.5);
        let _ = writeln!(loc, "{},{},{m:.6}", data.ids[i], classes[i]);
    }
    let _ = writeln!(loc, "# records with at least half the mass inside = {hits}/{scored}");
    write_file(&out_dir.join("localization.csv"), loc)?;

    let report = sanity_check(&model, &data.inputs, &data.ids, &classes, a.score, a.seed, 16)?;
    report.save(&out_dir.join("randomization.csv"))?;
    println!("localized = {hits}/{scored}");
    println!("mean_rho = {:.4}", report.mean_rho());
    println!("mean_abs_rho = {:.4}", report.mean_abs_rho());
    log::info!("reports written to {}", out_dir.display());
    Ok(())
}

fn cmd_prune(a: &PruneArgs) -> Result<()> {
    let mut cfg = resolve_config(
        &a.cfg,
        &[
            ("prune.sparsity", a.sparsity.map(|v| v.to_string())),
            ("prune.scope", a.scope.map(|v| v.to_string())),
            ("data.manifest", a.manifest.as_ref().map(|p| p.display().to_string())),
        ],
    )?;
    let (mut model, meta) = load_model(&a.checkpoint)?;
    let mask = prune_global_l1(&mut model, cfg.prune_sparsity, cfg.prune_scope)?;
    log::info!(
        "pruned {} of {} weights ({})",
        mask.pruned_count(),
        mask.len(),
        cfg.prune_scope
    );
    if a.finetune {
        cfg.leads = Some(meta.leads.clone());
        cfg.normalization = meta.normalization;
        let data = load_dataset(&mut cfg)?;
        let rng = Stream::new(cfg.train.seed).split(2000);
        fine_tune(&mut model, &data, &mask, &cfg.train, &rng, |s| {
            log::info!("fine-tune epoch {}  loss {:.4}", s.epoch, s.loss);
        })?;
    }
    let bytes = save_checkpoint(&a.out, &model, Format::Sparse, &meta.to_text())?;
    let sizes = size_stats(&model);
    log::info!(
        "wrote {} ({bytes} bytes, {:.3} of dense)",
        a.out.display(),
        sizes.ratio()
    );
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let (config, sizes): (ModelConfig, _) = match &a.checkpoint {
        Some(path) => {
            let (model, _) = load_model(path)?;
            let sizes = size_stats(&model);
            (model.config.clone(), Some(sizes))
        }
        None => (resolve_config(&a.cfg, &[])?.model, None),
    };
    let stats = count_stats(&config);
    let text = stats_text(&stats, sizes.as_ref());
    print!("{text}");
    if let Some(out) = &a.out {
        write_file(out, &text)?;
    }
    Ok(())
}
