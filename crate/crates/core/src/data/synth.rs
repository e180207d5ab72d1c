//! Synthetic pseudo-ECG datasets with known evidence locations.
//!
//! Every record is a train of beats built from Gaussian P, Q, R, S and T
//! components plus baseline wander and white noise. Abnormal classes apply
//! one morphological edit to every beat, and the sample ranges touched by
//! that edit are reported as the record's evidence mask:
//!
//! | class      | edit                                   | range around each R peak |
//! |------------|----------------------------------------|--------------------------|
//! | `normal`   | none                                   | none                     |
//! | `no_p`     | P wave removed                         | `[-116, -44)`            |
//! | `st_up`    | raised plateau between S and T         | `[25, 125)`              |
//! | `wide_qrs` | Q, R, S widened and spread apart       | `[-50, 55)`              |
//! | `tall_t`   | T wave amplitude x2.5                  | `[70, 230)`              |
//!
//! Randomness for a record is drawn once into a [`RecordDraw`]; rendering
//! is a pure function of the draw and the edits, so a baseline and an
//! edited record can share every random choice.

use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::manifest::{DatasetManifest, ManifestEntry};
use crate::data::preprocess::{standard_lead_index, LeadSelection, SAMPLING_RATE};
use crate::data::record::{AmplitudeUnit, EcgRecord};
use crate::error::{Error, Result};
use crate::model::config::{Task, INPUT_LENGTH};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthClass {
    Normal,
    NoP,
    StUp,
    WideQrs,
    TallT,
}

impl SynthClass {
    pub const ALL: [SynthClass; 5] = [
        SynthClass::Normal,
        SynthClass::NoP,
        SynthClass::StUp,
        SynthClass::WideQrs,
        SynthClass::TallT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::Normal => "normal",
            SynthClass::NoP => "no_p",
            SynthClass::StUp => "st_up",
            SynthClass::WideQrs => "wide_qrs",
            SynthClass::TallT => "tall_t",
        }
    }

    /// Samples relative to each R peak altered by this class's edit.
    pub fn evidence_window(self) -> Option<Range<i64>> {
        match self {
            SynthClass::Normal => None,
            SynthClass::NoP => Some(-116..-44),
            SynthClass::StUp => Some(25..125),
            SynthClass::WideQrs => Some(-50..55),
            SynthClass::TallT => Some(70..230),
        }
    }

    /// The first `n` classes of the default order; `n` is 2 to 5.
    pub fn first(n: usize) -> Result<Vec<SynthClass>> {
        if !(2..=Self::ALL.len()).contains(&n) {
            return Err(Error::invalid(format!(
                "synthetic datasets have 2 to {} classes, got {n}",
                Self::ALL.len()
            )));
        }
        Ok(Self::ALL[..n].to_vec())
    }
}

impl fmt::Display for SynthClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown synthetic class `{s}`")))
    }
}

/// Per-lead wave amplitudes in millivolts.
#[derive(Debug, Clone, Copy)]
struct LeadProfile {
    p: f64,
    q: f64,
    r: f64,
    s: f64,
    t: f64,
    st: f64,
}

const fn profile(p: f64, q: f64, r: f64, s: f64, t: f64, st: f64) -> LeadProfile {
    LeadProfile { p, q, r, s, t, st }
}

/// Indexed like [`crate::data::preprocess::STANDARD_LEADS`].
const PROFILES: [LeadProfile; 12] = [
    profile(0.10, -0.08, 0.80, -0.20, 0.25, 0.15),  // I
    profile(0.15, -0.10, 1.20, -0.25, 0.30, 0.20),  // II
    profile(0.08, -0.05, 0.50, -0.15, 0.15, 0.10),  // III
    profile(-0.10, 0.05, -0.90, 0.20, -0.25, -0.15), // aVR
    profile(0.05, -0.05, 0.40, -0.10, 0.12, 0.08),  // aVL
    profile(0.12, -0.08, 0.90, -0.20, 0.22, 0.15),  // aVF
    profile(0.10, -0.02, 0.40, -0.90, 0.20, 0.25),  // V1
    profile(0.10, -0.03, 0.60, -1.10, 0.45, 0.30),  // V2
    profile(0.10, -0.05, 0.90, -0.80, 0.45, 0.25),  // V3
    profile(0.10, -0.08, 1.30, -0.50, 0.40, 0.20),  // V4
    profile(0.10, -0.08, 1.20, -0.30, 0.35, 0.15),  // V5
    profile(0.10, -0.08, 1.00, -0.20, 0.30, 0.12),  // V6
];

/// Every random choice behind one record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDraw {
    /// R peak positions in samples; may lie slightly outside the record.
    pub r_peaks: Vec<f64>,
    /// Per-beat amplitude factor.
    pub beat_scale: Vec<f64>,
    /// Per-lead amplitude factor.
    pub lead_gain: Vec<f64>,
    /// Per-lead baseline wander `(amplitude mV, frequency Hz, phase rad)`.
    pub wander: Vec<(f64, f64, f64)>,
    /// Per-lead white noise in millivolts.
    pub noise: Vec<Vec<f64>>,
}

impl RecordDraw {
    pub fn sample(n_leads: usize, length: usize, noise_mv: f64, rng: &mut Stream) -> Self {
        let rr = rng.uniform_range(400.0, 520.0);
        let mut t = rng.uniform_range(-rr, 0.0) + 130.0;
        let mut r_peaks = Vec::new();
        let mut beat_scale = Vec::new();
        while t < length as f64 + 250.0 {
            r_peaks.push(t);
            beat_scale.push(1.0 + 0.05 * rng.normal());
            t += rr + 8.0 * rng.normal();
        }
        let lead_gain = (0..n_leads).map(|_| rng.uniform_range(0.8, 1.2)).collect();
        let wander = (0..n_leads)
            .map(|_| {
                (
                    rng.uniform_range(0.0, 0.08),
                    rng.uniform_range(0.15, 0.4),
                    rng.uniform_range(0.0, std::f64::consts::TAU),
                )
            })
            .collect();
        let noise = (0..n_leads)
            .map(|_| (0..length).map(|_| noise_mv * rng.normal()).collect())
            .collect();
        Self {
            r_peaks,
            beat_scale,
            lead_gain,
            wander,
            noise,
        }
    }

    /// Renders leads (standard names) in millivolts with the given edits.
    pub fn render(&self, leads: &[String], edits: &[SynthClass], length: usize) -> Result<Vec<Vec<f64>>> {
        let has = |c: SynthClass| edits.contains(&c);
        let width = if has(SynthClass::WideQrs) { 2.2 } else { 1.0 };
        let p_amp = if has(SynthClass::NoP) { 0.0 } else { 1.0 };
        let t_amp = if has(SynthClass::TallT) { 2.5 } else { 1.0 };
        let st_amp = if has(SynthClass::StUp) { 1.0 } else { 0.0 };
        let mut out = Vec::with_capacity(leads.len());
        for (li, name) in leads.iter().enumerate() {
            let prof = standard_lead_index(name)
                .map(|i| PROFILES[i])
                .ok_or_else(|| Error::invalid(format!("no synthetic profile for lead `{name}`")))?;
            let (amp, freq, phase) = self.wander[li];
            let mut sig: Vec<f64> = (0..length)
                .map(|n| {
                    let secs = n as f64 / SAMPLING_RATE;
                    amp * (std::f64::consts::TAU * freq * secs + phase).sin() + self.noise[li][n]
                })
                .collect();
            for (&r, &scale) in self.r_peaks.iter().zip(&self.beat_scale) {
                let g = scale * self.lead_gain[li];
                let lo = ((r - 300.0).floor().max(0.0)) as usize;
                let hi = ((r + 300.0).ceil().max(0.0) as usize).min(length);
                for (n, v) in sig.iter_mut().enumerate().take(hi).skip(lo) {
                    let d = n as f64 - r;
                    let mut beat = p_amp * prof.p * gauss(d, -80.0, 10.0)
                        + prof.q * gauss(d, -12.0 * width, 3.0 * width)
                        + prof.r * gauss(d, 0.0, 4.0 * width)
                        + prof.s * gauss(d, 12.0 * width, 3.0 * width)
                        + t_amp * prof.t * gauss(d, 150.0, 22.0);
                    if st_amp != 0.0 {
                        beat += st_amp * prof.st * plateau(d, 25.0, 125.0, 15.0);
                    }
                    *v += g * beat;
                }
            }
            out.push(sig);
        }
        Ok(out)
    }

    /// Union of the edits' windows around every R peak, clipped to the
    /// record and merged into sorted, disjoint half-open ranges.
    pub fn evidence(&self, edits: &[SynthClass], length: usize) -> Vec<Range<usize>> {
        let mut ranges: Vec<Range<usize>> = Vec::new();
        for &r in &self.r_peaks {
            for w in edits.iter().filter_map(|c| c.evidence_window()) {
                let peak = r.round() as i64;
                let lo = (peak + w.start).clamp(0, length as i64) as usize;
                let hi = (peak + w.end).clamp(0, length as i64) as usize;
                if lo < hi {
                    ranges.push(lo..hi);
                }
            }
        }
        merge_ranges(ranges)
    }
}

fn gauss(d: f64, center: f64, sigma: f64) -> f64 {
    let z = (d - center) / sigma;
    if z.abs() > 6.0 {
        0.0
    } else {
        (-0.5 * z * z).exp()
    }
}

/// 1 on `[lo + ramp, hi - ramp]`, raised-cosine edges, exactly 0 outside
/// `(lo, hi)`.
fn plateau(d: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    if d <= lo || d >= hi {
        0.0
    } else if d < lo + ramp {
        0.5 * (1.0 - (std::f64::consts::PI * (d - lo) / ramp).cos())
    } else if d > hi - ramp {
        0.5 * (1.0 - (std::f64::consts::PI * (hi - d) / ramp).cos())
    } else {
        1.0
    }
}

pub fn merge_ranges(mut ranges: Vec<Range<usize>>) -> Vec<Range<usize>> {
    ranges.sort_by_key(|r| (r.start, r.end));
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match merged.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => merged.push(r),
        }
    }
    merged
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: Vec<SynthClass>,
    pub per_class: usize,
    pub seed: u64,
    pub task: Task,
    /// Lead names written to each record.
    pub leads: Vec<String>,
    /// White-noise standard deviation in millivolts.
    pub noise_mv: f64,
    /// Multi-label only: probability that a record gets a second,
    /// different abnormal edit.
    pub second_label_p: f64,
}

impl SynthSpec {
    pub fn new(classes: Vec<SynthClass>, per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            seed,
            task: Task::MultiClass,
            leads: LeadSelection::default().0.to_vec(),
            noise_mv: 0.03,
            second_label_p: 0.3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::invalid("synthetic datasets need at least two classes"));
        }
        if self.per_class == 0 {
            return Err(Error::invalid("per-class count must be at least 1"));
        }
        let distinct: std::collections::HashSet<_> = self.classes.iter().collect();
        if distinct.len() != self.classes.len() {
            return Err(Error::invalid("synthetic classes must be distinct"));
        }
        if !(0.0..=1.0).contains(&self.second_label_p) {
            return Err(Error::invalid("second_label_p must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name().to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub record: EcgRecord,
    /// Sorted, disjoint sample ranges carrying class evidence; empty for
    /// normal records.
    pub evidence: Vec<Range<usize>>,
}

/// Generates `per_class` records per class, interleaved by class. Record
/// `i` uses its own split of the seed stream, so records are independent of
/// generation order.
pub fn synth_records(spec: &SynthSpec) -> Result<Vec<SynthRecord>> {
    spec.validate()?;
    let root = Stream::new(spec.seed);
    let n_classes = spec.classes.len();
    let abnormal: Vec<usize> = (0..n_classes)
        .filter(|&c| spec.classes[c] != SynthClass::Normal)
        .collect();
    let mut out = Vec::with_capacity(n_classes * spec.per_class);
    for i in 0..n_classes * spec.per_class {
        let class = i % n_classes;
        let mut rng = root.split(i as u64);
        let draw = RecordDraw::sample(spec.leads.len(), INPUT_LENGTH, spec.noise_mv, &mut rng);
        let mut labels = vec![class];
        if spec.task == Task::MultiLabel
            && spec.classes[class] != SynthClass::Normal
            && rng.bernoulli(spec.second_label_p)
        {
            let others: Vec<usize> = abnormal.iter().copied().filter(|&c| c != class).collect();
            if !others.is_empty() {
                labels.push(others[rng.below(others.len())]);
                labels.sort_unstable();
            }
        }
        let edits: Vec<SynthClass> = labels.iter().map(|&c| spec.classes[c]).collect();
        let signals = draw
            .render(&spec.leads, &edits, INPUT_LENGTH)?
            .into_iter()
            .map(|lead| lead.into_iter().map(|mv| (mv * 1000.0) as f32).collect())
            .collect();
        out.push(SynthRecord {
            record: EcgRecord {
                id: format!("s{i:05}"),
                leads: spec.leads.clone(),
                signals,
                sampling_rate: SAMPLING_RATE,
                unit: AmplitudeUnit::Microvolt,
                labels,
                demographics: None,
            },
            evidence: draw.evidence(&edits, INPUT_LENGTH),
        });
    }
    Ok(out)
}

pub const RECORD_EXTENSION: &str = "lwecg";
pub const MASK_EXTENSION: &str = "mask";

/// Writes records, evidence masks and `manifest.txt` under `out_dir`,
/// creating it if needed. Returns the manifest.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<DatasetManifest> {
    let records = synth_records(spec)?;
    let rec_dir = out_dir.join("records");
    fs::create_dir_all(&rec_dir).map_err(|e| Error::io(&rec_dir, e))?;
    let mut entries = Vec::with_capacity(records.len());
    for r in &records {
        let rel = PathBuf::from("records").join(format!("{}.{RECORD_EXTENSION}", r.record.id));
        r.record.save(&out_dir.join(&rel))?;
        let mask_path = out_dir.join(rel.with_extension(MASK_EXTENSION));
        fs::write(&mask_path, mask_to_text(&r.evidence)).map_err(|e| Error::io(&mask_path, e))?;
        entries.push(ManifestEntry {
            path: rel,
            labels: r.record.labels.clone(),
        });
    }
    let leads = match &spec.leads[..] {
        [a, b, c] => LeadSelection::new(a, b, c)?,
        _ => LeadSelection::default(),
    };
    let manifest = DatasetManifest {
        root: out_dir.to_path_buf(),
        task: spec.task,
        classes: spec.class_names(),
        leads,
        records: entries,
    };
    manifest.save(&out_dir.join("manifest.txt"))?;
    Ok(manifest)
}

/// One `start,end` half-open range per line.
pub fn mask_to_text(ranges: &[Range<usize>]) -> String {
    ranges.iter().map(|r| format!("{},{}\n", r.start, r.end)).collect()
}

pub fn mask_from_text(text: &str, source: &str) -> Result<Vec<Range<usize>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let parsed = l
                .split_once(',')
                .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            match parsed {
                Some((a, b)) if a < b => Ok(a..b),
                _ => Err(Error::Parse {
                    file: source.to_string(),
                    msg: format!("line {}: expected `start,end` with start < end", i + 1),
                }),
            }
        })
        .collect()
}

/// Reads the evidence mask stored next to a record file.
pub fn load_mask(record_path: &Path) -> Result<Vec<Range<usize>>> {
    let path = record_path.with_extension(MASK_EXTENSION);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    mask_from_text(&text, &path.display().to_string())
}
