//! Parameter-randomization sanity check: explanations should change when
//! the classifier is re-initialized.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::explain::gradcam::{explain_batch_with, CamScore, Explanation};
use crate::model::config::INPUT_LEADS;
use crate::model::net::LeadwiseNet;
use crate::rng::Stream;
use crate::tensor::Tensor3;

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f32]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` when either input is constant, where the coefficient is
/// undefined.
pub fn spearman(a: &[f32], b: &[f32]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizationEntry {
    pub lead: usize,
    pub record_id: String,
    pub rho: f64,
    /// Set when either map was constant; `rho` is then recorded as 0.
    pub undefined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomizationReport {
    /// Seed of the classifier re-initialization.
    pub seed: u64,
    pub entries: Vec<RandomizationEntry>,
}

impl RandomizationReport {
    pub fn mean_rho(&self) -> f64 {
        self.entries.iter().map(|e| e.rho).sum::<f64>() / self.entries.len().max(1) as f64
    }

    pub fn mean_abs_rho(&self) -> f64 {
        self.entries.iter().map(|e| e.rho.abs()).sum::<f64>() / self.entries.len().max(1) as f64
    }

    pub fn undefined_count(&self) -> usize {
        self.entries.iter().filter(|e| e.undefined).count()
    }

    /// `lead,recording_id,rho` lines; undefined pairs carry a trailing
    /// `# undefined` marker.
    pub fn to_text(&self) -> String {
        let mut out = format!("# classifier re-initialization seed = {}\nlead,recording_id,rho\n", self.seed);
        for e in &self.entries {
            let _ = write!(out, "{},{},{:.6}", e.lead, e.record_id, e.rho);
            out.push_str(if e.undefined { " # undefined\n" } else { "\n" });
        }
        let _ = writeln!(out, "# mean_rho = {:.6}", self.mean_rho());
        let _ = writeln!(out, "# mean_abs_rho = {:.6}", self.mean_abs_rho());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Correlations between two explanation sets, lead by lead.
pub fn compare(ids: &[String], original: &[Explanation], other: &[Explanation], seed: u64) -> RandomizationReport {
    let mut entries = Vec::with_capacity(ids.len() * INPUT_LEADS);
    for ((id, a), b) in ids.iter().zip(original).zip(other) {
        for lead in 0..INPUT_LEADS {
            let rho = spearman(&a.maps[lead], &b.maps[lead]);
            entries.push(RandomizationEntry {
                lead,
                record_id: id.clone(),
                rho: rho.unwrap_or(0.0),
                undefined: rho.is_none(),
            });
        }
    }
    RandomizationReport { seed, entries }
}

/// Explains every record with `model` and with a copy whose classifier is
/// freshly re-initialized from `seed`, and correlates the two explanation
/// sets. `classes` names the class to explain per record.
pub fn sanity_check(
    model: &LeadwiseNet<f32>,
    inputs: &Tensor3<f32>,
    ids: &[String],
    classes: &[usize],
    score: CamScore,
    seed: u64,
    batch_size: usize,
) -> Result<RandomizationReport> {
    if ids.len() != inputs.batch() || classes.len() != inputs.batch() {
        return Err(Error::shape(format!(
            "{} records, {} ids, {} classes",
            inputs.batch(),
            ids.len(),
            classes.len()
        )));
    }
    let mut original = model.clone();
    let mut randomized = model.clone();
    randomized.classifier.reinitialize(&mut Stream::new(seed));
    let mut a = Vec::with_capacity(ids.len());
    let mut b = Vec::with_capacity(ids.len());
    let rows: Vec<usize> = (0..inputs.batch()).collect();
    for chunk in rows.chunks(batch_size.max(1)) {
        let x = inputs.select_rows(chunk);
        let cls: Vec<usize> = chunk.iter().map(|&r| classes[r]).collect();
        a.extend(explain_batch_with(&mut original, &x, &cls, score)?);
        b.extend(explain_batch_with(&mut randomized, &x, &cls, score)?);
    }
    Ok(compare(ids, &a, &b, seed))
}
