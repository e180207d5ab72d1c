//! Record to model input: pick three leads, fix the length at 10 s of
//! 500 Hz signal, standardize amplitudes.

use std::fmt;
use std::str::FromStr;

use crate::data::record::EcgRecord;
use crate::error::{Error, Result};
use crate::model::config::{INPUT_LEADS, INPUT_LENGTH};
use crate::tensor::Tensor3;

pub const SAMPLING_RATE: f64 = 500.0;

/// Standard 12-lead order.
pub const STANDARD_LEADS: [&str; 12] = [
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6",
];

/// Row of a lead in the standard 12-lead order.
pub fn standard_lead_index(name: &str) -> Option<usize> {
    STANDARD_LEADS
        .iter()
        .position(|l| l.eq_ignore_ascii_case(name))
}

/// The three leads fed to the model, in backbone order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeadSelection(pub [String; 3]);

impl Default for LeadSelection {
    fn default() -> Self {
        Self(["I".into(), "II".into(), "V1".into()])
    }
}

impl LeadSelection {
    pub fn new(a: &str, b: &str, c: &str) -> Result<Self> {
        for name in [a, b, c] {
            if standard_lead_index(name).is_none() {
                return Err(Error::invalid(format!("unknown lead `{name}`")));
            }
        }
        Ok(Self([
            canonical(a).to_string(),
            canonical(b).to_string(),
            canonical(c).to_string(),
        ]))
    }

    /// Rows in a standard-order 12-lead record.
    pub fn row_indices(&self) -> [usize; 3] {
        self.0
            .clone()
            .map(|n| standard_lead_index(&n).expect("validated lead name"))
    }

    /// `(I, II, Vk)` for each chest lead.
    pub fn chest_variants() -> Vec<LeadSelection> {
        (1..=6)
            .map(|k| LeadSelection::new("I", "II", &format!("V{k}")).expect("standard leads"))
            .collect()
    }
}

fn canonical(name: &str) -> &'static str {
    STANDARD_LEADS[standard_lead_index(name).expect("validated lead name")]
}

impl fmt::Display for LeadSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for LeadSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        match parts[..] {
            [a, b, c] => LeadSelection::new(a, b, c),
            _ => Err(Error::invalid(format!("lead selection `{s}` must name three leads"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// Zero mean, unit variance per lead, over the retained samples.
    #[default]
    Standardize,
    /// Microvolt values as loaded.
    Raw,
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "standardize" => Ok(Normalization::Standardize),
            "raw" => Ok(Normalization::Raw),
            other => Err(Error::Config(format!(
                "unknown normalization `{other}` (expected standardize or raw)"
            ))),
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::Standardize => "standardize",
            Normalization::Raw => "raw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedInput {
    /// `[1, 3, 5000]`
    pub x: Tensor3<f32>,
    pub record_id: String,
    pub leads: LeadSelection,
}

/// Selects the three leads, truncates to or zero-pads up to 5000 samples,
/// and normalizes. Standardization statistics come from the retained
/// samples only, so padding stays exactly zero.
pub fn preprocess(
    record: &EcgRecord,
    leads: &LeadSelection,
    norm: Normalization,
) -> Result<PreprocessedInput> {
    if (record.sampling_rate - SAMPLING_RATE).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "record `{}` is sampled at {} Hz; only {SAMPLING_RATE} Hz input is accepted, resample it before conversion",
            record.id, record.sampling_rate
        )));
    }
    let mut x = Tensor3::zeros(1, INPUT_LEADS, INPUT_LENGTH);
    for (row, name) in leads.0.iter().enumerate() {
        let signal = record.lead(name).ok_or_else(|| {
            Error::invalid(format!(
                "record `{}` has no lead `{name}` (available: {})",
                record.id,
                record.leads.join(",")
            ))
        })?;
        let keep = signal.len().min(INPUT_LENGTH);
        let dst = x.lane_mut(0, row);
        dst[..keep].copy_from_slice(&signal[..keep]);
        if norm == Normalization::Standardize && keep > 0 {
            let kept = &mut dst[..keep];
            let n = keep as f64;
            let mean = kept.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = kept.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            for v in kept.iter_mut() {
                let centered = *v as f64 - mean;
                *v = if std > 1e-12 { centered / std } else { centered } as f32;
            }
        }
    }
    Ok(PreprocessedInput {
        x,
        record_id: record.id.clone(),
        leads: leads.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::record::AmplitudeUnit;

    fn twelve_lead(len: usize) -> EcgRecord {
        EcgRecord {
            id: "r".into(),
            leads: STANDARD_LEADS.iter().map(|s| s.to_string()).collect(),
            signals: (0..12)
                .map(|l| (0..len).map(|t| (l * 100_000 + t) as f32).collect())
                .collect(),
            sampling_rate: 500.0,
            unit: AmplitudeUnit::Microvolt,
            labels: vec![0],
            demographics: None,
        }
    }

    #[test]
    fn pads_short_records_with_zeros() {
        let r = twelve_lead(3000);
        let p = preprocess(&r, &LeadSelection::default(), Normalization::Raw).unwrap();
        for row in 0..3 {
            assert!(p.x.lane(0, row)[3000..].iter().all(|&v| v == 0.0));
        }
        assert_eq!(&p.x.lane(0, 2)[..3000], &r.signals[6][..]);
    }

    #[test]
    fn truncates_long_records() {
        let r = twelve_lead(30_000);
        let p = preprocess(&r, &LeadSelection::default(), Normalization::Raw).unwrap();
        assert_eq!(p.x.lane(0, 1), &r.signals[1][..5000]);
    }

    #[test]
    fn standardized_padding_stays_zero() {
        let r = twelve_lead(3000);
        let p = preprocess(&r, &LeadSelection::default(), Normalization::Standardize).unwrap();
        let kept = &p.x.lane(0, 0)[..3000];
        let mean: f32 = kept.iter().sum::<f32>() / 3000.0;
        assert!(mean.abs() < 1e-3);
        assert!(p.x.lane(0, 0)[3000..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ablation_selection_rows() {
        let sel = LeadSelection::new("I", "II", "V2").unwrap();
        assert_eq!(sel.row_indices(), [0, 1, 7]);
        assert_eq!(LeadSelection::default().row_indices(), [0, 1, 6]);
    }

    #[test]
    fn rejects_missing_lead_and_wrong_rate() {
        let mut r = twelve_lead(100);
        r.leads.truncate(6);
        r.signals.truncate(6);
        assert!(preprocess(&r, &LeadSelection::default(), Normalization::Raw).is_err());
        let mut r = twelve_lead(100);
        r.sampling_rate = 250.0;
        let msg = preprocess(&r, &LeadSelection::default(), Normalization::Raw)
            .unwrap_err()
            .to_string();
        assert!(msg.contains("250"));
    }
}
