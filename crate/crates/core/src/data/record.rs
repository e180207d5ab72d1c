//! On-disk ECG record format.
//!
//! ```text
//! LWECG 1
//! id = A0001
//! leads = I,II,III,aVR,aVL,aVF,V1,V2,V3,V4,V5,V6
//! rate = 500
//! unit = microvolt            # or millivolt
//! length = 5000
//! labels = 0,3                # class ids, may be empty
//! age = 61                    # optional
//! sex = F                     # optional, M or F
//!
//! <n_leads * length little-endian f32, lead-major>
//! ```
//!
//! The header is UTF-8 text ending at the first empty line. Signals are held
//! in microvolts once loaded; millivolt files are scaled by 1000.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const RECORD_MAGIC: &str = "LWECG 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeUnit {
    Microvolt,
    Millivolt,
}

impl AmplitudeUnit {
    /// Factor that converts this unit to microvolts.
    pub fn to_microvolt(self) -> f32 {
        match self {
            AmplitudeUnit::Microvolt => 1.0,
            AmplitudeUnit::Millivolt => 1000.0,
        }
    }
}

impl fmt::Display for AmplitudeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AmplitudeUnit::Microvolt => "microvolt",
            AmplitudeUnit::Millivolt => "millivolt",
        })
    }
}

impl FromStr for AmplitudeUnit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "microvolt" | "uV" => Ok(AmplitudeUnit::Microvolt),
            "millivolt" | "mV" => Ok(AmplitudeUnit::Millivolt),
            other => Err(format!("unknown amplitude unit `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Demographics {
    pub age: Option<f32>,
    pub sex: Option<Sex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub id: String,
    pub leads: Vec<String>,
    /// `[n_leads][length]`
    pub signals: Vec<Vec<f32>>,
    pub sampling_rate: f64,
    pub unit: AmplitudeUnit,
    pub labels: Vec<usize>,
    pub demographics: Option<Demographics>,
}

impl EcgRecord {
    pub fn length(&self) -> usize {
        self.signals.first().map_or(0, Vec::len)
    }

    pub fn lead(&self, name: &str) -> Option<&[f32]> {
        self.leads
            .iter()
            .position(|l| l.eq_ignore_ascii_case(name))
            .map(|i| self.signals[i].as_slice())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::invalid(format!("record `{}`: {msg}", self.id));
        if self.leads.len() != self.signals.len() || self.leads.is_empty() {
            return Err(bad(format!(
                "{} lead names for {} signals",
                self.leads.len(),
                self.signals.len()
            )));
        }
        let len = self.length();
        if len == 0 || self.signals.iter().any(|s| s.len() != len) {
            return Err(bad("signals must share a positive length".into()));
        }
        if !(self.sampling_rate > 0.0) {
            return Err(bad(format!("sampling rate {} must be > 0", self.sampling_rate)));
        }
        Ok(())
    }

    /// Serializes in the record file format, keeping the record's unit.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut head = format!(
            "{RECORD_MAGIC}\nid = {}\nleads = {}\nrate = {}\nunit = {}\nlength = {}\nlabels = {}\n",
            self.id,
            self.leads.join(","),
            self.sampling_rate,
            self.unit,
            self.length(),
            self.labels
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        );
        if let Some(d) = &self.demographics {
            if let Some(age) = d.age {
                head.push_str(&format!("age = {age}\n"));
            }
            if let Some(sex) = d.sex {
                head.push_str(match sex {
                    Sex::Male => "sex = M\n",
                    Sex::Female => "sex = F\n",
                });
            }
        }
        head.push('\n');
        let mut out = head.into_bytes();
        for lead in &self.signals {
            for v in lead {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    /// Parses a record and converts it to microvolts.
    pub fn from_bytes(bytes: &[u8], source: &str) -> Result<Self> {
        let err = |msg: String| Error::Parse {
            file: source.to_string(),
            msg,
        };
        let split = bytes
            .windows(2)
            .position(|w| w == b"\n\n")
            .ok_or_else(|| err("header is not terminated by an empty line".into()))?;
        let header = std::str::from_utf8(&bytes[..split])
            .map_err(|_| err("header is not valid UTF-8".into()))?;
        let body = &bytes[split + 2..];

        let mut lines = header.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == RECORD_MAGIC => {}
            Some((_, l)) => return Err(err(format!("line 1: expected `{RECORD_MAGIC}`, found `{l}`"))),
            None => return Err(err("empty header".into())),
        }
        let mut id = None;
        let mut leads = None;
        let mut rate = None;
        let mut unit = None;
        let mut length = None;
        let mut labels = None;
        let mut demo = Demographics::default();
        for (i, line) in lines {
            let lineno = i + 1;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {lineno}: expected `key = value`")))?;
            let (k, v) = (k.trim(), v.trim());
            let field = |what: &str| err(format!("line {lineno}: invalid {what} `{v}`"));
            match k {
                "id" => id = Some(v.to_string()),
                "leads" => {
                    leads = Some(v.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>())
                }
                "rate" => rate = Some(v.parse::<f64>().map_err(|_| field("rate"))?),
                "unit" => {
                    unit = Some(
                        v.parse::<AmplitudeUnit>()
                            .map_err(|m| err(format!("line {lineno}: {m}")))?,
                    )
                }
                "length" => length = Some(v.parse::<usize>().map_err(|_| field("length"))?),
                "labels" => {
                    labels = Some(if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(',')
                            .map(|s| s.trim().parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| field("labels"))?
                    })
                }
                "age" => demo.age = Some(v.parse::<f32>().map_err(|_| field("age"))?),
                "sex" => {
                    demo.sex = Some(match v {
                        "M" | "m" | "male" => Sex::Male,
                        "F" | "f" | "female" => Sex::Female,
                        _ => return Err(field("sex")),
                    })
                }
                other => return Err(err(format!("line {lineno}: unknown header key `{other}`"))),
            }
        }
        let missing = |k: &str| err(format!("header is missing `{k}`"));
        let id = id.ok_or_else(|| missing("id"))?;
        let leads = leads.ok_or_else(|| missing("leads"))?;
        let rate = rate.ok_or_else(|| missing("rate"))?;
        let unit = unit.ok_or_else(|| missing("unit"))?;
        let length = length.ok_or_else(|| missing("length"))?;
        let labels = labels.ok_or_else(|| missing("labels"))?;
        if length == 0 {
            return Err(err("length must be at least 1".into()));
        }
        if !(rate > 0.0) {
            return Err(err(format!("sampling rate {rate} must be > 0")));
        }

        let samples = body.len() / 4;
        let expected = leads.len() * length;
        if !body.len().is_multiple_of(4) || samples < expected {
            let row = samples / length;
            let have = samples - row * length;
            let name = leads.get(row).map_or("?", String::as_str);
            return Err(err(format!(
                "lead row {row} (`{name}`) has {have} of {length} samples (byte offset {})",
                split + 2 + samples * 4
            )));
        }
        if samples > expected {
            return Err(err(format!(
                "{} trailing samples after {} leads of length {length}",
                samples - expected,
                leads.len()
            )));
        }
        let scale = unit.to_microvolt();
        let signals = body
            .chunks_exact(4 * length)
            .map(|row| {
                row.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) * scale)
                    .collect()
            })
            .collect();
        let has_demo = demo.age.is_some() || demo.sex.is_some();
        Ok(Self {
            id,
            leads,
            signals,
            sampling_rate: rate,
            unit: AmplitudeUnit::Microvolt,
            labels,
            demographics: has_demo.then_some(demo),
        })
    }
}

pub fn load_record(path: &Path) -> Result<EcgRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EcgRecord::from_bytes(&bytes, &path.display().to_string())
}
