//! Dataset manifest: which record files make up a dataset and their labels.
//!
//! ```text
//! task = multi_class
//! classes = normal,no_p,st_up,wide_qrs
//! leads = I,II,V1
//!
//! [records]
//! records/r0000.lwecg,0
//! records/r0001.lwecg,2,3
//! ```
//!
//! Record paths are relative to the directory holding the manifest. Lines
//! starting with `#` are comments.

use std::fs;
use std::path::{Path, PathBuf};

use crate::data::preprocess::{preprocess, LeadSelection, Normalization};
use crate::data::record::{load_record, EcgRecord};
use crate::error::{Error, Result};
use crate::model::config::{Task, INPUT_LEADS, INPUT_LENGTH};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub task: Task,
    pub classes: Vec<String>,
    pub leads: LeadSelection,
    pub records: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<Vec<usize>> {
        self.records.iter().map(|r| r.labels.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::invalid("a dataset needs at least two classes"));
        }
        for e in &self.records {
            if e.labels.is_empty() {
                return Err(Error::invalid(format!(
                    "record `{}` has no labels",
                    e.path.display()
                )));
            }
            if let Some(&c) = e.labels.iter().find(|&&c| c >= self.classes.len()) {
                return Err(Error::invalid(format!(
                    "record `{}` has class id {c}, but only {} classes are declared",
                    e.path.display(),
                    self.classes.len()
                )));
            }
            if self.task == Task::MultiClass && e.labels.len() != 1 {
                return Err(Error::invalid(format!(
                    "record `{}` has {} labels in a multi_class dataset",
                    e.path.display(),
                    e.labels.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "task = {}\nclasses = {}\nleads = {}\n\n[records]\n",
            self.task,
            self.classes.join(","),
            self.leads
        );
        for e in &self.records {
            let labels: Vec<String> = e.labels.iter().map(ToString::to_string).collect();
            out.push_str(&format!("{},{}\n", e.path.display(), labels.join(",")));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn parse(text: &str, root: &Path, source: &str) -> Result<Self> {
        let err = |lineno: usize, msg: String| Error::Parse {
            file: source.to_string(),
            msg: format!("line {lineno}: {msg}"),
        };
        let mut task = None;
        let mut classes = None;
        let mut leads = LeadSelection::default();
        let mut records = Vec::new();
        let mut in_records = false;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[records]" {
                in_records = true;
                continue;
            }
            if in_records {
                let mut parts = line.split(',').map(str::trim);
                let path = parts.next().filter(|p| !p.is_empty()).ok_or_else(|| {
                    err(lineno, "expected `path,label[,label...]`".into())
                })?;
                let labels = parts
                    .map(|p| {
                        p.parse::<usize>()
                            .map_err(|_| err(lineno, format!("invalid class id `{p}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                records.push(ManifestEntry {
                    path: PathBuf::from(path),
                    labels,
                });
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(lineno, "expected `key = value`".into()))?;
            let v = v.trim();
            match k.trim() {
                "task" => {
                    task = Some(
                        v.parse::<Task>()
                            .map_err(|e| err(lineno, e.to_string()))?,
                    )
                }
                "classes" => {
                    classes = Some(v.split(',').map(|s| s.trim().to_string()).collect())
                }
                "leads" => leads = v.parse().map_err(|e: Error| err(lineno, e.to_string()))?,
                other => return Err(err(lineno, format!("unknown manifest key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::Parse {
            file: source.to_string(),
            msg: format!("manifest is missing `{k}`"),
        };
        let manifest = Self {
            root: root.to_path_buf(),
            task: task.ok_or_else(|| missing("task"))?,
            classes: classes.ok_or_else(|| missing("classes"))?,
            leads,
            records,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, root, &path.display().to_string())
    }

    pub fn record_path(&self, i: usize) -> PathBuf {
        self.root.join(&self.records[i].path)
    }
}

/// A manifest loaded into memory as model inputs.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `[N, 3, 5000]`
    pub inputs: Tensor3<f32>,
    pub labels: Vec<Vec<usize>>,
    pub ids: Vec<String>,
    pub classes: Vec<String>,
    pub task: Task,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            classes: self.classes.clone(),
            task: self.task,
        }
    }

    /// Preprocesses in-memory records, taking labels from the records.
    pub fn from_records<'a>(
        records: impl IntoIterator<Item = &'a EcgRecord>,
        leads: &LeadSelection,
        norm: Normalization,
        classes: Vec<String>,
        task: Task,
    ) -> Result<Self> {
        let records: Vec<&EcgRecord> = records.into_iter().collect();
        let mut inputs = Tensor3::zeros(records.len(), INPUT_LEADS, INPUT_LENGTH);
        for (i, r) in records.iter().enumerate() {
            inputs.row_mut(i).copy_from_slice(preprocess(r, leads, norm)?.x.data());
        }
        Ok(Self {
            inputs,
            labels: records.iter().map(|r| r.labels.clone()).collect(),
            ids: records.iter().map(|r| r.id.clone()).collect(),
            classes,
            task,
        })
    }

    /// Loads and preprocesses every record; the manifest's labels win over
    /// labels stored in the record headers.
    pub fn load(manifest: &DatasetManifest, norm: Normalization) -> Result<Self> {
        let n = manifest.records.len();
        let mut inputs = Tensor3::zeros(n, INPUT_LEADS, INPUT_LENGTH);
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            let path = manifest.record_path(i);
            if !path.exists() {
                return Err(Error::invalid(format!(
                    "manifest references missing file `{}`",
                    path.display()
                )));
            }
            let record = load_record(&path)?;
            let p = preprocess(&record, &manifest.leads, norm)?;
            inputs.row_mut(i).copy_from_slice(p.x.data());
            ids.push(p.record_id);
        }
        Ok(Self {
            inputs,
            labels: manifest.labels(),
            ids,
            classes: manifest.classes.clone(),
            task: manifest.task,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = "# demo\ntask = multi_label\nclasses = a,b,c\nleads = I,II,V2\n\n[records]\nx/r0.lwecg,0\nx/r1.lwecg,1,2\n";

    #[test]
    fn parses_and_round_trips() {
        let m = DatasetManifest::parse(TEXT, Path::new("/data"), "mem").unwrap();
        assert_eq!(m.task, Task::MultiLabel);
        assert_eq!(m.leads.row_indices(), [0, 1, 7]);
        assert_eq!(m.records[1].labels, vec![1, 2]);
        assert_eq!(m.record_path(0), Path::new("/data/x/r0.lwecg"));
        let again = DatasetManifest::parse(&m.to_text(), Path::new("/data"), "mem").unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_out_of_range_class() {
        let text = TEXT.replace("x/r0.lwecg,0", "x/r0.lwecg,3");
        let msg = DatasetManifest::parse(&text, Path::new("."), "mem")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("class id 3"), "{msg}");
    }

    #[test]
    fn reports_bad_line() {
        let text = TEXT.replace("x/r1.lwecg,1,2", "x/r1.lwecg,one");
        let msg = DatasetManifest::parse(&text, Path::new("."), "mem")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 8"), "{msg}");
    }
}
