//! Labeled corpora on disk: manifest CSVs, ESC-50 folders, and synthetic
//! corpus generation.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use coughscreen_core::classifiers::{Detection, DiagnosisClass};
use coughscreen_core::corpus::{self, CorpusError, SynthClass, SynthSpec};
use coughscreen_core::AudioClip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wav::{self, WavError};

#[derive(Debug, Error)]
pub enum CorpusIoError {
    #[error("row {row}: file {path} does not exist")]
    MissingFile { row: usize, path: String },
    #[error("row {row}: unknown label {label:?}")]
    UnknownLabel { row: usize, label: String },
    #[error("row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("corpus is empty")]
    Empty,
    #[error("manifest: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Decode { path: String, source: WavError },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusIoError + '_ {
    move |source| CorpusIoError::Io { path: path.display().to_string(), source }
}

pub const MANIFEST_NAME: &str = "manifest.csv";

pub fn detection_labels() -> Vec<String> {
    Detection::ALL.iter().map(|d| d.name().to_string()).collect()
}

pub fn diagnosis_labels() -> Vec<String> {
    DiagnosisClass::ALL.iter().map(|d| d.name().to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    /// Relative to the corpus root.
    pub relative_path: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
}

/// A validated set of labeled clips. Audio is decoded on access.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub root: PathBuf,
    pub samples: Vec<Sample>,
    /// Declared label order; label indices refer to this list.
    pub labels: Vec<String>,
    pub provenance: String,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_index(&self, i: usize) -> usize {
        self.labels.iter().position(|l| *l == self.samples[i].label).expect("validated label")
    }

    pub fn label_indices(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.label_index(i)).collect()
    }

    pub fn path(&self, i: usize) -> PathBuf {
        self.root.join(&self.samples[i].relative_path)
    }

    pub fn clip(&self, i: usize) -> Result<AudioClip, CorpusIoError> {
        let path = self.path(i);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        wav::decode_wav(&bytes).map_err(|source| CorpusIoError::Decode { path: path.display().to_string(), source })
    }

    /// The same corpus restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            root: self.root.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
        }
    }

    /// Seeded subsample of every class down to the minority count.
    pub fn balance_classes(&self, seed: u64) -> Result<Corpus, CorpusIoError> {
        let idx = corpus::balance_indices(&self.label_indices(), self.labels.len(), seed)?;
        Ok(self.subset(&idx))
    }

    /// Stratified folds of sample indices.
    pub fn kfold_split(&self, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, CorpusIoError> {
        Ok(corpus::kfold_indices(&self.label_indices(), self.labels.len(), k, seed)?)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<(), CorpusIoError> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush().map_err(io_err(path))?;
        Ok(())
    }
}

fn infer_labels(found: &[String]) -> Option<Vec<String>> {
    [diagnosis_labels(), detection_labels()].into_iter().find(|set| found.iter().all(|l| set.contains(l)))
}

/// Loads `manifest` (columns `id,relative_path,label[,split]`) relative to
/// `root`. With no label set given, the detection or diagnosis set is
/// inferred from the labels present.
pub fn load_corpus(root: &Path, manifest: &Path, labels: Option<&[String]>) -> Result<Corpus, CorpusIoError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_path(manifest)?;
    let mut samples: Vec<Sample> = Vec::new();
    let mut ids = HashSet::new();
    for (row, rec) in reader.deserialize::<Sample>().enumerate() {
        let s = rec?;
        let row = row + 1;
        if !ids.insert(s.id.clone()) {
            return Err(CorpusIoError::DuplicateId { row, id: s.id });
        }
        if !root.join(&s.relative_path).is_file() {
            return Err(CorpusIoError::MissingFile { row, path: s.relative_path });
        }
        samples.push(s);
    }
    if samples.is_empty() {
        return Err(CorpusIoError::Empty);
    }
    let labels = match labels {
        Some(l) => l.to_vec(),
        None => {
            let found: Vec<String> = samples.iter().map(|s| s.label.clone()).collect();
            match infer_labels(&found) {
                Some(l) => l,
                None => {
                    let known: HashSet<String> = diagnosis_labels().into_iter().chain(detection_labels()).collect();
                    let row = samples.iter().position(|s| !known.contains(&s.label)).unwrap_or(0);
                    return Err(CorpusIoError::UnknownLabel { row: row + 1, label: samples[row].label.clone() });
                }
            }
        }
    };
    if let Some(row) = samples.iter().position(|s| !labels.contains(&s.label)) {
        return Err(CorpusIoError::UnknownLabel { row: row + 1, label: samples[row].label.clone() });
    }
    Ok(Corpus { root: root.to_path_buf(), samples, labels, provenance: format!("manifest {}", manifest.display()) })
}

/// Loads `<dir>/manifest.csv`.
pub fn load_corpus_dir(dir: &Path, labels: Option<&[String]>) -> Result<Corpus, CorpusIoError> {
    load_corpus(dir, &dir.join(MANIFEST_NAME), labels)
}

#[derive(Deserialize)]
struct EscRow {
    filename: String,
    fold: String,
    category: String,
}

/// ESC-50 layout: `meta/esc50.csv` plus `audio/<filename>`. The
/// `coughing` category maps to cough, everything else to not-cough; the
/// ESC fold becomes the split tag.
pub fn load_esc50(root: &Path) -> Result<Corpus, CorpusIoError> {
    let meta = root.join("meta").join("esc50.csv");
    let mut reader = csv::Reader::from_path(&meta)?;
    let mut samples = Vec::new();
    for (row, rec) in reader.deserialize::<EscRow>().enumerate() {
        let r = rec?;
        let relative_path = format!("audio/{}", r.filename);
        if !root.join(&relative_path).is_file() {
            return Err(CorpusIoError::MissingFile { row: row + 1, path: relative_path });
        }
        let label = if r.category == "coughing" { Detection::Cough } else { Detection::NotCough };
        samples.push(Sample {
            id: r.filename.trim_end_matches(".wav").to_string(),
            relative_path,
            label: label.name().to_string(),
            split: Some(r.fold),
        });
    }
    if samples.is_empty() {
        return Err(CorpusIoError::Empty);
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        samples,
        labels: detection_labels(),
        provenance: format!("ESC-50 metadata {}", meta.display()),
    })
}

/// Label vocabulary of a synthetic spec: detection when it holds only
/// cough/not-cough, diagnosis when it holds only diagnosis classes.
fn synth_labels(spec: &SynthSpec) -> Vec<String> {
    let names: Vec<String> = spec.classes.iter().map(|c| c.name().to_string()).collect();
    infer_labels(&names).unwrap_or(names)
}

/// Generates the spec's clips as PCM16 WAVs under `out/audio` and writes
/// `out/manifest.csv`.
pub fn synth_corpus(spec: &SynthSpec, out: &Path) -> Result<Corpus, CorpusIoError> {
    let samples = corpus::synthesize_corpus(spec)?;
    let audio = out.join("audio");
    std::fs::create_dir_all(&audio).map_err(io_err(&audio))?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let relative_path = format!("audio/{}.wav", s.id);
        let path = out.join(&relative_path);
        std::fs::write(&path, wav::encode_wav(&s.clip)).map_err(io_err(&path))?;
        rows.push(Sample { id: s.id, relative_path, label: s.class.name().to_string(), split: None });
    }
    let corpus = Corpus {
        root: out.to_path_buf(),
        samples: rows,
        labels: synth_labels(spec),
        provenance: format!("synthetic seed={} per_class={}", spec.seed, spec.per_class),
    };
    corpus.write_manifest(&out.join(MANIFEST_NAME))?;
    Ok(corpus)
}

/// Parses a comma-separated class list such as `covid19,normal`.
pub fn parse_synth_classes(list: &str) -> Result<Vec<SynthClass>, CorpusIoError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .enumerate()
        .map(|(i, name)| {
            SynthClass::from_name(name).ok_or(CorpusIoError::UnknownLabel { row: i + 1, label: name.to_string() })
        })
        .collect()
}
