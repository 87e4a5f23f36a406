//! Labeled sequence datasets: TSV and FASTA + label-CSV ingestion, summary
//! statistics and canonical TSV export.
//!
//! Residues are stored as the UTF-8 bytes of the input text. Nothing is
//! uppercased or filtered unless [`Normalize::Upper`] is requested, since any
//! rewrite changes compressed lengths downstream.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Longest accepted sequence, in bytes.
pub const MAX_SEQUENCE_LEN: usize = (1 << 31) - 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRecord {
    pub id: String,
    pub label: String,
    pub residues: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<SequenceRecord>,
    /// Distinct labels in first-appearance order.
    pub classes: Vec<String>,
    pub source: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalize {
    #[default]
    Verbatim,
    Upper,
}

impl Normalize {
    fn apply(self, seq: &str) -> Vec<u8> {
        match self {
            Normalize::Verbatim => seq.as_bytes().to_vec(),
            Normalize::Upper => seq.to_uppercase().into_bytes(),
        }
    }
}

/// Column selection for TSV input. `id` is optional; without it ids are
/// synthesized as `row{k}`.
#[derive(Debug, Clone)]
pub struct TsvColumns<'a> {
    pub seq: &'a str,
    pub label: &'a str,
    pub id: Option<&'a str>,
}

impl Default for TsvColumns<'_> {
    fn default() -> Self {
        TsvColumns {
            seq: "sequence",
            label: "class",
            id: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub count: usize,
    pub classes: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
}

impl std::fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} sequences, {} classes, len {}–{}, mean {:.2}",
            self.count, self.classes, self.min_len, self.max_len, self.mean_len
        )
    }
}

impl Dataset {
    /// Builds a dataset from records, deriving the class list and checking
    /// record invariants.
    pub fn from_records(records: Vec<SequenceRecord>, source: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut classes: Vec<String> = Vec::new();
        for (k, rec) in records.iter().enumerate() {
            if rec.residues.is_empty() {
                return Err(Error::EmptySequence(k + 1));
            }
            if rec.residues.len() > MAX_SEQUENCE_LEN {
                return Err(Error::SequenceTooLong {
                    id: rec.id.clone(),
                    len: rec.residues.len(),
                });
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::DuplicateId(rec.id.clone()));
            }
            if !classes.contains(&rec.label) {
                classes.push(rec.label.clone());
            }
        }
        Ok(Dataset {
            records,
            classes,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Class index of every record, following `classes` order.
    pub fn label_indices(&self) -> Vec<usize> {
        let lookup: HashMap<&str, usize> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        self.records.iter().map(|r| lookup[r.label.as_str()]).collect()
    }

    pub fn stats(&self) -> Result<DatasetStats> {
        stats(self)
    }

    /// Writes the canonical `id\tlabel\tsequence` TSV.
    pub fn write_tsv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .quote_style(csv::QuoteStyle::Never)
            .from_writer(out);
        let io_err = |e: csv::Error| Error::io("<tsv output>", std::io::Error::other(e));
        w.write_record(["id", "label", "sequence"]).map_err(io_err)?;
        for rec in &self.records {
            w.write_record([rec.id.as_bytes(), rec.label.as_bytes(), &rec.residues])
                .map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::io("<tsv output>", e))?;
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_tsv(path: impl AsRef<Path>, seq_col: &str, label_col: &str) -> Result<Dataset> {
    load_tsv_with(
        path,
        &TsvColumns {
            seq: seq_col,
            label: label_col,
            id: None,
        },
        Normalize::Verbatim,
    )
}

pub fn load_tsv_with(
    path: impl AsRef<Path>,
    cols: &TsvColumns<'_>,
    normalize: Normalize,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = read_text(path)?;
    parse_tsv(&text, cols, normalize, &path.display().to_string())
}

/// Parses TSV text. Data rows are numbered from 1 in `EmptySequence` errors.
pub fn parse_tsv(
    text: &str,
    cols: &TsvColumns<'_>,
    normalize: Normalize,
    source: &str,
) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = match lines.next() {
        Some((_, h)) => h.split('\t').map(str::trim).collect(),
        None => return Ok(Dataset::from_records(Vec::new(), source)?),
    };
    let find = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let seq_at = find(cols.seq)?;
    let label_at = find(cols.label)?;
    let id_at = cols.id.map(find).transpose()?;

    let mut records = Vec::new();
    for (line_no, line) in lines {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.is_empty() {
            continue;
        }
        let k = records.len();
        let fields: Vec<&str> = line.split('\t').collect();
        let field = |at: usize| {
            fields.get(at).copied().ok_or_else(|| Error::MalformedRecord {
                line: line_no + 1,
                reason: format!("expected at least {} fields, found {}", at + 1, fields.len()),
            })
        };
        let seq = field(seq_at)?.trim();
        if seq.is_empty() {
            return Err(Error::EmptySequence(k + 1));
        }
        let id = match id_at {
            Some(at) => field(at)?.trim().to_string(),
            None => format!("row{k}"),
        };
        records.push(SequenceRecord {
            id,
            label: field(label_at)?.trim().to_string(),
            residues: normalize.apply(seq),
        });
    }
    Dataset::from_records(records, source)
}

pub fn load_fasta(seq_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset> {
    load_fasta_with(seq_path, label_path, Normalize::Verbatim)
}

pub fn load_fasta_with(
    seq_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    normalize: Normalize,
) -> Result<Dataset> {
    let seq_path = seq_path.as_ref();
    let fasta = read_text(seq_path)?;
    let labels = read_text(label_path.as_ref())?;
    parse_fasta(&fasta, &labels, normalize, &seq_path.display().to_string())
}

/// Parses FASTA text against an `id,label` CSV (header required).
pub fn parse_fasta(
    fasta: &str,
    labels: &str,
    normalize: Normalize,
    source: &str,
) -> Result<Dataset> {
    let label_map = parse_label_csv(labels)?;

    let mut entries: Vec<(String, String)> = Vec::new();
    for (line_no, raw) in fasta.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('>') {
            let id = header
                .split_whitespace()
                .next()
                .ok_or(Error::MalformedFasta(line_no + 1))?;
            entries.push((id.to_string(), String::new()));
        } else if !line.is_empty() {
            let (_, body) = entries
                .last_mut()
                .ok_or(Error::MalformedFasta(line_no + 1))?;
            body.extend(line.chars().filter(|c| !c.is_whitespace()));
        }
    }

    let mut records = Vec::with_capacity(entries.len());
    for (k, (id, body)) in entries.into_iter().enumerate() {
        let label = label_map
            .get(id.as_str())
            .ok_or_else(|| Error::UnlabeledSequence(id.clone()))?;
        if body.is_empty() {
            return Err(Error::EmptySequence(k + 1));
        }
        records.push(SequenceRecord {
            label: label.to_string(),
            residues: normalize.apply(&body),
            id,
        });
    }
    Dataset::from_records(records, source)
}

/// Reads a two-column `id,label` CSV with a header row.
pub fn parse_label_csv(text: &str) -> Result<HashMap<String, String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut map = HashMap::new();
    for (k, row) in reader.records().enumerate() {
        let line = k + 2;
        let row = row.map_err(|e| Error::MalformedRecord {
            line,
            reason: e.to_string(),
        })?;
        if row.len() < 2 {
            return Err(Error::MalformedRecord {
                line,
                reason: "expected `id,label`".into(),
            });
        }
        if map.insert(row[0].to_string(), row[1].to_string()).is_some() {
            return Err(Error::DuplicateId(row[0].to_string()));
        }
    }
    Ok(map)
}

pub fn stats(d: &Dataset) -> Result<DatasetStats> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lens = d.records.iter().map(|r| r.residues.len());
    let total: usize = lens.clone().sum();
    Ok(DatasetStats {
        count: d.len(),
        classes: d.classes.len(),
        min_len: lens.clone().min().unwrap_or(0),
        max_len: lens.max().unwrap_or(0),
        mean_len: total as f64 / d.len() as f64,
    })
}
