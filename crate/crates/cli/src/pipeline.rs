//! Config-driven `stats -> distmat -> embed -> eval` with per-stage caching.
//!
//! Each stage's cache key hashes the bytes of its inputs and the settings it
//! reads. A stage is skipped when its artifact exists and the key recorded
//! beside it (under `.cache/`) matches.

use std::fs;
use std::path::{Path, PathBuf};

use ini::Ini;
use ncdembed::format;
use ncdembed::Error;

use crate::args::{ClassifierName, Settings};
use crate::commands::{
    compute_distmat, embed_matrix, emit_report, evaluate_distances, evaluate_embedding, load_dataset,
    load_embedding_any, stats_line, write_embedding, LabelSource,
};
use crate::error::CliError;

pub const STATS_FILE: &str = "stats.txt";
pub const DISTMAT_FILE: &str = "distmat.ncdm";
pub const EMBEDDING_FILE: &str = "embedding.csv";
pub const REPORT_FILE: &str = "report.json";
const CACHE_DIR: &str = ".cache";

/// Reads a flat `key = value` file into `s`. Section headers are allowed
/// and ignored; relative paths resolve against the file's directory.
pub fn apply_config_file(path: &Path, s: &mut Settings) -> Result<(), CliError> {
    let ini = Ini::load_from_file(path).map_err(|e| match e {
        ini::Error::Io(io) => CliError::Core(Error::io(path, io)),
        ini::Error::Parse(p) => CliError::Config(format!("{}: {p}", path.display())),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for (_, props) in ini.iter() {
        for (key, value) in props.iter() {
            s.set(key, value, base)?;
        }
    }
    Ok(())
}

/// Applies `KEY=VALUE` overrides; relative paths resolve against the
/// working directory.
pub fn apply_sets(sets: &[String], s: &mut Settings) -> Result<(), CliError> {
    for pair in sets {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("`--set {pair}`: expected KEY=VALUE")))?;
        s.set(key.trim(), value, Path::new("."))?;
    }
    Ok(())
}

struct Stage {
    name: &'static str,
    artifact: PathBuf,
    key_file: PathBuf,
    key: String,
}

impl Stage {
    fn new(out_dir: &Path, name: &'static str, file: &str, parts: &[&[u8]]) -> Stage {
        let mut h = blake3::Hasher::new();
        h.update(name.as_bytes());
        for p in parts {
            // Length prefixes keep adjacent parts from running together.
            h.update(&(p.len() as u64).to_le_bytes());
            h.update(p);
        }
        Stage {
            name,
            artifact: out_dir.join(file),
            key_file: out_dir.join(CACHE_DIR).join(format!("{name}.key")),
            key: h.finalize().to_hex().to_string(),
        }
    }

    fn cached(&self, force: bool) -> bool {
        let hit = !force
            && self.artifact.exists()
            && fs::read_to_string(&self.key_file).is_ok_and(|k| k.trim() == self.key);
        if hit {
            log::info!("{}: skipped (cached)", self.name);
        }
        hit
    }

    fn record(&self) -> Result<(), CliError> {
        format::write_atomic(&self.key_file, format!("{}\n", self.key).as_bytes())?;
        log::info!("{}: wrote {}", self.name, self.artifact.display());
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Core(Error::io(path, e)))
}

fn debug_bytes<T: std::fmt::Debug>(v: T) -> Vec<u8> {
    format!("{v:?}").into_bytes()
}

pub fn run(s: &Settings, force: bool) -> Result<(), CliError> {
    let input = s
        .input
        .as_ref()
        .ok_or_else(|| CliError::Config("no `input` given".into()))?;
    let out = &s.out_dir;
    fs::create_dir_all(out.join(CACHE_DIR)).map_err(|e| CliError::Core(Error::io(out, e)))?;

    // Everything that determines the parsed dataset.
    let input_bytes = read(input)?;
    let label_bytes = match &s.labels {
        Some(p) => read(p)?,
        None => Vec::new(),
    };
    let parse_opts = debug_bytes((&s.format, &s.seq_col, &s.label_col, &s.id_col, &s.normalize));
    let data_parts: [&[u8]; 3] = [&input_bytes, &label_bytes, &parse_opts];
    let mut dataset = None;
    let mut dataset = || -> Result<_, CliError> {
        if dataset.is_none() {
            dataset = Some(load_dataset(input, s)?);
        }
        Ok(dataset.clone().expect("just loaded"))
    };

    let stats = Stage::new(out, "stats", STATS_FILE, &data_parts);
    if !stats.cached(force) {
        let line = stats_line(&dataset()?)?;
        println!("{line}");
        format::write_atomic(&stats.artifact, format!("{line}\n").as_bytes())?;
        stats.record()?;
    }

    let ncd_opts = debug_bytes((s.spec()?, s.concat, s.zero_diagonal));
    let distmat = Stage::new(out, "distmat", DISTMAT_FILE, &[&data_parts[..], &[&ncd_opts]].concat());
    if !distmat.cached(force) {
        let dm = compute_distmat(&dataset()?, s)?;
        format::save_matrix(&distmat.artifact, &dm)?;
        distmat.record()?;
    }
    let dm_bytes = read(&distmat.artifact)?;

    let embed_opts = debug_bytes((s.mode, s.sigma, s.components, s.center));
    let embed = Stage::new(out, "embed", EMBEDDING_FILE, &[&dm_bytes, &embed_opts]);
    if !embed.cached(force) {
        let dm = format::decode_matrix(&dm_bytes)?;
        let (kernel, emb) = embed_matrix(&dm, s)?;
        write_embedding(&embed.artifact, &emb, &kernel)?;
        embed.record()?;
    }

    // Distance-based evaluation reads the matrix, otherwise the embedding.
    let on_distances = s.inductive || s.clf == ClassifierName::NcdKnn;
    let eval_input = if on_distances {
        dm_bytes.clone()
    } else {
        read(&embed.artifact)?
    };
    let exp = s.experiment();
    let eval_opts = debug_bytes((exp.classifier, exp.runs, exp.base_seed, exp.tune_k, exp.timings, &embed_opts));
    let eval = Stage::new(out, "eval", REPORT_FILE, &[&data_parts[..], &[&eval_input, &eval_opts]].concat());
    if !eval.cached(force) {
        let d = dataset()?;
        let labels = LabelSource::Dataset(&d);
        let report = if on_distances {
            evaluate_distances(&format::decode_matrix(&dm_bytes)?, &labels, s)?
        } else {
            let (emb, meta) = load_embedding_any(&embed.artifact)?;
            evaluate_embedding(&emb, &meta, &labels, s)?
        };
        emit_report(&report, Some(&eval.artifact))?;
        eval.record()?;
    }
    Ok(())
}
