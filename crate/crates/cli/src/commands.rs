use std::collections::HashMap;
use std::io::{self, Write};
use std::path::Path;

use ncdembed::eval::{run_on_distances, run_on_embedding, EvalReport, Provenance};
use ncdembed::format::{self, ArtifactKind, EmbeddingMeta};
use ncdembed::kernel::{gaussian_kernel_with_policy, KernelMatrix};
use ncdembed::kpca::{kpca_fit, Embedding, DEFAULT_COMPONENTS};
use ncdembed::ncd::{distance_matrix_with_progress, symmetrize, DistanceMatrix};
use ncdembed::seqio::{self, parse_label_csv, Dataset, TsvColumns};
use ncdembed::Error;

use crate::args::{InputFormat, Settings};
use crate::error::CliError;

const FASTA_EXTENSIONS: [&str; 5] = ["fa", "fasta", "fna", "faa", "fas"];

pub fn load_dataset(input: &Path, s: &Settings) -> Result<Dataset, CliError> {
    let format = s.format.unwrap_or_else(|| {
        let ext = input
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        if FASTA_EXTENSIONS.contains(&ext.as_str()) {
            InputFormat::Fasta
        } else {
            InputFormat::Tsv
        }
    });
    let d = match format {
        InputFormat::Fasta => {
            let labels = s
                .labels
                .as_ref()
                .ok_or_else(|| CliError::Usage("FASTA input needs `--labels <id,label CSV>`".into()))?;
            seqio::load_fasta_with(input, labels, s.normalize)?
        }
        InputFormat::Tsv => seqio::load_tsv_with(
            input,
            &TsvColumns {
                seq: &s.seq_col,
                label: &s.label_col,
                id: s.id_col.as_deref(),
            },
            s.normalize,
        )?,
    };
    Ok(d)
}

pub fn stats_line(d: &Dataset) -> Result<String, CliError> {
    Ok(d.stats()?.to_string())
}

pub fn cmd_stats(input: &Path, s: &Settings) -> Result<(), CliError> {
    let d = load_dataset(input, s)?;
    println!("{}", stats_line(&d)?);
    Ok(())
}

pub fn cmd_dump(input: &Path, s: &Settings, out: Option<&Path>) -> Result<(), CliError> {
    let d = load_dataset(input, s)?;
    match out {
        Some(path) => {
            let mut w = format::create(path)?;
            d.write_tsv(&mut w)?;
            w.flush().map_err(format::io_at(path))?;
        }
        None => d.write_tsv(io::stdout().lock())?,
    }
    Ok(())
}

pub fn compute_distmat(d: &Dataset, s: &Settings) -> Result<DistanceMatrix, CliError> {
    let n = d.len();
    log::info!("distmat: {n} sequences, {} pairs, {}", n * n, s.spec()?);
    let mut dm = distance_matrix_with_progress(d, s.spec()?, s.concat, |done| {
        log::info!("distmat: {done}/{n} rows");
    })?;
    if s.zero_diagonal {
        dm.zero_diagonal();
    }
    Ok(dm)
}

pub fn cmd_distmat(input: &Path, s: &Settings, out: &Path, csv: Option<&Path>) -> Result<(), CliError> {
    let d = load_dataset(input, s)?;
    let dm = compute_distmat(&d, s)?;
    format::save_matrix(out, &dm)?;
    if let Some(path) = csv {
        let mut w = format::create(path)?;
        format::write_matrix_csv(&mut w, &dm.values, dm.n, &dm.ids)?;
        w.flush().map_err(format::io_at(path))?;
    }
    log::info!("distmat: wrote {}", out.display());
    Ok(())
}

/// Symmetrize, kernel, kernel PCA.
pub fn embed_matrix(dm: &DistanceMatrix, s: &Settings) -> Result<(KernelMatrix, Embedding), CliError> {
    let sym = if dm.symmetric { dm.clone() } else { symmetrize(dm) };
    let kernel = gaussian_kernel_with_policy(&sym, s.sigma, s.mode)?;
    let q = s.components.unwrap_or(dm.n.min(DEFAULT_COMPONENTS));
    let emb = kpca_fit(&kernel.values, kernel.n, &kernel.ids, q, s.center)?.embedding;
    if emb.q < q {
        log::warn!("embed: only {} of {q} requested components have positive eigenvalues", emb.q);
    }
    log::info!("embed: sigma2 = {}, {} components", kernel.sigma2, emb.q);
    Ok((kernel, emb))
}

pub fn write_embedding(path: &Path, emb: &Embedding, kernel: &KernelMatrix) -> Result<(), CliError> {
    let meta = EmbeddingMeta {
        sigma2: Some(kernel.sigma2),
        kernel_mode: Some(kernel.mode),
        compressor: kernel.spec,
    };
    let mut buf = Vec::new();
    format::write_embedding_csv(&mut buf, emb, &meta)?;
    format::write_atomic(path, &buf)?;
    Ok(())
}

pub fn cmd_embed(
    dist: &Path,
    s: &Settings,
    out: &Path,
    bin: Option<&Path>,
    kernel_out: Option<&Path>,
) -> Result<(), CliError> {
    let dm = format::load_matrix(dist)?;
    let (kernel, emb) = embed_matrix(&dm, s)?;
    write_embedding(out, &emb, &kernel)?;
    if let Some(path) = bin {
        format::save_embedding(path, &emb)?;
    }
    if let Some(path) = kernel_out {
        format::save_kernel(path, &kernel)?;
    }
    log::info!("embed: wrote {}", out.display());
    Ok(())
}

/// Where class labels come from.
pub enum LabelSource<'a> {
    Dataset(&'a Dataset),
    Map(HashMap<String, String>),
}

/// Class index for every id, in `ids` order. The label source must cover
/// exactly the same ids.
pub fn align_labels(ids: &[String], source: &LabelSource<'_>) -> Result<(Vec<usize>, Vec<String>), CliError> {
    let map: HashMap<&str, &str> = match source {
        LabelSource::Dataset(d) => d.records.iter().map(|r| (r.id.as_str(), r.label.as_str())).collect(),
        LabelSource::Map(m) => m.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect(),
    };
    if map.len() != ids.len() {
        return Err(Error::IdMismatch(format!("{} rows but {} labelled ids", ids.len(), map.len())).into());
    }
    // Class order: dataset order when available, else first appearance.
    let mut classes: Vec<String> = match source {
        LabelSource::Dataset(d) => d.classes.clone(),
        LabelSource::Map(_) => Vec::new(),
    };
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        let label = *map
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("`{id}` has no label")))?;
        let c = match classes.iter().position(|c| c == label) {
            Some(c) => c,
            None => {
                classes.push(label.to_string());
                classes.len() - 1
            }
        };
        labels.push(c);
    }
    Ok((labels, classes))
}

pub fn load_embedding_any(path: &Path) -> Result<(Embedding, EmbeddingMeta), CliError> {
    let bytes = std::fs::read(path).map_err(format::io_at(path))?;
    if format::sniff(&bytes) == Some(ArtifactKind::Embedding) {
        return Ok((format::decode_embedding(&bytes)?, EmbeddingMeta::default()));
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    Ok(format::parse_embedding_csv(&text)?)
}

pub fn evaluate_embedding(emb: &Embedding, meta: &EmbeddingMeta, labels: &LabelSource<'_>, s: &Settings) -> Result<EvalReport, CliError> {
    let (y, classes) = align_labels(&emb.ids, labels)?;
    let prov = Provenance {
        compressor: meta.compressor,
        concat: None,
        kernel_mode: meta.kernel_mode,
        sigma2: meta.sigma2,
        components: Some(emb.q),
    };
    Ok(run_on_embedding(emb, &y, &classes, &s.experiment(), prov)?)
}

pub fn evaluate_distances(dm: &DistanceMatrix, labels: &LabelSource<'_>, s: &Settings) -> Result<EvalReport, CliError> {
    let (y, classes) = align_labels(&dm.ids, labels)?;
    Ok(run_on_distances(dm, &y, &classes, &s.experiment())?)
}

pub fn emit_report(report: &EvalReport, path: Option<&Path>) -> Result<(), CliError> {
    print!("{}", report.to_table());
    if let Some(path) = path {
        format::write_atomic(path, report.to_json().as_bytes())?;
    }
    Ok(())
}

pub fn cmd_eval(
    embedding: Option<&Path>,
    dist: Option<&Path>,
    data: Option<&Path>,
    s: &Settings,
    report: Option<&Path>,
) -> Result<(), CliError> {
    let dataset;
    let labels = match data {
        Some(path) => {
            dataset = load_dataset(path, s)?;
            LabelSource::Dataset(&dataset)
        }
        None => {
            let path = s
                .labels
                .as_ref()
                .ok_or_else(|| CliError::Usage("eval needs `--data <dataset>` or `--labels <id,label CSV>`".into()))?;
            let text = std::fs::read_to_string(path).map_err(format::io_at(path))?;
            LabelSource::Map(parse_label_csv(&text)?)
        }
    };
    let result = match (embedding, dist) {
        (Some(path), _) => {
            let (emb, meta) = load_embedding_any(path)?;
            evaluate_embedding(&emb, &meta, &labels, s)?
        }
        (None, Some(path)) => evaluate_distances(&format::load_matrix(path)?, &labels, s)?,
        (None, None) => return Err(CliError::Usage("eval needs `--embedding` or `--dist`".into())),
    };
    emit_report(&result, report)?;
    if let Some(path) = report {
        log::info!("eval: wrote {}", path.display());
    }
    Ok(())
}
