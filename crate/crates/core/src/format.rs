//! On-disk artifacts.
//!
//! Binary containers share one layout, all integers little-endian:
//!
//! ```text
//! magic [4]  version u32 = 1  n u64  <kind-specific header>
//! <payload: f64 LE values>
//! n ids, each u32 byte length + UTF-8 bytes
//! ```
//!
//! * `NCDM` distance matrix: header `symmetric u8, compressor tag u8, level u8`,
//!   payload `n x n` row-major.
//! * `NCDK` kernel matrix: the `NCDM` header (tag and level 0 when the
//!   compressor is unknown, symmetric always 1) followed by `sigma2 f64, mode u8`,
//!   payload `n x n` row-major.
//! * `NCDE` embedding: header `q u64`, then `q` eigenvalues, payload `n x q`
//!   row-major coordinates.
//!
//! Readers reject unknown magic, unknown versions, truncation and trailing
//! bytes with [`Error::Format`].

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::classify::ProbPrediction;
use crate::compress::{Backend, CompressorSpec};
use crate::error::{Error, Result};
use crate::kernel::{KernelMatrix, KernelMode};
use crate::kpca::Embedding;
use crate::ncd::{ConcatMode, DistanceMatrix};

pub const MAGIC_MATRIX: [u8; 4] = *b"NCDM";
pub const MAGIC_KERNEL: [u8; 4] = *b"NCDK";
pub const MAGIC_EMBEDDING: [u8; 4] = *b"NCDE";
pub const VERSION: u32 = 1;

/// Kind of binary artifact, from its magic bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Matrix,
    Kernel,
    Embedding,
}

pub fn sniff(bytes: &[u8]) -> Option<ArtifactKind> {
    match bytes.get(..4)? {
        m if m == MAGIC_MATRIX => Some(ArtifactKind::Matrix),
        m if m == MAGIC_KERNEL => Some(ArtifactKind::Kernel),
        m if m == MAGIC_EMBEDDING => Some(ArtifactKind::Embedding),
        _ => None,
    }
}

// ---- encoding ----

fn put_header(out: &mut Vec<u8>, magic: [u8; 4], n: usize) {
    out.extend_from_slice(&magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_ids(out: &mut Vec<u8>, ids: &[String]) {
    for id in ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
}

fn spec_bytes(spec: Option<CompressorSpec>) -> [u8; 2] {
    match spec {
        Some(s) => [s.backend.tag(), s.level() as u8],
        None => [0, 0],
    }
}

pub fn encode_matrix(dm: &DistanceMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(19 + dm.values.len() * 8);
    put_header(&mut out, MAGIC_MATRIX, dm.n);
    out.push(dm.symmetric as u8);
    out.extend_from_slice(&spec_bytes(Some(dm.spec)));
    put_f64s(&mut out, &dm.values);
    put_ids(&mut out, &dm.ids);
    out
}

pub fn encode_kernel(k: &KernelMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + k.values.len() * 8);
    put_header(&mut out, MAGIC_KERNEL, k.n);
    out.push(1);
    out.extend_from_slice(&spec_bytes(k.spec));
    out.extend_from_slice(&k.sigma2.to_le_bytes());
    out.push(k.mode.tag());
    put_f64s(&mut out, &k.values);
    put_ids(&mut out, &k.ids);
    out
}

pub fn encode_embedding(e: &Embedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(24 + (e.q + e.coords.len()) * 8);
    put_header(&mut out, MAGIC_EMBEDDING, e.n);
    out.extend_from_slice(&(e.q as u64).to_le_bytes());
    put_f64s(&mut out, &e.eigenvalues);
    put_f64s(&mut out, &e.coords);
    put_ids(&mut out, &e.ids);
    out
}

// ---- decoding ----

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("payload size overflows".into()))?;
        Ok(self
            .take(bytes)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn ids(&mut self, n: usize) -> Result<Vec<String>> {
        (0..n)
            .map(|i| {
                let len = self.u32()? as usize;
                let raw = self.take(len)?;
                String::from_utf8(raw.to_vec()).map_err(|_| Error::Format(format!("id {i} is not UTF-8")))
            })
            .collect()
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Checks magic and version, returns a cursor past them and `n`.
fn open(bytes: &[u8], magic: [u8; 4]) -> Result<(Cursor<'_>, usize)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let got = c.take(4)?;
    if got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = usize::try_from(c.u64()?).map_err(|_| Error::Format("order does not fit in memory".into()))?;
    Ok((c, n))
}

fn read_spec(c: &mut Cursor<'_>) -> Result<Option<CompressorSpec>> {
    let (tag, level) = (c.u8()?, c.u8()?);
    if tag == 0 {
        return Ok(None);
    }
    let backend =
        Backend::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown compressor tag {tag}")))?;
    CompressorSpec::new(backend, level as u32)
        .map(Some)
        .map_err(|_| Error::Format(format!("invalid compression level {level}")))
}

fn square(n: usize) -> Result<usize> {
    n.checked_mul(n).ok_or_else(|| Error::Format(format!("order {n} too large")))
}

/// Decodes an `NCDM` container. The concatenation mode is not persisted
/// and reads back as [`ConcatMode::Direct`].
pub fn decode_matrix(bytes: &[u8]) -> Result<DistanceMatrix> {
    let (mut c, n) = open(bytes, MAGIC_MATRIX)?;
    let symmetric = match c.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad symmetric flag {other}"))),
    };
    let spec = read_spec(&mut c)?.ok_or_else(|| Error::Format("distance matrix without compressor".into()))?;
    let values = c.f64s(square(n)?)?;
    let ids = c.ids(n)?;
    c.finish()?;
    let dm = DistanceMatrix {
        n,
        values,
        symmetric,
        spec,
        concat_mode: ConcatMode::Direct,
        ids,
    };
    dm.validate()?;
    Ok(dm)
}

pub fn decode_kernel(bytes: &[u8]) -> Result<KernelMatrix> {
    let (mut c, n) = open(bytes, MAGIC_KERNEL)?;
    if c.u8()? != 1 {
        return Err(Error::Format("kernel matrices are always symmetric".into()));
    }
    let spec = read_spec(&mut c)?;
    let sigma2 = c.f64()?;
    let tag = c.u8()?;
    let mode = KernelMode::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown kernel mode {tag}")))?;
    let values = c.f64s(square(n)?)?;
    let ids = c.ids(n)?;
    c.finish()?;
    Ok(KernelMatrix {
        n,
        values,
        sigma2,
        mode,
        ids,
        spec,
    })
}

pub fn decode_embedding(bytes: &[u8]) -> Result<Embedding> {
    let (mut c, n) = open(bytes, MAGIC_EMBEDDING)?;
    let q = usize::try_from(c.u64()?).map_err(|_| Error::Format("q does not fit in memory".into()))?;
    let eigenvalues = c.f64s(q)?;
    let cells = n.checked_mul(q).ok_or_else(|| Error::Format("embedding too large".into()))?;
    let coords = c.f64s(cells)?;
    let ids = c.ids(n)?;
    c.finish()?;
    Ok(Embedding {
        n,
        q,
        coords,
        eigenvalues,
        ids,
    })
}

// ---- files ----

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".into(),
    });
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn save_matrix(path: impl AsRef<Path>, dm: &DistanceMatrix) -> Result<()> {
    write_atomic(path.as_ref(), &encode_matrix(dm))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    decode_matrix(&read_file(path.as_ref())?)
}

pub fn save_kernel(path: impl AsRef<Path>, k: &KernelMatrix) -> Result<()> {
    write_atomic(path.as_ref(), &encode_kernel(k))
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<KernelMatrix> {
    decode_kernel(&read_file(path.as_ref())?)
}

pub fn save_embedding(path: impl AsRef<Path>, e: &Embedding) -> Result<()> {
    write_atomic(path.as_ref(), &encode_embedding(e))
}

pub fn load_embedding_bin(path: impl AsRef<Path>) -> Result<Embedding> {
    decode_embedding(&read_file(path.as_ref())?)
}

// ---- CSV ----

/// Values are written in scientific notation with 17 significant digits,
/// which round-trips every finite `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Square matrix as CSV: header `id,<ids...>`, then one row per id.
pub fn write_matrix_csv<W: Write>(out: W, values: &[f64], n: usize, ids: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend(ids.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(values[i * n..(i + 1) * n].iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Facts about how an embedding was produced, stored in the leading
/// comment line of its CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingMeta {
    pub sigma2: Option<f64>,
    pub kernel_mode: Option<KernelMode>,
    pub compressor: Option<CompressorSpec>,
}

impl EmbeddingMeta {
    fn comment(&self, q: usize) -> String {
        let mut parts = Vec::new();
        if let Some(s) = self.sigma2 {
            parts.push(format!("sigma2={}", fmt_f64(s)));
        }
        if let Some(m) = self.kernel_mode {
            parts.push(format!("kernel={m}"));
        }
        if let Some(c) = self.compressor {
            parts.push(format!("compressor={c}"));
        }
        parts.push(format!("components={q}"));
        format!("# {}\n", parts.join(" "))
    }

    fn parse_comment(line: &str) -> Result<EmbeddingMeta> {
        let mut meta = EmbeddingMeta::default();
        for part in line.trim_start_matches('#').split_whitespace() {
            let Some((key, value)) = part.split_once('=') else {
                continue;
            };
            let bad = || Error::Format(format!("bad `{key}` value `{value}` in embedding header"));
            match key {
                "sigma2" => meta.sigma2 = Some(value.parse().map_err(|_| bad())?),
                "kernel" => meta.kernel_mode = Some(value.parse().map_err(|_| bad())?),
                "compressor" => meta.compressor = Some(parse_spec_label(value).ok_or_else(bad)?),
                _ => {}
            }
        }
        Ok(meta)
    }
}

/// Parses labels such as `gzip-9` or `bzip2-9`.
fn parse_spec_label(s: &str) -> Option<CompressorSpec> {
    let (name, level) = s.rsplit_once('-')?;
    CompressorSpec::new(name.parse().ok()?, level.parse().ok()?).ok()
}

/// Embedding CSV: a `# key=value ...` comment line, header `id,c0,...`,
/// one row per record.
pub fn write_embedding_csv<W: Write>(mut out: W, e: &Embedding, meta: &EmbeddingMeta) -> Result<()> {
    out.write_all(meta.comment(e.q).as_bytes())
        .map_err(|err| Error::io("<csv>", err))?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string()];
    header.extend((0..e.q).map(|c| format!("c{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (i, id) in e.ids.iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(e.row(i).iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|err| Error::io("<csv>", err))
}

/// Reads an embedding CSV. Eigenvalues are not stored in CSV and come back
/// empty.
pub fn parse_embedding_csv(text: &str) -> Result<(Embedding, EmbeddingMeta)> {
    let meta = match text.lines().next() {
        Some(first) if first.starts_with('#') => EmbeddingMeta::parse_comment(first)?,
        _ => EmbeddingMeta::default(),
    };
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("id") {
        return Err(Error::Format("embedding CSV must start with an `id` column".into()));
    }
    for (c, name) in header.iter().skip(1).enumerate() {
        if name != format!("c{c}") {
            return Err(Error::Format(format!("unexpected column `{name}`, expected `c{c}`")));
        }
    }
    let q = header.len() - 1;
    if q == 0 {
        return Err(Error::Format("embedding CSV has no coordinate columns".into()));
    }
    let mut ids = Vec::new();
    let mut coords = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        ids.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            coords.push(cell.parse::<f64>().map_err(|_| {
                Error::Format(format!("row {}: `{cell}` is not a number", row + 1))
            })?);
        }
    }
    let n = ids.len();
    Ok((
        Embedding {
            n,
            q,
            coords,
            eigenvalues: Vec::new(),
            ids,
        },
        meta,
    ))
}

pub fn load_embedding_csv(path: impl AsRef<Path>) -> Result<(Embedding, EmbeddingMeta)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embedding_csv(&text)
}

/// Predictions as CSV: `id,pred_label,p_<class>...`.
pub fn write_predictions_csv<W: Write>(
    out: W,
    ids: &[String],
    preds: &[ProbPrediction],
    class_names: &[String],
) -> Result<()> {
    if ids.len() != preds.len() {
        return Err(Error::LengthMismatch(ids.len(), preds.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "pred_label".to_string()];
    header.extend(class_names.iter().map(|c| format!("p_{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (id, p) in ids.iter().zip(preds) {
        let mut row = vec![id.clone(), class_names[p.argmax()].clone()];
        row.extend(p.0.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Opens `path` for buffered writing.
pub fn create(path: impl AsRef<Path>) -> Result<BufWriter<fs::File>> {
    let path = path.as_ref();
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Maps a write failure on a known path.
pub fn io_at(path: impl AsRef<Path>) -> impl FnOnce(io::Error) -> Error {
    let path = path.as_ref().to_path_buf();
    move |e| Error::io(path, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("seq{i}")).collect()
    }

    fn matrix(n: usize) -> DistanceMatrix {
        DistanceMatrix {
            n,
            values: (0..n * n).map(|k| if k % (n + 1) == 0 { 0.0 } else { 0.1 + (k % 7) as f64 / 10.0 }).collect(),
            symmetric: false,
            spec: CompressorSpec::bzip2(),
            concat_mode: ConcatMode::Direct,
            ids: ids(n),
        }
    }

    #[test]
    fn matrix_layout() {
        let dm = matrix(2);
        let b = encode_matrix(&dm);
        assert_eq!(&b[..4], b"NCDM");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(&b[16..19], &[0, 2, 9]);
        assert_eq!(b.len(), 19 + 4 * 8 + 2 * (4 + 4));
        assert_eq!(decode_matrix(&b).unwrap(), dm);
    }

    #[test]
    fn kernel_and_embedding_round_trip() {
        let k = KernelMatrix {
            n: 3,
            values: vec![1.0, 0.5, 0.25, 0.5, 1.0, 0.125, 0.25, 0.125, 1.0],
            sigma2: 0.3,
            mode: KernelMode::DistanceSubstitution,
            ids: ids(3),
            spec: None,
        };
        assert_eq!(decode_kernel(&encode_kernel(&k)).unwrap(), k);
        let e = Embedding {
            n: 3,
            q: 2,
            coords: vec![1.0, -2.0, 3.5, 0.0, -1e-300, 7.0],
            eigenvalues: vec![4.0, 1.0],
            ids: vec!["α".into(), "b".into(), "".into()],
        };
        assert_eq!(decode_embedding(&encode_embedding(&e)).unwrap(), e);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let good = encode_matrix(&matrix(3));
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        let mut bad_version = good.clone();
        bad_version[4] = 2;
        let mut trailing = good.clone();
        trailing.push(0);
        for bytes in [&bad_magic[..], &bad_version[..], &good[..good.len() - 1], &trailing[..], &[][..]] {
            assert!(matches!(decode_matrix(bytes), Err(Error::Format(_))));
        }
        assert!(matches!(decode_kernel(&good), Err(Error::Format(_))));
        assert_eq!(sniff(&good), Some(ArtifactKind::Matrix));
    }

    #[test]
    fn embedding_csv_round_trip() {
        let e = Embedding {
            n: 2,
            q: 2,
            coords: vec![0.1, -1.0 / 3.0, 1e-17, 123456789.123456789],
            eigenvalues: vec![2.0, 1.0],
            ids: vec!["a,b".into(), "c".into()],
        };
        let meta = EmbeddingMeta {
            sigma2: Some(0.123),
            kernel_mode: Some(KernelMode::RowFeature),
            compressor: Some(CompressorSpec::gzip()),
        };
        let mut buf = Vec::new();
        write_embedding_csv(&mut buf, &e, &meta).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# sigma2="));
        assert_eq!(text.lines().nth(1), Some("id,c0,c1"));
        let (back, meta_back) = parse_embedding_csv(&text).unwrap();
        assert_eq!(back.coords, e.coords);
        assert_eq!(back.ids, e.ids);
        assert_eq!(meta_back, meta);
    }

    #[test]
    fn predictions_csv() {
        let mut buf = Vec::new();
        write_predictions_csv(
            &mut buf,
            &ids(1),
            &[ProbPrediction(vec![0.25, 0.75])],
            &["x".into(), "y".into()],
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("id,pred_label,p_x,p_y"));
        assert!(text.lines().nth(1).unwrap().starts_with("seq0,y,"));
    }

    proptest! {
        #[test]
        fn csv_float_round_trip(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
