//! Compressor backends and compressed-length measurement.
//!
//! Lengths are taken over the whole container (gzip header and trailer, or
//! the bzip2 stream header and footer), so `compressed_len(spec, x)` is
//! always `compress(spec, x).len()`. The gzip header carries MTIME = 0 and
//! OS = 0, making output bytes a pure function of `(spec, data)`.

use std::cell::RefCell;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use flate2::{Compress, Compression, Crc, FlushCompress, Status};
use serde::Serialize;

use crate::error::{Error, Result};

/// Concatenations longer than this exceed the DEFLATE back-reference window.
pub const DEFLATE_WINDOW: usize = 32 * 1024;

const GZIP_HEADER_LEN: usize = 10;
const GZIP_TRAILER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    DeflateGzip,
    BwtBzip2,
}

impl Backend {
    /// Tag byte used by the binary matrix containers.
    pub fn tag(self) -> u8 {
        match self {
            Backend::DeflateGzip => 1,
            Backend::BwtBzip2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(Backend::DeflateGzip),
            2 => Some(Backend::BwtBzip2),
            _ => None,
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::DeflateGzip => "gzip",
            Backend::BwtBzip2 => "bz2",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gzip" | "gz" | "deflate" | "deflate_gzip" => Ok(Backend::DeflateGzip),
            "bz2" | "bzip2" | "bwt" | "bwt_bzip2" => Ok(Backend::BwtBzip2),
            other => Err(Error::InvalidParameter(format!("unknown compressor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct CompressorSpec {
    pub backend: Backend,
    level: u32,
}

impl CompressorSpec {
    pub fn new(backend: Backend, level: u32) -> Result<Self> {
        if !(1..=9).contains(&level) {
            return Err(Error::InvalidLevel(level));
        }
        Ok(CompressorSpec { backend, level })
    }

    pub fn gzip() -> Self {
        CompressorSpec {
            backend: Backend::DeflateGzip,
            level: 9,
        }
    }

    pub fn bzip2() -> Self {
        CompressorSpec {
            backend: Backend::BwtBzip2,
            level: 9,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }
}

impl Default for CompressorSpec {
    fn default() -> Self {
        CompressorSpec::gzip()
    }
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.backend, self.level)
    }
}

/// Byte count of a full compressed container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CompressedLength(pub u64);

impl CompressedLength {
    pub fn get(self) -> u64 {
        self.0
    }
}

thread_local! {
    // One raw deflater per level and thread; reset between calls.
    static DEFLATERS: RefCell<[Option<Compress>; 9]> = const { RefCell::new([const { None }; 9]) };
}

fn raw_deflate(level: u32, data: &[u8], out: &mut Vec<u8>) {
    DEFLATERS.with(|cell| {
        let mut slots = cell.borrow_mut();
        let slot = &mut slots[level as usize - 1];
        let z = slot.get_or_insert_with(|| Compress::new(Compression::new(level), false));
        z.reset();
        // Worst-case DEFLATE expansion is 5 bytes per 16 KiB stored block plus change.
        out.reserve(data.len() + data.len() / 1000 + 64);
        let start_in = z.total_in();
        loop {
            let consumed = (z.total_in() - start_in) as usize;
            let status = z
                .compress_vec(&data[consumed..], out, FlushCompress::Finish)
                .expect("in-memory deflate cannot fail");
            match status {
                Status::StreamEnd => break,
                Status::Ok | Status::BufError => out.reserve(out.capacity().max(64)),
            }
        }
    });
}

fn gzip_container(level: u32, data: &[u8]) -> Vec<u8> {
    let xfl = match level {
        9 => 2,
        1 => 4,
        _ => 0,
    };
    let mut out = Vec::with_capacity(data.len() / 2 + 64);
    out.extend_from_slice(&[0x1f, 0x8b, 0x08, 0x00, 0, 0, 0, 0, xfl, 0x00]);
    raw_deflate(level, data, &mut out);
    let mut crc = Crc::new();
    crc.update(data);
    out.extend_from_slice(&crc.sum().to_le_bytes());
    out.extend_from_slice(&(data.len() as u32).to_le_bytes());
    out
}

fn bzip2_container(level: u32, data: &[u8]) -> Vec<u8> {
    let mut enc = bzip2::write::BzEncoder::new(
        Vec::with_capacity(data.len() / 2 + 64),
        bzip2::Compression::new(level),
    );
    enc.write_all(data).expect("in-memory bzip2 cannot fail");
    enc.finish().expect("in-memory bzip2 cannot fail")
}

/// Compresses `data` into a standard gzip or bzip2 container.
pub fn compress(spec: CompressorSpec, data: &[u8]) -> Vec<u8> {
    match spec.backend {
        Backend::DeflateGzip => gzip_container(spec.level, data),
        Backend::BwtBzip2 => bzip2_container(spec.level, data),
    }
}

pub fn decompress(spec: CompressorSpec, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let res = match spec.backend {
        Backend::DeflateGzip => flate2::read::GzDecoder::new(data).read_to_end(&mut out),
        Backend::BwtBzip2 => bzip2::read::BzDecoder::new(data).read_to_end(&mut out),
    };
    res.map_err(|e| Error::CorruptStream(e.to_string()))?;
    Ok(out)
}

pub fn compressed_len(spec: CompressorSpec, data: &[u8]) -> CompressedLength {
    let n = match spec.backend {
        Backend::DeflateGzip => {
            // Same bytes as `compress`, minus the CRC pass.
            let mut out = Vec::new();
            raw_deflate(spec.level, data, &mut out);
            GZIP_HEADER_LEN + out.len() + GZIP_TRAILER_LEN
        }
        Backend::BwtBzip2 => bzip2_container(spec.level, data).len(),
    };
    CompressedLength(n as u64)
}

/// Extra bytes needed to encode `y` once `x` has been seen: `L(xy) - L(x)`.
/// Both lengths must come from the same spec, with `x` first in the
/// concatenation. Non-positive results are returned as-is.
pub fn conditional_bytes(lx: CompressedLength, lxy: CompressedLength) -> i64 {
    lxy.0 as i64 - lx.0 as i64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dna(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
    }

    #[test]
    fn level_bounds() {
        assert!(CompressorSpec::new(Backend::DeflateGzip, 0).is_err());
        assert!(CompressorSpec::new(Backend::BwtBzip2, 10).is_err());
        assert!(CompressorSpec::new(Backend::BwtBzip2, 1).is_ok());
    }

    #[test]
    fn empty_input_golden_lengths() {
        // `printf '' | gzip -9 -n | wc -c` and `printf '' | bzip2 -9 | wc -c`.
        assert_eq!(compressed_len(CompressorSpec::gzip(), b"").get(), 20);
        assert_eq!(compressed_len(CompressorSpec::bzip2(), b"").get(), 14);
        assert_eq!(compress(CompressorSpec::gzip(), b"").len(), 20);
    }

    #[test]
    fn gzip_header_is_pinned() {
        let out = compress(CompressorSpec::gzip(), b"ACGT");
        assert_eq!(&out[..10], &[0x1f, 0x8b, 8, 0, 0, 0, 0, 0, 2, 0]);
    }

    #[test]
    fn long_run_compresses_well() {
        let a = vec![b'A'; 10_000];
        assert!(compressed_len(CompressorSpec::gzip(), &a).get() < 100);
        assert!(compressed_len(CompressorSpec::bzip2(), &a).get() < 100);
    }

    #[test]
    fn random_bytes_may_grow() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Vec<u8> = (0..1024).map(|_| rng.gen()).collect();
        assert!(compressed_len(CompressorSpec::gzip(), &x).get() >= 1024);
    }

    #[test]
    fn len_matches_container() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for level in 1..=9 {
            for backend in [Backend::DeflateGzip, Backend::BwtBzip2] {
                let spec = CompressorSpec::new(backend, level).unwrap();
                let x = dna(&mut rng, 700);
                assert_eq!(compressed_len(spec, &x).get() as usize, compress(spec, &x).len());
            }
        }
    }

    #[test]
    fn conditional_bytes_subtracts() {
        assert_eq!(conditional_bytes(CompressedLength(100), CompressedLength(180)), 80);
        assert_eq!(conditional_bytes(CompressedLength(100), CompressedLength(90)), -10);
    }

    #[test]
    fn repeat_costs_little() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = dna(&mut rng, 1024);
        let xx = [x.clone(), x.clone()].concat();
        let spec = CompressorSpec::gzip();
        let lx = compressed_len(spec, &x);
        let b = conditional_bytes(lx, compressed_len(spec, &xx));
        assert!(b > 0 && (b as u64) * 10 < lx.get(), "B = {b}, L = {}", lx.get());
    }

    #[test]
    fn no_hidden_state_between_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = dna(&mut rng, 3000);
        let spec = CompressorSpec::gzip();
        let first = compress(spec, &x);
        for _ in 0..3 {
            compress(spec, &dna(&mut rng, 5000));
            compress(CompressorSpec::new(Backend::DeflateGzip, 3).unwrap(), &x);
        }
        assert_eq!(compress(spec, &x), first);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("gzip".parse::<Backend>().unwrap(), Backend::DeflateGzip);
        assert_eq!("bz2".parse::<Backend>().unwrap(), Backend::BwtBzip2);
        assert!("zstd".parse::<Backend>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn lossless(data in proptest::collection::vec(any::<u8>(), 0..65536), bz in any::<bool>(), level in 1u32..=9) {
                let backend = if bz { Backend::BwtBzip2 } else { Backend::DeflateGzip };
                let spec = CompressorSpec::new(backend, level).unwrap();
                let packed = compress(spec, &data);
                prop_assert!(!packed.is_empty());
                prop_assert_eq!(decompress(spec, &packed).unwrap(), data);
            }
        }
    }
}
