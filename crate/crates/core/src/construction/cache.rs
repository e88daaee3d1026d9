//! Binary cache of construction results.
//!
//! Each record is a fixed little-endian header followed by `2^n_exp` bounds:
//!
//! ```text
//! "PCEP" | version: u16 | n_exp: u8 | mu: u32 | p: f64 | bounds: [f64; 2^n_exp]
//! ```
//!
//! A cache file is a plain concatenation of records.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use super::{polarize_reliabilities, ReliabilityVector, MAX_N_EXP};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PCEP";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    pub p: f64,
    pub mu: u32,
    pub reliabilities: ReliabilityVector,
}

impl CacheRecord {
    fn matches(&self, p: f64, n_exp: u32, mu: u32) -> bool {
        self.p.to_bits() == p.to_bits() && self.mu == mu && self.reliabilities.n_exp == n_exp
    }
}

pub fn write_record(w: &mut impl Write, record: &CacheRecord) -> std::io::Result<()> {
    let n_exp = u8::try_from(record.reliabilities.n_exp)
        .map_err(|_| std::io::Error::new(ErrorKind::InvalidInput, "n_exp exceeds u8"))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[n_exp])?;
    w.write_all(&record.mu.to_le_bytes())?;
    w.write_all(&record.p.to_le_bytes())?;
    for b in &record.reliabilities.bounds {
        w.write_all(&b.to_le_bytes())?;
    }
    Ok(())
}

fn read_record(r: &mut impl Read) -> Result<Option<CacheRecord>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::io("<cache>", e)),
    }
    if &magic != MAGIC {
        return Err(Error::format("construction cache", "bad magic"));
    }
    let mut header = [0u8; 2 + 1 + 4 + 8];
    r.read_exact(&mut header)
        .map_err(|_| Error::format("construction cache", "truncated header"))?;
    let version = u16::from_le_bytes([header[0], header[1]]);
    if version != VERSION {
        return Err(Error::format(
            "construction cache",
            format!("unsupported version {version}"),
        ));
    }
    let n_exp = header[2] as u32;
    if n_exp > MAX_N_EXP {
        return Err(Error::format(
            "construction cache",
            format!("n_exp {n_exp}"),
        ));
    }
    let mu = u32::from_le_bytes(header[3..7].try_into().unwrap());
    let p = f64::from_le_bytes(header[7..15].try_into().unwrap());

    let mut raw = vec![0u8; 8 << n_exp];
    r.read_exact(&mut raw)
        .map_err(|_| Error::format("construction cache", "truncated bounds"))?;
    let bounds = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Some(CacheRecord {
        p,
        mu,
        reliabilities: ReliabilityVector::new(n_exp, bounds)?,
    }))
}

pub fn read_records(r: &mut impl Read) -> Result<Vec<CacheRecord>> {
    let mut out = Vec::new();
    while let Some(rec) = read_record(r)? {
        out.push(rec);
    }
    Ok(out)
}

/// File-backed memo of `polarize_reliabilities` results.
#[derive(Debug)]
pub struct ConstructionCache {
    path: PathBuf,
    records: Vec<CacheRecord>,
}

impl ConstructionCache {
    /// Loads every record in `path`; a missing file is an empty cache.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let records = match File::open(&path) {
            Ok(f) => read_records(&mut BufReader::new(f)).map_err(|e| match e {
                Error::Io { source, .. } => Error::io(&path, source),
                other => other,
            })?,
            Err(e) if e.kind() == ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        Ok(Self { path, records })
    }

    pub fn records(&self) -> &[CacheRecord] {
        &self.records
    }

    pub fn get(&self, p: f64, n_exp: u32, mu: usize) -> Option<&ReliabilityVector> {
        let mu = u32::try_from(mu).ok()?;
        self.records
            .iter()
            .find(|r| r.matches(p, n_exp, mu))
            .map(|r| &r.reliabilities)
    }

    /// Returns the cached vector or computes it and appends it to the file.
    pub fn get_or_compute(&mut self, p: f64, n_exp: u32, mu: usize) -> Result<ReliabilityVector> {
        if let Some(r) = self.get(p, n_exp, mu) {
            return Ok(r.clone());
        }
        let reliabilities = polarize_reliabilities(p, n_exp, mu)?;
        let record = CacheRecord {
            p,
            mu: u32::try_from(mu).map_err(|_| Error::Invalid(format!("mu {mu} exceeds u32")))?,
            reliabilities: reliabilities.clone(),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let mut w = BufWriter::new(file);
        write_record(&mut w, &record)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.records.push(record);
        Ok(reliabilities)
    }
}
