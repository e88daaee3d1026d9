//! Monte Carlo driver for the rate, reliability and security experiments.
//!
//! Seeding: every trial owns a ChaCha20 generator seeded with
//! `SHA-256("pcep/trial" | master_seed | n_exp | p_index | trial)` (integers
//! little-endian, widths u64/u32/u32/u64). Streams 0..=3 of that generator
//! feed Alice's key, Alice's random `R` bits, Bob's channel flips and Eve's
//! channel flips. Cell aggregates are integer sums over trials, so a report
//! does not depend on how trials were scheduled.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::capacity_summary;
use crate::construction::{ConstructionCache, DEFAULT_MU};
use crate::error::{Error, Result};
use crate::protocol::{Agreement, Alice, Bob, Eve, SiftedKey};
use crate::structure::{partition, reliabilities_for, CodeStructure, PaiMode, PartitionTargets};

/// Lower clamp on the secrecy capacity when forming `rate / c_sec`.
pub const CSEC_EPSILON: f64 = 1e-12;

pub const THREADS_ENV: &str = "PCEP_THREADS";

pub const CSV_COLUMNS: [&str; 12] = [
    "n_exp",
    "p_m",
    "p_w",
    "rate",
    "rate_over_csec",
    "bob_fer",
    "bob_ber",
    "eve_fer",
    "eve_ber",
    "trials",
    "anomalies",
    "seconds",
];

const STREAM_ALICE_KEY: u64 = 0;
const STREAM_RANDOM_BITS: u64 = 1;
const STREAM_BOB_CHANNEL: u64 = 2;
const STREAM_EVE_CHANNEL: u64 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Invalid(format!("unknown report format {other:?}"))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_exps: Vec<u32>,
    pub p_grid: Vec<f64>,
    pub trials: u64,
    pub fer_target: f64,
    pub pai_target: f64,
    pub pai_mode: PaiMode,
    pub mu: usize,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
    pub format: ReportFormat,
    /// Worker count; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// When false the `seconds` column is written as 0 so reports are
    /// byte-reproducible.
    pub record_timing: bool,
    pub cache_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_exps: vec![10],
            p_grid: vec![0.01, 0.02, 0.04, 0.08],
            trials: 10_000,
            fer_target: 0.1,
            pai_target: 1e-7,
            pai_mode: PaiMode::PerBlock,
            mu: DEFAULT_MU,
            master_seed: 42,
            output_path: None,
            format: ReportFormat::Csv,
            threads: None,
            record_timing: true,
            cache_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn targets(&self) -> Result<PartitionTargets> {
        Ok(PartitionTargets::new(self.fer_target, self.pai_target)?.with_pai_mode(self.pai_mode))
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Invalid("trials must be at least 1".into()));
        }
        if let Some(&n) = self.n_exps.iter().find(|n| !(4..=24).contains(*n)) {
            return Err(Error::Invalid(format!("n_exp {n} outside [4, 24]")));
        }
        if let Some(&p) = self.p_grid.iter().find(|p| !(0.0..=0.5).contains(*p)) {
            return Err(Error::Domain {
                what: "p_m",
                value: p,
                domain: "[0, 0.5]",
            });
        }
        if self.threads == Some(0) {
            return Err(Error::Invalid("thread count must be positive".into()));
        }
        self.targets()?;
        Ok(())
    }
}

/// Reads `PCEP_THREADS`; unset or empty means no cap.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => parse_threads(&v).map(Some),
        Err(_) => Ok(None),
    }
}

pub fn parse_threads(v: &str) -> Result<usize> {
    match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::Invalid(format!(
            "{THREADS_ENV}={v:?} is not a positive integer"
        ))),
    }
}

pub fn trial_seed(master_seed: u64, n_exp: u32, p_index: u32, trial: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"pcep/trial");
    h.update(master_seed.to_le_bytes());
    h.update(n_exp.to_le_bytes());
    h.update(p_index.to_le_bytes());
    h.update(trial.to_le_bytes());
    h.finalize().into()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    pub bob_frame_error: bool,
    pub bob_bit_errors: usize,
    pub eve_frame_error: bool,
    pub eve_bit_errors: usize,
}

fn stream(seed: [u8; 32], id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::from_seed(seed);
    rng.set_stream(id);
    rng
}

fn through_bsc(bits: &[u8], p: f64, rng: &mut ChaCha20Rng) -> Vec<u8> {
    bits.iter()
        .map(|&b| {
            if p > 0.0 && rng.random_bool(p) {
                b ^ 1
            } else {
                b
            }
        })
        .collect()
}

/// Per-worker decoder state reused across trials of one cell.
struct TrialRunner<'a> {
    agreement: &'a Agreement,
    bob: Bob<'a>,
    eve: Eve<'a>,
}

impl<'a> TrialRunner<'a> {
    fn new(agreement: &'a Agreement) -> Result<Self> {
        Ok(Self {
            agreement,
            bob: Bob::new(agreement)?,
            eve: Eve::new(agreement)?,
        })
    }

    fn run(&mut self, seed: [u8; 32], block_id: u64) -> Result<TrialOutcome> {
        let s = self.agreement.structure();
        let k = s.set_a.len();
        let mut key_rng = stream(seed, STREAM_ALICE_KEY);
        let ka = SiftedKey::new((0..k).map(|_| key_rng.random_range(0..2u8)).collect())?;
        let (msg, alice_final) = Alice::new(self.agreement).prepare(
            &ka,
            &mut stream(seed, STREAM_RANDOM_BITS),
            block_id,
        )?;
        let kb = SiftedKey::new(through_bsc(
            ka.bits(),
            s.p_m,
            &mut stream(seed, STREAM_BOB_CHANNEL),
        ))?;
        let ke = SiftedKey::new(through_bsc(
            ka.bits(),
            s.p_w,
            &mut stream(seed, STREAM_EVE_CHANNEL),
        ))?;
        let bob = self.bob.reconcile(&kb, &msg)?;
        let eve = self.eve.attack(&ke, &msg)?;
        let bob_bit_errors = bob.bit_errors(&alice_final);
        let eve_bit_errors = eve.bit_errors(&alice_final);
        Ok(TrialOutcome {
            bob_frame_error: bob_bit_errors > 0,
            bob_bit_errors,
            eve_frame_error: eve_bit_errors > 0,
            eve_bit_errors,
        })
    }
}

/// One full block: random key, Alice encodes, Bob and Eve decode.
pub fn run_trial(agreement: &Agreement, trial_seed: [u8; 32]) -> Result<TrialOutcome> {
    TrialRunner::new(agreement)?.run(trial_seed, 0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    bob_frames: u64,
    bob_bits: u64,
    eve_frames: u64,
    eve_bits: u64,
}

impl Tally {
    fn from_outcome(o: TrialOutcome) -> Self {
        Self {
            bob_frames: o.bob_frame_error as u64,
            bob_bits: o.bob_bit_errors as u64,
            eve_frames: o.eve_frame_error as u64,
            eve_bits: o.eve_bit_errors as u64,
        }
    }

    fn add(self, o: Self) -> Self {
        Self {
            bob_frames: self.bob_frames + o.bob_frames,
            bob_bits: self.bob_bits + o.bob_bits,
            eve_frames: self.eve_frames + o.eve_frames,
            eve_bits: self.eve_bits + o.eve_bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n_exp: u32,
    pub p_m: f64,
    pub p_w: f64,
    pub rate: f64,
    pub rate_over_csec: f64,
    pub bob_fer: f64,
    pub bob_ber: f64,
    pub eve_fer: f64,
    pub eve_ber: f64,
    pub trials: u64,
    pub anomalies: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub n_exp: u32,
    pub p_m: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
    #[serde(default)]
    pub skipped: Vec<SkippedCell>,
}

/// Structure for one `(p_m, n_exp)` cell, optionally through a file cache.
pub fn build_structure(
    p_m: f64,
    n_exp: u32,
    targets: PartitionTargets,
    mu: usize,
    cache: Option<&mut ConstructionCache>,
) -> Result<CodeStructure> {
    match cache {
        None => {
            let (p_w, main, wire) = reliabilities_for(p_m, n_exp, mu)?;
            partition(p_m, p_w, &main, &wire, targets, mu)
        }
        Some(cache) => {
            crate::protocol::check_admissible(p_m)?;
            let p_w = crate::channel::wiretap_crossover(p_m)?;
            let main = cache.get_or_compute(p_m, n_exp, mu)?;
            let wire = cache.get_or_compute(p_w, n_exp, mu)?;
            partition(p_m, p_w, &main, &wire, targets, mu)
        }
    }
}

fn rate_over_csec(rate: f64, c_sec: f64) -> f64 {
    rate / c_sec.max(CSEC_EPSILON)
}

fn simulate_cell(
    agreement: &Agreement,
    trials: u64,
    master_seed: u64,
    n_exp: u32,
    p_index: u32,
) -> Result<Tally> {
    (0..trials)
        .into_par_iter()
        .map_init(
            || TrialRunner::new(agreement),
            |runner, t| {
                let runner = runner.as_mut().map_err(|e| Error::Invalid(e.to_string()))?;
                runner
                    .run(trial_seed(master_seed, n_exp, p_index, t), t)
                    .map(Tally::from_outcome)
            },
        )
        .try_reduce(Tally::default, |a, b| Ok(a.add(b)))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let targets = cfg.targets()?;
    let mut cache = cfg
        .cache_path
        .as_ref()
        .map(ConstructionCache::open)
        .transpose()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;

    let mut report = SimulationReport::default();
    for &n_exp in &cfg.n_exps {
        for (p_index, &p_m) in cfg.p_grid.iter().enumerate() {
            let started = Instant::now();
            let structure = match pool
                .install(|| build_structure(p_m, n_exp, targets, cfg.mu, cache.as_mut()))
            {
                Ok(s) => s,
                Err(Error::Inadmissible { c_sec, .. }) => {
                    report.skipped.push(SkippedCell {
                        n_exp,
                        p_m,
                        reason: format!("secrecy capacity {c_sec} < 0"),
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let agreement = Agreement::new(structure)?;
            let tally = pool.install(|| {
                simulate_cell(
                    &agreement,
                    cfg.trials,
                    cfg.master_seed,
                    n_exp,
                    p_index as u32,
                )
            })?;

            let s = agreement.structure();
            let trials = cfg.trials as f64;
            let key_bits = trials * s.set_a.len() as f64;
            let ber = |bits: u64| {
                if key_bits > 0.0 {
                    bits as f64 / key_bits
                } else {
                    0.0
                }
            };
            let c_sec = capacity_summary(p_m)?.c_sec;
            report.rows.push(ReportRow {
                n_exp,
                p_m,
                p_w: s.p_w,
                rate: s.rate,
                rate_over_csec: rate_over_csec(s.rate, c_sec),
                bob_fer: tally.bob_frames as f64 / trials,
                bob_ber: ber(tally.bob_bits),
                eve_fer: tally.eve_frames as f64 / trials,
                eve_ber: ber(tally.eve_bits),
                trials: cfg.trials,
                anomalies: s.anomaly_count,
                seconds: if cfg.record_timing {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
        }
    }
    Ok(report)
}

pub fn write_csv<W: Write>(report: &SimulationReport, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    let csv_err = |e: csv::Error| Error::format("csv report", e.to_string());
    wtr.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for row in &report.rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<SimulationReport> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<ReportRow>, _>>()
        .map_err(|e| Error::format("csv report", e.to_string()))?;
    Ok(SimulationReport {
        rows,
        skipped: Vec::new(),
    })
}

pub fn report_to_string(report: &SimulationReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => Ok(serde_json::to_string_pretty(report)? + "\n"),
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(report, &mut buf)?;
            String::from_utf8(buf).map_err(|e| Error::format("csv report", e.to_string()))
        }
    }
}

pub fn emit_report(report: &SimulationReport, format: ReportFormat, path: &Path) -> Result<()> {
    let body = report_to_string(report, format)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Construction-only rate data for a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n_exp: u32,
    pub p_m: f64,
    pub p_w: f64,
    pub rate: f64,
    pub c_sec: f64,
    pub rate_over_csec: f64,
    pub key_bits: usize,
    pub random_bits: usize,
    pub frozen_bits: usize,
    pub anomalies: usize,
}

impl RateRow {
    pub fn from_structure(s: &CodeStructure) -> Result<Self> {
        let c_sec = capacity_summary(s.p_m)?.c_sec;
        Ok(Self {
            n_exp: s.n_exp,
            p_m: s.p_m,
            p_w: s.p_w,
            rate: s.rate,
            c_sec,
            rate_over_csec: rate_over_csec(s.rate, c_sec),
            key_bits: s.set_a.len(),
            random_bits: s.set_r.len(),
            frozen_bits: s.set_b.len(),
            anomalies: s.anomaly_count,
        })
    }
}

/// Rows for every admissible `(n_exp, p_m)` cell; inadmissible cells are left out.
pub fn rate_table(
    n_exps: &[u32],
    p_grid: &[f64],
    targets: PartitionTargets,
    mu: usize,
    mut cache: Option<&mut ConstructionCache>,
) -> Result<Vec<RateRow>> {
    let mut rows = Vec::new();
    for &n_exp in n_exps {
        for &p_m in p_grid {
            match build_structure(p_m, n_exp, targets, mu, cache.as_deref_mut()) {
                Ok(s) => rows.push(RateRow::from_structure(&s)?),
                Err(Error::Inadmissible { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(rows)
}

pub fn write_rate_csv<W: Write>(rows: &[RateRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)
            .map_err(|e| Error::format("csv rate table", e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))
}
