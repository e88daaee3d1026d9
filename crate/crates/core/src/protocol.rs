//! Alice, Bob and Eve for one post-processing block.
//!
//! Alice places her sifted key on the `A` positions of a systematic codeword
//! (random source bits on `R`, zeros on `B`) and publishes the codeword bits
//! on `R` and `B`. Bob decodes with those published bits as noiseless
//! observations and his own sifted key as noisy ones; Eve runs the same
//! decoder with her wiretap observations.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use rand::seq::index::sample;
use rand::{CryptoRng, Rng};
use serde::{Deserialize, Serialize};

use crate::channel::capacity_summary;
use crate::codec::{channel_llr, systematic_encode, FrozenSpec, ScDecoder, LLR_MAX};
use crate::error::{Error, Result};
use crate::structure::CodeStructure;

/// Fraction of raw sifted bits disclosed for QBER estimation by default.
pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.1;

/// One block's worth of sifted key bits (values 0/1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiftedKey(Vec<u8>);

impl SiftedKey {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Invalid(format!("bit value {b}")));
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Fraction of positions where the two samples disagree.
pub fn estimate_qber(alice_sample: &[u8], bob_sample: &[u8]) -> Result<f64> {
    if alice_sample.len() != bob_sample.len() {
        return Err(Error::Length {
            expected: alice_sample.len(),
            actual: bob_sample.len(),
        });
    }
    if alice_sample.is_empty() {
        return Err(Error::Invalid("empty QBER sample".into()));
    }
    let errors = alice_sample
        .iter()
        .zip(bob_sample)
        .filter(|(a, b)| a != b)
        .count();
    Ok(errors as f64 / alice_sample.len() as f64)
}

/// Fails with `Inadmissible` when the secrecy capacity at `p_m` is negative.
pub fn check_admissible(p_m: f64) -> Result<()> {
    let cap = capacity_summary(p_m)?;
    if !cap.admissible() {
        return Err(Error::Inadmissible {
            p_m,
            c_sec: cap.c_sec,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterEstimate {
    pub qber: f64,
    pub disclosed: usize,
    /// Undisclosed bits, in original order.
    pub alice_rest: Vec<u8>,
    pub bob_rest: Vec<u8>,
}

/// Discloses a random `fraction` of the raw sifted positions, estimates the
/// QBER on them and drops them from both keys.
pub fn disclose_and_estimate<R: Rng + ?Sized>(
    alice_raw: &[u8],
    bob_raw: &[u8],
    fraction: f64,
    rng: &mut R,
) -> Result<ParameterEstimate> {
    if alice_raw.len() != bob_raw.len() {
        return Err(Error::Length {
            expected: alice_raw.len(),
            actual: bob_raw.len(),
        });
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain {
            what: "sample fraction",
            value: fraction,
            domain: "(0, 1]",
        });
    }
    let n = alice_raw.len();
    let count = ((n as f64 * fraction).ceil() as usize).clamp(1, n.max(1));
    if n == 0 {
        return Err(Error::Invalid("empty sifted key".into()));
    }
    let mut disclosed = vec![false; n];
    for i in sample(rng, n, count) {
        disclosed[i] = true;
    }
    let pick = |keep: bool, src: &[u8]| -> Vec<u8> {
        src.iter()
            .zip(&disclosed)
            .filter(|(_, &d)| d != keep)
            .map(|(&b, _)| b)
            .collect()
    };
    let qber = estimate_qber(&pick(false, alice_raw), &pick(false, bob_raw))?;
    Ok(ParameterEstimate {
        qber,
        disclosed: count,
        alice_rest: pick(true, alice_raw),
        bob_rest: pick(true, bob_raw),
    })
}

/// Check bits sent over the public channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicMessage {
    pub block_id: u64,
    pub structure_digest: u64,
    /// Codeword bits on `R`, ascending index order.
    pub chk1: Vec<u8>,
    /// Codeword bits on `B`, ascending index order.
    pub chk2: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    block_id: u64,
    digest: String,
    chk1: String,
    chk2: String,
}

/// Packs bits LSB-first within each byte.
pub fn pack_bits(bits: &[u8]) -> Vec<u8> {
    let mut out = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        out[i / 8] |= (b & 1) << (i % 8);
    }
    out
}

pub fn unpack_bits(bytes: &[u8], len: usize) -> Result<Vec<u8>> {
    if bytes.len() != len.div_ceil(8) {
        return Err(Error::format(
            "bit field",
            format!("{} bytes cannot hold exactly {len} bits", bytes.len()),
        ));
    }
    if !len.is_multiple_of(8) && bytes[len / 8] >> (len % 8) != 0 {
        return Err(Error::format("bit field", "non-zero padding bits"));
    }
    Ok((0..len).map(|i| (bytes[i / 8] >> (i % 8)) & 1).collect())
}

impl PublicMessage {
    /// JSON `{block_id, digest, chk1, chk2}` with base64 bit-packed fields
    /// and the digest as 16 lowercase hex digits.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&WireMessage {
            block_id: self.block_id,
            digest: format!("{:016x}", self.structure_digest),
            chk1: BASE64.encode(pack_bits(&self.chk1)),
            chk2: BASE64.encode(pack_bits(&self.chk2)),
        })
        .expect("message serialises")
    }

    /// The bit counts are not carried on the wire; both ends take them from
    /// the agreed structure (`|R|` and `|B|`).
    pub fn from_json(s: &str, chk1_len: usize, chk2_len: usize) -> Result<Self> {
        let wire: WireMessage = serde_json::from_str(s)?;
        let structure_digest = u64::from_str_radix(&wire.digest, 16)
            .map_err(|e| Error::format("public message digest", e.to_string()))?;
        let decode = |field: &str, len| {
            let bytes = BASE64
                .decode(field)
                .map_err(|e| Error::format("public message", e.to_string()))?;
            unpack_bits(&bytes, len)
        };
        Ok(Self {
            block_id: wire.block_id,
            structure_digest,
            chk1: decode(&wire.chk1, chk1_len)?,
            chk2: decode(&wire.chk2, chk2_len)?,
        })
    }

    pub fn for_structure(s: &str, structure: &CodeStructure) -> Result<Self> {
        Self::from_json(s, structure.set_r.len(), structure.set_b.len())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconciliationResult {
    /// Decoded codeword bits on `A`.
    pub final_key: Vec<u8>,
}

impl ReconciliationResult {
    /// Number of positions that differ from `reference`.
    pub fn bit_errors(&self, reference: &[u8]) -> usize {
        self.final_key
            .iter()
            .zip(reference)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// Whether the block decoded correctly (ground truth known only in simulation).
    pub fn success(&self, reference: &[u8]) -> bool {
        self.final_key == reference
    }
}

/// Everything both ends derive from a `CodeStructure` before any block.
#[derive(Debug, Clone)]
pub struct Agreement {
    structure: CodeStructure,
    digest: u64,
    decoder_frozen: FrozenSpec,
}

impl Agreement {
    pub fn new(structure: CodeStructure) -> Result<Self> {
        structure.validate()?;
        let decoder_frozen = FrozenSpec::zeros(structure.len(), &structure.set_b)?;
        Ok(Self {
            digest: structure.digest(),
            structure,
            decoder_frozen,
        })
    }

    pub fn structure(&self) -> &CodeStructure {
        &self.structure
    }

    pub fn digest(&self) -> u64 {
        self.digest
    }

    fn check_key(&self, key: &SiftedKey) -> Result<()> {
        if key.len() != self.structure.set_a.len() {
            return Err(Error::Length {
                expected: self.structure.set_a.len(),
                actual: key.len(),
            });
        }
        Ok(())
    }

    fn check_message(&self, msg: &PublicMessage) -> Result<()> {
        for (expected, actual) in [
            (self.structure.set_r.len(), msg.chk1.len()),
            (self.structure.set_b.len(), msg.chk2.len()),
        ] {
            if expected != actual {
                return Err(Error::Length { expected, actual });
            }
        }
        Ok(())
    }
}

/// Alice's side of a block.
#[derive(Debug, Clone, Copy)]
pub struct Alice<'a> {
    agreement: &'a Agreement,
}

impl<'a> Alice<'a> {
    pub fn new(agreement: &'a Agreement) -> Self {
        Self { agreement }
    }

    /// Draws the `R` source bits from `rng` and encodes. Returns the public
    /// message and Alice's final key.
    pub fn prepare<R: Rng + CryptoRng + ?Sized>(
        &self,
        ka: &SiftedKey,
        rng: &mut R,
        block_id: u64,
    ) -> Result<(PublicMessage, Vec<u8>)> {
        let r_bits: Vec<u8> = (0..self.agreement.structure.set_r.len())
            .map(|_| rng.random_range(0..2u8))
            .collect();
        self.prepare_with_random_bits(ka, &r_bits, block_id)
    }

    pub fn prepare_with_random_bits(
        &self,
        ka: &SiftedKey,
        r_bits: &[u8],
        block_id: u64,
    ) -> Result<(PublicMessage, Vec<u8>)> {
        let s = &self.agreement.structure;
        self.agreement.check_key(ka)?;
        if r_bits.len() != s.set_r.len() {
            return Err(Error::Length {
                expected: s.set_r.len(),
                actual: r_bits.len(),
            });
        }
        let mut frozen = FrozenSpec::new(s.len(), &s.set_r, r_bits)?;
        for &i in &s.set_b {
            frozen.freeze(i, 0)?;
        }
        let (_u, x) = systematic_encode(ka.bits(), &s.set_a, &frozen)?;
        let project = |set: &[usize]| set.iter().map(|&i| x[i]).collect::<Vec<u8>>();
        let msg = PublicMessage {
            block_id,
            structure_digest: self.agreement.digest,
            chk1: project(&s.set_r),
            chk2: project(&s.set_b),
        };
        Ok((msg, project(&s.set_a)))
    }
}

/// Shared decoding path for Bob and Eve.
#[derive(Debug, Clone)]
struct Receiver<'a> {
    agreement: &'a Agreement,
    decoder: ScDecoder,
    llr: Vec<f64>,
    u: Vec<u8>,
    x: Vec<u8>,
}

impl<'a> Receiver<'a> {
    fn new(agreement: &'a Agreement) -> Result<Self> {
        let n = agreement.structure.len();
        Ok(Self {
            agreement,
            decoder: ScDecoder::new(n)?,
            llr: vec![0.0; n],
            u: vec![0; n],
            x: vec![0; n],
        })
    }

    fn decode(
        &mut self,
        key: &SiftedKey,
        crossover: f64,
        msg: &PublicMessage,
    ) -> Result<ReconciliationResult> {
        let ag = self.agreement;
        let s = &ag.structure;
        ag.check_key(key)?;
        ag.check_message(msg)?;
        let noiseless = |bit: u8| if bit == 0 { LLR_MAX } else { -LLR_MAX };
        for (&i, &bit) in s.set_r.iter().zip(&msg.chk1) {
            self.llr[i] = noiseless(bit);
        }
        for (&i, &bit) in s.set_b.iter().zip(&msg.chk2) {
            self.llr[i] = noiseless(bit);
        }
        // A crossover of 1/2 carries no information.
        let magnitude = if crossover >= 0.5 {
            0.0
        } else {
            channel_llr(0, crossover)?
        };
        for (&i, &bit) in s.set_a.iter().zip(key.bits()) {
            self.llr[i] = if bit == 0 { magnitude } else { -magnitude };
        }
        self.decoder
            .decode_into(&self.llr, &ag.decoder_frozen, &mut self.u, &mut self.x)?;
        Ok(ReconciliationResult {
            final_key: s.set_a.iter().map(|&i| self.x[i]).collect(),
        })
    }
}

/// Bob's side: decodes with his sifted key as BSC(p_m) observations.
#[derive(Debug, Clone)]
pub struct Bob<'a>(Receiver<'a>);

impl<'a> Bob<'a> {
    pub fn new(agreement: &'a Agreement) -> Result<Self> {
        Receiver::new(agreement).map(Self)
    }

    pub fn reconcile(
        &mut self,
        kb: &SiftedKey,
        msg: &PublicMessage,
    ) -> Result<ReconciliationResult> {
        let ag = self.0.agreement;
        if msg.structure_digest != ag.digest {
            return Err(Error::DigestMismatch {
                local: ag.digest,
                remote: msg.structure_digest,
            });
        }
        self.0.decode(kb, ag.structure.p_m, msg)
    }
}

/// The eavesdropper: full public-channel access plus a BSC(p_w) copy of the key.
#[derive(Debug, Clone)]
pub struct Eve<'a>(Receiver<'a>);

impl<'a> Eve<'a> {
    pub fn new(agreement: &'a Agreement) -> Result<Self> {
        Receiver::new(agreement).map(Self)
    }

    pub fn attack(&mut self, ke: &SiftedKey, msg: &PublicMessage) -> Result<ReconciliationResult> {
        let p_w = self.0.agreement.structure.p_w;
        self.0.decode(ke, p_w, msg)
    }

    /// Decodes assuming an arbitrary crossover on Eve's key copy.
    pub fn attack_with_crossover(
        &mut self,
        ke: &SiftedKey,
        crossover: f64,
        msg: &PublicMessage,
    ) -> Result<ReconciliationResult> {
        self.0.decode(ke, crossover, msg)
    }
}
