//! Partition of source indices into random (`R`), key (`A`) and frozen (`B`)
//! sets from the main-channel and wiretap-channel reliabilities.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{capacity_summary, h2, wiretap_crossover};
use crate::construction::{polarize_reliabilities, ReliabilityVector};
use crate::error::{Error, Result};

/// How the wiretap leakage sum is compared against `pai_target`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaiMode {
    /// Raw capacity sum over the block.
    #[default]
    PerBlock,
    /// Capacity sum divided by the block length.
    PerBit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionTargets {
    pub fer_target: f64,
    pub pai_target: f64,
    pub pai_mode: PaiMode,
}

impl PartitionTargets {
    pub fn new(fer_target: f64, pai_target: f64) -> Result<Self> {
        let t = Self {
            fer_target,
            pai_target,
            pai_mode: PaiMode::PerBlock,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_pai_mode(mut self, mode: PaiMode) -> Self {
        self.pai_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fer_target > 0.0 && self.fer_target < 1.0) {
            return Err(Error::Domain {
                what: "fer_target",
                value: self.fer_target,
                domain: "(0, 1)",
            });
        }
        if !(self.pai_target > 0.0 && self.pai_target.is_finite()) {
            return Err(Error::Domain {
                what: "pai_target",
                value: self.pai_target,
                domain: "(0, inf)",
            });
        }
        Ok(())
    }
}

impl Default for PartitionTargets {
    fn default() -> Self {
        Self {
            fer_target: 0.1,
            pai_target: 1e-7,
            pai_mode: PaiMode::PerBlock,
        }
    }
}

/// Capacity estimate `1 - h2(UP_e)` of a wiretap subchannel.
pub fn wiretap_capacity(bound: f64) -> f64 {
    1.0 - h2(bound.clamp(0.0, 0.5))
}

// Sorts indices by `score` ascending (lower index first on ties) and returns
// the maximal prefix whose running sum stays within `budget`, then the rest.
fn prefix_split(scores: &[f64], budget: f64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(i.cmp(&j)));
    let mut sum = 0.0;
    let mut cut = order.len();
    for (k, &i) in order.iter().enumerate() {
        sum += scores[i];
        if sum > budget {
            cut = k;
            break;
        }
    }
    let mut inside = order[..cut].to_vec();
    let mut outside = order[cut..].to_vec();
    inside.sort_unstable();
    outside.sort_unstable();
    (inside, outside)
}

/// `(G_N, B_N)`: the most reliable subchannels whose error bounds sum to at
/// most `fer_target`, and the rest.
pub fn select_good_main(reliab: &ReliabilityVector, fer_target: f64) -> (Vec<usize>, Vec<usize>) {
    prefix_split(&reliab.bounds, fer_target)
}

/// `(B_N*, G_N*)`: the least informative wiretap subchannels whose capacities
/// sum to at most `pai_target`, and the rest.
pub fn select_bad_wiretap(
    reliab_w: &ReliabilityVector,
    pai_target: f64,
) -> (Vec<usize>, Vec<usize>) {
    let capacities: Vec<f64> = reliab_w
        .bounds
        .iter()
        .map(|&b| wiretap_capacity(b))
        .collect();
    prefix_split(&capacities, pai_target)
}

/// The agreed code layout. Index sets are ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeStructure {
    pub n_exp: u32,
    pub p_m: f64,
    pub p_w: f64,
    pub fer_target: f64,
    pub pai_target: f64,
    pub mu: usize,
    #[serde(rename = "r")]
    pub set_r: Vec<usize>,
    #[serde(rename = "a")]
    pub set_a: Vec<usize>,
    #[serde(rename = "b")]
    pub set_b: Vec<usize>,
    pub rate: f64,
    pub anomaly_count: usize,
}

impl CodeStructure {
    pub fn len(&self) -> usize {
        1 << self.n_exp
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Canonical JSON (field order fixed, no whitespace).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("structure serialises")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("structure serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let st: Self = serde_json::from_str(s)?;
        st.validate()?;
        Ok(st)
    }

    /// First 8 bytes (big-endian) of SHA-256 over the canonical JSON.
    pub fn digest(&self) -> u64 {
        let hash = Sha256::digest(self.to_json().as_bytes());
        u64::from_be_bytes(hash[..8].try_into().unwrap())
    }

    /// Checks that `R`, `A`, `B` are sorted and partition `0..N`.
    pub fn validate(&self) -> Result<()> {
        if self.n_exp > crate::construction::MAX_N_EXP {
            return Err(Error::format(
                "code structure",
                format!("n_exp {}", self.n_exp),
            ));
        }
        let n = self.len();
        let mut seen = vec![false; n];
        for (name, set) in [("r", &self.set_r), ("a", &self.set_a), ("b", &self.set_b)] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format(
                    "code structure",
                    format!("set {name} is not ascending"),
                ));
            }
            for &i in set {
                if i >= n || seen[i] {
                    return Err(Error::format(
                        "code structure",
                        format!("index {i} in set {name} is out of range or repeated"),
                    ));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::format("code structure", "sets do not cover 0..N"));
        }
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::format(
                "code structure",
                format!("rate {}", self.rate),
            ));
        }
        Ok(())
    }
}

/// Runs both constructions and partitions the indices.
pub fn build_code_structure(
    p_m: f64,
    n_exp: u32,
    targets: PartitionTargets,
    mu: usize,
) -> Result<CodeStructure> {
    let (p_w, main, wiretap) = reliabilities_for(p_m, n_exp, mu)?;
    partition(p_m, p_w, &main, &wiretap, targets, mu)
}

/// `p_w` and both reliability vectors, after the admissibility check.
pub fn reliabilities_for(
    p_m: f64,
    n_exp: u32,
    mu: usize,
) -> Result<(f64, ReliabilityVector, ReliabilityVector)> {
    let cap = capacity_summary(p_m)?;
    if !cap.admissible() {
        return Err(Error::Inadmissible {
            p_m,
            c_sec: cap.c_sec,
        });
    }
    let p_w = wiretap_crossover(p_m)?;
    let main = polarize_reliabilities(p_m, n_exp, mu)?;
    let wiretap = polarize_reliabilities(p_w, n_exp, mu)?;
    Ok((p_w, main, wiretap))
}

/// Partition step on precomputed reliabilities: `R = G_N* \ B_N`,
/// `A = B_N* ∩ G_N`, `B = B_N`. Indices in `B_N ∩ G_N*` are counted as
/// anomalies and kept frozen.
pub fn partition(
    p_m: f64,
    p_w: f64,
    main: &ReliabilityVector,
    wiretap: &ReliabilityVector,
    targets: PartitionTargets,
    mu: usize,
) -> Result<CodeStructure> {
    targets.validate()?;
    if main.n_exp != wiretap.n_exp {
        return Err(Error::Length {
            expected: main.len(),
            actual: wiretap.len(),
        });
    }
    let n = main.len();
    let leak_budget = match targets.pai_mode {
        PaiMode::PerBlock => targets.pai_target,
        PaiMode::PerBit => targets.pai_target * n as f64,
    };
    let (good, _bad) = select_good_main(main, targets.fer_target);
    let (bad_star, _good_star) = select_bad_wiretap(wiretap, leak_budget);

    let mut in_good = vec![false; n];
    for &i in &good {
        in_good[i] = true;
    }
    let mut in_bad_star = vec![false; n];
    for &i in &bad_star {
        in_bad_star[i] = true;
    }

    let (mut set_r, mut set_a, mut set_b) = (Vec::new(), Vec::new(), Vec::new());
    let mut anomaly_count = 0;
    for i in 0..n {
        match (in_good[i], in_bad_star[i]) {
            (true, true) => set_a.push(i),
            (true, false) => set_r.push(i),
            (false, true) => set_b.push(i),
            (false, false) => {
                anomaly_count += 1;
                set_b.push(i);
            }
        }
    }
    let rate = set_a.len() as f64 / n as f64;
    Ok(CodeStructure {
        n_exp: main.n_exp,
        p_m,
        p_w,
        fer_target: targets.fer_target,
        pai_target: targets.pai_target,
        mu,
        set_r,
        set_a,
        set_b,
        rate,
        anomaly_count,
    })
}
