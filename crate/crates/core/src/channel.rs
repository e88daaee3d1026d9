//! Binary-entropy primitives and the capacities of the main and wiretap
//! channels when both are modelled as binary symmetric channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest QBER for which the secrecy capacity `1 - 2 h2(p)` is non-negative.
pub const QBER_THRESHOLD: f64 = 0.11;

const INVERSE_TOLERANCE: f64 = 1e-12;
const INVERSE_MAX_ITERATIONS: usize = 200;

/// A binary symmetric channel with crossover probability in `[0, 0.5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    crossover: f64,
}

impl ChannelSpec {
    pub fn new(crossover: f64) -> Result<Self> {
        check_range("crossover", crossover, 0.0, 0.5, "[0, 0.5]")?;
        Ok(Self { crossover })
    }

    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    pub fn capacity(&self) -> f64 {
        1.0 - h2(self.crossover)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    /// `I(A;B) = 1 - h2(p_m)`, the main channel capacity.
    pub i_ab: f64,
    /// `I(A;E) = h2(p_m)`, Eve's information when all noise is attributed to her.
    pub i_ae: f64,
    pub c_sec: f64,
}

impl CapacitySummary {
    pub fn admissible(&self) -> bool {
        self.c_sec >= 0.0
    }
}

pub(crate) fn check_range(
    what: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    domain: &'static str,
) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        return Err(Error::Domain {
            what,
            value,
            domain,
        });
    }
    Ok(())
}

/// Binary entropy without domain checks. `0 log 0` is taken as 0.
pub(crate) fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// `h2(p) = -p log2 p - (1-p) log2 (1-p)`, in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    check_range("p", p, 0.0, 1.0, "[0, 1]")?;
    Ok(h2(p))
}

/// The unique `p` in `[0, 0.5]` with `h2(p) = h`, found by bisection.
pub fn inverse_binary_entropy(h: f64) -> Result<f64> {
    check_range("h", h, 0.0, 1.0, "[0, 1]")?;
    if h == 0.0 {
        return Ok(0.0);
    }
    if h == 1.0 {
        return Ok(0.5);
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..INVERSE_MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if h2(mid) < h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= INVERSE_TOLERANCE {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Crossover `p_w` of the wiretap channel solving `1 - h2(p_w) = h2(p_m)`.
pub fn wiretap_crossover(p_m: f64) -> Result<f64> {
    check_range("p_m", p_m, 0.0, 0.5, "[0, 0.5]")?;
    inverse_binary_entropy(1.0 - h2(p_m))
}

pub fn capacity_summary(p_m: f64) -> Result<CapacitySummary> {
    check_range("p_m", p_m, 0.0, 0.5, "[0, 0.5]")?;
    let i_ae = h2(p_m);
    let i_ab = 1.0 - i_ae;
    Ok(CapacitySummary {
        i_ab,
        i_ae,
        c_sec: i_ab - i_ae,
    })
}
