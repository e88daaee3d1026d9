//! Polar transform, systematic encoding and successive-cancellation decoding.
//!
//! The generator is `G_N = F^{⊗n}` with `F = [[1, 0], [1, 1]]`, applied without
//! a bit-reversal permutation. `G_N` is unit lower-triangular (`G[i][j] = 1`
//! iff the bits of `j` are a subset of the bits of `i`), so the restriction
//! `G[A][A]` is invertible for every index set `A`. Source index `i` is
//! synthesised by applying the transform selected by its most significant bit
//! to the raw channel first; the construction module uses the same order.

use crate::error::{Error, Result};

/// Saturation magnitude for noiseless observations, in nats.
pub const LLR_MAX: f64 = 100.0;

fn check_power_of_two(len: usize) -> Result<()> {
    if len == 0 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(())
}

/// In-place `x <- x · F^{⊗n}` over GF(2). The transform is an involution.
pub(crate) fn transform_in_place(x: &mut [u8]) {
    let n = x.len();
    let mut half = n / 2;
    while half >= 1 {
        for block in x.chunks_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (l, h) in lo.iter_mut().zip(hi.iter()) {
                *l ^= *h;
            }
        }
        half /= 2;
    }
}

/// Returns `x = u · G_N`.
pub fn polar_encode(u: &[u8]) -> Result<Vec<u8>> {
    check_power_of_two(u.len())?;
    let mut x = u.to_vec();
    transform_in_place(&mut x);
    Ok(x)
}

/// Source bits with known values. Every other index is free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrozenSpec {
    values: Vec<Option<u8>>,
}

impl FrozenSpec {
    /// Nothing frozen.
    pub fn none(len: usize) -> Self {
        Self {
            values: vec![None; len],
        }
    }

    pub fn new(len: usize, indices: &[usize], values: &[u8]) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::Length {
                expected: indices.len(),
                actual: values.len(),
            });
        }
        let mut spec = Self::none(len);
        for (&i, &v) in indices.iter().zip(values) {
            spec.freeze(i, v)?;
        }
        Ok(spec)
    }

    pub fn zeros(len: usize, indices: &[usize]) -> Result<Self> {
        Self::new(len, indices, &vec![0; indices.len()])
    }

    pub fn freeze(&mut self, index: usize, value: u8) -> Result<()> {
        if index >= self.values.len() {
            return Err(Error::Invalid(format!(
                "frozen index {index} out of range for length {}",
                self.values.len()
            )));
        }
        if value > 1 {
            return Err(Error::Invalid(format!(
                "bit value {value} at index {index}"
            )));
        }
        if self.values[index].is_some() {
            return Err(Error::Invalid(format!("index {index} frozen twice")));
        }
        self.values[index] = Some(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: usize) -> Option<u8> {
        self.values[index]
    }

    pub fn frozen_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i].is_some())
            .collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i].is_none())
            .collect()
    }
}

/// Finds `u` such that `u` agrees with `frozen` on its indices and
/// `x = u · G_N` carries `key` at `key_set` (ascending order). The key set
/// must be exactly the complement of the frozen indices.
pub fn systematic_encode(
    key: &[u8],
    key_set: &[usize],
    frozen: &FrozenSpec,
) -> Result<(Vec<u8>, Vec<u8>)> {
    let n = frozen.len();
    check_power_of_two(n)?;
    if key.len() != key_set.len() {
        return Err(Error::Length {
            expected: key_set.len(),
            actual: key.len(),
        });
    }
    let mut target: Vec<Option<u8>> = vec![None; n];
    for (&i, &bit) in key_set.iter().zip(key) {
        if i >= n || target[i].is_some() {
            return Err(Error::Invalid(format!("bad key index {i}")));
        }
        if frozen.value(i).is_some() {
            return Err(Error::Invalid(format!("index {i} is both key and frozen")));
        }
        if bit > 1 {
            return Err(Error::Invalid(format!("key bit value {bit}")));
        }
        target[i] = Some(bit);
    }
    if let Some(i) = (0..n).find(|&i| target[i].is_none() && frozen.value(i).is_none()) {
        return Err(Error::Invalid(format!(
            "index {i} is neither key nor frozen"
        )));
    }

    let mut u = vec![0u8; n];
    let mut x = vec![0u8; n];
    solve_systematic(&frozen.values, &mut target, &mut u, &mut x);

    // The recursion cannot fail under this generator, but the contract is
    // checked rather than assumed.
    let check = polar_encode(&u)?;
    if check != x || key_set.iter().zip(key).any(|(&i, &b)| x[i] != b) {
        return Err(Error::Singular);
    }
    Ok((u, x))
}

// x = [c_a ^ c_b, c_b] with c_a = u_a·G', c_b = u_b·G'. The upper half is
// solved first, which fixes c_b and turns the lower-half targets into
// targets on c_a.
fn solve_systematic(frozen: &[Option<u8>], target: &mut [Option<u8>], u: &mut [u8], x: &mut [u8]) {
    let n = u.len();
    if n == 1 {
        let bit = frozen[0].or(target[0]).unwrap_or(0);
        u[0] = bit;
        x[0] = bit;
        return;
    }
    let h = n / 2;
    let (f_lo, f_hi) = frozen.split_at(h);
    let (t_lo, t_hi) = target.split_at_mut(h);
    let (u_lo, u_hi) = u.split_at_mut(h);
    let (x_lo, x_hi) = x.split_at_mut(h);
    solve_systematic(f_hi, t_hi, u_hi, x_hi);
    for (t, &c) in t_lo.iter_mut().zip(x_hi.iter()) {
        if let Some(bit) = t {
            *bit ^= c;
        }
    }
    solve_systematic(f_lo, t_lo, u_lo, x_lo);
    for (l, &h) in x_lo.iter_mut().zip(x_hi.iter()) {
        *l ^= h;
    }
}

/// Log-likelihood ratio `ln P(y|0)/P(y|1)` of a BSC(p) observation.
pub fn channel_llr(observed_bit: u8, p: f64) -> Result<f64> {
    if p.is_nan() || !(0.0..0.5).contains(&p) {
        return Err(Error::Domain {
            what: "p",
            value: p,
            domain: "[0, 0.5)",
        });
    }
    if observed_bit > 1 {
        return Err(Error::Invalid(format!("bit value {observed_bit}")));
    }
    let magnitude = if p == 0.0 {
        LLR_MAX
    } else {
        ((1.0 - p) / p).ln().min(LLR_MAX)
    };
    Ok(if observed_bit == 0 {
        magnitude
    } else {
        -magnitude
    })
}

/// Check-node combination rule used by the SC decoder.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CheckNodeRule {
    /// `ln((1 + e^{a+b}) / (e^a + e^b))`.
    #[default]
    Exact,
    /// `sign(a) sign(b) min(|a|, |b|)`.
    MinSum,
}

#[inline]
fn check_node(a: f64, b: f64, rule: CheckNodeRule) -> f64 {
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let approx = sign * a.abs().min(b.abs());
    match rule {
        CheckNodeRule::MinSum => approx,
        CheckNodeRule::Exact => {
            approx + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
        }
    }
}

/// Successive-cancellation decoder with reusable scratch space.
#[derive(Debug, Clone)]
pub struct ScDecoder {
    len: usize,
    rule: CheckNodeRule,
    scratch: Vec<f64>,
}

impl ScDecoder {
    pub fn new(len: usize) -> Result<Self> {
        Self::with_rule(len, CheckNodeRule::Exact)
    }

    pub fn with_rule(len: usize, rule: CheckNodeRule) -> Result<Self> {
        check_power_of_two(len)?;
        Ok(Self {
            len,
            rule,
            scratch: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Decodes into caller-provided buffers. Returns `(u_hat, x_hat)` in
    /// `u` and `x`, with `x = polar_encode(u)`.
    pub fn decode_into(
        &mut self,
        llr: &[f64],
        frozen: &FrozenSpec,
        u: &mut [u8],
        x: &mut [u8],
    ) -> Result<()> {
        for actual in [llr.len(), frozen.len(), u.len(), x.len()] {
            if actual != self.len {
                return Err(Error::Length {
                    expected: self.len,
                    actual,
                });
            }
        }
        decode_node(llr, &mut self.scratch, &frozen.values, u, x, self.rule);
        Ok(())
    }

    pub fn decode(&mut self, llr: &[f64], frozen: &FrozenSpec) -> Result<(Vec<u8>, Vec<u8>)> {
        let mut u = vec![0u8; self.len];
        let mut x = vec![0u8; self.len];
        self.decode_into(llr, frozen, &mut u, &mut x)?;
        Ok((u, x))
    }
}

fn decode_node(
    llr: &[f64],
    scratch: &mut [f64],
    frozen: &[Option<u8>],
    u: &mut [u8],
    x: &mut [u8],
    rule: CheckNodeRule,
) {
    let n = llr.len();
    if n == 1 {
        let bit = frozen[0].unwrap_or(if llr[0] < 0.0 { 1 } else { 0 });
        u[0] = bit;
        x[0] = bit;
        return;
    }
    if frozen.iter().all(Option::is_some) {
        for (ui, f) in u.iter_mut().zip(frozen) {
            *ui = f.unwrap_or(0);
        }
        x.copy_from_slice(u);
        transform_in_place(x);
        return;
    }
    let h = n / 2;
    let (child, rest) = scratch.split_at_mut(h);
    let (l_lo, l_hi) = llr.split_at(h);
    let (f_lo, f_hi) = frozen.split_at(h);
    let (u_lo, u_hi) = u.split_at_mut(h);
    let (x_lo, x_hi) = x.split_at_mut(h);

    for ((c, &a), &b) in child.iter_mut().zip(l_lo).zip(l_hi) {
        *c = check_node(a, b, rule);
    }
    decode_node(child, rest, f_lo, u_lo, x_lo, rule);

    for (((c, &a), &b), &bit) in child.iter_mut().zip(l_lo).zip(l_hi).zip(x_lo.iter()) {
        *c = if bit == 0 { b + a } else { b - a };
    }
    decode_node(child, rest, f_hi, u_hi, x_hi, rule);

    for (l, &h) in x_lo.iter_mut().zip(x_hi.iter()) {
        *l ^= h;
    }
}

/// One-shot SC decode returning `(u_hat, x_hat)`.
pub fn sc_decode(llr: &[f64], frozen: &FrozenSpec) -> Result<(Vec<u8>, Vec<u8>)> {
    ScDecoder::new(llr.len())?.decode(llr, frozen)
}
