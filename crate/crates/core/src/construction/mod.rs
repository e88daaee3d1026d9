//! Per-subchannel error-probability upper bounds for a polarized BSC.
//!
//! Channels are kept as lists of conjugate output pairs and degraded after
//! every transform by greedily merging the likelihood-ratio-adjacent pair
//! with the smallest capacity loss, until at most `mu` output symbols remain.
//! Merging is a degrading operation, so the ML error probability of every
//! synthesised channel upper-bounds the true one.

mod cache;

use serde::{Deserialize, Serialize};

use crate::channel::check_range;
use crate::codec::polar_encode;
use crate::error::{Error, Result};

pub use cache::{read_records, write_record, CacheRecord, ConstructionCache};

pub const DEFAULT_MU: usize = 256;
pub const MAX_N_EXP: u32 = 24;
pub const MAX_EXACT_N_EXP: u32 = 3;

/// Default cap on the number of output classes a single transform may
/// produce before merging.
pub const DEFAULT_CLASS_BUDGET: usize = 1 << 22;

// Subtrees at or above this depth are split across the rayon pool.
const PARALLEL_DEPTH: u32 = 6;

/// A conjugate pair of output symbols `{y, ȳ}` with `p(y|0) = a`,
/// `p(y|1) = b` and `a >= b`; `ȳ` carries the swapped pair.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Class {
    a: f64,
    b: f64,
}

impl Class {
    fn new(x: f64, y: f64) -> Self {
        if x >= y {
            Class { a: x, b: y }
        } else {
            Class { a: y, b: x }
        }
    }

    fn mass(&self) -> f64 {
        self.a + self.b
    }

    /// Likelihood ratio `b / a` in `[0, 1]`.
    fn ratio(&self) -> f64 {
        self.b / self.a
    }

    /// Mutual-information contribution of both symbols, in bits.
    fn capacity(&self) -> f64 {
        let m = self.mass();
        let mut c = 0.0;
        if self.a > 0.0 {
            c += self.a * (2.0 * self.a / m).log2();
        }
        if self.b > 0.0 {
            c += self.b * (2.0 * self.b / m).log2();
        }
        c
    }
}

/// A binary-input symmetric channel over a finite output alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricDiscreteChannel {
    classes: Vec<Class>,
}

impl SymmetricDiscreteChannel {
    /// Output symbols as `(p(y|0), p(y|1))`, conjugates adjacent.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.classes
            .iter()
            .flat_map(|c| [(c.a, c.b), (c.b, c.a)])
            .collect()
    }

    pub fn output_size(&self) -> usize {
        2 * self.classes.len()
    }

    /// ML decision error probability, ties split evenly.
    pub fn error_probability(&self) -> f64 {
        self.classes.iter().map(|c| c.b).sum()
    }

    pub fn capacity(&self) -> f64 {
        self.classes.iter().map(Class::capacity).sum()
    }

    /// `W⊟W`: output `(y1, y2)` for input `u1` with `u2` uniform.
    pub fn minus(&self) -> Self {
        let k = self.classes.len();
        let mut out = Vec::with_capacity(k * (k + 1) / 2);
        for (i, ci) in self.classes.iter().enumerate() {
            out.push(Class::new(ci.a * ci.a + ci.b * ci.b, 2.0 * ci.a * ci.b));
            for cj in &self.classes[i + 1..] {
                out.push(Class::new(
                    2.0 * (ci.a * cj.a + ci.b * cj.b),
                    2.0 * (ci.a * cj.b + ci.b * cj.a),
                ));
            }
        }
        Self { classes: out }
    }

    /// `W⊛W`: output `(y1, y2, u1)` for input `u2`.
    pub fn plus(&self) -> Self {
        let k = self.classes.len();
        let mut out = Vec::with_capacity(k * (k + 1));
        for (i, ci) in self.classes.iter().enumerate() {
            out.push(Class::new(ci.a * ci.a, ci.b * ci.b));
            out.push(Class::new(ci.a * ci.b, ci.a * ci.b));
            for cj in &self.classes[i + 1..] {
                out.push(Class::new(2.0 * ci.a * cj.a, 2.0 * ci.b * cj.b));
                out.push(Class::new(2.0 * ci.a * cj.b, 2.0 * ci.b * cj.a));
            }
        }
        Self { classes: out }
    }

    /// Error probability of `minus()` without materialising it.
    fn minus_error_probability(&self) -> f64 {
        let pe = self.error_probability();
        2.0 * pe * (1.0 - pe)
    }

    /// Error probability of `plus()` without materialising it.
    ///
    /// For classes sorted by ratio, `min(a_i b_j, b_i a_j) = b_i a_j` when
    /// `i` precedes `j`, so the pairwise sum collapses to a prefix sum.
    fn plus_error_probability(&self) -> f64 {
        let mut sorted: Vec<(f64, Class)> = self
            .classes
            .iter()
            .filter(|c| c.a > 0.0)
            .map(|c| (c.ratio(), *c))
            .collect();
        sorted.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
        let pe = self.error_probability();
        let mut prefix_b = 0.0;
        let mut cross = 0.0;
        let mut diagonal = 0.0;
        for (_, c) in &sorted {
            cross += c.a * prefix_b;
            diagonal += c.a * c.b;
            prefix_b += c.b;
        }
        pe * pe + diagonal + 2.0 * cross
    }

    /// Degrading merge down to at most `mu` output symbols.
    pub fn degrade(self, mu: usize) -> Self {
        Self {
            classes: degrading_merge(self.classes, (mu / 2).max(1)),
        }
    }
}

/// Two-output channel `{(1-p, p), (p, 1-p)}`.
pub fn bsc_channel(p: f64) -> Result<SymmetricDiscreteChannel> {
    check_range("p", p, 0.0, 0.5, "[0, 0.5]")?;
    Ok(SymmetricDiscreteChannel {
        classes: vec![Class::new(1.0 - p, p)],
    })
}

/// Min-tree over the merge cost of each adjacent pair `(i, next(i))`,
/// keyed by the left index. Ties resolve to the lowest index.
struct LossTree {
    leaves: usize,
    node: Vec<(f64, u32)>,
}

impl LossTree {
    fn new(losses: &[f64]) -> Self {
        let leaves = losses.len().next_power_of_two().max(1);
        let mut node = vec![(f64::INFINITY, u32::MAX); 2 * leaves];
        for (i, &l) in losses.iter().enumerate() {
            node[leaves + i] = (l, i as u32);
        }
        for k in (1..leaves).rev() {
            node[k] = Self::better(node[2 * k], node[2 * k + 1]);
        }
        Self { leaves, node }
    }

    fn better(x: (f64, u32), y: (f64, u32)) -> (f64, u32) {
        if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) {
            y
        } else {
            x
        }
    }

    fn set(&mut self, i: usize, loss: f64) {
        let mut k = self.leaves + i;
        self.node[k].0 = loss;
        while k > 1 {
            k /= 2;
            self.node[k] = Self::better(self.node[2 * k], self.node[2 * k + 1]);
        }
    }

    fn min(&self) -> (f64, usize) {
        let (l, i) = self.node[1];
        (l, i as usize)
    }
}

fn merged(x: &Class, y: &Class) -> Class {
    Class {
        a: x.a + y.a,
        b: x.b + y.b,
    }
}

// Classes whose combined mass stays below this are pooled into one before the
// greedy pass. Pooling any outputs is degrading and leaves `Σb` unchanged.
const NEGLIGIBLE_MASS: f64 = 1e-18;

fn degrading_merge(mut classes: Vec<Class>, max_classes: usize) -> Vec<Class> {
    classes.retain(|c| c.mass() > 0.0);
    if classes.len() > max_classes {
        let cutoff = NEGLIGIBLE_MASS / classes.len() as f64;
        let mut pool = Class { a: 0.0, b: 0.0 };
        classes.retain(|c| {
            let keep = c.mass() >= cutoff;
            if !keep {
                pool.a += c.a;
                pool.b += c.b;
            }
            keep
        });
        if pool.mass() > 0.0 {
            classes.push(pool);
        }
    }
    let mut keyed: Vec<(f64, Class)> = classes.into_iter().map(|c| (c.ratio(), c)).collect();
    keyed.sort_unstable_by(|x, y| x.0.total_cmp(&y.0));

    // Equal likelihood ratios merge without loss.
    let mut coalesced: Vec<Class> = Vec::with_capacity(keyed.len());
    let mut last_ratio = f64::NAN;
    for (r, c) in keyed {
        match coalesced.last_mut() {
            Some(last) if r == last_ratio => {
                last.a += c.a;
                last.b += c.b;
            }
            _ => coalesced.push(c),
        }
        last_ratio = r;
    }
    if coalesced.len() <= max_classes {
        return coalesced;
    }

    let n = coalesced.len();
    let mut capacity: Vec<f64> = coalesced.iter().map(Class::capacity).collect();
    // Capacity of the class that merging `i` with its successor would give.
    let mut pair_capacity: Vec<f64> = (0..n - 1)
        .map(|i| merged(&coalesced[i], &coalesced[i + 1]).capacity())
        .collect();
    let losses: Vec<f64> = (0..n - 1)
        .map(|i| capacity[i] + capacity[i + 1] - pair_capacity[i])
        .collect();
    let mut tree = LossTree::new(&losses);
    let mut next: Vec<usize> = (1..=n).collect();
    let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
    let mut alive = vec![true; n];

    let mut remaining = n;
    while remaining > max_classes {
        let (_, l) = tree.min();
        let r = next[l];
        coalesced[l] = merged(&coalesced[l], &coalesced[r]);
        capacity[l] = pair_capacity[l];
        alive[r] = false;
        if r < n - 1 {
            tree.set(r, f64::INFINITY);
        }
        next[l] = next[r];
        if next[l] < n {
            prev[next[l]] = l;
        }
        remaining -= 1;

        let q = next[l];
        if q < n {
            pair_capacity[l] = merged(&coalesced[l], &coalesced[q]).capacity();
            tree.set(l, capacity[l] + capacity[q] - pair_capacity[l]);
        } else {
            tree.set(l, f64::INFINITY);
        }
        let p = prev[l];
        if p < n {
            pair_capacity[p] = merged(&coalesced[p], &coalesced[l]).capacity();
            tree.set(p, capacity[p] + capacity[l] - pair_capacity[p]);
        }
    }

    coalesced
        .into_iter()
        .zip(alive)
        .filter_map(|(c, keep)| keep.then_some(c))
        .collect()
}

/// Per-subchannel ML error-probability upper bounds in source index order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityVector {
    pub n_exp: u32,
    pub bounds: Vec<f64>,
}

impl ReliabilityVector {
    pub fn new(n_exp: u32, bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() != 1usize << n_exp {
            return Err(Error::Length {
                expected: 1 << n_exp,
                actual: bounds.len(),
            });
        }
        if let Some(b) = bounds.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::Domain {
                what: "bound",
                value: *b,
                domain: "[0, 1]",
            });
        }
        Ok(Self { n_exp, bounds })
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstructionParams {
    pub mu: usize,
    /// Largest intermediate alphabet (in conjugate classes) a transform may produce.
    pub class_budget: usize,
}

impl Default for ConstructionParams {
    fn default() -> Self {
        Self {
            mu: DEFAULT_MU,
            class_budget: DEFAULT_CLASS_BUDGET,
        }
    }
}

impl ConstructionParams {
    pub fn with_mu(mu: usize) -> Self {
        Self {
            mu,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mu < 2 || !self.mu.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "mu must be even and >= 2, got {}",
                self.mu
            )));
        }
        let k = self.mu / 2;
        let requested = k * (k + 1);
        if requested > self.class_budget {
            return Err(Error::Resource {
                requested,
                budget: self.class_budget,
            });
        }
        Ok(())
    }
}

/// Upper bounds on `P_e(W_N^{(i)})` for BSC(p) and `N = 2^n_exp`.
pub fn polarize_reliabilities(p: f64, n_exp: u32, mu: usize) -> Result<ReliabilityVector> {
    polarize_with(p, n_exp, ConstructionParams::with_mu(mu))
}

pub fn polarize_with(p: f64, n_exp: u32, params: ConstructionParams) -> Result<ReliabilityVector> {
    check_range("p", p, 0.0, 0.5, "[0, 0.5]")?;
    if !(1..=MAX_N_EXP).contains(&n_exp) {
        return Err(Error::Invalid(format!(
            "n_exp must lie in [1, {MAX_N_EXP}], got {n_exp}"
        )));
    }
    params.validate()?;
    let mut bounds = vec![0.0; 1 << n_exp];
    descend(bsc_channel(p)?, n_exp, params.mu, &mut bounds);
    for b in &mut bounds {
        *b = b.clamp(0.0, 0.5);
    }
    ReliabilityVector::new(n_exp, bounds)
}

// `out` covers the 2^levels leaves below `channel`; the lower half follows
// the minus branch.
fn descend(channel: SymmetricDiscreteChannel, levels: u32, mu: usize, out: &mut [f64]) {
    if levels == 1 {
        out[0] = channel.minus_error_probability();
        out[1] = channel.plus_error_probability();
        return;
    }
    if levels == 2 {
        // The last two levels are evaluated in closed form on the unmerged
        // children.
        for (child, leaves) in [channel.minus(), channel.plus()]
            .iter()
            .zip(out.chunks_mut(2))
        {
            leaves[0] = child.minus_error_probability();
            leaves[1] = child.plus_error_probability();
        }
        return;
    }
    let (lo, hi) = out.split_at_mut(out.len() / 2);
    if levels >= PARALLEL_DEPTH {
        rayon::join(
            || descend(channel.minus().degrade(mu), levels - 1, mu, lo),
            || descend(channel.plus().degrade(mu), levels - 1, mu, hi),
        );
    } else {
        descend(channel.minus().degrade(mu), levels - 1, mu, lo);
        descend(channel.plus().degrade(mu), levels - 1, mu, hi);
    }
}

/// Exact genie-aided ML error probability of subchannel `i`, by enumeration
/// of every source word and output pattern.
pub fn exact_subchannel_error(p: f64, n_exp: u32, i: usize) -> Result<f64> {
    check_range("p", p, 0.0, 0.5, "[0, 0.5]")?;
    if n_exp > MAX_EXACT_N_EXP {
        return Err(Error::TooLarge {
            n_exp,
            max: MAX_EXACT_N_EXP,
        });
    }
    let n = 1usize << n_exp;
    if i >= n {
        return Err(Error::Invalid(format!(
            "subchannel {i} out of range for N = {n}"
        )));
    }

    let words = 1usize << n;
    let codewords: Vec<usize> = (0..words)
        .map(|w| {
            let u: Vec<u8> = (0..n).map(|k| ((w >> k) & 1) as u8).collect();
            let x = polar_encode(&u).expect("power-of-two length");
            x.iter().enumerate().map(|(k, &b)| (b as usize) << k).sum()
        })
        .collect();
    let likelihood: Vec<f64> = (0..=n)
        .map(|d| p.powi(d as i32) * (1.0 - p).powi((n - d) as i32))
        .collect();

    // table[(y, u_0..u_{i-1})][u_i]
    let prefixes = 1usize << i;
    let mut table = vec![[0.0f64; 2]; words * prefixes];
    let weight = 1.0 / (1usize << (n - 1)) as f64;
    for (w, &x) in codewords.iter().enumerate() {
        let prefix = w & (prefixes - 1);
        let ui = (w >> i) & 1;
        for y in 0..words {
            let d = (x ^ y).count_ones() as usize;
            table[y * prefixes + prefix][ui] += weight * likelihood[d];
        }
    }
    Ok(0.5 * table.iter().map(|t| t[0].min(t[1])).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn bsc_examples() {
        assert_eq!(
            bsc_channel(0.0).unwrap().pairs(),
            vec![(1.0, 0.0), (0.0, 1.0)]
        );
        assert_eq!(
            bsc_channel(0.5).unwrap().pairs(),
            vec![(0.5, 0.5), (0.5, 0.5)]
        );
        assert_eq!(
            bsc_channel(0.1).unwrap().pairs(),
            vec![(0.9, 0.1), (0.1, 0.9)]
        );
        assert!(bsc_channel(0.6).is_err());
        assert!(bsc_channel(-0.1).is_err());
    }

    #[test]
    fn transforms_preserve_probability_mass() {
        let w = bsc_channel(0.13).unwrap().plus().degrade(16);
        for ch in [
            w.minus(),
            w.plus(),
            w.minus().degrade(8),
            w.plus().degrade(8),
        ] {
            let s0: f64 = ch.pairs().iter().map(|p| p.0).sum();
            let s1: f64 = ch.pairs().iter().map(|p| p.1).sum();
            assert!(approx(s0, 1.0, 1e-9) && approx(s1, 1.0, 1e-9));
        }
    }

    #[test]
    fn shortcut_error_probabilities_match_materialised_channels() {
        let w = bsc_channel(0.07)
            .unwrap()
            .plus()
            .degrade(64)
            .minus()
            .degrade(64);
        assert!(approx(
            w.minus_error_probability(),
            w.minus().error_probability(),
            1e-15
        ));
        assert!(approx(
            w.plus_error_probability(),
            w.plus().error_probability(),
            1e-15
        ));
    }

    #[test]
    fn merge_is_degrading() {
        let w = bsc_channel(0.11).unwrap().plus().plus().plus().plus();
        let full = w.clone();
        let small = w.degrade(8);
        assert!(small.output_size() <= 8);
        assert!(small.capacity() <= full.capacity() + 1e-12);
        assert!(approx(
            small.error_probability(),
            full.error_probability(),
            1e-12
        ));
    }

    #[test]
    fn one_level_example() {
        let r = polarize_reliabilities(0.1, 1, 4).unwrap();
        assert!(approx(r.bounds[0], 0.18, 1e-9));
        assert!(approx(r.bounds[1], 0.10, 1e-9));
        assert!(approx(
            exact_subchannel_error(0.1, 1, 0).unwrap(),
            0.18,
            1e-12
        ));
        assert!(approx(
            exact_subchannel_error(0.1, 1, 1).unwrap(),
            0.10,
            1e-12
        ));
    }

    #[test]
    fn extreme_channels_stay_extreme() {
        for n_exp in [1, 3, 6] {
            let r = polarize_reliabilities(0.0, n_exp, 256).unwrap();
            assert!(r.bounds.iter().all(|&b| b == 0.0));
            let r = polarize_reliabilities(0.5, n_exp, 256).unwrap();
            assert!(r.bounds.iter().all(|&b| approx(b, 0.5, 1e-12)));
        }
        for i in 0..4 {
            assert_eq!(exact_subchannel_error(0.0, 2, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn bounds_match_enumeration_at_small_n() {
        for n_exp in 1..=3 {
            for p in [0.05, 0.1, 0.2] {
                let r = polarize_reliabilities(p, n_exp, 256).unwrap();
                for (i, &bound) in r.bounds.iter().enumerate() {
                    let exact = exact_subchannel_error(p, n_exp, i).unwrap();
                    assert!(bound >= exact - 1e-12, "n={n_exp} p={p} i={i}");
                    assert!(bound <= exact + 1e-6, "n={n_exp} p={p} i={i}");
                }
            }
        }
    }

    #[test]
    fn merging_keeps_upper_bound_when_active() {
        // mu = 4 forces merges from the second level on.
        for p in [0.05, 0.2] {
            let r = polarize_reliabilities(p, 3, 4).unwrap();
            for (i, &bound) in r.bounds.iter().enumerate() {
                assert!(bound >= exact_subchannel_error(p, 3, i).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn total_error_grows_with_crossover() {
        let grid = [0.01, 0.03, 0.06, 0.1, 0.2, 0.3, 0.4, 0.5];
        let sums: Vec<f64> = grid
            .iter()
            .map(|&p| {
                polarize_reliabilities(p, 6, 64)
                    .unwrap()
                    .bounds
                    .iter()
                    .sum()
            })
            .collect();
        for w in sums.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn polarization_sharpens_with_length() {
        let fraction = |n_exp| {
            let r = polarize_reliabilities(0.05, n_exp, 64).unwrap();
            r.bounds.iter().filter(|&&b| b < 1e-6).count() as f64 / r.len() as f64
        };
        let (f6, f8, f10) = (fraction(6), fraction(8), fraction(10));
        assert!(f6 < f8 && f8 < f10, "{f6} {f8} {f10}");
    }

    #[test]
    fn parameter_errors() {
        assert!(polarize_reliabilities(0.1, 0, 256).is_err());
        assert!(polarize_reliabilities(0.1, 25, 256).is_err());
        assert!(polarize_reliabilities(0.1, 4, 3).is_err());
        assert!(matches!(
            polarize_reliabilities(0.1, 4, 8192),
            Err(Error::Resource { .. })
        ));
        assert!(matches!(
            exact_subchannel_error(0.1, 4, 0),
            Err(Error::TooLarge { .. })
        ));
        assert!(exact_subchannel_error(0.1, 2, 4).is_err());
    }
}
