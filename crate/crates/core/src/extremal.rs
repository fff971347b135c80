//! Block constructions Δ_i = 2^{b_i} · {squarefree products of the first primes}
//! with coefficients that make GCD sums (and hence dilated series) large.

use num_bigint::BigUint;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::{clamped_log2, first_primes};
use crate::special_functions::riemann_zeta;
use crate::summation::{sum, Compensated};
use crate::types::Alpha;

/// Th1 block counts above this are refused (2^i elements per block).
pub const TH1_MAX_BLOCKS: usize = 20;

/// Th2 horizon cap.
pub const TH2_MAX_BLOCKS: usize = 4096;

/// 2^{base} · Π_{r<=count} p_r^{w_r} for w ∈ {0,1}^count; element `mask` has w_r = bit r-1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquarefreeBlock {
    pub index: usize,
    pub base_two_exponent: u64,
    pub prime_count: usize,
}

impl SquarefreeBlock {
    pub fn len(&self) -> usize {
        1 << self.prime_count
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Squarefree part Π p_r^{w_r}.
    pub fn odd_factor(&self, mask: usize, primes: &[u64]) -> u128 {
        (0..self.prime_count).filter(|r| mask >> r & 1 == 1).map(|r| primes[r] as u128).product()
    }

    /// Exponent vector over p_1 = 2, p_2 = 3, ...
    pub fn exponents(&self, mask: usize) -> Vec<u64> {
        let mut e: Vec<u64> = (0..self.prime_count.max(1)).map(|r| (mask >> r & 1) as u64).collect();
        e[0] += self.base_two_exponent;
        e
    }

    pub fn ln_element(&self, mask: usize, ln_primes: &[f64]) -> f64 {
        let mut acc = self.base_two_exponent as f64 * std::f64::consts::LN_2;
        for (r, lp) in ln_primes.iter().enumerate().take(self.prime_count) {
            if mask >> r & 1 == 1 {
                acc += lp;
            }
        }
        acc
    }

    pub fn element(&self, mask: usize, primes: &[u64]) -> BigUint {
        BigUint::from(self.odd_factor(mask, primes)) << self.base_two_exponent
    }

    fn element_u128(&self, mask: usize, primes: &[u64]) -> Option<u128> {
        let q = self.odd_factor(mask, primes);
        if self.base_two_exponent >= 128 || q.leading_zeros() as u64 <= self.base_two_exponent {
            return None;
        }
        Some(q << self.base_two_exponent)
    }

    /// 2^count Π (1 + p_r^{-α}).
    pub fn closed_gcd_sum(&self, alpha: Alpha, primes: &[u64]) -> f64 {
        let a = alpha.get();
        let mut v = (self.len()) as f64;
        for &p in primes.iter().take(self.prime_count) {
            v *= 1.0 + (p as f64).powf(-a);
        }
        v
    }

    /// c^T G c over the block using the Kronecker factorization of G into 2x2 factors.
    pub fn quadratic_form(&self, alpha: Alpha, primes: &[u64], c: &[f64]) -> Result<f64> {
        if c.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), got: c.len() });
        }
        let a = alpha.get();
        let mut v = c.to_vec();
        for (r, &p) in primes.iter().enumerate().take(self.prime_count) {
            let t = (p as f64).powf(-a);
            let bit = 1usize << r;
            for m in 0..v.len() {
                if m & bit == 0 {
                    let (x, y) = (v[m], v[m | bit]);
                    v[m] = x + t * y;
                    v[m | bit] = t * x + y;
                }
            }
        }
        Ok(sum(c.iter().zip(&v).map(|(x, y)| x * y)))
    }
}

/// (direct pairwise sum, closed form) of Σ_{k,l∈Δ} gcd(k,l)^{2α}/(kl)^α.
pub fn block_gcd_identity(block: &SquarefreeBlock, alpha: Alpha) -> (f64, f64) {
    let primes = first_primes(block.prime_count.max(1));
    let a = alpha.get();
    let n = block.len();
    let closed = block.closed_gcd_sum(alpha, &primes);
    let ints: Option<Vec<u128>> = (0..n).map(|m| block.element_u128(m, &primes)).collect();
    let direct: f64 = match ints {
        Some(v) => {
            let lns: Vec<f64> = v.iter().map(|&x| ln_u128(x)).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut acc = Compensated::new();
                    for j in 0..n {
                        let g = v[i].gcd(&v[j]);
                        acc.add((a * (2.0 * ln_u128(g) - lns[i] - lns[j])).exp());
                    }
                    acc.value()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .sum()
        }
        None => {
            let lnp: Vec<f64> = primes.iter().map(|&p| (p as f64).ln()).collect();
            let exps: Vec<Vec<u64>> = (0..n).map(|m| block.exponents(m)).collect();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut acc = Compensated::new();
                    for j in 0..n {
                        let d: f64 = exps[i]
                            .iter()
                            .zip(&exps[j])
                            .zip(&lnp)
                            .map(|((&e, &f), lp)| e.abs_diff(f) as f64 * lp)
                            .sum();
                        acc.add((-a * d).exp());
                    }
                    acc.value()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .sum()
        }
    };
    (direct, closed)
}

fn ln_u128(x: u128) -> f64 {
    let hi = 128 - x.leading_zeros();
    if hi <= 53 {
        (x as f64).ln()
    } else {
        let shift = hi - 53;
        ((x >> shift) as f64).ln() + shift as f64 * std::f64::consts::LN_2
    }
}

fn clamped_logs(ln_k: f64) -> (f64, f64) {
    let l = ln_k.max(1.0);
    (l, l.ln().max(1.0))
}

/// Common view of the two constructions.
pub trait BlockFamily {
    fn alpha(&self) -> Alpha;
    fn blocks(&self) -> &[SquarefreeBlock];
    fn primes(&self) -> &[u64];
    /// Coefficients of block i (1-based), in mask order.
    fn block_coefficients(&self, i: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Th1Construction {
    pub alpha: Alpha,
    pub eps: f64,
    pub eta: f64,
    pub blocks: Vec<SquarefreeBlock>,
    #[serde(skip)]
    pub coeffs: Vec<Vec<f64>>,
    #[serde(skip)]
    primes: Vec<u64>,
}

/// Δ_i = 2^{2i}·{squarefree products of p_1..p_i}, i = 1..=i_max.
pub fn th1_blocks(alpha: Alpha, eps: f64, i_max: usize) -> Result<Th1Construction> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0,1), got {eps}")));
    }
    if i_max == 0 {
        return Err(Error::Parameter("i_max must be positive".into()));
    }
    if i_max > TH1_MAX_BLOCKS {
        return Err(Error::Capability(format!("Th1 supports i_max <= {TH1_MAX_BLOCKS}, got {i_max}")));
    }
    let a = alpha.get();
    let eta = (1.0 - 2.0 * eps) / (1.0 + eps);
    let primes = first_primes(i_max);
    let lnp: Vec<f64> = primes.iter().map(|&p| (p as f64).ln()).collect();
    let blocks: Vec<SquarefreeBlock> = (1..=i_max)
        .map(|i| SquarefreeBlock { index: i, base_two_exponent: 2 * i as u64, prime_count: i })
        .collect();
    let coeffs = blocks
        .iter()
        .map(|b| {
            let i = b.index as f64;
            let scale = 2f64.powf(-i / 2.0) / i;
            (0..b.len())
                .map(|m| {
                    let (l, ll) = clamped_logs(b.ln_element(m, &lnp));
                    scale * (-(eta / (2.0 * (1.0 - a))) * l.powf(1.0 - a) / ll).exp()
                })
                .collect()
        })
        .collect();
    let c = Th1Construction { alpha, eps, eta, blocks, coeffs, primes };
    c.check_disjoint()?;
    Ok(c)
}

impl Th1Construction {
    fn check_disjoint(&self) -> Result<()> {
        // elements of Δ_i have 2-adic valuation 2i or 2i+1
        for b in &self.blocks {
            let lo = b.base_two_exponent;
            for m in [0usize, 1] {
                let v = b.exponents(m)[0];
                if v != lo + m as u64 || v / 2 != b.index as u64 {
                    return Err(Error::InvariantViolation(format!("block {} is not 2-adically separated", b.index)));
                }
            }
        }
        Ok(())
    }

    /// Partial sums over i <= M of Σ_{k∈Δ_i} c_k² exp((η/(1-α)) (log k)^{1-α}/log log k).
    pub fn weyl_weighted_mass(&self, m: usize) -> Result<Vec<f64>> {
        check_horizon(m, self.blocks.len())?;
        let a = self.alpha.get();
        let lnp: Vec<f64> = self.primes.iter().map(|&p| (p as f64).ln()).collect();
        let mut acc = Compensated::new();
        let mut out = Vec::with_capacity(m);
        for (b, c) in self.blocks.iter().zip(&self.coeffs).take(m) {
            for (mask, ck) in c.iter().enumerate() {
                let (l, ll) = clamped_logs(b.ln_element(mask, &lnp));
                acc.add(ck * ck * ((self.eta / (1.0 - a)) * l.powf(1.0 - a) / ll).exp());
            }
            out.push(acc.value());
        }
        Ok(out)
    }
}

impl BlockFamily for Th1Construction {
    fn alpha(&self) -> Alpha {
        self.alpha
    }
    fn blocks(&self) -> &[SquarefreeBlock] {
        &self.blocks
    }
    fn primes(&self) -> &[u64] {
        &self.primes
    }
    fn block_coefficients(&self, i: usize) -> Vec<f64> {
        self.coeffs[i - 1].clone()
    }
}

/// Parameters of the lacunary construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Th2Params {
    pub alpha: Alpha,
    pub delta: f64,
    pub beta: f64,
    pub k1: f64,
}

/// Margin subtracted from the closed-form K₁.
pub const K1_MARGIN: f64 = 0.01;

impl Th2Params {
    /// δ at the midpoint of its admissible range (capped below 1), β = 0.9 δ/(2+δ),
    /// K₁ = ((2α-1)/(2α ln 2))^{1-α}/(1-α) - 0.01.
    pub fn default_for(alpha: Alpha) -> Self {
        let a = alpha.get();
        let delta = 0.5 * (1.0 / (1.0 - a) - 2.0).min(1.0);
        let beta = 0.9 * delta / (2.0 + delta);
        Th2Params { alpha, delta, beta, k1: default_k1(alpha) }
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alpha.get();
        if !(self.delta > 0.0 && self.delta < 1.0 && 2.0 + self.delta < 1.0 / (1.0 - a)) {
            return Err(Error::Parameter(format!(
                "delta must satisfy 0 < delta < 1 and 2 + delta < 1/(1-alpha), got {}",
                self.delta
            )));
        }
        if !(self.beta > 0.0 && self.beta < self.delta / (2.0 + self.delta)) {
            return Err(Error::Parameter(format!(
                "beta must lie in (0, delta/(2+delta)) = (0, {}), got {}",
                self.delta / (2.0 + self.delta),
                self.beta
            )));
        }
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(Error::Parameter(format!("K1 must be positive, got {}", self.k1)));
        }
        Ok(())
    }
}

pub fn default_k1(alpha: Alpha) -> f64 {
    let a = alpha.get();
    ((2.0 * a - 1.0) / (2.0 * a * std::f64::consts::LN_2)).powf(1.0 - a) / (1.0 - a) - K1_MARGIN
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Th2Construction {
    pub params: Th2Params,
    pub eta: f64,
    /// A(i), i = 1..=i_max
    pub a: Vec<usize>,
    /// S_i, i = 1..=i_max+1
    pub s: Vec<u64>,
    /// T_i, i = 1..=i_max
    pub t: Vec<u64>,
    pub blocks: Vec<SquarefreeBlock>,
    /// d_i, i = 1..=i_max
    pub d: Vec<f64>,
    /// Γ_i as 1-based inclusive index ranges into the flattened sequence
    pub gamma: Vec<(usize, usize)>,
    #[serde(skip)]
    primes: Vec<u64>,
    #[serde(skip)]
    order: Vec<Vec<usize>>,
}

/// ⌈log₂ P⌉ for P >= 1.
fn ceil_log2(p: &BigUint) -> u64 {
    let bits = p.bits();
    if bits == 0 {
        return 0;
    }
    let pow2 = p.count_ones() == 1;
    if pow2 {
        bits - 1
    } else {
        bits
    }
}

/// The recursive schedule S_i, T_i, A(i) and the blocks Δ_i ⊂ [2^{S_i}, 2^{T_i}].
pub fn th2_construction(params: Th2Params, i_max: usize) -> Result<Th2Construction> {
    params.validate()?;
    if i_max == 0 {
        return Err(Error::Parameter("i_max must be positive".into()));
    }
    if i_max > TH2_MAX_BLOCKS {
        return Err(Error::Capability(format!("Th2 supports i_max <= {TH2_MAX_BLOCKS}, got {i_max}")));
    }
    let al = params.alpha.get();
    let eta = 12.0 / (2.0 * al - 1.0);
    let a: Vec<usize> = (1..=i_max)
        .map(|i| if i == 1 { 1 } else { (params.beta * clamped_log2(i as f64)).ceil() as usize })
        .collect();
    let amax = *a.iter().max().unwrap();
    let primes = first_primes(amax.max(1));
    let mut s = vec![2u64];
    let mut t = Vec::with_capacity(i_max);
    for i in 1..=i_max {
        let prod: BigUint = primes.iter().take(a[i - 1]).map(|&p| BigUint::from(p)).product();
        let ti = s[i - 1] + ceil_log2(&prod);
        t.push(ti);
        s.push(ti + (eta * clamped_log2(i as f64)).ceil() as u64);
    }
    let blocks: Vec<SquarefreeBlock> = (1..=i_max)
        .map(|i| SquarefreeBlock { index: i, base_two_exponent: s[i - 1], prime_count: a[i - 1] })
        .collect();
    let d: Vec<f64> = (1..=i_max)
        .map(|i| {
            let (l, ll) = clamped_logs((i as f64).ln());
            (i as f64).powf(-params.beta / 2.0 - 0.5) / l * (-params.k1 * l.powf(1.0 - al) / (2.0 * ll.powf(al))).exp()
        })
        .collect();
    let mut gamma = Vec::with_capacity(i_max);
    let mut order = Vec::with_capacity(i_max);
    let mut next = 1usize;
    for b in &blocks {
        let mut masks: Vec<usize> = (0..b.len()).collect();
        masks.sort_by_key(|&m| b.odd_factor(m, &primes));
        order.push(masks);
        gamma.push((next, next + b.len() - 1));
        next += b.len();
    }
    let c = Th2Construction { params, eta, a, s, t, blocks, d, gamma, primes, order };
    c.check_structure()?;
    Ok(c)
}

impl Th2Construction {
    pub fn i_max(&self) -> usize {
        self.blocks.len()
    }

    fn check_structure(&self) -> Result<()> {
        for (idx, b) in self.blocks.iter().enumerate() {
            let i = idx + 1;
            let hi: BigUint = self.primes.iter().take(b.prime_count).map(|&p| BigUint::from(p)).product();
            if ceil_log2(&hi) + self.s[idx] != self.t[idx] || self.t[idx] >= self.s[idx + 1] {
                return Err(Error::InvariantViolation(format!("schedule broken at block {i}")));
            }
            let card = b.len() as f64;
            let ib = (i as f64).powf(self.params.beta);
            if i > 1 && !(card >= ib * (1.0 - 1e-12) && card <= 2.0 * ib * (1.0 + 1e-12)) {
                return Err(Error::InvariantViolation(format!("|Δ_{i}| = {card} outside [i^β, 2i^β]")));
            }
        }
        Ok(())
    }

    /// Masks of block i (1-based) in increasing element order.
    pub fn sorted_masks(&self, i: usize) -> &[usize] {
        &self.order[i - 1]
    }

    /// Squarefree parts q of block i in increasing order (elements are 2^{S_i} q).
    pub fn block_odd_factors(&self, i: usize) -> Vec<u128> {
        let b = &self.blocks[i - 1];
        self.order[i - 1].iter().map(|&m| b.odd_factor(m, &self.primes)).collect()
    }

    /// n_k, k = 1..=Σ|Δ_i|, ascending.
    pub fn dilations(&self) -> Vec<BigUint> {
        self.blocks
            .iter()
            .zip(&self.order)
            .flat_map(|(b, ord)| ord.iter().map(move |&m| b.element(m, &self.primes)))
            .collect()
    }

    /// ln n_k, k = 1..
    pub fn ln_dilations(&self) -> Vec<f64> {
        let lnp: Vec<f64> = self.primes.iter().map(|&p| (p as f64).ln()).collect();
        self.blocks
            .iter()
            .zip(&self.order)
            .flat_map(|(b, ord)| ord.iter().map(|&m| b.ln_element(m, &lnp)).collect::<Vec<_>>())
            .collect()
    }

    /// c_k = d_i for k ∈ Γ_i.
    pub fn coefficients(&self) -> Vec<f64> {
        self.blocks.iter().zip(&self.d).flat_map(|(b, &di)| std::iter::repeat(di).take(b.len())).collect()
    }

    /// Partial sums over i <= M of Σ_{k∈Γ_i} c_k² exp(K₁(log i)^{1-α}/(log log i)^α), and
    /// the matching partial sums of 2 Σ i^{-1}(log i)^{-2}.
    pub fn weyl_weighted_mass(&self, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        check_horizon(m, self.blocks.len())?;
        let al = self.params.alpha.get();
        let mut acc = Compensated::new();
        let mut bound = Compensated::new();
        let mut out = Vec::with_capacity(m);
        let mut bnd = Vec::with_capacity(m);
        for i in 1..=m {
            let (l, ll) = clamped_logs((i as f64).ln());
            let w = (self.params.k1 * l.powf(1.0 - al) / ll.powf(al)).exp();
            let di = self.d[i - 1];
            acc.add(self.blocks[i - 1].len() as f64 * di * di * w);
            bound.add(2.0 / (i as f64 * l * l));
            out.push(acc.value());
            bnd.push(bound.value());
        }
        Ok((out, bnd))
    }

    /// ln n_k / (k ln k) over the materialized prefix (logs clamped below at 1).
    pub fn magnitude_ratios(&self) -> Vec<f64> {
        self.ln_dilations()
            .iter()
            .enumerate()
            .map(|(k0, &ln)| {
                let k = (k0 + 1) as f64;
                ln / (k * k.ln().max(1.0))
            })
            .collect()
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }
}

impl BlockFamily for Th2Construction {
    fn alpha(&self) -> Alpha {
        self.params.alpha
    }
    fn blocks(&self) -> &[SquarefreeBlock] {
        &self.blocks
    }
    fn primes(&self) -> &[u64] {
        &self.primes
    }
    fn block_coefficients(&self, i: usize) -> Vec<f64> {
        vec![self.d[i - 1]; self.blocks[i - 1].len()]
    }
}

fn check_horizon(m: usize, i_max: usize) -> Result<()> {
    if m == 0 || m > i_max {
        return Err(Error::Parameter(format!("need 1 <= M <= i_max = {i_max}, got {m}")));
    }
    Ok(())
}

/// Per-block norm contributions ζ(2α)/2 · c_iᵀ G_{Δ_i} c_i for i <= M.
pub fn block_norm_increments<C: BlockFamily>(construction: &C, m: usize) -> Result<Vec<f64>> {
    check_horizon(m, construction.blocks().len())?;
    let alpha = construction.alpha();
    let z = riemann_zeta(2.0 * alpha.get()) / 2.0;
    construction.blocks()[..m]
        .iter()
        .map(|b| Ok(z * b.quadratic_form(alpha, construction.primes(), &construction.block_coefficients(b.index))?))
        .collect()
}

/// Cumulative Σ_{i<=M} of the block norm contributions, M = 1..=m.
pub fn divergence_partial_sums<C: BlockFamily>(construction: &C, m: usize) -> Result<Vec<f64>> {
    let inc = block_norm_increments(construction, m)?;
    let mut acc = Compensated::new();
    Ok(inc
        .into_iter()
        .map(|x| {
            acc.add(x);
            acc.value()
        })
        .collect())
}

/// Serialized form: parameters, schedule, factored elements and coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionRecord {
    pub kind: ConstructionKind,
    pub alpha: Alpha,
    pub i_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub th2: Option<Th2Params>,
    pub eta: f64,
    pub primes: Vec<u64>,
    pub blocks: Vec<BlockRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionKind {
    Th1,
    Th2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub index: usize,
    pub base_two_exponent: u64,
    pub prime_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
    /// exponents over the first primes, element by element
    pub elements: Vec<Vec<u64>>,
    pub coefficients: Vec<f64>,
}

impl Th1Construction {
    pub fn to_record(&self) -> ConstructionRecord {
        ConstructionRecord {
            kind: ConstructionKind::Th1,
            alpha: self.alpha,
            i_max: self.blocks.len(),
            eps: Some(self.eps),
            th2: None,
            eta: self.eta,
            primes: self.primes.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(&self.coeffs)
                .map(|(b, c)| BlockRecord {
                    index: b.index,
                    base_two_exponent: b.base_two_exponent,
                    prime_count: b.prime_count,
                    s: None,
                    t: None,
                    elements: (0..b.len()).map(|m| b.exponents(m)).collect(),
                    coefficients: c.clone(),
                })
                .collect(),
        }
    }
}

impl Th2Construction {
    pub fn to_record(&self) -> ConstructionRecord {
        ConstructionRecord {
            kind: ConstructionKind::Th2,
            alpha: self.params.alpha,
            i_max: self.blocks.len(),
            eps: None,
            th2: Some(self.params),
            eta: self.eta,
            primes: self.primes.clone(),
            blocks: self
                .blocks
                .iter()
                .zip(&self.order)
                .enumerate()
                .map(|(idx, (b, ord))| BlockRecord {
                    index: b.index,
                    base_two_exponent: b.base_two_exponent,
                    prime_count: b.prime_count,
                    s: Some(self.s[idx]),
                    t: Some(self.t[idx]),
                    elements: ord.iter().map(|&m| b.exponents(m)).collect(),
                    coefficients: vec![self.d[idx]; b.len()],
                })
                .collect(),
        }
    }
}

/// A reloaded construction, rebuilt from its parameters and checked against the record.
#[derive(Debug, Clone)]
pub enum Construction {
    Th1(Th1Construction),
    Th2(Th2Construction),
}

impl Construction {
    pub fn to_json(&self) -> Result<String> {
        let rec = match self {
            Construction::Th1(c) => c.to_record(),
            Construction::Th2(c) => c.to_record(),
        };
        serde_json::to_string_pretty(&rec).map_err(|e| Error::Parameter(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: ConstructionRecord =
            serde_json::from_str(s).map_err(|e| Error::Parameter(format!("invalid construction JSON: {e}")))?;
        let rebuilt = match rec.kind {
            ConstructionKind::Th1 => {
                let eps = rec.eps.ok_or_else(|| Error::Parameter("th1 record needs eps".into()))?;
                Construction::Th1(th1_blocks(rec.alpha, eps, rec.i_max)?)
            }
            ConstructionKind::Th2 => {
                let p = rec.th2.ok_or_else(|| Error::Parameter("th2 record needs th2 parameters".into()))?;
                Construction::Th2(th2_construction(p, rec.i_max)?)
            }
        };
        let again = match &rebuilt {
            Construction::Th1(c) => c.to_record(),
            Construction::Th2(c) => c.to_record(),
        };
        if again != rec {
            return Err(Error::InvariantViolation("construction record does not match its parameters".into()));
        }
        Ok(rebuilt)
    }
}
