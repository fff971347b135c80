//! Monte-Carlo probes of pointwise behavior: partial-sum trajectories, running
//! maxima, the dyadic coupling of lacunary blocks with independent variables, and
//! Lyapunov / Kolmogorov-Smirnov diagnostics for their normalized sums.

use num_bigint::BigUint;
use num_integer::Integer;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::extremal::Th2Construction;
use crate::numtheory::{clamped_ln, ln_weyl_factor, WeylFactorParams, WeylVariant};
use crate::quadrature::{gl32, singular_power, Rule};
use crate::special_functions::{phase_of, phase_of_fixed, phase_of_fraction, riemann_zeta, FourierProfile};
use crate::summation::{sum, Compensated};
use crate::types::{CoefficientSequence, DilationSequence};

/// Draws per sample before giving up on a singular point.
pub const RESAMPLE_BUDGET: u64 = 100;

// phases closer than 2^-64 to an integer count as singular
const SINGULAR_FIXED: u128 = 1 << 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    pub samples: usize,
    /// block horizon M
    pub i_max: usize,
    /// binary digits of x available to the dyadic grids
    pub grid_depth: u64,
    /// cells on each side of a singular point treated by cellwise quadrature
    pub quad_cells: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { seed: 1, samples: 10_000, i_max: 16, grid_depth: 2048, quad_cells: 32 }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Parameter("samples must be at least 1".into()));
        }
        if self.i_max == 0 {
            return Err(Error::Parameter("i_max must be at least 1".into()));
        }
        if self.quad_cells == 0 {
            return Err(Error::Parameter("quad_cells must be at least 1".into()));
        }
        Ok(())
    }
}

/// Binary digits of one sampled x ∈ (0,1): bit 1 is the most significant bit of `words[0]`.
#[derive(Debug, Clone)]
pub struct SampleBits {
    words: Vec<u64>,
}

impl SampleBits {
    /// Counter-based draw: stream (attempt << 48) | index of ChaCha8 keyed by `seed`.
    pub fn draw(seed: u64, index: u64, attempt: u64, nbits: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((attempt << 48) | index);
        let n = nbits.div_ceil(64) as usize + 2;
        SampleBits { words: (0..n).map(|_| rng.next_u64()).collect() }
    }

    pub fn from_f64(x: f64) -> Self {
        let v = (x * 2f64.powi(128)) as u128;
        SampleBits { words: vec![(v >> 64) as u64, v as u64, 0, 0] }
    }

    pub fn bit_len(&self) -> u64 {
        64 * self.words.len() as u64
    }

    fn word(&self, i: usize) -> u64 {
        self.words.get(i).copied().unwrap_or(0)
    }

    /// {2^offset x} truncated to 128 bits, as a fixed-point fraction.
    pub fn window128(&self, offset: u64) -> u128 {
        let w = (offset / 64) as usize;
        let b = (offset % 64) as u32;
        let hi = ((self.word(w) as u128) << 64) | self.word(w + 1) as u128;
        if b == 0 {
            hi
        } else {
            (hi << b) | (self.word(w + 2) >> (64 - b)) as u128
        }
    }

    /// Bits offset+1 ..= offset+len as an integer.
    pub fn bits(&self, offset: u64, len: u64) -> BigUint {
        let mut v = BigUint::from(0u32);
        let mut done = 0;
        while done < len {
            let take = (len - done).min(64);
            let chunk = (self.window128(offset + done) >> (128 - take)) as u64;
            v = (v << take) | BigUint::from(chunk);
            done += take;
        }
        v
    }

    pub fn to_f64(&self) -> f64 {
        self.word(0) as f64 * 2f64.powi(-64) + self.word(1) as f64 * 2f64.powi(-128)
    }
}

fn is_singular_fixed(v: u128) -> bool {
    let s = v as i128;
    s.unsigned_abs() < SINGULAR_FIXED
}

/// Draws sample `index`, resampling while any of `check` reports a singular point.
fn draw_regular<F: Fn(&SampleBits) -> bool>(seed: u64, index: u64, nbits: u64, singular: F) -> Result<SampleBits> {
    for attempt in 0..RESAMPLE_BUDGET {
        let b = SampleBits::draw(seed, index, attempt, nbits);
        if !singular(&b) {
            return Ok(b);
        }
    }
    Err(Error::Sampling(format!("sample {index} stayed singular after {RESAMPLE_BUDGET} draws")))
}

fn partial_sums_fixed(profile: &FourierProfile, dilations: &[u64], c: &[f64], w: u128) -> Option<Vec<f64>> {
    let singular = profile.is_singular_at_zero();
    let mut acc = Compensated::new();
    let mut out = Vec::with_capacity(dilations.len());
    for (&n, &ck) in dilations.iter().zip(c) {
        let v = (n as u128).wrapping_mul(w);
        if singular && is_singular_fixed(v) {
            return None;
        }
        if ck != 0.0 {
            acc.add(ck * profile.eval_phase(phase_of_fixed(v)));
        }
        out.push(acc.value());
    }
    Some(out)
}

/// S_M(x) = Σ_{k<=M} c_k f(n_k x), M = 1..=upto.
pub fn trajectory(
    profile: &FourierProfile,
    dilations: &DilationSequence,
    c: &CoefficientSequence,
    x: f64,
    upto: usize,
) -> Result<Vec<f64>> {
    c.check_len(dilations.len())?;
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("x must lie in (0,1), got {x}")));
    }
    if upto > dilations.len() {
        return Err(Error::Parameter(format!("upto = {upto} exceeds N = {}", dilations.len())));
    }
    if !profile.has_pointwise() {
        return Err(Error::Capability("profile has no pointwise rule".into()));
    }
    let w = SampleBits::from_f64(x).window128(0);
    partial_sums_fixed(profile, &dilations.as_slice()[..upto], &c.values[..upto], w)
        .ok_or_else(|| Error::Sampling(format!("x = {x} hits a singularity of some f(n_k x)")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupSample {
    pub x: f64,
    pub max_abs: f64,
    pub final_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupReport {
    pub samples: usize,
    /// empirical ‖max_M |S_M|‖²
    pub max_sq_mean: f64,
    /// empirical ‖S_N‖² and its standard error
    pub final_sq_mean: f64,
    pub final_sq_std_error: f64,
    pub quantiles: Quantiles,
    pub per_sample: Vec<SupSample>,
}

fn quantiles(mut v: Vec<f64>) -> Quantiles {
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).floor() as usize];
    Quantiles { p50: q(0.5), p90: q(0.9), p99: q(0.99), max: v[v.len() - 1] }
}

/// Running maxima max_{M<=N} |S_M(x)| over sampled x.
pub fn sup_tracker(
    profile: &FourierProfile,
    dilations: &DilationSequence,
    c: &CoefficientSequence,
    config: &SimulationConfig,
) -> Result<SupReport> {
    config.validate()?;
    c.check_len(dilations.len())?;
    if !profile.has_pointwise() {
        return Err(Error::Capability("profile has no pointwise rule".into()));
    }
    let d = dilations.as_slice();
    let rows: Vec<Result<SupSample>> = (0..config.samples as u64)
        .into_par_iter()
        .map(|s| {
            let bits = draw_regular(config.seed, s, 128, |b| partial_sums_fixed(profile, d, &c.values, b.window128(0)).is_none())?;
            let sums = partial_sums_fixed(profile, d, &c.values, bits.window128(0)).unwrap_or_default();
            let max_abs = sums.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(SupSample { x: bits.to_f64(), max_abs, final_sum: *sums.last().unwrap_or(&0.0) })
        })
        .collect();
    let per_sample = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let n = per_sample.len() as f64;
    let max_sq_mean = sum(per_sample.iter().map(|r| r.max_abs * r.max_abs)) / n;
    let final_sq_mean = sum(per_sample.iter().map(|r| r.final_sum * r.final_sum)) / n;
    let var = sum(per_sample.iter().map(|r| (r.final_sum * r.final_sum - final_sq_mean).powi(2))) / (n - 1.0).max(1.0);
    Ok(SupReport {
        samples: per_sample.len(),
        max_sq_mean,
        final_sq_mean,
        final_sq_std_error: (var / n).sqrt(),
        quantiles: quantiles(per_sample.iter().map(|r| r.max_abs).collect()),
        per_sample,
    })
}

/// ‖max|S_M|‖² / (exp(K (log N)^{1-α}/log log N) Σ c_k²) with K the Th1 default.
pub fn maximal_ratio(report: &SupReport, profile: &FourierProfile, c: &CoefficientSequence) -> f64 {
    let n = c.len().max(1) as f64;
    let params = WeylFactorParams::th1_default(profile.alpha());
    let w = ln_weyl_factor(params, n.ln(), WeylVariant::Th1).exp();
    report.max_sq_mean / (w * c.norm_sq())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroReport {
    pub n: usize,
    pub averages: Vec<f64>,
    pub max_abs: f64,
}

/// (1/N) Σ_{k<=N} f(kx) for each x.
pub fn cesaro_average(profile: &FourierProfile, x_samples: &[f64], n: usize) -> Result<CesaroReport> {
    if n == 0 {
        return Err(Error::Parameter("N must be at least 1".into()));
    }
    if !profile.has_pointwise() {
        return Err(Error::Capability("profile has no pointwise rule".into()));
    }
    let ks: Vec<u64> = (1..=n as u64).collect();
    let ones = vec![1.0; n];
    let averages: Vec<f64> = x_samples
        .par_iter()
        .map(|&x| {
            if !(0.0..1.0).contains(&x) {
                return Err(Error::Domain(format!("x must lie in [0,1), got {x}")));
            }
            let w = SampleBits::from_f64(x).window128(0);
            let s = partial_sums_fixed(profile, &ks, &ones, w)
                .ok_or_else(|| Error::Sampling(format!("x = {x} hits a singularity")))?;
            Ok(s[n - 1] / n as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let max_abs = averages.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(CesaroReport { n, averages, max_abs })
}

/// Uniform sample points from the counter-based streams.
pub fn sample_points(seed: u64, count: usize) -> Vec<f64> {
    (0..count as u64).into_par_iter().map(|i| SampleBits::draw(seed, i, 0, 64).to_f64()).collect()
}

// ---------------------------------------------------------------------------
// Block coupling

/// Analytic moments of one lacunary block X = Σ_q f(q u) and its dyadic coarsening Y
/// at cell width h = 2^{-L} (u = {2^{S_i} x}).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockMoments {
    pub mean_y: f64,
    pub x_norm_sq: f64,
    pub y_norm_sq: f64,
    pub diff_norm_sq: f64,
    pub y_abs_moment: f64,
}

#[derive(Clone, Copy)]
struct BlockField<'a> {
    profile: &'a FourierProfile,
    qs: &'a [u128],
}

impl BlockField<'_> {
    // X and X' at local offset tau from the rational anchor num/den
    fn at(&self, num: u128, den: u128, tau: f64) -> (f64, f64) {
        let mut x = 0.0;
        let mut dx = 0.0;
        for &q in self.qs {
            let r = phase_of_fraction((q % den) * (num % den), den);
            let ph = phase_of(r + q as f64 * tau);
            x += self.profile.eval_phase(ph);
            dx += q as f64 * self.profile.derivative_phase(ph).unwrap_or(0.0);
        }
        (x, dx)
    }

    fn value(&self, num: u128, den: u128, tau: f64) -> f64 {
        self.qs
            .iter()
            .map(|&q| {
                let r = phase_of_fraction((q % den) * (num % den), den);
                self.profile.eval_phase(phase_of(r + q as f64 * tau))
            })
            .sum()
    }

    // mean over the cell [tau0, tau0 + h] around anchor num/den
    fn cell_mean(&self, num: u128, den: u128, tau0: f64, h: f64) -> Result<f64> {
        let mut acc = Compensated::new();
        for &q in self.qs {
            let r = phase_of_fraction((q % den) * (num % den), den);
            let start = phase_of(r + q as f64 * tau0);
            acc.add(self.profile.phase_integral(start, q as f64 * h)? / (q as f64 * h));
        }
        Ok(acc.value())
    }
}

fn graded_many<const K: usize, F: FnMut(f64) -> [f64; K]>(rule: &Rule, a: f64, b: f64, mut g: F) -> [f64; K] {
    let mut acc = [Compensated::new(); K];
    let mut lo = a;
    while lo < b {
        let hi = (2.0 * lo).min(b);
        let hi = if b - hi < 0.25 * (hi - lo) { b } else { hi };
        let h = hi - lo;
        for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
            let v = g(lo + h * t);
            for k in 0..K {
                acc[k].add(h * w * v[k]);
            }
        }
        lo = hi;
    }
    acc.map(|c| c.value())
}

// ∫_a^b g(t) dt with g singular like t^gamma at t = 0, 0 <= a < b
fn near_origin(rule: &Rule, a: f64, b: f64, gamma: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    if a == 0.0 {
        let p = singular_power(gamma);
        let mut acc = Compensated::new();
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let up = u.powf(p - 1.0);
            acc.add(w * p * up * g(b * up * u));
        }
        b * acc.value()
    } else {
        graded_many(rule, a, b, |t| [g(t)])[0]
    }
}

// reduced singular points t/q in [0,1) as (num, den), sorted
fn singular_points(qs: &[u128]) -> Vec<(u128, u128)> {
    let mut pts: Vec<(u128, u128)> = Vec::new();
    for &q in qs {
        for t in 0..q {
            let g = t.gcd(&q).max(1);
            pts.push((t / g, q / g));
        }
    }
    pts.sort_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)));
    pts.dedup();
    pts
}

fn pow2_mod(l: u64, m: u128) -> u128 {
    let mut r: u128 = 1 % m;
    let mut base: u128 = 2 % m;
    let mut e = l;
    while e > 0 {
        if e & 1 == 1 {
            r = r * base % m;
        }
        base = base * base % m;
        e >>= 1;
    }
    r
}

/// Moments of X = Σ_q f(q u) and of its conditional expectation on cells of width 2^{-level}.
///
/// Cells within `near` of a singular point t/q are integrated one by one with
/// singular-aware quadrature; between those windows Y is replaced by X and the
/// cell-averaging corrections are carried to second order in the cell width.
pub fn block_moments(profile: &FourierProfile, qs: &[u128], level: u64, near: usize, p: f64) -> Result<BlockMoments> {
    if !profile.is_singular_at_zero() {
        return Err(Error::Capability("block moments need an extremal profile".into()));
    }
    if qs.is_empty() || level == 0 || level > 1000 {
        return Err(Error::Parameter(format!("need a non-empty block and 1 <= level <= 1000, got {level}")));
    }
    let a = profile.alpha().get();
    if !(p >= 2.0 && p * (1.0 - a) < 1.0) {
        return Err(Error::Parameter(format!("moment order {p} outside [2, 1/(1-α))")));
    }
    let field = BlockField { profile, qs };
    let h = 2f64.powi(-(level as i32));
    let pts = singular_points(qs);
    let r = near as f64;
    let gamma2 = 2.0 * (a - 1.0);
    let rule = gl32();

    // anchor offsets ρ and gaps to the next point
    let rho: Vec<f64> = pts
        .iter()
        .map(|&(num, den)| {
            let pm = if level < 127 { (1u128 << level) % den } else { pow2_mod(level, den) };
            ((num % den) * pm % den) as f64 / den as f64
        })
        .collect();
    let n = pts.len();
    let gaps: Vec<f64> = (0..n)
        .map(|j| {
            let (n0, d0) = pts[j];
            let (n1, d1) = if j + 1 < n { pts[j + 1] } else { (pts[0].0 + pts[0].1, pts[0].1) };
            ((n1 * d0 - n0 * d1) as f64) / ((d0 * d1) as f64)
        })
        .collect();
    for j in 0..n {
        let jn = (j + 1) % n;
        let window = (r + 1.0 - rho[j]) * h + (r + rho[jn]) * h;
        if window >= gaps[j] {
            return Err(Error::Capability("cell width too coarse for the near-cell windows".into()));
        }
    }

    let per_point: Vec<Result<[f64; 8]>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let (num, den) = pts[j];
            let mut near_mean = Compensated::new();
            let mut near_y2 = Compensated::new();
            let mut near_yp = Compensated::new();
            let mut near_diff = Compensated::new();
            for c in -(near as i64)..=(near as i64) {
                let t0 = (c as f64 - rho[j]) * h;
                let t1 = t0 + h;
                let m = field.cell_mean(num, den, t0, h)?;
                let sq = |t: f64| {
                    let v = field.value(num, den, t) - m;
                    v * v
                };
                let diff = if t0 < 0.0 && t1 > 0.0 {
                    near_origin(rule, 0.0, -t0, gamma2, |t| sq(-t)) + near_origin(rule, 0.0, t1, gamma2, sq)
                } else if t1 <= 0.0 {
                    near_origin(rule, -t1, -t0, gamma2, |t| sq(-t))
                } else {
                    near_origin(rule, t0, t1, gamma2, sq)
                };
                near_mean.add(h * m);
                near_y2.add(h * m * m);
                near_yp.add(h * m.abs().powf(p));
                near_diff.add(diff);
            }
            // far piece after this point, split at its midpoint between the two anchors
            let jn = (j + 1) % n;
            let (num1, den1) = pts[jn];
            let start = (r + 1.0 - rho[j]) * h;
            let end = (r + rho[jn]) * h;
            let far = gaps[j] - start - end;
            let integrands = |num: u128, den: u128, sign: f64| {
                move |t: f64| {
                    let (x, dx) = field.at(num, den, sign * t);
                    let ax = x.abs();
                    [x, x * x, dx * dx, ax.powf(p), ax.powf(p - 2.0) * dx * dx]
                }
            };
            let left = graded_many(rule, start, start + 0.5 * far, integrands(num, den, 1.0));
            let right = graded_many(rule, end, end + 0.5 * far, integrands(num1, den1, -1.0));
            let f: Vec<f64> = (0..5).map(|k| left[k] + right[k]).collect();
            Ok([near_mean.value(), near_y2.value(), near_yp.value(), near_diff.value(), f[0], f[1], f[2], f[3] - p * (p - 1.0) / 24.0 * h * h * f[4]])
        })
        .collect();
    let rows = per_point.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |k: usize| sum(rows.iter().map(|r| r[k]));
    let far_dx2 = col(6);
    let mean_y = col(0) + col(4);
    let y_norm_sq = col(1) + col(5) - h * h / 12.0 * far_dx2;
    let y_abs_moment = col(2) + col(7);
    let diff_norm_sq = col(3) + h * h / 12.0 * far_dx2;

    let mut g = Compensated::new();
    for &q1 in qs {
        for &q2 in qs {
            let d = q1.gcd(&q2) as f64;
            g.add(((d / q1 as f64) * (d / q2 as f64)).powf(a));
        }
    }
    let x_norm_sq = riemann_zeta(2.0 * a) / 2.0 * g.value();
    Ok(BlockMoments { mean_y, x_norm_sq, y_norm_sq, diff_norm_sq, y_abs_moment })
}

/// Block-level coupling data for one Δ_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCoupling {
    pub index: usize,
    pub cardinality: usize,
    /// S_{i+1} - S_i: the coarsening level relative to 2^{S_i} x
    pub level: u64,
    pub d: f64,
    pub mean_y: f64,
    pub x_norm_sq: f64,
    pub y_norm_sq: f64,
    /// ‖X_i - Y_i‖
    pub diff_norm: f64,
    /// E|Y_i|^{2+δ}
    pub y_abs_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub delta: f64,
    pub blocks: Vec<BlockCoupling>,
}

fn check_grid(construction: &Th2Construction, config: &SimulationConfig) -> Result<usize> {
    config.validate()?;
    let m = config.i_max;
    if m > construction.i_max() {
        return Err(Error::Parameter(format!("i_max {m} exceeds the construction horizon {}", construction.i_max())));
    }
    let need = construction.s[m];
    if config.grid_depth < need {
        return Err(Error::Parameter(format!("grid_depth {} is below S_{} = {need}", config.grid_depth, m + 1)));
    }
    Ok(m)
}

/// X_i = Σ_{k∈Δ_i} f_α(k·) and Y_i = E(X_i | 2^{-S_{i+1}}-cells) for i <= config.i_max.
pub fn couple_independent(construction: &Th2Construction, config: &SimulationConfig) -> Result<CouplingReport> {
    let m = check_grid(construction, config)?;
    let profile = FourierProfile::sine_extremal(construction.params.alpha);
    let p = 2.0 + construction.params.delta;
    let blocks = (1..=m)
        .map(|i| {
            let qs = construction.block_odd_factors(i);
            let level = construction.s[i] - construction.s[i - 1];
            let bm = block_moments(&profile, &qs, level, config.quad_cells, p)?;
            Ok(BlockCoupling {
                index: i,
                cardinality: qs.len(),
                level,
                d: construction.d[i - 1],
                mean_y: bm.mean_y,
                x_norm_sq: bm.x_norm_sq,
                y_norm_sq: bm.y_norm_sq,
                diff_norm: bm.diff_norm_sq.max(0.0).sqrt(),
                y_abs_moment: bm.y_abs_moment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CouplingReport { delta: construction.params.delta, blocks })
}

/// (B_M, D_M, L_M) from the first M blocks.
pub fn lyapunov(report: &CouplingReport, m: usize) -> Result<(f64, f64, f64)> {
    if m == 0 || m > report.blocks.len() {
        return Err(Error::Parameter(format!("M = {m} outside 1..={}", report.blocks.len())));
    }
    let p = 2.0 + report.delta;
    let b = sum(report.blocks[..m].iter().map(|c| c.d * c.d * c.y_norm_sq));
    let d = sum(report.blocks[..m].iter().map(|c| c.d.powf(p) * c.y_abs_moment));
    if !(b > 0.0) {
        return Err(Error::Diagnostic("B_M vanishes".into()));
    }
    Ok((b, d, d / b.powf(p / 2.0)))
}

/// Per-sample values (X_i(x), Y_i(x)) of the first M blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

fn block_values(
    profile: &FourierProfile,
    construction: &Th2Construction,
    qs: &[Vec<u128>],
    bits: &SampleBits,
) -> Result<Option<BlockSample>> {
    let m = qs.len();
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    for i in 1..=m {
        let s = construction.s[i - 1];
        let level = construction.s[i] - s;
        let w = bits.window128(s);
        let h = 2f64.powi(-(level as i32));
        let mut x = 0.0;
        let mut y = Compensated::new();
        let cell_small = if level < 128 { Some(bits.window128(s) >> (128 - level)) } else { None };
        let cell_big = if cell_small.is_none() { Some(bits.bits(s, level)) } else { None };
        for &q in &qs[i - 1] {
            let v = q.wrapping_mul(w);
            if is_singular_fixed(v) {
                return Ok(None);
            }
            x += profile.eval_phase(phase_of_fixed(v));
            let start = match (cell_small, &cell_big) {
                (Some(c), _) => q.wrapping_mul(c).wrapping_shl((128 - level) as u32),
                (None, Some(c)) => {
                    let modulus = BigUint::from(1u32) << level;
                    let r = (BigUint::from(q) * c) % &modulus;
                    let top: BigUint = r >> (level - 128);
                    top.iter_u64_digits().take(2).enumerate().fold(0u128, |acc, (k, dgt)| acc | (dgt as u128) << (64 * k))
                }
                _ => unreachable!(),
            };
            let width = q as f64 * h;
            y.add(profile.phase_integral(phase_of_fixed(start), width)? / width);
        }
        xs.push(x);
        ys.push(y.value());
    }
    Ok(Some(BlockSample { x: xs, y: ys }))
}

/// Draws `config.samples` points and evaluates the first `config.i_max` blocks at each.
pub fn sample_blocks(construction: &Th2Construction, config: &SimulationConfig) -> Result<Vec<BlockSample>> {
    let m = check_grid(construction, config)?;
    let profile = FourierProfile::sine_extremal(construction.params.alpha);
    let qs: Vec<Vec<u128>> = (1..=m).map(|i| construction.block_odd_factors(i)).collect();
    let nbits = config.grid_depth.max(construction.s[m - 1] + 128);
    (0..config.samples as u64)
        .into_par_iter()
        .map(|s| {
            for attempt in 0..RESAMPLE_BUDGET {
                let bits = SampleBits::draw(config.seed, s, attempt, nbits);
                if let Some(v) = block_values(&profile, construction, &qs, &bits)? {
                    return Ok(v);
                }
            }
            Err(Error::Sampling(format!("sample {s} stayed singular after {RESAMPLE_BUDGET} draws")))
        })
        .collect()
}

/// Kolmogorov-Smirnov distance to the standard normal and its asymptotic p-value.
pub fn ks_normal(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Parameter("KS test needs at least one value".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = normal.cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok((d, kolmogorov_p_value(d, v.len())))
}

/// P(D_n > d) from the Kolmogorov distribution with Stephens' finite-n correction.
pub fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut acc = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        acc += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltDiagnostics {
    pub m: usize,
    pub delta: f64,
    pub b_m: f64,
    pub d_m: f64,
    pub l_m: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub sample_count: usize,
    /// empirical P(|Σ d_i Y_i| >= sqrt(B_M)/log M)
    pub exceedance: f64,
}

/// Lyapunov ratio and KS statistic of Σ_{i<=M} d_i Y_i / sqrt(B_M), M = config.i_max.
pub fn clt_diagnostics(construction: &Th2Construction, config: &SimulationConfig) -> Result<CltDiagnostics> {
    let report = couple_independent(construction, config)?;
    let samples = sample_blocks(construction, config)?;
    clt_from(&report, &samples, config.i_max)
}

/// Diagnostics for the first M blocks from precomputed moments and samples.
pub fn clt_from(report: &CouplingReport, samples: &[BlockSample], m: usize) -> Result<CltDiagnostics> {
    let (b, d, l) = lyapunov(report, m)?;
    let sb = b.sqrt();
    let z: Vec<f64> = samples
        .iter()
        .map(|s| sum(report.blocks[..m].iter().zip(&s.y).map(|(c, y)| c.d * y)) / sb)
        .collect();
    let (ks, pv) = ks_normal(&z)?;
    let thr = 1.0 / clamped_ln(m as f64);
    let exceed = z.iter().filter(|v| v.abs() >= thr).count() as f64 / z.len() as f64;
    Ok(CltDiagnostics {
        m,
        delta: report.delta,
        b_m: b,
        d_m: d,
        l_m: l,
        ks_statistic: ks,
        ks_p_value: pv,
        sample_count: z.len(),
        exceedance: exceed,
    })
}

/// Pearson correlation of two equally long samples.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = sum(a.iter().copied()) / n;
    let mb = sum(b.iter().copied()) / n;
    let cov = sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)));
    let va = sum(a.iter().map(|x| (x - ma).powi(2)));
    let vb = sum(b.iter().map(|y| (y - mb).powi(2)));
    cov / (va * vb).sqrt()
}
