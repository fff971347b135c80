//! The primary acceptance suite: eleven identity and trend checks at desk scale.

use std::time::Instant;

use gcdlab::dilated_series::{franel_exact, norm_squared, parseval_norm, quadrature_norm, DEFAULT_PARSEVAL_J};
use gcdlab::extremal::{
    block_gcd_identity, block_norm_increments, divergence_partial_sums, th1_blocks, th2_construction, Th2Params,
};
use gcdlab::gcd_spectra::{
    cholesky_pivots, dense_eigenvalues, growth_exponent, hilberdink_majorant, largest_eigenvalue, quadratic_form,
    GcdMatrixSpec,
};
use gcdlab::numtheory::{gronwall_bound, primorial, sigma};
use gcdlab::simulate::{clt_from, couple_independent, sample_blocks, SimulationConfig};
use gcdlab::special_functions::{coarsening_error, FourierProfile};
use gcdlab::{Alpha, CoefficientSequence, DilationSequence, Error, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const ALPHAS: [f64; 3] = [0.6, 0.75, 0.9];

/// Seed of every randomized criterion.
pub const SUITE_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {}: {} {} ({:.2}s of {}s) {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.seconds,
            self.budget_seconds,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

pub const CRITERIA: [(&str, f64); 11] = [
    ("franel-landau exactness", 5.0),
    ("gcd-norm identity", 120.0),
    ("block identity", 30.0),
    ("spectral sanity", 120.0),
    ("hilberdink majorant", 60.0),
    ("growth window", 300.0),
    ("gronwall envelope", 1.0),
    ("coarsening decay", 60.0),
    ("coupling and clt", 600.0),
    ("divergence trend", 60.0),
    ("reproducibility", 120.0),
];

type Check = (bool, String);

fn alpha(a: f64) -> Alpha {
    Alpha::new(a).expect("suite alpha")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn franel_landau() -> Result<Check> {
    let mut count = 0;
    for k in 1..=30 {
        for l in 1..=30 {
            franel_exact(k, l)?;
            count += 1;
        }
    }
    Ok((true, format!("{count} pairs exact")))
}

pub fn gcd_norm_identity() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut outside = 0;
    let mut worst_quad = 0.0f64;
    let mut quad_cases = 0;
    for t in 0..200 {
        let a = alpha(ALPHAS[t % 3]);
        let n = rng.gen_range(1..=16usize);
        let mut d: Vec<u64> = sample(&mut rng, 100, n).into_iter().map(|v| v as u64 + 1).collect();
        d.sort_unstable();
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d = DilationSequence::new(d)?;
        let c = CoefficientSequence::new(c)?;
        let profile = if t % 2 == 0 { FourierProfile::sine_extremal(a) } else { FourierProfile::cosine_extremal(a) };
        let exact = norm_squared(&profile, &d, &c)?.lower;
        if !parseval_norm(&profile, &d, &c, DEFAULT_PARSEVAL_J)?.contains(exact, 1e-12) {
            outside += 1;
        }
        if n <= 8 {
            let q = quadrature_norm(&profile, &d, &c)?.midpoint();
            worst_quad = worst_quad.max(rel(q, exact));
            quad_cases += 1;
        }
    }
    Ok((
        outside == 0 && worst_quad <= 1e-4,
        format!("outside parseval enclosure: {outside}/200; worst quadrature rel error {worst_quad:.3e} over {quad_cases}"),
    ))
}

pub fn block_identity() -> Result<Check> {
    let mut worst = 0.0f64;
    for a in ALPHAS {
        let c = th1_blocks(alpha(a), 0.1, 12)?;
        for b in &c.blocks {
            let (direct, closed) = block_gcd_identity(b, alpha(a));
            worst = worst.max(rel(direct, closed));
        }
    }
    Ok((worst <= 1e-12, format!("worst rel gap {worst:.3e}")))
}

pub fn spectral_sanity() -> Result<Check> {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in ALPHAS {
        let al = alpha(a);
        // positive Cholesky pivots of G_300 certify every leading G_N, N <= 300
        let piv = cholesky_pivots(&GcdMatrixSpec::identity(al, 300)?)?;
        let min_piv = piv.iter().copied().fold(f64::INFINITY, f64::min);
        let min_eig = dense_eigenvalues(&GcdMatrixSpec::identity(al, 300)?)?[0];
        ok &= min_piv > 0.0 && min_eig > 0.0;

        let l2 = largest_eigenvalue(&GcdMatrixSpec::identity(al, 2)?).lambda;
        let gap2 = (l2 - (1.0 + 2f64.powf(-a))).abs();
        ok &= gap2 <= 1e-10;

        let mut prev = 0.0;
        let mut drops = 0;
        for n in 2..=256 {
            let top = *dense_eigenvalues(&GcdMatrixSpec::identity(al, n)?)?.last().unwrap();
            if top < prev * (1.0 - 1e-13) {
                drops += 1;
            }
            prev = top;
        }
        ok &= drops == 0;

        let spec = GcdMatrixSpec::identity(al, 64)?;
        let pow = largest_eigenvalue(&spec).lambda;
        let dense = *dense_eigenvalues(&spec)?.last().unwrap();
        let gap64 = rel(pow, dense);
        ok &= gap64 <= 1e-8;
        notes.push(format!(
            "α={a}: min pivot {min_piv:.3e}, min eig {min_eig:.3e}, |Λ(G_2)-(1+2^-α)| {gap2:.1e}, drops {drops}, power/dense {gap64:.1e}"
        ));
    }
    Ok((ok, notes.join("; ")))
}

pub fn hilberdink() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for a in ALPHAS {
        let al = alpha(a);
        let spec = GcdMatrixSpec::identity(al, 200)?;
        for _ in 0..100 {
            let c = CoefficientSequence::new((0..200).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
            let major = hilberdink_majorant(&c, al, 1)?;
            let form = quadratic_form(&spec, &c.abs())?;
            if major < form * (1.0 - 1e-12) {
                violations += 1;
            }
            min_ratio = min_ratio.min(major / form);
        }
    }
    Ok((violations == 0, format!("{violations} violations in 300; min majorant/form {min_ratio:.4}")))
}

/// Normalized growth exponents of Λ(G_N), N = 2^4..2^12, α = 0.75.
pub fn growth_exponents() -> Result<Vec<(usize, f64, f64)>> {
    let al = alpha(0.75);
    (4..=12)
        .map(|e| {
            let n = 1usize << e;
            let r = largest_eigenvalue(&GcdMatrixSpec::identity(al, n)?);
            let lo = growth_exponent(r.certified_interval[0], n, al);
            let hi = growth_exponent(r.certified_interval[1], n, al);
            Ok((n, lo, hi))
        })
        .collect()
}

/// 3/(1-α) + 4/√(2α-1) at α = 0.75.
pub const GROWTH_CAP: f64 = 17.657;

pub fn growth_window() -> Result<Check> {
    let g = growth_exponents()?;
    let positive = g.iter().all(|v| v.1 > 0.0);
    let monotone = g.windows(2).all(|w| w[1].2 >= w[0].1);
    let capped = g.iter().all(|v| v.2 <= GROWTH_CAP);
    let shown: Vec<String> = g.iter().map(|(n, lo, _)| format!("{n}:{lo:.5}")).collect();
    Ok((positive && monotone && capped, format!("exponents {}", shown.join(" "))))
}

pub fn gronwall() -> Result<Check> {
    let mut worst = 0.0f64;
    for r in 1..=12 {
        let k: u64 = primorial(r).try_into().map_err(|_| Error::Capability("primorial overflow".into()))?;
        for s in [0.25, 0.5, 0.75] {
            worst = worst.max(sigma(-s, k) / gronwall_bound(s, k)?);
        }
    }
    Ok((worst <= 1.5, format!("max ratio {worst:.4}")))
}

/// (k, m, error, bound) for every cell of the coarsening grid at one α.
pub fn coarsening_table(a: f64) -> Result<Vec<(u64, u64, f64, f64)>> {
    let profile = FourierProfile::sine_extremal(alpha(a));
    let e = (2.0 * a - 1.0) / 6.0;
    let c = coarsening_error(&profile, 2, 16)? / (2.0f64 / 16.0).powf(e);
    let mut out = Vec::new();
    for k in 1..=8u64 {
        for j in 4..=10 {
            let m = 1u64 << j;
            let err = coarsening_error(&profile, k, m)?;
            out.push((k, m, err, c * (k as f64 / m as f64).powf(e)));
        }
    }
    Ok(out)
}

pub fn coarsening_decay() -> Result<Check> {
    let mut ok = true;
    let mut notes = Vec::new();
    for a in ALPHAS {
        let t = coarsening_table(a)?;
        let bad: Vec<&(u64, u64, f64, f64)> = t.iter().filter(|r| r.2 > r.3 * (1.0 + 1e-12)).collect();
        let mut ks: Vec<u64> = bad.iter().map(|r| r.0).collect();
        ks.dedup();
        let worst = t.iter().map(|r| r.2 / r.3).fold(0.0, f64::max);
        ok &= bad.is_empty();
        notes.push(format!("α={a}: {} of {} exceed, k in {ks:?}, worst error/bound {worst:.3}", bad.len(), t.len()));
    }
    Ok((ok, notes.join("; ")))
}

pub fn coupling_clt() -> Result<Check> {
    let c = th2_construction(Th2Params::default_for(alpha(0.75)), 16)?;
    let cfg = SimulationConfig { seed: SUITE_SEED, samples: 10_000, i_max: 16, ..Default::default() };
    let report = couple_independent(&c, &cfg)?;
    let mean_ok = report.blocks.iter().all(|b| b.mean_y.abs() <= 1e-8);
    let worst_mean = report.blocks.iter().map(|b| b.mean_y.abs()).fold(0.0, f64::max);
    let b2 = &report.blocks[1];
    let cfit = b2.diff_norm * 4.0 / b2.cardinality as f64;
    let decay_bad: Vec<usize> = report
        .blocks
        .iter()
        .filter(|b| b.diff_norm > cfit * (b.index as f64).powi(-2) * b.cardinality as f64 * (1.0 + 1e-9))
        .map(|b| b.index)
        .collect();
    let samples = sample_blocks(&c, &cfg)?;
    let diags = [4, 8, 16].map(|m| clt_from(&report, &samples, m));
    let [d4, d8, d16] = diags;
    let (d4, d8, d16) = (d4?, d8?, d16?);
    let lyap_ok = d4.l_m > d8.l_m && d8.l_m > d16.l_m;
    let ks_ok = d16.ks_p_value >= 0.01;
    Ok((
        mean_ok && decay_bad.is_empty() && lyap_ok && ks_ok,
        format!(
            "max |E Y_i| {worst_mean:.1e}; decay violations at i {decay_bad:?}; L_M {:.4} {:.4} {:.4}; KS D {:.4} p {:.4}",
            d4.l_m, d8.l_m, d16.l_m, d16.ks_statistic, d16.ks_p_value
        ),
    ))
}

pub fn divergence_trend() -> Result<Check> {
    let c = th1_blocks(alpha(0.75), 0.1, 20)?;
    let sums = divergence_partial_sums(&c, 20)?;
    let inc = block_norm_increments(&c, 20)?;
    let increasing = sums.windows(2).all(|w| w[1] > w[0]);
    let scaled: Vec<f64> = inc.iter().enumerate().map(|(i, v)| v * ((i + 1) * (i + 1)) as f64).collect();
    let tail_up = scaled[10..].windows(2).all(|w| w[1] > w[0]);
    let mass = *c.weyl_weighted_mass(20)?.last().unwrap();
    let target: f64 = (1..=20).map(|i| 1.0 / (i * i) as f64).sum();
    let gap = rel(mass, target);
    Ok((
        increasing && tail_up && gap <= 1e-10,
        format!(
            "partial sum at 20 {:.6}; increments·i² over 11..20 from {:.6} to {:.6}; mass rel gap {gap:.1e}",
            sums[19], scaled[10], scaled[19]
        ),
    ))
}

/// Simulation output serialized under two thread counts.
pub fn reproducibility() -> Result<Check> {
    let c = th2_construction(Th2Params::default_for(alpha(0.75)), 8)?;
    let cfg = SimulationConfig { seed: SUITE_SEED, samples: 2000, i_max: 8, ..Default::default() };
    let run = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Capability(e.to_string()))?;
        pool.install(|| {
            let r = couple_independent(&c, &cfg)?;
            let s = sample_blocks(&c, &cfg)?;
            let d = clt_from(&r, &s, 8)?;
            serde_json::to_string(&(r, d)).map_err(|e| Error::Parameter(e.to_string()))
        })
    };
    let one = run(1)?;
    let four = run(4)?;
    Ok((one == four, format!("{} bytes, identical: {}", one.len(), one == four)))
}

pub fn run_criterion(id: usize) -> CriterionResult {
    let (name, budget) = CRITERIA[id - 1];
    let start = Instant::now();
    let out = match id {
        1 => franel_landau(),
        2 => gcd_norm_identity(),
        3 => block_identity(),
        4 => spectral_sanity(),
        5 => hilberdink(),
        6 => growth_window(),
        7 => gronwall(),
        8 => coarsening_decay(),
        9 => coupling_clt(),
        10 => divergence_trend(),
        _ => reproducibility(),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = match out {
        Ok((p, d)) => (p, d),
        Err(e) => (false, format!("error: {e}")),
    };
    let in_time = seconds < budget;
    CriterionResult {
        id,
        name: name.to_string(),
        passed: passed && in_time,
        detail: if in_time { detail } else { format!("{detail}; over time budget") },
        seconds,
        budget_seconds: budget,
    }
}

/// Runs the listed criteria (all when empty) in order.
pub fn run_suite(ids: &[usize]) -> Result<SuiteReport> {
    let ids: Vec<usize> = if ids.is_empty() { (1..=CRITERIA.len()).collect() } else { ids.to_vec() };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA.len()) {
        return Err(Error::Parameter(format!("no criterion {bad}; expected 1..={}", CRITERIA.len())));
    }
    let criteria: Vec<CriterionResult> = ids.into_iter().map(run_criterion).collect();
    Ok(SuiteReport { suite: "primary".into(), passed: criteria.iter().all(|c| c.passed), criteria })
}
