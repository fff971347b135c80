//! GCD matrices gcd(n_k, n_l)^{2α} / (n_k n_l)^α: entries, quadratic forms and extreme eigenvalues.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numtheory::clamped_ln;
use crate::summation::Compensated;
use crate::types::{Alpha, CoefficientSequence, DilationSequence};

/// Largest N for which the dense solvers are offered.
pub const DENSE_THRESHOLD: usize = 512;

const MATERIALIZE_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcdMatrixSpec {
    pub alpha: Alpha,
    pub dilations: DilationSequence,
}

impl GcdMatrixSpec {
    pub fn new(alpha: Alpha, dilations: DilationSequence) -> Self {
        GcdMatrixSpec { alpha, dilations }
    }

    /// G_N: identity dilations 1..=N.
    pub fn identity(alpha: Alpha, n: usize) -> Result<Self> {
        Ok(GcdMatrixSpec { alpha, dilations: DilationSequence::identity(n)? })
    }

    pub fn n(&self) -> usize {
        self.dilations.len()
    }

    fn log_dilations(&self) -> Vec<f64> {
        self.dilations.as_slice().iter().map(|&n| (n as f64).ln()).collect()
    }

    #[inline]
    fn entry_raw(&self, ln: &[f64], i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let d = self.dilations.as_slice();
        let g = d[i].gcd(&d[j]) as f64;
        (self.alpha.get() * (2.0 * g.ln() - (ln[i] + ln[j]))).exp()
    }

    /// Dense row-major matrix.
    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let ln = self.log_dilations();
        DMatrix::from_fn(n, n, |i, j| self.entry_raw(&ln, i, j))
    }
}

/// gcd(n_k, n_l)^{2α} / (n_k n_l)^α for 1-based indices.
pub fn gcd_entry(spec: &GcdMatrixSpec, k: usize, l: usize) -> Result<f64> {
    let n = spec.n();
    for idx in [k, l] {
        if idx < 1 || idx > n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    let d = spec.dilations.as_slice();
    let (a, b) = (d[k - 1], d[l - 1]);
    if a == b {
        return Ok(1.0);
    }
    let g = a.gcd(&b) as f64;
    Ok((spec.alpha.get() * (2.0 * g.ln() - ((a as f64).ln() + (b as f64).ln()))).exp())
}

/// Σ_{k,l} c_k c_l gcd_entry(k, l), by direct compensated summation.
pub fn quadratic_form(spec: &GcdMatrixSpec, c: &CoefficientSequence) -> Result<f64> {
    c.check_len(spec.n())?;
    let ln = spec.log_dilations();
    let cv = &c.values;
    let rows: Vec<f64> = (0..spec.n())
        .into_par_iter()
        .map(|i| {
            if cv[i] == 0.0 {
                return 0.0;
            }
            let mut acc = Compensated::new();
            acc.add(cv[i]);
            for j in (i + 1)..spec.n() {
                if cv[j] != 0.0 {
                    acc.add(2.0 * spec.entry_raw(&ln, i, j) * cv[j]);
                }
            }
            cv[i] * acc.value()
        })
        .collect();
    Ok(crate::summation::sum(rows))
}

/// Matrix-vector product y = A v.
trait MatVec: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64], out: &mut [f64]);
}

// G_N via gcd(k,l)^{2α} = Σ_{d | gcd} J(d), J the Jordan-type totient d^{2α} Π_{p|d}(1 - p^{-2α}).
struct IdentityOperator {
    n: usize,
    k_pow: Vec<f64>,
    jordan: Vec<f64>,
}

impl IdentityOperator {
    fn new(alpha: f64, n: usize) -> Self {
        let mut spf = vec![0usize; n + 1];
        for i in 2..=n {
            if spf[i] == 0 {
                let mut j = i;
                while j <= n {
                    if spf[j] == 0 {
                        spf[j] = i;
                    }
                    j += i;
                }
            }
        }
        let mut jordan = vec![0.0; n + 1];
        if n >= 1 {
            jordan[1] = 1.0;
        }
        for d in 2..=n {
            let p = spf[d];
            let m = d / p;
            let pp = (p as f64).powf(2.0 * alpha);
            jordan[d] = if m % p == 0 { jordan[m] * pp } else { jordan[m] * (pp - 1.0) };
        }
        let k_pow = (0..=n).map(|k| if k == 0 { 0.0 } else { (k as f64).powf(-alpha) }).collect();
        IdentityOperator { n, k_pow, jordan }
    }
}

impl MatVec for IdentityOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let t: Vec<f64> = (1..=n)
            .into_par_iter()
            .map(|d| {
                let mut acc = Compensated::new();
                let mut m = d;
                while m <= n {
                    acc.add(self.k_pow[m] * v[m - 1]);
                    m += d;
                }
                acc.value()
            })
            .collect();
        let mut acc = vec![Compensated::new(); n + 1];
        for d in 1..=n {
            let w = self.jordan[d] * t[d - 1];
            let mut k = d;
            while k <= n {
                acc[k].add(w);
                k += d;
            }
        }
        for k in 1..=n {
            out[k - 1] = self.k_pow[k] * acc[k].value();
        }
    }
}

struct DenseOperator {
    n: usize,
    data: Vec<f64>,
}

impl MatVec for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let mut acc = Compensated::new();
            for (a, x) in row.iter().zip(v) {
                acc.add(a * x);
            }
            *o = acc.value();
        });
    }
}

struct OnTheFlyOperator<'a> {
    spec: &'a GcdMatrixSpec,
    ln: Vec<f64>,
}

impl MatVec for OnTheFlyOperator<'_> {
    fn dim(&self) -> usize {
        self.spec.n()
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let mut acc = Compensated::new();
            for (j, x) in v.iter().enumerate() {
                acc.add(self.spec.entry_raw(&self.ln, i, j) * x);
            }
            *o = acc.value();
        });
    }
}

fn operator(spec: &GcdMatrixSpec) -> Box<dyn MatVec + '_> {
    let n = spec.n();
    if spec.dilations.is_identity() {
        Box::new(IdentityOperator::new(spec.alpha.get(), n))
    } else if n <= MATERIALIZE_LIMIT {
        let ln = spec.log_dilations();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, x) in row.iter_mut().enumerate() {
                *x = spec.entry_raw(&ln, i, j);
            }
        });
        Box::new(DenseOperator { n, data })
    } else {
        Box::new(OnTheFlyOperator { spec, ln: spec.log_dilations() })
    }
}

/// y = A v for the matrix of `spec`.
pub fn matvec(spec: &GcdMatrixSpec, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != spec.n() {
        return Err(Error::LengthMismatch { expected: spec.n(), got: v.len() });
    }
    let mut out = vec![0.0; v.len()];
    operator(spec).apply(v, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub certified_interval: [f64; 2],
    pub converged: bool,
    /// One maximizing (or minimizing) unit eigenvector.
    #[serde(skip)]
    pub eigenvector: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { tolerance: 1e-10, max_iterations: 100_000 }
    }
}

fn norm(v: &[f64]) -> f64 {
    crate::summation::sum(v.iter().map(|x| x * x)).sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::summation::sum(a.iter().zip(b).map(|(x, y)| x * y))
}

fn power_iteration(op: &dyn MatVec, opts: PowerOptions) -> SpectralResult {
    let n = op.dim();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut w = vec![0.0; n];
    let mut best = (f64::INFINITY, 0.0, Vec::new());
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        op.apply(&v, &mut w);
        iterations += 1;
        let rho = dot(&v, &w);
        let r = norm(&v.iter().zip(&w).map(|(x, y)| y - rho * x).collect::<Vec<_>>());
        if r < best.0 {
            best = (r, rho, v.clone());
        }
        if r < opts.tolerance {
            converged = true;
            break;
        }
        let s = norm(&w);
        for (x, y) in v.iter_mut().zip(&w) {
            *x = y / s;
        }
    }
    let (residual, lambda, eigenvector) = best;
    SpectralResult {
        lambda,
        residual,
        iterations,
        certified_interval: [lambda, lambda + residual],
        converged,
        eigenvector,
    }
}

/// Largest eigenvalue by power iteration with a Rayleigh-quotient estimate.
pub fn largest_eigenvalue(spec: &GcdMatrixSpec) -> SpectralResult {
    largest_eigenvalue_with(spec, PowerOptions::default())
}

pub fn largest_eigenvalue_with(spec: &GcdMatrixSpec, opts: PowerOptions) -> SpectralResult {
    power_iteration(operator(spec).as_ref(), opts)
}

/// All eigenvalues (ascending) of the dense matrix, N <= DENSE_THRESHOLD.
pub fn dense_eigenvalues(spec: &GcdMatrixSpec) -> Result<Vec<f64>> {
    check_dense(spec)?;
    let eig = SymmetricEigen::new(spec.dense());
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

fn check_dense(spec: &GcdMatrixSpec) -> Result<()> {
    if spec.n() > DENSE_THRESHOLD {
        return Err(Error::Capability(format!(
            "dense eigensolver limited to N <= {DENSE_THRESHOLD}, got {}",
            spec.n()
        )));
    }
    Ok(())
}

/// Smallest eigenvalue from a full symmetric eigendecomposition.
pub fn min_eigenvalue(spec: &GcdMatrixSpec) -> Result<SpectralResult> {
    check_dense(spec)?;
    let a = spec.dense();
    let eig = SymmetricEigen::new(a.clone());
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty spectrum");
    let v = eig.eigenvectors.column(idx).into_owned();
    let v = &v / v.norm();
    let r = (&a * &v - &v * lambda).norm();
    Ok(SpectralResult {
        lambda,
        residual: r,
        iterations: 0,
        certified_interval: [lambda - r, lambda + r],
        converged: true,
        eigenvector: v.iter().copied().collect(),
    })
}

/// Cholesky pivots of the matrix; all positive iff every leading principal
/// submatrix is positive definite.
pub fn cholesky_pivots(spec: &GcdMatrixSpec) -> Result<Vec<f64>> {
    check_dense(spec)?;
    let a = spec.dense();
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let mut acc = Compensated::new();
        acc.add(a[(j, j)]);
        for k in 0..j {
            acc.add(-l[(j, k)] * l[(j, k)]);
        }
        let p = acc.value();
        pivots.push(p);
        if p <= 0.0 {
            break;
        }
        let d = p.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut acc = Compensated::new();
            acc.add(a[(i, j)]);
            for k in 0..j {
                acc.add(-l[(i, k)] * l[(j, k)]);
            }
            l[(i, j)] = acc.value() / d;
        }
    }
    Ok(pivots)
}

/// Σ_{k <= N²} b̂_k² with b̂_k = k^{-α} Σ_{d | k, M <= d <= N} d^α |c_d|.
pub fn hilberdink_majorant(c: &CoefficientSequence, alpha: Alpha, m_start: usize) -> Result<f64> {
    if c.start_index != 1 {
        return Err(Error::Parameter("majorant expects coefficients indexed from 1".into()));
    }
    let n = c.len();
    if m_start < 1 || m_start > n {
        return Err(Error::Parameter(format!("start index M = {m_start} outside 1..={n}")));
    }
    let a = alpha.get();
    let top = n * n;
    let mut acc = vec![Compensated::new(); top + 1];
    for d in m_start..=n {
        let w = (d as f64).powf(a) * c.values[d - 1].abs();
        if w == 0.0 {
            continue;
        }
        let mut k = d;
        while k <= top {
            acc[k].add(w);
            k += d;
        }
    }
    let mut total = Compensated::new();
    for (k, s) in acc.iter().enumerate().skip(1) {
        let b = s.value() * (k as f64).powf(-a);
        total.add(b * b);
    }
    Ok(total.value())
}

/// Normalized growth exponent log Λ · log log N / (log N)^{1-α}.
pub fn growth_exponent(lambda: f64, n: usize, alpha: Alpha) -> f64 {
    let l = clamped_ln(n as f64);
    lambda.ln() * clamped_ln(l) / l.powf(1.0 - alpha.get())
}

/// Writes the matrix as CSV, row-major, 17 significant digits.
pub fn export_csv<W: Write>(spec: &GcdMatrixSpec, mut out: W) -> std::io::Result<()> {
    let n = spec.n();
    let ln = spec.log_dilations();
    let header: Vec<String> = spec.dilations.as_slice().iter().map(|d| format!("n{d}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| format!("{:.16e}", spec.entry_raw(&ln, i, j))).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
