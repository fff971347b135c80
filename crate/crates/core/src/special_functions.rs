//! Hurwitz zeta, the extremal profiles f_α, f̄_α, f_1 and conditional coarsening.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::{self, gl16, gl32, gl8, Rule};
use crate::summation::Compensated;
use crate::types::Alpha;

// B_{2k} / (2k)! for k = 1..=9
const BERNOULLI_SCALED: [f64; 9] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30240.0,
    -1.0 / 1209600.0,
    1.0 / 47900160.0,
    -691.0 / 1307674368000.0,
    1.0 / 74724249600.0,
    -3617.0 / 10670622842880000.0,
    43867.0 / 5109094217170944000.0,
];

const EM_TERMS: usize = 8;

struct HurwitzEval {
    value: f64,
    magnitude: f64,
    remainder: f64,
}

// Euler-Maclaurin with 8 correction terms; valid for any real s != 1 and x > 0.
fn hurwitz_em(s: f64, x: f64, tol: f64) -> HurwitzEval {
    debug_assert!(x > 0.0 && s != 1.0);
    let mut poch = 1.0;
    for i in 0..(2 * EM_TERMS + 1) {
        poch *= s + i as f64;
    }
    let c9 = (BERNOULLI_SCALED[EM_TERMS] * poch).abs();
    let decay = s + 2.0 * EM_TERMS as f64 + 1.0;
    let a_min = if c9 > 0.0 { (c9 / tol).powf(1.0 / decay) } else { 0.0 };
    let a_min = a_min.max(3.0 + s.abs());
    let m = (a_min - x).ceil().max(0.0) as usize;

    let mut acc = Compensated::new();
    let mut magnitude = 0.0;
    for n in (0..m).rev() {
        let t = (n as f64 + x).powf(-s);
        acc.add(t);
        magnitude += t.abs();
    }
    let a = m as f64 + x;
    let a_s = a.powf(-s);
    let head = a * a_s / (s - 1.0);
    acc.add(head);
    acc.add(0.5 * a_s);
    magnitude += head.abs() + 0.5 * a_s;
    let inv_a2 = 1.0 / (a * a);
    let mut t = s * a_s / a;
    for (k, b) in BERNOULLI_SCALED.iter().take(EM_TERMS).enumerate() {
        let term = b * t;
        acc.add(term);
        magnitude += term.abs();
        let j = 2.0 * k as f64 + 1.0;
        t *= (s + j) * (s + j + 1.0) * inv_a2;
    }
    let remainder = (BERNOULLI_SCALED[EM_TERMS] * t).abs();
    HurwitzEval { value: acc.value(), magnitude, remainder }
}

const INTERNAL_TOL: f64 = 1e-17;

/// ζ(s, x) for real s != 1 and x > 0, used internally at full double precision.
#[inline]
pub fn hurwitz(s: f64, x: f64) -> f64 {
    hurwitz_em(s, x, INTERNAL_TOL).value
}

/// Argument pair of the Hurwitz zeta function with s in (0,1), x in (0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurwitzArg {
    pub s: f64,
    pub x: f64,
}

impl HurwitzArg {
    pub fn new(s: f64, x: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::Domain(format!("s must lie in (0,1), got {s}")));
        }
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("x must lie in (0,1), got {x}")));
        }
        Ok(HurwitzArg { s, x })
    }
}

pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// ζ(s, x) to absolute tolerance `tol`.
pub fn hurwitz_zeta(arg: HurwitzArg, tol: f64) -> Result<f64> {
    let HurwitzArg { s, x } = HurwitzArg::new(arg.s, arg.x)?;
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    let ev = hurwitz_em(s, x, tol.min(1e-3) * 0.1);
    let rounding = 4.0 * f64::EPSILON * ev.magnitude;
    if rounding + ev.remainder > tol {
        return Err(Error::Accuracy(format!(
            "ζ({s}, {x}) cannot reach tolerance {tol}: rounding bound {rounding:e}"
        )));
    }
    Ok(ev.value)
}

/// Riemann ζ(s) for real s != 1 (analytic continuation for s < 1).
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s != 1.0, "pole at s = 1");
    hurwitz(s, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Sine,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ExtremalConsts {
    alpha: f64,
    s: f64,
    k_sin: f64,
    k_cos: f64,
}

impl ExtremalConsts {
    fn new(alpha: Alpha) -> Self {
        let a = alpha.get();
        let base = (2.0 * PI).powf(a) / (4.0 * gamma(a));
        ExtremalConsts {
            alpha: a,
            s: 1.0 - a,
            k_sin: base / (PI * a / 2.0).sin(),
            k_cos: base / (PI * a / 2.0).cos(),
        }
    }

    // value at signed phase offset δ ∈ [-1/2, 1/2], δ != 0
    fn value(&self, parity: Parity, d: f64) -> f64 {
        let y = d.abs();
        match parity {
            Parity::Sine => {
                let v = self.k_sin * (hurwitz(self.s, y) - hurwitz(self.s, 1.0 - y));
                if d < 0.0 {
                    -v
                } else {
                    v
                }
            }
            Parity::Cosine => self.k_cos * (hurwitz(self.s, y) + hurwitz(self.s, 1.0 - y)),
        }
    }

    fn derivative(&self, parity: Parity, d: f64) -> f64 {
        let y = d.abs();
        let s2 = 2.0 - self.alpha;
        match parity {
            Parity::Sine => -self.k_sin * self.s * (hurwitz(s2, y) + hurwitz(s2, 1.0 - y)),
            Parity::Cosine => {
                let v = -self.k_cos * self.s * (hurwitz(s2, y) - hurwitz(s2, 1.0 - y));
                if d < 0.0 {
                    -v
                } else {
                    v
                }
            }
        }
    }

    // ∫_0^b for 0 <= b <= 1/2
    fn primitive_from_zero(&self, parity: Parity, b: f64) -> f64 {
        if b == 0.0 {
            return 0.0;
        }
        let (k, sign) = match parity {
            Parity::Sine => (self.k_sin, -1.0),
            Parity::Cosine => (self.k_cos, 1.0),
        };
        let smooth = quadrature::integrate(gl8(), 0.0, b, |y| hurwitz(self.s, 1.0 + y) + sign * hurwitz(self.s, 1.0 - y));
        k * (b.powf(self.alpha) / self.alpha + smooth)
    }

    // ∫_a^b over signed offsets with -1/2 <= a < b <= 1/2
    fn segment_integral(&self, parity: Parity, a: f64, b: f64) -> f64 {
        let w = b - a;
        let dist = if a < 0.0 && b > 0.0 { 0.0 } else { a.abs().min(b.abs()) };
        if w <= 1e-7 * dist {
            return w * self.value(parity, a + 0.5 * w);
        }
        if dist > 2.0 * w {
            return quadrature::integrate(gl8(), a, b, |y| self.value(parity, y));
        }
        let p = |x: f64| -> f64 {
            let v = self.primitive_from_zero(parity, x.abs());
            match parity {
                // f odd, so its primitive from 0 is even
                Parity::Sine => v,
                Parity::Cosine => v.copysign(x),
            }
        };
        p(b) - p(a)
    }
}

/// Signed offset of a real number from its nearest integer, in [-1/2, 1/2].
#[inline]
pub fn phase_of(x: f64) -> f64 {
    x - x.round()
}

/// Signed offset of `num/den` from the nearest integer.
#[inline]
pub fn phase_of_fraction(num: u128, den: u128) -> f64 {
    let r = num % den;
    if 2 * r <= den {
        r as f64 / den as f64
    } else {
        -((den - r) as f64 / den as f64)
    }
}

/// Signed offset of the 128-bit fixed-point fraction `v / 2^128`.
#[inline]
pub fn phase_of_fixed(v: u128) -> f64 {
    (v as i128) as f64 * 2f64.powi(-128)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    SineExtremal,
    CosineExtremal,
    Bernoulli,
    Custom,
}

type CoeffFn = dyn Fn(u64) -> (f64, f64) + Send + Sync;
type TailFn = dyn Fn(u64, u64) -> f64 + Send + Sync;
type PointFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
struct CustomRule {
    coeffs: Arc<CoeffFn>,
    tail_sq: Option<Arc<TailFn>>,
    pointwise: Option<Arc<PointFn>>,
}

/// A mean-zero periodic function given by its sine/cosine coefficients
/// f(x) = Σ_j a_j sin(2πjx) + b_j cos(2πjx).
#[derive(Clone)]
pub struct FourierProfile {
    alpha: Alpha,
    kind: ProfileKind,
    bound_constant: f64,
    consts: ExtremalConsts,
    custom: Option<CustomRule>,
}

impl fmt::Debug for FourierProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierProfile")
            .field("alpha", &self.alpha.get())
            .field("kind", &self.kind)
            .field("bound_constant", &self.bound_constant)
            .finish()
    }
}

impl FourierProfile {
    fn builtin(alpha: Alpha, kind: ProfileKind) -> Self {
        FourierProfile { alpha, kind, bound_constant: 1.0, consts: ExtremalConsts::new(alpha), custom: None }
    }

    /// f_α with a_j = j^{-α}.
    pub fn sine_extremal(alpha: Alpha) -> Self {
        Self::builtin(alpha, ProfileKind::SineExtremal)
    }

    /// f̄_α with b_j = j^{-α}.
    pub fn cosine_extremal(alpha: Alpha) -> Self {
        Self::builtin(alpha, ProfileKind::CosineExtremal)
    }

    /// f_1(x) = π(1/2 - {x}), a_j = 1/j. Lies in C_α for every α.
    pub fn bernoulli(alpha: Alpha) -> Self {
        Self::builtin(alpha, ProfileKind::Bernoulli)
    }

    pub fn custom<F>(alpha: Alpha, bound_constant: f64, coeffs: F) -> Self
    where
        F: Fn(u64) -> (f64, f64) + Send + Sync + 'static,
    {
        FourierProfile {
            alpha,
            kind: ProfileKind::Custom,
            bound_constant,
            consts: ExtremalConsts::new(alpha),
            custom: Some(CustomRule { coeffs: Arc::new(coeffs), tail_sq: None, pointwise: None }),
        }
    }

    /// The zero function.
    pub fn zero(alpha: Alpha) -> Self {
        Self::custom(alpha, 1.0, |_| (0.0, 0.0)).with_pointwise(|_| 0.0).with_tail_sq(|_, _| 0.0)
    }

    /// Replaces the generic tail bound Σ_{j>T} (a_{jr}² + b_{jr}²) for a custom profile.
    pub fn with_tail_sq<F>(mut self, tail: F) -> Self
    where
        F: Fn(u64, u64) -> f64 + Send + Sync + 'static,
    {
        if let Some(c) = self.custom.as_mut() {
            c.tail_sq = Some(Arc::new(tail));
        }
        self
    }

    /// Attaches a pointwise evaluator for a custom profile.
    pub fn with_pointwise<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if let Some(c) = self.custom.as_mut() {
            c.pointwise = Some(Arc::new(f));
        }
        self
    }

    pub fn alpha(&self) -> Alpha {
        self.alpha
    }

    pub fn kind(&self) -> ProfileKind {
        self.kind
    }

    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    /// (a_j, b_j) for j >= 1.
    pub fn coefficient(&self, j: u64) -> (f64, f64) {
        let jf = j as f64;
        match self.kind {
            ProfileKind::SineExtremal => (jf.powf(-self.alpha.get()), 0.0),
            ProfileKind::CosineExtremal => (0.0, jf.powf(-self.alpha.get())),
            ProfileKind::Bernoulli => (1.0 / jf, 0.0),
            ProfileKind::Custom => (self.custom.as_ref().unwrap().coeffs)(j),
        }
    }

    /// Number of nonzero coefficient families (1 for the built-in profiles, 2 for custom).
    fn families(&self) -> f64 {
        if self.kind == ProfileKind::Custom {
            2.0
        } else {
            1.0
        }
    }

    /// Upper bound on Σ_{j>T} (a_{jr}² + b_{jr}²).
    pub fn coefficient_tail_sq(&self, r: u64, truncation: u64) -> f64 {
        if let Some(t) = self.custom.as_ref().and_then(|c| c.tail_sq.as_ref()) {
            return t(r, truncation);
        }
        let a = self.alpha.get();
        let c = self.bound_constant;
        self.families() * c * c * (r as f64).powf(-2.0 * a) * (truncation as f64).powf(1.0 - 2.0 * a) / (2.0 * a - 1.0)
    }

    /// Number of families times C², so that a_j² + b_j² <= this · j^{-2α}.
    pub fn coefficient_sq_bound(&self) -> f64 {
        self.families() * self.bound_constant * self.bound_constant
    }

    /// Spot-checks |a_j|, |b_j| <= C j^{-α} for j up to `horizon`.
    pub fn check_bound(&self, horizon: u64) -> Result<()> {
        let a = self.alpha.get();
        for j in 1..=horizon {
            let (x, y) = self.coefficient(j);
            let lim = self.bound_constant * (j as f64).powf(-a) * (1.0 + 1e-12);
            if x.abs() > lim || y.abs() > lim {
                return Err(Error::Parameter(format!("coefficient bound violated at j = {j}")));
            }
        }
        Ok(())
    }

    /// ‖f‖₂² = ½ Σ (a_j² + b_j²); exact for the built-in profiles.
    pub fn l2_norm_sq(&self) -> f64 {
        match self.kind {
            ProfileKind::SineExtremal | ProfileKind::CosineExtremal => riemann_zeta(2.0 * self.alpha.get()) / 2.0,
            ProfileKind::Bernoulli => PI * PI / 12.0,
            ProfileKind::Custom => {
                let mut acc = Compensated::new();
                for j in 1..=100_000u64 {
                    let (a, b) = self.coefficient(j);
                    acc.add(a * a + b * b);
                }
                0.5 * acc.value()
            }
        }
    }

    pub fn has_pointwise(&self) -> bool {
        self.kind != ProfileKind::Custom || self.custom.as_ref().is_some_and(|c| c.pointwise.is_some())
    }

    /// Value at signed phase offset δ ∈ [-1/2, 1/2]. Infinite at δ = 0 for the
    /// extremal profiles; NaN for custom profiles without a pointwise rule.
    #[inline]
    pub fn eval_phase(&self, d: f64) -> f64 {
        match self.kind {
            ProfileKind::SineExtremal => {
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    self.consts.value(Parity::Sine, d)
                }
            }
            ProfileKind::CosineExtremal => {
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    self.consts.value(Parity::Cosine, d)
                }
            }
            ProfileKind::Bernoulli => {
                if d >= 0.0 {
                    PI * (0.5 - d)
                } else {
                    PI * (-0.5 - d)
                }
            }
            ProfileKind::Custom => match self.custom.as_ref().and_then(|c| c.pointwise.as_ref()) {
                Some(f) => f(if d < 0.0 && d + 1.0 < 1.0 { d + 1.0 } else { d }),
                None => f64::NAN,
            },
        }
    }

    /// True when the profile is unbounded at integer points.
    pub fn is_singular_at_zero(&self) -> bool {
        matches!(self.kind, ProfileKind::SineExtremal | ProfileKind::CosineExtremal)
    }

    /// Pointwise value at real x (periodic extension).
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("x must be finite, got {x}")));
        }
        if !self.has_pointwise() {
            return Err(Error::Capability("custom profile has no pointwise rule".into()));
        }
        let d = phase_of(x);
        if d == 0.0 && self.is_singular_at_zero() {
            return Err(Error::Domain(format!("profile is unbounded at the integer point {x}")));
        }
        Ok(self.eval_phase(d))
    }

    /// Derivative at phase δ for the extremal profiles and f_1 (away from its jump).
    pub fn derivative_phase(&self, d: f64) -> Option<f64> {
        match self.kind {
            ProfileKind::SineExtremal => Some(self.consts.derivative(Parity::Sine, d)),
            ProfileKind::CosineExtremal => Some(self.consts.derivative(Parity::Cosine, d)),
            ProfileKind::Bernoulli => Some(-PI),
            ProfileKind::Custom => None,
        }
    }

    fn segment_integral(&self, a: f64, b: f64) -> Result<f64> {
        Ok(match self.kind {
            ProfileKind::SineExtremal => self.consts.segment_integral(Parity::Sine, a, b),
            ProfileKind::CosineExtremal => self.consts.segment_integral(Parity::Cosine, a, b),
            ProfileKind::Bernoulli => {
                let piece = |lo: f64, hi: f64, c: f64| PI * (c * (hi - lo) - 0.5 * (hi * hi - lo * lo));
                if b <= 0.0 {
                    piece(a, b, -0.5)
                } else if a >= 0.0 {
                    piece(a, b, 0.5)
                } else {
                    piece(a, 0.0, -0.5) + piece(0.0, b, 0.5)
                }
            }
            ProfileKind::Custom => {
                if !self.has_pointwise() {
                    return Err(Error::Capability("custom profile has no pointwise rule".into()));
                }
                let panels = 16;
                let h = (b - a) / panels as f64;
                let mut acc = Compensated::new();
                for i in 0..panels {
                    let lo = a + h * i as f64;
                    acc.add(quadrature::integrate(gl16(), lo, lo + h, |y| self.eval_phase(y)));
                }
                acc.value()
            }
        })
    }

    /// ∫ f over the phase interval [δ, δ + w], δ ∈ [-1/2, 1/2], w >= 0.
    pub fn phase_integral(&self, start: f64, width: f64) -> Result<f64> {
        if !(width >= 0.0) || !(-0.5..=0.5).contains(&start) {
            return Err(Error::Parameter(format!("bad phase interval start {start} width {width}")));
        }
        // whole periods integrate to zero
        let w = width - width.floor();
        if w == 0.0 {
            return Ok(0.0);
        }
        let end = start + w;
        if end <= 0.5 {
            self.segment_integral(start, end)
        } else {
            Ok(self.segment_integral(start, 0.5)? + self.segment_integral(-0.5, end - 1.0)?)
        }
    }

    /// ∫_0^1 |f|^p dx.
    pub fn lp_norm_pow(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::Parameter(format!("p must be at least 1, got {p}")));
        }
        let a = self.alpha.get();
        match self.kind {
            ProfileKind::Bernoulli => Ok(2.0 * PI.powf(p) * 0.5f64.powf(p + 1.0) / (p + 1.0)),
            ProfileKind::SineExtremal | ProfileKind::CosineExtremal => {
                let gamma_exp = p * (a - 1.0);
                if gamma_exp <= -1.0 {
                    return Err(Error::Domain(format!("f_α is not in L^{p} for α = {a}")));
                }
                let v = quadrature::integrate_near_origin(gl32(), 0.0, 0.5, gamma_exp, |d| self.eval_phase(d).abs().powf(p));
                Ok(2.0 * v)
            }
            ProfileKind::Custom => {
                if !self.has_pointwise() {
                    return Err(Error::Capability("custom profile has no pointwise rule".into()));
                }
                let panels = 64;
                let h = 1.0 / panels as f64;
                let mut acc = Compensated::new();
                for i in 0..panels {
                    let lo = -0.5 + h * i as f64;
                    acc.add(quadrature::integrate(gl16(), lo, lo + h, |y| self.eval_phase(y).abs().powf(p)));
                }
                Ok(acc.value())
            }
        }
    }
}

/// f_α (sine) or f̄_α (cosine) at x ∈ (0,1) through the Hurwitz zeta function.
pub fn eval_f_alpha(alpha: Alpha, x: f64, parity: Parity) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("x must lie in (0,1), got {x}")));
    }
    let c = ExtremalConsts::new(alpha);
    let (s, k) = (c.s, match parity {
        Parity::Sine => c.k_sin,
        Parity::Cosine => c.k_cos,
    });
    Ok(match parity {
        Parity::Sine => k * (hurwitz(s, x) - hurwitz(s, 1.0 - x)),
        Parity::Cosine => k * (hurwitz(s, x) + hurwitz(s, 1.0 - x)),
    })
}

/// f_1(x) = π(1/2 - {x}).
pub fn eval_f1(x: f64) -> f64 {
    PI * (0.5 - (x - x.floor()))
}

/// Piecewise-constant function on the uniform partition of [0,1) into `values.len()` cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let m = self.values.len();
        let u = x - x.floor();
        let j = ((u * m as f64) as usize).min(m - 1);
        self.values[j]
    }

    pub fn l2_norm_sq(&self) -> f64 {
        let m = self.values.len() as f64;
        crate::summation::sum(self.values.iter().map(|v| v * v / m))
    }

    pub fn mean(&self) -> f64 {
        let m = self.values.len() as f64;
        crate::summation::sum(self.values.iter().map(|v| v / m))
    }
}

/// Input to [`dyadic_coarsen`].
pub enum CoarsenSource<'a> {
    /// f(k·) for an analytic profile.
    Dilated { profile: &'a FourierProfile, k: u64 },
    /// A function already given by cell averages.
    Cells(&'a PiecewiseConstant),
    /// A bounded smooth function on [0,1), averaged by Gauss-Legendre per cell.
    Function(&'a (dyn Fn(f64) -> f64 + Sync)),
}

/// Average of f(k·) over the cell [j/m, (j+1)/m).
pub fn dilated_cell_average(profile: &FourierProfile, k: u64, m: u64, j: u64) -> Result<f64> {
    let start = phase_of_fraction(k as u128 * j as u128, m as u128);
    let width_num = k % m;
    let width = width_num as f64 / m as f64;
    // full periods contribute zero; the remainder carries the mass
    Ok(profile.phase_integral(start, width)? * m as f64 / k as f64)
}

/// The m-cell conditional expectation [g]_m.
pub fn dyadic_coarsen(g: CoarsenSource<'_>, m: u64) -> Result<PiecewiseConstant> {
    if m < 1 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    let values = match g {
        CoarsenSource::Dilated { profile, k } => {
            if k < 1 {
                return Err(Error::Parameter("dilation must be positive".into()));
            }
            (0..m).map(|j| dilated_cell_average(profile, k, m, j)).collect::<Result<Vec<_>>>()?
        }
        CoarsenSource::Cells(pc) => {
            let n = pc.cells() as u128;
            let mm = m as u128;
            // source cell i = [i m, (i+1) m), target cell j = [j n, (j+1) n) in units of 1/(n m)
            let mut out = vec![0.0; m as usize];
            let mut i = 0u128;
            for (j, slot) in out.iter_mut().enumerate() {
                let lo = j as u128 * n;
                let hi = lo + n;
                let mut acc = Compensated::new();
                while i < n && (i + 1) * mm <= lo {
                    i += 1;
                }
                let mut t = i;
                while t < n && t * mm < hi {
                    let a = (t * mm).max(lo);
                    let b = ((t + 1) * mm).min(hi);
                    acc.add(pc.values[t as usize] * (b - a) as f64);
                    t += 1;
                }
                *slot = acc.value() / n as f64;
            }
            out
        }
        CoarsenSource::Function(f) => {
            let h = 1.0 / m as f64;
            (0..m)
                .map(|j| {
                    let a = j as f64 * h;
                    quadrature::integrate(gl16(), a, a + h, f) / h
                })
                .collect()
        }
    };
    Ok(PiecewiseConstant { values })
}

/// ‖f(k·) - [f(k·)]_m‖₂ via the projection identity ‖f‖² - ‖[f]_m‖².
pub fn coarsening_error(profile: &FourierProfile, k: u64, m: u64) -> Result<f64> {
    let pc = dyadic_coarsen(CoarsenSource::Dilated { profile, k }, m)?;
    let d = profile.l2_norm_sq() - pc.l2_norm_sq();
    Ok(d.max(0.0).sqrt())
}

/// ‖f(k·) - [f(k·)]_m‖₂² by direct cell-wise quadrature of (f - mean)², singular cells included.
pub fn coarsening_error_sq_quadrature(profile: &FourierProfile, k: u64, m: u64) -> Result<f64> {
    if !profile.is_singular_at_zero() {
        return Err(Error::Capability("quadrature check implemented for the extremal profiles".into()));
    }
    let gamma = 2.0 * (profile.alpha().get() - 1.0);
    let rule: &Rule = quadrature::gl32();
    let mut acc = Compensated::new();
    for j in 0..m {
        let mean = dilated_cell_average(profile, k, m, j)?;
        // cell in x is [j/m, (j+1)/m); its image under x -> kx passes singular points t/k
        let lo = (j * k) as u128;
        let hi = ((j + 1) * k) as u128;
        let den = (m * k) as u128;
        // singular points in units of 1/(m k): multiples of m
        let mut pts = vec![lo];
        let mut t = lo.div_ceil(m as u128) * m as u128;
        while t < hi {
            if t > lo {
                pts.push(t);
            }
            t += m as u128;
        }
        pts.push(hi);
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            // x-coordinates relative to the nearest singular endpoint, both sides
            let half = (b - a) as f64 / den as f64 / 2.0;
            let a_sing = a % m as u128 == 0;
            let b_sing = b % m as u128 == 0;
            let pa = phase_of_fraction(a * k as u128, den);
            let pb = phase_of_fraction(b * k as u128, den);
            let f_left = |d: f64| (profile.eval_phase(phase_of(pa + k as f64 * d)) - mean).powi(2);
            let f_right = |d: f64| (profile.eval_phase(phase_of(pb - k as f64 * d)) - mean).powi(2);
            let left = if a_sing {
                quadrature::integrate_singular_left(rule, half, gamma, f_left)
            } else {
                quadrature::integrate(rule, 0.0, half, f_left)
            };
            let right = if b_sing {
                quadrature::integrate_singular_left(rule, half, gamma, f_right)
            } else {
                quadrature::integrate(rule, 0.0, half, f_right)
            };
            acc.add(left + right);
        }
    }
    Ok(acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn alpha(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    // Borwein's alternating-series acceleration for η(s), independent of Euler-Maclaurin.
    fn eta_borwein(s: f64) -> f64 {
        let n = 40usize;
        let mut d = vec![0.0f64; n + 1];
        let mut term = 1.0 / n as f64;
        let mut acc = term;
        d[0] = n as f64 * acc;
        for i in 1..=n {
            term *= (n + i - 1) as f64 * (n - i + 1) as f64 * 4.0 / ((2 * i - 1) as f64 * (2 * i) as f64);
            acc += term;
            d[i] = n as f64 * acc;
        }
        let mut sum = 0.0;
        for k in 0..n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * (d[k] - d[n]) / ((k + 1) as f64).powf(s);
        }
        -sum / d[n]
    }

    fn zeta_oracle(s: f64) -> f64 {
        eta_borwein(s) / (1.0 - 2f64.powf(1.0 - s))
    }

    #[test]
    fn eta_oracle_sane() {
        // η(1) = ln 2 is approached continuously; check η(2) = π²/12
        assert!((eta_borwein(2.0) - PI * PI / 12.0).abs() < 1e-13);
    }

    #[test]
    fn hurwitz_near_one_is_riemann_zeta() {
        for s in [0.1, 0.25, 0.4, 0.5, 0.75, 0.9] {
            let z = zeta_oracle(s);
            let v = hurwitz_zeta(HurwitzArg::new(s, 1.0 - 1e-12).unwrap(), 1e-12).unwrap();
            assert!((v - z).abs() < 1e-10, "s={s}: {v} vs {z}");
            assert!((riemann_zeta(s) - z).abs() < 1e-13, "s={s}");
        }
        assert!((riemann_zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-14);
        assert!((riemann_zeta(2.0) - PI * PI / 6.0).abs() < 1e-15);
    }

    #[test]
    fn hurwitz_half_identity() {
        for s in [0.1, 0.25, 0.5, 0.8] {
            let lhs = hurwitz_zeta(HurwitzArg::new(s, 0.5).unwrap(), 1e-12).unwrap();
            let rhs = (2f64.powf(s) - 1.0) * zeta_oracle(s);
            assert!((lhs - rhs).abs() < 1e-12, "s={s}");
        }
    }

    #[test]
    fn hurwitz_small_x_limit() {
        let x = 1e-8;
        let v = hurwitz_zeta(HurwitzArg::new(0.25, x).unwrap(), 1e-12).unwrap();
        assert!((x.powf(0.25) * v - 1.0).abs() < 1e-2);
    }

    #[test]
    fn hurwitz_domain_and_accuracy_errors() {
        assert!(matches!(HurwitzArg::new(0.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(HurwitzArg::new(0.5, 1.0), Err(Error::Domain(_))));
        assert!(matches!(HurwitzArg::new(1.2, 0.5), Err(Error::Domain(_))));
        let arg = HurwitzArg { s: 0.5, x: 1e-30 };
        assert!(matches!(hurwitz_zeta(arg, 1e-12), Err(Error::Accuracy(_))));
        let arg = HurwitzArg { s: 0.5, x: 0.3 };
        assert!(matches!(hurwitz_zeta(arg, 1e-20), Err(Error::Accuracy(_))));
    }

    #[test]
    fn hurwitz_negative_order_matches_bernoulli_polynomial() {
        // ζ(-1, x) = -B_2(x)/2 = -(x² - x + 1/6)/2
        for x in [0.1, 0.5, 0.9, 1.7] {
            let want = -(x * x - x + 1.0 / 6.0) / 2.0;
            assert!((hurwitz(-1.0, x) - want).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn f_alpha_basic_values() {
        for a in [0.6, 0.75, 0.9] {
            assert!(eval_f_alpha(alpha(a), 0.5, Parity::Sine).unwrap().abs() < 1e-14);
        }
        assert!(eval_f_alpha(alpha(0.75), 0.0, Parity::Sine).is_err());
        assert!(eval_f_alpha(alpha(0.75), 1.0, Parity::Cosine).is_err());
    }

    #[test]
    fn f_alpha_small_x_limit() {
        let a = 0.75;
        // the limit implied by the Hurwitz representation carries the factor 1/4
        let want = (2.0 * PI).powf(a) / (4.0 * gamma(a) * (PI * a / 2.0).sin());
        let mut prev = f64::INFINITY;
        for x in [1e-4f64, 1e-6, 1e-8, 1e-10] {
            let v = x.powf(1.0 - a) * eval_f_alpha(alpha(a), x, Parity::Sine).unwrap();
            let dev = ((v - want) / want).abs();
            assert!(dev < prev);
            prev = dev;
        }
        // next-order term is of size x^{1-α}
        assert!(prev < 1e-2);
    }

    #[test]
    fn f_alpha_matches_abel_sum() {
        // Σ r^j sin(πj/2) j^{-3/4}, Richardson-extrapolated in h = 1 - r
        let abel = |h: f64| {
            let r = 1.0 - h;
            let mut acc = 0.0;
            let mut rj = 1.0;
            let jmax = (60.0 / h) as u64;
            for j in 1..=jmax {
                rj *= r;
                let s = match j % 4 {
                    1 => 1.0,
                    3 => -1.0,
                    _ => 0.0,
                };
                acc += rj * s * (j as f64).powf(-0.75);
            }
            acc
        };
        let h = 0.004;
        let (s1, s2, s3) = (abel(h), abel(h / 2.0), abel(h / 4.0));
        let r1 = 2.0 * s2 - s1;
        let r2 = 2.0 * s3 - s2;
        let extrap = (4.0 * r2 - r1) / 3.0;
        let v = eval_f_alpha(alpha(0.75), 0.25, Parity::Sine).unwrap();
        assert!((v - extrap).abs() < 1e-7, "{v} vs {extrap}");
    }

    #[test]
    fn f1_values() {
        assert!((eval_f1(0.25) - PI / 4.0).abs() < 1e-15);
        assert!((eval_f1(0.0) - PI / 2.0).abs() < 1e-15);
        assert!((eval_f1(1.75) + PI / 4.0).abs() < 1e-15);
        let p = FourierProfile::bernoulli(alpha(0.75));
        for x in [0.1, 0.3, 0.5, 0.77] {
            assert!((p.eval(x).unwrap() - eval_f1(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn parseval_by_quadrature() {
        for a in [0.6, 0.75, 0.9] {
            let p = FourierProfile::sine_extremal(alpha(a));
            let q = p.lp_norm_pow(2.0).unwrap();
            let z = riemann_zeta(2.0 * a) / 2.0;
            assert!(((q - z) / z).abs() < 1e-6, "α={a}: {q} vs {z}");
            let c = FourierProfile::cosine_extremal(alpha(a));
            let qc = c.lp_norm_pow(2.0).unwrap();
            assert!(((qc - z) / z).abs() < 1e-6, "cos α={a}: {qc} vs {z}");
        }
        let b = FourierProfile::bernoulli(alpha(0.75));
        assert!((b.lp_norm_pow(2.0).unwrap() - b.l2_norm_sq()).abs() < 1e-14);
    }

    #[test]
    fn antiderivative_matches_quadrature() {
        for a in [0.6, 0.75, 0.9] {
            let p = FourierProfile::sine_extremal(alpha(a));
            for (s, w) in [(0.0, 0.3), (-0.2, 0.35), (0.1, 1e-9), (1e-12, 3e-12), (0.4, 0.3), (-0.5, 1.0), (0.3, 2.5)] {
                let v = p.phase_integral(s, w).unwrap();
                // reference: integrate on [s, s+w] by splitting at singular points
                let mut pts = vec![s];
                let mut t = s.floor() + 1.0;
                while t < s + w {
                    pts.push(t);
                    t += 1.0;
                }
                if s < 0.0 && s + w > 0.0 && !pts.contains(&0.0) {
                    pts.push(0.0);
                }
                pts.push(s + w);
                pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
                let mut r = 0.0;
                let g = a - 1.0;
                for q in pts.windows(2) {
                    let (lo, hi) = (q[0], q[1]);
                    let h = 0.5 * (hi - lo);
                    r += quadrature::integrate_singular_left(quadrature::gl64(), h, g, |d| p.eval_phase(phase_of(phase_of(lo) + d)));
                    r += quadrature::integrate_singular_left(quadrature::gl64(), h, g, |d| p.eval_phase(phase_of(phase_of(hi) - d)));
                }
                let scale = r.abs().max(w.powf(a));
                assert!((v - r).abs() < 1e-10 * scale, "α={a} s={s} w={w}: {v} vs {r}");
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for kind in [FourierProfile::sine_extremal(alpha(0.7)), FourierProfile::cosine_extremal(alpha(0.7))] {
            for d in [-0.4, -0.1, 0.05, 0.3] {
                let h = 1e-6;
                let fd = (kind.eval_phase(d + h) - kind.eval_phase(d - h)) / (2.0 * h);
                let an = kind.derivative_phase(d).unwrap();
                assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0), "{kind:?} d={d}");
            }
        }
    }

    #[test]
    fn coarsen_examples() {
        let p = FourierProfile::bernoulli(alpha(0.75));
        let c = dyadic_coarsen(CoarsenSource::Dilated { profile: &p, k: 1 }, 2).unwrap();
        assert!((c.values[0] - PI / 4.0).abs() < 1e-15);
        assert!((c.values[1] + PI / 4.0).abs() < 1e-15);
        let konst = |_: f64| 2.5;
        let c = dyadic_coarsen(CoarsenSource::Function(&konst), 7).unwrap();
        assert!(c.values.iter().all(|v| (v - 2.5).abs() < 1e-14));
        assert!(dyadic_coarsen(CoarsenSource::Function(&konst), 0).is_err());
    }

    #[test]
    fn coarsened_means_vanish_and_cells_sum_to_zero() {
        let p = FourierProfile::sine_extremal(alpha(0.75));
        for k in 1..=8u64 {
            let c = dyadic_coarsen(CoarsenSource::Dilated { profile: &p, k }, 64).unwrap();
            assert!(c.mean().abs() < 1e-13, "k={k} mean={}", c.mean());
        }
    }

    #[test]
    fn coarsening_error_identity_vs_quadrature() {
        for a in [0.6, 0.75] {
            let p = FourierProfile::sine_extremal(alpha(a));
            for (k, m) in [(1, 16), (2, 16), (3, 16), (5, 32), (8, 16)] {
                let e = coarsening_error(&p, k, m).unwrap().powi(2);
                let q = coarsening_error_sq_quadrature(&p, k, m).unwrap();
                assert!(((e - q) / q).abs() < 1e-6, "α={a} k={k} m={m}: {e} vs {q}");
            }
        }
    }

    proptest! {
        #[test]
        fn odd_even_symmetry(x in 0.001f64..0.999, a in 0.55f64..0.95) {
            let al = alpha(a);
            let s1 = eval_f_alpha(al, x, Parity::Sine).unwrap();
            let s2 = eval_f_alpha(al, 1.0 - x, Parity::Sine).unwrap();
            prop_assert!((s1 + s2).abs() <= 1e-12 * s1.abs().max(1.0));
            let c1 = eval_f_alpha(al, x, Parity::Cosine).unwrap();
            let c2 = eval_f_alpha(al, 1.0 - x, Parity::Cosine).unwrap();
            prop_assert!((c1 - c2).abs() <= 1e-12 * c1.abs().max(1.0));
        }

        #[test]
        fn hurwitz_shift(s in 0.05f64..0.95, x in 0.01f64..0.99) {
            let lhs = hurwitz(s, x);
            let rhs = x.powf(-s) + hurwitz(s, x + 1.0);
            prop_assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs().max(1.0));
        }

        #[test]
        fn coarsening_idempotent_and_tower(e in 0u32..5, f in 0u32..4, k in 1u64..9, seed in 0u64..1000) {
            let p = FourierProfile::sine_extremal(alpha(0.6 + (seed % 30) as f64 / 100.0));
            let m_small = 1u64 << e;
            let m = m_small << f;
            let fine = dyadic_coarsen(CoarsenSource::Dilated { profile: &p, k }, m).unwrap();
            let again = dyadic_coarsen(CoarsenSource::Cells(&fine), m).unwrap();
            for (a, b) in fine.values.iter().zip(&again.values) {
                prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }
            let via = dyadic_coarsen(CoarsenSource::Cells(&fine), m_small).unwrap();
            let direct = dyadic_coarsen(CoarsenSource::Dilated { profile: &p, k }, m_small).unwrap();
            for (a, b) in via.values.iter().zip(&direct.values) {
                prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{} vs {}", a, b);
            }
        }
    }
}
