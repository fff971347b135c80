//! L² norms and inner products of Σ c_k f(n_k x), exact and enclosed.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gcd_spectra::{quadratic_form, GcdMatrixSpec};
use crate::numtheory::sigma;
use crate::quadrature;
use crate::special_functions::{phase_of, phase_of_fraction, riemann_zeta, FourierProfile, ProfileKind};
use crate::summation::Compensated;
use crate::types::{Alpha, CoefficientSequence, DilationSequence, NormEnclosure, NormMethod};

/// Default Parseval truncation used by `norm_squared` for general profiles.
pub const DEFAULT_PARSEVAL_J: u64 = 1 << 14;

const PARSEVAL_J_MAX: u64 = 1 << 27;

const ROUNDING_SLACK: f64 = 1e-12;

/// ∫_0^1 f(mx) f(nx) dx.
pub fn inner_product(profile: &FourierProfile, m: u64, n: u64, truncation: u64) -> Result<NormEnclosure> {
    if m < 1 || n < 1 {
        return Err(Error::Parameter("dilations must be positive".into()));
    }
    if truncation < 1 {
        return Err(Error::Parameter("truncation must be at least 1".into()));
    }
    let g = m.gcd(&n);
    let (mp, np) = (m / g, n / g);
    let ratio = (g as f64 / m as f64) * (g as f64 / n as f64);
    let a = profile.alpha().get();
    match profile.kind() {
        ProfileKind::SineExtremal | ProfileKind::CosineExtremal => {
            Ok(NormEnclosure::point(riemann_zeta(2.0 * a) / 2.0 * ratio.powf(a), NormMethod::ExactGcd))
        }
        ProfileKind::Bernoulli => Ok(NormEnclosure::point(
            std::f64::consts::PI.powi(2) / 12.0 * ratio,
            NormMethod::ExactGcd,
        )),
        ProfileKind::Custom => {
            // f(mx) has frequencies j m; they meet f(nx) at lcm multiples j m' ... = j n'
            let mut acc = Compensated::new();
            for j in 1..=truncation {
                let (a1, b1) = profile.coefficient(j * np);
                let (a2, b2) = profile.coefficient(j * mp);
                acc.add(a1 * a2 + b1 * b2);
            }
            let s = 0.5 * acc.value();
            let c = profile.bound_constant();
            let fam = profile.coefficient_sq_bound() / (c * c);
            let tail = 0.5 * fam * c * c * ((mp * np) as f64).powf(-a) * (truncation as f64).powf(1.0 - 2.0 * a)
                / (2.0 * a - 1.0);
            Ok(NormEnclosure { lower: s - tail, upper: s + tail, method: NormMethod::ParsevalTruncated })
        }
    }
}

/// ∫_0^1 ({kx} - 1/2)({lx} - 1/2) dx as an exact rational, computed by the
/// closed form gcd²/(12kl) and by exact piecewise integration; the two must agree.
pub fn franel_exact(k: u64, l: u64) -> Result<BigRational> {
    if k < 1 || l < 1 || k > 10_000 || l > 10_000 {
        return Err(Error::Parameter(format!("franel_exact needs 1 <= k, l <= 10^4, got ({k}, {l})")));
    }
    let g = k.gcd(&l);
    let closed = BigRational::new(BigInt::from(g * g), BigInt::from(12 * k * l));
    let integrated = franel_piecewise(k, l);
    if closed != integrated {
        return Err(Error::InvariantViolation(format!(
            "Franel mismatch at ({k}, {l}): closed {closed} vs integrated {integrated}"
        )));
    }
    Ok(closed)
}

/// Exact integration of the product of two sawtooth functions, Simpson's rule
/// on each piece (the integrand is quadratic between breakpoints).
pub fn franel_piecewise(k: u64, l: u64) -> BigRational {
    // breakpoints j/k and j/l on the grid 1/(kl)
    let den = k * l;
    let mut pts: Vec<u64> = (0..=k).map(|j| j * l).chain((0..=l).map(|j| j * k)).collect();
    pts.sort_unstable();
    pts.dedup();
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let six = BigRational::from_integer(BigInt::from(6));
    let four = BigRational::from_integer(BigInt::from(4));
    let bden = BigInt::from(den);
    let mut total = BigRational::zero();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        // floors of k x and l x on the open piece, from its midpoint 2x = (a+b)/den
        let fk = (k * (a + b)) / (2 * den);
        let fl = (l * (a + b)) / (2 * den);
        let saw = |x: &BigRational, m: u64, f: u64| -> BigRational {
            x * BigInt::from(m) - BigRational::from_integer(BigInt::from(f)) - &half
        };
        let eval = |x: &BigRational| saw(x, k, fk) * saw(x, l, fl);
        let xa = BigRational::new(BigInt::from(a), bden.clone());
        let xb = BigRational::new(BigInt::from(b), bden.clone());
        let xm = BigRational::new(BigInt::from(a + b), BigInt::from(2) * &bden);
        let simpson = (eval(&xa) + &four * eval(&xm) + eval(&xb)) * (&xb - &xa) / &six;
        total += simpson;
    }
    total
}

/// ‖Σ c_k f(n_k x)‖₂²: exact GCD form for the extremal and Bernoulli profiles,
/// otherwise a Parseval enclosure tightened by the Koksma-type upper bound.
pub fn norm_squared(profile: &FourierProfile, dilations: &DilationSequence, c: &CoefficientSequence) -> Result<NormEnclosure> {
    c.check_len(dilations.len())?;
    let a = profile.alpha();
    match profile.kind() {
        ProfileKind::SineExtremal | ProfileKind::CosineExtremal => {
            let q = quadratic_form(&GcdMatrixSpec::new(a, dilations.clone()), c)?;
            Ok(NormEnclosure::point(riemann_zeta(2.0 * a.get()) / 2.0 * q, NormMethod::ExactGcd))
        }
        ProfileKind::Bernoulli => {
            // the α = 1 GCD form, evaluated directly
            let d = dilations.as_slice();
            let mut acc = Compensated::new();
            for i in 0..d.len() {
                for j in 0..d.len() {
                    let g = d[i].gcd(&d[j]) as f64;
                    acc.add(c.values[i] * c.values[j] * (g / d[i] as f64) * (g / d[j] as f64));
                }
            }
            Ok(NormEnclosure::point(std::f64::consts::PI.powi(2) / 12.0 * acc.value(), NormMethod::ExactGcd))
        }
        ProfileKind::Custom => {
            let j = DEFAULT_PARSEVAL_J.max(dilations.max());
            let p = parseval_norm(profile, dilations, c, j)?;
            let k = koksma_constant(profile) * quadratic_form(&GcdMatrixSpec::new(a, dilations.clone()), &c.abs())?;
            Ok(NormEnclosure { lower: p.lower, upper: p.upper.min(k * (1.0 + ROUNDING_SLACK)), method: p.method })
        }
    }
}

/// C' with ‖Σ c_k f(n_k ·)‖² <= C' Σ |c_k c_l| gcd(n_k,n_l)^{2α}/(n_k n_l)^α for every
/// profile with |a_j|, |b_j| <= C j^{-α}.
pub fn koksma_constant(profile: &FourierProfile) -> f64 {
    profile.coefficient_sq_bound() * riemann_zeta(2.0 * profile.alpha().get()) / 2.0
}

/// Parseval oracle: ½ Σ_{j<=J} (A_j² + B_j²) plus a certified tail.
pub fn parseval_norm(profile: &FourierProfile, dilations: &DilationSequence, c: &CoefficientSequence, j_max: u64) -> Result<NormEnclosure> {
    c.check_len(dilations.len())?;
    if j_max < dilations.max() {
        return Err(Error::Parameter(format!("J = {j_max} is below the largest dilation {}", dilations.max())));
    }
    if j_max > PARSEVAL_J_MAX {
        return Err(Error::Capability(format!("J is capped at {PARSEVAL_J_MAX}")));
    }
    let a = profile.alpha().get();
    let jm = j_max as usize;
    let mut big_a = vec![Compensated::new(); jm + 1];
    let mut big_b = vec![Compensated::new(); jm + 1];
    let has_b = matches!(profile.kind(), ProfileKind::CosineExtremal | ProfileKind::Custom);
    let has_a = profile.kind() != ProfileKind::CosineExtremal;
    for (&n, &ck) in dilations.as_slice().iter().zip(&c.values) {
        if ck == 0.0 {
            continue;
        }
        let n = n as usize;
        let mut j = n;
        let mut r = 1u64;
        while j <= jm {
            let (x, y) = profile.coefficient(r);
            big_a[j].add(ck * x);
            big_b[j].add(ck * y);
            j += n;
            r += 1;
        }
    }
    let mut acc = Compensated::new();
    for j in 1..=jm {
        let x = big_a[j].value();
        let y = big_b[j].value();
        acc.add(x * x + y * y);
    }
    let head = 0.5 * acc.value();
    let s: f64 = crate::summation::sum(
        dilations.as_slice().iter().zip(&c.values).map(|(&n, ck)| profile.bound_constant() * ck.abs() * (n as f64).powf(a)),
    );
    let families = has_a as u8 as f64 + has_b as u8 as f64;
    let tail = 0.5 * families * s * s * (j_max as f64).powf(1.0 - 2.0 * a) / (2.0 * a - 1.0);
    Ok(NormEnclosure {
        lower: head * (1.0 - ROUNDING_SLACK),
        upper: (head + tail) * (1.0 + ROUNDING_SLACK),
        method: NormMethod::ParsevalTruncated,
    })
}

/// (lhs, rhs) = (Σ_{k,l=M}^N |c_k c_l| gcd(k,l)^{2α}/(kl)^α, Σ_{k=M}^{N²} c_k² σ_{1-2α+ε}(k)).
pub fn sigma_weighted_bound(c: &CoefficientSequence, alpha: Alpha, eps: f64, m: usize, n: usize) -> Result<(f64, f64)> {
    let a = alpha.get();
    let s = 1.0 - 2.0 * a + eps;
    if !(eps > 0.0 && s < 0.0) {
        return Err(Error::Parameter(format!("need eps > 0 and 1 - 2α + eps < 0, got eps = {eps}")));
    }
    if m < 1 || m > n {
        return Err(Error::Parameter(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
    }
    let lhs: f64 = (m..=n)
        .into_par_iter()
        .map(|k| {
            let ck = c.at(k).abs();
            if ck == 0.0 {
                return 0.0;
            }
            let mut acc = Compensated::new();
            for l in m..=n {
                let cl = c.at(l).abs();
                if cl == 0.0 {
                    continue;
                }
                let g = k.gcd(&l) as f64;
                acc.add(cl * ((g / k as f64) * (g / l as f64)).powf(a));
            }
            ck * acc.value()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let top = (n * n).min(c.start_index + c.len().saturating_sub(1));
    let rhs = crate::summation::sum((m..=top).map(|k| {
        let ck = c.at(k);
        if ck == 0.0 {
            0.0
        } else {
            ck * ck * sigma(s, k as u64)
        }
    }));
    Ok((lhs, rhs))
}

// Reduced fraction p/q in [0, 1].
#[derive(Clone, Copy, PartialEq, Eq)]
struct Point {
    p: u64,
    q: u64,
}

fn cmp_points(a: &Point, b: &Point) -> std::cmp::Ordering {
    (a.p as u128 * b.q as u128).cmp(&(b.p as u128 * a.q as u128))
}

/// ‖Σ c_k f(n_k x)‖₂² by quadrature split at every singular point j/n_k, with a
/// power substitution at each singular endpoint.
pub fn quadrature_norm(profile: &FourierProfile, dilations: &DilationSequence, c: &CoefficientSequence) -> Result<NormEnclosure> {
    c.check_len(dilations.len())?;
    if !profile.has_pointwise() {
        return Err(Error::Capability("profile has no pointwise rule".into()));
    }
    if dilations.max() > 10_000 {
        return Err(Error::Capability("quadrature norm limited to dilations <= 10^4".into()));
    }
    let d = dilations.as_slice();
    let mut pts: Vec<Point> = Vec::new();
    for &n in d {
        for j in 0..=n {
            let g = j.gcd(&n).max(1);
            pts.push(Point { p: j / g, q: n / g });
        }
    }
    pts.sort_by(cmp_points);
    pts.dedup_by(|a, b| cmp_points(a, b).is_eq());
    let gamma = 2.0 * (profile.alpha().get() - 1.0);
    let rule = quadrature::gl64();
    let eval_sum = |anchor: Point, offset: f64| -> f64 {
        let mut acc = Compensated::new();
        for (&n, &ck) in d.iter().zip(&c.values) {
            if ck == 0.0 {
                continue;
            }
            let base = phase_of_fraction(n as u128 * anchor.p as u128, anchor.q as u128);
            acc.add(ck * profile.eval_phase(phase_of(base + n as f64 * offset)));
        }
        let v = acc.value();
        v * v
    };
    let pieces: Vec<f64> = pts
        .par_windows(2)
        .map(|w| {
            let (z0, z1) = (w[0], w[1]);
            let num = z1.p as u128 * z0.q as u128 - z0.p as u128 * z1.q as u128;
            let h = num as f64 / (z0.q as u128 * z1.q as u128) as f64;
            let half = 0.5 * h;
            let left = quadrature::integrate_singular_left(rule, half, gamma, |t| eval_sum(z0, t));
            let right = quadrature::integrate_singular_left(rule, half, gamma, |t| eval_sum(z1, -t));
            left + right
        })
        .collect();
    let v = crate::summation::sum(pieces);
    Ok(NormEnclosure::point(v, NormMethod::Quadrature))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn alpha(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    fn rat(p: i64, q: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(q))
    }

    #[test]
    fn inner_product_examples() {
        let a = alpha(0.75);
        let p = FourierProfile::sine_extremal(a);
        let z = riemann_zeta(1.5) / 2.0;
        let v = inner_product(&p, 5, 5, 1).unwrap();
        assert!((v.lower - z).abs() < 1e-15);
        assert!((v.lower - 1.306_188).abs() < 1e-6);
        let v = inner_product(&p, 3, 7, 1).unwrap();
        assert!((v.lower - z * 21f64.powf(-0.75)).abs() < 1e-15);
        let b = FourierProfile::bernoulli(a);
        let v = inner_product(&b, 2, 3, 1).unwrap();
        assert!((v.lower - std::f64::consts::PI.powi(2) / 72.0).abs() < 1e-15);
    }

    #[test]
    fn custom_inner_product_encloses_closed_form() {
        // a custom profile that is f_α in disguise
        let a = alpha(0.7);
        let p = FourierProfile::custom(a, 1.0, move |j| ((j as f64).powf(-0.7), 0.0));
        let exact = inner_product(&FourierProfile::sine_extremal(a), 4, 6, 1).unwrap().lower;
        let e = inner_product(&p, 4, 6, 2000).unwrap();
        assert!(e.lower <= exact && exact <= e.upper, "{e:?} vs {exact}");
    }

    #[test]
    fn franel_examples() {
        assert_eq!(franel_exact(1, 1).unwrap(), rat(1, 12));
        assert_eq!(franel_exact(2, 3).unwrap(), rat(1, 72));
        assert_eq!(franel_exact(4, 6).unwrap(), rat(1, 72));
        assert_eq!(franel_piecewise(4, 6), rat(4, 288));
        assert!(franel_exact(0, 3).is_err());
        assert!(franel_exact(10_001, 3).is_err());
    }

    #[test]
    fn franel_large_pair() {
        let v = franel_exact(9999, 10_000).unwrap();
        assert_eq!(v, rat(1, 12 * 9999 * 10_000));
    }

    #[test]
    fn norm_examples() {
        let a = alpha(0.75);
        let p = FourierProfile::sine_extremal(a);
        let z = riemann_zeta(1.5);
        let one = norm_squared(&p, &DilationSequence::new(vec![7]).unwrap(), &CoefficientSequence::new(vec![1.0]).unwrap()).unwrap();
        assert!((one.lower - z / 2.0).abs() < 1e-15);
        let two = norm_squared(
            &p,
            &DilationSequence::new(vec![1, 2]).unwrap(),
            &CoefficientSequence::new(vec![1.0, -1.0]).unwrap(),
        )
        .unwrap();
        assert!((two.lower - z * (1.0 - 2f64.powf(-0.75))).abs() < 1e-14);
        let zero = norm_squared(
            &p,
            &DilationSequence::new(vec![1, 2, 3]).unwrap(),
            &CoefficientSequence::new(vec![0.0; 3]).unwrap(),
        )
        .unwrap();
        assert_eq!(zero.upper, 0.0);
        assert!(norm_squared(&p, &DilationSequence::new(vec![1, 2]).unwrap(), &CoefficientSequence::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn parseval_examples() {
        let a = alpha(0.75);
        let p = FourierProfile::sine_extremal(a);
        let d1 = DilationSequence::new(vec![1]).unwrap();
        let c1 = CoefficientSequence::new(vec![1.0]).unwrap();
        let e = parseval_norm(&p, &d1, &c1, 1 << 12).unwrap();
        assert!(e.contains(riemann_zeta(1.5) / 2.0, 0.0));
        assert!(parseval_norm(&p, &DilationSequence::new(vec![1, 50]).unwrap(), &CoefficientSequence::new(vec![1.0, 1.0]).unwrap(), 49).is_err());

        let a6 = alpha(0.6);
        let p6 = FourierProfile::sine_extremal(a6);
        let d = DilationSequence::new(vec![3, 10, 12]).unwrap();
        let c = CoefficientSequence::new(vec![0.5, -1.0, 0.25]).unwrap();
        let w10 = parseval_norm(&p6, &d, &c, 1 << 10).unwrap().width();
        let w14 = parseval_norm(&p6, &d, &c, 1 << 14).unwrap().width();
        let ratio = w14 / w10;
        assert!((ratio - 2f64.powf(-0.8)).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn parseval_contains_exact_for_random_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = alpha(0.75);
        let p = FourierProfile::sine_extremal(a);
        let mut d: Vec<u64> = (1..=100).collect();
        for i in (1..d.len()).rev() {
            let j = rng.gen_range(0..=i);
            d.swap(i, j);
        }
        let mut d: Vec<u64> = d.into_iter().take(10).collect();
        d.sort_unstable();
        let ds = DilationSequence::new(d).unwrap();
        let c = CoefficientSequence::new((0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let exact = norm_squared(&p, &ds, &c).unwrap().lower;
        let e = parseval_norm(&p, &ds, &c, 1 << 14).unwrap();
        assert!(e.contains(exact, 0.0), "{e:?} vs {exact}");
    }

    #[test]
    fn quadrature_agrees_with_gcd_form() {
        for (a, d, c) in [
            (0.6, vec![1u64], vec![1.0]),
            (0.75, vec![2, 3, 5], vec![1.0, -0.5, 0.25]),
            (0.9, vec![4, 6, 9, 12], vec![0.3, 0.7, -1.0, 0.2]),
            (0.6, vec![7, 49, 97], vec![1.0, 1.0, -1.0]),
        ] {
            let p = FourierProfile::sine_extremal(alpha(a));
            let ds = DilationSequence::new(d).unwrap();
            let cs = CoefficientSequence::new(c).unwrap();
            let exact = norm_squared(&p, &ds, &cs).unwrap().lower;
            let q = quadrature_norm(&p, &ds, &cs).unwrap().lower;
            assert!(((q - exact) / exact).abs() < 1e-6, "α={a}: {q} vs {exact}");
        }
    }

    #[test]
    fn cross_parity_terms_vanish() {
        // sine and cosine families are orthogonal: ‖f_α(m·) + f̄_α(n·)‖² = ‖f_α‖² + ‖f̄_α‖²
        let a = alpha(0.75);
        let s = FourierProfile::sine_extremal(a);
        let cpro = FourierProfile::cosine_extremal(a);
        let combo = FourierProfile::custom(a, 1.0, move |j| {
            let v = (j as f64).powf(-0.75);
            (v, v)
        })
        .with_pointwise(move |x| s.eval_phase(phase_of(x)) + cpro.eval_phase(phase_of(x)));
        let ds = DilationSequence::new(vec![1]).unwrap();
        let cs = CoefficientSequence::new(vec![1.0]).unwrap();
        let q = quadrature_norm(&combo, &ds, &cs).unwrap().lower;
        let want = riemann_zeta(1.5);
        assert!(((q - want) / want).abs() < 1e-6, "{q} vs {want}");
    }

    #[test]
    fn sigma_bound_examples() {
        let a = alpha(0.75);
        let mut v = vec![0.0; 12];
        v[11] = 0.8;
        let c = CoefficientSequence::new(v).unwrap();
        let (lhs, rhs) = sigma_weighted_bound(&c, a, 0.1, 12, 12).unwrap();
        assert!((lhs - 0.64).abs() < 1e-15);
        assert!(rhs >= lhs);
        assert!(sigma_weighted_bound(&c, a, 0.6, 1, 12).is_err());
        assert!(sigma_weighted_bound(&c, a, 0.1, 13, 12).is_err());
    }

    #[test]
    fn sigma_bound_ratio_bounded() {
        let a = alpha(0.75);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let c = CoefficientSequence::new((0..200).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let (lhs, rhs) = sigma_weighted_bound(&c, a, 0.1, 1, 200).unwrap();
            worst = worst.max(lhs / rhs);
        }
        assert!(worst.is_finite() && worst < 50.0, "worst {worst}");
        // coefficients concentrated on primorials
        let mut v = vec![0.0; 210];
        for p in [2usize, 6, 30, 210] {
            v[p - 1] = 1.0;
        }
        let c = CoefficientSequence::new(v).unwrap();
        let (lhs, rhs) = sigma_weighted_bound(&c, a, 0.1, 1, 210).unwrap();
        assert!(lhs / rhs < 50.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn koksma_domination(seed in 0u64..100_000, a in 0.55f64..0.95, cbound in 0.1f64..3.0, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let prof = FourierProfile::custom(alpha(a), cbound, move |j| {
                let s = phases[(j % 64) as usize];
                let w = cbound * (j as f64).powf(-a);
                (w * s, w * (1.0 - s.abs()))
            });
            let mut d: Vec<u64> = (0..n).map(|_| rng.gen_range(1..60)).collect();
            d.sort_unstable();
            d.dedup();
            let ds = DilationSequence::new(d.clone()).unwrap();
            let c = CoefficientSequence::new(d.iter().map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let e = norm_squared(&prof, &ds, &c).unwrap();
            let k = koksma_constant(&prof) * quadratic_form(&GcdMatrixSpec::new(alpha(a), ds.clone()), &c.abs()).unwrap();
            prop_assert!(e.lower <= e.upper);
            prop_assert!(e.lower <= k * (1.0 + 1e-12));
        }

        #[test]
        fn franel_double_computation(k in 1u64..200, l in 1u64..200) {
            prop_assert!(franel_exact(k, l).is_ok());
        }
    }
}
