//! Gauss-Legendre rules and graded rules for integrable endpoint singularities.

use std::sync::OnceLock;

use crate::summation::Compensated;

pub struct Rule {
    /// Nodes on [0, 1], ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_rule(n: usize) -> Rule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] to [0,1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Rule { nodes, weights }
}

macro_rules! cached_rule {
    ($name:ident, $n:expr) => {
        pub fn $name() -> &'static Rule {
            static R: OnceLock<Rule> = OnceLock::new();
            R.get_or_init(|| legendre_rule($n))
        }
    };
}

cached_rule!(gl4, 4);
cached_rule!(gl8, 8);
cached_rule!(gl16, 16);
cached_rule!(gl32, 32);
cached_rule!(gl64, 64);

/// Rule with `n` points.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    legendre_rule(n)
}

pub fn integrate<F: FnMut(f64) -> f64>(rule: &Rule, a: f64, b: f64, mut f: F) -> f64 {
    let h = b - a;
    let mut acc = Compensated::new();
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc.add(w * f(a + h * t));
    }
    h * acc.value()
}

/// Substitution power making d^gamma * (p u^{p-1}) smooth enough for Gauss-Legendre.
pub fn singular_power(gamma: f64) -> f64 {
    assert!(gamma > -1.0, "integrand must be integrable");
    (6.0 / (1.0 + gamma)).ceil().clamp(1.0, 60.0)
}

/// ∫_0^h g(d) dd for g with an integrable singularity ~ d^gamma at d = 0.
pub fn integrate_singular_left<F: FnMut(f64) -> f64>(rule: &Rule, h: f64, gamma: f64, mut g: F) -> f64 {
    let p = singular_power(gamma);
    let mut acc = Compensated::new();
    for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
        let up = u.powf(p - 1.0);
        let d = h * up * u;
        if d <= 0.0 {
            continue;
        }
        acc.add(w * p * up * g(d));
    }
    h * acc.value()
}

/// ∫_a^b g(d) dd for 0 <= a < b where g may be singular at d = 0.
/// Geometric grading keeps every panel at least its own length away from 0.
pub fn integrate_near_origin<F: FnMut(f64) -> f64>(rule: &Rule, a: f64, b: f64, gamma: f64, mut g: F) -> f64 {
    debug_assert!(0.0 <= a && a < b);
    let mut acc = Compensated::new();
    let mut lo = a;
    if lo == 0.0 {
        let first = b / 1024.0;
        acc.add(integrate_singular_left(rule, first, gamma, &mut g));
        lo = first;
    }
    while lo < b {
        let hi = (2.0 * lo).min(b);
        let hi = if b - hi < 0.25 * (hi - lo) { b } else { hi };
        acc.add(integrate(rule, lo, hi, &mut g));
        lo = hi;
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one_and_polynomials_exact() {
        for n in [4, 8, 16, 32, 64] {
            let r = gauss_legendre(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let v = integrate(&r, 0.0, 1.0, |x| x.powi(deg as i32));
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n} v={v}");
        }
    }

    #[test]
    fn singular_power_law() {
        for gamma in [-0.9, -0.5, -0.25, 0.0, 0.7] {
            let v = integrate_singular_left(gl64(), 0.3, gamma, |d| d.powf(gamma));
            let want = 0.3f64.powf(gamma + 1.0) / (gamma + 1.0);
            assert!(((v - want) / want).abs() < 1e-12, "gamma={gamma}: {v} vs {want}");
        }
    }

    #[test]
    fn graded_rule_near_singularity() {
        let gamma = -0.6;
        for (a, b) in [(0.0, 1.0), (1e-9, 1.0), (1e-3, 2e-3), (0.4, 0.5)] {
            let v = integrate_near_origin(gl32(), a, b, gamma, |d| d.powf(gamma) * (1.0 + d));
            let f = |x: f64| x.powf(gamma + 1.0) / (gamma + 1.0) + x.powf(gamma + 2.0) / (gamma + 2.0);
            let want = f(b) - f(a);
            assert!(((v - want) / want).abs() < 1e-12, "[{a},{b}] {v} vs {want}");
        }
    }
}
