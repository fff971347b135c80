//! Subcommand parameters and their computations.

use clap::{Args, ValueEnum};
use gcdlab::dilated_series::{franel_exact, norm_squared, parseval_norm, quadrature_norm, DEFAULT_PARSEVAL_J};
use gcdlab::extremal::{
    block_gcd_identity, block_norm_increments, divergence_partial_sums, th1_blocks, th2_construction, BlockFamily,
    Construction, Th1Construction, Th2Params,
};
use gcdlab::gcd_spectra::{
    dense_eigenvalues, growth_exponent, hilberdink_majorant, largest_eigenvalue_with, min_eigenvalue, quadratic_form,
    GcdMatrixSpec, PowerOptions, DENSE_THRESHOLD,
};
use gcdlab::numtheory::{divisor_count, gronwall_bound, primorial, sigma};
use gcdlab::simulate::{
    cesaro_average, clt_from, correlation, couple_independent, maximal_ratio, sample_blocks, sample_points, sup_tracker,
    trajectory, SimulationConfig,
};
use gcdlab::special_functions::{riemann_zeta, FourierProfile};
use gcdlab::{Alpha, CoefficientSequence, DilationSequence, Error, NormEnclosure};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::acceptance;
use crate::app::{merge, AppError, Command, Rendered, EXIT_OK, EXIT_VIOLATION};

/// Header plus rows of already formatted cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip form, as in the JSON output.
fn num(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).unwrap_or_default()
    } else {
        v.to_string()
    }
}

fn alpha(a: f64) -> Result<Alpha, AppError> {
    Ok(Alpha::new(a)?)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, AppError> {
    serde_json::to_value(v).map_err(|e| AppError::Io(e.to_string()))
}

fn render<C: Serialize>(command: &'static str, config: &C, result: Value, table: Table) -> Result<Rendered, AppError> {
    Ok(Rendered { command, config: to_value(config)?, result, table, exit: EXIT_OK })
}

fn dilations_of(n: Option<usize>, list: &Option<Vec<u64>>) -> Result<DilationSequence, AppError> {
    match (n, list) {
        (_, Some(d)) => Ok(DilationSequence::new(d.clone())?),
        (Some(n), None) => Ok(DilationSequence::identity(n)?),
        (None, None) => Err(AppError::Usage("give --n or --dilations".into())),
    }
}

fn coefficients_of(list: &Option<Vec<f64>>, len: usize) -> Result<CoefficientSequence, AppError> {
    let c = CoefficientSequence::new(list.clone().unwrap_or_else(|| vec![1.0; len]))?;
    if c.len() != len {
        return Err(Error::LengthMismatch { expected: len, got: c.len() }.into());
    }
    Ok(c)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct SigmaArgs {
    /// exponent s of σ_s
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// single argument k
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    /// all k = 1..=k_max
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u64>,
    /// primorials of the first 1..=r primes
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub primorials: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    #[serde(default)]
    pub s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primorials: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SigmaRow {
    k: u64,
    sigma: f64,
    divisor_count: u64,
    /// σ_s(k) / envelope, for -1 < s < 0
    #[serde(skip_serializing_if = "Option::is_none")]
    gronwall_ratio: Option<f64>,
}

fn run_sigma(cfg: &SigmaConfig) -> Result<Rendered, AppError> {
    let ks: Vec<u64> = match (cfg.k, cfg.k_max, cfg.primorials) {
        (Some(k), None, None) => vec![k],
        (None, Some(m), None) => {
            if m > 1_000_000 {
                return Err(AppError::Usage("k_max is capped at 1000000".into()));
            }
            (1..=m).collect()
        }
        (None, None, Some(r)) => (1..=r)
            .map(|i| primorial(i).try_into().map_err(|_| AppError::Core(Error::Capability(format!("primorial({i}) exceeds u64")))))
            .collect::<Result<_, _>>()?,
        _ => return Err(AppError::Usage("give exactly one of --k, --k-max, --primorials".into())),
    };
    if ks.contains(&0) {
        return Err(Error::Domain("k must be positive".into()).into());
    }
    let mut table = Table::new(&["k", "sigma", "divisor_count", "gronwall_ratio"]);
    let rows = ks
        .iter()
        .map(|&k| {
            let s = sigma(cfg.s, k);
            let ratio = if cfg.s > -1.0 && cfg.s < 0.0 { Some(s / gronwall_bound(-cfg.s, k)?) } else { None };
            let row = SigmaRow { k, sigma: s, divisor_count: divisor_count(k), gronwall_ratio: ratio };
            table.push(vec![k.to_string(), num(s), row.divisor_count.to_string(), ratio.map(num).unwrap_or_default()]);
            Ok(row)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    render("sigma", cfg, json!({ "s": cfg.s, "rows": to_value(&rows)? }), table)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct EigArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// dimension of G_N with dilations 1..=N
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// explicit increasing dilations, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<u64>>,
    /// residual tolerance of the power iteration
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// also solve the dense eigenproblem (N <= 512)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dense: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigConfig {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<u64>>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub dense: bool,
}

fn default_tolerance() -> f64 {
    PowerOptions::default().tolerance
}

fn run_eig(cfg: &EigConfig) -> Result<Rendered, AppError> {
    let al = alpha(cfg.alpha)?;
    if !(cfg.tolerance > 0.0) {
        return Err(AppError::Usage("tolerance must be positive".into()));
    }
    let spec = GcdMatrixSpec::new(al, dilations_of(cfg.n, &cfg.dilations)?);
    let n = spec.n();
    let r = largest_eigenvalue_with(&spec, PowerOptions { tolerance: cfg.tolerance, ..PowerOptions::default() });
    let mut result = match to_value(&r)? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    result.insert("n".into(), json!(n));
    if spec.dilations.is_identity() {
        result.insert("growth_exponent".into(), json!(growth_exponent(r.lambda, n, al)));
    }
    let mut table = Table::new(&["n", "lambda", "residual", "lower", "upper", "iterations", "converged", "dense_lambda", "min_eigenvalue"]);
    let (mut dl, mut me) = (String::new(), String::new());
    if cfg.dense {
        if n > DENSE_THRESHOLD {
            return Err(Error::Capability(format!("dense solve limited to N <= {DENSE_THRESHOLD}")).into());
        }
        let ev = dense_eigenvalues(&spec)?;
        let top = *ev.last().unwrap_or(&f64::NAN);
        result.insert("dense_lambda".into(), json!(top));
        result.insert("min_eigenvalue".into(), json!(ev[0]));
        dl = num(top);
        me = num(ev[0]);
    } else if n <= DENSE_THRESHOLD {
        let m = min_eigenvalue(&spec)?;
        result.insert("min_eigenvalue".into(), json!(m.lambda));
        me = num(m.lambda);
    }
    table.push(vec![
        n.to_string(),
        num(r.lambda),
        num(r.residual),
        num(r.certified_interval[0]),
        num(r.certified_interval[1]),
        r.iterations.to_string(),
        r.converged.to_string(),
        dl,
        me,
    ]);
    render("eig", cfg, Value::Object(result), table)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct GcdsumArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<u64>>,
    /// coefficients, comma separated (default all ones)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcdsumConfig {
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
}

fn run_gcdsum(cfg: &GcdsumConfig) -> Result<Rendered, AppError> {
    let al = alpha(cfg.alpha)?;
    let spec = GcdMatrixSpec::new(al, dilations_of(cfg.n, &cfg.dilations)?);
    let c = coefficients_of(&cfg.coeffs, spec.n())?;
    let form = quadratic_form(&spec, &c)?;
    let abs_form = quadratic_form(&spec, &c.abs())?;
    let norm_sq = riemann_zeta(2.0 * cfg.alpha) / 2.0 * form;
    let majorant = if spec.dilations.is_identity() && spec.n() <= 4096 { Some(hilberdink_majorant(&c, al, 1)?) } else { None };
    let mut table = Table::new(&["n", "quadratic_form", "abs_quadratic_form", "norm_squared", "majorant"]);
    table.push(vec![spec.n().to_string(), num(form), num(abs_form), num(norm_sq), majorant.map(num).unwrap_or_default()]);
    let mut result = json!({
        "n": spec.n(),
        "quadratic_form": form,
        "abs_quadratic_form": abs_form,
        "norm_squared": norm_sq,
    });
    if let Some(m) = majorant {
        result["majorant"] = json!(m);
    }
    render("gcdsum", cfg, result, table)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileChoice {
    Sine,
    Cosine,
    Bernoulli,
}

impl ProfileChoice {
    fn build(self, a: Alpha) -> FourierProfile {
        match self {
            ProfileChoice::Sine => FourierProfile::sine_extremal(a),
            ProfileChoice::Cosine => FourierProfile::cosine_extremal(a),
            ProfileChoice::Bernoulli => FourierProfile::bernoulli(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormChoice {
    Exact,
    Parseval,
    Quadrature,
    All,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NormArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileChoice>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<NormChoice>,
    /// Fourier truncation J of the Parseval enclosure
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    #[serde(default = "default_profile")]
    pub profile: ProfileChoice,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dilations: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default = "default_method")]
    pub method: NormChoice,
    #[serde(default = "default_truncation")]
    pub truncation: u64,
}

fn default_profile() -> ProfileChoice {
    ProfileChoice::Sine
}

fn default_method() -> NormChoice {
    NormChoice::All
}

fn default_truncation() -> u64 {
    DEFAULT_PARSEVAL_J
}

fn run_norm(cfg: &NormConfig) -> Result<Rendered, AppError> {
    let profile = cfg.profile.build(alpha(cfg.alpha)?);
    let d = dilations_of(cfg.n, &cfg.dilations)?;
    let c = coefficients_of(&cfg.coeffs, d.len())?;
    let mut out: Vec<NormEnclosure> = Vec::new();
    if matches!(cfg.method, NormChoice::Exact | NormChoice::All) {
        out.push(norm_squared(&profile, &d, &c)?);
    }
    if matches!(cfg.method, NormChoice::Parseval | NormChoice::All) {
        out.push(parseval_norm(&profile, &d, &c, cfg.truncation)?);
    }
    if matches!(cfg.method, NormChoice::Quadrature) || (cfg.method == NormChoice::All && profile.is_singular_at_zero()) {
        out.push(quadrature_norm(&profile, &d, &c)?);
    }
    let mut table = Table::new(&["method", "lower", "upper"]);
    for e in &out {
        let m = to_value(&e.method)?;
        table.push(vec![m.as_str().unwrap_or_default().to_string(), num(e.lower), num(e.upper)]);
    }
    render("norm", cfg, json!({ "n": d.len(), "enclosures": to_value(&out)? }), table)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct FranelArgs {
    /// all pairs 1 <= k <= l <= max
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FranelConfig {
    #[serde(default = "default_franel_max")]
    pub max: u64,
}

fn default_franel_max() -> u64 {
    30
}

fn run_franel(cfg: &FranelConfig) -> Result<Rendered, AppError> {
    if cfg.max == 0 || cfg.max > 200 {
        return Err(AppError::Usage("max must lie in 1..=200".into()));
    }
    let mut table = Table::new(&["k", "l", "value"]);
    let mut pairs = Vec::new();
    for k in 1..=cfg.max {
        for l in k..=cfg.max {
            let v = franel_exact(k, l)?;
            let s = format!("{}/{}", v.numer(), v.denom());
            table.push(vec![k.to_string(), l.to_string(), s.clone()]);
            pairs.push(json!({ "k": k, "l": l, "value": s }));
        }
    }
    render("franel", cfg, json!({ "count": pairs.len(), "pairs": pairs }), table)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindChoice {
    Th1,
    Th2,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtremalArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<KindChoice>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// ε of the Th1 coefficients
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_max: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    /// also compare direct and closed-form block GCD sums (blocks up to 4096 elements)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_identity: Option<bool>,
    /// write the full construction record to this file
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremalConfig {
    #[serde(default = "default_kind")]
    pub kind: KindChoice,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_i_max")]
    pub i_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k1: Option<f64>,
    #[serde(default)]
    pub check_identity: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<String>,
}

fn default_kind() -> KindChoice {
    KindChoice::Th1
}

fn default_alpha() -> f64 {
    0.75
}

fn default_eps() -> f64 {
    0.1
}

fn default_i_max() -> usize {
    16
}

fn th2_params(a: Alpha, delta: Option<f64>, beta: Option<f64>, k1: Option<f64>) -> Th2Params {
    let mut p = Th2Params::default_for(a);
    if let Some(d) = delta {
        p.delta = d;
        p.beta = 0.9 * d / (2.0 + d);
    }
    if let Some(b) = beta {
        p.beta = b;
    }
    if let Some(k) = k1 {
        p.k1 = k;
    }
    p
}

fn family_rows<C: BlockFamily>(c: &C, m: usize, check: bool) -> Result<(Vec<Value>, Table), AppError> {
    let inc = block_norm_increments(c, m)?;
    let sums = divergence_partial_sums(c, m)?;
    let mut table = Table::new(&["i", "cardinality", "increment", "partial_sum", "identity_direct", "identity_closed"]);
    let mut rows = Vec::new();
    for (i, b) in c.blocks()[..m].iter().enumerate() {
        let ident = if check && b.len() <= 4096 { Some(block_gcd_identity(b, c.alpha())) } else { None };
        table.push(vec![
            (i + 1).to_string(),
            b.len().to_string(),
            num(inc[i]),
            num(sums[i]),
            ident.map(|v| num(v.0)).unwrap_or_default(),
            ident.map(|v| num(v.1)).unwrap_or_default(),
        ]);
        let mut row = json!({
            "index": b.index,
            "base_two_exponent": b.base_two_exponent,
            "prime_count": b.prime_count,
            "cardinality": b.len(),
            "increment": inc[i],
            "partial_sum": sums[i],
        });
        if let Some((d, cl)) = ident {
            row["identity"] = json!({ "direct": d, "closed": cl });
        }
        rows.push(row);
    }
    Ok((rows, table))
}

fn run_extremal(cfg: &ExtremalConfig) -> Result<Rendered, AppError> {
    let a = alpha(cfg.alpha)?;
    let m = cfg.i_max;
    let (construction, result, table) = match cfg.kind {
        KindChoice::Th1 => {
            let c = th1_blocks(a, cfg.eps, m)?;
            let (rows, table) = family_rows(&c, m, cfg.check_identity)?;
            let mass = c.weyl_weighted_mass(m)?;
            let result = json!({
                "kind": "th1",
                "eta": c.eta,
                "blocks": rows,
                "weyl_weighted_mass": mass,
            });
            (Construction::Th1(c), result, table)
        }
        KindChoice::Th2 => {
            let c = th2_construction(th2_params(a, cfg.delta, cfg.beta, cfg.k1), m)?;
            let (mut rows, table) = family_rows(&c, m, cfg.check_identity)?;
            for (i, row) in rows.iter_mut().enumerate() {
                row["s"] = json!(c.s[i]);
                row["t"] = json!(c.t[i]);
                row["d"] = json!(c.d[i]);
                row["gamma"] = json!([c.gamma[i].0, c.gamma[i].1]);
            }
            let (mass, bound) = c.weyl_weighted_mass(m)?;
            let result = json!({
                "kind": "th2",
                "params": to_value(&c.params)?,
                "eta": c.eta,
                "s_final": c.s[m],
                "blocks": rows,
                "weyl_weighted_mass": mass,
                "weyl_mass_bound": bound,
            });
            (Construction::Th2(c), result, table)
        }
    };
    if let Some(path) = &cfg.record {
        std::fs::write(path, construction.to_json()? + "\n").map_err(|e| AppError::Io(format!("cannot write {path}: {e}")))?;
    }
    render("extremal", cfg, result, table)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// block coupling and normal approximation on the lacunary construction
    Clt,
    /// running maxima of partial sums on a Th1 prefix
    Sup,
    /// Cesàro means (1/N) Σ f(kx) at sampled x
    Cesaro,
    /// all partial sums at one x on a Th1 prefix
    Trajectory,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<SimMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_max: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_depth: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_cells: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// N of the Cesàro means
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// evaluation point of a trajectory
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default = "default_mode")]
    pub mode: SimMode,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_sim_i_max")]
    pub i_max: usize,
    #[serde(default = "default_grid_depth")]
    pub grid_depth: u64,
    #[serde(default = "default_quad_cells")]
    pub quad_cells: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_cesaro_n")]
    pub n: usize,
    #[serde(default = "default_x")]
    pub x: f64,
}

fn default_mode() -> SimMode {
    SimMode::Clt
}

fn default_seed() -> u64 {
    SimulationConfig::default().seed
}

fn default_samples() -> usize {
    SimulationConfig::default().samples
}

fn default_sim_i_max() -> usize {
    SimulationConfig::default().i_max
}

fn default_grid_depth() -> u64 {
    SimulationConfig::default().grid_depth
}

fn default_quad_cells() -> usize {
    SimulationConfig::default().quad_cells
}

fn default_cesaro_n() -> usize {
    1000
}

fn default_x() -> f64 {
    0.3
}

/// Largest Th1 horizon whose elements fit below 2^63.
pub const TH1_POINTWISE_MAX: usize = 11;

fn th1_series(c: &Th1Construction) -> Result<(DilationSequence, CoefficientSequence), AppError> {
    let mut pairs: Vec<(u64, f64)> = Vec::new();
    for (b, cs) in c.blocks.iter().zip(&c.coeffs) {
        for (mask, &ck) in cs.iter().enumerate() {
            let e = b.element(mask, c.primes());
            let e: u64 = e.try_into().map_err(|_| AppError::Core(Error::Capability("dilation exceeds u64".into())))?;
            pairs.push((e, ck));
        }
    }
    pairs.sort_by_key(|p| p.0);
    Ok((
        DilationSequence::new(pairs.iter().map(|p| p.0).collect())?,
        CoefficientSequence::new(pairs.iter().map(|p| p.1).collect())?,
    ))
}

fn th1_prefix(cfg: &SimulateConfig) -> Result<(FourierProfile, DilationSequence, CoefficientSequence), AppError> {
    if cfg.i_max > TH1_POINTWISE_MAX {
        return Err(Error::Capability(format!("pointwise modes support i_max <= {TH1_POINTWISE_MAX}")).into());
    }
    let a = alpha(cfg.alpha)?;
    let c = th1_blocks(a, cfg.eps, cfg.i_max)?;
    let (d, co) = th1_series(&c)?;
    Ok((FourierProfile::sine_extremal(a), d, co))
}

fn m_values(i_max: usize) -> Vec<usize> {
    let mut ms: Vec<usize> = (2..).map(|e| 1usize << e).take_while(|&m| m <= i_max).collect();
    if ms.last() != Some(&i_max) {
        ms.push(i_max);
    }
    ms
}

fn run_simulate(cfg: &SimulateConfig) -> Result<Rendered, AppError> {
    let sim = SimulationConfig {
        seed: cfg.seed,
        samples: cfg.samples,
        i_max: cfg.i_max,
        grid_depth: cfg.grid_depth,
        quad_cells: cfg.quad_cells,
    };
    sim.validate()?;
    match cfg.mode {
        SimMode::Clt => {
            let c = th2_construction(Th2Params::default_for(alpha(cfg.alpha)?), cfg.i_max)?;
            let report = couple_independent(&c, &sim)?;
            let samples = sample_blocks(&c, &sim)?;
            let diags = m_values(cfg.i_max)
                .into_iter()
                .map(|m| clt_from(&report, &samples, m))
                .collect::<Result<Vec<_>, _>>()?;
            let mut max_corr = 0.0f64;
            let cols: Vec<Vec<f64>> = (0..cfg.i_max).map(|i| samples.iter().map(|s| s.y[i]).collect()).collect();
            for i in 0..cols.len() {
                for j in i + 1..cols.len() {
                    max_corr = max_corr.max(correlation(&cols[i], &cols[j]).abs());
                }
            }
            let mut table = Table::new(&["i", "cardinality", "level", "d", "mean_y", "x_norm_sq", "y_norm_sq", "diff_norm", "y_abs_moment"]);
            for b in &report.blocks {
                table.push(vec![
                    b.index.to_string(),
                    b.cardinality.to_string(),
                    b.level.to_string(),
                    num(b.d),
                    num(b.mean_y),
                    num(b.x_norm_sq),
                    num(b.y_norm_sq),
                    num(b.diff_norm),
                    num(b.y_abs_moment),
                ]);
            }
            let result = json!({
                "coupling": to_value(&report)?,
                "diagnostics": to_value(&diags)?,
                "max_abs_correlation": max_corr,
                "correlation_threshold": 4.0 / (samples.len() as f64).sqrt(),
            });
            render("simulate", cfg, result, table)
        }
        SimMode::Sup => {
            let (p, d, c) = th1_prefix(cfg)?;
            let r = sup_tracker(&p, &d, &c, &sim)?;
            let ratio = maximal_ratio(&r, &p, &c);
            let mut table = Table::new(&["sample", "x", "max_abs", "final_sum"]);
            for (i, s) in r.per_sample.iter().enumerate() {
                table.push(vec![i.to_string(), num(s.x), num(s.max_abs), num(s.final_sum)]);
            }
            let exact = norm_squared(&p, &d, &c)?.lower;
            let result = json!({
                "n": d.len(),
                "coefficient_mass": c.norm_sq(),
                "norm_squared": exact,
                "max_sq_mean": r.max_sq_mean,
                "final_sq_mean": r.final_sq_mean,
                "final_sq_std_error": r.final_sq_std_error,
                "quantiles": to_value(&r.quantiles)?,
                "weyl_ratio": ratio,
            });
            render("simulate", cfg, result, table)
        }
        SimMode::Cesaro => {
            let xs = sample_points(cfg.seed, cfg.samples);
            let r = cesaro_average(&FourierProfile::sine_extremal(alpha(cfg.alpha)?), &xs, cfg.n)?;
            let mut table = Table::new(&["x", "average"]);
            for (x, v) in xs.iter().zip(&r.averages) {
                table.push(vec![num(*x), num(*v)]);
            }
            render("simulate", cfg, json!({ "n": r.n, "max_abs": r.max_abs, "x": xs, "averages": r.averages }), table)
        }
        SimMode::Trajectory => {
            let (p, d, c) = th1_prefix(cfg)?;
            let t = trajectory(&p, &d, &c, cfg.x, d.len())?;
            let mut table = Table::new(&["m", "dilation", "partial_sum"]);
            for (m, (v, n)) in t.iter().zip(d.as_slice()).enumerate() {
                table.push(vec![(m + 1).to_string(), n.to_string(), num(*v)]);
            }
            render("simulate", cfg, json!({ "x": cfg.x, "dilations": d.as_slice(), "partial_sums": t }), table)
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    /// run only these criteria, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_suite")]
    pub suite: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Vec<usize>>,
}

fn default_suite() -> String {
    "primary".into()
}

fn run_verify(cfg: &VerifyConfig) -> Result<Rendered, AppError> {
    if cfg.suite != "primary" {
        return Err(AppError::Usage(format!("unknown suite {:?}; the only suite is \"primary\"", cfg.suite)));
    }
    let report = acceptance::run_suite(cfg.criteria.as_deref().unwrap_or(&[]))?;
    let mut table = Table::new(&["criterion", "name", "passed", "seconds", "detail"]);
    for c in &report.criteria {
        eprintln!("{}", c.line());
        table.push(vec![c.id.to_string(), c.name.clone(), c.passed.to_string(), num(c.seconds), format!("\"{}\"", c.detail.replace('"', "'"))]);
    }
    let mut r = render("verify", cfg, to_value(&report)?, table)?;
    r.exit = if report.passed { EXIT_OK } else { EXIT_VIOLATION };
    Ok(r)
}

// ---------------------------------------------------------------------------

pub fn dispatch(command: &Command, file: &Map<String, Value>) -> Result<Rendered, AppError> {
    match command {
        Command::Sigma(a) => run_sigma(&merge(file, a)?),
        Command::Eig(a) => run_eig(&merge(file, a)?),
        Command::Gcdsum(a) => run_gcdsum(&merge(file, a)?),
        Command::Norm(a) => run_norm(&merge(file, a)?),
        Command::Franel(a) => run_franel(&merge(file, a)?),
        Command::Extremal(a) => run_extremal(&merge(file, a)?),
        Command::Simulate(a) => run_simulate(&merge(file, a)?),
        Command::Verify(a) => run_verify(&merge(file, a)?),
    }
}
