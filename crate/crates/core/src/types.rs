use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent α of the function class, strictly inside (1/2, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.5 && value < 1.0 {
            Ok(Alpha(value))
        } else {
            Err(Error::Parameter(format!("alpha must lie in (1/2, 1), got {value}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Alpha {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        Alpha::new(v)
    }
}

impl From<Alpha> for f64 {
    fn from(a: Alpha) -> f64 {
        a.0
    }
}

/// Strictly increasing list of positive dilations, each below 2^63.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u64>", into = "Vec<u64>")]
pub struct DilationSequence(Vec<u64>);

impl DilationSequence {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("dilation sequence is empty".into()));
        }
        if values[0] == 0 {
            return Err(Error::Parameter("dilations must be positive".into()));
        }
        if let Some(w) = values.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(format!(
                "dilations must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if *values.last().unwrap() > i64::MAX as u64 {
            return Err(Error::Capability("dilations are capped at 2^63 - 1".into()));
        }
        Ok(DilationSequence(values))
    }

    /// The identity sequence 1..=n.
    pub fn identity(n: usize) -> Result<Self> {
        Self::new((1..=n as u64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &n)| n == i as u64 + 1)
    }

    pub fn max(&self) -> u64 {
        *self.0.last().unwrap()
    }
}

impl TryFrom<Vec<u64>> for DilationSequence {
    type Error = Error;
    fn try_from(v: Vec<u64>) -> Result<Self> {
        DilationSequence::new(v)
    }
}

impl From<DilationSequence> for Vec<u64> {
    fn from(d: DilationSequence) -> Vec<u64> {
        d.0
    }
}

/// Real coefficients c_k indexed from `start_index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    pub values: Vec<f64>,
    pub start_index: usize,
}

impl CoefficientSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_start(values, 1)
    }

    pub fn with_start(values: Vec<f64>, start_index: usize) -> Result<Self> {
        if start_index == 0 {
            return Err(Error::Parameter("start_index must be at least 1".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite coefficient {v}")));
        }
        Ok(CoefficientSequence { values, start_index })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// c_k for an absolute index k, zero outside the stored range.
    pub fn at(&self, k: usize) -> f64 {
        if k < self.start_index {
            return 0.0;
        }
        self.values.get(k - self.start_index).copied().unwrap_or(0.0)
    }

    pub fn abs(&self) -> Self {
        CoefficientSequence {
            values: self.values.iter().map(|v| v.abs()).collect(),
            start_index: self.start_index,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        crate::summation::sum(self.values.iter().map(|v| v * v))
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<()> {
        if self.values.len() != expected {
            return Err(Error::LengthMismatch { expected, got: self.values.len() });
        }
        Ok(())
    }
}

/// Interval enclosure of a squared norm or inner product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEnclosure {
    pub lower: f64,
    pub upper: f64,
    pub method: NormMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    ExactGcd,
    ParsevalTruncated,
    Quadrature,
}

impl NormEnclosure {
    pub fn point(value: f64, method: NormMethod) -> Self {
        NormEnclosure { lower: value, upper: value, method }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Containment with a relative slack for rounding.
    pub fn contains(&self, value: f64, rel_slack: f64) -> bool {
        let pad = rel_slack * value.abs().max(self.upper.abs());
        value >= self.lower - pad && value <= self.upper + pad
    }
}
