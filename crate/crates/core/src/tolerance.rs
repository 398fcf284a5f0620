use crate::error::{Error, Result};

/// Numerical tolerances shared by the linear algebra, learning and decoding
/// routines.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TolerancePolicy {
    /// A pivot counts iff `|pivot| > rank_tol * max|entry|`.
    pub rank_tol: f64,
    /// Absolute threshold below which a residual is zero.
    pub zero_tol: f64,
    /// Relative threshold for two ratios to be "identical".
    pub ratio_tol: f64,
    /// Entry `v_k` is nonzero iff `|v_k| > sparsity_tol * max|v|`.
    pub sparsity_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            rank_tol: 1e-9,
            zero_tol: 1e-9,
            ratio_tol: 1e-9,
            sparsity_tol: 1e-8,
        }
    }
}

impl TolerancePolicy {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rank_tol, self.zero_tol, self.ratio_tol, self.sparsity_tol];
        if all.iter().all(|t| *t > 0.0 && *t < 1.0) {
            Ok(())
        } else {
            Err(Error::InvalidTolerance)
        }
    }
}
