//! Empirical bridges of the distinct-count paths, the quadratic statistic
//! `W²`, and the homogeneity test report.

use std::fmt;

use serde::Serialize;

use crate::backend::{CdfBackend, NullDistribution};
use crate::error::{Error, Result};
use crate::estimation::{theta_estimator, AMeasure, ThetaEstimate};
use crate::limit::NullSpec;
use crate::urn::{backward_counts, forward_counts, OccupancyPath, Stream};
use crate::Variant;

/// Streams shorter than this get a small-sample warning.
pub const SMALL_SAMPLE: usize = 8;

/// Bridge values at `k/n`, `k = 0..=n`; linear between grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgePath {
    grid_values: Vec<f64>,
    theta_used: f64,
    variant: Variant,
    rn: u32,
}

impl BridgePath {
    /// Wraps precomputed grid values; both endpoints must be exactly 0.
    pub fn from_grid_values(
        grid_values: Vec<f64>,
        theta_used: f64,
        variant: Variant,
        rn: u32,
    ) -> Result<Self> {
        if grid_values.len() < 2 {
            return Err(Error::InvalidParameter("a bridge needs at least two grid values".into()));
        }
        if grid_values[0] != 0.0 || grid_values[grid_values.len() - 1] != 0.0 {
            return Err(Error::InvalidParameter("bridge endpoints must be 0".into()));
        }
        Ok(Self { grid_values, theta_used, variant, rn })
    }

    pub fn grid_values(&self) -> &[f64] {
        &self.grid_values
    }

    pub fn theta_used(&self) -> f64 {
        self.theta_used
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rn(&self) -> u32 {
        self.rn
    }

    /// Number of steps `n`.
    pub fn n(&self) -> usize {
        self.grid_values.len() - 1
    }

    /// Piecewise-linear interpolant at `t ∈ [0,1]`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.n();
        let x = t.clamp(0.0, 1.0) * n as f64;
        let k = (x.floor() as usize).min(n - 1);
        let u = x - k as f64;
        (1.0 - u) * self.grid_values[k] + u * self.grid_values[k + 1]
    }
}

/// `(R_k − (k/n)^θ R_n)/√R_n` for `k = 0..=n`, with both endpoints set to 0.
pub fn empirical_bridge(path: &OccupancyPath, theta: f64, variant: Variant) -> Result<BridgePath> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta {theta} outside (0,1)")));
    }
    let n = path.len();
    let rn = path.total();
    if n == 0 || rn == 0 {
        return Err(Error::EmptyStream);
    }
    let rn_f = rn as f64;
    let scale = rn_f.sqrt().recip();
    let inv_n = 1.0 / n as f64;
    let mut grid_values: Vec<f64> = path
        .counts()
        .iter()
        .enumerate()
        .map(|(k, &r)| (r as f64 - (k as f64 * inv_n).powf(theta) * rn_f) * scale)
        .collect();
    grid_values[0] = 0.0;
    grid_values[n] = 0.0;
    Ok(BridgePath { grid_values, theta_used: theta, variant, rn })
}

fn squared_norm(z: &[f64]) -> f64 {
    let n = z.len() - 1;
    let sum: f64 = z[1..n].iter().zip(&z[2..]).map(|(a, b)| a * (2.0 * a + b)).sum();
    sum / (3.0 * n as f64)
}

/// `(1/3n) Σ_{k=1}^{n−1} [Z_k(2Z_k + Z_{k+1}) + Z'_k(2Z'_k + Z'_{k+1})]`.
pub fn w2_statistic(bz: &BridgePath, bzp: &BridgePath) -> Result<f64> {
    if bz.n() != bzp.n() {
        return Err(Error::Mismatch(format!("bridge lengths {} and {}", bz.n(), bzp.n())));
    }
    if bz.theta_used != bzp.theta_used {
        return Err(Error::Mismatch("bridges built with different exponents".into()));
    }
    Ok(squared_norm(&bz.grid_values) + squared_norm(&bzp.grid_values))
}

/// `W²` of a stream at a fixed exponent, from its forward and backward paths.
pub fn w2_from_paths(
    fwd: &OccupancyPath,
    bwd: &OccupancyPath,
    theta: f64,
    variant: Variant,
) -> Result<f64> {
    w2_statistic(&empirical_bridge(fwd, theta, variant)?, &empirical_bridge(bwd, theta, variant)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaSource {
    Fixed,
    Estimated,
}

impl fmt::Display for ThetaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThetaSource::Fixed => "fixed",
            ThetaSource::Estimated => "estimated",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub w2: f64,
    pub variant: Variant,
    pub theta: f64,
    pub theta_source: ThetaSource,
    pub p_value: f64,
    pub cdf_backend: CdfBackend,
    pub reps: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl TestReport {
    /// Flat `key=value` lines; warnings are joined with `; `.
    pub fn to_text(&self) -> String {
        format!(
            "w2={}\nvariant={}\ntheta={}\ntheta_source={}\np_value={}\ncdf_backend={}\nreps={}\nseed={}\nwarnings={}\n",
            self.w2,
            self.variant,
            self.theta,
            self.theta_source,
            self.p_value,
            self.cdf_backend,
            self.reps,
            self.seed,
            self.warnings.join("; "),
        )
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

fn small_sample_warning(n: usize, warnings: &mut Vec<String>) {
    if n < SMALL_SAMPLE {
        warnings.push(format!("small sample: n={n} < {SMALL_SAMPLE}, asymptotic p-value is unreliable"));
    }
}

pub fn run_known_theta_test(
    s: &Stream,
    theta: f64,
    cdf: &dyn NullDistribution,
) -> Result<TestReport> {
    let fwd = forward_counts(s);
    let bwd = backward_counts(s);
    let w2 = w2_from_paths(&fwd, &bwd, theta, Variant::Known)?;
    let p = cdf.p_value(&NullSpec::known(theta), w2)?;
    let mut warnings = Vec::new();
    small_sample_warning(s.len(), &mut warnings);
    warnings.extend(p.warnings);
    Ok(TestReport {
        w2,
        variant: Variant::Known,
        theta,
        theta_source: ThetaSource::Fixed,
        p_value: p.value,
        cdf_backend: p.backend,
        reps: p.reps,
        seed: cdf.seed(),
        warnings,
    })
}

/// `Ŵ²` of a stream together with the exponent estimate it was built from.
pub fn estimated_w2(s: &Stream, measure: &AMeasure) -> Result<(f64, ThetaEstimate)> {
    let fwd = forward_counts(s);
    let bwd = backward_counts(s);
    let est = theta_estimator(&fwd, &bwd, measure)?;
    let w2 = w2_from_paths(&fwd, &bwd, est.value, Variant::Estimated)?;
    Ok((w2, est))
}

pub fn run_estimated_theta_test(
    s: &Stream,
    measure: &AMeasure,
    cdf: &dyn NullDistribution,
) -> Result<TestReport> {
    let (w2, est) = estimated_w2(s, measure)?;
    let p = cdf.p_value(&NullSpec::estimated(est.value, measure.clone()), w2)?;
    let mut warnings = Vec::new();
    small_sample_warning(s.len(), &mut warnings);
    if est.clamped {
        warnings.push(format!(
            "estimated exponent {} outside [0.01, 0.99]; clamped to {}",
            est.raw(),
            est.value
        ));
    }
    warnings.push(
        "plug-in null: limiting law evaluated at the estimated exponent; may under-cover for small n"
            .into(),
    );
    warnings.extend(p.warnings);
    Ok(TestReport {
        w2,
        variant: Variant::Estimated,
        theta: est.value,
        theta_source: ThetaSource::Estimated,
        p_value: p.value,
        cdf_backend: p.backend,
        reps: p.reps,
        seed: cdf.seed(),
        warnings,
    })
}
