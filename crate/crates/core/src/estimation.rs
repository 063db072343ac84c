//! Exponent estimators built from the forward and backward paths.
//!
//! An [`AMeasure`] is a signed atomic measure `dA = Σ_j h_j δ_{t_j}` with
//! `Σ h_j = 0` and `Σ h_j ln t_j = 1`. The forward estimate is
//! `Σ_j h_j log⁺ R_{⌊n t_j⌋}`, the backward one uses `R'`, and the reported
//! estimate is their average.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{kernel_k, kernel_kprime};
use crate::urn::OccupancyPath;

/// Tolerance on the zero-mass and log-moment conditions.
pub const MEASURE_TOLERANCE: f64 = 1e-12;
/// Estimates outside `[CLAMP_LOW, CLAMP_HIGH]` are clamped and flagged.
pub const CLAMP_LOW: f64 = 0.01;
pub const CLAMP_HIGH: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Atom {
    pub location: f64,
    pub jump: f64,
}

impl FromStr for Atom {
    type Err = Error;

    /// Parses `t:h`.
    fn from_str(s: &str) -> Result<Self> {
        let (t, h) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidMeasure(format!("expected t:h, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidMeasure(format!("{v:?}: {e}")))
        };
        Ok(Atom { location: parse(t)?, jump: parse(h)? })
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.location, self.jump)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AMeasure {
    atoms: Vec<Atom>,
    delta: f64,
}

impl AMeasure {
    /// Jumps `−1/ln 2` at ½ and `+1/ln 2` at 1, giving `θ̂ = log₂(R_n / √(R_{⌊n/2⌋} R'_{⌊n/2⌋}))`.
    pub fn example1() -> Self {
        let h = 1.0 / std::f64::consts::LN_2;
        validate_measure(&[Atom { location: 0.5, jump: -h }, Atom { location: 1.0, jump: h }])
            .expect("example measure is valid")
    }

    /// Like [`validate_measure`], but first rescales the jumps so the log-moment is exactly 1.
    pub fn rescaled(atoms: &[Atom]) -> Result<Self> {
        let moment: f64 = atoms.iter().map(|a| a.jump * a.location.ln()).sum();
        if !(moment.abs() > 0.0) || !moment.is_finite() {
            return Err(Error::InvalidMeasure("log-moment is zero; cannot rescale".into()));
        }
        let scaled: Vec<Atom> =
            atoms.iter().map(|a| Atom { location: a.location, jump: a.jump / moment }).collect();
        validate_measure(&scaled)
    }

    /// Atoms sorted by location, duplicates merged.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Smallest atom location; `A` vanishes on `[0, δ)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `t:h` pairs joined by commas.
    pub fn spec_string(&self) -> String {
        self.atoms.iter().map(Atom::to_string).collect::<Vec<_>>().join(",")
    }
}

pub fn validate_measure(atoms: &[Atom]) -> Result<AMeasure> {
    if atoms.is_empty() {
        return Err(Error::InvalidMeasure("no atoms".into()));
    }
    for a in atoms {
        if !(a.location > 0.0 && a.location <= 1.0) {
            return Err(Error::InvalidMeasure(format!("atom location {} outside (0,1]", a.location)));
        }
        if !a.jump.is_finite() {
            return Err(Error::InvalidMeasure("non-finite jump".into()));
        }
    }
    let mut sorted = atoms.to_vec();
    sorted.sort_by(|a, b| a.location.total_cmp(&b.location));
    let mut merged: Vec<Atom> = Vec::with_capacity(sorted.len());
    for a in sorted {
        match merged.last_mut() {
            Some(last) if last.location == a.location => last.jump += a.jump,
            _ => merged.push(a),
        }
    }

    let scale: f64 = merged.iter().map(|a| a.jump.abs()).sum();
    let mass: f64 = merged.iter().map(|a| a.jump).sum();
    if mass.abs() > MEASURE_TOLERANCE * scale.max(1.0) {
        return Err(Error::InvalidMeasure(format!("total mass {mass} is not zero")));
    }
    let moment: f64 = merged.iter().map(|a| a.jump * a.location.ln()).sum();
    if (moment - 1.0).abs() > MEASURE_TOLERANCE {
        return Err(Error::InvalidMeasure(format!("log-moment {moment} is not 1")));
    }
    let delta = merged[0].location;
    Ok(AMeasure { atoms: merged, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaEstimate {
    /// Average of the two directional estimates, clamped to `[0.01, 0.99]`.
    pub value: f64,
    pub forward: f64,
    pub backward: f64,
    pub n: usize,
    /// `sqrt(asymptotic variance / R_n)` evaluated at `value`.
    pub asym_sd: f64,
    pub clamped: bool,
}

impl ThetaEstimate {
    /// Unclamped `(forward + backward) / 2`.
    pub fn raw(&self) -> f64 {
        0.5 * (self.forward + self.backward)
    }
}

fn index_at(n: usize, t: f64) -> usize {
    // ⌊n t⌋; the small allowance keeps decimal locations such as 0.29·100 on 29.
    ((n as f64 * t + 1e-9).floor() as usize).min(n)
}

fn directional(path: &OccupancyPath, measure: &AMeasure) -> f64 {
    let n = path.len();
    measure
        .atoms
        .iter()
        .map(|a| a.jump * (path.at(index_at(n, a.location)) as f64).ln().max(0.0))
        .sum()
}

pub fn theta_estimator(
    fwd: &OccupancyPath,
    bwd: &OccupancyPath,
    measure: &AMeasure,
) -> Result<ThetaEstimate> {
    let n = fwd.len();
    if bwd.len() != n {
        return Err(Error::Mismatch(format!("path lengths {n} and {}", bwd.len())));
    }
    if n < 2 {
        return Err(Error::InvalidParameter("estimation needs n ≥ 2".into()));
    }
    let forward = directional(fwd, measure);
    let backward = directional(bwd, measure);
    let raw = 0.5 * (forward + backward);
    let clamped = !(CLAMP_LOW..=CLAMP_HIGH).contains(&raw);
    let value = if raw.is_nan() { CLAMP_LOW } else { raw.clamp(CLAMP_LOW, CLAMP_HIGH) };
    let asym_sd = (estimator_asym_variance(value, measure) / fwd.total() as f64).sqrt();
    Ok(ThetaEstimate { value, forward, backward, n, asym_sd, clamped })
}

/// Closed form of the estimator under [`AMeasure::example1`].
pub fn theta_example1(rn: u64, r_half: u64, rp_half: u64) -> Result<f64> {
    if rn == 0 || r_half == 0 || rp_half == 0 {
        return Err(Error::InvalidParameter("counts must be positive".into()));
    }
    Ok((rn as f64 / (r_half as f64 * rp_half as f64).sqrt()).log2())
}

/// Variance of the limit of `√(E R_n)(θ̂ − θ)`:
/// `½ Σ_{j,l} h_j h_l (t_j t_l)^(−θ) (K + K')(t_j, t_l)`.
pub fn estimator_asym_variance(theta: f64, measure: &AMeasure) -> f64 {
    let mut total = 0.0;
    for a in &measure.atoms {
        for b in &measure.atoms {
            let k = kernel_k(theta, a.location, b.location)
                + kernel_kprime(theta, a.location, b.location);
            total += a.jump * b.jump * (a.location * b.location).powf(-theta) * k;
        }
    }
    0.5 * total
}
