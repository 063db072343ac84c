//! Null-distribution backends answering p-value queries for `W²` and `Ŵ²`.
//!
//! Backends cache the tabulated law per (exponent, measure) so repeated
//! queries reuse it. Caches are filled outside the lock; two threads racing on
//! the same key compute identical values and the first insert wins.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::limit::{limit_w2_sample, LimitSample, NullSpec};
use crate::spectral::{nystrom_eigs, spectral_p_value, SpectralModel};
use crate::Variant;

/// Which computation produced a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CdfBackend {
    #[serde(rename = "montecarlo")]
    MonteCarlo,
    #[serde(rename = "spectral")]
    Spectral,
    /// Monte Carlo after the spectral evaluation declined.
    #[serde(rename = "montecarlo-fallback")]
    MonteCarloFallback,
}

impl fmt::Display for CdfBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CdfBackend::MonteCarlo => "montecarlo",
            CdfBackend::Spectral => "spectral",
            CdfBackend::MonteCarloFallback => "montecarlo-fallback",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValue {
    pub value: f64,
    pub backend: CdfBackend,
    /// Monte Carlo replications behind the value; 0 for spectral answers.
    pub reps: usize,
    pub warnings: Vec<String>,
}

pub trait NullDistribution: Send + Sync {
    fn p_value(&self, spec: &NullSpec, w2: f64) -> Result<PValue>;
    /// Master seed of any simulation behind the answers.
    fn seed(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key(u64, Option<String>);

fn key(spec: &NullSpec) -> Key {
    Key(spec.theta.to_bits(), spec.measure.as_ref().map(|m| m.spec_string()))
}

struct Cache<T>(Mutex<HashMap<Key, Arc<T>>>);

impl<T> Cache<T> {
    fn new() -> Self {
        Self(Mutex::new(HashMap::new()))
    }

    fn get_or_try<F: FnOnce() -> Result<T>>(&self, spec: &NullSpec, build: F) -> Result<Arc<T>> {
        let k = key(spec);
        if let Some(v) = self.0.lock().expect("cache lock").get(&k) {
            return Ok(Arc::clone(v));
        }
        let built = Arc::new(build()?);
        Ok(Arc::clone(self.0.lock().expect("cache lock").entry(k).or_insert(built)))
    }
}

fn check_w2(w2: f64) -> Result<()> {
    if w2 < 0.0 || w2.is_nan() {
        return Err(Error::Domain(format!("statistic must be non-negative, got {w2}")));
    }
    Ok(())
}

/// Simulates the limiting law on a grid and reports `(r + 1)/(m + 1)`.
pub struct MonteCarloNull {
    grid_size: usize,
    reps: usize,
    seed: u64,
    cache: Cache<LimitSample>,
}

impl MonteCarloNull {
    pub fn new(grid_size: usize, reps: usize, seed: u64) -> Self {
        Self { grid_size, reps, seed, cache: Cache::new() }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn sample(&self, spec: &NullSpec) -> Result<Arc<LimitSample>> {
        self.cache
            .get_or_try(spec, || limit_w2_sample(spec, self.grid_size, self.reps, self.seed))
    }
}

impl NullDistribution for MonteCarloNull {
    fn p_value(&self, spec: &NullSpec, w2: f64) -> Result<PValue> {
        check_w2(w2)?;
        let sample = self.sample(spec)?;
        Ok(PValue {
            value: sample.p_value(w2),
            backend: CdfBackend::MonteCarlo,
            reps: sample.reps(),
            warnings: Vec::new(),
        })
    }

    fn seed(&self) -> u64 {
        self.seed
    }
}

/// Nyström eigenvalues plus the alternating-integral CDF.
pub struct SpectralNull {
    m: usize,
    kmax: usize,
    cache: Cache<SpectralModel>,
}

impl SpectralNull {
    pub const DEFAULT_M: usize = 256;
    pub const DEFAULT_KMAX: usize = 64;

    pub fn new(m: usize, kmax: usize) -> Self {
        Self { m, kmax, cache: Cache::new() }
    }

    pub fn model(&self, spec: &NullSpec) -> Result<Arc<SpectralModel>> {
        self.cache.get_or_try(spec, || nystrom_eigs(spec, self.m, self.kmax))
    }
}

impl Default for SpectralNull {
    fn default() -> Self {
        Self::new(Self::DEFAULT_M, Self::DEFAULT_KMAX)
    }
}

impl NullDistribution for SpectralNull {
    fn p_value(&self, spec: &NullSpec, w2: f64) -> Result<PValue> {
        check_w2(w2)?;
        let model = self.model(spec)?;
        Ok(PValue {
            value: spectral_p_value(&model, w2)?,
            backend: CdfBackend::Spectral,
            reps: 0,
            warnings: Vec::new(),
        })
    }

    fn seed(&self) -> u64 {
        0
    }
}

/// Spectral first; Monte Carlo when the spectral evaluation declines.
pub struct AutoNull {
    spectral: SpectralNull,
    montecarlo: MonteCarloNull,
}

impl AutoNull {
    pub fn new(spectral: SpectralNull, montecarlo: MonteCarloNull) -> Self {
        Self { spectral, montecarlo }
    }

    pub fn spectral(&self) -> &SpectralNull {
        &self.spectral
    }

    pub fn montecarlo(&self) -> &MonteCarloNull {
        &self.montecarlo
    }
}

impl NullDistribution for AutoNull {
    fn p_value(&self, spec: &NullSpec, w2: f64) -> Result<PValue> {
        match self.spectral.p_value(spec, w2) {
            Err(e @ (Error::Declined(_) | Error::Spectrum(_))) => {
                let mut p = self.montecarlo.p_value(spec, w2)?;
                p.backend = CdfBackend::MonteCarloFallback;
                p.warnings.push(format!("spectral backend declined: {e}"));
                Ok(p)
            }
            other => other,
        }
    }

    fn seed(&self) -> u64 {
        self.montecarlo.seed()
    }
}

/// A previously tabulated law loaded from an artifact; answers only queries
/// for the exponent and measure it was built for.
pub enum PrecomputedNull {
    Sample(LimitSample),
    Spectral(SpectralModel),
}

impl PrecomputedNull {
    pub fn spec(&self) -> NullSpec {
        match self {
            PrecomputedNull::Sample(s) => s.spec(),
            PrecomputedNull::Spectral(m) => m.spec(),
        }
    }

    pub fn variant(&self) -> Variant {
        self.spec().variant()
    }
}

impl NullDistribution for PrecomputedNull {
    fn p_value(&self, spec: &NullSpec, w2: f64) -> Result<PValue> {
        check_w2(w2)?;
        let own = self.spec();
        if (own.theta - spec.theta).abs() > 1e-12 || own.measure != spec.measure {
            return Err(Error::Mismatch(format!(
                "artifact tabulates {} θ={}; query needs {} θ={}",
                own.variant(),
                own.theta,
                spec.variant(),
                spec.theta
            )));
        }
        match self {
            PrecomputedNull::Sample(s) => Ok(PValue {
                value: s.p_value(w2),
                backend: CdfBackend::MonteCarlo,
                reps: s.reps(),
                warnings: Vec::new(),
            }),
            PrecomputedNull::Spectral(m) => Ok(PValue {
                value: spectral_p_value(m, w2)?,
                backend: CdfBackend::Spectral,
                reps: 0,
                warnings: Vec::new(),
            }),
        }
    }

    fn seed(&self) -> u64 {
        match self {
            PrecomputedNull::Sample(s) => s.seed(),
            PrecomputedNull::Spectral(_) => 0,
        }
    }
}

/// Evaluates the wrapped backend only at exponents `i/per_unit` and
/// interpolates the p-value linearly in between, so a batch of plug-in
/// queries shares a handful of tabulated laws.
pub struct LatticeNull<B> {
    inner: B,
    per_unit: usize,
}

impl<B: NullDistribution> LatticeNull<B> {
    pub fn new(inner: B, per_unit: usize) -> Self {
        assert!(per_unit >= 2, "lattice needs at least one interior node");
        Self { inner, per_unit }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn at(&self, spec: &NullSpec, node: usize, w2: f64) -> Result<PValue> {
        let node = node.clamp(1, self.per_unit - 1);
        let theta = node as f64 / self.per_unit as f64;
        self.inner.p_value(&NullSpec { theta, measure: spec.measure.clone() }, w2)
    }
}

impl<B: NullDistribution> NullDistribution for LatticeNull<B> {
    fn p_value(&self, spec: &NullSpec, w2: f64) -> Result<PValue> {
        let pos = spec.theta * self.per_unit as f64;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 || pos <= 1.0 || pos >= (self.per_unit - 1) as f64 {
            return self.at(spec, nearest.max(0.0) as usize, w2);
        }
        let lo_node = pos.floor() as usize;
        let frac = pos - lo_node as f64;
        let lo = self.at(spec, lo_node, w2)?;
        let hi = self.at(spec, lo_node + 1, w2)?;
        let mut warnings = lo.warnings;
        for w in hi.warnings {
            if !warnings.contains(&w) {
                warnings.push(w);
            }
        }
        let backend = if lo.backend == hi.backend { lo.backend } else { CdfBackend::MonteCarloFallback };
        Ok(PValue {
            value: (1.0 - frac) * lo.value + frac * hi.value,
            backend,
            reps: lo.reps.max(hi.reps),
            warnings,
        })
    }

    fn seed(&self) -> u64 {
        self.inner.seed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::AMeasure;

    #[test]
    fn montecarlo_p_value_uses_plus_one_rule() {
        let mc = MonteCarloNull::new(32, 99, 1);
        let spec = NullSpec::known(0.5);
        let p = mc.p_value(&spec, 1e9).unwrap();
        assert_eq!(p.value, 0.01);
        assert_eq!(p.reps, 99);
        assert_eq!(mc.p_value(&spec, 0.0).unwrap().value, 1.0);
        assert!(Arc::ptr_eq(&mc.sample(&spec).unwrap(), &mc.sample(&spec).unwrap()));
    }

    #[test]
    fn auto_falls_back_on_decline() {
        // two eigenvalues cannot carry the alternating sum to convergence at the mean
        let auto = AutoNull::new(SpectralNull::new(8, 2), MonteCarloNull::new(16, 50, 2));
        let spec = NullSpec::known(0.5);
        let w2 = auto.spectral().model(&spec).unwrap().trace();
        assert!(auto.spectral().p_value(&spec, w2).unwrap_err().is_declined());
        let p = auto.p_value(&spec, w2).unwrap();
        assert_eq!(p.backend, CdfBackend::MonteCarloFallback);
        assert!(p.value > 0.0 && p.value <= 1.0);
        assert!(p.warnings[0].starts_with("spectral backend declined"));
    }

    #[test]
    fn precomputed_rejects_other_specs() {
        let sample = limit_w2_sample(&NullSpec::known(0.5), 16, 20, 3).unwrap();
        let pre = PrecomputedNull::Sample(sample);
        assert!(pre.p_value(&NullSpec::known(0.5), 0.1).is_ok());
        assert!(matches!(pre.p_value(&NullSpec::known(0.6), 0.1), Err(Error::Mismatch(_))));
        assert!(matches!(
            pre.p_value(&NullSpec::estimated(0.5, AMeasure::example1()), 0.1),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn lattice_interpolates_between_nodes() {
        let lattice = LatticeNull::new(SpectralNull::new(64, 16), 10);
        let w2 = 0.2;
        let lo = lattice.inner().p_value(&NullSpec::known(0.4), w2).unwrap().value;
        let hi = lattice.inner().p_value(&NullSpec::known(0.5), w2).unwrap().value;
        let mid = lattice.p_value(&NullSpec::known(0.425), w2).unwrap().value;
        assert!((mid - (0.75 * lo + 0.25 * hi)).abs() < 1e-12);
        let node = lattice.p_value(&NullSpec::known(0.4), w2).unwrap().value;
        assert_eq!(node, lo);
    }
}
