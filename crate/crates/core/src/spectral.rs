//! Eigenvalues of the bridge covariance operator (Nyström) and the limiting
//! CDF of `W²` by Smirnov's alternating-integral formula.
//!
//! With operator eigenvalues `1/λ_1 > 1/λ_2 > …` the statistic is
//! `Σ η_k²/λ_k` for i.i.d. standard normal `η_k`, and
//! `1 − F(x) = (1/π) Σ_k (−1)^(k+1) ∫_{λ_{2k−1}}^{λ_{2k}} e^{−λx/2} / √(−D(λ)) dλ/λ`
//! with `D(λ) = Π_j (1 − λ/λ_j)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{BufRead, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimation::AMeasure;
use crate::kernel::{CovarianceKernel, EstimatedCorrection, LimitKernel};
use crate::limit::{parse_measure_list, NullSpec};
use crate::quad::{gauss_legendre, integrate_adaptive};
use crate::Variant;

/// Operator eigenvalues below this are treated as numerically zero.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Relative gap below which neighbouring eigenvalues are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;
/// An alternating-sum term below this ends the evaluation.
pub const TERM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    lambdas: Vec<f64>,
    multiplicity: Vec<usize>,
    kmax: usize,
    m: usize,
    trace: f64,
    trace_captured: f64,
    variant: Variant,
    theta: f64,
    measure: Option<AMeasure>,
    /// The listed eigenvalues are the whole spectrum (no truncation tail).
    complete: bool,
}

impl SpectralModel {
    /// A model whose spectrum is exactly `lambdas` (reciprocal operator eigenvalues).
    pub fn from_lambdas(theta: f64, variant: Variant, mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Spectrum("eigenvalues must be finite and positive".into()));
        }
        lambdas.sort_by(f64::total_cmp);
        if lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Spectrum("eigenvalues must be distinct".into()));
        }
        let trace = lambdas.iter().map(|l| l.recip()).sum();
        Ok(Self {
            multiplicity: vec![1; lambdas.len()],
            kmax: lambdas.len(),
            m: 0,
            trace,
            trace_captured: 1.0,
            variant,
            theta,
            measure: None,
            complete: true,
            lambdas,
        })
    }

    /// Ascending `λ_k`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Operator trace `E W²`, by quadrature of the kernel diagonal.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn trace_captured(&self) -> f64 {
        self.trace_captured
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn measure(&self) -> Option<&AMeasure> {
        self.measure.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn spec(&self) -> NullSpec {
        NullSpec { theta: self.theta, measure: self.measure.clone() }
    }

    /// `trace − Σ mult_k/λ_k`, the operator mass beyond the retained eigenvalues.
    pub fn trace_deficit(&self) -> f64 {
        if self.complete {
            return 0.0;
        }
        let kept: f64 =
            self.lambdas.iter().zip(&self.multiplicity).map(|(l, &c)| c as f64 / l).sum();
        (self.trace - kept).max(0.0)
    }

    pub fn write<W: Write>(&self, mut out: W, extra_header: &[String]) -> Result<()> {
        writeln!(out, "# urnbridge spectral-model")?;
        for line in extra_header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "# theta={}", self.theta)?;
        writeln!(out, "# variant={}", self.variant)?;
        writeln!(out, "# kmax={}", self.kmax)?;
        writeln!(out, "# m={}", self.m)?;
        writeln!(out, "# trace={}", self.trace)?;
        writeln!(out, "# trace_captured={}", self.trace_captured)?;
        writeln!(out, "# complete={}", self.complete)?;
        if let Some(m) = &self.measure {
            writeln!(out, "# measure={}", m.spec_string())?;
        }
        for (l, &c) in self.lambdas.iter().zip(&self.multiplicity) {
            if c == 1 {
                writeln!(out, "{l}")?;
            } else {
                writeln!(out, "{l} {c}")?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let mut header = std::collections::HashMap::new();
        let mut lambdas = Vec::new();
        let mut multiplicity = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    header.insert(k.trim().to_owned(), v.trim().to_owned());
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let l: f64 = parts
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e| parse_err(i + 1, format!("{e}")))?;
            let c: usize = match parts.next() {
                Some(c) => c.parse().map_err(|e| parse_err(i + 1, format!("{e}")))?,
                None => 1,
            };
            lambdas.push(l);
            multiplicity.push(c);
        }
        let field = |k: &str| {
            header.get(k).ok_or_else(|| parse_err(0, format!("missing header {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            field(k)?.parse().map_err(|e| parse_err(0, format!("{k}: {e}")))
        };
        if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(parse_err(0, "eigenvalues must be non-empty and strictly increasing".into()));
        }
        let measure = match header.get("measure") {
            Some(spec) => Some(parse_measure_list(spec)?),
            None => None,
        };
        let variant: Variant = field("variant")?.parse()?;
        if (variant == Variant::Estimated) != measure.is_some() {
            return Err(parse_err(0, "variant and measure disagree".into()));
        }
        Ok(Self {
            lambdas,
            multiplicity,
            kmax: num("kmax")? as usize,
            m: num("m")? as usize,
            trace: num("trace")?,
            trace_captured: num("trace_captured")?,
            variant,
            theta: num("theta")?,
            measure,
            complete: field("complete")? == "true",
        })
    }
}

/// `∫_0^1 Σ_a k_aa(t,t) dt`.
pub fn operator_trace<K: CovarianceKernel>(kernel: &K) -> f64 {
    let diag = |t: f64| (0..kernel.components()).map(|a| kernel.cov(a, a, t, t)).sum::<f64>();
    integrate_adaptive(diag, 0.0, 0.5, 1e-14, 1e-12) + integrate_adaptive(diag, 0.5, 1.0, 1e-14, 1e-12)
}

fn limit_kernel(spec: &NullSpec) -> LimitKernel {
    match &spec.measure {
        None => LimitKernel::Bridged { theta: spec.theta },
        Some(m) => LimitKernel::Estimated(EstimatedCorrection::new(spec.theta, m)),
    }
}

/// Nyström eigenvalues of the bridge covariance operator for `spec`, using
/// `m` Gauss–Legendre nodes per component and keeping the `kmax` largest.
pub fn nystrom_eigs(spec: &NullSpec, m: usize, kmax: usize) -> Result<SpectralModel> {
    if !(spec.theta > 0.0 && spec.theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta {} outside (0,1)", spec.theta)));
    }
    let kernel = limit_kernel(spec);
    let mut model = nystrom_with_kernel(&kernel, m, kmax, spec.theta, spec.variant())?;
    model.measure = spec.measure.clone();
    Ok(model)
}

/// All eigenvalues of the symmetrised Nyström matrix, descending.
pub fn nystrom_spectrum<K: CovarianceKernel>(kernel: &K, m: usize) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(m, 0.0, 1.0);
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let comps = kernel.components();
    let dim = comps * m;
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let (ci, pi) = (i / m, i % m);
            let (cj, pj) = (j / m, j % m);
            let v = sw[pi] * kernel.cov(ci, cj, nodes[pi], nodes[pj]) * sw[pj];
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

pub fn nystrom_with_kernel<K: CovarianceKernel>(
    kernel: &K,
    m: usize,
    kmax: usize,
    theta: f64,
    variant: Variant,
) -> Result<SpectralModel> {
    if kmax == 0 || m < 4 * kmax {
        return Err(Error::InvalidParameter(format!("need m ≥ 4·kmax (m={m}, kmax={kmax})")));
    }
    let eig = nystrom_spectrum(kernel, m);
    let mut groups: Vec<(f64, usize)> = Vec::new();
    for mu in eig.into_iter().take_while(|&mu| mu > EIGEN_FLOOR) {
        match groups.last_mut() {
            Some((top, count)) if *top - mu <= MERGE_TOLERANCE * *top => *count += 1,
            _ => {
                if groups.len() == kmax {
                    break;
                }
                groups.push((mu, 1));
            }
        }
    }
    if groups.len() < kmax {
        return Err(Error::Spectrum(format!(
            "only {} distinct eigenvalues above {EIGEN_FLOOR}, need {kmax}",
            groups.len()
        )));
    }
    let trace = operator_trace(kernel);
    let kept: f64 = groups.iter().map(|(mu, c)| mu * *c as f64).sum();
    Ok(SpectralModel {
        lambdas: groups.iter().map(|(mu, _)| mu.recip()).collect(),
        multiplicity: groups.iter().map(|&(_, c)| c).collect(),
        kmax,
        m,
        trace,
        trace_captured: (kept / trace).min(1.0),
        variant,
        theta,
        measure: None,
        complete: false,
    })
}

/// `ln Π_{j ∉ skip} |1 − λ/λ_j|`.
fn log_abs_d(lambdas: &[f64], lambda: f64, skip: &[usize]) -> f64 {
    lambdas
        .iter()
        .enumerate()
        .filter(|(j, _)| !skip.contains(j))
        .map(|(_, &lj)| (1.0 - lambda / lj).abs().ln())
        .sum()
}

/// `(1/π) ∫_a^b e^{−λ(x−δ)/2} / √(|D(λ)|) dλ/λ` over the interval between
/// consecutive eigenvalues `j` and `j+1`, after `λ = (a+b)/2 − (b−a)/2·cos φ`
/// removes both inverse-square-root endpoint singularities.
fn finite_term(lambdas: &[f64], j: usize, x_eff: f64) -> f64 {
    let (a, b) = (lambdas[j], lambdas[j + 1]);
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let root_ab = (a * b).sqrt();
    let f = |phi: f64| {
        let lambda = mid - half * phi.cos();
        let log_g = log_abs_d(lambdas, lambda, &[j, j + 1]);
        (-0.5 * lambda * x_eff - 0.5 * log_g).exp() * root_ab / lambda
    };
    integrate_adaptive(f, 0.0, PI, 1e-15, 1e-11) / PI
}

/// The unbounded last interval `(λ_K, ∞)` of a complete model with an odd
/// number of eigenvalues, after `λ = λ_K sec²ψ`.
fn infinite_term(lambdas: &[f64], x: f64) -> f64 {
    let last = lambdas.len() - 1;
    let a = lambdas[last];
    let f = |psi: f64| {
        let c = psi.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let lambda = a / (c * c);
        let log_g = log_abs_d(lambdas, lambda, &[last]);
        2.0 * (-0.5 * lambda * x - 0.5 * log_g).exp()
    };
    integrate_adaptive(f, 0.0, FRAC_PI_2, 1e-15, 1e-11) / PI
}

/// `P(W² ≤ x) ≤ Π_k P(χ²_1 ≤ λ_k x)^{mult_k}`; used to answer 0 far in the lower tail.
fn log_lower_bound(model: &SpectralModel, x: f64) -> f64 {
    let chi = ChiSquared::new(1.0).expect("valid dof");
    model
        .lambdas
        .iter()
        .zip(&model.multiplicity)
        .map(|(l, &c)| c as f64 * chi.cdf(l * x).ln())
        .sum()
}

/// `1 − F(x)` by the alternating sum.
fn upper_tail(model: &SpectralModel, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("CDF argument must be positive and finite, got {x}")));
    }
    if let Some(k) = model.multiplicity.iter().position(|&c| c > 1) {
        return Err(Error::Declined(format!(
            "eigenvalue {} has multiplicity {}; the alternating formula needs a simple spectrum",
            model.lambdas[k], model.multiplicity[k]
        )));
    }
    if log_lower_bound(model, x) < (1e-12f64).ln() {
        return Ok(1.0);
    }
    if !model.complete && model.lambdas.len() < 2 {
        return Err(Error::Declined("truncated model needs at least two eigenvalues".into()));
    }
    let delta = model.trace_deficit();
    if x <= delta {
        return Err(Error::Declined(format!(
            "argument {x} does not exceed the truncation deficit {delta}"
        )));
    }
    let x_eff = x - delta;
    let lambdas = &model.lambdas;
    let mut tail = 0.0;
    let mut previous = f64::INFINITY;
    let mut k = 0;
    loop {
        let j = 2 * k;
        let term = if j + 1 < lambdas.len() {
            finite_term(lambdas, j, x_eff)
        } else if model.complete {
            if j < lambdas.len() {
                tail += if k % 2 == 0 { 1.0 } else { -1.0 } * infinite_term(lambdas, x);
            }
            return Ok(tail.clamp(0.0, 1.0));
        } else {
            return Err(Error::Declined(format!(
                "alternating sum did not reach {TERM_TOLERANCE} within {} eigenvalues",
                lambdas.len()
            )));
        };
        if term > previous * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::Declined(format!(
                "alternating terms increase at k={} ({term} > {previous})",
                k + 1
            )));
        }
        tail += if k % 2 == 0 { term } else { -term };
        if term < TERM_TOLERANCE {
            return Ok(tail.clamp(0.0, 1.0));
        }
        previous = term;
        k += 1;
    }
}

pub fn smirnov_cdf(model: &SpectralModel, x: f64) -> Result<f64> {
    Ok(1.0 - upper_tail(model, x)?)
}

pub fn spectral_p_value(model: &SpectralModel, w2_obs: f64) -> Result<f64> {
    if w2_obs < 0.0 || w2_obs.is_nan() {
        return Err(Error::Domain(format!("statistic must be non-negative, got {w2_obs}")));
    }
    if w2_obs == 0.0 {
        return Ok(1.0);
    }
    upper_tail(model, w2_obs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_k0, BrownianBridgeKernel, Decoupled, Scaled};

    #[test]
    fn single_eigenvalue_is_scaled_chi_square() {
        let chi = ChiSquared::new(1.0).unwrap();
        let lambda = 3.7;
        let model = SpectralModel::from_lambdas(0.5, Variant::Known, vec![lambda]).unwrap();
        for &x in &[0.01, 0.1, 0.3, 1.0, 2.5] {
            let f = smirnov_cdf(&model, x).unwrap();
            assert!((f - chi.cdf(lambda * x)).abs() < 1e-6, "x={x}: {f} vs {}", chi.cdf(lambda * x));
        }
    }

    #[test]
    fn two_eigenvalues_match_direct_convolution() {
        // W = η₁²/λ₁ + η₂²/λ₂; condition on |η₁| = s, which has density 2φ(s)
        let (l1, l2) = (2.0, 5.0);
        let model = SpectralModel::from_lambdas(0.5, Variant::Known, vec![l1, l2]).unwrap();
        let chi = ChiSquared::new(1.0).unwrap();
        let x = 0.8;
        let direct = integrate_adaptive(
            |s: f64| {
                let v = s * s;
                let dens = (-v / 2.0).exp() / (2.0 * PI).sqrt() * 2.0;
                dens * chi.cdf((l2 * (x - v / l1)).max(0.0))
            },
            0.0,
            (l1 * x).sqrt(),
            1e-14,
            1e-12,
        );
        let f = smirnov_cdf(&model, x).unwrap();
        assert!((f - direct).abs() < 1e-7, "{f} vs {direct}");
    }

    #[test]
    fn brownian_bridge_eigenvalues() {
        let model = nystrom_with_kernel(&BrownianBridgeKernel, 512, 10, 0.5, Variant::Known).unwrap();
        for (k, l) in model.lambdas().iter().enumerate() {
            let exact = ((k + 1) as f64 * PI).powi(2);
            assert!((l / exact - 1.0).abs() < 1e-3, "k={}: {l} vs {exact}", k + 1);
        }
    }

    #[test]
    fn decoupled_blocks_double_the_spectrum() {
        struct Single(f64);
        impl CovarianceKernel for Single {
            fn components(&self) -> usize {
                1
            }
            fn cov(&self, _: usize, _: usize, s: f64, t: f64) -> f64 {
                kernel_k0(self.0, s, t)
            }
        }
        let th = 0.5;
        let one = nystrom_with_kernel(&Single(th), 128, 12, th, Variant::Known).unwrap();
        let two = nystrom_with_kernel(
            &Decoupled(LimitKernel::Bridged { theta: th }),
            128,
            12,
            th,
            Variant::Known,
        )
        .unwrap();
        assert!(two.multiplicity().iter().all(|&c| c == 2));
        for (a, b) in one.lambdas().iter().zip(two.lambdas()) {
            assert!((a / b - 1.0).abs() < 1e-8);
        }
        assert!(matches!(smirnov_cdf(&two, 0.1), Err(Error::Declined(_))));
    }

    #[test]
    fn scaling_the_kernel_divides_lambdas() {
        let base = nystrom_eigs(&NullSpec::known(0.4), 128, 16).unwrap();
        let scaled = nystrom_with_kernel(
            &Scaled(LimitKernel::Bridged { theta: 0.4 }, 3.0),
            128,
            16,
            0.4,
            Variant::Known,
        )
        .unwrap();
        for (a, b) in base.lambdas().iter().zip(scaled.lambdas()) {
            assert!((a / 3.0 / b - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn nystrom_matrix_trace_matches_quadrature_trace() {
        let kernel = LimitKernel::Bridged { theta: 0.5 };
        let total: f64 = nystrom_spectrum(&kernel, 256).iter().sum();
        let trace = 2.0 * integrate_adaptive(|t| kernel_k0(0.5, t, t), 0.0, 1.0, 1e-14, 1e-12);
        assert!((total / trace - 1.0).abs() < 0.01, "{total} vs {trace}");
        assert!((operator_trace(&kernel) / trace - 1.0).abs() < 1e-9);
    }

    #[test]
    fn retained_eigenvalues_stay_below_trace() {
        let model = nystrom_eigs(&NullSpec::known(0.5), 256, 64).unwrap();
        let kept: f64 = model.lambdas().iter().map(|l| l.recip()).sum();
        assert!(kept <= model.trace() * (1.0 + 1e-9));
        assert!(model.trace_captured() > 0.0 && model.trace_captured() <= 1.0);
        assert!(model.lambdas().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cdf_limits_and_monotonicity() {
        let model = nystrom_eigs(&NullSpec::known(0.5), 256, 64).unwrap();
        let mean = model.trace();
        assert!(smirnov_cdf(&model, 1e-6 * mean).unwrap() < 1e-9);
        assert!(smirnov_cdf(&model, 1e3 * mean).unwrap() > 1.0 - 1e-9);
        let mut prev = 0.0;
        for i in 1..=100 {
            let x = mean * 0.05 * i as f64;
            let f = smirnov_cdf(&model, x).unwrap();
            assert!(f >= prev - 1e-12, "x={x}: {f} < {prev}");
            prev = f;
        }
    }

    #[test]
    fn p_value_edges() {
        let model = nystrom_eigs(&NullSpec::known(0.5), 256, 64).unwrap();
        assert_eq!(spectral_p_value(&model, 0.0).unwrap(), 1.0);
        assert!(spectral_p_value(&model, 50.0 * model.trace()).unwrap() < 1e-4);
        assert!(matches!(spectral_p_value(&model, -1.0), Err(Error::Domain(_))));
        assert!(matches!(smirnov_cdf(&model, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn artifact_roundtrip() {
        let model =
            nystrom_eigs(&NullSpec::estimated(0.5, AMeasure::example1()), 64, 16).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf, &["seed=4".into()]).unwrap();
        assert_eq!(SpectralModel::read(buf.as_slice()).unwrap(), model);
    }
}
