//! Urn probability laws, label streams and the forward/backward occupancy
//! paths `R_k`, `R'_k`.
//!
//! Zipf-type laws `p_i = c · i^(-1/θ) (1 + a/√i)` are stored parametrically,
//! so the support can be made large enough that the truncated tail mass is
//! negligible without materialising the probability vector. Sampling uses an
//! alias table for the head of the law and an exact rejection sampler for the
//! power tail.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;
use crate::seed::SeedStream;

/// Number of urns covered by the alias table; the rest is sampled by rejection.
const ALIAS_HEAD: u64 = 1 << 16;
/// Occupancy sums are evaluated term by term up to this many urns.
const DIRECT_SUM_LIMIT: u64 = 1 << 20;
/// Largest support for which every index is exactly representable as `f64`.
pub const MAX_SUPPORT: u64 = 1 << 53;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Explicit(Vec<f64>),
    Zipf { exponent: f64, perturbation: f64 },
}

/// Urn probabilities `p_1 ≥ p_2 ≥ … > 0` on a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityLaw {
    shape: Shape,
    theta: Option<f64>,
    c: f64,
    support: u64,
    tail_bound: f64,
}

/// Pure Zipf law truncated at `support` urns: `p_i ∝ i^(-1/θ)`.
pub fn zipf_law(theta: f64, support: u64) -> Result<ProbabilityLaw> {
    ProbabilityLaw::zipf_perturbed(theta, support, 0.0)
}

impl ProbabilityLaw {
    /// Law given by an explicit probability vector.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidLaw("no urns".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidLaw("probabilities must be positive".into()));
        }
        if probs.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidLaw("probabilities must be non-increasing".into()));
        }
        let total: f64 = probs.iter().rev().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidLaw(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            support: probs.len() as u64,
            shape: Shape::Explicit(probs),
            theta: None,
            c: 1.0,
            tail_bound: 0.0,
        })
    }

    /// Zipf law with the `(1 + a/√i)` perturbation, `a ≥ 0`.
    pub fn zipf_perturbed(theta: f64, support: u64, perturbation: f64) -> Result<Self> {
        check_theta(theta)?;
        if support == 0 {
            return Err(Error::InvalidParameter("support size must be at least 1".into()));
        }
        if support > MAX_SUPPORT {
            return Err(Error::InvalidParameter(format!("support size above {MAX_SUPPORT}")));
        }
        if !(perturbation >= 0.0) || !perturbation.is_finite() {
            return Err(Error::InvalidParameter(
                "perturbation must be finite and non-negative".into(),
            ));
        }
        let exponent = 1.0 / theta;
        let c = 1.0 / weight_sum(exponent, perturbation, Some(support));
        let n = support as f64;
        let tail_bound = c
            * (n.powf(1.0 - exponent) / (exponent - 1.0)
                + perturbation * n.powf(0.5 - exponent) / (exponent - 0.5));
        Ok(Self {
            shape: Shape::Zipf { exponent, perturbation },
            theta: Some(theta),
            c,
            support,
            tail_bound,
        })
    }

    /// Zipf law whose support is the smallest one with truncated tail mass
    /// below `tail_mass`, capped at [`MAX_SUPPORT`]. Check
    /// [`tail_bound`](Self::tail_bound) when the cap may bind.
    pub fn zipf_tail_safe(theta: f64, tail_mass: f64, perturbation: f64) -> Result<Self> {
        check_theta(theta)?;
        if !(tail_mass > 0.0 && tail_mass < 1.0) {
            return Err(Error::InvalidParameter("tail mass must lie in (0,1)".into()));
        }
        let s = 1.0 / theta;
        let c_inf = 1.0 / weight_sum(s, perturbation, None);
        let guess = (c_inf / ((s - 1.0) * tail_mass)).powf(1.0 / (s - 1.0));
        let mut support = if guess.is_finite() {
            (guess.ceil() as u64).clamp(1, MAX_SUPPORT)
        } else {
            MAX_SUPPORT
        };
        loop {
            let law = Self::zipf_perturbed(theta, support, perturbation)?;
            if law.tail_bound <= tail_mass || support == MAX_SUPPORT {
                return Ok(law);
            }
            support = ((support as f64 * 1.05).ceil() as u64).min(MAX_SUPPORT);
        }
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    /// Normalisation constant `c` (1 for explicit laws).
    pub fn normalization(&self) -> f64 {
        self.c
    }

    pub fn support(&self) -> u64 {
        self.support
    }

    /// Upper bound on `Σ_{i>N} c·w_i`, the mass the untruncated law puts past the support.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `p_i` for 1-based `i`; zero outside the support.
    pub fn prob(&self, i: u64) -> f64 {
        if i == 0 || i > self.support {
            return 0.0;
        }
        match &self.shape {
            Shape::Explicit(p) => p[(i - 1) as usize],
            Shape::Zipf { exponent, perturbation } => {
                self.c * zipf_weight(i as f64, *exponent, *perturbation)
            }
        }
    }

    /// First `k` probabilities (or the whole support if smaller).
    pub fn head(&self, k: u64) -> Vec<f64> {
        (1..=k.min(self.support)).map(|i| self.prob(i)).collect()
    }

    /// `α(x) = max{k : p_k ≥ 1/x}`.
    pub fn alpha_of(&self, x: f64) -> Alpha {
        // p_k · x ≥ 1 with a 1e-12 relative allowance, so boundary cases such as
        // x = k^(1/θ)/c resolve to k despite rounding in the power.
        let reaches = |k: u64| self.prob(k) * x >= 1.0 - 1e-12;
        if !(x > 0.0) || !reaches(1) {
            return Alpha { count: 0, empty: true };
        }
        let (mut lo, mut hi) = (1u64, self.support);
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if reaches(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Alpha { count: lo, empty: false }
    }

    pub fn sampler(&self) -> UrnSampler {
        UrnSampler::new(self)
    }

    /// `Σ_i g(p_i)` for a smooth occupancy functional `g` with `g(0) = 0`;
    /// `dg` is its derivative in `p`. Large Zipf supports switch to an
    /// Euler–Maclaurin tail with log-spaced Gauss–Legendre panels.
    fn occupancy_sum(&self, g: impl Fn(f64) -> f64, dg: impl Fn(f64) -> f64) -> f64 {
        let (exponent, perturbation) = match &self.shape {
            Shape::Explicit(p) => return p.iter().rev().map(|&q| g(q)).sum(),
            Shape::Zipf { exponent, perturbation } => (*exponent, *perturbation),
        };
        let direct = self.support.min(DIRECT_SUM_LIMIT);
        let head: f64 = (1..=direct).rev().map(|i| g(self.prob(i))).sum();
        if direct == self.support {
            return head;
        }
        let c = self.c;
        let p = |x: f64| c * zipf_weight(x, exponent, perturbation);
        let dp = |x: f64| {
            c * (-exponent * x.powf(-exponent - 1.0)
                - perturbation * (exponent + 0.5) * x.powf(-exponent - 1.5))
        };
        let a = (direct + 1) as f64;
        let b = self.support as f64;
        let integral = log_space_integral(|x| g(p(x)), a, b);
        let ends = 0.5 * (g(p(a)) + g(p(b)));
        let slope = (dg(p(b)) * dp(b) - dg(p(a)) * dp(a)) / 12.0;
        head + integral + ends + slope
    }
}

/// Result of [`ProbabilityLaw::alpha_of`]; `empty` flags that no urn has `p_k ≥ 1/x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alpha {
    pub count: u64,
    pub empty: bool,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("theta must lie in (0,1), got {theta}")))
    }
}

fn zipf_weight(x: f64, exponent: f64, perturbation: f64) -> f64 {
    let w = x.powf(-exponent);
    if perturbation == 0.0 {
        w
    } else {
        w * (1.0 + perturbation / x.sqrt())
    }
}

/// `Σ_{i=1}^{N} i^(-s) (1 + a/√i)`; `None` means `N = ∞`.
fn weight_sum(s: f64, a: f64, support: Option<u64>) -> f64 {
    const HEAD: u64 = 1 << 16;
    let direct = support.map_or(HEAD, |n| n.min(DIRECT_SUM_LIMIT));
    let head: f64 = (1..=direct).rev().map(|i| zipf_weight(i as f64, s, a)).sum();
    if support == Some(direct) {
        return head;
    }
    // Euler–Maclaurin from A = direct + 1 to B.
    let lo = (direct + 1) as f64;
    let prim = |x: f64| x.powf(1.0 - s) / (1.0 - s) + a * x.powf(0.5 - s) / (0.5 - s);
    let d1 = |x: f64| -s * x.powf(-s - 1.0) - a * (s + 0.5) * x.powf(-s - 1.5);
    let d3 = |x: f64| {
        -s * (s + 1.0) * (s + 2.0) * x.powf(-s - 3.0)
            - a * (s + 0.5) * (s + 1.5) * (s + 2.5) * x.powf(-s - 3.5)
    };
    let w_lo = zipf_weight(lo, s, a);
    let tail = match support {
        Some(n) => {
            let hi = n as f64;
            prim(hi) - prim(lo) + 0.5 * (w_lo + zipf_weight(hi, s, a)) + (d1(hi) - d1(lo)) / 12.0
                - (d3(hi) - d3(lo)) / 720.0
        }
        None => -prim(lo) + 0.5 * w_lo - d1(lo) / 12.0 + d3(lo) / 720.0,
    };
    head + tail
}

/// `∫_a^b f(x) dx` by Gauss–Legendre panels in `u = ln x`.
fn log_space_integral(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (ua, ub) = (a.ln(), b.ln());
    let panels = ((ub - ua) / 0.25).ceil().max(1.0) as usize;
    let width = (ub - ua) / panels as f64;
    let (nodes, weights) = gauss_legendre(16, 0.0, 1.0);
    let mut total = 0.0;
    for k in 0..panels {
        let u0 = ua + k as f64 * width;
        for (&x, &w) in nodes.iter().zip(&weights) {
            let ex = (u0 + x * width).exp();
            total += w * width * f(ex) * ex;
        }
    }
    total
}

/// Draws i.i.d. urn labels from a [`ProbabilityLaw`].
#[derive(Debug, Clone)]
pub struct UrnSampler {
    head: WeightedAliasIndex<f64>,
    head_mass: f64,
    tail: Option<PowerTail>,
}

/// Exact sampler for `k ∈ (H, N]` with weights `k^(-s)(1 + a/√k)`: propose `x`
/// with density `∝ x^(-s)` on `[H, N]`, set `k = ⌈x⌉`, accept with probability
/// `(x/k)^s (1 + a/√k)/(1 + a/√(H+1))`.
#[derive(Debug, Clone)]
struct PowerTail {
    first: u64,
    last: u64,
    exponent: f64,
    perturbation: f64,
    lo_pow: f64,
    span: f64,
    envelope: f64,
}

impl PowerTail {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let inv = 1.0 / (1.0 - self.exponent);
        loop {
            let u: f64 = rng.random();
            let x = (self.lo_pow - u * self.span).powf(inv);
            let k = (x.ceil() as u64).clamp(self.first, self.last);
            let kf = k as f64;
            let mut ratio = (x / kf).powf(self.exponent);
            if self.perturbation > 0.0 {
                ratio *= (1.0 + self.perturbation / kf.sqrt()) / self.envelope;
            }
            if rng.random::<f64>() < ratio {
                return k;
            }
        }
    }
}

impl UrnSampler {
    fn new(law: &ProbabilityLaw) -> Self {
        let head_len = law.support.min(ALIAS_HEAD);
        let weights = law.head(head_len);
        let head_mass: f64 = weights.iter().rev().sum();
        let head = WeightedAliasIndex::new(weights).expect("positive finite weights");
        let tail = match &law.shape {
            Shape::Zipf { exponent, perturbation } if law.support > head_len => {
                let h = head_len as f64;
                let lo_pow = h.powf(1.0 - exponent);
                Some(PowerTail {
                    first: head_len + 1,
                    last: law.support,
                    exponent: *exponent,
                    perturbation: *perturbation,
                    lo_pow,
                    span: lo_pow - (law.support as f64).powf(1.0 - exponent),
                    envelope: 1.0 + perturbation / (h + 1.0).sqrt(),
                })
            }
            _ => None,
        };
        Self { head, head_mass, tail }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.tail {
            Some(tail) if rng.random::<f64>() >= self.head_mass => tail.sample(rng),
            _ => self.head.sample(rng) as u64 + 1,
        }
    }

    /// Replaces the contents of `out` with `n` fresh labels.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, n: usize, out: &mut Vec<u64>) {
        out.clear();
        out.extend((0..n).map(|_| self.sample(rng)));
    }
}

/// A recorded sequence of 1-based urn labels `X_1, …, X_n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    labels: Vec<u64>,
}

impl Stream {
    pub fn new(labels: Vec<u64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyStream);
        }
        if labels.contains(&0) {
            return Err(Error::InvalidParameter("urn labels are 1-based".into()));
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `X'_i = X_{n-i+1}`.
    pub fn reversed(&self) -> Stream {
        Stream { labels: self.labels.iter().rev().copied().collect() }
    }
}

/// `n` i.i.d. draws from `law`, reproducible from `seed`.
pub fn sample_stream(law: &ProbabilityLaw, n: usize, seed: u64) -> Result<Stream> {
    if n == 0 {
        return Err(Error::InvalidParameter("stream length must be at least 1".into()));
    }
    let mut rng = SeedStream::new(seed).rng(0);
    let mut labels = Vec::with_capacity(n);
    law.sampler().fill(&mut rng, n, &mut labels);
    Stream::new(labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

/// Distinct-count path `R_0, …, R_n` read in one direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyPath {
    counts: Vec<u32>,
    direction: Direction,
}

impl OccupancyPath {
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Stream length `n`.
    pub fn len(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn at(&self, k: usize) -> u32 {
        self.counts[k]
    }

    /// `R_n`, the number of distinct labels in the whole stream.
    pub fn total(&self) -> u32 {
        self.counts[self.len()]
    }
}

pub fn forward_counts(s: &Stream) -> OccupancyPath {
    OccupancyPath {
        counts: distinct_prefix_counts(s.labels.iter().copied(), s.len()),
        direction: Direction::Forward,
    }
}

pub fn backward_counts(s: &Stream) -> OccupancyPath {
    OccupancyPath {
        counts: distinct_prefix_counts(s.labels.iter().rev().copied(), s.len()),
        direction: Direction::Backward,
    }
}

/// Both paths from a raw label slice, reusing `forward`/`backward` buffers.
pub(crate) fn paths_into(labels: &[u64], forward: &mut Vec<u32>, backward: &mut Vec<u32>) {
    *forward = distinct_prefix_counts(labels.iter().copied(), labels.len());
    *backward = distinct_prefix_counts(labels.iter().rev().copied(), labels.len());
}

#[cfg(test)]
pub(crate) fn path_from_counts(counts: Vec<u32>, direction: Direction) -> OccupancyPath {
    OccupancyPath { counts, direction }
}

fn distinct_prefix_counts(labels: impl Iterator<Item = u64> + Clone, len: usize) -> Vec<u32> {
    let max_label = labels.clone().max().unwrap_or(0);
    let mut counts = Vec::with_capacity(len + 1);
    counts.push(0u32);
    let mut distinct = 0u32;
    if max_label <= (1u64 << 20).max(32 * len as u64) {
        let mut seen = vec![0u64; (max_label as usize >> 6) + 1];
        for label in labels {
            let (word, bit) = ((label >> 6) as usize, 1u64 << (label & 63));
            if seen[word] & bit == 0 {
                seen[word] |= bit;
                distinct += 1;
            }
            counts.push(distinct);
        }
    } else {
        let mut seen = HashSet::with_capacity(len.min(1 << 20));
        for label in labels {
            if seen.insert(label) {
                distinct += 1;
            }
            counts.push(distinct);
        }
    }
    counts
}

/// `E R_m = Σ_k (1 − (1 − p_k)^m)` for a fixed number of balls.
pub fn exact_mean_occupancy(law: &ProbabilityLaw, m: u64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mf = m as f64;
    law.occupancy_sum(
        |p| -(mf * (-p).ln_1p()).exp_m1(),
        |p| mf * ((mf - 1.0) * (-p).ln_1p()).exp(),
    )
}

/// `Σ_k (1 − e^{−p_k t})`, the mean occupancy after a Poisson(`t`) number of balls.
pub fn poisson_mean_occupancy(law: &ProbabilityLaw, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    law.occupancy_sum(|p| -(-t * p).exp_m1(), |p| t * (-t * p).exp())
}

/// Covariance of the Poissonised forward count at `t·n` and backward count at `τ·n`.
pub fn exact_poisson_cov(law: &ProbabilityLaw, n: u64, t: f64, tau: f64) -> f64 {
    if t + tau <= 1.0 {
        return 0.0;
    }
    let n = n as f64;
    poisson_mean_occupancy(law, (t + tau) * n) - poisson_mean_occupancy(law, n)
}

/// Forward counts `R_{Π(t n)}` and backward counts `R'_{Π(τ n)}` of one
/// Poissonised run: draw `Π(n)`, spread the balls multinomially over the
/// time cells, then label them i.i.d.
pub fn poissonized_counts<R: Rng + ?Sized>(
    sampler: &UrnSampler,
    n: f64,
    t_grid: &[f64],
    tau_grid: &[f64],
    rng: &mut R,
) -> (Vec<u32>, Vec<u32>) {
    let total = Poisson::new(n).expect("positive intensity").sample(rng) as u64;

    let mut cuts: Vec<f64> = t_grid
        .iter()
        .map(|&t| t * n)
        .chain(tau_grid.iter().map(|&tau| (1.0 - tau) * n))
        .chain([0.0, n])
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // cumulative[j] = arrivals in [0, cuts[j]]
    let mut cumulative = vec![0u64; cuts.len()];
    let (mut left, mut left_len) = (total, n);
    for j in 1..cuts.len() {
        let len = cuts[j] - cuts[j - 1];
        let q = if left_len > 0.0 { (len / left_len).clamp(0.0, 1.0) } else { 0.0 };
        let k = if left == 0 { 0 } else { Binomial::new(left, q).expect("valid").sample(rng) };
        left -= k;
        left_len -= len;
        cumulative[j] = cumulative[j - 1] + k;
    }
    let last = cuts.len() - 1;
    cumulative[last] += left;

    let mut labels = Vec::with_capacity(total as usize);
    sampler.fill(rng, total as usize, &mut labels);
    let fwd = distinct_prefix_counts(labels.iter().copied(), labels.len());
    let bwd = distinct_prefix_counts(labels.iter().rev().copied(), labels.len());

    let index_of = |x: f64| cuts.iter().position(|&c| c == x).expect("cut present");
    let forward = t_grid.iter().map(|&t| fwd[cumulative[index_of(t * n)] as usize]).collect();
    let backward = tau_grid
        .iter()
        .map(|&tau| {
            let before = cumulative[index_of((1.0 - tau) * n)];
            bwd[(total - before) as usize]
        })
        .collect();
    (forward, backward)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zipf_small_supports() {
        let one = zipf_law(0.5, 1).unwrap();
        assert_eq!(one.head(5), vec![1.0]);
        let two = zipf_law(0.5, 2).unwrap();
        let p = two.head(2);
        assert_relative_eq!(p[0], 0.8, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.2, epsilon = 1e-15);
    }

    #[test]
    fn zipf_rejects_bad_parameters() {
        assert!(zipf_law(0.0, 10).is_err());
        assert!(zipf_law(1.0, 10).is_err());
        assert!(zipf_law(0.5, 0).is_err());
        assert!(ProbabilityLaw::zipf_perturbed(0.5, 10, -0.1).is_err());
    }

    #[test]
    fn zipf_large_support_matches_direct_summation() {
        let n = 1_000_000u64;
        let law = zipf_law(0.5, n).unwrap();
        let direct: f64 = (1..=n).rev().map(|i| (i as f64).powi(-2)).sum();
        assert_relative_eq!(law.prob(1), 1.0 / direct, max_relative = 1e-13);
        // Euler–Maclaurin path (support above the direct limit) against plain summation.
        let n = 3_000_000u64;
        let law = zipf_law(0.7, n).unwrap();
        let s = 1.0 / 0.7;
        let direct: f64 = (1..=n).rev().map(|i| (i as f64).powf(-s)).sum();
        assert_relative_eq!(law.normalization(), 1.0 / direct, max_relative = 1e-12);
    }

    #[test]
    fn zipf_probabilities_follow_power_law() {
        let law = zipf_law(0.3, 5000).unwrap();
        let c = law.normalization();
        for i in [1u64, 2, 17, 999, 5000] {
            let expect = c * (i as f64).powf(-1.0 / 0.3);
            assert_relative_eq!(law.prob(i), expect, max_relative = 1e-12);
        }
        let total: f64 = law.head(5000).iter().rev().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tail_safe_support_meets_bound() {
        for theta in [0.3, 0.5, 0.7] {
            let law = ProbabilityLaw::zipf_tail_safe(theta, 1e-6, 0.0).unwrap();
            assert!(law.tail_bound() <= 1e-6, "theta {theta}: {}", law.tail_bound());
            let smaller = zipf_law(theta, (law.support() as f64 / 1.2) as u64).unwrap();
            assert!(smaller.tail_bound() > 1e-6);
        }
    }

    #[test]
    fn explicit_law_validation() {
        assert!(ProbabilityLaw::from_probs(vec![0.2, 0.8]).is_err());
        assert!(ProbabilityLaw::from_probs(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityLaw::from_probs(vec![1.0, 0.0]).is_err());
        assert!(ProbabilityLaw::from_probs(vec![0.8, 0.2]).is_ok());
    }

    #[test]
    fn alpha_counts() {
        let law = zipf_law(0.5, 2).unwrap();
        assert_eq!(law.alpha_of(2.0), Alpha { count: 1, empty: false });
        assert_eq!(law.alpha_of(5.0).count, 2);
        let empty = law.alpha_of(1.0);
        assert!(empty.empty && empty.count == 0);

        let law = zipf_law(0.5, 10_000).unwrap();
        let x = 400.0 / law.normalization();
        let scan = (1..=law.support()).filter(|&k| law.prob(k) * x >= 1.0 - 1e-12).max().unwrap();
        assert_eq!(law.alpha_of(x).count, 20);
        assert_eq!(scan, 20);
    }

    #[test]
    fn degenerate_and_deterministic_sampling() {
        let law = ProbabilityLaw::from_probs(vec![1.0]).unwrap();
        assert_eq!(sample_stream(&law, 5, 99).unwrap().labels(), &[1, 1, 1, 1, 1]);
        let law = zipf_law(0.5, 1000).unwrap();
        assert_eq!(sample_stream(&law, 50, 3).unwrap(), sample_stream(&law, 50, 3).unwrap());
        assert_ne!(sample_stream(&law, 50, 3).unwrap(), sample_stream(&law, 50, 4).unwrap());
        assert!(sample_stream(&law, 0, 1).is_err());
    }

    #[test]
    fn label_one_frequency_within_four_standard_errors() {
        let law = zipf_law(0.5, 1000).unwrap();
        let n = 100_000;
        let s = sample_stream(&law, n, 11).unwrap();
        let hits = s.labels().iter().filter(|&&l| l == 1).count() as f64;
        let p1 = law.prob(1);
        let se = (p1 * (1.0 - p1) / n as f64).sqrt();
        assert!((hits / n as f64 - p1).abs() < 4.0 * se);
    }

    #[test]
    fn tail_sampler_matches_law() {
        // Head is the first 2^16 urns; a flat-ish law pushes mass into the tail.
        let law = ProbabilityLaw::zipf_perturbed(0.9, 1 << 22, 0.5).unwrap();
        let sampler = law.sampler();
        let mut rng = SeedStream::new(5).rng(0);
        let n = 400_000;
        let first = ALIAS_HEAD + 1;
        let tail_mass: f64 = 1.0 - law.head(ALIAS_HEAD).iter().rev().sum::<f64>();
        let mid = 1u64 << 20;
        let mid_mass: f64 = (first..=mid).map(|i| law.prob(i)).sum();
        let (mut in_tail, mut in_mid) = (0usize, 0usize);
        for _ in 0..n {
            let k = sampler.sample(&mut rng);
            assert!((1..=law.support()).contains(&k));
            if k >= first {
                in_tail += 1;
                if k <= mid {
                    in_mid += 1;
                }
            }
        }
        for (hits, p) in [(in_tail, tail_mass), (in_mid, mid_mass)] {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hits as f64 / n as f64 - p).abs() < 4.0 * se, "{hits} vs {p}");
        }
    }

    #[test]
    fn occupancy_paths_small_cases() {
        let s = Stream::new(vec![1, 2, 1, 3]).unwrap();
        assert_eq!(forward_counts(&s).counts(), &[0, 1, 2, 2, 3]);
        assert_eq!(backward_counts(&s).counts(), &[0, 1, 2, 3, 3]);
        let s = Stream::new(vec![5, 5, 5]).unwrap();
        assert_eq!(forward_counts(&s).counts(), &[0, 1, 1, 1]);
        assert_eq!(backward_counts(&s).counts(), &[0, 1, 1, 1]);
        assert!(Stream::new(vec![]).is_err());
        assert!(Stream::new(vec![0, 1]).is_err());
    }

    #[test]
    fn sparse_and_dense_counting_agree() {
        let big = 1u64 << 40;
        let s = Stream::new(vec![big, 3, big, big + 1, 3, 7]).unwrap();
        assert_eq!(forward_counts(&s).counts(), &[0, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn exact_mean_small_cases() {
        let law = ProbabilityLaw::from_probs(vec![0.8, 0.2]).unwrap();
        assert_eq!(exact_mean_occupancy(&law, 0), 0.0);
        assert_relative_eq!(exact_mean_occupancy(&law, 1), 1.0, epsilon = 1e-15);
        // enumeration: P(both urns) = 2·0.8·0.2 = 0.32
        assert_relative_eq!(exact_mean_occupancy(&law, 2), 0.68 + 2.0 * 0.32, epsilon = 1e-14);
    }

    #[test]
    fn exact_mean_euler_maclaurin_matches_direct() {
        let n = 3_000_000u64;
        let law = zipf_law(0.6, n).unwrap();
        for m in [10u64, 1_000, 1_000_000] {
            let direct: f64 = (1..=n)
                .rev()
                .map(|i| -((m as f64) * (-law.prob(i)).ln_1p()).exp_m1())
                .sum();
            assert_relative_eq!(exact_mean_occupancy(&law, m), direct, max_relative = 1e-11);
            let direct: f64 = (1..=n).rev().map(|i| -(-(m as f64) * law.prob(i)).exp_m1()).sum();
            assert_relative_eq!(poisson_mean_occupancy(&law, m as f64), direct, max_relative = 1e-11);
        }
    }

    #[test]
    fn poisson_mean_limits() {
        let law = ProbabilityLaw::from_probs(vec![1.0]).unwrap();
        assert_eq!(poisson_mean_occupancy(&law, 0.0), 0.0);
        assert_relative_eq!(poisson_mean_occupancy(&law, 1e6), 1.0);
    }

    #[test]
    fn poisson_mean_karlin_asymptotics() {
        let law = zipf_law(0.5, 1_000_000).unwrap();
        let t = 1e5;
        let asym = statrs::function::gamma::gamma(0.5) * (law.normalization() * t).sqrt();
        let ratio = poisson_mean_occupancy(&law, t) / asym;
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn poisson_cov_cases() {
        let law = zipf_law(0.5, 10_000).unwrap();
        assert_eq!(exact_poisson_cov(&law, 100, 0.4, 0.5), 0.0);
        assert_eq!(
            exact_poisson_cov(&law, 100, 1.0, 1.0),
            poisson_mean_occupancy(&law, 200.0) - poisson_mean_occupancy(&law, 100.0)
        );
        assert_eq!(exact_poisson_cov(&law, 77, 0.9, 0.3), exact_poisson_cov(&law, 77, 0.3, 0.9));
    }

    #[test]
    fn poissonized_counts_are_consistent() {
        let law = zipf_law(0.5, 1000).unwrap();
        let sampler = law.sampler();
        let mut rng = SeedStream::new(1).rng(0);
        let grid = [0.25, 0.5, 0.75, 1.0];
        for _ in 0..50 {
            let (f, b) = poissonized_counts(&sampler, 500.0, &grid, &grid, &mut rng);
            assert!(f.windows(2).all(|w| w[0] <= w[1]));
            assert!(b.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(f[3], b[3]);
        }
    }
}
