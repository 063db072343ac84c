//! Covariance kernels of the limiting Gaussian pair `(Z, Z')` and their
//! bridged and estimated-exponent variants.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimation::AMeasure;

/// `K(s,t) = (s+t)^θ − max(s^θ, t^θ)`.
pub fn kernel_k(theta: f64, s: f64, t: f64) -> f64 {
    (s + t).powf(theta) - s.powf(theta).max(t.powf(theta))
}

/// `K'(s,t) = ((s+t)^θ − 1)·1(s+t > 1)`.
pub fn kernel_kprime(theta: f64, s: f64, t: f64) -> f64 {
    if s + t > 1.0 {
        (s + t).powf(theta) - 1.0
    } else {
        0.0
    }
}

fn pinned(theta: f64, s: f64, t: f64, k: fn(f64, f64, f64) -> f64) -> f64 {
    let (st, tt) = (s.powf(theta), t.powf(theta));
    k(theta, s, t) - st * k(theta, 1.0, t) - tt * k(theta, s, 1.0) + st * tt * k(theta, 1.0, 1.0)
}

/// Covariance of the bridge `Z°(t) = Z(t) − t^θ Z(1)`.
pub fn kernel_k0(theta: f64, s: f64, t: f64) -> f64 {
    pinned(theta, s, t, kernel_k)
}

/// Cross-covariance of the bridges `Z°` and `Z°'`.
pub fn kernel_k0prime(theta: f64, s: f64, t: f64) -> f64 {
    pinned(theta, s, t, kernel_kprime)
}

/// Matrix-valued covariance kernel on `[0,1]` with `components()` blocks.
pub trait CovarianceKernel: Sync {
    fn components(&self) -> usize;
    fn cov(&self, a: usize, b: usize, s: f64, t: f64) -> f64;
}

/// The two-component kernels of the limit process.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitKernel {
    /// `(Z, Z')`: blocks `K`, `K'`.
    Raw { theta: f64 },
    /// `(Z°, Z°')`: blocks `K°`, `K°'`.
    Bridged { theta: f64 },
    /// `(Ẑ, Ẑ')` for an exponent estimated with the given A-measure.
    Estimated(EstimatedCorrection),
}

impl LimitKernel {
    pub fn theta(&self) -> f64 {
        match self {
            LimitKernel::Raw { theta } | LimitKernel::Bridged { theta } => *theta,
            LimitKernel::Estimated(c) => c.theta,
        }
    }
}

impl CovarianceKernel for LimitKernel {
    fn components(&self) -> usize {
        2
    }

    fn cov(&self, a: usize, b: usize, s: f64, t: f64) -> f64 {
        let same = a == b;
        match self {
            LimitKernel::Raw { theta } if same => kernel_k(*theta, s, t),
            LimitKernel::Raw { theta } => kernel_kprime(*theta, s, t),
            LimitKernel::Bridged { theta } if same => kernel_k0(*theta, s, t),
            LimitKernel::Bridged { theta } => kernel_k0prime(*theta, s, t),
            LimitKernel::Estimated(c) => c.cov(same, s, t),
        }
    }
}

/// Covariance algebra for `Ẑ(t) = Z°(t) − g(t) ξ / 2`, where `g(t) = t^θ ln t`
/// and `ξ = Σ_j h_j t_j^(−θ) (Z(t_j) + Z'(t_j))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCorrection {
    theta: f64,
    atoms: Vec<(f64, f64)>,
    xi_var: f64,
}

impl EstimatedCorrection {
    pub fn new(theta: f64, measure: &AMeasure) -> Self {
        let atoms: Vec<(f64, f64)> = measure.atoms().iter().map(|a| (a.location, a.jump)).collect();
        let mut xi_var = 0.0;
        for &(tj, hj) in &atoms {
            for &(tl, hl) in &atoms {
                xi_var += hj * hl * (tj * tl).powf(-theta)
                    * 2.0
                    * (kernel_k(theta, tj, tl) + kernel_kprime(theta, tj, tl));
            }
        }
        Self { theta, atoms, xi_var }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `Var ξ`.
    pub fn xi_variance(&self) -> f64 {
        self.xi_var
    }

    /// `t^θ ln t`, zero at both ends.
    pub fn g(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            t.powf(self.theta) * t.ln()
        }
    }

    /// `Cov(ξ, Z°(t)) = Cov(ξ, Z°'(t))`.
    pub fn xi_cov(&self, t: f64) -> f64 {
        let th = self.theta;
        let tt = t.powf(th);
        self.atoms
            .iter()
            .map(|&(u, h)| {
                let both = |x: f64| kernel_k(th, u, x) + kernel_kprime(th, u, x);
                h * u.powf(-th) * (both(t) - tt * both(1.0))
            })
            .sum()
    }

    fn cov(&self, same: bool, s: f64, t: f64) -> f64 {
        let base = if same { kernel_k0(self.theta, s, t) } else { kernel_k0prime(self.theta, s, t) };
        let (gs, gt) = (self.g(s), self.g(t));
        base - 0.5 * (gs * self.xi_cov(t) + gt * self.xi_cov(s)) + 0.25 * gs * gt * self.xi_var
    }
}

/// Single-component Brownian-bridge kernel `min(s,t) − st`, with operator
/// eigenvalues `1/(kπ)²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BrownianBridgeKernel;

impl CovarianceKernel for BrownianBridgeKernel {
    fn components(&self) -> usize {
        1
    }

    fn cov(&self, _a: usize, _b: usize, s: f64, t: f64) -> f64 {
        s.min(t) - s * t
    }
}

/// Drops the cross-component blocks of the wrapped kernel.
#[derive(Debug, Clone)]
pub struct Decoupled<K>(pub K);

impl<K: CovarianceKernel> CovarianceKernel for Decoupled<K> {
    fn components(&self) -> usize {
        self.0.components()
    }

    fn cov(&self, a: usize, b: usize, s: f64, t: f64) -> f64 {
        if a == b {
            self.0.cov(a, b, s, t)
        } else {
            0.0
        }
    }
}

/// Multiplies the wrapped kernel by a constant.
#[derive(Debug, Clone)]
pub struct Scaled<K>(pub K, pub f64);

impl<K: CovarianceKernel> CovarianceKernel for Scaled<K> {
    fn components(&self) -> usize {
        self.0.components()
    }

    fn cov(&self, a: usize, b: usize, s: f64, t: f64) -> f64 {
        self.1 * self.0.cov(a, b, s, t)
    }
}

/// Whether a kernel grid holds the raw or the bridged covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridVariant {
    Raw,
    Bridged,
}

const JITTER_LADDER: [f64; 9] = [0.0, 1e-15, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Block covariance of a multi-component kernel on a grid in `(0,1]`, with a
/// lower-triangular factor of `block_cov + jitter·I`.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    theta: f64,
    grid: Vec<f64>,
    components: usize,
    block_cov: DMatrix<f64>,
    jitter: f64,
    /// Row-major packed lower triangle.
    factor: Vec<f64>,
}

pub fn build_kernel_grid(theta: f64, grid: &[f64], variant: GridVariant) -> Result<KernelGrid> {
    let kernel = match variant {
        GridVariant::Raw => LimitKernel::Raw { theta },
        GridVariant::Bridged => LimitKernel::Bridged { theta },
    };
    KernelGrid::from_kernel(&kernel, theta, grid)
}

impl KernelGrid {
    pub fn from_kernel<K: CovarianceKernel>(kernel: &K, theta: f64, grid: &[f64]) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidParameter("empty grid".into()));
        }
        if grid[0] <= 0.0 || grid[grid.len() - 1] > 1.0 {
            return Err(Error::InvalidParameter("grid must lie in (0,1]".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        let m = grid.len();
        let comps = kernel.components();
        let dim = comps * m;
        let mut cov = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = kernel.cov(i / m, j / m, grid[i % m], grid[j % m]);
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let (jitter, factor) = factorize(&cov)?;
        Ok(Self { theta, grid: grid.to_vec(), components: comps, block_cov: cov, jitter, factor })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    /// Dimension of the Gaussian vector, `components · grid.len()`.
    pub fn dim(&self) -> usize {
        self.block_cov.nrows()
    }

    pub fn block_cov(&self) -> &DMatrix<f64> {
        &self.block_cov
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `out = L z` for the lower-triangular factor `L`.
    pub fn correlate(&self, z: &[f64], out: &mut [f64]) {
        let mut offset = 0;
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.factor[offset..offset + i + 1];
            *o = row.iter().zip(z).map(|(l, x)| l * x).sum();
            offset += i + 1;
        }
    }
}

fn factorize(cov: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let dim = cov.nrows();
    for &jitter in &JITTER_LADDER {
        let shifted = cov + DMatrix::identity(dim, dim) * jitter;
        if let Some(chol) = shifted.cholesky() {
            let l = chol.l();
            let mut packed = Vec::with_capacity(dim * (dim + 1) / 2);
            for i in 0..dim {
                for j in 0..=i {
                    packed.push(l[(i, j)]);
                }
            }
            return Ok((jitter, packed));
        }
    }
    Err(Error::Factorization { max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        let th = 0.5;
        assert_abs_diff_eq!(kernel_k(th, 1.0, 1.0), 2f64.sqrt() - 1.0, epsilon = 1e-15);
        assert_eq!(kernel_k(th, 0.0, 0.7), 0.0);
        assert_abs_diff_eq!(kernel_k(th, 0.5, 0.5), 1.0 - 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(kernel_kprime(th, 0.4, 0.5), 0.0);
        assert_abs_diff_eq!(kernel_kprime(th, 1.0, 1.0), 2f64.sqrt() - 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_kprime(th, 0.75, 0.75), 1.5f64.sqrt() - 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bridged_kernel_values() {
        let th = 0.5;
        // K(½,½) − 2·√½·K(1,½) + ½·K(1,1)
        let k_half = 1.0 - 0.5f64.sqrt();
        let k_one_half = 1.5f64.sqrt() - 1.0;
        let expect = k_half - 2.0 * 0.5f64.sqrt() * k_one_half + 0.5 * (2f64.sqrt() - 1.0);
        assert_abs_diff_eq!(kernel_k0(th, 0.5, 0.5), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_k0(th, 0.5, 0.5), 0.18217, epsilon = 1e-5);
        for t in [0.0, 0.2, 0.9, 1.0] {
            assert_eq!(kernel_k0(th, 1.0, t), 0.0);
            assert_eq!(kernel_k0prime(th, 1.0, t), 0.0);
        }
        let (s, t) = (0.3f64, 0.6f64);
        let reduced = -s.powf(th) * kernel_kprime(th, 1.0, t) - t.powf(th) * kernel_kprime(th, s, 1.0)
            + s.powf(th) * t.powf(th) * (2f64.powf(th) - 1.0);
        assert_abs_diff_eq!(kernel_k0prime(th, s, t), reduced, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn kernel_identities(th in 0.01f64..0.99, s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            prop_assert_eq!(kernel_k(th, s, t), kernel_k(th, t, s));
            prop_assert_eq!(kernel_kprime(th, s, t), kernel_kprime(th, t, s));
            if s + t <= 1.0 {
                prop_assert_eq!(kernel_kprime(th, s, t), 0.0);
                // kernel of (Z − Z')/√2 restricted to s + t ≤ 1
                let diff = kernel_k(th, s, t) - kernel_kprime(th, s, t);
                prop_assert_eq!(diff, (s + t).powf(th) - s.powf(th).max(t.powf(th)));
            }
            for edge in [0.0, 1.0] {
                prop_assert_eq!(kernel_k0(th, edge, t), 0.0);
                prop_assert_eq!(kernel_k0prime(th, edge, t), 0.0);
                prop_assert_eq!(kernel_k0(th, s, edge), 0.0);
            }
        }
    }

    #[test]
    fn single_point_raw_grid() {
        let kg = build_kernel_grid(0.5, &[1.0], GridVariant::Raw).unwrap();
        let v = 2f64.sqrt() - 1.0;
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(kg.block_cov()[(i, j)], v, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn bridged_grid_has_zero_row_at_one() {
        let grid = [0.25, 0.5, 0.75, 1.0];
        let kg = build_kernel_grid(0.4, &grid, GridVariant::Bridged).unwrap();
        let cov = kg.block_cov();
        for idx in [3, 7] {
            assert!(cov.row(idx).iter().all(|&v| v == 0.0));
        }
        assert!(kg.jitter() > 0.0 && kg.jitter() <= 1e-8);
    }

    #[test]
    fn grids_are_symmetric_and_factorizable() {
        let grid: Vec<f64> = (1..=64).map(|k| k as f64 / 64.0).collect();
        for th in [0.1, 0.5, 0.9] {
            for v in [GridVariant::Raw, GridVariant::Bridged] {
                let kg = build_kernel_grid(th, &grid, v).unwrap();
                let cov = kg.block_cov();
                assert!((cov - cov.transpose()).amax() <= 1e-15);
                assert!(kg.jitter() <= 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_kernel_grid(0.5, &[0.0, 1.0], GridVariant::Raw).is_err());
        assert!(build_kernel_grid(0.5, &[0.5, 0.5], GridVariant::Raw).is_err());
        assert!(build_kernel_grid(0.5, &[0.5, 1.1], GridVariant::Raw).is_err());
    }

    #[test]
    fn estimated_kernel_reduces_to_bridge_without_correction() {
        let m = AMeasure::example1();
        let c = EstimatedCorrection::new(0.5, &m);
        // g vanishes at t = 1, so the corrected kernel is pinned there as well.
        assert_eq!(c.g(1.0), 0.0);
        assert_abs_diff_eq!(c.cov(true, 1.0, 0.3), 0.0, epsilon = 1e-15);
        // Var ξ equals four times the estimator's asymptotic variance.
        let v = crate::estimation::estimator_asym_variance(0.5, &m);
        assert_abs_diff_eq!(c.xi_variance(), 4.0 * v, epsilon = 1e-13);
    }
}
