//! Quadrature helpers shared by the occupancy sums, the Nyström step and the
//! Smirnov integrals.

use gauss_quad::legendre::GaussLegendre;
use std::num::NonZeroUsize;

/// Gauss–Legendre nodes and weights mapped to `(a, b)`, nodes ascending.
pub fn gauss_legendre(m: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let rule = GaussLegendre::new(NonZeroUsize::new(m).expect("at least one node"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

/// Gauss–Legendre panel on the reference interval `[-1, 1]`.
struct Panel {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Panel {
    fn new(m: usize) -> Self {
        let (nodes, weights) = gauss_legendre(m, -1.0, 1.0);
        Self { nodes, weights }
    }

    fn apply<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, f: &mut F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Adaptive bisection integrator: a panel is accepted once its estimate agrees
/// with the sum of its two halves within `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let panel = Panel::new(15);
    let mut total = 0.0;
    let mut stack = vec![(a, b, panel.apply(a, b, &mut f), 0u32)];
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = panel.apply(lo, mid, &mut f);
        let right = panel.apply(mid, hi, &mut f);
        let refined = left + right;
        let tol = abs_tol.max(rel_tol * refined.abs());
        if (refined - whole).abs() <= tol || depth >= 100 {
            total += refined;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_weights_sum_to_length() {
        let (x, w) = gauss_legendre(32, 0.0, 1.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
        assert!(x[0] > 0.0 && x[31] < 1.0);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 t^{-1/2} dt = 2
        let v = integrate_adaptive(|t| t.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12);
        assert!((v - 2.0).abs() < 1e-8, "{v}");
        let v = integrate_adaptive(|t| t.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
    }
}
