//! Empirical covariance checks of the normalised occupancy processes against
//! the limit kernels (fixed `n`) and the exact Poissonised covariance.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{kernel_k, kernel_kprime};
use crate::seed::SeedStream;
use crate::urn::{
    exact_mean_occupancy, exact_poisson_cov, paths_into, poisson_mean_occupancy,
    poissonized_counts, ProbabilityLaw,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    #[serde(rename = "fixed-n")]
    FixedN,
    #[serde(rename = "poissonized")]
    Poissonized,
}

/// Which pair of processes a row correlates: forward/forward, backward/backward
/// or forward/backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Pair {
    #[serde(rename = "RR")]
    ForwardForward,
    #[serde(rename = "R'R'")]
    BackwardBackward,
    #[serde(rename = "RR'")]
    ForwardBackward,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::FixedN => "fixed-n",
            Scheme::Poissonized => "poissonized",
        })
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pair::ForwardForward => "RR",
            Pair::BackwardBackward => "R'R'",
            Pair::ForwardBackward => "RR'",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovRow {
    pub scheme: Scheme,
    pub pair: Pair,
    pub s: f64,
    pub t: f64,
    pub empirical: f64,
    pub target: f64,
    /// Standard error of `empirical`; `None` with a single replication.
    pub se: Option<f64>,
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovTable {
    pub theta: f64,
    pub n: u64,
    pub reps: usize,
    pub seed: u64,
    pub grid: Vec<f64>,
    pub rows: Vec<CovRow>,
}

impl CovTable {
    pub fn rows_for(&self, scheme: Scheme) -> impl Iterator<Item = &CovRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    /// Fraction of rows of `scheme` with `|z| ≤ bound`; rows without a z-score count as failures.
    pub fn fraction_within(&self, scheme: Scheme, bound: f64) -> f64 {
        let rows: Vec<&CovRow> = self.rows_for(scheme).collect();
        let ok = rows.iter().filter(|r| r.z.is_some_and(|z| z.abs() <= bound)).count();
        ok as f64 / rows.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("scheme\tpair\ts\tt\tempirical\ttarget\tse\tz\n");
        for r in &self.rows {
            let se = r.se.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.6e}"));
            let z = r.z.map_or_else(|| "undefined".to_owned(), |v| format!("{v:.3}"));
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.6e}\t{:.6e}\t{se}\t{z}\n",
                r.scheme, r.pair, r.s, r.t, r.empirical, r.target
            ));
        }
        out
    }
}

/// Mean of `x_r y_r` (both exactly centred) with its standard error.
fn product_moment(xs: &[f64], ys: &[f64]) -> (f64, Option<f64>) {
    let reps = xs.len();
    let prods: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x * y).collect();
    let mean = prods.iter().sum::<f64>() / reps as f64;
    if reps < 2 {
        return (mean, None);
    }
    let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    (mean, Some((var / reps as f64).sqrt()))
}

fn row(scheme: Scheme, pair: Pair, s: f64, t: f64, xs: &[f64], ys: &[f64], target: f64) -> CovRow {
    let (empirical, se) = product_moment(xs, ys);
    let z = se.filter(|&se| se > 0.0).map(|se| (empirical - target) / se);
    CovRow { scheme, pair, s, t, empirical, target, se, z }
}

fn index_at(n: u64, t: f64) -> usize {
    (n as f64 * t + 1e-9).floor() as usize
}

/// Covariances of `Z_n(s) = (R_{⌊ns⌋} − E R_{⌊ns⌋})/√(E R_n)` and its backward
/// analogue against `K`/`K'`, plus covariances of the Poissonised counts
/// `R_{Π(tn)}`, `R'_{Π(τn)}` against the exact Poisson formula.
pub fn covcheck(
    law: &ProbabilityLaw,
    theta: f64,
    n: u64,
    grid: &[f64],
    reps: usize,
    seed: u64,
) -> Result<CovTable> {
    if n == 0 || reps == 0 || grid.is_empty() {
        return Err(Error::InvalidParameter("n, reps and grid must be non-empty".into()));
    }
    if grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::InvalidParameter("grid points must lie in (0,1]".into()));
    }
    let m = grid.len();
    let sampler = law.sampler();
    let seeds = SeedStream::new(seed);

    let idx: Vec<usize> = grid.iter().map(|&t| index_at(n, t)).collect();
    let centre: Vec<f64> = idx.iter().map(|&k| exact_mean_occupancy(law, k as u64)).collect();
    let scale = exact_mean_occupancy(law, n).sqrt().recip();
    let fixed_seeds = seeds.child(1);
    let fixed: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(labels, fwd, bwd), r| {
                let mut rng = fixed_seeds.rng(r as u64);
                labels.clear();
                sampler.fill(&mut rng, n as usize, labels);
                paths_into(labels, fwd, bwd);
                let f = idx.iter().zip(&centre).map(|(&k, c)| (fwd[k] as f64 - c) * scale);
                let b = idx.iter().zip(&centre).map(|(&k, c)| (bwd[k] as f64 - c) * scale);
                f.chain(b).collect()
            },
        )
        .collect();

    let pois_centre: Vec<f64> = grid.iter().map(|&t| poisson_mean_occupancy(law, t * n as f64)).collect();
    let pois_seeds = seeds.child(2);
    let pois: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = pois_seeds.rng(r as u64);
            let (f, b) = poissonized_counts(&sampler, n as f64, grid, grid, &mut rng);
            let f = f.into_iter().zip(&pois_centre).map(|(v, c)| v as f64 - c);
            let b = b.into_iter().zip(&pois_centre).map(|(v, c)| v as f64 - c);
            f.chain(b).collect()
        })
        .collect();

    let column = |data: &[Vec<f64>], j: usize| -> Vec<f64> { data.iter().map(|v| v[j]).collect() };
    let mut rows = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let (s, t) = (grid[i], grid[j]);
            if j >= i {
                rows.push(row(
                    Scheme::FixedN,
                    Pair::ForwardForward,
                    s,
                    t,
                    &column(&fixed, i),
                    &column(&fixed, j),
                    kernel_k(theta, s, t),
                ));
                rows.push(row(
                    Scheme::FixedN,
                    Pair::BackwardBackward,
                    s,
                    t,
                    &column(&fixed, m + i),
                    &column(&fixed, m + j),
                    kernel_k(theta, s, t),
                ));
            }
            rows.push(row(
                Scheme::FixedN,
                Pair::ForwardBackward,
                s,
                t,
                &column(&fixed, i),
                &column(&fixed, m + j),
                kernel_kprime(theta, s, t),
            ));
        }
    }
    for i in 0..m {
        for j in 0..m {
            let (t, tau) = (grid[i], grid[j]);
            rows.push(row(
                Scheme::Poissonized,
                Pair::ForwardBackward,
                t,
                tau,
                &column(&pois, i),
                &column(&pois, m + j),
                exact_poisson_cov(law, n, t, tau),
            ));
        }
    }
    Ok(CovTable { theta, n, reps, seed, grid: grid.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::urn::zipf_law;

    #[test]
    fn cross_target_vanishes_below_the_antidiagonal() {
        let law = zipf_law(0.5, 1000).unwrap();
        let table = covcheck(&law, 0.5, 200, &[0.25, 0.5, 0.75, 1.0], 20, 1).unwrap();
        for r in table.rows.iter().filter(|r| r.pair == Pair::ForwardBackward) {
            if r.s + r.t <= 1.0 {
                assert_eq!(r.target, 0.0);
            }
        }
    }

    #[test]
    fn single_replication_leaves_z_undefined() {
        let law = zipf_law(0.5, 1000).unwrap();
        let table = covcheck(&law, 0.5, 100, &[0.5, 1.0], 1, 4).unwrap();
        assert!(table.rows.iter().all(|r| r.z.is_none() && r.se.is_none()));
        assert!(table.to_text().contains("undefined"));
    }

    #[test]
    fn poissonized_rows_agree_with_exact_covariance() {
        let law = zipf_law(0.5, 2000).unwrap();
        let table = covcheck(&law, 0.5, 2000, &[0.25, 0.5, 0.75, 1.0], 2000, 11).unwrap();
        assert!(table.fraction_within(Scheme::Poissonized, 3.0) >= 0.9);
    }
}
