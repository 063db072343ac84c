//! Monte Carlo tabulation of the limiting laws of `W²` and `Ŵ²`.
//!
//! The raw pair `(Z, Z')` is drawn on a grid from its block covariance; the
//! bridges and the estimated-exponent correction are formed path-wise and the
//! squared norm is integrated with the same exact piecewise-linear rule used
//! for the finite-sample statistic.

use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{validate_measure, AMeasure, Atom};
use crate::kernel::{build_kernel_grid, GridVariant, KernelGrid};
use crate::seed::SeedStream;
use crate::Variant;

/// Which limiting law to tabulate: known exponent, or exponent estimated
/// with an A-measure (evaluated at the plug-in `theta`).
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpec {
    pub theta: f64,
    pub measure: Option<AMeasure>,
}

impl NullSpec {
    pub fn known(theta: f64) -> Self {
        Self { theta, measure: None }
    }

    pub fn estimated(theta: f64, measure: AMeasure) -> Self {
        Self { theta, measure: Some(measure) }
    }

    pub fn variant(&self) -> Variant {
        if self.measure.is_some() {
            Variant::Estimated
        } else {
            Variant::Known
        }
    }
}

/// Joint draws of `(Z, Z')` on a kernel grid, one row of `dim` values per replication.
#[derive(Debug, Clone)]
pub struct GpPaths {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl GpPaths {
    pub fn reps(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn path(&self, r: usize) -> &[f64] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }
}

fn draw_into(kg: &KernelGrid, seeds: &SeedStream, r: usize, z: &mut [f64], out: &mut [f64]) {
    let mut rng = seeds.rng(r as u64);
    for v in z.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    kg.correlate(z, out);
}

pub fn gp_simulate(kg: &KernelGrid, reps: usize, seed: u64) -> GpPaths {
    let dim = kg.dim();
    let seeds = SeedStream::new(seed);
    let mut values = vec![0.0; reps * dim];
    values.par_chunks_mut(dim).enumerate().for_each_init(
        || vec![0.0; dim],
        |z, (r, out)| draw_into(kg, &seeds, r, z, out),
    );
    GpPaths { dim, values }
}

/// Uniform grid `k/grid_size` augmented with ½, 1 and the measure's atoms.
pub fn limit_grid(grid_size: usize, measure: Option<&AMeasure>) -> Vec<f64> {
    let mut grid: Vec<f64> = (1..=grid_size).map(|k| k as f64 / grid_size as f64).collect();
    grid.push(0.5);
    grid.push(1.0);
    if let Some(m) = measure {
        grid.extend(m.atoms().iter().map(|a| a.location));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    grid
}

/// `∫_0^1 f²` for the piecewise-linear interpolant through `(0,0)` and `(grid_i, values_i)`.
pub fn piecewise_linear_sq_integral(grid: &[f64], values: &[f64]) -> f64 {
    let (mut t0, mut a) = (0.0, 0.0);
    let mut total = 0.0;
    for (&t, &b) in grid.iter().zip(values) {
        total += (t - t0) * (a * a + a * b + b * b) / 3.0;
        t0 = t;
        a = b;
    }
    total
}

/// Sorted Monte Carlo sample of the limiting statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSample {
    values: Vec<f64>,
    variant: Variant,
    theta: f64,
    measure: Option<AMeasure>,
    reps: usize,
    grid_size: usize,
    seed: u64,
}

impl LimitSample {
    pub fn values(&self) -> &[f64] {
        &self.values
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

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> NullSpec {
        NullSpec { theta: self.theta, measure: self.measure.clone() }
    }

    /// `(r + 1)/(m + 1)` where `r` counts simulated values `≥ w2`.
    pub fn p_value(&self, w2: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < w2);
        let r = self.values.len() - below;
        (r + 1) as f64 / (self.values.len() + 1) as f64
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Empirical quantile (lower order statistic).
    pub fn quantile(&self, q: f64) -> f64 {
        let idx = ((q * self.values.len() as f64).ceil() as usize).clamp(1, self.values.len()) - 1;
        self.values[idx]
    }

    pub fn write<W: Write>(&self, mut out: W, extra_header: &[String]) -> Result<()> {
        writeln!(out, "# urnbridge limit-sample")?;
        for line in extra_header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "# theta={}", self.theta)?;
        writeln!(out, "# variant={}", self.variant)?;
        writeln!(out, "# grid_size={}", self.grid_size)?;
        writeln!(out, "# reps={}", self.reps)?;
        writeln!(out, "# seed={}", self.seed)?;
        if let Some(m) = &self.measure {
            writeln!(out, "# measure={}", m.spec_string())?;
        }
        for v in &self.values {
            writeln!(out, "{v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut values = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.trim().split_once('=') {
                    header.insert(k.trim().to_owned(), v.trim().to_owned());
                }
            } else if !line.is_empty() {
                let v: f64 = line
                    .parse()
                    .map_err(|e| Error::Parse { line: i + 1, message: format!("{e}") })?;
                values.push(v);
            }
        }
        let field = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| Error::Parse { line: 0, message: format!("missing header {k}") })
        };
        let num = |k: &str| -> Result<f64> {
            field(k)?.parse().map_err(|e| Error::Parse { line: 0, message: format!("{k}: {e}") })
        };
        let variant: Variant = field("variant")?.parse()?;
        let measure = match header.get("measure") {
            Some(spec) => Some(parse_measure_list(spec)?),
            None => None,
        };
        if (variant == Variant::Estimated) != measure.is_some() {
            return Err(Error::Parse { line: 0, message: "variant and measure disagree".into() });
        }
        let reps = num("reps")? as usize;
        if reps != values.len() || values.is_empty() {
            return Err(Error::Parse { line: 0, message: "value count does not match reps".into() });
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            values,
            variant,
            theta: num("theta")?,
            measure,
            reps,
            grid_size: num("grid_size")? as usize,
            seed: num("seed")? as u64,
        })
    }
}

pub(crate) fn parse_measure_list(spec: &str) -> Result<AMeasure> {
    let atoms = spec.split(',').map(str::parse::<Atom>).collect::<Result<Vec<_>>>()?;
    validate_measure(&atoms)
}

/// Empirical CDF `#{v ≤ x} / m`.
pub fn mc_cdf(sample: &LimitSample, x: f64) -> f64 {
    sample.values.partition_point(|&v| v <= x) as f64 / sample.values.len() as f64
}

/// Per-path functional turning a raw `(Z, Z')` draw into `W²` (or `Ŵ²`).
struct Functional {
    grid: Vec<f64>,
    pow: Vec<f64>,
    /// `t^θ ln t / 2` and `(index, h_j t_j^(−θ))` for the estimated variant.
    correction: Option<(Vec<f64>, Vec<(usize, f64)>)>,
}

impl Functional {
    fn new(spec: &NullSpec, grid: Vec<f64>) -> Self {
        let th = spec.theta;
        let pow: Vec<f64> = grid.iter().map(|t| t.powf(th)).collect();
        let correction = spec.measure.as_ref().map(|m| {
            let half_g = grid.iter().zip(&pow).map(|(t, p)| 0.5 * p * t.ln()).collect();
            let weights = m
                .atoms()
                .iter()
                .map(|a| {
                    let idx = grid
                        .iter()
                        .position(|&t| (t - a.location).abs() <= 1e-12)
                        .expect("atoms are grid points");
                    (idx, a.jump * a.location.powf(-th))
                })
                .collect();
            (half_g, weights)
        });
        Self { grid, pow, correction }
    }

    fn apply(&self, path: &[f64], buf: &mut Vec<f64>) -> f64 {
        let m = self.grid.len();
        let (z, zp) = path.split_at(m);
        let xi = self
            .correction
            .as_ref()
            .map(|(_, w)| w.iter().map(|&(i, c)| c * (z[i] + zp[i])).sum::<f64>());
        let mut total = 0.0;
        for comp in [z, zp] {
            let end = comp[m - 1];
            buf.clear();
            buf.extend(comp.iter().zip(&self.pow).map(|(v, p)| v - p * end));
            if let (Some((half_g, _)), Some(xi)) = (&self.correction, xi) {
                for (b, g) in buf.iter_mut().zip(half_g) {
                    *b -= g * xi;
                }
            }
            total += piecewise_linear_sq_integral(&self.grid, buf);
        }
        total
    }
}

pub fn limit_w2_sample(
    spec: &NullSpec,
    grid_size: usize,
    reps: usize,
    seed: u64,
) -> Result<LimitSample> {
    if !(spec.theta > 0.0 && spec.theta < 1.0) {
        return Err(Error::InvalidParameter(format!("theta {} outside (0,1)", spec.theta)));
    }
    if grid_size == 0 || reps == 0 {
        return Err(Error::InvalidParameter("grid size and reps must be positive".into()));
    }
    let grid = limit_grid(grid_size, spec.measure.as_ref());
    let kg = build_kernel_grid(spec.theta, &grid, GridVariant::Raw)?;
    let functional = Functional::new(spec, grid);
    let seeds = SeedStream::new(seed);
    let dim = kg.dim();
    let mut values: Vec<f64> = (0..reps)
        .into_par_iter()
        .map_init(
            || (vec![0.0; dim], vec![0.0; dim], Vec::with_capacity(dim / 2)),
            |(z, path, buf), r| {
                draw_into(&kg, &seeds, r, z, path);
                functional.apply(path, buf)
            },
        )
        .collect();
    values.sort_by(f64::total_cmp);
    Ok(LimitSample {
        values,
        variant: spec.variant(),
        theta: spec.theta,
        measure: spec.measure.clone(),
        reps,
        grid_size,
        seed,
    })
}
