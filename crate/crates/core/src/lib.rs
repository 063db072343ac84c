//! Forward and backward distinct-count processes of infinite urn schemes,
//! exponent estimation from those processes, and empirical-bridge
//! homogeneity tests with Monte Carlo and spectral null distributions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub mod backend;
pub mod bridge;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod kernel;
pub mod limit;
pub mod quad;
pub mod seed;
pub mod spectral;
pub mod stats;
pub mod stream_io;
pub mod urn;

pub use backend::{
    AutoNull, CdfBackend, LatticeNull, MonteCarloNull, NullDistribution, PValue, PrecomputedNull,
    SpectralNull,
};
pub use bridge::{
    empirical_bridge, run_estimated_theta_test, run_known_theta_test, w2_statistic, BridgePath,
    TestReport, ThetaSource,
};
pub use error::{Error, Result};
pub use estimation::{
    estimator_asym_variance, theta_estimator, theta_example1, validate_measure, AMeasure, Atom,
    ThetaEstimate,
};
pub use kernel::{
    build_kernel_grid, kernel_k, kernel_k0, kernel_k0prime, kernel_kprime, CovarianceKernel,
    GridVariant, KernelGrid, LimitKernel,
};
pub use limit::{gp_simulate, limit_w2_sample, mc_cdf, LimitSample, NullSpec};
pub use seed::SeedStream;
pub use spectral::{nystrom_eigs, smirnov_cdf, spectral_p_value, SpectralModel};
pub use urn::{
    backward_counts, exact_mean_occupancy, exact_poisson_cov, forward_counts,
    poisson_mean_occupancy, sample_stream, zipf_law, Direction, OccupancyPath, ProbabilityLaw,
    Stream,
};

/// Known-exponent or estimated-exponent form of the bridge statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Known,
    Estimated,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Known => "known",
            Variant::Estimated => "estimated",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known" => Ok(Variant::Known),
            "estimated" => Ok(Variant::Estimated),
            other => Err(Error::InvalidParameter(format!("unknown variant {other:?}"))),
        }
    }
}
