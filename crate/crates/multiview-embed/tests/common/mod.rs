//! Shared fixtures for the integration suites: the synthetic acceptance
//! instances, chi-square goodness-of-fit, and finite-difference helpers.
//!
//! Each test binary compiles this module separately and uses a subset of it.
#![allow(dead_code)]

use multiview_embed::embedding::TrainConfig;
use multiview_embed::synth::{SynthSpec, ViewKind};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// 400 nodes in 4 communities; one community-aligned view and one noise view.
pub fn classification_instance(seed: u64) -> SynthSpec {
    SynthSpec {
        nodes: 400,
        communities: 4,
        views: vec![
            ViewKind::Informative { p_in: 0.2, p_out: 0.01 },
            ViewKind::Noise { p: 0.05 },
        ],
        heldout_frac: 0.1,
        weighted: false,
        seed,
    }
}

/// 400 nodes in 8 communities; two informative views drawn independently.
pub fn link_instance(seed: u64) -> SynthSpec {
    SynthSpec {
        nodes: 400,
        communities: 8,
        views: vec![
            ViewKind::Informative { p_in: 0.4, p_out: 0.002 },
            ViewKind::Informative { p_in: 0.4, p_out: 0.002 },
        ],
        heldout_frac: 0.1,
        weighted: false,
        seed,
    }
}

pub fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 32,
        negatives: 5,
        samples_per_iter: 1_000_000,
        iterations: 5,
        eta: 0.1,
        seed,
        ..TrainConfig::default()
    }
}

/// Chi-square goodness-of-fit of observed counts against expected
/// probabilities at significance `alpha`; zero-probability categories must
/// be empty and are excluded from the statistic.
pub fn chi_square_fits(counts: &[u64], probabilities: &[f64], alpha: f64) -> bool {
    assert_eq!(counts.len(), probabilities.len());
    let total: u64 = counts.iter().sum();
    let mut statistic = 0.0;
    let mut dof: i64 = -1;
    for (&observed, &p) in counts.iter().zip(probabilities) {
        if p == 0.0 {
            if observed > 0 {
                return false;
            }
            continue;
        }
        let expected = total as f64 * p;
        let d = observed as f64 - expected;
        statistic += d * d / expected;
        dof += 1;
    }
    if dof < 1 {
        return true;
    }
    let critical = ChiSquared::new(dof as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(1.0 - alpha);
    statistic < critical
}

/// Largest relative component error between an analytic gradient and its
/// finite-difference counterpart.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / n.abs().max(1e-6))
        .fold(0.0, f64::max)
}
