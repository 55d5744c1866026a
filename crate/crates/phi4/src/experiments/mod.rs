//! One runner per experiment kind. Grid points fan out over the rayon pool
//! and are collected in grid order, so reports do not depend on scheduling.

mod asymptoticity;
mod expand;
mod four_point;
mod oracle;
mod simulate;
mod toy;
mod two_point;

pub use asymptoticity::{run_asymptoticity, NOISE_SIGMAS, SLOPE_BAND};
pub use expand::run_expand;
pub use four_point::{run_four_point, CORRECTED_SPREAD_MAX, U4_SPREAD_MAX};
pub use oracle::{run_oracle_suite, RESIDUAL_TOL};
pub use simulate::{measurement_table, run_simulation, CHECKPOINT_FILE};
pub use toy::{run_toy, run_toy_grid};
pub use two_point::{run_two_point, NORM_SPREAD_MAX, POINTWISE_SIGMAS};

use phi4_core::graph::{to_dot, Term};
use phi4_core::langevin::{run_chains, MeasurementSet, Probes};
use phi4_core::stats::linear_fit;
use rayon::prelude::*;

use crate::config::{ExperimentSpec, Kind};
use crate::report::Report;
use crate::HarnessError;

pub fn run(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    match spec.kind {
        Kind::Toy => run_toy_grid(spec),
        Kind::Expand => run_expand(spec),
        Kind::Oracle => run_oracle_suite(spec),
        Kind::Asymptoticity => run_asymptoticity(spec),
        Kind::TwoPoint => run_two_point(spec),
        Kind::FourPoint => run_four_point(spec),
    }
}

fn expect_kind(spec: &ExperimentSpec, kind: Kind) -> Result<(), HarnessError> {
    if spec.kind != kind {
        return Err(HarnessError::Config(format!("expected a `{kind}` spec, got `{}`", spec.kind)));
    }
    Ok(())
}

fn over_grid<T: Send>(
    grid: &[f64],
    f: impl Fn(usize, f64) -> Result<T, HarnessError> + Sync,
) -> Result<Vec<T>, HarnessError> {
    grid.par_iter().enumerate().map(|(i, &l)| f(i, l)).collect()
}

fn measure(spec: &ExperimentSpec, lambda: f64, probes: &Probes) -> Result<MeasurementSet, HarnessError> {
    Ok(run_chains(&spec.sim_config(lambda)?, probes, spec.sim.n_chains)?)
}

fn dot_graphs(prefix: &str, terms: &[Term]) -> Vec<(String, String)> {
    terms
        .iter()
        .enumerate()
        .map(|(i, t)| (format!("{prefix}_{i}"), to_dot(&t.graph)))
        .collect()
}

/// `(slope, slope stderr, intercept)` of `log y` against `log x`.
fn loglog_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    linear_fit(&lx, &ly).map(|(a, b, _, sb)| (b, sb, a))
}

/// `max / min` of positive values; infinite if any is zero.
fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loglog_recovers_power() {
        let x = [0.05, 0.1, 0.2];
        let y: Vec<f64> = x.iter().map(|l: &f64| -3.0 * l.powi(2)).collect();
        let (b, sb, a) = loglog_fit(&x, &y).unwrap();
        assert!((b - 2.0).abs() < 1e-12 && sb < 1e-10 && (a - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn spread_of_ratios() {
        assert_eq!(spread(&[1.0, 2.0, 1.5]), 2.0);
        assert_eq!(spread(&[0.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let spec = ExperimentSpec::defaults(Kind::Toy);
        assert!(matches!(run_two_point(&spec), Err(HarnessError::Config(_))));
    }
}
