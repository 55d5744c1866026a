use phi4_core::diagram::{eval_pure_terms, BoundaryConfigs, QuadratureOracle};
use phi4_core::graph::expand;
use phi4_core::langevin::Probes;

use super::{dot_graphs, expect_kind, loglog_fit, measure, over_grid};
use crate::config::{ExperimentSpec, Kind};
use crate::report::{fmt, Check, Plot, Report, Table};
use crate::HarnessError;

/// Accepted distance of a fitted exponent from its theoretical value.
pub const SLOPE_BAND: f64 = 0.3;
/// A remainder within this many standard errors of zero is noise.
pub const NOISE_SIGMAS: f64 = 2.0;
/// Quadrature remainders are trusted down to this multiple of the node check.
const ORACLE_NOISE_FACTOR: f64 = 100.0;
const ORACLE_MAX_SITES: usize = 4;

struct Point {
    lambda: f64,
    s2: f64,
    truncation: f64,
    remainder: f64,
    stderr: f64,
}

/// `S^2(0) - sum_{n <= N} lambda^n F_n / n!` across the grid, with a log-log
/// fit. Quadrature on lattices of at most four sites, Monte Carlo otherwise.
pub fn run_asymptoticity(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    expect_kind(spec, Kind::Asymptoticity)?;
    let lat = spec.lattice()?;
    let exact = lat.n_sites() <= ORACLE_MAX_SITES;
    if !exact && spec.order > 2 {
        return Err(HarnessError::Config(format!(
            "Monte Carlo remainders support N <= 2 (got {})",
            spec.order
        )));
    }
    let exp = expand(2, spec.order.max(2) as i64)?;
    let origin = BoundaryConfigs::coincident(2);
    let coeffs: Vec<f64> = exp
        .f_terms
        .iter()
        .map(|t| if t.is_empty() { Ok(0.0) } else { eval_pure_terms(t, &lat, &origin).map(|v| v.values[0]) })
        .collect::<Result<_, _>>()?;
    let series = |lambda: f64| -> f64 { (0..=spec.order).map(|n| lambda.powi(n as i32) * coeffs[n]).sum() };

    let points = over_grid(&spec.lambda_grid, |_, lambda| {
        if exact {
            let q = QuadratureOracle::new(&lat, lambda)?;
            let s2 = q.two_point(0, 0)?;
            let truncation = series(lambda);
            Ok(Point {
                lambda,
                s2,
                truncation,
                remainder: s2 - truncation,
                stderr: ORACLE_NOISE_FACTOR * q.check_error().unwrap_or(0.0).max(f64::EPSILON) * s2.abs(),
            })
        } else {
            // S^2 - C = lambda^2 R_2 exactly, so only the remainder probe is needed
            let probes = Probes {
                two_point_remainder: true,
                ..Probes::default()
            };
            let ms = measure(spec, lambda, &probes)?;
            let r2 = ms.two_point_remainder()?.expect("probe enabled");
            let l2 = lambda * lambda;
            let sub = if spec.order >= 2 { coeffs[2] } else { 0.0 };
            Ok(Point {
                lambda,
                s2: coeffs[0] + l2 * r2.values[0],
                truncation: series(lambda),
                remainder: l2 * (r2.values[0] - sub),
                stderr: l2 * r2.stderr[0],
            })
        }
    })?;

    let mut rep = Report::new("asymptoticity");
    let mut t = Table::new("remainder", &["lambda", "s2", "truncation", "remainder", "stderr", "flagged"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &points {
        let noisy = !(p.remainder.abs() > NOISE_SIGMAS * p.stderr);
        if noisy {
            rep.flagged.push(format!(
                "lambda={}: remainder {} within {NOISE_SIGMAS} sigma of zero",
                fmt(p.lambda),
                fmt(p.remainder)
            ));
        } else {
            xs.push(p.lambda);
            ys.push(p.remainder);
        }
        t.push(vec![
            fmt(p.lambda),
            fmt(p.s2),
            fmt(p.truncation),
            fmt(p.remainder),
            fmt(p.stderr),
            noisy.to_string(),
        ]);
    }
    // F_1 vanishes for the two-point function, so N = 0 and N = 1 both leave lambda^2
    let expected = (spec.order + 1).max(2) as f64;
    let mut fit = Table::new("fit", &["order", "expected", "slope", "slope_stderr", "intercept", "points"]);
    match loglog_fit(&xs, &ys) {
        Some((b, sb, a)) => {
            fit.push(vec![
                spec.order.to_string(),
                fmt(expected),
                fmt(b),
                fmt(sb),
                fmt(a),
                xs.len().to_string(),
            ]);
            rep.checks.push(Check::within("remainder_slope", b, expected - SLOPE_BAND, expected + SLOPE_BAND));
        }
        None => rep.checks.push(Check::new("remainder_slope", f64::NAN, "at least 2 resolved points", false)),
    }
    rep.plots.push(Plot {
        title: format!("|S^2(0) - truncation at N={}|", spec.order),
        table: t.name.clone(),
        x: "lambda".into(),
        y: "remainder".into(),
        err: Some("stderr".into()),
        logscale: true,
        filter: None,
    });
    for n in 0..=spec.order.min(exp.f_terms.len() - 1) {
        rep.graphs.extend(dot_graphs(&format!("F{n}"), &exp.f_terms[n]));
    }
    rep.tables.push(t);
    rep.tables.push(fit);
    Ok(rep)
}
