use phi4_core::besov::{holder_norm, WeightSpec};
use phi4_core::diagram::{eval_pure_terms, BoundaryConfigs};
use phi4_core::graph::expand;
use phi4_core::langevin::Probes;
use phi4_core::{green_function, LatticeField};

use super::{dot_graphs, expect_kind, loglog_fit, measure, over_grid, spread};
use crate::config::{ExperimentSpec, Kind};
use crate::experiments::{NOISE_SIGMAS, SLOPE_BAND};
use crate::report::{fmt, Check, Plot, Report, Table};
use crate::HarnessError;

/// Largest accepted `max / min` of `||S^2 - C|| / lambda^2` over the grid.
pub const NORM_SPREAD_MAX: f64 = 1.5;
/// Pointwise agreement with the leading diagram, in standard errors.
pub const POINTWISE_SIGMAS: f64 = 3.0;

struct Point {
    lambda: f64,
    /// `(S^2 - C)(r)` from the remainder diagrams, and its stderr.
    diff: Vec<f64>,
    diff_se: Vec<f64>,
    /// `S^2(r) - C(r)` from raw second moments.
    direct: Vec<f64>,
    direct_se: Vec<f64>,
    norm: f64,
    norm_se: f64,
}

/// Short-distance size of `S^2 - C` in `C^{2 - gamma}` and its pointwise
/// comparison with `lambda^2 F_2 / 2`.
pub fn run_two_point(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    expect_kind(spec, Kind::TwoPoint)?;
    let lat = spec.lattice()?;
    let n = lat.n_sites();
    let alpha = 2.0 - spec.gamma;
    let w = WeightSpec::unit();
    let exp = expand(2, 2)?;
    let seps = BoundaryConfigs::all_separations(&lat);
    // lambda^2 coefficient, i.e. F_2 / 2
    let lead = eval_pure_terms(&exp.f_terms[2], &lat, &seps)?.values;
    let c = green_function(&lat);
    let probes = Probes {
        two_point_remainder: true,
        ..Probes::default()
    };

    let points = over_grid(&spec.lambda_grid, |_, lambda| {
        let ms = measure(spec, lambda, &probes)?;
        let l2 = lambda * lambda;
        let r2 = ms.two_point_remainder()?.expect("probe enabled");
        let s2 = ms.s2()?;
        let (norm, norm_se) = ms
            .jackknife_two_point_remainder(|v| {
                let f = LatticeField::new(&lat, v.iter().map(|x| l2 * x).collect()).expect("sizes agree");
                vec![holder_norm(&f, alpha, &w).unwrap_or(f64::NAN)]
            })?
            .expect("probe enabled");
        Ok(Point {
            lambda,
            diff: r2.values.iter().map(|v| l2 * v).collect(),
            diff_se: r2.stderr.iter().map(|v| l2 * v).collect(),
            direct: (0..n).map(|r| s2.values[r] - c.at(r)).collect(),
            direct_se: s2.stderr,
            norm: norm[0],
            norm_se: norm_se[0],
        })
    })?;

    let mut rep = Report::new("two_point");
    let mut sep = Table::new(
        "separations",
        &["lambda", "r", "dx", "dy", "diff", "diff_stderr", "direct", "direct_stderr", "leading"],
    );
    let mut norms = Table::new("norms", &["lambda", "norm", "norm_stderr", "norm_over_lambda2", "flagged"]);
    let mut point = Table::new(
        "pointwise",
        &["lambda", "diff", "diff_stderr", "leading", "deviation", "z", "direct", "direct_stderr", "direct_z"],
    );
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for p in &points {
        let l2 = p.lambda * p.lambda;
        for r in 0..n {
            let (dx, dy) = lat.centered(r);
            sep.push(vec![
                fmt(p.lambda),
                r.to_string(),
                dx.to_string(),
                dy.to_string(),
                fmt(p.diff[r]),
                fmt(p.diff_se[r]),
                fmt(p.direct[r]),
                fmt(p.direct_se[r]),
                fmt(l2 * lead[r]),
            ]);
        }
        let noisy = !(p.norm > NOISE_SIGMAS * p.norm_se);
        if noisy {
            rep.flagged.push(format!("lambda={}: norm {} is within noise", fmt(p.lambda), fmt(p.norm)));
        } else {
            xs.push(p.lambda);
            ys.push(p.norm);
        }
        norms.push(vec![fmt(p.lambda), fmt(p.norm), fmt(p.norm_se), fmt(p.norm / l2), noisy.to_string()]);

        let dev = p.diff[0] - l2 * lead[0];
        let z = dev.abs() / p.diff_se[0];
        let direct_z = (p.direct[0] - l2 * lead[0]).abs() / p.direct_se[0];
        point.push(vec![
            fmt(p.lambda),
            fmt(p.diff[0]),
            fmt(p.diff_se[0]),
            fmt(l2 * lead[0]),
            fmt(dev),
            fmt(z),
            fmt(p.direct[0]),
            fmt(p.direct_se[0]),
            fmt(direct_z),
        ]);
        rep.checks.push(Check::new(
            format!("pointwise_z[lambda={}]", fmt(p.lambda)),
            z,
            format!("<= {}", fmt(POINTWISE_SIGMAS)),
            z <= POINTWISE_SIGMAS,
        ));
    }
    let ratios: Vec<f64> = xs.iter().zip(&ys).map(|(l, v)| v / (l * l)).collect();
    if ratios.len() >= 2 {
        rep.checks.push(Check::below("norm_over_lambda2_spread", spread(&ratios), NORM_SPREAD_MAX));
    } else {
        rep.checks.push(Check::new("norm_over_lambda2_spread", f64::NAN, "at least 2 resolved points", false));
    }
    let mut fit = Table::new("fit", &["slope", "slope_stderr", "intercept", "points"]);
    if let Some((b, sb, a)) = loglog_fit(&xs, &ys) {
        fit.push(vec![fmt(b), fmt(sb), fmt(a), xs.len().to_string()]);
        rep.checks.push(Check::within("norm_slope", b, 2.0 - SLOPE_BAND, 2.0 + SLOPE_BAND));
    }
    rep.plots.push(Plot {
        title: format!("C^{} norm of S^2 - C", fmt(alpha)),
        table: norms.name.clone(),
        x: "lambda".into(),
        y: "norm".into(),
        err: Some("norm_stderr".into()),
        logscale: true,
        filter: None,
    });
    rep.plots.push(Plot {
        title: "(S^2 - C)(r) along the first axis".into(),
        table: sep.name.clone(),
        x: "dx".into(),
        y: "diff".into(),
        err: Some("diff_stderr".into()),
        logscale: false,
        filter: Some(("dy".into(), "0".into())),
    });
    rep.graphs.extend(dot_graphs("F2", &exp.f_terms[2]));
    rep.tables.extend([sep, norms, point, fit]);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_produces_consistent_tables() {
        let mut spec = ExperimentSpec::defaults(Kind::TwoPoint);
        spec.size = 4.0;
        spec.lambda_grid = vec![0.1, 0.2];
        spec.sim.burn_in = 500;
        spec.sim.n_samples = 4000;
        let r = run_two_point(&spec).unwrap();
        assert_eq!(r.table("separations").unwrap().rows.len(), 32);
        assert_eq!(r.table("norms").unwrap().rows.len(), 2);
        let norms = r.table("norms").unwrap();
        for row in &norms.rows {
            let v: f64 = row[1].parse().unwrap();
            assert!(v > 0.0);
        }
        assert!(r.check("norm_over_lambda2_spread").is_some());
        assert_eq!(r.graphs.len(), 1);
    }
}
