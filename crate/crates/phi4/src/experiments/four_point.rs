use phi4_core::diagram::eval_pure_terms;
use phi4_core::graph::expand;
use phi4_core::langevin::{connected_4pt, four_point_remainder, Probes};

use super::{dot_graphs, expect_kind, loglog_fit, measure, over_grid, spread};
use crate::config::{ExperimentSpec, Kind};
use crate::experiments::SLOPE_BAND;
use crate::report::{fmt, Check, Plot, Report, Table};
use crate::HarnessError;

pub const U4_SPREAD_MAX: f64 = 1.5;
pub const CORRECTED_SPREAD_MAX: f64 = 2.0;
/// A placement enters the stability checks only if every grid point
/// resolves it by this many standard errors.
const RESOLVED_SIGMAS: f64 = 3.0;

struct Point {
    lambda: f64,
    direct: Vec<f64>,
    direct_se: Vec<f64>,
    u4: Vec<f64>,
    u4_se: Vec<f64>,
    corrected: Vec<f64>,
    corrected_se: Vec<f64>,
}

/// Connected four-point function against its leading star diagram.
pub fn run_four_point(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    expect_kind(spec, Kind::FourPoint)?;
    let lat = spec.lattice()?;
    let configs = spec.four_point_configs()?;
    let exp = expand(4, 1)?;
    // lambda coefficient of S^4, i.e. -6 star
    let first = eval_pure_terms(&exp.f_terms[1], &lat, &configs)?.values;
    let probes = Probes {
        four_point: Some(configs.clone()),
        two_point_remainder: true,
        four_point_remainder: true,
    };
    let points = over_grid(&spec.lambda_grid, |_, lambda| {
        let ms = measure(spec, lambda, &probes)?;
        let direct = connected_4pt(&ms)?;
        let (u4, corrected) = four_point_remainder(&ms)?;
        Ok(Point {
            lambda,
            direct: direct.values,
            direct_se: direct.stderr,
            u4: u4.values,
            u4_se: u4.stderr,
            corrected: corrected.values,
            corrected_se: corrected.stderr,
        })
    })?;

    let mut rep = Report::new("four_point");
    let mut t = Table::new(
        "u4",
        &[
            "lambda",
            "config_id",
            "x2",
            "x3",
            "x4",
            "star",
            "direct",
            "direct_stderr",
            "u4",
            "u4_stderr",
            "corrected",
            "corrected_stderr",
        ],
    );
    for p in &points {
        for (i, cfg) in configs.configs.iter().enumerate() {
            t.push(vec![
                fmt(p.lambda),
                i.to_string(),
                cfg[1].to_string(),
                cfg[2].to_string(),
                cfg[3].to_string(),
                fmt(-first[i] / 6.0),
                fmt(p.direct[i]),
                fmt(p.direct_se[i]),
                fmt(p.u4[i]),
                fmt(p.u4_se[i]),
                fmt(p.corrected[i]),
                fmt(p.corrected_se[i]),
            ]);
        }
        // placement 0 is the coincident one
        let z = -p.u4[0] / p.u4_se[0];
        rep.checks.push(Check::new(
            format!("coincident_u4_negative_z[lambda={}]", fmt(p.lambda)),
            z,
            "> 3",
            z > 3.0,
        ));
    }

    let mut stab = Table::new("stability", &["config_id", "u4_over_lambda_spread", "corrected_over_lambda2_spread"]);
    let (mut worst_u4, mut worst_corr) = (1.0f64, 1.0f64);
    for i in 0..configs.len() {
        let resolved = |v: &dyn Fn(&Point) -> (f64, f64)| {
            points.iter().all(|p| {
                let (x, se) = v(p);
                x.abs() > RESOLVED_SIGMAS * se
            })
        };
        let u4_ok = resolved(&|p| (p.u4[i], p.u4_se[i]));
        let corr_ok = resolved(&|p| (p.corrected[i], p.corrected_se[i]));
        let s_u4 = spread(&points.iter().map(|p| p.u4[i].abs() / p.lambda).collect::<Vec<_>>());
        let s_corr = spread(&points.iter().map(|p| p.corrected[i].abs() / (p.lambda * p.lambda)).collect::<Vec<_>>());
        for (ok, name) in [(u4_ok, "U4"), (corr_ok, "U4 + 6 lambda star")] {
            if !ok {
                rep.flagged.push(format!("config {i}: {name} not resolved at every lambda"));
            }
        }
        if i == 0 && !(u4_ok && corr_ok) {
            rep.checks.push(Check::new("coincident_resolved", 0.0, "resolved at every lambda", false));
        }
        if u4_ok {
            worst_u4 = worst_u4.max(s_u4);
        }
        if corr_ok {
            worst_corr = worst_corr.max(s_corr);
        }
        stab.push(vec![
            i.to_string(),
            if u4_ok { fmt(s_u4) } else { String::new() },
            if corr_ok { fmt(s_corr) } else { String::new() },
        ]);
    }
    if points.len() >= 2 {
        rep.checks.push(Check::below("u4_over_lambda_spread", worst_u4, U4_SPREAD_MAX));
        rep.checks.push(Check::below("corrected_over_lambda2_spread", worst_corr, CORRECTED_SPREAD_MAX));
        let lambdas: Vec<f64> = points.iter().map(|p| p.lambda).collect();
        let mut fit = Table::new("fit", &["quantity", "slope", "slope_stderr", "intercept"]);
        for (name, expected, ys) in [
            ("u4", 1.0, points.iter().map(|p| p.u4[0]).collect::<Vec<_>>()),
            ("corrected", 2.0, points.iter().map(|p| p.corrected[0]).collect()),
        ] {
            if let Some((b, sb, a)) = loglog_fit(&lambdas, &ys) {
                fit.push(vec![name.into(), fmt(b), fmt(sb), fmt(a)]);
                rep.checks.push(Check::within(format!("{name}_slope"), b, expected - SLOPE_BAND, expected + SLOPE_BAND));
            }
        }
        rep.tables.push(fit);
    }
    for (y, err) in [("u4", "u4_stderr"), ("corrected", "corrected_stderr")] {
        rep.plots.push(Plot {
            title: format!("|{y}| at coincident points"),
            table: t.name.clone(),
            x: "lambda".into(),
            y: y.into(),
            err: Some(err.into()),
            logscale: true,
            filter: Some(("config_id".into(), "0".into())),
        });
    }
    rep.graphs.extend(dot_graphs("F1", &exp.f_terms[1]));
    rep.tables.insert(0, t);
    rep.tables.insert(1, stab);
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_signs_and_tables() {
        let mut spec = ExperimentSpec::defaults(Kind::FourPoint);
        spec.size = 4.0;
        spec.four_point_stride = 2;
        spec.four_point_max = 3;
        spec.lambda_grid = vec![0.1, 0.2];
        spec.sim.burn_in = 500;
        spec.sim.n_samples = 4000;
        let r = run_four_point(&spec).unwrap();
        let t = r.table("u4").unwrap();
        assert_eq!(t.rows.len(), 6);
        let star: f64 = t.rows[0][5].parse().unwrap();
        assert!(star > 0.0);
        for c in r.checks.iter().filter(|c| c.name.starts_with("coincident_u4")) {
            assert!(c.passed, "{}", c.line());
        }
    }
}
