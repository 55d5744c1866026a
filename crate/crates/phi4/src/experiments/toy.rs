use phi4_core::toy::{self, ToyReport};

use super::{expect_kind, over_grid};
use crate::config::{ExperimentSpec, Kind};
use crate::report::{fmt, Check, Plot, Report, Table};
use crate::HarnessError;

/// The zero-dimensional integral against its divergent series at one `lambda`.
pub fn run_toy(lambda: f64, n_terms: usize) -> Result<Report, HarnessError> {
    let r = toy::run_toy(lambda, n_terms)?;
    Ok(assemble(&[r]))
}

pub fn run_toy_grid(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    expect_kind(spec, Kind::Toy)?;
    let reports = over_grid(&spec.lambda_grid, |_, l| Ok(toy::run_toy(l, spec.n_terms)?))?;
    Ok(assemble(&reports))
}

/// Largest excess of `|Z - S_n|` over the first omitted term `|t_{n+1}|`.
/// The exponential's Taylor remainder alternates, so the excess is at most
/// the quadrature tolerance.
fn truncation_excess(r: &ToyReport) -> f64 {
    r.terms
        .windows(2)
        .map(|w| (r.z - w[0].partial_sum).abs() - w[1].value.abs())
        .fold(f64::MIN, f64::max)
}

fn assemble(reports: &[ToyReport]) -> Report {
    let mut rep = Report::new("toy");
    let mut terms = Table::new("toy_terms", &["lambda", "n", "term", "log_abs_term", "partial_sum", "abs_error"]);
    let mut summary = Table::new("toy_summary", &["lambda", "z", "z_error", "crossover", "best_partial_sum", "best_error"]);
    for r in reports {
        for t in &r.terms {
            terms.push(vec![
                fmt(r.lambda),
                t.n.to_string(),
                fmt(t.value),
                fmt(t.log_magnitude),
                fmt(t.partial_sum),
                fmt((r.z - t.partial_sum).abs()),
            ]);
        }
        let best = r.crossover.map(|c| r.terms[c].partial_sum);
        summary.push(vec![
            fmt(r.lambda),
            fmt(r.z),
            fmt(r.z_error),
            r.crossover.map_or(String::new(), |c| c.to_string()),
            best.map_or(String::new(), fmt),
            best.map_or(String::new(), |b| fmt((r.z - b).abs())),
        ]);
        if r.terms.len() >= 2 {
            let slack = r.z_error.max(toy::QUAD_TOL * r.z);
            rep.checks.push(Check::new(
                format!("truncation_bound[lambda={}]", fmt(r.lambda)),
                truncation_excess(r),
                format!("<= {}", fmt(slack)),
                truncation_excess(r) <= slack,
            ));
        }
    }
    rep.plots.push(Plot {
        title: "log |term n|".into(),
        table: terms.name.clone(),
        x: "n".into(),
        y: "log_abs_term".into(),
        err: None,
        logscale: false,
        filter: None,
    });
    rep.tables.push(terms);
    rep.tables.push(summary);
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_report_holds_the_truncation_bound() {
        let r = run_toy(0.01, 80).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.table("toy_terms").unwrap().rows.len(), 80);
        let s = r.table("toy_summary").unwrap();
        // |t_{n+1}/t_n| = lambda (4n + 1)(4n + 3) / (4(n + 1)) first exceeds 1 at n = 25
        assert_eq!(s.rows[0][3], "25");
    }

    #[test]
    fn grid_includes_zero() {
        let mut spec = ExperimentSpec::defaults(Kind::Toy);
        spec.lambda_grid = vec![0.0, 0.02];
        spec.n_terms = 10;
        let r = run_toy_grid(&spec).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.table("toy_summary").unwrap().rows.len(), 2);
    }
}
