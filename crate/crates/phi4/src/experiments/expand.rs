use phi4_core::diagram::{eval_pure, BoundaryConfigs};
use phi4_core::graph::{expand, n_phi, red_forest_check, write_expansion, Term};
use phi4_core::TorusLattice;

use super::{dot_graphs, expect_kind};
use crate::config::{ExperimentSpec, Kind};
use crate::report::{fmt, Check, Report, Table};
use crate::HarnessError;

/// Symbolic expansion of `S^k` to order `N`, with structural checks and the
/// value of every pure diagram at coincident points on the configured lattice.
pub fn run_expand(spec: &ExperimentSpec) -> Result<Report, HarnessError> {
    expect_kind(spec, Kind::Expand)?;
    let lat = spec.lattice()?;
    let k = spec.points;
    let exp = expand(k, spec.order as i64)?;
    let mut rep = Report::new("expand");
    let mut table = Table::new(
        "expansion",
        &["part", "lambda_power", "index", "coeff", "f_coeff", "interior", "edges", "value_at_origin"],
    );
    let origin = BoundaryConfigs::coincident(k);
    let (mut bad_degree, mut bad_forest, mut bad_parity) = (0usize, 0usize, 0usize);
    let mut visit = |part: &str, i: usize, t: &Term, f_coeff: String| -> Result<(), HarnessError> {
        let g = &t.graph;
        bad_degree += usize::from(!g.degrees_valid());
        bad_forest += usize::from(!red_forest_check(g));
        bad_parity += usize::from(n_phi(g).rem_euclid(2) != (k % 2) as i64);
        table.push(vec![
            part.to_string(),
            t.lambda_power.to_string(),
            i.to_string(),
            t.coeff.to_string(),
            f_coeff,
            g.interior_count().to_string(),
            edge_list(t),
            value_at(t, &lat, &origin)?,
        ]);
        Ok(())
    };
    for n in 0..exp.f_terms.len() {
        let fact = exp.f_factorial(n);
        for (i, (t, f)) in exp.f_terms[n].iter().zip(&fact).enumerate() {
            visit("F", i, t, f.coeff.to_string())?;
        }
        rep.graphs.extend(dot_graphs(&format!("F{n}"), &exp.f_terms[n]));
    }
    for (i, t) in exp.remainder_terms.iter().enumerate() {
        visit("R", i, t, String::new())?;
    }
    rep.graphs.extend(dot_graphs("R", &exp.remainder_terms));
    for (name, count) in [
        ("degree_violations", bad_degree),
        ("red_forest_violations", bad_forest),
        ("field_parity_violations", bad_parity),
    ] {
        rep.checks.push(Check::new(name, count as f64, "= 0", count == 0));
    }
    rep.tables.push(table);
    rep.files.push(("expansion.txt".into(), write_expansion(&exp)));
    Ok(rep)
}

fn edge_list(t: &Term) -> String {
    t.graph
        .edges()
        .iter()
        .map(|e| format!("{}-{}:{}", e.a, e.b, e.color.name()))
        .collect::<Vec<_>>()
        .join(" ")
}

fn value_at(t: &Term, lat: &TorusLattice, configs: &BoundaryConfigs) -> Result<String, HarnessError> {
    if n_phi(&t.graph) != 0 {
        return Ok(String::new());
    }
    Ok(fmt(eval_pure(&t.graph, lat, configs)?.values[0]))
}
