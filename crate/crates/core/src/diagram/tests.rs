use std::sync::OnceLock;

use super::brute::{brute_mixed, brute_pure, expansion_residual};
use super::*;
use crate::graph::{expand, ibp_step, rational, Edge, EdgeColor, Term};
use crate::lattice::green_function;

const ENGINE_TOL: f64 = 1e-8;

fn red(a: usize, b: usize) -> Edge {
    Edge::new(a, b, EdgeColor::Red)
}

fn lat4() -> TorusLattice {
    TorusLattice::new(4.0, 1.0, 1.0).unwrap()
}

fn lat2() -> TorusLattice {
    TorusLattice::new(2.0, 1.0, 1.0).unwrap()
}

fn oracle(lambda: f64) -> &'static QuadratureOracle {
    static ORACLES: OnceLock<Vec<(f64, QuadratureOracle)>> = OnceLock::new();
    let all = ORACLES.get_or_init(|| {
        [0.0, 0.05, 0.1, 0.5]
            .iter()
            .map(|&l| (l, QuadratureOracle::new(&lat2(), l).unwrap()))
            .collect()
    });
    &all.iter().find(|(l, _)| *l == lambda).unwrap().1
}

fn sunset() -> IbpGraph {
    IbpGraph::from_edges(2, 2, &[red(0, 2), red(1, 3), red(2, 3), red(2, 3), red(2, 3)]).unwrap()
}

fn star() -> IbpGraph {
    IbpGraph::from_edges(4, 1, &[red(0, 4), red(1, 4), red(2, 4), red(3, 4)]).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn engine_matches_brute_force_on_named_graphs() {
    let lat = lat4();
    for g in [sunset(), star()] {
        let configs = if g.k() == 2 {
            BoundaryConfigs::all_separations(&lat)
        } else {
            BoundaryConfigs::four_point_grid(&lat, 1, 40)
        };
        let v = eval_pure(&g, &lat, &configs).unwrap();
        for (cfg, val) in configs.configs.iter().zip(&v.values) {
            let b = brute_pure(&g, &lat, cfg).unwrap();
            assert!(close(*val, b, ENGINE_TOL), "{cfg:?}: {val} vs {b}");
        }
    }
}

#[test]
fn engine_matches_brute_force_on_expansion_coefficients() {
    let lat = lat4();
    let cases = [(2usize, 2i64), (4, 1)];
    for (k, order) in cases {
        let exp = expand(k, order).unwrap();
        let configs = if k == 2 {
            BoundaryConfigs::all_separations(&lat)
        } else {
            BoundaryConfigs::four_point_grid(&lat, 2, 30)
        };
        for terms in &exp.f_terms {
            if terms.is_empty() {
                continue;
            }
            let v = eval_pure_terms(terms, &lat, &configs).unwrap();
            for (cfg, val) in configs.configs.iter().zip(&v.values) {
                let b: f64 = terms
                    .iter()
                    .map(|t| t.coeff_f64() * brute_pure(&t.graph, &lat, cfg).unwrap())
                    .sum();
                assert!(close(*val, b, ENGINE_TOL) || (val - b).abs() < 1e-14, "{k} {cfg:?}: {val} vs {b}");
            }
        }
    }
}

#[test]
fn free_two_point_is_the_green_function() {
    let lat = lat4();
    let exp = expand(2, 0).unwrap();
    let v = eval_pure_terms(&exp.f_terms[0], &lat, &BoundaryConfigs::all_separations(&lat)).unwrap();
    let c = green_function(&lat);
    for r in 0..lat.n_sites() {
        assert!(close(v.values[r], c.at(r), 1e-12));
    }
}

#[test]
fn mixed_estimate_of_pure_graph_is_exact() {
    // a pure graph has no sample dependence, so any sample set returns I_G
    let lat = lat4();
    let t = Term::new(rational(1), 0, sunset());
    let configs = BoundaryConfigs::all_separations(&lat);
    let samples: Vec<LatticeField> = (0..16)
        .map(|i| LatticeField::constant(&lat, i as f64))
        .collect();
    let v = eval_mixed(&[t], &samples, wick_constant(&lat), &configs, 8).unwrap();
    let exact = eval_pure(&sunset(), &lat, &configs).unwrap();
    for (a, b) in v.values.iter().zip(&exact.values) {
        assert!(close(*a, *b, 1e-10));
    }
    assert!(v.stderr.iter().all(|s| *s < 1e-12));
}

#[test]
fn averaged_mode_is_the_translation_average_of_pinned() {
    let lat = lat4();
    let a = wick_constant(&lat);
    let mut rng_state = 12345u64;
    let phi = LatticeField::from_fn(&lat, |_| {
        rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((rng_state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    });
    // remainder of the two-point expansion has insertions at both kinds of vertex
    let exp = expand(2, 1).unwrap();
    let configs = BoundaryConfigs::new(vec![vec![0, 0], vec![0, 5], vec![0, lat.site(2, 1)]]);
    let terms = exp.remainder_terms.clone();
    let mut avg = GraphEstimator::new(
        &lat,
        a,
        &terms,
        &configs,
        EvalOptions {
            mode: Mode::Averaged,
            ..EvalOptions::default()
        },
    )
    .unwrap();
    let got = avg.evaluate(phi.values()).unwrap();

    let mut pinned = GraphEstimator::new(&lat, a, &terms, &configs, EvalOptions::default()).unwrap();
    let mut want = vec![0.0; configs.len()];
    for b in 0..lat.n_sites() {
        let shifted = phi.translated(lat.neg(b));
        let v = pinned.evaluate(shifted.values()).unwrap();
        for (w, x) in want.iter_mut().zip(v) {
            *w += x / lat.n_sites() as f64;
        }
    }
    for (g, w) in got.iter().zip(&want) {
        assert!(close(*g, *w, 1e-10), "{g} vs {w}");
    }
}

#[test]
fn pinned_mixed_matches_direct_sum_on_a_sample() {
    let lat = lat4();
    let a = wick_constant(&lat);
    let phi = LatticeField::from_fn(&lat, |s| ((s * 7 % 11) as f64 - 5.0) / 4.0);
    let exp = expand(2, 1).unwrap();
    let configs = BoundaryConfigs::new(vec![vec![0, 3], vec![1, 9]]);
    let mut est = GraphEstimator::new(&lat, a, &exp.remainder_terms, &configs, EvalOptions::default()).unwrap();
    let got = est.evaluate(phi.values()).unwrap();
    let c = green_function(&lat);
    for (cfg, g) in configs.configs.iter().zip(got) {
        let mut want = 0.0;
        for t in &exp.remainder_terms {
            let gr = &t.graph;
            let k = gr.k();
            let l = gr.interior_count();
            let mut pos = cfg.clone();
            pos.resize(k + l, 0);
            let mut sum = 0.0;
            for idx in 0..lat.n_sites().pow(l as u32) {
                let mut r = idx;
                for p in pos.iter_mut().skip(k) {
                    *p = r % lat.n_sites();
                    r /= lat.n_sites();
                }
                let mut w: f64 = gr.edges().iter().map(|e| c.at(lat.sub(pos[e.a], pos[e.b]))).product();
                for (v, &x) in pos.iter().enumerate() {
                    w *= hermite(gr.insertions(v) as u32, phi.at(x), a);
                }
                sum += w;
            }
            want += t.coeff_f64() * sum * lat.cell().powi(l as i32);
        }
        assert!(close(g, want, 1e-10), "{g} vs {want}");
    }
}

#[test]
fn ibp_step_preserves_value_under_the_oracle() {
    for lambda in [0.0, 0.1, 0.5] {
        let q = oracle(lambda);
        let mut frontier = vec![Term::seed(2)];
        for _round in 0..2 {
            let mut next = Vec::new();
            for t in &frontier {
                let before = brute_mixed(&t.graph, q, &[0, 3]).unwrap()
                    * t.coeff_f64()
                    * lambda.powi(t.lambda_power as i32);
                let Some(x) = (0..t.graph.vertex_count()).find(|&v| t.graph.insertions(v) > 0) else {
                    continue;
                };
                let out = ibp_step(t, x).unwrap();
                let after = super::brute::brute_terms(&out, q, &[0, 3]).unwrap();
                assert!(close(before, after, 1e-7) || (before - after).abs() < 1e-12, "{lambda}: {before} vs {after}");
                next.extend(out);
            }
            frontier = next;
        }
    }
}

#[test]
fn truncated_expansion_identity_holds() {
    let q = oracle(0.05);
    let exp = expand(2, 2).unwrap();
    for offsets in [[0usize, 0], [0, 1], [0, 3]] {
        let r = expansion_residual(&exp, q, &offsets).unwrap();
        assert!(r.relative() < 1e-6, "{offsets:?}: {r:?}");
    }
}

#[test]
fn pure_evaluation_rejects_insertions() {
    let lat = lat4();
    let g = IbpGraph::from_edges(2, 0, &[red(0, 1)]).unwrap();
    assert!(eval_pure(&g, &lat, &BoundaryConfigs::coincident(2)).is_ok());
    let g = IbpGraph::seed(2);
    assert_eq!(
        eval_pure(&g, &lat, &BoundaryConfigs::coincident(2)).unwrap_err(),
        DiagramError::NotPure(2)
    );
}

#[test]
fn loop_budget_is_enforced() {
    let lat = lat4();
    // four parallel edges between two interior vertices plus legs: 3 loops
    let g = sunset();
    assert_eq!(cyclomatic(&g), 2);
    let opts = EvalOptions {
        loop_budget: 1,
        ..EvalOptions::default()
    };
    let t = Term::new(rational(1), 0, g);
    let err = GraphEstimator::new(&lat, wick_constant(&lat), &[t], &BoundaryConfigs::coincident(2), opts);
    assert!(matches!(err, Err(DiagramError::Budget(_))));
}

#[test]
fn config_arity_is_checked() {
    let lat = lat4();
    let err = eval_pure(&sunset(), &lat, &BoundaryConfigs::coincident(3)).unwrap_err();
    assert_eq!(err, DiagramError::ConfigArity { expected: 2, got: 3 });
}

#[test]
fn wick_powers_of_a_sample_are_used() {
    let lat = lat4();
    let a = wick_constant(&lat);
    // one interior vertex of degree 2 carries :Phi^2:
    let g = IbpGraph::from_edges(2, 1, &[red(0, 2), red(1, 2)]).unwrap();
    let t = Term::new(rational(1), 0, g);
    let phi = LatticeField::constant(&lat, 0.7);
    let mut est = GraphEstimator::new(&lat, a, &[t], &BoundaryConfigs::coincident(2), EvalOptions::default()).unwrap();
    let v = est.evaluate(phi.values()).unwrap()[0];
    let c = green_function(&lat);
    let mut want = 0.0;
    for z in 0..lat.n_sites() {
        want += c.at(z).powi(2) * hermite(2, 0.7, a);
    }
    assert!(close(v, want * lat.cell(), 1e-12));
}
