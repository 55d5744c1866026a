use phi4_core::diagram::{eval_pure, BoundaryConfigs, EvalOptions, GraphEstimator, Mode, QuadratureOracle};
use phi4_core::graph::{expand, n_phi, Term};
use phi4_core::{green_function, wick_constant, TorusLattice};
use proptest::prelude::*;

fn small() -> TorusLattice {
    TorusLattice::new(2.0, 1.0, 1.0).unwrap()
}

#[test]
fn gaussian_oracle_reproduces_the_green_function() {
    let lat = small();
    let oracle = QuadratureOracle::new(&lat, 0.0).unwrap();
    let c = green_function(&lat);
    for x in 0..lat.n_sites() {
        let s2 = oracle.two_point(0, x).unwrap();
        assert!((s2 - c.at(x)).abs() < 1e-10 * c.at(0), "x={x}: {s2} vs {}", c.at(x));
    }
}

#[test]
fn free_propagator_diagram_is_the_green_function() {
    let lat = TorusLattice::new(4.0, 0.5, 1.0).unwrap();
    let e = expand(2, 0).unwrap();
    let v = eval_pure(&e.f_terms[0][0].graph, &lat, &BoundaryConfigs::all_separations(&lat)).unwrap();
    let c = green_function(&lat);
    assert!(v.stderr.iter().all(|&s| s == 0.0));
    for (x, val) in v.values.iter().enumerate() {
        assert!((val - c.at(x)).abs() < 1e-12 * c.at(0));
    }
}

fn one_term(t: &Term) -> Term {
    Term::new(t.coeff.clone(), t.lambda_power, t.graph.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Flipping the field sign multiplies a diagram by (-1)^{n_Phi}.
    #[test]
    fn diagrams_are_parity_covariant(
        pick in any::<u32>(),
        phi in prop::collection::vec(-2.0f64..2.0, 16),
        averaged in any::<bool>(),
    ) {
        let lat = TorusLattice::new(4.0, 1.0, 1.0).unwrap();
        let e = expand(2, 1).unwrap();
        let t = one_term(&e.remainder_terms[pick as usize % e.remainder_terms.len()]);
        let mode = if averaged { Mode::Averaged } else { Mode::Pinned };
        let opts = EvalOptions { mode, ..EvalOptions::default() };
        let configs = BoundaryConfigs::all_separations(&lat);
        let mut est = GraphEstimator::new(&lat, wick_constant(&lat), std::slice::from_ref(&t), &configs, opts).unwrap();
        let plus = est.evaluate(&phi).unwrap();
        let flipped: Vec<f64> = phi.iter().map(|x| -x).collect();
        let minus = est.evaluate(&flipped).unwrap();
        let sign = if n_phi(&t.graph) % 2 == 0 { 1.0 } else { -1.0 };
        for (p, m) in plus.iter().zip(&minus) {
            prop_assert!((p - sign * m).abs() <= 1e-10 * (1.0 + p.abs()));
        }
    }
}
