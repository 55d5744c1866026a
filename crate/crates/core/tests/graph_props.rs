use phi4_core::graph::{
    canonicalize, expand, ibp_step, n_phi, parse_expansion, red_forest_check, write_expansion, Edge, IbpGraph, Term,
};
use proptest::prelude::*;

fn relabel_interior(g: &IbpGraph, perm: &[usize]) -> IbpGraph {
    let k = g.k();
    let map = |v: usize| if v < k { v } else { k + perm[v - k] };
    let edges: Vec<Edge> = g.edges().iter().map(|e| Edge::new(map(e.a), map(e.b), e.color)).collect();
    IbpGraph::from_edges(k, g.interior_count(), &edges).unwrap()
}

fn free_vertices(g: &IbpGraph) -> Vec<usize> {
    (0..g.vertex_count()).filter(|&v| g.insertions(v) > 0).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expansion_invariants(k in 1usize..=5, order in 0i64..=3) {
        let e = expand(k, order).unwrap();
        prop_assert_eq!(e.f_terms.len() as i64, order + 1);
        for (n, fs) in e.f_terms.iter().enumerate() {
            if k % 2 == 1 {
                prop_assert!(fs.is_empty());
            }
            for t in fs {
                prop_assert_eq!(n_phi(&t.graph), 0);
                prop_assert_eq!(t.graph.interior_count(), n);
                prop_assert!((0..k).all(|b| t.graph.degree(b) == 1));
                prop_assert!((k..t.graph.vertex_count()).all(|v| t.graph.degree(v) == 4));
                prop_assert!(red_forest_check(&t.graph));
                prop_assert!(t.coeff != phi4_core::graph::rational(0));
            }
        }
        for t in &e.remainder_terms {
            prop_assert_eq!(t.graph.interior_count() as i64, order + 1);
            prop_assert!(t.graph.degrees_valid());
            prop_assert!(red_forest_check(&t.graph));
            prop_assert!(n_phi(&t.graph) >= 0);
        }
    }

    #[test]
    fn expansion_text_is_reproducible_and_round_trips(k in 1usize..=4, order in 0i64..=2) {
        let a = write_expansion(&expand(k, order).unwrap());
        let b = write_expansion(&expand(k, order).unwrap());
        prop_assert_eq!(&a, &b);
        let parsed = parse_expansion(&a).unwrap();
        prop_assert_eq!(write_expansion(&parsed), a);
    }

    /// Random walks of single steps: every output moves n_Phi by exactly 2.
    #[test]
    fn ibp_steps_move_field_count_by_two(k in 1usize..=4, choices in prop::collection::vec(any::<u32>(), 1..6)) {
        let mut t = Term::seed(k);
        for c in choices {
            let free = free_vertices(&t.graph);
            if free.is_empty() {
                break;
            }
            let x = free[c as usize % free.len()];
            let before = n_phi(&t.graph);
            let outs = ibp_step(&t, x).unwrap();
            prop_assert!(!outs.is_empty());
            for o in &outs {
                let d = n_phi(&o.graph) - before;
                prop_assert!(d == 2 || d == -2, "{}", d);
                prop_assert!(o.graph.degrees_valid());
                prop_assert!(o.lambda_power == t.lambda_power || o.lambda_power == t.lambda_power + 1);
            }
            t = outs[(c as usize / 7) % outs.len()].clone();
        }
    }

    #[test]
    fn canonical_form_ignores_interior_labels(k in 2usize..=4, order in 1i64..=2, pick in any::<u32>(), seed in any::<u64>()) {
        let e = expand(k, order).unwrap();
        let terms: Vec<&Term> = e.all_terms().collect();
        let g = &terms[pick as usize % terms.len()].graph;
        let l = g.interior_count();
        let mut perm: Vec<usize> = (0..l).collect();
        let mut s = seed;
        for i in (1..l).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let h = relabel_interior(g, &perm);
        prop_assert_eq!(canonicalize(g).0, canonicalize(&h).0);
    }
}

#[test]
fn odd_point_functions_vanish_through_fifth_order_table() {
    for k in [1, 3, 5] {
        for order in 0..=3 {
            let e = expand(k, order).unwrap();
            assert!(e.f_terms.iter().all(|f| f.is_empty()), "k={k} N={order}");
        }
    }
}
