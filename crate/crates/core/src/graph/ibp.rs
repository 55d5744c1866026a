use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use super::canon::{canonicalize, canonicalize_uncolored, CanonicalKey};
use super::{n_phi, rational, Edge, EdgeColor, GraphError, IbpGraph, Term};

/// One integration by parts at the field insertion `Phi(x)` of `t`.
///
/// Produces one term per other vertex `z` with a free insertion (a green edge
/// `x z`, coefficient times the number of insertions at `z`) and one term with
/// a fresh interior vertex joined to `x` by a red edge (coefficient `-1`, one
/// more power of lambda).
pub fn ibp_step(t: &Term, x: usize) -> Result<Vec<Term>, GraphError> {
    let g = &t.graph;
    if x >= g.vertex_count() {
        return Err(GraphError::NoSuchVertex(x));
    }
    if g.insertions(x) == 0 {
        return Err(GraphError::Saturated {
            vertex: x,
            degree: g.degree(x),
        });
    }
    let mut out = Vec::new();
    for z in (0..g.vertex_count()).filter(|&z| z != x) {
        let free = g.insertions(z);
        if free == 0 {
            continue;
        }
        out.push(Term::new(
            &t.coeff * rational(free as i64),
            t.lambda_power,
            g.with_edge(Edge::new(x, z, EdgeColor::Green)),
        ));
    }
    let (grown, _) = g.with_new_interior(x, EdgeColor::Red);
    out.push(Term::new(-t.coeff.clone(), t.lambda_power + 1, grown));
    Ok(out)
}

/// Which free insertion the expansion integrates by parts next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    /// Lowest boundary vertex of degree 0, else lowest unsaturated interior vertex.
    #[default]
    LowestFirst,
    /// Highest unsaturated interior vertex, else highest free boundary vertex.
    HighestFirst,
}

impl SelectionRule {
    fn pick(self, g: &IbpGraph) -> Option<usize> {
        let free = |v: &usize| g.insertions(*v) > 0;
        let boundary = 0..g.k();
        let interior = g.k()..g.vertex_count();
        match self {
            SelectionRule::LowestFirst => boundary.clone().find(free).or_else(|| interior.clone().find(free)),
            SelectionRule::HighestFirst => interior.rev().find(free).or_else(|| boundary.rev().find(free)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpandOptions {
    pub rule: SelectionRule,
    /// Merge isomorphic terms after every sweep. Off only for debugging.
    pub merge: bool,
    /// Maximum number of live terms at any point.
    pub term_budget: usize,
}

impl Default for ExpandOptions {
    fn default() -> Self {
        Self {
            rule: SelectionRule::LowestFirst,
            merge: true,
            term_budget: 200_000,
        }
    }
}

/// `S^k = sum_{n <= N} lambda^n sum_G r'_G I_G + lambda^{N+1} sum_G r_G I_G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub k: usize,
    pub order: i64,
    /// `f_terms[n]` holds the raw coefficients of `lambda^n`.
    pub f_terms: Vec<Vec<Term>>,
    pub remainder_terms: Vec<Term>,
}

impl Expansion {
    /// The `lambda^n` coefficient, `sum r'_G I_G`.
    pub fn lambda_coefficient(&self, n: usize) -> &[Term] {
        &self.f_terms[n]
    }

    /// `F_n = n! sum r'_G I_G`, the convention where `S = sum lambda^n/n! F_n`.
    pub fn f_factorial(&self, n: usize) -> Vec<Term> {
        let fact: BigInt = (1..=n as u64).map(BigInt::from).product();
        let fact = BigRational::from_integer(fact);
        self.f_terms[n]
            .iter()
            .map(|t| Term::new(&t.coeff * &fact, t.lambda_power, t.graph.clone()))
            .collect()
    }

    pub fn all_terms(&self) -> impl Iterator<Item = &Term> {
        self.f_terms.iter().flatten().chain(&self.remainder_terms)
    }
}

pub fn expand(k: usize, order: i64) -> Result<Expansion, GraphError> {
    expand_with(k, order, &ExpandOptions::default())
}

pub fn expand_with(k: usize, order: i64, opts: &ExpandOptions) -> Result<Expansion, GraphError> {
    if k == 0 {
        return Err(GraphError::InvalidRequest("k must be at least 1".into()));
    }
    if order < -1 {
        return Err(GraphError::InvalidRequest(format!("order {order} < -1")));
    }
    let levels = (order + 1) as usize;
    let mut f_terms: Vec<Vec<Term>> = vec![Vec::new(); levels];
    let mut remainder = Vec::new();
    let mut live = vec![Term::seed(k)];
    while !live.is_empty() {
        let mut next = Vec::new();
        for t in live {
            let l = t.graph.interior_count();
            if l == levels {
                remainder.push(t);
            } else if n_phi(&t.graph) == 0 {
                f_terms[l].push(t);
            } else {
                let x = opts
                    .rule
                    .pick(&t.graph)
                    .expect("positive n_phi implies a free insertion");
                next.extend(ibp_step(&t, x)?);
            }
        }
        if opts.merge {
            next = merge_terms(next);
        }
        if next.len() > opts.term_budget {
            return Err(GraphError::TermBudget(opts.term_budget));
        }
        live = next;
    }
    let finish = |ts: Vec<Term>| {
        if opts.merge {
            merge_terms(ts)
        } else {
            ts
        }
    };
    Ok(Expansion {
        k,
        order,
        f_terms: f_terms.into_iter().map(finish).collect(),
        remainder_terms: finish(remainder),
    })
}

/// Groups terms by (isomorphism class, lambda power), sums coefficients
/// exactly and drops zeros. Output is sorted by key.
pub fn merge_terms(terms: Vec<Term>) -> Vec<Term> {
    merge_by(terms, canonicalize)
}

/// Merges up to interior relabeling and recoloring. Used to compare
/// expansions produced by different selection rules, which color the same
/// underlying diagram differently.
pub fn merge_uncolored(terms: Vec<Term>) -> Vec<Term> {
    merge_by(terms, canonicalize_uncolored)
}

/// Terms in input order with zero coefficients removed.
pub fn unmerged_terms(terms: Vec<Term>) -> Vec<Term> {
    terms.into_iter().filter(|t| !t.coeff.is_zero()).collect()
}

fn merge_by(
    terms: Vec<Term>,
    canon: impl Fn(&IbpGraph) -> (CanonicalKey, IbpGraph),
) -> Vec<Term> {
    let mut acc: BTreeMap<(u32, CanonicalKey), (BigRational, IbpGraph)> = BTreeMap::new();
    for t in terms {
        let (key, graph) = canon(&t.graph);
        acc.entry((t.lambda_power, key))
            .and_modify(|(c, _)| *c += &t.coeff)
            .or_insert((t.coeff, graph));
    }
    acc.into_iter()
        .filter(|(_, (c, _))| !c.is_zero())
        .map(|((p, _), (c, g))| Term::new(c, p, g))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::red_forest_check;
    use super::*;
    use num_traits::One;
    use EdgeColor::{Green, Red};

    fn graph(k: usize, l: usize, edges: &[(usize, usize, EdgeColor)]) -> IbpGraph {
        let e: Vec<Edge> = edges.iter().map(|&(a, b, c)| Edge::new(a, b, c)).collect();
        IbpGraph::from_edges(k, l, &e).unwrap()
    }

    fn key(g: &IbpGraph) -> CanonicalKey {
        canonicalize(g).0
    }

    fn sunset() -> IbpGraph {
        graph(
            2,
            2,
            &[(0, 2, Red), (1, 3, Red), (2, 3, Green), (2, 3, Green), (2, 3, Green)],
        )
    }

    fn star() -> IbpGraph {
        graph(4, 1, &[(0, 4, Red), (1, 4, Green), (2, 4, Green), (3, 4, Green)])
    }

    #[test]
    fn two_point_seed_step() {
        let out = ibp_step(&Term::seed(2), 0).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].coeff, rational(1));
        assert_eq!(out[0].lambda_power, 0);
        assert_eq!(out[0].graph, graph(2, 0, &[(0, 1, Green)]));
        assert_eq!(out[1].coeff, rational(-1));
        assert_eq!(out[1].lambda_power, 1);
        assert_eq!(out[1].graph, graph(2, 1, &[(0, 2, Red)]));
    }

    #[test]
    fn four_point_seed_step() {
        let out = ibp_step(&Term::seed(4), 0).unwrap();
        assert_eq!(out.len(), 4);
        for (i, t) in out[..3].iter().enumerate() {
            assert_eq!(t.coeff, rational(1));
            assert_eq!(t.graph, graph(4, 0, &[(0, i + 1, Green)]));
        }
        assert_eq!(out[3].coeff, rational(-1));
        assert_eq!(out[3].lambda_power, 1);
    }

    #[test]
    fn saturated_neighbors_leave_only_growth() {
        // x has two free insertions, everything else is saturated
        let g = graph(2, 1, &[(0, 2, Red), (1, 2, Green)]);
        let out = ibp_step(&Term::seed(2).with_graph(g), 2).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].coeff, rational(-1));
        assert_eq!(out[0].graph.interior_count(), 2);
    }

    #[test]
    fn interior_insertions_weight_green_terms() {
        let g = graph(2, 1, &[(0, 2, Red)]);
        let out = ibp_step(&Term::seed(2).with_graph(g), 1).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].coeff, rational(3));
        assert_eq!(out[0].graph.edges()[1], Edge::new(1, 2, Green));
    }

    #[test]
    fn saturated_vertex_is_rejected() {
        let g = graph(2, 0, &[(0, 1, Green)]);
        assert!(matches!(
            ibp_step(&Term::seed(2).with_graph(g), 0),
            Err(GraphError::Saturated { vertex: 0, degree: 1 })
        ));
        assert_eq!(
            ibp_step(&Term::seed(2), 7),
            Err(GraphError::NoSuchVertex(7))
        );
    }

    #[test]
    fn n_phi_moves_by_two() {
        let t = Term::new(rational(1), 1, graph(3, 1, &[(0, 3, Red)]));
        let before = n_phi(&t.graph);
        for x in 0..t.graph.vertex_count() {
            if t.graph.insertions(x) == 0 {
                continue;
            }
            for out in ibp_step(&t, x).unwrap() {
                let delta = n_phi(&out.graph) - before;
                if out.lambda_power == t.lambda_power {
                    assert_eq!(delta, -2);
                } else {
                    assert_eq!(delta, 2);
                }
            }
        }
    }

    #[test]
    fn two_point_first_order() {
        let e = expand(2, 1).unwrap();
        assert_eq!(e.f_terms.len(), 2);
        assert_eq!(e.f_terms[0].len(), 1);
        assert_eq!(e.f_terms[0][0].coeff, rational(1));
        assert_eq!(key(&e.f_terms[0][0].graph), key(&graph(2, 0, &[(0, 1, Green)])));
        assert!(e.f_terms[1].is_empty());
        let expected = merge_terms(vec![
            Term::new(rational(1), 2, graph(2, 2, &[(0, 2, Red), (1, 3, Red)])),
            Term::new(
                rational(3),
                2,
                graph(2, 2, &[(0, 2, Red), (1, 2, Green), (2, 3, Red)]),
            ),
        ]);
        assert_eq!(e.remainder_terms, expected);
    }

    #[test]
    fn two_point_second_order_is_six_sunsets() {
        let e = expand(2, 2).unwrap();
        assert_eq!(e.f_terms[2].len(), 1);
        let t = &e.f_terms[2][0];
        assert_eq!(t.coeff, rational(6));
        assert_eq!(t.lambda_power, 2);
        assert_eq!(key(&t.graph), key(&sunset()));
        assert_eq!(e.f_factorial(2)[0].coeff, rational(12));
    }

    #[test]
    fn four_point_first_order_is_minus_six_stars() {
        let e = expand(4, 1).unwrap();
        assert_eq!(e.f_terms[1].len(), 1);
        assert_eq!(e.f_terms[1][0].coeff, rational(-6));
        assert_eq!(key(&e.f_terms[1][0].graph), key(&star()));
        // three pairings at order zero
        assert_eq!(e.f_terms[0].len(), 3);
        assert!(e.f_terms[0].iter().all(|t| t.coeff.is_one()));
    }

    #[test]
    fn odd_k_vanishes() {
        for k in [1, 3, 5] {
            for n in 0..=3 {
                let e = expand(k, n).unwrap();
                assert!(e.f_terms.iter().all(|f| f.is_empty()), "k={k} N={n}");
            }
        }
    }

    #[test]
    fn expansion_invariants() {
        for k in 1..=4 {
            for n in -1..=3i64 {
                if k as i64 + n > 6 {
                    continue;
                }
                let e = expand(k, n).unwrap();
                for (level, fs) in e.f_terms.iter().enumerate() {
                    for t in fs {
                        assert_eq!(n_phi(&t.graph), 0);
                        assert!(t.graph.is_pure());
                        assert_eq!(t.graph.interior_count(), level);
                        assert!(red_forest_check(&t.graph));
                    }
                }
                for t in &e.remainder_terms {
                    assert_eq!(t.graph.interior_count() as i64, n + 1);
                    assert_eq!(t.lambda_power as i64, n + 1);
                    assert!(t.graph.degrees_valid());
                    assert!(red_forest_check(&t.graph), "{:?}", t.graph);
                    // n_phi has the parity of k, so it is even exactly when k is
                    assert_eq!(n_phi(&t.graph).rem_euclid(2), (k % 2) as i64);
                }
            }
        }
    }

    #[test]
    fn selection_rule_does_not_change_pure_part() {
        let opts = ExpandOptions {
            rule: SelectionRule::HighestFirst,
            ..ExpandOptions::default()
        };
        let a = expand(2, 2).unwrap();
        let b = expand_with(2, 2, &opts).unwrap();
        let shape = |ts: &[Term]| -> Vec<(CanonicalKey, BigRational)> {
            merge_uncolored(ts.to_vec())
                .into_iter()
                .map(|t| (canonicalize_uncolored(&t.graph).0, t.coeff))
                .collect()
        };
        for n in 0..=2 {
            assert_eq!(shape(&a.f_terms[n]), shape(&b.f_terms[n]));
        }
    }

    #[test]
    fn unmerged_mode_agrees_after_merging() {
        let opts = ExpandOptions {
            merge: false,
            ..ExpandOptions::default()
        };
        let a = expand(4, 1).unwrap();
        let b = expand_with(4, 1, &opts).unwrap();
        assert!(b.remainder_terms.len() >= a.remainder_terms.len());
        assert_eq!(merge_terms(b.remainder_terms), a.remainder_terms);
        assert_eq!(merge_terms(b.f_terms[1].clone()), a.f_terms[1]);
    }

    #[test]
    fn merge_examples() {
        let g = sunset();
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let merged = merge_terms(vec![
            Term::new(half.clone(), 2, g.clone()),
            Term::new(half, 2, g.clone()),
        ]);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].coeff, rational(1));
        assert!(merge_terms(vec![
            Term::new(rational(1), 2, g.clone()),
            Term::new(rational(-1), 2, g.clone()),
        ])
        .is_empty());
        // same graph at different lambda powers stays separate
        assert_eq!(
            merge_terms(vec![
                Term::new(rational(1), 2, g.clone()),
                Term::new(rational(1), 3, g),
            ])
            .len(),
            2
        );
    }

    #[test]
    fn tadpole_cancellation_at_first_order() {
        // After the first sweep on the growth term, the two-point function at
        // order lambda carries -3 lambda x (u1 v1 red, u2 v1 green) with two
        // free insertions at v1; integrating by parts there has no partner,
        // so no order-lambda pure diagram survives.
        let seed_growth = ibp_step(&Term::seed(2), 0).unwrap().pop().unwrap();
        let second = ibp_step(&seed_growth, 1).unwrap();
        assert_eq!(second[0].coeff, rational(-3));
        let third = ibp_step(&second[0], 2).unwrap();
        assert_eq!(third.len(), 1);
        assert_eq!(third[0].lambda_power, 2);
    }

    #[test]
    fn budget_guard() {
        let opts = ExpandOptions {
            term_budget: 3,
            ..ExpandOptions::default()
        };
        assert_eq!(
            expand_with(4, 3, &opts),
            Err(GraphError::TermBudget(3))
        );
        assert!(expand(0, 1).is_err());
        assert!(expand(2, -2).is_err());
    }

    #[test]
    fn expansion_is_deterministic() {
        assert_eq!(expand(4, 2).unwrap(), expand(4, 2).unwrap());
    }

    impl Term {
        fn with_graph(mut self, g: IbpGraph) -> Self {
            self.graph = g;
            self
        }
    }
}
