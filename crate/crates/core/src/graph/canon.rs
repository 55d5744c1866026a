use std::fmt::Write;

use itertools::Itertools;

use super::{Edge, EdgeColor, IbpGraph};

/// Key identifying a graph up to relabeling of its interior vertices.
/// Boundary labels, edge colors and multiplicities are part of the key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Canonical key plus the graph relabeled into canonical form.
pub fn canonicalize(g: &IbpGraph) -> (CanonicalKey, IbpGraph) {
    canonical_form(g, true)
}

/// As [`canonicalize`], but red and green edges are indistinguishable.
pub fn canonicalize_uncolored(g: &IbpGraph) -> (CanonicalKey, IbpGraph) {
    let (key, _) = canonical_form(g, false);
    let (_, colored) = canonical_form(g, true);
    (key, colored)
}

fn canonical_form(g: &IbpGraph, colored: bool) -> (CanonicalKey, IbpGraph) {
    let k = g.k();
    let l = g.interior_count();
    let cells = refine(g, colored);
    let mut best: Option<(Vec<(usize, usize, u8)>, Vec<usize>)> = None;
    // interior vertices grouped by refined color; labels are handed out cell
    // by cell, so only permutations inside a cell need to be tried
    let per_cell: Vec<Vec<Vec<usize>>> = cells
        .iter()
        .map(|cell| cell.iter().copied().permutations(cell.len()).collect())
        .collect();
    for choice in per_cell.iter().map(|p| p.iter()).multi_cartesian_product_or_unit() {
        let mut perm = vec![0usize; l];
        let mut next = 0;
        for order in choice {
            for &v in order {
                perm[v] = next;
                next += 1;
            }
        }
        let enc = encode(g, &perm, colored);
        if best.as_ref().is_none_or(|(b, _)| enc < *b) {
            best = Some((enc, perm));
        }
    }
    let (enc, perm) = best.unwrap_or_default();
    let mut key = format!("k{k}l{l}:");
    for (a, b, c) in enc {
        let _ = write!(key, "{a}-{b}{},", ['r', 'g', 'x'][c as usize]);
    }
    (CanonicalKey(key), g.relabeled(&perm))
}

fn color_code(c: EdgeColor, colored: bool) -> u8 {
    match (colored, c) {
        (false, _) => 2,
        (true, EdgeColor::Red) => 0,
        (true, EdgeColor::Green) => 1,
    }
}

fn encode(g: &IbpGraph, perm: &[usize], colored: bool) -> Vec<(usize, usize, u8)> {
    let k = g.k();
    let map = |v: usize| if v < k { v } else { k + perm[v - k] };
    let mut out: Vec<(usize, usize, u8)> = g
        .edges()
        .iter()
        .map(|e: &Edge| {
            let (a, b) = (map(e.a), map(e.b));
            (a.min(b), a.max(b), color_code(e.color, colored))
        })
        .collect();
    out.sort_unstable();
    out
}

/// Color refinement on interior vertices. Returns the cells (interior
/// indices relative to `k`) ordered by a labeling-independent color.
fn refine(g: &IbpGraph, colored: bool) -> Vec<Vec<usize>> {
    let k = g.k();
    let l = g.interior_count();
    // adjacency lists over all vertices, with edge color codes
    let mut adj: Vec<Vec<(usize, u8)>> = vec![Vec::new(); g.vertex_count()];
    for e in g.edges() {
        let c = color_code(e.color, colored);
        adj[e.a].push((e.b, c));
        adj[e.b].push((e.a, c));
    }
    // boundary vertices are fixed points and keep their own identity as color
    let mut color: Vec<usize> = (0..g.vertex_count())
        .map(|v| if v < k { v } else { k })
        .collect();
    let mut classes = if l > 0 { k + 1 } else { k };
    loop {
        let signatures: Vec<(usize, Vec<(usize, u8)>)> = (0..g.vertex_count())
            .map(|v| {
                let mut nb: Vec<(usize, u8)> = adj[v].iter().map(|&(w, c)| (color[w], c)).collect();
                nb.sort_unstable();
                (color[v], nb)
            })
            .collect();
        let distinct: Vec<&(usize, Vec<(usize, u8)>)> =
            signatures.iter().sorted().dedup().collect();
        let new_color: Vec<usize> = signatures
            .iter()
            .map(|s| distinct.binary_search(&s).expect("present"))
            .collect();
        let count = distinct.len();
        color = new_color;
        if count == classes {
            break;
        }
        classes = count;
    }
    let mut cells: Vec<(usize, Vec<usize>)> = Vec::new();
    for v in k..k + l {
        match cells.iter_mut().find(|(c, _)| *c == color[v]) {
            Some((_, members)) => members.push(v - k),
            None => cells.push((color[v], vec![v - k])),
        }
    }
    cells.sort();
    cells.into_iter().map(|(_, m)| m).collect()
}

trait CartesianOrUnit<'a, I: Iterator<Item = &'a Vec<usize>> + Clone> {
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<&'a Vec<usize>>> + 'a>;
}

impl<'a, O, I> CartesianOrUnit<'a, I> for O
where
    O: Iterator<Item = I> + 'a,
    I: Iterator<Item = &'a Vec<usize>> + Clone + 'a,
{
    fn multi_cartesian_product_or_unit(self) -> Box<dyn Iterator<Item = Vec<&'a Vec<usize>>> + 'a> {
        let mut it = self.peekable();
        if it.peek().is_none() {
            // no interior vertices: a single empty labeling
            Box::new(std::iter::once(Vec::new()))
        } else {
            Box::new(it.multi_cartesian_product())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EdgeColor::{Green, Red};

    fn graph(k: usize, l: usize, edges: &[(usize, usize, EdgeColor)]) -> IbpGraph {
        let e: Vec<Edge> = edges.iter().map(|&(a, b, c)| Edge::new(a, b, c)).collect();
        IbpGraph::from_edges(k, l, &e).unwrap()
    }

    fn sunset_labeled(swap: bool) -> IbpGraph {
        let (p, q) = if swap { (3, 2) } else { (2, 3) };
        graph(
            2,
            2,
            &[(0, p, Red), (1, q, Red), (p, q, Green), (p, q, Green), (p, q, Green)],
        )
    }

    #[test]
    fn sunset_relabelings_agree() {
        let (a, ga) = canonicalize(&sunset_labeled(false));
        let (b, gb) = canonicalize(&sunset_labeled(true));
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn sunset_differs_from_glasses() {
        // same vertices, single edge between the interior pair
        let glasses = graph(
            2,
            2,
            &[(0, 2, Red), (1, 3, Red), (2, 3, Green)],
        );
        assert_ne!(canonicalize(&sunset_labeled(false)).0, canonicalize(&glasses).0);
    }

    #[test]
    fn recoloring_changes_key() {
        let a = graph(2, 1, &[(0, 2, Red), (1, 2, Green)]);
        let b = graph(2, 1, &[(0, 2, Red), (1, 2, Red)]);
        assert_ne!(canonicalize(&a).0, canonicalize(&b).0);
        assert_eq!(canonicalize_uncolored(&a).0, canonicalize_uncolored(&b).0);
    }

    #[test]
    fn boundary_labels_are_fixed() {
        let a = graph(2, 1, &[(0, 2, Red)]);
        let b = graph(2, 1, &[(1, 2, Red)]);
        assert_ne!(canonicalize(&a).0, canonicalize(&b).0);
    }

    #[test]
    fn regular_interior_is_handled() {
        // every interior vertex looks alike to color refinement
        let ring = graph(
            1,
            4,
            &[(0, 1, Red), (1, 2, Red), (2, 3, Red), (3, 4, Red), (4, 1, Green)],
        );
        let relabeled = ring.relabeled(&[2, 0, 3, 1]);
        assert_eq!(canonicalize(&ring), canonicalize(&relabeled));
    }

    #[test]
    fn no_interior() {
        let (key, g) = canonicalize(&IbpGraph::seed(3));
        assert_eq!(key.as_str(), "k3l0:");
        assert_eq!(g, IbpGraph::seed(3));
    }
}
