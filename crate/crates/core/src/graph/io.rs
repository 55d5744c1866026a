use std::fmt::Write;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::{Edge, EdgeColor, Expansion, GraphError, IbpGraph, Term};

fn vertex_name(g: &IbpGraph, v: usize) -> String {
    if g.is_boundary(v) {
        format!("u{}", v + 1)
    } else {
        format!("v{}", v - g.k() + 1)
    }
}

/// Graphviz text: boundary vertices boxed, edges colored.
pub fn to_dot(g: &IbpGraph) -> String {
    let mut s = String::from("graph G {\n  node [shape=circle];\n");
    for v in 0..g.vertex_count() {
        let shape = if g.is_boundary(v) { "box" } else { "circle" };
        let _ = writeln!(s, "  {} [shape={shape}];", vertex_name(g, v));
    }
    for e in g.edges() {
        let _ = writeln!(
            s,
            "  {} -- {} [color={}];",
            vertex_name(g, e.a),
            vertex_name(g, e.b),
            e.color.name()
        );
    }
    s.push_str("}\n");
    s
}

fn write_term(s: &mut String, t: &Term) {
    let g = &t.graph;
    let _ = writeln!(
        s,
        "term lambda_power={} coeff={}/{}",
        t.lambda_power,
        t.coeff.numer(),
        t.coeff.denom()
    );
    s.push_str("vertices");
    for v in 0..g.vertex_count() {
        let kind = if g.is_boundary(v) { "boundary" } else { "interior" };
        let _ = write!(s, " {v}:{kind}");
    }
    s.push_str("\nedges");
    for e in g.edges() {
        let _ = write!(s, " {}-{}:{}", e.a, e.b, e.color.name());
    }
    s.push('\n');
}

/// Human-readable serialization; [`parse_expansion`] inverts it.
pub fn write_expansion(e: &Expansion) -> String {
    let mut s = format!("expansion k={} order={}\n", e.k, e.order);
    for (n, terms) in e.f_terms.iter().enumerate() {
        let _ = writeln!(s, "section f {n}");
        terms.iter().for_each(|t| write_term(&mut s, t));
    }
    s.push_str("section remainder\n");
    e.remainder_terms.iter().for_each(|t| write_term(&mut s, t));
    s
}

fn perr(line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        line: line + 1,
        msg: msg.into(),
    }
}

fn field<'a>(tok: &'a str, name: &str, line: usize) -> Result<&'a str, GraphError> {
    tok.strip_prefix(name)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| perr(line, format!("expected {name}=..., got {tok:?}")))
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T, GraphError> {
    s.parse().map_err(|_| perr(line, format!("bad number {s:?}")))
}

pub fn parse_expansion(text: &str) -> Result<Expansion, GraphError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty input"))?;
    let h: Vec<&str> = header.split_whitespace().collect();
    if h.len() != 3 || h[0] != "expansion" {
        return Err(perr(hl, "missing expansion header"));
    }
    let k: usize = num(field(h[1], "k", hl)?, hl)?;
    let order: i64 = num(field(h[2], "order", hl)?, hl)?;
    let mut f_terms: Vec<Vec<Term>> = Vec::new();
    let mut remainder = Vec::new();
    let mut in_remainder = false;
    let mut pending: Option<(usize, u32, BigRational)> = None;
    let mut vertices: Option<(usize, usize)> = None;
    for (ln, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "section" => {
                if pending.is_some() {
                    return Err(perr(ln, "term without edges"));
                }
                match toks.get(1..) {
                    Some(["f", n]) => {
                        let n: usize = num(n, ln)?;
                        if n != f_terms.len() {
                            return Err(perr(ln, "f sections out of order"));
                        }
                        f_terms.push(Vec::new());
                    }
                    Some(["remainder"]) => in_remainder = true,
                    _ => return Err(perr(ln, "unknown section")),
                }
            }
            "term" => {
                if toks.len() != 3 {
                    return Err(perr(ln, "term needs lambda_power and coeff"));
                }
                let p: u32 = num(field(toks[1], "lambda_power", ln)?, ln)?;
                let c = field(toks[2], "coeff", ln)?;
                let (nu, de) = c.split_once('/').ok_or_else(|| perr(ln, "coeff must be p/q"))?;
                let nu: BigInt = num(nu, ln)?;
                let de: BigInt = num(de, ln)?;
                if de == BigInt::from(0) {
                    return Err(perr(ln, "zero denominator"));
                }
                pending = Some((ln, p, BigRational::new(nu, de)));
                vertices = None;
            }
            "vertices" => {
                let mut nb = 0;
                for (i, tok) in toks[1..].iter().enumerate() {
                    let (idx, kind) = tok.split_once(':').ok_or_else(|| perr(ln, "vertex needs kind"))?;
                    if num::<usize>(idx, ln)? != i {
                        return Err(perr(ln, "vertices must be listed in order"));
                    }
                    match kind {
                        "boundary" if nb == i => nb += 1,
                        "interior" => {}
                        _ => return Err(perr(ln, "boundary vertices must come first")),
                    }
                }
                if nb != k {
                    return Err(perr(ln, format!("expected {k} boundary vertices, found {nb}")));
                }
                vertices = Some((nb, toks.len() - 1 - nb));
            }
            "edges" => {
                let (_, p, c) = pending.take().ok_or_else(|| perr(ln, "edges outside a term"))?;
                let (nb, ni) = vertices.ok_or_else(|| perr(ln, "edges before vertices"))?;
                let mut edges = Vec::new();
                for tok in &toks[1..] {
                    let (pair, color) = tok.split_once(':').ok_or_else(|| perr(ln, "edge needs color"))?;
                    let (a, b) = pair.split_once('-').ok_or_else(|| perr(ln, "edge needs a-b"))?;
                    let color = match color {
                        "red" => EdgeColor::Red,
                        "green" => EdgeColor::Green,
                        _ => return Err(perr(ln, format!("unknown color {color:?}"))),
                    };
                    edges.push(Edge::new(num(a, ln)?, num(b, ln)?, color));
                }
                let g = IbpGraph::from_edges(nb, ni, &edges).map_err(|e| perr(ln, e.to_string()))?;
                let t = Term::new(c, p, g);
                match (in_remainder, f_terms.last_mut()) {
                    (true, _) => remainder.push(t),
                    (false, Some(f)) => f.push(t),
                    (false, None) => return Err(perr(ln, "term before any section")),
                }
            }
            other => return Err(perr(ln, format!("unexpected line start {other:?}"))),
        }
    }
    if let Some((ln, ..)) = pending {
        return Err(perr(ln, "term without edges"));
    }
    Ok(Expansion {
        k,
        order,
        f_terms,
        remainder_terms: remainder,
    })
}

#[cfg(test)]
mod tests {
    use super::super::expand;
    use super::*;

    #[test]
    fn roundtrip() {
        for (k, n) in [(2, 2), (4, 1), (3, 1), (1, -1)] {
            let e = expand(k, n).unwrap();
            let text = write_expansion(&e);
            assert_eq!(parse_expansion(&text).unwrap(), e);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_expansion("").is_err());
        assert!(parse_expansion("expansion k=2 order=0\nterm lambda_power=0 coeff=1/1\n").is_err());
        let bad_color =
            "expansion k=2 order=0\nsection f 0\nterm lambda_power=0 coeff=1/1\nvertices 0:boundary 1:boundary\nedges 0-1:blue\n";
        assert!(matches!(parse_expansion(bad_color), Err(GraphError::Parse { line: 5, .. })));
    }

    #[test]
    fn dot_marks_boundary_and_colors() {
        let g = IbpGraph::from_edges(1, 1, &[Edge::new(0, 1, EdgeColor::Red)]).unwrap();
        let dot = to_dot(&g);
        assert!(dot.contains("u1 [shape=box];"));
        assert!(dot.contains("v1 [shape=circle];"));
        assert!(dot.contains("u1 -- v1 [color=red];"));
    }
}
