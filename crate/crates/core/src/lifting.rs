//! Lifting graphs into higher-order domains.
//!
//! * [`clique_lift`]: cliques become simplices (the clique complex);
//! * [`cycle_lift`]: chordless cycles become cellular 2-cells;
//! * [`group_lift`]: user-given vertex groups become hyperedges;
//! * [`hyperedge_augment`]: extra ranked cells turn a cellular complex into a
//!   combinatorial complex.

use std::collections::BTreeSet;

use crate::complex::{build_complex, CellSpec, Complex, DomainKind};
use crate::error::{Error, Result};

/// Chordless cycle enumeration stops with an error beyond this many cycles.
pub const MAX_CYCLES: usize = 10_000;

/// Simple undirected graph with vertices in label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    labels: Vec<String>,
    adjacency: Vec<BTreeSet<usize>>,
}

impl Graph {
    /// Duplicate edges collapse; self-loops and unknown labels are errors.
    pub fn new<S: AsRef<str>, T: AsRef<str>>(vertices: &[S], edges: &[(T, T)]) -> Result<Self> {
        let mut labels: Vec<String> = vertices.iter().map(|v| v.as_ref().to_owned()).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate vertex label {:?}", w[0])));
        }
        let mut adjacency = vec![BTreeSet::new(); labels.len()];
        let find = |l: &str| {
            labels
                .binary_search_by(|x| x.as_str().cmp(l))
                .map_err(|_| Error::UnknownVertex(l.to_owned()))
        };
        for (a, b) in edges {
            let (a, b) = (find(a.as_ref())?, find(b.as_ref())?);
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at {:?}", labels[a])));
            }
            adjacency[a].insert(b);
            adjacency[b].insert(a);
        }
        Ok(Self { labels, adjacency })
    }

    /// The 1-skeleton of a complex. Rank-1 cells must have two vertices.
    pub fn from_complex(c: &Complex) -> Result<Self> {
        let labels = c.vertex_labels();
        let mut edges = Vec::new();
        if c.max_rank() >= 1 {
            for cell in c.skeleton(1)? {
                match cell.vertices() {
                    [a, b] => edges.push((labels[*a].as_str(), labels[*b].as_str())),
                    other => {
                        return Err(Error::InvalidArgument(format!(
                            "rank-1 cell with {} vertices is not a graph edge",
                            other.len()
                        )))
                    }
                }
            }
        }
        Self::new(labels, &edges)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[v].iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].contains(&b)
    }

    /// Edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.labels.len())
            .flat_map(|a| self.neighbors(a).filter(move |&b| b > a).map(move |b| (a, b)))
            .collect()
    }

    fn names(&self, vs: &[usize]) -> Vec<String> {
        vs.iter().map(|&v| self.labels[v].clone()).collect()
    }

    fn edge_specs(&self) -> Vec<CellSpec> {
        self.edges()
            .into_iter()
            .map(|(a, b)| CellSpec::new(1, &self.names(&[a, b])))
            .collect()
    }
}

/// Cliques of sizes `2..=max_size`, each listed in increasing vertex order.
pub fn cliques(g: &Graph, max_size: usize) -> Vec<Vec<usize>> {
    fn extend(g: &Graph, clique: &mut Vec<usize>, candidates: &[usize], max: usize, out: &mut Vec<Vec<usize>>) {
        for (i, &v) in candidates.iter().enumerate() {
            clique.push(v);
            out.push(clique.clone());
            if clique.len() < max {
                let next: Vec<usize> = candidates[i + 1..]
                    .iter()
                    .copied()
                    .filter(|&w| g.has_edge(v, w))
                    .collect();
                extend(g, clique, &next, max, out);
            }
            clique.pop();
        }
    }
    let mut out = Vec::new();
    if max_size < 2 {
        return out;
    }
    for v in 0..g.num_vertices() {
        let higher: Vec<usize> = g.neighbors(v).filter(|&w| w > v).collect();
        let mut clique = vec![v];
        extend(g, &mut clique, &higher, max_size, &mut out);
    }
    out
}

/// Clique complex truncated at `max_rank`.
pub fn clique_lift(g: &Graph, max_rank: usize) -> Result<Complex> {
    if max_rank < 1 {
        return Err(Error::InvalidArgument("clique lift needs max_rank >= 1".into()));
    }
    let specs: Vec<CellSpec> = cliques(g, max_rank + 1)
        .iter()
        .map(|c| CellSpec::simplex(&g.names(c)))
        .collect();
    build_complex(DomainKind::Simplicial, g.labels(), &specs)
}

/// Chordless cycles with `3..=max_len` vertices. Each cycle starts at its
/// smallest vertex and runs in the direction that makes it lexicographically
/// smallest.
pub fn chordless_cycles(g: &Graph, max_len: usize) -> Result<Vec<Vec<usize>>> {
    struct Search<'a> {
        g: &'a Graph,
        max_len: usize,
        out: Vec<Vec<usize>>,
    }
    impl Search<'_> {
        fn grow(&mut self, path: &mut Vec<usize>) -> Result<()> {
            let start = path[0];
            let last = *path.last().expect("path starts nonempty");
            let neighbors: Vec<usize> = self.g.neighbors(last).filter(|&v| v > start).collect();
            for v in neighbors {
                if path.contains(&v) {
                    continue;
                }
                // v may touch only `last` among the interior of the path
                if path[1..path.len() - 1].iter().any(|&p| self.g.has_edge(p, v)) {
                    continue;
                }
                if self.g.has_edge(start, v) {
                    if path.len() >= 2 && path[1] < v {
                        let mut cycle = path.clone();
                        cycle.push(v);
                        self.out.push(cycle);
                        if self.out.len() > MAX_CYCLES {
                            return Err(Error::CycleLimit { limit: MAX_CYCLES });
                        }
                    }
                    continue;
                }
                if path.len() + 1 < self.max_len {
                    path.push(v);
                    self.grow(path)?;
                    path.pop();
                }
            }
            Ok(())
        }
    }
    let mut search = Search {
        g,
        max_len,
        out: Vec::new(),
    };
    for s in 0..g.num_vertices() {
        for first in g.neighbors(s).filter(|&v| v > s).collect::<Vec<_>>() {
            let mut path = vec![s, first];
            search.grow(&mut path)?;
        }
    }
    let mut cycles = search.out;
    cycles.sort();
    Ok(cycles)
}

/// Attaches a 2-cell to every chordless cycle of length `3..=max_len`.
pub fn cycle_lift(g: &Graph, max_len: usize) -> Result<Complex> {
    if max_len < 3 {
        return Err(Error::InvalidArgument("cycle lift needs max_len >= 3".into()));
    }
    let mut specs = g.edge_specs();
    for cycle in chordless_cycles(g, max_len)? {
        specs.push(CellSpec::face(&g.names(&cycle)));
    }
    build_complex(DomainKind::Cellular, g.labels(), &specs)
}

/// Hypergraph with one hyperedge per distinct group, plus every graph edge
/// as a two-vertex hyperedge when `keep_edges` is set.
pub fn group_lift<S: AsRef<str>>(g: &Graph, groups: &[Vec<S>], keep_edges: bool) -> Result<Complex> {
    let mut seen: BTreeSet<Vec<String>> = BTreeSet::new();
    let mut specs = Vec::new();
    let mut push = |mut members: Vec<String>| -> Result<()> {
        members.sort();
        members.dedup();
        if members.is_empty() {
            return Err(Error::InvalidArgument("empty group".into()));
        }
        if seen.insert(members.clone()) {
            specs.push(CellSpec::new(1, &members));
        }
        Ok(())
    };
    for group in groups {
        push(group.iter().map(|v| v.as_ref().to_owned()).collect())?;
    }
    if keep_edges {
        for (a, b) in g.edges() {
            push(g.names(&[a, b]))?;
        }
    }
    build_complex(DomainKind::Hypergraph, g.labels(), &specs)
}

/// Combinatorial complex holding every cell of `c` at its rank plus the
/// given `(vertices, rank)` cells. A new cell equal to an existing one at
/// the same rank is skipped. New cells must have rank at least 2 so the
/// 1-skeleton is preserved.
pub fn hyperedge_augment<S: AsRef<str>>(c: &Complex, hyper_cells: &[(Vec<S>, usize)]) -> Result<Complex> {
    if !matches!(c.kind(), DomainKind::Cellular | DomainKind::Simplicial) {
        return Err(Error::InvalidArgument(format!(
            "hyperedge augmentation expects a cellular complex, got {}",
            c.kind()
        )));
    }
    let labels = c.vertex_labels();
    let mut specs = Vec::new();
    let mut existing: BTreeSet<(usize, Vec<String>)> = BTreeSet::new();
    for rank in 1..=c.max_rank() {
        for cell in c.skeleton(rank)? {
            let names: Vec<String> = cell.vertices().iter().map(|&v| labels[v].clone()).collect();
            let mut key = names.clone();
            key.sort();
            existing.insert((rank, key));
            specs.push(CellSpec::new(rank, &names));
        }
    }
    for (vertices, rank) in hyper_cells {
        let mut key: Vec<String> = vertices.iter().map(|v| v.as_ref().to_owned()).collect();
        key.sort();
        key.dedup();
        if key.len() == 1 && *rank > 0 {
            return Err(Error::invalid(
                DomainKind::Combinatorial,
                format!("singleton {{{}}} cannot have rank {rank}", key[0]),
            ));
        }
        if existing.contains(&(*rank, key.clone())) || (*rank == 0 && key.len() == 1) {
            continue;
        }
        if *rank < 2 {
            return Err(Error::invalid(
                DomainKind::Combinatorial,
                format!("added cell {{{}}} must have rank >= 2", key.join(",")),
            ));
        }
        existing.insert((*rank, key.clone()));
        specs.push(CellSpec::new(*rank, &key));
    }
    build_complex(DomainKind::Combinatorial, labels, &specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homology::betti_numbers;
    use crate::neighborhoods::incidence;

    fn graph(vs: &[&str], es: &[(&str, &str)]) -> Graph {
        Graph::new(vs, es).unwrap()
    }

    fn triangle() -> Graph {
        graph(&["a", "b", "c"], &[("a", "b"), ("b", "c"), ("a", "c")])
    }

    fn square() -> Graph {
        graph(&["a", "b", "c", "d"], &[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a")])
    }

    fn k4() -> Graph {
        let vs = ["a", "b", "c", "d"];
        let mut es = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                es.push((vs[i], vs[j]));
            }
        }
        graph(&vs, &es)
    }

    fn tree() -> Graph {
        graph(&["a", "b", "c", "d"], &[("a", "b"), ("a", "c"), ("c", "d")])
    }

    #[test]
    fn clique_lift_examples() {
        assert_eq!(clique_lift(&triangle(), 2).unwrap().counts(), vec![3, 3, 1]);
        assert_eq!(clique_lift(&k4(), 2).unwrap().counts(), vec![4, 6, 4]);
        assert_eq!(clique_lift(&k4(), 3).unwrap().counts(), vec![4, 6, 4, 1]);
        assert_eq!(clique_lift(&tree(), 3).unwrap().counts(), vec![4, 3]);
        assert!(clique_lift(&tree(), 0).is_err());
    }

    #[test]
    fn cycle_lift_examples() {
        let sq = cycle_lift(&square(), 4).unwrap();
        assert_eq!(sq.counts(), vec![4, 4, 1]);
        let mut chorded = square();
        chorded = Graph::new(
            chorded.labels(),
            &[("a", "b"), ("b", "c"), ("c", "d"), ("d", "a"), ("a", "c")],
        )
        .unwrap();
        let cc = cycle_lift(&chorded, 4).unwrap();
        assert_eq!(cc.counts(), vec![4, 5, 2]);
        for i in 0..2 {
            assert_eq!(cc.skeleton(2).unwrap()[i].size(), 3);
        }
        assert_eq!(cycle_lift(&tree(), 6).unwrap().counts(), vec![4, 3]);
        assert!(cycle_lift(&square(), 2).is_err());
    }

    #[test]
    fn cycle_orientation_is_smallest_rotation() {
        let cycles = chordless_cycles(&square(), 4).unwrap();
        assert_eq!(cycles, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn lifted_faces_are_closed() {
        let cc = cycle_lift(&k4(), 4).unwrap();
        let b1 = incidence(&cc, 1).unwrap().matrix;
        let b2 = incidence(&cc, 2).unwrap().matrix;
        assert_eq!(b1.matmul(&b2).unwrap().nnz(), 0);
        assert_eq!(betti_numbers(&cc).unwrap()[0], 1);
    }

    #[test]
    fn group_lift_examples() {
        let g = triangle();
        let all_edges: Vec<Vec<&str>> = vec![vec!["a", "b"], vec!["b", "c"], vec!["a", "c"]];
        let hg = group_lift(&g, &all_edges, false).unwrap();
        assert_eq!(hg.counts(), vec![3, 3]);
        assert_eq!(Graph::from_complex(&hg).unwrap(), g);
        assert_eq!(group_lift(&g, &[vec!["a", "b", "c"]], false).unwrap().counts(), vec![3, 1]);
        let none: Vec<Vec<&str>> = Vec::new();
        assert_eq!(group_lift(&g, &none, false).unwrap().counts(), vec![3, 0]);
        assert_eq!(group_lift(&g, &none, true).unwrap().counts(), vec![3, 3]);
    }

    #[test]
    fn augment_examples() {
        let sq = cycle_lift(&square(), 4).unwrap();
        let ccc = hyperedge_augment(&sq, &[(vec!["a", "b", "c", "d"], 3)]).unwrap();
        assert_eq!(ccc.counts(), vec![4, 4, 1, 1]);
        assert!(hyperedge_augment(&sq, &[(vec!["a"], 2)]).is_err());
        let same = hyperedge_augment(&sq, &[(vec!["d", "c", "b", "a"], 2)]).unwrap();
        assert_eq!(same.counts(), sq.counts());
        // a 2-set above a 3-set breaks monotonicity
        let tri = cycle_lift(&triangle(), 3).unwrap();
        assert!(hyperedge_augment(&tri, &[(vec!["a", "b"], 3)]).is_err());
    }

    #[test]
    fn lifts_preserve_one_skeleton() {
        for g in [triangle(), square(), k4(), tree()] {
            assert_eq!(Graph::from_complex(&clique_lift(&g, 3).unwrap()).unwrap(), g);
            assert_eq!(Graph::from_complex(&cycle_lift(&g, 5).unwrap()).unwrap(), g);
        }
    }
}
