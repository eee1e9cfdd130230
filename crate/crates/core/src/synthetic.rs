//! Seeded random domains and the two synthetic benchmark datasets.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::complex::{build_complex, close_downward, CellSpec, Complex, DomainKind};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::lifting::{cycle_lift, hyperedge_augment, Graph};
use crate::tensor::DenseMatrix;
use crate::train::{ComplexDataset, NodeDataset, Sample};

/// Vertex labels `v00`, `v01`, ... that sort in numeric order.
pub fn vertex_labels(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(2);
    (0..n).map(|i| format!("v{i:0width$}")).collect()
}

/// Erdős–Rényi graph on `n` vertices.
pub fn random_graph<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Graph {
    let labels = vertex_labels(n);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((labels[i].clone(), labels[j].clone()));
            }
        }
    }
    Graph::new(&labels, &edges).expect("generated graph is valid")
}

/// Simplicial complex on 4..=`max_vertices` vertices generated by a few
/// random top simplices of rank at most `max_rank`.
pub fn random_simplicial<R: Rng + ?Sized>(max_vertices: usize, max_rank: usize, rng: &mut R) -> Complex {
    let n = rng.random_range(4..=max_vertices.max(4));
    let labels = vertex_labels(n);
    let tops = rng.random_range(2..=n);
    let mut cells = Vec::new();
    for _ in 0..tops {
        let size = rng.random_range(2..=(max_rank + 1).min(n));
        let mut verts: Vec<String> = labels.choose_multiple(rng, size).cloned().collect();
        verts.sort();
        cells.push(verts);
    }
    close_downward(&labels, &cells).expect("closure of random simplices is valid")
}

/// Cycle lift of a sparse random graph, 2-cells on chordless cycles up to
/// length 5.
pub fn random_cellular<R: Rng + ?Sized>(max_vertices: usize, rng: &mut R) -> Complex {
    loop {
        let n = rng.random_range(4..=max_vertices.max(4));
        let g = random_graph(n, 3.0 / n as f64, rng);
        if let Ok(c) = cycle_lift(&g, 5) {
            return c;
        }
    }
}

/// Hypergraph with hyperedges of 1 to 4 vertices.
pub fn random_hypergraph<R: Rng + ?Sized>(max_vertices: usize, rng: &mut R) -> Complex {
    let n = rng.random_range(3..=max_vertices.max(3));
    let labels = vertex_labels(n);
    let m = rng.random_range(1..=n);
    let mut seen = BTreeSet::new();
    let mut specs = Vec::new();
    for _ in 0..m {
        let size = rng.random_range(1..=4.min(n));
        let mut verts: Vec<String> = labels.choose_multiple(rng, size).cloned().collect();
        verts.sort();
        if seen.insert(verts.clone()) {
            specs.push(CellSpec::new(1, &verts));
        }
    }
    build_complex(DomainKind::Hypergraph, &labels, &specs).expect("random hypergraph is valid")
}

/// Random cellular complex augmented with rank-3 cells, each the union of
/// two 2-cells sharing an edge or of a random vertex subset.
pub fn random_combinatorial<R: Rng + ?Sized>(max_vertices: usize, rng: &mut R) -> Complex {
    loop {
        let base = random_cellular(max_vertices, rng);
        let labels = base.vertex_labels();
        let faces = base.skeleton(2).map(|s| s.to_vec()).unwrap_or_default();
        let mut extra: Vec<(Vec<String>, usize)> = Vec::new();
        for _ in 0..rng.random_range(1..=3) {
            let verts: BTreeSet<usize> = if faces.len() >= 2 && rng.random_bool(0.5) {
                let pair: Vec<_> = faces.choose_multiple(rng, 2).collect();
                pair.iter().flat_map(|f| f.vertices().iter().copied()).collect()
            } else {
                let size = rng.random_range(2..=labels.len().min(5));
                (0..labels.len()).collect::<Vec<_>>().choose_multiple(rng, size).copied().collect()
            };
            extra.push((verts.iter().map(|&v| labels[v].clone()).collect(), 3));
        }
        if let Ok(c) = hyperedge_augment(&base, &extra) {
            return c;
        }
    }
}

/// A random domain of the requested kind with at most `max_vertices`
/// vertices.
pub fn random_complex<R: Rng + ?Sized>(kind: DomainKind, max_vertices: usize, rng: &mut R) -> Complex {
    match kind {
        DomainKind::Simplicial => random_simplicial(max_vertices, 3, rng),
        DomainKind::Cellular => random_cellular(max_vertices, rng),
        DomainKind::Hypergraph => random_hypergraph(max_vertices, rng),
        DomainKind::Combinatorial => random_combinatorial(max_vertices, rng),
    }
}

/// Uniform features in [-1, 1] with width `dim` on every rank of `c`.
pub fn random_features<R: Rng + ?Sized>(c: &Complex, dim: usize, rng: &mut R) -> FeatureStore {
    let mut h = FeatureStore::new();
    for r in 0..=c.max_rank() {
        h.insert(r, DenseMatrix::uniform(c.num_cells(r), dim, 1.0, rng));
    }
    h
}

/// Side of the trajectory grid in squares.
pub const GRID: usize = 8;
/// Lower-left corners of the two holes, each an open 2 x 2 block of
/// squares. No symmetry of the grid maps one hole onto the other.
pub const HOLES: [(usize, usize); 2] = [(1, 3), (5, 2)];

fn grid_label(x: usize, y: usize) -> String {
    format!("{x}{y}")
}

fn hole_center((x, y): (usize, usize)) -> (usize, usize) {
    (x + 1, y + 1)
}

fn in_hole(square: (usize, usize)) -> bool {
    HOLES
        .iter()
        .any(|&(hx, hy)| (hx..hx + 2).contains(&square.0) && (hy..hy + 2).contains(&square.1))
}

/// Triangulated grid with two square holes. Every square is split along
/// its `(x, y)`-`(x+1, y+1)` diagonal; squares inside a hole and the
/// vertex at each hole's center are left out.
pub fn trajectory_grid() -> Complex {
    let centers = HOLES.map(hole_center);
    let mut labels = Vec::new();
    for x in 0..=GRID {
        for y in 0..=GRID {
            if !centers.contains(&(x, y)) {
                labels.push(grid_label(x, y));
            }
        }
    }
    let mut tris = Vec::new();
    for x in 0..GRID {
        for y in 0..GRID {
            if in_hole((x, y)) {
                continue;
            }
            for t in [[(x, y), (x + 1, y), (x + 1, y + 1)], [(x, y), (x, y + 1), (x + 1, y + 1)]] {
                tris.push(t.iter().map(|&(a, b)| grid_label(a, b)).collect::<Vec<_>>());
            }
        }
    }
    close_downward(&labels, &tris).expect("grid triangulation is valid")
}

/// Counterclockwise closed walk around the rectangle `[x0, x1] x [y0, y1]`,
/// optionally cutting the lower-right and upper-left corners along a
/// diagonal.
fn rectangle_walk(x0: usize, x1: usize, y0: usize, y1: usize, cut_lr: bool, cut_ul: bool) -> Vec<(usize, usize)> {
    let mut walk = Vec::new();
    for x in x0..x1 {
        walk.push((x, y0));
    }
    for y in y0..y1 {
        walk.push((x1, y));
    }
    for x in (x0 + 1..=x1).rev() {
        walk.push((x, y1));
    }
    for y in (y0 + 1..=y1).rev() {
        walk.push((x0, y));
    }
    let mut drop = Vec::new();
    if cut_lr {
        drop.push((x1, y0));
    }
    if cut_ul {
        drop.push((x0, y1));
    }
    walk.retain(|p| !drop.contains(p));
    walk
}

/// Edge flow of a closed walk: +1 along an edge's canonical direction,
/// -1 against it.
pub fn walk_flow(c: &Complex, walk: &[(usize, usize)]) -> Result<DenseMatrix> {
    let mut flow = DenseMatrix::zeros(c.num_cells(1), 1);
    for (i, &a) in walk.iter().enumerate() {
        let b = walk[(i + 1) % walk.len()];
        let (la, lb) = (grid_label(a.0, a.1), grid_label(b.0, b.1));
        let id = c
            .find_cell(1, &[&la, &lb])
            .ok_or_else(|| Error::InvalidArgument(format!("walk leaves the grid at {la}-{lb}")))?;
        let sign = if la < lb { 1.0 } else { -1.0 };
        flow.set(id.index, 0, flow.get(id.index, 0) + sign);
    }
    Ok(flow)
}

/// Random loop around hole `class`, as an edge flow.
fn trajectory<R: Rng + ?Sized>(c: &Complex, class: usize, rng: &mut R) -> Result<DenseMatrix> {
    let (hx, hy) = HOLES[class];
    let other = hole_center(HOLES[1 - class]);
    for _ in 0..10_000 {
        let x0 = rng.random_range(hx.saturating_sub(1)..=hx);
        let x1 = rng.random_range(hx + 2..=(hx + 3).min(GRID));
        let y0 = rng.random_range(hy.saturating_sub(2)..=hy);
        let y1 = rng.random_range(hy + 2..=(hy + 4).min(GRID));
        let (px, py) = other;
        if x0 < px && px < x1 && y0 < py && py < y1 {
            continue;
        }
        let walk = rectangle_walk(x0, x1, y0, y1, rng.random_bool(0.5), rng.random_bool(0.5));
        // a corner cut may need a diagonal that lies inside a hole
        if let Ok(flow) = walk_flow(c, &walk) {
            return Ok(flow);
        }
    }
    Err(Error::InvalidArgument(format!("no loop found around hole {class}")))
}

/// Balanced loops around the two holes, labelled by the enclosed hole.
/// A `test_fraction` share of each class is held out.
pub fn trajectory_dataset<R: Rng + ?Sized>(samples: usize, test_fraction: f64, rng: &mut R) -> Result<ComplexDataset> {
    let grid = trajectory_grid();
    let mut out = Vec::with_capacity(samples);
    for i in 0..samples {
        let label = i % 2;
        let flow = trajectory(&grid, label, rng)?;
        out.push(Sample {
            complex: 0,
            features: FeatureStore::new().with(1, flow),
            label,
            test: false,
        });
    }
    mark_test(&mut out, test_fraction, rng);
    Ok(ComplexDataset {
        complexes: vec![grid],
        samples: out,
    })
}

fn mark_test<R: Rng + ?Sized>(samples: &mut [Sample], fraction: f64, rng: &mut R) {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let n_test = (samples.len() as f64 * fraction).round() as usize;
    for &i in &order[..n_test] {
        samples[i].test = true;
    }
}

/// Parameters of the two-block hypergraph node task.
#[derive(Debug, Clone, Copy)]
pub struct BlockParams {
    pub nodes: usize,
    pub hyperedges: usize,
    /// Chance that a hyperedge member comes from the other block.
    pub noise: f64,
    /// Inclusive range of hyperedge sizes before deduplication.
    pub edge_size: (usize, usize),
    pub dim: usize,
    /// Distance of each class mean from the origin along every axis.
    pub signal: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        Self {
            nodes: 60,
            hyperedges: 30,
            noise: 0.1,
            edge_size: (5, 8),
            dim: 4,
            signal: 0.3,
        }
    }
}

/// Hypergraph whose nodes split into two blocks. Hyperedges mostly stay
/// within one block and every node lies in at least one of them; node features are Gaussian around a class mean.
pub fn block_hypergraph<R: Rng + ?Sized>(p: BlockParams, rng: &mut R) -> Result<NodeDataset> {
    if p.nodes < 4 {
        return Err(Error::InvalidArgument("block hypergraph needs at least 4 nodes".into()));
    }
    let labels = vertex_labels(p.nodes);
    let class: Vec<usize> = (0..p.nodes).map(|i| usize::from(i >= p.nodes / 2)).collect();
    let blocks: [Vec<usize>; 2] = [
        (0..p.nodes).filter(|&i| class[i] == 0).collect(),
        (0..p.nodes).filter(|&i| class[i] == 1).collect(),
    ];
    if p.hyperedges < 2 {
        return Err(Error::InvalidArgument("block hypergraph needs at least 2 hyperedges".into()));
    }
    // hyperedge e draws its members mostly from block e % 2
    let home_edges: [Vec<usize>; 2] = [
        (0..p.hyperedges).filter(|e| e % 2 == 0).collect(),
        (0..p.hyperedges).filter(|e| e % 2 == 1).collect(),
    ];
    let mut members: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); p.hyperedges];
    // every node joins one anchor hyperedge so none is isolated
    for (v, &own) in class.iter().enumerate() {
        let side = if rng.random_bool(p.noise) { 1 - own } else { own };
        let e = *home_edges[side].choose(rng).expect("both sides have hyperedges");
        members[e].insert(v);
    }
    for (e, m) in members.iter_mut().enumerate() {
        let size = rng.random_range(p.edge_size.0..=p.edge_size.1.max(p.edge_size.0)).max(m.len());
        while m.len() < size {
            let block = if rng.random_bool(p.noise) { 1 - e % 2 } else { e % 2 };
            m.insert(*blocks[block].choose(rng).expect("blocks are nonempty"));
        }
    }
    let mut seen = BTreeSet::new();
    let mut specs = Vec::new();
    for m in &members {
        let names: Vec<String> = m.iter().map(|&v| labels[v].clone()).collect();
        if seen.insert(names.clone()) {
            specs.push(CellSpec::new(1, &names));
        }
    }
    let complex = build_complex(DomainKind::Hypergraph, &labels, &specs)?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = DenseMatrix::zeros(p.nodes, p.dim);
    for (i, &own) in class.iter().enumerate() {
        let mean = if own == 0 { -p.signal } else { p.signal };
        for j in 0..p.dim {
            x.set(i, j, mean + normal.sample(rng));
        }
    }
    let mut order: Vec<usize> = (0..p.nodes).collect();
    order.shuffle(rng);
    let (train, test) = order.split_at(p.nodes / 2);
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok(NodeDataset {
        complex,
        features: FeatureStore::new().with(0, x),
        labels: class,
        train,
        test,
    })
}
