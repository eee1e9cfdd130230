//! The four discrete domains and their cell structure.
//!
//! A [`Complex`] is an immutable ranked collection of cells together with a
//! cover relation `y ≺ x` carrying an orientation sign. Every rank-0 cell is
//! a vertex; higher cells are described by [`CellSpec`]s and validated
//! according to the domain kind:
//!
//! * hypergraph: rank-1 hyperedges of any nonzero size, unsigned incidence;
//! * simplicial: rank `r` simplices with exactly `r + 1` vertices, downward
//!   closed, boundary signs from the alternating face rule;
//! * cellular: edges, 2-cells given by an oriented vertex cycle, and higher
//!   cells given by explicit signed boundaries;
//! * combinatorial: cells of any size above rank 0 with a rank function that
//!   is monotone under vertex-set containment, unsigned incidence.
//!
//! Skeletons are stored in a canonical order: vertices by label, higher cells
//! lexicographically by their sorted vertex labels, ties by insertion order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Hypergraph,
    Simplicial,
    Cellular,
    Combinatorial,
}

impl DomainKind {
    /// Simplicial and cellular complexes carry signed incidences.
    pub fn is_oriented(self) -> bool {
        matches!(self, DomainKind::Simplicial | DomainKind::Cellular)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Hypergraph => "hypergraph",
            DomainKind::Simplicial => "simplicial",
            DomainKind::Cellular => "cellular",
            DomainKind::Combinatorial => "combinatorial",
        }
    }
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DomainKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hypergraph" => Ok(DomainKind::Hypergraph),
            "simplicial" => Ok(DomainKind::Simplicial),
            "cellular" => Ok(DomainKind::Cellular),
            "combinatorial" => Ok(DomainKind::Combinatorial),
            other => Err(Error::InvalidArgument(format!("unknown domain kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub rank: usize,
    pub index: usize,
}

impl CellId {
    pub fn new(rank: usize, index: usize) -> Self {
        Self { rank, index }
    }
}

/// Reference to a boundary cell inside a list of [`CellSpec`]s.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryRef {
    /// Position of another spec in the same list.
    Spec(usize),
    /// The unique cell of the next lower rank with exactly these vertices.
    Vertices(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSpec {
    pub vertices: Vec<String>,
    pub rank: usize,
    pub boundary: Option<Vec<(BoundaryRef, i8)>>,
    pub cycle: Option<Vec<String>>,
}

impl CellSpec {
    pub fn new<S: AsRef<str>>(rank: usize, vertices: &[S]) -> Self {
        Self {
            vertices: vertices.iter().map(|v| v.as_ref().to_owned()).collect(),
            rank,
            boundary: None,
            cycle: None,
        }
    }

    /// A simplex whose rank is implied by its vertex count.
    pub fn simplex<S: AsRef<str>>(vertices: &[S]) -> Self {
        Self::new(vertices.len().saturating_sub(1), vertices)
    }

    /// A cellular 2-cell bounded by the given closed vertex walk.
    pub fn face<S: AsRef<str>>(cycle: &[S]) -> Self {
        let mut spec = Self::new(2, cycle);
        spec.cycle = Some(spec.vertices.clone());
        spec
    }

    pub fn with_boundary(mut self, boundary: Vec<(BoundaryRef, i8)>) -> Self {
        self.boundary = Some(boundary);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    vertices: Vec<usize>,
    cycle: Option<Vec<usize>>,
    faces: Vec<(CellId, i8)>,
}

impl Cell {
    /// Vertex indices of the cell. Sorted for canonically built complexes.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Oriented vertex cycle of a cellular 2-cell.
    pub fn cycle(&self) -> Option<&[usize]> {
        self.cycle.as_deref()
    }

    /// Cover-relation entries `(y, sign)` with `y ≺ self`.
    pub fn faces(&self) -> &[(CellId, i8)] {
        &self.faces
    }

    pub fn size(&self) -> usize {
        self.vertices.len()
    }

    fn sorted_key(&self) -> Vec<usize> {
        let mut key = self.vertices.clone();
        key.sort_unstable();
        key
    }
}

#[derive(Debug, Clone)]
pub struct Complex {
    kind: DomainKind,
    labels: Vec<String>,
    skeletons: Vec<Vec<Cell>>,
    lookup: HashMap<(usize, Vec<usize>), Vec<usize>>,
}

impl PartialEq for Complex {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.labels == other.labels && self.skeletons == other.skeletons
    }
}

impl Complex {
    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn max_rank(&self) -> usize {
        self.skeletons.len() - 1
    }

    /// Skeleton size `n_r`; zero above the maximum rank.
    pub fn num_cells(&self, rank: usize) -> usize {
        self.skeletons.get(rank).map_or(0, Vec::len)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.skeletons.iter().map(Vec::len).collect()
    }

    pub fn vertex_labels(&self) -> &[String] {
        &self.labels
    }

    pub fn skeleton(&self, rank: usize) -> Result<&[Cell]> {
        self.skeletons
            .get(rank)
            .map(Vec::as_slice)
            .ok_or(Error::RankOutOfRange {
                rank,
                max_rank: self.max_rank(),
            })
    }

    pub fn cell(&self, id: CellId) -> Result<&Cell> {
        self.skeleton(id.rank)?
            .get(id.index)
            .ok_or(Error::UnknownCell {
                rank: id.rank,
                index: id.index,
            })
    }

    pub fn boundary_cells(&self, id: CellId) -> Result<&[(CellId, i8)]> {
        Ok(self.cell(id)?.faces())
    }

    pub fn cell_labels(&self, id: CellId) -> Result<Vec<&str>> {
        Ok(self
            .cell(id)?
            .vertices
            .iter()
            .map(|&v| self.labels[v].as_str())
            .collect())
    }

    /// Cells of `rank` whose vertex set equals `labels` (as a set).
    pub fn find_cells<S: AsRef<str>>(&self, rank: usize, labels: &[S]) -> Vec<CellId> {
        let Some(mut key) = labels
            .iter()
            .map(|l| self.labels.iter().position(|x| x == l.as_ref()))
            .collect::<Option<Vec<_>>>()
        else {
            return Vec::new();
        };
        key.sort_unstable();
        key.dedup();
        self.lookup
            .get(&(rank, key))
            .map(|ix| ix.iter().map(|&i| CellId::new(rank, i)).collect())
            .unwrap_or_default()
    }

    pub fn find_cell<S: AsRef<str>>(&self, rank: usize, labels: &[S]) -> Option<CellId> {
        self.find_cells(rank, labels).first().copied()
    }

    /// Applies one permutation per rank: the cell at index `i` of rank `r`
    /// moves to index `perms[r][i]`. Orientation data travels with each cell,
    /// so every incidence matrix transforms as `P_{r-1} B_r P_rᵀ` exactly.
    /// Ranks beyond `perms.len()` keep their order.
    pub fn permute(&self, perms: &[Vec<usize>]) -> Result<(Complex, Vec<Vec<usize>>)> {
        let mut full = Vec::with_capacity(self.skeletons.len());
        for (rank, skel) in self.skeletons.iter().enumerate() {
            let perm = match perms.get(rank) {
                Some(p) => {
                    check_bijection(rank, p, skel.len())?;
                    p.clone()
                }
                None => (0..skel.len()).collect(),
            };
            full.push(perm);
        }
        let mut labels = vec![String::new(); self.labels.len()];
        for (i, l) in self.labels.iter().enumerate() {
            labels[full[0][i]] = l.clone();
        }
        let vmap = &full[0];
        let mut skeletons = Vec::with_capacity(self.skeletons.len());
        for (rank, skel) in self.skeletons.iter().enumerate() {
            let mut slots: Vec<Option<Cell>> = vec![None; skel.len()];
            for (i, cell) in skel.iter().enumerate() {
                let mut faces: Vec<(CellId, i8)> = cell
                    .faces
                    .iter()
                    .map(|&(f, s)| (CellId::new(f.rank, full[f.rank][f.index]), s))
                    .collect();
                faces.sort_unstable();
                slots[full[rank][i]] = Some(Cell {
                    vertices: cell.vertices.iter().map(|&v| vmap[v]).collect(),
                    cycle: cell.cycle.as_ref().map(|c| c.iter().map(|&v| vmap[v]).collect()),
                    faces,
                });
            }
            skeletons.push(slots.into_iter().map(|c| c.expect("bijection")).collect());
        }
        let permuted = Complex::assemble(self.kind, labels, skeletons);
        Ok((permuted, full))
    }

    /// Reverses the orientation of the listed cells of `rank`: their
    /// boundary signs flip, and so do the entries referring to them in the
    /// boundaries of their cofaces.
    pub fn flip_orientation(&self, rank: usize, cells: &[usize]) -> Result<Complex> {
        if !self.kind.is_oriented() {
            return Err(Error::OrientationFree {
                what: "orientation flip",
                kind: self.kind,
            });
        }
        let n = self.num_cells(rank);
        if let Some(&bad) = cells.iter().find(|&&i| i >= n) {
            return Err(Error::UnknownCell { rank, index: bad });
        }
        let flipped: HashSet<usize> = cells.iter().copied().collect();
        let mut out = self.clone();
        for &i in &flipped {
            let cell = &mut out.skeletons[rank][i];
            for f in &mut cell.faces {
                f.1 = -f.1;
            }
            if let Some(c) = &mut cell.cycle {
                c.reverse();
            }
        }
        if let Some(cofaces) = out.skeletons.get_mut(rank + 1) {
            for cell in cofaces {
                for f in &mut cell.faces {
                    if f.0.rank == rank && flipped.contains(&f.0.index) {
                        f.1 = -f.1;
                    }
                }
            }
        }
        Ok(out)
    }

    fn assemble(kind: DomainKind, labels: Vec<String>, skeletons: Vec<Vec<Cell>>) -> Self {
        let mut lookup: HashMap<(usize, Vec<usize>), Vec<usize>> = HashMap::new();
        for (rank, skel) in skeletons.iter().enumerate() {
            for (i, cell) in skel.iter().enumerate() {
                lookup.entry((rank, cell.sorted_key())).or_default().push(i);
            }
        }
        Self {
            kind,
            labels,
            skeletons,
            lookup,
        }
    }
}

fn check_bijection(rank: usize, perm: &[usize], len: usize) -> Result<()> {
    let mut seen = vec![false; len];
    if perm.len() != len {
        return Err(Error::NotBijective { rank, len });
    }
    for &p in perm {
        if p >= len || std::mem::replace(&mut seen[p], true) {
            return Err(Error::NotBijective { rank, len });
        }
    }
    Ok(())
}

/// Validates `cells` over `vertices` and returns the finalized complex.
pub fn build_complex<S: AsRef<str>>(
    kind: DomainKind,
    vertices: &[S],
    cells: &[CellSpec],
) -> Result<Complex> {
    Builder::new(kind, vertices)?.build(cells)
}

/// Builds the simplicial complex generated by `top_cells`: every nonempty
/// subset of every top cell becomes a simplex.
pub fn close_downward<S: AsRef<str>, T: AsRef<str>>(
    vertices: &[S],
    top_cells: &[Vec<T>],
) -> Result<Complex> {
    let mut seen: HashSet<Vec<String>> = HashSet::new();
    let mut specs = Vec::new();
    for top in top_cells {
        let mut verts: Vec<String> = top.iter().map(|v| v.as_ref().to_owned()).collect();
        verts.sort();
        verts.dedup();
        if verts.len() > 24 {
            return Err(Error::InvalidArgument(format!(
                "top cell with {} vertices is too large to close",
                verts.len()
            )));
        }
        for mask in 1u32..(1u32 << verts.len()) {
            let subset: Vec<String> = verts
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, v)| v.clone())
                .collect();
            if subset.len() > 1 && seen.insert(subset.clone()) {
                specs.push(CellSpec::simplex(&subset));
            }
        }
    }
    build_complex(DomainKind::Simplicial, vertices, &specs)
}

struct Builder {
    kind: DomainKind,
    labels: Vec<String>,
    position: HashMap<String, usize>,
}

struct Pending {
    spec_index: usize,
    rank: usize,
    key: Vec<usize>,
    cycle: Option<Vec<usize>>,
}

impl Builder {
    fn new<S: AsRef<str>>(kind: DomainKind, vertices: &[S]) -> Result<Self> {
        let mut labels: Vec<String> = vertices.iter().map(|v| v.as_ref().to_owned()).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(kind, format!("duplicate vertex label {:?}", w[0])));
        }
        let position = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(Self {
            kind,
            labels,
            position,
        })
    }

    fn resolve(&self, labels: &[String]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                self.position
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::UnknownVertex(l.clone()))
            })
            .collect()
    }

    fn describe(&self, key: &[usize]) -> String {
        let names: Vec<&str> = key.iter().map(|&v| self.labels[v].as_str()).collect();
        format!("{{{}}}", names.join(","))
    }

    fn build(self, specs: &[CellSpec]) -> Result<Complex> {
        let kind = self.kind;
        let mut pending: Vec<Pending> = Vec::new();
        for (spec_index, spec) in specs.iter().enumerate() {
            let raw = self.resolve(&spec.vertices)?;
            let mut key = raw.clone();
            key.sort_unstable();
            key.dedup();
            if key.len() != raw.len() {
                return Err(Error::invalid(
                    kind,
                    format!("cell {} repeats a vertex", self.describe(&raw)),
                ));
            }
            let cycle = match &spec.cycle {
                Some(c) => Some(self.resolve(c)?),
                None => None,
            };
            self.check_spec(spec, &key, cycle.is_some())?;
            if spec.rank == 0 {
                // vertices are implicit rank-0 cells
                continue;
            }
            let cycle = match (cycle, &spec.boundary) {
                (Some(c), _) => Some(c),
                // an unannotated cellular 2-cell takes its vertex order as the cycle
                (None, None) if kind == DomainKind::Cellular && spec.rank == 2 => Some(raw),
                (None, _) => None,
            };
            pending.push(Pending {
                spec_index,
                rank: spec.rank,
                key,
                cycle,
            });
        }

        let max_rank = match kind {
            DomainKind::Hypergraph => 1,
            _ => pending.iter().map(|p| p.rank).max().unwrap_or(0),
        };
        let mut by_rank: Vec<Vec<Pending>> = (0..=max_rank).map(|_| Vec::new()).collect();
        for p in pending {
            by_rank[p.rank].push(p);
        }
        for group in &mut by_rank {
            group.sort_by(|a, b| a.key.cmp(&b.key).then(a.spec_index.cmp(&b.spec_index)));
        }

        let mut spec_to_cell: HashMap<usize, CellId> = HashMap::new();
        let mut lookup: HashMap<(usize, Vec<usize>), Vec<usize>> = HashMap::new();
        let mut skeletons: Vec<Vec<Cell>> = Vec::with_capacity(max_rank + 1);
        skeletons.push(
            (0..self.labels.len())
                .map(|v| Cell {
                    vertices: vec![v],
                    cycle: None,
                    faces: Vec::new(),
                })
                .collect(),
        );
        for v in 0..self.labels.len() {
            lookup.insert((0, vec![v]), vec![v]);
        }

        for (rank, group) in by_rank.iter().enumerate().skip(1) {
            for (i, p) in group.iter().enumerate() {
                let ids = lookup.entry((rank, p.key.clone())).or_default();
                let unique = match kind {
                    DomainKind::Simplicial | DomainKind::Hypergraph => true,
                    DomainKind::Cellular => rank == 1,
                    DomainKind::Combinatorial => false,
                };
                if unique && !ids.is_empty() {
                    return Err(Error::invalid(
                        kind,
                        format!("duplicate rank-{rank} cell {}", self.describe(&p.key)),
                    ));
                }
                ids.push(i);
                spec_to_cell.insert(p.spec_index, CellId::new(rank, i));
            }
            let mut skel = Vec::with_capacity(group.len());
            for p in group {
                let faces = match kind {
                    DomainKind::Hypergraph => p
                        .key
                        .iter()
                        .map(|&v| (CellId::new(0, v), 1))
                        .collect(),
                    DomainKind::Simplicial => self.simplex_faces(&p.key, &lookup)?,
                    DomainKind::Cellular => {
                        self.cellular_faces(p, &specs[p.spec_index], &skeletons, &lookup, &spec_to_cell)?
                    }
                    DomainKind::Combinatorial => Vec::new(),
                };
                skel.push(Cell {
                    vertices: p.key.clone(),
                    cycle: if kind == DomainKind::Cellular { p.cycle.clone() } else { None },
                    faces,
                });
            }
            skeletons.push(skel);
        }

        if kind == DomainKind::Combinatorial {
            self.combinatorial_cover(&mut skeletons)?;
        }

        Ok(Complex::assemble(kind, self.labels, skeletons))
    }

    fn check_spec(&self, spec: &CellSpec, key: &[usize], has_cycle: bool) -> Result<()> {
        let kind = self.kind;
        let desc = || self.describe(key);
        if key.is_empty() {
            return Err(Error::invalid(kind, "cell with no vertices"));
        }
        if spec.rank == 0 && key.len() != 1 {
            return Err(Error::invalid(
                kind,
                format!("rank-0 cell {} must be a single vertex", desc()),
            ));
        }
        if spec.rank > 0 && key.len() == 1 && kind != DomainKind::Hypergraph {
            return Err(Error::invalid(
                kind,
                format!("singleton {} cannot have rank {}", desc(), spec.rank),
            ));
        }
        if (spec.boundary.is_some() || has_cycle) && kind != DomainKind::Cellular {
            return Err(Error::invalid(
                kind,
                "explicit boundaries and cycles are only accepted for cellular complexes",
            ));
        }
        match kind {
            DomainKind::Hypergraph if spec.rank > 1 => Err(Error::invalid(
                kind,
                format!("hyperedge {} has rank {} (only 0 or 1 allowed)", desc(), spec.rank),
            )),
            DomainKind::Simplicial if key.len() != spec.rank + 1 => Err(Error::invalid(
                kind,
                format!(
                    "simplex {} has {} vertices but rank {} requires {}",
                    desc(),
                    key.len(),
                    spec.rank,
                    spec.rank + 1
                ),
            )),
            DomainKind::Cellular if spec.rank == 1 && key.len() != 2 => Err(Error::invalid(
                kind,
                format!("edge {} must have exactly two vertices", desc()),
            )),
            DomainKind::Cellular if spec.rank >= 2 && has_cycle && spec.boundary.is_some() => {
                Err(Error::invalid(
                    kind,
                    format!("cell {} gives both a cycle and an explicit boundary", desc()),
                ))
            }
            DomainKind::Cellular if spec.rank >= 3 && spec.boundary.is_none() => Err(Error::invalid(
                kind,
                format!("rank-{} cell {} needs an explicit boundary", spec.rank, desc()),
            )),
            DomainKind::Cellular if spec.rank == 1 && (has_cycle || spec.boundary.is_some()) => {
                Err(Error::invalid(kind, format!("edge {} cannot carry a boundary", desc())))
            }
            _ => Ok(()),
        }
    }

    /// Alternating rule: the face omitting the i-th sorted vertex gets `(-1)^i`.
    fn simplex_faces(
        &self,
        key: &[usize],
        lookup: &HashMap<(usize, Vec<usize>), Vec<usize>>,
    ) -> Result<Vec<(CellId, i8)>> {
        let rank = key.len() - 1;
        let mut faces = Vec::with_capacity(key.len());
        for omit in 0..key.len() {
            let face: Vec<usize> = key
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != omit)
                .map(|(_, &v)| v)
                .collect();
            let index = match lookup.get(&(rank - 1, face.clone())) {
                Some(ix) => ix[0],
                None => {
                    return Err(Error::invalid(
                        self.kind,
                        format!(
                            "missing face {} of simplex {} (not downward closed)",
                            self.describe(&face),
                            self.describe(key)
                        ),
                    ))
                }
            };
            let sign = if omit % 2 == 0 { 1 } else { -1 };
            faces.push((CellId::new(rank - 1, index), sign));
        }
        faces.sort_unstable();
        Ok(faces)
    }

    fn cellular_faces(
        &self,
        p: &Pending,
        spec: &CellSpec,
        skeletons: &[Vec<Cell>],
        lookup: &HashMap<(usize, Vec<usize>), Vec<usize>>,
        spec_to_cell: &HashMap<usize, CellId>,
    ) -> Result<Vec<(CellId, i8)>> {
        let kind = self.kind;
        let desc = self.describe(&p.key);
        let mut acc: BTreeMap<CellId, i64> = BTreeMap::new();
        if p.rank == 1 {
            acc.insert(CellId::new(0, p.key[0]), -1);
            acc.insert(CellId::new(0, p.key[1]), 1);
        } else if let Some(cycle) = &p.cycle {
            if cycle.len() < 3 {
                return Err(Error::invalid(
                    kind,
                    format!("2-cell {desc} needs a cycle of at least three vertices"),
                ));
            }
            let mut set = cycle.clone();
            set.sort_unstable();
            set.dedup();
            if set != p.key || set.len() != cycle.len() {
                return Err(Error::invalid(
                    kind,
                    format!("cycle of 2-cell {desc} must visit each of its vertices once"),
                ));
            }
            for i in 0..cycle.len() {
                let (a, b) = (cycle[i], cycle[(i + 1) % cycle.len()]);
                let edge_key = if a < b { vec![a, b] } else { vec![b, a] };
                let Some(ix) = lookup.get(&(1, edge_key.clone())) else {
                    return Err(Error::invalid(
                        kind,
                        format!(
                            "2-cell {desc} uses missing edge {}",
                            self.describe(&edge_key)
                        ),
                    ));
                };
                let sign = if a < b { 1 } else { -1 };
                *acc.entry(CellId::new(1, ix[0])).or_default() += sign;
            }
        } else {
            let entries = spec.boundary.as_deref().unwrap_or_default();
            for (reference, sign) in entries {
                if *sign != 1 && *sign != -1 {
                    return Err(Error::invalid(kind, format!("boundary sign {sign} is not ±1")));
                }
                let id = match reference {
                    BoundaryRef::Spec(s) => spec_to_cell.get(s).copied().ok_or_else(|| {
                        Error::invalid(kind, format!("boundary of {desc} refers to unknown cell #{s}"))
                    })?,
                    BoundaryRef::Vertices(vs) => {
                        let mut key = self.resolve(vs)?;
                        key.sort_unstable();
                        match lookup.get(&(p.rank - 1, key.clone())).map(Vec::as_slice) {
                            Some([only]) => CellId::new(p.rank - 1, *only),
                            Some(_) => {
                                return Err(Error::invalid(
                                    kind,
                                    format!("boundary cell {} is ambiguous", self.describe(&key)),
                                ))
                            }
                            None => {
                                return Err(Error::invalid(
                                    kind,
                                    format!("boundary cell {} does not exist", self.describe(&key)),
                                ))
                            }
                        }
                    }
                };
                if id.rank + 1 != p.rank {
                    return Err(Error::invalid(
                        kind,
                        format!("boundary of rank-{} cell {desc} refers to a rank-{} cell", p.rank, id.rank),
                    ));
                }
                *acc.entry(id).or_default() += i64::from(*sign);
            }
        }
        let faces: Vec<(CellId, i8)> = acc
            .into_iter()
            .filter(|&(_, s)| s != 0)
            .map(|(id, s)| {
                if s.abs() != 1 {
                    Err(Error::invalid(
                        kind,
                        format!("cell {desc} covers a boundary cell with multiplicity {s}"),
                    ))
                } else {
                    Ok((id, s as i8))
                }
            })
            .collect::<Result<_>>()?;
        if p.rank >= 2 {
            if faces.len() < p.rank + 1 {
                return Err(Error::invalid(
                    kind,
                    format!(
                        "rank-{} cell {desc} has {} boundary cells, needs at least {}",
                        p.rank,
                        faces.len(),
                        p.rank + 1
                    ),
                ));
            }
            let union: HashSet<usize> = faces
                .iter()
                .flat_map(|(f, _)| skeletons[f.rank][f.index].vertices.iter().copied())
                .collect();
            let mut union: Vec<usize> = union.into_iter().collect();
            union.sort_unstable();
            if union != p.key {
                return Err(Error::invalid(
                    kind,
                    format!("vertices of {desc} differ from the vertices of its boundary"),
                ));
            }
            // the boundary of the boundary must vanish
            let mut total: BTreeMap<CellId, i64> = BTreeMap::new();
            for (f, s) in &faces {
                for (g, t) in &skeletons[f.rank][f.index].faces {
                    *total.entry(*g).or_default() += i64::from(*s) * i64::from(*t);
                }
            }
            if total.values().any(|&v| v != 0) {
                return Err(Error::invalid(
                    kind,
                    format!("boundary of cell {desc} is not closed"),
                ));
            }
        }
        Ok(faces)
    }

    /// Containment cover with rank monotonicity. Cells sharing a vertex set
    /// may sit at different ranks; the lower one is covered by the higher.
    fn combinatorial_cover(&self, skeletons: &mut [Vec<Cell>]) -> Result<()> {
        let mut flat: Vec<(CellId, Vec<usize>)> = Vec::new();
        for (rank, skel) in skeletons.iter().enumerate() {
            for (i, cell) in skel.iter().enumerate() {
                flat.push((CellId::new(rank, i), cell.vertices.clone()));
            }
        }
        for (x_id, x_verts) in &flat {
            let mut faces = Vec::new();
            for (y_id, y_verts) in &flat {
                if y_id == x_id || !is_subset(y_verts, x_verts) {
                    continue;
                }
                if y_id.rank > x_id.rank && y_verts.len() < x_verts.len() {
                    return Err(Error::invalid(
                        self.kind,
                        format!(
                            "rank monotonicity violated: {} (rank {}) is contained in {} (rank {})",
                            self.describe(y_verts),
                            y_id.rank,
                            self.describe(x_verts),
                            x_id.rank
                        ),
                    ));
                }
                if y_id.rank < x_id.rank {
                    faces.push((*y_id, 1));
                }
            }
            faces.sort_unstable();
            skeletons[x_id.rank][x_id.index].faces = faces;
        }
        Ok(())
    }
}

/// Both slices sorted ascending.
pub(crate) fn is_subset(small: &[usize], big: &[usize]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}
