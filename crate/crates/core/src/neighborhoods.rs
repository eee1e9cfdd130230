//! Neighborhood matrices derived from a complex's incidences.
//!
//! Every matrix is tagged with the rank of the cells it reads from
//! (`source_rank`) and the rank of the cells it writes to (`target_rank`);
//! its shape is `n_target x n_source`. The boundary matrix `B_r` is
//! therefore `n_{r-1} x n_r` with source `r`, and the coboundary `B_rᵀ`
//! goes the other way.
//!
//! Construction stays in exact integer arithmetic; [`normalize`] is the
//! only step that produces real values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complex::{Complex, DomainKind};
use crate::error::{Error, Result};
use crate::sparse::{Csr, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    Boundary,
    Coboundary,
    DownLaplacian,
    UpLaplacian,
    Hodge,
    AdjacencyUp,
    AdjacencyDown,
    Degree,
    IncidenceBetween,
}

impl MatrixKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixKind::Boundary => "boundary",
            MatrixKind::Coboundary => "coboundary",
            MatrixKind::DownLaplacian => "down_laplacian",
            MatrixKind::UpLaplacian => "up_laplacian",
            MatrixKind::Hodge => "hodge",
            MatrixKind::AdjacencyUp => "adjacency_up",
            MatrixKind::AdjacencyDown => "adjacency_down",
            MatrixKind::Degree => "degree",
            MatrixKind::IncidenceBetween => "incidence_between",
        }
    }
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodMatrix<T = i64> {
    pub kind: MatrixKind,
    pub source_rank: usize,
    pub target_rank: usize,
    pub matrix: Csr<T>,
}

impl<T: Scalar> NeighborhoodMatrix<T> {
    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    SymDegree,
    RowStochastic,
}

fn check_rank(c: &Complex, rank: usize) -> Result<()> {
    if rank > c.max_rank() {
        Err(Error::RankOutOfRange {
            rank,
            max_rank: c.max_rank(),
        })
    } else {
        Ok(())
    }
}

fn square(kind: MatrixKind, rank: usize, matrix: Csr<i64>) -> NeighborhoodMatrix {
    NeighborhoodMatrix {
        kind,
        source_rank: rank,
        target_rank: rank,
        matrix,
    }
}

/// `B_r`: entry `(i, j)` is the cover sign when `(r-1)`-cell `i` bounds
/// `r`-cell `j`.
pub fn incidence(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    check_rank(c, rank)?;
    if rank == 0 {
        return Err(Error::InvalidArgument("incidence needs rank >= 1".into()));
    }
    let cells = c.skeleton(rank)?;
    let triplets = cells.iter().enumerate().flat_map(|(j, cell)| {
        cell.faces()
            .iter()
            .filter(|(f, _)| f.rank == rank - 1)
            .map(move |&(f, s)| (f.index, j, i64::from(s)))
    });
    Ok(NeighborhoodMatrix {
        kind: MatrixKind::Boundary,
        source_rank: rank,
        target_rank: rank - 1,
        matrix: Csr::from_triplets(c.num_cells(rank - 1), cells.len(), triplets)?,
    })
}

/// `B_rᵀ`, routing `(r-1)`-cells to the `r`-cells they bound.
pub fn coboundary(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    let b = incidence(c, rank)?;
    Ok(NeighborhoodMatrix {
        kind: MatrixKind::Coboundary,
        source_rank: rank - 1,
        target_rank: rank,
        matrix: b.matrix.transpose(),
    })
}

/// `L↓,r = B_rᵀ B_r`; the zero matrix at rank 0.
pub fn down_laplacian(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    check_rank(c, rank)?;
    let n = c.num_cells(rank);
    let m = if rank == 0 {
        Csr::zeros(n, n)
    } else {
        let b = incidence(c, rank)?.matrix;
        b.transpose().matmul(&b)?
    };
    Ok(square(MatrixKind::DownLaplacian, rank, m))
}

/// `L↑,r = B_{r+1} B_{r+1}ᵀ`; the zero matrix at the top rank.
pub fn up_laplacian(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    check_rank(c, rank)?;
    let n = c.num_cells(rank);
    let m = if rank == c.max_rank() {
        Csr::zeros(n, n)
    } else {
        let b = incidence(c, rank + 1)?.matrix;
        b.matmul(&b.transpose())?
    };
    Ok(square(MatrixKind::UpLaplacian, rank, m))
}

/// `H_r = L↓,r + L↑,r`. Only defined for oriented domains.
pub fn hodge_laplacian(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    if !c.kind().is_oriented() {
        return Err(Error::OrientationFree {
            what: "the Hodge Laplacian",
            kind: c.kind(),
        });
    }
    let down = down_laplacian(c, rank)?.matrix;
    let up = up_laplacian(c, rank)?.matrix;
    Ok(square(MatrixKind::Hodge, rank, down.add(&up)?))
}

/// `D_r`: number of `(r+1)`-cells covering each `r`-cell.
pub fn degree(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    check_rank(c, rank)?;
    let n = c.num_cells(rank);
    let mut counts = vec![0i64; n];
    if rank < c.max_rank() {
        let b = incidence(c, rank + 1)?.matrix;
        for (i, count) in counts.iter_mut().enumerate() {
            *count = b.row_nnz(i) as i64;
        }
    }
    Ok(square(MatrixKind::Degree, rank, Csr::diagonal(&counts)))
}

/// Upper adjacency. Oriented domains use `D_r - L↑,r`, whose off-diagonal
/// entries carry the orientation products; orientation-free domains use
/// `L↑,r - D_r`, the count of shared cofaces.
pub fn adjacency_up(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    let lap = up_laplacian(c, rank)?.matrix;
    let deg = degree(c, rank)?.matrix;
    let m = if c.kind().is_oriented() {
        deg.sub(&lap)?
    } else {
        lap.sub(&deg)?
    };
    Ok(square(MatrixKind::AdjacencyUp, rank, m))
}

/// Lower adjacency, using the diagonal of `L↓,r` as the lower degree.
pub fn adjacency_down(c: &Complex, rank: usize) -> Result<NeighborhoodMatrix> {
    let lap = down_laplacian(c, rank)?.matrix;
    let deg = Csr::diagonal(&lap.diagonal_values());
    let m = if c.kind().is_oriented() {
        deg.sub(&lap)?
    } else {
        lap.sub(&deg)?
    };
    Ok(square(MatrixKind::AdjacencyDown, rank, m))
}

/// 0/1 containment between `low`-cells (rows) and `high`-cells (columns).
pub fn incidence_between(c: &Complex, low: usize, high: usize) -> Result<NeighborhoodMatrix> {
    if low >= high {
        return Err(Error::InvalidArgument(format!(
            "incidence_between needs low < high, got {low} and {high}"
        )));
    }
    check_rank(c, high)?;
    let matrix = match c.kind() {
        DomainKind::Hypergraph | DomainKind::Combinatorial => {
            let cells = c.skeleton(high)?;
            let triplets = cells.iter().enumerate().flat_map(|(j, cell)| {
                cell.faces()
                    .iter()
                    .filter(|(f, _)| f.rank == low)
                    .map(move |&(f, _)| (f.index, j, 1i64))
            });
            Csr::from_triplets(c.num_cells(low), cells.len(), triplets)?
        }
        DomainKind::Simplicial | DomainKind::Cellular => {
            let mut acc = incidence(c, low + 1)?.matrix.map(i64::abs);
            for r in low + 2..=high {
                let step = incidence(c, r)?.matrix.map(i64::abs);
                acc = acc.matmul(&step)?;
            }
            acc.map(|v| i64::from(v != 0))
        }
    };
    Ok(NeighborhoodMatrix {
        kind: MatrixKind::IncidenceBetween,
        source_rank: high,
        target_rank: low,
        matrix,
    })
}

/// Builds a matrix by kind. `rank` is the rank the kind is indexed by
/// (`B_r`, `L↑,r`, ...); `incidence_between` also needs `high`.
pub fn matrix(c: &Complex, kind: MatrixKind, rank: usize, high: Option<usize>) -> Result<NeighborhoodMatrix> {
    match kind {
        MatrixKind::Boundary => incidence(c, rank),
        MatrixKind::Coboundary => coboundary(c, rank),
        MatrixKind::DownLaplacian => down_laplacian(c, rank),
        MatrixKind::UpLaplacian => up_laplacian(c, rank),
        MatrixKind::Hodge => hodge_laplacian(c, rank),
        MatrixKind::AdjacencyUp => adjacency_up(c, rank),
        MatrixKind::AdjacencyDown => adjacency_down(c, rank),
        MatrixKind::Degree => degree(c, rank),
        MatrixKind::IncidenceBetween => {
            let high = high.ok_or_else(|| {
                Error::InvalidArgument("incidence_between needs a second rank".into())
            })?;
            incidence_between(c, rank, high)
        }
    }
}

/// Rescales a matrix. `SymDegree` computes `D_row^{-1/2} M D_col^{-1/2}`
/// with degrees taken as absolute row/column sums; `RowStochastic` divides
/// each row by its absolute sum. Zero-degree rows and columns stay zero.
pub fn normalize_csr(m: &Csr<f64>, scheme: Normalization) -> Csr<f64> {
    match scheme {
        Normalization::None => m.clone(),
        Normalization::SymDegree => {
            let mut row_deg = vec![0.0; m.rows()];
            let mut col_deg = vec![0.0; m.cols()];
            for (r, c, v) in m.triplets() {
                row_deg[r] += v.abs();
                col_deg[c] += v.abs();
            }
            let inv = |d: f64| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 };
            let values = m
                .triplets()
                .map(|(r, c, v)| v * inv(row_deg[r]) * inv(col_deg[c]))
                .collect();
            m.with_values(values)
        }
        Normalization::RowStochastic => {
            let values = m
                .triplets()
                .map(|(r, _, v)| {
                    let total: f64 = m.row(r).map(|(_, x)| x.abs()).sum();
                    v / total
                })
                .collect();
            m.with_values(values)
        }
    }
}

pub fn normalize(m: &NeighborhoodMatrix, scheme: Normalization) -> NeighborhoodMatrix<f64> {
    NeighborhoodMatrix {
        kind: m.kind,
        source_rank: m.source_rank,
        target_rank: m.target_rank,
        matrix: normalize_csr(&m.matrix.to_f64(), scheme),
    }
}

/// Names a matrix on the command line: `kind:rank` or
/// `incidence_between:low:high`, plus the short forms `B1`, `Bt1`, `Ldown1`,
/// `Lup0`, `H1`, `Aup0`, `Adown1`, `D0` (underscores allowed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixRequest {
    pub kind: MatrixKind,
    pub rank: usize,
    pub high: Option<usize>,
}

impl MatrixRequest {
    pub fn build(&self, c: &Complex) -> Result<NeighborhoodMatrix> {
        matrix(c, self.kind, self.rank, self.high)
    }
}

impl FromStr for MatrixRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unrecognized matrix name {s:?}"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        if let Some((head, tail)) = s.split_once(':') {
            let kind = match head {
                "boundary" => MatrixKind::Boundary,
                "coboundary" => MatrixKind::Coboundary,
                "down_laplacian" => MatrixKind::DownLaplacian,
                "up_laplacian" => MatrixKind::UpLaplacian,
                "hodge" => MatrixKind::Hodge,
                "adjacency_up" => MatrixKind::AdjacencyUp,
                "adjacency_down" => MatrixKind::AdjacencyDown,
                "degree" => MatrixKind::Degree,
                "incidence_between" => MatrixKind::IncidenceBetween,
                _ => return Err(bad()),
            };
            let (rank, high) = match tail.split_once(':') {
                Some((a, b)) => (num(a)?, Some(num(b)?)),
                None => (num(tail)?, None),
            };
            if (kind == MatrixKind::IncidenceBetween) != high.is_some() {
                return Err(bad());
            }
            return Ok(Self { kind, rank, high });
        }
        let prefixes = [
            ("Bt", MatrixKind::Coboundary),
            ("Ldown", MatrixKind::DownLaplacian),
            ("Lup", MatrixKind::UpLaplacian),
            ("Aup", MatrixKind::AdjacencyUp),
            ("Adown", MatrixKind::AdjacencyDown),
            ("B", MatrixKind::Boundary),
            ("H", MatrixKind::Hodge),
            ("D", MatrixKind::Degree),
        ];
        // `B_1` and `L_up_0` are accepted as spellings of `B1` and `Lup0`
        let compact = s.replace('_', "");
        for (prefix, kind) in prefixes {
            if let Some(rest) = compact.strip_prefix(prefix) {
                if let Ok(rank) = rest.parse::<usize>() {
                    return Ok(Self { kind, rank, high: None });
                }
            }
        }
        Err(bad())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_complex, close_downward, CellSpec};

    fn dense(m: &NeighborhoodMatrix) -> Vec<i64> {
        m.matrix.to_dense()
    }

    fn triangle_graph() -> Complex {
        close_downward(&["a", "b", "c"], &[vec!["a", "b"], vec!["b", "c"], vec!["a", "c"]]).unwrap()
    }

    fn filled_triangle() -> Complex {
        close_downward(&["a", "b", "c"], &[vec!["a", "b", "c"]]).unwrap()
    }

    fn dense_mul(a: &[i64], b: &[i64], n: usize, k: usize, m: usize) -> Vec<i64> {
        let mut out = vec![0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[i * m + j] = (0..k).map(|t| a[i * k + t] * b[t * m + j]).sum();
            }
        }
        out
    }

    fn dense_t(a: &[i64], rows: usize, cols: usize) -> Vec<i64> {
        let mut out = vec![0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = a[r * cols + c];
            }
        }
        out
    }

    #[test]
    fn edge_column_signs() {
        let c = filled_triangle();
        let b1 = incidence(&c, 1).unwrap();
        assert_eq!(b1.shape(), (3, 3));
        // column ab
        assert_eq!((b1.matrix.get(0, 0), b1.matrix.get(1, 0), b1.matrix.get(2, 0)), (-1, 1, 0));
    }

    #[test]
    fn face_column_alternates() {
        let c = filled_triangle();
        let b2 = incidence(&c, 2).unwrap();
        // edges in order ab, ac, bc; omitting a,b,c in turn gives bc:+1, ac:-1, ab:+1
        assert_eq!(dense(&b2), vec![1, -1, 1]);
    }

    #[test]
    fn empty_skeleton_shape() {
        let hg = build_complex(DomainKind::Hypergraph, &["a", "b"], &[] as &[CellSpec]).unwrap();
        assert_eq!(incidence(&hg, 1).unwrap().shape(), (2, 0));
        assert!(incidence(&hg, 2).is_err());
    }

    #[test]
    fn coboundary_is_transpose() {
        let hg = build_complex(
            DomainKind::Hypergraph,
            &["a", "b", "c", "d"],
            &[CellSpec::new(1, &["a", "b", "c"]), CellSpec::new(1, &["c", "d"])],
        )
        .unwrap();
        let b = incidence(&hg, 1).unwrap();
        let cb = coboundary(&hg, 1).unwrap();
        assert_eq!(b.shape(), (4, 2));
        assert_eq!(cb.shape(), (2, 4));
        assert_eq!(cb.matrix.transpose(), b.matrix);
    }

    #[test]
    fn laplacians_match_dense_products() {
        for c in [triangle_graph(), filled_triangle()] {
            for r in 0..=c.max_rank() {
                let n = c.num_cells(r);
                let down = dense(&down_laplacian(&c, r).unwrap());
                let up = dense(&up_laplacian(&c, r).unwrap());
                if r > 0 {
                    let b = dense(&incidence(&c, r).unwrap());
                    let m = c.num_cells(r - 1);
                    assert_eq!(down, dense_mul(&dense_t(&b, m, n), &b, n, m, n));
                } else {
                    assert!(down.iter().all(|&v| v == 0));
                }
                if r < c.max_rank() {
                    let b = dense(&incidence(&c, r + 1).unwrap());
                    let m = c.num_cells(r + 1);
                    assert_eq!(up, dense_mul(&b, &dense_t(&b, n, m), n, m, n));
                } else {
                    assert!(up.iter().all(|&v| v == 0));
                }
            }
        }
    }

    #[test]
    fn graph_laplacian_examples() {
        let g = triangle_graph();
        assert!(down_laplacian(&g, 1).unwrap().matrix.diagonal_values().iter().all(|&d| d == 2));
        assert_eq!(dense(&up_laplacian(&g, 0).unwrap()), vec![2, -1, -1, -1, 2, -1, -1, -1, 2]);
        assert_eq!(up_laplacian(&g, 1).unwrap().matrix.nnz(), 0);
        let ft = filled_triangle();
        assert_eq!(up_laplacian(&ft, 1).unwrap().matrix.diagonal_values(), vec![1, 1, 1]);
        let edge = close_downward(&["a", "b"], &[vec!["a", "b"]]).unwrap();
        assert_eq!(dense(&down_laplacian(&edge, 1).unwrap()), vec![2]);
    }

    #[test]
    fn hodge_symmetric_and_oriented_only() {
        let ft = filled_triangle();
        assert!(hodge_laplacian(&ft, 1).unwrap().matrix.is_symmetric());
        let hg = build_complex(DomainKind::Hypergraph, &["a"], &[CellSpec::new(1, &["a"])]).unwrap();
        assert!(matches!(hodge_laplacian(&hg, 0), Err(Error::OrientationFree { .. })));
    }

    #[test]
    fn degrees() {
        assert_eq!(degree(&triangle_graph(), 0).unwrap().matrix.diagonal_values(), vec![2, 2, 2]);
        let hg = build_complex(
            DomainKind::Hypergraph,
            &["a", "b", "c", "d"],
            &[CellSpec::new(1, &["a", "b", "c"]), CellSpec::new(1, &["c", "d"])],
        )
        .unwrap();
        assert_eq!(degree(&hg, 0).unwrap().matrix.diagonal_values(), vec![1, 1, 2, 1]);
        assert_eq!(degree(&hg, 1).unwrap().matrix.nnz(), 0);
    }

    #[test]
    fn adjacency_examples() {
        let g = triangle_graph();
        assert_eq!(dense(&adjacency_up(&g, 0).unwrap()), vec![0, 1, 1, 1, 0, 1, 1, 1, 0]);
        let lonely = close_downward(&["a", "b", "c"], &[vec!["a", "b"]]).unwrap();
        let a = adjacency_up(&lonely, 0).unwrap();
        assert_eq!(a.matrix.row_nnz(2), 0);
        // path a-b-c: ab = (-1 a, +1 b), bc = (-1 b, +1 c); shared vertex b gives L↓ = (+1)(-1) = -1
        let path = close_downward(&["a", "b", "c"], &[vec!["a", "b"], vec!["b", "c"]]).unwrap();
        let ad = adjacency_down(&path, 1).unwrap();
        assert_eq!(down_laplacian(&path, 1).unwrap().matrix.get(0, 1), -1);
        assert_eq!(ad.matrix.get(0, 1), 1);
        assert!(ad.matrix.is_symmetric());
    }

    #[test]
    fn incidence_between_examples() {
        let ft = filled_triangle();
        let m = incidence_between(&ft, 0, 2).unwrap();
        assert_eq!(dense(&m), vec![1, 1, 1]);
        assert!(incidence_between(&ft, 1, 1).is_err());
        let ccc = build_complex(
            DomainKind::Combinatorial,
            &["a", "b", "c"],
            &[CellSpec::new(3, &["a", "b"])],
        )
        .unwrap();
        let m = incidence_between(&ccc, 0, 3).unwrap();
        assert_eq!(dense(&m), vec![1, 1, 0]);
    }

    #[test]
    fn normalization_schemes() {
        let g = triangle_graph();
        let a = adjacency_up(&g, 0).unwrap();
        assert_eq!(normalize(&a, Normalization::None).matrix, a.matrix.to_f64());
        let rs = normalize(&a, Normalization::RowStochastic);
        assert!(rs.matrix.values().iter().all(|&v| v == 0.5));
        let lonely = close_downward(&["a", "b", "c"], &[vec!["a", "b"]]).unwrap();
        let a = adjacency_up(&lonely, 0).unwrap();
        for scheme in [Normalization::SymDegree, Normalization::RowStochastic] {
            let n = normalize(&a, scheme);
            assert_eq!(n.matrix.row_nnz(2), 0);
            assert!(n.matrix.values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn parse_matrix_names() {
        let r: MatrixRequest = "B1".parse().unwrap();
        assert_eq!((r.kind, r.rank), (MatrixKind::Boundary, 1));
        let r: MatrixRequest = "incidence_between:0:2".parse().unwrap();
        assert_eq!(r.high, Some(2));
        assert_eq!("Lup0".parse::<MatrixRequest>().unwrap().kind, MatrixKind::UpLaplacian);
        assert!("nonsense".parse::<MatrixRequest>().is_err());
        assert!("incidence_between:1".parse::<MatrixRequest>().is_err());
    }
}
