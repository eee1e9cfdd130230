//! Rank and Betti-number diagnostics for oriented complexes.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::complex::Complex;
use crate::error::{Error, Result};
use crate::neighborhoods::{hodge_laplacian, incidence};
use crate::sparse::Csr;

/// Matrices with more stored entries than this are ranked numerically.
pub const EXACT_RANK_NNZ_LIMIT: usize = 2_000;

/// Rank over the rationals by sparse Gaussian elimination, or by singular
/// values above `1e-10 * σ_max` when the matrix is too large.
pub fn rank(m: &Csr<i64>) -> usize {
    if m.nnz() <= EXACT_RANK_NNZ_LIMIT {
        exact_rank(m)
    } else {
        numeric_rank(m)
    }
}

pub fn exact_rank(m: &Csr<i64>) -> usize {
    let mut rows: Vec<BTreeMap<usize, BigRational>> = (0..m.rows())
        .map(|r| {
            m.row(r)
                .map(|(c, v)| (c, BigRational::from_integer(BigInt::from(v))))
                .collect()
        })
        .filter(|row: &BTreeMap<usize, BigRational>| !row.is_empty())
        .collect();
    let mut rank = 0;
    while !rows.is_empty() {
        // pivot on the leading column of the shortest row to limit fill-in
        let (pi, _) = rows
            .iter()
            .enumerate()
            .min_by_key(|(i, r)| (r.len(), *i))
            .expect("nonempty");
        let pivot = rows.swap_remove(pi);
        let (&col, pval) = pivot.iter().next().expect("rows are kept nonempty");
        let pval = pval.clone();
        rank += 1;
        for row in &mut rows {
            let Some(v) = row.get(&col).cloned() else { continue };
            let factor = v / &pval;
            for (&c, pv) in &pivot {
                let updated = row.get(&c).cloned().unwrap_or_else(BigRational::zero) - &factor * pv;
                if updated.is_zero() {
                    row.remove(&c);
                } else {
                    row.insert(c, updated);
                }
            }
        }
        rows.retain(|r| !r.is_empty());
    }
    rank
}

pub fn numeric_rank(m: &Csr<i64>) -> usize {
    if m.rows() == 0 || m.cols() == 0 {
        return 0;
    }
    let dense = DMatrix::from_row_slice(m.rows(), m.cols(), &m.to_f64().to_dense());
    let sv = dense.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > 1e-10 * max).count()
}

/// `β_r = n_r - rank(B_r) - rank(B_{r+1})`.
pub fn betti(c: &Complex, r: usize) -> Result<usize> {
    if !c.kind().is_oriented() {
        return Err(Error::OrientationFree {
            what: "homology",
            kind: c.kind(),
        });
    }
    if r > c.max_rank() {
        return Err(Error::RankOutOfRange {
            rank: r,
            max_rank: c.max_rank(),
        });
    }
    let down = if r == 0 { 0 } else { rank(&incidence(c, r)?.matrix) };
    let up = if r == c.max_rank() {
        0
    } else {
        rank(&incidence(c, r + 1)?.matrix)
    };
    Ok(c.num_cells(r) - down - up)
}

pub fn betti_numbers(c: &Complex) -> Result<Vec<usize>> {
    (0..=c.max_rank()).map(|r| betti(c, r)).collect()
}

/// Number of eigenvalues of `H_r` with magnitude at most `tol`.
pub fn hodge_kernel_dim(c: &Complex, r: usize, tol: f64) -> Result<usize> {
    let h = hodge_laplacian(c, r)?.matrix;
    let n = h.rows();
    if n == 0 {
        return Ok(0);
    }
    let dense = DMatrix::from_row_slice(n, n, &h.to_f64().to_dense());
    let eig = dense.symmetric_eigenvalues();
    Ok(eig.iter().filter(|v| v.abs() <= tol).count())
}

/// Checks `B_r B_{r+1} = 0` for every consecutive pair; returns the first
/// offending rank.
pub fn boundary_of_boundary_vanishes(c: &Complex) -> Result<Option<usize>> {
    for r in 1..c.max_rank() {
        let prod = incidence(c, r)?.matrix.matmul(&incidence(c, r + 1)?.matrix)?;
        if prod.values().iter().any(|v| !v.is_zero()) {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_complex, close_downward, CellSpec, DomainKind};

    #[test]
    fn triangle_cycle_and_filled() {
        let c3 = close_downward(&["a", "b", "c"], &[vec!["a", "b"], vec!["b", "c"], vec!["a", "c"]]).unwrap();
        assert_eq!(betti_numbers(&c3).unwrap(), vec![1, 1]);
        let ft = close_downward(&["a", "b", "c"], &[vec!["a", "b", "c"]]).unwrap();
        assert_eq!(betti_numbers(&ft).unwrap(), vec![1, 0, 0]);
        assert_eq!(hodge_kernel_dim(&ft, 1, 1e-8).unwrap(), 0);
    }

    #[test]
    fn square_cycle_has_one_harmonic_flow() {
        let c4 = close_downward(
            &["a", "b", "c", "d"],
            &[vec!["a", "b"], vec!["b", "c"], vec!["c", "d"], vec!["a", "d"]],
        )
        .unwrap();
        assert_eq!(hodge_kernel_dim(&c4, 1, 1e-8).unwrap(), 1);
        assert_eq!(betti(&c4, 1).unwrap(), 1);
    }

    #[test]
    fn exact_and_numeric_rank_agree() {
        let m = Csr::from_dense(3, 3, &[1i64, 2, 3, 2, 4, 6, 1, 0, 1]);
        assert_eq!(exact_rank(&m), 2);
        assert_eq!(numeric_rank(&m), 2);
        assert_eq!(exact_rank(&Csr::<i64>::zeros(4, 2)), 0);
    }

    #[test]
    fn orientation_free_rejected() {
        let hg = build_complex(DomainKind::Hypergraph, &["a"], &[] as &[CellSpec]).unwrap();
        assert!(matches!(betti(&hg, 0), Err(Error::OrientationFree { .. })));
    }
}
