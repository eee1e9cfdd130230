use std::collections::BTreeMap;

use crate::complex::Complex;
use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

/// Per-rank feature matrices `h^(r)` of shape `n_r x d_r` at layer `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    pub layer: usize,
    features: BTreeMap<usize, DenseMatrix>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, rank: usize, h: DenseMatrix) -> Self {
        self.features.insert(rank, h);
        self
    }

    pub fn insert(&mut self, rank: usize, h: DenseMatrix) -> Option<DenseMatrix> {
        self.features.insert(rank, h)
    }

    pub fn get(&self, rank: usize) -> Option<&DenseMatrix> {
        self.features.get(&rank)
    }

    pub fn remove(&mut self, rank: usize) -> Option<DenseMatrix> {
        self.features.remove(&rank)
    }

    pub fn ranks(&self) -> impl Iterator<Item = usize> + '_ {
        self.features.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &DenseMatrix)> {
        self.features.iter().map(|(&r, h)| (r, h))
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature width `d_r` of every stored rank.
    pub fn dims(&self) -> BTreeMap<usize, usize> {
        self.features.iter().map(|(&r, h)| (r, h.cols())).collect()
    }

    /// True when every stored rank has the same width.
    pub fn is_homogeneous(&self) -> bool {
        let mut widths = self.features.values().map(DenseMatrix::cols);
        match widths.next() {
            Some(first) => widths.all(|w| w == first),
            None => true,
        }
    }

    /// Checks that every stored rank has one row per cell of `complex`.
    pub fn validate(&self, complex: &Complex) -> Result<()> {
        for (&rank, h) in &self.features {
            if rank > complex.max_rank() {
                return Err(Error::RankOutOfRange {
                    rank,
                    max_rank: complex.max_rank(),
                });
            }
            let n = complex.num_cells(rank);
            if h.rows() != n {
                return Err(Error::shape("features", (h.rows(), h.cols()), (n, h.cols())));
            }
        }
        Ok(())
    }

    /// Moves row `i` of rank `r` to `perms[r][i]`; ranks without a
    /// permutation are left in place.
    pub fn permute(&self, perms: &[Vec<usize>]) -> Self {
        let features = self
            .features
            .iter()
            .map(|(&r, h)| match perms.get(r) {
                Some(p) => (r, h.permute_rows(p)),
                None => (r, h.clone()),
            })
            .collect();
        Self {
            layer: self.layer,
            features,
        }
    }

    /// Negates the listed rows of one rank.
    pub fn negate_rows(&self, rank: usize, rows: &[usize]) -> Self {
        let mut out = self.clone();
        if let Some(h) = out.features.get_mut(&rank) {
            for &r in rows {
                h.row_mut(r).iter_mut().for_each(|v| *v = -*v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_complex, CellSpec, DomainKind};

    #[test]
    fn validate_row_counts() {
        let c = build_complex(DomainKind::Hypergraph, &["a", "b"], &[CellSpec::new(1, &["a", "b"])]).unwrap();
        let ok = FeatureStore::new()
            .with(0, DenseMatrix::zeros(2, 3))
            .with(1, DenseMatrix::zeros(1, 5));
        ok.validate(&c).unwrap();
        assert!(!ok.is_homogeneous());
        let bad = FeatureStore::new().with(0, DenseMatrix::zeros(3, 3));
        assert!(bad.validate(&c).is_err());
    }
}
