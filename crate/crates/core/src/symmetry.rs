//! Numerical checks of the symmetries a layer must respect.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::complex::Complex;
use crate::error::{Error, Result};
use crate::features::FeatureStore;

/// One uniformly random permutation per rank of `c`.
pub fn random_permutations<R: Rng + ?Sized>(c: &Complex, rng: &mut R) -> Vec<Vec<usize>> {
    (0..=c.max_rank())
        .map(|r| {
            let mut p: Vec<usize> = (0..c.num_cells(r)).collect();
            p.shuffle(rng);
            p
        })
        .collect()
}

/// Largest entrywise difference between two stores with the same ranks.
pub fn max_deviation(a: &FeatureStore, b: &FeatureStore) -> Result<f64> {
    let ra: Vec<usize> = a.ranks().collect();
    let rb: Vec<usize> = b.ranks().collect();
    if ra != rb {
        return Err(Error::InvalidArgument(format!("feature ranks differ: {ra:?} vs {rb:?}")));
    }
    let mut worst: f64 = 0.0;
    for (r, x) in a.iter() {
        let y = b.get(r).expect("same ranks");
        if x.shape() != y.shape() {
            return Err(Error::shape("max_deviation", x.shape(), y.shape()));
        }
        worst = worst.max(x.max_abs_diff(y));
    }
    Ok(worst)
}

/// Max deviation between `f(P c, P h)` and `P f(c, h)`.
pub fn permutation_deviation<F>(c: &Complex, h: &FeatureStore, perms: &[Vec<usize>], f: F) -> Result<f64>
where
    F: Fn(&Complex, &FeatureStore) -> Result<FeatureStore>,
{
    let (pc, full) = c.permute(perms)?;
    let expected = f(c, h)?.permute(&full);
    let actual = f(&pc, &h.permute(&full))?;
    max_deviation(&actual, &expected)
}

/// Max deviation between `f` on a complex with the listed `rank` cells
/// flipped (and their input rows negated) and `f` on the original with
/// the same output rows negated.
pub fn orientation_deviation<F>(c: &Complex, h: &FeatureStore, rank: usize, cells: &[usize], f: F) -> Result<f64>
where
    F: Fn(&Complex, &FeatureStore) -> Result<FeatureStore>,
{
    let flipped = c.flip_orientation(rank, cells)?;
    let expected = f(c, h)?.negate_rows(rank, cells);
    let actual = f(&flipped, &h.negate_rows(rank, cells))?;
    max_deviation(&actual, &expected)
}

/// Ranks whose output equals the input bit for bit.
pub fn untouched_ranks(input: &FeatureStore, output: &FeatureStore) -> Vec<usize> {
    input
        .iter()
        .filter(|(r, x)| output.get(*r) == Some(*x))
        .map(|(r, _)| r)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ModelConfig};
    use crate::synthetic::{random_features, random_simplicial};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scone_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = random_simplicial(8, 2, &mut rng);
        let h = FeatureStore::new().with(1, random_features(&c, 2, &mut rng).get(1).unwrap().clone());
        let cfg = ModelConfig::from_json(r#"{"layers": [{"type": "scone", "in_dim": 2, "out_dim": 3}]}"#).unwrap();
        let m = Model::init(cfg, &c, &h.dims(), 1).unwrap();
        let f = |c: &Complex, h: &FeatureStore| m.forward(c, h).map(|o| o.features);
        let perms = random_permutations(&c, &mut rng);
        assert!(permutation_deviation(&c, &h, &perms, f).unwrap() < 1e-12);
        assert!(orientation_deviation(&c, &h, 1, &[0, 2], f).unwrap() < 1e-12);
    }

    #[test]
    fn non_equivariant_map_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_simplicial(8, 2, &mut rng);
        let h = random_features(&c, 1, &mut rng);
        // adds each row's index, which does not commute with relabeling
        let f = |_: &Complex, h: &FeatureStore| {
            let mut out = h.clone();
            for r in h.ranks() {
                let mut x = h.get(r).unwrap().clone();
                for i in 0..x.rows() {
                    x.set(i, 0, x.get(i, 0) + i as f64);
                }
                out.insert(r, x);
            }
            Ok(out)
        };
        let perms = random_permutations(&c, &mut rng);
        assert!(permutation_deviation(&c, &h, &perms, f).unwrap() > 0.5);
    }
}
