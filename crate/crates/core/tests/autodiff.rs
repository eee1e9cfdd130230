//! Finite-difference checks for every differentiable tape operation.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use topomp::sparse::Csr;
use topomp::tensor::{grad_check, ParamStore, Reduce, Tape, Var};
use topomp::{DenseMatrix, Result};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

/// Random parameters of the given shapes; the loss is `sum(f(params) ∘ W)`
/// for a fixed random `W`, so no gradient cancels by symmetry.
fn check(shapes: &[(usize, usize)], f: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let ids: Vec<_> = shapes
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| store.insert(format!("p{i}"), DenseMatrix::uniform(r, c, 1.0, &mut rng)).unwrap())
        .collect();
    grad_check(&mut store, STEP, |tape, store| {
        let vars: Vec<Var> = ids.iter().map(|&id| tape.param(store, id)).collect();
        let out = f(tape, &vars)?;
        let (r, c) = tape.shape(out);
        let w = tape.constant(DenseMatrix::uniform(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(99)));
        let prod = tape.hadamard(out, w)?;
        Ok(tape.sum(prod))
    })
    .unwrap()
}

fn pattern() -> Arc<Csr<f64>> {
    Arc::new(Csr::from_triplets(3, 4, vec![(0, 0, 1.0), (0, 2, -2.0), (1, 1, 0.5), (2, 0, 1.5), (2, 3, 1.0)]).unwrap())
}

#[test]
fn dense_algebra() {
    assert!(check(&[(3, 4), (4, 2)], |t, v| t.matmul(v[0], v[1])) < TOL);
    assert!(check(&[(3, 2), (3, 2)], |t, v| t.add(v[0], v[1])) < TOL);
    assert!(check(&[(3, 2), (3, 2)], |t, v| t.sub(v[0], v[1])) < TOL);
    assert!(check(&[(3, 2), (3, 2)], |t, v| t.hadamard(v[0], v[1])) < TOL);
    assert!(check(&[(3, 2)], |t, v| Ok(t.scale(v[0], -0.7))) < TOL);
    assert!(check(&[(3, 2), (1, 2)], |t, v| t.add_row_bias(v[0], v[1])) < TOL);
}

#[test]
fn sparse_products() {
    assert!(check(&[(4, 2)], |t, v| t.spmm(pattern(), v[0])) < TOL);
    assert!(check(&[(5, 1), (4, 2)], |t, v| t.spmm_values(pattern(), v[0], v[1])) < TOL);
}

#[test]
fn activations() {
    assert!(check(&[(4, 3)], |t, v| Ok(t.relu(v[0]))) < TOL);
    assert!(check(&[(4, 3)], |t, v| Ok(t.tanh(v[0]))) < TOL);
    assert!(check(&[(4, 3)], |t, v| Ok(t.sigmoid(v[0]))) < TOL);
    assert!(check(&[(4, 3)], |t, v| Ok(t.leaky_relu(v[0], 0.2))) < TOL);
    assert!(check(&[(4, 3)], |t, v| Ok(t.softmax_rows(v[0]))) < TOL);
}

#[test]
fn shape_ops() {
    assert!(check(&[(3, 2), (3, 1)], |t, v| t.concat_cols(&[v[0], v[1]])) < TOL);
    assert!(check(&[(3, 2), (1, 2)], |t, v| t.concat_rows(&[v[0], v[1]])) < TOL);
    assert!(check(&[(3, 4)], |t, v| t.reshape(v[0], 2, 6)) < TOL);
    assert!(check(&[(3, 2)], |t, v| t.gather_rows(v[0], Arc::new(vec![2, 0, 2, 1]))) < TOL);
    assert!(check(&[(3, 2), (3, 1)], |t, v| t.scale_rows(v[0], v[1])) < TOL);
}

#[test]
fn reductions() {
    let offsets = Arc::new(vec![0, 2, 2, 5]);
    for agg in [Reduce::Sum, Reduce::Mean, Reduce::Max] {
        assert!(check(&[(5, 2)], |t, v| t.segment_reduce(v[0], offsets.clone(), agg)) < TOL);
        assert!(check(&[(4, 2)], |t, v| t.group_reduce(v[0], &[vec![0, 3], vec![1, 2, 3], vec![]], agg)) < TOL);
        assert!(check(&[(4, 3)], |t, v| t.reduce_rows(v[0], agg)) < TOL);
    }
    assert!(check(&[(5, 1)], |t, v| t.segment_softmax(v[0], offsets.clone())) < TOL);
    assert!(check(&[(3, 2)], |t, v| Ok(t.sum(v[0]))) < TOL);
}

#[test]
fn losses() {
    assert!(check(&[(3, 2), (3, 2)], |t, v| t.mse(v[0], v[1])) < TOL);
    assert!(check(&[(4, 3)], |t, v| t.cross_entropy(v[0], Arc::new(vec![0, 2, 1, 2]))) < TOL);
}

#[test]
fn composite_attention_path() {
    // leaky scores, segment softmax, then a weighted sparse product
    let p = pattern();
    let offsets = Arc::new(p.row_ptr().to_vec());
    let cols = Arc::new(p.col_indices().to_vec());
    let err = check(&[(4, 2), (2, 1)], |t, v| {
        let proj = t.matmul(v[0], v[1])?;
        let per_edge = t.gather_rows(proj, cols.clone())?;
        let scores = t.leaky_relu(per_edge, 0.2);
        let alpha = t.segment_softmax(scores, offsets.clone())?;
        t.spmm_values(p.clone(), alpha, v[0])
    });
    assert!(err < TOL, "{err}");
}
