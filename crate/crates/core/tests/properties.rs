//! Randomized invariants over generated complexes.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use topomp::homology::{betti_numbers, boundary_of_boundary_vanishes, hodge_kernel_dim};
use topomp::io::{complex_from_json, complex_to_json};
use topomp::neighborhoods::{incidence, up_laplacian};
use topomp::symmetry::random_permutations;
use topomp::synthetic::{random_complex, random_features};
use topomp::DomainKind;

const KINDS: [DomainKind; 4] = [
    DomainKind::Hypergraph,
    DomainKind::Simplicial,
    DomainKind::Cellular,
    DomainKind::Combinatorial,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundary_squares_to_zero(seed in any::<u64>(), oriented in prop::sample::select(vec![DomainKind::Simplicial, DomainKind::Cellular])) {
        let c = random_complex(oriented, 12, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(boundary_of_boundary_vanishes(&c).unwrap(), None);
    }

    #[test]
    fn json_roundtrip_is_exact(seed in any::<u64>(), kind in prop::sample::select(KINDS.to_vec())) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_complex(kind, 10, &mut rng);
        let h = random_features(&c, 2, &mut rng);
        let text = complex_to_json(&c, &h).unwrap();
        let (c2, h2) = complex_from_json(&text).unwrap();
        prop_assert_eq!(&c2, &c);
        prop_assert_eq!(&h2, &h);
        prop_assert_eq!(complex_to_json(&c2, &h2).unwrap(), text);
    }

    #[test]
    fn permuted_complex_reads_back_canonical(seed in any::<u64>(), kind in prop::sample::select(KINDS.to_vec())) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_complex(kind, 10, &mut rng);
        let perms = random_permutations(&c, &mut rng);
        let (p, _) = c.permute(&perms).unwrap();
        let (back, _) = complex_from_json(&complex_to_json(&p, &Default::default()).unwrap()).unwrap();
        prop_assert_eq!(back.counts(), c.counts());
        // vertex relabeling can change the canonical order, never the shape
        for r in 1..=c.max_rank() {
            let mut a: Vec<usize> = (0..c.num_cells(r)).map(|i| c.cell(topomp::CellId::new(r, i)).unwrap().size()).collect();
            let mut b: Vec<usize> = (0..back.num_cells(r)).map(|i| back.cell(topomp::CellId::new(r, i)).unwrap().size()).collect();
            a.sort_unstable();
            b.sort_unstable();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn hodge_kernel_matches_betti(seed in any::<u64>()) {
        let c = random_complex(DomainKind::Simplicial, 9, &mut ChaCha8Rng::seed_from_u64(seed));
        let betti = betti_numbers(&c).unwrap();
        for (r, b) in betti.iter().enumerate() {
            prop_assert_eq!(hodge_kernel_dim(&c, r, 1e-8).unwrap(), *b);
        }
    }

    #[test]
    fn laplacians_are_symmetric_psd_diagonal(seed in any::<u64>(), kind in prop::sample::select(KINDS.to_vec())) {
        let c = random_complex(kind, 10, &mut ChaCha8Rng::seed_from_u64(seed));
        for r in 0..c.max_rank() {
            let l = up_laplacian(&c, r).unwrap().matrix;
            prop_assert!(l.is_symmetric());
            prop_assert!(l.diagonal_values().iter().all(|&d| d >= 0));
            let b = incidence(&c, r + 1).unwrap().matrix;
            prop_assert_eq!(b.shape(), (c.num_cells(r), c.num_cells(r + 1)));
        }
    }
}
