//! Mask pipeline properties on random graphs and the hand-computed K2 chain.

use grafourier::ndarray::{array, Array2};
use grafourier::sfmask::{self, build_components, build_mask};
use grafourier::spectral::decompose;
use grafourier::{Graph, MaskMode};
use proptest::prelude::*;

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn k2_chain_by_hand() {
    // L = [[1,-1],[-1,1]], λ = (0, 2), U = [[1,1],[1,-1]]/√2
    let x = array![[1.0], [0.0]];
    let g = Graph::new(2, [(0, 1)], Some(x.clone())).unwrap();
    let c = build_components(&g, None, MaskMode::Full).unwrap();
    let lam = c.decomposition.eigenvalues();
    assert!((lam[0] - 0.0).abs() < 1e-10 && (lam[1] - 2.0).abs() < 1e-10);
    let (low, high) = c.bands.unwrap();
    assert!(max_diff(&low, &array![[0.5], [0.5]]) < 1e-10);
    assert!(max_diff(&high, &array![[0.5], [-0.5]]) < 1e-10);
    let e = c.energy.unwrap();
    assert!((e.total - 1.0).abs() < 1e-10);
    assert!(max_diff(&c.matrices.structure, &array![[0.0, 2.0], [2.0, 4.0]]) < 1e-10);
    assert!(max_diff(&c.matrices.filter, &array![[0.5, 0.5], [0.5, 0.5]]) < 1e-10);
    assert!(max_diff(&c.matrices.mask, &array![[0.0, 1.0], [1.0, 2.0]]) < 1e-10);
}

#[test]
fn zero_features_fall_back_to_structure() {
    let g = Graph::new(4, [(0, 1), (1, 2), (2, 3)], Some(Array2::zeros((4, 2)))).unwrap();
    let full = build_mask(&g, None, MaskMode::Full).unwrap();
    let structure = build_mask(&g, None, MaskMode::StructureOnly).unwrap();
    assert_eq!(full, structure);
}

#[test]
fn full_mode_requires_features() {
    let g = Graph::new(3, [(0, 1)], None).unwrap();
    assert!(build_mask(&g, None, MaskMode::Full).is_err());
    assert!(build_mask(&g, None, MaskMode::StructureOnly).is_ok());
    assert_eq!(
        build_mask(&g, None, MaskMode::None).unwrap(),
        Array2::<f64>::ones((3, 3))
    );
}

#[test]
fn overflowing_features_are_numerical_errors() {
    let g = Graph::new(2, [(0, 1)], Some(array![[1e200], [0.0]])).unwrap();
    assert!(build_mask(&g, None, MaskMode::Full)
        .unwrap_err()
        .is_numerical());
}

fn instance() -> impl Strategy<Value = (Graph, Vec<usize>)> {
    (1usize..=16, 0.0f64..=1.0, 1usize..=4, any::<u64>()).prop_map(|(n, p, d, salt)| {
        let mut h = salt | 1;
        let mut next = move || {
            h ^= h << 13;
            h ^= h >> 7;
            h ^= h << 17;
            (h >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut edges = vec![];
        for i in 0..n {
            for j in i + 1..n {
                if next() < p {
                    edges.push((i, j));
                }
            }
        }
        let x = Array2::from_shape_simple_fn((n, d), || next() * 6.0 - 3.0);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, (next() * (i + 1) as f64) as usize);
        }
        (Graph::new(n, edges, Some(x)).unwrap(), perm)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bands_sum_to_input_and_conserve_energy((g, _) in instance()) {
        let x = g.features().unwrap();
        let c = build_components(&g, None, MaskMode::Full).unwrap();
        let (low, high) = c.bands.unwrap();
        prop_assert!(max_diff(&(&low + &high), x) < 1e-10);
        let e = c.energy.unwrap();
        let norm: f64 = x.iter().map(|v| v * v).sum();
        prop_assert!((e.total - norm).abs() <= 1e-10 * norm.max(1.0));
        prop_assert!((e.low.sum() + e.high.sum() - e.total).abs() <= 1e-12 * e.total.max(1.0));
    }

    #[test]
    fn mask_bounds((g, _) in instance()) {
        for mode in MaskMode::ALL {
            let m = build_mask(&g, None, mode).unwrap();
            prop_assert!(m.iter().all(|&v| v.is_finite() && v >= 0.0));
            // F ≤ 1 and S ≤ 4 entrywise
            prop_assert!(m.iter().all(|&v| v <= 4.0 + 1e-9));
        }
    }

    #[test]
    fn invariant_under_eigenvector_signs((g, _) in instance(), flips in any::<u32>()) {
        let x = g.features().unwrap();
        let base = decompose(&g).unwrap();
        let mut flipped = base.clone();
        for k in 0..flipped.len() {
            if flips >> (k % 32) & 1 == 1 {
                flipped.flip_sign(k);
            }
        }
        let a = sfmask::components_from(base, Some(x), MaskMode::Full).unwrap();
        let b = sfmask::components_from(flipped, Some(x), MaskMode::Full).unwrap();
        prop_assert!(max_diff(&a.matrices.mask, &b.matrices.mask) < 1e-10);
        let (al, ah) = a.bands.unwrap();
        let (bl, bh) = b.bands.unwrap();
        prop_assert!(max_diff(&al, &bl) < 1e-10 && max_diff(&ah, &bh) < 1e-10);
    }

    #[test]
    fn node_energies_follow_relabeling((g, perm) in instance()) {
        // Band projectors are unique even with repeated eigenvalues as long as
        // no eigenvalue sits at the band edge.
        let dec = decompose(&g).unwrap();
        prop_assume!(dec.eigenvalues().iter().all(|&l| (l - 1.0).abs() > 1e-6));
        let a = build_components(&g, None, MaskMode::Full).unwrap().energy.unwrap();
        let b = build_components(&g.permuted(&perm).unwrap(), None, MaskMode::Full)
            .unwrap()
            .energy
            .unwrap();
        for (old, &new) in perm.iter().enumerate() {
            prop_assert!((a.low[old] - b.low[new]).abs() < 1e-8);
            prop_assert!((a.high[old] - b.high[new]).abs() < 1e-8);
        }
    }
}
