//! Eigendecomposition against closed-form spectra and an external solver.

use std::f64::consts::PI;

use grafourier::ndarray::{Array1, Array2};
use grafourier::spectral::{self, decompose, normalized_laplacian};
use grafourier::Graph;
use proptest::prelude::*;

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn assert_spectrum(g: &Graph, expected: &[f64], tol: f64) {
    let dec = decompose(g).unwrap();
    let got = dec.eigenvalues().to_vec();
    let want = sorted(expected);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < tol, "got {got:?} want {want:?}");
    }
}

fn path(n: usize) -> Graph {
    Graph::new(n, (1..n).map(|i| (i - 1, i)), None).unwrap()
}

fn cycle(n: usize) -> Graph {
    Graph::new(n, (0..n).map(|i| (i, (i + 1) % n)), None).unwrap()
}

fn complete(n: usize) -> Graph {
    Graph::new(
        n,
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))),
        None,
    )
    .unwrap()
}

#[test]
fn closed_form_spectra() {
    for n in 3..=12 {
        let want: Vec<f64> = (0..n)
            .map(|k| 1.0 - (2.0 * PI * k as f64 / n as f64).cos())
            .collect();
        assert_spectrum(&cycle(n), &want, 1e-10);

        let want: Vec<f64> = (0..n)
            .map(|k| 1.0 - (PI * k as f64 / (n - 1) as f64).cos())
            .collect();
        assert_spectrum(&path(n), &want, 1e-10);

        let mut want = vec![n as f64 / (n - 1) as f64; n];
        want[0] = 0.0;
        assert_spectrum(&complete(n), &want, 1e-10);

        let star = Graph::new(n, (1..n).map(|i| (0, i)), None).unwrap();
        let mut want = vec![1.0; n];
        want[0] = 0.0;
        want[n - 1] = 2.0;
        assert_spectrum(&star, &want, 1e-10);
    }
}

/// Roots of the characteristic polynomial of a symmetric 2x2 or 3x3 matrix.
fn char_poly_roots(a: &Array2<f64>) -> Vec<f64> {
    match a.nrows() {
        1 => vec![a[[0, 0]]],
        2 => {
            let tr = a[[0, 0]] + a[[1, 1]];
            let det = a[[0, 0]] * a[[1, 1]] - a[[0, 1]] * a[[1, 0]];
            let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
            sorted(&[tr / 2.0 - disc, tr / 2.0 + disc])
        }
        3 => {
            // trigonometric solution for symmetric matrices
            let q = (a[[0, 0]] + a[[1, 1]] + a[[2, 2]]) / 3.0;
            let p1 = a[[0, 1]].powi(2) + a[[0, 2]].powi(2) + a[[1, 2]].powi(2);
            let p2 = (0..3).map(|i| (a[[i, i]] - q).powi(2)).sum::<f64>() + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            if p < 1e-14 {
                return vec![q; 3];
            }
            let b = (a - &(Array2::<f64>::eye(3) * q)) / p;
            let det = b[[0, 0]] * (b[[1, 1]] * b[[2, 2]] - b[[1, 2]] * b[[2, 1]])
                - b[[0, 1]] * (b[[1, 0]] * b[[2, 2]] - b[[1, 2]] * b[[2, 0]])
                + b[[0, 2]] * (b[[1, 0]] * b[[2, 1]] - b[[1, 1]] * b[[2, 0]]);
            let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
            sorted(&[e1, e3, 3.0 * q - e1 - e3])
        }
        _ => unreachable!(),
    }
}

#[test]
fn every_small_graph_matches_characteristic_polynomial() {
    for n in 1..=3usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        for bits in 0..(1u32 << pairs.len()) {
            let edges = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| bits >> k & 1 == 1)
                .map(|(_, &e)| e);
            let g = Graph::new(n, edges, None).unwrap();
            let l = normalized_laplacian(&g);
            let want = char_poly_roots(&l);
            let got = decompose(&g).unwrap();
            for (a, b) in got.eigenvalues().iter().zip(&want) {
                assert!(
                    (a - b).abs() < 1e-10,
                    "n={n} bits={bits}: {:?} vs {want:?}",
                    got.eigenvalues()
                );
            }
        }
    }
}

fn graph_strategy(max_n: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n, 0.0f64..=1.0, any::<u64>()).prop_map(|(n, p, salt)| {
        let mut edges = vec![];
        let mut h = salt;
        for i in 0..n {
            for j in i + 1..n {
                h = h
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                if ((h >> 11) as f64 / (1u64 << 53) as f64) < p {
                    edges.push((i, j));
                }
            }
        }
        Graph::new(n, edges, None).unwrap()
    })
}

fn bfs_components(g: &Graph) -> Vec<usize> {
    let n = g.node_count();
    let mut adj = vec![vec![]; n];
    for &(i, j) in g.edges() {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    let mut sizes = vec![];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    sizes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_nalgebra(g in graph_strategy(24)) {
        let l = normalized_laplacian(&g);
        let n = g.node_count();
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| l[[i, j]]);
        let oracle = sorted(m.symmetric_eigenvalues().as_slice());
        let dec = decompose(&g).unwrap();
        for (a, b) in dec.eigenvalues().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        prop_assert!(dec.orthogonality_error() < 1e-8);
        prop_assert!(dec.reconstruction_error(&l) < 1e-8);
        prop_assert!(dec.eigenvalues().iter().all(|&v| (0.0..=2.0).contains(&v)));
        prop_assert!(dec.eigenvalues().windows(2).into_iter().all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_multiplicity_counts_nontrivial_components(g in graph_strategy(30)) {
        let sizes = bfs_components(&g);
        let mut want = sizes.clone();
        let mut got = g.component_sizes();
        want.sort_unstable();
        got.sort_unstable();
        prop_assert_eq!(&got, &want);
        let zeros = decompose(&g).unwrap().eigenvalues().iter().filter(|&&v| v <= 1e-8).count();
        prop_assert_eq!(zeros, sizes.iter().filter(|&&s| s > 1).count());
    }

    #[test]
    fn parseval_and_round_trip(g in graph_strategy(20), d in 1usize..5, seed in any::<u64>()) {
        let n = g.node_count();
        let mut h = seed;
        let x = Array2::from_shape_simple_fn((n, d), || {
            h = h.wrapping_mul(6364136223846793005).wrapping_add(1);
            (h >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        });
        let dec = decompose(&g).unwrap();
        let x_hat = dec.gft(&x).unwrap();
        let norm = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        prop_assert!((norm(&x) - norm(&x_hat)).abs() <= 1e-10 * norm(&x).max(1.0));
        let back = dec.igft(&x_hat).unwrap();
        prop_assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
        let identity = dec.filter(&Array1::ones(n), &x).unwrap();
        prop_assert!(identity.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn spectrum_is_permutation_invariant(g in graph_strategy(15), salt in any::<u64>()) {
        let n = g.node_count();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut h = salt;
        for i in (1..n).rev() {
            h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (h >> 33) as usize % (i + 1));
        }
        let a = decompose(&g).unwrap();
        let b = decompose(&g.permuted(&perm).unwrap()).unwrap();
        for (x, y) in a.eigenvalues().iter().zip(b.eigenvalues()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn rejects_asymmetric_and_non_finite_input() {
    let mut a = Array2::<f64>::eye(3);
    a[[0, 1]] = 0.5;
    assert!(spectral::eig_sym(&a).unwrap_err().is_numerical());
    a[[1, 0]] = f64::NAN;
    assert!(spectral::eig_sym(&a).unwrap_err().is_numerical());
}

#[test]
fn bipartite_graphs_reach_two() {
    for n in [2, 4, 6, 9] {
        let top = *decompose(&path(n)).unwrap().eigenvalues().last().unwrap();
        assert!((top - 2.0).abs() < 1e-10);
    }
}
