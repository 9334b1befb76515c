//! Tensor kernels checked against an independent dense linear-algebra library.

use hexpepo_core::tensor::{contract, thin_qr, DEFAULT_MEMORY_CAP};
use hexpepo_core::{svd_truncate, Network, Tensor};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn to_na(t: &Tensor<f64>) -> DMatrix<f64> {
    let (m, n) = (t.shape()[0], t.shape()[1]);
    DMatrix::from_fn(m, n, |i, j| t.get(&[i, j]))
}

fn max_diff(a: &Tensor<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), &[b.nrows(), b.ncols()]);
    (0..b.nrows())
        .flat_map(|i| (0..b.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (a.get(&[i, j]) - b[(i, j)]).abs())
        .fold(0.0, f64::max)
}

#[test]
fn singular_values_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (m, n) in [(7, 7), (12, 5), (4, 30), (64, 48)] {
        let a = random(&mut rng, vec![m, n]);
        let ours = svd_truncate(&a, m.min(n), 0.0).unwrap();
        let mut theirs: Vec<f64> = to_na(&a).singular_values().iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        assert_eq!(ours.s.len(), theirs.len());
        for (x, y) in ours.s.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-12 * theirs[0], "{m}x{n}: {x} vs {y}");
        }
        assert!(max_diff(&ours.reconstruct(), &to_na(&a)) < 1e-12);
    }
}

#[test]
fn truncation_is_the_best_low_rank_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&mut rng, vec![20, 16]);
    let svd = to_na(&a).svd(false, false);
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    let total: f64 = s.iter().map(|x| x * x).sum();
    for chi in [1, 4, 9] {
        let t = svd_truncate(&a, chi, 0.0).unwrap();
        let dropped: f64 = s[chi..].iter().map(|x| x * x).sum();
        assert!((t.discarded_weight - dropped / total).abs() < 1e-12);
        // Eckart–Young: the Frobenius error equals the dropped singular values
        let err = (to_na(&t.reconstruct()) - to_na(&a)).norm();
        assert!((err - dropped.sqrt()).abs() < 1e-10);
    }
}

#[test]
fn qr_reconstructs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&mut rng, vec![30, 6]);
    let (q, r) = thin_qr(&a).unwrap();
    let (qn, rn) = (to_na(&q), to_na(&r));
    assert!(max_diff(&a, &(&qn * &rn)) < 1e-12);
    assert!((qn.transpose() * &qn - DMatrix::identity(6, 6)).norm() < 1e-12);
}

#[test]
fn pairwise_contraction_matches_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (i, j, k, l) = (3, 4, 5, 6);
    let a = random(&mut rng, vec![i, j, k]);
    let b = random(&mut rng, vec![k, j, l]);
    let c = contract(&a, &b, &[(1, 1), (2, 0)]).unwrap();
    let am = to_na(&a.clone().reshape(vec![i, j * k]).unwrap());
    let bm = to_na(&b.permute(&[1, 0, 2]).unwrap().reshape(vec![j * k, l]).unwrap());
    assert!(max_diff(&c, &(am * bm)) < 1e-12);
}

#[test]
fn network_chain_matches_matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mats: Vec<Tensor<f64>> = [(4, 7), (7, 3), (3, 9), (9, 2)]
        .iter()
        .map(|&(m, n)| random(&mut rng, vec![m, n]))
        .collect();
    let expect = mats.iter().skip(1).fold(to_na(&mats[0]), |acc, m| acc * to_na(m));
    let labels = vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4]];
    let net = Network::new(mats, labels).unwrap();
    let path = net.greedy_path();
    let out = net.contract(&[0, 4], Some(&path), DEFAULT_MEMORY_CAP).unwrap();
    assert!(max_diff(&out, &expect) < 1e-12);
}
