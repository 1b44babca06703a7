use dpfe_core::linalg::{covariance, psd_sqrt, symmetric_eigen, SquareMatrix};
use dpfe_core::pipeline::Pca;
use dpfe_core::rng;
use dpfe_core::Tensor2;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

fn random_tensor(n: usize, d: usize, seed: u64) -> Tensor2 {
    let mut r = rng::seeded(seed);
    Tensor2::from_vec(n, d, (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn to_nalgebra(m: &SquareMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

#[test]
fn eigenvalues_agree_with_nalgebra() {
    for seed in 0..5 {
        let x = random_tensor(40, 6, seed);
        let c = covariance(&x).unwrap();
        let ours = symmetric_eigen(&c).unwrap();
        let mut theirs: Vec<f64> = SymmetricEigen::new(to_nalgebra(&c))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.values.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // C v = λ v for every returned pair.
        for k in 0..6 {
            let v = ours.vector(k);
            for i in 0..6 {
                let cv: f64 = (0..6).map(|j| c.get(i, j) * v[j]).sum();
                assert!((cv - ours.values[k] * v[i]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn covariance_matches_nalgebra() {
    let x = random_tensor(30, 4, 9);
    let m = DMatrix::from_row_slice(30, 4, x.as_slice());
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(30, 4, |i, j| m[(i, j)] - mean[j]);
    let want = centered.transpose() * &centered / 30.0;
    let got = to_nalgebra(&covariance(&x).unwrap());
    assert!((got - want).norm() < 1e-13);
}

#[test]
fn psd_square_root_squares_back() {
    let x = random_tensor(25, 5, 3);
    let c = covariance(&x).unwrap();
    let l = psd_sqrt(&c).unwrap();
    let back = to_nalgebra(&l) * to_nalgebra(&l).transpose();
    assert!((back - to_nalgebra(&c)).norm() < 1e-12);
}

#[test]
fn reconstruction_error_equals_trailing_eigenvalues() {
    let x = random_tensor(60, 7, 12);
    let pca = Pca::fit(&x, 3).unwrap();
    let rec = pca.reconstruct(&x);
    let err: f64 = x
        .as_slice()
        .iter()
        .zip(rec.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let mut eig: Vec<f64> = SymmetricEigen::new(to_nalgebra(&covariance(&x).unwrap()))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let trailing: f64 = eig[3..].iter().sum();
    assert!((err / 60.0 - trailing).abs() < 1e-10, "{} vs {trailing}", err / 60.0);
}

#[test]
fn full_rank_pca_is_lossless() {
    let x = random_tensor(20, 5, 13);
    let rec = Pca::fit(&x, 5).unwrap().reconstruct(&x);
    let err: f64 = x
        .as_slice()
        .iter()
        .zip(rec.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!(err < 1e-8);
}

#[test]
fn rank_one_activations_need_one_direction() {
    let dir = [0.6, -0.8, 0.0, 0.0];
    let rows: Vec<Vec<f64>> = (0..15)
        .map(|i| dir.iter().map(|d| d * (i as f64 - 7.0) + 1.0).collect())
        .collect();
    let x = Tensor2::from_rows(&rows).unwrap();
    let rec = Pca::fit(&x, 1).unwrap().reconstruct(&x);
    for (a, b) in x.as_slice().iter().zip(rec.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn too_wide_bottleneck_is_config_error() {
    let x = random_tensor(10, 3, 1);
    assert!(matches!(Pca::fit(&x, 4), Err(dpfe_core::Error::Config(_))));
}
