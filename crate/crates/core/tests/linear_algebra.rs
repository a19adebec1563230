//! PCA and activation-region kernels against independent decompositions.

use driftmem_core::extractor::{active_null_space, fit_pca, null_space_perturbation, AutoencoderModel, FeatureExtractor};
use driftmem_core::rng::SeededRng;
use driftmem_core::Error;
use nalgebra::DMatrix;

/// Cyclic Jacobi eigensolver for a small symmetric matrix (row-major).
/// Returns eigenpairs sorted by descending eigenvalue.
fn jacobi_eigen(mut a: Vec<f64>, n: usize) -> Vec<(f64, Vec<f64>)> {
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n).map(|j| (a[j * n + j], (0..n).map(|i| v[i * n + j]).collect())).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

#[test]
fn pca_matches_jacobi_on_covariance() {
    let mut rng = SeededRng::new(21);
    for trial in 0..20 {
        let d = 2 + trial % 5;
        let n = 40 + trial * 3;
        // Anisotropic data so the spectrum is well separated.
        let scales: Vec<f64> = (0..d).map(|j| 1.0 + 2.0 * j as f64).collect();
        let mix: Vec<f64> = (0..d * d).map(|_| rng.normal()).collect();
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let g: Vec<f64> = scales.iter().map(|s| s * rng.normal()).collect();
                (0..d).map(|i| (0..d).map(|j| mix[i * d + j] * g[j]).sum()).collect()
            })
            .collect();
        let mean: Vec<f64> = (0..d).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let mut cov = vec![0.0; d * d];
        for r in &data {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1) as f64;
                }
            }
        }
        let oracle = jacobi_eigen(cov, d);
        let dd = 1 + trial % d;
        let model = fit_pca(&data, dd).unwrap();
        for (c, (lambda, vec)) in oracle.iter().enumerate().take(dd) {
            let got = model.component(c);
            assert!((model.explained_variance[c] - lambda).abs() <= 1e-8 * lambda.abs().max(1.0));
            let dot: f64 = got.iter().zip(vec).map(|(a, b)| a * b).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-8, "trial {trial}: component {c} |cos| = {}", dot.abs());
            // Sign convention: the largest-magnitude coordinate is positive.
            let big = got.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
        let x = &data[0];
        let mut z = vec![0.0; dd];
        model.project_into(x, &mut z);
        for (c, &zc) in z.iter().enumerate() {
            let want: f64 = model.component(c).iter().zip(x).zip(&mean).map(|((w, a), m)| w * (a - m)).sum();
            assert!((zc - want).abs() < 1e-9);
        }
    }
}

fn active_rows(model: &AutoencoderModel, x: &[f64]) -> DMatrix<f64> {
    let d = model.input_dim();
    let mut pre = vec![0.0; model.embedding_dim()];
    model.pre_activation_into(x, &mut pre);
    let w = model.encoder_weights();
    let rows: Vec<usize> = (0..pre.len()).filter(|&j| pre[j] > 0.0).collect();
    DMatrix::from_fn(rows.len().max(1), d, |i, k| if rows.is_empty() { 0.0 } else { w[rows[i] * d + k] })
}

#[test]
fn null_space_matches_svd_rank() {
    let mut rng = SeededRng::new(8);
    for _ in 0..100 {
        let d = 2 + rng.below(7);
        let dd = 1 + rng.below(10);
        let model = AutoencoderModel::random(d, dd, 0.1, &mut rng);
        let x: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let m = active_rows(&model, &x);
        let svd = m.clone().svd(false, false);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-10).count();
        let basis = active_null_space(&model, &x).unwrap();
        assert_eq!(basis.len(), d - rank);
        for (i, b) in basis.iter().enumerate() {
            let v = DMatrix::from_column_slice(d, 1, b);
            assert!((&m * &v).amax() < 1e-10);
            for (j, c) in basis.iter().enumerate() {
                let dot: f64 = b.iter().zip(c).map(|(p, q)| p * q).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn three_by_eight_encoder_hides_perturbation() {
    let mut rng = SeededRng::new(38);
    let mut checked = 0;
    while checked < 50 {
        let model = AutoencoderModel::random(8, 3, 0.1, &mut rng);
        let x: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let mut pre = vec![0.0; 3];
        model.pre_activation_into(&x, &mut pre);
        if pre.iter().any(|&h| h <= 0.0) {
            continue;
        }
        let r = 0.25 * driftmem_core::extractor::region_radius(&model, &x).unwrap();
        let delta = null_space_perturbation(&model, &x, r).unwrap().expect("kernel of a 3x8 map");
        let moved: Vec<f64> = x.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let (mut z0, mut z1) = (vec![0.0; 3], vec![0.0; 3]);
        model.extract_into(&x, &mut z0);
        model.extract_into(&moved, &mut z1);
        assert!(z0.iter().zip(&z1).all(|(a, b)| (a - b).abs() <= 1e-10));
        let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - r).abs() <= 1e-12 * r);
        checked += 1;
    }
}

#[test]
fn explicit_kernel_example() {
    // W_enc = [[1, 0]], pre-activation 1 at (1, 1): kernel is the second axis.
    let model = AutoencoderModel::from_parts(vec![1.0, 0.0], vec![0.0], vec![1.0, 0.0], vec![0.0, 0.0], 0.1).unwrap();
    let delta = null_space_perturbation(&model, &[1.0, 1.0], 0.5).unwrap().unwrap();
    assert_eq!(delta[0].abs(), 0.0);
    assert_eq!(delta[1].abs(), 0.5);
}

#[test]
fn zero_pre_activation_is_ambiguous() {
    let model = AutoencoderModel::from_parts(vec![1.0, 0.0], vec![0.0], vec![1.0, 0.0], vec![0.0, 0.0], 0.1).unwrap();
    let err = null_space_perturbation(&model, &[0.0, 1.0], 0.5).unwrap_err();
    assert!(matches!(err, Error::AmbiguousActivation { unit: 0 }));
}
