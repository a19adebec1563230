//! Perturbations that a ReLU encoder cannot see.
//!
//! Inside one activation region the encoder is the linear map
//! `M = diag(active) W_enc`. Any `delta` in the kernel of `M` that keeps every
//! inactive unit inactive leaves the embedding, and therefore every
//! downstream score, unchanged. A kernel exists whenever fewer than `d`
//! independent units are active, in particular whenever `D < d`.

use crate::error::{Error, Result};
use crate::extractor::autoencoder::AutoencoderModel;

const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis of the kernel of the active rows of `W_enc` at `x`.
///
/// Rows are orthonormalized with two rounds of modified Gram–Schmidt; the
/// kernel basis is completed from the standard basis vectors in order.
pub fn active_null_space(model: &AutoencoderModel, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = model.input_dim();
    let pre = pre_activations(model, x)?;
    let w = model.encoder_weights();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for (j, &h) in pre.iter().enumerate() {
        if h > 0.0 {
            let row = &w[j * d..(j + 1) * d];
            let scale = norm(row);
            if let Some(v) = orthonormalize(row.to_vec(), &basis, scale) {
                basis.push(v);
            }
        }
    }
    let rank = basis.len();
    let mut kernel: Vec<Vec<f64>> = Vec::with_capacity(d - rank);
    for k in 0..d {
        if rank + kernel.len() == d {
            break;
        }
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        if let Some(v) = orthonormalize(e, &basis, 1.0).and_then(|v| orthonormalize(v, &kernel, 1.0)) {
            kernel.push(v);
        }
    }
    Ok(kernel)
}

/// A perturbation `delta` with `|delta|_2 = radius`, `M delta = 0`, and every
/// inactive unit still strictly inactive at `x + delta`.
///
/// Returns `None` when the kernel is trivial or no kernel basis direction (of
/// either sign) stays inside the activation region at this radius.
pub fn null_space_perturbation(
    model: &AutoencoderModel,
    x: &[f64],
    radius: f64,
) -> Result<Option<Vec<f64>>> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::config(format!("radius must be positive, got {radius}")));
    }
    let d = model.input_dim();
    let kernel = active_null_space(model, x)?;
    let pre = pre_activations(model, x)?;
    let w = model.encoder_weights();
    for dir in &kernel {
        for sign in [1.0, -1.0] {
            let delta: Vec<f64> = dir.iter().map(|v| sign * radius * v).collect();
            let stays = pre.iter().enumerate().all(|(j, &h)| {
                h > 0.0 || {
                    let row = &w[j * d..(j + 1) * d];
                    h + dot(row, &delta) < 0.0
                }
            });
            if stays {
                return Ok(Some(delta));
            }
        }
    }
    Ok(None)
}

/// Largest radius `r` such that the whole ball `B_r(x)` keeps the activation
/// pattern of `x`: the distance to the nearest unit hyperplane.
pub fn region_radius(model: &AutoencoderModel, x: &[f64]) -> Result<f64> {
    let d = model.input_dim();
    let pre = pre_activations(model, x)?;
    let w = model.encoder_weights();
    Ok(pre
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let n = norm(&w[j * d..(j + 1) * d]);
            if n == 0.0 {
                f64::INFINITY
            } else {
                h.abs() / n
            }
        })
        .fold(f64::INFINITY, f64::min))
}

fn pre_activations(model: &AutoencoderModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::config(format!(
            "point has {} features, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let mut pre = vec![0.0; model.embedding_dim()];
    model.pre_activation_into(x, &mut pre);
    if let Some(unit) = pre.iter().position(|&h| h == 0.0) {
        return Err(Error::AmbiguousActivation { unit });
    }
    Ok(pre)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthonormalize(mut v: Vec<f64>, basis: &[Vec<f64>], scale: f64) -> Option<Vec<f64>> {
    if scale == 0.0 {
        return None;
    }
    for _ in 0..2 {
        for q in basis {
            let p = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(v, q)| *v -= p * q);
        }
    }
    let n = norm(&v);
    if n <= RANK_TOL * scale {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}
