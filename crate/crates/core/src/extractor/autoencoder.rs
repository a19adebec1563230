//! Single-hidden-layer denoising autoencoder.
//!
//! `encode(x) = relu(W_enc x + b_enc)` is the embedding; `decode(z) = W_dec z +
//! b_dec` is linear so negative normalized features can be reconstructed.
//! Training minimizes the mean squared error between `decode(encode(x + eta))`
//! and the clean `x`, with `eta ~ N(0, noise_std^2 I)` redrawn every epoch, using
//! full-batch Adam.

use crate::error::{Error, Result};
use crate::extractor::adam::AdamState;
use crate::rng::SeededRng;
use crate::types::AeHyperparams;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    input_dim: usize,
    embedding_dim: usize,
    pub noise_std: f64,
    /// `[W_enc (D x d) | b_enc (D) | W_dec (d x D) | b_dec (d)]`, matrices row-major.
    params: Vec<f64>,
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default)]
pub struct TrainingReport {
    /// Mean squared error against the clean inputs, on corrupted inputs, per epoch.
    pub loss_history: Vec<f64>,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }
}

fn param_count(d: usize, dd: usize) -> usize {
    2 * d * dd + d + dd
}

impl AutoencoderModel {
    /// Weights and biases drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random(input_dim: usize, embedding_dim: usize, noise_std: f64, rng: &mut SeededRng) -> Self {
        let (d, dd) = (input_dim, embedding_dim);
        let mut params = Vec::with_capacity(param_count(d, dd));
        let enc = 1.0 / (d as f64).sqrt();
        let dec = 1.0 / (dd as f64).sqrt();
        params.extend((0..dd * d + dd).map(|_| rng.uniform_in(-enc, enc)));
        params.extend((0..d * dd + d).map(|_| rng.uniform_in(-dec, dec)));
        Self {
            input_dim,
            embedding_dim,
            noise_std,
            params,
        }
    }

    pub fn from_parts(
        encoder_weights: Vec<f64>,
        encoder_bias: Vec<f64>,
        decoder_weights: Vec<f64>,
        decoder_bias: Vec<f64>,
        noise_std: f64,
    ) -> Result<Self> {
        let dd = encoder_bias.len();
        let d = decoder_bias.len();
        if d == 0 || dd == 0 {
            return Err(Error::config("autoencoder dimensions must be positive"));
        }
        if encoder_weights.len() != dd * d || decoder_weights.len() != d * dd {
            return Err(Error::config(format!(
                "weight shapes do not match d = {d}, D = {dd}"
            )));
        }
        let mut params = encoder_weights;
        params.extend(encoder_bias);
        params.extend(decoder_weights);
        params.extend(decoder_bias);
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("autoencoder parameters must be finite"));
        }
        Ok(Self {
            input_dim: d,
            embedding_dim: dd,
            noise_std,
            params,
        })
    }

    pub(crate) fn from_flat(input_dim: usize, embedding_dim: usize, noise_std: f64, params: Vec<f64>) -> Result<Self> {
        if params.len() != param_count(input_dim, embedding_dim) {
            return Err(Error::Format(format!(
                "expected {} autoencoder parameters, found {}",
                param_count(input_dim, embedding_dim),
                params.len()
            )));
        }
        Ok(Self {
            input_dim,
            embedding_dim,
            noise_std,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> [usize; 4] {
        let (d, dd) = (self.input_dim, self.embedding_dim);
        let b_enc = dd * d;
        let w_dec = b_enc + dd;
        let b_dec = w_dec + d * dd;
        [0, b_enc, w_dec, b_dec]
    }

    pub fn encoder_weights(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[0]..o[1]]
    }

    pub fn encoder_bias(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[1]..o[2]]
    }

    pub fn decoder_weights(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[2]..o[3]]
    }

    pub fn decoder_bias(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[3]..]
    }

    /// `W_enc x + b_enc`, before the ReLU.
    pub fn pre_activation_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.input_dim;
        let w = self.encoder_weights();
        for ((o, row), &b) in out.iter_mut().zip(w.chunks_exact(d)).zip(self.encoder_bias()) {
            *o = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        self.pre_activation_into(x, out);
        for o in out.iter_mut() {
            *o = o.max(0.0);
        }
    }

    pub fn decode_into(&self, z: &[f64], out: &mut [f64]) {
        let dd = self.embedding_dim;
        let w = self.decoder_weights();
        for ((o, row), &b) in out.iter_mut().zip(w.chunks_exact(dd)).zip(self.decoder_bias()) {
            *o = b + row.iter().zip(z).map(|(w, z)| w * z).sum::<f64>();
        }
    }

    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.embedding_dim];
        let mut y = vec![0.0; self.input_dim];
        self.encode_into(x, &mut z);
        self.decode_into(&z, &mut y);
        y
    }

    /// Mean squared reconstruction error of `inputs` against `targets` (flat,
    /// row-major, `n x d` each).
    pub fn loss(&self, inputs: &[f64], targets: &[f64]) -> f64 {
        let mut scratch = Scratch::new(self, inputs.len() / self.input_dim);
        self.forward(inputs, targets, &mut scratch)
    }

    /// Loss and its exact gradient with respect to the flat parameter vector.
    pub fn loss_and_gradient(&self, inputs: &[f64], targets: &[f64], grad: &mut [f64]) -> f64 {
        let mut scratch = Scratch::new(self, inputs.len() / self.input_dim);
        self.backward(inputs, targets, &mut scratch, grad)
    }

    fn forward(&self, inputs: &[f64], targets: &[f64], s: &mut Scratch) -> f64 {
        let (d, dd) = (self.input_dim, self.embedding_dim);
        let n = inputs.len() / d;
        let mut total = 0.0;
        for i in 0..n {
            let x = &inputs[i * d..(i + 1) * d];
            let h = &mut s.hidden[i * dd..(i + 1) * dd];
            self.pre_activation_into(x, h);
            let a = &mut s.active[i * dd..(i + 1) * dd];
            for (a, &h) in a.iter_mut().zip(h.iter()) {
                *a = h.max(0.0);
            }
            let y = &mut s.output[i * d..(i + 1) * d];
            self.decode_into(a, y);
            for (&y, &t) in y.iter().zip(&targets[i * d..(i + 1) * d]) {
                total += (y - t) * (y - t);
            }
        }
        total / (n * d) as f64
    }

    /// Fused forward and backward pass, one sample at a time.
    fn backward(&self, inputs: &[f64], targets: &[f64], s: &mut Scratch, grad: &mut [f64]) -> f64 {
        let (d, dd) = (self.input_dim, self.embedding_dim);
        let n = inputs.len() / d;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let [_, ob_enc, ow_dec, ob_dec] = self.offsets();
        let (w_enc, rest) = self.params.split_at(ob_enc);
        let (b_enc, rest) = rest.split_at(dd);
        let (w_dec, b_dec) = rest.split_at(d * dd);
        let (gw_enc, grest) = grad.split_at_mut(ob_enc);
        let (gb_enc, grest) = grest.split_at_mut(ow_dec - ob_enc);
        let (gw_dec, gb_dec) = grest.split_at_mut(ob_dec - ow_dec);
        let Scratch { hidden: h, active: a, dy, .. } = s;
        let (h, a) = (&mut h[..dd], &mut a[..dd]);
        let scale = 2.0 / (n * d) as f64;
        let mut total = 0.0;
        for (x, t) in inputs.chunks_exact(d).zip(targets.chunks_exact(d)) {
            for ((h, a), (row, &b)) in h.iter_mut().zip(a.iter_mut()).zip(w_enc.chunks_exact(d).zip(b_enc)) {
                *h = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
                *a = h.max(0.0);
            }
            for (((dy, &t), (row, &b)), (grow, gb)) in dy
                .iter_mut()
                .zip(t)
                .zip(w_dec.chunks_exact(dd).zip(b_dec))
                .zip(gw_dec.chunks_exact_mut(dd).zip(gb_dec.iter_mut()))
            {
                let e = b + row.iter().zip(a.iter()).map(|(w, a)| w * a).sum::<f64>() - t;
                total += e * e;
                *dy = scale * e;
                *gb += *dy;
                for (g, &a) in grow.iter_mut().zip(a.iter()) {
                    *g += *dy * a;
                }
            }
            for (j, (&h, (grow, gb))) in h.iter().zip(gw_enc.chunks_exact_mut(d).zip(gb_enc.iter_mut())).enumerate() {
                if h <= 0.0 {
                    continue;
                }
                let g: f64 = dy.iter().zip(w_dec[j..].iter().step_by(dd)).map(|(dy, w)| dy * w).sum();
                *gb += g;
                for (gw, &x) in grow.iter_mut().zip(x) {
                    *gw += g * x;
                }
            }
        }
        total / (n * d) as f64
    }
}

struct Scratch {
    hidden: Vec<f64>,
    active: Vec<f64>,
    output: Vec<f64>,
    dy: Vec<f64>,
}

impl Scratch {
    fn new(model: &AutoencoderModel, n: usize) -> Self {
        Self {
            hidden: vec![0.0; n * model.embedding_dim],
            active: vec![0.0; n * model.embedding_dim],
            output: vec![0.0; n * model.input_dim],
            dy: vec![0.0; model.input_dim],
        }
    }
}

fn flatten<R: AsRef<[f64]>>(data: &[R]) -> Result<(usize, Vec<f64>)> {
    let first = data
        .first()
        .ok_or_else(|| Error::config("cannot train on an empty dataset"))?;
    let d = first.as_ref().len();
    let mut flat = Vec::with_capacity(d * data.len());
    for row in data {
        let row = row.as_ref();
        if row.len() != d {
            return Err(Error::config(format!(
                "training row has {} features, expected {d}",
                row.len()
            )));
        }
        flat.extend_from_slice(row);
    }
    Ok((d, flat))
}

/// Trains a fresh autoencoder with `embedding_dim` hidden units on `data`.
pub fn train_autoencoder<R: AsRef<[f64]>>(
    data: &[R],
    embedding_dim: usize,
    hyper: &AeHyperparams,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingReport)> {
    let (d, _) = flatten(data)?;
    if embedding_dim == 0 {
        return Err(Error::config("embedding dimension must be positive"));
    }
    let mut rng = SeededRng::new(seed);
    let model = AutoencoderModel::random(d, embedding_dim, hyper.noise_std, &mut rng);
    continue_training(model, data, hyper, &mut rng)
}

/// Runs `hyper.epochs` further Adam steps starting from `model`.
pub fn fine_tune_autoencoder<R: AsRef<[f64]>>(
    model: AutoencoderModel,
    data: &[R],
    hyper: &AeHyperparams,
    seed: u64,
) -> Result<(AutoencoderModel, TrainingReport)> {
    let mut rng = SeededRng::new(seed);
    continue_training(model, data, hyper, &mut rng)
}

fn continue_training<R: AsRef<[f64]>>(
    mut model: AutoencoderModel,
    data: &[R],
    hyper: &AeHyperparams,
    rng: &mut SeededRng,
) -> Result<(AutoencoderModel, TrainingReport)> {
    let (d, clean) = flatten(data)?;
    if d != model.input_dim {
        return Err(Error::config(format!(
            "model expects {} features, data has {d}",
            model.input_dim
        )));
    }
    model.noise_std = hyper.noise_std;
    let n = data.len();
    let mut corrupted = clean.clone();
    let mut noise = vec![0.0; clean.len()];
    let mut grad = vec![0.0; model.params.len()];
    let mut scratch = Scratch::new(&model, n);
    let mut adam = AdamState::new(
        model.params.len(),
        hyper.learning_rate,
        hyper.adam_beta1,
        hyper.adam_beta2,
    );
    let mut report = TrainingReport {
        loss_history: Vec::with_capacity(hyper.epochs),
    };
    for epoch in 0..hyper.epochs {
        rng.fill_normal(&mut noise);
        for ((c, &x), &e) in corrupted.iter_mut().zip(&clean).zip(&noise) {
            *c = x + hyper.noise_std * e;
        }
        let loss = model.backward(&corrupted, &clean, &mut scratch, &mut grad);
        if !loss.is_finite() {
            return Err(Error::Diverged { step: epoch, loss });
        }
        adam.step(&mut model.params, &grad);
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                step: epoch,
                loss: f64::NAN,
            });
        }
        report.loss_history.push(loss);
    }
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(epochs: usize) -> AeHyperparams {
        AeHyperparams {
            epochs,
            ..Default::default()
        }
    }

    #[test]
    fn relu_clips_negative_pre_activations() {
        let model = AutoencoderModel::from_parts(
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0],
            0.1,
        )
        .unwrap();
        let mut z = [0.0; 2];
        model.encode_into(&[-1.0, 2.0], &mut z);
        assert_eq!(z, [0.0, 2.0]);
    }

    #[test]
    fn from_parts_checks_shapes() {
        assert!(AutoencoderModel::from_parts(vec![1.0; 3], vec![0.0; 2], vec![1.0; 4], vec![0.0; 2], 0.1).is_err());
    }

    #[test]
    fn constant_zero_data_is_reconstructed() {
        let data = vec![vec![0.0, 0.0, 0.0]; 64];
        let h = hyper(2000);
        let (model, _) = train_autoencoder(&data, 6, &h, 3).unwrap();
        let y = model.reconstruct(&[0.0, 0.0, 0.0]);
        let mse = y.iter().map(|v| v * v).sum::<f64>() / 3.0;
        assert!(mse <= h.noise_std * h.noise_std, "mse = {mse}");
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = SeededRng::new(5);
        let data: Vec<Vec<f64>> = (0..32).map(|_| vec![rng.normal(), rng.normal()]).collect();
        let h = hyper(200);
        let (a, _) = train_autoencoder(&data, 4, &h, 99).unwrap();
        let (b, _) = train_autoencoder(&data, 4, &h, 99).unwrap();
        let bits = |m: &AutoencoderModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let (c, _) = train_autoencoder(&data, 4, &h, 100).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn gaussian_data_reconstruction_pin() {
        let mut rng = SeededRng::new(2024);
        let data: Vec<Vec<f64>> = (0..256)
            .map(|_| {
                let a = rng.normal();
                let b = rng.normal();
                vec![a, 0.5 * a + b]
            })
            .collect();
        let (model, report) = train_autoencoder(&data, 4, &hyper(5000), 1).unwrap();
        let n = data.len() as f64;
        let mut var = 0.0;
        let mut mse = 0.0;
        for j in 0..2 {
            let mean = data.iter().map(|r| r[j]).sum::<f64>() / n;
            var += data.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        }
        var /= 2.0;
        for row in &data {
            let y = model.reconstruct(row);
            mse += y.iter().zip(row).map(|(y, x)| (y - x).powi(2)).sum::<f64>() / 2.0;
        }
        mse /= n;
        assert!(mse <= 0.05 * var, "mse {mse} vs variance {var}");

        // Loss trends down across epoch windows.
        let window = |k: usize| {
            let w = &report.loss_history[k * 500..(k + 1) * 500];
            w.iter().sum::<f64>() / w.len() as f64
        };
        assert!(window(0) > window(3));
        assert!(window(3) >= window(9) * 0.9);
    }

    #[test]
    fn divergence_is_reported() {
        let data = vec![vec![1e300, -1e300]; 4];
        let err = train_autoencoder(&data, 2, &hyper(10), 0).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 0, .. }), "{err}");
    }
}
