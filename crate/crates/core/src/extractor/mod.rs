//! Feature extractors mapping normalized `d`-vectors to `D`-dimensional embeddings.

pub mod adam;
pub mod autoencoder;
pub mod container;
pub mod nullspace;
pub mod pca;

pub use adam::AdamState;
pub use autoencoder::{fine_tune_autoencoder, train_autoencoder, AutoencoderModel, TrainingReport};
pub use nullspace::{active_null_space, null_space_perturbation, region_radius};
pub use pca::{fit_pca, PcaModel};

use crate::error::{Error, Result};
use crate::types::{AeHyperparams, Embedding, ExtractorKind, RawRecord};

/// Anything that embeds a normalized record. Implementations must be pure:
/// the same input always yields the same output and the model is not mutated.
pub trait FeatureExtractor {
    fn kind(&self) -> ExtractorKind;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `x.len() == input_dim()` and `out.len() == output_dim()` are the caller's job.
    fn extract_into(&self, x: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityModel {
    pub dim: usize,
}

impl FeatureExtractor for IdentityModel {
    fn kind(&self) -> ExtractorKind {
        ExtractorKind::Identity
    }
    fn input_dim(&self) -> usize {
        self.dim
    }
    fn output_dim(&self) -> usize {
        self.dim
    }
    fn extract_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

impl FeatureExtractor for PcaModel {
    fn kind(&self) -> ExtractorKind {
        ExtractorKind::Pca
    }
    fn input_dim(&self) -> usize {
        PcaModel::input_dim(self)
    }
    fn output_dim(&self) -> usize {
        self.embedding_dim()
    }
    fn extract_into(&self, x: &[f64], out: &mut [f64]) {
        self.project_into(x, out);
    }
}

impl FeatureExtractor for AutoencoderModel {
    fn kind(&self) -> ExtractorKind {
        ExtractorKind::Autoencoder
    }
    fn input_dim(&self) -> usize {
        AutoencoderModel::input_dim(self)
    }
    fn output_dim(&self) -> usize {
        self.embedding_dim()
    }
    fn extract_into(&self, x: &[f64], out: &mut [f64]) {
        // Inference uses the clean input; corruption is a training-time device.
        self.encode_into(x, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorModel {
    Identity(IdentityModel),
    Pca(PcaModel),
    Autoencoder(AutoencoderModel),
}

impl ExtractorModel {
    fn inner(&self) -> &dyn FeatureExtractor {
        match self {
            ExtractorModel::Identity(m) => m,
            ExtractorModel::Pca(m) => m,
            ExtractorModel::Autoencoder(m) => m,
        }
    }

    pub fn as_autoencoder(&self) -> Option<&AutoencoderModel> {
        match self {
            ExtractorModel::Autoencoder(m) => Some(m),
            _ => None,
        }
    }
}

impl FeatureExtractor for ExtractorModel {
    fn kind(&self) -> ExtractorKind {
        self.inner().kind()
    }
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }
    fn output_dim(&self) -> usize {
        self.inner().output_dim()
    }
    fn extract_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner().extract_into(x, out)
    }
}

/// Embeds an already normalized record.
pub fn extract(model: &impl FeatureExtractor, record: &RawRecord) -> Result<Embedding> {
    if record.dim() != model.input_dim() {
        return Err(Error::config(format!(
            "record {} has {} features, extractor expects {}",
            record.index,
            record.dim(),
            model.input_dim()
        )));
    }
    let mut out = vec![0.0; model.output_dim()];
    model.extract_into(&record.values, &mut out);
    Ok(Embedding(out))
}

/// Fits an extractor of the given kind on normalized rows.
///
/// `warm_start` is only consulted for the autoencoder: when it holds a model of
/// matching shape, training continues from its weights.
pub fn train_extractor<R: AsRef<[f64]>>(
    kind: ExtractorKind,
    data: &[R],
    embedding_dim: usize,
    hyper: &AeHyperparams,
    seed: u64,
    warm_start: Option<&ExtractorModel>,
) -> Result<ExtractorModel> {
    let d = data
        .first()
        .map(|r| r.as_ref().len())
        .ok_or_else(|| Error::config("cannot train an extractor on no data"))?;
    match kind {
        ExtractorKind::Identity => {
            if embedding_dim != d {
                return Err(Error::config("identity extractor needs D = d"));
            }
            Ok(ExtractorModel::Identity(IdentityModel { dim: d }))
        }
        ExtractorKind::Pca => Ok(ExtractorModel::Pca(fit_pca(data, embedding_dim)?)),
        ExtractorKind::Autoencoder => {
            let warm = warm_start
                .and_then(ExtractorModel::as_autoencoder)
                .filter(|m| m.input_dim() == d && m.embedding_dim() == embedding_dim);
            let (model, report) = match warm {
                Some(m) => fine_tune_autoencoder(m.clone(), data, hyper, seed)?,
                None => train_autoencoder(data, embedding_dim, hyper, seed)?,
            };
            log::debug!(
                "autoencoder d={d} D={embedding_dim}: {} epochs, final loss {:?}",
                report.loss_history.len(),
                report.final_loss()
            );
            Ok(ExtractorModel::Autoencoder(model))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchitectureCheck {
    Ok,
    Warn(String),
}

/// Embeddings narrower than the input admit perturbations the encoder cannot
/// see (see [`null_space_perturbation`]). Warns, never blocks.
pub fn check_architecture(input_dim: usize, embedding_dim: usize) -> ArchitectureCheck {
    if embedding_dim < input_dim {
        ArchitectureCheck::Warn(format!(
            "embedding dimension D = {embedding_dim} is below input dimension d = {input_dim}; \
             a ReLU encoder then has a non-trivial local null space, so some perturbations of \
             normal records produce identical embeddings and cannot be detected"
        ))
    } else {
        ArchitectureCheck::Ok
    }
}
