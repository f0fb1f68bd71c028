use thiserror::Error;

use crate::masking::MaskingError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::sampler::SamplerError;
use crate::taxonomy::TaxonomyError;
use crate::tokenizer::TokenizerError;

/// Any failure in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Masking(#[from] MaskingError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
