//! Speaker-attractor source separation.
//!
//! A learned codec maps waveforms to a nonnegative time-frequency
//! representation. An embedder assigns a `D`-dimensional vector to every TF
//! bin; speaker attractors are unit vectors summarizing those embeddings per
//! source, formed from ratio masks when the sources are known and by
//! spherical K-means at inference. Soft masks from cosine similarity to the
//! attractors split the mixture, and the decoder turns each masked
//! representation back into a waveform. Attractors can be exported for
//! downstream speaker conditioning.

pub mod attractor;
pub mod audio;
mod binfmt;
#[cfg(feature = "cli")]
pub mod cli;
pub mod codec;
pub mod embedder;
pub mod error;
pub mod masking;
pub mod mixsim;
pub mod synth;

pub use attractor::{
    attractor_similarity, extract_reference_attractors, ideal_attractors, spherical_kmeans, Assignment,
    AttractorSet, KMeansOptions, KMeansResult, Provenance,
};
pub use audio::{read_wav, write_wav, Waveform, SEPARATION_RATE};
pub use binfmt::quantize_f32;
pub use codec::{
    codec_gradient, pretrain_codec, reconstruction_si_sdr, CodecGradient, CodecWeights, PretrainConfig,
    PretrainOutcome, TFRepresentation,
};
pub use embedder::{
    oracle_embed, random_unit_attractors, tcn_forward, Embedder, EmbeddingField, OracleSpec, TcnConfig,
    TcnWeights,
};
pub use error::{Error, Result};
pub use masking::{apply_mask, energy_weights, estimate_masks, ideal_ratio_masks, EnergyWeight, MaskSet};
pub use mixsim::{convolve_rir, match_estimates, mix, sample_gain, separate, si_sdr, MixSpec, Separation};
