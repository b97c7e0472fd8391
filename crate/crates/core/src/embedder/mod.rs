//! Embedding fields: one D-dimensional vector per TF bin.
//!
//! Two producers exist. [`tcn`] runs a temporal convolution network from
//! loadable weights; [`oracle`] synthesizes a field from known masks and
//! fixture attractors so the downstream math can be checked against ground
//! truth without a trained network.

pub mod oracle;
pub mod tcn;

use crate::attractor::AttractorSet;
use crate::audio::Waveform;
use crate::codec::{CodecWeights, TFRepresentation};
use crate::error::{Error, Result};
use crate::masking::{ideal_ratio_masks, DEFAULT_MASK_EPS};

pub use oracle::{oracle_embed, random_unit_attractors};
pub use tcn::{tcn_forward, TcnConfig, TcnWeights};

/// `(frames * feature_dim) x embed_dim` matrix, bin-major (`tf = t * F + f`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingField {
    frames: usize,
    feature_dim: usize,
    embed_dim: usize,
    vectors: Vec<f64>,
}

impl EmbeddingField {
    pub fn new(frames: usize, feature_dim: usize, embed_dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if embed_dim == 0 {
            return Err(Error::Dimension("embed_dim must be at least 1".into()));
        }
        if vectors.len() != frames * feature_dim * embed_dim {
            return Err(Error::Dimension(format!(
                "{} values for {frames}x{feature_dim} bins of width {embed_dim}",
                vectors.len()
            )));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("embedding field contains non-finite values".into()));
        }
        Ok(EmbeddingField {
            frames,
            feature_dim,
            embed_dim,
            vectors,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn bins(&self) -> usize {
        self.frames * self.feature_dim
    }

    pub fn row(&self, bin: usize) -> &[f64] {
        &self.vectors[bin * self.embed_dim..(bin + 1) * self.embed_dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.vectors.chunks_exact(self.embed_dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    /// Multiplies one row by `alpha`.
    pub fn scale_row(&mut self, bin: usize, alpha: f64) {
        let d = self.embed_dim;
        for v in &mut self.vectors[bin * d..(bin + 1) * d] {
            *v *= alpha;
        }
    }

    pub(crate) fn from_parts_unchecked(
        frames: usize,
        feature_dim: usize,
        embed_dim: usize,
        vectors: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(vectors.len(), frames * feature_dim * embed_dim);
        EmbeddingField {
            frames,
            feature_dim,
            embed_dim,
            vectors,
        }
    }
}

/// Ground truth for the oracle embedder: the individual source signals as
/// they appear in the mixture, one fixture attractor per source, and the
/// noise applied to every embedding row.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSpec {
    pub sources: Vec<Waveform>,
    pub attractors: AttractorSet,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    Tcn(TcnWeights),
    Oracle(OracleSpec),
}

impl Embedder {
    /// Embedding dimension `D` of the produced field.
    pub fn embed_dim(&self) -> usize {
        match self {
            Embedder::Tcn(w) => w.config().embed_dim,
            Embedder::Oracle(o) => o.attractors.dim(),
        }
    }

    /// Embeds a mixture representation produced by `codec`.
    ///
    /// The oracle encodes each of its sources with the same codec, keeps the
    /// leading frames that line up with `e_x`, and labels every bin with the
    /// source holding the largest ratio mask.
    pub fn embed(&self, e_x: &TFRepresentation, codec: &CodecWeights) -> Result<EmbeddingField> {
        match self {
            Embedder::Tcn(w) => tcn_forward(e_x, w),
            Embedder::Oracle(spec) => {
                if spec.sources.len() != spec.attractors.k() {
                    return Err(Error::Dimension(format!(
                        "oracle has {} sources but {} attractors",
                        spec.sources.len(),
                        spec.attractors.k()
                    )));
                }
                let mut tfs = Vec::with_capacity(spec.sources.len());
                for (i, s) in spec.sources.iter().enumerate() {
                    let tf = codec.encode(s)?;
                    if tf.frames() < e_x.frames() {
                        return Err(Error::Dimension(format!(
                            "oracle source {i} covers {} frames, mixture has {}",
                            tf.frames(),
                            e_x.frames()
                        )));
                    }
                    tfs.push(tf.leading_frames(e_x.frames()));
                }
                let masks = ideal_ratio_masks(&tfs, 1.0, DEFAULT_MASK_EPS)?;
                oracle_embed(&masks, &spec.attractors, spec.noise_sigma, spec.seed)
            }
        }
    }
}
