//! Synthetic embedder used in place of a trained network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::attractor::{AttractorSet, Provenance};
use crate::embedder::EmbeddingField;
use crate::error::{Error, Result};
use crate::masking::{dot, l2, MaskSet};

const MAX_DRAWS: usize = 10_000;

/// Rejection-samples `k` unit vectors in `dim` dimensions whose pairwise
/// cosine similarity is at most `max_cosine`.
pub fn random_unit_attractors(k: usize, dim: usize, max_cosine: f64, seed: u64) -> Result<AttractorSet> {
    if k == 0 {
        return Err(Error::Parameter("need at least one attractor".into()));
    }
    if dim < 2 {
        return Err(Error::Parameter("attractor dimension must be at least 2".into()));
    }
    if !(max_cosine < 1.0) {
        return Err(Error::Parameter(format!(
            "cosine separation must be below 1, got {max_cosine}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..MAX_DRAWS {
        let v = loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let n = l2(&v);
            if n > 1e-12 {
                break v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
            }
        };
        if accepted.iter().all(|a| dot(a, &v) <= max_cosine) {
            accepted.push(v);
            if accepted.len() == k {
                return AttractorSet::new(accepted, Provenance::Fixture);
            }
        }
    }
    Err(Error::Sampling(format!(
        "could not place {k} unit vectors in {dim} dimensions with pairwise cosine <= {max_cosine} \
         within {MAX_DRAWS} draws"
    )))
}

/// Each bin's row is the dominant source's attractor plus isotropic Gaussian
/// noise, projected back to the unit sphere. With zero noise the row is the
/// attractor itself.
pub fn oracle_embed(
    masks: &MaskSet,
    attractors: &AttractorSet,
    noise_sigma: f64,
    seed: u64,
) -> Result<EmbeddingField> {
    if masks.num_sources() != attractors.k() {
        return Err(Error::Dimension(format!(
            "{} masks but {} attractors",
            masks.num_sources(),
            attractors.k()
        )));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let d = attractors.dim();
    let bins = masks.bins();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Vec::with_capacity(bins * d);
    let mut row = vec![0.0; d];
    for tf in 0..bins {
        let a = attractors.vector(masks.dominant_source(tf));
        if noise_sigma == 0.0 {
            vectors.extend_from_slice(a);
            continue;
        }
        for (r, &x) in row.iter_mut().zip(a) {
            let z: f64 = rng.sample(StandardNormal);
            *r = x + noise_sigma * z;
        }
        let n = l2(&row);
        if n > 0.0 {
            vectors.extend(row.iter().map(|x| x / n));
        } else {
            vectors.extend_from_slice(a);
        }
    }
    Ok(EmbeddingField::from_parts_unchecked(
        masks.frames(),
        masks.feature_dim(),
        d,
        vectors,
    ))
}
