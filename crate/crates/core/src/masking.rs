//! Ratio masks, the L1 energy weight, and attractor-driven mask estimation.

use crate::attractor::AttractorSet;
use crate::codec::TFRepresentation;
use crate::embedder::EmbeddingField;
use crate::error::{Error, Result};

pub const DEFAULT_MASK_EPS: f64 = 1e-8;

/// Per-source masks over a `frames x feature_dim` grid. In every bin the
/// source masks lie on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    frames: usize,
    feature_dim: usize,
    masks: Vec<Vec<f64>>,
}

impl MaskSet {
    /// Builds a mask set after checking shapes, range and per-bin sums.
    pub fn new(frames: usize, feature_dim: usize, masks: Vec<Vec<f64>>) -> Result<Self> {
        if masks.is_empty() {
            return Err(Error::Dimension("a mask set needs at least one source".into()));
        }
        let bins = frames * feature_dim;
        if masks.iter().any(|m| m.len() != bins) {
            return Err(Error::Dimension(format!("every mask must have {bins} bins")));
        }
        if masks.iter().flatten().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Input("mask entries must lie in [0, 1]".into()));
        }
        for tf in 0..bins {
            let s: f64 = masks.iter().map(|m| m[tf]).sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::Input(format!("masks sum to {s} at bin {tf}")));
            }
        }
        Ok(MaskSet {
            frames,
            feature_dim,
            masks,
        })
    }

    /// A single all-ones mask.
    pub fn ones(frames: usize, feature_dim: usize) -> Self {
        MaskSet {
            frames,
            feature_dim,
            masks: vec![vec![1.0; frames * feature_dim]],
        }
    }

    pub fn num_sources(&self) -> usize {
        self.masks.len()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn bins(&self) -> usize {
        self.frames * self.feature_dim
    }

    pub fn mask(&self, source: usize) -> &[f64] {
        &self.masks[source]
    }

    pub fn masks(&self) -> &[Vec<f64>] {
        &self.masks
    }

    /// Index of the largest mask in `bin`; ties go to the lowest index.
    pub fn dominant_source(&self, bin: usize) -> usize {
        let mut best = 0;
        for i in 1..self.masks.len() {
            if self.masks[i][bin] > self.masks[best][bin] {
                best = i;
            }
        }
        best
    }
}

/// L1-normalized mixture energy, one weight per TF bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyWeight {
    frames: usize,
    feature_dim: usize,
    values: Vec<f64>,
}

impl EnergyWeight {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Uniform weights over `bins` bins.
    pub fn uniform(frames: usize, feature_dim: usize) -> Self {
        let n = frames * feature_dim;
        EnergyWeight {
            frames,
            feature_dim,
            values: vec![1.0 / n as f64; n],
        }
    }
}

/// Generalized ratio masks `e_i^alpha / sum_j e_j^alpha`. Bins whose
/// denominator falls below `eps` get the uniform mask `1/C`.
pub fn ideal_ratio_masks(sources: &[TFRepresentation], alpha: f64, eps: f64) -> Result<MaskSet> {
    let first = sources
        .first()
        .ok_or_else(|| Error::Dimension("need at least one source".into()))?;
    if sources.iter().any(|s| !s.same_shape(first)) {
        return Err(Error::Dimension("source representations differ in shape".into()));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Parameter(format!("alpha must be positive, got {alpha}")));
    }
    if sources.iter().flat_map(|s| s.values()).any(|&v| v < 0.0) {
        return Err(Error::Input("ratio masks need nonnegative representations".into()));
    }
    let c = sources.len();
    let bins = first.bins();
    let mut masks = vec![vec![0.0; bins]; c];
    let mut powered = vec![0.0; c];
    for tf in 0..bins {
        for (p, s) in powered.iter_mut().zip(sources) {
            *p = s.values()[tf].powf(alpha);
        }
        let denom: f64 = powered.iter().sum();
        if denom < eps || !denom.is_finite() {
            for m in masks.iter_mut() {
                m[tf] = 1.0 / c as f64;
            }
        } else {
            for (m, p) in masks.iter_mut().zip(&powered) {
                m[tf] = p / denom;
            }
        }
    }
    Ok(MaskSet {
        frames: first.frames(),
        feature_dim: first.feature_dim(),
        masks,
    })
}

/// `w = e_x / ||e_x||_1`.
pub fn energy_weights(e_x: &TFRepresentation) -> Result<EnergyWeight> {
    if e_x.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Input("energy weights need a nonnegative representation".into()));
    }
    let total: f64 = e_x.values().iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateInput(
            "mixture representation is all zero (pure silence)".into(),
        ));
    }
    Ok(EnergyWeight {
        frames: e_x.frames(),
        feature_dim: e_x.feature_dim(),
        values: e_x.values().iter().map(|v| v / total).collect(),
    })
}

/// Softmax over cosine similarity between each embedding row and every
/// attractor, scaled by `1/temperature`. Zero rows get uniform masks.
pub fn estimate_masks(
    v: &EmbeddingField,
    attractors: &AttractorSet,
    temperature: f64,
) -> Result<MaskSet> {
    if v.embed_dim() != attractors.dim() {
        return Err(Error::Dimension(format!(
            "embedding dim {} vs attractor dim {}",
            v.embed_dim(),
            attractors.dim()
        )));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::Parameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let k = attractors.k();
    let bins = v.bins();
    let mut masks = vec![vec![0.0; bins]; k];
    let mut logits = vec![0.0; k];
    for tf in 0..bins {
        let row = v.row(tf);
        let norm = l2(row);
        if norm == 0.0 {
            for m in masks.iter_mut() {
                m[tf] = 1.0 / k as f64;
            }
            continue;
        }
        for (i, l) in logits.iter_mut().enumerate() {
            // attractors are unit norm
            *l = dot(row, attractors.vector(i)) / norm / temperature;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        for (m, l) in masks.iter_mut().zip(&logits) {
            m[tf] = l / z;
        }
    }
    Ok(MaskSet {
        frames: v.frames(),
        feature_dim: v.feature_dim(),
        masks,
    })
}

/// Elementwise product of a representation with one source mask.
pub fn apply_mask(e_x: &TFRepresentation, mask: &[f64]) -> Result<TFRepresentation> {
    if mask.len() != e_x.bins() {
        return Err(Error::Dimension(format!(
            "mask has {} bins, representation has {}",
            mask.len(),
            e_x.bins()
        )));
    }
    if mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::Input("mask entries must lie in [0, 1]".into()));
    }
    Ok(TFRepresentation::from_parts_unchecked(
        e_x.frames(),
        e_x.feature_dim(),
        e_x.values().iter().zip(mask).map(|(e, m)| e * m).collect(),
    ))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attractor::{AttractorSet, Provenance};

    fn tf(frames: usize, fdim: usize, v: Vec<f64>) -> TFRepresentation {
        TFRepresentation::new(frames, fdim, v).unwrap()
    }

    #[test]
    fn identical_sources_split_evenly() {
        let a = tf(2, 2, vec![1.0, 2.0, 0.5, 3.0]);
        let m = ideal_ratio_masks(&[a.clone(), a], 1.0, DEFAULT_MASK_EPS).unwrap();
        assert!(m.masks().iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn silent_source_and_silent_bins() {
        let a = tf(1, 3, vec![1.0, 0.0, 2.0]);
        let b = tf(1, 3, vec![0.0; 3]);
        let m = ideal_ratio_masks(&[a, b], 1.0, DEFAULT_MASK_EPS).unwrap();
        assert_eq!(m.mask(0), &[1.0, 0.5, 1.0]);
        assert_eq!(m.mask(1), &[0.0, 0.5, 0.0]);
    }

    #[test]
    fn alpha_two_ratio() {
        let a = tf(1, 1, vec![3.0]);
        let b = tf(1, 1, vec![1.0]);
        let m = ideal_ratio_masks(&[a, b], 2.0, DEFAULT_MASK_EPS).unwrap();
        assert!((m.mask(0)[0] - 0.9).abs() < 1e-15);
        assert!((m.mask(1)[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn irm_shape_mismatch() {
        let a = tf(1, 2, vec![1.0, 1.0]);
        let b = tf(2, 1, vec![1.0, 1.0]);
        assert!(matches!(
            ideal_ratio_masks(&[a, b], 1.0, DEFAULT_MASK_EPS),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn energy_weight_cases() {
        let w = energy_weights(&tf(2, 3, vec![2.0; 6])).unwrap();
        assert!(w.values().iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-15));
        let w = energy_weights(&tf(1, 3, vec![0.0, 4.0, 0.0])).unwrap();
        assert_eq!(w.values(), &[0.0, 1.0, 0.0]);
        assert!(matches!(
            energy_weights(&tf(1, 3, vec![0.0; 3])),
            Err(Error::DegenerateInput(_))
        ));
    }

    fn field(rows: &[&[f64]]) -> EmbeddingField {
        let d = rows[0].len();
        EmbeddingField::new(1, rows.len(), d, rows.iter().flat_map(|r| r.iter().copied()).collect())
            .unwrap()
    }

    #[test]
    fn single_attractor_gives_ones() {
        let v = field(&[&[1.0, 0.0], &[0.3, -2.0], &[0.0, 0.0]]);
        let a = AttractorSet::new(vec![vec![0.6, 0.8]], Provenance::Fixture).unwrap();
        let m = estimate_masks(&v, &a, 1.0).unwrap();
        assert!(m.mask(0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn equidistant_row_splits_evenly() {
        let s = 1.0 / 2f64.sqrt();
        let v = field(&[&[s, s]]);
        let a = AttractorSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Provenance::Fixture)
            .unwrap();
        let m = estimate_masks(&v, &a, 1.0).unwrap();
        assert!((m.mask(0)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn low_temperature_is_hard_assignment() {
        let v = field(&[&[1.0, 0.0]]);
        let a = AttractorSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Provenance::Fixture)
            .unwrap();
        let m = estimate_masks(&v, &a, 0.01).unwrap();
        // logits (100, 0): 1 / (1 + e^-100)
        assert!(m.mask(0)[0] >= 1.0 - 1e-6);
    }

    #[test]
    fn estimate_dim_mismatch() {
        let v = field(&[&[1.0, 0.0, 0.0]]);
        let a = AttractorSet::new(vec![vec![1.0, 0.0]], Provenance::Fixture).unwrap();
        assert!(matches!(estimate_masks(&v, &a, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn mask_application() {
        let e = tf(1, 3, vec![1.0, 2.0, 3.0]);
        assert_eq!(apply_mask(&e, &[1.0; 3]).unwrap(), e);
        assert!(apply_mask(&e, &[0.0; 3]).unwrap().values().iter().all(|&v| v == 0.0));
        let m = [0.2, 0.7, 0.5];
        let inv: Vec<f64> = m.iter().map(|x| 1.0 - x).collect();
        let a = apply_mask(&e, &m).unwrap();
        let b = apply_mask(&e, &inv).unwrap();
        for i in 0..3 {
            assert!((a.values()[i] + b.values()[i] - e.values()[i]).abs() <= 1e-9);
        }
        assert!(matches!(apply_mask(&e, &[1.0; 2]), Err(Error::Dimension(_))));
    }
}
