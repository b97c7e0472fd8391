//! Speaker attractors: formation from ratio masks, inference-time spherical
//! K-means, similarity, and the SAEB interchange file.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::Waveform;
use crate::binfmt::{self, ByteReader, ByteWriter};
use crate::codec::CodecWeights;
use crate::embedder::{Embedder, EmbeddingField};
use crate::error::{Error, Result};
use crate::masking::{dot, energy_weights, l2, EnergyWeight, MaskSet};

const SAEB_MAGIC: &[u8; 4] = b"SAEB";
const SAEB_VERSION: u32 = 1;
const UNIT_TOL: f64 = 1e-6;
/// Relative rounding slack allowed when checking that the K-means objective
/// never increases.
pub const OBJECTIVE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Ideal,
    KMeans,
    Fixture,
}

impl Provenance {
    pub fn code(self) -> u32 {
        match self {
            Provenance::Ideal => 0,
            Provenance::KMeans => 1,
            Provenance::Fixture => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Provenance::Ideal),
            1 => Some(Provenance::KMeans),
            2 => Some(Provenance::Fixture),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Provenance::Ideal => "ideal",
            Provenance::KMeans => "kmeans",
            Provenance::Fixture => "fixture",
        }
    }
}

/// `K` unit-norm attractors of dimension `D`.
///
/// `mask_energy[i]` is the energy-weight mass attributed to attractor `i`
/// (`sum w * m_i` for ideal attractors, the weight of the assigned bins for
/// K-means). `iterations_used` and `inertia` are only known for K-means
/// results built in this process; they are not stored in SAEB files.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    provenance: Provenance,
    mask_energy: Vec<f64>,
    iterations_used: Option<usize>,
    inertia: Option<f64>,
}

impl AttractorSet {
    pub fn new(vectors: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        let k = vectors.len();
        Self::with_energy(vectors, provenance, vec![0.0; k])
    }

    pub fn with_energy(vectors: Vec<Vec<f64>>, provenance: Provenance, mask_energy: Vec<f64>) -> Result<Self> {
        let dim = vectors
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Dimension("an attractor set needs K >= 1".into()))?;
        if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("attractors must share a nonzero dimension".into()));
        }
        if mask_energy.len() != vectors.len() {
            return Err(Error::Dimension("one mask energy per attractor required".into()));
        }
        for (i, v) in vectors.iter().enumerate() {
            let n = l2(v);
            if !((n - 1.0).abs() <= UNIT_TOL) {
                return Err(Error::Input(format!("attractor {i} has norm {n}, expected 1")));
            }
        }
        Ok(AttractorSet {
            dim,
            vectors,
            provenance,
            mask_energy,
            iterations_used: None,
            inertia: None,
        })
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mask_energy(&self) -> &[f64] {
        &self.mask_energy
    }

    pub fn iterations_used(&self) -> Option<usize> {
        self.iterations_used
    }

    pub fn inertia(&self) -> Option<f64> {
        self.inertia
    }

    /// Index of the attractor with the largest mask energy (lowest index on ties).
    pub fn strongest(&self) -> usize {
        let mut best = 0;
        for i in 1..self.k() {
            if self.mask_energy[i] > self.mask_energy[best] {
                best = i;
            }
        }
        best
    }

    /// Copy with vectors and energies rounded to `f32`, the SAEB precision.
    pub fn quantized(&self) -> AttractorSet {
        let mut q = self.clone();
        for v in &mut q.vectors {
            binfmt::quantize_f32(v);
        }
        binfmt::quantize_f32(&mut q.mask_energy);
        q.iterations_used = None;
        q.inertia = None;
        q
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(SAEB_MAGIC, SAEB_VERSION);
        w.u32(self.k() as u32);
        w.u32(self.dim as u32);
        w.u32(self.provenance.code());
        w.f32s(&self.mask_energy);
        for v in &self.vectors {
            w.f32s(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, SAEB_MAGIC, SAEB_VERSION)?;
        let k_at = r.offset();
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if k == 0 || dim == 0 {
            return Err(Error::format(k_at, format!("K={k} and D={dim} must both be >= 1")));
        }
        let prov_at = r.offset();
        let code = r.u32()?;
        let provenance = Provenance::from_code(code)
            .ok_or_else(|| Error::format(prov_at, format!("unknown provenance code {code}")))?;
        let expected = k
            .checked_mul(dim)
            .and_then(|kd| kd.checked_add(k))
            .and_then(|n| n.checked_mul(4));
        if expected != Some(r.remaining()) {
            return Err(Error::format(
                r.offset(),
                format!(
                    "header declares K={k}, D={dim} but {} payload bytes follow",
                    r.remaining()
                ),
            ));
        }
        let mask_energy = r.f32s(k)?;
        let mut vectors = Vec::with_capacity(k);
        for i in 0..k {
            let at = r.offset();
            let v = r.f32s(dim)?;
            let n = l2(&v);
            if (n - 1.0).abs() > UNIT_TOL {
                return Err(Error::format(at, format!("attractor {i} has norm {n}")));
            }
            vectors.push(v);
        }
        r.expect_end()?;
        Ok(AttractorSet {
            dim,
            vectors,
            provenance,
            mask_energy,
            iterations_used: None,
            inertia: None,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binfmt::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&binfmt::read_file(path.as_ref())?)
    }
}

fn check_grid(v: &EmbeddingField, w: &EnergyWeight) -> Result<()> {
    if v.frames() != w.frames() || v.feature_dim() != w.feature_dim() {
        return Err(Error::Dimension(format!(
            "embedding grid {}x{} vs weight grid {}x{}",
            v.frames(),
            v.feature_dim(),
            w.frames(),
            w.feature_dim()
        )));
    }
    Ok(())
}

/// `sum_tf weight(tf) * V_tf` over the bins for which `weight` returns a
/// value, skipping zero rows. Shared by attractor formation and the K-means
/// update so both produce bit-identical results for identical weights.
fn weighted_sum(v: &EmbeddingField, mut weight: impl FnMut(usize) -> Option<f64>) -> Vec<f64> {
    let mut acc = vec![0.0; v.embed_dim()];
    for (tf, row) in v.rows().enumerate() {
        let Some(wt) = weight(tf) else { continue };
        if row.iter().all(|&x| x == 0.0) {
            continue;
        }
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += wt * x;
        }
    }
    acc
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = l2(&v);
    (n > 0.0 && n.is_finite()).then(|| v.into_iter().map(|x| x / n).collect())
}

/// `a_i = V (w ⊙ m_i) / ||V (w ⊙ m_i)||_2` for every source mask.
pub fn ideal_attractors(v: &EmbeddingField, w: &EnergyWeight, masks: &MaskSet) -> Result<AttractorSet> {
    check_grid(v, w)?;
    if masks.frames() != w.frames() || masks.feature_dim() != w.feature_dim() {
        return Err(Error::Dimension("mask grid differs from embedding grid".into()));
    }
    let wv = w.values();
    let mut vectors = Vec::with_capacity(masks.num_sources());
    let mut energy = Vec::with_capacity(masks.num_sources());
    for i in 0..masks.num_sources() {
        let m = masks.mask(i);
        let mass: f64 = wv.iter().zip(m).map(|(a, b)| a * b).sum();
        if mass <= 0.0 {
            return Err(Error::DegenerateSource { source_index: i });
        }
        let a = normalized(weighted_sum(v, |tf| Some(wv[tf] * m[tf])))
            .ok_or(Error::DegenerateSource { source_index: i })?;
        vectors.push(a);
        energy.push(mass);
    }
    Ok(AttractorSet {
        dim: v.embed_dim(),
        vectors,
        provenance: Provenance::Ideal,
        mask_energy: energy,
        iterations_used: None,
        inertia: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Convergence threshold on per-centroid cosine movement.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// Cluster label per TF bin. Zero rows take no part in clustering and carry
/// label 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub attractors: AttractorSet,
    pub assignment: Assignment,
    /// Objective after every assignment step, ending with the final one.
    pub objective_trace: Vec<f64>,
}

/// Spherical K-means over the rows of `v`, with bins weighted by `w`.
///
/// Bins go to the centroid of highest cosine similarity (lowest index on
/// ties); centroids are the normalized `w`-weighted sums of their rows. The
/// objective is `sum_tf w(tf) * ||V_tf|| * (1 - cos(V_tf, c))`, which for
/// unit rows is the weighted cosine distance and is nonincreasing under
/// both steps. Initialization is cosine K-means++ driven by `seed`.
pub fn spherical_kmeans(
    v: &EmbeddingField,
    w: &EnergyWeight,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
) -> Result<KMeansResult> {
    check_grid(v, w)?;
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    let bins = v.bins();
    if bins < k {
        return Err(Error::Clustering(format!("{bins} bins cannot form {k} clusters")));
    }
    let norms: Vec<f64> = v.rows().map(l2).collect();
    let active: Vec<usize> = (0..bins).filter(|&tf| norms[tf] > 0.0).collect();
    if count_distinct_rows(v, &active, k) < k {
        return Err(Error::Clustering(format!(
            "fewer than {k} distinct nonzero embedding rows"
        )));
    }
    let wv = w.values();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_plus_plus(v, &norms, wv, &active, k, &mut rng);

    let mut labels = vec![0usize; bins];
    let mut trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        let objective = assign(v, &norms, wv, &active, &centroids, &mut labels);
        push_objective(&mut trace, objective);
        iterations += 1;

        let mut next = Vec::with_capacity(k);
        let mut reseeded: Vec<usize> = Vec::new();
        for j in 0..k {
            let sum = weighted_sum(v, |tf| (labels[tf] == j && norms[tf] > 0.0).then(|| wv[tf]));
            match normalized(sum) {
                Some(c) => next.push(c),
                None => {
                    let tf = worst_assigned(v, &norms, wv, &active, &centroids, &labels, &reseeded);
                    reseeded.push(tf);
                    next.push(v.row(tf).iter().map(|x| x / norms[tf]).collect());
                }
            }
        }
        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| 1.0 - dot(a, b))
            .fold(0.0, f64::max);
        centroids = next;
        if reseeded.is_empty() && movement < opts.tol {
            break;
        }
    }
    let objective = assign(v, &norms, wv, &active, &centroids, &mut labels);
    push_objective(&mut trace, objective);

    let mut energy = vec![0.0; k];
    for &tf in &active {
        energy[labels[tf]] += wv[tf];
    }
    Ok(KMeansResult {
        attractors: AttractorSet {
            dim: v.embed_dim(),
            vectors: centroids,
            provenance: Provenance::KMeans,
            mask_energy: energy,
            iterations_used: Some(iterations),
            inertia: Some(objective),
        },
        assignment: Assignment { labels },
        objective_trace: trace,
    })
}

fn push_objective(trace: &mut Vec<f64>, objective: f64) {
    if let Some(&prev) = trace.last() {
        debug_assert!(
            objective <= prev + OBJECTIVE_SLACK * (1.0 + prev.abs()),
            "spherical k-means objective increased: {prev} -> {objective}"
        );
    }
    trace.push(objective);
}

fn count_distinct_rows(v: &EmbeddingField, active: &[usize], enough: usize) -> usize {
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    for &tf in active {
        seen.insert(v.row(tf).iter().map(|x| x.to_bits()).collect());
        if seen.len() >= enough {
            break;
        }
    }
    seen.len()
}

/// Assigns every active bin and returns the objective.
fn assign(
    v: &EmbeddingField,
    norms: &[f64],
    w: &[f64],
    active: &[usize],
    centroids: &[Vec<f64>],
    labels: &mut [usize],
) -> f64 {
    let best = |tf: usize| -> (usize, f64) {
        let row = v.row(tf);
        let mut best = (0, dot(row, &centroids[0]));
        for (j, c) in centroids.iter().enumerate().skip(1) {
            let s = dot(row, c);
            if s > best.1 {
                best = (j, s);
            }
        }
        best
    };
    #[cfg(feature = "parallel")]
    let picks: Vec<(usize, f64)> = {
        use rayon::prelude::*;
        active.par_iter().map(|&tf| best(tf)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let picks: Vec<(usize, f64)> = active.iter().map(|&tf| best(tf)).collect();

    let mut objective = 0.0;
    for (&tf, &(j, s)) in active.iter().zip(&picks) {
        labels[tf] = j;
        objective += w[tf] * (norms[tf] - s).max(0.0);
    }
    objective
}

fn cos_distance_to_nearest(row: &[f64], norm: f64, chosen: &[Vec<f64>]) -> f64 {
    let best = chosen
        .iter()
        .map(|c| dot(row, c) / norm)
        .fold(f64::NEG_INFINITY, f64::max);
    (1.0 - best).max(0.0)
}

fn sample_index(scores: &[f64], rng: &mut ChaCha8Rng) -> Option<usize> {
    let total: f64 = scores.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &s) in scores.iter().enumerate() {
        acc += s;
        if u < acc {
            return Some(i);
        }
    }
    scores.iter().rposition(|&s| s > 0.0)
}

fn init_plus_plus(
    v: &EmbeddingField,
    norms: &[f64],
    w: &[f64],
    active: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let unit = |tf: usize| -> Vec<f64> { v.row(tf).iter().map(|x| x / norms[tf]).collect() };
    let weights: Vec<f64> = active.iter().map(|&tf| w[tf]).collect();
    let first = sample_index(&weights, rng).unwrap_or_else(|| rng.random_range(0..active.len()));
    let mut chosen = vec![unit(active[first])];
    while chosen.len() < k {
        let dist: Vec<f64> = active
            .iter()
            .map(|&tf| cos_distance_to_nearest(v.row(tf), norms[tf], &chosen))
            .collect();
        let scores: Vec<f64> = dist.iter().zip(&weights).map(|(d, w)| d * w).collect();
        let pick = sample_index(&scores, rng)
            .or_else(|| sample_index(&dist, rng))
            .unwrap_or_else(|| rng.random_range(0..active.len()));
        chosen.push(unit(active[pick]));
    }
    chosen
}

/// Bin with the largest `w * cosine distance` to its current centroid,
/// excluding bins already used to reseed this round.
fn worst_assigned(
    v: &EmbeddingField,
    norms: &[f64],
    w: &[f64],
    active: &[usize],
    centroids: &[Vec<f64>],
    labels: &[usize],
    exclude: &[usize],
) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for &tf in active {
        if exclude.contains(&tf) {
            continue;
        }
        let score = w[tf] * (1.0 - dot(v.row(tf), &centroids[labels[tf]]) / norms[tf]);
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((tf, score));
        }
    }
    best.map(|(tf, _)| tf).unwrap_or(active[0])
}

/// Cosine similarity between every pair of attractors, `K_a x K_b`.
pub fn attractor_similarity(a: &AttractorSet, b: &AttractorSet) -> Result<Vec<Vec<f64>>> {
    if a.dim != b.dim {
        return Err(Error::Dimension(format!("attractor dims {} vs {}", a.dim, b.dim)));
    }
    Ok(a.vectors
        .iter()
        .map(|x| {
            b.vectors
                .iter()
                .map(|y| (dot(x, y) / (l2(x) * l2(y))).clamp(-1.0, 1.0))
                .collect()
        })
        .collect())
}

/// Encode, embed, weight by energy and cluster a reference recording into
/// `k` attractors. All `k` are returned with their mask energies; choosing
/// the target speaker is left to the caller.
pub fn extract_reference_attractors(
    reference: &Waveform,
    codec: &CodecWeights,
    embedder: &Embedder,
    k: usize,
    seed: u64,
) -> Result<AttractorSet> {
    reference.require_separation_rate()?;
    let e_x = codec.encode(reference)?;
    let v = embedder.embed(&e_x, codec)?;
    let w = energy_weights(&e_x)?;
    Ok(spherical_kmeans(&v, &w, k, seed, &KMeansOptions::default())?.attractors)
}
