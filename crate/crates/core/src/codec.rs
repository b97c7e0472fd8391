//! Learned waveform <-> time-frequency codec.
//!
//! The encoder is one strided convolution followed by a rectifier, the decoder
//! one transposed convolution (overlap-add) with no activation. Neither layer
//! has a bias. Pretraining fits both kernels as an autoencoder with plain
//! gradient descent on the reconstruction MSE.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::Waveform;
use crate::binfmt::{self, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::mixsim::si_sdr;

pub const DEFAULT_WINDOW: usize = 16;
pub const DEFAULT_HOP: usize = 8;
pub const DEFAULT_FEATURE_DIM: usize = 256;

const SACW_MAGIC: &[u8; 4] = b"SACW";
const SACW_VERSION: u32 = 1;

/// Encoder and decoder kernels, both stored row-major as `feature_dim x window`.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecWeights {
    feature_dim: usize,
    window: usize,
    hop: usize,
    encoder: Vec<f64>,
    decoder: Vec<f64>,
}

/// Nonnegative frame-by-feature matrix, row-major `frames x feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TFRepresentation {
    frames: usize,
    feature_dim: usize,
    values: Vec<f64>,
}

impl TFRepresentation {
    pub fn new(frames: usize, feature_dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != frames * feature_dim {
            return Err(Error::Dimension(format!(
                "{} values for a {frames}x{feature_dim} representation",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("representation contains non-finite values".into()));
        }
        Ok(TFRepresentation {
            frames,
            feature_dim,
            values,
        })
    }

    pub fn zeros(frames: usize, feature_dim: usize) -> Self {
        TFRepresentation {
            frames,
            feature_dim,
            values: vec![0.0; frames * feature_dim],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of TF bins, `frames * feature_dim`.
    pub fn bins(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize, feature: usize) -> f64 {
        self.values[frame * self.feature_dim + feature]
    }

    pub fn scaled(&self, alpha: f64) -> TFRepresentation {
        TFRepresentation {
            frames: self.frames,
            feature_dim: self.feature_dim,
            values: self.values.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn same_shape(&self, other: &TFRepresentation) -> bool {
        self.frames == other.frames && self.feature_dim == other.feature_dim
    }

    /// Keeps only the first `frames` frames.
    pub fn leading_frames(&self, frames: usize) -> TFRepresentation {
        let frames = frames.min(self.frames);
        TFRepresentation {
            frames,
            feature_dim: self.feature_dim,
            values: self.values[..frames * self.feature_dim].to_vec(),
        }
    }

    pub(crate) fn from_parts_unchecked(frames: usize, feature_dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), frames * feature_dim);
        TFRepresentation {
            frames,
            feature_dim,
            values,
        }
    }
}

/// Frame count for `len` samples, or `None` when the input is shorter than one window.
pub fn frame_count(len: usize, window: usize, hop: usize) -> Option<usize> {
    (len >= window).then(|| (len - window) / hop + 1)
}

/// Samples covered by `frames` complete frames.
pub fn reconstructed_len(frames: usize, window: usize, hop: usize) -> usize {
    if frames == 0 {
        0
    } else {
        (frames - 1) * hop + window
    }
}

impl CodecWeights {
    /// Random kernels drawn from a normal distribution with standard deviation
    /// `1/sqrt(window)`, truncated at four deviations and rounded to `f32`.
    pub fn init(feature_dim: usize, window: usize, hop: usize, seed: u64) -> Result<Self> {
        check_dims(feature_dim, window, hop)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (window as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| loop {
                    let z: f64 = rng.sample(StandardNormal);
                    if z.abs() <= 4.0 {
                        break f64::from((z * scale) as f32);
                    }
                })
                .collect()
        };
        let encoder = draw(feature_dim * window);
        let decoder = draw(feature_dim * window);
        Ok(CodecWeights {
            feature_dim,
            window,
            hop,
            encoder,
            decoder,
        })
    }

    pub fn from_kernels(
        feature_dim: usize,
        window: usize,
        hop: usize,
        encoder: Vec<f64>,
        decoder: Vec<f64>,
    ) -> Result<Self> {
        check_dims(feature_dim, window, hop)?;
        let n = feature_dim * window;
        if encoder.len() != n || decoder.len() != n {
            return Err(Error::Dimension(format!(
                "kernels must hold {n} values, got {} and {}",
                encoder.len(),
                decoder.len()
            )));
        }
        if encoder.iter().chain(&decoder).any(|v| !v.is_finite()) {
            return Err(Error::Input("kernel entries must be finite".into()));
        }
        Ok(CodecWeights {
            feature_dim,
            window,
            hop,
            encoder,
            decoder,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn encoder_kernel(&self) -> &[f64] {
        &self.encoder
    }

    pub fn decoder_kernel(&self) -> &[f64] {
        &self.decoder
    }

    pub fn frame_count(&self, len: usize) -> Option<usize> {
        frame_count(len, self.window, self.hop)
    }

    pub fn reconstructed_len(&self, frames: usize) -> usize {
        reconstructed_len(frames, self.window, self.hop)
    }

    pub fn encode(&self, wave: &Waveform) -> Result<TFRepresentation> {
        self.encode_samples(wave.samples())
    }

    pub fn encode_samples(&self, x: &[f64]) -> Result<TFRepresentation> {
        let pre = self.pre_activations(x)?;
        Ok(TFRepresentation::from_parts_unchecked(
            pre.frames,
            pre.feature_dim,
            pre.values.into_iter().map(|v| v.max(0.0)).collect(),
        ))
    }

    fn pre_activations(&self, x: &[f64]) -> Result<TFRepresentation> {
        let (w, hop, fdim) = (self.window, self.hop, self.feature_dim);
        let frames = frame_count(x.len(), w, hop).ok_or(Error::Length {
            needed: w,
            got: x.len(),
        })?;
        let mut values = vec![0.0; frames * fdim];
        for (t, row) in values.chunks_exact_mut(fdim).enumerate() {
            let frame = &x[t * hop..t * hop + w];
            for (f, out) in row.iter_mut().enumerate() {
                *out = dot(&self.encoder[f * w..(f + 1) * w], frame);
            }
        }
        Ok(TFRepresentation::from_parts_unchecked(frames, fdim, values))
    }

    pub fn decode(&self, tf: &TFRepresentation, sample_rate: u32) -> Result<Waveform> {
        Ok(Waveform::from_parts_unchecked(self.decode_samples(tf)?, sample_rate))
    }

    /// Overlap-add synthesis; output length is `(frames - 1) * hop + window`.
    pub fn decode_samples(&self, tf: &TFRepresentation) -> Result<Vec<f64>> {
        if tf.feature_dim != self.feature_dim {
            return Err(Error::Dimension(format!(
                "representation has {} features, codec has {}",
                tf.feature_dim, self.feature_dim
            )));
        }
        let (w, hop, fdim) = (self.window, self.hop, self.feature_dim);
        let mut out = vec![0.0; reconstructed_len(tf.frames, w, hop)];
        for (t, row) in tf.values.chunks_exact(fdim).enumerate() {
            let span = &mut out[t * hop..t * hop + w];
            for (f, &a) in row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &k) in span.iter_mut().zip(&self.decoder[f * w..(f + 1) * w]) {
                    *o += a * k;
                }
            }
        }
        Ok(out)
    }

    /// `decode(encode(x))`.
    pub fn round_trip(&self, wave: &Waveform) -> Result<Waveform> {
        let tf = self.encode(wave)?;
        self.decode(&tf, wave.sample_rate())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binfmt::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&binfmt::read_file(path.as_ref())?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(SACW_MAGIC, SACW_VERSION);
        w.u32(self.feature_dim as u32);
        w.u32(self.window as u32);
        w.u32(self.hop as u32);
        w.f32s(&self.encoder);
        w.f32s(&self.decoder);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, SACW_MAGIC, SACW_VERSION)?;
        let header_at = r.offset();
        let fdim = r.u32()? as usize;
        let window = r.u32()? as usize;
        let hop = r.u32()? as usize;
        check_dims(fdim, window, hop).map_err(|e| Error::format(header_at, e.to_string()))?;
        let n = fdim
            .checked_mul(window)
            .ok_or_else(|| Error::format(header_at, "kernel size overflows"))?;
        if r.remaining() != n.saturating_mul(8) {
            return Err(Error::format(
                r.offset(),
                format!(
                    "header declares {fdim}x{window} kernels ({} bytes) but {} bytes follow",
                    n.saturating_mul(8),
                    r.remaining()
                ),
            ));
        }
        let encoder = r.f32s(n)?;
        let decoder = r.f32s(n)?;
        r.expect_end()?;
        Ok(CodecWeights {
            feature_dim: fdim,
            window,
            hop,
            encoder,
            decoder,
        })
    }

    /// Rounds both kernels to `f32`, the precision of the SACW file.
    pub fn quantized(&self) -> CodecWeights {
        let mut q = self.clone();
        binfmt::quantize_f32(&mut q.encoder);
        binfmt::quantize_f32(&mut q.decoder);
        q
    }
}

fn check_dims(feature_dim: usize, window: usize, hop: usize) -> Result<()> {
    if feature_dim == 0 {
        return Err(Error::Dimension("feature_dim must be at least 1".into()));
    }
    if hop == 0 || hop > window {
        return Err(Error::Dimension(format!(
            "need 1 <= hop <= window, got hop={hop} window={window}"
        )));
    }
    if u32::try_from(feature_dim).is_err() || u32::try_from(window).is_err() {
        return Err(Error::Dimension("dimensions must fit in 32 bits".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reconstruction loss and its gradient with respect to both kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecGradient {
    /// Mean squared error over the reconstructed span.
    pub loss: f64,
    pub encoder: Vec<f64>,
    pub decoder: Vec<f64>,
}

/// Mean squared reconstruction error of `decode(encode(clip))` against the
/// covered part of `clip`.
pub fn reconstruction_loss(clip: &[f64], c: &CodecWeights) -> Result<f64> {
    let tf = c.encode_samples(clip)?;
    let y = c.decode_samples(&tf)?;
    Ok(y.iter().zip(clip).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

/// Analytic gradient of [`reconstruction_loss`].
pub fn codec_gradient(clip: &[f64], c: &CodecWeights) -> Result<CodecGradient> {
    let (w, hop, fdim) = (c.window, c.hop, c.feature_dim);
    let pre = c.pre_activations(clip)?;
    let act = TFRepresentation::from_parts_unchecked(
        pre.frames,
        fdim,
        pre.values.iter().map(|v| v.max(0.0)).collect(),
    );
    let y = c.decode_samples(&act)?;
    let len = y.len() as f64;
    let residual: Vec<f64> = y.iter().zip(clip).map(|(a, b)| a - b).collect();
    let loss = residual.iter().map(|r| r * r).sum::<f64>() / len;
    let grad_out: Vec<f64> = residual.iter().map(|r| 2.0 * r / len).collect();

    let decoder = decoder_gradient(&act, &grad_out, w, hop)?;

    let mut encoder = vec![0.0; fdim * w];
    for t in 0..pre.frames {
        let g = &grad_out[t * hop..t * hop + w];
        let x = &clip[t * hop..t * hop + w];
        for f in 0..fdim {
            if pre.values[t * fdim + f] <= 0.0 {
                continue;
            }
            let d_act = dot(&c.decoder[f * w..(f + 1) * w], g);
            for (e, &xk) in encoder[f * w..(f + 1) * w].iter_mut().zip(x) {
                *e += d_act * xk;
            }
        }
    }
    Ok(CodecGradient {
        loss,
        encoder,
        decoder,
    })
}

/// Gradient of a loss with respect to the decoder kernel, given the
/// activations fed to the decoder and the loss gradient at its output.
/// Linear in `grad_out`.
pub fn decoder_gradient(
    act: &TFRepresentation,
    grad_out: &[f64],
    window: usize,
    hop: usize,
) -> Result<Vec<f64>> {
    let needed = reconstructed_len(act.frames, window, hop);
    if grad_out.len() != needed {
        return Err(Error::Dimension(format!(
            "output gradient has {} samples, expected {needed}",
            grad_out.len()
        )));
    }
    let fdim = act.feature_dim;
    let mut out = vec![0.0; fdim * window];
    for (t, row) in act.values.chunks_exact(fdim).enumerate() {
        let g = &grad_out[t * hop..t * hop + window];
        for (f, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (o, &gk) in out[f * window..(f + 1) * window].iter_mut().zip(g) {
                *o += a * gk;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Frames per random training slice.
    pub batch_frames: usize,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 2000,
            learning_rate: 0.5,
            batch_frames: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub weights: CodecWeights,
    /// Loss of the slice used at each step, evaluated before that step's update.
    pub losses: Vec<f64>,
}

/// Fits the codec as an autoencoder with fixed-rate gradient descent on random
/// clip slices. Deterministic for a fixed seed.
pub fn pretrain_codec(
    corpus: &[Waveform],
    init: CodecWeights,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    pretrain_codec_with(corpus, init, cfg, |_, _| {})
}

/// [`pretrain_codec`] with a callback invoked after each step with the step
/// index and its loss.
pub fn pretrain_codec_with(
    corpus: &[Waveform],
    init: CodecWeights,
    cfg: &PretrainConfig,
    mut on_step: impl FnMut(usize, f64),
) -> Result<PretrainOutcome> {
    if corpus.is_empty() {
        return Err(Error::Input("pretraining corpus is empty".into()));
    }
    if let Some((i, clip)) = corpus.iter().enumerate().find(|(_, c)| c.len() < init.window) {
        return Err(Error::Input(format!(
            "clip {i} has {} samples, shorter than the {}-sample window",
            clip.len(),
            init.window
        )));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::Parameter("learning rate must be positive".into()));
    }
    if cfg.batch_frames == 0 {
        return Err(Error::Parameter("batch_frames must be at least 1".into()));
    }
    let mut weights = init;
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let slice_len = reconstructed_len(cfg.batch_frames, weights.window, weights.hop);
    for step in 0..cfg.steps {
        let clip = corpus[rng.random_range(0..corpus.len())].samples();
        let span = slice_len.min(clip.len());
        let start = rng.random_range(0..=clip.len() - span);
        let grad = codec_gradient(&clip[start..start + span], &weights)?;
        if !grad.loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        for (p, g) in weights.encoder.iter_mut().zip(&grad.encoder) {
            *p -= cfg.learning_rate * g;
        }
        for (p, g) in weights.decoder.iter_mut().zip(&grad.decoder) {
            *p -= cfg.learning_rate * g;
        }
        if weights.encoder.iter().chain(&weights.decoder).any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        losses.push(grad.loss);
        on_step(step, grad.loss);
    }
    Ok(PretrainOutcome { weights, losses })
}

/// Mean SI-SDR (dB) of `decode(encode(clip))` against each clip's covered span.
pub fn reconstruction_si_sdr(corpus: &[Waveform], c: &CodecWeights) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::Input("corpus is empty".into()));
    }
    let mut total = 0.0;
    for clip in corpus {
        let rec = c.round_trip(clip)?;
        total += si_sdr(&rec, &clip.truncated(rec.len()))?;
    }
    Ok(total / corpus.len() as f64)
}
