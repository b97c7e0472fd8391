//! Temporal convolution network (forward pass only).
//!
//! Layout: a per-frame input projection `F -> B`, then `R` repeats of `X`
//! residual blocks, then a per-frame projection `B -> F*D` reshaped into one
//! `D`-vector per TF bin. Each block is
//!
//! ```text
//! 1x1 conv B->H, ReLU, gLN, depthwise conv (kernel P, dilation 2^x), ReLU, gLN, 1x1 conv H->B, + residual
//! ```
//!
//! where `x` is the block's index within its repeat and gLN normalizes over
//! all frames and channels with a learned per-channel gain and bias.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::binfmt::{self, ByteReader, ByteWriter};
use crate::codec::TFRepresentation;
use crate::embedder::EmbeddingField;
use crate::error::{Error, Result};

const SATW_MAGIC: &[u8; 4] = b"SATW";
const SATW_VERSION: u32 = 1;
const GLN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcnConfig {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub bottleneck: usize,
    pub hidden: usize,
    pub kernel_size: usize,
    pub blocks_per_repeat: usize,
    pub repeats: usize,
}

impl TcnConfig {
    /// Default network for a codec with `feature_dim` features:
    /// B=128, H=256, P=3, X=4, R=2, D=128.
    pub fn for_features(feature_dim: usize) -> Self {
        TcnConfig {
            feature_dim,
            embed_dim: 128,
            bottleneck: 128,
            hidden: 256,
            kernel_size: 3,
            blocks_per_repeat: 4,
            repeats: 2,
        }
    }

    fn validate(&self) -> Result<()> {
        let dims = [
            self.feature_dim,
            self.embed_dim,
            self.bottleneck,
            self.hidden,
            self.kernel_size,
            self.blocks_per_repeat,
            self.repeats,
        ];
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("all TCN dimensions must be >= 1: {self:?}")));
        }
        if dims.iter().any(|&d| u32::try_from(d).is_err()) || self.blocks_per_repeat > 31 {
            return Err(Error::Dimension(format!("TCN dimensions out of range: {self:?}")));
        }
        Ok(())
    }

    /// Size of the SATW payload after the header, `None` on overflow.
    fn payload_bytes(&self) -> Option<usize> {
        let (f, d, b, h, p) = (
            self.feature_dim,
            self.embed_dim,
            self.bottleneck,
            self.hidden,
            self.kernel_size,
        );
        let blocks = self.repeats.checked_mul(self.blocks_per_repeat)?;
        let hb = h.checked_mul(b)?;
        let per_block = hb
            .checked_mul(2)?
            .checked_add(h.checked_mul(p)?)?
            .checked_add(h.checked_mul(6)?)?
            .checked_add(b)?
            .checked_add(10)?;
        let fd = f.checked_mul(d)?;
        let outer = b
            .checked_mul(f)?
            .checked_add(b)?
            .checked_add(fd.checked_mul(b)?)?
            .checked_add(fd)?
            .checked_add(4)?;
        blocks.checked_mul(per_block)?.checked_add(outer)?.checked_mul(4)
    }

    /// `(name, element count)` of every tensor in file order.
    fn tensor_shapes(&self) -> Vec<(String, usize)> {
        let (f, d, b, h, p) = (
            self.feature_dim,
            self.embed_dim,
            self.bottleneck,
            self.hidden,
            self.kernel_size,
        );
        let mut out = vec![
            ("input_proj.weight".to_string(), b * f),
            ("input_proj.bias".to_string(), b),
        ];
        for r in 0..self.repeats {
            for x in 0..self.blocks_per_repeat {
                let n = format!("block{r}.{x}");
                out.extend([
                    (format!("{n}.conv_in.weight"), h * b),
                    (format!("{n}.conv_in.bias"), h),
                    (format!("{n}.norm1.gain"), h),
                    (format!("{n}.norm1.bias"), h),
                    (format!("{n}.depthwise.weight"), h * p),
                    (format!("{n}.depthwise.bias"), h),
                    (format!("{n}.norm2.gain"), h),
                    (format!("{n}.norm2.bias"), h),
                    (format!("{n}.conv_out.weight"), b * h),
                    (format!("{n}.conv_out.bias"), b),
                ]);
            }
        }
        out.push(("output.weight".to_string(), f * d * b));
        out.push(("output.bias".to_string(), f * d));
        out
    }
}

/// Network weights as a flat tensor list in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct TcnWeights {
    config: TcnConfig,
    tensors: Vec<Vec<f64>>,
}

impl TcnWeights {
    pub fn from_tensors(config: TcnConfig, tensors: Vec<Vec<f64>>) -> Result<Self> {
        config.validate()?;
        let shapes = config.tensor_shapes();
        if tensors.len() != shapes.len() {
            return Err(Error::Dimension(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, n), t) in shapes.iter().zip(&tensors) {
            if t.len() != *n {
                return Err(Error::Dimension(format!("{name}: expected {n} values, got {}", t.len())));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("{name} contains non-finite values")));
            }
        }
        Ok(TcnWeights { config, tensors })
    }

    pub fn zeros(config: TcnConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config.tensor_shapes().into_iter().map(|(_, n)| vec![0.0; n]).collect();
        Ok(TcnWeights { config, tensors })
    }

    /// Random weights scaled by `1/sqrt(fan_in)`, unit norm gains, zero biases,
    /// rounded to `f32`.
    pub fn random(config: TcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = config;
        let mut tensors = Vec::new();
        for (name, n) in c.tensor_shapes() {
            let fan_in = if name.starts_with("input_proj") {
                c.feature_dim
            } else if name.contains("conv_in") || name.starts_with("output") {
                c.bottleneck
            } else if name.contains("depthwise") {
                c.kernel_size
            } else {
                c.hidden
            };
            let t: Vec<f64> = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                let s = 1.0 / (fan_in as f64).sqrt();
                (0..n)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        f64::from((z * s) as f32)
                    })
                    .collect()
            };
            tensors.push(t);
        }
        Ok(TcnWeights { config, tensors })
    }

    pub fn config(&self) -> &TcnConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Vec<f64>] {
        &self.tensors
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut w = ByteWriter::new(SATW_MAGIC, SATW_VERSION);
        for d in [
            c.feature_dim,
            c.embed_dim,
            c.bottleneck,
            c.hidden,
            c.kernel_size,
            c.blocks_per_repeat,
            c.repeats,
        ] {
            w.u32(d as u32);
        }
        for t in &self.tensors {
            w.u32(t.len() as u32);
            w.f32s(t);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, SATW_MAGIC, SATW_VERSION)?;
        let header_at = r.offset();
        let mut dims = [0usize; 7];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let config = TcnConfig {
            feature_dim: dims[0],
            embed_dim: dims[1],
            bottleneck: dims[2],
            hidden: dims[3],
            kernel_size: dims[4],
            blocks_per_repeat: dims[5],
            repeats: dims[6],
        };
        config
            .validate()
            .map_err(|e| Error::format(header_at, e.to_string()))?;
        let payload = config.payload_bytes();
        if payload != Some(r.remaining()) {
            return Err(Error::format(
                r.offset(),
                format!(
                    "header dims imply {} payload bytes but {} follow",
                    payload.map_or("too many".to_string(), |n| n.to_string()),
                    r.remaining()
                ),
            ));
        }
        let shapes = config.tensor_shapes();
        let mut tensors = Vec::with_capacity(shapes.len());
        for (name, n) in shapes {
            let at = r.offset();
            let count = r.u32()? as usize;
            if count != n {
                return Err(Error::format(
                    at,
                    format!("{name}: header dims imply {n} values, file declares {count}"),
                ));
            }
            tensors.push(r.f32s(n)?);
        }
        r.expect_end()?;
        Ok(TcnWeights { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        binfmt::write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&binfmt::read_file(path.as_ref())?)
    }
}

/// Row-major `frames x channels` activations.
struct Activations {
    frames: usize,
    channels: usize,
    data: Vec<f64>,
}

fn for_each_frame(data: &mut [f64], width: usize, op: impl Fn(usize, &mut [f64]) + Sync + Send) {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(width).enumerate().for_each(|(t, row)| op(t, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width).enumerate().for_each(|(t, row)| op(t, row));
    }
}

fn pointwise(input: &Activations, weight: &[f64], bias: &[f64]) -> Activations {
    let (cin, cout) = (input.channels, bias.len());
    let mut data = vec![0.0; input.frames * cout];
    for_each_frame(&mut data, cout, |t, row| {
        let x = &input.data[t * cin..(t + 1) * cin];
        for (o, out) in row.iter_mut().enumerate() {
            let w = &weight[o * cin..(o + 1) * cin];
            *out = bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    });
    Activations {
        frames: input.frames,
        channels: cout,
        data,
    }
}

fn relu(a: &mut Activations) {
    for v in &mut a.data {
        *v = v.max(0.0);
    }
}

fn global_layer_norm(a: &mut Activations, gain: &[f64], bias: &[f64]) {
    let n = a.data.len() as f64;
    let mean = a.data.iter().sum::<f64>() / n;
    let var = a.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + GLN_EPS).sqrt();
    for row in a.data.chunks_exact_mut(a.channels) {
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = g * (*v - mean) * inv + b;
        }
    }
}

fn depthwise(input: &Activations, weight: &[f64], bias: &[f64], kernel: usize, dilation: usize) -> Activations {
    let (frames, ch) = (input.frames, input.channels);
    let left = dilation * (kernel - 1) / 2;
    let mut data = vec![0.0; frames * ch];
    for_each_frame(&mut data, ch, |t, row| {
        for (c, out) in row.iter_mut().enumerate() {
            let mut acc = bias[c];
            for p in 0..kernel {
                let src = (t + p * dilation) as isize - left as isize;
                if src >= 0 && (src as usize) < frames {
                    acc += weight[c * kernel + p] * input.data[src as usize * ch + c];
                }
            }
            *out = acc;
        }
    });
    Activations {
        frames,
        channels: ch,
        data,
    }
}

fn check_finite(a: &Activations, layer: impl FnOnce() -> String) -> Result<()> {
    if a.data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer: layer() })
    }
}

/// Forward pass producing one `D`-vector per TF bin of `e_x`.
pub fn tcn_forward(e_x: &TFRepresentation, w: &TcnWeights) -> Result<EmbeddingField> {
    let c = &w.config;
    if e_x.feature_dim() != c.feature_dim {
        return Err(Error::Dimension(format!(
            "representation has {} features, network expects {}",
            e_x.feature_dim(),
            c.feature_dim
        )));
    }
    let input = Activations {
        frames: e_x.frames(),
        channels: c.feature_dim,
        data: e_x.values().to_vec(),
    };
    let mut t = w.tensors.iter();
    let mut next = || t.next().expect("tensor list validated at construction").as_slice();

    let mut x = pointwise(&input, next(), next());
    check_finite(&x, || "input_proj".into())?;
    for r in 0..c.repeats {
        for b in 0..c.blocks_per_repeat {
            let name = format!("block{r}.{b}");
            let mut h = pointwise(&x, next(), next());
            relu(&mut h);
            global_layer_norm(&mut h, next(), next());
            let mut h = depthwise(&h, next(), next(), c.kernel_size, 1 << b);
            relu(&mut h);
            global_layer_norm(&mut h, next(), next());
            let y = pointwise(&h, next(), next());
            for (xv, yv) in x.data.iter_mut().zip(&y.data) {
                *xv += yv;
            }
            check_finite(&x, || name)?;
        }
    }
    let out = pointwise(&x, next(), next());
    check_finite(&out, || "output".into())?;
    // frame row of F*D values is already bin-major: (f, d) -> f*D + d
    Ok(EmbeddingField::from_parts_unchecked(
        e_x.frames(),
        c.feature_dim,
        c.embed_dim,
        out.data,
    ))
}
