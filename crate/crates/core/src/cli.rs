//! `sanet` command-line interface.
//!
//! Every command prints `key=value` lines on success. Exit codes: 0 when all
//! outputs were written, 2 for invalid input or arguments, 1 for internal
//! failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::attractor::{attractor_similarity, extract_reference_attractors, AttractorSet};
use crate::audio::{read_wav, write_wav, Waveform};
use crate::codec::{pretrain_codec, reconstruction_si_sdr, CodecWeights, PretrainConfig};
use crate::embedder::{random_unit_attractors, Embedder, OracleSpec, TcnConfig, TcnWeights};
use crate::error::{Error, Result};
use crate::masking::l2;
use crate::mixsim::{convolve_rir, mix, sample_gain, separate, si_sdr};
use crate::synth;

#[derive(Debug, Parser)]
#[command(name = "sanet", version, about = "Speaker-attractor separation toolkit")]
pub struct Cli {
    /// Worker threads for parallel stages. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mix two recordings with gains r and 1-r.
    Mix(MixArgs),
    /// Pretrain the codec as an autoencoder on a directory of WAV clips.
    PretrainCodec(PretrainArgs),
    /// Extract K speaker attractors from a reference recording.
    Extract(ExtractArgs),
    /// Separate a mixture into K source estimates.
    Separate(SeparateArgs),
    /// Print the SI-SDR of an estimate against a reference.
    Eval(EvalArgs),
    /// Convolve a recording with a room impulse response.
    Rir(RirArgs),
    /// Describe an attractor file.
    Info(InfoArgs),
    /// Write random, well-separated fixture attractors.
    Fixture(FixtureArgs),
    /// Write random TCN weights.
    InitTcn(InitTcnArgs),
    /// Write a synthetic test signal.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("gain_source").required(true).args(["gain", "seed"])))]
pub struct MixArgs {
    #[arg(long = "in-a")]
    pub in_a: PathBuf,
    #[arg(long = "in-b")]
    pub in_b: PathBuf,
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[arg(long = "corpus-dir")]
    pub corpus_dir: PathBuf,
    #[arg(long = "feature-dim")]
    pub feature_dim: usize,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub lr: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "batch-frames", default_value_t = 256)]
    pub batch_frames: usize,
    #[arg(long, default_value_t = crate::codec::DEFAULT_WINDOW)]
    pub window: usize,
    #[arg(long, default_value_t = crate::codec::DEFAULT_HOP)]
    pub hop: usize,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    /// `tcn:PATH` or `oracle:PATH`.
    #[arg(long)]
    pub embedder: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub codec: PathBuf,
    /// `tcn:PATH` or `oracle:PATH`.
    #[arg(long)]
    pub embedder: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub est: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
}

#[derive(Debug, Args)]
pub struct RirArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub rir: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(long)]
    pub emb: PathBuf,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    /// Largest allowed pairwise cosine similarity.
    #[arg(long = "max-cosine", default_value_t = 0.0)]
    pub max_cosine: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InitTcnArgs {
    #[arg(long = "feature-dim")]
    pub feature_dim: usize,
    #[arg(long = "embed-dim", default_value_t = 128)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub bottleneck: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long = "kernel-size", default_value_t = 3)]
    pub kernel_size: usize,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    #[arg(long, default_value_t = 2)]
    pub repeats: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Tone,
    Noise,
    Sine,
    Impulse,
    Rir,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Frequency for `sine` (default 440), delay in samples for `impulse`
    /// (default 0).
    #[arg(long)]
    pub param: Option<f64>,
    #[arg(long = "sample-rate", default_value_t = crate::audio::SEPARATION_RATE)]
    pub sample_rate: u32,
    #[arg(long)]
    pub out: PathBuf,
}

/// Oracle embedder description, as read from an `oracle:PATH` TOML file.
/// Relative paths resolve against the file's directory.
///
/// ```toml
/// attractors = "fixtures.saeb"   # one fixture attractor per source
/// sources = ["a.wav", "b.wav"]   # each source as it appears in the mixture
/// noise_sigma = 0.05
/// seed = 7
/// ```
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleFile {
    pub attractors: PathBuf,
    pub sources: Vec<PathBuf>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Resolves an embedder spec of the form `tcn:PATH` or `oracle:PATH`.
pub fn load_embedder(spec: &str) -> Result<Embedder> {
    let (kind, path) = spec
        .split_once(':')
        .ok_or_else(|| Error::Parameter(format!("embedder `{spec}` must be tcn:PATH or oracle:PATH")))?;
    match kind {
        "tcn" => Ok(Embedder::Tcn(TcnWeights::load(path)?)),
        "oracle" => {
            let path = Path::new(path);
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let file: OracleFile = toml::from_str(&text)
                .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            let attractors = AttractorSet::load(base.join(&file.attractors))?;
            let sources = file
                .sources
                .iter()
                .map(|p| read_wav(base.join(p)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Embedder::Oracle(OracleSpec {
                sources,
                attractors,
                noise_sigma: file.noise_sigma,
                seed: file.seed,
            }))
        }
        other => Err(Error::Parameter(format!("unknown embedder kind `{other}`"))),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_internal() {
                1
            } else {
                2
            }
        }
    }
}

/// Runs a parsed command, returning its `key=value` output lines.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        return pool.install(|| dispatch(&cli.command));
    }
    dispatch(&cli.command)
}

fn dispatch(cmd: &Command) -> Result<Vec<String>> {
    match cmd {
        Command::Mix(a) => cmd_mix(a),
        Command::PretrainCodec(a) => cmd_pretrain_codec(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Separate(a) => cmd_separate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Rir(a) => cmd_rir(a),
        Command::Info(a) => cmd_info(a),
        Command::Fixture(a) => cmd_fixture(a),
        Command::InitTcn(a) => cmd_init_tcn(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn cmd_mix(a: &MixArgs) -> Result<Vec<String>> {
    let gain = match (a.gain, a.seed) {
        (Some(g), _) => g,
        (None, Some(s)) => sample_gain(s),
        (None, None) => return Err(Error::Parameter("need --gain or --seed".into())),
    };
    // validate before touching any file
    crate::mixsim::MixSpec::new(gain, a.seed.unwrap_or(0))?;
    let x = read_wav(&a.in_a)?;
    let y = read_wav(&a.in_b)?;
    let out = mix(&x, &y, gain)?;
    write_wav(&a.out, &out)?;
    Ok(vec![format!("gain={gain:.6}"), format!("samples={}", out.len())])
}

fn cmd_pretrain_codec(a: &PretrainArgs) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(&a.corpus_dir).map_err(|e| Error::io(&a.corpus_dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Input(format!("no .wav files in {}", a.corpus_dir.display())));
    }
    let corpus = paths.iter().map(read_wav).collect::<Result<Vec<_>>>()?;
    let init = CodecWeights::init(a.feature_dim, a.window, a.hop, a.seed)?;
    let cfg = PretrainConfig {
        steps: a.steps,
        learning_rate: a.lr,
        batch_frames: a.batch_frames,
        seed: a.seed,
    };
    let outcome = pretrain_codec(&corpus, init, &cfg)?;
    let weights = outcome.weights.quantized();
    weights.save(&a.out)?;
    let score = reconstruction_si_sdr(&corpus, &weights)?;
    let mut lines = vec![
        format!("clips={}", corpus.len()),
        format!("steps={}", a.steps),
    ];
    if let Some(l) = outcome.losses.last() {
        lines.push(format!("final_loss={l:.6e}"));
    }
    lines.push(format!("si_sdr_db={score:.2}"));
    Ok(lines)
}

fn cmd_extract(a: &ExtractArgs) -> Result<Vec<String>> {
    let codec = CodecWeights::load(&a.codec)?;
    let embedder = load_embedder(&a.embedder)?;
    let reference = read_wav(&a.input)?;
    let set = extract_reference_attractors(&reference, &codec, &embedder, a.k, a.seed)?;
    set.save(&a.out)?;
    let mut lines = vec![format!("k={}", set.k()), format!("d={}", set.dim())];
    for (i, e) in set.mask_energy().iter().enumerate() {
        lines.push(format!("mask_energy_{i}={e:.6}"));
    }
    lines.push(format!("strongest={}", set.strongest()));
    Ok(lines)
}

fn cmd_separate(a: &SeparateArgs) -> Result<Vec<String>> {
    let codec = CodecWeights::load(&a.codec)?;
    let embedder = load_embedder(&a.embedder)?;
    let mixture = read_wav(&a.input)?;
    let sep = separate(&mixture, &codec, &embedder, a.k, a.temperature, a.seed)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let mut lines = vec![format!("k={}", a.k)];
    for (i, est) in sep.estimates.iter().enumerate() {
        let p = a.out_dir.join(format!("est_{i}.wav"));
        write_wav(&p, est)?;
        lines.push(format!("est_{i}={}", p.display()));
    }
    let p = a.out_dir.join("attractors.saeb");
    sep.attractors.save(&p)?;
    lines.push(format!("attractors={}", p.display()));
    Ok(lines)
}

fn cmd_eval(a: &EvalArgs) -> Result<Vec<String>> {
    let est = read_wav(&a.est)?;
    let reference = read_wav(&a.reference)?;
    let v = si_sdr(&est, &reference)?;
    Ok(vec![format!("si_sdr_db={v:.2}")])
}

fn cmd_rir(a: &RirArgs) -> Result<Vec<String>> {
    let x = read_wav(&a.input)?;
    let h = read_wav(&a.rir)?;
    let y = convolve_rir(&x, &h)?;
    write_wav(&a.out, &y)?;
    Ok(vec![format!("samples={}", y.len()), format!("rir_taps={}", h.len())])
}

fn cmd_info(a: &InfoArgs) -> Result<Vec<String>> {
    let set = AttractorSet::load(&a.emb)?;
    let mut lines = vec![
        format!("k={}", set.k()),
        format!("d={}", set.dim()),
        format!("provenance={}", set.provenance().name()),
    ];
    for (i, v) in set.vectors().iter().enumerate() {
        lines.push(format!("norm_{i}={:.6}", l2(v)));
    }
    for (i, e) in set.mask_energy().iter().enumerate() {
        lines.push(format!("mask_energy_{i}={e:.6}"));
    }
    let sim = attractor_similarity(&set, &set)?;
    for i in 0..set.k() {
        for j in i + 1..set.k() {
            // print +0 for tiny negatives so orthogonal files read 0.000000
            let c = if sim[i][j].abs() < 5e-7 { 0.0 } else { sim[i][j] };
            lines.push(format!("cos_{i}_{j}={c:.6}"));
        }
    }
    Ok(lines)
}

fn cmd_fixture(a: &FixtureArgs) -> Result<Vec<String>> {
    let set = random_unit_attractors(a.k, a.dim, a.max_cosine, a.seed)?.quantized();
    set.save(&a.out)?;
    Ok(vec![format!("k={}", set.k()), format!("d={}", set.dim())])
}

fn cmd_init_tcn(a: &InitTcnArgs) -> Result<Vec<String>> {
    let cfg = TcnConfig {
        feature_dim: a.feature_dim,
        embed_dim: a.embed_dim,
        bottleneck: a.bottleneck,
        hidden: a.hidden,
        kernel_size: a.kernel_size,
        blocks_per_repeat: a.blocks,
        repeats: a.repeats,
    };
    let w = TcnWeights::random(cfg, a.seed)?;
    w.save(&a.out)?;
    Ok(vec![format!("tensors={}", w.tensors().len())])
}

fn cmd_synth(a: &SynthArgs) -> Result<Vec<String>> {
    if !(a.seconds.is_finite() && a.seconds > 0.0) {
        return Err(Error::Parameter("--seconds must be positive".into()));
    }
    let sr = a.sample_rate;
    let wave = match a.kind {
        SynthKind::Tone => synth::multi_tone(a.seconds, sr, a.seed),
        SynthKind::Noise => synth::filtered_noise(a.seconds, sr, a.seed),
        SynthKind::Sine => synth::sinusoid(a.param.unwrap_or(440.0), a.seconds, sr, 0.5),
        SynthKind::Rir => synth::room_impulse_response(a.seconds, sr, a.seed),
        SynthKind::Impulse => {
            let delay = a.param.unwrap_or(0.0);
            if !(delay.is_finite() && delay >= 0.0) {
                return Err(Error::Parameter("impulse delay must be a nonnegative sample count".into()));
            }
            let delay = delay as usize;
            let mut s = vec![0.0; delay + 1];
            s[delay] = 1.0 - 1.0 / 32768.0;
            Waveform::new(s, sr)?
        }
    };
    write_wav(&a.out, &wave)?;
    Ok(vec![format!("samples={}", wave.len())])
}
