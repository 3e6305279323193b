//! The mono→FOA (and FOA→SOA) generation model: a learned analysis stack
//! feeding a k-source separation head (sigmoid band gains modulating the
//! input STFT) and a localization head (per-frame channel weights), with
//! the output channels assembled as φ_p(t) = Σᵢ wᵢ_p(t)·fᵢ(t). Includes
//! the spatial-prior baseline and ablation variants.

pub mod features;
mod prior;
mod train;

pub use prior::{prior_apply, prior_fit, PriorCoefficients};
pub use train::{train, TrainConfig, TrainReport};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AmbisonicSignal, Waveform};
use crate::autodiff::{spectrogram_to_tensor, Tape, Tensor, Var};
use crate::scenes::{HintFeatures, HINT_COLS, HINT_ROWS};
use crate::sphmath::channel_count;
use crate::stft::{stft, AttenuationMaps, StftConfig};
use crate::{Error, Result};

const HIDDEN: usize = 64;
/// Localization weights are tanh outputs scaled into [−2, 2].
const WEIGHT_RANGE: f64 = 2.0;
/// Separation-head output bias init: sigmoid(2) ≈ 0.88, near pass-through.
const SEP_BIAS_INIT: f64 = 2.0;

/// Architecture ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    /// No separation block: localization weights multiply the input mono
    /// directly.
    NoSep,
    /// No hint features: the heads see only the audio analysis stack.
    NoHints,
}

/// Parses an ablation name into a model variant.
pub fn ablate(name: &str) -> Result<Variant> {
    match name.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
        "full" | "default" => Ok(Variant::Full),
        "nosep" => Ok(Variant::NoSep),
        "nohints" => Ok(Variant::NoHints),
        _ => Err(Error::UnknownVariant(name.to_string())),
    }
}

/// Structural hyperparameters of the spatializer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Separated source count.
    pub k: usize,
    /// Input ambisonic order (0 = mono, 1 = FOA).
    pub order_in: usize,
    /// Output ambisonic order (1 = FOA, 2 = SOA).
    pub order_out: usize,
    pub sample_rate: u32,
    pub variant: Variant,
    /// Mel-style pooling / band-gain resolution.
    pub bands: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 8,
            order_in: 0,
            order_out: 1,
            sample_rate: 16_000,
            variant: Variant::Full,
            bands: 32,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order_in > 1 || self.order_out < 1 || self.order_out > 2
            || self.order_in >= self.order_out
        {
            return Err(Error::UnsupportedOrder(self.order_out));
        }
        if self.k == 0 || self.bands == 0 {
            return Err(Error::OutOfRange("k and bands must be positive".into()));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        channel_count(self.order_in)
    }

    /// Channels the model generates: (order_out+1)² − (order_in+1)².
    pub fn out_channels(&self) -> usize {
        channel_count(self.order_out) - channel_count(self.order_in)
    }

    fn feature_dim(&self) -> usize {
        match self.variant {
            Variant::NoHints => HIDDEN,
            _ => HIDDEN + HINT_ROWS * HINT_COLS,
        }
    }
}

/// Model parameters: configuration plus the learnable tensors of the
/// audio stack, separation head and localization head.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatializerParams {
    config: ModelConfig,
    stft: StftConfig,
    tensors: Vec<(String, Tensor)>,
}

impl SpatializerParams {
    /// Fresh parameters with uniform ±1/√fan_in init (seeded); the
    /// separation output bias starts at +2 so initial masks pass audio
    /// through.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let audio_in = config.bands * config.in_channels();
        let feat = config.feature_dim();
        let k = config.k;
        let out_ch = config.out_channels();

        let mut init = |rows: usize, cols: usize| -> Tensor {
            let bound = 1.0 / (rows as f64).sqrt();
            Tensor::matrix(
                rows,
                cols,
                (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
            )
            .expect("init shape")
        };

        let tensors = vec![
            ("audio_w1".into(), init(audio_in, HIDDEN)),
            ("audio_b1".into(), Tensor::zeros(vec![1, HIDDEN])),
            ("audio_w2".into(), init(HIDDEN, HIDDEN)),
            ("audio_b2".into(), Tensor::zeros(vec![1, HIDDEN])),
            ("sep_w1".into(), init(feat, HIDDEN)),
            ("sep_b1".into(), Tensor::zeros(vec![1, HIDDEN])),
            ("sep_w2".into(), init(HIDDEN, k * config.bands)),
            (
                "sep_b2".into(),
                Tensor::matrix(1, k * config.bands, vec![SEP_BIAS_INIT; k * config.bands])
                    .expect("bias shape"),
            ),
            ("loc_w1".into(), init(feat, HIDDEN)),
            ("loc_b1".into(), Tensor::zeros(vec![1, HIDDEN])),
            ("loc_w2".into(), init(HIDDEN, k * out_ch)),
            ("loc_b2".into(), Tensor::zeros(vec![1, k * out_ch])),
        ];

        Ok(Self { config, stft: StftConfig::for_sample_rate(config.sample_rate), tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn stft_config(&self) -> StftConfig {
        self.stft
    }

    pub fn tensors(&self) -> &[(String, Tensor)] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.tensors
    }

    /// Frames of the internally padded analysis spectrogram for an input
    /// of `len` samples.
    pub fn analysis_frames(&self, len: usize) -> usize {
        self.stft.num_frames(len + 2 * self.stft.window_len)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(&self.config)?;
        crate::autodiff::save_checkpoint(path, &self.tensors, &meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (tensors, meta) = crate::autodiff::load_checkpoint(path)?;
        let config: ModelConfig = serde_json::from_value(meta)?;
        let expected = Self::new(config)?;
        if expected.tensors.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.tensors.len(),
                tensors.len()
            )));
        }
        for ((name, loaded), (want_name, want)) in tensors.iter().zip(&expected.tensors) {
            if name != want_name || loaded.shape() != want.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` {:?} does not match expected `{want_name}` {:?}",
                    loaded.shape(),
                    want.shape()
                )));
            }
        }
        Ok(Self { config, stft: expected.stft, tensors })
    }
}

/// Per-frame localization weights for each source and generated channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationWeights {
    k: usize,
    out_channels: usize,
    /// [frames, k·out_channels], source-major columns.
    data: Tensor,
}

impl LocalizationWeights {
    pub fn new(k: usize, out_channels: usize, data: Tensor) -> Result<Self> {
        if data.cols() != k * out_channels {
            return Err(Error::ShapeMismatch(format!(
                "weights have {} columns, expected {}",
                data.cols(),
                k * out_channels
            )));
        }
        if data.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("localization weights must be finite".into()));
        }
        Ok(Self { k, out_channels, data })
    }

    /// Time-constant weights: `per_source[i]` holds the out_channels
    /// weights of source i.
    pub fn constant(frames: usize, per_source: &[Vec<f64>]) -> Result<Self> {
        let k = per_source.len();
        let out_channels = per_source.first().map_or(0, Vec::len);
        let mut row = Vec::with_capacity(k * out_channels);
        for source in per_source {
            if source.len() != out_channels {
                return Err(Error::ShapeMismatch("ragged per-source weights".into()));
            }
            row.extend_from_slice(source);
        }
        let data = Tensor::matrix(frames, k * out_channels, row.repeat(frames))?;
        Self::new(k, out_channels, data)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn at(&self, source: usize, frame: usize, channel: usize) -> f64 {
        self.data.at2(frame, source * self.out_channels + channel)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub maps: AttenuationMaps,
    pub weights: LocalizationWeights,
    pub output: AmbisonicSignal,
}

/// Everything the training loop needs from a constructed forward graph.
pub(crate) struct BuiltGraph {
    pub tape: Tape,
    /// Parameter leaves, same order as `SpatializerParams::tensors`.
    pub param_vars: Vec<Var>,
    /// One generated waveform var per output channel, each `len` samples.
    pub generated: Vec<Var>,
    pub mask_vars: Vec<Var>,
    pub weight_var: Option<Var>,
    pub frames: usize,
}

pub(crate) fn build_graph(
    params: &SpatializerParams,
    input: &AmbisonicSignal,
    hints: Option<&HintFeatures>,
    time_offset: f64,
    forced_masks: Option<&AttenuationMaps>,
    forced_weights: Option<&LocalizationWeights>,
) -> Result<BuiltGraph> {
    let config = params.config();
    if input.order() != config.order_in {
        return Err(Error::SignalMismatch(format!(
            "input order {} does not match model order_in {}",
            input.order(),
            config.order_in
        )));
    }
    if input.sample_rate() != config.sample_rate {
        return Err(Error::SignalMismatch(format!(
            "input rate {} does not match model rate {}",
            input.sample_rate(),
            config.sample_rate
        )));
    }
    let cfg = params.stft_config();
    let rate = config.sample_rate;
    let len = input.len();
    let pad = cfg.window_len;

    let mut tape = Tape::new();
    let param_vars: Vec<Var> =
        params.tensors().iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let by_name = |name: &str| -> Var {
        let idx = params.tensors().iter().position(|(n, _)| n == name).expect("tensor name");
        param_vars[idx]
    };

    // Zero-padded analysis of the W channel so the mask→resynthesis path
    // reconstructs the whole input, not just the COLA interior.
    let padded = |wave: &Waveform| -> Waveform {
        let mut samples = vec![0.0; len + 2 * pad];
        samples[pad..pad + len].copy_from_slice(wave.samples());
        Waveform::new(samples, rate)
    };
    let w_spec = stft(&padded(input.channel(0)), cfg)?;
    let frames = w_spec.frames();
    let spec_const = tape.leaf(spectrogram_to_tensor(&w_spec));

    let sep_head_runs = config.variant != Variant::NoSep && forced_masks.is_none();
    let needs_heads = sep_head_runs || forced_weights.is_none();
    let feat = if needs_heads {
        // Pooled log-magnitude bands of every input channel.
        let mut pooled: Option<Tensor> = None;
        for ch in input.channels() {
            let spec = stft(&padded(ch), cfg)?;
            let bands = features::pooled_log_bands_n(&spec, rate, config.bands);
            pooled = Some(match pooled {
                None => bands,
                Some(left) => concat_tensors(&left, &bands),
            });
        }
        let x = tape.leaf(pooled.unwrap());
        let h1 = dense_relu(&mut tape, x, by_name("audio_w1"), by_name("audio_b1"), frames);
        let h2 = dense_relu(&mut tape, h1, by_name("audio_w2"), by_name("audio_b2"), frames);
        match config.variant {
            Variant::NoHints => Some(h2),
            _ => {
                let hints = hints.ok_or_else(|| {
                    Error::SignalMismatch("this model variant requires hint features".into())
                })?;
                let hint_const = tape.leaf(features::hint_matrix(
                    hints,
                    frames,
                    cfg,
                    rate,
                    pad,
                    time_offset,
                ));
                Some(tape.concat_cols(h2, hint_const))
            }
        }
    } else {
        None
    };

    // Separated source waveforms f_i, each cropped back to `len` samples.
    let mut mask_vars = Vec::new();
    let mut source_waves = Vec::with_capacity(config.k);
    match (config.variant, forced_masks) {
        (Variant::NoSep, _) => {
            let mono = tape.leaf(Tensor::vector(input.channel(0).samples().to_vec()));
            for _ in 0..config.k {
                source_waves.push(mono);
            }
        }
        (_, Some(maps)) => {
            if maps.k() != config.k || maps.frames() != frames || maps.bins() != cfg.bins() {
                return Err(Error::ShapeMismatch(format!(
                    "forced maps are {}x{}x{}, expected {}x{frames}x{}",
                    maps.k(),
                    maps.frames(),
                    maps.bins(),
                    config.k,
                    cfg.bins()
                )));
            }
            for i in 0..config.k {
                let mask = tape.leaf(
                    Tensor::matrix(frames, cfg.bins(), maps.source(i).to_vec()).expect("mask"),
                );
                source_waves.push(masked_resynthesis(
                    &mut tape, mask, spec_const, cfg, rate, pad, len,
                ));
            }
        }
        (_, None) => {
            let feat = feat.expect("separation head needs features");
            let s1 = dense_relu(&mut tape, feat, by_name("sep_w1"), by_name("sep_b1"), frames);
            let pre = dense(&mut tape, s1, by_name("sep_w2"), by_name("sep_b2"), frames);
            let gains = tape.sigmoid(pre);
            let edges = features::band_edges(cfg, rate, config.bands);
            let positions = features::bin_positions(&edges, cfg.bins());
            for i in 0..config.k {
                let band = tape.slice_cols(gains, i * config.bands, config.bands);
                let mask = tape.interp_cols(band, positions.clone());
                mask_vars.push(mask);
                source_waves.push(masked_resynthesis(
                    &mut tape, mask, spec_const, cfg, rate, pad, len,
                ));
            }
        }
    }

    // Localization weights, upsampled to one row per sample.
    let out_ch = config.out_channels();
    let (weight_var, weight_frames_var) = match forced_weights {
        Some(w) => {
            if w.k() != config.k || w.out_channels() != out_ch || w.frames() != frames {
                return Err(Error::ShapeMismatch(format!(
                    "forced weights are {}x{}x{}, expected {}x{frames}x{out_ch}",
                    w.k(),
                    w.frames(),
                    w.out_channels(),
                    config.k
                )));
            }
            (None, tape.leaf(w.tensor().clone()))
        }
        None => {
            let feat = feat.expect("localization head needs features");
            let l1 = dense_relu(&mut tape, feat, by_name("loc_w1"), by_name("loc_b1"), frames);
            let pre = dense(&mut tape, l1, by_name("loc_w2"), by_name("loc_b2"), frames);
            let th = tape.tanh(pre);
            let w = tape.scale(th, WEIGHT_RANGE);
            (Some(w), w)
        }
    };
    let sample_positions: Vec<f64> = (0..len)
        .map(|s| {
            let frame = ((s + pad) as f64 - cfg.window_len as f64 / 2.0) / cfg.hop as f64;
            frame.clamp(0.0, (frames - 1) as f64)
        })
        .collect();
    let per_sample = tape.interp_rows(weight_frames_var, sample_positions);

    // φ_p(t) = Σ_i w_{i,p}(t) · f_i(t)
    let mut generated = Vec::with_capacity(out_ch);
    for p in 0..out_ch {
        let mut acc: Option<Var> = None;
        for (i, &f_i) in source_waves.iter().enumerate() {
            let col = tape.slice_cols(per_sample, i * out_ch + p, 1);
            let w_ip = tape.reshape(col, vec![len]);
            let term = tape.mul(w_ip, f_i);
            acc = Some(match acc {
                None => term,
                Some(prev) => tape.add(prev, term),
            });
        }
        generated.push(acc.expect("k >= 1"));
    }

    Ok(BuiltGraph { tape, param_vars, generated, mask_vars, weight_var, frames })
}

fn dense(tape: &mut Tape, x: Var, w: Var, b: Var, rows: usize) -> Var {
    let xw = tape.matmul(x, w);
    let bias = tape.broadcast_rows(b, rows);
    tape.add(xw, bias)
}

fn dense_relu(tape: &mut Tape, x: Var, w: Var, b: Var, rows: usize) -> Var {
    let pre = dense(tape, x, w, b, rows);
    tape.relu(pre)
}

/// f = crop(istft(mask ⊙ Φ)) back to the unpadded sample range.
fn masked_resynthesis(
    tape: &mut Tape,
    mask: Var,
    spec: Var,
    cfg: StftConfig,
    rate: u32,
    pad: usize,
    len: usize,
) -> Var {
    let dup = tape.interleave_dup(mask);
    let masked = tape.mul(dup, spec);
    let wave = tape.istft_node(masked, cfg, rate);
    tape.slice(wave, pad, vec![len])
}

fn concat_tensors(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.rows(), b.rows());
    let (rows, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut data = Vec::with_capacity(rows * (ca + cb));
    for r in 0..rows {
        data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::matrix(rows, ca + cb, data).expect("concat shape")
}

/// Runs the model. `hints` may be omitted only for the NoHints variant or
/// when both masks and weights are forced.
pub fn forward(
    params: &SpatializerParams,
    input: &AmbisonicSignal,
    hints: Option<&HintFeatures>,
) -> Result<Forward> {
    forward_forced(params, input, hints, None, None)
}

/// Forward pass with optional hand-set masks and/or localization weights
/// replacing the learned heads.
pub fn forward_forced(
    params: &SpatializerParams,
    input: &AmbisonicSignal,
    hints: Option<&HintFeatures>,
    masks: Option<&AttenuationMaps>,
    weights: Option<&LocalizationWeights>,
) -> Result<Forward> {
    let graph = build_graph(params, input, hints, 0.0, masks, weights)?;
    let config = params.config();
    let cfg = params.stft_config();
    let out_ch = config.out_channels();
    let frames = graph.frames;

    let maps = match (config.variant, masks) {
        (Variant::NoSep, _) => AttenuationMaps::ones(config.k, frames, cfg.bins()),
        (_, Some(m)) => m.clone(),
        (_, None) => {
            let mut data = Vec::with_capacity(config.k * frames * cfg.bins());
            for &mv in &graph.mask_vars {
                data.extend_from_slice(graph.tape.value(mv).data());
            }
            AttenuationMaps::new(config.k, frames, cfg.bins(), data)?
        }
    };

    let loc = match (weights, graph.weight_var) {
        (Some(w), _) => w.clone(),
        (None, Some(wv)) => {
            LocalizationWeights::new(config.k, out_ch, graph.tape.value(wv).clone())?
        }
        (None, None) => unreachable!("weights are forced or learned"),
    };

    let mut channels: Vec<Waveform> = input.channels().to_vec();
    for p in 0..out_ch {
        let samples = graph.tape.value(graph.generated[p]).data().to_vec();
        channels.push(Waveform::new(samples, config.sample_rate));
    }
    let output =
        AmbisonicSignal::new(config.order_out, input.normalization(), channels, true)?;

    Ok(Forward { maps, weights: loc, output })
}

/// Per-STFT-frame feature vectors (audio stack output, concatenated with
/// upsampled hints unless the variant excludes them).
pub fn extract_features(
    params: &SpatializerParams,
    input: &AmbisonicSignal,
    hints: Option<&HintFeatures>,
) -> Result<Tensor> {
    let config = params.config();
    if input.order() != config.order_in {
        return Err(Error::SignalMismatch(format!(
            "input order {} does not match model order_in {}",
            input.order(),
            config.order_in
        )));
    }
    let cfg = params.stft_config();
    let rate = config.sample_rate;
    let pad = cfg.window_len;
    let len = input.len();

    let mut tape = Tape::new();
    let param_vars: Vec<Var> =
        params.tensors().iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let by_name = |name: &str| -> Var {
        let idx = params.tensors().iter().position(|(n, _)| n == name).expect("tensor name");
        param_vars[idx]
    };

    let mut pooled: Option<Tensor> = None;
    let mut frames = 0;
    for ch in input.channels() {
        let mut samples = vec![0.0; len + 2 * pad];
        samples[pad..pad + len].copy_from_slice(ch.samples());
        let spec = stft(&Waveform::new(samples, rate), cfg)?;
        frames = spec.frames();
        let bands = features::pooled_log_bands_n(&spec, rate, config.bands);
        pooled = Some(match pooled {
            None => bands,
            Some(left) => concat_tensors(&left, &bands),
        });
    }
    let x = tape.leaf(pooled.unwrap());
    let h1 = dense_relu(&mut tape, x, by_name("audio_w1"), by_name("audio_b1"), frames);
    let h2 = dense_relu(&mut tape, h1, by_name("audio_w2"), by_name("audio_b2"), frames);
    let feat = match config.variant {
        Variant::NoHints => h2,
        _ => {
            let hints = hints.ok_or_else(|| {
                Error::SignalMismatch("this model variant requires hint features".into())
            })?;
            let hint_const =
                tape.leaf(features::hint_matrix(hints, frames, cfg, rate, pad, 0.0));
            tape.concat_cols(h2, hint_const)
        }
    };
    Ok(tape.value(feat).clone())
}

/// Training/evaluation loss: the STFT distance over generated channels
/// (identical to `metrics::stft_mse`, which restricts itself to the
/// top-degree channels and honors the Z mask).
pub fn loss(
    pred: &AmbisonicSignal,
    target: &AmbisonicSignal,
    cfg: StftConfig,
) -> Result<f64> {
    crate::metrics::stft_mse(pred, target, cfg)
}
