//! Short-time Fourier transform: Hann analysis windows, one-sided spectra,
//! COLA-normalized overlap-add synthesis, exact adjoints of both transforms
//! (needed for gradient propagation), and soft-attention mask application.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Analysis parameters: Hann window of `window_len` samples, frames hopped
/// by `hop`, zero-padded to `fft_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl StftConfig {
    pub fn new(window_len: usize, hop: usize, fft_size: usize) -> Result<Self> {
        if hop == 0 || hop > window_len || window_len > fft_size {
            return Err(Error::ShapeMismatch(format!(
                "invalid STFT config: need 0 < hop ({hop}) <= window ({window_len}) <= fft ({fft_size})"
            )));
        }
        Ok(Self { window_len, hop, fft_size })
    }

    /// 25 ms window, 75% overlap, next power-of-two FFT. 16 kHz gives
    /// (400, 100, 512); 48 kHz gives (1200, 300, 2048).
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let window_len = ((0.025 * sample_rate as f64).round() as usize).max(4);
        let hop = (window_len / 4).max(1);
        let fft_size = window_len.next_power_of_two();
        Self { window_len, hop, fft_size }
    }

    /// One-sided bin count, fft_size/2 + 1.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames fitting entirely inside `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    /// Length of the overlap-add output for `frames` frames.
    pub fn output_len(&self, frames: usize) -> usize {
        self.window_len + (frames.max(1) - 1) * self.hop
    }

    /// Periodic Hann window, which satisfies constant overlap-add at
    /// hop = window/4.
    pub fn window(&self) -> Vec<f64> {
        (0..self.window_len)
            .map(|j| 0.5 * (1.0 - (TAU * j as f64 / self.window_len as f64).cos()))
            .collect()
    }

    /// Accumulated squared-window envelope D[n] = Σ_f w²[n − f·hop] used to
    /// normalize overlap-add synthesis.
    pub fn cola_envelope(&self, frames: usize) -> Vec<f64> {
        let window = self.window();
        let mut env = vec![0.0; self.output_len(frames)];
        for f in 0..frames {
            let start = f * self.hop;
            for (j, w) in window.iter().enumerate() {
                env[start + j] += w * w;
            }
        }
        env
    }
}

/// Complex one-sided spectrogram, frames × bins, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    config: StftConfig,
    sample_rate: u32,
    frames: usize,
    data: Vec<Complex64>,
}

impl Spectrogram {
    pub fn from_data(
        config: StftConfig,
        sample_rate: u32,
        frames: usize,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if data.len() != frames * config.bins() {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram data length {} != {} frames x {} bins",
                data.len(),
                frames,
                config.bins()
            )));
        }
        Ok(Self { config, sample_rate, frames, data })
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn at(&self, frame: usize, bin: usize) -> Complex64 {
        self.data[frame * self.bins() + bin]
    }

    pub fn row(&self, frame: usize) -> &[Complex64] {
        let b = self.bins();
        &self.data[frame * b..(frame + 1) * b]
    }

    /// Σ|Φ|² over all frames and one-sided bins, unweighted.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Forward STFT: frame f covers samples [f·hop, f·hop + window_len),
/// Hann-windowed, zero-padded to fft_size, one-sided DFT.
pub fn stft(x: &Waveform, cfg: StftConfig) -> Result<Spectrogram> {
    if x.len() < cfg.window_len {
        return Err(Error::InputTooShort { len: x.len(), min: cfg.window_len });
    }
    let frames = cfg.num_frames(x.len());
    let bins = cfg.bins();
    let window = cfg.window();
    let fft = plan(cfg.fft_size, false);

    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (j, slot) in buf.iter_mut().enumerate() {
            let v = if j < cfg.window_len {
                window[j] * x.samples()[start + j]
            } else {
                0.0
            };
            *slot = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        data.extend_from_slice(&buf[..bins]);
    }
    Spectrogram::from_data(cfg, x.sample_rate(), frames, data)
}

/// Inverse STFT by windowed overlap-add, normalized by the accumulated
/// squared-window envelope. Reconstruction is exact wherever the envelope
/// is nonzero, which covers the fully-overlapped interior.
pub fn istft(spec: &Spectrogram) -> Waveform {
    let cfg = spec.config();
    let frames = spec.frames();
    let window = cfg.window();
    let env = cfg.cola_envelope(frames);
    let mut out = vec![0.0; cfg.output_len(frames)];

    let mut frame_buf = vec![0.0; cfg.fft_size];
    for f in 0..frames {
        irfft_into(spec.row(f), cfg.fft_size, &mut frame_buf);
        let start = f * cfg.hop;
        for (j, w) in window.iter().enumerate() {
            out[start + j] += w * frame_buf[j];
        }
    }
    for (o, d) in out.iter_mut().zip(&env) {
        if *d > 1e-12 {
            *o /= d;
        } else {
            *o = 0.0;
        }
    }
    Waveform::new(out, spec.sample_rate())
}

/// Adjoint of `stft` under the unweighted one-sided inner product:
/// ⟨stft(x), S⟩ = ⟨x, stft_adjoint(S, len)⟩ for any x of length `target_len`.
pub fn stft_adjoint(spec: &Spectrogram, target_len: usize) -> Waveform {
    let cfg = spec.config();
    let frames = spec.frames();
    let window = cfg.window();
    let mut out = vec![0.0; target_len];

    // Per frame: Re(Σ_k S[k] e^{+i2πkj/N}) over one-sided bins only (no
    // Hermitian doubling), then the windowing and framing adjoints.
    let fft = plan(cfg.fft_size, true);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for f in 0..frames {
        buf.fill(Complex64::default());
        buf[..cfg.bins()].copy_from_slice(spec.row(f));
        fft.process(&mut buf);
        let start = f * cfg.hop;
        for (j, w) in window.iter().enumerate() {
            if start + j < target_len {
                out[start + j] += w * buf[j].re;
            }
        }
    }
    Waveform::new(out, spec.sample_rate())
}

/// Adjoint of `istft`: maps a waveform cotangent of length
/// `cfg.output_len(frames)` back to spectrogram space, satisfying
/// ⟨istft(S), u⟩ = ⟨S, istft_adjoint(u, ...)⟩.
pub fn istft_adjoint(
    cotangent: &[f64],
    cfg: StftConfig,
    frames: usize,
    sample_rate: u32,
) -> Result<Spectrogram> {
    let expect = cfg.output_len(frames);
    if cotangent.len() != expect {
        return Err(Error::ShapeMismatch(format!(
            "istft adjoint cotangent length {} != {expect}",
            cotangent.len()
        )));
    }
    let window = cfg.window();
    let env = cfg.cola_envelope(frames);
    let scaled: Vec<f64> = cotangent
        .iter()
        .zip(&env)
        .map(|(u, d)| if *d > 1e-12 { u / d } else { 0.0 })
        .collect();

    let bins = cfg.bins();
    let n = cfg.fft_size as f64;
    let fft = plan(cfg.fft_size, false);
    let mut data = Vec::with_capacity(frames * bins);
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for f in 0..frames {
        let start = f * cfg.hop;
        for (j, slot) in buf.iter_mut().enumerate() {
            let v = if j < cfg.window_len { window[j] * scaled[start + j] } else { 0.0 };
            *slot = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (k, value) in buf[..bins].iter().enumerate() {
            // Interior bins appear twice in the Hermitian extension.
            let mult = if k == 0 || k == cfg.fft_size / 2 { 1.0 } else { 2.0 };
            let mut g = value * (mult / n);
            if k == 0 || k == cfg.fft_size / 2 {
                g.im = 0.0;
            }
            data.push(g);
        }
    }
    Spectrogram::from_data(cfg, sample_rate, frames, data)
}

/// Real inverse of a one-sided spectrum via Hermitian extension; writes the
/// length-`fft_size` real frame into `out`.
fn irfft_into(onesided: &[Complex64], fft_size: usize, out: &mut [f64]) {
    let fft = plan(fft_size, true);
    let mut buf = vec![Complex64::default(); fft_size];
    buf[..onesided.len()].copy_from_slice(onesided);
    for k in 1..fft_size / 2 {
        buf[fft_size - k] = onesided[k].conj();
    }
    fft.process(&mut buf);
    let scale = 1.0 / fft_size as f64;
    for (o, c) in out.iter_mut().zip(&buf) {
        *o = c.re * scale;
    }
}

/// k sigmoid-style attenuation maps over a spectrogram, entries in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AttenuationMaps {
    k: usize,
    frames: usize,
    bins: usize,
    data: Vec<f64>,
}

impl AttenuationMaps {
    pub fn new(k: usize, frames: usize, bins: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * frames * bins {
            return Err(Error::ShapeMismatch(format!(
                "attenuation data length {} != {k} x {frames} x {bins}",
                data.len()
            )));
        }
        if data.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::OutOfRange("attenuation map entry outside [0, 1]".into()));
        }
        Ok(Self { k, frames, bins, data })
    }

    /// All-pass maps (every entry 1).
    pub fn ones(k: usize, frames: usize, bins: usize) -> Self {
        Self { k, frames, bins, data: vec![1.0; k * frames * bins] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn at(&self, source: usize, frame: usize, bin: usize) -> f64 {
        self.data[(source * self.frames + frame) * self.bins + bin]
    }

    /// Flat view of one source's frames × bins map.
    pub fn source(&self, source: usize) -> &[f64] {
        let stride = self.frames * self.bins;
        &self.data[source * stride..(source + 1) * stride]
    }
}

/// Soft-attention masking: Φⁱ(t, ω) = aⁱ(t, ω)·Φ(t, ω) for each source.
pub fn apply_masks(spec: &Spectrogram, maps: &AttenuationMaps) -> Result<Vec<Spectrogram>> {
    if maps.frames() != spec.frames() || maps.bins() != spec.bins() {
        return Err(Error::ShapeMismatch(format!(
            "maps are {}x{}, spectrogram is {}x{}",
            maps.frames(),
            maps.bins(),
            spec.frames(),
            spec.bins()
        )));
    }
    Ok((0..maps.k())
        .map(|i| {
            let data = maps
                .source(i)
                .iter()
                .zip(spec.data())
                .map(|(a, phi)| phi * *a)
                .collect();
            Spectrogram::from_data(spec.config(), spec.sample_rate(), spec.frames(), data)
                .expect("mask preserves shape")
        })
        .collect())
}
