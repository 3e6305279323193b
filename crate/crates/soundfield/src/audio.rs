//! Waveforms, ambisonic signals, point-source encoding, sound-field
//! evaluation, z-rotation and mono mixdown.

use crate::sphmath::{
    self, channel_count, eval_sh, eval_sh_into, Direction, Normalization,
};
use crate::{Error, Result};

/// A single-channel sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Copy of the sample range [start, start + len).
    pub fn slice(&self, start: usize, len: usize) -> Waveform {
        Waveform::new(self.samples[start..start + len].to_vec(), self.sample_rate)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// Multichannel waveform holding spherical-harmonic coefficients in ACN
/// order. `z_present == false` marks signals from "horizontal" microphones
/// whose Z channel (ACN 2) is a placeholder and must be ignored by metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbisonicSignal {
    order: usize,
    normalization: Normalization,
    channels: Vec<Waveform>,
    z_present: bool,
}

impl AmbisonicSignal {
    pub fn new(
        order: usize,
        normalization: Normalization,
        channels: Vec<Waveform>,
        z_present: bool,
    ) -> Result<Self> {
        let expected = channel_count(order);
        if channels.len() != expected {
            return Err(Error::ChannelMismatch { expected, got: channels.len() });
        }
        let len = channels[0].len();
        let rate = channels[0].sample_rate();
        for ch in &channels {
            if ch.len() != len {
                return Err(Error::SignalMismatch(format!(
                    "channel length {} != {}",
                    ch.len(),
                    len
                )));
            }
            if ch.sample_rate() != rate {
                return Err(Error::SignalMismatch(format!(
                    "channel sample rate {} != {}",
                    ch.sample_rate(),
                    rate
                )));
            }
        }
        Ok(Self { order, normalization, channels, z_present })
    }

    /// All-zero signal of the given shape.
    pub fn silent(order: usize, normalization: Normalization, len: usize, rate: u32) -> Self {
        let channels = (0..channel_count(order)).map(|_| Waveform::zeros(len, rate)).collect();
        Self { order, normalization, channels, z_present: true }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn channels(&self) -> &[Waveform] {
        &self.channels
    }

    pub fn channel(&self, acn: usize) -> &Waveform {
        &self.channels[acn]
    }

    pub fn channel_mut(&mut self, acn: usize) -> &mut Waveform {
        &mut self.channels[acn]
    }

    pub fn z_present(&self) -> bool {
        self.z_present
    }

    pub fn with_z_present(mut self, z_present: bool) -> Self {
        self.z_present = z_present;
        self
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels[0].is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.channels[0].sample_rate()
    }

    pub fn duration_secs(&self) -> f64 {
        self.channels[0].duration_secs()
    }

    /// Copy of the sample range [start, start + len) across all channels.
    pub fn slice(&self, start: usize, len: usize) -> AmbisonicSignal {
        let channels = self.channels.iter().map(|ch| ch.slice(start, len)).collect();
        Self {
            order: self.order,
            normalization: self.normalization,
            channels,
            z_present: self.z_present,
        }
    }

    /// Converts channel scaling between SN3D and N3D.
    pub fn to_normalization(&self, target: Normalization) -> AmbisonicSignal {
        if self.normalization == target {
            return self.clone();
        }
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(acn, ch)| {
                let degree = (acn as f64).sqrt() as usize;
                let factor = sphmath::normalization_scale(degree, self.normalization, target);
                Waveform::new(ch.samples().iter().map(|s| s * factor).collect(), ch.sample_rate())
            })
            .collect();
        Self {
            order: self.order,
            normalization: target,
            channels,
            z_present: self.z_present,
        }
    }

    /// Truncates to the first (keep_order+1)² channels.
    pub fn truncate_order(&self, keep_order: usize) -> Result<AmbisonicSignal> {
        if keep_order > self.order {
            return Err(Error::UnsupportedOrder(keep_order));
        }
        AmbisonicSignal::new(
            keep_order,
            self.normalization,
            self.channels[..channel_count(keep_order)].to_vec(),
            self.z_present,
        )
    }
}

/// Time-varying source direction: keyframes at a fixed rate, linearly
/// interpolated (azimuth along the shortest arc) and clamped at the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    keyframes: Vec<Direction>,
    frame_rate: f64,
}

impl Trajectory {
    pub fn new(keyframes: Vec<Direction>, frame_rate: f64) -> Self {
        assert!(!keyframes.is_empty(), "trajectory needs at least one keyframe");
        assert!(frame_rate > 0.0, "frame rate must be positive");
        Self { keyframes, frame_rate }
    }

    /// A fixed direction for all time.
    pub fn constant(dir: Direction) -> Self {
        Self { keyframes: vec![dir], frame_rate: 1.0 }
    }

    pub fn keyframes(&self) -> &[Direction] {
        &self.keyframes
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Direction at `t` seconds.
    pub fn at_time(&self, t: f64) -> Direction {
        let pos = t * self.frame_rate;
        let last = self.keyframes.len() - 1;
        if pos <= 0.0 || last == 0 {
            return self.keyframes[0];
        }
        if pos >= last as f64 {
            return self.keyframes[last];
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        let a = self.keyframes[i];
        let b = self.keyframes[i + 1];
        // Shortest-arc azimuth interpolation avoids 2π seam jumps.
        let mut daz = b.azimuth() - a.azimuth();
        if daz > std::f64::consts::PI {
            daz -= std::f64::consts::TAU;
        } else if daz < -std::f64::consts::PI {
            daz += std::f64::consts::TAU;
        }
        Direction::new(
            a.azimuth() + frac * daz,
            a.elevation() + frac * (b.elevation() - a.elevation()),
        )
    }

    pub fn at_sample(&self, index: usize, sample_rate: u32) -> Direction {
        self.at_time(index as f64 / sample_rate as f64)
    }
}

/// Encodes point sources into an ambisonic signal:
/// φ_N(t) = Σᵢ y_N(θᵢ(t))·sᵢ(t), evaluated per sample.
pub fn encode_sources(
    sources: &[(Waveform, Trajectory)],
    order: usize,
    normalization: Normalization,
) -> Result<AmbisonicSignal> {
    let Some((first, _)) = sources.first() else {
        return Err(Error::SignalMismatch("no sources to encode".into()));
    };
    let len = first.len();
    let rate = first.sample_rate();
    for (wave, _) in sources {
        if wave.len() != len || wave.sample_rate() != rate {
            return Err(Error::SignalMismatch(
                "sources must share sample rate and length".into(),
            ));
        }
    }

    let n_ch = channel_count(order);
    let mut channels = vec![vec![0.0; len]; n_ch];
    let mut sh = vec![0.0; n_ch];
    for (wave, traj) in sources {
        for (t, &s) in wave.samples().iter().enumerate() {
            let dir = traj.at_sample(t, rate);
            eval_sh_into(order, dir, normalization, &mut sh);
            for (c, channel) in channels.iter_mut().enumerate() {
                channel[t] += sh[c] * s;
            }
        }
    }

    AmbisonicSignal::new(
        order,
        normalization,
        channels.into_iter().map(|c| Waveform::new(c, rate)).collect(),
        true,
    )
}

/// Rotates a sound field around the vertical axis by `psi` radians.
///
/// Within each degree n, the (m, −m) channel pair rotates by m·psi while
/// m = 0 channels are untouched, so W and Z are invariant at first order.
pub fn rotate_z(sig: &AmbisonicSignal, psi: f64) -> Result<AmbisonicSignal> {
    if sig.order() > 2 {
        return Err(Error::UnsupportedOrder(sig.order()));
    }
    let mut channels: Vec<Vec<f64>> =
        sig.channels().iter().map(|ch| ch.samples().to_vec()).collect();
    for degree in 1..=sig.order() {
        for m in 1..=degree {
            let (sin_m, cos_m) = (m as f64 * psi).sin_cos();
            let cos_idx = sphmath::acn_index(degree, m as i64);
            let sin_idx = sphmath::acn_index(degree, -(m as i64));
            let (cos_ch, sin_ch) = (sig.channel(cos_idx), sig.channel(sin_idx));
            for t in 0..sig.len() {
                let c = cos_ch.samples()[t];
                let s = sin_ch.samples()[t];
                channels[cos_idx][t] = cos_m * c - sin_m * s;
                channels[sin_idx][t] = sin_m * c + cos_m * s;
            }
        }
    }
    AmbisonicSignal::new(
        sig.order(),
        sig.normalization(),
        channels
            .into_iter()
            .map(|c| Waveform::new(c, sig.sample_rate()))
            .collect(),
        sig.z_present(),
    )
}

/// Evaluates the sound field in one direction: f(θ, t) = y_N(θ)ᵀ φ_N(t),
/// using the basis matching the signal's normalization.
pub fn evaluate_soundfield(sig: &AmbisonicSignal, dir: Direction) -> Waveform {
    let sh = eval_sh(sig.order(), dir, sig.normalization());
    let mut out = vec![0.0; sig.len()];
    for (c, channel) in sig.channels().iter().enumerate() {
        let y = sh.values()[c];
        if y == 0.0 {
            continue;
        }
        for (o, s) in out.iter_mut().zip(channel.samples()) {
            *o += y * s;
        }
    }
    Waveform::new(out, sig.sample_rate())
}

/// Mono mixdown: the W channel (ACN 0) verbatim.
pub fn mixdown_mono(sig: &AmbisonicSignal) -> Waveform {
    sig.channel(0).clone()
}
