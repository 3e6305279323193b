//! Synthetic scene generation: seeded sources on time-varying
//! trajectories, rendered to (mono input, hint features, ground-truth
//! ambisonics) triples, plus dataset manifests with a 75/25 split.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{encode_sources, mixdown_mono, AmbisonicSignal, Trajectory, Waveform};
use crate::sphmath::{angular_distance, Direction, Normalization};
use crate::wav;
use crate::{Error, Result};

/// Hint-grid geometry: equirectangular 8 × 16 (elevation rows top-down,
/// azimuth columns), updated at 10 Hz.
pub const HINT_ROWS: usize = 8;
pub const HINT_COLS: usize = 16;
pub const HINT_FRAME_RATE: f64 = 10.0;
/// Angular splat width (15°).
pub const HINT_SIGMA: f64 = 15.0 * PI / 180.0;

/// Coarse per-frame maps of source activity splatted at true directions;
/// the scene-derived stand-in for visual features.
#[derive(Debug, Clone, PartialEq)]
pub struct HintFeatures {
    frame_rate: f64,
    /// One row-major HINT_ROWS × HINT_COLS grid per frame.
    grids: Vec<Vec<f64>>,
}

impl HintFeatures {
    pub fn new(grids: Vec<Vec<f64>>, frame_rate: f64) -> Result<Self> {
        if grids.iter().any(|g| g.len() != HINT_ROWS * HINT_COLS) {
            return Err(Error::ShapeMismatch(format!(
                "hint grids must hold {} values",
                HINT_ROWS * HINT_COLS
            )));
        }
        if grids.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::OutOfRange("hint energies must be finite and non-negative".into()));
        }
        Ok(Self { frame_rate, grids })
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn num_frames(&self) -> usize {
        self.grids.len()
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn grid(&self, frame: usize) -> &[f64] {
        &self.grids[frame]
    }

    /// Frame covering time `t` (clamped).
    pub fn frame_at_time(&self, t: f64) -> usize {
        ((t * self.frame_rate).floor() as i64).clamp(0, self.grids.len() as i64 - 1) as usize
    }

    /// Rotates the scene around the vertical axis: a fractional column
    /// roll with wrapping linear interpolation, matching `rotate_z` of the
    /// audio by the same angle.
    pub fn rotate_z(&self, psi: f64) -> HintFeatures {
        let shift = psi / TAU * HINT_COLS as f64;
        let grids = self
            .grids
            .iter()
            .map(|grid| {
                let mut out = vec![0.0; HINT_ROWS * HINT_COLS];
                for r in 0..HINT_ROWS {
                    for c in 0..HINT_COLS {
                        // Sample the source column this cell came from.
                        let src = (c as f64 - shift).rem_euclid(HINT_COLS as f64);
                        let c0 = src.floor() as usize % HINT_COLS;
                        let c1 = (c0 + 1) % HINT_COLS;
                        let frac = src - src.floor();
                        out[r * HINT_COLS + c] = (1.0 - frac) * grid[r * HINT_COLS + c0]
                            + frac * grid[r * HINT_COLS + c1];
                    }
                }
                out
            })
            .collect();
        HintFeatures { frame_rate: self.frame_rate, grids }
    }

    /// Grid cell (row, col) containing a direction.
    pub fn cell_of(dir: Direction) -> (usize, usize) {
        let row = (((FRAC_PI_2 - dir.elevation()) / PI) * HINT_ROWS as f64)
            .floor()
            .clamp(0.0, HINT_ROWS as f64 - 1.0) as usize;
        let col = ((dir.azimuth() / TAU) * HINT_COLS as f64)
            .floor()
            .clamp(0.0, HINT_COLS as f64 - 1.0) as usize;
        (row, col)
    }

    fn cell_center(row: usize, col: usize) -> Direction {
        Direction::new(
            (col as f64 + 0.5) / HINT_COLS as f64 * TAU,
            FRAC_PI_2 - (row as f64 + 0.5) / HINT_ROWS as f64 * PI,
        )
    }
}

pub fn save_hints(path: &Path, hints: &HintFeatures) -> Result<()> {
    fs::write(path, serde_json::to_vec(hints.grids())?)?;
    Ok(())
}

pub fn load_hints(path: &Path) -> Result<HintFeatures> {
    let grids: Vec<Vec<f64>> = serde_json::from_slice(&fs::read(path)?)?;
    HintFeatures::new(grids, HINT_FRAME_RATE)
}

/// Source material recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceKind {
    Sine { freq: f64 },
    Chirp { f0: f64, f1: f64 },
    BandNoiseBurst { low: f64, high: f64, bursts: usize },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(flatten)]
    pub kind: SourceKind,
    pub gain: f64,
    pub seed: u64,
}

/// Motion recipe for one source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryKind {
    Static { dir: Direction },
    /// Constant-elevation sweep: azimuth advances at `angular_velocity`
    /// rad/s (a great circle when the start elevation is 0).
    GreatCircle { start: Direction, angular_velocity: f64 },
    RandomWalk { start: Direction, step_sigma: f64, max_velocity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    #[serde(flatten)]
    pub kind: TrajectoryKind,
    pub seed: u64,
}

/// A complete synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub sources: Vec<(SourceSpec, TrajectorySpec)>,
    pub duration: f64,
    pub sample_rate: u32,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() || self.sources.len() > 4 {
            return Err(Error::OutOfRange(format!(
                "scene has {} sources, expected 1 to 4",
                self.sources.len()
            )));
        }
        if self.duration <= 0.0 || self.sample_rate == 0 {
            return Err(Error::OutOfRange("scene duration and sample rate must be positive".into()));
        }
        for (src, _) in &self.sources {
            if !(src.gain > 0.0 && src.gain <= 1.0) {
                return Err(Error::OutOfRange(format!("source gain {} outside (0, 1]", src.gain)));
            }
        }
        Ok(())
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; rand_distr stays out of the dependency set for one draw.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
}

/// Synthesizes one source: deterministic per seed, peak-normalized to the
/// spec gain.
pub fn synth_source(spec: &SourceSpec, duration: f64, sample_rate: u32) -> Result<Waveform> {
    assert!(duration > 0.0 && sample_rate > 0);
    let len = (duration * sample_rate as f64).round() as usize;
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut samples = match &spec.kind {
        SourceKind::Sine { freq } => {
            let phase = rng.gen_range(0.0..TAU);
            (0..len).map(|t| (TAU * freq * t as f64 / fs + phase).sin()).collect()
        }
        SourceKind::Chirp { f0, f1 } => {
            let phase = rng.gen_range(0.0..TAU);
            (0..len)
                .map(|t| {
                    let tt = t as f64 / fs;
                    (TAU * (f0 * tt + 0.5 * (f1 - f0) / duration * tt * tt) + phase).sin()
                })
                .collect()
        }
        SourceKind::BandNoiseBurst { low, high, bursts } => {
            let mut noise: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Burst envelope first, then a brick-wall bandpass so the
            // spectral support stays inside [low, high].
            let env = burst_envelope(len, *bursts, &mut rng);
            for (n, e) in noise.iter_mut().zip(&env) {
                *n *= e;
            }
            bandpass_brickwall(&mut noise, fs, *low, *high);
            noise
        }
        SourceKind::File { path } => {
            let wave = wav::read_wav(path)?.into_mono()?;
            if wave.sample_rate() != sample_rate {
                return Err(Error::SignalMismatch(format!(
                    "source file runs at {} Hz, scene wants {sample_rate} Hz",
                    wave.sample_rate()
                )));
            }
            // Loop or truncate to the scene duration.
            (0..len).map(|t| wave.samples()[t % wave.len().max(1)]).collect()
        }
    };

    let peak = samples.iter().fold(0.0f64, |m, s: &f64| m.max(s.abs()));
    if peak > 0.0 {
        let scale = spec.gain / peak;
        for s in &mut samples {
            *s *= scale;
        }
    }
    Ok(Waveform::new(samples, sample_rate))
}

fn burst_envelope<R: Rng>(len: usize, bursts: usize, rng: &mut R) -> Vec<f64> {
    let mut env = vec![0.0f64; len];
    let bursts = bursts.max(1);
    let segment = len / bursts;
    for b in 0..bursts {
        let width = rng.gen_range(segment / 4..=segment.max(4) / 2).max(2);
        let start = b * segment + rng.gen_range(0..=(segment.saturating_sub(width)));
        for j in 0..width.min(len - start) {
            let w = 0.5 * (1.0 - (TAU * j as f64 / width as f64).cos());
            env[start + j] = env[start + j].max(w);
        }
    }
    env
}

fn bandpass_brickwall(samples: &mut [f64], fs: f64, low: f64, high: f64) {
    let len = samples.len();
    let mut buf: Vec<Complex64> =
        samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, slot) in buf.iter_mut().enumerate() {
        // Two-sided bin frequency.
        let f = if k <= len / 2 { k as f64 } else { (len - k) as f64 } * fs / len as f64;
        if f < low || f > high {
            *slot = Complex64::default();
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    for (s, c) in samples.iter_mut().zip(&buf) {
        *s = c.re / len as f64;
    }
}

/// Samples a trajectory spec into keyframes at `frame_rate`.
pub fn sample_trajectory(spec: &TrajectorySpec, duration: f64, frame_rate: f64) -> Trajectory {
    assert!(duration > 0.0 && frame_rate > 0.0);
    let frames = (duration * frame_rate).ceil() as usize + 1;
    let keyframes = match &spec.kind {
        TrajectoryKind::Static { dir } => vec![*dir; 1],
        TrajectoryKind::GreatCircle { start, angular_velocity } => (0..frames)
            .map(|f| {
                let t = f as f64 / frame_rate;
                Direction::new(start.azimuth() + angular_velocity * t, start.elevation())
            })
            .collect(),
        TrajectoryKind::RandomWalk { start, step_sigma, max_velocity } => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let cap = max_velocity / frame_rate;
            let mut dirs = Vec::with_capacity(frames);
            let mut current = *start;
            dirs.push(current);
            for _ in 1..frames {
                let mut daz = gaussian(&mut rng) * step_sigma;
                let mut del = gaussian(&mut rng) * step_sigma;
                let mut next = step_direction(current, daz, del);
                while angular_distance(current, next) > cap {
                    daz *= 0.7;
                    del *= 0.7;
                    next = step_direction(current, daz, del);
                }
                current = next;
                dirs.push(current);
            }
            dirs
        }
    };
    Trajectory::new(keyframes, frame_rate)
}

fn step_direction(from: Direction, daz: f64, del: f64) -> Direction {
    // Reflect elevation at the poles instead of saturating there.
    let mut el = from.elevation() + del;
    if el > FRAC_PI_2 {
        el = PI - el;
    } else if el < -FRAC_PI_2 {
        el = -PI - el;
    }
    Direction::new(from.azimuth() + daz, el)
}

/// Renders a scene: ground truth by spherical-harmonic encoding, mono as
/// its W channel, hints as windowed-RMS activity splats at the true
/// directions.
pub fn render_scene(
    spec: &SceneSpec,
    order: usize,
) -> Result<(Waveform, HintFeatures, AmbisonicSignal)> {
    spec.validate()?;
    let mut rendered = Vec::with_capacity(spec.sources.len());
    for (src, traj) in &spec.sources {
        let wave = synth_source(src, spec.duration, spec.sample_rate)?;
        let trajectory = sample_trajectory(traj, spec.duration, HINT_FRAME_RATE);
        rendered.push((wave, trajectory));
    }
    let gt = encode_sources(&rendered, order, Normalization::SN3D)?;
    let mono = mixdown_mono(&gt);

    let n_frames = (spec.duration * HINT_FRAME_RATE).ceil() as usize;
    let frame_len = (spec.sample_rate as f64 / HINT_FRAME_RATE).round() as usize;
    let mut grids = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let start = f * frame_len;
        let t_mid = (f as f64 + 0.5) / HINT_FRAME_RATE;
        let mut grid = vec![0.0; HINT_ROWS * HINT_COLS];
        for (wave, trajectory) in &rendered {
            let end = (start + frame_len).min(wave.len());
            if start >= end {
                continue;
            }
            let rms = (wave.samples()[start..end].iter().map(|s| s * s).sum::<f64>()
                / (end - start) as f64)
                .sqrt();
            if rms == 0.0 {
                continue;
            }
            let dir = trajectory.at_time(t_mid);
            for r in 0..HINT_ROWS {
                for c in 0..HINT_COLS {
                    let delta = angular_distance(HintFeatures::cell_center(r, c), dir);
                    grid[r * HINT_COLS + c] +=
                        rms * (-delta * delta / (2.0 * HINT_SIGMA * HINT_SIGMA)).exp();
                }
            }
        }
        grids.push(grid);
    }

    Ok((mono, HintFeatures::new(grids, HINT_FRAME_RATE)?, gt))
}

/// Train/test assignment of one dataset entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub gt: String,
    pub mono: String,
    pub hints: String,
    pub split: Split,
}

/// On-disk dataset index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenes: Vec<SceneEntry>,
    pub order: usize,
    pub seed: u64,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(scenes: Vec<SceneEntry>, order: usize, seed: u64, base_dir: PathBuf) -> Self {
        Self { scenes, order, seed, base_dir }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut manifest: DatasetManifest = serde_json::from_slice(&fs::read(path)?)?;
        manifest.base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn entries(&self, split: Split) -> impl Iterator<Item = &SceneEntry> {
        self.scenes.iter().filter(move |e| e.split == split)
    }
}

/// Knobs for dataset generation; defaults follow the desk-scale scene
/// recipe (10 s, 16 kHz, 1–3 sources).
#[derive(Debug, Clone)]
pub struct GenOptions {
    pub duration: f64,
    pub sample_rate: u32,
    pub min_sources: usize,
    pub max_sources: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self { duration: 10.0, sample_rate: 16_000, min_sources: 1, max_sources: 3 }
    }
}

/// Generates `count` scenes under `out_dir` with a 75/25 train/test split
/// and writes `manifest.json`. Deterministic per seed.
pub fn gen_dataset(
    count: usize,
    seed: u64,
    order: usize,
    out_dir: &Path,
    options: &GenOptions,
) -> Result<DatasetManifest> {
    if count < 4 {
        return Err(Error::OutOfRange(format!("dataset needs at least 4 scenes, got {count}")));
    }
    fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_test = ((count as f64 * 0.25).round() as usize).max(1);
    let n_train = count - n_test;

    let mut scenes = Vec::with_capacity(count);
    for i in 0..count {
        let spec = random_scene(&mut rng, options);
        let (mono, hints, gt) = render_scene(&spec, order)?;

        let gt_name = format!("scene_{i:03}_gt.wav");
        let mono_name = format!("scene_{i:03}_mono.wav");
        let hints_name = format!("scene_{i:03}_hints.json");
        wav::write_wav(&out_dir.join(&gt_name), &gt)?;
        wav::write_wav_mono(&out_dir.join(&mono_name), &mono)?;
        save_hints(&out_dir.join(&hints_name), &hints)?;

        scenes.push(SceneEntry {
            gt: gt_name,
            mono: mono_name,
            hints: hints_name,
            split: if i < n_train { Split::Train } else { Split::Test },
        });
    }

    let manifest =
        DatasetManifest { scenes, order, seed, base_dir: out_dir.to_path_buf() };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

fn random_scene<R: Rng>(rng: &mut R, options: &GenOptions) -> SceneSpec {
    let n_sources = rng.gen_range(options.min_sources..=options.max_sources).clamp(1, 4);
    let sources = (0..n_sources)
        .map(|_| {
            let kind = match rng.gen_range(0..3) {
                0 => SourceKind::Sine { freq: rng.gen_range(200.0..2000.0) },
                1 => SourceKind::Chirp {
                    f0: rng.gen_range(150.0..1500.0),
                    f1: rng.gen_range(300.0..3000.0),
                },
                _ => {
                    let low = rng.gen_range(200.0..1000.0);
                    SourceKind::BandNoiseBurst {
                        low,
                        high: low * rng.gen_range(1.5..3.0),
                        bursts: rng.gen_range(2..6),
                    }
                }
            };
            let source = SourceSpec {
                kind,
                gain: rng.gen_range(0.3..0.9),
                seed: rng.gen(),
            };
            let start = random_direction(rng);
            let trajectory = match rng.gen_range(0..3) {
                0 => TrajectoryKind::Static { dir: start },
                1 => TrajectoryKind::GreatCircle {
                    start,
                    angular_velocity: rng.gen_range(0.1..0.8)
                        * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                },
                _ => TrajectoryKind::RandomWalk {
                    start,
                    step_sigma: rng.gen_range(0.02..0.1),
                    max_velocity: rng.gen_range(0.3..1.0),
                },
            };
            (source, TrajectorySpec { kind: trajectory, seed: rng.gen() })
        })
        .collect();
    SceneSpec { sources, duration: options.duration, sample_rate: options.sample_rate }
}

fn random_direction<R: Rng>(rng: &mut R) -> Direction {
    let z: f64 = rng.gen_range(-1.0..1.0);
    Direction::new(rng.gen_range(0.0..TAU), z.asin())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::energy_map;
    use crate::sphmath::fibonacci_sphere;
    use tempfile::tempdir;

    #[test]
    fn sine_peak_matches_gain_and_seed_is_deterministic() {
        let spec = SourceSpec { kind: SourceKind::Sine { freq: 440.0 }, gain: 0.5, seed: 7 };
        let a = synth_source(&spec, 1.0, 16_000).unwrap();
        assert!((a.peak() - 0.5).abs() < 1e-9);
        let b = synth_source(&spec, 1.0, 16_000).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn band_noise_energy_stays_in_band() {
        let spec = SourceSpec {
            kind: SourceKind::BandNoiseBurst { low: 200.0, high: 800.0, bursts: 3 },
            gain: 0.8,
            seed: 11,
        };
        let wave = synth_source(&spec, 1.0, 16_000).unwrap();
        // DFT oracle: fraction of spectral energy inside [200, 800] Hz.
        let n = wave.len();
        let mut buf: Vec<Complex64> =
            wave.samples().iter().map(|&s| Complex64::new(s, 0.0)).collect();
        rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let mut total = 0.0;
        let mut in_band = 0.0;
        for (k, c) in buf.iter().enumerate().take(n / 2) {
            let f = k as f64 * 16_000.0 / n as f64;
            let e = c.norm_sqr();
            total += e;
            if (200.0..=800.0).contains(&f) {
                in_band += e;
            }
        }
        assert!(in_band / total >= 0.95, "in-band fraction {}", in_band / total);
    }

    #[test]
    fn static_trajectory_is_constant() {
        let spec = TrajectorySpec {
            kind: TrajectoryKind::Static { dir: Direction::left() },
            seed: 0,
        };
        let traj = sample_trajectory(&spec, 2.0, 10.0);
        for k in 0..20 {
            assert_eq!(traj.at_time(k as f64 * 0.1), Direction::left());
        }
    }

    #[test]
    fn great_circle_horizontal_sweeps_azimuth_linearly() {
        let omega = 0.5;
        let spec = TrajectorySpec {
            kind: TrajectoryKind::GreatCircle {
                start: Direction::front(),
                angular_velocity: omega,
            },
            seed: 0,
        };
        let traj = sample_trajectory(&spec, 4.0, 10.0);
        for k in 0..40 {
            let t = k as f64 * 0.1 + 0.037; // off-keyframe times too
            let d = traj.at_time(t);
            assert!((d.azimuth() - (omega * t) % TAU).abs() < 1e-9, "t={t}");
            assert_eq!(d.elevation(), 0.0);
        }
    }

    #[test]
    fn random_walk_respects_velocity_cap() {
        let spec = TrajectorySpec {
            kind: TrajectoryKind::RandomWalk {
                start: Direction::new(0.3, 0.2),
                step_sigma: 0.2,
                max_velocity: 0.6,
            },
            seed: 21,
        };
        let rate = 10.0;
        let traj = sample_trajectory(&spec, 5.0, rate);
        let cap = 0.6 / rate;
        for pair in traj.keyframes().windows(2) {
            let step = angular_distance(pair[0], pair[1]);
            assert!(step <= cap + 1e-12, "step {step} exceeds {cap}");
        }
    }

    fn one_source_scene(kind: SourceKind, traj: TrajectoryKind) -> SceneSpec {
        SceneSpec {
            sources: vec![(
                SourceSpec { kind, gain: 0.7, seed: 5 },
                TrajectorySpec { kind: traj, seed: 6 },
            )],
            duration: 1.0,
            sample_rate: 16_000,
        }
    }

    #[test]
    fn single_source_mono_equals_source_exactly() {
        let spec = one_source_scene(
            SourceKind::Sine { freq: 500.0 },
            TrajectoryKind::Static { dir: Direction::new(2.0, -0.4) },
        );
        let (mono, _, gt) = render_scene(&spec, 1).unwrap();
        let source = synth_source(&spec.sources[0].0, 1.0, 16_000).unwrap();
        assert_eq!(mono.samples(), source.samples());
        assert_eq!(gt.channel(0).samples(), source.samples());
    }

    #[test]
    fn silent_source_yields_zero_hints() {
        let dir = tempdir().unwrap();
        let silent_path = dir.path().join("silent.wav");
        wav::write_wav_mono(&silent_path, &Waveform::zeros(16_000, 16_000)).unwrap();
        let spec = one_source_scene(
            SourceKind::File { path: silent_path },
            TrajectoryKind::Static { dir: Direction::front() },
        );
        let (mono, hints, _) = render_scene(&spec, 1).unwrap();
        assert!(mono.samples().iter().all(|&s| s == 0.0));
        assert!(hints.grids().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn antipodal_sources_make_two_blobs_and_sum_linearly() {
        let front = (
            SourceSpec { kind: SourceKind::Sine { freq: 400.0 }, gain: 0.6, seed: 1 },
            TrajectorySpec { kind: TrajectoryKind::Static { dir: Direction::front() }, seed: 0 },
        );
        let back = (
            SourceSpec { kind: SourceKind::Sine { freq: 900.0 }, gain: 0.6, seed: 2 },
            TrajectorySpec { kind: TrajectoryKind::Static { dir: Direction::back() }, seed: 0 },
        );
        let both = SceneSpec {
            sources: vec![front.clone(), back.clone()],
            duration: 1.0,
            sample_rate: 16_000,
        };
        let only_front = SceneSpec { sources: vec![front], ..both.clone() };
        let only_back = SceneSpec { sources: vec![back], ..both.clone() };

        let (_, hints, gt) = render_scene(&both, 1).unwrap();
        let (_, _, gt_front) = render_scene(&only_front, 1).unwrap();
        let (_, _, gt_back) = render_scene(&only_back, 1).unwrap();

        for c in 0..4 {
            for t in 0..gt.len() {
                let sum = gt_front.channel(c).samples()[t] + gt_back.channel(c).samples()[t];
                assert!((gt.channel(c).samples()[t] - sum).abs() < 1e-12);
            }
        }

        // Two disjoint hint blobs: both source cells active.
        let grid = hints.grid(5);
        let (fr, fc) = HintFeatures::cell_of(Direction::front());
        let (br, bc) = HintFeatures::cell_of(Direction::back());
        assert!(grid[fr * HINT_COLS + fc] > 0.1);
        assert!(grid[br * HINT_COLS + bc] > 0.1);
    }

    #[test]
    fn hint_argmax_cell_contains_true_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..12 {
            let dir = random_direction(&mut rng);
            let spec = one_source_scene(
                SourceKind::Sine { freq: 600.0 },
                TrajectoryKind::Static { dir },
            );
            let (_, hints, _) = render_scene(&spec, 1).unwrap();
            for grid in hints.grids() {
                let rms_proxy: f64 = grid.iter().sum();
                if rms_proxy < 0.01 {
                    continue;
                }
                let argmax = grid
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                let cell = (argmax / HINT_COLS, argmax % HINT_COLS);
                assert_eq!(cell, HintFeatures::cell_of(dir));
            }
        }
    }

    #[test]
    fn hint_rotation_rolls_columns() {
        let spec = one_source_scene(
            SourceKind::Sine { freq: 600.0 },
            TrajectoryKind::Static { dir: Direction::front() },
        );
        let (_, hints, _) = render_scene(&spec, 1).unwrap();
        // Rotating by exactly two cells moves the argmax two columns over.
        let psi = 2.0 / HINT_COLS as f64 * TAU;
        let rotated = hints.rotate_z(psi);
        let (r0, c0) = HintFeatures::cell_of(Direction::front());
        let (r1, c1) = HintFeatures::cell_of(Direction::new(psi, 0.0));
        assert_eq!(r0, r1);
        let grid = rotated.grid(3);
        let argmax = grid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!((argmax / HINT_COLS, argmax % HINT_COLS), (r1, c1));
        assert_ne!(c0, c1);
    }

    #[test]
    fn energy_map_argmax_tracks_dominant_source() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        let sampling = fibonacci_sphere(128).unwrap();
        for _ in 0..6 {
            let dir = random_direction(&mut rng);
            let spec = one_source_scene(
                SourceKind::Chirp { f0: 300.0, f1: 1200.0 },
                TrajectoryKind::Static { dir },
            );
            let (_, _, gt) = render_scene(&spec, 1).unwrap();
            let map = energy_map(&gt, 0.5, 0.1, &sampling).unwrap();
            let nearest = sampling.nearest(dir);
            let neighbor_gap = angular_distance(
                sampling.points()[map.argmax()],
                sampling.points()[nearest],
            );
            // Within one lattice-neighbor ring (~2× the lattice spacing).
            assert!(neighbor_gap < 2.0 * (4.0 * PI / 128.0).sqrt(), "gap {neighbor_gap}");
        }
    }

    #[test]
    fn dataset_split_counts_and_determinism() {
        let dir = tempdir().unwrap();
        let opts = GenOptions { duration: 1.0, ..Default::default() };
        let manifest = gen_dataset(8, 42, 1, dir.path(), &opts).unwrap();
        assert_eq!(manifest.entries(Split::Train).count(), 6);
        assert_eq!(manifest.entries(Split::Test).count(), 2);
        let bytes_a = fs::read(dir.path().join("manifest.json")).unwrap();

        let dir2 = tempdir().unwrap();
        gen_dataset(8, 42, 1, dir2.path(), &opts).unwrap();
        let bytes_b = fs::read(dir2.path().join("manifest.json")).unwrap();
        assert_eq!(bytes_a, bytes_b);

        // Every referenced file exists and loads.
        for entry in &manifest.scenes {
            let gt = wav::read_wav(&manifest.resolve(&entry.gt)).unwrap();
            gt.into_ambisonic().unwrap();
            wav::read_wav(&manifest.resolve(&entry.mono)).unwrap().into_mono().unwrap();
            load_hints(&manifest.resolve(&entry.hints)).unwrap();
        }
    }

    #[test]
    fn dataset_rejects_tiny_counts() {
        let dir = tempdir().unwrap();
        assert!(gen_dataset(3, 1, 1, dir.path(), &GenOptions::default()).is_err());
    }

    #[test]
    fn render_is_deterministic() {
        let spec = one_source_scene(
            SourceKind::BandNoiseBurst { low: 300.0, high: 900.0, bursts: 2 },
            TrajectoryKind::RandomWalk {
                start: Direction::front(),
                step_sigma: 0.05,
                max_velocity: 0.5,
            },
        );
        let (mono_a, hints_a, gt_a) = render_scene(&spec, 2).unwrap();
        let (mono_b, hints_b, gt_b) = render_scene(&spec, 2).unwrap();
        assert_eq!(mono_a, mono_b);
        assert_eq!(hints_a, hints_b);
        assert_eq!(gt_a, gt_b);
    }

    #[test]
    fn scene_spec_validation() {
        let mut spec = one_source_scene(
            SourceKind::Sine { freq: 100.0 },
            TrajectoryKind::Static { dir: Direction::front() },
        );
        spec.sources[0].0.gain = 1.5;
        assert!(spec.validate().is_err());
        spec.sources.clear();
        assert!(spec.validate().is_err());
    }
}
