//! Self-supervised training: sample 0.6 s windows, predict the central
//! 0.1 s of the missing channels, minimize the STFT distance, with
//! z-rotation augmentation applied jointly to hints and targets.

use std::f64::consts::TAU;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_graph, SpatializerParams};
use crate::audio::{rotate_z, AmbisonicSignal, Waveform};
use crate::autodiff::{adam_step, spectrogram_to_tensor, AdamHyper, AdamState, Tensor};
use crate::scenes::{load_hints, DatasetManifest, HintFeatures, Split};
use crate::stft::stft;
use crate::wav;
use crate::{Error, Result};

/// Training-run settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Random z-rotation of hints and targets per sample.
    pub augment: bool,
    pub adam: AdamHyper,
    /// Input window seconds.
    pub window_secs: f64,
    /// Centered prediction window seconds (the loss region).
    pub predict_secs: f64,
    /// Write a checkpoint every this many iterations (0 = only on demand).
    pub checkpoint_every: usize,
    /// Stem for periodic checkpoints (`<stem>_iter<NNN>.afg`).
    pub checkpoint_stem: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            seed: 0,
            augment: true,
            adam: AdamHyper::default(),
            window_secs: 0.6,
            predict_secs: 0.1,
            checkpoint_every: 0,
            checkpoint_stem: None,
        }
    }
}

/// Loss history of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// (iteration, loss) per step.
    pub history: Vec<(usize, f64)>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,loss\n");
        for (i, l) in &self.history {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// One training scene held in memory (f32 storage matches the on-disk
/// precision).
struct LoadedScene {
    gt: Vec<Vec<f32>>,
    z_present: bool,
    hints: HintFeatures,
    len: usize,
}

fn load_scenes(
    manifest: &DatasetManifest,
    params: &SpatializerParams,
) -> Result<Vec<LoadedScene>> {
    let mut scenes = Vec::new();
    for entry in manifest.entries(Split::Train) {
        let gt = wav::read_wav(&manifest.resolve(&entry.gt))?.into_ambisonic()?;
        if gt.order() != params.config().order_out {
            return Err(Error::SignalMismatch(format!(
                "scene `{}` has order {}, model outputs order {}",
                entry.gt,
                gt.order(),
                params.config().order_out
            )));
        }
        if gt.sample_rate() != params.config().sample_rate {
            return Err(Error::SignalMismatch(format!(
                "scene `{}` runs at {} Hz, model expects {} Hz",
                entry.gt,
                gt.sample_rate(),
                params.config().sample_rate
            )));
        }
        let hints = load_hints(&manifest.resolve(&entry.hints))?;
        scenes.push(LoadedScene {
            len: gt.len(),
            z_present: gt.z_present(),
            gt: gt
                .channels()
                .iter()
                .map(|ch| ch.samples().iter().map(|&s| s as f32).collect())
                .collect(),
            hints,
        });
    }
    if scenes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(scenes)
}

/// Trains in place; returns the per-iteration loss history. Deterministic
/// for a fixed seed.
pub fn train(
    manifest: &DatasetManifest,
    params: &mut SpatializerParams,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let scenes = load_scenes(manifest, params)?;
    let rate = params.config().sample_rate;
    let stft_cfg = params.stft_config();
    let window = (cfg.window_secs * rate as f64).round() as usize;
    let predict = (cfg.predict_secs * rate as f64).round() as usize;
    let center = (window - predict) / 2;
    let in_ch = params.config().in_channels();
    let out_ch = params.config().out_channels();

    for scene in &scenes {
        if scene.len < window {
            return Err(Error::InputTooShort { len: scene.len, min: window });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values: Vec<Tensor> =
        params.tensors().iter().map(|(_, t)| t.clone()).collect();
    let mut state = AdamState::new(&values);
    let mut history = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let scene = &scenes[rng.gen_range(0..scenes.len())];
        let start = rng.gen_range(0..=scene.len - window);
        let psi = if cfg.augment { rng.gen_range(0.0..TAU) } else { 0.0 };

        // Window the ground truth and rotate scene + hints together.
        let channels: Vec<Waveform> = scene
            .gt
            .iter()
            .map(|ch| {
                Waveform::new(
                    ch[start..start + window].iter().map(|&s| s as f64).collect(),
                    rate,
                )
            })
            .collect();
        let target = AmbisonicSignal::new(
            params.config().order_out,
            crate::sphmath::Normalization::SN3D,
            channels,
            scene.z_present,
        )?;
        let target = if psi != 0.0 { rotate_z(&target, psi)? } else { target };
        let input = target.truncate_order(params.config().order_in)?;
        let hints = if psi != 0.0 { scene.hints.rotate_z(psi) } else { scene.hints.clone() };
        let time_offset = start as f64 / rate as f64;

        let mut graph = build_graph(params, &input, Some(&hints), time_offset, None, None)?;
        let mut loss_var = None;
        for p in 0..out_ch {
            let acn = in_ch + p;
            if acn == 2 && !target.z_present() {
                continue;
            }
            let target_spec = stft(&target.channel(acn).slice(center, predict), stft_cfg)?;
            let target_const = graph.tape.leaf(spectrogram_to_tensor(&target_spec));
            let pred_slice = graph.tape.slice(graph.generated[p], center, vec![predict]);
            let pred_spec = graph.tape.stft_node(pred_slice, stft_cfg, rate);
            let diff = graph.tape.sub(pred_spec, target_const);
            let sq = graph.tape.square(diff);
            let channel_loss = graph.tape.sum(sq);
            loss_var = Some(match loss_var {
                None => channel_loss,
                Some(acc) => graph.tape.add(acc, channel_loss),
            });
        }
        let loss_var = loss_var.expect("at least one unmasked channel");
        let loss = graph.tape.value(loss_var).item();
        let grads = graph.tape.grad(loss_var, &graph.param_vars);

        adam_step(&mut values, &grads, &mut state, &cfg.adam);
        for ((_, slot), value) in params.tensors_mut().iter_mut().zip(&values) {
            *slot = value.clone();
        }
        history.push((iter, loss));

        if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
            if let Some(stem) = &cfg.checkpoint_stem {
                let mut path = stem.clone().into_os_string();
                path.push(format!("_iter{:05}.afg", iter + 1));
                params.save(&PathBuf::from(path))?;
            }
        }
    }

    Ok(TrainReport { history })
}
