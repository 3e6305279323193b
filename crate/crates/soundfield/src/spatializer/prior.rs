//! Spatial-prior baseline: the dataset-average directional energy map,
//! decomposed into first-order spherical-harmonic coefficients, applied
//! as a static mono upmix (1, c_x/c_w, c_y/c_w, c_z/c_w)·i(t).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{AmbisonicSignal, Waveform};
use crate::metrics::energy_map;
use crate::scenes::{DatasetManifest, Split};
use crate::sphmath::{eval_sh, fibonacci_sphere, Normalization};
use crate::wav;
use crate::{Error, Result};

/// SN3D first-order coefficients of the mean energy map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorCoefficients {
    pub c_w: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub c_z: f64,
}

impl PriorCoefficients {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Averages the per-second energy maps of every training signal and
/// projects the mean onto the first-order SN3D basis.
pub fn prior_fit(manifest: &DatasetManifest) -> Result<PriorCoefficients> {
    let sampling = fibonacci_sphere(128)?;
    let mut mean = vec![0.0; sampling.len()];
    let mut chunks = 0usize;

    for entry in manifest.entries(Split::Train) {
        let gt = wav::read_wav(&manifest.resolve(&entry.gt))?.into_ambisonic()?;
        let foa = if gt.order() > 1 { gt.truncate_order(1)? } else { gt };
        let seconds = foa.duration_secs().floor() as usize;
        for k in 0..seconds {
            let map = energy_map(&foa, k as f64 + 0.5, 0.1, &sampling)?;
            for (m, w) in mean.iter_mut().zip(map.weights()) {
                *m += w;
            }
            chunks += 1;
        }
    }
    if chunks == 0 {
        return Err(Error::EmptyDataset);
    }
    for m in &mut mean {
        *m /= chunks as f64;
    }

    // Discrete projection on the lattice; the shared quadrature constant
    // cancels in the ratios prior_apply uses.
    let mut coeffs = [0.0; 4];
    for (weight, dir) in mean.iter().zip(sampling.points()) {
        let sh = eval_sh(1, *dir, Normalization::SN3D);
        for (c, y) in coeffs.iter_mut().zip(sh.values()) {
            *c += weight * y;
        }
    }
    // ACN order is (W, Y, Z, X).
    Ok(PriorCoefficients { c_w: coeffs[0], c_y: coeffs[1], c_z: coeffs[2], c_x: coeffs[3] })
}

/// Static upmix (φ_w, φ_x, φ_y, φ_z) = (1, c_x/c_w, c_y/c_w, c_z/c_w)·i(t).
pub fn prior_apply(mono: &Waveform, coeffs: &PriorCoefficients) -> Result<AmbisonicSignal> {
    if coeffs.c_w == 0.0 {
        return Err(Error::DegeneratePrior);
    }
    let scaled = |ratio: f64| -> Waveform {
        Waveform::new(mono.samples().iter().map(|s| s * ratio).collect(), mono.sample_rate())
    };
    AmbisonicSignal::new(
        1,
        Normalization::SN3D,
        vec![
            mono.clone(),
            scaled(coeffs.c_y / coeffs.c_w),
            scaled(coeffs.c_z / coeffs.c_w),
            scaled(coeffs.c_x / coeffs.c_w),
        ],
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenes::{
        render_scene, save_hints, SceneEntry, SceneSpec, SourceKind, SourceSpec,
        TrajectoryKind, TrajectorySpec,
    };
    use crate::sphmath::Direction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;
    use tempfile::tempdir;

    fn static_scene(dir: Direction, seed: u64, duration: f64) -> SceneSpec {
        SceneSpec {
            sources: vec![(
                SourceSpec { kind: SourceKind::Sine { freq: 500.0 }, gain: 0.7, seed },
                TrajectorySpec { kind: TrajectoryKind::Static { dir }, seed },
            )],
            duration,
            sample_rate: 16_000,
        }
    }

    fn write_dataset(dirs: &[Direction], duration: f64) -> (tempfile::TempDir, DatasetManifest) {
        let dir = tempdir().unwrap();
        let mut entries = Vec::new();
        for (i, d) in dirs.iter().enumerate() {
            let spec = static_scene(*d, i as u64, duration);
            let (mono, hints, gt) = render_scene(&spec, 1).unwrap();
            let gt_name = format!("s{i}_gt.wav");
            let mono_name = format!("s{i}_mono.wav");
            let hints_name = format!("s{i}_hints.json");
            wav::write_wav(&dir.path().join(&gt_name), &gt).unwrap();
            wav::write_wav_mono(&dir.path().join(&mono_name), &mono).unwrap();
            save_hints(&dir.path().join(&hints_name), &hints).unwrap();
            entries.push(SceneEntry {
                gt: gt_name,
                mono: mono_name,
                hints: hints_name,
                split: Split::Train,
            });
        }
        let manifest = DatasetManifest::new(entries, 1, 0, dir.path().to_path_buf());
        (dir, manifest)
    }

    #[test]
    fn front_dataset_puts_prior_energy_at_front() {
        let (_tmp, manifest) = write_dataset(&[Direction::front(); 4], 2.0);
        let coeffs = prior_fit(&manifest).unwrap();
        // The point-source energy map is |1 + 3cosΔ| (up to scale), whose
        // first-order projection ratio is ≈ 0.29 toward the source.
        assert!(coeffs.c_x / coeffs.c_w > 0.2, "{coeffs:?}");
        assert!((coeffs.c_y / coeffs.c_w).abs() < 0.05, "{coeffs:?}");
        assert!((coeffs.c_z / coeffs.c_w).abs() < 0.05, "{coeffs:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mono = Waveform::new(
            (0..16_000).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            16_000,
        );
        let upmixed = prior_apply(&mono, &coeffs).unwrap();
        let sampling = fibonacci_sphere(128).unwrap();
        let map = energy_map(&upmixed, 0.5, 0.1, &sampling).unwrap();
        assert_eq!(map.argmax(), sampling.nearest(Direction::front()));
    }

    #[test]
    fn isotropic_dataset_has_small_directional_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dirs: Vec<Direction> = (0..300)
            .map(|_| {
                let z: f64 = rng.gen_range(-1.0..1.0);
                Direction::new(rng.gen_range(0.0..TAU), z.asin())
            })
            .collect();
        let (_tmp, manifest) = write_dataset(&dirs, 1.0);
        let coeffs = prior_fit(&manifest).unwrap();
        assert!((coeffs.c_x / coeffs.c_w).abs() < 0.05, "{coeffs:?}");
        assert!((coeffs.c_y / coeffs.c_w).abs() < 0.05, "{coeffs:?}");
        assert!((coeffs.c_z / coeffs.c_w).abs() < 0.05, "{coeffs:?}");
    }

    #[test]
    fn single_video_prior_is_its_own_decomposition() {
        let (_tmp, manifest) = write_dataset(&[Direction::new(2.2, 0.3)], 3.0);
        let coeffs = prior_fit(&manifest).unwrap();

        // Direct recomputation from the only file.
        let entry = manifest.scenes.first().unwrap();
        let gt = wav::read_wav(&manifest.resolve(&entry.gt))
            .unwrap()
            .into_ambisonic()
            .unwrap();
        let sampling = fibonacci_sphere(128).unwrap();
        let mut mean = vec![0.0; 128];
        for k in 0..3 {
            let map = energy_map(&gt, k as f64 + 0.5, 0.1, &sampling).unwrap();
            for (m, w) in mean.iter_mut().zip(map.weights()) {
                *m += w / 3.0;
            }
        }
        let mut expect = [0.0; 4];
        for (w, d) in mean.iter().zip(sampling.points()) {
            let sh = eval_sh(1, *d, Normalization::SN3D);
            for (e, y) in expect.iter_mut().zip(sh.values()) {
                *e += w * y;
            }
        }
        assert!((coeffs.c_w - expect[0]).abs() < 1e-12);
        assert!((coeffs.c_y - expect[1]).abs() < 1e-12);
        assert!((coeffs.c_z - expect[2]).abs() < 1e-12);
        assert!((coeffs.c_x - expect[3]).abs() < 1e-12);
    }

    #[test]
    fn apply_w_only_and_scale_invariance() {
        let mono = Waveform::new(vec![0.1, -0.2, 0.3], 16_000);
        let w_only =
            prior_apply(&mono, &PriorCoefficients { c_w: 1.0, c_x: 0.0, c_y: 0.0, c_z: 0.0 })
                .unwrap();
        for acn in 1..4 {
            assert!(w_only.channel(acn).samples().iter().all(|&s| s == 0.0));
        }

        let base = PriorCoefficients { c_w: 0.5, c_x: 0.2, c_y: -0.1, c_z: 0.05 };
        let scaled = PriorCoefficients {
            c_w: base.c_w * 3.0,
            c_x: base.c_x * 3.0,
            c_y: base.c_y * 3.0,
            c_z: base.c_z * 3.0,
        };
        assert_eq!(
            prior_apply(&mono, &base).unwrap(),
            prior_apply(&mono, &scaled).unwrap()
        );
    }

    #[test]
    fn zero_c_w_rejected() {
        let mono = Waveform::zeros(4, 16_000);
        assert!(matches!(
            prior_apply(&mono, &PriorCoefficients { c_w: 0.0, c_x: 1.0, c_y: 0.0, c_z: 0.0 }),
            Err(Error::DegeneratePrior)
        ));
    }
}
