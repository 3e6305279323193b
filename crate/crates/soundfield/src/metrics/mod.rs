//! Evaluation measures for predicted spatial audio: STFT distance,
//! envelope distance, and Earth Mover's Distance over directional energy
//! maps, plus the per-signal chunked evaluation protocol.

mod emd;
mod energy;

pub use energy::{emd, energy_map, EnergyMap};

use std::f64::consts::TAU;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::audio::{AmbisonicSignal, Waveform};
use crate::sphmath::{channel_count, fibonacci_sphere};
use crate::stft::{stft, StftConfig};
use crate::{Error, Result};

/// ACN indices of the channels a converter generates: the top-degree
/// block (degree 1 for FOA targets, degree 2 for SOA targets).
pub fn generated_channels(order: usize) -> Result<Range<usize>> {
    if order == 0 || order > 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    Ok(channel_count(order - 1)..channel_count(order))
}

fn check_pair(pred: &AmbisonicSignal, reference: &AmbisonicSignal) -> Result<()> {
    if pred.order() != reference.order() {
        return Err(Error::SignalMismatch(format!(
            "order {} vs {}",
            pred.order(),
            reference.order()
        )));
    }
    if pred.len() != reference.len() {
        return Err(Error::SignalMismatch(format!(
            "length {} vs {}",
            pred.len(),
            reference.len()
        )));
    }
    if pred.sample_rate() != reference.sample_rate() {
        return Err(Error::SignalMismatch(format!(
            "sample rate {} vs {}",
            pred.sample_rate(),
            reference.sample_rate()
        )));
    }
    Ok(())
}

/// True for channels excluded by the horizontal-microphone mask: the Z
/// channel (ACN 2) when the reference has no Z data.
fn z_masked(acn: usize, order: usize, reference: &AmbisonicSignal) -> bool {
    order == 1 && acn == 2 && !reference.z_present()
}

/// STFT distance: Σ over generated channels of Σ_t Σ_ω ‖Φ − Φ̂‖², skipping
/// the Z channel when the reference lacks it.
pub fn stft_mse(
    pred: &AmbisonicSignal,
    reference: &AmbisonicSignal,
    cfg: StftConfig,
) -> Result<f64> {
    check_pair(pred, reference)?;
    let order = pred.order();
    let mut total = 0.0;
    for acn in generated_channels(order)? {
        if z_masked(acn, order, reference) {
            continue;
        }
        let p = stft(pred.channel(acn), cfg)?;
        let r = stft(reference.channel(acn), cfg)?;
        total += p
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
    }
    Ok(total)
}

/// Sliding Hann-weighted RMS envelope with hop = window/4.
pub fn envelope(x: &Waveform, window_secs: f64) -> Waveform {
    assert!(window_secs > 0.0, "envelope window must be positive");
    if x.is_empty() {
        return Waveform::new(Vec::new(), x.sample_rate());
    }
    let rate = x.sample_rate() as f64;
    let window_len = (((window_secs * rate).round() as usize).max(1)).min(x.len());
    let hop = (window_len / 4).max(1);
    let weights: Vec<f64> = (0..window_len)
        .map(|j| 0.5 * (1.0 - (TAU * j as f64 / window_len as f64).cos()))
        .collect();
    // A degenerate one-sample Hann window is zero; fall back to flat.
    let weight_sum: f64 = weights.iter().sum();
    let (weights, weight_sum) = if weight_sum > 0.0 {
        (weights, weight_sum)
    } else {
        (vec![1.0; window_len], window_len as f64)
    };

    let frames = (x.len() - window_len) / hop + 1;
    let mut env = Vec::with_capacity(frames);
    for f in 0..frames {
        let start = f * hop;
        let acc: f64 = weights
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let s = x.samples()[start + j];
                w * s * s
            })
            .sum();
        env.push((acc / weight_sum).sqrt());
    }
    let env_rate = ((rate / hop as f64).round() as u32).max(1);
    Waveform::new(env, env_rate)
}

/// Default envelope window (25 ms), matching the analysis window style.
pub const ENVELOPE_WINDOW_SECS: f64 = 0.025;

/// Envelope distance: per generated channel, the Euclidean distance
/// between envelopes, summed over channels and honoring the Z mask.
pub fn env_distance(pred: &AmbisonicSignal, reference: &AmbisonicSignal) -> Result<f64> {
    check_pair(pred, reference)?;
    let order = pred.order();
    let mut total = 0.0;
    for acn in generated_channels(order)? {
        if z_masked(acn, order, reference) {
            continue;
        }
        let ep = envelope(pred.channel(acn), ENVELOPE_WINDOW_SECS);
        let er = envelope(reference.channel(acn), ENVELOPE_WINDOW_SECS);
        let dist2: f64 = ep
            .samples()
            .iter()
            .zip(er.samples())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        total += dist2.sqrt();
    }
    Ok(total)
}

/// Evaluation protocol settings: one `chunk_secs` chunk per second of
/// signal, EMD on a `emd_points` Fibonacci lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub stft: StftConfig,
    pub chunk_secs: f64,
    pub emd_points: usize,
}

impl EvalConfig {
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        Self {
            stft: StftConfig::for_sample_rate(sample_rate),
            chunk_secs: 0.1,
            emd_points: 128,
        }
    }
}

/// Metrics of one evaluation chunk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkMetrics {
    /// Chunk center, seconds.
    pub t: f64,
    pub stft: f64,
    pub env: f64,
    pub emd: f64,
}

/// Per-signal metric report: chunk means plus the per-chunk breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub stft: f64,
    pub env: f64,
    pub emd: f64,
    pub chunks: Vec<ChunkMetrics>,
}

/// Chunked evaluation: one `chunk_secs` window centered in each whole
/// second of the pair, metrics averaged across chunks.
pub fn evaluate_pair(
    pred: &AmbisonicSignal,
    reference: &AmbisonicSignal,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    check_pair(pred, reference)?;
    let rate = pred.sample_rate() as f64;
    let seconds = (pred.len() as f64 / rate).floor() as usize;
    if seconds == 0 {
        return Err(Error::InputTooShort { len: pred.len(), min: pred.sample_rate() as usize });
    }
    let chunk_len = (cfg.chunk_secs * rate).round() as usize;
    let sampling = fibonacci_sphere(cfg.emd_points)?;

    let mut chunks = Vec::with_capacity(seconds);
    for k in 0..seconds {
        let center = k as f64 + 0.5;
        let start = ((center - cfg.chunk_secs / 2.0) * rate).round() as usize;
        let pred_chunk = pred.slice(start, chunk_len);
        let ref_chunk = reference.slice(start, chunk_len);
        let stft_d = stft_mse(&pred_chunk, &ref_chunk, cfg.stft)?;
        let env_d = env_distance(&pred_chunk, &ref_chunk)?;
        let map_p = energy_map(pred, center, cfg.chunk_secs, &sampling)?;
        let map_r = energy_map(reference, center, cfg.chunk_secs, &sampling)?;
        let emd_d = emd(&map_p, &map_r)?;
        chunks.push(ChunkMetrics { t: center, stft: stft_d, env: env_d, emd: emd_d });
    }

    let n = chunks.len() as f64;
    Ok(MetricReport {
        stft: chunks.iter().map(|c| c.stft).sum::<f64>() / n,
        env: chunks.iter().map(|c| c.env).sum::<f64>() / n,
        emd: chunks.iter().map(|c| c.emd).sum::<f64>() / n,
        chunks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{encode_sources, Trajectory};
    use crate::sphmath::{Direction, Normalization};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_wave<R: Rng>(rng: &mut R, len: usize, rate: u32) -> Waveform {
        Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate)
    }

    fn random_foa<R: Rng>(rng: &mut R, len: usize, rate: u32) -> AmbisonicSignal {
        let channels = (0..4).map(|_| random_wave(rng, len, rate)).collect();
        AmbisonicSignal::new(1, Normalization::SN3D, channels, true).unwrap()
    }

    #[test]
    fn stft_mse_zero_for_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let sig = random_foa(&mut rng, 1600, 16_000);
        let cfg = StftConfig::for_sample_rate(16_000);
        assert_eq!(stft_mse(&sig, &sig, cfg).unwrap(), 0.0);
    }

    #[test]
    fn stft_mse_of_silent_pred_matches_impulse_oracle() {
        // Reference: impulse encoded at front → only X carries the impulse.
        // Unweighted one-sided energy of an impulse at n₀ is
        // bins · Σ_f w²[n₀ − f·hop].
        let rate = 16_000;
        let cfg = StftConfig::for_sample_rate(rate);
        let n0 = 777;
        let mut imp = vec![0.0; 1600];
        imp[n0] = 1.0;
        let reference = encode_sources(
            &[(Waveform::new(imp, rate), Trajectory::constant(Direction::front()))],
            1,
            Normalization::SN3D,
        )
        .unwrap();
        let pred = AmbisonicSignal::silent(1, Normalization::SN3D, 1600, rate);

        let window = cfg.window();
        let frames = cfg.num_frames(1600);
        let mut envelope_at_n0 = 0.0;
        for f in 0..frames {
            let start = f * cfg.hop;
            if n0 >= start && n0 < start + cfg.window_len {
                envelope_at_n0 += window[n0 - start] * window[n0 - start];
            }
        }
        let expected = cfg.bins() as f64 * envelope_at_n0;
        let got = stft_mse(&pred, &reference, cfg).unwrap();
        assert!((got - expected).abs() / expected < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn stft_mse_ignores_z_when_reference_is_horizontal() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let reference = random_foa(&mut rng, 1600, 16_000).with_z_present(false);
        let mut pred = random_foa(&mut rng, 1600, 16_000);
        let cfg = StftConfig::for_sample_rate(16_000);
        let before = stft_mse(&pred, &reference, cfg).unwrap();
        for s in pred.channel_mut(2).samples_mut() {
            *s = 123.0;
        }
        let after = stft_mse(&pred, &reference, cfg).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn stft_mse_is_quadratic_in_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let reference = random_foa(&mut rng, 1600, 16_000);
        let noise = random_foa(&mut rng, 1600, 16_000);
        let cfg = StftConfig::for_sample_rate(16_000);
        let perturbed = |c: f64| {
            let channels = (0..4)
                .map(|ch| {
                    Waveform::new(
                        reference
                            .channel(ch)
                            .samples()
                            .iter()
                            .zip(noise.channel(ch).samples())
                            .map(|(r, n)| r + c * n)
                            .collect(),
                        16_000,
                    )
                })
                .collect();
            AmbisonicSignal::new(1, Normalization::SN3D, channels, true).unwrap()
        };
        let at1 = stft_mse(&perturbed(1.0), &reference, cfg).unwrap();
        let at3 = stft_mse(&perturbed(3.0), &reference, cfg).unwrap();
        assert!((at3 / at1 - 9.0).abs() < 1e-9);
    }

    #[test]
    fn stft_mse_rejects_mismatched() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let a = random_foa(&mut rng, 1600, 16_000);
        let b = random_foa(&mut rng, 1700, 16_000);
        let cfg = StftConfig::for_sample_rate(16_000);
        assert!(stft_mse(&a, &b, cfg).is_err());
    }

    #[test]
    fn envelope_of_zero_is_zero_and_parity_holds() {
        let zero = Waveform::zeros(4000, 16_000);
        assert!(envelope(&zero, 0.025).samples().iter().all(|&e| e == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let x = random_wave(&mut rng, 4000, 16_000);
        let neg = Waveform::new(x.samples().iter().map(|s| -s).collect(), 16_000);
        assert_eq!(envelope(&x, 0.025).samples(), envelope(&neg, 0.025).samples());
    }

    #[test]
    fn envelope_of_unit_sine_is_inverse_sqrt_two() {
        let rate = 16_000;
        let x = Waveform::new(
            (0..rate).map(|t| (TAU * 1000.0 * t as f64 / rate as f64).sin()).collect(),
            rate as u32,
        );
        let env = envelope(&x, 0.025);
        let expected = 1.0 / 2.0_f64.sqrt();
        for e in env.samples() {
            assert!((e - expected).abs() / expected < 0.01, "envelope {e}");
        }
    }

    #[test]
    fn env_distance_zero_for_identical_and_phase_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let sig = random_foa(&mut rng, 3200, 16_000);
        assert_eq!(env_distance(&sig, &sig).unwrap(), 0.0);
        let inverted_channels = sig
            .channels()
            .iter()
            .map(|ch| Waveform::new(ch.samples().iter().map(|s| -s).collect(), 16_000))
            .collect();
        let inverted =
            AmbisonicSignal::new(1, Normalization::SN3D, inverted_channels, true).unwrap();
        assert_eq!(env_distance(&inverted, &sig).unwrap(), 0.0);
    }

    #[test]
    fn env_distance_of_silent_pred_vs_sine_matches_rms_oracle() {
        let rate = 16_000u32;
        let len = rate as usize;
        let sine = Waveform::new(
            (0..len).map(|t| (TAU * 1000.0 * t as f64 / rate as f64).sin()).collect(),
            rate,
        );
        // Reference has the sine on X only (encode at front).
        let reference = encode_sources(
            &[(sine, Trajectory::constant(Direction::front()))],
            1,
            Normalization::SN3D,
        )
        .unwrap();
        let pred = AmbisonicSignal::silent(1, Normalization::SN3D, len, rate);
        let got = env_distance(&pred, &reference).unwrap();
        // Oracle: every envelope frame of a unit sine is ≈ 1/√2, so the
        // distance is √(frames · 1/2).
        let frames = envelope(reference.channel(3), ENVELOPE_WINDOW_SECS).len();
        let expected = (frames as f64 / 2.0).sqrt();
        assert!((got - expected).abs() / expected < 0.01, "{got} vs {expected}");
    }

    #[test]
    fn evaluate_pair_identical_is_zero_and_chunk_count_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        let rate = 16_000;
        let sig = random_foa(&mut rng, 3 * rate as usize, rate);
        let cfg = EvalConfig::for_sample_rate(rate);
        let report = evaluate_pair(&sig, &sig, &cfg).unwrap();
        assert_eq!(report.chunks.len(), 3);
        assert!(report.stft == 0.0 && report.env == 0.0);
        assert!(report.emd < 1e-9);
    }

    #[test]
    fn evaluate_pair_report_is_mean_of_chunks() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let rate = 16_000;
        let pred = random_foa(&mut rng, 2 * rate as usize, rate);
        let reference = random_foa(&mut rng, 2 * rate as usize, rate);
        let cfg = EvalConfig::for_sample_rate(rate);
        let report = evaluate_pair(&pred, &reference, &cfg).unwrap();
        let n = report.chunks.len() as f64;
        let mean = |f: fn(&ChunkMetrics) -> f64| {
            report.chunks.iter().map(f).sum::<f64>() / n
        };
        assert!((report.stft - mean(|c| c.stft)).abs() < 1e-12);
        assert!((report.env - mean(|c| c.env)).abs() < 1e-12);
        assert!((report.emd - mean(|c| c.emd)).abs() < 1e-12);
    }

    #[test]
    fn evaluate_pair_rejects_short_signals() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let rate = 16_000;
        let sig = random_foa(&mut rng, rate as usize / 2, rate);
        let cfg = EvalConfig::for_sample_rate(rate);
        assert!(matches!(
            evaluate_pair(&sig, &sig, &cfg),
            Err(Error::InputTooShort { .. })
        ));
    }

    #[test]
    fn report_serializes_to_expected_schema() {
        let report = MetricReport {
            stft: 1.0,
            env: 2.0,
            emd: 3.0,
            chunks: vec![ChunkMetrics { t: 0.5, stft: 1.0, env: 2.0, emd: 3.0 }],
        };
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("stft").is_some());
        assert!(json.get("env").is_some());
        assert!(json.get("emd").is_some());
        assert!(json.get("chunks").unwrap().as_array().unwrap().len() == 1);
    }
}
