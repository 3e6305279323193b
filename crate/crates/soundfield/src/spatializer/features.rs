//! Constant (non-learnable) feature inputs: mel-style log-magnitude band
//! pooling of input spectra and nearest-neighbor hint upsampling to the
//! STFT frame rate. The learnable stacks consuming these live in the
//! forward graph.

use crate::autodiff::Tensor;
use crate::scenes::{HintFeatures, HINT_COLS, HINT_ROWS};
use crate::stft::{Spectrogram, StftConfig};

/// Number of pooled magnitude bands per input channel.
pub const FEATURE_BANDS: usize = 32;
/// Number of band gains per separation source, upsampled to full bins.
pub const GAIN_BANDS: usize = 32;
/// Floor inside the log to keep silence finite.
const LOG_FLOOR: f64 = 1e-6;

/// Mel scale, the usual 2595·log10(1 + f/700).
fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

/// Band edges as bin indices: `bands` mel-uniform intervals over the
/// one-sided spectrum, each at least one bin wide.
pub fn band_edges(cfg: StftConfig, sample_rate: u32, bands: usize) -> Vec<(usize, usize)> {
    let bins = cfg.bins();
    let nyquist = sample_rate as f64 / 2.0;
    let top = mel(nyquist);
    let mut edges = Vec::with_capacity(bands);
    let mut start = 0usize;
    for b in 0..bands {
        let hz = 700.0 * (10f64.powf(top * (b + 1) as f64 / bands as f64 / 2595.0) - 1.0);
        let mut end = ((hz / nyquist) * (bins - 1) as f64).round() as usize + 1;
        end = end.clamp(start + 1, bins - (bands - 1 - b)); // leave room for the rest
        if b == bands - 1 {
            end = bins;
        }
        edges.push((start, end));
        start = end;
    }
    edges
}

/// Centers of the band intervals in bin coordinates, the knots for
/// upsampling band gains back to full-resolution masks.
pub fn band_centers(edges: &[(usize, usize)]) -> Vec<f64> {
    edges.iter().map(|(s, e)| (*s as f64 + (*e - 1) as f64) / 2.0).collect()
}

/// For each bin, its fractional band coordinate (piecewise linear between
/// band centers, clamped at the ends).
pub fn bin_positions(edges: &[(usize, usize)], bins: usize) -> Vec<f64> {
    let centers = band_centers(edges);
    (0..bins)
        .map(|k| {
            let k = k as f64;
            if k <= centers[0] {
                return 0.0;
            }
            if k >= *centers.last().unwrap() {
                return (centers.len() - 1) as f64;
            }
            let b = centers.partition_point(|&c| c <= k) - 1;
            b as f64 + (k - centers[b]) / (centers[b + 1] - centers[b])
        })
        .collect()
}

/// Pools a spectrogram's log magnitudes into `bands` mel-style bands:
/// [frames, bands].
pub fn pooled_log_bands_n(spec: &Spectrogram, sample_rate: u32, bands: usize) -> Tensor {
    let edges = band_edges(spec.config(), sample_rate, bands);
    let frames = spec.frames();
    let mut data = Vec::with_capacity(frames * bands);
    for f in 0..frames {
        let row = spec.row(f);
        for (s, e) in &edges {
            let pooled: f64 =
                row[*s..*e].iter().map(|c| (c.norm() + LOG_FLOOR).ln()).sum::<f64>()
                    / (*e - *s) as f64;
            data.push(pooled);
        }
    }
    Tensor::matrix(frames, bands, data).expect("band pooling shape")
}

/// Default-width pooling ([`FEATURE_BANDS`] bands).
pub fn pooled_log_bands(spec: &Spectrogram, sample_rate: u32) -> Tensor {
    pooled_log_bands_n(spec, sample_rate, FEATURE_BANDS)
}

/// Nearest-neighbor upsampling of hint grids to the STFT frame rate:
/// [frames, HINT_ROWS·HINT_COLS]. `time_offset` is the absolute time of
/// the first analysed sample (frame f is centered at
/// time_offset + (f·hop + window/2 − pad)/fs).
pub fn hint_matrix(
    hints: &HintFeatures,
    frames: usize,
    cfg: StftConfig,
    sample_rate: u32,
    pad: usize,
    time_offset: f64,
) -> Tensor {
    let cells = HINT_ROWS * HINT_COLS;
    let mut data = Vec::with_capacity(frames * cells);
    for f in 0..frames {
        let center = (f * cfg.hop + cfg.window_len / 2) as f64 - pad as f64;
        let t = time_offset + center / sample_rate as f64;
        let frame = hints.frame_at_time(t.max(0.0));
        data.extend_from_slice(hints.grid(frame));
    }
    Tensor::matrix(frames, cells, data).expect("hint matrix shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use crate::stft::stft;

    #[test]
    fn band_edges_cover_all_bins_without_overlap() {
        for rate in [16_000u32, 48_000] {
            let cfg = StftConfig::for_sample_rate(rate);
            let edges = band_edges(cfg, rate, FEATURE_BANDS);
            assert_eq!(edges.len(), FEATURE_BANDS);
            assert_eq!(edges[0].0, 0);
            assert_eq!(edges.last().unwrap().1, cfg.bins());
            for pair in edges.windows(2) {
                assert_eq!(pair[0].1, pair[1].0);
                assert!(pair[0].0 < pair[0].1);
            }
        }
    }

    #[test]
    fn bin_positions_are_monotone_and_clamped() {
        let cfg = StftConfig::for_sample_rate(16_000);
        let edges = band_edges(cfg, 16_000, GAIN_BANDS);
        let pos = bin_positions(&edges, cfg.bins());
        assert_eq!(pos.len(), cfg.bins());
        assert_eq!(pos[0], 0.0);
        assert_eq!(*pos.last().unwrap(), (GAIN_BANDS - 1) as f64);
        for pair in pos.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn silent_audio_pools_to_the_log_floor() {
        let cfg = StftConfig::for_sample_rate(16_000);
        let spec = stft(&Waveform::zeros(1600, 16_000), cfg).unwrap();
        let bands = pooled_log_bands(&spec, 16_000);
        for v in bands.data() {
            assert!((v - LOG_FLOOR.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn hint_matrix_tracks_frame_shifts() {
        // Two hint frames with distinct fingerprints; shifting the time
        // offset by one hint frame swaps which rows pick which grid.
        let cells = HINT_ROWS * HINT_COLS;
        let mut g0 = vec![0.0; cells];
        g0[0] = 1.0;
        let mut g1 = vec![0.0; cells];
        g1[1] = 1.0;
        let hints = HintFeatures::new(vec![g0, g1], 10.0).unwrap();
        let cfg = StftConfig::for_sample_rate(16_000);

        let m0 = hint_matrix(&hints, 4, cfg, 16_000, 0, 0.0);
        for f in 0..4 {
            assert_eq!(m0.at2(f, 0), 1.0, "frame {f} picks grid 0");
        }
        let m1 = hint_matrix(&hints, 4, cfg, 16_000, 0, 0.1);
        for f in 0..4 {
            assert_eq!(m1.at2(f, 1), 1.0, "frame {f} picks grid 1");
        }
    }
}
