//! Multichannel RIFF/WAVE I/O (PCM16 and IEEE float32), ambiX convention
//! on disk (ACN order, SN3D), plus a JSON sidecar manifest carrying the
//! ambisonic metadata a bare WAV cannot express.
//!
//! Channel count determines the interpretation: 1 = mono, 4 = FOA,
//! 9 = SOA, and 3 = "horizontal" FOA (W, Y, X with the Z channel absent).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{AmbisonicSignal, Waveform};
use crate::sphmath::{channel_count, Normalization};
use crate::{Error, Result};

/// Sidecar manifest stored as `<file>.json` next to `<file>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub order: usize,
    pub normalization: Normalization,
    pub z_present: bool,
    pub sample_rate: u32,
}

/// Contents of a WAV file: either a plain mono waveform or an ambisonic
/// signal, decided by channel count.
#[derive(Debug, Clone, PartialEq)]
pub enum WavContent {
    Mono(Waveform),
    Ambisonic(AmbisonicSignal),
}

impl WavContent {
    pub fn into_mono(self) -> Result<Waveform> {
        match self {
            WavContent::Mono(w) => Ok(w),
            WavContent::Ambisonic(sig) => Err(Error::Wav(format!(
                "expected a mono file, found {} channels",
                sig.channels().len()
            ))),
        }
    }

    pub fn into_ambisonic(self) -> Result<AmbisonicSignal> {
        match self {
            WavContent::Ambisonic(sig) => Ok(sig),
            WavContent::Mono(_) => Err(Error::Wav("expected an ambisonic file, found mono".into())),
        }
    }

    pub fn sample_rate(&self) -> u32 {
        match self {
            WavContent::Mono(w) => w.sample_rate(),
            WavContent::Ambisonic(sig) => sig.sample_rate(),
        }
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".json");
    PathBuf::from(os)
}

/// Writes a mono waveform as a 1-channel float32 WAV.
pub fn write_wav_mono(path: &Path, wave: &Waveform) -> Result<()> {
    write_wav_f32(path, &[wave.samples()], wave.sample_rate())
}

/// Writes an ambisonic signal as a float32 WAV plus its sidecar manifest.
/// Horizontal FOA (z_present == false, order 1) is stored as 3 channels
/// (W, Y, X).
pub fn write_wav(path: &Path, sig: &AmbisonicSignal) -> Result<()> {
    let channels: Vec<&[f64]> = if sig.order() == 1 && !sig.z_present() {
        vec![
            sig.channel(0).samples(),
            sig.channel(1).samples(),
            sig.channel(3).samples(),
        ]
    } else {
        sig.channels().iter().map(|c| c.samples()).collect()
    };
    write_wav_f32(path, &channels, sig.sample_rate())?;
    let sidecar = Sidecar {
        order: sig.order(),
        normalization: sig.normalization(),
        z_present: sig.z_present(),
        sample_rate: sig.sample_rate(),
    };
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(&sidecar)?)?;
    Ok(())
}

fn write_wav_f32(path: &Path, channels: &[&[f64]], sample_rate: u32) -> Result<()> {
    let n_ch = channels.len();
    let n_frames = channels.first().map_or(0, |c| c.len());
    let bytes_per_sample = 4u16;
    let block_align = n_ch as u16 * bytes_per_sample;
    let data_size = (n_frames * block_align as usize) as u32;

    let mut buf = Vec::with_capacity(44 + data_size as usize);
    buf.extend_from_slice(b"RIFF");
    buf.extend_from_slice(&(36 + data_size).to_le_bytes());
    buf.extend_from_slice(b"WAVE");
    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&16u32.to_le_bytes());
    buf.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
    buf.extend_from_slice(&(n_ch as u16).to_le_bytes());
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    buf.extend_from_slice(&(sample_rate * block_align as u32).to_le_bytes());
    buf.extend_from_slice(&block_align.to_le_bytes());
    buf.extend_from_slice(&(8 * bytes_per_sample).to_le_bytes());
    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_size.to_le_bytes());
    for frame in 0..n_frames {
        for ch in channels {
            buf.extend_from_slice(&(ch[frame] as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a WAV file (and its sidecar manifest when present).
pub fn read_wav(path: &Path) -> Result<WavContent> {
    let bytes = fs::read(path)?;
    let (channels, sample_rate) = parse_wav(&bytes)?;
    let n_ch = channels.len();

    let sidecar = read_sidecar(path)?;
    if let Some(sc) = &sidecar {
        if sc.sample_rate != sample_rate {
            return Err(Error::Wav(format!(
                "sidecar sample rate {} disagrees with WAV header {}",
                sc.sample_rate, sample_rate
            )));
        }
    }
    let normalization = sidecar.map_or(Normalization::SN3D, |s| s.normalization);

    let waves: Vec<Waveform> = channels
        .into_iter()
        .map(|c| Waveform::new(c, sample_rate))
        .collect();

    match n_ch {
        1 => Ok(WavContent::Mono(waves.into_iter().next().unwrap())),
        3 => {
            // Horizontal FOA: (W, Y, X) on disk, Z held as a zero placeholder.
            let mut iter = waves.into_iter();
            let w = iter.next().unwrap();
            let y = iter.next().unwrap();
            let x = iter.next().unwrap();
            let z = Waveform::zeros(w.len(), sample_rate);
            Ok(WavContent::Ambisonic(AmbisonicSignal::new(
                1,
                normalization,
                vec![w, y, z, x],
                false,
            )?))
        }
        4 | 9 => {
            let order = if n_ch == 4 { 1 } else { 2 };
            let z_present = sidecar.map_or(true, |s| s.z_present);
            Ok(WavContent::Ambisonic(AmbisonicSignal::new(
                order,
                normalization,
                waves,
                z_present,
            )?))
        }
        other => Err(Error::Wav(format!(
            "unsupported channel count {other}: expected 1 (mono), 3 (horizontal FOA), 4 (FOA) or 9 (SOA)"
        ))),
    }
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let sc_path = sidecar_path(path);
    if !sc_path.exists() {
        return Ok(None);
    }
    let sidecar: Sidecar = serde_json::from_slice(&fs::read(sc_path)?)?;
    let on_disk = if sidecar.z_present {
        channel_count(sidecar.order)
    } else {
        channel_count(sidecar.order) - 1
    };
    if sidecar.order > 2 || (sidecar.order == 0 && !sidecar.z_present) || on_disk == 0 {
        return Err(Error::Wav(format!("sidecar declares unsupported order {}", sidecar.order)));
    }
    Ok(Some(sidecar))
}

/// Parses RIFF/WAVE bytes into per-channel f64 samples.
fn parse_wav(bytes: &[u8]) -> Result<(Vec<Vec<f64>>, u32)> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE file".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (codec, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Error::Wav("chunk size overflow".into()))?;
        if body_end > bytes.len() {
            return Err(Error::Wav(format!(
                "truncated `{}` chunk: declares {size} bytes past end of file",
                String::from_utf8_lossy(id)
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let codec = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((codec, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {} // skip unknown chunks
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos = body_end + (size & 1);
    }

    let (codec, n_ch, rate, bits) =
        fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if n_ch == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    if rate == 0 {
        return Err(Error::Wav("zero sample rate".into()));
    }

    let samples: Vec<f64> = match (codec, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (codec, bits) => {
            return Err(Error::Wav(format!(
                "unsupported codec {codec} with {bits} bits: expected PCM16 or IEEE float32"
            )))
        }
    };
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Wav("non-finite sample in data chunk".into()));
    }
    if samples.len() % n_ch as usize != 0 {
        return Err(Error::Wav("data chunk is not a whole number of frames".into()));
    }

    let n_frames = samples.len() / n_ch as usize;
    let mut channels = vec![Vec::with_capacity(n_frames); n_ch as usize];
    for frame in samples.chunks_exact(n_ch as usize) {
        for (ch, &s) in channels.iter_mut().zip(frame) {
            ch.push(s);
        }
    }
    Ok((channels, rate))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn f32_wave<R: Rng>(rng: &mut R, len: usize, rate: u32) -> Waveform {
        // Values representable exactly in f32 so round trips are bit-exact.
        Waveform::new(
            (0..len).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect(),
            rate,
        )
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("foa.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let channels: Vec<Waveform> = (0..4).map(|_| f32_wave(&mut rng, 256, 48_000)).collect();
        let sig = AmbisonicSignal::new(1, Normalization::SN3D, channels, true).unwrap();
        write_wav(&path, &sig).unwrap();

        let back = read_wav(&path).unwrap().into_ambisonic().unwrap();
        assert_eq!(back.order(), 1);
        assert!(back.z_present());
        for c in 0..4 {
            for (a, b) in back.channel(c).samples().iter().zip(sig.channel(c).samples()) {
                assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
            }
        }
    }

    #[test]
    fn mono_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mono.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let wave = f32_wave(&mut rng, 100, 16_000);
        write_wav_mono(&path, &wave).unwrap();
        let back = read_wav(&path).unwrap().into_mono().unwrap();
        assert_eq!(back.sample_rate(), 16_000);
        assert_eq!(back.samples(), wave.samples());
    }

    #[test]
    fn horizontal_foa_round_trip_via_sidecar() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("horiz.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut channels: Vec<Waveform> = (0..4).map(|_| f32_wave(&mut rng, 64, 16_000)).collect();
        channels[2] = Waveform::zeros(64, 16_000);
        let sig = AmbisonicSignal::new(1, Normalization::SN3D, channels, false).unwrap();
        write_wav(&path, &sig).unwrap();

        let back = read_wav(&path).unwrap().into_ambisonic().unwrap();
        assert!(!back.z_present());
        assert!(back.channel(2).samples().iter().all(|&s| s == 0.0));
        assert_eq!(back.channel(0).samples(), sig.channel(0).samples());
        assert_eq!(back.channel(1).samples(), sig.channel(1).samples());
        assert_eq!(back.channel(3).samples(), sig.channel(3).samples());
    }

    #[test]
    fn soa_nine_channels() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("soa.wav");
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let channels: Vec<Waveform> = (0..9).map(|_| f32_wave(&mut rng, 32, 48_000)).collect();
        let sig = AmbisonicSignal::new(2, Normalization::SN3D, channels, true).unwrap();
        write_wav(&path, &sig).unwrap();
        let back = read_wav(&path).unwrap().into_ambisonic().unwrap();
        assert_eq!(back.order(), 2);
    }

    #[test]
    fn truncated_header_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        fs::write(&path, b"RIFF\x00\x00").unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Wav(_))));
    }

    #[test]
    fn truncated_data_chunk_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trunc.wav");
        let wave = Waveform::new(vec![0.5; 64], 8000);
        write_wav_mono(&path, &wave).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(read_wav(&path), Err(Error::Wav(_))));
    }

    #[test]
    fn pcm16_is_scaled_by_q15() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("pcm.wav");
        let values: Vec<i16> = vec![0, 1, -1, 16384, -32768, 32767];
        let mut buf = Vec::new();
        let data_size = (values.len() * 2) as u32;
        buf.extend_from_slice(b"RIFF");
        buf.extend_from_slice(&(36 + data_size).to_le_bytes());
        buf.extend_from_slice(b"WAVE");
        buf.extend_from_slice(b"fmt ");
        buf.extend_from_slice(&16u32.to_le_bytes());
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&1u16.to_le_bytes());
        buf.extend_from_slice(&8000u32.to_le_bytes());
        buf.extend_from_slice(&16000u32.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(&16u16.to_le_bytes());
        buf.extend_from_slice(b"data");
        buf.extend_from_slice(&data_size.to_le_bytes());
        for v in &values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, buf).unwrap();

        let wave = read_wav(&path).unwrap().into_mono().unwrap();
        for (s, v) in wave.samples().iter().zip(&values) {
            assert_eq!(*s, *v as f64 / 32768.0);
        }
    }

    #[test]
    fn unsupported_codec_and_channel_counts_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("odd.wav");

        // 2 channels is outside {1, 3, 4, 9}.
        let mut buf = Vec::new();
        buf.extend_from_slice(b"RIFF");
        buf.extend_from_slice(&40u32.to_le_bytes());
        buf.extend_from_slice(b"WAVE");
        buf.extend_from_slice(b"fmt ");
        buf.extend_from_slice(&16u32.to_le_bytes());
        buf.extend_from_slice(&3u16.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(&8000u32.to_le_bytes());
        buf.extend_from_slice(&64000u32.to_le_bytes());
        buf.extend_from_slice(&8u16.to_le_bytes());
        buf.extend_from_slice(&32u16.to_le_bytes());
        buf.extend_from_slice(b"data");
        buf.extend_from_slice(&8u32.to_le_bytes());
        buf.extend_from_slice(&0.25f32.to_le_bytes());
        buf.extend_from_slice(&0.5f32.to_le_bytes());
        fs::write(&path, &buf).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("channel count"), "{err}");

        // Unsupported codec (µ-law = 7).
        buf[20..22].copy_from_slice(&7u16.to_le_bytes());
        buf[22..24].copy_from_slice(&1u16.to_le_bytes());
        fs::write(&path, &buf).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("unsupported codec"), "{err}");
    }
}
