//! Directional energy maps: short-window RMS of the sound field sampled
//! on a sphere lattice and normalized to a unit-sum distribution, with
//! CSV and equirectangular PGM exports.

use std::fmt::Write as _;

use crate::audio::AmbisonicSignal;
use crate::sphmath::{channel_count, eval_sh_into, Direction, Normalization, SphereSampling};
use crate::{Error, Result};

/// Normalized directional energy distribution over a sphere lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMap {
    sampling: SphereSampling,
    weights: Vec<f64>,
    center_time: f64,
    window: f64,
    zero_energy: bool,
}

impl EnergyMap {
    /// Normalizes raw non-negative energies to sum 1. An all-zero input
    /// yields the uniform map with the `zero_energy` flag set.
    pub fn from_energies(
        sampling: SphereSampling,
        energies: Vec<f64>,
        center_time: f64,
        window: f64,
    ) -> Result<Self> {
        if energies.len() != sampling.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} energies for {} sampling points",
                energies.len(),
                sampling.len()
            )));
        }
        if energies.iter().any(|&e| !e.is_finite() || e < 0.0) {
            return Err(Error::OutOfRange("energies must be finite and non-negative".into()));
        }
        let total: f64 = energies.iter().sum();
        let (weights, zero_energy) = if total > 0.0 {
            (energies.iter().map(|e| e / total).collect(), false)
        } else {
            (vec![1.0 / energies.len() as f64; energies.len()], true)
        };
        Ok(Self { sampling, weights, center_time, window, zero_energy })
    }

    pub fn sampling(&self) -> &SphereSampling {
        &self.sampling
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center_time(&self) -> f64 {
        self.center_time
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// True when the analysis window was silent and the map is the
    /// uniform fallback.
    pub fn zero_energy(&self) -> bool {
        self.zero_energy
    }

    /// Index of the heaviest lattice point.
    pub fn argmax(&self) -> usize {
        self.weights
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }

    /// CSV rows `azimuth_deg,elevation_deg,weight`, one per lattice point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("azimuth_deg,elevation_deg,weight\n");
        for (dir, w) in self.sampling.points().iter().zip(&self.weights) {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.9}",
                dir.azimuth().to_degrees(),
                dir.elevation().to_degrees(),
                w
            );
        }
        out
    }

    /// Binary PGM (P5) equirectangular image: rows sweep elevation from
    /// +90° (top) to −90°, columns sweep azimuth from 0 to 360°. Each
    /// pixel takes the weight of its nearest lattice point, scaled so the
    /// heaviest point is white.
    pub fn to_pgm(&self, rows: usize, cols: usize) -> Vec<u8> {
        let max_w = self.weights[self.argmax()].max(f64::MIN_POSITIVE);
        let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
        for r in 0..rows {
            let elevation = std::f64::consts::FRAC_PI_2
                - (r as f64 + 0.5) / rows as f64 * std::f64::consts::PI;
            for c in 0..cols {
                let azimuth = (c as f64 + 0.5) / cols as f64 * std::f64::consts::TAU;
                let idx = self.sampling.nearest(Direction::new(azimuth, elevation));
                let level = (self.weights[idx] / max_w * 255.0).round().clamp(0.0, 255.0);
                out.push(level as u8);
            }
        }
        out
    }
}

/// Directional energy map of `sig` over the window [t − T/2, t + T/2]:
/// E(θ) = √(mean of (y_N(θ)ᵀ φ_N(τ))²), evaluated in N3D and normalized
/// to sum 1.
pub fn energy_map(
    sig: &AmbisonicSignal,
    t: f64,
    window_secs: f64,
    sampling: &SphereSampling,
) -> Result<EnergyMap> {
    let rate = sig.sample_rate() as f64;
    let start = ((t - window_secs / 2.0) * rate).round() as i64;
    let end = ((t + window_secs / 2.0) * rate).round() as i64;
    if start < 0 || end > sig.len() as i64 || start >= end {
        return Err(Error::OutOfRange(format!(
            "energy window [{:.3}s, {:.3}s] outside signal of {:.3}s",
            t - window_secs / 2.0,
            t + window_secs / 2.0,
            sig.duration_secs()
        )));
    }
    let (start, end) = (start as usize, end as usize);

    let n3d = sig.to_normalization(Normalization::N3D);
    let n_ch = channel_count(n3d.order());
    let mut basis = vec![0.0; sampling.len() * n_ch];
    for (p, dir) in sampling.points().iter().enumerate() {
        eval_sh_into(n3d.order(), *dir, Normalization::N3D, &mut basis[p * n_ch..(p + 1) * n_ch]);
    }

    let inv_len = 1.0 / (end - start) as f64;
    let mut energies = vec![0.0; sampling.len()];
    for tau in start..end {
        for (p, energy) in energies.iter_mut().enumerate() {
            let mut field = 0.0;
            for c in 0..n_ch {
                field += basis[p * n_ch + c] * n3d.channel(c).samples()[tau];
            }
            *energy += field * field;
        }
    }
    for e in &mut energies {
        *e = (*e * inv_len).sqrt();
    }
    EnergyMap::from_energies(sampling.clone(), energies, t, window_secs)
}

/// Exact Earth Mover's Distance between two maps on the same lattice,
/// with cosine ground distance 1 − u·v between lattice unit vectors.
pub fn emd(a: &EnergyMap, b: &EnergyMap) -> Result<f64> {
    if a.sampling() != b.sampling() {
        return Err(Error::ShapeMismatch(
            "energy maps use different sphere samplings".into(),
        ));
    }
    let vectors = a.sampling().unit_vectors();
    let n = vectors.len();
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dot = vectors[i][0] * vectors[j][0]
                + vectors[i][1] * vectors[j][1]
                + vectors[i][2] * vectors[j][2];
            let c = (1.0 - dot).clamp(0.0, 2.0);
            cost[i * n + j] = c;
            cost[j * n + i] = c;
        }
    }
    Ok(super::emd::solve_transport(a.weights(), b.weights(), &cost).cost)
}
