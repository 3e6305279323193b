//! Real spherical harmonics, sphere directions and sampling lattices.
//!
//! Conventions: azimuth is measured counterclockwise from the front (+x)
//! axis in [0, 2π); elevation is in [−π/2, π/2] with +π/2 at the zenith
//! (+z). Channel order is ACN (index n² + n + m); normalizations are N3D
//! (orthonormal under the uniform sphere measure) and SN3D = N3D / √(2n+1).

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Golden angle π(3 − √5), the azimuth increment of the Fibonacci lattice.
const GOLDEN_ANGLE: f64 = 2.399963229728653;

/// Spherical-harmonic normalization convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Orthonormal under the uniform measure: E[Yₐ·Y_b] = δ_ab over the sphere.
    N3D,
    /// Semi-normalized (ambiX): SN3D = N3D / √(2n+1) per degree n.
    SN3D,
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    azimuth: f64,
    elevation: f64,
}

impl Direction {
    /// Builds a direction, normalizing azimuth into [0, 2π) and clamping
    /// elevation into [−π/2, π/2].
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self {
            azimuth: wrap_azimuth(azimuth),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
        }
    }

    /// Direction of a (not necessarily normalized) 3-vector.
    pub fn from_unit_vector(v: [f64; 3]) -> Self {
        let horiz = v[0].hypot(v[1]);
        Self::new(v[1].atan2(v[0]), v[2].atan2(horiz))
    }

    pub fn front() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn back() -> Self {
        Self::new(PI, 0.0)
    }

    /// +y axis (azimuth π/2).
    pub fn left() -> Self {
        Self::new(FRAC_PI_2, 0.0)
    }

    /// +z axis.
    pub fn zenith() -> Self {
        Self::new(0.0, FRAC_PI_2)
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    /// Zenith angle φ = π/2 − elevation.
    pub fn zenith_angle(&self) -> f64 {
        FRAC_PI_2 - self.elevation
    }

    /// Unit vector (cos el · cos az, cos el · sin az, sin el).
    pub fn unit_vector(&self) -> [f64; 3] {
        let (sin_az, cos_az) = self.azimuth.sin_cos();
        let (sin_el, cos_el) = self.elevation.sin_cos();
        [cos_el * cos_az, cos_el * sin_az, sin_el]
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let mut a = az.rem_euclid(TAU);
    // rem_euclid can round up to TAU for tiny negative inputs.
    if a >= TAU {
        a -= TAU;
    }
    a
}

/// Rotates a direction around the vertical (z) axis by `psi` radians.
pub fn rotate_direction_z(dir: Direction, psi: f64) -> Direction {
    Direction::new(dir.azimuth() + psi, dir.elevation())
}

/// Geodesic angle between two directions, arccos of the clamped dot product.
pub fn angular_distance(a: Direction, b: Direction) -> f64 {
    let u = a.unit_vector();
    let v = b.unit_vector();
    dot3(u, v).clamp(-1.0, 1.0).acos()
}

/// Cosine distance 1 − u·v, in [0, 2].
pub fn cosine_distance(a: Direction, b: Direction) -> f64 {
    let u = a.unit_vector();
    let v = b.unit_vector();
    (1.0 - dot3(u, v)).clamp(0.0, 2.0)
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// ACN channel index for spherical-harmonic degree `n` and order `m`.
pub fn acn_index(degree: usize, order: i64) -> usize {
    debug_assert!(order.unsigned_abs() as usize <= degree);
    degree * degree + (degree as i64 + order) as usize
}

/// Number of channels of an order-`n` expansion, (n+1)².
pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// Stacked real spherical-harmonic values y_N(θ) in ACN order.
#[derive(Debug, Clone, PartialEq)]
pub struct ShVector {
    order: usize,
    normalization: Normalization,
    values: Vec<f64>,
}

impl ShVector {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at degree `n`, order `m` (ACN position n² + n + m).
    pub fn at(&self, degree: usize, order: i64) -> f64 {
        self.values[acn_index(degree, order)]
    }

    /// Converts between normalizations by the per-degree factor √(2n+1).
    pub fn convert(&self, target: Normalization) -> ShVector {
        if self.normalization == target {
            return self.clone();
        }
        let mut values = self.values.clone();
        for (acn, v) in values.iter_mut().enumerate() {
            let degree = (acn as f64).sqrt() as usize;
            *v *= normalization_scale(degree, self.normalization, target);
        }
        ShVector { order: self.order, normalization: target, values }
    }
}

/// Per-degree scale factor converting values between normalizations.
pub fn normalization_scale(degree: usize, from: Normalization, to: Normalization) -> f64 {
    match (from, to) {
        (Normalization::SN3D, Normalization::N3D) => ((2 * degree + 1) as f64).sqrt(),
        (Normalization::N3D, Normalization::SN3D) => 1.0 / ((2 * degree + 1) as f64).sqrt(),
        _ => 1.0,
    }
}

/// Evaluates the real spherical harmonics up to `order` at `dir`, in ACN
/// channel order. Uses the ambisonics convention (no Condon-Shortley phase),
/// so SN3D degree 1 equals the unit-vector components (y, z, x).
pub fn eval_sh(order: usize, dir: Direction, normalization: Normalization) -> ShVector {
    let mut values = vec![0.0; channel_count(order)];
    eval_sh_into(order, dir, normalization, &mut values);
    ShVector { order, normalization, values }
}

/// Allocation-free spherical-harmonic evaluation into a caller buffer of
/// length (order+1)². Closed forms for orders ≤ 2, recurrence beyond.
pub fn eval_sh_into(order: usize, dir: Direction, normalization: Normalization, out: &mut [f64]) {
    assert_eq!(out.len(), channel_count(order), "SH buffer length");
    if order <= 2 {
        let [x, y, z] = dir.unit_vector();
        out[0] = 1.0;
        if order >= 1 {
            let s1 = normalization_scale(1, Normalization::SN3D, normalization);
            out[1] = y * s1;
            out[2] = z * s1;
            out[3] = x * s1;
        }
        if order == 2 {
            let s2 = normalization_scale(2, Normalization::SN3D, normalization);
            let sqrt3 = 3.0_f64.sqrt();
            out[4] = sqrt3 * x * y * s2;
            out[5] = sqrt3 * y * z * s2;
            out[6] = (3.0 * z * z - 1.0) / 2.0 * s2;
            out[7] = sqrt3 * x * z * s2;
            out[8] = sqrt3 / 2.0 * (x * x - y * y) * s2;
        }
        return;
    }
    eval_sh_general(order, dir, normalization, out);
}

fn eval_sh_general(order: usize, dir: Direction, normalization: Normalization, values: &mut [f64]) {
    let s = dir.elevation().sin(); // cos(zenith)
    let c = dir.elevation().cos();

    // Associated Legendre P_n^m(s) without Condon-Shortley, packed by (n, m≥0).
    let mut p = vec![vec![0.0; order + 1]; order + 1];
    p[0][0] = 1.0;
    for m in 1..=order {
        p[m][m] = p[m - 1][m - 1] * (2 * m - 1) as f64 * c;
    }
    for m in 0..order {
        p[m + 1][m] = s * (2 * m + 1) as f64 * p[m][m];
    }
    for m in 0..=order {
        for n in (m + 2)..=order {
            p[n][m] = (s * (2 * n - 1) as f64 * p[n - 1][m]
                - (n - 1 + m) as f64 * p[n - 2][m])
                / (n - m) as f64;
        }
    }

    for n in 0..=order {
        for m in 0..=(n as i64) {
            let mu = m as usize;
            // SN3D norm: √((2 − δ_m0)·(n−m)!/(n+m)!)
            let delta = if m == 0 { 1.0 } else { 2.0 };
            let norm = (delta * factorial(n - mu) / factorial(n + mu)).sqrt();
            let base = norm * p[n][mu];
            let scale = normalization_scale(n, Normalization::SN3D, normalization);
            if m == 0 {
                values[acn_index(n, 0)] = base * scale;
            } else {
                let (sin_m, cos_m) = (m as f64 * dir.azimuth()).sin_cos();
                values[acn_index(n, m)] = base * cos_m * scale;
                values[acn_index(n, -m)] = base * sin_m * scale;
            }
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// An ordered set of directions sampling the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSampling {
    points: Vec<Direction>,
    unit_vectors: Vec<[f64; 3]>,
}

impl SphereSampling {
    /// Builds a sampling from explicit directions. Rejects empty lists.
    pub fn from_directions(points: Vec<Direction>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySampling);
        }
        let unit_vectors = points.iter().map(Direction::unit_vector).collect();
        Ok(Self { points, unit_vectors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Direction] {
        &self.points
    }

    pub fn unit_vectors(&self) -> &[[f64; 3]] {
        &self.unit_vectors
    }

    /// Index of the sampling point nearest to `dir` by angular distance.
    pub fn nearest(&self, dir: Direction) -> usize {
        let u = dir.unit_vector();
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, v) in self.unit_vectors.iter().enumerate() {
            let d = dot3(u, *v);
            if d > best_dot {
                best_dot = d;
                best = i;
            }
        }
        best
    }
}

/// Near-uniform deterministic sphere sampling via the Fibonacci lattice.
pub fn fibonacci_sphere(n: usize) -> Result<SphereSampling> {
    if n == 0 {
        return Err(Error::EmptySampling);
    }
    let points = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let azimuth = wrap_azimuth(GOLDEN_ANGLE * i as f64);
            Direction::new(azimuth, z.asin())
        })
        .collect();
    SphereSampling::from_directions(points)
}
