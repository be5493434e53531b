//! First-order analysis of a black-box codec roundtrip.
//!
//! The roundtrip map is linearized around an image by sampling diagonal
//! entries of its Jacobian with central differences. Their mean `mu` drives
//! the choice of the loop gain: with gain `eta` and step `dt`, the linearized
//! error map is `(1 - dt * eta * mu) I`, whose Frobenius norm is
//! `|1 - dt * eta * mu| * sqrt(D)`.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::codec::Codec;
use crate::error::{CicError, Result};
use crate::image::Image;

pub const DEFAULT_PROBE_STEP: f64 = 2.0;
pub const DEFAULT_SAMPLES: usize = 64;

/// Below this magnitude the mean slope is treated as zero and no
/// contraction interval is derived.
pub const MU_ZERO_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct ProbeConfig {
    pub epsilon: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_PROBE_STEP,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeSample {
    pub index: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorEstimate {
    pub samples: Vec<SlopeSample>,
    pub mu: f64,
    pub probe_step: f64,
    pub sample_count: usize,
    pub seed: u64,
}

impl TaylorEstimate {
    /// `false` when `|mu|` is too small to bound the gain.
    pub fn bound_available(&self) -> bool {
        self.mu.abs() >= MU_ZERO_THRESHOLD
    }
}

/// Sample `K` diagonal slopes of the roundtrip Jacobian at `f0`.
///
/// Coordinates are drawn without replacement from a seeded generator; each
/// slope costs two roundtrips. Probes run in parallel but are accumulated in
/// draw order.
pub fn estimate_mu<C: Codec + ?Sized>(codec: &C, f0: &Image, probe: &ProbeConfig) -> Result<TaylorEstimate> {
    let eps = probe.epsilon;
    let k = probe.samples;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(CicError::ConfigInvalid(format!("probe step {eps} must be > 0")));
    }
    if k == 0 || k > f0.dim() {
        return Err(CicError::ConfigInvalid(format!(
            "sample count {k} outside [1, {}]",
            f0.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let coords = index::sample(&mut rng, f0.dim(), k).into_vec();

    let probe_at = |i: usize| -> Result<SlopeSample> {
        let mut plus = f0.flatten();
        plus[i] += eps;
        let mut minus = f0.flatten();
        minus[i] -= eps;
        let (w, h, c) = f0.shape();
        let up = codec.roundtrip(&Image::new(w, h, c, plus)?)?;
        let down = codec.roundtrip(&Image::new(w, h, c, minus)?)?;
        if !up.same_shape(f0) || !down.same_shape(f0) {
            return Err(CicError::CodecFailure("roundtrip changed image shape".into()));
        }
        let slope = (up.data()[i] - down.data()[i]) / (2.0 * eps);
        if !slope.is_finite() {
            return Err(CicError::NonFiniteProbe(i));
        }
        Ok(SlopeSample { index: i, slope })
    };
    let samples: Vec<SlopeSample> = coords.par_iter().map(|&i| probe_at(i)).collect::<Result<_>>()?;

    let mu = samples.iter().map(|s| s.slope).sum::<f64>() / k as f64;
    Ok(TaylorEstimate {
        samples,
        mu,
        probe_step: eps,
        sample_count: k,
        seed: probe.seed,
    })
}

/// Open interval of gains `eta` with `|1 - dt * mu * eta| * sqrt(D) < 1`.
pub fn eta_interval(mu: f64, dt: f64, dim: usize) -> Result<(f64, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CicError::ConfigInvalid(format!("step {dt} must be > 0")));
    }
    if dim == 0 {
        return Err(CicError::ConfigInvalid("dimension must be >= 1".into()));
    }
    if !mu.is_finite() || mu.abs() < MU_ZERO_THRESHOLD {
        return Err(CicError::MuZero);
    }
    let margin = 1.0 / (dim as f64).sqrt();
    let a = (1.0 - margin) / (dt * mu);
    let b = (1.0 + margin) / (dt * mu);
    Ok(if a < b { (a, b) } else { (b, a) })
}

/// Admissible gains for the per-coordinate (spectral) condition
/// `|1 - dt * eta * mu| < 1`, i.e. `(0, 2 / (dt * mu))` for positive `mu`.
pub fn spectral_interval(mu: f64, dt: f64) -> Result<(f64, f64)> {
    eta_interval(mu, dt, 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub frobenius_gap: f64,
    pub paper_bound_ok: bool,
    pub spectral_gap: f64,
    pub spectral_ok: bool,
    /// `None` when the mean slope is numerically zero.
    pub eta_interval: Option<(f64, f64)>,
}

pub fn contraction_report(estimate: &TaylorEstimate, eta: f64, dt: f64, dim: usize) -> Result<ContractionReport> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CicError::ConfigInvalid(format!("step {dt} must be > 0")));
    }
    if dim == 0 || estimate.samples.is_empty() {
        return Err(CicError::ConfigInvalid("empty estimate or zero dimension".into()));
    }
    let frobenius_gap = (1.0 - dt * estimate.mu * eta).abs() * (dim as f64).sqrt();
    let spectral_gap = estimate
        .samples
        .iter()
        .map(|s| (1.0 - dt * eta * s.slope).abs())
        .fold(0.0, f64::max);
    let eta_interval = match eta_interval(estimate.mu, dt, dim) {
        Ok(iv) => Some(iv),
        Err(CicError::MuZero) => None,
        Err(e) => return Err(e),
    };
    Ok(ContractionReport {
        frobenius_gap,
        paper_bound_ok: frobenius_gap < 1.0,
        spectral_gap,
        spectral_ok: spectral_gap < 1.0,
        eta_interval,
    })
}
