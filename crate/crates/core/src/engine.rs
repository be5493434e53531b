//! Open-loop baseline and the closed-loop refinement iteration.
//!
//! The closed loop only sees the first decoded image `f_d0`. Each iteration
//! evaluates the codec roundtrip at the current iterate, forms the residual
//! `f_r = f_d0 - NF(f)` and takes an explicit Euler step
//! `f <- f + eta * dt * f_r`. A fixed point satisfies `NF(f) = f_d0`, which for
//! an invertible roundtrip is the original image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{Bitstream, Codec};
use crate::error::{CicError, Result};
use crate::image::Image;
use crate::taylor::{self, ProbeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    Zero,
    /// Uniform samples in `[0, 255]` from the given seed.
    Random(u64),
    Decoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    Manual,
    /// Estimate the mean slope once at `f_d0` and take the midpoint of the
    /// per-coordinate contraction interval, clamped to `[-1, 1]`.
    AutoFromBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    Final,
    BestResidual,
    /// Requires the original image; for research runs only.
    BestOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub eta: f64,
    pub dt: f64,
    pub max_iters: usize,
    pub init: InitMode,
    pub tile: Option<usize>,
    pub eta_mode: EtaMode,
    pub stop_tol: f64,
    pub divergence_patience: usize,
    pub select: SelectMode,
    pub probe: ProbeConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            dt: 1.0,
            max_iters: 10,
            init: InitMode::Decoded,
            tile: None,
            eta_mode: EtaMode::Manual,
            stop_tol: 0.0,
            divergence_patience: 3,
            select: SelectMode::BestResidual,
            probe: ProbeConfig::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CicError::ConfigInvalid(m));
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt {} must be > 0", self.dt));
        }
        if !self.eta.is_finite() {
            return bad(format!("eta {} must be finite", self.eta));
        }
        if self.stop_tol.is_nan() || self.stop_tol < 0.0 {
            return bad(format!("stop_tol {} must be >= 0", self.stop_tol));
        }
        if self.divergence_patience == 0 {
            return bad("divergence_patience must be >= 1".into());
        }
        if let Some(t) = self.tile {
            if t < 8 {
                return bad(format!("tile edge {t} must be >= 8"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIters,
    Converged,
    Diverged,
    CodecError,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::MaxIters => "max_iters",
            Termination::Converged => "converged",
            Termination::Diverged => "diverged",
            Termination::CodecError => "codec_error",
        }
    }
}

/// How the loop gain was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainSelection {
    pub eta: f64,
    pub mu: Option<f64>,
    /// Auto mode was requested but the mean slope was numerically zero, so
    /// the configured gain was used without a contraction guarantee.
    pub bound_unavailable: bool,
}

/// Snapshot handed to observers after each roundtrip evaluation.
#[derive(Debug)]
pub struct LoopState<'a> {
    /// 1-based evaluation count.
    pub n: usize,
    /// Iterate being evaluated (`n - 1` updates applied).
    pub f: &'a Image,
    pub f_d: &'a Image,
    pub f_r: &'a Image,
    pub f_c: &'a Image,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopResult {
    pub output: Image,
    /// Roundtrip evaluations performed.
    pub iterations_run: usize,
    pub termination: Termination,
    /// `||f_r||_2` per evaluation.
    pub residual_trace: Vec<f64>,
    /// Number of updates applied to the selected iterate.
    pub selected_iteration: usize,
    pub gain: GainSelection,
    pub error: Option<String>,
    pub sic_bitstream: Option<Bitstream>,
    pub reencoded_bitstream: Option<Bitstream>,
}

/// Open-loop compression: `f_d0 = DE(EN(f0))`.
pub fn run_sic<C: Codec + ?Sized>(codec: &C, f0: &Image) -> Result<(Image, Bitstream)> {
    let bs = codec.encode(f0)?;
    let decoded = codec.decode(&bs)?;
    if !decoded.same_shape(f0) {
        return Err(CicError::CodecFailure(format!(
            "decoded shape {:?} differs from input {:?}",
            decoded.shape(),
            f0.shape()
        )));
    }
    Ok((decoded, bs))
}

pub fn initial_iterate(f_d0: &Image, init: InitMode) -> Image {
    match init {
        InitMode::Decoded => f_d0.clone(),
        InitMode::Zero => f_d0.map(|_| 0.0).expect("finite"),
        InitMode::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = (0..f_d0.dim()).map(|_| rng.gen_range(0.0..=255.0)).collect();
            f_d0.with_data(data).expect("finite")
        }
    }
}

/// Resolve the gain for `config`, probing the codec at `f_d0` in auto mode.
pub fn select_gain<C: Codec + ?Sized>(codec: &C, f_d0: &Image, config: &LoopConfig) -> Result<GainSelection> {
    match config.eta_mode {
        EtaMode::Manual => Ok(GainSelection {
            eta: config.eta,
            mu: None,
            bound_unavailable: false,
        }),
        EtaMode::AutoFromBound => {
            let probe = ProbeConfig {
                samples: config.probe.samples.min(f_d0.dim()),
                ..config.probe
            };
            let est = taylor::estimate_mu(codec, f_d0, &probe)?;
            match taylor::spectral_interval(est.mu, config.dt) {
                Ok((lo, hi)) => Ok(GainSelection {
                    eta: (0.5 * (lo + hi)).clamp(-1.0, 1.0),
                    mu: Some(est.mu),
                    bound_unavailable: false,
                }),
                Err(CicError::MuZero) => Ok(GainSelection {
                    eta: config.eta,
                    mu: Some(est.mu),
                    bound_unavailable: true,
                }),
                Err(e) => Err(e),
            }
        }
    }
}

pub fn run_cic<C: Codec + ?Sized>(
    codec: &C,
    f_d0: &Image,
    config: &LoopConfig,
    oracle: Option<&Image>,
) -> Result<LoopResult> {
    run_cic_observed(codec, f_d0, config, oracle, |_| {})
}

/// [`run_cic`] with a callback after every roundtrip evaluation.
pub fn run_cic_observed<C: Codec + ?Sized>(
    codec: &C,
    f_d0: &Image,
    config: &LoopConfig,
    oracle: Option<&Image>,
    mut observer: impl FnMut(&LoopState<'_>),
) -> Result<LoopResult> {
    check_inputs(f_d0, config, oracle)?;
    let gain = match select_gain(codec, f_d0, config) {
        Ok(g) => g,
        Err(e @ (CicError::ConfigInvalid(_) | CicError::DimensionMismatch(_))) => return Err(e),
        Err(e) => return Ok(failed_before_start(f_d0, config, e)),
    };
    let init = initial_iterate(f_d0, config.init);
    Ok(iterate(codec, f_d0, init, gain, config, oracle, &mut observer))
}

fn check_inputs(f_d0: &Image, config: &LoopConfig, oracle: Option<&Image>) -> Result<()> {
    config.validate()?;
    match (config.select, oracle) {
        (SelectMode::BestOracle, None) => Err(CicError::ConfigInvalid(
            "best_oracle selection needs the original image".into(),
        )),
        (_, Some(o)) => o.ensure_same_shape(f_d0),
        _ => Ok(()),
    }
}

fn failed_before_start(f_d0: &Image, config: &LoopConfig, err: CicError) -> LoopResult {
    LoopResult {
        output: f_d0.clone(),
        iterations_run: 0,
        termination: Termination::CodecError,
        residual_trace: Vec::new(),
        selected_iteration: 0,
        gain: GainSelection {
            eta: config.eta,
            mu: None,
            bound_unavailable: false,
        },
        error: Some(err.to_string()),
        sic_bitstream: None,
        reencoded_bitstream: None,
    }
}

struct Best {
    score: f64,
    iteration: usize,
    image: Image,
}

impl Best {
    fn offer(slot: &mut Option<Best>, score: f64, iteration: usize, image: &Image) {
        if slot.as_ref().is_none_or(|b| score < b.score) {
            *slot = Some(Best {
                score,
                iteration,
                image: image.clone(),
            });
        }
    }
}

fn iterate<C: Codec + ?Sized>(
    codec: &C,
    f_d0: &Image,
    init: Image,
    gain: GainSelection,
    config: &LoopConfig,
    oracle: Option<&Image>,
    observer: &mut dyn FnMut(&LoopState<'_>),
) -> LoopResult {
    let step = gain.eta * config.dt;
    let mut f = init;
    let mut updates = 0usize;
    let mut trace = Vec::with_capacity(config.max_iters);
    let mut best: Option<Best> = None;
    let mut increases = 0usize;
    let mut termination = Termination::MaxIters;
    let mut error = None;

    for n in 1..=config.max_iters {
        if config.select == SelectMode::BestOracle {
            Best::offer(&mut best, f.l2_distance(oracle.unwrap()), updates, &f);
        }
        let f_d = match codec.roundtrip(&f) {
            Ok(img) if img.same_shape(&f) => img,
            Ok(img) => {
                termination = Termination::CodecError;
                error = Some(format!(
                    "roundtrip returned shape {:?} for input {:?}",
                    img.shape(),
                    f.shape()
                ));
                break;
            }
            Err(e) => {
                termination = Termination::CodecError;
                error = Some(e.to_string());
                break;
            }
        };
        let residual: Vec<f64> = f_d0.data().iter().zip(f_d.data()).map(|(a, b)| a - b).collect();
        let norm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
        trace.push(norm);
        if !norm.is_finite() {
            termination = Termination::Diverged;
            break;
        }
        let f_r = f.with_data(residual).expect("finite residual");
        let f_c = f_r.map(|v| gain.eta * v).unwrap_or_else(|_| f_r.clone());
        observer(&LoopState {
            n,
            f: &f,
            f_d: &f_d,
            f_r: &f_r,
            f_c: &f_c,
            residual_norm: norm,
        });
        if config.select == SelectMode::BestResidual {
            Best::offer(&mut best, norm, updates, &f);
        }
        if norm <= config.stop_tol {
            termination = Termination::Converged;
            break;
        }
        if trace.len() >= 2 && norm > trace[trace.len() - 2] {
            increases += 1;
            if increases >= config.divergence_patience {
                termination = Termination::Diverged;
                break;
            }
        } else {
            increases = 0;
        }
        let next: Vec<f64> = f.data().iter().zip(f_r.data()).map(|(x, r)| x + step * r).collect();
        match f.with_data(next) {
            Ok(img) => {
                f = img;
                updates += 1;
            }
            Err(_) => {
                termination = Termination::Diverged;
                break;
            }
        }
    }

    if config.select == SelectMode::BestOracle && termination == Termination::MaxIters {
        Best::offer(&mut best, f.l2_distance(oracle.unwrap()), updates, &f);
    }
    let (output, selected_iteration) = match (config.select, best) {
        (SelectMode::Final, _) | (_, None) => (f, updates),
        (_, Some(b)) => (b.image, b.iteration),
    };
    LoopResult {
        output,
        iterations_run: trace.len(),
        termination,
        residual_trace: trace,
        selected_iteration,
        gain,
        error,
        sic_bitstream: None,
        reencoded_bitstream: None,
    }
}

/// Rectangle of a tile grid: `(row, col, height, width)`.
pub type TileRect = (usize, usize, usize, usize);

/// Partition a `width x height` image into `edge`-sized tiles in raster
/// order; the last row/column of tiles takes the remainder.
pub fn tile_grid(width: usize, height: usize, edge: usize) -> Vec<TileRect> {
    let mut out = Vec::new();
    for row in (0..height).step_by(edge) {
        for col in (0..width).step_by(edge) {
            out.push((row, col, edge.min(height - row), edge.min(width - col)));
        }
    }
    out
}

/// Independent closed loops per tile, stitched together.
///
/// Gain selection and the initial iterate are computed once on the whole
/// image, so a single covering tile reproduces [`run_cic`] exactly.
pub fn run_cic_tiled<C: Codec + ?Sized>(
    codec: &C,
    f_d0: &Image,
    config: &LoopConfig,
    oracle: Option<&Image>,
) -> Result<LoopResult> {
    run_cic_tiled_observed(codec, f_d0, config, oracle, |_, _| {})
}

/// [`run_cic_tiled`] with a callback per tile evaluation; the first argument
/// is the tile's index in [`tile_grid`] order. Tiles run concurrently.
pub fn run_cic_tiled_observed<C: Codec + ?Sized>(
    codec: &C,
    f_d0: &Image,
    config: &LoopConfig,
    oracle: Option<&Image>,
    observer: impl Fn(usize, &LoopState<'_>) + Sync,
) -> Result<LoopResult> {
    check_inputs(f_d0, config, oracle)?;
    let edge = config
        .tile
        .ok_or_else(|| CicError::ConfigInvalid("tiled run without a tile size".into()))?;
    let gain = match select_gain(codec, f_d0, config) {
        Ok(g) => g,
        Err(e @ (CicError::ConfigInvalid(_) | CicError::DimensionMismatch(_))) => return Err(e),
        Err(e) => return Ok(failed_before_start(f_d0, config, e)),
    };
    let init = initial_iterate(f_d0, config.init);
    let grid = tile_grid(f_d0.width(), f_d0.height(), edge);

    let results: Vec<LoopResult> = grid
        .par_iter()
        .enumerate()
        .map(|(idx, &(r, c, h, w))| -> Result<LoopResult> {
            let tile_d0 = f_d0.crop(r, c, h, w)?;
            let tile_init = init.crop(r, c, h, w)?;
            let tile_oracle = oracle.map(|o| o.crop(r, c, h, w)).transpose()?;
            let mut tile_observer = |s: &LoopState<'_>| observer(idx, s);
            Ok(iterate(
                codec,
                &tile_d0,
                tile_init,
                gain,
                config,
                tile_oracle.as_ref(),
                &mut tile_observer,
            ))
        })
        .collect::<Result<_>>()?;

    if results.len() == 1 {
        return Ok(results.into_iter().next().unwrap());
    }

    let mut output = f_d0.clone();
    for (&(r, c, _, _), res) in grid.iter().zip(&results) {
        output.paste(&res.output, r, c)?;
    }
    let longest = results.iter().map(|r| r.iterations_run).max().unwrap_or(0);
    let residual_trace = (0..longest)
        .map(|n| {
            results
                .iter()
                .filter_map(|r| r.residual_trace.get(n).or(r.residual_trace.last()))
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let any = |t: Termination| results.iter().any(|r| r.termination == t);
    let termination = if any(Termination::CodecError) {
        Termination::CodecError
    } else if any(Termination::Diverged) {
        Termination::Diverged
    } else if results.iter().all(|r| r.termination == Termination::Converged) {
        Termination::Converged
    } else {
        Termination::MaxIters
    };
    let error = results.iter().find_map(|r| r.error.clone());
    Ok(LoopResult {
        output,
        iterations_run: longest,
        termination,
        residual_trace,
        selected_iteration: results.iter().map(|r| r.selected_iteration).max().unwrap_or(0),
        gain,
        error,
        sic_bitstream: None,
        reencoded_bitstream: None,
    })
}

/// SIC followed by CIC on the decoded image, with optional re-encoding of
/// the refined output.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub f_d0: Image,
    pub result: LoopResult,
}

pub fn run_pipeline<C: Codec + ?Sized>(
    codec: &C,
    f0: &Image,
    config: &LoopConfig,
    reencode: bool,
) -> Result<PipelineOutcome> {
    let (f_d0, sic_bs) = run_sic(codec, f0)?;
    let oracle = (config.select == SelectMode::BestOracle).then_some(f0);
    let mut result = match config.tile {
        Some(_) => run_cic_tiled(codec, &f_d0, config, oracle)?,
        None => run_cic(codec, &f_d0, config, oracle)?,
    };
    if reencode && result.termination != Termination::CodecError {
        result.reencoded_bitstream = Some(codec.encode(&result.output)?);
    }
    result.sic_bitstream = Some(sic_bs);
    Ok(PipelineOutcome { f_d0, result })
}
