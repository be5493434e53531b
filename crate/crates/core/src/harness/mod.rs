//! Experiment runner: SIC vs CIC over image directories, gain/iteration
//! sweeps, bound analysis and difference-image export.

mod codec_spec;
pub mod report;

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub use codec_spec::{CodecSpec, BRIDGE_TIMEOUT};
use report::{psnr_delta, write_json, write_text, Cell, Table};

use crate::codec::Codec;
use crate::engine::{self, EtaMode, InitMode, LoopConfig, LoopResult, LoopState, Termination};
use crate::error::{CicError, Result};
use crate::image::Image;
use crate::metrics::{self, Psnr, DEFAULT_SUBPIXEL_BITS};
use crate::taylor;

pub const DEFAULT_THRESHOLD: f64 = 10.0;
const MAX_SWEEP_ITERS: usize = 100_000;
const MAX_SWEEP_CELLS: usize = 1_000_000;

/// Everything a harness command needs. Loadable from JSON; CLI flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub codec: String,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
    pub threshold: f64,
    pub subpixel_bits: u32,
    pub out: PathBuf,
    pub seed: u64,
    pub reencode: bool,
    pub eta_grid: Vec<f64>,
    pub iters_grid: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            codec: "builtin:identity".into(),
            loop_config: LoopConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            subpixel_bits: DEFAULT_SUBPIXEL_BITS,
            out: PathBuf::from("cic-out"),
            seed: 0,
            reencode: false,
            eta_grid: Vec::new(),
            iters_grid: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CicError::FileNotFound(path.to_owned()),
            _ => CicError::Io(e),
        })?;
        serde_json::from_str(&text).map_err(|e| CicError::ConfigInvalid(format!("{}: {e}", path.display())))
    }

    pub fn codec_spec(&self) -> Result<CodecSpec> {
        CodecSpec::parse(&self.codec)
    }

    /// Loop settings with the experiment seed applied to every random
    /// choice (probe coordinates and random initialization).
    pub fn resolved_loop(&self) -> LoopConfig {
        let mut cfg = self.loop_config.clone();
        cfg.probe.seed = self.seed;
        if let InitMode::Random(_) = cfg.init {
            cfg.init = InitMode::Random(self.seed);
        }
        cfg
    }

    fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CicError::ConfigInvalid("no dataset given".into()))
    }

    fn validate(&self) -> Result<()> {
        self.resolved_loop().validate()?;
        if self.subpixel_bits == 0 {
            return Err(CicError::ConfigInvalid("subpixel_bits must be >= 1".into()));
        }
        if !self.threshold.is_finite() {
            return Err(CicError::ConfigInvalid("threshold must be finite".into()));
        }
        Ok(())
    }

    /// The parts of the configuration that determine results; the output
    /// location is excluded so reports from different directories compare
    /// byte-for-byte.
    fn provenance(&self) -> Value {
        json!({
            "codec": self.codec,
            "loop": self.resolved_loop(),
            "reencode": self.reencode,
            "seed": self.seed,
            "subpixel_bits": self.subpixel_bits,
        })
    }
}

fn is_image_file(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pgm" | "pnm"))
        .unwrap_or(false)
}

/// Image files of a dataset in lexicographic file-name order. A path to a
/// single image is a one-image dataset.
pub fn discover_images(dataset: &Path) -> Result<Vec<PathBuf>> {
    if !dataset.exists() {
        return Err(CicError::FileNotFound(dataset.to_owned()));
    }
    if dataset.is_file() {
        return Ok(vec![dataset.to_owned()]);
    }
    let mut found: Vec<PathBuf> = std::fs::read_dir(dataset)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    found.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    if found.is_empty() {
        return Err(CicError::EmptyDataset(dataset.to_owned()));
    }
    Ok(found)
}

fn image_id(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Quality and rate of both legs for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub psnr_sic: Psnr,
    pub psnr_cic: Psnr,
    pub ssim_sic: f64,
    pub ssim_cic: f64,
    pub bpsp_sic: f64,
    pub bpsp_cic: f64,
    pub bpsp_raw_sic: f64,
    pub bpsp_raw_cic: f64,
}

const METRIC_COLUMNS: [&str; 11] = [
    "psnr_sic",
    "psnr_cic",
    "delta_psnr",
    "ssim_sic",
    "ssim_cic",
    "delta_ssim",
    "bpsp_sic",
    "bpsp_cic",
    "delta_bpsp",
    "bpsp_raw_sic",
    "bpsp_raw_cic",
];
const DELTA_SLOTS: [usize; 3] = [2, 5, 8];

impl RowMetrics {
    pub fn delta_psnr(&self) -> f64 {
        psnr_delta(self.psnr_sic, self.psnr_cic)
    }

    pub fn delta_ssim(&self) -> f64 {
        self.ssim_cic - self.ssim_sic
    }

    /// Rate saving, `sic - cic`.
    pub fn delta_bpsp(&self) -> f64 {
        self.bpsp_sic - self.bpsp_cic
    }

    /// Values in report column order.
    pub fn values(&self) -> [f64; 11] {
        [
            self.psnr_sic.value(),
            self.psnr_cic.value(),
            self.delta_psnr(),
            self.ssim_sic,
            self.ssim_cic,
            self.delta_ssim(),
            self.bpsp_sic,
            self.bpsp_cic,
            self.delta_bpsp(),
            self.bpsp_raw_sic,
            self.bpsp_raw_cic,
        ]
    }
}

fn metric_cells(m: Option<&RowMetrics>) -> Vec<Cell> {
    match m {
        Some(m) => m.values().into_iter().map(Cell::Float).collect(),
        None => vec![Cell::Empty; METRIC_COLUMNS.len()],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub image: String,
    pub metrics: Option<RowMetrics>,
    pub iterations: Option<usize>,
    pub selected_iteration: Option<usize>,
    pub termination: Option<Termination>,
    pub eta: Option<f64>,
    pub error: Option<String>,
}

impl ReportRow {
    fn failed(image: String, err: &CicError) -> Self {
        Self {
            image,
            metrics: None,
            iterations: None,
            selected_iteration: None,
            termination: None,
            eta: None,
            error: Some(err.to_string()),
        }
    }

    fn tail_cells(&self) -> Vec<Cell> {
        vec![
            self.iterations.map_or(Cell::Empty, |v| Cell::Int(v as u64)),
            self.selected_iteration.map_or(Cell::Empty, |v| Cell::Int(v as u64)),
            self.termination.map_or(Cell::Empty, |t| Cell::Text(t.as_str().into())),
            Cell::opt_float(self.eta),
            self.error.clone().map_or(Cell::Empty, Cell::Text),
        ]
    }
}

const TAIL_COLUMNS: [&str; 5] = ["iterations", "selected_iteration", "termination", "eta", "error"];

fn run_columns() -> Vec<&'static str> {
    let mut cols = vec!["image"];
    cols.extend(METRIC_COLUMNS);
    cols.extend(TAIL_COLUMNS);
    cols
}

/// Dataset means (over images with metrics) and maximum deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub images: usize,
    pub failed: usize,
    /// Column means in report order; `None` when no image produced metrics.
    pub mean: Option<[f64; 11]>,
    /// Maximum of `delta_psnr`, `delta_ssim`, `delta_bpsp`.
    pub max_delta: Option<[f64; 3]>,
}

impl Summary {
    pub fn of(rows: &[ReportRow]) -> Self {
        let values: Vec<[f64; 11]> = rows.iter().filter_map(|r| r.metrics.map(|m| m.values())).collect();
        let (mean, max_delta) = if values.is_empty() {
            (None, None)
        } else {
            let n = values.len() as f64;
            let mut mean = [0.0; 11];
            for (i, slot) in mean.iter_mut().enumerate() {
                *slot = values.iter().map(|v| v[i]).sum::<f64>() / n;
            }
            let mut max = [f64::NEG_INFINITY; 3];
            for (k, &i) in DELTA_SLOTS.iter().enumerate() {
                max[k] = values.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            }
            (Some(mean), Some(max))
        };
        Self {
            images: rows.len(),
            failed: rows.iter().filter(|r| r.metrics.is_none()).count(),
            mean,
            max_delta,
        }
    }

    fn mean_cells(&self) -> Vec<Cell> {
        let mut cells = vec![Cell::Text("mean".into())];
        match self.mean {
            Some(m) => cells.extend(m.into_iter().map(Cell::Float)),
            None => cells.extend(vec![Cell::Empty; METRIC_COLUMNS.len()]),
        }
        cells.extend(vec![Cell::Empty; TAIL_COLUMNS.len()]);
        cells
    }

    fn max_cells(&self) -> Vec<Cell> {
        let mut cells = vec![Cell::Text("max_delta".into())];
        let mut metric = vec![Cell::Empty; METRIC_COLUMNS.len()];
        if let Some(m) = self.max_delta {
            for (k, &i) in DELTA_SLOTS.iter().enumerate() {
                metric[i] = Cell::Float(m[k]);
            }
        }
        cells.extend(metric);
        cells.extend(vec![Cell::Empty; TAIL_COLUMNS.len()]);
        cells
    }
}

/// One evaluated iterate: `residual_norm = |f_d0 - NF(f_n)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub n: usize,
    pub residual_norm: f64,
    pub psnr_vs_oracle: Option<Psnr>,
}

fn trajectory_table(points: &[TrajectoryPoint]) -> Table {
    let mut t = Table::new(vec!["n", "residual_norm", "psnr_vs_oracle"]);
    for p in points {
        t.push(vec![
            Cell::Int(p.n as u64),
            Cell::Float(p.residual_norm),
            p.psnr_vs_oracle.map_or(Cell::Empty, |v| Cell::Float(v.value())),
        ]);
    }
    t
}

fn psnr_from_sse(sse: f64, dim: usize) -> Psnr {
    if sse == 0.0 {
        Psnr::Infinite
    } else {
        Psnr::Db(10.0 * (255.0f64 * 255.0 * dim as f64 / sse).log10())
    }
}

fn clamped_sse(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(crate::image::quantize_sample(x)) - f64::from(crate::image::quantize_sample(y));
            d * d
        })
        .sum()
}

/// SIC, then CIC on the decoded image, recording per-iterate oracle PSNR.
/// Tiles report per-tile squared errors that are summed per step, carrying
/// a finished tile's last value forward.
pub struct ImageRun {
    pub f_d0: Image,
    pub result: LoopResult,
    pub sic_bits: u64,
    pub cic_bits: u64,
    pub trajectory: Vec<TrajectoryPoint>,
}

pub fn run_image<C: Codec + ?Sized>(codec: &C, f0: &Image, loop_cfg: &LoopConfig, reencode: bool) -> Result<ImageRun> {
    loop_cfg.validate()?;
    let (f_d0, sic_bs) = engine::run_sic(codec, f0)?;
    let oracle = (loop_cfg.select == engine::SelectMode::BestOracle).then_some(f0);
    let grid = match loop_cfg.tile {
        Some(edge) => engine::tile_grid(f0.width(), f0.height(), edge),
        None => vec![(0, 0, f0.height(), f0.width())],
    };
    let oracle_tiles: Vec<Image> = grid
        .iter()
        .map(|&(r, c, h, w)| f0.crop(r, c, h, w))
        .collect::<Result<_>>()?;
    let sse: Vec<Mutex<Vec<f64>>> = grid.iter().map(|_| Mutex::new(Vec::new())).collect();
    let record = |tile: usize, s: &LoopState<'_>| {
        let v = clamped_sse(s.f, &oracle_tiles[tile]);
        let mut slot = sse[tile].lock().unwrap_or_else(|p| p.into_inner());
        slot.resize(s.n - 1, f64::NAN);
        slot.push(v);
    };
    let result = match loop_cfg.tile {
        Some(_) => engine::run_cic_tiled_observed(codec, &f_d0, loop_cfg, oracle, record)?,
        None => engine::run_cic_observed(codec, &f_d0, loop_cfg, oracle, |s| record(0, s))?,
    };
    let sse: Vec<Vec<f64>> = sse
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|p| p.into_inner()))
        .collect();
    let trajectory = result
        .residual_trace
        .iter()
        .enumerate()
        .map(|(n, &norm)| {
            let mut total = 0.0;
            for tile in &sse {
                match tile.get(n).or(tile.last()) {
                    Some(v) if v.is_finite() => total += v,
                    _ => {
                        return TrajectoryPoint {
                            n,
                            residual_norm: norm,
                            psnr_vs_oracle: None,
                        };
                    }
                }
            }
            let complete = sse.iter().any(|t| t.len() > n);
            TrajectoryPoint {
                n,
                residual_norm: norm,
                psnr_vs_oracle: complete.then(|| psnr_from_sse(total, f0.dim())),
            }
        })
        .collect();

    let sic_bits = sic_bs.bit_length();
    let mut cic_bits = sic_bits;
    let mut result = result;
    if reencode && result.termination != Termination::CodecError {
        let bs = codec.encode(&result.output)?;
        cic_bits = bs.bit_length();
        result.reencoded_bitstream = Some(bs);
    }
    result.sic_bitstream = Some(sic_bs);
    Ok(ImageRun {
        f_d0,
        result,
        sic_bits,
        cic_bits,
        trajectory,
    })
}

fn row_metrics(f0: &Image, run: &ImageRun, subpixel_bits: u32) -> Result<RowMetrics> {
    let sic = metrics::report(&run.f_d0, f0, run.sic_bits, subpixel_bits)?;
    let cic = metrics::report(&run.result.output, f0, run.cic_bits, subpixel_bits)?;
    Ok(RowMetrics {
        psnr_sic: sic.psnr,
        psnr_cic: cic.psnr,
        ssim_sic: sic.ssim,
        ssim_cic: cic.ssim,
        bpsp_sic: sic.bpsp,
        bpsp_cic: cic.bpsp,
        bpsp_raw_sic: sic.bpsp_raw,
        bpsp_raw_cic: cic.bpsp_raw,
    })
}

fn loop_row(image: String, f0: &Image, run: &ImageRun, subpixel_bits: u32) -> ReportRow {
    match row_metrics(f0, run, subpixel_bits) {
        Ok(m) => ReportRow {
            image,
            metrics: Some(m),
            iterations: Some(run.result.iterations_run),
            selected_iteration: Some(run.result.selected_iteration),
            termination: Some(run.result.termination),
            eta: Some(run.result.gain.eta),
            error: run.result.error.clone(),
        },
        Err(e) => ReportRow::failed(image, &e),
    }
}

/// Output of [`cmd_run`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub rows: Vec<ReportRow>,
    pub trajectories: Vec<Option<Vec<TrajectoryPoint>>>,
    pub summary: Summary,
    pub csv: String,
    pub json: Value,
}

/// SIC vs CIC over every image of the dataset. Writes `report.csv`,
/// `report.json` and `trajectories/<image>.csv` under `config.out`.
pub fn cmd_run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let images = discover_images(config.dataset()?)?;
    let codec = config.codec_spec()?.build()?;
    let loop_cfg = config.resolved_loop();

    let results: Vec<(ReportRow, Option<Vec<TrajectoryPoint>>)> = images
        .par_iter()
        .map(|path| {
            let id = image_id(path);
            let f0 = match Image::load(path) {
                Ok(img) => img,
                Err(e) => return (ReportRow::failed(id, &e), None),
            };
            match run_image(&*codec, &f0, &loop_cfg, config.reencode) {
                Ok(run) => (loop_row(id, &f0, &run, config.subpixel_bits), Some(run.trajectory)),
                Err(e) => (ReportRow::failed(id, &e), None),
            }
        })
        .collect();
    let (rows, trajectories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = Summary::of(&rows);

    let mut table = Table::new(run_columns());
    for r in &rows {
        let mut cells = vec![Cell::Text(r.image.clone())];
        cells.extend(metric_cells(r.metrics.as_ref()));
        cells.extend(r.tail_cells());
        table.push(cells);
    }
    let image_rows = table.json_rows();
    let mean = summary.mean_cells();
    let max = summary.max_cells();
    let json = json!({
        "config": config.provenance(),
        "rows": image_rows,
        "summary": {
            "images": summary.images,
            "failed": summary.failed,
            "mean": table.json_row(&mean),
            "max_delta": table.json_row(&max),
        },
    });
    table.push(mean);
    table.push(max);
    let csv = table.to_csv()?;

    write_text(&config.out.join("report.csv"), &csv)?;
    write_json(&config.out.join("report.json"), &json)?;
    for (row, traj) in rows.iter().zip(&trajectories) {
        if let Some(points) = traj {
            let path = config.out.join("trajectories").join(format!("{}.csv", row.image));
            write_text(&path, &trajectory_table(points).to_csv()?)?;
        }
    }
    Ok(RunReport {
        rows,
        trajectories,
        summary,
        csv,
        json,
    })
}

/// One row of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub iters: usize,
    pub row: ReportRow,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub csv: String,
    pub json: Value,
}

fn check_grid(eta_grid: &[f64], iters_grid: &[usize], images: usize) -> Result<()> {
    let bad = |m: String| Err(CicError::ConfigInvalid(m));
    if eta_grid.is_empty() || iters_grid.is_empty() {
        return bad("sweep grids must be non-empty".into());
    }
    if let Some(e) = eta_grid.iter().find(|e| !e.is_finite()) {
        return bad(format!("eta {e} is not finite"));
    }
    if let Some(n) = iters_grid.iter().find(|&&n| n == 0 || n > MAX_SWEEP_ITERS) {
        return bad(format!("iteration count {n} outside 1..={MAX_SWEEP_ITERS}"));
    }
    let cells = eta_grid.len().saturating_mul(iters_grid.len()).saturating_mul(images);
    if cells > MAX_SWEEP_CELLS {
        return bad(format!("sweep of {cells} runs exceeds {MAX_SWEEP_CELLS}"));
    }
    Ok(())
}

/// Image x eta x N grid with manual gain, in that nesting order. Writes
/// `sweep.csv` and `sweep.json`.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    if config.eta_grid.is_empty() || config.iters_grid.is_empty() {
        return Err(CicError::ConfigInvalid("sweep grids must be non-empty".into()));
    }
    let images = discover_images(config.dataset()?)?;
    check_grid(&config.eta_grid, &config.iters_grid, images.len())?;
    let codec = config.codec_spec()?.build()?;
    let base = config.resolved_loop();

    let cells: Vec<(usize, f64, usize)> = (0..images.len())
        .flat_map(|i| {
            config
                .eta_grid
                .iter()
                .flat_map(move |&eta| config.iters_grid.iter().map(move |&n| (i, eta, n)))
        })
        .collect();
    let loaded: Vec<Result<Image>> = images.par_iter().map(Image::load).collect();
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(i, eta, iters)| {
            let id = image_id(&images[i]);
            let cfg = LoopConfig {
                eta,
                max_iters: iters,
                eta_mode: EtaMode::Manual,
                ..base.clone()
            };
            let row = match &loaded[i] {
                Err(e) => ReportRow::failed(id, e),
                Ok(f0) => match run_image(&*codec, f0, &cfg, config.reencode) {
                    Ok(run) => loop_row(id, f0, &run, config.subpixel_bits),
                    Err(e) => ReportRow::failed(id, &e),
                },
            };
            SweepRow { eta, iters, row }
        })
        .collect();

    let mut cols = vec!["image", "eta_grid", "iters_grid"];
    cols.extend(METRIC_COLUMNS);
    cols.extend(TAIL_COLUMNS);
    let mut table = Table::new(cols);
    for r in &rows {
        let mut cells = vec![
            Cell::Text(r.row.image.clone()),
            Cell::Float(r.eta),
            Cell::Int(r.iters as u64),
        ];
        cells.extend(metric_cells(r.row.metrics.as_ref()));
        cells.extend(r.row.tail_cells());
        table.push(cells);
    }
    let csv = table.to_csv()?;
    let json = json!({ "config": config.provenance(), "rows": table.json_rows() });
    write_text(&config.out.join("sweep.csv"), &csv)?;
    write_json(&config.out.join("sweep.json"), &json)?;
    Ok(SweepReport { rows, csv, json })
}

/// Slope estimate at the first dataset image, the admissible gain interval
/// and the contraction report for the configured gain. Writes
/// `analysis.json`.
pub fn cmd_analyze(config: &ExperimentConfig) -> Result<Value> {
    config.validate()?;
    let path = discover_images(config.dataset()?)?.remove(0);
    let f0 = Image::load(&path)?;
    let codec = config.codec_spec()?.build()?;
    let loop_cfg = config.resolved_loop();
    let probe = taylor::ProbeConfig {
        samples: loop_cfg.probe.samples.min(f0.dim()),
        ..loop_cfg.probe
    };
    let estimate = taylor::estimate_mu(&*codec, &f0, &probe)?;
    let interval = |r: Result<(f64, f64)>| match r {
        Ok((lo, hi)) => Ok(Some([lo, hi])),
        Err(CicError::MuZero) => Ok(None),
        Err(e) => Err(e),
    };
    let frobenius = interval(taylor::eta_interval(estimate.mu, loop_cfg.dt, f0.dim()))?;
    let spectral = interval(taylor::spectral_interval(estimate.mu, loop_cfg.dt))?;
    let contraction = taylor::contraction_report(&estimate, loop_cfg.eta, loop_cfg.dt, f0.dim())?;
    let value = json!({
        "image": image_id(&path),
        "codec": config.codec,
        "dim": f0.dim(),
        "dt": loop_cfg.dt,
        "eta": loop_cfg.eta,
        "mu": estimate.mu,
        "bound_available": estimate.bound_available(),
        "eta_interval": frobenius,
        "spectral_interval": spectral,
        "contraction": contraction,
        "estimate": estimate,
    });
    write_json(&config.out.join("analysis.json"), &value)?;
    Ok(value)
}

/// Writes `abs.png` (clamped absolute difference) and `logic.png` (0/255)
/// under `out`.
pub fn cmd_diff(a: &Path, b: &Path, threshold: f64, out: &Path) -> Result<metrics::DifferenceImages> {
    let fa = Image::load(a)?;
    let fb = Image::load(b)?;
    let diff = metrics::difference_images(&fa, &fb, threshold)?;
    std::fs::create_dir_all(out)?;
    diff.abs_img.save(out.join("abs.png"))?;
    diff.logic_display().save(out.join("logic.png"))?;
    Ok(diff)
}

/// PSNR, SSIM, optional rate and flagged-pixel count between two files.
pub fn cmd_metrics(a: &Path, b: &Path, bits: Option<u64>, subpixel_bits: u32, threshold: f64) -> Result<Value> {
    let f = Image::load(a)?;
    let f0 = Image::load(b)?;
    let psnr = metrics::psnr(&f, &f0)?;
    let ssim = metrics::ssim(&f, &f0)?;
    let diff = metrics::difference_images(&f, &f0, threshold)?;
    let (w, h, c) = f0.shape();
    let rate = bits.map(|b| metrics::bpsp(b, subpixel_bits, w, h, c)).transpose()?;
    Ok(json!({
        "psnr": Cell::Float(psnr.value()).json(),
        "ssim": Cell::Float(ssim).json(),
        "bits": bits,
        "bpsp": rate.map(|r| Cell::Float(r.bpsp).json()),
        "bpsp_raw": rate.map(|r| Cell::Float(r.bpsp_raw).json()),
        "threshold": threshold,
        "flagged_pixels": diff.flagged_pixels(),
    }))
}
