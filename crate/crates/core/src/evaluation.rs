//! Reconstruction and occupancy metrics, plus the timed voxelization pipeline
//! used to compare adaptive pyramids against the fixed-resolution baseline.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::analyze;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pointcloud::{
    estimate_normals, load_point_cloud, normalize_to_unit_cube, CloudFormat, PointCloud,
    DEFAULT_NORMAL_NEIGHBORS,
};
use crate::pyramid::{build_pyramid, pyramid_to_points, VoxelPyramid};
use crate::spatial::SpatialHash;
use crate::voxel_grid::{occupancy_grid, voxelize, GridConfig, OccupancyGrid, VoxelGrid};

/// Nearest-neighbor distance from every point of `queries` into `target`.
fn nn_distances(queries: &[Vec3], target: &[Vec3]) -> Vec<f64> {
    let hash = SpatialHash::new(target);
    queries
        .par_iter()
        .map(|q| hash.nearest(*q).map(|(_, d)| d).unwrap_or(f64::INFINITY))
        .collect()
}

/// Sum of the two directed mean nearest-neighbor distances (unsquared).
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ab = nn_distances(&a.points, &b.points);
    let ba = nn_distances(&b.points, &a.points);
    Ok(mean(&ab) + mean(&ba))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// F-score at distance `radius`: precision over `pred`, recall over `gt`.
pub fn f1_point_cloud(pred: &PointCloud, gt: &PointCloud, radius: f64) -> Result<PointF1> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let within = |d: &Vec<f64>| d.iter().filter(|&&x| x <= radius).count() as f64 / d.len() as f64;
    let precision = within(&nn_distances(&pred.points, &gt.points));
    let recall = within(&nn_distances(&gt.points, &pred.points));
    Ok(PointF1 {
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_same_resolution(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<()> {
    if a.resolution() != b.resolution() {
        return Err(Error::ResolutionMismatch {
            left: a.resolution(),
            right: b.resolution(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(pred: &OccupancyGrid, gt: &OccupancyGrid) -> Result<Confusion> {
    check_same_resolution(pred, gt)?;
    let mut c = Confusion::default();
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `|a ∧ b| / |a ∨ b|`, 1.0 when both grids are empty.
pub fn geometric_iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    let c = confusion(a, b)?;
    Ok(iou_of(&c))
}

fn iou_of(c: &Confusion) -> f64 {
    let union = c.tp + c.fp + c.fn_;
    if union == 0 {
        1.0
    } else {
        c.tp as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
}

/// Binary confusion-matrix scores with occupied as the positive class.
/// Precision and recall are 0 when their denominators vanish.
pub fn voxel_classification_metrics(
    pred: &OccupancyGrid,
    gt: &OccupancyGrid,
) -> Result<VoxelScores> {
    let c = confusion(pred, gt)?;
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let total = c.tp + c.fp + c.fn_ + c.tn;
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    Ok(VoxelScores {
        accuracy: ratio(c.tp + c.tn, total),
        precision,
        recall,
        f1: harmonic(precision, recall),
        iou: iou_of(&c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub total: f64,
    pub data_prep: f64,
    pub fit: f64,
    pub per_batch: f64,
    pub shapes_per_second: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub chamfer: f64,
    pub f1_pc: f64,
    pub geo_iou: f64,
    pub voxel_accuracy: f64,
    pub voxel_precision: f64,
    pub voxel_recall: f64,
    pub voxel_f1: f64,
    pub voxel_iou: f64,
    pub timings: Timings,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("chamfer", self.chamfer),
            ("f1_pc", self.f1_pc),
            ("geo_iou", self.geo_iou),
            ("voxel_accuracy", self.voxel_accuracy),
            ("voxel_precision", self.voxel_precision),
            ("voxel_recall", self.voxel_recall),
            ("voxel_f1", self.voxel_f1),
            ("voxel_iou", self.voxel_iou),
            ("total_s", self.timings.total),
            ("data_prep_s", self.timings.data_prep),
            ("fit_s", self.timings.fit),
            ("per_batch_s", self.timings.per_batch),
            ("shapes_per_second", self.timings.shapes_per_second),
        ]
    }

    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>14.6}");
        }
        out
    }
}

/// Reconstruction scores of `pred` against `gt`, both in normalized
/// coordinates. `pred_occupancy` is the predicted base-resolution occupancy;
/// when `None` it is derived from `pred`'s points.
pub fn evaluate(
    pred: &PointCloud,
    gt: &PointCloud,
    pred_occupancy: Option<&OccupancyGrid>,
    resolution: u32,
    radius: f64,
) -> Result<EvalReport> {
    let pred_pts = OccupancyGrid::from_points(&pred.points, resolution);
    let gt_occ = OccupancyGrid::from_points(&gt.points, resolution);
    let voxel = voxel_classification_metrics(pred_occupancy.unwrap_or(&pred_pts), &gt_occ)?;
    Ok(EvalReport {
        chamfer: chamfer_distance(pred, gt)?,
        f1_pc: f1_point_cloud(pred, gt, radius)?.f1,
        geo_iou: geometric_iou(&pred_pts, &gt_occ)?,
        voxel_accuracy: voxel.accuracy,
        voxel_precision: voxel.precision,
        voxel_recall: voxel.recall,
        voxel_f1: voxel.f1,
        voxel_iou: voxel.iou,
        timings: Timings::default(),
    })
}

/// Stand-in for the per-voxel network that consumes the voxelization
/// downstream: a fixed random MLP (5 → 64 → 64 → 16, ReLU) evaluated once per
/// unit. Its cost scales with the number of units handed over.
pub struct UnitEncoder {
    layers: Vec<(Vec<f64>, Vec<f64>, usize, usize)>,
}

const ENCODER_WIDTHS: [usize; 4] = [5, 64, 64, 16];

impl UnitEncoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = ENCODER_WIDTHS
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                (weights, vec![0.0; fan_out], fan_in, fan_out)
            })
            .collect();
        UnitEncoder { layers }
    }

    fn encode_one(&self, features: [f64; 5]) -> f64 {
        let mut x: Vec<f64> = features.to_vec();
        let last = self.layers.len() - 1;
        for (li, (w, b, fan_in, fan_out)) in self.layers.iter().enumerate() {
            let mut y = b.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                *yo += row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                if li != last {
                    *yo = yo.max(0.0);
                }
            }
            debug_assert_eq!(y.len(), *fan_out);
            x = y;
        }
        x.iter().sum()
    }

    /// Encodes `(center, size_in_normalized_units, point_count)` units and
    /// returns a checksum of all embeddings.
    pub fn encode(&self, units: &[(Vec3, f64, usize)]) -> f64 {
        let per_unit: Vec<f64> = units
            .par_iter()
            .map(|&(c, s, n)| self.encode_one([c[0], c[1], c[2], s, (n as f64).ln_1p()]))
            .collect();
        per_unit.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineMode {
    /// Fixed-resolution baseline: every base cell is handed downstream.
    Frv,
    /// Complexity-driven merging: only pyramid leaves are handed downstream.
    DrMsv,
}

impl PipelineMode {
    pub fn label(self) -> &'static str {
        match self {
            PipelineMode::Frv => "FRV",
            PipelineMode::DrMsv => "DR-MSV",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub enum ShapeSource {
    File(PathBuf),
    Memory(PointCloud),
}

impl ShapeSource {
    fn load(&self) -> Result<PointCloud> {
        match self {
            ShapeSource::File(p) => load_point_cloud(p, CloudFormat::from_path(p)),
            ShapeSource::Memory(c) => Ok(c.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapeRun {
    pub mode: PipelineMode,
    /// Units handed downstream: pyramid leaves or base cells.
    pub units: usize,
    pub data_prep: Duration,
    pub fit: Duration,
    pub total: Duration,
    pub cloud: PointCloud,
    pub grid: VoxelGrid,
    pub pyramid: Option<VoxelPyramid>,
    pub checksum: f64,
}

impl ShapeRun {
    /// Points standing in for the voxelization: leaf centers, or occupied
    /// cell centers for the fixed baseline.
    pub fn reconstruction(&self) -> PointCloud {
        match &self.pyramid {
            Some(p) => pyramid_to_points(p),
            None => {
                let r = self.grid.resolution() as f64;
                PointCloud::new(
                    self.grid
                        .cells
                        .values()
                        .filter(|c| !c.is_empty())
                        .map(|c| c.index.map(|v| (v as f64 + 0.5) / r))
                        .collect(),
                )
            }
        }
    }

    pub fn predicted_occupancy(&self) -> OccupancyGrid {
        match &self.pyramid {
            Some(p) => p.occupancy(),
            None => occupancy_grid(&self.grid),
        }
    }

    /// Reconstruction metrics against the normalized input (untimed).
    pub fn evaluate(&self) -> Result<EvalReport> {
        let r = self.grid.resolution();
        evaluate(
            &self.reconstruction(),
            &self.cloud,
            Some(&self.predicted_occupancy()),
            r,
            1.0 / r as f64,
        )
    }
}

/// Runs one shape through load → normalize → voxelize (data prep) and then
/// either merging plus leaf encoding or plain cell encoding (fit).
pub fn run_shape(
    source: &ShapeSource,
    config: &GridConfig,
    mode: PipelineMode,
    encoder: &UnitEncoder,
) -> Result<ShapeRun> {
    let start = Instant::now();
    let raw = source.load()?;
    let mut cloud = normalize_to_unit_cube(&raw)?.cloud;
    if mode == PipelineMode::DrMsv && !cloud.has_normals() {
        cloud = estimate_normals(&cloud, DEFAULT_NORMAL_NEIGHBORS.min(cloud.len()).max(3))?;
    }
    let grid = voxelize(&cloud, config)?;
    let data_prep = start.elapsed();

    let fit_start = Instant::now();
    let r = config.resolution;
    let edge = config.cell_edge();
    let (grid, pyramid, units) = match mode {
        PipelineMode::DrMsv => {
            let (grid, _) = analyze(grid, &cloud)?;
            let pyramid = build_pyramid(&grid)?;
            let units: Vec<_> = pyramid
                .leaves
                .iter()
                .map(|l| (l.center(r), l.size() as f64 * edge, l.point_count))
                .collect();
            (grid, Some(pyramid), units)
        }
        PipelineMode::Frv => {
            let mut units = Vec::with_capacity((r as usize).pow(3));
            for i in 0..r {
                for j in 0..r {
                    for k in 0..r {
                        let n = grid.cells.get(&[i, j, k]).map_or(0, |c| c.len());
                        let c = [i, j, k].map(|v| (v as f64 + 0.5) * edge);
                        units.push((c, edge, n));
                    }
                }
            }
            (grid, None, units)
        }
    };
    let checksum = encoder.encode(&units);
    let fit = fit_start.elapsed();
    Ok(ShapeRun {
        mode,
        units: units.len(),
        data_prep,
        fit,
        total: start.elapsed(),
        cloud,
        grid,
        pyramid,
        checksum,
    })
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub mode: PipelineMode,
    pub shapes: usize,
    pub units: usize,
    /// Mean reconstruction scores over the shapes, with batch timings.
    pub report: EvalReport,
    pub runs: Vec<ShapeRun>,
}

/// Times the pipeline over `sources`, processed sequentially in batches of
/// `batch_size`. `total` is wall-clock for the whole batch, `data_prep` and
/// `fit` are summed per-shape segments.
pub fn timed_pipeline(
    sources: &[ShapeSource],
    config: &GridConfig,
    mode: PipelineMode,
    batch_size: usize,
    seed: u64,
) -> Result<BatchResult> {
    if sources.is_empty() {
        return Err(Error::InvalidInput("no shapes to process".into()));
    }
    config.validate()?;
    let batch_size = batch_size.max(1);
    let encoder = UnitEncoder::new(seed);
    let start = Instant::now();
    let mut runs = Vec::with_capacity(sources.len());
    for s in sources {
        runs.push(run_shape(s, config, mode, &encoder)?);
    }
    let total = start.elapsed().as_secs_f64();

    let n = runs.len() as f64;
    let mut report = EvalReport::default();
    for run in &runs {
        let e = run.evaluate()?;
        report.chamfer += e.chamfer / n;
        report.f1_pc += e.f1_pc / n;
        report.geo_iou += e.geo_iou / n;
        report.voxel_accuracy += e.voxel_accuracy / n;
        report.voxel_precision += e.voxel_precision / n;
        report.voxel_recall += e.voxel_recall / n;
        report.voxel_f1 += e.voxel_f1 / n;
        report.voxel_iou += e.voxel_iou / n;
    }
    let batches = runs.len().div_ceil(batch_size) as f64;
    report.timings = Timings {
        total,
        data_prep: runs.iter().map(|r| r.data_prep.as_secs_f64()).sum(),
        fit: runs.iter().map(|r| r.fit.as_secs_f64()).sum(),
        per_batch: total / batches,
        shapes_per_second: n / total,
    };
    Ok(BatchResult {
        mode,
        shapes: runs.len(),
        units: runs.iter().map(|r| r.units).sum(),
        report,
        runs,
    })
}
