//! Per-voxel geometric complexity scores, percentile thresholds and
//! complex / non-complex classification.
//!
//! Seven scores are computed for every occupied cell:
//!
//! | metric             | definition                                              |
//! |--------------------|---------------------------------------------------------|
//! | `d`                | `n / V_voxel`                                           |
//! | `sigma_s`          | RMS distance to the total-least-squares plane           |
//! | `normal_variation` | `1 - (1/n) Σ n_i · n_avg`                               |
//! | `lambda_linear`    | `(λ1 - λ2) / λ1`                                        |
//! | `lambda_planar`    | `(λ2 - λ3) / λ1`                                        |
//! | `H_s`              | `-Σ p_b ln p_b` over the cell's 8 sub-octants            |
//! | `kappa`            | `λ3 / (λ1 + λ2 + λ3)`                                   |
//!
//! with `λ1 ≥ λ2 ≥ λ3` the eigenvalues of the cell's point covariance. Every
//! score is oriented so that larger means more complex.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{add, covariance, dot, norm, scale, sub, sym_eigen, Vec3};
use crate::pointcloud::PointCloud;
use crate::voxel_grid::{CellLabel, GridConfig, VoxelCell, VoxelGrid};

/// Relative eigenvalue ratio below which the covariance is treated as rank one.
const RANK_TOLERANCE: f64 = 1e-12;
/// Spread (as a fraction of the cell edge) below which points count as coincident.
const COINCIDENT_FRACTION: f64 = 1e-9;
const ZERO_MEAN_NORMAL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Density,
    Roughness,
    NormalVariation,
    Linearity,
    Planarity,
    Entropy,
    Curvature,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Density,
        Metric::Roughness,
        Metric::NormalVariation,
        Metric::Linearity,
        Metric::Planarity,
        Metric::Entropy,
        Metric::Curvature,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Density => "d",
            Metric::Roughness => "sigma_s",
            Metric::NormalVariation => "normal_variation",
            Metric::Linearity => "lambda_linear",
            Metric::Planarity => "lambda_planar",
            Metric::Entropy => "H_s",
            Metric::Curvature => "kappa",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplexityMetrics {
    pub density: f64,
    pub roughness: f64,
    pub normal_variation: f64,
    pub linearity: f64,
    pub planarity: f64,
    pub entropy: f64,
    pub curvature: f64,
}

impl ComplexityMetrics {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Density => self.density,
            Metric::Roughness => self.roughness,
            Metric::NormalVariation => self.normal_variation,
            Metric::Linearity => self.linearity,
            Metric::Planarity => self.planarity,
            Metric::Entropy => self.entropy,
            Metric::Curvature => self.curvature,
        }
    }
}

/// Scores of one cell plus whether its geometry was too thin to fit a plane
/// (fewer than three points, or all points collinear or coincident).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub values: ComplexityMetrics,
    pub degenerate: bool,
}

pub fn point_density(cell: &VoxelCell) -> Result<f64> {
    if cell.is_empty() {
        return Err(Error::EmptyCell(cell.index));
    }
    Ok(cell.len() as f64 / cell.volume)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roughness {
    pub value: f64,
    pub degenerate: bool,
}

pub fn surface_roughness(cell: &VoxelCell, cloud: &PointCloud) -> Roughness {
    let edge = cell.volume.cbrt();
    let Some(fit) = PlaneFit::new(cell, cloud, edge) else {
        return Roughness {
            value: 0.0,
            degenerate: true,
        };
    };
    if fit.rank_at_most_one() {
        return Roughness {
            value: 0.0,
            degenerate: true,
        };
    }
    let normal = fit.eigen.vectors[2];
    let n = cell.len() as f64;
    let sum_sq: f64 = cell
        .points(cloud)
        .map(|p| {
            let d = dot(sub(p, fit.centroid), normal);
            d * d
        })
        .sum();
    Roughness {
        value: (sum_sq / n).sqrt(),
        degenerate: false,
    }
}

pub fn normal_variation(cell: &VoxelCell, cloud: &PointCloud) -> Result<f64> {
    let normals = cloud.normals.as_ref().ok_or(Error::MissingNormals)?;
    if cell.is_empty() {
        return Err(Error::EmptyCell(cell.index));
    }
    let n = cell.len() as f64;
    let sum = cell
        .point_indices
        .iter()
        .fold([0.0; 3], |acc, &i| add(acc, normals[i]));
    let mean = scale(sum, 1.0 / n);
    let len = norm(mean);
    if len <= ZERO_MEAN_NORMAL {
        return Ok(1.0);
    }
    let avg = scale(mean, 1.0 / len);
    let coherence = cell
        .point_indices
        .iter()
        .map(|&i| dot(normals[i], avg))
        .sum::<f64>()
        / n;
    Ok((1.0 - coherence).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaFeatures {
    pub linearity: f64,
    pub planarity: f64,
    pub curvature: f64,
    pub degenerate: bool,
}

pub fn pca_features(cell: &VoxelCell, cloud: &PointCloud) -> PcaFeatures {
    let degenerate = PcaFeatures {
        linearity: 0.0,
        planarity: 0.0,
        curvature: 0.0,
        degenerate: true,
    };
    let edge = cell.volume.cbrt();
    let Some(fit) = PlaneFit::new(cell, cloud, edge) else {
        return degenerate;
    };
    let [l1, l2, l3] = fit.eigen.values;
    PcaFeatures {
        linearity: (l1 - l2) / l1,
        planarity: (l2 - l3) / l1,
        curvature: l3 / (l1 + l2 + l3),
        degenerate: false,
    }
}

pub fn spatial_entropy(cell: &VoxelCell, cloud: &PointCloud, resolution: u32) -> Result<f64> {
    if cell.is_empty() {
        return Err(Error::EmptyCell(cell.index));
    }
    let mut counts = [0usize; 8];
    for p in cell.points(cloud) {
        counts[sub_octant(p, cell.index, resolution)] += 1;
    }
    let n = cell.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

/// Octant (bit 2 = x, bit 1 = y, bit 0 = z) of `p` inside the cell `index`.
fn sub_octant(p: Vec3, index: [u32; 3], resolution: u32) -> usize {
    let half = 2.0 * resolution as f64;
    let mut o = 0;
    for a in 0..3 {
        let fine = (p[a] * half).floor() as i64 - 2 * index[a] as i64;
        o = (o << 1) | fine.clamp(0, 1) as usize;
    }
    o
}

struct PlaneFit {
    centroid: Vec3,
    eigen: crate::geometry::SymEigen,
}

impl PlaneFit {
    /// `None` for fewer than three points or coincident points.
    fn new(cell: &VoxelCell, cloud: &PointCloud, edge: f64) -> Option<Self> {
        if cell.len() < 3 {
            return None;
        }
        let (centroid, cov) = covariance(cell.points(cloud))?;
        let mut eigen = sym_eigen(&cov);
        for v in &mut eigen.values {
            *v = v.max(0.0);
        }
        let tiny = (COINCIDENT_FRACTION * edge).powi(2);
        if eigen.values[0] <= tiny {
            return None;
        }
        Some(PlaneFit { centroid, eigen })
    }

    fn rank_at_most_one(&self) -> bool {
        self.eigen.values[1] <= RANK_TOLERANCE * self.eigen.values[0]
    }
}

/// All seven scores for a non-empty cell. Roughness is zero when no plane can
/// be fitted; the PCA scores are zero only for coincident points (a collinear
/// cell keeps linearity 1).
pub fn cell_metrics(cell: &VoxelCell, cloud: &PointCloud, resolution: u32) -> Result<CellMetrics> {
    let density = point_density(cell)?;
    let normal_variation = normal_variation(cell, cloud)?;
    let entropy = spatial_entropy(cell, cloud, resolution)?;
    let rough = surface_roughness(cell, cloud);
    let pca = pca_features(cell, cloud);
    let values = ComplexityMetrics {
        density,
        roughness: rough.value,
        normal_variation,
        linearity: pca.linearity,
        planarity: pca.planarity,
        entropy,
        curvature: pca.curvature,
    };
    Ok(CellMetrics {
        values,
        degenerate: rough.degenerate || pca.degenerate,
    })
}

/// Fills `metrics` on every occupied cell of the grid.
pub fn annotate_metrics(grid: &mut VoxelGrid, cloud: &PointCloud) -> Result<()> {
    if !cloud.has_normals() {
        return Err(Error::MissingNormals);
    }
    let r = grid.resolution();
    let computed: Vec<Result<Option<CellMetrics>>> = grid
        .cells
        .par_iter()
        .map(|(_, cell)| {
            if cell.is_empty() {
                Ok(None)
            } else {
                cell_metrics(cell, cloud, r).map(Some)
            }
        })
        .collect();
    for (cell, m) in grid.cells.values_mut().zip(computed) {
        cell.metrics = m?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    values: [f64; 7],
    pub percentile: f64,
    pub population_size: usize,
}

impl ThresholdSet {
    /// Same threshold for every metric; mostly useful in tests.
    pub fn uniform(value: f64) -> Self {
        ThresholdSet {
            values: [value; 7],
            percentile: f64::NAN,
            population_size: 0,
        }
    }

    pub fn get(&self, m: Metric) -> f64 {
        self.values[m.slot()]
    }

    pub fn set(&mut self, m: Metric, value: f64) {
        self.values[m.slot()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Metric, f64)> + '_ {
        Metric::ALL.into_iter().map(|m| (m, self.get(m)))
    }
}

/// Value at percentile `p` (0..=100) of `sorted` by linear interpolation
/// between the closest order statistics (rank `p/100 * (n-1)`).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample");
    let rank = (p / 100.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Per-metric thresholds over the occupied, non-degenerate cells of one grid.
pub fn compute_thresholds(grid: &VoxelGrid, config: &GridConfig) -> Result<ThresholdSet> {
    config.validate()?;
    let eligible: Vec<&ComplexityMetrics> = grid
        .cells
        .values()
        .filter(|c| !c.is_empty())
        .filter_map(|c| c.metrics.as_ref())
        .filter(|m| !m.degenerate)
        .map(|m| &m.values)
        .collect();
    if eligible.is_empty() {
        return Err(Error::NoEligibleCells);
    }
    let mut values = [0.0; 7];
    for m in Metric::ALL {
        values[m.slot()] = match config.fixed_thresholds.get(&m) {
            Some(&fixed) => fixed,
            None => {
                let mut sample: Vec<f64> = eligible.iter().map(|v| v.get(m)).collect();
                sample.sort_by(f64::total_cmp);
                percentile(&sample, config.percentile)
            }
        };
    }
    Ok(ThresholdSet {
        values,
        percentile: config.percentile,
        population_size: eligible.len(),
    })
}

/// A cell is complex when any of its scores reaches its threshold; degenerate
/// cells are judged on density alone.
pub fn is_complex(metrics: &CellMetrics, thresholds: &ThresholdSet) -> bool {
    if metrics.degenerate {
        return metrics.values.density >= thresholds.get(Metric::Density);
    }
    Metric::ALL
        .into_iter()
        .any(|m| metrics.values.get(m) >= thresholds.get(m))
}

pub fn classify_voxels(mut grid: VoxelGrid, thresholds: &ThresholdSet) -> Result<VoxelGrid> {
    for cell in grid.cells.values_mut() {
        cell.label = Some(if cell.is_empty() {
            CellLabel::Empty
        } else {
            let m = cell.metrics.as_ref().ok_or(Error::MissingMetrics(cell.index))?;
            if is_complex(m, thresholds) {
                CellLabel::Complex
            } else {
                CellLabel::NonComplex
            }
        });
    }
    Ok(grid)
}

/// Runs metrics, thresholds and classification in one go.
pub fn analyze(grid: VoxelGrid, cloud: &PointCloud) -> Result<(VoxelGrid, ThresholdSet)> {
    let mut grid = grid;
    annotate_metrics(&mut grid, cloud)?;
    let thresholds = compute_thresholds(&grid, &grid.config)?;
    let grid = classify_voxels(grid, &thresholds)?;
    Ok((grid, thresholds))
}

pub const METRICS_CSV_HEADER: &str =
    "i,j,k,n,d,sigma_s,normal_variation,lambda_linear,lambda_planar,H_s,kappa,label";

pub fn metrics_csv(grid: &VoxelGrid) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for cell in grid.cells.values() {
        let [i, j, k] = cell.index;
        let _ = write!(out, "{i},{j},{k},{}", cell.len());
        let v = cell.metrics.map(|m| m.values).unwrap_or_default();
        for m in Metric::ALL {
            let _ = write!(out, ",{}", v.get(m));
        }
        let label = cell.label.map(CellLabel::as_str).unwrap_or("unlabeled");
        let _ = writeln!(out, ",{label}");
    }
    out
}

/// Parses a metrics CSV back into per-cell rows keyed by index.
pub fn parse_metrics_csv(text: &str) -> Result<BTreeMap<[u32; 3], (usize, ComplexityMetrics, String)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == METRICS_CSV_HEADER => {}
        _ => return Err(Error::parse(1, "unexpected metrics CSV header")),
    }
    let mut rows = BTreeMap::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::parse(n + 1, "malformed metrics row");
        if f.len() != 12 {
            return Err(bad());
        }
        let idx = [
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse().map_err(|_| bad())?,
        ];
        let count = f[3].parse().map_err(|_| bad())?;
        let mut v = [0.0; 7];
        for (slot, s) in v.iter_mut().zip(&f[4..11]) {
            *slot = s.parse().map_err(|_| bad())?;
        }
        let values = ComplexityMetrics {
            density: v[0],
            roughness: v[1],
            normal_variation: v[2],
            linearity: v[3],
            planarity: v[4],
            entropy: v[5],
            curvature: v[6],
        };
        rows.insert(idx, (count, values, f[11].to_string()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel_grid::voxelize;

    fn cell_with(points: &[Vec3], resolution: u32) -> (VoxelCell, PointCloud) {
        let cloud = PointCloud::new(points.to_vec());
        let cell = VoxelCell {
            index: crate::voxel_grid::cell_of(points[0], resolution),
            point_indices: (0..points.len()).collect(),
            volume: (1.0 / resolution as f64).powi(3),
            metrics: None,
            label: None,
        };
        (cell, cloud)
    }

    #[test]
    fn density_values() {
        let pts = vec![[0.01; 3]; 8];
        let (cell, _) = cell_with(&pts, 16);
        assert_eq!(point_density(&cell).unwrap(), 32768.0);
        let (cell, _) = cell_with(&[[0.5; 3]], 1);
        assert_eq!(point_density(&cell).unwrap(), 1.0);
        let empty = VoxelCell {
            point_indices: vec![],
            ..cell
        };
        assert!(point_density(&empty).is_err());
    }

    #[test]
    fn roughness_coplanar_and_degenerate() {
        let pts = [
            [0.1, 0.1, 0.3],
            [0.4, 0.2, 0.3],
            [0.2, 0.7, 0.3],
            [0.9, 0.9, 0.3],
        ];
        let (cell, cloud) = cell_with(&pts, 1);
        let r = surface_roughness(&cell, &cloud);
        assert!(!r.degenerate && r.value <= 1e-9);
        let (cell, cloud) = cell_with(&pts[..2], 1);
        assert_eq!(
            surface_roughness(&cell, &cloud),
            Roughness {
                value: 0.0,
                degenerate: true
            }
        );
        let line = [[0.1, 0.5, 0.5], [0.2, 0.5, 0.5], [0.7, 0.5, 0.5]];
        let (cell, cloud) = cell_with(&line, 1);
        assert!(surface_roughness(&cell, &cloud).degenerate);
    }

    #[test]
    fn roughness_symmetric_offsets() {
        // plane z=0.5 samples plus two points at ±h: TLS plane stays z=0.5
        let h = 0.1;
        let mut pts = vec![];
        for i in 0..4 {
            for j in 0..4 {
                pts.push([0.2 + 0.2 * i as f64, 0.2 + 0.2 * j as f64, 0.5]);
            }
        }
        pts.push([0.5, 0.5, 0.5 + h]);
        pts.push([0.5, 0.5, 0.5 - h]);
        let (cell, cloud) = cell_with(&pts, 1);
        let expected = (2.0 * h * h / pts.len() as f64).sqrt();
        let r = surface_roughness(&cell, &cloud);
        assert!((r.value - expected).abs() < 1e-12);
    }

    #[test]
    fn normal_variation_cases() {
        let pts = vec![[0.2; 3], [0.3; 3], [0.4; 3], [0.5; 3]];
        let mut cloud = PointCloud::new(pts.clone());
        let (cell, _) = cell_with(&pts, 1);
        assert!(matches!(
            normal_variation(&cell, &cloud),
            Err(Error::MissingNormals)
        ));
        cloud.normals = Some(vec![[0.0, 0.0, 1.0]; 4]);
        assert_eq!(normal_variation(&cell, &cloud).unwrap(), 0.0);
        cloud.normals = Some(vec![
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ]);
        assert_eq!(normal_variation(&cell, &cloud).unwrap(), 1.0);
    }

    #[test]
    fn pca_collinear_and_disc() {
        let line: Vec<Vec3> = (0..10).map(|i| [0.05 + 0.09 * i as f64, 0.0, 0.0]).collect();
        let (cell, cloud) = cell_with(&line, 1);
        let f = pca_features(&cell, &cloud);
        assert!((f.linearity - 1.0).abs() < 1e-9);
        assert!(f.planarity.abs() < 1e-9 && f.curvature.abs() < 1e-9);

        // symmetric ring: λ1 = λ2, λ3 = 0
        let disc: Vec<Vec3> = (0..12)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 6.0;
                [0.5 + 0.3 * t.cos(), 0.5 + 0.3 * t.sin(), 0.5]
            })
            .collect();
        let (cell, cloud) = cell_with(&disc, 1);
        let f = pca_features(&cell, &cloud);
        assert!(f.linearity.abs() < 1e-9 && (f.planarity - 1.0).abs() < 1e-9);
        assert!(f.curvature.abs() < 1e-9);

        let (cell, cloud) = cell_with(&[[0.3; 3]; 5], 1);
        assert!(pca_features(&cell, &cloud).degenerate);
    }

    #[test]
    fn entropy_extremes() {
        let (cell, cloud) = cell_with(&[[0.1; 3], [0.2; 3], [0.3; 3]], 1);
        assert_eq!(spatial_entropy(&cell, &cloud, 1).unwrap(), 0.0);
        let mut pts = vec![];
        for o in 0..8 {
            for rep in 0..5 {
                let off = 0.05 * rep as f64;
                pts.push([
                    if o & 4 != 0 { 0.6 + off } else { 0.1 + off },
                    if o & 2 != 0 { 0.6 + off } else { 0.1 + off },
                    if o & 1 != 0 { 0.6 + off } else { 0.1 + off },
                ]);
            }
        }
        let (cell, cloud) = cell_with(&pts, 1);
        let h = spatial_entropy(&cell, &cloud, 1).unwrap();
        assert!((h - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn percentile_interpolation() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 75.0), 3.25);
        assert_eq!(percentile(&[5.0; 7], 75.0), 5.0);
        assert_eq!(percentile(&[2.0], 30.0), 2.0);
    }

    fn classified_fixture() -> (VoxelGrid, PointCloud) {
        let mut pts = vec![];
        for i in 0..40 {
            let t = i as f64 / 40.0;
            pts.push([t, (t * 7.0).sin() * 0.4 + 0.5, (t * 3.0).cos() * 0.4 + 0.5]);
            pts.push([t, 0.5, t * t]);
        }
        let normals = pts.iter().map(|_| [0.0, 0.0, 1.0]).collect();
        let cloud = PointCloud::with_normals(pts, normals).unwrap();
        let grid = voxelize(&cloud, &GridConfig::new(4, 75.0).unwrap()).unwrap();
        (grid, cloud)
    }

    #[test]
    fn threshold_overrides_and_extremes() {
        let (mut grid, cloud) = classified_fixture();
        annotate_metrics(&mut grid, &cloud).unwrap();
        let mut config = grid.config.clone();
        for m in Metric::ALL {
            config.fixed_thresholds.insert(m, f64::INFINITY);
        }
        let t = compute_thresholds(&grid, &config).unwrap();
        assert!(t.iter().all(|(_, v)| v == f64::INFINITY));
        let g = classify_voxels(grid.clone(), &t).unwrap();
        assert!(g
            .cells
            .values()
            .all(|c| c.label == Some(CellLabel::NonComplex)));
        let g = classify_voxels(grid.clone(), &ThresholdSet::uniform(f64::NEG_INFINITY)).unwrap();
        assert!(g.cells.values().all(|c| c.label == Some(CellLabel::Complex)));

        config.fixed_thresholds.clear();
        config.fixed_thresholds.insert(Metric::Entropy, 0.25);
        let t = compute_thresholds(&grid, &config).unwrap();
        assert_eq!(t.get(Metric::Entropy), 0.25);
        assert!(t.population_size >= 1);
    }

    #[test]
    fn quantifier_rule() {
        let below = CellMetrics {
            values: ComplexityMetrics::default(),
            degenerate: false,
        };
        let t = ThresholdSet::uniform(0.5);
        assert!(!is_complex(&below, &t));
        let mut one = below;
        one.values.curvature = 0.6;
        assert!(is_complex(&one, &t));
        let all = CellMetrics {
            values: ComplexityMetrics {
                density: 1.0,
                roughness: 1.0,
                normal_variation: 1.0,
                linearity: 1.0,
                planarity: 1.0,
                entropy: 1.0,
                curvature: 1.0,
            },
            degenerate: false,
        };
        assert!(is_complex(&all, &t));
        // degenerate cells only look at density
        let mut deg = all;
        deg.degenerate = true;
        deg.values.density = 0.1;
        assert!(!is_complex(&deg, &t));
    }

    #[test]
    fn classify_requires_metrics() {
        let (grid, _) = classified_fixture();
        assert!(matches!(
            classify_voxels(grid, &ThresholdSet::uniform(0.0)),
            Err(Error::MissingMetrics(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let (grid, cloud) = classified_fixture();
        let (grid, _) = analyze(grid, &cloud).unwrap();
        let csv = metrics_csv(&grid);
        let rows = parse_metrics_csv(&csv).unwrap();
        assert_eq!(rows.len(), grid.cells.len());
        for (idx, (n, v, label)) in rows {
            let cell = &grid.cells[&idx];
            assert_eq!(n, cell.len());
            assert_eq!(v, cell.metrics.unwrap().values);
            assert_eq!(label, cell.label.unwrap().as_str());
        }
    }
}
