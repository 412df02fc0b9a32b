//! Fixed-resolution sparse voxelization of a normalized cloud.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::hash::{Hash, Hasher};

use crate::complexity::{CellMetrics, Metric};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pointcloud::PointCloud;

pub const DEFAULT_RESOLUTION: u32 = 16;
pub const DEFAULT_PERCENTILE: f64 = 75.0;
/// Upper bound on cells per axis; the pyramid materializes every level-0 cell.
pub const MAX_RESOLUTION: u32 = 128;

pub type CellIndex = [u32; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub resolution: u32,
    pub percentile: f64,
    /// Per-metric thresholds that replace the percentile-derived value.
    pub fixed_thresholds: BTreeMap<Metric, f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            resolution: DEFAULT_RESOLUTION,
            percentile: DEFAULT_PERCENTILE,
            fixed_thresholds: BTreeMap::new(),
        }
    }
}

impl GridConfig {
    pub fn new(resolution: u32, percentile: f64) -> Result<Self> {
        let config = GridConfig {
            resolution,
            percentile,
            fixed_thresholds: BTreeMap::new(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.resolution;
        if r < 2 || !r.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "resolution must be a power of two >= 2, got {r}"
            )));
        }
        if r > MAX_RESOLUTION {
            return Err(Error::InvalidConfig(format!(
                "resolution {r} exceeds the supported maximum {MAX_RESOLUTION}"
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return Err(Error::InvalidConfig(format!(
                "percentile must lie strictly between 0 and 100, got {}",
                self.percentile
            )));
        }
        if let Some((m, v)) = self.fixed_thresholds.iter().find(|(_, v)| v.is_nan()) {
            return Err(Error::InvalidConfig(format!("threshold for {m} is {v}")));
        }
        Ok(())
    }

    /// Number of merge levels above the base grid.
    pub fn levels(&self) -> u32 {
        self.resolution.trailing_zeros()
    }

    pub fn cell_edge(&self) -> f64 {
        1.0 / self.resolution as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellLabel {
    Complex,
    NonComplex,
    Empty,
}

impl CellLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CellLabel::Complex => "complex",
            CellLabel::NonComplex => "non_complex",
            CellLabel::Empty => "empty",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "complex" => Some(CellLabel::Complex),
            "non_complex" => Some(CellLabel::NonComplex),
            "empty" => Some(CellLabel::Empty),
            _ => None,
        }
    }

    /// Whether a cell with this label may be absorbed into a coarser voxel.
    pub fn is_mergeable(self) -> bool {
        !matches!(self, CellLabel::Complex)
    }
}

impl fmt::Display for CellLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCell {
    pub index: CellIndex,
    pub point_indices: Vec<usize>,
    /// `(1/R)^3`
    pub volume: f64,
    pub metrics: Option<CellMetrics>,
    /// `None` until classification.
    pub label: Option<CellLabel>,
}

impl VoxelCell {
    pub fn is_empty(&self) -> bool {
        self.point_indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.point_indices.len()
    }

    pub fn points<'a>(&'a self, cloud: &'a PointCloud) -> impl Iterator<Item = Vec3> + Clone + 'a {
        self.point_indices.iter().map(move |&i| cloud.points[i])
    }

    /// Lower corner of the cell in normalized coordinates.
    pub fn origin(&self, resolution: u32) -> Vec3 {
        let e = 1.0 / resolution as f64;
        [
            self.index[0] as f64 * e,
            self.index[1] as f64 * e,
            self.index[2] as f64 * e,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub config: GridConfig,
    /// Occupied (or explicitly materialized) cells; an absent index is empty.
    pub cells: BTreeMap<CellIndex, VoxelCell>,
    /// Fingerprint of the source cloud's coordinates.
    pub cloud_ref: u64,
}

impl VoxelGrid {
    pub fn resolution(&self) -> u32 {
        self.config.resolution
    }

    pub fn point_count(&self) -> usize {
        self.cells.values().map(VoxelCell::len).sum()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.values().filter(|c| !c.is_empty()).count()
    }

    /// Label of the cell at `index`; absent cells are empty.
    pub fn label(&self, index: CellIndex) -> Option<CellLabel> {
        match self.cells.get(&index) {
            Some(c) if c.is_empty() => Some(CellLabel::Empty),
            Some(c) => c.label,
            None => Some(CellLabel::Empty),
        }
    }

    /// Line-oriented text: `resolution R`, then `i j k n_points label` per cell.
    pub fn to_text(&self) -> String {
        let mut out = format!("resolution {}\n", self.resolution());
        for cell in self.cells.values() {
            let label = match (cell.is_empty(), cell.label) {
                (true, _) => "empty",
                (false, Some(l)) => l.as_str(),
                (false, None) => "unlabeled",
            };
            let [i, j, k] = cell.index;
            let _ = writeln!(out, "{i} {j} {k} {} {label}", cell.len());
        }
        out
    }
}

/// Parsed form of [`VoxelGrid::to_text`]; point membership is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSummary {
    pub resolution: u32,
    pub cells: BTreeMap<CellIndex, (usize, Option<CellLabel>)>,
}

impl GridSummary {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (n, header) = lines.next().ok_or_else(|| Error::parse(1, "empty grid file"))?;
        let resolution = header
            .trim()
            .strip_prefix("resolution")
            .and_then(|r| r.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::parse(n + 1, "expected 'resolution R' header"))?;
        if resolution == 0 || !resolution.is_power_of_two() {
            return Err(Error::parse(n + 1, "resolution must be a power of two"));
        }
        let mut cells = BTreeMap::new();
        for (n, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse(n + 1, format!("malformed cell line '{line}'"));
            if t.len() != 5 {
                return Err(bad());
            }
            let mut idx = [0u32; 3];
            for a in 0..3 {
                idx[a] = t[a].parse().map_err(|_| bad())?;
                if idx[a] >= resolution {
                    return Err(Error::parse(n + 1, "cell index outside the grid"));
                }
            }
            let count: usize = t[3].parse().map_err(|_| bad())?;
            let label = match t[4] {
                "unlabeled" => None,
                s => Some(CellLabel::parse(s).ok_or_else(bad)?),
            };
            cells.insert(idx, (count, label));
        }
        Ok(GridSummary { resolution, cells })
    }

    pub fn occupancy(&self) -> OccupancyGrid {
        let mut occ = OccupancyGrid::new(self.resolution);
        for (idx, (count, _)) in &self.cells {
            if *count > 0 {
                occ.set(*idx, true);
            }
        }
        occ
    }
}

/// Cell index of a normalized point: `floor(p * R)` with 1.0 clamped to `R - 1`.
#[inline]
pub fn cell_of(p: Vec3, resolution: u32) -> CellIndex {
    let r = resolution as f64;
    let max = resolution - 1;
    [
        ((p[0] * r) as u32).min(max),
        ((p[1] * r) as u32).min(max),
        ((p[2] * r) as u32).min(max),
    ]
}

pub fn voxelize(cloud: &PointCloud, config: &GridConfig) -> Result<VoxelGrid> {
    config.validate()?;
    let r = config.resolution;
    let volume = config.cell_edge().powi(3);
    let mut cells: BTreeMap<CellIndex, VoxelCell> = BTreeMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if !p.iter().all(|v| (0.0..=1.0).contains(v)) {
            return Err(Error::NotNormalized {
                index: i,
                point: *p,
            });
        }
        let index = cell_of(*p, r);
        cells
            .entry(index)
            .or_insert_with(|| VoxelCell {
                index,
                point_indices: Vec::new(),
                volume,
                metrics: None,
                label: None,
            })
            .point_indices
            .push(i);
    }
    Ok(VoxelGrid {
        config: config.clone(),
        cells,
        cloud_ref: fingerprint(cloud),
    })
}

fn fingerprint(cloud: &PointCloud) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    cloud.points.len().hash(&mut h);
    for p in &cloud.points {
        for v in p {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Dense boolean occupancy over an `R^3` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    resolution: u32,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(resolution: u32) -> Self {
        let n = (resolution as usize).pow(3);
        OccupancyGrid {
            resolution,
            cells: vec![false; n],
        }
    }

    /// Occupancy of the cells containing `points`; points outside `[0,1]^3` are
    /// clamped onto the boundary cells.
    pub fn from_points(points: &[Vec3], resolution: u32) -> Self {
        let mut occ = OccupancyGrid::new(resolution);
        for p in points {
            let q = p.map(|v| v.clamp(0.0, 1.0));
            occ.set(cell_of(q, resolution), true);
        }
        occ
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    fn offset(&self, [i, j, k]: CellIndex) -> usize {
        let r = self.resolution as usize;
        (i as usize * r + j as usize) * r + k as usize
    }

    pub fn get(&self, index: CellIndex) -> bool {
        self.cells[self.offset(index)]
    }

    pub fn set(&mut self, index: CellIndex, value: bool) {
        let o = self.offset(index);
        self.cells[o] = value;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

pub fn occupancy_grid(grid: &VoxelGrid) -> OccupancyGrid {
    let mut occ = OccupancyGrid::new(grid.resolution());
    for cell in grid.cells.values().filter(|c| !c.is_empty()) {
        occ.set(cell.index, true);
    }
    occ
}
