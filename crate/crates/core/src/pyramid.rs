//! Iterative 2×2×2 merging of non-complex cells into a multi-level voxel pyramid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::pointcloud::PointCloud;
use crate::voxel_grid::{CellIndex, CellLabel, OccupancyGrid, VoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PyramidNode {
    /// 0 is the base grid; a level-`l` node spans `2^l` base cells per axis.
    pub level: u32,
    /// Lower corner in base-grid cell units; a multiple of `2^level`.
    pub anchor: CellIndex,
    pub label: CellLabel,
    pub point_count: usize,
}

impl PyramidNode {
    pub fn size(&self) -> u32 {
        1 << self.level
    }

    pub fn is_aligned(&self) -> bool {
        let mask = self.size() - 1;
        self.anchor.iter().all(|a| a & mask == 0)
    }

    /// Geometric center in normalized coordinates.
    pub fn center(&self, base_resolution: u32) -> Vec3 {
        let half = self.size() as f64 / 2.0;
        let r = base_resolution as f64;
        self.anchor.map(|a| (a as f64 + half) / r)
    }

    /// Base-grid cells covered by this node.
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let s = self.size();
        let [x, y, z] = self.anchor;
        (0..s).flat_map(move |i| (0..s).flat_map(move |j| (0..s).map(move |k| [x + i, y + j, z + k])))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelPyramid {
    /// Sorted by anchor.
    pub leaves: Vec<PyramidNode>,
    pub base_resolution: u32,
    pub rounds_executed: u32,
}

/// One level-0 node per base cell, labeled from the classified grid.
pub fn base_leaves(grid: &VoxelGrid) -> Result<Vec<PyramidNode>> {
    let r = grid.resolution();
    let mut leaves = Vec::with_capacity((r as usize).pow(3));
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                let anchor = [i, j, k];
                let node = match grid.cells.get(&anchor) {
                    Some(cell) if !cell.is_empty() => PyramidNode {
                        level: 0,
                        anchor,
                        label: cell.label.ok_or(Error::Unlabeled(anchor))?,
                        point_count: cell.len(),
                    },
                    _ => PyramidNode {
                        level: 0,
                        anchor,
                        label: CellLabel::Empty,
                        point_count: 0,
                    },
                };
                leaves.push(node);
            }
        }
    }
    Ok(leaves)
}

/// Replaces every aligned block of eight level-`level` siblings that are all
/// non-complex or empty with their parent. Returns the new leaf set (sorted by
/// anchor) and the number of merges.
pub fn merge_round(leaves: Vec<PyramidNode>, level: u32) -> Result<(Vec<PyramidNode>, usize)> {
    if let Some(bad) = leaves.iter().find(|n| !n.is_aligned()) {
        return Err(Error::Inconsistent(format!(
            "level-{} node at {:?} is not aligned",
            bad.level, bad.anchor
        )));
    }
    let parent_mask = !((2u32 << level) - 1);
    let mut blocks: BTreeMap<CellIndex, Vec<PyramidNode>> = BTreeMap::new();
    let mut out = Vec::with_capacity(leaves.len());
    for node in leaves {
        if node.level == level {
            blocks
                .entry(node.anchor.map(|a| a & parent_mask))
                .or_default()
                .push(node);
        } else {
            out.push(node);
        }
    }

    let mut merges = 0;
    for (anchor, children) in blocks {
        if children.len() == 8 && children.iter().all(|c| c.label.is_mergeable()) {
            let all_empty = children.iter().all(|c| c.label == CellLabel::Empty);
            out.push(PyramidNode {
                level: level + 1,
                anchor,
                label: if all_empty {
                    CellLabel::Empty
                } else {
                    CellLabel::NonComplex
                },
                point_count: children.iter().map(|c| c.point_count).sum(),
            });
            merges += 1;
        } else {
            out.extend(children);
        }
    }
    out.sort_by_key(|n| n.anchor);
    Ok((out, merges))
}

/// Merges level by level until a round makes no merge or the whole grid is a
/// single node.
pub fn build_pyramid(grid: &VoxelGrid) -> Result<VoxelPyramid> {
    let mut leaves = base_leaves(grid)?;
    let max_level = grid.config.levels();
    let mut rounds = 0;
    for level in 0..max_level {
        let (next, merges) = merge_round(leaves, level)?;
        leaves = next;
        rounds += 1;
        if merges == 0 {
            break;
        }
    }
    Ok(VoxelPyramid {
        leaves,
        base_resolution: grid.resolution(),
        rounds_executed: rounds,
    })
}

impl VoxelPyramid {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn point_count(&self) -> usize {
        self.leaves.iter().map(|l| l.point_count).sum()
    }

    pub fn max_level(&self) -> u32 {
        self.leaves.iter().map(|l| l.level).max().unwrap_or(0)
    }

    /// Count of leaves per level, index = level.
    pub fn level_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.max_level() as usize + 1];
        for l in &self.leaves {
            h[l.level as usize] += 1;
        }
        h
    }

    /// Base cells covered by a non-empty leaf, i.e. the occupancy the pyramid
    /// predicts at base resolution.
    pub fn occupancy(&self) -> OccupancyGrid {
        let mut occ = OccupancyGrid::new(self.base_resolution);
        for leaf in self.leaves.iter().filter(|l| l.point_count > 0) {
            for c in leaf.cells() {
                occ.set(c, true);
            }
        }
        occ
    }

    /// Text form: `base_resolution R`, `rounds N`, then
    /// `level ai aj ak label point_count` per leaf.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "base_resolution {}\nrounds {}\n",
            self.base_resolution, self.rounds_executed
        );
        for l in &self.leaves {
            let [i, j, k] = l.anchor;
            let _ = writeln!(out, "{} {i} {j} {k} {} {}", l.level, l.label, l.point_count);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<u32> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(1, format!("missing '{key}' header")))?;
            line.trim()
                .strip_prefix(key)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::parse(n + 1, format!("expected '{key} <n>'")))
        };
        let base_resolution = header("base_resolution")?;
        let rounds_executed = header("rounds")?;
        let mut leaves = Vec::new();
        for (n, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse(n + 1, format!("malformed leaf line '{line}'"));
            if t.len() != 6 {
                return Err(bad());
            }
            leaves.push(PyramidNode {
                level: t[0].parse().map_err(|_| bad())?,
                anchor: [
                    t[1].parse().map_err(|_| bad())?,
                    t[2].parse().map_err(|_| bad())?,
                    t[3].parse().map_err(|_| bad())?,
                ],
                label: CellLabel::parse(t[4]).ok_or_else(bad)?,
                point_count: t[5].parse().map_err(|_| bad())?,
            });
        }
        Ok(VoxelPyramid {
            leaves,
            base_resolution,
            rounds_executed,
        })
    }
}

/// One point per non-empty leaf, at the leaf's geometric center.
pub fn pyramid_to_points(pyr: &VoxelPyramid) -> PointCloud {
    let points = pyr
        .leaves
        .iter()
        .filter(|l| l.point_count > 0)
        .map(|l| l.center(pyr.base_resolution))
        .collect();
    PointCloud::new(points)
}
