//! Point cloud container, unit-cube normalization, file I/O and normal estimation.

mod io;
mod normals;

pub use io::{load_point_cloud, save_point_cloud, write_ply, write_xyz, CloudFormat};
pub use normals::{estimate_normals, DEFAULT_NORMAL_NEIGHBORS};

use crate::error::{Error, Result};
use crate::geometry::{norm, Aabb, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Unit normals, one per point, when available.
    pub normals: Option<Vec<Vec3>>,
    /// Bounds of the raw input in its original units.
    pub source_bounds: Aabb,
}

impl PointCloud {
    /// Cloud without normals; `source_bounds` is the tight box of `points`
    /// (the unit cube for an empty cloud).
    pub fn new(points: Vec<Vec3>) -> Self {
        let source_bounds = Aabb::from_points(&points).unwrap_or_else(Aabb::unit);
        PointCloud {
            points,
            normals: None,
            source_bounds,
        }
    }

    pub fn with_normals(points: Vec<Vec3>, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != points.len() {
            return Err(Error::InvalidInput(format!(
                "{} normals for {} points",
                normals.len(),
                points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if (norm(*n) - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidInput(format!(
                    "normal {i} has length {}, expected unit length",
                    norm(*n)
                )));
            }
        }
        let mut cloud = PointCloud::new(points);
        cloud.normals = Some(normals);
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }
}

/// Transform applied by [`normalize_to_unit_cube`]: `p' = (p - offset) / extent`,
/// or a recentering onto the cube center when the cloud is a single location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub offset: Vec3,
    pub extent: f64,
    pub degenerate: bool,
}

impl Normalization {
    /// The transform [`normalize_to_unit_cube`] would apply to `points`.
    pub fn fit(points: &[Vec3]) -> Result<Self> {
        let bounds = Aabb::from_points(points).ok_or(Error::EmptyCloud)?;
        let extent = bounds.longest_extent();
        if extent > 0.0 && extent.is_finite() {
            Ok(Normalization {
                offset: bounds.min,
                extent,
                degenerate: false,
            })
        } else {
            Ok(Normalization {
                offset: bounds.min,
                extent: 1.0,
                degenerate: true,
            })
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        if self.degenerate {
            return [
                p[0] - self.offset[0] + 0.5,
                p[1] - self.offset[1] + 0.5,
                p[2] - self.offset[2] + 0.5,
            ];
        }
        // division keeps the longest axis's max exactly at 1.0
        [
            ((p[0] - self.offset[0]) / self.extent).clamp(0.0, 1.0),
            ((p[1] - self.offset[1]) / self.extent).clamp(0.0, 1.0),
            ((p[2] - self.offset[2]) / self.extent).clamp(0.0, 1.0),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct Normalized {
    pub cloud: PointCloud,
    pub transform: Normalization,
}

/// Isotropically scales and translates the cloud so its bounding box has its
/// min corner at the origin and its longest axis spanning exactly `[0, 1]`.
/// Normals and `source_bounds` are carried over unchanged.
pub fn normalize_to_unit_cube(cloud: &PointCloud) -> Result<Normalized> {
    let transform = Normalization::fit(&cloud.points)?;
    let points = cloud.points.iter().map(|p| transform.apply(*p)).collect();
    Ok(Normalized {
        cloud: PointCloud {
            points,
            normals: cloud.normals.clone(),
            source_bounds: cloud.source_bounds,
        },
        transform,
    })
}
