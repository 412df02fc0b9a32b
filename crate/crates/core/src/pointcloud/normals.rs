use rayon::prelude::*;

use super::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::{covariance, dot, scale, sub, sym_eigen};
use crate::spatial::SpatialHash;

pub const DEFAULT_NORMAL_NEIGHBORS: usize = 10;

/// Per-point normals from the covariance of the `k` nearest neighbors (the
/// point itself included). Each normal is the smallest-eigenvalue eigenvector,
/// flipped to point away from its neighborhood centroid.
pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidConfig(format!(
            "normal estimation needs k >= 3, got {k}"
        )));
    }
    if cloud.len() < k {
        return Err(Error::TooFewPoints {
            have: cloud.len(),
            k,
        });
    }
    let hash = SpatialHash::new(&cloud.points);
    let normals = cloud
        .points
        .par_iter()
        .map(|&p| {
            let neighbors = hash.knn(p, k);
            let pts = neighbors.iter().map(|&(i, _)| cloud.points[i]);
            let (centroid, cov) = covariance(pts).expect("k >= 3 neighbors");
            let mut n = sym_eigen(&cov).vectors[2];
            if dot(n, sub(p, centroid)) < 0.0 {
                n = scale(n, -1.0);
            }
            n
        })
        .collect();
    Ok(PointCloud {
        points: cloud.points.clone(),
        normals: Some(normals),
        source_bounds: cloud.source_bounds,
    })
}
