//! Seeded synthetic point clouds with analytic normals.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};
use crate::geometry::{add, cross, norm, scale, sub, Vec3};
use crate::pointcloud::{write_ply, PointCloud};

pub const DEFAULT_FIXTURE_POINTS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    /// Unit square at z = 0.5.
    Plane,
    /// Sphere of radius 0.45 centered in the unit cube.
    Sphere,
    /// Surface of an axis-aligned cube, sharp at its twelve edges.
    CubeEdges,
    /// Thin jittered segment through the cube.
    Line,
    /// Plane, small sphere and line side by side.
    Mixed,
}

impl Fixture {
    pub const ALL: [Fixture; 5] = [
        Fixture::Plane,
        Fixture::Sphere,
        Fixture::CubeEdges,
        Fixture::Line,
        Fixture::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Fixture::Plane => "plane",
            Fixture::Sphere => "sphere",
            Fixture::CubeEdges => "cube_edges",
            Fixture::Line => "line",
            Fixture::Mixed => "mixed",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.ply", self.name())
    }

    pub fn generate(self, points: usize, seed: u64) -> PointCloud {
        let salt = Fixture::ALL.iter().position(|f| *f == self).unwrap() as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(salt));
        let mut pts = Vec::with_capacity(points);
        let mut nrm = Vec::with_capacity(points);
        match self {
            Fixture::Plane => plane(&mut rng, points, 0.5, &mut pts, &mut nrm),
            Fixture::Sphere => sphere(&mut rng, points, [0.5; 3], 0.45, &mut pts, &mut nrm),
            Fixture::CubeEdges => cube(&mut rng, points, 0.2, 0.8, &mut pts, &mut nrm),
            Fixture::Line => line(
                &mut rng,
                points,
                [0.1, 0.2, 0.3],
                [0.9, 0.7, 0.6],
                &mut pts,
                &mut nrm,
            ),
            Fixture::Mixed => {
                let n_plane = points / 2;
                let n_sphere = points * 7 / 20;
                let n_line = points - n_plane - n_sphere;
                plane(&mut rng, n_plane, 0.2, &mut pts, &mut nrm);
                sphere(&mut rng, n_sphere, [0.5, 0.5, 0.55], 0.2, &mut pts, &mut nrm);
                line(
                    &mut rng,
                    n_line,
                    [0.05, 0.1, 0.9],
                    [0.95, 0.85, 0.9],
                    &mut pts,
                    &mut nrm,
                );
            }
        }
        PointCloud::with_normals(pts, nrm).expect("fixture normals are unit length")
    }
}

impl fmt::Display for Fixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn unit(v: Vec3) -> Vec3 {
    scale(v, 1.0 / norm(v))
}

fn plane(rng: &mut ChaCha8Rng, n: usize, z: f64, pts: &mut Vec<Vec3>, nrm: &mut Vec<Vec3>) {
    for _ in 0..n {
        pts.push([rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0), z]);
        nrm.push([0.0, 0.0, 1.0]);
    }
}

fn sphere(
    rng: &mut ChaCha8Rng,
    n: usize,
    center: Vec3,
    radius: f64,
    pts: &mut Vec<Vec3>,
    nrm: &mut Vec<Vec3>,
) {
    for _ in 0..n {
        let d: [f64; 3] = UnitSphere.sample(rng);
        let d = unit(d);
        pts.push(add(center, scale(d, radius)));
        nrm.push(d);
    }
}

fn cube(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, pts: &mut Vec<Vec3>, nrm: &mut Vec<Vec3>) {
    for _ in 0..n {
        let face = rng.random_range(0..6usize);
        let axis = face / 2;
        let high = face % 2 == 1;
        let mut p = [0.0; 3];
        for (a, v) in p.iter_mut().enumerate() {
            *v = if a == axis {
                if high {
                    hi
                } else {
                    lo
                }
            } else {
                rng.random_range(lo..=hi)
            };
        }
        let mut normal = [0.0; 3];
        normal[axis] = if high { 1.0 } else { -1.0 };
        pts.push(p);
        nrm.push(normal);
    }
}

fn line(rng: &mut ChaCha8Rng, n: usize, a: Vec3, b: Vec3, pts: &mut Vec<Vec3>, nrm: &mut Vec<Vec3>) {
    const JITTER: f64 = 0.003;
    let dir = unit(sub(b, a));
    let helper = if dir[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = unit(cross(dir, helper));
    let v = cross(dir, u);
    for _ in 0..n {
        let t: f64 = rng.random_range(0.0..=1.0);
        let du = rng.random_range(-JITTER..=JITTER);
        let dv = rng.random_range(-JITTER..=JITTER);
        let p = add(add(a, scale(sub(b, a), t)), add(scale(u, du), scale(v, dv)));
        pts.push(p);
        nrm.push(u);
    }
}

/// Writes every fixture as ascii PLY into `dir` (created if missing).
pub fn write_fixtures(dir: &Path, points: usize, seed: u64) -> Result<Vec<PathBuf>> {
    if points == 0 {
        return Err(Error::InvalidConfig("fixture point count must be positive".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Fixture::ALL
        .iter()
        .map(|f| {
            let path = dir.join(f.file_name());
            fs::write(&path, write_ply(&f.generate(points, seed))).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
