//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line to
//! standard error (visible with `--nocapture`) and fails on `FAIL`.

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use adavox::complexity::{analyze, cell_metrics, Metric};
use adavox::evaluation::{
    chamfer_distance, f1_point_cloud, geometric_iou, timed_pipeline, voxel_classification_metrics,
    PipelineMode, ShapeSource,
};
use adavox::fixtures::{Fixture, DEFAULT_FIXTURE_POINTS};
use adavox::geometry::Vec3;
use adavox::pointcloud::{normalize_to_unit_cube, PointCloud};
use adavox::pyramid::{build_pyramid, pyramid_to_points, VoxelPyramid};
use adavox::tap_lme::{
    attention_task, attention_weights, backward, forward, max_pool, softmax, tap_pool, train_toy,
    PoolingParams, TokenMatrix, Variant, DEFAULT_STEP_SIZE, DEFAULT_TASK_BETA,
};
use adavox::voxel_grid::{voxelize, CellLabel, GridConfig, OccupancyGrid};
use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn criterion(n: u32, name: &str, body: impl FnOnce() -> Check) {
    let outcome = panic::catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    let _ = writeln!(std::io::stderr(), "{tag} criterion {n}: {name} ({detail})");
    if let Err(d) = outcome {
        panic!("criterion {n} failed: {d}");
    }
}

fn fixture(f: Fixture) -> PointCloud {
    normalize_to_unit_cube(&f.generate(DEFAULT_FIXTURE_POINTS, 0)).unwrap().cloud
}

fn pipeline(cloud: &PointCloud, r: u32) -> (adavox::voxel_grid::VoxelGrid, VoxelPyramid) {
    let config = GridConfig::new(r, 75.0).unwrap();
    let (grid, _) = analyze(voxelize(cloud, &config).unwrap(), cloud).unwrap();
    let pyr = build_pyramid(&grid).unwrap();
    (grid, pyr)
}

// ---------------------------------------------------------------------------
// 1. metric oracle

struct OracleMetrics([f64; 7]);

/// Straight transcription of the metric definitions, with eigen-decomposition
/// from nalgebra.
fn metric_oracle(pts: &[Vec3], normals: &[Vec3], cell: [u32; 3], r: u32) -> OracleMetrics {
    let n = pts.len() as f64;
    let edge = 1.0 / r as f64;
    let density = n / (edge * edge * edge);

    let mut c = [0.0; 3];
    for p in pts {
        for a in 0..3 {
            c[a] += p[a] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in pts {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += (p[i] - c[i]) * (p[j] - c[j]) / n;
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let normal = eig.eigenvectors.column(order[2]);
    let roughness = (pts
        .iter()
        .map(|p| {
            let d: f64 = (0..3).map(|a| (p[a] - c[a]) * normal[a]).sum();
            d * d
        })
        .sum::<f64>()
        / n)
        .sqrt();

    let mut mean = [0.0; 3];
    for v in normals {
        for a in 0..3 {
            mean[a] += v[a] / n;
        }
    }
    let len = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
    let avg = mean.map(|m| m / len);
    let cos: f64 = normals
        .iter()
        .map(|v| v[0] * avg[0] + v[1] * avg[1] + v[2] * avg[2])
        .sum::<f64>()
        / n;

    let mut counts = [0usize; 8];
    for p in pts {
        let mut b = 0;
        for a in 0..3 {
            let mid = (cell[a] as f64 + 0.5) * edge;
            if p[a] >= mid {
                b |= 1 << a;
            }
        }
        counts[b] += 1;
    }
    let entropy = -counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            p * p.ln()
        })
        .sum::<f64>();

    OracleMetrics([
        density,
        roughness,
        1.0 - cos,
        (l[0] - l[1]) / l[0],
        (l[1] - l[2]) / l[0],
        entropy,
        l[2] / (l[0] + l[1] + l[2]),
    ])
}

fn random_cell_cloud(rng: &mut ChaCha8Rng) -> (PointCloud, [u32; 3], u32) {
    let r = 1u32 << rng.random_range(1..=5);
    let cell = [0; 3].map(|_| rng.random_range(0..r));
    let edge = 1.0 / r as f64;
    let n = rng.random_range(3..=200);
    // anisotropic spread: some cells are near-planar or near-linear
    let spread: [f64; 3] = [0; 3].map(|_| match rng.random_range(0..3) {
        0 => 1.0,
        1 => 0.2,
        _ => 0.02,
    });
    let axis: Vec3 = {
        let v = [0; 3].map(|_| rng.random_range(-1.0..1.0f64));
        let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-3);
        v.map(|x| x / l)
    };
    let mut pts = Vec::with_capacity(n);
    let mut nrm = Vec::with_capacity(n);
    for _ in 0..n {
        let p: Vec3 = [0, 1, 2].map(|a| {
            let u: f64 = rng.random_range(-0.5..0.5) * spread[a] + 0.5;
            (cell[a] as f64 + u.clamp(0.001, 0.999)) * edge
        });
        pts.push(p);
        let mut v = [0; 3].map(|_| rng.random_range(-0.6..0.6));
        for a in 0..3 {
            v[a] += axis[a];
        }
        let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        nrm.push(v.map(|x| x / l));
    }
    (PointCloud::with_normals(pts, nrm).unwrap(), cell, r)
}

#[test]
fn criterion_01_metric_oracle() {
    criterion(1, "metric-formula oracle equivalence", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for case in 0..200 {
            let (cloud, cell_idx, r) = random_cell_cloud(&mut rng);
            let config = GridConfig::new(r, 75.0).unwrap();
            let grid = voxelize(&cloud, &config).unwrap();
            ensure!(grid.cells.len() == 1, "case {case}: points spread over several cells");
            let cell = &grid.cells[&cell_idx];
            let got = cell_metrics(cell, &cloud, r).unwrap();
            ensure!(!got.degenerate, "case {case}: unexpectedly degenerate");
            let want = metric_oracle(&cloud.points, cloud.normals.as_ref().unwrap(), cell_idx, r);
            for (slot, m) in Metric::ALL.into_iter().enumerate() {
                let (a, b) = (got.values.get(m), want.0[slot]);
                let err = (a - b).abs() / b.abs().max(1.0);
                worst = worst.max(err);
                ensure!(err <= 1e-9, "case {case} ({} pts): {} = {a}, oracle {b}", cloud.len(), m.name());
            }
        }
        let t = start.elapsed();
        ensure!(t < Duration::from_secs(10), "took {t:?}");
        Ok(format!("200 cells, worst relative error {worst:.2e}, {t:.2?}"))
    });
}

// ---------------------------------------------------------------------------
// 2. analytic identities

fn single_cell(pts: Vec<Vec3>, normals: Vec<Vec3>, r: u32) -> adavox::complexity::CellMetrics {
    let cloud = PointCloud::with_normals(pts, normals).unwrap();
    let config = GridConfig::new(r, 75.0).unwrap();
    let grid = voxelize(&cloud, &config).unwrap();
    assert_eq!(grid.cells.len(), 1);
    let cell = grid.cells.values().next().unwrap();
    cell_metrics(cell, &cloud, r).unwrap()
}

#[test]
fn criterion_02_analytic_identities() {
    criterion(2, "analytic identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let up = [0.0, 0.0, 1.0];

        // collinear, slightly off one axis direction
        let dir = [0.6, 0.64, 0.48];
        let pts: Vec<Vec3> = (0..50)
            .map(|_| {
                let t: f64 = rng.random_range(0.05..0.95);
                [0.05 + 0.4 * t * dir[0], 0.05 + 0.4 * t * dir[1], 0.05 + 0.4 * t * dir[2]]
            })
            .collect();
        let m = single_cell(pts, vec![up; 50], 2);
        ensure!(
            (m.values.linearity - 1.0).abs() <= 1e-9,
            "collinear linearity {}",
            m.values.linearity
        );

        // coplanar, tilted plane inside one cell
        let pts: Vec<Vec3> = (0..80)
            .map(|_| {
                let (u, v): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
                [0.1 + 0.3 * u, 0.1 + 0.3 * v, 0.2 + 0.1 * u + 0.05 * v]
            })
            .collect();
        let m = single_cell(pts, vec![up; 80], 2);
        ensure!(m.values.roughness <= 1e-9, "coplanar roughness {}", m.values.roughness);
        ensure!(m.values.curvature <= 1e-9, "coplanar curvature {}", m.values.curvature);

        // balanced octants
        let mut pts = Vec::new();
        for b in 0..8 {
            for _ in 0..25 {
                pts.push([0, 1, 2].map(|a| {
                    let half = if b >> a & 1 == 1 { 0.25 } else { 0.0 };
                    half + rng.random_range(0.005..0.245)
                }));
            }
        }
        let m = single_cell(pts, vec![up; 200], 2);
        let ln8 = 8f64.ln();
        ensure!((m.values.entropy - ln8).abs() <= 1e-12, "balanced entropy {}", m.values.entropy);

        // aligned normals
        let n = [0.0, 0.6, 0.8];
        let pts: Vec<Vec3> = (0..40).map(|_| [0; 3].map(|_| rng.random_range(0.0..0.5))).collect();
        let m = single_cell(pts, vec![n; 40], 2);
        ensure!(m.values.normal_variation <= 1e-9, "aligned variation {}", m.values.normal_variation);

        Ok("linearity, roughness, curvature, entropy, normal variation".into())
    });
}

// ---------------------------------------------------------------------------
// 3. pyramid invariants

fn check_pyramid(grid: &adavox::voxel_grid::VoxelGrid, pyr: &VoxelPyramid) -> Result<(), String> {
    let r = grid.resolution();
    let levels = r.trailing_zeros();
    // tiling: volumes add up and no base cell is covered twice
    let volume: u64 = pyr.leaves.iter().map(|l| 8u64.pow(l.level)).sum();
    ensure!(volume == (r as u64).pow(3), "leaf volume {volume} != {}", (r as u64).pow(3));
    let mut covered = HashSet::new();
    for leaf in &pyr.leaves {
        ensure!(leaf.is_aligned(), "unaligned leaf {leaf:?}");
        for c in leaf.cells() {
            ensure!(covered.insert(c), "cell {c:?} covered twice");
        }
    }
    // point conservation, globally and per leaf
    ensure!(pyr.point_count() == grid.point_count(), "point count changed");
    for leaf in &pyr.leaves {
        let inside: usize = leaf.cells().filter_map(|c| grid.cells.get(&c)).map(|c| c.len()).sum();
        ensure!(inside == leaf.point_count, "leaf {leaf:?} holds {inside} points");
    }
    // complex cells stay level-0 leaves, and nothing else is complex
    let complex: HashSet<[u32; 3]> = grid
        .cells
        .values()
        .filter(|c| c.label == Some(CellLabel::Complex))
        .map(|c| c.index)
        .collect();
    let complex_leaves: HashSet<[u32; 3]> = pyr
        .leaves
        .iter()
        .filter(|l| l.label == CellLabel::Complex)
        .map(|l| {
            assert_eq!(l.level, 0);
            l.anchor
        })
        .collect();
    ensure!(complex == complex_leaves, "complex coverage changed");
    // brute-force scan for a remaining mergeable 2x2x2 block
    let by_key: BTreeMap<(u32, [u32; 3]), CellLabel> =
        pyr.leaves.iter().map(|l| ((l.level, l.anchor), l.label)).collect();
    for level in 0..levels {
        let step = 1u32 << level;
        let parent = step * 2;
        for x in (0..r).step_by(parent as usize) {
            for y in (0..r).step_by(parent as usize) {
                for z in (0..r).step_by(parent as usize) {
                    let mut all = true;
                    for d in 0..8u32 {
                        let a = [x + (d & 1) * step, y + (d >> 1 & 1) * step, z + (d >> 2 & 1) * step];
                        match by_key.get(&(level, a)) {
                            Some(l) if *l != CellLabel::Complex => {}
                            _ => {
                                all = false;
                                break;
                            }
                        }
                    }
                    ensure!(!all, "mergeable block at level {level}, anchor {:?}", [x, y, z]);
                }
            }
        }
    }
    Ok(())
}

#[test]
fn criterion_03_pyramid_invariants() {
    criterion(3, "pyramid invariants", || {
        let start = Instant::now();
        let mut leaves = Vec::new();
        for f in Fixture::ALL {
            let cloud = fixture(f);
            for r in [16, 32] {
                let (grid, pyr) = pipeline(&cloud, r);
                check_pyramid(&grid, &pyr).map_err(|e| format!("{f} R={r}: {e}"))?;
                leaves.push(format!("{f}/{r}:{}", pyr.leaf_count()));
            }
        }
        let t = start.elapsed();
        ensure!(t < Duration::from_secs(30), "took {t:?}");
        Ok(format!("{} in {t:.2?}", leaves.join(" ")))
    });
}

// ---------------------------------------------------------------------------
// 4. merging efficacy

#[test]
fn criterion_04_merging_efficacy() {
    criterion(4, "merging efficacy", || {
        let r = 16u32;
        let cells = (r as usize).pow(3);
        let cloud = fixture(Fixture::Plane);
        let (_, pyr) = pipeline(&cloud, r);
        let ratio = pyr.leaf_count() as f64 / cells as f64;
        ensure!(ratio <= 0.4, "leaf ratio {ratio:.3}");
        ensure!(pyr.leaf_count() < cells, "leaf count {} not below {cells}", pyr.leaf_count());

        let config = GridConfig::new(r, 75.0).unwrap();
        let sources = [ShapeSource::Memory(Fixture::Plane.generate(DEFAULT_FIXTURE_POINTS, 0))];
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let best = |mode| {
            pool.install(|| {
                (0..3)
                    .map(|_| {
                        let b = timed_pipeline(&sources, &config, mode, 1, 0).unwrap();
                        (b.report.timings.total, b.units)
                    })
                    .fold((f64::INFINITY, 0), |acc, x| if x.0 < acc.0 { x } else { acc })
            })
        };
        let (frv_t, frv_units) = best(PipelineMode::Frv);
        let (dr_t, dr_units) = best(PipelineMode::DrMsv);
        ensure!(dr_units < frv_units, "DR-MSV units {dr_units} vs FRV {frv_units}");
        ensure!(dr_t <= frv_t, "DR-MSV {dr_t:.4}s slower than FRV {frv_t:.4}s");
        Ok(format!(
            "{} leaves / {cells} cells = {ratio:.3}; DR-MSV {dr_t:.4}s vs FRV {frv_t:.4}s (1 thread, best of 3)",
            pyr.leaf_count()
        ))
    });
}

// ---------------------------------------------------------------------------
// 5. reconstruction sanity

#[test]
fn criterion_05_reconstruction() {
    criterion(5, "reconstruction sanity", || {
        let mut notes = Vec::new();
        let mut sphere = BTreeMap::new();
        for f in Fixture::ALL {
            let cloud = fixture(f);
            for r in [16u32, 32] {
                let (_, pyr) = pipeline(&cloud, r);
                let cd = chamfer_distance(&pyramid_to_points(&pyr), &cloud).unwrap();
                let bound = 3f64.sqrt() / r as f64;
                ensure!(cd < bound, "{f} R={r}: CD {cd:.5} >= {bound:.5}");
                notes.push(format!("{f}/{r}:{cd:.4}"));
                if f == Fixture::Sphere {
                    sphere.insert(r, cd);
                }
            }
        }
        ensure!(sphere[&32] <= sphere[&16], "sphere CD R=32 {} > R=16 {}", sphere[&32], sphere[&16]);
        Ok(notes.join(" "))
    });
}

// ---------------------------------------------------------------------------
// 6. evaluation metric oracles

fn brute_nn(q: Vec3, target: &[Vec3]) -> f64 {
    target
        .iter()
        .map(|t| ((q[0] - t[0]).powi(2) + (q[1] - t[1]).powi(2) + (q[2] - t[2]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| [0; 3].map(|_| rng.random_range(0.0..1.0))).collect())
}

fn random_grid(rng: &mut ChaCha8Rng, fill: f64) -> OccupancyGrid {
    let mut g = OccupancyGrid::new(8);
    for i in 0..8 {
        for j in 0..8 {
            for k in 0..8 {
                g.set([i, j, k], rng.random_bool(fill));
            }
        }
    }
    g
}

#[test]
fn criterion_06_evaluation_oracles() {
    criterion(6, "evaluation metric oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for case in 0..20 {
            let (na, nb) = (rng.random_range(1..=500), rng.random_range(1..=500));
            let a = random_cloud(&mut rng, na);
            let b = random_cloud(&mut rng, nb);
            let ab: Vec<f64> = a.points.iter().map(|&p| brute_nn(p, &b.points)).collect();
            let ba: Vec<f64> = b.points.iter().map(|&p| brute_nn(p, &a.points)).collect();
            let want = ab.iter().sum::<f64>() / ab.len() as f64 + ba.iter().sum::<f64>() / ba.len() as f64;
            let got = chamfer_distance(&a, &b).unwrap();
            ensure!((got - want).abs() <= 1e-9, "case {case}: chamfer {got} vs {want}");

            let radius = rng.random_range(0.02..0.2);
            let p = ab.iter().filter(|&&d| d <= radius).count() as f64 / ab.len() as f64;
            let r = ba.iter().filter(|&&d| d <= radius).count() as f64 / ba.len() as f64;
            let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let got = f1_point_cloud(&a, &b, radius).unwrap();
            ensure!(
                (got.precision - p).abs() <= 1e-9 && (got.recall - r).abs() <= 1e-9 && (got.f1 - f1).abs() <= 1e-9,
                "case {case}: f1 {got:?} vs ({p}, {r}, {f1})"
            );

            let fill_a = rng.random_range(0.0..1.0);
            let fill_b = rng.random_range(0.0..1.0);
            let ga = random_grid(&mut rng, fill_a);
            let gb = random_grid(&mut rng, fill_b);
            let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
            for i in 0..8 {
                for j in 0..8 {
                    for k in 0..8 {
                        match (ga.get([i, j, k]), gb.get([i, j, k])) {
                            (true, true) => tp += 1.0,
                            (true, false) => fp += 1.0,
                            (false, true) => fn_ += 1.0,
                            (false, false) => tn += 1.0,
                        }
                    }
                }
            }
            let iou = if tp + fp + fn_ == 0.0 { 1.0 } else { tp / (tp + fp + fn_) };
            ensure!((geometric_iou(&ga, &gb).unwrap() - iou).abs() <= 1e-9, "case {case}: iou");
            let s = voxel_classification_metrics(&ga, &gb).unwrap();
            let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
            let rec = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
            let f = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
            let acc = (tp + tn) / 512.0;
            for (name, g, w) in [
                ("accuracy", s.accuracy, acc),
                ("precision", s.precision, prec),
                ("recall", s.recall, rec),
                ("f1", s.f1, f),
                ("iou", s.iou, iou),
            ] {
                ensure!((g - w).abs() <= 1e-9, "case {case}: {name} {g} vs {w}");
            }
        }

        // documented conventions
        let empty = OccupancyGrid::new(8);
        let mut one = OccupancyGrid::new(8);
        one.set([1, 2, 3], true);
        ensure!(geometric_iou(&empty, &empty).unwrap() == 1.0, "empty/empty iou");
        let s = voxel_classification_metrics(&empty, &empty).unwrap();
        ensure!(s.iou == 1.0 && s.precision == 0.0 && s.recall == 0.0 && s.f1 == 0.0 && s.accuracy == 1.0,
            "empty/empty scores {s:?}");
        let s = voxel_classification_metrics(&empty, &one).unwrap();
        ensure!(s.precision == 0.0 && s.recall == 0.0 && s.iou == 0.0, "empty prediction {s:?}");
        let s = voxel_classification_metrics(&one, &empty).unwrap();
        ensure!(s.precision == 0.0 && s.recall == 0.0, "empty ground truth {s:?}");
        ensure!(
            geometric_iou(&empty, &OccupancyGrid::new(4)).is_err(),
            "resolution mismatch accepted"
        );
        let a = PointCloud::new(vec![[0.0; 3]]);
        let b = PointCloud::new(vec![[0.25, 0.0, 0.0]]);
        ensure!(f1_point_cloud(&a, &b, 0.25).unwrap().f1 == 1.0, "distance equal to radius counts");
        ensure!(chamfer_distance(&a, &PointCloud::new(vec![])).is_err(), "empty chamfer accepted");
        Ok("20 random cases up to 500 points / 8³ grids, plus empty conventions".into())
    });
}

// ---------------------------------------------------------------------------
// 7. pooling correctness

fn random_params(rng: &mut ChaCha8Rng, g: usize, scale: f64) -> PoolingParams {
    let mut p = PoolingParams::init(g, rng);
    for v in p.weight.iter_mut().chain(p.score.iter_mut()) {
        *v *= scale;
    }
    p.bias = (0..g).map(|_| rng.random_range(-0.5..0.5) * scale).collect();
    p.lambda_raw = rng.random_range(-2.0..2.0);
    p
}

#[test]
fn criterion_07_pooling_correctness() {
    criterion(7, "attention pooling correctness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut max_dev: f64 = 0.0;
        for i in 0..1000 {
            let s = rng.random_range(1..=16);
            let mag = [1.0, 1e2, 1e4][i % 3];
            let scores: Vec<f64> = (0..s).map(|_| rng.random_range(-mag..=mag)).collect();
            let alpha = softmax(&scores);
            let sum: f64 = alpha.iter().sum();
            ensure!(alpha.iter().all(|a| a.is_finite() && *a >= 0.0), "bad weights for {scores:?}");
            max_dev = max_dev.max((sum - 1.0).abs());
            // through the full scorer as well, with large parameters
            let g = rng.random_range(1..=6);
            let t = TokenMatrix::random(s, g, &mut rng);
            let p = random_params(&mut rng, g, [1.0, 30.0, 3000.0][i % 3]);
            let alpha = attention_weights(&t, &p).unwrap();
            max_dev = max_dev.max((alpha.iter().sum::<f64>() - 1.0).abs());
        }
        ensure!(max_dev <= 1e-9, "softmax sum off by {max_dev:e}");

        // direct-formula oracle for the weights on a small case
        let t = TokenMatrix::new(3, 2, vec![0.3, -0.7, 0.9, 0.1, -0.4, 0.5]).unwrap();
        let p = random_params(&mut rng, 2, 1.0);
        let raw: Vec<f64> = (0..3)
            .map(|i| {
                let tok = t.token(i);
                (0..2)
                    .map(|r| p.score[r] * (p.weight[r * 2] * tok[0] + p.weight[r * 2 + 1] * tok[1] + p.bias[r]).max(0.0))
                    .sum::<f64>()
                    .exp()
            })
            .collect();
        let z: f64 = raw.iter().sum();
        for (a, e) in attention_weights(&t, &p).unwrap().iter().zip(&raw) {
            ensure!((a - e / z).abs() <= 1e-12, "weights disagree with direct evaluation");
        }

        let mut perm_dev: f64 = 0.0;
        for _ in 0..200 {
            let (s, g) = (rng.random_range(1..=8), rng.random_range(1..=6));
            let t = TokenMatrix::random(s, g, &mut rng);
            let p = random_params(&mut rng, g, 1.0);
            let base = forward(&t, &p, Variant::BaselineMax).unwrap();
            ensure!(base.g == max_pool(&t).0, "λ=0 output is not the column max");
            let only = forward(&t, &p, Variant::TapOnly).unwrap();
            let tap = tap_pool(&t, &attention_weights(&t, &p).unwrap()).unwrap();
            ensure!(only.g == tap && only.lambda == 1.0, "λ=1 output is not the attention pool");

            let mut near = p.clone();
            near.set_lambda(1e-9);
            let lo = forward(&t, &near, Variant::TapResLearnt).unwrap();
            near.set_lambda(1.0 - 1e-9);
            let hi = forward(&t, &near, Variant::TapResLearnt).unwrap();
            for j in 0..g {
                ensure!((lo.g[j] - base.g[j]).abs() <= 1e-6, "λ→0 limit");
                ensure!((hi.g[j] - only.g[j]).abs() <= 1e-6, "λ→1 limit");
            }

            let mut perm: Vec<usize> = (0..s).collect();
            perm.shuffle(&mut rng);
            let tp = t.permuted(&perm);
            for v in Variant::ALL {
                let a = forward(&t, &p, v).unwrap();
                let b = forward(&tp, &p, v).unwrap();
                for j in 0..g {
                    perm_dev = perm_dev
                        .max((a.g[j] - b.g[j]).abs())
                        .max((a.g_tap[j] - b.g_tap[j]).abs())
                        .max((a.g_max[j] - b.g_max[j]).abs());
                }
                for (i, &src) in perm.iter().enumerate() {
                    perm_dev = perm_dev.max((b.alpha[i] - a.alpha[src]).abs());
                }
            }
        }
        ensure!(perm_dev <= 1e-12, "permutation changed outputs by {perm_dev:e}");
        Ok(format!("max |Σα-1| {max_dev:.1e}, max permutation deviation {perm_dev:.1e}"))
    });
}

// ---------------------------------------------------------------------------
// 8. gradient check

fn objective(t: &TokenMatrix, p: &PoolingParams, v: Variant, u: &[f64]) -> f64 {
    let out = forward(t, p, v).unwrap();
    out.g.iter().zip(u).map(|(a, b)| a * b).sum()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

#[test]
fn criterion_08_gradient_check() {
    criterion(8, "gradient check", || {
        let start = Instant::now();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for case in 0..50 {
            let (s, g) = (rng.random_range(1..=8), rng.random_range(1..=6));
            let t = TokenMatrix::random(s, g, &mut rng);
            let p = random_params(&mut rng, g, 1.0);
            let u: Vec<f64> = (0..g).map(|_| rng.random_range(-1.0..1.0)).collect();
            for v in Variant::ALL {
                let grads = backward(&t, &p, v, &u).unwrap();
                let analytic: Vec<(&str, usize, f64)> = grads
                    .weight
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| ("W", i, d))
                    .chain(grads.bias.iter().enumerate().map(|(i, &d)| ("b", i, d)))
                    .chain(grads.score.iter().enumerate().map(|(i, &d)| ("w", i, d)))
                    .chain(std::iter::once(("lambda_raw", 0, grads.lambda_raw)))
                    .collect();
                for (name, i, a) in analytic {
                    let perturbed = |delta: f64| {
                        let mut q = p.clone();
                        match name {
                            "W" => q.weight[i] += delta,
                            "b" => q.bias[i] += delta,
                            "w" => q.score[i] += delta,
                            _ => q.lambda_raw += delta,
                        }
                        objective(&t, &q, v, &u)
                    };
                    let n = (perturbed(h) - perturbed(-h)) / (2.0 * h);
                    let e = rel_err(a, n);
                    worst = worst.max(e);
                    ensure!(e < 1e-4, "case {case} {v} d{name}[{i}]: {a} vs {n}");
                }
                for k in 0..s * g {
                    let mut tp = t.clone();
                    tp.as_mut_slice()[k] += h;
                    let mut tm = t.clone();
                    tm.as_mut_slice()[k] -= h;
                    let n = (objective(&tp, &p, v, &u) - objective(&tm, &p, v, &u)) / (2.0 * h);
                    let e = rel_err(grads.tokens[k], n);
                    worst = worst.max(e);
                    ensure!(e < 1e-4, "case {case} {v} dT[{k}]: {} vs {n}", grads.tokens[k]);
                }
            }
        }
        let t = start.elapsed();
        ensure!(t < Duration::from_secs(20), "took {t:?}");
        Ok(format!("50 configs x 5 variants, max relative error {worst:.2e}, {t:.2?}"))
    });
}

// ---------------------------------------------------------------------------
// 9. ablation ordering

#[test]
fn criterion_09_ablation_ordering() {
    criterion(9, "ablation ordering", || {
        let start = Instant::now();
        let data = attention_task(64, 8, 4, DEFAULT_TASK_BETA, 0);
        let mut loss = BTreeMap::new();
        for v in Variant::ALL {
            let r = train_toy(&data, v, 200, DEFAULT_STEP_SIZE, 0).unwrap();
            loss.insert(v.name(), r.final_loss);
        }
        let learnt = loss["tap_res_learnt"];
        let base = loss["baseline_max"];
        let weight_only = loss["tap_weight_only"];
        ensure!(learnt <= 0.9 * base, "tap_res_learnt {learnt} vs baseline_max {base}");
        ensure!(learnt <= weight_only, "tap_res_learnt {learnt} vs tap_weight_only {weight_only}");
        let t = start.elapsed();
        ensure!(t < Duration::from_secs(60), "took {t:?}");
        let summary: Vec<String> = loss.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        Ok(format!("{} in {t:.2?}", summary.join(" ")))
    });
}

// ---------------------------------------------------------------------------
// 10. determinism

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_adavox")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn file(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn criterion_10_determinism() {
    criterion(10, "determinism", || {
        let dir = tempfile::tempdir().unwrap();
        let d = |name: &str| dir.path().join(name);
        let s = |p: &Path| p.to_str().unwrap().to_owned();
        run_cli(&["gen-fixtures", "--out", &s(&d("fx")), "--points", "8000", "--seed", "0"]);
        let mut compared = 0;
        for shape in ["plane", "mixed"] {
            for run in ["a", "b"] {
                run_cli(&[
                    "voxelize",
                    "--input",
                    &s(&d("fx").join(format!("{shape}.ply"))),
                    "--resolution",
                    "16",
                    "--seed",
                    "0",
                    "--threads",
                    "1",
                    "--out",
                    &s(&d(&format!("{shape}_{run}.txt"))),
                ]);
            }
            for ext in ["txt", "metrics.csv", "leaves.ply"] {
                let a = file(&d(&format!("{shape}_a.{ext}")));
                let b = file(&d(&format!("{shape}_b.{ext}")));
                ensure!(!a.is_empty() && a == b, "{shape} {ext} differs between runs");
                compared += 1;
            }
        }
        for run in ["a", "b"] {
            run_cli(&[
                "pool",
                "--synthetic",
                "--train",
                "--seed",
                "0",
                "--threads",
                "1",
                "--loss-out",
                &s(&d(&format!("loss_{run}.csv"))),
                "--params-out",
                &s(&d(&format!("params_{run}.txt"))),
            ]);
        }
        for name in ["loss", "params"] {
            let ext = if name == "loss" { "csv" } else { "txt" };
            let a = file(&d(&format!("{name}_a.{ext}")));
            let b = file(&d(&format!("{name}_b.{ext}")));
            ensure!(!a.is_empty() && a == b, "{name} differs between runs");
            compared += 1;
        }
        Ok(format!("{compared} output files byte-identical across repeated runs"))
    });
}
