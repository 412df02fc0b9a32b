use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    BenchArgs, BenchMode, Cli, Command, EvalArgs, Failure, GenFixturesArgs, GridArgs,
    OutputFormat, PoolArgs, VoxelizeArgs, EXIT_RUNTIME,
};
use crate::complexity::{analyze, metrics_csv, Metric};
use crate::evaluation::{evaluate, timed_pipeline, BatchResult, PipelineMode, ShapeSource};
use crate::fixtures::write_fixtures;
use crate::pointcloud::{
    estimate_normals, load_point_cloud, normalize_to_unit_cube, write_ply, CloudFormat,
    Normalization, PointCloud,
};
use crate::pyramid::{build_pyramid, pyramid_to_points, VoxelPyramid};
use crate::tap_lme::{
    self, attention_task, format_params, forward, gradient_check_suite, loss_curve_csv,
    parse_params, parse_tokens_csv, train_toy, PoolingParams, TokenMatrix, Variant,
};
use crate::voxel_grid::{voxelize, GridConfig, GridSummary, OccupancyGrid};

type CmdResult = Result<(), Failure>;

/// Runs the selected command and returns what it prints.
pub(super) fn dispatch(cli: &Cli) -> Result<String, Failure> {
    let mut text = String::new();
    match &cli.command {
        Command::Voxelize(a) => cmd_voxelize(a, &mut text)?,
        Command::Eval(a) => cmd_eval(a, &mut text)?,
        Command::Bench(a) => cmd_bench(a, cli.seed, &mut text)?,
        Command::Pool(a) => cmd_pool(a, cli.seed, &mut text)?,
        Command::GenFixtures(a) => cmd_gen_fixtures(a, cli.seed, &mut text)?,
    }
    Ok(text)
}

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::usage(format!("input file {} does not exist", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| crate::error::Error::io(path, e).into())
}

fn grid_config(a: &GridArgs) -> Result<GridConfig, Failure> {
    let mut config = GridConfig::new(a.resolution, a.percentile)?;
    for spec in &a.fixed_thresholds {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("expected METRIC=VALUE, got '{spec}'")))?;
        let metric = Metric::from_name(name.trim())
            .ok_or_else(|| Failure::usage(format!("unknown metric '{name}'")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("threshold '{value}' is not a number")))?;
        config.fixed_thresholds.insert(metric, value);
    }
    config.validate()?;
    Ok(config)
}

fn derived_path(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

fn cmd_voxelize(a: &VoxelizeArgs, text: &mut String) -> CmdResult {
    let config = grid_config(&a.grid)?;
    require_file(&a.input)?;
    let raw = load_point_cloud(&a.input, CloudFormat::from_path(&a.input))?;
    let mut cloud = normalize_to_unit_cube(&raw)?.cloud;
    if !cloud.has_normals() {
        cloud = estimate_normals(&cloud, a.normal_k)?;
    }
    let grid = voxelize(&cloud, &config)?;
    let (grid, thresholds) = analyze(grid, &cloud)?;
    let pyramid = build_pyramid(&grid)?;

    let metrics_path = a.metrics_out.clone().unwrap_or_else(|| derived_path(&a.out, "metrics.csv"));
    let ply_path = a.ply_out.clone().unwrap_or_else(|| derived_path(&a.out, "leaves.ply"));
    write_file(&a.out, &pyramid.to_text())?;
    write_file(&metrics_path, &metrics_csv(&grid))?;
    write_file(&ply_path, &write_ply(&pyramid_to_points(&pyramid)))?;

    let complex = grid
        .cells
        .values()
        .filter(|c| c.label == Some(crate::voxel_grid::CellLabel::Complex))
        .count();
    let _ = writeln!(text, "points {}", cloud.len());
    let _ = writeln!(text, "resolution {}", config.resolution);
    let _ = writeln!(text, "occupied_cells {}", grid.occupied_count());
    let _ = writeln!(text, "complex_cells {complex}");
    let _ = writeln!(text, "leaves {}", pyramid.leaf_count());
    let _ = writeln!(text, "rounds {}", pyramid.rounds_executed);
    for (m, v) in thresholds.iter() {
        let _ = writeln!(text, "threshold {} {v}", m.name());
    }
    for p in [&a.out, &metrics_path, &ply_path] {
        let _ = writeln!(text, "wrote {}", p.display());
    }
    Ok(())
}

enum EvalInput {
    Cloud(PointCloud),
    Grid(OccupancyGrid),
}

fn load_eval_input(path: &Path) -> Result<EvalInput, Failure> {
    require_file(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if matches!(ext.as_deref(), Some("ply" | "xyz")) {
        return Ok(EvalInput::Cloud(load_point_cloud(path, CloudFormat::from_path(path))?));
    }
    let body = fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
    let head = body.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    if head.starts_with("base_resolution") {
        Ok(EvalInput::Grid(VoxelPyramid::parse(&body)?.occupancy()))
    } else if head.starts_with("resolution") {
        Ok(EvalInput::Grid(GridSummary::parse(&body)?.occupancy()))
    } else {
        Ok(EvalInput::Cloud(load_point_cloud(path, CloudFormat::Xyz)?))
    }
}

fn occupied_centers(occ: &OccupancyGrid) -> PointCloud {
    let r = occ.resolution();
    let mut pts = Vec::new();
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                if occ.get([i, j, k]) {
                    pts.push([i, j, k].map(|v| (v as f64 + 0.5) / r as f64));
                }
            }
        }
    }
    PointCloud::new(pts)
}

fn cmd_eval(a: &EvalArgs, text: &mut String) -> CmdResult {
    let pred = load_eval_input(&a.pred)?;
    let gt = load_eval_input(&a.gt)?;
    let grid_res = |x: &EvalInput| match x {
        EvalInput::Grid(g) => Some(g.resolution()),
        EvalInput::Cloud(_) => None,
    };
    let mut resolution = a.resolution;
    for r in [grid_res(&pred), grid_res(&gt)].into_iter().flatten() {
        match resolution {
            Some(have) if have != r => {
                return Err(crate::error::Error::ResolutionMismatch { left: have, right: r }.into())
            }
            _ => resolution = Some(r),
        }
    }
    let resolution = resolution.unwrap_or(crate::voxel_grid::DEFAULT_RESOLUTION);
    GridConfig::new(resolution, crate::voxel_grid::DEFAULT_PERCENTILE)?;
    let radius = a.radius.unwrap_or(1.0 / resolution as f64);

    let report = match (pred, gt) {
        (EvalInput::Cloud(p), EvalInput::Cloud(g)) => {
            // shared transform keeps the two clouds registered
            let all: Vec<_> = p.points.iter().chain(&g.points).copied().collect();
            let t = Normalization::fit(&all)?;
            let p = PointCloud::new(p.points.iter().map(|&x| t.apply(x)).collect());
            let g = PointCloud::new(g.points.iter().map(|&x| t.apply(x)).collect());
            evaluate(&p, &g, None, resolution, radius)?
        }
        (p, g) => {
            let as_points = |x: &EvalInput| -> Result<PointCloud, Failure> {
                Ok(match x {
                    EvalInput::Cloud(c) => normalize_to_unit_cube(c)?.cloud,
                    EvalInput::Grid(o) => occupied_centers(o),
                })
            };
            let pred_occ = match &p {
                EvalInput::Grid(o) => Some(o),
                EvalInput::Cloud(_) => None,
            };
            evaluate(&as_points(&p)?, &as_points(&g)?, pred_occ, resolution, radius)?
        }
    };
    let rows = &report.rows()[..8];
    match a.format {
        OutputFormat::Json => {
            let map: serde_json::Map<String, serde_json::Value> =
                rows.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
            let _ = writeln!(
                text,
                "{}",
                serde_json::to_string_pretty(&map).expect("metrics serialize")
            );
        }
        OutputFormat::Text => {
            for (k, v) in rows {
                let _ = writeln!(text, "{k:<16}{v:.9}");
            }
        }
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs, seed: u64, text: &mut String) -> CmdResult {
    let config = grid_config(&a.grid)?;
    if !a.fixtures.is_dir() {
        return Err(Failure::usage(format!(
            "fixture directory {} does not exist",
            a.fixtures.display()
        )));
    }
    let entries = fs::read_dir(&a.fixtures).map_err(|e| crate::error::Error::io(&a.fixtures, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("ply") || e.eq_ignore_ascii_case("xyz"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::usage(format!(
            "no .ply or .xyz shapes in {}",
            a.fixtures.display()
        )));
    }
    if a.batch_size == 0 {
        return Err(Failure::usage("--batch-size must be at least 1"));
    }
    let sources: Vec<ShapeSource> = files.into_iter().map(ShapeSource::File).collect();
    let modes: &[PipelineMode] = match a.mode {
        BenchMode::Both => &[PipelineMode::Frv, PipelineMode::DrMsv],
        BenchMode::FrvOnly => &[PipelineMode::Frv],
        BenchMode::DrmsvOnly => &[PipelineMode::DrMsv],
    };
    let results = modes
        .iter()
        .map(|&m| timed_pipeline(&sources, &config, m, a.batch_size, seed))
        .collect::<Result<Vec<BatchResult>, _>>()?;
    match a.format {
        OutputFormat::Text => text.push_str(&bench_table(&results)),
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = results
                .iter()
                .map(|r| {
                    serde_json::json!({
                        "mode": r.mode.label(),
                        "shapes": r.shapes,
                        "units": r.units,
                        "report": r.report,
                    })
                })
                .collect();
            let _ = writeln!(
                text,
                "{}",
                serde_json::to_string_pretty(&rows).expect("bench rows serialize")
            );
        }
    }
    Ok(())
}

fn bench_table(results: &[BatchResult]) -> String {
    let mut t = format!(
        "{:<8} {:>6} {:>9} {:>10} {:>12} {:>10} {:>12} {:>13} {:>10} {:>10}\n",
        "mode",
        "shapes",
        "units",
        "total_s",
        "data_prep_s",
        "fit_s",
        "per_batch_s",
        "shapes_per_s",
        "chamfer",
        "voxel_iou"
    );
    for r in results {
        let tm = r.report.timings;
        let _ = writeln!(
            t,
            "{:<8} {:>6} {:>9} {:>10.4} {:>12.4} {:>10.4} {:>12.4} {:>13.3} {:>10.5} {:>10.5}",
            r.mode.label(),
            r.shapes,
            r.units,
            tm.total,
            tm.data_prep,
            tm.fit,
            tm.per_batch,
            tm.shapes_per_second,
            r.report.chamfer,
            r.report.voxel_iou
        );
    }
    t
}

fn parse_variants(name: &str) -> Result<Vec<Variant>, Failure> {
    if name == "all" {
        Ok(Variant::ALL.to_vec())
    } else {
        Ok(vec![name.parse()?])
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

fn cmd_pool(a: &PoolArgs, seed: u64, text: &mut String) -> CmdResult {
    let variants = parse_variants(&a.variant)?;
    if a.seq_len == 0 || a.width == 0 {
        return Err(Failure::usage("--seq-len and --width must be at least 1"));
    }
    if a.train && a.tokens.is_some() {
        return Err(Failure::usage(
            "training uses the synthetic attention task; pass --synthetic instead of --tokens",
        ));
    }
    if a.params_out.is_some() && (!a.train || variants.len() != 1) {
        return Err(Failure::usage("--params-out needs --train and a single --variant"));
    }

    if a.grad_check {
        let worst = gradient_check_suite(a.configs, &variants, seed)?;
        let _ = writeln!(text, "configs {}", a.configs);
        let _ = writeln!(text, "max_relative_error {worst:e}");
        if worst >= 1e-4 {
            return Err(Failure {
                code: EXIT_RUNTIME,
                message: format!("gradient check failed: relative error {worst:e}"),
            });
        }
    }

    if a.train {
        if a.samples == 0 {
            return Err(Failure::usage("--samples must be at least 1"));
        }
        let data = attention_task(a.samples, a.seq_len, a.width, tap_lme::DEFAULT_TASK_BETA, seed);
        let mut curves = Vec::new();
        for &v in &variants {
            let r = train_toy(&data, v, a.epochs, a.step_size, seed)?;
            let _ = writeln!(text, "final_loss {v} {}", r.final_loss);
            if matches!(v, Variant::TapResLearnt | Variant::TapWeightOnly) {
                let _ = writeln!(text, "lambda {v} {}", r.params.lambda());
            }
            if let Some(path) = &a.params_out {
                write_file(path, &format_params(&r.params))?;
            }
            curves.push((v, r.loss_curve));
        }
        if let Some(path) = &a.loss_out {
            let csv = if curves.len() == 1 {
                loss_curve_csv(&curves[0].1)
            } else {
                combined_curves(&curves)
            };
            write_file(path, &csv)?;
        }
    }

    if !a.train && !a.grad_check {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = match &a.tokens {
            Some(path) => {
                require_file(path)?;
                let body = fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
                parse_tokens_csv(&body)?
            }
            None => TokenMatrix::random(a.seq_len, a.width, &mut rng),
        };
        let params = match &a.params {
            Some(path) => {
                require_file(path)?;
                let body = fs::read_to_string(path).map_err(|e| crate::error::Error::io(path, e))?;
                parse_params(&body)?
            }
            None => PoolingParams::init(tokens.width(), &mut rng),
        };
        for &v in &variants {
            let o = forward(&tokens, &params, v)?;
            let _ = writeln!(text, "variant {v}");
            let _ = writeln!(text, "lambda {}", o.lambda);
            let _ = writeln!(text, "alpha {}", fmt_vec(&o.alpha));
            let _ = writeln!(text, "g_tap {}", fmt_vec(&o.g_tap));
            let _ = writeln!(text, "g_max {}", fmt_vec(&o.g_max));
            let _ = writeln!(text, "g {}", fmt_vec(&o.g));
        }
    }
    Ok(())
}

fn combined_curves(curves: &[(Variant, Vec<f64>)]) -> String {
    let mut csv = String::from("epoch");
    for (v, _) in curves {
        let _ = write!(csv, ",{v}");
    }
    csv.push('\n');
    let epochs = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for e in 0..epochs {
        let _ = write!(csv, "{e}");
        for (_, c) in curves {
            let _ = write!(csv, ",{}", c[e]);
        }
        csv.push('\n');
    }
    csv
}

fn cmd_gen_fixtures(a: &GenFixturesArgs, seed: u64, text: &mut String) -> CmdResult {
    for path in write_fixtures(&a.out, a.points, seed)? {
        let _ = writeln!(text, "wrote {}", path.display());
    }
    Ok(())
}
