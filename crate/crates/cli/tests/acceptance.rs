//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gridtok::budget::budget_for_plan;
use gridtok::config::TokenGrouping;
use gridtok::pipeline::grad::{grad_check, GradCheckOptions, SquaredNormLoss};
use gridtok::pipeline::{compress, forward, prepare, ModelParams, ParamGroup, TokenRole};
use gridtok::{make_plan, select_grid, GridSpec, ImageDims, PipelineConfig};
use image::{Rgb, Rgb32FImage, RgbImage};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_grid(w: u32, h: u32, cell: u32, n: u32) -> GridSpec {
    let (need_w, need_h) = (w.min(n * cell), h.min(n * cell));
    for r in 1..=n {
        for c in 1..=n {
            if r * cell >= need_h && c * cell >= need_w {
                return GridSpec::new(r, c);
            }
        }
    }
    unreachable!()
}

fn grid_oracle_equivalence() -> Outcome {
    let config = PipelineConfig::default();
    let start = Instant::now();
    let sides: Vec<u32> = (1..=1205).step_by(7).collect();
    let mut pairs = 0;
    for &h in &sides {
        for &w in &sides {
            let got = select_grid(ImageDims::new(w, h).unwrap(), &config);
            let want = oracle_grid(w, h, config.cell_size_px, config.max_grid);
            ensure(got == want, || format!("{w}x{h}: {got:?} != {want:?}"))?;
            pairs += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("{pairs} pairs in {elapsed:.2?}"))
}

fn resolution_cap() -> Outcome {
    let config = PipelineConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut largest = (0, 0);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..=8000), rng.random_range(1..=8000));
        let plan = make_plan(ImageDims::new(w, h).unwrap(), &config);
        ensure(plan.resized.width <= 1008 && plan.resized.height <= 1008, || format!("{w}x{h} -> {:?}", plan.resized))?;
        largest = largest.max((plan.resized.width, plan.resized.height));
    }
    Ok(format!("1000 sizes, largest resize {}x{}", largest.0, largest.1))
}

fn token_constants() -> Outcome {
    let config = PipelineConfig::default().with_dims(4, 8);
    let params = ModelParams::<f32>::init(&config, 0).map_err(|e| e.to_string())?;

    let single = make_plan(ImageDims::new(200, 150).unwrap(), &config);
    let b = budget_for_plan(&single, &config);
    ensure(b.global_tokens == 576 && b.local_tokens_per_patch == 144, || format!("{b:?}"))?;
    let img = Rgb32FImage::from_pixel(200, 150, Rgb([0.3, 0.6, 0.9]));
    let seq = forward(&img, &params, &config).map_err(|e| e.to_string())?;
    let lens: Vec<(TokenRole, usize)> = seq.segments().iter().map(|s| (s.role, s.len)).collect();
    ensure(
        lens == [(TokenRole::Position, 1), (TokenRole::Global, 576), (TokenRole::Position, 1), (TokenRole::Local, 144)],
        || format!("single-cell segments {lens:?}"),
    )?;

    let full = make_plan(ImageDims::new(1008, 1008).unwrap(), &config);
    let total = budget_for_plan(&full, &config).total;
    ensure(total == 1882, || format!("3x3 total {total}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..=1300), rng.random_range(1..=1300));
        let img = Rgb32FImage::from_pixel(w, h, Rgb([rng.random(), rng.random(), rng.random()]));
        let seq = forward(&img, &params, &config).map_err(|e| e.to_string())?;
        let plan = make_plan(ImageDims::new(w, h).unwrap(), &config);
        let want = budget_for_plan(&plan, &config).total;
        ensure(seq.len() == want && seq.tokens.nrows() == want, || format!("{w}x{h}: {} != {want}", seq.len()))?;
    }
    Ok("576/144 per cell, 1882 at 3x3, 200 forwards match budget".into())
}

fn position_token_count() -> Outcome {
    let config = PipelineConfig::default();
    let params = ModelParams::<f32>::init(&config, 0).map_err(|e| e.to_string())?;
    let rows = params.projector.position_table.nrows();
    ensure(rows == 10, || format!("{rows} rows"))?;
    Ok("10 rows at N=3".into())
}

fn ablation_config(bin: &Path, tmp: &Path) -> Outcome {
    let config = PipelineConfig::default().with_max_grid(2);
    let mut max_res = (0, 0);
    let mut max_total = 0;
    for w in (1..=3000).step_by(97) {
        for h in (1..=3000).step_by(89) {
            let plan = make_plan(ImageDims::new(w, h).unwrap(), &config);
            max_res = max_res.max((plan.resized.width, plan.resized.height));
            max_total = max_total.max(budget_for_plan(&plan, &config).total);
        }
    }
    ensure(max_res == (672, 672) && max_total == 1157, || format!("max {max_res:?}, {max_total} tokens"))?;

    let img = tmp.join("ablation.png");
    RgbImage::from_pixel(2500, 1800, Rgb([1, 2, 3])).save(&img).map_err(|e| e.to_string())?;
    let plan = run(bin, &["plan", img.to_str().unwrap(), "--max-grid", "2"])?;
    let plan: serde_json::Value = serde_json::from_slice(&plan).map_err(|e| e.to_string())?;
    ensure(plan["resized"] == serde_json::json!({"w": 672, "h": 672}), || format!("cli plan {}", plan["resized"]))?;
    let budget = run(bin, &["budget", img.to_str().unwrap(), "--max-grid", "2"])?;
    let budget: serde_json::Value = serde_json::from_slice(&budget).map_err(|e| e.to_string())?;
    ensure(budget["total"] == 1157, || format!("cli budget {}", budget["total"]))?;
    Ok("672x672 cap, 1157 tokens max".into())
}

fn gradient_check() -> Outcome {
    let config = PipelineConfig::default().with_dims(8, 16);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.random_range(1..=1100), rng.random_range(1..=1100));
        let img = Rgb32FImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
        let input = prepare(&img, &config).map_err(|e| e.to_string())?;
        let params = ModelParams::<f64>::uniform(&config, seed, 0.1).map_err(|e| e.to_string())?;
        let opts = GradCheckOptions {
            epsilon: 1e-4,
            samples_per_group: 12,
            seed,
            groups: vec![ParamGroup::Proj1, ParamGroup::Proj2, ParamGroup::PositionTable, ParamGroup::PatchEmbed],
            corrupt_analytic: false,
        };
        let report = grad_check(&SquaredNormLoss, &params, &input, &config, &opts).map_err(|e| e.to_string())?;
        ensure(report.max_rel_err <= 1e-5, || format!("seed {seed}: {report:?}"))?;
        worst = worst.max(report.max_rel_err);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("max_rel_err {worst:.2e} over 5 seeds in {elapsed:.2?}"))
}

fn tiling_and_locality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let n = rng.random_range(1..=4);
        let cell = 28 * rng.random_range(1..=16);
        let config = PipelineConfig {
            max_grid: n,
            cell_size_px: cell,
            ..PipelineConfig::default()
        };
        let (w, h) = (rng.random_range(1..=5000), rng.random_range(1..=5000));
        let plan = make_plan(ImageDims::new(w, h).unwrap(), &config);
        let (rw, rh) = (plan.resized.width, plan.resized.height);
        let area: u64 = plan.patches.iter().map(|p| u64::from(p.width()) * u64::from(p.height())).sum();
        ensure(area == u64::from(rw) * u64::from(rh), || format!("case {case}: area {area}"))?;
        // Every pixel in exactly one patch, checked on a stride that hits
        // every row and column of cells.
        let step = (cell / 7).max(1);
        for y in (0..rh).step_by(step as usize).chain([rh - 1]) {
            for x in (0..rw).step_by(step as usize).chain([rw - 1]) {
                let hits = plan.patches.iter().filter(|p| p.contains(x, y)).count();
                ensure(hits == 1, || format!("case {case}: pixel ({x},{y}) in {hits} patches"))?;
            }
        }
    }

    let config = PipelineConfig::default().with_dims(2, 3);
    for case in 0..1000u64 {
        let params = ModelParams::<f64>::init(&config, case).map_err(|e| e.to_string())?;
        let x = Array2::from_shape_fn((576, 3), |_| rng.random_range(-1.0..1.0));
        let block = rng.random_range(0..144usize);
        let (by, bx) = (2 * (block / 12), 2 * (block % 12));
        let members = [by * 24 + bx, by * 24 + bx + 1, (by + 1) * 24 + bx, (by + 1) * 24 + bx + 1];
        let victim = loop {
            let v = rng.random_range(0..576usize);
            if !members.contains(&v) {
                break v;
            }
        };
        let mut y = x.clone();
        y.row_mut(victim).mapv_inplace(|v| v + 1.0);
        let a = compress(x.view(), &params.projector, TokenGrouping::Spatial2x2).map_err(|e| e.to_string())?;
        let b = compress(y.view(), &params.projector, TokenGrouping::Spatial2x2).map_err(|e| e.to_string())?;
        ensure(a.row(block) == b.row(block), || format!("case {case}: block {block} moved after touching token {victim}"))?;
    }
    Ok("1000 tiling cases, 1000 locality cases".into())
}

fn run(bin: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn determinism(bin: &Path, tmp: &Path) -> Outcome {
    let corpus = tmp.join("corpus");
    std::fs::create_dir_all(&corpus).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..24 {
        let (w, h) = (rng.random_range(1..=1400), rng.random_range(1..=1400));
        RgbImage::from_pixel(w, h, Rgb([i as u8, 0, 0]))
            .save(corpus.join(format!("img_{i:02}.png")))
            .map_err(|e| e.to_string())?;
    }
    let probe = corpus.join("img_03.png");
    let plans: Vec<Vec<u8>> = (0..3).map(|_| run(bin, &["plan", probe.to_str().unwrap()])).collect::<Result<_, _>>()?;
    ensure(plans.windows(2).all(|p| p[0] == p[1]), || "plan output differs between runs".into())?;

    let mut reports = Vec::new();
    for workers in ["1", "4"] {
        for rep in 0..3 {
            let out = tmp.join(format!("report_{workers}_{rep}"));
            run(bin, &["batch", corpus.to_str().unwrap(), "--workers", workers, "--out", out.to_str().unwrap()])?;
            let csv = std::fs::read(out.join("per_image.csv")).map_err(|e| e.to_string())?;
            let json = std::fs::read(out.join("aggregates.json")).map_err(|e| e.to_string())?;
            reports.push((csv, json));
        }
    }
    ensure(reports.windows(2).all(|r| r[0] == r[1]), || "batch reports differ".into())?;
    Ok("plan x3, batch x3 at 1 and 4 workers".into())
}

fn main() {
    let bin = Path::new(env!("CARGO_BIN_EXE_gridtok"));
    let tmp = tempfile::tempdir().expect("tempdir");
    let criteria: Vec<Criterion> = vec![
        ("grid selection matches minimal-cover oracle", Box::new(grid_oracle_equivalence)),
        ("resized dims never exceed 1008x1008", Box::new(resolution_cap)),
        ("token constants and forward length", Box::new(token_constants)),
        ("ten position tokens at N=3", Box::new(position_token_count)),
        ("max-grid 2 ablation caps", Box::new(|| ablation_config(bin, tmp.path()))),
        ("gradient check <= 1e-5", Box::new(gradient_check)),
        ("tiling exactness and compression locality", Box::new(tiling_and_locality)),
        ("plan and batch determinism", Box::new(|| determinism(bin, tmp.path()))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}  ({detail})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}  ({why})");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
