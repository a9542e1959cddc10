//! Sweep harness over the convex point count K and the handle count M.
//!
//! Each combo retrains a small skinning basis, simulates, renders, and emits
//! one metrics record: primitive/point/plane counts plus mean PSNR/SSIM of
//! the animated frames against the rest-pose render (a motion-magnitude
//! metric; absolute reconstruction quality needs an external reference).

use std::path::Path;

use anyhow::Result;

use convexdyn_core::render::render;
use convexdyn_core::sim::simulate;
use convexdyn_core::skinning::train_skinning;
use convexdyn_core::sysid::{psnr, ssim};

use crate::commands::scene_inputs;
use crate::config::SceneConfig;
use crate::formats::{write_records, Record};

pub const SWEEP_K: [usize; 3] = [4, 6, 8];
pub const SWEEP_M: [usize; 3] = [8, 10, 12];

/// Runs the full K x M sweep and writes `ablation.jsonl` under `out_dir`.
pub fn run_sweep(base: &SceneConfig, out_dir: &Path) -> Result<Vec<Record>> {
    std::fs::create_dir_all(out_dir)?;
    let mut records = Vec::new();
    for &k in &SWEEP_K {
        for &m in &SWEEP_M {
            records.push(run_combo(base, k, m)?);
        }
    }
    write_records(&records, &out_dir.join("ablation.jsonl"))?;
    Ok(records)
}

pub fn run_combo(base: &SceneConfig, k: usize, m: usize) -> Result<Record> {
    let mut cfg = base.clone();
    cfg.sim.points_per_convex = k;
    cfg.sim.handles = m;

    let (field, cubature) = scene_inputs(&cfg)?;
    let material = cfg.material()?;
    let (lo, hi) = field.rest_bbox().expect("non-empty field");
    let (skinning, _) = train_skinning(
        &cubature,
        &material,
        m,
        convexdyn_core::skinning::DomainBox::new(lo, hi),
        &cfg.train_hyper(),
    )?;
    let model = convexdyn_core::sim::ReducedModel::new(field, &skinning, material, cubature)?;
    let traj = simulate(&model, &cfg.conditions(), cfg.sim.steps, cfg.sim.dt)?;

    let camera = cfg.camera(0)?;
    let bg = cfg.render.background;
    let rest_img = render(&traj.frames[0].field, &camera, bg);
    let mut sum_psnr = 0.0;
    let mut sum_ssim = 0.0;
    let moving = &traj.frames[1..];
    for f in moving {
        let img = render(&f.field, &camera, bg);
        sum_psnr += psnr(&img, &rest_img)?;
        sum_ssim += ssim(&img, &rest_img)?;
    }
    let n = moving.len().max(1) as f64;

    let rest = &model.rest_field;
    Ok(Record::Ablation {
        k,
        m,
        primitives: rest.len(),
        points: rest.rest_primitives.iter().map(|p| p.points.len()).sum(),
        planes: rest
            .rest_primitives
            .iter()
            .map(|p| p.halfspaces().len())
            .sum(),
        mean_psnr: sum_psnr / n,
        mean_ssim: sum_ssim / n,
    })
}
