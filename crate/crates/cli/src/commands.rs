//! The pipeline commands. Each is a thin deterministic wrapper over the core
//! library: parse inputs, run, write outputs, return a summary record.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nalgebra::Vector3;

use convexdyn_core::convex::ConvexField;
use convexdyn_core::render::{ppm, render, Camera, Image};
use convexdyn_core::sim::{simulate, ReducedModel};
use convexdyn_core::skinning::{sample_cubature, train_skinning, CubatureSet, SkinningField};
use convexdyn_core::sysid::{
    fit_rest_field, identify_parameters, loss_sim, psnr, ssim, FrameSequence,
};

use crate::config::{derive_seed, SceneConfig, SeedPurpose};
use crate::formats::{
    save_field, save_skinning, save_trajectory, load_skinning, load_trajectory, write_records,
    CameraMeta, FrameMeta, Record, TrajectoryData,
};
use crate::shapes::build_rest_field;

/// Rest field + cubature for a config (the deterministic scene inputs).
pub fn scene_inputs(cfg: &SceneConfig) -> Result<(ConvexField, CubatureSet)> {
    let field = build_rest_field(cfg)?;
    let material = cfg.material()?;
    let cubature = sample_cubature(
        &field,
        cfg.sim.cubature,
        material.density,
        derive_seed(cfg.seed, SeedPurpose::Cubature),
    )
    .context("cubature sampling")?;
    Ok((field, cubature))
}

fn domain_of(field: &ConvexField) -> convexdyn_core::skinning::DomainBox {
    let (lo, hi) = field.rest_bbox().expect("non-empty field");
    convexdyn_core::skinning::DomainBox::new(lo, hi)
}

/// Trains the skinning basis for the configured scene and writes it out.
pub fn cmd_train_skinning(cfg: &SceneConfig, out: &Path) -> Result<Record> {
    let (field, cubature) = scene_inputs(cfg)?;
    let material = cfg.material()?;
    let hyper = cfg.train_hyper();
    let (skinning, report) = train_skinning(
        &cubature,
        &material,
        cfg.sim.handles,
        domain_of(&field),
        &hyper,
    )?;
    save_skinning(&skinning, out)?;
    Ok(Record::SkinningTrained {
        steps: hyper.steps,
        final_loss: *report.loss.last().unwrap_or(&f64::NAN),
        final_elastic: *report.elastic.last().unwrap_or(&f64::NAN),
        final_ortho: *report.ortho.last().unwrap_or(&f64::NAN),
    })
}

/// Builds the reduced model for a config and a trained skinning field.
pub fn build_model(cfg: &SceneConfig, skinning: &SkinningField) -> Result<ReducedModel> {
    let (field, cubature) = scene_inputs(cfg)?;
    if skinning.num_handles() != cfg.sim.handles {
        bail!(
            "skinning has {} handles but config expects {}",
            skinning.num_handles(),
            cfg.sim.handles
        );
    }
    Ok(ReducedModel::new(field, skinning, cfg.material()?, cubature)?)
}

/// Simulates the configured scene and writes the trajectory file.
pub fn cmd_simulate(cfg: &SceneConfig, skinning_path: &Path, out: &Path) -> Result<()> {
    let skinning = load_skinning(skinning_path)?;
    let model = build_model(cfg, &skinning)?;
    let traj = simulate(&model, &cfg.conditions(), cfg.sim.steps, cfg.sim.dt)?;
    save_trajectory(&TrajectoryData::from_sim(&traj, cfg.sim.handles), out)?;
    Ok(())
}

/// Renders a trajectory from one configured camera into `frame_%04d.ppm`
/// files plus JSON sidecars carrying camera and timestamp.
pub fn cmd_render(
    cfg: &SceneConfig,
    trajectory_path: &Path,
    out_dir: &Path,
    camera_index: usize,
) -> Result<usize> {
    let data = load_trajectory(trajectory_path)?;
    let rest = build_rest_field(cfg)?;
    let camera = cfg.camera(camera_index)?;
    std::fs::create_dir_all(out_dir)?;
    for frame in 0..data.frame_count() {
        let field = data.field_at(frame, &rest)?;
        let img = render(&field, &camera, cfg.render.background);
        ppm::save_ppm(&img, &out_dir.join(format!("frame_{frame:04}.ppm")))?;
        let meta = FrameMeta {
            frame,
            time: frame as f64 * data.dt,
            camera: CameraMeta::of(&camera),
            background: cfg.render.background,
        };
        std::fs::write(
            out_dir.join(format!("frame_{frame:04}.meta.json")),
            serde_json::to_string_pretty(&meta)?,
        )?;
    }
    Ok(data.frame_count())
}

/// Lists `frame_%04d.ppm` files of a directory in frame order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames: Vec<(usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {dir:?}"))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(idx) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".ppm"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            frames.push((idx, path));
        }
    }
    frames.sort_by_key(|(i, _)| *i);
    if frames.is_empty() {
        bail!("no frame_NNNN.ppm files in {dir:?}");
    }
    Ok(frames.into_iter().map(|(_, p)| p).collect())
}

fn load_frames(dir: &Path, background: [f64; 3]) -> Result<Vec<Image>> {
    list_frames(dir)?
        .iter()
        .map(|p| {
            let mut img = ppm::load_ppm(p).with_context(|| format!("loading {p:?}"))?;
            img.background = background;
            Ok(img)
        })
        .collect()
}

/// Recovers (E, nu) from observed frames; writes one JSON record per
/// simulate+render evaluation plus the final result.
pub fn cmd_identify(
    cfg: &SceneConfig,
    frames_dir: &Path,
    skinning_path: &Path,
    init_e: f64,
    init_nu: f64,
    out: &Path,
) -> Result<Record> {
    let skinning = load_skinning(skinning_path)?;
    let model = build_model(cfg, &skinning)?;
    let camera = cfg.camera(0)?;
    let reference = FrameSequence {
        frames: load_frames(frames_dir, cfg.render.background)?,
        camera,
        dt: cfg.sim.dt,
    };
    let init = cfg.material()?.with_elastic(init_e, init_nu)?;
    let result = identify_parameters(
        &model,
        &skinning,
        &cfg.conditions(),
        &reference,
        init,
        &cfg.identify_hyper(),
    )?;
    let mut records: Vec<Record> = result
        .evaluations
        .iter()
        .map(|e| Record::Eval {
            iteration: e.iteration,
            log10_e: e.log10_e,
            nu: e.nu,
            loss: e.loss,
        })
        .collect();
    let summary = Record::IdentifyResult {
        log10_e: result.log10_e,
        youngs_modulus: 10f64.powf(result.log10_e),
        nu: result.nu,
        iterations: result.iterations,
        loss_first: *result.loss_curve.first().unwrap(),
        loss_final: *result.loss_curve.last().unwrap(),
    };
    records.push(summary.clone());
    write_records(&records, out)?;
    Ok(summary)
}

/// PSNR/SSIM per frame plus means between two rendered directories.
pub fn cmd_evaluate(rendered_dir: &Path, reference_dir: &Path, out: &Path) -> Result<Record> {
    let rendered = load_frames(rendered_dir, [0.0; 3])?;
    let reference = load_frames(reference_dir, [0.0; 3])?;
    if rendered.len() != reference.len() {
        bail!(
            "frame counts differ: {} rendered vs {} reference",
            rendered.len(),
            reference.len()
        );
    }
    let mut records = Vec::new();
    let mut sum_psnr = 0.0;
    let mut sum_ssim = 0.0;
    for (i, (a, b)) in rendered.iter().zip(&reference).enumerate() {
        let p = psnr(a, b)?;
        let s = ssim(a, b)?;
        sum_psnr += p;
        sum_ssim += s;
        records.push(Record::FrameMetrics {
            frame: i,
            psnr: p,
            ssim: s,
        });
    }
    let n = rendered.len() as f64;
    let summary = Record::MetricsSummary {
        frames: rendered.len(),
        mean_psnr: sum_psnr / n,
        mean_ssim: sum_ssim / n,
    };
    records.push(summary.clone());
    write_records(&records, out)?;
    Ok(summary)
}

/// Fits the rest field to multi-view frame-0 references. `view_dirs[i]` must
/// contain a `frame_0000.ppm` rendered from config camera `i`.
pub fn cmd_fit_rest(cfg: &SceneConfig, view_dirs: &[PathBuf], out_field: &Path) -> Result<Record> {
    if view_dirs.len() < 2 {
        bail!("fit-rest needs at least 2 views, got {}", view_dirs.len());
    }
    let mut views: Vec<(Camera, Image)> = Vec::with_capacity(view_dirs.len());
    for (i, dir) in view_dirs.iter().enumerate() {
        let camera = cfg.camera(i)?;
        let mut img = ppm::load_ppm(&dir.join("frame_0000.ppm"))
            .with_context(|| format!("view {i} in {dir:?}"))?;
        img.background = cfg.render.background;
        views.push((camera, img));
    }
    let init = build_rest_field(cfg)?;
    let result = fit_rest_field(&views, &init, &cfg.fit_rest_hyper())?;
    save_field(&result.field, out_field)?;
    // loss_final belongs to the returned (best) field, not the last iterate.
    let best = result.loss_curve.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Record::FitRest {
        iterations: result.loss_curve.len().saturating_sub(1),
        loss_first: *result.loss_curve.first().unwrap(),
        loss_final: best,
    })
}

/// Self-consistency loss of a directory of frames against a fresh simulation
/// render (used by tests and the ablation harness).
pub fn sequence_loss(cfg: &SceneConfig, skinning: &SkinningField, frames_dir: &Path) -> Result<f64> {
    let model = build_model(cfg, skinning)?;
    let reference = FrameSequence {
        frames: load_frames(frames_dir, cfg.render.background)?,
        camera: cfg.camera(0)?,
        dt: cfg.sim.dt,
    };
    let traj = simulate(&model, &cfg.conditions(), reference.frames.len() - 1, cfg.sim.dt)?;
    let rendered = FrameSequence {
        frames: traj
            .frames
            .iter()
            .map(|f| render(&f.field, &reference.camera, cfg.render.background))
            .collect(),
        camera: cfg.camera(0)?,
        dt: cfg.sim.dt,
    };
    Ok(loss_sim(&rendered, &reference)?)
}

/// Convenience used by tests: ring of cameras around the scene center.
pub fn ring_camera(
    center: Vector3<f64>,
    radius: f64,
    height: f64,
    angle: f64,
    focal: f64,
    width: usize,
    height_px: usize,
) -> Result<Camera> {
    Ok(Camera::look_at(
        center + Vector3::new(radius * angle.cos(), height, radius * angle.sin()),
        center,
        Vector3::new(0.0, 1.0, 0.0),
        focal,
        width,
        height_px,
        0.01,
    )?)
}
