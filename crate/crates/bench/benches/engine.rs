//! Hot-path benchmarks: hull construction, occupancy evaluation, one rendered
//! frame, and one implicit-Euler timestep.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use convexdyn_core::convex::{compute_hull, smooth_sdf, ConvexField, ConvexPrimitive, HalfSpaceSet};
use convexdyn_core::materials::MaterialParams;
use convexdyn_core::render::{render, Camera};
use convexdyn_core::sim::{solve_timestep, NewtonSettings, ReducedModel, ReducedState, SceneConditions};
use convexdyn_core::skinning::{sample_cubature, DomainBox, SkinningField};

fn random_cloud(k: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| {
            Vector3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            )
        })
        .collect()
}

fn bench_hull(c: &mut Criterion) {
    let clouds: Vec<Vec<Vector3<f64>>> = (0..16).map(|i| random_cloud(6 + i % 11, i as u64)).collect();
    c.bench_function("compute_hull_6_16_points", |b| {
        b.iter(|| {
            for cloud in &clouds {
                black_box(compute_hull(black_box(cloud)).unwrap());
            }
        })
    });
}

fn bench_occupancy(c: &mut Criterion) {
    let planes = compute_hull(&random_cloud(12, 3)).unwrap();
    let hs = HalfSpaceSet { planes };
    let queries = random_cloud(256, 9);
    c.bench_function("smooth_sdf_256_queries", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for q in &queries {
                acc += smooth_sdf(black_box(&hs), q, 300.0);
            }
            black_box(acc)
        })
    });
}

fn demo_scene() -> (ReducedModel, SceneConditions, ConvexField, Camera) {
    let mut prims = Vec::new();
    for i in 0..5 {
        let center = Vector3::new(-0.2 + 0.1 * i as f64, 0.25, 0.0);
        let pts: Vec<Vector3<f64>> = random_cloud(6, i as u64 + 40)
            .into_iter()
            .map(|p| center + 0.08 * p)
            .collect();
        prims.push(ConvexPrimitive::new(pts, [0.7, 0.3, 0.2], 1.0, 400.0, 3.0).unwrap());
    }
    let field = ConvexField::from_rest(prims);
    let (lo, hi) = field.rest_bbox().unwrap();
    let skin = SkinningField::random(10, DomainBox::new(lo, hi), 7);
    let material = MaterialParams::new(8000.0, 0.4, 1000.0).unwrap();
    let cub = sample_cubature(&field, 300, material.density, 5).unwrap();
    let model = ReducedModel::new(field.clone(), &skin, material, cub).unwrap();
    let conditions = SceneConditions {
        gravity: Vector3::new(0.0, -9.8, 0.0),
        ..Default::default()
    };
    let camera = Camera::look_at(
        Vector3::new(0.0, 0.3, -1.0),
        Vector3::new(0.0, 0.2, 0.0),
        Vector3::new(0.0, 1.0, 0.0),
        96.0,
        64,
        64,
        0.01,
    )
    .unwrap();
    (model, conditions, field, camera)
}

fn bench_render(c: &mut Criterion) {
    let (_, _, field, camera) = demo_scene();
    c.bench_function("render_64x64_5_primitives", |b| {
        b.iter(|| black_box(render(black_box(&field), &camera, [1.0, 1.0, 1.0])))
    });
}

fn bench_timestep(c: &mut Criterion) {
    let (model, conditions, _, _) = demo_scene();
    let state = ReducedState::new(10, 0.01);
    let settings = NewtonSettings::default();
    c.bench_function("solve_timestep_m10_n300", |b| {
        b.iter(|| black_box(solve_timestep(&model, &state, &conditions, &settings).unwrap()))
    });
}

criterion_group!(benches, bench_hull, bench_occupancy, bench_render, bench_timestep);
criterion_main!(benches);
