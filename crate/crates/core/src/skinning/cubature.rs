//! Volume samples for the energy and mass integrals: rejection sampling inside
//! the union of rest hulls, weighted by the Monte Carlo volume estimate.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SkinningError;
use crate::convex::ConvexField;

/// Material-space volume samples. `weights` sum to the estimated rest volume;
/// `masses` are `density * weight`.
#[derive(Debug, Clone)]
pub struct CubatureSet {
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
    pub masses: Vec<f64>,
}

impl CubatureSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

const MAX_PROPOSALS: usize = 10_000_000;
const MIN_ACCEPT_RATE: f64 = 1e-4;

/// Rejection-samples `n` points uniformly inside the union of rest hulls
/// (accepted when the max-over-primitives occupancy exceeds 0.5). Every sample
/// gets the same weight `V_est / n` where `V_est` is the accepted-region
/// volume estimate.
pub fn sample_cubature(
    rest_field: &ConvexField,
    n: usize,
    density: f64,
    seed: u64,
) -> Result<CubatureSet, SkinningError> {
    let (lo, hi) = rest_field
        .rest_bbox()
        .ok_or(SkinningError::EmptyField {
            accepted: 0,
            proposed: 0,
        })?;
    let ext = hi - lo;
    let box_vol = ext.x * ext.y * ext.z;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n);
    let mut proposed = 0usize;
    while points.len() < n {
        proposed += 1;
        if proposed > MAX_PROPOSALS
            || (proposed >= 100_000 && (points.len() as f64) < MIN_ACCEPT_RATE * proposed as f64)
        {
            return Err(SkinningError::EmptyField {
                accepted: points.len(),
                proposed,
            });
        }
        let x = Vector3::new(
            lo.x + rng.gen::<f64>() * ext.x,
            lo.y + rng.gen::<f64>() * ext.y,
            lo.z + rng.gen::<f64>() * ext.z,
        );
        if rest_field.rest_occupancy(&x) > 0.5 {
            points.push(x);
        }
    }
    let volume = box_vol * n as f64 / proposed as f64;
    let w = volume / n as f64;
    let weights = vec![w; n];
    let masses = vec![density * w; n];
    Ok(CubatureSet {
        points,
        weights,
        masses,
    })
}
