//! Losses, image metrics, rest-field fitting, and physical parameter
//! identification from rendered frame sequences.

mod fit_rest;
mod identify;
pub mod metrics;

pub use fit_rest::{fit_rest_field, FitRestHyper, FitRestResult};
pub use identify::{identify_parameters, IdentifyHyper, IdentifyRecord};
pub use metrics::{psnr, ssim, PSNR_SENTINEL};

use thiserror::Error;

use crate::render::{Camera, Image, RenderError};

#[derive(Debug, Error)]
pub enum SysIdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at iteration {iteration}: {value}")]
    NonFiniteLoss { iteration: usize, value: f64 },
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Material(#[from] crate::materials::MaterialError),
}

/// A rendered (or observed) sequence of frames from one camera.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<Image>,
    pub camera: Camera,
    pub dt: f64,
}

impl FrameSequence {
    pub fn validate(&self) -> Result<(), SysIdError> {
        if self.frames.is_empty() {
            return Err(SysIdError::ShapeMismatch("no frames".into()));
        }
        let (w, h) = (self.frames[0].width, self.frames[0].height);
        for f in &self.frames {
            if f.width != w || f.height != h {
                return Err(SysIdError::ShapeMismatch(format!(
                    "frame sizes differ: {}x{} vs {w}x{h}",
                    f.width, f.height
                )));
            }
        }
        Ok(())
    }
}

/// Mean squared pixel distance over frames and pixels:
/// `(1/SP) sum_s sum_p ||C - C_gt||^2` (channels summed inside the norm).
pub fn loss_sim(rendered: &FrameSequence, reference: &FrameSequence) -> Result<f64, SysIdError> {
    rendered.validate()?;
    reference.validate()?;
    if rendered.frames.len() != reference.frames.len() {
        return Err(SysIdError::ShapeMismatch(format!(
            "frame counts differ: {} vs {}",
            rendered.frames.len(),
            reference.frames.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (a, b) in rendered.frames.iter().zip(&reference.frames) {
        a.same_shape(b)
            .map_err(|e| SysIdError::ShapeMismatch(e.to_string()))?;
        for (pa, pb) in a.pixels.iter().zip(&b.pixels) {
            for c in 0..3 {
                let d = pa[c] - pb[c];
                total += d * d;
            }
        }
        count += a.pixels.len();
    }
    Ok(total / count as f64)
}

/// Outcome of a parameter-identification run.
#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub log10_e: f64,
    pub nu: f64,
    /// Best-so-far loss after each outer iteration (non-increasing).
    pub loss_curve: Vec<f64>,
    pub iterations: usize,
    /// One record per simulate+render evaluation, in evaluation order.
    pub evaluations: Vec<identify::IdentifyRecord>,
}

impl IdentificationResult {
    /// Absolute errors in the Table-1 metric: (|d log10 E|, |d nu|).
    pub fn mae_against(&self, e_true: f64, nu_true: f64) -> (f64, f64) {
        (
            (self.log10_e - e_true.log10()).abs(),
            (self.nu - nu_true).abs(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};

    fn seq(frames: Vec<Image>) -> FrameSequence {
        FrameSequence {
            frames,
            camera: Camera::new(
                Vector3::new(0.0, 0.0, -1.0),
                Matrix3::identity(),
                32.0,
                10,
                10,
                0.01,
            )
            .unwrap(),
            dt: 0.02,
        }
    }

    #[test]
    fn identical_sequences_have_zero_loss() {
        let img = Image::solid(10, 10, [0.3, 0.3, 0.3]);
        let a = seq(vec![img.clone(), img.clone()]);
        let b = seq(vec![img.clone(), img]);
        assert_eq!(loss_sim(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn gray_vs_black_loss_is_three_quarters() {
        let gray = Image::solid(10, 10, [0.5, 0.5, 0.5]);
        let black = Image::solid(10, 10, [0.0, 0.0, 0.0]);
        let a = seq(vec![gray]);
        let b = seq(vec![black]);
        assert!((loss_sim(&a, &b).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn single_pixel_unit_difference() {
        let black = Image::solid(10, 10, [0.0, 0.0, 0.0]);
        let mut one = black.clone();
        one.at_mut(3, 7)[0] = 1.0;
        let a = seq(vec![one]);
        let b = seq(vec![black]);
        assert!((loss_sim(&a, &b).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_error() {
        let a = seq(vec![Image::solid(10, 10, [0.0; 3])]);
        let b = seq(vec![Image::solid(9, 10, [0.0; 3])]);
        assert!(matches!(
            loss_sim(&a, &b),
            Err(SysIdError::ShapeMismatch(_))
        ));
    }
}
