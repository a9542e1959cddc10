//! Neural skinning weights: a small MLP mapping material-space positions to M
//! handle weights, the physics-aware reduced basis of the simulator.

pub mod cubature;
pub mod mlp;
mod train;

pub use cubature::{sample_cubature, CubatureSet};
pub use train::{gram_matrix, train_skinning, TrainHyper, TrainReport};

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use mlp::Architecture;

#[derive(Debug, Error)]
pub enum SkinningError {
    #[error("empty field: rejection sampling accepted {accepted} of {proposed} proposals")]
    EmptyField { accepted: usize, proposed: usize },
    #[error("non-finite loss at step {step}: elastic={elastic} ortho={ortho}")]
    NonFiniteLoss { step: usize, elastic: f64, ortho: f64 },
    #[error("parameter count mismatch: expected {expected}, got {got}")]
    ParamMismatch { expected: usize, got: usize },
}

/// Axis-aligned box used to normalize network inputs to [-1, 1]^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainBox {
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl DomainBox {
    pub fn new(lo: Vector3<f64>, hi: Vector3<f64>) -> Self {
        Self { lo, hi }
    }

    /// `d(normalized)/d(world)` diagonal; extents are floored to avoid a
    /// division blow-up on flat boxes.
    fn scale(&self) -> Vector3<f64> {
        let ext = (self.hi - self.lo).map(|e| e.max(1e-9));
        Vector3::new(2.0 / ext.x, 2.0 / ext.y, 2.0 / ext.z)
    }

    fn normalize(&self, x: &Vector3<f64>) -> Vector3<f64> {
        let s = self.scale();
        let c = (self.lo + self.hi) * 0.5;
        Vector3::new(s.x * (x.x - c.x), s.y * (x.y - c.y), s.z * (x.z - c.z))
    }
}

/// Weight evaluation at one point: the M handle weights and their spatial
/// Jacobian (M x 3) obtained by forward differentiation through the network.
#[derive(Debug, Clone)]
pub struct WeightEval {
    pub weights: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

/// The trained (or manually constructed) skinning basis `W: R^3 -> R^M`.
#[derive(Debug, Clone)]
pub struct SkinningField {
    arch: Architecture,
    params: Vec<f64>,
    num_handles: usize,
    domain_box: DomainBox,
}

impl SkinningField {
    /// Random initialization with the final layer zeroed, so W == 0 and the
    /// reduced map is exactly the identity at the start of training.
    pub fn init(num_handles: usize, domain_box: DomainBox, seed: u64) -> Self {
        let arch = Architecture::standard(num_handles);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; arch.param_count()];
        let mut off = 0;
        for l in 0..arch.num_layers() {
            let n_in = arch.sizes[l];
            let n_out = arch.sizes[l + 1];
            let bound = (6.0 / n_in as f64).sqrt();
            let last = l + 1 == arch.num_layers();
            for k in 0..n_in * n_out {
                params[off + k] = if last {
                    0.0
                } else {
                    (rng.gen::<f64>() * 2.0 - 1.0) * bound
                };
            }
            off += n_in * n_out + n_out; // biases stay zero
        }
        Self {
            arch,
            params,
            num_handles,
            domain_box,
        }
    }

    /// Replaces the final layer weights with uniform noise of the given scale.
    pub(crate) fn seed_final_layer(&mut self, scale: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last_in = self.arch.sizes[self.arch.num_layers() - 1];
        let m = self.num_handles;
        let off = self.arch.param_count() - (last_in * m + m);
        for k in off..off + last_in * m {
            self.params[k] = (rng.gen::<f64>() * 2.0 - 1.0) * scale;
        }
    }

    /// Random nonzero weights everywhere; useful as an arbitrary (untrained)
    /// but valid deformation basis.
    pub fn random(num_handles: usize, domain_box: DomainBox, seed: u64) -> Self {
        let mut field = Self::init(num_handles, domain_box, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
        let off = field.arch.param_count()
            - (field.arch.sizes[field.arch.num_layers() - 1] * num_handles + num_handles);
        let n_in = field.arch.sizes[field.arch.num_layers() - 1];
        let bound = (1.0 / n_in as f64).sqrt();
        for k in off..off + n_in * num_handles {
            field.params[k] = (rng.gen::<f64>() * 2.0 - 1.0) * bound;
        }
        field
    }

    /// A single handle with W == 1 everywhere and zero spatial gradient:
    /// all network weights zero, final bias one. The reduced map is then one
    /// exact affine transform of the whole domain.
    pub fn constant_one(domain_box: DomainBox) -> Self {
        let arch = Architecture::standard(1);
        let mut params = vec![0.0; arch.param_count()];
        let n = params.len();
        params[n - 1] = 1.0; // final bias; ELU is skipped on the output layer
        Self {
            arch,
            params,
            num_handles: 1,
            domain_box,
        }
    }

    pub fn from_parts(
        sizes: Vec<usize>,
        params: Vec<f64>,
        domain_box: DomainBox,
    ) -> Result<Self, SkinningError> {
        let arch = Architecture { sizes };
        if params.len() != arch.param_count() {
            return Err(SkinningError::ParamMismatch {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        let num_handles = *arch.sizes.last().unwrap();
        Ok(Self {
            arch,
            params,
            num_handles,
            domain_box,
        })
    }

    pub fn num_handles(&self) -> usize {
        self.num_handles
    }

    pub fn domain_box(&self) -> DomainBox {
        self.domain_box
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.arch.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub(crate) fn arch(&self) -> &Architecture {
        &self.arch
    }

    /// Evaluates W(X) and its analytic spatial Jacobian.
    pub fn eval(&self, x: &Vector3<f64>) -> WeightEval {
        let normalized = self.domain_box.normalize(x);
        let scale = self.domain_box.scale();
        let (weights, jacobian) =
            mlp::forward_with_jacobian(&self.arch, &self.params, &normalized, &scale);
        WeightEval { weights, jacobian }
    }

    pub(crate) fn normalized_input(&self, x: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
        (self.domain_box.normalize(x), self.domain_box.scale())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> DomainBox {
        DomainBox::new(Vector3::new(-0.5, -0.5, -0.5), Vector3::new(0.5, 0.5, 0.5))
    }

    #[test]
    fn zero_init_outputs_zero_everywhere() {
        let field = SkinningField::init(4, unit_box(), 71);
        for x in [
            Vector3::zeros(),
            Vector3::new(0.4, -0.3, 0.2),
            Vector3::new(5.0, 5.0, 5.0),
        ] {
            let e = field.eval(&x);
            assert!(e.weights.iter().all(|&w| w == 0.0));
            assert!(e.jacobian.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn evaluation_is_deterministic() {
        let field = SkinningField::random(3, unit_box(), 42);
        let x = Vector3::new(0.17, -0.21, 0.05);
        let a = field.eval(&x);
        let b = field.eval(&x);
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.jacobian, b.jacobian);
    }

    #[test]
    fn constant_field_is_one_with_zero_gradient() {
        let field = SkinningField::constant_one(unit_box());
        for x in [Vector3::zeros(), Vector3::new(0.3, 0.1, -0.4)] {
            let e = field.eval(&x);
            assert_eq!(e.weights.len(), 1);
            assert_eq!(e.weights[0], 1.0);
            assert!(e.jacobian.iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn spatial_jacobian_matches_finite_differences() {
        let field = SkinningField::random(5, unit_box(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = 1e-5;
        let mut max_err = 0.0_f64;
        for _ in 0..50 {
            let x = Vector3::new(
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            );
            let e = field.eval(&x);
            for c in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[c] += h;
                xm[c] -= h;
                let fp = field.eval(&xp).weights;
                let fm = field.eval(&xm).weights;
                for m in 0..5 {
                    let num = (fp[m] - fm[m]) / (2.0 * h);
                    max_err = max_err.max((num - e.jacobian[(m, c)]).abs());
                }
            }
        }
        assert!(max_err < 1e-4, "max jacobian error {max_err}");
    }
}
