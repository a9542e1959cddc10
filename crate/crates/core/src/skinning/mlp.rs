//! Small fully-connected network with ELU activations, evaluated together with
//! its spatial Jacobian by forward-mode differentiation.
//!
//! Training additionally needs gradients of losses that depend on both the
//! outputs and the spatial Jacobian, so the backward pass here differentiates
//! the (forward + Jacobian) computation: given dL/dout and dL/dJ it returns
//! dL/dtheta.

use nalgebra::{DMatrix, DVector, Vector3};

/// Layer sizes including input (3) and output (M).
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub sizes: Vec<usize>,
}

impl Architecture {
    /// The default trunk: 6 hidden layers of 64 units.
    pub fn standard(num_handles: usize) -> Self {
        Self {
            sizes: vec![3, 64, 64, 64, 64, 64, 64, num_handles],
        }
    }

    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer `l`'s weight matrix and bias in the flat parameter vector.
    fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_d(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

fn elu_dd(x: f64) -> f64 {
    if x > 0.0 {
        0.0
    } else {
        x.exp()
    }
}

/// Offsets of layer `l`'s row-major weights and bias, plus its input width.
fn w_at(arch: &Architecture, l: usize) -> (usize, usize, usize) {
    let (w_off, b_off) = arch.offsets(l);
    (w_off, b_off, arch.sizes[l])
}

/// Forward evaluation with spatial Jacobian.
///
/// `input_scale` is the diagonal Jacobian of the input normalization, i.e. the
/// derivative of the normalized input with respect to world position.
pub fn forward_with_jacobian(
    arch: &Architecture,
    params: &[f64],
    normalized: &Vector3<f64>,
    input_scale: &Vector3<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let mut h = DVector::from_iterator(3, normalized.iter().cloned());
    let mut jac = DMatrix::zeros(3, 3);
    for i in 0..3 {
        jac[(i, i)] = input_scale[i];
    }
    let n_layers = arch.num_layers();
    for l in 0..n_layers {
        let (w_off, b_off, n_in) = w_at(arch, l);
        let n_out = arch.sizes[l + 1];
        let mut a = DVector::zeros(n_out);
        let mut ja = DMatrix::zeros(n_out, 3);
        for o in 0..n_out {
            let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
            let mut acc = params[b_off + o];
            let mut jx = 0.0;
            let mut jy = 0.0;
            let mut jz = 0.0;
            for (i, &w) in row.iter().enumerate() {
                acc += w * h[i];
                jx += w * jac[(i, 0)];
                jy += w * jac[(i, 1)];
                jz += w * jac[(i, 2)];
            }
            a[o] = acc;
            ja[(o, 0)] = jx;
            ja[(o, 1)] = jy;
            ja[(o, 2)] = jz;
        }
        if l + 1 < n_layers {
            for o in 0..n_out {
                let d = elu_d(a[o]);
                ja[(o, 0)] *= d;
                ja[(o, 1)] *= d;
                ja[(o, 2)] *= d;
                a[o] = elu(a[o]);
            }
        }
        h = a;
        jac = ja;
    }
    (h, jac)
}

/// Saved intermediates of one forward evaluation, for the backward pass.
pub struct ForwardCache {
    /// Post-activation values per layer, starting with the normalized input.
    pub acts: Vec<DVector<f64>>,
    /// Pre-activation values per layer.
    pub pre: Vec<DVector<f64>>,
    /// Pre-activation spatial Jacobians per layer (before the diag(elu') scale).
    pub pre_jac: Vec<DMatrix<f64>>,
    /// Post-activation spatial Jacobians per layer, starting with the input scale.
    pub jacs: Vec<DMatrix<f64>>,
}

pub fn forward_cached(
    arch: &Architecture,
    params: &[f64],
    normalized: &Vector3<f64>,
    input_scale: &Vector3<f64>,
) -> ForwardCache {
    let mut acts = Vec::with_capacity(arch.num_layers() + 1);
    let mut jacs = Vec::with_capacity(arch.num_layers() + 1);
    let mut pre = Vec::with_capacity(arch.num_layers());
    let mut pre_jac = Vec::with_capacity(arch.num_layers());
    acts.push(DVector::from_iterator(3, normalized.iter().cloned()));
    let mut j0 = DMatrix::zeros(3, 3);
    for i in 0..3 {
        j0[(i, i)] = input_scale[i];
    }
    jacs.push(j0);

    let n_layers = arch.num_layers();
    for l in 0..n_layers {
        let (w_off, b_off, n_in) = w_at(arch, l);
        let n_out = arch.sizes[l + 1];
        let h = &acts[l];
        let jac = &jacs[l];
        let mut a = DVector::zeros(n_out);
        let mut ja = DMatrix::zeros(n_out, 3);
        for o in 0..n_out {
            let row = &params[w_off + o * n_in..w_off + (o + 1) * n_in];
            let mut acc = params[b_off + o];
            let mut jx = 0.0;
            let mut jy = 0.0;
            let mut jz = 0.0;
            for (i, &w) in row.iter().enumerate() {
                acc += w * h[i];
                jx += w * jac[(i, 0)];
                jy += w * jac[(i, 1)];
                jz += w * jac[(i, 2)];
            }
            a[o] = acc;
            ja[(o, 0)] = jx;
            ja[(o, 1)] = jy;
            ja[(o, 2)] = jz;
        }
        pre.push(a.clone());
        pre_jac.push(ja.clone());
        if l + 1 < n_layers {
            for o in 0..n_out {
                let d = elu_d(a[o]);
                ja[(o, 0)] *= d;
                ja[(o, 1)] *= d;
                ja[(o, 2)] *= d;
                a[o] = elu(a[o]);
            }
        }
        acts.push(a);
        jacs.push(ja);
    }
    ForwardCache {
        acts,
        pre,
        pre_jac,
        jacs,
    }
}

/// Accumulates dL/dtheta into `grad` given adjoints of the outputs and of the
/// output spatial Jacobian. `g_out` may be zero-length to skip that path.
pub fn backward(
    arch: &Architecture,
    params: &[f64],
    cache: &ForwardCache,
    g_out: &DVector<f64>,
    g_jac: &DMatrix<f64>,
    grad: &mut [f64],
) {
    let n_layers = arch.num_layers();
    // Adjoints of the post-activation value and post-activation Jacobian.
    let mut h_bar = g_out.clone();
    let mut j_bar = g_jac.clone();

    for l in (0..n_layers).rev() {
        let (w_off, b_off, n_in) = w_at(arch, l);
        let n_out = arch.sizes[l + 1];
        let h_in = &cache.acts[l];
        let j_in = &cache.jacs[l];
        let last = l + 1 == n_layers;

        // Through the activation: a_bar and the adjoint of U = W * J_in.
        let mut a_bar = DVector::zeros(n_out);
        let mut u_bar = DMatrix::zeros(n_out, 3);
        if last {
            a_bar.copy_from(&h_bar);
            u_bar.copy_from(&j_bar);
        } else {
            let a = &cache.pre[l];
            let u = &cache.pre_jac[l];
            for o in 0..n_out {
                let d = elu_d(a[o]);
                let dd = elu_dd(a[o]);
                let mut dotj = 0.0;
                for c in 0..3 {
                    u_bar[(o, c)] = d * j_bar[(o, c)];
                    dotj += u[(o, c)] * j_bar[(o, c)];
                }
                a_bar[o] = d * h_bar[o] + dd * dotj;
            }
        }

        // Parameter gradients and input adjoints.
        let mut h_bar_next = DVector::zeros(n_in);
        let mut j_bar_next = DMatrix::zeros(n_in, 3);
        for o in 0..n_out {
            grad[b_off + o] += a_bar[o];
            let row_off = w_off + o * n_in;
            for i in 0..n_in {
                let w = params[row_off + i];
                let mut g = a_bar[o] * h_in[i];
                for c in 0..3 {
                    g += u_bar[(o, c)] * j_in[(i, c)];
                    j_bar_next[(i, c)] += w * u_bar[(o, c)];
                }
                grad[row_off + i] += g;
                h_bar_next[i] += w * a_bar[o];
            }
        }
        h_bar = h_bar_next;
        j_bar = j_bar_next;
    }
}
