//! Forward-mode input Jacobians and reverse-mode differentiation through them.

use super::{Network, ParameterSet, Trace};
use crate::error::{check_dim, Result};
use crate::matrix::{dot, Matrix};

/// `∂output/∂input` at one point; row `j` is the gradient of output `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobianBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl JacobianBlock {
    pub fn from_matrix(m: Matrix) -> Self {
        JacobianBlock {
            rows: m.rows(),
            cols: m.cols(),
            data: m.into_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.data.clone()).unwrap()
    }
}

/// Buffers for a forward pass that also carries the input Jacobian of
/// every layer, plus scratch for the reverse sweep through it.
#[derive(Clone, Debug, Default)]
pub struct JacobianTrace {
    base: Trace,
    k: usize,
    /// `pre[l] = W_l J_{l-1}`, the Jacobian of the pre-activation of layer `l`.
    pre: Vec<Vec<f64>>,
    /// `jac[l] = diag(σ'_l) pre[l]`.
    jac: Vec<Vec<f64>>,
    jbar: Vec<f64>,
    jbar_prev: Vec<f64>,
    abar: Vec<f64>,
    abar_prev: Vec<f64>,
    mbar: Vec<f64>,
    zbar: Vec<f64>,
}

impl JacobianTrace {
    pub fn output(&self) -> &[f64] {
        self.base.output()
    }

    /// Row-major `output_width × input_width` Jacobian of the traced point.
    pub fn jacobian_slice(&self) -> &[f64] {
        self.jac.last().map_or(&[], |v| v.as_slice())
    }

    pub fn input_width(&self) -> usize {
        self.k
    }

    /// The plain forward trace, for an ordinary reverse sweep.
    pub fn base_mut(&mut self) -> &mut Trace {
        &mut self.base
    }

    pub(crate) fn base_forward(&mut self, net: &Network, x: &[f64]) {
        net.forward_traced(x, &mut self.base);
    }

    pub fn jacobian(&self) -> JacobianBlock {
        let data = self.jacobian_slice().to_vec();
        JacobianBlock {
            rows: data.len() / self.k.max(1),
            cols: self.k,
            data,
        }
    }
}

impl Network {
    /// Forward pass that also propagates `J_l = diag(σ'(z_l)) W_l J_{l-1}`.
    pub fn jacobian_traced(&self, x: &[f64], trace: &mut JacobianTrace) {
        self.forward_traced(x, &mut trace.base);
        let k = self.input_width();
        trace.k = k;
        let n_layers = self.spec.num_layers();
        trace.pre.resize_with(n_layers, Vec::new);
        trace.jac.resize_with(n_layers, Vec::new);
        for l in 0..n_layers {
            let layer = &self.params.layers[l];
            let act = self.spec.activations[l];
            let (done, rest) = trace.jac.split_at_mut(l);
            let jac = &mut rest[0];
            let pre = &mut trace.pre[l];
            pre.clear();
            pre.resize(layer.fan_out * k, 0.0);
            if l == 0 {
                pre.copy_from_slice(&layer.weight);
            } else {
                let prev = &done[l - 1];
                for i in 0..layer.fan_out {
                    let out = &mut pre[i * k..(i + 1) * k];
                    for (p, &w) in layer.weight_row(i).iter().enumerate() {
                        if w == 0.0 {
                            continue;
                        }
                        for (o, &jp) in out.iter_mut().zip(&prev[p * k..(p + 1) * k]) {
                            *o += w * jp;
                        }
                    }
                }
            }
            jac.clear();
            jac.extend_from_slice(pre);
            let a = &trace.base.acts[l + 1];
            for i in 0..layer.fan_out {
                let s = act.derivative_from_output(a[i]);
                jac[i * k..(i + 1) * k].iter_mut().for_each(|v| *v *= s);
            }
        }
    }

    /// Reverse sweep for the scalar `<seed, J(x)>` (Frobenius inner product
    /// with the output Jacobian), accumulating its parameter gradient into `grad`.
    pub fn jacobian_backward(&self, trace: &mut JacobianTrace, seed: &[f64], grad: &mut ParameterSet) {
        let k = trace.k;
        let n_layers = self.spec.num_layers();
        let JacobianTrace {
            base,
            pre,
            jac,
            jbar,
            jbar_prev,
            abar,
            abar_prev,
            mbar,
            zbar,
            ..
        } = trace;
        jbar.clear();
        jbar.extend_from_slice(seed);
        abar.clear();
        abar.resize(self.output_width(), 0.0);
        for l in (0..n_layers).rev() {
            let layer = &self.params.layers[l];
            let act = self.spec.activations[l];
            let (n, m) = (layer.fan_out, layer.fan_in);
            let a_out = &base.acts[l + 1];
            let a_in = &base.acts[l];
            let pre_l = &pre[l];
            mbar.clear();
            mbar.resize(n * k, 0.0);
            zbar.clear();
            zbar.resize(n, 0.0);
            for i in 0..n {
                let s = act.derivative_from_output(a_out[i]);
                let s2 = act.second_derivative_from_output(a_out[i]);
                let jb = &jbar[i * k..(i + 1) * k];
                let sbar = dot(jb, &pre_l[i * k..(i + 1) * k]);
                for (mb, &j) in mbar[i * k..(i + 1) * k].iter_mut().zip(jb) {
                    *mb = s * j;
                }
                zbar[i] = abar[i] * s + sbar * s2;
            }
            let gl = &mut grad.layers[l];
            for i in 0..n {
                gl.bias[i] += zbar[i];
                let zb = zbar[i];
                let mb = &mbar[i * k..(i + 1) * k];
                let grow = &mut gl.weight[i * m..(i + 1) * m];
                if l == 0 {
                    for (p, g) in grow.iter_mut().enumerate() {
                        *g += zb * a_in[p] + mb[p];
                    }
                } else {
                    let jprev = &jac[l - 1];
                    for (p, g) in grow.iter_mut().enumerate() {
                        *g += zb * a_in[p] + dot(mb, &jprev[p * k..(p + 1) * k]);
                    }
                }
            }
            if l == 0 {
                break;
            }
            abar_prev.clear();
            abar_prev.resize(m, 0.0);
            jbar_prev.clear();
            jbar_prev.resize(m * k, 0.0);
            for i in 0..n {
                let zb = zbar[i];
                let mb = &mbar[i * k..(i + 1) * k];
                for (p, &w) in layer.weight_row(i).iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    abar_prev[p] += w * zb;
                    for (jp, &v) in jbar_prev[p * k..(p + 1) * k].iter_mut().zip(mb) {
                        *jp += w * v;
                    }
                }
            }
            std::mem::swap(abar, abar_prev);
            std::mem::swap(jbar, jbar_prev);
        }
    }
}

/// `Σ_{j,k} <J_u[j,:], J_c[k,:]>²` for row-major Jacobians sharing `cols`.
/// When `seed_u` is given it receives `∂/∂J_u = 2 (J_u J_cᵀ) J_c`.
pub(crate) fn penalty_and_seed(
    ju: &[f64],
    jc: &[f64],
    cols: usize,
    mut seed_u: Option<&mut Vec<f64>>,
) -> f64 {
    let du = ju.len() / cols.max(1);
    let dc = jc.len() / cols.max(1);
    if let Some(s) = seed_u.as_deref_mut() {
        s.clear();
        s.resize(du * cols, 0.0);
    }
    let mut total = 0.0;
    for j in 0..du {
        let rj = &ju[j * cols..(j + 1) * cols];
        for c in 0..dc {
            let rc = &jc[c * cols..(c + 1) * cols];
            let ip = dot(rj, rc);
            total += ip * ip;
            if let Some(s) = seed_u.as_deref_mut() {
                for (sv, &v) in s[j * cols..(j + 1) * cols].iter_mut().zip(rc) {
                    *sv += 2.0 * ip * v;
                }
            }
        }
    }
    total
}

/// Sum of squared inner products between every output gradient of
/// `uncommon` and every output gradient of `common` at `x`.
pub fn orthogonality_penalty(uncommon: &Network, common: &Network, x: &[f64]) -> Result<f64> {
    check_dim("orthogonality input widths", common.input_width(), uncommon.input_width())?;
    let ju = uncommon.input_jacobian(x)?;
    let jc = common.input_jacobian(x)?;
    Ok(penalty_and_seed(ju.as_slice(), jc.as_slice(), x.len(), None))
}

/// The penalty and its exact gradient with respect to the uncommon
/// network's parameters; the common network is held constant.
pub fn orthogonality_penalty_gradient(
    uncommon: &Network,
    common: &Network,
    x: &[f64],
) -> Result<(f64, ParameterSet)> {
    check_dim("orthogonality input widths", common.input_width(), uncommon.input_width())?;
    check_dim("network input", uncommon.input_width(), x.len())?;
    let jc = common.input_jacobian(x)?;
    let mut tu = JacobianTrace::default();
    uncommon.jacobian_traced(x, &mut tu);
    let mut seed = Vec::new();
    let value = penalty_and_seed(tu.jacobian_slice(), jc.as_slice(), x.len(), Some(&mut seed));
    let mut grad = uncommon.params().zeros_like();
    uncommon.jacobian_backward(&mut tu, &seed, &mut grad);
    Ok((value, grad))
}
