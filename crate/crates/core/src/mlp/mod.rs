//! Dense feed-forward networks with exact first- and second-order derivatives.
//!
//! A network is a composition of affine layers `z = W a + b` followed by a
//! per-layer activation. Besides the usual forward pass and reverse-mode
//! parameter gradient, this module propagates input Jacobians forward and
//! differentiates functions of those Jacobians back to the parameters,
//! which is what the orthogonality penalty needs.

pub(crate) mod checkpoint;
pub(crate) mod jacobian;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{check_dim, Error, Result};

pub use checkpoint::{read_network, write_network};
pub use jacobian::{
    orthogonality_penalty, orthogonality_penalty_gradient, JacobianBlock, JacobianTrace,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// First derivative expressed through the activation value `a = σ(z)`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    /// Second derivative expressed through the activation value.
    #[inline]
    pub fn second_derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * a * (1.0 - a * a),
            Activation::Identity => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Layer widths (input first, output last) and the activation of each layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl NetworkSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output widths, got {}",
                widths.len()
            )));
        }
        if let Some(i) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("width at position {i} is zero")));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::InvalidSpec(format!(
                "{} layers but {} activations",
                widths.len() - 1,
                activations.len()
            )));
        }
        Ok(NetworkSpec {
            widths,
            activations,
        })
    }

    /// `layers` affine maps with `hidden` units between them; the first
    /// `tanh_layers` are followed by tanh, the rest are linear.
    pub fn mlp(
        input: usize,
        hidden: usize,
        output: usize,
        layers: usize,
        tanh_layers: usize,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidSpec("zero layers".into()));
        }
        if tanh_layers > layers {
            return Err(Error::InvalidSpec(format!(
                "{tanh_layers} tanh layers exceed {layers} layers"
            )));
        }
        let mut widths = vec![input];
        widths.extend(std::iter::repeat(hidden).take(layers - 1));
        widths.push(output);
        let activations = (0..layers)
            .map(|l| {
                if l < tanh_layers {
                    Activation::Tanh
                } else {
                    Activation::Identity
                }
            })
            .collect();
        NetworkSpec::new(widths, activations)
    }

    /// Seven layers, tanh on the first five, identity on the last two.
    pub fn default_deep(input: usize, hidden: usize, output: usize) -> Result<Self> {
        NetworkSpec::mlp(input, hidden, output, 7, 5)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// One affine layer; `weight` is row-major `fan_out × fan_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        DenseLayer {
            fan_in,
            fan_out,
            weight: vec![0.0; fan_in * fan_out],
            bias: vec![0.0; fan_out],
        }
    }

    #[inline]
    pub fn weight_row(&self, i: usize) -> &[f64] {
        &self.weight[i * self.fan_in..(i + 1) * self.fan_in]
    }
}

/// Weights and biases of every layer. Gradients and optimizer moments use
/// the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub layers: Vec<DenseLayer>,
}

impl ParameterSet {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        ParameterSet {
            layers: spec
                .widths
                .windows(2)
                .map(|w| DenseLayer::zeros(w[0], w[1]))
                .collect(),
        }
    }

    /// Uniform `±sqrt(1/fan_in)` for weights and biases, deterministic in `seed`.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(spec, &mut rng)
    }

    pub fn init_with<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Self {
        let mut p = ParameterSet::zeros(spec);
        for layer in &mut p.layers {
            let bound = (1.0 / layer.fan_in as f64).sqrt();
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.fan_in, l.fan_out))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All values, layer by layer, weights (row-major) before biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("flat parameter vector", self.len(), flat.len())?;
        for (dst, src) in self.values_mut().zip(flat) {
            *dst = *src;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &ParameterSet) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// SHA-256 of the bit patterns of every value, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for l in &self.layers {
            h.update((l.fan_in as u64).to_le_bytes());
            h.update((l.fan_out as u64).to_le_bytes());
            for v in l.weight.iter().chain(&l.bias) {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() == spec.num_layers()
            && self
                .layers
                .iter()
                .zip(spec.widths.windows(2))
                .all(|(l, w)| {
                    l.fan_in == w[0]
                        && l.fan_out == w[1]
                        && l.weight.len() == w[0] * w[1]
                        && l.bias.len() == w[1]
                })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Reusable buffers for a forward pass and its reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }

    fn prepare(&mut self, spec: &NetworkSpec) {
        self.acts.resize_with(spec.widths.len(), Vec::new);
        for (a, &w) in self.acts.iter_mut().zip(&spec.widths) {
            a.resize(w, 0.0);
        }
    }
}

/// A network shape together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: ParameterSet,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: ParameterSet) -> Result<Self> {
        if !params.matches(&spec) {
            return Err(Error::InvalidSpec(
                "parameter shapes do not match the network spec".into(),
            ));
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Network { spec, params })
    }

    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let params = ParameterSet::init(&spec, seed);
        Network { spec, params }
    }

    pub fn init_with<R: Rng>(spec: NetworkSpec, rng: &mut R) -> Self {
        let params = ParameterSet::init_with(&spec, rng);
        Network { spec, params }
    }

    pub fn zeros(spec: NetworkSpec) -> Self {
        let params = ParameterSet::zeros(&spec);
        Network { spec, params }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_width(), x.len())?;
        let mut trace = Trace::default();
        self.forward_traced(x, &mut trace);
        Ok(trace.output().to_vec())
    }

    /// Forward pass recording every activation into `trace`.
    /// The caller guarantees `x.len() == input_width()`.
    pub fn forward_traced(&self, x: &[f64], trace: &mut Trace) {
        debug_assert_eq!(x.len(), self.input_width());
        trace.prepare(&self.spec);
        trace.acts[0].copy_from_slice(x);
        for (l, (layer, act)) in self
            .params
            .layers
            .iter()
            .zip(&self.spec.activations)
            .enumerate()
        {
            let (prev, next) = trace.acts.split_at_mut(l + 1);
            let a = &prev[l];
            let out = &mut next[0];
            for (i, o) in out.iter_mut().enumerate() {
                let z = layer.bias[i] + crate::matrix::dot(layer.weight_row(i), a);
                *o = act.apply(z);
            }
        }
    }

    /// Reverse sweep for the scalar `<adjoint, output>`: accumulates the
    /// parameter gradient into `grad` and, if requested, writes the
    /// gradient with respect to the input into `input_adjoint`.
    pub fn backward_traced(
        &self,
        trace: &mut Trace,
        adjoint: &[f64],
        grad: &mut ParameterSet,
        input_adjoint: Option<&mut [f64]>,
    ) {
        let n_layers = self.spec.num_layers();
        let Trace {
            acts,
            delta,
            delta_prev,
        } = trace;
        delta.clear();
        let act = self.spec.activations[n_layers - 1];
        delta.extend(
            adjoint
                .iter()
                .zip(&acts[n_layers])
                .map(|(g, &a)| g * act.derivative_from_output(a)),
        );
        let mut input_adjoint = input_adjoint;
        for l in (0..n_layers).rev() {
            let layer = &self.params.layers[l];
            let gl = &mut grad.layers[l];
            let a_prev = &acts[l];
            for (i, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gl.bias[i] += d;
                let row = &mut gl.weight[i * layer.fan_in..(i + 1) * layer.fan_in];
                for (g, &a) in row.iter_mut().zip(a_prev) {
                    *g += d * a;
                }
            }
            let need_prev = l > 0 || input_adjoint.is_some();
            if !need_prev {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(layer.fan_in, 0.0);
            for (i, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, &w) in delta_prev.iter_mut().zip(layer.weight_row(i)) {
                    *p += d * w;
                }
            }
            if l == 0 {
                if let Some(out) = input_adjoint.take() {
                    out.copy_from_slice(delta_prev);
                }
                break;
            }
            let act = self.spec.activations[l - 1];
            for (p, &a) in delta_prev.iter_mut().zip(&acts[l]) {
                *p *= act.derivative_from_output(a);
            }
            std::mem::swap(delta, delta_prev);
        }
    }

    /// Exact gradient of `<adjoint, forward(x)>` with respect to every weight and bias.
    pub fn param_gradient(&self, x: &[f64], adjoint: &[f64]) -> Result<ParameterSet> {
        check_dim("network input", self.input_width(), x.len())?;
        check_dim("output adjoint", self.output_width(), adjoint.len())?;
        if adjoint.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("output adjoint"));
        }
        let mut trace = Trace::default();
        self.forward_traced(x, &mut trace);
        let mut grad = self.params.zeros_like();
        self.backward_traced(&mut trace, adjoint, &mut grad, None);
        Ok(grad)
    }

    /// Exact Jacobian of the output with respect to the input at `x`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<JacobianBlock> {
        check_dim("network input", self.input_width(), x.len())?;
        let mut trace = JacobianTrace::default();
        self.jacobian_traced(x, &mut trace);
        Ok(trace.jacobian())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(w: &[&[f64]], b: &[f64]) -> Network {
        let rows = w.len();
        let cols = w[0].len();
        let spec = NetworkSpec::new(vec![cols, rows], vec![Activation::Identity]).unwrap();
        let mut p = ParameterSet::zeros(&spec);
        p.layers[0].weight = w.iter().flat_map(|r| r.iter().copied()).collect();
        p.layers[0].bias = b.to_vec();
        Network::new(spec, p).unwrap()
    }

    /// Layer-by-layer evaluation written independently of the traced path.
    fn reference_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (layer, act) in net.params().layers.iter().zip(net.spec().activations()) {
            let mut z = Vec::with_capacity(layer.fan_out);
            for i in 0..layer.fan_out {
                let mut s = layer.bias[i];
                for j in 0..layer.fan_in {
                    s += layer.weight[i * layer.fan_in + j] * a[j];
                }
                z.push(match act {
                    Activation::Tanh => s.tanh(),
                    Activation::Identity => s,
                });
            }
            a = z;
        }
        a
    }

    #[test]
    fn init_shapes() {
        let spec = NetworkSpec::new(vec![2, 3, 1], vec![Activation::Tanh, Activation::Identity])
            .unwrap();
        let p = ParameterSet::init(&spec, 0);
        let shapes: Vec<_> = p.layers.iter().map(|l| (l.fan_out, l.fan_in)).collect();
        assert_eq!(shapes, vec![(3, 2), (1, 3)]);
        assert_eq!(p.layers[0].bias.len(), 3);
        assert_eq!(p.layers[1].bias.len(), 1);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = NetworkSpec::default_deep(4, 30, 5).unwrap();
        let a = ParameterSet::init(&spec, 7);
        let b = ParameterSet::init(&spec, 7);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), ParameterSet::init(&spec, 8).fingerprint());
        for l in &a.layers {
            let bound = (1.0 / l.fan_in as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn deep_spec_has_seven_layers() {
        let spec =
            NetworkSpec::new(vec![4, 30, 30, 30, 30, 30, 30, 5], vec![Activation::Tanh; 7]).unwrap();
        assert_eq!(ParameterSet::init(&spec, 0).layers.len(), 7);
        let d = NetworkSpec::default_deep(4, 30, 5).unwrap();
        assert_eq!(d.widths(), &[4, 30, 30, 30, 30, 30, 30, 5]);
        assert_eq!(
            d.activations(),
            &[
                Activation::Tanh,
                Activation::Tanh,
                Activation::Tanh,
                Activation::Tanh,
                Activation::Tanh,
                Activation::Identity,
                Activation::Identity
            ]
        );
    }

    #[test]
    fn invalid_specs() {
        assert!(NetworkSpec::new(vec![2, 0, 1], vec![Activation::Tanh; 2]).is_err());
        assert!(NetworkSpec::new(vec![2], vec![]).is_err());
        assert!(NetworkSpec::new(vec![2, 3], vec![Activation::Tanh; 2]).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(NetworkSpec::default_deep(3, 5, 2).unwrap());
        assert_eq!(net.forward(&[0.3, -2.0, 9.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let net = linear(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        assert_eq!(net.forward(&[0.25, -4.0]).unwrap(), vec![0.25, -4.0]);
    }

    #[test]
    fn forward_matches_reference() {
        let net = Network::init(NetworkSpec::mlp(3, 6, 2, 4, 3).unwrap(), 11);
        let x = [0.4, -0.7, 0.1];
        let got = net.forward(&x).unwrap();
        let want = reference_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::init(NetworkSpec::mlp(3, 6, 2, 2, 1).unwrap(), 0);
        assert!(matches!(
            net.forward(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_adjoint_zero_gradient() {
        let net = Network::init(NetworkSpec::mlp(3, 4, 2, 3, 2).unwrap(), 2);
        let g = net.param_gradient(&[0.1, 0.2, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let net = linear(&[&[0.5, -1.0, 2.0], &[0.1, 0.2, 0.3]], &[0.0, 1.0]);
        let x = [1.0, 2.0, -3.0];
        let a = [0.7, -0.2];
        let g = net.param_gradient(&x, &a).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g.layers[0].weight[i * 3 + j], a[i] * x[j]);
            }
            assert_eq!(g.layers[0].bias[i], a[i]);
        }
    }

    #[test]
    fn non_finite_adjoint_rejected() {
        let net = linear(&[&[1.0]], &[0.0]);
        assert!(net.param_gradient(&[1.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn param_gradient_matches_finite_differences() {
        let net = Network::init(NetworkSpec::mlp(3, 5, 2, 3, 2).unwrap(), 5);
        let x = [0.3, -0.6, 0.9];
        let adj = [0.8, -0.4];
        let g = net.param_gradient(&x, &adj).unwrap().to_flat();
        let h = 1e-5;
        let base = net.params().to_flat();
        for k in 0..base.len() {
            let f = |delta: f64| {
                let mut p = base.clone();
                p[k] += delta;
                let mut n = net.clone();
                n.params_mut().set_flat(&p).unwrap();
                crate::matrix::dot(&n.forward(&x).unwrap(), &adj)
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let err = (fd - g[k]).abs() / (1e-8 + fd.abs().max(g[k].abs()));
            assert!(err < 1e-6 || (fd - g[k]).abs() < 1e-10, "k={k} fd={fd} g={}", g[k]);
        }
    }

    #[test]
    fn input_adjoint_is_vector_jacobian_product() {
        let net = Network::init(NetworkSpec::mlp(4, 6, 3, 3, 2).unwrap(), 9);
        let x = [0.2, 0.1, -0.5, 0.7];
        let adj = [1.0, -2.0, 0.5];
        let mut trace = Trace::default();
        net.forward_traced(&x, &mut trace);
        let mut grad = net.params().zeros_like();
        let mut xa = vec![0.0; 4];
        net.backward_traced(&mut trace, &adj, &mut grad, Some(&mut xa));
        let j = net.input_jacobian(&x).unwrap();
        for c in 0..4 {
            let want: f64 = (0..3).map(|r| adj[r] * j.get(r, c)).sum();
            assert!((want - xa[c]).abs() < 1e-12);
        }
    }
}
