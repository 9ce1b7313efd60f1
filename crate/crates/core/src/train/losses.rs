//! Loss terms of both training levels and their exact parameter gradients.
//!
//! Every quantity is a mean over the batch of per-sample terms. Samples are
//! processed in fixed-size chunks whose partial sums are reduced in order,
//! so the result does not depend on the execution policy.

use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;
use crate::mlp::jacobian::penalty_and_seed;
use crate::mlp::{JacobianTrace, ParameterSet, Trace};
use crate::model::{DisentanglerModel, Slot, Wiring};
use crate::parallel::{map_chunks, Execution, CHUNK};

/// Paired rows of both sensors, optionally restricted to a subset of rows.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub s_u: &'a Matrix,
    pub s_v: &'a Matrix,
    rows: Option<&'a [usize]>,
}

impl<'a> Batch<'a> {
    pub fn full(s_u: &'a Matrix, s_v: &'a Matrix) -> Result<Self> {
        check_dim("paired sample count", s_u.rows(), s_v.rows())?;
        Ok(Batch { s_u, s_v, rows: None })
    }

    pub fn subset(s_u: &'a Matrix, s_v: &'a Matrix, rows: &'a [usize]) -> Result<Self> {
        check_dim("paired sample count", s_u.rows(), s_v.rows())?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= s_u.rows()) {
            return Err(Error::InvalidSpec(format!(
                "batch row {bad} out of range for {} samples",
                s_u.rows()
            )));
        }
        Ok(Batch {
            s_u,
            s_v,
            rows: Some(rows),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.map_or(self.s_u.rows(), <[usize]>::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dataset row of the `i`-th batch element.
    pub fn row_index(&self, i: usize) -> usize {
        self.rows.map_or(i, |r| r[i])
    }
}

/// Batch means of the three loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub recon: f64,
    pub common: f64,
    pub ortho: f64,
}

impl LossTerms {
    fn add(&mut self, o: &LossTerms) {
        self.recon += o.recon;
        self.common += o.common;
        self.ortho += o.ortho;
    }

    pub fn scaled(&self, s: f64) -> LossTerms {
        LossTerms {
            recon: self.recon * s,
            common: self.common * s,
            ortho: self.ortho * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.recon.is_finite() && self.common.is_finite() && self.ortho.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    One,
    Two,
}

impl Level {
    pub fn number(self) -> u8 {
        match self {
            Level::One => 1,
            Level::Two => 2,
        }
    }
}

/// Which terms are optimized, with what weights, and which slots train.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub level: Level,
    pub common_weight: f64,
    pub orthogonality_weight: f64,
    /// Also evaluate the orthogonality term when it is not optimized.
    pub diagnostics: bool,
}

impl Objective {
    pub fn level1(common_weight: f64) -> Self {
        Objective {
            level: Level::One,
            common_weight,
            orthogonality_weight: 1.0,
            diagnostics: false,
        }
    }

    pub fn level2(orthogonality_weight: f64) -> Self {
        Objective {
            level: Level::Two,
            common_weight: 1.0,
            orthogonality_weight,
            diagnostics: false,
        }
    }

    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    /// Level 1: `recon + w_c·common`. Level 2: `recon + w_o·ortho`; the
    /// common term is reported but not optimized.
    pub fn total(&self, t: &LossTerms) -> f64 {
        match self.level {
            Level::One => t.recon + self.common_weight * t.common,
            Level::Two => t.recon + self.orthogonality_weight * t.ortho,
        }
    }

    pub fn trainable(&self, slot: Slot) -> bool {
        match self.level {
            Level::One => true,
            Level::Two => !matches!(slot, Slot::E1c | Slot::E2c),
        }
    }

    fn needs_ortho(&self) -> bool {
        self.level == Level::Two || self.diagnostics
    }
}

/// Gradients for the trainable, present slots of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradient {
    slots: [Option<ParameterSet>; 6],
}

impl ModelGradient {
    pub fn zeros(model: &DisentanglerModel, objective: &Objective) -> Self {
        ModelGradient {
            slots: Slot::ALL.map(|s| {
                model
                    .network(s)
                    .filter(|_| objective.trainable(s))
                    .map(|n| n.params().zeros_like())
            }),
        }
    }

    pub fn slot(&self, s: Slot) -> Option<&ParameterSet> {
        self.slots[s.index()].as_ref()
    }

    fn slot_mut(&mut self, s: Slot) -> Option<&mut ParameterSet> {
        self.slots[s.index()].as_mut()
    }

    fn add(&mut self, other: &ModelGradient) {
        for (a, b) in self.slots.iter_mut().zip(&other.slots) {
            if let (Some(a), Some(b)) = (a, b) {
                a.axpy(1.0, b);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(ParameterSet::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.slots.iter().flatten().map(ParameterSet::max_abs).fold(0.0, f64::max)
    }
}

/// Input Jacobians of both common encoders at every dataset row. Valid as
/// long as the common encoders do not change, which holds during level 2.
#[derive(Clone, Debug, PartialEq)]
pub struct CommonJacobians {
    stride1: usize,
    stride2: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl CommonJacobians {
    pub fn compute(model: &DisentanglerModel, s_u: &Matrix, s_v: &Matrix, exec: Execution) -> Result<Self> {
        let d = model.dims;
        check_dim("sensor 1 input", d.k_u, s_u.cols())?;
        check_dim("sensor 2 input", d.k_v, s_v.cols())?;
        check_dim("paired sample count", s_u.rows(), s_v.rows())?;
        let (e1c, e2c) = (model.required(Slot::E1c), model.required(Slot::E2c));
        let parts = map_chunks(exec, s_u.rows(), CHUNK, |range| {
            let mut t = JacobianTrace::default();
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for i in range {
                e1c.jacobian_traced(s_u.row(i), &mut t);
                a.extend_from_slice(t.jacobian_slice());
                e2c.jacobian_traced(s_v.row(i), &mut t);
                b.extend_from_slice(t.jacobian_slice());
            }
            (a, b)
        });
        let mut s1 = Vec::with_capacity(s_u.rows() * d.d_c * d.k_u);
        let mut s2 = Vec::with_capacity(s_v.rows() * d.d_c * d.k_v);
        for (a, b) in parts {
            s1.extend(a);
            s2.extend(b);
        }
        Ok(CommonJacobians {
            stride1: d.d_c * d.k_u,
            stride2: d.d_c * d.k_v,
            s1,
            s2,
        })
    }

    fn get(&self, row: usize) -> (&[f64], &[f64]) {
        (
            &self.s1[row * self.stride1..(row + 1) * self.stride1],
            &self.s2[row * self.stride2..(row + 1) * self.stride2],
        )
    }

    fn rows(&self) -> usize {
        self.s1.len() / self.stride1.max(1)
    }
}

#[derive(Default)]
struct Workspace {
    enc: [JacobianTrace; 4],
    dec: [Trace; 2],
    in1: Vec<f64>,
    in2: Vec<f64>,
    adj1: Vec<f64>,
    adj2: Vec<f64>,
    g_in1: Vec<f64>,
    g_in2: Vec<f64>,
    g_cu: Vec<f64>,
    g_cv: Vec<f64>,
    seed: Vec<f64>,
}

const ENCODERS: [Slot; 4] = [Slot::E1c, Slot::E1u, Slot::E2c, Slot::E2u];

/// Loss terms of a single sample; when `grad` is given, adds `scale` times
/// the gradient of the objective into it.
fn sample_terms(
    model: &DisentanglerModel,
    obj: &Objective,
    s_u: &[f64],
    s_v: &[f64],
    cached: Option<(&[f64], &[f64])>,
    ws: &mut Workspace,
    grad: Option<(&mut ModelGradient, f64)>,
) -> LossTerms {
    let d = model.dims;
    let want_ortho = obj.needs_ortho();
    let ortho_grad = grad.is_some() && obj.level == Level::Two;
    let Workspace {
        enc,
        dec,
        in1,
        in2,
        adj1,
        adj2,
        g_in1,
        g_in2,
        g_cu,
        g_cv,
        seed,
    } = ws;

    for (k, slot) in ENCODERS.into_iter().enumerate() {
        let Some(net) = model.network(slot) else {
            continue;
        };
        let x = if k < 2 { s_u } else { s_v };
        let is_common = matches!(slot, Slot::E1c | Slot::E2c);
        if want_ortho && !(is_common && cached.is_some()) {
            net.jacobian_traced(x, &mut enc[k]);
        } else {
            enc[k].base_forward(net, x);
        }
    }
    let out = |enc: &[JacobianTrace; 4], k: usize, present: bool| -> Vec<f64> {
        if present {
            enc[k].output().to_vec()
        } else {
            Vec::new()
        }
    };
    let c_u = out(enc, 0, true);
    let u = out(enc, 1, d.d_u > 0);
    let c_v = out(enc, 2, true);
    let v = out(enc, 3, d.d_v > 0);

    let (c1, c2) = match model.wiring {
        Wiring::Standard => (&c_u, &c_v),
        Wiring::Twisted => (&c_v, &c_u),
    };
    in1.clear();
    in1.extend_from_slice(c1);
    in1.extend_from_slice(&u);
    in2.clear();
    in2.extend_from_slice(c2);
    in2.extend_from_slice(&v);
    let (d1, d2) = (model.required(Slot::D1), model.required(Slot::D2));
    d1.forward_traced(in1, &mut dec[0]);
    d2.forward_traced(in2, &mut dec[1]);

    adj1.clear();
    adj1.extend(dec[0].output().iter().zip(s_u).map(|(a, b)| a - b));
    adj2.clear();
    adj2.extend(dec[1].output().iter().zip(s_v).map(|(a, b)| a - b));
    let recon = adj1.iter().map(|e| e * e).sum::<f64>() + adj2.iter().map(|e| e * e).sum::<f64>();
    let common: f64 = c_u.iter().zip(&c_v).map(|(a, b)| (a - b) * (a - b)).sum();

    let mut ortho = 0.0;
    if want_ortho {
        let (jc1, jc2) = match cached {
            Some(j) => j,
            None => (enc[0].jacobian_slice(), enc[2].jacobian_slice()),
        };
        if d.d_u > 0 {
            ortho += penalty_and_seed(enc[1].jacobian_slice(), jc1, d.k_u, None);
        }
        if d.d_v > 0 {
            ortho += penalty_and_seed(enc[3].jacobian_slice(), jc2, d.k_v, None);
        }
    }

    let Some((grad, scale)) = grad else {
        return LossTerms { recon, common, ortho };
    };
    adj1.iter_mut().for_each(|e| *e *= 2.0 * scale);
    adj2.iter_mut().for_each(|e| *e *= 2.0 * scale);
    g_in1.clear();
    g_in1.resize(in1.len(), 0.0);
    g_in2.clear();
    g_in2.resize(in2.len(), 0.0);
    d1.backward_traced(
        &mut dec[0],
        adj1,
        grad.slot_mut(Slot::D1).expect("decoders train at every level"),
        Some(g_in1),
    );
    d2.backward_traced(
        &mut dec[1],
        adj2,
        grad.slot_mut(Slot::D2).expect("decoders train at every level"),
        Some(g_in2),
    );
    let (from1, from2) = match model.wiring {
        Wiring::Standard => (&g_in1[..d.d_c], &g_in2[..d.d_c]),
        Wiring::Twisted => (&g_in2[..d.d_c], &g_in1[..d.d_c]),
    };
    g_cu.clear();
    g_cu.extend_from_slice(from1);
    g_cv.clear();
    g_cv.extend_from_slice(from2);
    if obj.level == Level::One {
        let w = 2.0 * scale * obj.common_weight;
        for i in 0..d.d_c {
            let diff = w * (c_u[i] - c_v[i]);
            g_cu[i] += diff;
            g_cv[i] -= diff;
        }
    }

    let jcs = if ortho_grad {
        let (a, b) = match cached {
            Some(j) => j,
            None => (enc[0].jacobian_slice(), enc[2].jacobian_slice()),
        };
        Some((a.to_vec(), b.to_vec()))
    } else {
        None
    };
    let adjoints: [&[f64]; 4] = [g_cu, &g_in1[d.d_c..], g_cv, &g_in2[d.d_c..]];
    for (k, slot) in ENCODERS.into_iter().enumerate() {
        let (Some(net), Some(g)) = (model.network(slot), grad.slot_mut(slot)) else {
            continue;
        };
        net.backward_traced(enc[k].base_mut(), adjoints[k], g, None);
        if let (Some((jc1, jc2)), true) = (&jcs, matches!(slot, Slot::E1u | Slot::E2u)) {
            let (jc, cols) = if slot == Slot::E1u { (jc1, d.k_u) } else { (jc2, d.k_v) };
            penalty_and_seed(enc[k].jacobian_slice(), jc, cols, Some(seed));
            let w = scale * obj.orthogonality_weight;
            seed.iter_mut().for_each(|s| *s *= w);
            net.jacobian_backward(&mut enc[k], seed, g);
        }
    }
    LossTerms { recon, common, ortho }
}

fn check_batch(model: &DisentanglerModel, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_dim("sensor 1 input", model.dims.k_u, batch.s_u.cols())?;
    check_dim("sensor 2 input", model.dims.k_v, batch.s_v.cols())?;
    Ok(())
}

/// Batch-mean loss terms and, if `with_grad`, the gradient of the batch-mean
/// objective for every trainable slot. `cache`, when given, supplies the
/// common-encoder Jacobians by dataset row.
pub fn evaluate(
    model: &DisentanglerModel,
    batch: &Batch,
    obj: &Objective,
    exec: Execution,
    cache: Option<&CommonJacobians>,
    with_grad: bool,
) -> Result<(LossTerms, Option<ModelGradient>)> {
    check_batch(model, batch)?;
    if let Some(c) = cache {
        check_dim("cached Jacobian rows", batch.s_u.rows(), c.rows())?;
    }
    let n = batch.len();
    let scale = 1.0 / n as f64;
    let parts = map_chunks(exec, n, CHUNK, |range| {
        let mut ws = Workspace::default();
        let mut grad = with_grad.then(|| ModelGradient::zeros(model, obj));
        let mut sum = LossTerms::default();
        for i in range {
            let r = batch.row_index(i);
            let t = sample_terms(
                model,
                obj,
                batch.s_u.row(r),
                batch.s_v.row(r),
                cache.map(|c| c.get(r)),
                &mut ws,
                grad.as_mut().map(|g| (g, scale)),
            );
            sum.add(&t);
        }
        (sum, grad)
    });
    let mut total = LossTerms::default();
    let mut grad: Option<ModelGradient> = None;
    for (t, g) in parts {
        total.add(&t);
        match (&mut grad, g) {
            (Some(acc), Some(g)) => acc.add(&g),
            (None, Some(g)) => grad = Some(g),
            _ => {}
        }
    }
    Ok((total.scaled(scale), grad))
}

/// `(1/N) Σ ‖s_u − ŝ_u‖² + ‖s_v − ŝ_v‖²`.
pub fn loss_reconstruction(model: &DisentanglerModel, batch: &Batch) -> Result<f64> {
    let obj = Objective::level1(1.0);
    Ok(evaluate(model, batch, &obj, Execution::default(), None, false)?.0.recon)
}

/// `(1/N) Σ ‖ĉ_u − ĉ_v‖²`.
pub fn loss_common(model: &DisentanglerModel, batch: &Batch) -> Result<f64> {
    let obj = Objective::level1(1.0);
    Ok(evaluate(model, batch, &obj, Execution::default(), None, false)?.0.common)
}

/// Mean over samples of `Σ_{j,k} <∇ĉ_j, ∇û_k>²` for sensor 1 plus the
/// sensor-2 analogue, gradients taken with respect to the raw input.
pub fn loss_orthogonality(model: &DisentanglerModel, batch: &Batch) -> Result<f64> {
    let obj = Objective::level1(1.0).with_diagnostics(true);
    Ok(evaluate(model, batch, &obj, Execution::default(), None, false)?.0.ortho)
}
