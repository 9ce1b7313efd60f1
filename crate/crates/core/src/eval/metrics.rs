//! Scalar quality measures of a trained model.

use crate::error::{check_dim, Error, Result};
use crate::matrix::{dot, Matrix};
use crate::mlp::JacobianTrace;
use crate::model::{DisentanglerModel, Sensor, Slot};
use crate::parallel::{map_chunks, Execution, CHUNK};

/// `Σ_{j,k} cos²∠(a_j, b_k)` over the rows of two row-major gradient blocks.
/// Pairs with a zero-length gradient contribute nothing.
pub fn cosine_squared_sum(a: &[f64], b: &[f64], cols: usize) -> f64 {
    let mut total = 0.0;
    for ra in a.chunks_exact(cols) {
        let na = dot(ra, ra);
        for rb in b.chunks_exact(cols) {
            let nb = dot(rb, rb);
            if na > 0.0 && nb > 0.0 {
                let ip = dot(ra, rb);
                total += ip * ip / (na * nb);
            }
        }
    }
    total
}

/// Normalized orthogonality residual over the given rows: the mean of
/// `Σ cos²` between common and uncommon encoder gradients, summed over both
/// sensors. Lies in `[0, d_c·d_u + d_c·d_v]`.
pub fn orthogonality_residual(
    model: &DisentanglerModel,
    s_u: &Matrix,
    s_v: &Matrix,
    rows: &[usize],
    exec: Execution,
) -> Result<f64> {
    check_dim("sensor 1 input", model.dims.k_u, s_u.cols())?;
    check_dim("sensor 2 input", model.dims.k_v, s_v.cols())?;
    check_dim("paired sample count", s_u.rows(), s_v.rows())?;
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let sensors = [
        (Slot::E1c, Slot::E1u, s_u, model.dims.k_u),
        (Slot::E2c, Slot::E2u, s_v, model.dims.k_v),
    ];
    let parts = map_chunks(exec, rows.len(), CHUNK, |range| {
        let (mut tc, mut tu) = (JacobianTrace::default(), JacobianTrace::default());
        let mut sum = 0.0;
        for &r in &rows[range] {
            for (cs, us, data, k) in sensors {
                let Some(un) = model.network(us) else { continue };
                model.required(cs).jacobian_traced(data.row(r), &mut tc);
                un.jacobian_traced(data.row(r), &mut tu);
                sum += cosine_squared_sum(tc.jacobian_slice(), tu.jacobian_slice(), k);
            }
        }
        sum
    });
    Ok(parts.into_iter().sum::<f64>() / rows.len() as f64)
}

fn centered_angles(latent: &Matrix) -> Result<Vec<f64>> {
    check_dim("latent block width", 2, latent.cols())?;
    let mean = latent.column_means();
    Ok(latent.iter_rows().map(|r| (r[1] - mean[1]).atan2(r[0] - mean[0])).collect())
}

/// Fisher–Lee circular correlation of two angle samples,
/// `Σ_{i<j} sin(α_i−α_j) sin(β_i−β_j) / sqrt(Σ sin²(α_i−α_j) · Σ sin²(β_i−β_j))`,
/// evaluated through first-moment sums in linear time.
pub fn fisher_lee(alpha: &[f64], beta: &[f64]) -> Result<f64> {
    check_dim("angle sample length", alpha.len(), beta.len())?;
    let (mut ss, mut cc, mut sc, mut cs) = (0.0, 0.0, 0.0, 0.0);
    let (mut aa_ss, mut aa_cc, mut aa_sc) = (0.0, 0.0, 0.0);
    let (mut bb_ss, mut bb_cc, mut bb_sc) = (0.0, 0.0, 0.0);
    for (&a, &b) in alpha.iter().zip(beta) {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        ss += sa * sb;
        cc += ca * cb;
        sc += sa * cb;
        cs += ca * sb;
        aa_ss += sa * sa;
        aa_cc += ca * ca;
        aa_sc += sa * ca;
        bb_ss += sb * sb;
        bb_cc += cb * cb;
        bb_sc += sb * cb;
    }
    let num = ss * cc - sc * cs;
    let den = ((aa_ss * aa_cc - aa_sc * aa_sc) * (bb_ss * bb_cc - bb_sc * bb_sc)).sqrt();
    if !(den > 0.0) {
        return Ok(0.0);
    }
    Ok((num / den).clamp(-1.0, 1.0))
}

/// Magnitude of the circular correlation between the angle of a centered
/// 2-D latent block and a ground-truth angle. Invariant to rotations,
/// reflections, translations and positive scalings of the block.
pub fn circular_correlation(latent: &Matrix, theta: &[f64]) -> Result<f64> {
    check_dim("ground-truth angle length", latent.rows(), theta.len())?;
    let phi = centered_angles(latent)?;
    Ok(fisher_lee(&phi, theta)?.abs())
}

/// Sensor-1 observation predicted from sensor 2 alone:
/// `d1(e2c(s_v))`, for models with no sensor-1 uncommon block.
pub fn causal_predict(model: &DisentanglerModel, s_v: &[f64]) -> Result<Vec<f64>> {
    if model.dims.d_u != 0 {
        return Err(Error::InvalidSpec(
            "causal prediction needs a model without a sensor-1 uncommon block".into(),
        ));
    }
    let (c, _) = model.encode_sensor2(s_v)?;
    model.decode_sensor(Sensor::One, &c, &[])
}

/// `1 − SSE/SST` per column, averaged over columns.
pub fn r_squared(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    check_dim("prediction rows", truth.rows(), pred.rows())?;
    check_dim("prediction columns", truth.cols(), pred.cols())?;
    if truth.rows() == 0 || truth.cols() == 0 {
        return Err(Error::EmptyBatch);
    }
    let means = truth.column_means();
    let mut acc = 0.0;
    for j in 0..truth.cols() {
        let (mut sse, mut sst) = (0.0, 0.0);
        for i in 0..truth.rows() {
            sse += (truth[(i, j)] - pred[(i, j)]).powi(2);
            sst += (truth[(i, j)] - means[j]).powi(2);
        }
        acc += if sst > 0.0 { 1.0 - sse / sst } else if sse == 0.0 { 1.0 } else { f64::NEG_INFINITY };
    }
    Ok(acc / truth.cols() as f64)
}
