//! Observations consistent with a fixed part of an anchor's latent code.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DisentanglerModel, Sensor, Stage};
use crate::parallel::Execution;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fix {
    Common,
    Uncommon,
    Both,
}

impl Fix {
    pub fn parse(s: &str) -> Option<Fix> {
        match s {
            "common" => Some(Fix::Common),
            "uncommon" => Some(Fix::Uncommon),
            "both" => Some(Fix::Both),
            _ => None,
        }
    }
}

/// Latent codes of the training rows, resampled for the varying block.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPool {
    pub c_u: Matrix,
    pub u: Matrix,
    pub c_v: Matrix,
    pub v: Matrix,
}

impl LatentPool {
    pub fn from_rows(model: &DisentanglerModel, s_u: &Matrix, s_v: &Matrix, rows: &[usize], exec: Execution) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let codes = crate::parallel::map_items(exec, rows.len(), |i| model.encode(s_u.row(rows[i]), s_v.row(rows[i])));
        let codes = codes.into_iter().collect::<Result<Vec<_>>>()?;
        let stack = |f: &dyn Fn(&crate::model::LatentCodes) -> &Vec<f64>, w: usize| {
            let mut m = Matrix::zeros(codes.len(), w);
            for (i, c) in codes.iter().enumerate() {
                m.row_mut(i).copy_from_slice(f(c));
            }
            m
        };
        let d = model.dims;
        Ok(LatentPool {
            c_u: stack(&|c| &c.c_u, d.d_c),
            u: stack(&|c| &c.u, d.d_u),
            c_v: stack(&|c| &c.c_v, d.d_c),
            v: stack(&|c| &c.v, d.d_v),
        })
    }

    fn common(&self, s: Sensor) -> &Matrix {
        match s {
            Sensor::One => &self.c_u,
            Sensor::Two => &self.c_v,
        }
    }

    fn uncommon(&self, s: Sensor) -> &Matrix {
        match s {
            Sensor::One => &self.u,
            Sensor::Two => &self.v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelSetRequest {
    pub anchor_sensor: Sensor,
    pub target_sensor: Sensor,
    pub fix: Fix,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    pub anchor_common: Vec<f64>,
    pub anchor_uncommon: Vec<f64>,
    /// Decoded anchor, in the anchor sensor's observation space.
    pub anchor_reconstruction: Vec<f64>,
    /// `[common, uncommon]` decoder inputs of every generated sample.
    pub codes: Matrix,
    /// Decoded samples, in the target sensor's observation space.
    pub samples: Matrix,
}

impl LevelSet {
    /// Anchor reconstruction plus the generated samples.
    pub fn len(&self) -> usize {
        1 + self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn encode(model: &DisentanglerModel, s: Sensor, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    match s {
        Sensor::One => model.encode_sensor1(x),
        Sensor::Two => model.encode_sensor2(x),
    }
}

/// Encode `anchor` with the anchor sensor, hold the fixed block, draw the
/// other block from `pool` (uniformly, with replacement), and decode with
/// the target sensor's decoder. Holding the uncommon block requires the
/// target to be the anchor sensor.
pub fn generate_level_set(
    model: &DisentanglerModel,
    pool: &LatentPool,
    anchor: &[f64],
    req: &LevelSetRequest,
) -> Result<LevelSet> {
    if model.stage != Stage::Step2Complete {
        return Err(Error::Staging(format!(
            "level sets need a model tagged step2-complete, found {}",
            model.stage.name()
        )));
    }
    let same = req.anchor_sensor == req.target_sensor;
    if !same && req.fix != Fix::Common {
        return Err(Error::InvalidSpec(
            "only the common block can be carried across sensors".into(),
        ));
    }
    let (c, w) = encode(model, req.anchor_sensor, anchor)?;
    let anchor_reconstruction = model.decode_sensor(req.anchor_sensor, &c, &w)?;
    let common_pool = pool.common(req.target_sensor);
    let uncommon_pool = pool.uncommon(req.target_sensor);
    let d_w = uncommon_pool.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let mut codes = Matrix::zeros(req.n_samples, c.len() + d_w);
    let mut samples = Matrix::zeros(req.n_samples, 0);
    let mut rows = Vec::with_capacity(req.n_samples);
    for i in 0..req.n_samples {
        let (ci, wi): (&[f64], &[f64]) = match req.fix {
            Fix::Common => (&c, uncommon_pool.row(rng.gen_range(0..uncommon_pool.rows()))),
            Fix::Uncommon => (common_pool.row(rng.gen_range(0..common_pool.rows())), &w),
            Fix::Both => (&c, &w),
        };
        codes.row_mut(i)[..c.len()].copy_from_slice(ci);
        codes.row_mut(i)[c.len()..].copy_from_slice(wi);
        rows.push(model.decode_sensor(req.target_sensor, ci, wi)?);
    }
    if !rows.is_empty() {
        samples = Matrix::from_rows(&rows)?;
    }
    Ok(LevelSet {
        anchor_common: c,
        anchor_uncommon: w,
        anchor_reconstruction,
        codes,
        samples,
    })
}
