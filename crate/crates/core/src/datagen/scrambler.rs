use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::ScramblerRecord;
use crate::error::{check_dim, Error, Result};
use crate::matrix::Matrix;

pub const MAX_CONDITION: f64 = 20.0;
const INVERSE_TOL: f64 = 1e-10;

/// Family the mixing matrix is drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScramblerKind {
    /// Uniformly random rotation.
    #[default]
    Rotation,
    /// Well-conditioned matrix with uniform entries.
    General,
    Identity,
}

impl ScramblerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rotation" => Some(ScramblerKind::Rotation),
            "general" => Some(ScramblerKind::General),
            "identity" => Some(ScramblerKind::Identity),
            _ => None,
        }
    }
}

/// Invertible linear map mixing raw system coordinates into observed ones:
/// an observation is `s = M r`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scrambler {
    matrix: Matrix,
    inverse: Matrix,
    condition_number: f64,
}

fn condition_number(m: &Matrix) -> f64 {
    let sv = m.to_nalgebra().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn inverse_error(m: &Matrix, inv: &Matrix) -> f64 {
    m.matmul(inv)
        .map(|p| p.max_abs_diff(&Matrix::identity(m.rows())))
        .unwrap_or(f64::INFINITY)
}

impl Scrambler {
    pub fn identity(dim: usize) -> Self {
        Scrambler {
            matrix: Matrix::identity(dim),
            inverse: Matrix::identity(dim),
            condition_number: 1.0,
        }
    }

    /// Uniform `[-1, 1]` entries, redrawn until the condition number is below
    /// [`MAX_CONDITION`] and the computed inverse checks out.
    pub fn random(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let data: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let matrix = Matrix::from_vec(dim, dim, data)?;
            let cond = condition_number(&matrix);
            if !(cond < MAX_CONDITION) {
                continue;
            }
            let Some(inv) = matrix.to_nalgebra().try_inverse() else {
                continue;
            };
            let inverse = Matrix::from_nalgebra(&inv);
            if inverse_error(&matrix, &inverse) <= INVERSE_TOL {
                return Ok(Scrambler {
                    matrix,
                    inverse,
                    condition_number: cond,
                });
            }
        }
        Err(Error::Numeric(format!("no well-conditioned {dim}x{dim} scrambler found")))
    }

    /// Haar-distributed rotation: QR of a Gaussian matrix with the signs of
    /// `R`'s diagonal folded into `Q`, then one column flipped if needed so
    /// that `det = +1`. The inverse is the transpose.
    pub fn rotation(dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = nalgebra::DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..dim {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        let matrix = Matrix::from_nalgebra(&q);
        let inverse = matrix.transpose();
        if inverse_error(&matrix, &inverse) > INVERSE_TOL {
            return Err(Error::Numeric(format!("{dim}x{dim} rotation lost orthogonality")));
        }
        Ok(Scrambler {
            condition_number: condition_number(&matrix),
            matrix,
            inverse,
        })
    }

    pub fn make(dim: usize, seed: u64, kind: ScramblerKind) -> Result<Self> {
        match kind {
            ScramblerKind::Identity => Ok(Self::identity(dim)),
            ScramblerKind::General => Self::random(dim, seed),
            ScramblerKind::Rotation => Self::rotation(dim, seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix {
        &self.inverse
    }

    pub fn condition_number(&self) -> f64 {
        self.condition_number
    }

    /// Rows of `raw` are raw coordinate vectors; returns `raw · Mᵀ`.
    pub fn scramble(&self, raw: &Matrix) -> Result<Matrix> {
        check_dim("scrambler input width", self.dim(), raw.cols())?;
        raw.matmul(&self.matrix.transpose())
    }

    pub fn unscramble(&self, observed: &Matrix) -> Result<Matrix> {
        check_dim("scrambler input width", self.dim(), observed.cols())?;
        observed.matmul(&self.inverse.transpose())
    }

    pub fn unscramble_vec(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.inverse.mul_vec(s)
    }

    pub fn record(&self) -> ScramblerRecord {
        let rows = |m: &Matrix| m.iter_rows().map(<[f64]>::to_vec).collect();
        ScramblerRecord {
            matrix: rows(&self.matrix),
            inverse: rows(&self.inverse),
            condition_number: self.condition_number,
        }
    }

    pub fn from_record(rec: &ScramblerRecord) -> Result<Self> {
        let matrix = Matrix::from_rows(&rec.matrix)?;
        let inverse = Matrix::from_rows(&rec.inverse)?;
        check_dim("scrambler inverse", matrix.rows(), inverse.rows())?;
        Ok(Scrambler {
            matrix,
            inverse,
            condition_number: rec.condition_number,
        })
    }
}
