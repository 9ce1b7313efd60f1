//! Principal components through the smaller of the two Gram matrices.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k × p`, orthonormal rows sorted by descending singular value.
    pub components: Matrix,
    /// Full non-negligible spectrum of the centered data, descending.
    pub singular_values: Vec<f64>,
    /// `Σ ‖x_i − mean‖²`.
    pub total_energy: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Squared singular values beyond the first `k`.
    pub fn tail_energy(&self, k: usize) -> f64 {
        self.singular_values.iter().skip(k).map(|s| s * s).sum()
    }

    /// Little-endian binary layout: magic, `k`, `p`, spectrum length,
    /// total energy, mean, components, spectrum.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + 8 * (self.dim() * (1 + self.n_components()) + self.singular_values.len()));
        out.extend_from_slice(PCA_MAGIC);
        for v in [self.n_components(), self.dim(), self.singular_values.len()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.total_energy.to_le_bytes());
        for v in self.mean.iter().chain(self.components.as_slice()).chain(&self.singular_values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |d: &str| Error::format("pca model", path, d);
        let rest = bytes.strip_prefix(PCA_MAGIC.as_slice()).ok_or_else(|| bad("missing header"))?;
        let mut words = rest.chunks_exact(8).map(|c| <[u8; 8]>::try_from(c).expect("8-byte chunk"));
        let mut int = || -> Result<usize> {
            Ok(u64::from_le_bytes(words.next().ok_or_else(|| bad("truncated header"))?) as usize)
        };
        let (k, p, ns) = (int()?, int()?, int()?);
        let expected = 4 + p + k * p + ns;
        if rest.len() != 8 * expected {
            return Err(bad("payload length does not match the header"));
        }
        let floats: Vec<f64> = rest.chunks_exact(8).skip(3).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(PcaModel {
            total_energy: floats[0],
            mean: floats[1..1 + p].to_vec(),
            components: Matrix::from_vec(k, p, floats[1 + p..1 + p + k * p].to_vec())?,
            singular_values: floats[1 + p + k * p..].to_vec(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

const PCA_MAGIC: &[u8; 8] = b"PCAMDL01";
const RANK_TOL: f64 = 1e-10;

/// Modified Gram–Schmidt on the rows of a row-major `n × p` buffer.
fn mgs_rows(data: &mut [f64], p: usize) {
    let n = data.len() / p;
    for i in 0..n {
        let (before, rest) = data.split_at_mut(i * p);
        let row = &mut rest[..p];
        for j in 0..i {
            let q = &before[j * p..(j + 1) * p];
            let c = dot(row, q);
            row.iter_mut().zip(q).for_each(|(r, qv)| *r -= c * qv);
        }
        let norm = dot(row, row).sqrt();
        row.iter_mut().for_each(|r| *r /= norm);
    }
}

/// Top right-singular vectors of the mean-centered rows of `x`. When the
/// data has rank below `k`, fewer components are returned with a warning.
pub fn fit_pca(x: &Matrix, k: usize) -> Result<PcaModel> {
    let (n, p) = (x.rows(), x.cols());
    if n == 0 || p == 0 {
        return Err(Error::EmptyBatch);
    }
    let mean = x.column_means();
    // row-major n×p data read as column-major p×n is Xᵀ without a transpose copy
    let mut data = Vec::with_capacity(n * p);
    for row in x.iter_rows() {
        data.extend(row.iter().zip(&mean).map(|(v, m)| v - m));
    }
    let xt = DMatrix::from_vec(p, n, data);
    let total_energy = xt.iter().map(|v| v * v).sum::<f64>();
    // eigen-decompose whichever Gram matrix is smaller
    let wide = n <= p;
    let gram: DMatrix<f64> = if wide { xt.transpose() * &xt } else { &xt * xt.transpose() };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let spectrum: Vec<(usize, f64)> = order
        .iter()
        .map(|&i| (i, eig.eigenvalues[i].max(0.0).sqrt()))
        .filter(|&(_, s)| top > 0.0 && s * s > RANK_TOL * top)
        .collect();
    let kept = k.min(spectrum.len());
    if kept < k {
        log::warn!("data rank {} is below the requested {k} components", spectrum.len());
    }
    let mut comps = vec![0.0; kept * p];
    for (r, &(i, s)) in spectrum.iter().take(kept).enumerate() {
        let out = &mut comps[r * p..(r + 1) * p];
        if wide {
            // v = Xᵀ u / σ
            let v = &xt * eig.eigenvectors.column(i);
            out.iter_mut().zip(v.iter()).for_each(|(o, x)| *o = x / s);
        } else {
            out.iter_mut().zip(eig.eigenvectors.column(i).iter()).for_each(|(o, v)| *o = *v);
        }
    }
    mgs_rows(&mut comps, p);
    Ok(PcaModel {
        mean,
        components: Matrix::from_vec(kept, p, comps)?,
        singular_values: spectrum.into_iter().map(|(_, s)| s).collect(),
        total_energy,
    })
}

/// `(x − mean) · componentsᵀ` for every row.
pub fn project(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    check_dim("pixel count", model.dim(), x.cols())?;
    let k = model.n_components();
    let mut out = Matrix::zeros(x.rows(), k);
    let mut centered = vec![0.0; model.dim()];
    for i in 0..x.rows() {
        for ((c, v), m) in centered.iter_mut().zip(x.row(i)).zip(&model.mean) {
            *c = v - m;
        }
        for j in 0..k {
            out[(i, j)] = dot(&centered, model.components.row(j));
        }
    }
    Ok(out)
}

/// `mean + coeffs · components` for every row.
pub fn back_project(model: &PcaModel, coeffs: &Matrix) -> Result<Matrix> {
    check_dim("coefficient count", model.n_components(), coeffs.cols())?;
    let mut out = Matrix::zeros(coeffs.rows(), model.dim());
    for i in 0..coeffs.rows() {
        let row = out.row_mut(i);
        row.copy_from_slice(&model.mean);
        for (j, &c) in coeffs.row(i).iter().enumerate() {
            for (o, v) in row.iter_mut().zip(model.components.row(j)) {
                *o += c * v;
            }
        }
    }
    Ok(out)
}
