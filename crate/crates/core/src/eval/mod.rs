//! Evaluation of trained models: losses per split, disentanglement and
//! latent-quality metrics, the causal observer, and embedding export.

mod export;
pub mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{PairedDataset, Split};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{DisentanglerModel, Stage};
use crate::parallel::{map_items, Execution};
use crate::train::{evaluate, Batch, LossBreakdown, Objective};

pub use export::{export_embeddings, latent_blocks, LatentBlock};
pub use metrics::{
    causal_predict, circular_correlation, cosine_squared_sum, fisher_lee, orthogonality_residual,
    r_squared,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub stage: String,
    pub wiring: String,
    /// Split on which the metrics below are computed.
    pub metric_split: String,
    pub metric_rows: usize,
    /// Losses per split; `total` is the objective of the model's last level.
    pub losses: BTreeMap<String, LossBreakdown>,
    pub test_loss: Option<f64>,
    pub orthogonality_residual: f64,
    pub orthogonality_raw: f64,
    /// Circular correlation of each 2-D latent block with its ground-truth angle.
    pub circular_correlation: BTreeMap<String, f64>,
    pub causal_r2: Option<f64>,
}

fn objective_for(model: &DisentanglerModel, common_weight: f64, orthogonality_weight: f64) -> Objective {
    let base = match model.stage {
        Stage::Step2Complete => Objective::level2(orthogonality_weight),
        _ => Objective::level1(common_weight),
    };
    base.with_diagnostics(true)
}

/// Rows used for metrics: the test split when present, otherwise every row.
pub fn metric_rows(ds: &PairedDataset) -> (String, Vec<usize>) {
    match ds.indices(Split::Test) {
        Ok(rows) if !rows.is_empty() => ("test".into(), rows),
        _ => ("all".into(), (0..ds.len()).collect()),
    }
}

/// Encoded latent blocks of the given rows.
pub fn encode_rows(model: &DisentanglerModel, ds: &PairedDataset, rows: &[usize], exec: Execution) -> Result<[Matrix; 4]> {
    let codes = map_items(exec, rows.len(), |i| model.encode(ds.s1.row(rows[i]), ds.s2.row(rows[i])));
    let codes = codes.into_iter().collect::<Result<Vec<_>>>()?;
    let widths = [model.dims.d_c, model.dims.d_u, model.dims.d_c, model.dims.d_v];
    let mut out = widths.map(|w| Matrix::zeros(rows.len(), w));
    for (i, c) in codes.iter().enumerate() {
        out[0].row_mut(i).copy_from_slice(&c.c_u);
        out[1].row_mut(i).copy_from_slice(&c.u);
        out[2].row_mut(i).copy_from_slice(&c.c_v);
        out[3].row_mut(i).copy_from_slice(&c.v);
    }
    Ok(out)
}

pub struct EvalSettings {
    pub common_weight: f64,
    pub orthogonality_weight: f64,
    pub execution: Execution,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            common_weight: 1.0,
            orthogonality_weight: 1.0,
            execution: Execution::default(),
        }
    }
}

pub fn evaluate_model(model: &DisentanglerModel, ds: &PairedDataset, settings: &EvalSettings) -> Result<EvalReport> {
    let exec = settings.execution;
    let obj = objective_for(model, settings.common_weight, settings.orthogonality_weight);
    let mut losses = BTreeMap::new();
    let splits: Vec<(String, Vec<usize>)> = if ds.split.is_some() {
        [Split::Train, Split::Val, Split::Test]
            .into_iter()
            .map(|s| Ok((s.name().to_string(), ds.indices(s)?)))
            .collect::<Result<_>>()?
    } else {
        vec![("all".into(), (0..ds.len()).collect())]
    };
    for (name, rows) in &splits {
        if rows.is_empty() {
            continue;
        }
        let batch = Batch::subset(&ds.s1, &ds.s2, rows)?;
        let (t, _) = evaluate(model, &batch, &obj, exec, None, false)?;
        if !t.is_finite() {
            return Err(Error::NonFinite("evaluation loss"));
        }
        losses.insert(
            name.clone(),
            LossBreakdown {
                recon: t.recon,
                common: t.common,
                ortho: t.ortho,
                total: obj.total(&t),
            },
        );
    }
    let (metric_split, rows) = metric_rows(ds);
    if rows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let batch = Batch::subset(&ds.s1, &ds.s2, &rows)?;
    let orthogonality_raw = evaluate(model, &batch, &obj, exec, None, false)?.0.ortho;
    let residual = orthogonality_residual(model, &ds.s1, &ds.s2, &rows, exec)?;

    let mut circ = BTreeMap::new();
    if let Some(truth) = &ds.truth {
        let blocks = encode_rows(model, ds, &rows, exec)?;
        let roles = &ds.provenance.roles;
        let named = [
            ("common_s1", &blocks[0], &roles.common),
            ("uncommon_s1", &blocks[1], &roles.uncommon1),
            ("common_s2", &blocks[2], &roles.common),
            ("uncommon_s2", &blocks[3], &roles.uncommon2),
        ];
        for (name, block, role) in named {
            let (Some(role), 2) = (role, block.cols()) else { continue };
            let Some(theta) = truth.column(role) else { continue };
            let theta: Vec<f64> = rows.iter().map(|&r| theta[r]).collect();
            circ.insert(name.to_string(), circular_correlation(block, &theta)?);
        }
    }

    let causal_r2 = if model.dims.d_u == 0 {
        let preds = map_items(exec, rows.len(), |i| causal_predict(model, ds.s2.row(rows[i])));
        let preds = preds.into_iter().collect::<Result<Vec<_>>>()?;
        let pred = Matrix::from_rows(&preds)?;
        Some(r_squared(&pred, &ds.s1.select_rows(&rows))?)
    } else {
        None
    };

    Ok(EvalReport {
        dataset: ds.provenance.kind.clone(),
        stage: model.stage.name().into(),
        wiring: model.wiring.name().into(),
        metric_split,
        metric_rows: rows.len(),
        test_loss: losses.get("test").map(|l| l.total),
        losses,
        orthogonality_residual: residual,
        orthogonality_raw,
        circular_correlation: circ,
        causal_r2,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}
