//! Two-level training.
//!
//! Level 1 fits all six networks to `recon + w_c·common`. Level 2 freezes
//! both common encoders and fits the uncommon encoders and the decoders to
//! `recon + w_o·ortho`. Both levels use Adam on shuffled mini-batches, keep
//! the parameters with the lowest validation objective, and stop on a
//! validation tolerance, an epoch budget, or a patience limit.

pub mod adam;
pub mod losses;
pub mod split;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PairedDataset, Split};
use crate::error::{Error, Result};
use crate::model::{DisentanglerModel, Slot, Stage, Wiring};
use crate::parallel::Execution;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use losses::{
    evaluate, loss_common, loss_orthogonality, loss_reconstruction, Batch, CommonJacobians, Level,
    LossTerms, ModelGradient, Objective,
};
pub use split::{split_dataset, split_labels, split_sizes, DEFAULT_FRACTIONS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub tol_level1: f64,
    pub tol_level2: f64,
    pub max_epochs_level1: usize,
    pub max_epochs_level2: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub orthogonality_weight: f64,
    pub common_weight: f64,
    /// Stop after this many epochs without a new best validation objective.
    pub patience: usize,
    pub adam: AdamConfig,
    /// Evaluate the orthogonality term during level 1 as well.
    pub diagnostics: bool,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            tol_level1: 1e-6,
            tol_level2: 1e-6,
            max_epochs_level1: 5000,
            max_epochs_level2: 2000,
            batch_size: 128,
            seed: 0,
            fractions: DEFAULT_FRACTIONS,
            orthogonality_weight: 1.0,
            common_weight: 1.0,
            patience: 200,
            adam: AdamConfig::default(),
            diagnostics: false,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be a finite non-negative number");
        }
        if !(self.tol_level1 > 0.0 && self.tol_level2 > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.orthogonality_weight >= 0.0 && self.common_weight >= 0.0) {
            return bad("loss weights must be non-negative");
        }
        split::validate_fractions(self.fractions)
    }

    fn objective(&self, level: Level) -> Objective {
        match level {
            Level::One => Objective::level1(self.common_weight).with_diagnostics(self.diagnostics),
            Level::Two => Objective::level2(self.orthogonality_weight),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub common: f64,
    pub ortho: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(t: &LossTerms, obj: &Objective) -> Self {
        LossBreakdown {
            recon: t.recon,
            common: t.common,
            ortho: t.ortho,
            total: obj.total(t),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub loss: LossBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Tolerance,
    MaxEpochs,
    Patience,
}

/// Per-epoch history and final losses of one training level.
///
/// Epoch 0 holds the losses before any update. Train rows of later epochs
/// are averages of the mini-batch losses seen during that epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub level: u8,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stop: StopReason,
    pub final_train: LossBreakdown,
    pub final_val: Option<LossBreakdown>,
    pub final_test: Option<LossBreakdown>,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "epoch,recon,common,ortho,total,split";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            let l = &r.loss;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch,
                l.recon,
                l.common,
                l.ortho,
                l.total,
                r.split.name()
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn validation_history(&self) -> impl Iterator<Item = &EpochRecord> + '_ {
        self.records.iter().filter(|r| r.split == Split::Val)
    }

    /// Final validation objective, or the train objective without a validation split.
    pub fn final_selection_loss(&self) -> f64 {
        self.final_val.unwrap_or(self.final_train).total
    }
}

struct SplitRows {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

impl SplitRows {
    fn of(ds: &PairedDataset) -> Result<Self> {
        let rows = SplitRows {
            train: ds.indices(Split::Train)?,
            val: ds.indices(Split::Val)?,
            test: ds.indices(Split::Test)?,
        };
        if rows.train.is_empty() {
            return Err(Error::Config("the training split is empty".into()));
        }
        Ok(rows)
    }
}

fn divergence(level: Level, epoch: usize, detail: impl Into<String>) -> Error {
    Error::Divergence {
        level: level.number(),
        epoch,
        detail: detail.into(),
    }
}

fn eval_rows(
    model: &DisentanglerModel,
    ds: &PairedDataset,
    rows: &[usize],
    obj: &Objective,
    cfg: &TrainConfig,
    cache: Option<&CommonJacobians>,
) -> Result<Option<LossTerms>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let batch = Batch::subset(&ds.s1, &ds.s2, rows)?;
    Ok(Some(evaluate(model, &batch, obj, cfg.execution, cache, false)?.0))
}

fn run_level(
    mut model: DisentanglerModel,
    ds: &PairedDataset,
    cfg: &TrainConfig,
    level: Level,
) -> Result<(DisentanglerModel, LossReport)> {
    cfg.validate()?;
    let rows = SplitRows::of(ds)?;
    let obj = cfg.objective(level);
    let (max_epochs, tol) = match level {
        Level::One => (cfg.max_epochs_level1, cfg.tol_level1),
        Level::Two => (cfg.max_epochs_level2, cfg.tol_level2),
    };
    let cache = match level {
        Level::Two => Some(CommonJacobians::compute(&model, &ds.s1, &ds.s2, cfg.execution)?),
        Level::One => None,
    };
    let cache = cache.as_ref();
    let frozen: Vec<(Slot, String)> = Slot::ALL
        .into_iter()
        .filter(|&s| !obj.trainable(s))
        .filter_map(|s| model.fingerprint(s).map(|f| (s, f)))
        .collect();

    let mut states: Vec<(Slot, AdamState)> = Slot::ALL
        .into_iter()
        .filter(|&s| obj.trainable(s))
        .filter_map(|s| model.network(s).map(|n| (s, AdamState::for_params(n.params()))))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (0x5eed_0000 + level.number() as u64));
    let mut records = Vec::new();

    // selection uses the validation split, or the train split if there is none
    let selection_rows = if rows.val.is_empty() { &rows.train } else { &rows.val };
    let selection_split = if rows.val.is_empty() { Split::Train } else { Split::Val };

    let start_train = eval_rows(&model, ds, &rows.train, &obj, cfg, cache)?.expect("train split is non-empty");
    records.push(EpochRecord {
        epoch: 0,
        split: Split::Train,
        loss: LossBreakdown::new(&start_train, &obj),
    });
    let start_sel = if rows.val.is_empty() {
        start_train
    } else {
        let v = eval_rows(&model, ds, &rows.val, &obj, cfg, cache)?.expect("non-empty");
        records.push(EpochRecord {
            epoch: 0,
            split: Split::Val,
            loss: LossBreakdown::new(&v, &obj),
        });
        v
    };
    if !start_sel.is_finite() {
        return Err(divergence(level, 0, "non-finite loss before training"));
    }
    let mut best_loss = obj.total(&start_sel);
    let mut best_model = model.clone();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut stop = StopReason::MaxEpochs;
    let mut epochs_run = 0;

    if best_loss < tol {
        stop = StopReason::Tolerance;
    } else {
        let mut order = rows.train.clone();
        for epoch in 1..=max_epochs {
            epochs_run = epoch;
            order.shuffle(&mut rng);
            let mut running = LossTerms::default();
            for chunk in order.chunks(cfg.batch_size) {
                let batch = Batch::subset(&ds.s1, &ds.s2, chunk)?;
                let (terms, grad) = evaluate(&model, &batch, &obj, cfg.execution, cache, true)?;
                let grad = grad.expect("gradient requested");
                if !terms.is_finite() || !grad.is_finite() {
                    return Err(divergence(level, epoch, "non-finite loss or gradient"));
                }
                for (slot, state) in &mut states {
                    let g = grad.slot(*slot).expect("trainable slot has a gradient");
                    let net = model.network_mut(*slot).expect("trainable slot is present");
                    adam_update(net.params_mut(), g, state, cfg.learning_rate, &cfg.adam)?;
                }
                let w = chunk.len() as f64;
                running.recon += terms.recon * w;
                running.common += terms.common * w;
                running.ortho += terms.ortho * w;
            }
            let train_terms = running.scaled(1.0 / rows.train.len() as f64);
            records.push(EpochRecord {
                epoch,
                split: Split::Train,
                loss: LossBreakdown::new(&train_terms, &obj),
            });
            let sel = eval_rows(&model, ds, selection_rows, &obj, cfg, cache)?
                .expect("selection split is non-empty");
            if !sel.is_finite() {
                return Err(divergence(level, epoch, "non-finite validation loss"));
            }
            if !rows.val.is_empty() {
                records.push(EpochRecord {
                    epoch,
                    split: Split::Val,
                    loss: LossBreakdown::new(&sel, &obj),
                });
            }
            let loss = obj.total(&sel);
            if loss < best_loss {
                best_loss = loss;
                best_model = model.clone();
                best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
            }
            if epoch % 100 == 0 {
                log::info!(
                    "level {} epoch {epoch}: train {:.3e}, {} {:.3e}, best {:.3e} @ {best_epoch}",
                    level.number(),
                    obj.total(&train_terms),
                    selection_split.name(),
                    loss,
                    best_loss
                );
            }
            if loss < tol {
                stop = StopReason::Tolerance;
                break;
            }
            if cfg.patience > 0 && since_best >= cfg.patience {
                stop = StopReason::Patience;
                break;
            }
        }
    }
    model = best_model;
    for (slot, fp) in &frozen {
        if model.fingerprint(*slot).as_ref() != Some(fp) {
            return Err(Error::Numeric(format!("frozen network {} changed", slot.name())));
        }
    }
    let fin = |rows: &[usize]| -> Result<Option<LossBreakdown>> {
        Ok(eval_rows(&model, ds, rows, &obj, cfg, cache)?.map(|t| LossBreakdown::new(&t, &obj)))
    };
    let final_train = fin(&rows.train)?.expect("train split is non-empty");
    let final_val = fin(&rows.val)?;
    let final_test = fin(&rows.test)?;
    model.stage = match level {
        Level::One => Stage::Step1Complete,
        Level::Two => Stage::Step2Complete,
    };
    log::info!(
        "level {} finished after {epochs_run} epochs ({stop:?}); best epoch {best_epoch}, {} loss {:.3e}",
        level.number(),
        selection_split.name(),
        best_loss
    );
    Ok((
        model,
        LossReport {
            level: level.number(),
            records,
            best_epoch,
            epochs_run,
            stop,
            final_train,
            final_val,
            final_test,
        },
    ))
}

/// Level 1: all six networks on `recon + w_c·common`.
pub fn train_level1(
    model: DisentanglerModel,
    ds: &PairedDataset,
    cfg: &TrainConfig,
) -> Result<(DisentanglerModel, LossReport)> {
    run_level(model, ds, cfg, Level::One)
}

/// Level 2: common encoders frozen, the rest on `recon + w_o·ortho`.
/// Requires a model that finished level 1 and uses standard wiring.
pub fn train_level2(
    model: DisentanglerModel,
    ds: &PairedDataset,
    cfg: &TrainConfig,
) -> Result<(DisentanglerModel, LossReport)> {
    if model.stage < Stage::Step1Complete {
        return Err(Error::Staging(format!(
            "level 2 needs a model tagged step1-complete, found {}",
            model.stage.name()
        )));
    }
    if model.wiring != Wiring::Standard {
        return Err(Error::Staging(
            "level 2 runs on standard wiring; switch the model's wiring first".into(),
        ));
    }
    run_level(model, ds, cfg, Level::Two)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_torus_dataset, TorusOptions};
    use crate::model::{LatentDims, ModelShape};

    fn tiny() -> (DisentanglerModel, PairedDataset) {
        let ds = gen_torus_dataset(1, TorusOptions { n_samples: 120, ..Default::default() }).unwrap();
        let ds = split_dataset(ds, DEFAULT_FRACTIONS, 2).unwrap();
        let dims = LatentDims::new(2, 2, 2, 4, 4).unwrap();
        let shape = ModelShape {
            encoder_width: 6,
            decoder_width: 8,
            layers: 3,
            tanh_layers: 2,
        };
        (DisentanglerModel::new(dims, shape, Wiring::Standard, 3).unwrap(), ds)
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            max_epochs_level1: epochs,
            max_epochs_level2: epochs,
            batch_size: 32,
            learning_rate: 5e-3,
            ..Default::default()
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let (model, ds) = tiny();
        let c = TrainConfig {
            learning_rate: 0.0,
            ..cfg(1)
        };
        let (out, report) = train_level1(model.clone(), &ds, &c).unwrap();
        for s in Slot::ALL {
            assert_eq!(out.fingerprint(s), model.fingerprint(s));
        }
        assert_eq!(out.stage, Stage::Step1Complete);
        assert_eq!(report.epochs_run, 1);
    }

    #[test]
    fn level1_reduces_validation_loss() {
        let (model, ds) = tiny();
        let (_, report) = train_level1(model, &ds, &cfg(40)).unwrap();
        let first = report.validation_history().next().unwrap().loss.total;
        assert!(report.final_val.unwrap().total < first);
        assert!(report.records.iter().all(|r| r.loss.total.is_finite() && r.loss.total >= 0.0));
    }

    #[test]
    fn level2_freezes_common_encoders() {
        let (model, ds) = tiny();
        let (m1, _) = train_level1(model, &ds, &cfg(5)).unwrap();
        let (m2, report) = train_level2(m1.clone(), &ds, &cfg(5)).unwrap();
        assert_eq!(m2.stage, Stage::Step2Complete);
        assert_eq!(report.level, 2);
        for s in [Slot::E1c, Slot::E2c] {
            assert_eq!(m1.fingerprint(s), m2.fingerprint(s));
        }
        assert_ne!(m1.fingerprint(Slot::E1u), m2.fingerprint(Slot::E1u));
        for i in 0..ds.len() {
            let a = m1.encode(ds.s1.row(i), ds.s2.row(i)).unwrap();
            let b = m2.encode(ds.s1.row(i), ds.s2.row(i)).unwrap();
            assert_eq!((a.c_u, a.c_v), (b.c_u, b.c_v));
        }
    }

    #[test]
    fn staging_errors() {
        let (model, ds) = tiny();
        assert!(matches!(train_level2(model.clone(), &ds, &cfg(1)), Err(Error::Staging(_))));
        let (m1, _) = train_level1(model.clone(), &ds, &cfg(1)).unwrap();
        let twisted = m1.switch_wiring(Wiring::Twisted);
        assert!(matches!(train_level2(twisted, &ds, &cfg(1)), Err(Error::Staging(_))));
        let unsplit = gen_torus_dataset(1, TorusOptions { n_samples: 20, ..Default::default() }).unwrap();
        assert!(matches!(train_level1(model, &unsplit, &cfg(1)), Err(Error::Staging(_))));
    }

    #[test]
    fn training_is_deterministic_across_execution_modes() {
        let (model, ds) = tiny();
        let seq = TrainConfig {
            execution: Execution::Sequential,
            ..cfg(3)
        };
        let par = TrainConfig {
            execution: Execution::Parallel,
            ..cfg(3)
        };
        let (a, ra) = train_level1(model.clone(), &ds, &seq).unwrap();
        let (b, rb) = train_level1(model, &ds, &par).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.to_csv(), rb.to_csv());
    }

    #[test]
    fn csv_layout() {
        let (model, ds) = tiny();
        let (_, report) = train_level1(model, &ds, &cfg(2)).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(LossReport::CSV_HEADER));
        assert_eq!(lines.count(), 6);
    }

    #[test]
    fn invalid_config_rejected() {
        let (model, ds) = tiny();
        let bad = TrainConfig {
            tol_level1: 0.0,
            ..cfg(1)
        };
        assert!(matches!(train_level1(model, &ds, &bad), Err(Error::Config(_))));
    }
}
