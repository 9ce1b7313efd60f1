//! Command-line entry point: `gen`, `train`, `eval` and `levelset`.
//!
//! Exit codes: 0 on success, 2 for usage, configuration, staging and I/O
//! errors, 3 for numeric failures such as diverging training.

pub mod config;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datagen::{gen_causal_dataset, gen_rl_dataset, gen_torus_dataset};
use crate::dataset::{column_names, write_csv, AngleRoles, PairedDataset, Provenance, Split};
use crate::error::{Error, Result};
use crate::eval::{causal_predict, evaluate_model, export_embeddings, metric_rows, EvalSettings};
use crate::images::corpus::rotating_pattern_corpus;
use crate::images::levelset::{generate_level_set, LatentPool, LevelSetRequest};
use crate::images::{back_project, fit_pca, preprocess, project, save_gray, to_gray_image, PcaModel};
use crate::matrix::Matrix;
use crate::model::{DisentanglerModel, LatentDims, Sensor, Wiring};
use crate::parallel::Execution;
use crate::train::{split_dataset, train_level1, train_level2, LossReport};

pub use config::{DatasetKind, ExperimentConfig};
pub use manifest::RunManifest;

pub const STEP1_CHECKPOINT: &str = "model_step1.txt";
pub const STEP2_CHECKPOINT: &str = "model_step2.txt";
pub const PCA_S1: &str = "pca_s1.bin";
pub const PCA_S2: &str = "pca_s2.bin";

#[derive(Parser, Debug)]
#[command(name = "disentangle", version, about = "Common/uncommon latent disentanglement for paired sensors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LevelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum WiringArg {
    Standard,
    Twisted,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset directory.
    Gen(CommonArgs),
    /// Train level 1, level 2, or both.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "both")]
        level: LevelArg,
        /// Decoder wiring for level 1.
        #[arg(long, value_enum)]
        wiring: Option<WiringArg>,
        /// Step-1 checkpoint to start level 2 from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint and export embeddings.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Generate a level set around an anchor observation.
    Levelset {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Dataset row of the anchor.
        #[arg(long)]
        anchor: Option<usize>,
        /// Number of generated samples.
        #[arg(long)]
        n: Option<usize>,
        /// Block held fixed: common, uncommon or both.
        #[arg(long)]
        fix: Option<String>,
        /// Sensor of the anchor (1 or 2).
        #[arg(long)]
        anchor_sensor: Option<u8>,
        /// Sensor whose observations are generated (1 or 2).
        #[arg(long)]
        target: Option<u8>,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Context {
    cfg: ExperimentConfig,
    config_text: String,
    seed: u64,
    out: PathBuf,
    data_dir: PathBuf,
}

impl Context {
    fn new(args: &CommonArgs) -> Result<Self> {
        let (mut cfg, config_text) = ExperimentConfig::load(&args.config)?;
        cfg.kind()?;
        if let Some(s) = args.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &args.out {
            cfg.out_dir = Some(o.clone());
        }
        let out = cfg.out_dir();
        let data_dir = cfg.data_dir();
        std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
        Ok(Context {
            seed: cfg.seed(),
            cfg,
            config_text,
            out,
            data_dir,
        })
    }

    fn manifest(&self) -> Result<RunManifest> {
        let mut m = RunManifest::load_or_default(&self.out);
        m.config = self.cfg.snapshot();
        m.seed = self.seed;
        m.config_hash = manifest::hash_bytes(self.config_text.as_bytes());
        Ok(m)
    }

    fn load_dataset(&self) -> Result<PairedDataset> {
        let ds = PairedDataset::load(&self.data_dir)?;
        match ds.split {
            Some(_) => Ok(ds),
            None => split_dataset(ds, self.cfg.train()?.fractions, self.seed),
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(&Context::new(&a)?),
        Command::Train {
            common,
            level,
            wiring,
            checkpoint,
        } => {
            let ctx = Context::new(&common)?;
            let wiring = match wiring {
                Some(WiringArg::Standard) => Wiring::Standard,
                Some(WiringArg::Twisted) => Wiring::Twisted,
                None => ctx.cfg.wiring()?,
            };
            cmd_train(&ctx, level, wiring, checkpoint.as_deref())
        }
        Command::Eval { common, checkpoint } => {
            let ctx = Context::new(&common)?;
            cmd_eval(&ctx, checkpoint.as_deref())
        }
        Command::Levelset {
            common,
            checkpoint,
            anchor,
            n,
            fix,
            anchor_sensor,
            target,
        } => {
            let mut ctx = Context::new(&common)?;
            if fix.is_some() {
                ctx.cfg.levelset_fix = fix;
            }
            let opts = LevelsetArgs {
                anchor: anchor.or(ctx.cfg.levelset_anchor).unwrap_or(0),
                n: n.or(ctx.cfg.levelset_samples).unwrap_or(10),
                anchor_sensor: ExperimentConfig::sensor(anchor_sensor.or(ctx.cfg.levelset_anchor_sensor), Sensor::One)?,
                target: target.or(ctx.cfg.levelset_target_sensor),
            };
            cmd_levelset(&ctx, checkpoint.as_deref(), opts)
        }
    }
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

fn generate(ctx: &Context) -> Result<(PairedDataset, Vec<(String, PcaModel)>)> {
    let seed = ctx.seed;
    Ok(match ctx.cfg.kind()? {
        DatasetKind::Torus => (gen_torus_dataset(seed, ctx.cfg.torus()?)?, vec![]),
        DatasetKind::Rl => (gen_rl_dataset(seed, ctx.cfg.rl()?)?, vec![]),
        DatasetKind::Causal => (gen_causal_dataset(seed, ctx.cfg.causal())?, vec![]),
        DatasetKind::Images => {
            let opts = ctx.cfg.corpus();
            let corpus = rotating_pattern_corpus(opts)?;
            let side = ctx.cfg.image_side();
            let k = ctx.cfg.n_components();
            let b1 = preprocess(&corpus.camera1, side, vec![])?;
            let b2 = preprocess(&corpus.camera2, side, vec![])?;
            let p1 = fit_pca(&b1.pixels, k)?;
            let p2 = fit_pca(&b2.pixels, k)?;
            let (s1, scale1) = scaled_coefficients(project(&p1, &b1.pixels)?);
            let (s2, scale2) = scaled_coefficients(project(&p2, &b2.pixels)?);
            let (lo1, hi1) = s1.min_max();
            let (lo2, hi2) = s2.min_max();
            let mut provenance = Provenance {
                kind: "images".into(),
                seed,
                n_samples: opts.n_frames,
                value_range: (lo1.min(lo2), hi1.max(hi2)),
                roles: AngleRoles {
                    common: Some("theta_c".into()),
                    uncommon1: Some("theta_u".into()),
                    uncommon2: Some("theta_v".into()),
                },
                ..Default::default()
            };
            provenance.notes.insert("image_side".into(), side.to_string());
            provenance.notes.insert("components_s1".into(), p1.n_components().to_string());
            provenance.notes.insert("components_s2".into(), p2.n_components().to_string());
            provenance.notes.insert("frame_dt".into(), opts.dt.to_string());
            provenance.notes.insert(scale_key(Sensor::One).into(), scale1.to_string());
            provenance.notes.insert(scale_key(Sensor::Two).into(), scale2.to_string());
            let ds = PairedDataset::new(s1, s2, Some(corpus.truth), provenance)?;
            (ds, vec![(PCA_S1.to_string(), p1), (PCA_S2.to_string(), p2)])
        }
    })
}

/// Divides PCA coefficients by their overall RMS so the networks see unit
/// scale inputs; the factor is kept to undo it before back-projection.
fn scaled_coefficients(mut coeffs: Matrix) -> (Matrix, f64) {
    let n = (coeffs.rows() * coeffs.cols()).max(1) as f64;
    let rms = (coeffs.as_slice().iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    let scale = if rms > 0.0 { rms } else { 1.0 };
    coeffs.as_mut_slice().iter_mut().for_each(|v| *v /= scale);
    (coeffs, scale)
}

fn scale_key(s: Sensor) -> &'static str {
    match s {
        Sensor::One => "coefficient_scale_s1",
        Sensor::Two => "coefficient_scale_s2",
    }
}

fn cmd_gen(ctx: &Context) -> Result<()> {
    let (ds, pcas) = generate(ctx)?;
    let ds = split_dataset(ds, ctx.cfg.train()?.fractions, ctx.seed)?;
    ds.save(&ctx.data_dir)?;
    let mut outputs = vec!["S1.csv", "S2.csv", "provenance.json"]
        .into_iter()
        .map(|f| ctx.data_dir.join(f))
        .collect::<Vec<_>>();
    if ds.truth.is_some() {
        outputs.push(ctx.data_dir.join("truth.csv"));
    }
    for (name, pca) in &pcas {
        let p = ctx.data_dir.join(name);
        pca.save(&p)?;
        outputs.push(p);
    }
    let (lo, hi) = ds.provenance.value_range;
    println!(
        "generated {} dataset: {} rows, widths {}/{}, value range [{lo:.4}, {hi:.4}], split {}/{}/{}",
        ds.provenance.kind,
        ds.len(),
        ds.s1.cols(),
        ds.s2.cols(),
        ds.indices(Split::Train)?.len(),
        ds.indices(Split::Val)?.len(),
        ds.indices(Split::Test)?.len()
    );
    let mut m = ctx.manifest()?;
    m.record(
        "gen",
        manifest::hash_bytes(ctx.config_text.as_bytes()),
        outputs.iter().map(|p| rel(&ctx.out, p)).collect(),
        "complete",
    );
    m.save(&ctx.out)
}

fn new_model(ctx: &Context, ds: &PairedDataset, wiring: Wiring) -> Result<DisentanglerModel> {
    let (d_c, d_u, d_v) = ctx.cfg.latent_dims()?;
    let dims = LatentDims::new(d_c, d_u, d_v, ds.s1.cols(), ds.s2.cols())?;
    DisentanglerModel::new(dims, ctx.cfg.shape()?, wiring, ctx.seed)
}

fn save_level(out: &Path, model: &DisentanglerModel, report: &LossReport, ckpt: &str) -> Result<Vec<PathBuf>> {
    let mp = out.join(ckpt);
    model.save(&mp)?;
    let lp = out.join(format!("loss_level{}.csv", report.level));
    report.write_csv(&lp)?;
    println!(
        "level {}: {} epochs ({:?}), best epoch {}, final train {:.3e}, val {}, test {}",
        report.level,
        report.epochs_run,
        report.stop,
        report.best_epoch,
        report.final_train.total,
        report.final_val.map_or("-".into(), |l| format!("{:.3e}", l.total)),
        report.final_test.map_or("-".into(), |l| format!("{:.3e}", l.total)),
    );
    Ok(vec![mp, lp])
}

fn file_hash(paths: &[PathBuf]) -> Result<String> {
    let mut bytes = Vec::new();
    for p in paths {
        bytes.extend(std::fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    Ok(manifest::hash_bytes(&bytes))
}

fn dataset_files(dir: &Path) -> Vec<PathBuf> {
    ["S1.csv", "S2.csv", "provenance.json"].iter().map(|f| dir.join(f)).collect()
}

fn cmd_train(ctx: &Context, level: LevelArg, wiring: Wiring, checkpoint: Option<&Path>) -> Result<()> {
    let ds = ctx.load_dataset()?;
    let tc = ctx.cfg.train()?;
    let mut m = ctx.manifest()?;
    let mut inputs = dataset_files(&ctx.data_dir);
    let mut step1 = None;
    if matches!(level, LevelArg::One | LevelArg::Both) {
        let model = new_model(ctx, &ds, wiring)?;
        let (model, report) = train_level1(model, &ds, &tc)?;
        let outs = save_level(&ctx.out, &model, &report, STEP1_CHECKPOINT)?;
        m.record(
            "train_level1",
            file_hash(&inputs)?,
            outs.iter().map(|p| rel(&ctx.out, p)).collect(),
            model.stage.name(),
        );
        step1 = Some(model);
    }
    if matches!(level, LevelArg::Two | LevelArg::Both) {
        let model = match step1 {
            Some(m) => m,
            None => {
                let p = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| ctx.out.join(STEP1_CHECKPOINT));
                if !p.exists() {
                    return Err(Error::Staging(format!(
                        "level 2 needs a step-1 checkpoint, none found at {}",
                        p.display()
                    )));
                }
                inputs.push(p.clone());
                DisentanglerModel::load(&p)?
            }
        };
        let model = if model.wiring == Wiring::Twisted {
            log::info!("switching the twisted step-1 model to standard wiring for level 2");
            model.switch_wiring(Wiring::Standard)
        } else {
            model
        };
        let (model, report) = train_level2(model, &ds, &tc)?;
        let outs = save_level(&ctx.out, &model, &report, STEP2_CHECKPOINT)?;
        m.record(
            "train_level2",
            file_hash(&inputs)?,
            outs.iter().map(|p| rel(&ctx.out, p)).collect(),
            model.stage.name(),
        );
    }
    m.save(&ctx.out)
}

fn default_checkpoint(out: &Path, given: Option<&Path>) -> PathBuf {
    if let Some(p) = given {
        return p.to_path_buf();
    }
    let step2 = out.join(STEP2_CHECKPOINT);
    if step2.exists() {
        step2
    } else {
        out.join(STEP1_CHECKPOINT)
    }
}

fn cmd_eval(ctx: &Context, checkpoint: Option<&Path>) -> Result<()> {
    let ckpt = default_checkpoint(&ctx.out, checkpoint);
    let model = DisentanglerModel::load(&ckpt)?;
    let ds = ctx.load_dataset()?;
    let tc = ctx.cfg.train()?;
    let settings = EvalSettings {
        common_weight: tc.common_weight,
        orthogonality_weight: tc.orthogonality_weight,
        execution: Execution::default(),
    };
    let report = evaluate_model(&model, &ds, &settings)?;
    let rp = ctx.out.join("eval.json");
    std::fs::write(&rp, report.to_json()).map_err(|e| Error::io(&rp, e))?;
    let mut outputs = vec![rp];
    let emb = ctx.out.join("embeddings");
    outputs.extend(export_embeddings(
        &model,
        &ds,
        &emb,
        ctx.cfg.export_svg.unwrap_or(true),
        Execution::default(),
    )?);
    if model.dims.d_u == 0 {
        let (_, rows) = metric_rows(&ds);
        let mut table = Matrix::zeros(rows.len(), 2 * ds.s1.cols());
        for (i, &r) in rows.iter().enumerate() {
            let pred = causal_predict(&model, ds.s2.row(r))?;
            let k = pred.len();
            table.row_mut(i)[..k].copy_from_slice(&pred);
            table.row_mut(i)[k..].copy_from_slice(ds.s1.row(r));
        }
        let mut header = column_names("pred_", ds.s1.cols());
        header.extend(column_names("true_", ds.s1.cols()));
        let cp = ctx.out.join("causal_prediction.csv");
        write_csv(&cp, &header, &table)?;
        outputs.push(cp);
    }
    println!(
        "eval: test loss {}, orthogonality residual {:.4e}, circular correlation {:?}{}",
        report.test_loss.map_or("-".into(), |l| format!("{l:.3e}")),
        report.orthogonality_residual,
        report.circular_correlation,
        report.causal_r2.map_or(String::new(), |r| format!(", causal R² {r:.5}")),
    );
    let mut inputs = dataset_files(&ctx.data_dir);
    inputs.push(ckpt);
    let mut m = ctx.manifest()?;
    m.record(
        "eval",
        file_hash(&inputs)?,
        outputs.iter().map(|p| rel(&ctx.out, p)).collect(),
        "complete",
    );
    m.save(&ctx.out)
}

struct LevelsetArgs {
    anchor: usize,
    n: usize,
    anchor_sensor: Sensor,
    target: Option<u8>,
}

fn sensor_rows(ds: &PairedDataset, s: Sensor) -> &Matrix {
    match s {
        Sensor::One => &ds.s1,
        Sensor::Two => &ds.s2,
    }
}

fn cmd_levelset(ctx: &Context, checkpoint: Option<&Path>, args: LevelsetArgs) -> Result<()> {
    let ckpt = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| ctx.out.join(STEP2_CHECKPOINT));
    let model = DisentanglerModel::load(&ckpt)?;
    let ds = ctx.load_dataset()?;
    if args.anchor >= ds.len() {
        return Err(Error::Config(format!(
            "anchor row {} out of range for {} rows",
            args.anchor,
            ds.len()
        )));
    }
    let target = ExperimentConfig::sensor(args.target, args.anchor_sensor)?;
    let req = LevelSetRequest {
        anchor_sensor: args.anchor_sensor,
        target_sensor: target,
        fix: ctx.cfg.levelset_fix()?,
        n_samples: args.n,
        seed: ctx.seed,
    };
    let train_rows = ds.indices(Split::Train)?;
    let pool = LatentPool::from_rows(&model, &ds.s1, &ds.s2, &train_rows, Execution::default())?;
    let anchor = sensor_rows(&ds, args.anchor_sensor).row(args.anchor);
    let ls = generate_level_set(&model, &pool, anchor, &req)?;

    let dir = ctx.out.join("levelset");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut outputs = Vec::new();
    let ap = dir.join("anchor.csv");
    let anchor_rec = Matrix::from_vec(1, ls.anchor_reconstruction.len(), ls.anchor_reconstruction.clone())?;
    write_csv(&ap, &column_names("s_", anchor_rec.cols()), &anchor_rec)?;
    outputs.push(ap);
    let sp = dir.join("samples.csv");
    let width = sensor_rows(&ds, target).cols();
    let samples = if ls.samples.cols() == 0 { Matrix::zeros(0, width) } else { ls.samples.clone() };
    write_csv(&sp, &column_names("s_", width), &samples)?;
    outputs.push(sp);
    let cp = dir.join("codes.csv");
    let mut code_header = column_names("common_", ls.anchor_common.len());
    code_header.extend(column_names("uncommon_", ls.codes.cols() - ls.anchor_common.len()));
    write_csv(&cp, &code_header, &ls.codes)?;
    outputs.push(cp);

    if ds.provenance.kind == "images" {
        let pca_for = |s: Sensor| -> Result<PcaModel> {
            PcaModel::load(&ctx.data_dir.join(match s {
                Sensor::One => PCA_S1,
                Sensor::Two => PCA_S2,
            }))
        };
        let side = ds
            .provenance
            .notes
            .get("image_side")
            .and_then(|s| s.parse().ok())
            .unwrap_or(crate::images::SQUARE_SIDE);
        let unscale = |s: Sensor, m: &Matrix| -> Matrix {
            let k: f64 = ds.provenance.notes.get(scale_key(s)).and_then(|v| v.parse().ok()).unwrap_or(1.0);
            let mut m = m.clone();
            m.as_mut_slice().iter_mut().for_each(|v| *v *= k);
            m
        };
        let pa = pca_for(args.anchor_sensor)?;
        let pixels = back_project(&pa, &unscale(args.anchor_sensor, &anchor_rec))?;
        let p = dir.join("anchor.png");
        save_gray(&p, &to_gray_image(side, side, pixels.row(0)))?;
        outputs.push(p);
        if samples.rows() > 0 {
            let pt = pca_for(target)?;
            let pixels = back_project(&pt, &unscale(target, &samples))?;
            for i in 0..pixels.rows() {
                let p = dir.join(format!("sample_{i:03}.png"));
                save_gray(&p, &to_gray_image(side, side, pixels.row(i)))?;
                outputs.push(p);
            }
        }
    }
    println!("levelset: anchor row {} plus {} generated samples in {}", args.anchor, ls.samples.rows(), dir.display());
    let mut inputs = dataset_files(&ctx.data_dir);
    inputs.push(ckpt);
    let mut m = ctx.manifest()?;
    m.record(
        "levelset",
        file_hash(&inputs)?,
        outputs.iter().map(|p| rel(&ctx.out, p)).collect(),
        "complete",
    );
    m.save(&ctx.out)
}
