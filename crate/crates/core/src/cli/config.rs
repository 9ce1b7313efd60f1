//! Experiment configuration files: flat TOML, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{CausalOptions, RlOptions, ScramblerKind, TorusOptions};
use crate::error::{Error, Result};
use crate::images::corpus::CorpusOptions;
use crate::images::levelset::Fix;
use crate::model::{ModelShape, Sensor, Wiring};
use crate::train::{AdamConfig, TrainConfig, DEFAULT_FRACTIONS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Torus,
    Rl,
    Causal,
    Images,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Option<DatasetKind>,
    pub out_dir: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
    pub seed: Option<u64>,

    pub n_samples: Option<usize>,
    pub dt_sample: Option<f64>,
    pub scrambler: Option<String>,
    pub standardize: Option<bool>,
    pub lag: Option<usize>,
    pub n_frames: Option<usize>,
    pub frame_dt: Option<f64>,
    pub n_components: Option<usize>,
    pub image_side: Option<u32>,

    pub d_c: Option<usize>,
    pub d_u: Option<usize>,
    pub d_v: Option<usize>,
    pub encoder_width: Option<usize>,
    pub decoder_width: Option<usize>,
    pub layers: Option<usize>,
    pub tanh_layers: Option<usize>,
    pub wiring: Option<String>,

    pub learning_rate: Option<f64>,
    pub tol_level1: Option<f64>,
    pub tol_level2: Option<f64>,
    pub max_epochs_level1: Option<usize>,
    pub max_epochs_level2: Option<usize>,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    pub split: Option<[f64; 3]>,
    pub orthogonality_weight: Option<f64>,
    pub common_weight: Option<f64>,
    pub diagnostics: Option<bool>,

    pub export_svg: Option<bool>,
    pub levelset_samples: Option<usize>,
    pub levelset_fix: Option<String>,
    pub levelset_anchor: Option<usize>,
    pub levelset_anchor_sensor: Option<u8>,
    pub levelset_target_sensor: Option<u8>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn kind(&self) -> Result<DatasetKind> {
        self.dataset.ok_or_else(|| Error::Config("missing required key `dataset`".into()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn data_dir(&self) -> PathBuf {
        self.dataset_dir.clone().unwrap_or_else(|| self.out_dir().join("data"))
    }

    pub fn wiring(&self) -> Result<Wiring> {
        match &self.wiring {
            None => Ok(Wiring::Standard),
            Some(w) => Wiring::parse(w).ok_or_else(|| Error::Config(format!("unknown wiring `{w}`"))),
        }
    }

    pub fn scrambler_kind(&self) -> Result<ScramblerKind> {
        match &self.scrambler {
            None => Ok(ScramblerKind::default()),
            Some(s) => ScramblerKind::parse(s)
                .ok_or_else(|| Error::Config(format!("scrambler must be rotation, general or identity, got `{s}`"))),
        }
    }

    pub fn torus(&self) -> Result<TorusOptions> {
        let d = TorusOptions::default();
        Ok(TorusOptions {
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            dt_sample: self.dt_sample.unwrap_or(d.dt_sample),
            scrambler: self.scrambler_kind()?,
        })
    }

    pub fn rl(&self) -> Result<RlOptions> {
        let d = RlOptions::default();
        Ok(RlOptions {
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            scrambler: self.scrambler_kind()?,
            standardize: self.standardize.unwrap_or(d.standardize),
        })
    }

    pub fn causal(&self) -> CausalOptions {
        let d = CausalOptions::default();
        CausalOptions {
            n_samples: self.n_samples.unwrap_or(d.n_samples),
            lag: self.lag.unwrap_or(d.lag),
            standardize: self.standardize.unwrap_or(d.standardize),
        }
    }

    pub fn corpus(&self) -> CorpusOptions {
        let d = CorpusOptions::default();
        CorpusOptions {
            n_frames: self.n_frames.unwrap_or(d.n_frames),
            dt: self.frame_dt.unwrap_or(d.dt),
            ..d
        }
    }

    pub fn n_components(&self) -> usize {
        self.n_components.unwrap_or(60)
    }

    pub fn image_side(&self) -> u32 {
        self.image_side.unwrap_or(crate::images::SQUARE_SIDE)
    }

    /// Latent widths `(d_c, d_u, d_v)`.
    pub fn latent_dims(&self) -> Result<(usize, usize, usize)> {
        let (c, u, v) = match self.kind()? {
            DatasetKind::Torus | DatasetKind::Images => (2, 2, 2),
            DatasetKind::Rl => (2, 3, 3),
            DatasetKind::Causal => (2, 0, 3),
        };
        Ok((self.d_c.unwrap_or(c), self.d_u.unwrap_or(u), self.d_v.unwrap_or(v)))
    }

    pub fn shape(&self) -> Result<ModelShape> {
        let (e, d) = match self.kind()? {
            DatasetKind::Torus => (10, 20),
            DatasetKind::Rl => (30, 30),
            DatasetKind::Causal => (20, 20),
            DatasetKind::Images => (40, 80),
        };
        let base = ModelShape::deep(self.encoder_width.unwrap_or(e), self.decoder_width.unwrap_or(d));
        Ok(ModelShape {
            layers: self.layers.unwrap_or(base.layers),
            tanh_layers: self.tanh_layers.unwrap_or(base.tanh_layers),
            ..base
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            tol_level1: self.tol_level1.unwrap_or(d.tol_level1),
            tol_level2: self.tol_level2.unwrap_or(d.tol_level2),
            max_epochs_level1: self.max_epochs_level1.unwrap_or(d.max_epochs_level1),
            max_epochs_level2: self.max_epochs_level2.unwrap_or(d.max_epochs_level2),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed(),
            fractions: self.split.unwrap_or(DEFAULT_FRACTIONS),
            orthogonality_weight: self.orthogonality_weight.unwrap_or(d.orthogonality_weight),
            common_weight: self.common_weight.unwrap_or(d.common_weight),
            patience: self.patience.unwrap_or(d.patience),
            adam: AdamConfig::default(),
            diagnostics: self.diagnostics.unwrap_or(d.diagnostics),
            execution: d.execution,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn levelset_fix(&self) -> Result<Fix> {
        match &self.levelset_fix {
            None => Ok(Fix::Common),
            Some(s) => Fix::parse(s).ok_or_else(|| Error::Config(format!("unknown levelset_fix `{s}`"))),
        }
    }

    pub fn sensor(n: Option<u8>, default: Sensor) -> Result<Sensor> {
        match n {
            None => Ok(default),
            Some(1) => Ok(Sensor::One),
            Some(2) => Ok(Sensor::Two),
            Some(other) => Err(Error::Config(format!("sensor must be 1 or 2, got {other}"))),
        }
    }

    /// Snapshot of every key with its resolved value, for the run manifest.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configs serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::parse("dataset = \"torus\"\nlearning_rat = 0.1\n").unwrap_err();
        assert!(matches!(err, Error::Config(m) if m.contains("learning_rat")));
    }

    #[test]
    fn dataset_defaults() {
        let c = ExperimentConfig::parse("dataset = \"rl\"").unwrap();
        assert_eq!(c.latent_dims().unwrap(), (2, 3, 3));
        assert_eq!(c.shape().unwrap(), ModelShape::deep(30, 30));
        let c = ExperimentConfig::parse("dataset = \"causal\"\nlag = 5").unwrap();
        assert_eq!(c.causal().lag, 5);
        assert_eq!(c.causal().n_samples, 2800);
        assert_eq!(c.latent_dims().unwrap().1, 0);
    }

    #[test]
    fn invalid_values_rejected() {
        let c = ExperimentConfig::parse("dataset = \"torus\"\nsplit = [0.5, 0.5, 0.5]").unwrap();
        assert!(c.train().is_err());
        let c = ExperimentConfig::parse("dataset = \"torus\"\nwiring = \"sideways\"").unwrap();
        assert!(c.wiring().is_err());
        assert!(ExperimentConfig::parse("").unwrap().kind().is_err());
    }
}
