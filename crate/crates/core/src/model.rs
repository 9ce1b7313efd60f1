//! The six-network two-sensor autoencoder.
//!
//! Sensor 1 observations `s_u ∈ R^{k_u}` go through a common encoder
//! (`e1c`, to `R^{d_c}`) and an uncommon encoder (`e1u`, to `R^{d_u}`);
//! sensor 2 likewise through `e2c` and `e2u` (to `R^{d_v}`). Decoder `d1`
//! reads `[common, uncommon]` (common block first) and reconstructs `s_u`,
//! `d2` reconstructs `s_v`. In twisted wiring each decoder receives the
//! other sensor's common code.
//!
//! An uncommon dimension of zero is allowed and means that sensor has no
//! uncommon encoder at all.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::mlp::checkpoint::{parse_network, LineReader};
use crate::mlp::{write_network, Network, NetworkSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LatentDims {
    pub d_c: usize,
    pub d_u: usize,
    pub d_v: usize,
    pub k_u: usize,
    pub k_v: usize,
}

impl LatentDims {
    pub fn new(d_c: usize, d_u: usize, d_v: usize, k_u: usize, k_v: usize) -> Result<Self> {
        if d_c == 0 || k_u == 0 || k_v == 0 {
            return Err(Error::InvalidSpec(
                "common latent and input widths must be positive".into(),
            ));
        }
        if k_u < d_c + d_u || k_v < d_c + d_v {
            log::warn!(
                "observed widths ({k_u}, {k_v}) are smaller than latent widths ({}, {})",
                d_c + d_u,
                d_c + d_v
            );
        }
        Ok(LatentDims {
            d_c,
            d_u,
            d_v,
            k_u,
            k_v,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wiring {
    Standard,
    Twisted,
}

impl Wiring {
    pub fn name(self) -> &'static str {
        match self {
            Wiring::Standard => "standard",
            Wiring::Twisted => "twisted",
        }
    }

    pub fn parse(s: &str) -> Option<Wiring> {
        match s {
            "standard" => Some(Wiring::Standard),
            "twisted" => Some(Wiring::Twisted),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Fresh,
    Step1Complete,
    Step2Complete,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Fresh => "fresh",
            Stage::Step1Complete => "step1-complete",
            Stage::Step2Complete => "step2-complete",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        match s {
            "fresh" => Some(Stage::Fresh),
            "step1-complete" => Some(Stage::Step1Complete),
            "step2-complete" => Some(Stage::Step2Complete),
            _ => None,
        }
    }
}

/// Identifies one of the six networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    E1c,
    E1u,
    E2c,
    E2u,
    D1,
    D2,
}

impl Slot {
    pub const ALL: [Slot; 6] = [Slot::E1c, Slot::E1u, Slot::E2c, Slot::E2u, Slot::D1, Slot::D2];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Slot::E1c => "e1c",
            Slot::E1u => "e1u",
            Slot::E2c => "e2c",
            Slot::E2u => "e2u",
            Slot::D1 => "d1",
            Slot::D2 => "d2",
        }
    }
}

/// Hidden widths and depth used to build all six networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelShape {
    pub encoder_width: usize,
    pub decoder_width: usize,
    pub layers: usize,
    pub tanh_layers: usize,
}

impl ModelShape {
    pub fn deep(encoder_width: usize, decoder_width: usize) -> Self {
        ModelShape {
            encoder_width,
            decoder_width,
            layers: 7,
            tanh_layers: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentCodes {
    pub c_u: Vec<f64>,
    pub u: Vec<f64>,
    pub c_v: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisentanglerModel {
    pub dims: LatentDims,
    pub wiring: Wiring,
    pub stage: Stage,
    nets: [Option<Network>; 6],
}

impl DisentanglerModel {
    pub fn new(dims: LatentDims, shape: ModelShape, wiring: Wiring, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |input, hidden, output, rng: &mut ChaCha8Rng| -> Result<Option<Network>> {
            if output == 0 {
                return Ok(None);
            }
            let spec = NetworkSpec::mlp(input, hidden, output, shape.layers, shape.tanh_layers)?;
            Ok(Some(Network::init_with(spec, rng)))
        };
        let nets = [
            mk(dims.k_u, shape.encoder_width, dims.d_c, &mut rng)?,
            mk(dims.k_u, shape.encoder_width, dims.d_u, &mut rng)?,
            mk(dims.k_v, shape.encoder_width, dims.d_c, &mut rng)?,
            mk(dims.k_v, shape.encoder_width, dims.d_v, &mut rng)?,
            mk(dims.d_c + dims.d_u, shape.decoder_width, dims.k_u, &mut rng)?,
            mk(dims.d_c + dims.d_v, shape.decoder_width, dims.k_v, &mut rng)?,
        ];
        Ok(DisentanglerModel {
            dims,
            wiring,
            stage: Stage::Fresh,
            nets,
        })
    }

    /// Assemble from explicit networks; uncommon encoders may be absent.
    pub fn from_networks(
        dims: LatentDims,
        wiring: Wiring,
        stage: Stage,
        nets: [Option<Network>; 6],
    ) -> Result<Self> {
        let shapes = [
            (dims.k_u, dims.d_c),
            (dims.k_u, dims.d_u),
            (dims.k_v, dims.d_c),
            (dims.k_v, dims.d_v),
            (dims.d_c + dims.d_u, dims.k_u),
            (dims.d_c + dims.d_v, dims.k_v),
        ];
        for (slot, (net, (input, output))) in Slot::ALL.iter().zip(nets.iter().zip(shapes)) {
            match net {
                Some(n) => {
                    check_dim(slot.name(), input, n.input_width())?;
                    check_dim(slot.name(), output, n.output_width())?;
                }
                None if output == 0 => {}
                None => {
                    return Err(Error::InvalidSpec(format!(
                        "network {} is missing",
                        slot.name()
                    )))
                }
            }
        }
        Ok(DisentanglerModel {
            dims,
            wiring,
            stage,
            nets,
        })
    }

    pub fn network(&self, slot: Slot) -> Option<&Network> {
        self.nets[slot.index()].as_ref()
    }

    pub fn network_mut(&mut self, slot: Slot) -> Option<&mut Network> {
        self.nets[slot.index()].as_mut()
    }

    pub(crate) fn required(&self, slot: Slot) -> &Network {
        self.nets[slot.index()]
            .as_ref()
            .expect("common encoders and decoders always exist")
    }

    /// Change the decoder routing; parameters are untouched.
    pub fn switch_wiring(mut self, wiring: Wiring) -> Self {
        self.wiring = wiring;
        self
    }

    fn forward_opt(net: Option<&Network>, x: &[f64]) -> Result<Vec<f64>> {
        match net {
            Some(n) => n.forward(x),
            None => Ok(Vec::new()),
        }
    }

    pub fn encode_sensor1(&self, s_u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("sensor 1 input", self.dims.k_u, s_u.len())?;
        Ok((
            self.required(Slot::E1c).forward(s_u)?,
            Self::forward_opt(self.network(Slot::E1u), s_u)?,
        ))
    }

    pub fn encode_sensor2(&self, s_v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("sensor 2 input", self.dims.k_v, s_v.len())?;
        Ok((
            self.required(Slot::E2c).forward(s_v)?,
            Self::forward_opt(self.network(Slot::E2u), s_v)?,
        ))
    }

    pub fn encode(&self, s_u: &[f64], s_v: &[f64]) -> Result<LatentCodes> {
        let (c_u, u) = self.encode_sensor1(s_u)?;
        let (c_v, v) = self.encode_sensor2(s_v)?;
        Ok(LatentCodes { c_u, u, c_v, v })
    }

    /// Decode one sensor from an explicit `(common, uncommon)` pair.
    pub fn decode_sensor(&self, sensor: Sensor, common: &[f64], uncommon: &[f64]) -> Result<Vec<f64>> {
        let (slot, du) = match sensor {
            Sensor::One => (Slot::D1, self.dims.d_u),
            Sensor::Two => (Slot::D2, self.dims.d_v),
        };
        check_dim("common code", self.dims.d_c, common.len())?;
        check_dim("uncommon code", du, uncommon.len())?;
        let mut input = Vec::with_capacity(common.len() + uncommon.len());
        input.extend_from_slice(common);
        input.extend_from_slice(uncommon);
        self.required(slot).forward(&input)
    }

    /// Reconstructions `(ŝ_u, ŝ_v)` honoring the wiring mode.
    pub fn decode(&self, codes: &LatentCodes) -> Result<(Vec<f64>, Vec<f64>)> {
        let (c1, c2) = match self.wiring {
            Wiring::Standard => (&codes.c_u, &codes.c_v),
            Wiring::Twisted => (&codes.c_v, &codes.c_u),
        };
        Ok((
            self.decode_sensor(Sensor::One, c1, &codes.u)?,
            self.decode_sensor(Sensor::Two, c2, &codes.v)?,
        ))
    }

    pub fn autoencode(&self, s_u: &[f64], s_v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.decode(&self.encode(s_u, s_v)?)
    }

    pub fn fingerprint(&self, slot: Slot) -> Option<String> {
        self.network(slot).map(|n| n.params().fingerprint())
    }

    pub fn to_checkpoint_string(&self) -> String {
        let mut s = String::new();
        s.push_str(MODEL_HEADER);
        s.push('\n');
        let d = &self.dims;
        writeln!(s, "dims {} {} {} {} {}", d.d_c, d.d_u, d.d_v, d.k_u, d.k_v).unwrap();
        writeln!(s, "wiring {}", self.wiring.name()).unwrap();
        writeln!(s, "stage {}", self.stage.name()).unwrap();
        s.push_str("decoder-input common-first\n");
        for slot in Slot::ALL {
            match self.network(slot) {
                Some(net) => {
                    writeln!(s, "slot {}", slot.name()).unwrap();
                    write_network(net, &mut s);
                }
                None => writeln!(s, "slot {} absent", slot.name()).unwrap(),
            }
        }
        s.push_str("end model\n");
        s
    }

    pub fn from_checkpoint_str(text: &str, path: &Path) -> Result<Self> {
        let mut r = LineReader::new(text, path, "model checkpoint");
        r.expect(MODEL_HEADER)?;
        let line = r.keyed("dims")?;
        let d = r.usizes(line)?;
        if d.len() != 5 {
            return Err(r.error("dims needs 5 values"));
        }
        let dims = LatentDims::new(d[0], d[1], d[2], d[3], d[4]).map_err(|e| r.error(e))?;
        let w = r.keyed("wiring")?;
        let wiring = Wiring::parse(w).ok_or_else(|| r.error(format!("unknown wiring `{w}`")))?;
        let st = r.keyed("stage")?;
        let stage = Stage::parse(st).ok_or_else(|| r.error(format!("unknown stage `{st}`")))?;
        r.expect("decoder-input common-first")?;
        let mut nets: [Option<Network>; 6] = Default::default();
        for slot in Slot::ALL {
            let rest = r.keyed("slot")?;
            if rest == format!("{} absent", slot.name()) {
                continue;
            }
            if rest != slot.name() {
                return Err(r.error(format!("expected slot {}, found `{rest}`", slot.name())));
            }
            nets[slot.index()] = Some(parse_network(&mut r)?);
        }
        r.expect("end model")?;
        DisentanglerModel::from_networks(dims, wiring, stage, nets).map_err(|e| r.error(e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, path)
    }
}

pub const MODEL_HEADER: &str = "disentangler-model v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sensor {
    One,
    Two,
}
