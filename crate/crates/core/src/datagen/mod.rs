//! Synthetic paired datasets: three harmonic oscillators on a torus,
//! Rössler + Lorenz + a common limit cycle, and the time-lagged pair.

pub mod ode;
pub mod scrambler;

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{AngleRoles, PairedDataset, Provenance, Truth};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
pub use ode::{integrate_rk4, sample_trajectory, OdeSystem, Trajectory, VectorField};
pub use scrambler::{Scrambler, ScramblerKind};

/// Angular frequencies of the uncommon (`U`, `V`) and common (`C`) oscillators.
pub const OMEGA_U: f64 = PI / 2.0;
pub const OMEGA_V: f64 = PI / (2.0 * std::f64::consts::SQRT_2);
pub const OMEGA_C: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum SystemParams {
    Ode(OdeSystem),
    Harmonic { system: &'static str, omega: f64 },
}

/// How one system's trajectory was produced.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySpec {
    pub role: String,
    pub params: SystemParams,
    pub initial: Vec<f64>,
    pub dt_internal: f64,
    pub dt_sample: f64,
    pub n_samples: usize,
    pub burn_in: f64,
}

impl TrajectorySpec {
    pub fn sample(&self) -> Result<Matrix> {
        match &self.params {
            SystemParams::Ode(sys) => sample_trajectory(
                sys,
                &self.initial,
                self.dt_internal,
                self.burn_in,
                self.dt_sample,
                self.n_samples,
            ),
            SystemParams::Harmonic { omega, .. } => {
                let mut m = Matrix::zeros(self.n_samples, 2);
                for i in 0..self.n_samples {
                    let theta = TAU * omega * (i as f64 * self.dt_sample);
                    m[(i, 0)] = theta.cos();
                    m[(i, 1)] = theta.sin();
                }
                Ok(m)
            }
        }
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("trajectory specs serialize")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusOptions {
    pub n_samples: usize,
    pub dt_sample: f64,
    pub scrambler: ScramblerKind,
}

impl Default for TorusOptions {
    fn default() -> Self {
        TorusOptions {
            n_samples: 3000,
            dt_sample: 0.05,
            scrambler: ScramblerKind::Rotation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RlOptions {
    pub n_samples: usize,
    pub scrambler: ScramblerKind,
    pub standardize: bool,
}

impl Default for RlOptions {
    fn default() -> Self {
        RlOptions {
            n_samples: 3000,
            scrambler: ScramblerKind::Rotation,
            standardize: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CausalOptions {
    pub n_samples: usize,
    /// Lag between the sensors, in samples.
    pub lag: usize,
    pub standardize: bool,
}

impl Default for CausalOptions {
    fn default() -> Self {
        CausalOptions {
            n_samples: 2800,
            lag: 200,
            standardize: true,
        }
    }
}

/// Sampling interval of the limit cycle, in time units. With a unit interval
/// a lag in samples equals the lag in time units.
pub const LIMIT_CYCLE_DT_SAMPLE: f64 = 1.0;
const LIMIT_CYCLE_DT: f64 = 0.05;
const LIMIT_CYCLE_BURN_IN: f64 = 10_000.0;
const CHAOTIC_DT: f64 = 1e-3;
const CHAOTIC_BURN_IN: f64 = 100.0;
const ROSSLER_DT_SAMPLE: f64 = 0.2;
const LORENZ_DT_SAMPLE: f64 = 0.05;

fn jitter(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    base.iter().map(|b| b + rng.gen_range(-scale..=scale)).collect()
}

fn rossler_spec(rng: &mut ChaCha8Rng, n: usize) -> TrajectorySpec {
    TrajectorySpec {
        role: "rossler".into(),
        params: SystemParams::Ode(OdeSystem::rossler()),
        initial: jitter(rng, &[1.0, 1.0, 1.0], 0.1),
        dt_internal: CHAOTIC_DT,
        dt_sample: ROSSLER_DT_SAMPLE,
        n_samples: n,
        burn_in: CHAOTIC_BURN_IN,
    }
}

fn lorenz_spec(rng: &mut ChaCha8Rng, n: usize) -> TrajectorySpec {
    TrajectorySpec {
        role: "lorenz".into(),
        params: SystemParams::Ode(OdeSystem::lorenz()),
        initial: jitter(rng, &[1.0, 1.0, 1.0], 0.1),
        dt_internal: CHAOTIC_DT,
        dt_sample: LORENZ_DT_SAMPLE,
        n_samples: n,
        burn_in: CHAOTIC_BURN_IN,
    }
}

fn limit_cycle_spec(rng: &mut ChaCha8Rng, n: usize) -> TrajectorySpec {
    TrajectorySpec {
        role: "limit_cycle".into(),
        params: SystemParams::Ode(OdeSystem::limit_cycle()),
        initial: jitter(rng, &[0.2, 0.7], 0.01),
        dt_internal: LIMIT_CYCLE_DT,
        dt_sample: LIMIT_CYCLE_DT_SAMPLE,
        n_samples: n,
        burn_in: LIMIT_CYCLE_BURN_IN,
    }
}

/// Column means and population standard deviations.
pub fn column_stats(m: &Matrix) -> Vec<(f64, f64)> {
    let means = m.column_means();
    let n = m.rows().max(1) as f64;
    (0..m.cols())
        .map(|j| {
            let var = m.iter_rows().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
            (means[j], var.sqrt())
        })
        .collect()
}

pub fn standardize(m: &Matrix, stats: &[(f64, f64)]) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (v, &(mu, sd)) in out.row_mut(i).iter_mut().zip(stats) {
            *v = if sd > 0.0 { (*v - mu) / sd } else { *v - mu };
        }
    }
    out
}

/// Angle of each 2-D row around the origin, in `[0, 2π)`.
pub fn planar_angle(m: &Matrix) -> Vec<f64> {
    m.iter_rows().map(|r| r[1].atan2(r[0]).rem_euclid(TAU)).collect()
}

fn unit_circle_angles(n: usize, omega: f64, dt: f64) -> Vec<f64> {
    (0..n).map(|i| (TAU * omega * i as f64 * dt).rem_euclid(TAU)).collect()
}

fn value_range(a: &Matrix, b: &Matrix) -> (f64, f64) {
    let (a0, a1) = a.min_max();
    let (b0, b1) = b.min_max();
    (a0.min(b0), a1.max(b1))
}

fn scrambler_seeds(seed: u64) -> (ChaCha8Rng, u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s1 = rng.gen();
    let s2 = rng.gen();
    (rng, s1, s2)
}

/// Three independent oscillators `θ_i(t) = 2π ω_i t`, each embedded as a unit
/// circle; sensor 1 sees `(U, C)`, sensor 2 sees `(V, C)`, each mixed by its
/// own invertible 4×4 map.
pub fn gen_torus_dataset(seed: u64, opts: TorusOptions) -> Result<PairedDataset> {
    let n = opts.n_samples;
    if n == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let (_, seed1, seed2) = scrambler_seeds(seed);
    let spec = |role: &str, omega: f64| TrajectorySpec {
        role: role.into(),
        params: SystemParams::Harmonic {
            system: "harmonic",
            omega,
        },
        initial: vec![1.0, 0.0],
        dt_internal: opts.dt_sample,
        dt_sample: opts.dt_sample,
        n_samples: n,
        burn_in: 0.0,
    };
    let specs = [spec("U", OMEGA_U), spec("V", OMEGA_V), spec("C", OMEGA_C)];
    let u = specs[0].sample()?;
    let v = specs[1].sample()?;
    let c = specs[2].sample()?;
    let raw1 = u.hcat(&c)?;
    let raw2 = v.hcat(&c)?;
    let m1 = Scrambler::make(4, seed1, opts.scrambler)?;
    let m2 = Scrambler::make(4, seed2, opts.scrambler)?;
    let s1 = m1.scramble(&raw1)?;
    let s2 = m2.scramble(&raw2)?;

    let mut truth = Matrix::zeros(n, 4);
    let angles = [
        unit_circle_angles(n, OMEGA_U, opts.dt_sample),
        unit_circle_angles(n, OMEGA_V, opts.dt_sample),
        unit_circle_angles(n, OMEGA_C, opts.dt_sample),
    ];
    for i in 0..n {
        truth[(i, 0)] = angles[0][i];
        truth[(i, 1)] = angles[1][i];
        truth[(i, 2)] = angles[2][i];
        truth[(i, 3)] = i as f64 * opts.dt_sample;
    }
    let provenance = Provenance {
        kind: "torus".into(),
        seed,
        n_samples: n,
        systems: specs.iter().map(TrajectorySpec::to_json).collect(),
        scrambler_s1: Some(m1.record()),
        scrambler_s2: Some(m2.record()),
        standardization: None,
        value_range: value_range(&s1, &s2),
        roles: AngleRoles {
            common: Some("theta_c".into()),
            uncommon1: Some("theta_u".into()),
            uncommon2: Some("theta_v".into()),
        },
        ..Default::default()
    };
    PairedDataset::new(
        s1,
        s2,
        Some(Truth {
            names: ["theta_u", "theta_v", "theta_c", "t"].map(String::from).to_vec(),
            values: truth,
        }),
        provenance,
    )
}

/// Sensor 1 sees `(Rössler, limit cycle)`, sensor 2 `(Lorenz, limit cycle)`,
/// each system standardized and then mixed by a per-sensor 5×5 map.
pub fn gen_rl_dataset(seed: u64, opts: RlOptions) -> Result<PairedDataset> {
    let n = opts.n_samples;
    if n == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let (mut rng, seed1, seed2) = scrambler_seeds(seed);
    let specs = [
        rossler_spec(&mut rng, n),
        lorenz_spec(&mut rng, n),
        limit_cycle_spec(&mut rng, n),
    ];
    let mut raw: Vec<Matrix> = specs.iter().map(TrajectorySpec::sample).collect::<Result<_>>()?;
    let mut stats_all = Vec::new();
    if opts.standardize {
        for m in raw.iter_mut() {
            let stats = column_stats(m);
            *m = standardize(m, &stats);
            stats_all.extend(stats);
        }
    }
    let [ross, lor, cyc] = <[Matrix; 3]>::try_from(raw).expect("three systems");
    let raw1 = ross.hcat(&cyc)?;
    let raw2 = lor.hcat(&cyc)?;
    let m1 = Scrambler::make(5, seed1, opts.scrambler)?;
    let m2 = Scrambler::make(5, seed2, opts.scrambler)?;
    let s1 = m1.scramble(&raw1)?;
    let s2 = m2.scramble(&raw2)?;

    let centered = standardize(&cyc, &column_stats(&cyc));
    let theta = planar_angle(&centered);
    let mut truth = Matrix::zeros(n, 7);
    for i in 0..n {
        truth[(i, 0)] = theta[i];
        truth.row_mut(i)[1..4].copy_from_slice(ross.row(i));
        truth.row_mut(i)[4..7].copy_from_slice(lor.row(i));
    }
    let names = [
        "theta_c", "rossler_x", "rossler_y", "rossler_z", "lorenz_x", "lorenz_y", "lorenz_z",
    ]
    .map(String::from)
    .to_vec();
    let provenance = Provenance {
        kind: "rl".into(),
        seed,
        n_samples: n,
        systems: specs.iter().map(TrajectorySpec::to_json).collect(),
        scrambler_s1: Some(m1.record()),
        scrambler_s2: Some(m2.record()),
        standardization: opts.standardize.then_some(stats_all),
        value_range: value_range(&s1, &s2),
        roles: AngleRoles {
            common: Some("theta_c".into()),
            ..Default::default()
        },
        ..Default::default()
    };
    PairedDataset::new(s1, s2, Some(Truth { names, values: truth }), provenance)
}

/// Sensor 1 sees the limit cycle at `t`; sensor 2 sees the limit cycle and
/// a Rössler system at `t + lag`. Neither sensor is scrambled.
pub fn gen_causal_dataset(seed: u64, opts: CausalOptions) -> Result<PairedDataset> {
    let n = opts.n_samples;
    if n == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cyc_spec = limit_cycle_spec(&mut rng, n + opts.lag);
    let ross_spec = rossler_spec(&mut rng, n);
    let mut cyc = cyc_spec.sample()?;
    let mut ross = ross_spec.sample()?;
    let mut stats_all = Vec::new();
    if opts.standardize {
        let cs = column_stats(&cyc);
        let rs = column_stats(&ross);
        cyc = standardize(&cyc, &cs);
        ross = standardize(&ross, &rs);
        stats_all.extend(cs);
        stats_all.extend(rs);
    }
    let present: Vec<usize> = (0..n).collect();
    let future: Vec<usize> = (opts.lag..opts.lag + n).collect();
    let s1 = cyc.select_rows(&present);
    let s2 = cyc.select_rows(&future).hcat(&ross)?;

    let theta = planar_angle(&standardize(&cyc, &column_stats(&cyc)));
    let mut truth = Matrix::zeros(n, 2);
    for i in 0..n {
        truth[(i, 0)] = theta[i];
        truth[(i, 1)] = theta[i + opts.lag];
    }
    let mut provenance = Provenance {
        kind: "causal".into(),
        seed,
        n_samples: n,
        systems: vec![cyc_spec.to_json(), ross_spec.to_json()],
        standardization: opts.standardize.then_some(stats_all),
        value_range: value_range(&s1, &s2),
        roles: AngleRoles {
            common: Some("theta_c".into()),
            ..Default::default()
        },
        ..Default::default()
    };
    provenance.notes.insert("lag_samples".into(), opts.lag.to_string());
    provenance.notes.insert(
        "lag_time_units".into(),
        (opts.lag as f64 * LIMIT_CYCLE_DT_SAMPLE).to_string(),
    );
    PairedDataset::new(
        s1,
        s2,
        Some(Truth {
            names: vec!["theta_c".into(), "theta_c_lagged".into()],
            values: truth,
        }),
        provenance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_common_block_shared_and_circles_unit() {
        let ds = gen_torus_dataset(1, TorusOptions { n_samples: 200, ..Default::default() }).unwrap();
        let p = &ds.provenance;
        let m1 = Scrambler::from_record(p.scrambler_s1.as_ref().unwrap()).unwrap();
        let m2 = Scrambler::from_record(p.scrambler_s2.as_ref().unwrap()).unwrap();
        let r1 = m1.unscramble(&ds.s1).unwrap();
        let r2 = m2.unscramble(&ds.s2).unwrap();
        for i in 0..ds.len() {
            let (a, b) = (r1.row(i), r2.row(i));
            assert!((a[2] - b[2]).abs() < 1e-10 && (a[3] - b[3]).abs() < 1e-10);
            assert!(((a[0] * a[0] + a[1] * a[1]) - 1.0).abs() < 1e-10);
            assert!(((a[2] * a[2] + a[3] * a[3]) - 1.0).abs() < 1e-10);
            assert!(((b[0] * b[0] + b[1] * b[1]) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn torus_identity_scrambler_gives_raw_circles() {
        let ds = gen_torus_dataset(
            0,
            TorusOptions {
                n_samples: 50,
                scrambler: ScramblerKind::Identity,
                ..Default::default()
            },
        )
        .unwrap();
        let theta = ds.truth.as_ref().unwrap().column("theta_c").unwrap();
        for i in 0..50 {
            assert!((ds.s1[(i, 2)] - theta[i].cos()).abs() < 1e-12);
            assert_eq!(ds.s1[(i, 2)], ds.s2[(i, 2)]);
            assert_eq!(ds.s1[(i, 3)], ds.s2[(i, 3)]);
        }
    }

    #[test]
    fn rl_limit_cycle_block_shared_and_invertible() {
        let ds = gen_rl_dataset(2, RlOptions { n_samples: 300, ..Default::default() }).unwrap();
        let p = &ds.provenance;
        let m1 = Scrambler::from_record(p.scrambler_s1.as_ref().unwrap()).unwrap();
        let m2 = Scrambler::from_record(p.scrambler_s2.as_ref().unwrap()).unwrap();
        let r1 = m1.unscramble(&ds.s1).unwrap();
        let r2 = m2.unscramble(&ds.s2).unwrap();
        let truth = ds.truth.as_ref().unwrap();
        for i in 0..ds.len() {
            assert!((r1[(i, 3)] - r2[(i, 3)]).abs() < 1e-10);
            assert!((r1[(i, 4)] - r2[(i, 4)]).abs() < 1e-10);
            for j in 0..3 {
                assert!((r1[(i, j)] - truth.values[(i, 1 + j)]).abs() < 1e-10);
                assert!((r2[(i, j)] - truth.values[(i, 4 + j)]).abs() < 1e-10);
            }
        }
        assert_eq!(ds.s1.cols(), 5);
        assert_eq!(ds.s2.cols(), 5);
    }

    #[test]
    fn causal_alignment() {
        let opts = CausalOptions { n_samples: 400, lag: 37, standardize: true };
        let ds = gen_causal_dataset(3, opts).unwrap();
        assert_eq!((ds.s1.cols(), ds.s2.cols()), (2, 5));
        for i in opts.lag..ds.len() {
            assert_eq!(ds.s1.row(i), &ds.s2.row(i - opts.lag)[..2]);
        }
        let zero = gen_causal_dataset(3, CausalOptions { lag: 0, ..opts }).unwrap();
        for i in 0..zero.len() {
            assert_eq!(zero.s1.row(i), &zero.s2.row(i)[..2]);
        }
    }

    #[test]
    fn limit_cycle_angle_winds() {
        let ds = gen_causal_dataset(0, CausalOptions { n_samples: 900, lag: 0, standardize: true }).unwrap();
        let theta = ds.truth.as_ref().unwrap().column("theta_c").unwrap();
        // one period is about 836 time units, so 900 samples cover every quadrant
        let mut quadrants = [false; 4];
        for t in theta {
            quadrants[((t / (PI / 2.0)) as usize).min(3)] = true;
        }
        assert!(quadrants.iter().all(|&q| q));
    }

    #[test]
    fn generators_are_deterministic() {
        let a = gen_rl_dataset(5, RlOptions { n_samples: 100, ..Default::default() }).unwrap();
        let b = gen_rl_dataset(5, RlOptions { n_samples: 100, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }
}
