//! Run configuration and the generate → measure → train → evaluate chain
//! shared by the command-line tool and the acceptance suite.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::rho_to_coherence;
use crate::dynamics::{
    evolve_chain_dense, haar_random_two_qubit_unitary, lindblad_trajectory, make_initial_state,
    random_density_matrix, ChainSpec, ExactTrajectory, TrajectorySpec,
};
use crate::evaluation::epsilon;
use crate::generator::{benchmark_model, ground_truth_l, JumpOperatorSet};
use crate::measurement::{build_dataset, MeasurementConfig, MeasurementDataset};
use crate::rng::{derive_seed, tag};
use crate::tebd::{evolve_chain_tebd, make_initial_mps, Truncation};
use crate::trainer::{context, train_dataset, TrainConfig, TrainOutcome};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Benchmark,
    ChainDense,
    ChainTebd,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "benchmark" => Ok(Mode::Benchmark),
            "chain-dense" => Ok(Mode::ChainDense),
            "chain-tebd" => Ok(Mode::ChainTebd),
            other => Err(Error::InvalidConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// Two driven, interacting qubits with decay and dephasing on each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub omega: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self { omega: 1.0, v: 0.5, gamma: 0.01, kappa: 0.05 }
    }
}

impl BenchmarkSpec {
    pub fn jump_set(&self) -> JumpOperatorSet {
        benchmark_model(self.omega, self.v, self.gamma, self.kappa)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    /// Shots per setting; `null` for exact expectation values.
    #[serde(rename = "N")]
    pub shots: Option<u32>,
    #[serde(rename = "M")]
    pub times_per_trajectory: usize,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        Self { shots: Some(100), times_per_trajectory: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    pub benchmark: BenchmarkSpec,
    pub chain: ChainSpec,
    pub tebd: Truncation,
    /// Training trajectories; `n_trajectories` of them.
    pub trajectories: TrajectorySpec,
    pub test_trajectories: usize,
    pub measurement: MeasurementSettings,
    pub training: TrainConfig,
    /// Master seed; every random stream in a run derives from it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Benchmark,
            benchmark: BenchmarkSpec::default(),
            chain: ChainSpec::ring(10, 1.0, 0.1),
            tebd: Truncation { chi_max: 64, eps_svd: 1e-10 },
            trajectories: TrajectorySpec::default(),
            test_trajectories: 10,
            measurement: MeasurementSettings::default(),
            training: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.trajectories.validate()?;
        self.training.validate()?;
        self.measurement_config().validate()?;
        if self.trajectories.n_trajectories == 0 {
            return Err(Error::InvalidConfig("need at least one training trajectory".into()));
        }
        match self.mode {
            Mode::Benchmark => {
                let b = &self.benchmark;
                if ![b.omega, b.v, b.gamma, b.kappa].iter().all(|x| x.is_finite()) || b.gamma < 0.0 || b.kappa < 0.0 {
                    return Err(Error::InvalidConfig("benchmark rates must be finite and non-negative".into()));
                }
            }
            Mode::ChainDense | Mode::ChainTebd => self.chain.validate()?,
        }
        if self.mode == Mode::ChainTebd && (self.tebd.chi_max == 0 || !(self.tebd.eps_svd >= 0.0)) {
            return Err(Error::InvalidConfig("tebd needs chi_max >= 1 and eps_svd >= 0".into()));
        }
        Ok(())
    }

    pub fn measurement_config(&self) -> MeasurementConfig {
        MeasurementConfig {
            shots: self.measurement.shots,
            times_per_trajectory: self.measurement.times_per_trajectory,
            window: self.trajectories.t_total,
            seed: derive_seed(self.seed, &[tag::SHOTS]),
        }
    }

    /// Training configuration with its seed tied to the master seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, &[tag::INIT]), ..self.training.clone() }
    }

    /// Test trajectories span twice the training window in benchmark mode.
    pub fn test_steps(&self) -> usize {
        match self.mode {
            Mode::Benchmark => 2 * self.trajectories.steps(),
            _ => self.trajectories.steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactData {
    pub train: Vec<ExactTrajectory>,
    pub test: Vec<ExactTrajectory>,
}

fn one_trajectory(config: &RunConfig, id: usize, seed: u64, steps: usize) -> Result<ExactTrajectory> {
    let basis = &context().basis;
    let dt = config.trajectories.dt;
    let traj = TrajectorySpec { t_total: steps as f64 * dt, ..config.trajectories };
    let states = match config.mode {
        Mode::Benchmark => {
            let l = ground_truth_l(&config.benchmark.jump_set(), basis, &context().sc);
            let v0 = rho_to_coherence(&random_density_matrix(seed), basis).0;
            lindblad_trajectory(&l, &v0, dt, steps)
        }
        Mode::ChainDense => {
            let psi0 = make_initial_state(&config.chain, &haar_random_two_qubit_unitary(seed));
            evolve_chain_dense(&config.chain, &psi0, &traj, basis)?
        }
        Mode::ChainTebd => {
            let mps0 = make_initial_mps(config.chain.length, &haar_random_two_qubit_unitary(seed), config.tebd);
            evolve_chain_tebd(&config.chain, &mps0, &traj, basis)?.states
        }
    };
    Ok(ExactTrajectory { id, dt, states })
}

/// Exact training and test trajectories, generated in parallel with one
/// derived seed per trajectory.
pub fn generate_exact(config: &RunConfig) -> Result<ExactData> {
    config.validate()?;
    let train_steps = config.trajectories.steps();
    let test_steps = config.test_steps();
    let jobs: Vec<(bool, usize)> = (0..config.trajectories.n_trajectories)
        .map(|i| (true, i))
        .chain((0..config.test_trajectories).map(|i| (false, i)))
        .collect();
    let results: Vec<Result<ExactTrajectory>> = jobs
        .par_iter()
        .map(|&(train, i)| {
            let (t, steps) = if train { (tag::TRAIN_TRAJ, train_steps) } else { (tag::TEST_TRAJ, test_steps) };
            one_trajectory(config, i, derive_seed(config.seed, &[t, i as u64]), steps)
        })
        .collect();
    let mut data = ExactData { train: Vec::new(), test: Vec::new() };
    for (job, r) in jobs.iter().zip(results) {
        if job.0 {
            data.train.push(r?);
        } else {
            data.test.push(r?);
        }
    }
    Ok(data)
}

pub fn measure(config: &RunConfig, exact: &ExactData) -> Result<MeasurementDataset> {
    build_dataset(&exact.train, &config.measurement_config(), &context().basis)
}

#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub dataset: MeasurementDataset,
    pub outcome: TrainOutcome,
    pub epsilon: f64,
}

/// Measure, train and evaluate on already generated exact data.
pub fn run_on(config: &RunConfig, exact: &ExactData) -> Result<PipelineRun> {
    config.validate()?;
    let dataset = measure(config, exact)?;
    let outcome = train_dataset(&dataset, &config.train_config())?;
    let epsilon = epsilon(&outcome.model, &exact.test)?;
    Ok(PipelineRun { dataset, outcome, epsilon })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = RunConfig { mode: Mode::ChainTebd, seed: 42, ..Default::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        let partial: RunConfig = serde_json::from_str(r#"{"mode": "chain-dense", "measurement": {"N": null, "M": 5}}"#).unwrap();
        assert_eq!(partial.mode, Mode::ChainDense);
        assert_eq!(partial.measurement.shots, None);
        assert_eq!(partial.training, TrainConfig::default());
    }

    #[test]
    fn invalid_measurement_rejected() {
        let mut cfg = RunConfig::default();
        cfg.measurement.times_per_trajectory = 0;
        assert!(cfg.validate().is_err());
        assert!("chain-tebd".parse::<Mode>().is_ok());
        assert!("chains".parse::<Mode>().is_err());
    }

    #[test]
    fn benchmark_generation_is_deterministic() {
        let cfg = RunConfig {
            trajectories: TrajectorySpec { t_total: 1.0, dt: 0.01, seed: 0, n_trajectories: 3 },
            test_trajectories: 2,
            seed: 5,
            ..Default::default()
        };
        let a = generate_exact(&cfg).unwrap();
        assert_eq!(a.train.len(), 3);
        assert_eq!(a.test.len(), 2);
        assert_eq!(a.train[0].states.len(), 101);
        assert_eq!(a.test[0].states.len(), 201);
        assert_eq!(a, generate_exact(&cfg).unwrap());
        assert_ne!(a.train[0].states[0], a.test[0].states[0]);
    }
}
