//! Projective-measurement emulation: random times on the recording grid,
//! multinomial shot counts in the nine two-site Pauli settings, and noisy
//! coherence-vector estimates.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{coherence_to_rho, kron, two_qubit_index, CoherenceVector, DensityMatrix, OperatorBasis, Pauli};
use crate::dynamics::ExactTrajectory;
use crate::rng::{self, derive_seed, tag};
use crate::{CMat, Error, Result, Vec16, C64};

/// Measurement axes, in setting order `(α, β)` with α slowest.
pub const AXES: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
pub const NUM_SETTINGS: usize = 9;

/// Outcome histograms: `counts[setting][2 s₁ + s₂]`.
pub type Counts = [[u32; 4]; NUM_SETTINGS];

/// Eigenvalue of outcome `s`: `s = 0 ↦ −1`, `s = 1 ↦ +1` (σᶻ|0⟩ = −|0⟩).
#[inline]
pub fn outcome_sign(s: usize) -> f64 {
    if s == 0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    /// Shots per setting; `None` means exact expectation values.
    #[serde(rename = "N")]
    pub shots: Option<u32>,
    #[serde(rename = "M")]
    pub times_per_trajectory: usize,
    /// Upper end of the sampling window `[0, window]`.
    pub window: f64,
    pub seed: u64,
}

impl MeasurementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shots == Some(0) {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }
        if self.times_per_trajectory == 0 {
            return Err(Error::InvalidConfig("M must be at least 1".into()));
        }
        if !(self.window >= 0.0) {
            return Err(Error::InvalidConfig("sampling window must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyRecord {
    pub traj_id: usize,
    /// Grid index of `t`.
    pub step: usize,
    pub t: f64,
    pub v0: Vec16,
    pub v_est: Vec16,
    pub counts: Option<Counts>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementDataset {
    pub dt: f64,
    pub config: MeasurementConfig,
    pub records: Vec<NoisyRecord>,
}

impl MeasurementDataset {
    pub fn trajectory_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().map(|r| r.traj_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// `M` uniform draws over `[0, window]` snapped to the nearest multiple of
/// `dt`, returned as grid indices.
pub fn sample_times<R: Rng + ?Sized>(m: usize, window: f64, dt: f64, rng: &mut R) -> Vec<usize> {
    let max_step = (window / dt).round() as usize;
    (0..m)
        .map(|_| {
            let t = rng.random::<f64>() * window;
            ((t / dt).round() as usize).min(max_step)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotEstimate {
    pub counts: Counts,
    pub v_est: Vec16,
}

fn projector(axis: Pauli, s: usize) -> CMat {
    (CMat::identity(2, 2) + axis.matrix() * C64::new(outcome_sign(s), 0.0)) * C64::new(0.5, 0.0)
}

/// Joint outcome probabilities of every setting.
pub fn setting_probabilities(rho: &DensityMatrix) -> Result<[[f64; 4]; NUM_SETTINGS]> {
    let mut out = [[0.0; 4]; NUM_SETTINGS];
    for (a_i, &a) in AXES.iter().enumerate() {
        for (b_i, &b) in AXES.iter().enumerate() {
            let row = &mut out[a_i * 3 + b_i];
            for s1 in 0..2 {
                for s2 in 0..2 {
                    let p = (kron(&projector(a, s1), &projector(b, s2)) * &rho.0).trace().re;
                    if p < -1e-9 {
                        return Err(Error::NonPhysicalState(p));
                    }
                    row[s1 * 2 + s2] = p.max(0.0);
                }
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
        }
    }
    Ok(out)
}

/// Multinomial draw by sequential conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u32, probs: &[f64; 4], rng: &mut R) -> [u32; 4] {
    let mut out = [0u32; 4];
    let mut remaining = n as u64;
    let mut mass = 1.0;
    for k in 0..3 {
        if remaining == 0 {
            break;
        }
        let p = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining, p).expect("valid binomial").sample(rng);
        out[k] = draw as u32;
        remaining -= draw;
        mass -= probs[k];
    }
    out[3] = remaining as u32;
    out
}

/// Coherence-vector estimate from histograms: correlators from their own
/// setting, single-site terms pooled over the three compatible settings.
pub fn estimate_from_counts(counts: &Counts) -> Vec16 {
    let mut v = Vec16::zeros();
    v[0] = 0.5;
    let mut left = [0.0f64; 3];
    let mut right = [0.0f64; 3];
    let mut left_n = [0u64; 3];
    let mut right_n = [0u64; 3];
    for a_i in 0..3 {
        for b_i in 0..3 {
            let h = &counts[a_i * 3 + b_i];
            let n: u32 = h.iter().sum();
            let mut corr = 0.0;
            for s1 in 0..2 {
                for s2 in 0..2 {
                    let c = h[s1 * 2 + s2] as f64;
                    corr += c * outcome_sign(s1) * outcome_sign(s2);
                    left[a_i] += c * outcome_sign(s1);
                    right[b_i] += c * outcome_sign(s2);
                }
            }
            left_n[a_i] += n as u64;
            right_n[b_i] += n as u64;
            if n > 0 {
                v[two_qubit_index(AXES[a_i], AXES[b_i])] = 0.5 * corr / n as f64;
            }
        }
    }
    for k in 0..3 {
        if left_n[k] > 0 {
            v[two_qubit_index(AXES[k], Pauli::I)] = 0.5 * left[k] / left_n[k] as f64;
        }
        if right_n[k] > 0 {
            v[two_qubit_index(Pauli::I, AXES[k])] = 0.5 * right[k] / right_n[k] as f64;
        }
    }
    v
}

/// `N` shots in each setting with one RNG stream.
pub fn measure_state<R: Rng + ?Sized>(rho: &DensityMatrix, n: u32, rng: &mut R) -> Result<ShotEstimate> {
    let probs = setting_probabilities(rho)?;
    let mut counts = [[0u32; 4]; NUM_SETTINGS];
    for (c, p) in counts.iter_mut().zip(&probs) {
        *c = multinomial(n, p, rng);
    }
    Ok(ShotEstimate { v_est: estimate_from_counts(&counts), counts })
}

/// Shots with one derived stream per setting, as used for datasets.
pub fn measure_state_seeded(rho: &DensityMatrix, n: u32, seed: u64) -> Result<ShotEstimate> {
    let probs = setting_probabilities(rho)?;
    let mut counts = [[0u32; 4]; NUM_SETTINGS];
    for (setting, (c, p)) in counts.iter_mut().zip(&probs).enumerate() {
        *c = multinomial(n, p, &mut rng::stream(derive_seed(seed, &[setting as u64])));
    }
    Ok(ShotEstimate { v_est: estimate_from_counts(&counts), counts })
}

/// Seed of one record's shot streams.
pub fn record_seed(master: u64, traj_id: usize, m: usize) -> u64 {
    derive_seed(master, &[tag::SHOTS, traj_id as u64, m as u64])
}

pub fn build_dataset(
    trajectories: &[ExactTrajectory],
    config: &MeasurementConfig,
    basis: &OperatorBasis,
) -> Result<MeasurementDataset> {
    config.validate()?;
    let dt = match trajectories.first() {
        Some(t) => t.dt,
        None => return Err(Error::InvalidConfig("no trajectories to measure".into())),
    };
    for t in trajectories {
        if (t.dt - dt).abs() > 1e-12 {
            return Err(Error::ShapeMismatch("trajectories recorded on different grids".into()));
        }
        if t.time(t.steps()) + 1e-9 < config.window {
            return Err(Error::InvalidConfig(format!(
                "trajectory {} ends at t = {} before the sampling window {}",
                t.id,
                t.time(t.steps()),
                config.window
            )));
        }
    }
    let per_traj: Vec<Result<Vec<NoisyRecord>>> = trajectories
        .par_iter()
        .map(|traj| {
            let mut trng = rng::stream(derive_seed(config.seed, &[tag::TIMES, traj.id as u64]));
            let steps = sample_times(config.times_per_trajectory, config.window, dt, &mut trng);
            steps
                .into_iter()
                .enumerate()
                .map(|(m, step)| {
                    let exact = traj.states[step];
                    let (v_est, counts) = match config.shots {
                        None => (exact, None),
                        Some(n) => {
                            let rho = coherence_to_rho(&CoherenceVector(exact), basis)?;
                            let est = measure_state_seeded(&rho, n, record_seed(config.seed, traj.id, m))?;
                            (est.v_est, Some(est.counts))
                        }
                    };
                    Ok(NoisyRecord {
                        traj_id: traj.id,
                        step,
                        t: step as f64 * dt,
                        v0: *traj.initial(),
                        v_est,
                        counts,
                    })
                })
                .collect()
        })
        .collect();
    let mut records = Vec::with_capacity(trajectories.len() * config.times_per_trajectory);
    for r in per_traj {
        records.extend(r?);
    }
    Ok(MeasurementDataset { dt, config: *config, records })
}
