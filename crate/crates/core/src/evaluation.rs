//! Out-of-sample error of a learned generator, (N, M) sweeps and
//! trajectory comparison tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{coherence_to_rho, CoherenceVector};
use crate::dynamics::ExactTrajectory;
use crate::measurement::NoisyRecord;
use crate::pipeline::{run_on, ExactData, MeasurementSettings, RunConfig};
use crate::rng::{derive_seed, tag};
use crate::trainer::{context, LdaModel};
use crate::{Error, Result, Vec16};

/// Time average (trapezoid on the recording grid) of
/// `‖ρ_ML − ρ_S‖₂² / ‖ρ_S‖₂²` along one trajectory.
pub fn trajectory_error(model: &LdaModel, exact: &ExactTrajectory) -> Result<f64> {
    let basis = &context().basis;
    let steps = exact.steps();
    let predicted = model.predict_grid(exact.initial(), exact.dt, steps);
    let mut values = Vec::with_capacity(steps + 1);
    for (pred, truth) in predicted.iter().zip(&exact.states) {
        let rho_ml = coherence_to_rho(&CoherenceVector(*pred), basis)?;
        let rho_s = coherence_to_rho(&CoherenceVector(*truth), basis)?;
        let diff = &rho_ml.0 - &rho_s.0;
        let num = (diff.adjoint() * &diff).trace().re;
        let den = (rho_s.0.adjoint() * &rho_s.0).trace().re;
        values.push(num / den);
    }
    Ok(trapezoid_mean(&values))
}

/// `(1/T) ∫ f dt` by the trapezoid rule on a uniform grid.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            (inner + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
        }
    }
}

/// Trajectory-averaged error over `r = exact.len()` trajectories.
pub fn epsilon(model: &LdaModel, exact: &[ExactTrajectory]) -> Result<f64> {
    if exact.is_empty() {
        return Err(Error::InvalidConfig("epsilon needs at least one trajectory (r >= 1)".into()));
    }
    let per: Vec<Result<f64>> = exact.par_iter().map(|t| trajectory_error(model, t)).collect();
    let mut sum = 0.0;
    for e in per {
        sum += e?;
    }
    Ok(sum / exact.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    #[serde(rename = "N")]
    pub shots: Option<u32>,
    #[serde(rename = "M")]
    pub times_per_trajectory: usize,
    pub seed: u64,
    pub r: usize,
    pub epsilon: Option<f64>,
    pub final_loss: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn get(&self, shots: Option<u32>, m: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.shots == shots && c.times_per_trajectory == m)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,M,epsilon,r,seed\n");
        for c in &self.cells {
            let n = c.shots.map(|n| n.to_string()).unwrap_or_else(|| "exact".into());
            let e = c.epsilon.map(crate::io::fmt_f64).unwrap_or_default();
            out.push_str(&format!("{n},{},{e},{},{}\n", c.times_per_trajectory, c.r, c.seed));
        }
        out
    }
}

/// Seed of one sweep cell, independent of grid order.
pub fn cell_seed(master: u64, shots: Option<u32>, m: usize) -> u64 {
    derive_seed(master, &[tag::CELL, shots.map_or(u64::MAX, u64::from), m as u64])
}

/// Train and evaluate every `(N, M)` cell on shared exact data. Cells run
/// in parallel; a failing cell is recorded and the sweep continues.
pub fn run_sweep(base: &RunConfig, exact: &ExactData, shots: &[Option<u32>], ms: &[usize]) -> Result<SweepResult> {
    base.validate()?;
    let grid: Vec<(Option<u32>, usize)> = shots.iter().flat_map(|&n| ms.iter().map(move |&m| (n, m))).collect();
    let cells = grid
        .par_iter()
        .map(|&(n, m)| {
            let seed = cell_seed(base.seed, n, m);
            let cfg = RunConfig {
                measurement: MeasurementSettings { shots: n, times_per_trajectory: m },
                seed,
                ..base.clone()
            };
            let mut cell = SweepCell {
                shots: n,
                times_per_trajectory: m,
                seed,
                r: exact.test.len(),
                epsilon: None,
                final_loss: None,
                best_epoch: None,
                error: None,
            };
            match run_on(&cfg, exact) {
                Ok(run) => {
                    cell.epsilon = Some(run.epsilon);
                    cell.final_loss = run.outcome.history.last().map(|h| h.loss.total);
                    cell.best_epoch = Some(run.outcome.best_epoch);
                }
                Err(e) => cell.error = Some(e.to_string()),
            }
            cell
        })
        .collect();
    Ok(SweepResult { cells })
}

/// Exact vs predicted coherence components per grid time, with the mean of
/// any noisy records at that time.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.map(crate::io::fmt_f64).unwrap_or_default()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// `components` index the coherence vector (1..16); `None` selects all 15
/// non-trivial ones.
pub fn export_trajectory_comparison(
    model: &LdaModel,
    exact: &ExactTrajectory,
    records: &[NoisyRecord],
    components: Option<&[usize]>,
) -> Result<ComparisonTable> {
    let all: Vec<usize> = (1..16).collect();
    let comps = components.unwrap_or(&all);
    if let Some(&bad) = comps.iter().find(|&&c| c >= 16) {
        return Err(Error::ShapeMismatch(format!("component {bad} out of range")));
    }
    let basis = &context().basis;
    let mut header = vec!["t".to_string()];
    for &c in comps {
        let label = basis.label_string(c);
        header.push(format!("exact_{label}"));
        header.push(format!("pred_{label}"));
        header.push(format!("noisy_{label}"));
    }
    let steps = exact.steps();
    let predicted = model.predict_grid(exact.initial(), exact.dt, steps);
    let mut noisy: Vec<(Vec16, usize)> = vec![(Vec16::zeros(), 0); steps + 1];
    for r in records.iter().filter(|r| r.traj_id == exact.id && r.step <= steps) {
        noisy[r.step].0 += r.v_est;
        noisy[r.step].1 += 1;
    }
    let rows = (0..=steps)
        .map(|k| {
            let mut row = vec![Some(exact.time(k))];
            for &c in comps {
                row.push(Some(exact.states[k][c]));
                row.push(Some(predicted[k][c]));
                let (sum, n) = &noisy[k];
                row.push((*n > 0).then(|| sum[c] / *n as f64));
            }
            row
        })
        .collect();
    Ok(ComparisonTable { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GeneratorParams;

    #[test]
    fn trapezoid_weights() {
        assert_eq!(trapezoid_mean(&[2.0]), 2.0);
        assert_eq!(trapezoid_mean(&[1.0, 3.0]), 2.0);
        assert_eq!(trapezoid_mean(&[0.0, 1.0, 2.0, 3.0]), 1.5);
    }

    #[test]
    fn empty_trajectory_set_rejected() {
        let model = LdaModel::new(GeneratorParams::zeros());
        assert!(epsilon(&model, &[]).is_err());
    }

    #[test]
    fn cell_seeds_depend_on_coordinates_only() {
        assert_eq!(cell_seed(1, Some(2), 3), cell_seed(1, Some(2), 3));
        assert_ne!(cell_seed(1, Some(2), 3), cell_seed(1, Some(3), 2));
        assert_ne!(cell_seed(1, None, 3), cell_seed(1, Some(3), 3));
    }
}
