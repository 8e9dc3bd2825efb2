//! The trainable propagator `M(θ, t) = exp(t (H(θᴴ) + D(θˣ, θʸ)))`, its
//! L1-regularised loss, exact gradients, and the Adam training loop.
//!
//! Two gradient routes give the same numbers. The per-sample route runs
//! one Fréchet adjoint per record. The grid route applies when every time
//! is a multiple of the recording step `dt`: each trajectory is propagated
//! with `P = exp(dt·L)`, residuals are back-propagated through the powers
//! of `P`, and a single Fréchet adjoint maps `∂ℓ/∂P` to `∂ℓ/∂L`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_basis, structure_constants, OperatorBasis, StructureConstants};
use crate::dynamics::step_propagator;
use crate::expm::{expm, expm_frechet_adjoint};
use crate::generator::{GeneratorMaps, GeneratorParams, LindbladMatrix, ParamGrad};
use crate::measurement::MeasurementDataset;
use crate::rng::{self, derive_seed, tag};
use crate::{Error, Mat16, Result, Vec16};

/// Basis, structure constants and generator maps, built once per process.
pub struct ModelContext {
    pub basis: OperatorBasis,
    pub sc: StructureConstants,
    pub maps: GeneratorMaps,
}

pub fn context() -> &'static ModelContext {
    static CTX: OnceLock<ModelContext> = OnceLock::new();
    CTX.get_or_init(|| {
        let basis = build_basis();
        let sc = structure_constants(&basis).expect("Pauli structure constants are real");
        let maps = GeneratorMaps::new(&sc);
        ModelContext { basis, sc, maps }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// L1 weight on `θˣ` and `θʸ`.
    pub alpha11: f64,
    /// L1 weight on `θᴴ`.
    pub alpha12: f64,
    pub decay_factor: f64,
    /// The learning rate is multiplied by `decay_factor` at each epoch
    /// `epochs − offset`.
    pub decay_offsets: Vec<usize>,
    pub seed: u64,
    /// Standard deviation of the Gaussian parameter initialisation.
    pub init_scale: f64,
    /// Fraction of trajectories held out for model selection; 0 disables.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 64,
            lr0: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            alpha11: 1e-4,
            alpha12: 1e-4,
            decay_factor: 0.05,
            decay_offsets: vec![100, 50],
            seed: 0,
            init_scale: 0.01,
            holdout_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.decay_offsets.iter().any(|&o| self.epochs <= o) || self.epochs == 0 {
            return bad("epochs must exceed every learning-rate decay offset");
        }
        if !(self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !(self.alpha11 >= 0.0 && self.alpha12 >= 0.0) {
            return bad("L1 weights must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if !(self.init_scale >= 0.0) {
            return bad("init_scale must be non-negative");
        }
        Ok(())
    }

    pub fn penalty(&self) -> Penalty {
        Penalty { alpha11: self.alpha11, alpha12: self.alpha12 }
    }

    /// Learning rate in effect during `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let decays = self.decay_offsets.iter().filter(|&&o| epoch >= self.epochs - o).count();
        self.lr0 * self.decay_factor.powi(decays as i32)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Penalty {
    pub alpha11: f64,
    pub alpha12: f64,
}

impl Penalty {
    pub const NONE: Penalty = Penalty { alpha11: 0.0, alpha12: 0.0 };

    pub fn value(&self, p: &GeneratorParams) -> f64 {
        let l1 = |it: &mut dyn Iterator<Item = &f64>| it.map(|x| x.abs()).sum::<f64>();
        self.alpha11 * (l1(&mut p.theta_x.iter()) + l1(&mut p.theta_y.iter()))
            + self.alpha12 * l1(&mut p.theta_h.iter())
    }

    /// Subgradient with `sign(0) = 0`.
    pub fn add_gradient(&self, p: &GeneratorParams, g: &mut ParamGrad) {
        let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
        for (gi, &x) in g.theta_h.iter_mut().zip(&p.theta_h) {
            *gi += self.alpha12 * sign(x);
        }
        for (gi, &x) in g.theta_x.iter_mut().zip(p.theta_x.iter()) {
            *gi += self.alpha11 * sign(x);
        }
        for (gi, &x) in g.theta_y.iter_mut().zip(p.theta_y.iter()) {
            *gi += self.alpha11 * sign(x);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    pub params: GeneratorParams,
}

impl LdaModel {
    pub fn new(params: GeneratorParams) -> Self {
        Self { params }
    }

    pub fn lindblad(&self) -> LindbladMatrix {
        context().maps.lindblad(&self.params)
    }

    pub fn forward(&self, v0: &Vec16, t: f64) -> Vec16 {
        assert!(t >= 0.0, "forward needs t >= 0");
        if t == 0.0 {
            return *v0;
        }
        propagator(&self.lindblad().total(), t) * v0
    }

    /// `v(k·dt)` for `k = 0..=steps`.
    pub fn predict_grid(&self, v0: &Vec16, dt: f64, steps: usize) -> Vec<Vec16> {
        let p = step_propagator(&self.lindblad().total(), dt);
        let mut out = Vec::with_capacity(steps + 1);
        let mut v = *v0;
        out.push(v);
        for _ in 0..steps {
            v = p * v;
            out.push(v);
        }
        out
    }
}

fn to_dyn(m: &Mat16) -> DMatrix<f64> {
    DMatrix::from_column_slice(16, 16, m.as_slice())
}

fn to_fixed(m: &DMatrix<f64>) -> Mat16 {
    Mat16::from_column_slice(m.as_slice())
}

fn propagator(l: &Mat16, t: f64) -> Mat16 {
    to_fixed(&expm(&to_dyn(&(l * t))))
}

/// One training record: exact initial vector and a (possibly noisy)
/// target at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub traj_id: usize,
    pub t: f64,
    pub v0: Vec16,
    pub target: Vec16,
}

pub fn samples_from_dataset(ds: &MeasurementDataset) -> Vec<Sample> {
    ds.records
        .iter()
        .map(|r| Sample { traj_id: r.traj_id, t: r.t, v0: r.v0, target: r.v_est })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub mse: f64,
    pub regularizer: f64,
    pub total: f64,
}

impl LossTerms {
    fn new(mse: f64, regularizer: f64) -> Self {
        Self { mse, regularizer, total: mse + regularizer }
    }
}

/// Loss with one matrix exponential per record.
pub fn loss(model: &LdaModel, samples: &[Sample], penalty: Penalty) -> LossTerms {
    assert!(!samples.is_empty(), "loss of an empty batch");
    let l = model.lindblad().total();
    let sq: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let pred = if s.t == 0.0 { s.v0 } else { propagator(&l, s.t) * s.v0 };
            (pred - s.target).norm_squared()
        })
        .collect();
    let mse = sq.iter().sum::<f64>() / samples.len() as f64;
    LossTerms::new(mse, penalty.value(&model.params))
}

/// Exact gradient through one Fréchet adjoint per record.
pub fn gradient(model: &LdaModel, samples: &[Sample], penalty: Penalty) -> (LossTerms, ParamGrad) {
    assert!(!samples.is_empty(), "gradient of an empty batch");
    let l = model.lindblad().total();
    let b = samples.len() as f64;
    let parts: Vec<(f64, Mat16)> = samples
        .par_iter()
        .map(|s| {
            if s.t == 0.0 {
                return ((s.v0 - s.target).norm_squared(), Mat16::zeros());
            }
            let a = to_dyn(&(l * s.t));
            let r = to_fixed(&expm(&a)) * s.v0 - s.target;
            let g = r * s.v0.transpose() * (2.0 / b);
            let grad_a = to_fixed(&expm_frechet_adjoint(&a, &to_dyn(&g)));
            (r.norm_squared(), grad_a * s.t)
        })
        .collect();
    let mut sse = 0.0;
    let mut grad_l = Mat16::zeros();
    for (e, g) in &parts {
        sse += e;
        grad_l += g;
    }
    finish_gradient(model, sse / b, &grad_l, penalty)
}

fn finish_gradient(model: &LdaModel, mse: f64, grad_l: &Mat16, penalty: Penalty) -> (LossTerms, ParamGrad) {
    let mut g = context().maps.pullback(grad_l, &model.params);
    penalty.add_gradient(&model.params, &mut g);
    (LossTerms::new(mse, penalty.value(&model.params)), g)
}

/// Records of one trajectory on the `dt` grid, sorted by step.
#[derive(Clone, Debug)]
struct GridGroup {
    v0: Vec16,
    steps: Vec<usize>,
    targets: Vec<Vec16>,
}

impl GridGroup {
    fn max_step(&self) -> usize {
        *self.steps.last().unwrap_or(&0)
    }
}

fn grid_step(t: f64, dt: f64) -> Result<usize> {
    let k = (t / dt).round();
    if t < 0.0 || (t - k * dt).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::ShapeMismatch(format!("time {t} is not on the dt = {dt} grid")));
    }
    Ok(k as usize)
}

fn group_on_grid(samples: &[Sample], dt: f64) -> Result<Vec<GridGroup>> {
    let mut map: BTreeMap<usize, Vec<(usize, &Sample)>> = BTreeMap::new();
    for s in samples {
        map.entry(s.traj_id).or_default().push((grid_step(s.t, dt)?, s));
    }
    let mut groups = Vec::with_capacity(map.len());
    for (id, mut recs) in map {
        recs.sort_by_key(|(k, _)| *k);
        let v0 = recs[0].1.v0;
        if recs.iter().any(|(_, s)| s.v0 != v0) {
            return Err(Error::ShapeMismatch(format!("trajectory {id} has inconsistent initial vectors")));
        }
        groups.push(GridGroup {
            v0,
            steps: recs.iter().map(|(k, _)| *k).collect(),
            targets: recs.iter().map(|(_, s)| s.target).collect(),
        });
    }
    Ok(groups)
}

fn grid_sse(p: &Mat16, group: &GridGroup) -> f64 {
    let mut u = group.v0;
    let mut k = 0;
    let mut sse = 0.0;
    for (&step, y) in group.steps.iter().zip(&group.targets) {
        while k < step {
            u = p * u;
            k += 1;
        }
        sse += (u - y).norm_squared();
    }
    sse
}

/// Returns the group's squared error and `Σ λ_k u_{k−1}ᵀ`, with residual
/// weights `2/b`.
fn grid_backward(p: &Mat16, group: &GridGroup, b: f64) -> (f64, Mat16) {
    let kmax = group.max_step();
    let mut us = Vec::with_capacity(kmax + 1);
    let mut u = group.v0;
    us.push(u);
    for _ in 0..kmax {
        u = p * u;
        us.push(u);
    }
    let mut seeds = vec![Vec16::zeros(); kmax + 1];
    let mut sse = 0.0;
    for (&step, y) in group.steps.iter().zip(&group.targets) {
        let r = us[step] - y;
        sse += r.norm_squared();
        seeds[step] += r * (2.0 / b);
    }
    let pt = p.transpose();
    let mut lambda = Vec16::zeros();
    let mut grad_p = Mat16::zeros();
    for k in (1..=kmax).rev() {
        lambda = pt * lambda + seeds[k];
        grad_p += lambda * us[k - 1].transpose();
    }
    (sse, grad_p)
}

fn grid_loss_and_gradient(model: &LdaModel, groups: &[&GridGroup], dt: f64, penalty: Penalty) -> (LossTerms, ParamGrad) {
    let l = model.lindblad().total();
    let a = to_dyn(&(l * dt));
    let p = to_fixed(&expm(&a));
    let b = groups.iter().map(|g| g.steps.len()).sum::<usize>() as f64;
    let parts: Vec<(f64, Mat16)> = groups.par_iter().map(|g| grid_backward(&p, g, b)).collect();
    let mut sse = 0.0;
    let mut grad_p = Mat16::zeros();
    for (e, g) in &parts {
        sse += e;
        grad_p += g;
    }
    let grad_l = to_fixed(&expm_frechet_adjoint(&a, &to_dyn(&grad_p))) * dt;
    finish_gradient(model, sse / b, &grad_l, penalty)
}

fn grid_mse(model: &LdaModel, groups: &[&GridGroup], dt: f64) -> f64 {
    let p = step_propagator(&model.lindblad().total(), dt);
    let b = groups.iter().map(|g| g.steps.len()).sum::<usize>() as f64;
    let parts: Vec<f64> = groups.par_iter().map(|g| grid_sse(&p, g)).collect();
    parts.iter().sum::<f64>() / b
}

/// Exact gradient for records whose times are multiples of `dt`.
pub fn gradient_on_grid(model: &LdaModel, samples: &[Sample], dt: f64, penalty: Penalty) -> Result<(LossTerms, ParamGrad)> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("gradient of an empty batch".into()));
    }
    let groups = group_on_grid(samples, dt)?;
    let refs: Vec<&GridGroup> = groups.iter().collect();
    Ok(grid_loss_and_gradient(model, &refs, dt, penalty))
}

/// Loss for records whose times are multiples of `dt`.
pub fn loss_on_grid(model: &LdaModel, samples: &[Sample], dt: f64, penalty: Penalty) -> Result<LossTerms> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("loss of an empty batch".into()));
    }
    let groups = group_on_grid(samples, dt)?;
    let refs: Vec<&GridGroup> = groups.iter().collect();
    Ok(LossTerms::new(grid_mse(model, &refs, dt), penalty.value(&model.params)))
}

/// Adam with bias-corrected moments over the flattened parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub loss: LossTerms,
    pub holdout_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the selected epoch.
    pub model: LdaModel,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

pub fn random_init(scale: f64, seed: u64) -> GeneratorParams {
    let mut r = rng::stream(derive_seed(seed, &[tag::INIT]));
    if scale == 0.0 {
        return GeneratorParams::zeros();
    }
    let normal = Normal::new(0.0, scale).expect("finite scale");
    let flat: Vec<f64> = (0..GeneratorParams::LEN).map(|_| normal.sample(&mut r)).collect();
    GeneratorParams::from_flat(&flat).expect("flat length matches")
}

pub fn train_dataset(ds: &MeasurementDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train(&samples_from_dataset(ds), Some(ds.dt), config, None)
}

/// Adam over minibatches of whole trajectories. Batches are filled with
/// shuffled trajectories until they hold at least `batch_size` records.
/// When `dt` is given and all times lie on its grid the grid gradient is
/// used, otherwise one Fréchet adjoint per record.
pub fn train(samples: &[Sample], dt: Option<f64>, config: &TrainConfig, init: Option<&GeneratorParams>) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidConfig("training data is empty".into()));
    }
    let mut by_traj: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
    for s in samples {
        by_traj.entry(s.traj_id).or_default().push(s.clone());
    }
    let mut ids: Vec<usize> = by_traj.keys().copied().collect();
    let mut holdout_ids = Vec::new();
    if config.holdout_fraction > 0.0 && ids.len() > 1 {
        ids.shuffle(&mut rng::stream(derive_seed(config.seed, &[tag::SHUFFLE, u64::MAX])));
        let n = ((ids.len() as f64 * config.holdout_fraction).ceil() as usize).min(ids.len() - 1);
        holdout_ids = ids.split_off(ids.len() - n);
        ids.sort_unstable();
        holdout_ids.sort_unstable();
    }
    let grid = match dt {
        Some(dt) => samples.iter().all(|s| grid_step(s.t, dt).is_ok()).then_some(dt),
        None => None,
    };
    let units: Vec<TrainUnit> = ids.iter().map(|id| TrainUnit::new(&by_traj[id], grid)).collect::<Result<_>>()?;
    let holdout: Vec<TrainUnit> =
        holdout_ids.iter().map(|id| TrainUnit::new(&by_traj[id], grid)).collect::<Result<_>>()?;

    let penalty = config.penalty();
    let mut params = match init {
        Some(p) => p.clone(),
        None => random_init(config.init_scale, config.seed),
    };
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.len(), config.adam_beta1, config.adam_beta2, config.adam_eps);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, GeneratorParams)> = None;
    let mut order: Vec<usize> = (0..units.len()).collect();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate(epoch);
        order.sort_unstable();
        order.shuffle(&mut rng::stream(derive_seed(config.seed, &[tag::SHUFFLE, epoch as u64])));
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut count = 0;
            while end < order.len() && count < config.batch_size {
                count += units[order[end]].len();
                end += 1;
            }
            let batch: Vec<&TrainUnit> = order[start..end].iter().map(|&i| &units[i]).collect();
            let model = LdaModel::new(params.clone());
            let (_, grad) = unit_gradient(&model, &batch, grid, penalty);
            adam.step(&mut flat, &grad.to_flat(), lr);
            params = GeneratorParams::from_flat(&flat)?;
            start = end;
        }
        let model = LdaModel::new(params.clone());
        let all: Vec<&TrainUnit> = units.iter().collect();
        let mse = unit_mse(&model, &all, grid);
        let loss = LossTerms::new(mse, penalty.value(&params));
        let holdout_mse = (!holdout.is_empty()).then(|| unit_mse(&model, &holdout.iter().collect::<Vec<_>>(), grid));
        if !loss.total.is_finite() || !params.is_finite() || holdout_mse.is_some_and(|h| !h.is_finite()) {
            return Err(Error::DivergedLoss(epoch));
        }
        let score = holdout_mse.unwrap_or(loss.total);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, params.clone()));
        }
        history.push(EpochStats { epoch, lr, loss, holdout_mse });
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok(TrainOutcome { model: LdaModel::new(best_params), best_epoch, history })
}

/// One trajectory's records in the form the chosen gradient route needs.
enum TrainUnit {
    Grid(GridGroup),
    Free(Vec<Sample>),
}

impl TrainUnit {
    fn new(samples: &[Sample], grid: Option<f64>) -> Result<Self> {
        Ok(match grid {
            Some(dt) => TrainUnit::Grid(group_on_grid(samples, dt)?.remove(0)),
            None => TrainUnit::Free(samples.to_vec()),
        })
    }

    fn len(&self) -> usize {
        match self {
            TrainUnit::Grid(g) => g.steps.len(),
            TrainUnit::Free(s) => s.len(),
        }
    }
}

fn unit_gradient(model: &LdaModel, batch: &[&TrainUnit], grid: Option<f64>, penalty: Penalty) -> (LossTerms, ParamGrad) {
    match grid {
        Some(dt) => {
            let groups: Vec<&GridGroup> = batch
                .iter()
                .map(|u| match u {
                    TrainUnit::Grid(g) => g,
                    TrainUnit::Free(_) => unreachable!("grid route with free samples"),
                })
                .collect();
            grid_loss_and_gradient(model, &groups, dt, penalty)
        }
        None => gradient(model, &free_samples(batch), penalty),
    }
}

fn unit_mse(model: &LdaModel, units: &[&TrainUnit], grid: Option<f64>) -> f64 {
    match grid {
        Some(dt) => {
            let groups: Vec<&GridGroup> = units
                .iter()
                .map(|u| match u {
                    TrainUnit::Grid(g) => g,
                    TrainUnit::Free(_) => unreachable!("grid route with free samples"),
                })
                .collect();
            grid_mse(model, &groups, dt)
        }
        None => loss(model, &free_samples(units), Penalty::NONE).mse,
    }
}

fn free_samples(units: &[&TrainUnit]) -> Vec<Sample> {
    units
        .iter()
        .flat_map(|u| match u {
            TrainUnit::Free(s) => s.clone(),
            TrainUnit::Grid(_) => unreachable!("free route with grid samples"),
        })
        .collect()
}
