//! Exact reference dynamics: Lindblad propagation of coherence vectors and
//! dense state-vector evolution of the driven, interacting spin ring
//!
//! ```text
//! H = (Ω/2) Σᵢ σˣᵢ + V Σ⟨ij⟩ nᵢ nⱼ
//! ```
//!
//! with the subsystem formed by spins 0 and 1.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{rho_to_coherence, CoherenceVector, DensityMatrix, OperatorBasis};
use crate::expm::expm;
use crate::generator::LindbladMatrix;
use crate::{rng, CMat, Error, Mat16, Result, Vec16, C64};

/// Largest ring handled by dense state vectors.
pub const DENSE_MAX_SPINS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    #[serde(rename = "L")]
    pub length: usize,
    pub omega: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(default = "default_true")]
    pub periodic: bool,
}

fn default_true() -> bool {
    true
}

impl ChainSpec {
    pub fn ring(length: usize, omega: f64, v: f64) -> Self {
        Self { length, omega, v, periodic: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 3 {
            return Err(Error::InvalidConfig(format!("chain needs L >= 3, got {}", self.length)));
        }
        if !(self.omega > 0.0) || !self.v.is_finite() {
            return Err(Error::InvalidConfig("chain needs Omega > 0 and finite V".into()));
        }
        Ok(())
    }

    /// Nearest-neighbour bonds, including the ring bond `(L−1, 0)`.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut b: Vec<(usize, usize)> = (0..self.length - 1).map(|i| (i, i + 1)).collect();
        if self.periodic {
            b.push((self.length - 1, 0));
        }
        b
    }
}

/// Time window and recording grid (dimensionless, units of `1/Ω`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub t_total: f64,
    pub dt: f64,
    pub seed: u64,
    pub n_trajectories: usize,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self { t_total: 10.0, dt: 0.01, seed: 0, n_trajectories: 30 }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_total > 0.0) {
            return Err(Error::InvalidConfig("t_total and dt must be positive".into()));
        }
        let ratio = self.t_total / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "dt = {} does not divide t_total = {}",
                self.dt, self.t_total
            )));
        }
        Ok(())
    }

    /// Number of steps on the recording grid.
    pub fn steps(&self) -> usize {
        (self.t_total / self.dt).round() as usize
    }
}

/// Exact coherence-vector trajectory on a uniform grid; `states[0]` is the
/// initial vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactTrajectory {
    pub id: usize,
    pub dt: f64,
    pub states: Vec<Vec16>,
}

impl ExactTrajectory {
    pub fn initial(&self) -> &Vec16 {
        &self.states[0]
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

pub fn propagate_lindblad(l: &LindbladMatrix, v0: &CoherenceVector, t: f64) -> CoherenceVector {
    assert!(t >= 0.0, "propagation time must be non-negative");
    if t == 0.0 {
        return *v0;
    }
    let a = DMatrix::from_iterator(16, 16, (l.total() * t).iter().copied());
    let p = Mat16::from_iterator(expm(&a).iter().copied());
    CoherenceVector(p * v0.0)
}

/// `exp(dt·L)` as a fixed-size matrix.
pub fn step_propagator(l: &Mat16, dt: f64) -> Mat16 {
    let a = DMatrix::from_iterator(16, 16, (l * dt).iter().copied());
    Mat16::from_iterator(expm(&a).iter().copied())
}

/// Grid trajectory `v(k·dt) = exp(dt·L)ᵏ v0` for `k = 0..=steps`.
pub fn lindblad_trajectory(l: &LindbladMatrix, v0: &Vec16, dt: f64, steps: usize) -> Vec<Vec16> {
    let p = step_propagator(&l.total(), dt);
    let mut out = Vec::with_capacity(steps + 1);
    let mut v = *v0;
    out.push(v);
    for _ in 0..steps {
        v = p * v;
        out.push(v);
    }
    out
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the phases
/// of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMat {
    let g = rng::complex_gaussian(rng, dim, dim);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut u = q;
    for c in 0..dim {
        let d = r[(c, c)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for row in 0..dim {
            u[(row, c)] *= phase;
        }
    }
    u
}

pub fn haar_random_two_qubit_unitary(seed: u64) -> CMat {
    haar_unitary(4, &mut rng::stream(seed))
}

/// Hilbert–Schmidt random state `GG†/Tr(GG†)`.
pub fn random_density_matrix(seed: u64) -> DensityMatrix {
    let mut r = rng::stream(seed);
    let g = rng::complex_gaussian(&mut r, 4, 4);
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix(m / tr)
}

/// All spins in `|0⟩` with `u_rand` applied to spins (0, 1).
pub fn make_initial_state(spec: &ChainSpec, u_rand: &CMat) -> DVector<C64> {
    let dim = 1usize << spec.length;
    let rest = dim >> 2;
    let mut psi = DVector::from_element(dim, C64::new(0.0, 0.0));
    // |00⟩ on the subsystem is column 0 of u_rand; environment stays |0…0⟩.
    for a in 0..4 {
        psi[a * rest] = u_rand[(a, 0)];
    }
    psi
}

/// Reduced state of spins (0, 1).
pub fn reduced_two_site(psi: &DVector<C64>) -> DensityMatrix {
    let rest = psi.len() / 4;
    let mut rho = CMat::zeros(4, 4);
    for a in 0..4 {
        for b in 0..=a {
            let mut acc = C64::new(0.0, 0.0);
            for r in 0..rest {
                acc += psi[a * rest + r] * psi[b * rest + r].conj();
            }
            rho[(a, b)] = acc;
            rho[(b, a)] = acc.conj();
        }
    }
    DensityMatrix(rho)
}

#[inline]
fn site_bit(length: usize, site: usize) -> usize {
    1 << (length - 1 - site)
}

/// Interaction count `Σ⟨ij⟩ nᵢnⱼ` of every computational basis state.
fn interaction_counts(spec: &ChainSpec) -> Vec<u32> {
    let bonds = spec.bonds();
    (0..1usize << spec.length)
        .map(|idx| {
            bonds
                .iter()
                .filter(|&&(i, j)| {
                    idx & site_bit(spec.length, i) != 0 && idx & site_bit(spec.length, j) != 0
                })
                .count() as u32
        })
        .collect()
}

fn apply_single_site(psi: &mut DVector<C64>, length: usize, site: usize, g: &[[C64; 2]; 2]) {
    let bit = site_bit(length, site);
    for idx in 0..psi.len() {
        if idx & bit == 0 {
            let a = psi[idx];
            let b = psi[idx | bit];
            psi[idx] = g[0][0] * a + g[0][1] * b;
            psi[idx | bit] = g[1][0] * a + g[1][1] * b;
        }
    }
}

/// `exp(−i (Ω/2) σˣ τ)`.
pub fn x_rotation(omega: f64, tau: f64) -> [[C64; 2]; 2] {
    let (s, c) = (omega * tau / 2.0).sin_cos();
    [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
}

/// Second-order (Strang) Trotter propagator for dense state vectors:
/// half step of the transverse field, full step of the diagonal
/// interaction, half step of the field.
pub struct DenseTrotter {
    spec: ChainSpec,
    half_x: [[C64; 2]; 2],
    phases: Vec<C64>,
}

impl DenseTrotter {
    pub fn new(spec: &ChainSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        if spec.length > DENSE_MAX_SPINS {
            return Err(Error::DenseTooLarge { requested: spec.length, max: DENSE_MAX_SPINS });
        }
        let phases = interaction_counts(spec)
            .into_iter()
            .map(|n| C64::from_polar(1.0, -spec.v * dt * n as f64))
            .collect();
        Ok(Self { spec: *spec, half_x: x_rotation(spec.omega, dt / 2.0), phases })
    }

    pub fn step(&self, psi: &mut DVector<C64>) {
        let l = self.spec.length;
        for site in 0..l {
            apply_single_site(psi, l, site, &self.half_x);
        }
        for (amp, ph) in psi.iter_mut().zip(&self.phases) {
            *amp *= ph;
        }
        for site in 0..l {
            apply_single_site(psi, l, site, &self.half_x);
        }
    }
}

/// Dense Trotter evolution recording the subsystem coherence vector every
/// `dt` over `[0, t_total]`.
pub fn evolve_chain_dense(
    spec: &ChainSpec,
    psi0: &DVector<C64>,
    traj: &TrajectorySpec,
    basis: &OperatorBasis,
) -> Result<Vec<Vec16>> {
    traj.validate()?;
    let trotter = DenseTrotter::new(spec, traj.dt)?;
    if psi0.len() != 1 << spec.length {
        return Err(Error::ShapeMismatch(format!(
            "state of length {} for {} spins",
            psi0.len(),
            spec.length
        )));
    }
    let mut psi = psi0.clone();
    let mut out = Vec::with_capacity(traj.steps() + 1);
    out.push(rho_to_coherence(&reduced_two_site(&psi), basis).0);
    for _ in 0..traj.steps() {
        trotter.step(&mut psi);
        out.push(rho_to_coherence(&reduced_two_site(&psi), basis).0);
    }
    Ok(out)
}

/// `H|ψ⟩` without forming the Hamiltonian.
pub fn apply_chain_hamiltonian(spec: &ChainSpec, psi: &DVector<C64>) -> DVector<C64> {
    let l = spec.length;
    let counts = interaction_counts(spec);
    let mut out = DVector::from_element(psi.len(), C64::new(0.0, 0.0));
    for idx in 0..psi.len() {
        out[idx] += psi[idx] * (spec.v * counts[idx] as f64);
        for site in 0..l {
            out[idx ^ site_bit(l, site)] += psi[idx] * (spec.omega / 2.0);
        }
    }
    out
}

pub fn chain_energy(spec: &ChainSpec, psi: &DVector<C64>) -> f64 {
    psi.dotc(&apply_chain_hamiltonian(spec, psi)).re
}

/// Dense Hamiltonian matrix (small rings only).
pub fn chain_hamiltonian(spec: &ChainSpec) -> Result<CMat> {
    if spec.length > 10 {
        return Err(Error::DenseTooLarge { requested: spec.length, max: 10 });
    }
    let dim = 1usize << spec.length;
    let mut h = CMat::zeros(dim, dim);
    for c in 0..dim {
        let mut e = DVector::from_element(dim, C64::new(0.0, 0.0));
        e[c] = C64::new(1.0, 0.0);
        h.set_column(c, &apply_chain_hamiltonian(spec, &e));
    }
    Ok(h)
}

/// Exact evolution `e^{−iHt}` through the eigendecomposition of the dense
/// Hamiltonian.
pub struct ExactChainPropagator {
    energies: Vec<f64>,
    vectors: CMat,
}

impl ExactChainPropagator {
    pub fn new(spec: &ChainSpec) -> Result<Self> {
        let eig = crate::linalg::hermitian_eigen(&chain_hamiltonian(spec)?);
        Ok(Self { energies: eig.values, vectors: eig.vectors })
    }

    pub fn evolve(&self, psi0: &DVector<C64>, t: f64) -> DVector<C64> {
        let mut coeffs = self.vectors.adjoint() * psi0;
        for (c, e) in coeffs.iter_mut().zip(&self.energies) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        &self.vectors * coeffs
    }
}
