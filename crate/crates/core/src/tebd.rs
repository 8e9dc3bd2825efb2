//! Matrix-product-state evolution of the spin ring with second-order
//! Trotter gates. The ring bond is handled by swapping the last spin next
//! to spin 0, applying the bond gate and swapping it back.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::basis::{rho_to_coherence, DensityMatrix, OperatorBasis};
use crate::dynamics::{x_rotation, ChainSpec, TrajectorySpec};
use crate::{CMat, Error, Result, Vec16, C64};

/// Largest total discarded weight tolerated within one time step.
pub const MAX_STEP_DISCARD: f64 = 1e-4;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub chi_max: usize,
    pub eps_svd: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { chi_max: 256, eps_svd: 1e-10 }
    }
}

/// Site tensor with index order (left bond, physical, right bond).
#[derive(Clone, Debug)]
pub struct SiteTensor {
    pub left: usize,
    pub right: usize,
    data: Vec<C64>,
}

impl SiteTensor {
    fn zeros(left: usize, right: usize) -> Self {
        Self { left, right, data: vec![ZERO; left * 2 * right] }
    }

    #[inline]
    pub fn get(&self, l: usize, s: usize, r: usize) -> C64 {
        self.data[(l * 2 + s) * self.right + r]
    }

    #[inline]
    fn at(&mut self, l: usize, s: usize, r: usize) -> &mut C64 {
        &mut self.data[(l * 2 + s) * self.right + r]
    }

    /// Rows `(l, s)`, columns `r`.
    fn as_left_matrix(&self) -> CMat {
        CMat::from_row_slice(self.left * 2, self.right, &self.data)
    }

    /// Rows `l`, columns `(s, r)`.
    fn as_right_matrix(&self) -> CMat {
        CMat::from_row_slice(self.left, 2 * self.right, &self.data)
    }

    fn from_row_major(left: usize, right: usize, m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for row in 0..m.nrows() {
            for col in 0..m.ncols() {
                data.push(m[(row, col)]);
            }
        }
        debug_assert_eq!(data.len(), left * 2 * right);
        Self { left, right, data }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Mixed-canonical MPS: sites left of `center` are left-isometries, sites
/// right of it are right-isometries.
#[derive(Clone, Debug)]
pub struct MpsState {
    pub sites: Vec<SiteTensor>,
    pub center: usize,
    pub truncation: Truncation,
}

fn sorted_svd(m: &CMat) -> (CMat, Vec<f64>, CMat) {
    let d = crate::linalg::svd(m);
    (d.u, d.s, d.vt)
}

impl MpsState {
    /// All spins in `|0⟩`.
    pub fn all_zero(length: usize, truncation: Truncation) -> Self {
        let sites = (0..length)
            .map(|_| {
                let mut t = SiteTensor::zeros(1, 1);
                *t.at(0, 0, 0) = ONE;
                t
            })
            .collect();
        Self { sites, center: 0, truncation }
    }

    /// Exact decomposition of a dense state vector (site 0 is the most
    /// significant bit), canonical at site 0.
    pub fn from_dense(psi: &DVector<C64>, length: usize, truncation: Truncation) -> Result<Self> {
        if psi.len() != 1 << length {
            return Err(Error::ShapeMismatch(format!("{} amplitudes for {length} spins", psi.len())));
        }
        let mut sites = Vec::with_capacity(length);
        // remainder: rows = right bond of the previous site, cols = remaining physical indices
        let mut rem = CMat::from_row_slice(1, psi.len(), psi.as_slice());
        for _ in (1..length).rev() {
            let chi = rem.nrows();
            let cols = rem.ncols() / 2;
            let m = CMat::from_fn(chi * 2, cols, |r, c| rem[(r / 2, (r % 2) * cols + c)]);
            let (u, s, vt) = sorted_svd(&m);
            let k = s.iter().filter(|&&x| x > truncation.eps_svd).count().clamp(1, truncation.chi_max);
            sites.push(SiteTensor::from_row_major(chi, k, &u.columns(0, k).into_owned()));
            rem = CMat::from_fn(k, cols, |r, c| vt[(r, c)] * s[r]);
        }
        let chi = rem.nrows();
        sites.push(SiteTensor::from_row_major(chi, 1, &CMat::from_fn(chi * 2, 1, |r, _| rem[(r / 2, r % 2)])));
        let mut mps = Self { sites, center: length - 1, truncation };
        mps.move_center(0);
        mps.normalize();
        Ok(mps)
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites.iter().take(self.len() - 1).map(|t| t.right).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// Norm from the orthogonality center.
    pub fn norm(&self) -> f64 {
        self.sites[self.center].norm_sqr().sqrt()
    }

    fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            for z in self.sites[self.center].data.iter_mut() {
                *z /= n;
            }
        }
    }

    pub fn apply_single(&mut self, site: usize, g: &[[C64; 2]; 2]) {
        let t = &mut self.sites[site];
        for l in 0..t.left {
            for r in 0..t.right {
                let a = t.get(l, 0, r);
                let b = t.get(l, 1, r);
                *t.at(l, 0, r) = g[0][0] * a + g[0][1] * b;
                *t.at(l, 1, r) = g[1][0] * a + g[1][1] * b;
            }
        }
    }

    /// Shift the orthogonality center without truncation.
    pub fn move_center(&mut self, to: usize) {
        while self.center < to {
            let p = self.center;
            let (u, s, vt) = sorted_svd(&self.sites[p].as_left_matrix());
            let k = s.len();
            let left = self.sites[p].left;
            self.sites[p] = SiteTensor::from_row_major(left, k, &u);
            let carry = CMat::from_fn(k, vt.ncols(), |r, c| vt[(r, c)] * s[r]);
            let next = &self.sites[p + 1];
            let merged = &carry * next.as_right_matrix();
            self.sites[p + 1] = SiteTensor::from_row_major(k, next.right, &merged);
            self.center += 1;
        }
        while self.center > to {
            let p = self.center;
            let (u, s, vt) = sorted_svd(&self.sites[p].as_right_matrix());
            let k = s.len();
            let right = self.sites[p].right;
            self.sites[p] = SiteTensor::from_row_major(k, right, &vt);
            let carry = CMat::from_fn(u.nrows(), k, |r, c| u[(r, c)] * s[c]);
            let prev = &self.sites[p - 1];
            let merged = prev.as_left_matrix() * &carry;
            self.sites[p - 1] = SiteTensor::from_row_major(prev.left, k, &merged);
            self.center -= 1;
        }
    }

    /// Apply a two-site gate on `(p, p+1)` (basis index `2 s_p + s_{p+1}`),
    /// leaving the center on `p+1` if `center_right`, else on `p`. Returns
    /// the discarded weight.
    pub fn apply_two(&mut self, p: usize, gate: &CMat, center_right: bool) -> f64 {
        if self.center < p {
            self.move_center(p);
        } else if self.center > p + 1 {
            self.move_center(p + 1);
        }
        let a = &self.sites[p];
        let b = &self.sites[p + 1];
        let (cl, cm, cr) = (a.left, a.right, b.right);
        // theta[(l, s1), (s2, r)] after the gate
        let mut theta = vec![ZERO; cl * 4 * cr];
        for l in 0..cl {
            for s1 in 0..2 {
                for m in 0..cm {
                    let x = a.get(l, s1, m);
                    if x == ZERO {
                        continue;
                    }
                    for s2 in 0..2 {
                        for r in 0..cr {
                            theta[((l * 2 + s1) * 2 + s2) * cr + r] += x * b.get(m, s2, r);
                        }
                    }
                }
            }
        }
        let mut gated = CMat::zeros(cl * 2, 2 * cr);
        for l in 0..cl {
            for r in 0..cr {
                for out in 0..4 {
                    let mut acc = ZERO;
                    for inp in 0..4 {
                        let g = gate[(out, inp)];
                        if g != ZERO {
                            acc += g * theta[(l * 4 + inp) * cr + r];
                        }
                    }
                    gated[(l * 2 + out / 2, (out % 2) * cr + r)] = acc;
                }
            }
        }
        let (u, s, vt) = sorted_svd(&gated);
        let total: f64 = s.iter().map(|x| x * x).sum();
        let k = s.iter().filter(|&&x| x > self.truncation.eps_svd).count().clamp(1, self.truncation.chi_max);
        let kept: f64 = s[..k].iter().map(|x| x * x).sum();
        let discarded = if total > 0.0 { (total - kept) / total } else { 0.0 };
        let scale = if kept > 0.0 { (total / kept).sqrt() } else { 1.0 };
        let sv: Vec<f64> = s[..k].iter().map(|x| x * scale).collect();
        let (left_m, right_m) = if center_right {
            (u.columns(0, k).into_owned(), CMat::from_fn(k, vt.ncols(), |r, c| vt[(r, c)] * sv[r]))
        } else {
            (CMat::from_fn(u.nrows(), k, |r, c| u[(r, c)] * sv[c]), vt.rows(0, k).into_owned())
        };
        self.sites[p] = SiteTensor::from_row_major(cl, k, &left_m);
        self.sites[p + 1] = SiteTensor::from_row_major(k, cr, &right_m);
        self.center = if center_right { p + 1 } else { p };
        discarded
    }

    /// Dense amplitudes (small chains only).
    pub fn to_dense(&self) -> DVector<C64> {
        let mut acc = CMat::from_element(1, 1, ONE);
        for t in &self.sites {
            let rows = acc.nrows();
            let mut next = CMat::zeros(rows * 2, t.right);
            for i in 0..rows {
                for m in 0..t.left {
                    let x = acc[(i, m)];
                    for s in 0..2 {
                        for r in 0..t.right {
                            next[(i * 2 + s, r)] += x * t.get(m, s, r);
                        }
                    }
                }
            }
            acc = next;
        }
        DVector::from_column_slice(acc.as_slice())
    }

    /// Largest deviation of any non-center tensor from the isometry
    /// condition appropriate to its side of the center.
    pub fn isometry_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for (p, t) in self.sites.iter().enumerate() {
            let gram = if p < self.center {
                let m = t.as_left_matrix();
                m.adjoint() * m
            } else if p > self.center {
                let m = t.as_right_matrix();
                &m * m.adjoint()
            } else {
                continue;
            };
            let n = gram.nrows();
            worst = worst.max((gram - CMat::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        worst
    }
}

/// Reduced state of spins (0, 1), Hermitian and renormalised to unit trace.
pub fn reduced_density_from_mps(mps: &MpsState) -> DensityMatrix {
    let owned;
    let state = if mps.center > 1 {
        let mut c = mps.clone();
        c.move_center(1);
        owned = c;
        &owned
    } else {
        mps
    };
    let a = &state.sites[0];
    let b = &state.sites[1];
    let chi = b.right;
    let mut theta = CMat::zeros(4, chi);
    for s1 in 0..2 {
        for m in 0..a.right {
            let x = a.get(0, s1, m);
            for s2 in 0..2 {
                for r in 0..chi {
                    theta[(s1 * 2 + s2, r)] += x * b.get(m, s2, r);
                }
            }
        }
    }
    let rho = &theta * theta.adjoint();
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let tr = rho.trace();
    DensityMatrix(rho / tr)
}

/// All spins in `|0⟩` with `u_rand` applied to spins (0, 1).
pub fn make_initial_mps(length: usize, u_rand: &CMat, truncation: Truncation) -> MpsState {
    let mut mps = MpsState::all_zero(length, truncation);
    mps.apply_two(0, u_rand, false);
    mps
}

fn swap_gate() -> CMat {
    let mut g = CMat::zeros(4, 4);
    g[(0, 0)] = ONE;
    g[(1, 2)] = ONE;
    g[(2, 1)] = ONE;
    g[(3, 3)] = ONE;
    g
}

fn interaction_gate(v: f64, dt: f64) -> CMat {
    let mut g = CMat::identity(4, 4);
    g[(3, 3)] = C64::from_polar(1.0, -v * dt);
    g
}

#[derive(Clone, Debug)]
pub struct TebdRun {
    /// Subsystem coherence vectors, `states[0]` at `t = 0`.
    pub states: Vec<Vec16>,
    /// Total discarded weight in each step.
    pub discarded: Vec<f64>,
    /// Squared norm each step would have had without renormalisation.
    pub norm_sqr_before_renorm: Vec<f64>,
    pub max_bond: usize,
}

/// One Strang step: half field, interaction bonds (ring bond via swaps),
/// half field. Center starts and ends at site 0.
fn tebd_step(mps: &mut MpsState, spec: &ChainSpec, half_x: &[[C64; 2]; 2], zz: &CMat, swap: &CMat) -> (f64, f64) {
    let l = spec.length;
    let mut weights = Vec::new();
    for site in 0..l {
        mps.apply_single(site, half_x);
    }
    for p in 0..l - 1 {
        weights.push(mps.apply_two(p, zz, true));
    }
    if spec.periodic {
        for p in (1..l - 1).rev() {
            weights.push(mps.apply_two(p, swap, false));
        }
        weights.push(mps.apply_two(0, zz, true));
        for p in 1..l - 1 {
            weights.push(mps.apply_two(p, swap, true));
        }
    }
    mps.move_center(0);
    for site in 0..l {
        mps.apply_single(site, half_x);
    }
    let total: f64 = weights.iter().sum();
    let norm_sqr: f64 = weights.iter().map(|w| 1.0 - w).product();
    (total, norm_sqr)
}

pub fn evolve_chain_tebd(
    spec: &ChainSpec,
    mps0: &MpsState,
    traj: &TrajectorySpec,
    basis: &OperatorBasis,
) -> Result<TebdRun> {
    spec.validate()?;
    traj.validate()?;
    if mps0.len() != spec.length {
        return Err(Error::ShapeMismatch(format!("MPS of {} sites for L = {}", mps0.len(), spec.length)));
    }
    let half_x = x_rotation(spec.omega, traj.dt / 2.0);
    let zz = interaction_gate(spec.v, traj.dt);
    let swap = swap_gate();
    let mut mps = mps0.clone();
    mps.move_center(0);
    let steps = traj.steps();
    let mut run = TebdRun {
        states: Vec::with_capacity(steps + 1),
        discarded: Vec::with_capacity(steps),
        norm_sqr_before_renorm: Vec::with_capacity(steps),
        max_bond: mps.max_bond(),
    };
    run.states.push(rho_to_coherence(&reduced_density_from_mps(&mps), basis).0);
    for _ in 0..steps {
        let (w, n) = tebd_step(&mut mps, spec, &half_x, &zz, &swap);
        if w > MAX_STEP_DISCARD {
            return Err(Error::TruncationOverflow { weight: w, limit: MAX_STEP_DISCARD });
        }
        run.discarded.push(w);
        run.norm_sqr_before_renorm.push(n);
        run.max_bond = run.max_bond.max(mps.max_bond());
        run.states.push(rho_to_coherence(&reduced_density_from_mps(&mps), basis).0);
    }
    Ok(run)
}
