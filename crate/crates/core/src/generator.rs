//! Parametrization of the Lindblad generator in the coherence-vector
//! representation, `L(θ) = H(θᴴ) + D(θˣ, θʸ)`, ground-truth construction
//! from Hamiltonian/jump-operator specifications, and the inverse readout.
//!
//! Indices: coherence vectors use basis positions `0..16` with position 0
//! the identity. Parameter vectors and the Kossakowski matrix use the
//! traceless positions `1..16`, stored at offset `pos − 1`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::linalg::hermitian_eigen;
use serde::{Deserialize, Serialize};

use crate::basis::{
    self, OperatorBasis, Pauli, StructureConstants, NUM_OPS, NUM_TRACELESS,
};
use crate::{CMat, Error, Mat16, Result, C64};

const T: usize = NUM_TRACELESS;

/// Trainable parameters `θᴴ` (15), `θˣ` and `θʸ` (15×15 each).
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub theta_h: Vec<f64>,
    pub theta_x: DMatrix<f64>,
    pub theta_y: DMatrix<f64>,
}

impl GeneratorParams {
    /// Number of real parameters: 15 + 2·225.
    pub const LEN: usize = T + 2 * T * T;

    pub fn zeros() -> Self {
        Self {
            theta_h: vec![0.0; T],
            theta_x: DMatrix::zeros(T, T),
            theta_y: DMatrix::zeros(T, T),
        }
    }

    /// Flat layout `[θᴴ, θˣ (row-major), θʸ (row-major)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(&self.theta_h);
        for m in [&self.theta_x, &self.theta_y] {
            for r in 0..T {
                for c in 0..T {
                    out.push(m[(r, c)]);
                }
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() != Self::LEN {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                Self::LEN,
                flat.len()
            )));
        }
        let theta_h = flat[..T].to_vec();
        let theta_x = DMatrix::from_row_slice(T, T, &flat[T..T + T * T]);
        let theta_y = DMatrix::from_row_slice(T, T, &flat[T + T * T..]);
        Ok(Self { theta_h, theta_x, theta_y })
    }

    pub fn is_finite(&self) -> bool {
        self.theta_h.iter().all(|x| x.is_finite())
            && self.theta_x.iter().all(|x| x.is_finite())
            && self.theta_y.iter().all(|x| x.is_finite())
    }

    /// `Z = θˣ + iθʸ`.
    pub fn z_matrix(&self) -> CMat {
        CMat::from_fn(T, T, |r, c| C64::new(self.theta_x[(r, c)], self.theta_y[(r, c)]))
    }
}

/// Hermitian positive semi-definite dissipator coefficient matrix over the
/// traceless basis operators.
#[derive(Clone, Debug, PartialEq)]
pub struct KossakowskiMatrix(pub CMat);

impl KossakowskiMatrix {
    pub fn hermiticity_error(&self) -> f64 {
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let mut ev = crate::linalg::hermitian_eigenvalues(&herm);
        ev.reverse();
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty")
    }
}

/// `c = Z†Z` with `Z = θˣ + iθʸ`; positive semi-definite by construction.
pub fn build_kossakowski(theta_x: &DMatrix<f64>, theta_y: &DMatrix<f64>) -> KossakowskiMatrix {
    let z = CMat::from_fn(T, T, |r, c| C64::new(theta_x[(r, c)], theta_y[(r, c)]));
    KossakowskiMatrix(z.adjoint() * z)
}

/// Real generator matrix split into its Hamiltonian and dissipative parts.
#[derive(Clone, Debug, PartialEq)]
pub struct LindbladMatrix {
    pub h: Mat16,
    pub d: Mat16,
}

impl LindbladMatrix {
    pub fn total(&self) -> Mat16 {
        self.h + self.d
    }

    pub fn zero() -> Self {
        Self { h: Mat16::zeros(), d: Mat16::zeros() }
    }
}

/// `H_ij = −4 Σ_k f_ijk θᴴ_k` on the traceless block; first row and column zero.
pub fn build_h_matrix(theta_h: &[f64], sc: &StructureConstants) -> Mat16 {
    assert_eq!(theta_h.len(), T);
    let mut h = Mat16::zeros();
    for i in 1..NUM_OPS {
        for j in 1..NUM_OPS {
            let mut acc = 0.0;
            for k in 1..NUM_OPS {
                acc += sc.f(i, j, k) * theta_h[k - 1];
            }
            h[(i, j)] = -4.0 * acc;
        }
    }
    h
}

const HERMITICITY_LIMIT: f64 = 1e-10;

/// Dissipative block from the Kossakowski matrix:
/// `D_mn = −8 Σ_{ijk} f_mik (f_njk Re c_ij + d_njk Im c_ij)`,
/// `D_m1 = 2 Σ_{ij} f_imj Im c_ij`, `D_1m = 0`.
pub fn build_d_matrix(c: &KossakowskiMatrix, sc: &StructureConstants) -> Result<Mat16> {
    let herm = c.hermiticity_error();
    if herm > HERMITICITY_LIMIT {
        return Err(Error::NonHermitianKossakowski(herm));
    }
    let mut d = Mat16::zeros();
    for m in 1..NUM_OPS {
        for n in 1..NUM_OPS {
            let mut acc = 0.0;
            for i in 1..NUM_OPS {
                for j in 1..NUM_OPS {
                    let cij = c.0[(i - 1, j - 1)];
                    for k in 1..NUM_OPS {
                        let fmik = sc.f(m, i, k);
                        if fmik != 0.0 {
                            acc += fmik * (sc.f(n, j, k) * cij.re + sc.d(n, j, k) * cij.im);
                        }
                    }
                }
            }
            d[(m, n)] = -8.0 * acc;
        }
        let mut col = 0.0;
        for i in 1..NUM_OPS {
            for j in 1..NUM_OPS {
                col += sc.f(i, m, j) * c.0[(i - 1, j - 1)].im;
            }
        }
        d[(m, 0)] = 2.0 * col;
    }
    Ok(d)
}

/// Builds `L` from parameters using the structure-constant formulas directly.
pub fn lindblad_from_params(params: &GeneratorParams, sc: &StructureConstants) -> LindbladMatrix {
    let h = build_h_matrix(&params.theta_h, sc);
    let c = build_kossakowski(&params.theta_x, &params.theta_y);
    let d = build_d_matrix(&c, sc).expect("Z†Z is Hermitian");
    LindbladMatrix { h, d }
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    out: usize,
    input: usize,
    weight: f64,
}

/// The linear maps `θᴴ ↦ H`, `Re c ↦ D`, `Im c ↦ D` stored as sparse
/// coefficient lists, with their adjoints for gradient pullback.
#[derive(Clone, Debug)]
pub struct GeneratorMaps {
    hamiltonian: Vec<Entry>,
    diss_re: Vec<Entry>,
    diss_im: Vec<Entry>,
}

/// Gradient of a scalar with respect to each parameter block.
pub type ParamGrad = GeneratorParams;

impl GeneratorMaps {
    pub fn new(sc: &StructureConstants) -> Self {
        let flat = |r: usize, c: usize| r * NUM_OPS + c;
        let mut hamiltonian = Vec::new();
        for i in 1..NUM_OPS {
            for j in 1..NUM_OPS {
                for k in 1..NUM_OPS {
                    let w = -4.0 * sc.f(i, j, k);
                    if w != 0.0 {
                        hamiltonian.push(Entry { out: flat(i, j), input: k - 1, weight: w });
                    }
                }
            }
        }
        let mut diss_re = Vec::new();
        let mut diss_im = Vec::new();
        for m in 1..NUM_OPS {
            for n in 1..NUM_OPS {
                for i in 1..NUM_OPS {
                    for j in 1..NUM_OPS {
                        let mut w_re = 0.0;
                        let mut w_im = 0.0;
                        for k in 1..NUM_OPS {
                            let fmik = sc.f(m, i, k);
                            w_re += fmik * sc.f(n, j, k);
                            w_im += fmik * sc.d(n, j, k);
                        }
                        let input = (i - 1) * T + (j - 1);
                        if w_re != 0.0 {
                            diss_re.push(Entry { out: flat(m, n), input, weight: -8.0 * w_re });
                        }
                        if w_im != 0.0 {
                            diss_im.push(Entry { out: flat(m, n), input, weight: -8.0 * w_im });
                        }
                    }
                }
            }
            for i in 1..NUM_OPS {
                for j in 1..NUM_OPS {
                    let w = 2.0 * sc.f(i, m, j);
                    if w != 0.0 {
                        diss_im.push(Entry { out: flat(m, 0), input: (i - 1) * T + (j - 1), weight: w });
                    }
                }
            }
        }
        Self { hamiltonian, diss_re, diss_im }
    }

    pub fn h_matrix(&self, theta_h: &[f64]) -> Mat16 {
        let mut h = Mat16::zeros();
        for e in &self.hamiltonian {
            h[(e.out / NUM_OPS, e.out % NUM_OPS)] += e.weight * theta_h[e.input];
        }
        h
    }

    pub fn d_matrix(&self, c: &KossakowskiMatrix) -> Mat16 {
        let mut d = Mat16::zeros();
        for e in &self.diss_re {
            let cij = c.0[(e.input / T, e.input % T)];
            d[(e.out / NUM_OPS, e.out % NUM_OPS)] += e.weight * cij.re;
        }
        for e in &self.diss_im {
            let cij = c.0[(e.input / T, e.input % T)];
            d[(e.out / NUM_OPS, e.out % NUM_OPS)] += e.weight * cij.im;
        }
        d
    }

    pub fn lindblad(&self, params: &GeneratorParams) -> LindbladMatrix {
        let c = build_kossakowski(&params.theta_x, &params.theta_y);
        LindbladMatrix { h: self.h_matrix(&params.theta_h), d: self.d_matrix(&c) }
    }

    /// Chains `∂ℓ/∂L` back to the parameters through the linear maps and
    /// the product rule for `c = Z†Z`.
    pub fn pullback(&self, grad_l: &Mat16, params: &GeneratorParams) -> ParamGrad {
        let g = |out: usize| grad_l[(out / NUM_OPS, out % NUM_OPS)];
        let mut theta_h = vec![0.0; T];
        for e in &self.hamiltonian {
            theta_h[e.input] += e.weight * g(e.out);
        }
        let mut g_re = DMatrix::<f64>::zeros(T, T);
        let mut g_im = DMatrix::<f64>::zeros(T, T);
        for e in &self.diss_re {
            g_re[(e.input / T, e.input % T)] += e.weight * g(e.out);
        }
        for e in &self.diss_im {
            g_im[(e.input / T, e.input % T)] += e.weight * g(e.out);
        }
        // c_re = XᵀX + YᵀY, c_im = XᵀY − YᵀX.
        let x = &params.theta_x;
        let y = &params.theta_y;
        let sym = &g_re + g_re.transpose();
        let anti = &g_im - g_im.transpose();
        let theta_x = x * &sym - y * &anti;
        let theta_y = y * &sym + x * &anti;
        GeneratorParams { theta_h, theta_x, theta_y }
    }
}

/// One dissipation channel `γ (J ρ J† − ½{J†J, ρ})` with `Tr(J†J) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpChannel {
    pub rate: f64,
    pub op: CMat,
}

/// Hamiltonian plus jump operators, the diagonal form of a generator.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpOperatorSet {
    pub hamiltonian: CMat,
    pub channels: Vec<JumpChannel>,
}

impl JumpOperatorSet {
    pub fn new(hamiltonian: CMat) -> Self {
        Self { hamiltonian, channels: Vec::new() }
    }

    /// Adds the channel `L ρ L† − ½{L†L, ρ}` for an unnormalized `L`; the
    /// rate absorbs `Tr(L†L)`.
    pub fn with_jump(mut self, op: CMat) -> Self {
        let weight = basis::trace_product(&op.adjoint(), &op).re;
        if weight > 0.0 {
            let op = op / C64::new(weight.sqrt(), 0.0);
            self.channels.push(JumpChannel { rate: weight, op });
        }
        self
    }

    /// Expansion `θᴴ` of the effective Hamiltonian, including the shift
    /// generated by identity components of the jump operators.
    pub fn effective_hamiltonian_coeffs(&self, basis: &OperatorBasis) -> Vec<f64> {
        let mut h = self.hamiltonian.clone();
        let dim = basis.dim();
        for ch in &self.channels {
            // J = α𝟙 + K contributes H' = iγ(α*K − αK†)/2.
            let alpha = ch.op.trace() / C64::new(dim as f64, 0.0);
            let k = &ch.op - CMat::identity(dim, dim) * alpha;
            let shift = (&k * alpha.conj() - k.adjoint() * alpha) * C64::new(0.0, 0.5 * ch.rate);
            h += shift;
        }
        basis.expand(&h)[1..].iter().map(|z| z.re).collect()
    }

    /// `c_ij = Σ_k γ_k a_ki a_kj*` with `a_ki = Tr(F_i J_k)` over traceless `F_i`.
    pub fn kossakowski(&self, basis: &OperatorBasis) -> KossakowskiMatrix {
        let mut c = CMat::zeros(T, T);
        for ch in &self.channels {
            let a = basis.expand(&ch.op);
            for i in 0..T {
                for j in 0..T {
                    c[(i, j)] += a[i + 1] * a[j + 1].conj() * ch.rate;
                }
            }
        }
        KossakowskiMatrix(c)
    }
}

/// The two-spin benchmark: `H = (Ω/2)(σˣ₁ + σˣ₂) + V n₁n₂`, decay
/// `√γ σ⁻ᵢ` and dephasing `√κ nᵢ` on both spins.
pub fn benchmark_model(omega: f64, v: f64, gamma: f64, kappa: f64) -> JumpOperatorSet {
    let id = CMat::identity(2, 2);
    let sx = Pauli::X.matrix();
    let n = basis::number_op();
    let sm = basis::sigma_minus();
    let h = (basis::kron(&sx, &id) + basis::kron(&id, &sx)) * C64::new(omega / 2.0, 0.0)
        + basis::kron(&n, &n) * C64::new(v, 0.0);
    let sg = C64::new(gamma.sqrt(), 0.0);
    let sk = C64::new(kappa.sqrt(), 0.0);
    JumpOperatorSet::new(h)
        .with_jump(basis::kron(&sm, &id) * sg)
        .with_jump(basis::kron(&id, &sm) * sg)
        .with_jump(basis::kron(&n, &id) * sk)
        .with_jump(basis::kron(&id, &n) * sk)
}

pub fn ground_truth_l(
    spec: &JumpOperatorSet,
    basis: &OperatorBasis,
    sc: &StructureConstants,
) -> LindbladMatrix {
    let theta_h = spec.effective_hamiltonian_coeffs(basis);
    let c = spec.kossakowski(basis);
    let h = build_h_matrix(&theta_h, sc);
    let d = build_d_matrix(&c, sc).expect("Kossakowski matrix from jump operators is Hermitian");
    LindbladMatrix { h, d }
}

/// Parameters reproducing a jump-operator specification exactly:
/// `θᴴ` from the effective Hamiltonian, `Z = √Λ U†` from `c = UΛU†`.
pub fn params_from_jump_set(spec: &JumpOperatorSet, basis: &OperatorBasis) -> GeneratorParams {
    let theta_h = spec.effective_hamiltonian_coeffs(basis);
    let c = spec.kossakowski(basis);
    let eig = hermitian_eigen(&c.0);
    let mut z = CMat::zeros(T, T);
    for k in 0..T {
        let lam = eig.values[k].max(0.0).sqrt();
        for i in 0..T {
            z[(k, i)] = eig.vectors[(i, k)].conj() * lam;
        }
    }
    GeneratorParams {
        theta_h,
        theta_x: z.map(|w| w.re),
        theta_y: z.map(|w| w.im),
    }
}

/// Rates at or below this value are not reported as jump operators.
pub const READOUT_RATE_THRESHOLD: f64 = 1e-4;

/// Interpretable form of learned parameters.
#[derive(Clone, Debug)]
pub struct Readout {
    pub hamiltonian_coeffs: Vec<f64>,
    pub rates: Vec<f64>,
    /// Coefficients of each jump operator over the traceless basis.
    pub jump_coeffs: Vec<Vec<C64>>,
    pub labels: Vec<String>,
    pub jump_set: JumpOperatorSet,
}

/// Eigendecomposes `c`; eigenvalues above `threshold` become rates, sorted
/// descending, with jump operators `J = Σ_i u_i F_i`. Each eigenvector's
/// phase is fixed by making its largest-magnitude coefficient real positive.
pub fn extract_readout(params: &GeneratorParams, basis: &OperatorBasis, threshold: f64) -> Readout {
    let hamiltonian = basis.combine(
        &std::iter::once(C64::new(0.0, 0.0))
            .chain(params.theta_h.iter().map(|&x| C64::new(x, 0.0)))
            .collect::<Vec<_>>(),
    );
    let c = build_kossakowski(&params.theta_x, &params.theta_y);
    let eig = hermitian_eigen(&c.0);
    let order: Vec<usize> = (0..T).rev().collect();

    let mut jump_set = JumpOperatorSet::new(hamiltonian);
    let mut rates = Vec::new();
    let mut jump_coeffs = Vec::new();
    for k in order {
        let rate = eig.values[k];
        if rate <= threshold {
            continue;
        }
        let mut u: Vec<C64> = (0..T).map(|i| eig.vectors[(i, k)]).collect();
        let pivot = u
            .iter()
            .enumerate()
            .fold((0, 0.0), |best, (i, z)| if z.norm() > best.1 { (i, z.norm()) } else { best })
            .0;
        let phase = u[pivot].conj() / u[pivot].norm();
        for z in &mut u {
            *z *= phase;
        }
        let op = basis.combine(&std::iter::once(C64::new(0.0, 0.0)).chain(u.iter().copied()).collect::<Vec<_>>());
        jump_set.channels.push(JumpChannel { rate, op });
        rates.push(rate);
        jump_coeffs.push(u);
    }
    let labels = (1..NUM_OPS).map(|i| basis.label_string(i)).collect();
    Readout {
        hamiltonian_coeffs: params.theta_h.clone(),
        rates,
        jump_coeffs,
        labels,
        jump_set,
    }
}

fn pauli_term(label: &str) -> String {
    // "xI" -> "σˣ₁", "Iz" -> "σᶻ₂", "xy" -> "σˣ₁σʸ₂"
    let sup = |c: char| match c {
        'x' => "ˣ",
        'y' => "ʸ",
        _ => "ᶻ",
    };
    let mut out = String::new();
    for (site, c) in label.chars().enumerate() {
        if c != 'I' {
            out.push('σ');
            out.push_str(sup(c));
            out.push(if site == 0 { '₁' } else { '₂' });
        }
    }
    out
}

/// Serializable readout document.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ReadoutDocument {
    pub basis_labels: Vec<String>,
    pub hamiltonian_coeffs: Vec<f64>,
    pub rates: Vec<f64>,
    pub jump_ops: Vec<Vec<[f64; 2]>>,
}

impl Readout {
    pub fn document(&self) -> ReadoutDocument {
        ReadoutDocument {
            basis_labels: self.labels.clone(),
            hamiltonian_coeffs: self.hamiltonian_coeffs.clone(),
            rates: self.rates.clone(),
            jump_ops: self
                .jump_coeffs
                .iter()
                .map(|u| u.iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    /// Human-readable report in Pauli-product form (`F = σ⊗σ/2`, so the
    /// printed coefficients are half the basis coefficients). Hamiltonian
    /// and jump coefficients are rounded to two decimals, rates to three.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut terms = Vec::new();
        for (label, &c) in self.labels.iter().zip(&self.hamiltonian_coeffs) {
            let coeff = c / 2.0;
            if (coeff * 100.0).round() != 0.0 {
                terms.push(format!("{:+.2} {}", coeff, pauli_term(label)));
            }
        }
        let _ = writeln!(out, "H = {}", if terms.is_empty() { "0".to_string() } else { terms.join(" ") });
        if self.rates.is_empty() {
            let _ = writeln!(out, "no dissipative channels above threshold");
        }
        for (k, (rate, u)) in self.rates.iter().zip(&self.jump_coeffs).enumerate() {
            let _ = writeln!(out, "gamma_{} = {:.3}", k + 1, rate);
            let mut terms = Vec::new();
            for (label, z) in self.labels.iter().zip(u) {
                let (re, im) = (z.re / 2.0, z.im / 2.0);
                if (re * 100.0).round() != 0.0 || (im * 100.0).round() != 0.0 {
                    terms.push(format!("({:+.2}{:+.2}i) {}", re, im, pauli_term(label)));
                }
            }
            let _ = writeln!(out, "J_{} = {}", k + 1, terms.join(" + "));
        }
        out
    }
}
