//! Orthonormal Hermitian operator basis for the two-qubit subsystem and the
//! coherence-vector representation of its states.
//!
//! Local conventions: the single-spin basis is ordered `(|0⟩, |1⟩)` with
//! `σᶻ|0⟩ = −|0⟩`, so `σᶻ = diag(−1, 1)` and the excitation projector
//! `n = (1 + σᶻ)/2 = |1⟩⟨1|`. `σʸ` is fixed by `[σˣ, σʸ] = 2iσᶻ`.
//! Multi-spin operators are Kronecker products with site 0 leftmost.

use std::fmt;


use crate::{CMat, Error, Result, Vec16, C64};

/// Two-qubit Hilbert-space dimension.
pub const DIM: usize = 4;
/// Number of basis operators, `DIM²`.
pub const NUM_OPS: usize = 16;
/// Number of traceless basis operators (indices 1..16).
pub const NUM_TRACELESS: usize = 15;
/// Coherence-vector identity component, `1/√DIM`.
pub const V1: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn index(self) -> usize {
        match self {
            Pauli::I => 0,
            Pauli::X => 1,
            Pauli::Y => 2,
            Pauli::Z => 3,
        }
    }

    pub fn matrix(self) -> CMat {
        let z = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        match self {
            Pauli::I => CMat::from_row_slice(2, 2, &[one, z, z, one]),
            Pauli::X => CMat::from_row_slice(2, 2, &[z, one, one, z]),
            Pauli::Y => CMat::from_row_slice(2, 2, &[z, i, -i, z]),
            Pauli::Z => CMat::from_row_slice(2, 2, &[-one, z, z, one]),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Pauli::I => "I",
            Pauli::X => "x",
            Pauli::Y => "y",
            Pauli::Z => "z",
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `σ⁻ = |0⟩⟨1|`, lowering an excitation.
pub fn sigma_minus() -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(0, 1)] = C64::new(1.0, 0.0);
    m
}

/// Excitation projector `n = |1⟩⟨1|`.
pub fn number_op() -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(1, 1)] = C64::new(1.0, 0.0);
    m
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Normalized Pauli products `(σ^{a₁} ⊗ … ⊗ σ^{aₙ}) / 2^{n/2}`, ordered
/// lexicographically in the site labels over `(I, x, y, z)`.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    ops: Vec<CMat>,
    labels: Vec<Vec<Pauli>>,
    dim: usize,
}

impl OperatorBasis {
    pub fn pauli_products(n_qubits: usize) -> Self {
        assert!(n_qubits >= 1);
        let dim = 1usize << n_qubits;
        let scale = 1.0 / (dim as f64).sqrt();
        let count = dim * dim;
        let mut ops = Vec::with_capacity(count);
        let mut labels = Vec::with_capacity(count);
        for idx in 0..count {
            let label: Vec<Pauli> = (0..n_qubits)
                .map(|site| Pauli::ALL[(idx >> (2 * (n_qubits - 1 - site))) & 3])
                .collect();
            let op = label[1..]
                .iter()
                .fold(label[0].matrix(), |acc, p| kron(&acc, &p.matrix()));
            ops.push(op * C64::new(scale, 0.0));
            labels.push(label);
        }
        Self { ops, labels, dim }
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn op(&self, i: usize) -> &CMat {
        &self.ops[i]
    }

    pub fn label(&self, i: usize) -> &[Pauli] {
        &self.labels[i]
    }

    pub fn label_string(&self, i: usize) -> String {
        self.labels[i].iter().map(|p| p.symbol()).collect()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Position of a label in the canonical ordering.
    pub fn index_of(&self, label: &[Pauli]) -> usize {
        label.iter().fold(0, |acc, p| 4 * acc + p.index())
    }

    /// Expansion coefficients `Tr(F_i A)` of an arbitrary operator.
    pub fn expand(&self, a: &CMat) -> Vec<C64> {
        self.ops.iter().map(|f| trace_product(f, a)).collect()
    }

    /// `Σ_i coeffs_i F_i`.
    pub fn combine(&self, coeffs: &[C64]) -> CMat {
        let mut out = CMat::zeros(self.dim, self.dim);
        for (f, &c) in self.ops.iter().zip(coeffs) {
            if c != C64::new(0.0, 0.0) {
                out += f * c;
            }
        }
        out
    }
}

/// The canonical two-qubit basis `F_1..F_16` (`F_1 = 𝟙/2`).
pub fn build_basis() -> OperatorBasis {
    OperatorBasis::pauli_products(2)
}

/// Two-qubit basis index for the label `(left, right)`.
pub fn two_qubit_index(left: Pauli, right: Pauli) -> usize {
    4 * left.index() + right.index()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Dense structure-constant tensors,
/// `f_ijk = −(i/4) Tr([F_i,F_j]F_k)` and `d_ijk = (1/4) Tr({F_i,F_j}F_k)`.
#[derive(Clone, Debug)]
pub struct StructureConstants {
    n: usize,
    f: Vec<f64>,
    d: Vec<f64>,
}

impl StructureConstants {
    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    #[inline]
    pub fn f(&self, i: usize, j: usize, k: usize) -> f64 {
        self.f[self.at(i, j, k)]
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize, k: usize) -> f64 {
        self.d[self.at(i, j, k)]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

const STRUCTURE_IMAG_LIMIT: f64 = 1e-9;

pub fn structure_constants(basis: &OperatorBasis) -> Result<StructureConstants> {
    let n = basis.len();
    let mut f = vec![0.0; n * n * n];
    let mut d = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            let fi = basis.op(i);
            let fj = basis.op(j);
            let prod_ij = fi * fj;
            let prod_ji = fj * fi;
            let comm = &prod_ij - &prod_ji;
            let anti = &prod_ij + &prod_ji;
            for k in 0..n {
                let fk = basis.op(k);
                // −(i/4)·Tr([F_i,F_j]F_k)
                let fv = trace_product(&comm, fk) * C64::new(0.0, -0.25);
                let dv = trace_product(&anti, fk) * 0.25;
                for imag in [fv.im, dv.im] {
                    if imag.abs() > STRUCTURE_IMAG_LIMIT {
                        return Err(Error::NonRealStructureConstant { i, j, k, imag });
                    }
                }
                let idx = (i * n + j) * n + k;
                f[idx] = fv.re;
                d[idx] = dv.re;
            }
        }
    }
    Ok(StructureConstants { n, f, d })
}

/// Two-qubit density matrix. Positivity is not enforced: states rebuilt from
/// noisy estimates may be unphysical.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub CMat);

impl DensityMatrix {
    pub fn from_pure(psi: &nalgebra::DVector<C64>) -> Self {
        Self(psi * psi.adjoint())
    }

    pub fn maximally_mixed() -> Self {
        Self(CMat::identity(DIM, DIM) * C64::new(0.25, 0.0))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        crate::linalg::hermitian_eigenvalues(&herm)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.0, &self.0).re
    }

    /// Hermitian, unit trace and positive within the given tolerances.
    pub fn is_physical(&self, tol: f64, eig_tol: f64) -> bool {
        self.hermiticity_error() <= tol
            && (self.trace() - C64::new(1.0, 0.0)).norm() <= tol
            && self.min_eigenvalue() >= -eig_tol
    }
}

/// Real coherence vector `v_i = Tr(F_i ρ)`; `v_1 = 1/2` always.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceVector(pub Vec16);

impl CoherenceVector {
    pub fn new(v: Vec16) -> Result<Self> {
        check_normalization(v[0])?;
        Ok(Self(v))
    }

    pub fn maximally_mixed() -> Self {
        let mut v = Vec16::zeros();
        v[0] = V1;
        Self(v)
    }

    pub fn as_vec(&self) -> &Vec16 {
        &self.0
    }

    pub fn into_vec(self) -> Vec16 {
        self.0
    }
}

fn check_normalization(v1: f64) -> Result<()> {
    if (v1 - V1).abs() > 1e-12 {
        return Err(Error::BadNormalization(v1));
    }
    Ok(())
}

pub fn rho_to_coherence(rho: &DensityMatrix, basis: &OperatorBasis) -> CoherenceVector {
    assert_eq!(basis.len(), NUM_OPS, "coherence vectors are two-qubit");
    let mut v = Vec16::zeros();
    for (i, f) in basis.ops().iter().enumerate() {
        v[i] = trace_product(f, &rho.0).re;
    }
    CoherenceVector(v)
}

pub fn coherence_to_rho(v: &CoherenceVector, basis: &OperatorBasis) -> Result<DensityMatrix> {
    assert_eq!(basis.len(), NUM_OPS, "coherence vectors are two-qubit");
    check_normalization(v.0[0])?;
    let coeffs: Vec<C64> = v.0.iter().map(|&x| C64::new(x, 0.0)).collect();
    Ok(DensityMatrix(basis.combine(&coeffs)))
}
