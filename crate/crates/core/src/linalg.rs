//! Complex dense decompositions backed by faer.

use faer::{c64, Mat, Side};

use crate::{CMat, C64};

fn to_faer(m: &CMat) -> Mat<c64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        c64::new(z.re, z.im)
    })
}

fn from_faer(m: faer::MatRef<'_, c64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| {
        let z = m[(i, j)];
        C64::new(z.re, z.im)
    })
}

/// Thin SVD `m = U diag(s) Vᴴ`, singular values in descending order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub vt: CMat,
}

pub fn svd(m: &CMat) -> Svd {
    let f = to_faer(m);
    let dec = f.thin_svd().expect("SVD did not converge");
    let s = dec.S().column_vector().iter().map(|z| z.re).collect();
    let v = from_faer(dec.V());
    Svd { u: from_faer(dec.U()), s, vt: v.adjoint() }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

/// Uses the lower triangle; callers symmetrise first if needed.
pub fn hermitian_eigen(m: &CMat) -> HermitianEigen {
    let f = to_faer(m);
    let dec = f.self_adjoint_eigen(Side::Lower).expect("eigendecomposition did not converge");
    let values = dec.S().column_vector().iter().map(|z| z.re).collect();
    HermitianEigen { values, vectors: from_faer(dec.U()) }
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let f = to_faer(m);
    f.self_adjoint_eigenvalues(Side::Lower).expect("eigendecomposition did not converge")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(m: &CMat) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn svd_reconstructs_structured_matrices() {
        let mut r = crate::rng::stream(3);
        for (rows, cols) in [(4, 16), (16, 4), (8, 8), (1, 2)] {
            let g = crate::rng::complex_gaussian(&mut r, rows, cols);
            let d = svd(&g);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let k = d.s.len();
            let sd = CMat::from_diagonal(&nalgebra::DVector::from_iterator(k, d.s.iter().map(|&x| C64::new(x, 0.0))));
            assert!(max_abs(&(&d.u * sd * &d.vt - &g)) < 1e-12);
            assert!(max_abs(&(d.u.adjoint() * &d.u - CMat::identity(k, k))) < 1e-12);
            assert!(max_abs(&(&d.vt * d.vt.adjoint() - CMat::identity(k, k))) < 1e-12);
        }
        // rank-deficient input with a tiny tail
        let mut m = CMat::zeros(4, 4);
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(1, 1)] = C64::new(0.0, 1e-6);
        let d = svd(&m);
        assert!((d.s[1] - 1e-6).abs() < 1e-18);
        assert_eq!(d.s[3], 0.0);
    }

    #[test]
    fn hermitian_eigen_residual() {
        let mut r = crate::rng::stream(9);
        let g = crate::rng::complex_gaussian(&mut r, 6, 6);
        let h = &g + g.adjoint();
        let e = hermitian_eigen(&h);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        for (k, lam) in e.values.iter().enumerate() {
            let v = e.vectors.column(k).clone_owned();
            assert!((&h * &v - &v * C64::new(*lam, 0.0)).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
        }
        let only = hermitian_eigenvalues(&h);
        for (a, b) in only.iter().zip(&e.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
