//! Matrix exponential by scaling and squaring with Padé approximants, and its
//! Fréchet derivative via the block-triangular identity
//!
//! ```text
//! exp([[A, E], [0, A]]) = [[exp(A), L(A, E)], [0, exp(A)]]
//! ```
//!
//! Shared by the trainer's forward model and the exact Lindblad propagator so
//! that training and reference dynamics use the same numerics.

use nalgebra::DMatrix;

type Mat = DMatrix<f64>;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Induced 1-norm (maximum absolute column sum).
pub fn norm1(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Low-order Padé numerator/denominator pieces `(U, V)` for `m ∈ {3,5,7,9}`.
fn pade_low(a: &Mat, b: &[f64]) -> (Mat, Mat) {
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    let mut odd = &ident * b[1];
    let mut even = &ident * b[0];
    let mut power = ident.clone();
    for k in 1..b.len() / 2 {
        power = &power * &a2;
        odd += &power * b[2 * k + 1];
        even += &power * b[2 * k];
    }
    (a * odd, even)
}

fn pade13(a: &Mat) -> (Mat, Mat) {
    let n = a.nrows();
    let ident = Mat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    (u, v)
}

fn solve_pade(u: Mat, v: Mat) -> Mat {
    let p = &v + &u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular for scaled arguments")
}

/// `exp(A)` for a square real matrix with finite entries.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square());
    let n = a.nrows();
    let norm = norm1(a);
    if norm == 0.0 {
        return Mat::identity(n, n);
    }
    for (theta, coeffs) in [
        (THETA_3, &B3[..]),
        (THETA_5, &B5[..]),
        (THETA_7, &B7[..]),
        (THETA_9, &B9[..]),
    ] {
        if norm <= theta {
            let (u, v) = pade_low(a, coeffs);
            return solve_pade(u, v);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a * 2f64.powi(-s);
    let (u, v) = pade13(&scaled);
    let mut r = solve_pade(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Returns `(exp(A), L(A, E))` where `L(A, E)` is the Fréchet derivative of
/// the exponential at `A` in direction `E`.
pub fn expm_frechet(a: &Mat, e: &Mat) -> (Mat, Mat) {
    assert!(a.is_square() && a.shape() == e.shape());
    let n = a.nrows();
    let norm_e = norm1(e);
    if norm_e == 0.0 {
        return (expm(a), Mat::zeros(n, n));
    }
    // L is linear in E; rescale so the block norm is driven by A alone.
    let norm_a = norm1(a);
    let scale = if norm_a > 0.0 { norm_a / norm_e } else { 1.0 / norm_e };
    let mut block = Mat::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((n, n), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, n)).copy_from(&(e * scale));
    let big = expm(&block);
    let exp_a = big.view((0, 0), (n, n)).into_owned();
    let deriv = big.view((0, n), (n, n)).into_owned() / scale;
    (exp_a, deriv)
}

/// Adjoint of the Fréchet derivative: the gradient of `⟨G, exp(A)⟩` w.r.t.
/// `A` is `L(Aᵀ, G)`.
pub fn expm_frechet_adjoint(a: &Mat, g: &Mat) -> Mat {
    expm_frechet(&a.transpose(), g).1
}
