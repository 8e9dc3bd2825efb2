//! Independent oracles shared by the integration suites. Nothing here goes
//! through the structure-constant formulas or the library's propagators.
#![allow(dead_code)]

use lindblad_core::basis::{trace_product, OperatorBasis};
use lindblad_core::generator::JumpOperatorSet;
use lindblad_core::{CMat, Mat16, C64};

/// Dual generator `L*[X] = i[H,X] + Σ c_ij (F_j X F_i − ½{F_j F_i, X})`.
fn dual_action(h: &CMat, c: &CMat, basis: &OperatorBasis, x: &CMat) -> CMat {
    let i = C64::new(0.0, 1.0);
    let mut out = (h * x - x * h) * i;
    for a in 0..15 {
        for b in 0..15 {
            let cab = c[(a, b)];
            if cab.norm() == 0.0 {
                continue;
            }
            let fi = basis.op(a + 1);
            let fj = basis.op(b + 1);
            let fjfi = fj * fi;
            out += (fj * x * fi - (&fjfi * x + x * &fjfi) * C64::new(0.5, 0.0)) * cab;
        }
    }
    out
}

/// `L_ij = Tr(L*[F_i] F_j)` by dense operator arithmetic.
pub fn brute_force_generator(h: &CMat, c: &CMat, basis: &OperatorBasis) -> Mat16 {
    let mut l = Mat16::zeros();
    for i in 0..16 {
        let dual = dual_action(h, c, basis, basis.op(i));
        for j in 0..16 {
            let v = trace_product(&dual, basis.op(j));
            l[(i, j)] = v.re;
        }
    }
    l
}

/// Direct `dρ/dt = −i[H,ρ] + Σ γ (JρJ† − ½{J†J,ρ})` with full jump operators.
pub fn direct_rhs(spec: &JumpOperatorSet, rho: &CMat) -> CMat {
    let i = C64::new(0.0, 1.0);
    let h = &spec.hamiltonian;
    let mut out = (h * rho - rho * h) * (-i);
    for ch in &spec.channels {
        let j = &ch.op;
        let jd = j.adjoint();
        let jdj = &jd * j;
        out += (j * rho * &jd - (&jdj * rho + rho * &jdj) * C64::new(0.5, 0.0)) * C64::new(ch.rate, 0.0);
    }
    out
}

pub fn random_density(seed: u64) -> CMat {
    let mut rng = lindblad_core::rng::stream(seed ^ 0xABCD);
    let g = lindblad_core::rng::complex_gaussian(&mut rng, 4, 4);
    let m = &g * g.adjoint();
    let tr = m.trace();
    m / tr
}

/// Dormand–Prince 5(4) integration of `dv/dt = A v` with step control.
pub fn dopri_linear(a: &Mat16, v0: &lindblad_core::Vec16, t_end: f64, tol: f64) -> lindblad_core::Vec16 {
    use lindblad_core::Vec16;
    const C: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let mut t = 0.0;
    let mut v = *v0;
    let mut h = 1e-3;
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        let mut k = [Vec16::zeros(); 7];
        k[0] = a * v;
        for s in 0..6 {
            let mut y = v;
            for (r, kr) in k.iter().enumerate().take(s + 1) {
                y += kr * (h * C[s][r]);
            }
            k[s + 1] = a * y;
        }
        let mut y5 = v;
        let mut y4 = v;
        for s in 0..7 {
            y5 += k[s] * (h * B5[s]);
            y4 += k[s] * (h * B4[s]);
        }
        let err = (y5 - y4).amax();
        if err <= tol {
            t += h;
            v = y5;
        }
        let factor = if err == 0.0 { 2.0 } else { 0.9 * (tol / err).powf(0.2) };
        h *= factor.clamp(0.2, 2.0);
    }
    v
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a − b| / max(|a|, |b|)` over components where either exceeds
/// `floor`, with the number of components compared.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut n = 0;
    for (x, y) in a.iter().zip(b) {
        let scale = x.abs().max(y.abs());
        if scale > floor {
            worst = worst.max((x - y).abs() / scale);
            n += 1;
        }
    }
    (worst, n)
}

/// Random parameters with entries `N(0, scale)`.
pub fn random_params(seed: u64, scale: f64) -> lindblad_core::generator::GeneratorParams {
    lindblad_core::trainer::random_init(scale, seed)
}

/// Random batch: random initial states and unrelated random targets at
/// grid times in `[0, t_max]`.
pub fn random_batch(seed: u64, n: usize, trajs: usize, dt: f64, t_max: f64) -> Vec<lindblad_core::trainer::Sample> {
    use lindblad_core::basis::rho_to_coherence;
    use lindblad_core::dynamics::random_density_matrix;
    use lindblad_core::trainer::{context, Sample};
    use rand::Rng;
    let basis = &context().basis;
    let mut rng = lindblad_core::rng::stream(seed);
    let v0s: Vec<_> = (0..trajs)
        .map(|k| rho_to_coherence(&random_density_matrix(seed * 1000 + k as u64), basis).0)
        .collect();
    (0..n)
        .map(|i| {
            let traj = i % trajs;
            let step = (rng.random::<f64>() * t_max / dt).round();
            let target = rho_to_coherence(&random_density_matrix(seed * 1000 + 500 + i as u64), basis).0;
            Sample { traj_id: traj, t: step * dt, v0: v0s[traj], target }
        })
        .collect()
}
