mod common;

use lindblad_core::basis::{build_basis, rho_to_coherence, structure_constants, DensityMatrix};
use lindblad_core::generator::{
    benchmark_model, build_kossakowski, ground_truth_l, lindblad_from_params, GeneratorParams,
    JumpOperatorSet,
};
use lindblad_core::{CMat, C64};
use rand::Rng;

fn random_params(seed: u64) -> GeneratorParams {
    let mut rng = lindblad_core::rng::stream(seed);
    let flat: Vec<f64> = (0..GeneratorParams::LEN).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    GeneratorParams::from_flat(&flat).unwrap()
}

#[test]
fn structure_constant_formulas_match_dense_superoperator() {
    let basis = build_basis();
    let sc = structure_constants(&basis).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let p = random_params(seed);
        let fast = lindblad_from_params(&p, &sc).total();
        let h = basis.combine(
            &std::iter::once(C64::new(0.0, 0.0))
                .chain(p.theta_h.iter().map(|&x| C64::new(x, 0.0)))
                .collect::<Vec<_>>(),
        );
        let c = build_kossakowski(&p.theta_x, &p.theta_y);
        let slow = common::brute_force_generator(&h, &c.0, &basis);
        worst = worst.max((fast - slow).amax());
    }
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

#[test]
fn benchmark_generator_matches_direct_master_equation() {
    let basis = build_basis();
    let sc = structure_constants(&basis).unwrap();
    let spec = benchmark_model(1.0, 0.5, 0.01, 0.05);
    let l = ground_truth_l(&spec, &basis, &sc).total();
    for seed in 0..20 {
        let rho = common::random_density(seed);
        let v = rho_to_coherence(&DensityMatrix(rho.clone()), &basis).0;
        let drho = common::direct_rhs(&spec, &rho);
        let dv = rho_to_coherence(&DensityMatrix(drho), &basis).0;
        assert!((l * v - dv).amax() < 1e-12, "seed {seed}");
    }
}

#[test]
fn jump_operators_with_identity_parts_shift_the_hamiltonian() {
    let basis = build_basis();
    let sc = structure_constants(&basis).unwrap();
    let mut rng = lindblad_core::rng::stream(77);
    let mut spec = JumpOperatorSet::new(CMat::zeros(4, 4));
    for _ in 0..3 {
        let mut j = lindblad_core::rng::complex_gaussian(&mut rng, 4, 4);
        j += CMat::identity(4, 4) * C64::new(rng.random::<f64>(), rng.random::<f64>());
        spec = spec.with_jump(j);
    }
    let l = ground_truth_l(&spec, &basis, &sc).total();
    for seed in 0..20 {
        let rho = common::random_density(100 + seed);
        let v = rho_to_coherence(&DensityMatrix(rho.clone()), &basis).0;
        let dv = rho_to_coherence(&DensityMatrix(common::direct_rhs(&spec, &rho)), &basis).0;
        assert!((l * v - dv).amax() < 1e-11);
    }
}
