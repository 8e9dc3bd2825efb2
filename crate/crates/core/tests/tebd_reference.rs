use lindblad_core::basis::build_basis;
use lindblad_core::dynamics::{evolve_chain_dense, haar_random_two_qubit_unitary, make_initial_state, ChainSpec, TrajectorySpec};
use lindblad_core::tebd::{evolve_chain_tebd, make_initial_mps, Truncation};
use lindblad_core::Vec16;

fn max_deviation(a: &[Vec16], b: &[Vec16]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

#[test]
fn tebd_agrees_with_dense_ring() {
    let basis = build_basis();
    let spec = ChainSpec::ring(8, 1.0, 0.5);
    let traj = TrajectorySpec { t_total: 10.0, dt: 0.01, seed: 0, n_trajectories: 1 };
    let u = haar_random_two_qubit_unitary(17);
    let dense = evolve_chain_dense(&spec, &make_initial_state(&spec, &u), &traj, &basis).unwrap();
    let trunc = Truncation { chi_max: 256, eps_svd: 1e-10 };
    let run = evolve_chain_tebd(&spec, &make_initial_mps(8, &u, trunc), &traj, &basis).unwrap();
    let dev = max_deviation(&dense, &run.states);
    assert!(dev < 1e-6, "max deviation {dev}");
    for (w, n) in run.discarded.iter().zip(&run.norm_sqr_before_renorm) {
        assert!((1.0 - n - w).abs() < 1e-12 + w * w * 100.0);
    }
}

#[test]
fn open_chain_agrees_with_dense() {
    let basis = build_basis();
    let spec = ChainSpec { length: 7, omega: 1.0, v: 1.3, periodic: false };
    let traj = TrajectorySpec { t_total: 3.0, dt: 0.01, seed: 0, n_trajectories: 1 };
    let u = haar_random_two_qubit_unitary(5);
    let dense = evolve_chain_dense(&spec, &make_initial_state(&spec, &u), &traj, &basis).unwrap();
    let run = evolve_chain_tebd(&spec, &make_initial_mps(7, &u, Truncation::default()), &traj, &basis).unwrap();
    assert!(max_deviation(&dense, &run.states) < 1e-8);
}

#[test]
fn bond_dimension_ladder_converges() {
    let basis = build_basis();
    let spec = ChainSpec::ring(10, 1.0, 0.5);
    let traj = TrajectorySpec { t_total: 3.0, dt: 0.01, seed: 0, n_trajectories: 1 };
    let u = haar_random_two_qubit_unitary(23);
    let dense = evolve_chain_dense(&spec, &make_initial_state(&spec, &u), &traj, &basis).unwrap();
    let mut errors = Vec::new();
    for chi in [4usize, 8, 16, 64] {
        let trunc = Truncation { chi_max: chi, eps_svd: 1e-12 };
        match evolve_chain_tebd(&spec, &make_initial_mps(10, &u, trunc), &traj, &basis) {
            Ok(run) => errors.push(max_deviation(&dense, &run.states)),
            Err(_) => errors.push(f64::INFINITY),
        }
    }
    for pair in errors.windows(2) {
        assert!(pair[1] <= pair[0] * 1.0001 + 1e-9, "{errors:?}");
    }
    assert!(*errors.last().unwrap() < 1e-6, "{errors:?}");
}
