use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatfluct::kraus::{apply_map, eigenoperators, map_on_identity, transition_probabilities, TransitionTable};
use scatfluct::model::SystemSpec;
use scatfluct::solver::{CMatrix, Direction, Scatterer, SolverSettings};

fn scatterer(n: usize) -> Scatterer {
    Scatterer::new(SystemSpec::benchmark(n).unwrap(), SolverSettings::default()).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

#[test]
fn completeness_on_benchmark() {
    let sc = scatterer(2);
    for alpha in Direction::BOTH {
        let e = eigenoperators(&sc, 2.0, alpha).unwrap();
        assert!(e.completeness_residual() < 1e-8);
    }
}

#[test]
fn columns_are_stochastic_with_closed_channel_zeros() {
    let sc = scatterer(2);
    for &ep in &[0.5, 2.0, 10.0] {
        for alpha in Direction::BOTH {
            let tp = transition_probabilities(&eigenoperators(&sc, ep, alpha).unwrap());
            assert!(tp.column_residual() < 1e-8);
            assert!(tp.table.iter().all(|p| (0.0..=1.0 + 1e-12).contains(p)));
            let levels = sc.spec().levels();
            for j in 0..2 {
                for jo in 0..2 {
                    if ep + levels[j] <= levels[jo] {
                        assert_eq!(tp.table[(jo, j)], 0.0);
                    }
                }
            }
        }
    }
}

#[test]
fn map_preserves_trace_and_positivity() {
    let sc = scatterer(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for &ep in &[0.4, 2.3, 7.7] {
        let e = eigenoperators(&sc, ep, Direction::Minus).unwrap();
        for _ in 0..5 {
            let out = apply_map(&e, &random_state(&mut rng, 3)).unwrap();
            assert!((out.trace() - Complex64::new(1.0, 0.0)).norm() < 1e-10);
            assert!((&out - out.adjoint()).iter().all(|z| z.norm() < 1e-12));
            let min = nalgebra::SymmetricEigen::new(out).eigenvalues.min();
            assert!(min > -1e-10);
        }
    }
}

#[test]
fn diagonal_input_evolves_by_transition_table() {
    let sc = scatterer(3);
    let e = eigenoperators(&sc, 2.3, Direction::Plus).unwrap();
    let tp = transition_probabilities(&e);
    let pops = [0.5, 0.3, 0.2];
    let rho = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, pops.iter().map(|&p| Complex64::new(p, 0.0))));
    let out = apply_map(&e, &rho).unwrap();
    for jo in 0..3 {
        let expected: f64 = (0..3).map(|j| tp.table[(jo, j)] * pops[j]).sum();
        assert!((out[(jo, jo)].re - expected).abs() < 1e-14);
    }
}

#[test]
fn coherences_keep_their_gap() {
    // with levels -1, 0, 1 the coherence |0><1| (gap -1) may only feed gap -1 coherences
    let sc = scatterer(3);
    let e = eigenoperators(&sc, 2.3, Direction::Plus).unwrap();
    let c = Complex64::new(0.1, 0.05);
    let mut rho = CMatrix::from_diagonal(&nalgebra::DVector::from_element(3, Complex64::new(1.0 / 3.0, 0.0)));
    rho[(0, 1)] = c;
    rho[(1, 0)] = c.conj();
    let out = apply_map(&e, &rho).unwrap();
    assert!(out[(0, 2)].norm() < 1e-15 && out[(2, 0)].norm() < 1e-15);
}

#[test]
fn image_of_identity_below_gap() {
    let sc = scatterer(2);
    let e = eigenoperators(&sc, 0.5, Direction::Plus).unwrap();
    let tp = transition_probabilities(&e);
    let id = map_on_identity(&e);
    let p01 = tp.table[(0, 1)];
    assert!(p01 > 1e-6);
    assert!((id[(0, 0)].re - (1.0 + p01)).abs() < 1e-10);
    assert!((id[(1, 1)].re - tp.table[(1, 1)]).abs() < 1e-10);
    assert!(id[(0, 1)].norm() < 1e-12);
    // generically non-unital while trace preserving
    assert!((id[(0, 0)].re - 1.0).abs() > 1e-6);
    assert!(e.completeness_residual() < 1e-8);
}

#[test]
fn reversed_process_is_the_transpose() {
    // the operator for the reversed transition, with directions swapped and
    // kinetic energy lowered by the gap, equals the transpose of the forward one
    let sc = scatterer(3);
    let ep = 3.4;
    for alpha in Direction::BOTH {
        let fwd = eigenoperators(&sc, ep, alpha).unwrap();
        for k in &fwd.operators {
            if ep - k.delta <= 0.0 {
                continue;
            }
            let back = eigenoperators(&sc, ep - k.delta, k.out_direction.flip()).unwrap();
            let r = back.operator(-k.delta, alpha.flip(), 1e-9).unwrap();
            let d: f64 = (&r.matrix - k.matrix.transpose()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(d < 1e-8, "delta {} alpha {alpha}: {d:e}", k.delta);
        }
    }
}

#[test]
fn free_potential_is_identity_map() {
    let sc = Scatterer::new(SystemSpec::benchmark(2).unwrap().free(), SolverSettings::default().with_slices(4)).unwrap();
    let tp = transition_probabilities(&eigenoperators(&sc, 1.3, Direction::Plus).unwrap());
    assert!((tp.table - DMatrix::identity(2, 2)).amax() < 1e-12);
}
