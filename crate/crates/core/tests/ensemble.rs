use scatfluct::ensemble::{
    detailed_balance_check, heat_exchange_ft_check, stochastic_matrix, unconditioned_distribution, unconditioned_dual,
    ParticleEnergyDistribution, QuadratureSettings,
};
use scatfluct::error::Error;
use scatfluct::fluct::verify_fluctuation_relation;
use scatfluct::kraus::TransitionTable;
use scatfluct::model::{all_ones_offdiag, gap_structure, thermal_state, Profile, Shape, SystemSpec};
use scatfluct::solver::{Scatterer, SolverSettings};

fn thermal(beta_tilde: f64, nodes: usize, check: bool) -> ParticleEnergyDistribution {
    let q = QuadratureSettings {
        nodes,
        check_convergence: check,
        ..Default::default()
    };
    ParticleEnergyDistribution::thermal(beta_tilde).unwrap().with_quadrature(q).unwrap()
}

#[test]
fn thermal_two_level_converges_under_node_doubling() {
    let sc = Scatterer::new(SystemSpec::benchmark(2).unwrap(), SolverSettings::default()).unwrap();
    let s = stochastic_matrix(&sc, &thermal(0.5, 200, true)).unwrap();
    assert!(s.column_residual() < 1e-9);
    assert!(detailed_balance_check(&s, sc.spec(), 0.5).unwrap() < 1e-9);
}

#[test]
fn unconverged_quadrature_is_reported() {
    let sc = Scatterer::new(SystemSpec::benchmark(2).unwrap(), SolverSettings::default().with_slices(200)).unwrap();
    let err = stochastic_matrix(&sc, &thermal(0.5, 4, true)).unwrap_err();
    assert!(matches!(err, Error::QuadratureConvergence { .. }));
}

#[test]
fn skewed_profile_with_equal_direction_weights_satisfies_detailed_balance() {
    let spec = SystemSpec::ladder(3, 1.0, all_ones_offdiag(3), Profile::new(60.0, 1.0, Shape::Skewed)).unwrap();
    let sc = Scatterer::new(spec.clone(), SolverSettings::default().with_slices(500)).unwrap();
    let s = stochastic_matrix(&sc, &thermal(1.0, 150, false)).unwrap();
    assert!(detailed_balance_check(&s, &spec, 1.0).unwrap() < 1e-9);
    let one_sided = thermal(1.0, 150, false).with_direction_weight(1.0).unwrap();
    let s1 = stochastic_matrix(&sc, &one_sided).unwrap();
    assert!(matches!(detailed_balance_check(&s1, &spec, 1.0), Err(Error::Inapplicable(_))));
}

#[test]
fn heat_exchange_residual_is_controlled_by_detailed_balance() {
    // perturb a balanced matrix and check that the heat-exchange residual
    // stays within a fixed multiple of the detailed-balance residual
    let spec = SystemSpec::benchmark(3).unwrap();
    let sc = Scatterer::new(spec.clone(), SolverSettings::default().with_slices(300)).unwrap();
    let s = stochastic_matrix(&sc, &thermal(0.5, 150, false)).unwrap();
    let th = thermal_state(&spec, 0.1).unwrap();
    for k in 0..6 {
        let eps = 1e-3 * k as f64;
        let mut p = s.clone();
        p.table[(2, 0)] += eps;
        p.table[(0, 0)] -= eps;
        let db = detailed_balance_check(&p, &spec, 0.5).unwrap();
        let h4 = heat_exchange_ft_check(&p, &spec, &th, 0.5).unwrap();
        assert!(h4 <= 2.0 * db + 1e-12, "db {db:e} h4 {h4:e}");
    }
}

#[test]
fn unconditioned_relation_with_renormalized_columns() {
    let spec = SystemSpec::benchmark(2).unwrap();
    let sc = Scatterer::new(spec.clone(), SolverSettings::default()).unwrap();
    let s = stochastic_matrix(&sc, &thermal(1.0, 100, false)).unwrap().renormalized();
    let th = thermal_state(&spec, 0.1).unwrap();
    let gaps = gap_structure(&spec, 0.1).unwrap();
    let p = unconditioned_distribution(&s, &th, &gaps).unwrap();
    let d = unconditioned_dual(&s, &th).unwrap();
    assert!(verify_fluctuation_relation(&p, &d, 0.1).unwrap() < 1e-8);
    assert!((p.weight_at(-1.0) - s.table[(0, 1)] * th.populations[1]).abs() < 1e-15);
    assert!((p.total_mass() - 1.0).abs() < 1e-9);
}

#[test]
fn tabulated_profile_is_weighted_sum_of_deltas() {
    let spec = SystemSpec::benchmark(2).unwrap();
    let sc = Scatterer::new(spec, SolverSettings::default().with_slices(300)).unwrap();
    let tab = ParticleEnergyDistribution::tabulated(vec![0.7, 2.2], vec![0.25, 0.75]).unwrap();
    let s = stochastic_matrix(&sc, &tab).unwrap();
    let a = stochastic_matrix(&sc, &ParticleEnergyDistribution::delta(0.7).unwrap()).unwrap();
    let b = stochastic_matrix(&sc, &ParticleEnergyDistribution::delta(2.2).unwrap()).unwrap();
    assert!((&s.table - (&a.table * 0.25 + &b.table * 0.75)).amax() < 1e-15);
}
