use kbr::pde::{run_simulation, Problem, SolverConfig};

#[test]
fn kbr_schemes_conserve_and_stay_bounded() {
    for p in [Problem::BurgersMaccormackKbr, Problem::SodRoeKbr] {
        let sim = run_simulation(p, &SolverConfig::default()).unwrap();
        assert!(sim.max_conservation_residual() <= 1e-10, "{p}: {:e}", sim.max_conservation_residual());
        assert!(sim.growth <= 10.0, "{p}: growth {}", sim.growth);
        assert!((sim.final_state().time - p.default_t_end()).abs() < 1e-12);
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = SolverConfig { max_steps: Some(40), ..Default::default() };
    let a = run_simulation(Problem::SodRoeKbr, &cfg).unwrap();
    let b = run_simulation(Problem::SodRoeKbr, &cfg).unwrap();
    assert_eq!(a.final_state().comps, b.final_state().comps);
    assert_eq!(a.retrains, b.retrains);
}

#[test]
fn classical_schemes_keep_sod_positive() {
    for p in [Problem::SodRoe, Problem::SodMuscl] {
        let sim = run_simulation(p, &SolverConfig::default()).unwrap();
        assert!(sim.snapshots.iter().all(|s| s.primitives().iter().all(|q| q.is_physical())), "{p}");
    }
}
