use super::*;
use crate::quantum::{atomic_operator, embed, expectation, fock_annihilation, fock_number, HilbertSpace, Level};
use proptest::prelude::*;

type C = Complex<f64>;

const KAPPA: f64 = std::f64::consts::TAU * 0.068e6;

fn two_level(delta: f64, omega: f64, gamma: f64) -> LindbladGenerator<f64> {
    let space = HilbertSpace::single(2).unwrap();
    let h = CMatrix::from_vec(2, 2, vec![C::new(0.0, 0.0), C::new(omega, 0.0), C::new(omega, 0.0), C::new(delta, 0.0)]);
    let mut lower = CMatrix::zeros(2, 2);
    lower[(0, 1)] = C::new(1.0, 0.0);
    let ch = CollapseChannel::new(Operator::new(space.clone(), lower).unwrap(), gamma).unwrap();
    LindbladGenerator::new(Operator::new(space, h).unwrap(), vec![ch], 0.0, None).unwrap()
}

/// Empty cavity with the field decay rate κ emitted as the channel `(a, 2κ)`.
fn cavity(n_max: usize, eta: f64, detuning: f64, delta_n: f64) -> LindbladGenerator<f64> {
    let a = fock_annihilation::<f64>(n_max).unwrap();
    let num = fock_number::<f64>(n_max).unwrap();
    let mut h = num.scale(detuning);
    h.add_scaled(eta, &a.add(&a.adjoint()).unwrap()).unwrap();
    let ch = CollapseChannel::new(a.clone(), 2.0 * KAPPA).unwrap();
    LindbladGenerator::new(h, vec![ch], delta_n, Some(a)).unwrap()
}

fn vacuum(n_max: usize) -> DensityMatrix<f64> {
    DensityMatrix::basis(HilbertSpace::single(n_max + 1).unwrap(), 0).unwrap()
}

fn random_state(seed: u64, d: usize) -> DensityMatrix<f64> {
    // ρ = M M† / Tr(M M†)
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s % 10_000) as f64 / 5_000.0 - 1.0
    };
    let m = CMatrix::from_fn(d, d, |_, _| C::new(next(), next()));
    let mm = m.matmul(&m.adjoint());
    let tr = mm.trace().re;
    DensityMatrix::new(HilbertSpace::single(d).unwrap(), mm.scale_real(1.0 / tr)).unwrap()
}

fn random_generator(seed: u64, n_max: usize) -> LindbladGenerator<f64> {
    let g = cavity(n_max, 0.7 * KAPPA, 0.3 * KAPPA, 0.2 * KAPPA);
    let d = n_max + 1;
    let extra = random_state(seed, d).into_matrix().scale_real(KAPPA);
    let op = Operator::new(HilbertSpace::single(d).unwrap(), extra).unwrap();
    let mut h = g.hamiltonian().clone();
    h.add_scaled(1.0, &op).unwrap();
    LindbladGenerator::new(h, g.channels().to_vec(), g.incoherent_rate(), g.incoherent_mode().cloned()).unwrap()
}

#[test]
fn zero_generator_gives_zero_derivative() {
    let space = HilbertSpace::single(5).unwrap();
    let gen = LindbladGenerator::unitary(Operator::<f64>::zero(&space)).unwrap();
    let rho = random_state(3, 5);
    assert_eq!(lindblad_rhs(&gen, &rho).unwrap().max_abs(), 0.0);
}

#[test]
fn incoherent_drive_expands_to_decay_plus_excitation() {
    let n_max = 6;
    let (dn, eta) = (0.37 * KAPPA, 0.0);
    let gen = cavity(n_max, eta, 0.0, dn);
    let rho = random_state(11, n_max + 1);
    let got = lindblad_rhs(&gen, &rho).unwrap();

    let a = fock_annihilation::<f64>(n_max).unwrap().into_matrix();
    let ad = a.adjoint();
    let r = rho.matrix();
    let prod = |x: &CMatrix<f64>, y: &CMatrix<f64>, z: &CMatrix<f64>| x.matmul_dense(y).matmul_dense(z);
    // (κ+δn)(2aρa† − ρa†a − a†aρ) + δn(2a†ρa − ρaa† − aa†ρ)
    let mut decay = prod(&a, r, &ad).scale_real(2.0);
    decay = &decay - &prod(r, &ad, &a);
    decay = &decay - &prod(&ad, &a, r);
    let mut excite = prod(&ad, r, &a).scale_real(2.0);
    excite = &excite - &prod(r, &a, &ad);
    excite = &excite - &prod(&a, &ad, r);
    let want = &decay.scale_real(KAPPA + dn) + &excite.scale_real(dn);
    assert!(got.max_abs_diff(&want) < 1e-12 * KAPPA);
}

#[test]
fn two_level_decay_matches_exponential() {
    let gamma = 1.0e6;
    let gen = two_level(0.0, 0.0, gamma);
    let rho0 = DensityMatrix::basis(HilbertSpace::single(2).unwrap(), 1).unwrap();
    let t = 1.0 / gamma;
    let rho = evolve(&gen, &rho0, t, 1e-9).unwrap();
    let excited = rho.matrix()[(1, 1)].re;
    let want = (-1.0f64).exp();
    assert!(((excited - want) / want).abs() < 1e-6, "{excited} vs {want}");
}

#[test]
fn driven_cavity_reaches_coherent_steady_state() {
    let n_max = 9;
    let gen = cavity(n_max, KAPPA, 0.0, 0.0);
    let rho = evolve(&gen, &vacuum(n_max), 10.0 / KAPPA, default_step(&gen)).unwrap();
    let n = expectation(&rho, &fock_number(n_max).unwrap()).unwrap().re;
    // η²/(κ² + Δ²) with Δ = 0
    assert!((n - 1.0).abs() < 0.01, "⟨n⟩ = {n}");
}

#[test]
fn incoherent_drive_reaches_bose_einstein_distribution() {
    let n_max = 30;
    let dn = 0.5 * KAPPA;
    let gen = cavity(n_max, 0.0, 0.0, dn);
    let rho = evolve(&gen, &vacuum(n_max), 10.0 / KAPPA, default_step(&gen)).unwrap();
    let nbar = dn / KAPPA;
    let ratio = nbar / (1.0 + nbar);
    for n in 0..=15 {
        let want = ratio.powi(n) / (1.0 + nbar);
        let got = rho.matrix()[(n as usize, n as usize)].re;
        assert!(((got - want) / want).abs() < 0.01, "p({n}) = {got}, want {want}");
    }
}

#[test]
fn rejects_steps_that_alias_the_fastest_frequency() {
    let gen = two_level(2.0e8, 1.0e6, 1.0e6);
    let rho0 = DensityMatrix::basis(HilbertSpace::single(2).unwrap(), 0).unwrap();
    assert!(matches!(evolve(&gen, &rho0, 1e-6, 1e-9), Err(Error::StepTooLarge { .. })));
    assert!(evolve(&gen, &rho0, 1e-6, 2.4e-10).is_ok());
    assert!(matches!(evolve(&gen, &rho0, 1e-6, 0.0), Err(Error::InvalidParameter(_))));
    assert!(matches!(evolve(&gen, &rho0, -1.0, 1e-10), Err(Error::InvalidParameter(_))));
    assert!((default_step(&gen) - 1e-10).abs() < 1e-22);
}

#[test]
fn propagator_route_equals_explicit_stepping() {
    let gen = two_level(1.0, 0.8, 0.3);
    let s = 0.5f64.sqrt();
    let rho0 = DensityMatrix::pure(HilbertSpace::single(2).unwrap(), &[C::new(s, 0.0), C::new(0.0, s)]).unwrap();
    let a = evolve(&gen, &rho0, 3.7, 0.01).unwrap();
    let b = evolve_stepwise(&gen, &rho0, 3.7, 0.01).unwrap();
    assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-12);

    let gen = random_generator(5, 4);
    let rho0 = random_state(9, 5);
    let t = 0.4 / KAPPA;
    let a = evolve(&gen, &rho0, t, 1e-9).unwrap();
    let b = evolve_stepwise(&gen, &rho0, t, 1e-9).unwrap();
    assert!(a.matrix().max_abs_diff(b.matrix()) < 1e-10);
}

#[test]
fn rk4_error_shrinks_sixteenfold_when_halving_the_step() {
    let gen = two_level(1.0, 1.0, 0.3);
    let rho0 = DensityMatrix::basis(HilbertSpace::single(2).unwrap(), 0).unwrap();
    let t = 5.0;
    let pop = |h: f64| evolve(&gen, &rho0, t, h).unwrap().matrix()[(1, 1)].re;
    let reference = pop(0.04 / 64.0);
    let e1 = (pop(0.04) - reference).abs();
    let e2 = (pop(0.02) - reference).abs();
    let ratio = e1 / e2;
    assert!((14.0..18.5).contains(&ratio), "error ratio {ratio}");
    assert!(e2 / reference < 1e-6);
}

#[test]
fn evolution_preserves_invariants_over_100_microseconds() {
    let gen = cavity(9, 1.3 * KAPPA, 0.2 * KAPPA, 0.4 * KAPPA);
    let rho = evolve(&gen, &vacuum(9), 100e-6, default_step(&gen)).unwrap();
    let diag = rho.diagnostics();
    assert!(diag.trace_error <= 1e-8);
    assert!(diag.hermiticity_error <= 1e-10);
    assert!(diag.min_eigenvalue >= -1e-8);
}

#[test]
fn steady_state_of_pure_decay_is_the_ground_state() {
    let gen = two_level(0.0, 0.0, 1.0e6);
    let ss = steady_state(&gen, 1e-3, 1e-12).unwrap();
    assert!(ss.settled);
    assert!(ss.state.matrix()[(0, 0)].re > 1.0 - 1e-6);
}

#[test]
fn steady_state_agrees_with_long_evolution_and_lorentzian() {
    let n_max = 9;
    let tol = 1e-9;
    let gen = cavity(n_max, KAPPA, 0.0, 0.0);
    let loose = 1e-3;
    let ss = steady_state_from(&gen, &vacuum(n_max), 1e-3, loose).unwrap();
    assert!(ss.settled);
    let num = fock_number(n_max).unwrap();
    let n_ss = expectation(&ss.state, &num).unwrap().re;
    let n_ev = expectation(&evolve(&gen, &vacuum(n_max), 10.0 / KAPPA, 1e-9).unwrap(), &num).unwrap().re;
    assert!((n_ss - n_ev).abs() < loose, "{n_ss} vs {n_ev}");

    // Δ_CL = κ halves the occupation: η²/(κ² + κ²).
    let gen = cavity(n_max, KAPPA, KAPPA, 0.0);
    let ss = steady_state(&gen, 1e-3, tol).unwrap();
    assert!(ss.settled);
    let n = expectation(&ss.state, &num).unwrap().re;
    assert!((n - 0.5).abs() < 1e-5, "⟨n⟩ = {n}");
}

#[test]
fn steady_state_flags_an_unreached_horizon() {
    let gen = cavity(5, KAPPA, 0.0, 0.0);
    let ss = steady_state_from(&gen, &vacuum(5), 1.0 / KAPPA, 1e-12).unwrap();
    assert!(!ss.settled);
    assert!(ss.last_change > 1e-12);
    let space = HilbertSpace::single(2).unwrap();
    let closed = LindbladGenerator::unitary(Operator::<f64>::zero(&space)).unwrap();
    assert!(steady_state(&closed, 1.0, 1e-6).is_err());
}

#[test]
fn sinks_reproduce_traces_of_the_full_evolution() {
    // Atom–cavity toy: P decays to S; the S block is declared a sink.
    let space = HilbertSpace::atom_cavity(2);
    let a = embed(&space, &fock_annihilation::<f64>(2).unwrap(), 1).unwrap();
    let sigma = |from, to| atomic_operator::<f64>(&space, from, to).unwrap();
    let g = 3.0 * KAPPA;
    let mut h = sigma(Level::P, Level::P).scale(20.0 * KAPPA);
    h.add_scaled(g, &sigma(Level::D, Level::P).mul(&a).unwrap()).unwrap();
    h.add_scaled(g, &sigma(Level::P, Level::D).mul(&a.adjoint()).unwrap()).unwrap();
    h.add_scaled(KAPPA, &a.add(&a.adjoint()).unwrap()).unwrap();
    let channels = vec![
        CollapseChannel::new(sigma(Level::P, Level::S), 5.0 * KAPPA).unwrap(),
        CollapseChannel::new(a.clone(), 2.0 * KAPPA).unwrap(),
    ];
    let gen = LindbladGenerator::new(h, channels, 0.1 * KAPPA, Some(a)).unwrap();

    let d = space.dim();
    let mut psi = vec![C::new(0.0, 0.0); d];
    let s = 0.5f64.sqrt();
    psi[0] = C::new(s, 0.0); // |S,0⟩
    psi[3] = C::new(0.0, -s); // |D,0⟩
    let rho0 = DensityMatrix::pure(space.clone(), &psi).unwrap();

    let n = 3;
    let s_block: Vec<usize> = (0..n).flat_map(|i| (0..n).map(move |j| i * d + j)).collect();
    let reduced = ReducedSystem::new(&gen, rho0.matrix(), &[s_block]).unwrap();
    let full = ReducedSystem::new(&gen, rho0.matrix(), &[]).unwrap();
    assert!(reduced.real_dimension() < full.real_dimension());

    let (h, steps) = (1e-9, 1500);
    let r = reduced.evolve(rho0.matrix(), h, steps).unwrap();
    let f = full.evolve(rho0.matrix(), h, steps).unwrap();
    let s_trace: f64 = (0..n).map(|i| f.matrix()[(i, i)].re).sum();
    assert!((r.sink_trace(0) - s_trace).abs() < 1e-12);
    assert!((r.total_trace() - 1.0).abs() < 1e-10);
    // Coherences between S and D are tracked and identical.
    assert!((r.matrix()[(0, 3)] - f.matrix()[(0, 3)]).norm() < 1e-12);
    // D population too.
    assert!((r.matrix()[(4, 4)] - f.matrix()[(4, 4)]).norm() < 1e-12);
}

#[test]
fn sinks_that_feed_tracked_entries_are_rejected() {
    let gen = two_level(1.0, 0.5, 0.1);
    let rho0 = DensityMatrix::basis(HilbertSpace::single(2).unwrap(), 0).unwrap();
    let err = ReducedSystem::new(&gen, rho0.matrix(), &[vec![0]]).unwrap_err();
    assert!(matches!(err, Error::Subspace(_)));
}

#[test]
fn single_precision_decay() {
    let space = HilbertSpace::single(2).unwrap();
    let mut lower = CMatrix::<f32>::zeros(2, 2);
    lower[(0, 1)] = Complex::new(1.0, 0.0);
    let ch = CollapseChannel::new(Operator::new(space.clone(), lower).unwrap(), 1.0e6f32).unwrap();
    let gen = LindbladGenerator::new(Operator::zero(&space), vec![ch], 0.0, None).unwrap();
    let rho0 = DensityMatrix::basis(space, 1).unwrap();
    let rho = evolve(&gen, &rho0, 1e-6f32, 1e-9).unwrap();
    assert!((rho.matrix()[(1, 1)].re - (-1.0f32).exp()).abs() < 1e-4);
}

proptest! {
    #[test]
    fn rhs_is_traceless_and_hermitian(seed in 0u64..1000) {
        let gen = random_generator(seed, 5);
        let rho = random_state(seed + 1, 6);
        let r = lindblad_rhs(&gen, &rho).unwrap();
        prop_assert!(r.trace().norm() < 1e-12 * KAPPA);
        prop_assert!(r.hermiticity_error() < 1e-12 * KAPPA);
    }

    #[test]
    fn rhs_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let gen = random_generator(seed, 4);
        let r1 = random_state(seed + 3, 5).into_matrix();
        let r2 = random_state(seed + 4, 5).into_matrix();
        let mix = &r1.scale_real(alpha) + &r2.scale_real(beta);
        let lhs = gen.apply(&mix).unwrap();
        let rhs = &gen.apply(&r1).unwrap().scale_real(alpha) + &gen.apply(&r2).unwrap().scale_real(beta);
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12 * KAPPA);
    }

    #[test]
    fn evolved_states_stay_physical(seed in 0u64..200) {
        let gen = random_generator(seed, 4);
        let rho = evolve(&gen, &random_state(seed + 9, 5), 3.0 / KAPPA, 1e-9).unwrap();
        let diag = rho.diagnostics();
        prop_assert!(diag.hermiticity_error <= 1e-10);
        prop_assert!(diag.trace_error <= 1e-8);
        prop_assert!(diag.min_eigenvalue >= -1e-8);
    }
}
