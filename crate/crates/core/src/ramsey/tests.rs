use std::f64::consts::PI;

use proptest::prelude::*;

use super::*;
use crate::model::{dispersive_shift, Drive, IonCavityParams};

fn params(mean_n: f64) -> IonCavityParams {
    let base = IonCavityParams::default();
    base.with_drive(Drive::from_mean(mean_n, 0.0, base.kappa).unwrap())
}

fn fast() -> RamseyOptions {
    RamseyOptions::with_backend(Backend::Eliminated)
}

fn fitted(p: &IonCavityParams, opts: &RamseyOptions, hint: f64) -> FringeFit {
    let f = simulate_fringe_with(p, &phase_grid(DEFAULT_POINTS), opts).unwrap();
    fit_fringe_with(&f, &FitOptions::free(hint)).unwrap()
}

fn synthetic(offset: f64, amplitude: f64, shift: f64, n: usize) -> Fringe {
    let x = phase_grid(n);
    let y = x.iter().map(|&v| offset + amplitude * (PI * (v - shift)).cos()).collect();
    Fringe::new(x, y, DEFAULT_TRIALS).unwrap()
}

#[test]
fn vacuum_fringe_extremes() {
    let f = simulate_fringe(&params(0.0), &[0.0, 0.5, 1.0, 1.5], &CoherenceModel::default()).unwrap();
    let coh = CoherenceModel::default();
    assert!((f.p_d()[0] - coh.b0 * (1.0 + coh.contrast_at_vacuum)).abs() < 1e-6);
    assert!((f.p_d()[0] - 0.98).abs() < 0.005);
    assert!((f.p_d()[2] - coh.b0 * (1.0 - coh.contrast_at_vacuum)).abs() < 1e-6);
    assert!((f.p_d()[1] - coh.b0).abs() < 1e-6);
}

#[test]
fn vacuum_fringe_is_symmetric() {
    let grid = [-0.75, -0.5, -0.25, 0.25, 0.5, 0.75];
    let f = simulate_fringe_with(&params(0.0), &grid, &fast()).unwrap();
    for k in 0..3 {
        assert!((f.p_d()[k] - f.p_d()[5 - k]).abs() < 1e-12);
    }
}

#[test]
fn excitation_stays_in_unit_interval() {
    for n in [0.0, 1.0, 3.0] {
        let f = simulate_fringe_with(&params(n), &phase_grid(21), &fast()).unwrap();
        assert!(f.p_d().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn pulse_matrix_is_unitary() {
    let r = PulseSpec { angle: 1.1, phase: 0.4 }.matrix();
    for i in 0..2 {
        for j in 0..2 {
            let dot: C64 = (0..2).map(|k| r[k][i].conj() * r[k][j]).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((dot - C64::new(want, 0.0)).norm() < 1e-14);
        }
    }
    assert!(PulseSpec { angle: 0.0, phase: 0.0 }.validate().is_err());
}

#[test]
fn dephasing_mode_matches_vacuum_contrast() {
    let mut opts = fast();
    opts.coherence.mode = CoherenceMode::Dephasing;
    let fit = fitted(&params(0.0), &opts, 0.0);
    assert!((fit.contrast - 0.99).abs() < 1e-3);
    assert!((fit.offset - 0.4915).abs() < 1e-3);
}

#[test]
fn exact_fringe_is_recovered() {
    let f = synthetic(0.45, 0.3, 0.37, 51);
    let fit = fit_fringe_with(&f, &FitOptions::default()).unwrap();
    assert!((fit.offset - 0.45).abs() < 1e-9);
    assert!((fit.amplitude - 0.3).abs() < 1e-9);
    assert!((fit.phase_shift - 0.37).abs() < 1e-9);
    assert!(fit.residual_sum_squares < 1e-20);
}

#[test]
fn pinned_offset_recovers_amplitude_and_phase() {
    let f = synthetic(0.45, 0.3, 1.2, 51);
    let opts = FitOptions { offset: OffsetMode::Pinned(0.45), phase_hint: 1.0, ..FitOptions::default() };
    let fit = fit_fringe_with(&f, &opts).unwrap();
    assert!(fit.offset_pinned);
    assert!((fit.amplitude - 0.3).abs() < 1e-9);
    assert!((fit.phase_shift - 1.2).abs() < 1e-9);
    assert_eq!(fit.covariance.len(), 2);
}

#[test]
fn fit_of_simulated_fringe_is_a_fixed_point() {
    let f = simulate_fringe_with(&params(0.8), &phase_grid(DEFAULT_POINTS), &fast()).unwrap();
    let first = fit_fringe_with(&f, &FitOptions::free(0.6)).unwrap();
    let model: Vec<f64> = f.phases().iter().map(|&x| first.eval(x)).collect();
    let again = Fringe::new(f.phases().to_vec(), model, f.trials()).unwrap();
    let second = fit_fringe_with(&again, &FitOptions::free(0.6)).unwrap();
    assert!((first.offset - second.offset).abs() < 1e-9);
    assert!((first.amplitude - second.amplitude).abs() < 1e-9);
    assert!((first.phase_shift - second.phase_shift).abs() < 1e-9);
}

#[test]
fn branch_follows_hint() {
    let f = synthetic(0.5, 0.4, 0.1, 51);
    let near = fit_fringe_with(&f, &FitOptions::free(0.0)).unwrap();
    assert!((near.phase_shift - 0.1).abs() < 1e-9);
    let far = fit_fringe_with(&f, &FitOptions::free(2.0)).unwrap();
    assert!((far.phase_shift - 2.1).abs() < 1e-9);
}

#[test]
fn negative_amplitude_is_canonicalized() {
    let f = synthetic(0.5, -0.4, 0.2, 51);
    let fit = fit_fringe_with(&f, &FitOptions::free(1.0)).unwrap();
    assert!(fit.amplitude > 0.0);
    assert!((fit.phase_shift - 1.2).abs() < 1e-9);
}

#[test]
fn degenerate_fringes_are_rejected() {
    let flat = Fringe::new(phase_grid(11), vec![0.3; 11], 250).unwrap();
    assert!(matches!(fit_fringe_with(&flat, &FitOptions::default()), Err(Error::Degenerate(_))));
    let x: Vec<f64> = (0..10).map(|k| 0.1 * k as f64).collect();
    let y = x.iter().map(|&v| 0.5 + 0.3 * (PI * v).cos()).collect();
    let short = Fringe::new(x, y, 250).unwrap();
    assert!(matches!(fit_fringe_with(&short, &FitOptions::default()), Err(Error::Degenerate(_))));
}

#[test]
fn recalculated_offset_formula() {
    let p = IonCavityParams::default();
    let coh = CoherenceModel::default();
    assert_eq!(recalculated_offset(0.0, &p, &coh), coh.b0);
    let n = 1.3;
    let b = p.branching();
    let (g, d) = (crate::TWO_PI * 0.968e6, crate::TWO_PI * 125e6);
    let pp = 2.0 * g * g * n / (b.to_d.powi(2) + d * d);
    let want = 0.4915 * (-b.to_s_prime * pp * n * 50e-6).exp();
    assert!((recalculated_offset(n, &p, &coh) - want).abs() < 1e-12);
}

#[test]
fn noise_keeps_certain_outcomes() {
    let x = phase_grid(8);
    let f = Fringe::new(x.clone(), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0], 250).unwrap();
    let s = sample_projection_noise(&f, 250, 3).unwrap();
    assert_eq!(s.p_d(), f.p_d());
    assert!(sample_projection_noise(&f, 0, 3).is_err());
}

#[test]
fn noise_mean_matches_probability() {
    let x = phase_grid(4);
    let f = Fringe::new(x, vec![0.3, 0.5, 0.7, 0.9], 250).unwrap();
    let draws = 10_000;
    let mut sum = [0.0; 4];
    for it in 0..draws {
        let s = sample_projection_noise_stream(&f, 250, 11, it).unwrap();
        for (acc, v) in sum.iter_mut().zip(s.p_d()) {
            *acc += v;
        }
    }
    for (k, (&p, total)) in f.p_d().iter().zip(sum).enumerate() {
        let se = (p * (1.0 - p) / 250.0 / draws as f64).sqrt();
        assert!((total / draws as f64 - p).abs() < 4.0 * se, "point {k}");
    }
}

#[test]
fn noise_is_deterministic_per_seed() {
    let f = Fringe::new(phase_grid(6), vec![0.5; 6], 250).unwrap();
    let a = sample_projection_noise(&f, 250, 42).unwrap();
    let b = sample_projection_noise(&f, 250, 42).unwrap();
    let c = sample_projection_noise(&f, 250, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.trials(), 250);
}

#[test]
fn csv_round_trip_is_lossless() {
    let f = Fringe::new(phase_grid(7), (0..7).map(|k| (k as f64 / 7.3).sin().abs()).collect(), 250).unwrap();
    let mut file = FringeFile::new(f.clone());
    file.exact = Some(f.p_d().iter().map(|v| v / 3.0).collect());
    file.comments = vec!["seed 7".into(), "config abc".into()];
    let mut buf = Vec::new();
    write_fringe_csv(&mut buf, &file).unwrap();
    let back = read_fringe_csv(buf.as_slice()).unwrap();
    assert_eq!(back, file);
}

#[test]
fn csv_errors_name_the_line() {
    let text = "phase_pi,p_D,trials\n0,0.5,250\n0.5,oops,250\n1,0.5,250\n1.5,0.5,250\n";
    let err = read_fringe_csv(text.as_bytes()).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
    let mixed = "phase_pi,p_D,trials\n0,0.5,250\n0.5,0.5,100\n";
    assert!(read_fringe_csv(mixed.as_bytes()).is_err());
    assert!(read_fringe_csv("a,b,c\n0,0,1\n".as_bytes()).is_err());
}

#[test]
fn eliminated_backend_tracks_full_model() {
    for n in [0.5, 1.0, 2.0] {
        let p = params(n);
        let grid = phase_grid(DEFAULT_POINTS);
        let full = simulate_fringe_with(&p, &grid, &RamseyOptions::default()).unwrap();
        let fast = simulate_fringe_with(&p, &grid, &fast()).unwrap();
        for (a, b) in full.p_d().iter().zip(fast.p_d()) {
            assert!((a - b).abs() <= 0.02 * a.max(0.05), "n = {n}: {a} vs {b}");
        }
    }
}

#[test]
fn readout_conserves_qubit_trace() {
    let r = readout(&params(1.0), &RamseyOptions::default()).unwrap();
    assert!((r.trace() - 1.0).abs() < 1e-10);
    assert!(r.rho_dark > 0.0);
    let state = interaction_state(&params(1.0), &RamseyOptions::default()).unwrap();
    let direct = Readout::from_state(state.matrix(), state.space());
    assert!((direct.rho_dd - r.rho_dd).abs() < 1e-9);
    assert!((direct.rho_sd - r.rho_sd).norm() < 1e-9);
}

#[test]
fn shift_grows_and_contrast_falls_with_photons() {
    let mut last: Option<FringeFit> = None;
    for n in [0.0, 0.4, 0.8, 1.2, 1.6] {
        let fit = fitted(&params(n), &fast(), 0.7 * n);
        if let Some(prev) = &last {
            assert!(fit.phase_shift > prev.phase_shift);
            assert!(fit.contrast < prev.contrast);
        }
        last = Some(fit);
    }
}

#[test]
fn shift_slope_matches_dispersive_estimate() {
    let p = IonCavityParams::default();
    let ideal = p.interaction_time * dispersive_shift(p.g, p.delta_pl).unwrap() / PI;
    let corrected = ideal * crate::model::build_up_factor(&p);
    let ns = [0.4, 0.8, 1.2, 1.6];
    let shifts: Vec<f64> = ns.iter().map(|&n| fitted(&params(n), &fast(), 0.7 * n).phase_shift).collect();
    let slope = ns.iter().zip(&shifts).map(|(n, s)| n * s).sum::<f64>() / ns.iter().map(|n| n * n).sum::<f64>();
    assert!((slope / corrected - 1.0).abs() < 0.05, "slope {slope} vs {corrected}");
}

fn ion_shift(p: &IonCavityParams, rabi: f64, opts: &RamseyOptions) -> FringeFit {
    let grid = phase_grid(DEFAULT_POINTS);
    let f = simulate_ion_drive_fringe(p, rabi, &grid, opts).unwrap();
    let guess = p.interaction_time * rabi * rabi / p.delta_pl / PI;
    fit_fringe_with(&f, &FitOptions::free(guess)).unwrap()
}

#[test]
fn ion_drive_keeps_more_contrast() {
    let opts = fast();
    for n in [0.4, 0.8, 1.2] {
        let p = params(n);
        let cavity = fitted(&p, &opts, 0.7 * n);
        // Secant search on the Rabi frequency for the same phase shift.
        let mut a = p.g * (0.5 * n).sqrt();
        let mut b = p.g * (1.2 * n).sqrt();
        let (mut fa, mut fb) = (
            ion_shift(&p, a, &opts).phase_shift - cavity.phase_shift,
            ion_shift(&p, b, &opts).phase_shift - cavity.phase_shift,
        );
        for _ in 0..20 {
            if fb.abs() < 1e-6 {
                break;
            }
            let c = b - fb * (b - a) / (fb - fa);
            (a, fa) = (b, fb);
            b = c;
            fb = ion_shift(&p, b, &opts).phase_shift - cavity.phase_shift;
        }
        assert!(fb.abs() < 1e-4);
        let ion = ion_shift(&p, b, &opts);
        assert!(ion.contrast >= cavity.contrast, "n = {n}: {} < {}", ion.contrast, cavity.contrast);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coherence_map_stays_in_range(p in 0.0f64..=1.0) {
        let coh = CoherenceModel::default();
        let v = coh.map(p);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!(v <= coh.b0 * (1.0 + coh.contrast_at_vacuum) + 1e-15);
    }

    #[test]
    fn fit_recovers_random_sinusoids(
        offset in 0.2f64..0.6,
        amp in 0.05f64..0.35,
        shift in -0.9f64..0.9,
    ) {
        let f = synthetic(offset, amp.min(offset), shift, 31);
        let fit = fit_fringe_with(&f, &FitOptions::free(0.0)).unwrap();
        prop_assert!((fit.offset - offset).abs() < 1e-8);
        prop_assert!((fit.amplitude - amp.min(offset)).abs() < 1e-8);
        prop_assert!((fit.phase_shift - shift).abs() < 1e-8);
    }

    #[test]
    fn noise_respects_trial_granularity(seed in any::<u64>(), trials in 1u32..500) {
        let f = Fringe::new(phase_grid(5), vec![0.1, 0.3, 0.5, 0.7, 0.9], trials).unwrap();
        let s = sample_projection_noise(&f, trials, seed).unwrap();
        for v in s.p_d() {
            let m = v * trials as f64;
            prop_assert!((m - m.round()).abs() < 1e-9);
        }
    }
}
