//! Acceptance suite: one test per quantitative criterion, each printing a
//! PASS/FAIL line. Run with `cargo test -p qfb-core --test acceptance --
//! --nocapture` to see the values.

mod common;

use std::time::Instant;

use qfb_core::cavity::{coherence_factors, evolve_pointer, signal_stats, CavityConfig, CoherenceFactors, SignalStats};
use qfb_core::entangle::pipeline::{
    build_meter, deterministic_branch, postselected_branch, run_parity_shots,
    ParityExperimentConfig,
};
use qfb_core::entangle::{
    concurrence, conditioned_parity_shot, feedback_entangle, log_negativity,
    unconditioned_parity_map, ParityShot, TwoQubitDensityMatrix,
};
use qfb_core::feedback::{
    predict_reset_error, run_repeated_init, run_reset, FeedbackProtocol, InitAlgorithm,
    InitialState, LoopTiming, TargetState,
};
use qfb_core::qubit_dynamics::{steady_state, TransitionRates};
use qfb_core::readout::bench::{
    analyze_initialization, run_initialization_shots, run_qnd_bench, run_rabi_sweep,
    JointShotModel, QndBenchConfig, TwoQubitBenchConfig,
};
use qfb_core::readout::{
    sigma_for_misassignment, ReadoutErrorModel, ReadoutPolarity, ShotModel, Threshold,
};
use qfb_core::rng::{shot_rng, Stage};
use qfb_core::testutil::random_state;
use qfb_core::tomography::{
    linear_inversion, mle_reconstruct, simulate_records, TomographySettings,
};
use qfb_core::cavity::BetaCoefficients;

const PI: f64 = std::f64::consts::PI;

fn report(id: &str, name: &str, pass: bool, details: &str) {
    println!(
        "ACCEPTANCE {id} [{name}]: {} ({details})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{id} {name}: {details}");
}

/// Transmon transition rates with inverse times (324, 50, 111, 20) µs.
fn transmon_rates() -> TransitionRates<f64> {
    TransitionRates::from_inverse_times(324.0, 50.0, 111.0, 20.0).unwrap()
}

/// Reset-loop shot model: ±1 peaks, 0.4% Gaussian misassignment, 0.4 µs
/// window.
fn reset_model() -> ShotModel<f64> {
    ShotModel::new(1.0, -1.0, sigma_for_misassignment(2.0, 0.004), 0.4).unwrap()
}

fn reset_timing() -> LoopTiming<f64> {
    LoopTiming::new(0.4, 2.368, 0.032).unwrap()
}

fn reset_protocol(rounds: usize, recover: bool) -> FeedbackProtocol<f64> {
    FeedbackProtocol {
        target: TargetState::Ground,
        rounds,
        recover_12: recover,
        threshold: Threshold::new(0.0).unwrap(),
        polarity: ReadoutPolarity::GroundHigh,
        timing: reset_timing(),
        pulse_error: 0.005,
    }
}

/// Parity-meter cavity: κ/2π = 1.4 MHz, shift mismatch 117.5 kHz, 2.5
/// steady photons on resonance.
fn parity_cavity() -> CavityConfig<f64> {
    let kappa = 1.4;
    let chi_a = 2.9;
    let chi_b = chi_a - 0.1175;
    let eps = CavityConfig::eps_for_mean_photons(kappa, 2.5);
    CavityConfig::new(kappa, chi_a, chi_b, eps, 1.0).unwrap()
}

fn parity_dt(cfg: &CavityConfig<f64>) -> f64 {
    1.0 / (40.0 * cfg.kappa_rad_per_us())
}

#[test]
fn acceptance_01_steady_state_populations() {
    let start = Instant::now();
    let ss = steady_state(&transmon_rates()).unwrap();
    let elapsed = start.elapsed();
    let pass = (ss.p1() - 0.131).abs() <= 0.003
        && (ss.p2() - 0.024).abs() <= 0.002
        && elapsed.as_secs_f64() < 1e-3;
    report(
        "1",
        "steady-state populations",
        pass,
        &format!(
            "P1 = {:.4} (want 0.131 +- 0.003), P2 = {:.4} (want 0.024 +- 0.002), {elapsed:?}",
            ss.p1(),
            ss.p2()
        ),
    );
}

#[test]
fn acceptance_02_analytic_error_budget() {
    let start = Instant::now();
    let err = ReadoutErrorModel::zero_error();
    let timing = reset_timing();
    let e0 = predict_reset_error(0.0, &transmon_rates(), &err, &timing, 1).unwrap();
    let epi = predict_reset_error(PI, &transmon_rates(), &err, &timing, 1).unwrap();
    let elapsed = start.elapsed();
    let pass =
        (e0 - 0.0070).abs() <= 0.0005 && (epi - 0.0696).abs() <= 0.0005 && elapsed.as_secs_f64() < 1e-3;
    report(
        "2",
        "equilibration error budget",
        pass,
        &format!(
            "theta=0: {:.4}% (want 0.70 +- 0.05), theta=pi: {:.4}% (want 6.96 +- 0.05), {elapsed:?}",
            e0 * 100.0,
            epi * 100.0
        ),
    );
}

#[test]
fn acceptance_03_reset_monte_carlo() {
    let start = Instant::now();
    let model = reset_model();
    let rates = transmon_rates();
    let n = 100_000;

    let e0 = 1.0
        - run_reset(InitialState::Theta(0.0), &reset_protocol(1, false), &model, &rates, 301, n)
            .unwrap()
            .p_target;
    let epi = 1.0
        - run_reset(InitialState::Theta(PI), &reset_protocol(1, false), &model, &rates, 302, n)
            .unwrap()
            .p_target;
    let epi2 = 1.0
        - run_reset(InitialState::Theta(PI), &reset_protocol(2, false), &model, &rates, 303, n)
            .unwrap()
            .p_target;
    let elapsed = start.elapsed();

    let pass = (e0 - 0.012).abs() <= 0.003
        && (epi - 0.078).abs() <= 0.007
        && (epi2 - 0.034).abs() <= 0.005
        && elapsed.as_secs_f64() < 30.0;
    report(
        "3",
        "reset Monte Carlo",
        pass,
        &format!(
            "theta=0: {:.2}% (want 1.2 +- 0.3), theta=pi: {:.2}% (want 7.8 +- 0.7), \
             two rounds: {:.2}% (want 3.4 +- 0.5), {elapsed:?}",
            e0 * 100.0,
            epi * 100.0,
            epi2 * 100.0
        ),
    );
}

#[test]
fn acceptance_04_repeated_initialization() {
    let start = Instant::now();
    let rates = transmon_rates();
    let model = reset_model();
    let th = Threshold::new(0.0).unwrap();
    let fb = reset_protocol(3, true);

    let leave1 = run_repeated_init(
        0.01,
        InitAlgorithm::LeaveExcited,
        Some(&fb),
        &rates,
        &model,
        th,
        ReadoutPolarity::GroundHigh,
        0.005,
        401,
        400_000,
    )
    .unwrap();
    let leave0 = run_repeated_init(
        0.01,
        InitAlgorithm::LeaveGround,
        Some(&fb),
        &rates,
        &model,
        th,
        ReadoutPolarity::GroundHigh,
        0.005,
        402,
        400_000,
    )
    .unwrap();
    let avg = (leave1.p_err + leave0.p_err) / 2.0;

    let passive = run_repeated_init(
        0.01,
        InitAlgorithm::LeaveGround,
        None,
        &rates,
        &model,
        th,
        ReadoutPolarity::GroundHigh,
        0.005,
        403,
        5_000_000,
    )
    .unwrap();

    // Zero-excitation variant: the leave-|1⟩ error trends toward 50% as the
    // initialization time shrinks.
    let zero_exc = TransitionRates::new(0.0, 1.0 / 50.0, 0.0, 1.0 / 20.0).unwrap();
    let trend: Vec<f64> = [0.01, 10.0, 100.0]
        .iter()
        .map(|tau| {
            run_repeated_init(
                *tau,
                InitAlgorithm::LeaveExcited,
                None,
                &zero_exc,
                &model,
                th,
                ReadoutPolarity::GroundHigh,
                0.005,
                404,
                200_000,
            )
            .unwrap()
            .p_err
        })
        .collect();
    let elapsed = start.elapsed();

    let pass = (avg - 0.035).abs() <= 0.010
        && passive.p_err >= 0.15
        && trend[0] >= 0.40
        && trend[0] > trend[1]
        && trend[1] > trend[2]
        && elapsed.as_secs_f64() < 60.0;
    report(
        "4",
        "repeated initialization",
        pass,
        &format!(
            "feedback avg = {:.2}% (want 3.5 +- 1.0), passive leave-0 = {:.2}% (want >= 15), \
             zero-excitation trend = {:.3}/{:.3}/{:.3} at tau 0.01/10/100, {elapsed:?}",
            avg * 100.0,
            passive.p_err * 100.0,
            trend[0],
            trend[1],
            trend[2]
        ),
    );
}

/// Two-qubit readout bench: both qubits hold 4.7% steady excitation and the
/// heralding/analysis measurements share one voltage model.
fn readout_bench_config() -> TwoQubitBenchConfig<f64> {
    let excitation = 0.047;
    let two_level = |t1: f64| {
        let g10 = 1.0 / t1;
        TransitionRates::new(g10 * excitation / (1.0 - excitation), g10, 0.0, 0.0).unwrap()
    };
    TwoQubitBenchConfig {
        rates_a: two_level(23.0),
        rates_b: two_level(27.0),
        model: JointShotModel {
            mu: [1.0, -1.0, -0.9, -1.1],
            sigma: sigma_for_misassignment(2.0, 0.005),
            t_meas: 0.3,
        },
        threshold: Threshold::new(0.0).unwrap(),
        polarity: ReadoutPolarity::GroundHigh,
        tau_us: 2.4,
        prep_pulse_error: 0.007,
    }
}

#[test]
fn acceptance_05_readout_contrast() {
    let start = Instant::now();
    let cfg = readout_bench_config();
    let (prep0, prep_pi) = run_initialization_shots(&cfg, 500_000, 501);
    let summary = analyze_initialization(&prep0, &prep_pi).unwrap();
    let elapsed = start.elapsed();

    let pass = (summary.contrast_unconditioned - 0.849).abs() <= 0.010
        && (summary.contrast_postselected - 0.966).abs() <= 0.010
        && (summary.kept_fraction - 0.91).abs() <= 0.015
        && elapsed.as_secs_f64() < 60.0;
    report(
        "5",
        "readout contrast",
        pass,
        &format!(
            "unconditioned = {:.3} (want 0.849 +- 0.010), postselected = {:.3} \
             (want 0.966 +- 0.010), kept = {:.3} (want 0.910 +- 0.015), {elapsed:?}",
            summary.contrast_unconditioned, summary.contrast_postselected, summary.kept_fraction
        ),
    );
}

#[test]
fn acceptance_06_rabi_visibility_identity() {
    let cfg = readout_bench_config();
    let (prep0, prep_pi) = run_initialization_shots(&cfg, 200_000, 601);
    let summary = analyze_initialization(&prep0, &prep_pi).unwrap();

    // Digitize the sweep at the optimum threshold found above.
    let mut sweep_cfg = cfg;
    sweep_cfg.threshold = summary.threshold_unconditioned;
    let thetas: Vec<f64> = (0..9).map(|k| PI * k as f64 / 8.0).collect();
    let points = run_rabi_sweep(&sweep_cfg, &thetas, 100_000, 602);

    let ppk_uncond = points[0].p_high_unconditioned - points[8].p_high_unconditioned;
    let ppk_cond = points[0].p_high_postselected - points[8].p_high_postselected;
    let d_uncond = (ppk_uncond - summary.contrast_unconditioned).abs();
    let d_cond = (ppk_cond - summary.contrast_postselected).abs();

    let pass = d_uncond < 0.01 && d_cond < 0.01;
    report(
        "6",
        "Rabi visibility identity",
        pass,
        &format!(
            "unconditioned: amplitude {:.3} vs contrast {:.3} (|d| = {:.4}), \
             postselected: {:.3} vs {:.3} (|d| = {:.4})",
            ppk_uncond,
            summary.contrast_unconditioned,
            d_uncond,
            ppk_cond,
            summary.contrast_postselected,
            d_cond
        ),
    );
}

#[test]
fn acceptance_07_qnd_correlations() {
    let excitation = 0.047;
    let g10 = 1.0 / 23.0;
    let rates =
        TransitionRates::new(g10 * excitation / (1.0 - excitation), g10, 0.0, 0.0).unwrap();
    let model = ShotModel::new(1.0, -1.0, sigma_for_misassignment(2.0, 0.003), 0.3).unwrap();
    let base = QndBenchConfig {
        rates,
        model,
        threshold: Threshold::new(0.0).unwrap(),
        polarity: ReadoutPolarity::GroundHigh,
        tau_us: 2.4,
        theta: PI,
    };
    let at_tau = run_qnd_bench(&base, 200_000, 701);
    let at_zero = run_qnd_bench(
        &QndBenchConfig {
            tau_us: 0.0,
            ..base
        },
        200_000,
        702,
    );

    let p_tau = at_tau.p_l_given_l.unwrap();
    let p_zero = at_zero.p_l_given_l.unwrap();
    let pass = (p_tau - 0.89).abs() <= 0.02 && p_zero >= 0.98;
    report(
        "7",
        "QND repeatability",
        pass,
        &format!(
            "P(L|L) at tau=2.4us: {:.3} (want 0.89 +- 0.02), at tau=0: {:.3} (want >= 0.98)",
            p_tau, p_zero
        ),
    );
}

#[test]
fn acceptance_08_parity_channel() {
    let start = Instant::now();
    let cavity = parity_cavity();
    let dt = parity_dt(&cavity);
    let tau_p = 0.4;
    let traj = evolve_pointer(&cavity, tau_p, dt).unwrap();
    let factors = coherence_factors(&traj, &cavity, tau_p).unwrap();
    let stats = signal_stats(&traj, &cavity, (0.0, tau_p)).unwrap();

    let psi0 = TwoQubitDensityMatrix::maximal_superposition(1.0);
    let mapped = unconditioned_parity_map(&psi0, &factors);
    let cross_max = [(0usize, 1usize), (0, 2), (1, 3), (2, 3)]
        .iter()
        .map(|(i, j)| mapped.element(*i, *j).norm())
        .fold(0.0f64, f64::max);
    let same_min = mapped
        .element(1, 2)
        .norm()
        .min(mapped.element(0, 3).norm());

    // Ensemble-average oracle: conditioned shots against the deterministic
    // map, per element.
    let n = 100_000u64;
    let threshold = qfb_core::entangle::optimal_parity_threshold(&stats);
    let mut acc = nalgebra::Matrix4::<num_complex::Complex<f64>>::zeros();
    let shots: Vec<_> = (0..n)
        .map(|i| {
            let mut rng = shot_rng(801, Stage::PARITY_SHOT, i);
            conditioned_parity_shot(&psi0, &stats, &factors, threshold, &mut rng)
        })
        .collect();
    for s in &shots {
        acc += s.rho_post.matrix();
    }
    acc /= num_complex::Complex::new(n as f64, 0.0);
    let max_dev = (acc - mapped.matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0f64, f64::max);
    let elapsed = start.elapsed();

    let pass = cross_max < 0.03 && same_min > 0.15 && max_dev < 0.01 && elapsed.as_secs_f64() < 60.0;
    report(
        "8",
        "parity channel ordering",
        pass,
        &format!(
            "max cross-parity |rho_ij| = {:.4} (want < 0.03), min same-parity = {:.4} \
             (want > 0.15), ensemble dev = {:.4} (want < 0.01), {elapsed:?}",
            cross_max, same_min, max_dev
        ),
    );
}

#[test]
fn acceptance_09_entanglement_metric_oracles() {
    let mut rng = shot_rng(901, Stage::PARITY_SHOT, 0);
    let mut max_c = 0.0f64;
    let mut max_e = 0.0f64;
    for _ in 0..1000 {
        let rho = random_state(&mut rng);
        max_c = max_c.max((concurrence(&rho) - common::concurrence_oracle(rho.matrix())).abs());
        max_e =
            max_e.max((log_negativity(&rho) - common::log_negativity_oracle(rho.matrix())).abs());
    }

    let mut werner_ok = true;
    for k in 0..=10 {
        let p = k as f64 / 10.0;
        let w = TwoQubitDensityMatrix::werner(p, &qfb_core::entangle::BellTarget::phi_plus())
            .unwrap();
        let c_expected = ((3.0 * p - 1.0) / 2.0).max(0.0);
        let e_expected = (3.0 * (1.0 + p) / 4.0 + (1.0 - 3.0 * p).abs() / 4.0).max(1.0).log2();
        werner_ok &= (concurrence(&w) - c_expected).abs() < 1e-12
            && (log_negativity(&w) - e_expected).abs() < 1e-12;
    }

    let pass = max_c < 1e-8 && max_e < 1e-8 && werner_ok;
    report(
        "9",
        "entanglement metric oracles",
        pass,
        &format!(
            "max |C - oracle| = {max_c:.2e}, max |E_N - oracle| = {max_e:.2e} \
             (want < 1e-8), Werner closed forms exact: {werner_ok}"
        ),
    );
}

#[test]
fn acceptance_10_feedback_phase_law_and_efficiency() {
    // Phase law at three configured even-subspace phases.
    let grid = 96usize;
    let spacing = PI / grid as f64;
    let mut law_ok = true;
    let mut law_detail = String::new();
    for phi_e in [0.3 * PI, 0.73 * PI, 1.2 * PI] {
        let rho = TwoQubitDensityMatrix::maximal_superposition(1.0);
        let sep = 3.0;
        let stats = SignalStats {
            mean: [0.0, sep, sep, 0.0],
            var: 1.0,
            window: (0.0, 0.3),
        };
        let b = (-(sep * sep) / 8.0f64).exp();
        let factors = CoherenceFactors::from_pairs(&[
            ((0, 1), b, 0.0),
            ((0, 2), b, 0.0),
            ((1, 3), b, 0.0),
            ((2, 3), b, 0.0),
            ((1, 2), 0.92, 0.0),
            ((0, 3), 0.85, phi_e),
        ])
        .unwrap();
        let shots: Vec<ParityShot<f64>> = (0..4000u64)
            .map(|i| {
                let mut rng = shot_rng(1001, Stage::PARITY_SHOT, i);
                conditioned_parity_shot(&rho, &stats, &factors, sep / 2.0, &mut rng)
            })
            .collect();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for k in 0..grid {
            let phi = PI * k as f64 / grid as f64;
            let out = feedback_entangle(&shots, phi).unwrap();
            if out.metrics.bell_fidelity > best.0 {
                best = (out.metrics.bell_fidelity, phi);
            }
        }
        let expected = (PI - phi_e) / 2.0;
        let mut dist = (best.1 - expected).rem_euclid(PI);
        if dist > PI / 2.0 {
            dist = PI - dist;
        }
        law_ok &= dist <= spacing + 1e-9;
        law_detail.push_str(&format!("phi_e={phi_e:.3}: d={dist:.4}; "));
    }

    // Imperfection-matched configuration: the deterministic protocol beats
    // postselection in ebits per run and lands in the wide concurrence band.
    let cavity = parity_cavity();
    let mut cfg = ParityExperimentConfig::new(cavity, 0.3, parity_dt(&cavity));
    cfg.prep_coherence = 0.95;
    cfg.damping_a = 0.03;
    cfg.damping_b = 0.03;
    cfg.feedback_pulse_error = 0.01;
    let meter = build_meter(&cfg).unwrap();
    let shots = run_parity_shots(&cfg, &meter, 1002, 30_000).unwrap();
    let post = postselected_branch(&shots, -1).unwrap();
    let det = deterministic_branch(&cfg, &meter, &shots).unwrap();

    let ordering_ok = det.metrics.efficiency > post.metrics.efficiency;
    let band_ok = det.metrics.concurrence >= 0.25 && det.metrics.concurrence <= 0.60;
    let pass = law_ok && ordering_ok && band_ok;
    report(
        "10",
        "feedback phase law and efficiency",
        pass,
        &format!(
            "{law_detail}det eff = {:.3} vs postselected {:.3} (want det > post), \
             det C = {:.3} (want in [0.25, 0.60])",
            det.metrics.efficiency, post.metrics.efficiency, det.metrics.concurrence
        ),
    );
}

#[test]
fn acceptance_11_mle_reconstruction() {
    let betas = BetaCoefficients {
        b0: 0.0,
        b_a: 1.0,
        b_b: 1.0,
        b_ba: 1.0,
    };

    // Physicality and closeness to linear inversion on noisy data.
    let noisy = TomographySettings::full(betas, 400, 0.8);
    let mut max_diff = 0.0f64;
    let mut physical_ok = true;
    let mut rng = shot_rng(1101, Stage::TOMOGRAPHY, 0);
    for seed in 0..12u64 {
        let rho = if seed % 2 == 0 {
            TwoQubitDensityMatrix::werner(0.55 + 0.03 * seed as f64, &qfb_core::entangle::BellTarget::phi_plus())
                .unwrap()
        } else {
            random_state(&mut rng)
        };
        let records = simulate_records(&rho, &noisy, 1110 + seed);
        let inv = linear_inversion(&records, &noisy).unwrap();
        let mle = mle_reconstruct(&records, &noisy).unwrap();

        let eigs = nalgebra::SymmetricEigen::new(mle.rho.matrix().clone_owned()).eigenvalues;
        physical_ok &= eigs.iter().all(|l| *l >= -1e-12);
        physical_ok &= (mle.rho.matrix().trace().re - 1.0).abs() < 1e-12;

        let diff = (concurrence(&mle.rho) - concurrence(&inv.project_psd())).abs();
        max_diff = max_diff.max(diff);
    }

    // Noiseless round trip.
    let clean = TomographySettings::full(betas, 1000, 0.0);
    let target = TwoQubitDensityMatrix::maximal_superposition(0.93);
    let records = simulate_records(&target, &clean, 1199);
    let mle = mle_reconstruct(&records, &clean).unwrap();
    let fidelity = mle.rho.fidelity(&target);

    let pass = physical_ok && max_diff < 0.03 && fidelity > 0.9999;
    report(
        "11",
        "maximum-likelihood tomography",
        pass,
        &format!(
            "always PSD/trace-1: {physical_ok}, max |C_mle - C_inv| = {max_diff:.4} \
             (want < 0.03), noiseless fidelity = {fidelity:.6} (want > 0.9999)"
        ),
    );
}
