//! End-to-end parity-measurement experiments: builds the meter from a cavity
//! configuration, generates conditioned shots from the maximal superposition,
//! and evaluates the postselected and feedback-based entanglement protocols.

use rayon::prelude::*;

use crate::cavity::{
    coherence_factors, evolve_pointer, signal_stats, CavityConfig, CoherenceFactors, SignalStats,
};
use crate::error::{Error, Result};
use crate::rng::{shot_rng, Stage};
use crate::scalar::Real;

use super::{
    apply_amplitude_damping, compensate_odd_frame, conditioned_parity_shot, feedback_entangle_imperfect,
    log_negativity, optimal_parity_threshold, postselect_parity, concurrence, unconditioned_parity_map,
    FeedbackEntangleResult, ParityShot, StateMetrics, TwoQubitDensityMatrix,
};

/// Full configuration of a parity-measurement run.
#[derive(Debug, Clone, Copy)]
pub struct ParityExperimentConfig<T: Real> {
    pub cavity: CavityConfig<T>,
    /// Measurement pulse length, µs.
    pub tau_p: T,
    /// Integration step for the pointer trajectory, µs.
    pub dt: T,
    /// Integration window; defaults to (0, tau_p).
    pub window: Option<(T, T)>,
    /// Digitization threshold; defaults to the F_p-optimal value.
    pub threshold: Option<T>,
    /// Off-diagonal scale of the prepared superposition (1 = ideal pulses).
    pub prep_coherence: T,
    /// Amplitude-damping probability of qubit A over the sequence.
    pub damping_a: T,
    /// Amplitude-damping probability of qubit B over the sequence.
    pub damping_b: T,
    /// Infidelity of the conditional feedback π pulse.
    pub feedback_pulse_error: T,
}

impl<T: Real> ParityExperimentConfig<T> {
    pub fn new(cavity: CavityConfig<T>, tau_p: T, dt: T) -> Self {
        Self {
            cavity,
            tau_p,
            dt,
            window: None,
            threshold: None,
            prep_coherence: T::one(),
            damping_a: T::zero(),
            damping_b: T::zero(),
            feedback_pulse_error: T::zero(),
        }
    }
}

/// Precomputed parity meter: signal statistics, coherence factors, threshold.
#[derive(Debug, Clone)]
pub struct ParityMeter<T: Real> {
    pub stats: SignalStats<T>,
    pub factors: CoherenceFactors<T>,
    pub threshold: T,
    /// Deterministic even-subspace phase φ_e (the phase of the even Bell
    /// state of maximal overlap after the odd frame is compensated).
    pub phi_e: T,
    /// Deterministic odd-subspace phase before compensation.
    pub phi_odd: T,
}

/// Integrates the pointer trajectory and assembles the meter.
pub fn build_meter<T: Real>(cfg: &ParityExperimentConfig<T>) -> Result<ParityMeter<T>> {
    let traj = evolve_pointer(&cfg.cavity, cfg.tau_p, cfg.dt)?;
    let window = cfg.window.unwrap_or((T::zero(), cfg.tau_p));
    let stats = signal_stats(&traj, &cfg.cavity, window)?;
    let factors = coherence_factors(&traj, &cfg.cavity, cfg.tau_p)?;
    let threshold = cfg
        .threshold
        .unwrap_or_else(|| optimal_parity_threshold(&stats));
    // The even-subspace state after the channel is (|00⟩ + e^{-iφ_e}|11⟩)/√2
    // up to normalization, with φ_e the accumulated phase of ρ_{00,11}.
    Ok(ParityMeter {
        stats,
        factors,
        threshold,
        phi_e: factors.phase(0, 3),
        phi_odd: factors.phase(1, 2),
    })
}

/// Prepared input state: the maximal superposition with scaled coherences.
pub fn initial_state<T: Real>(cfg: &ParityExperimentConfig<T>) -> TwoQubitDensityMatrix<T> {
    TwoQubitDensityMatrix::maximal_superposition(cfg.prep_coherence)
}

/// Generates conditioned parity shots of the prepared superposition. The
/// odd-subspace frame is compensated and per-qubit damping applied to every
/// post-measurement state.
pub fn run_parity_shots<T: Real>(
    cfg: &ParityExperimentConfig<T>,
    meter: &ParityMeter<T>,
    seed: u64,
    n_shots: usize,
) -> Result<Vec<ParityShot<T>>> {
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be at least 1".into()));
    }
    let rho0 = initial_state(cfg);
    let zeta = -meter.phi_odd;
    let damp = cfg.damping_a > T::zero() || cfg.damping_b > T::zero();
    (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = shot_rng(seed, Stage::PARITY_SHOT, i as u64);
            let mut shot =
                conditioned_parity_shot(&rho0, &meter.stats, &meter.factors, meter.threshold, &mut rng);
            shot.rho_post = compensate_odd_frame(&shot.rho_post, zeta);
            if damp {
                shot.rho_post =
                    apply_amplitude_damping(&shot.rho_post, cfg.damping_a, cfg.damping_b)?;
            }
            Ok(shot)
        })
        .collect()
}

/// Metrics of one postselected branch.
#[derive(Debug, Clone)]
pub struct PostselectedBranch<T: Real> {
    pub m_p: i8,
    pub rho: TwoQubitDensityMatrix<T>,
    pub metrics: StateMetrics<T>,
}

/// Averages the shots with the given parity outcome and evaluates the
/// entanglement metrics with the empirical success probability.
pub fn postselected_branch<T: Real>(
    shots: &[ParityShot<T>],
    m_p: i8,
) -> Result<PostselectedBranch<T>> {
    let (rho, p_success) = postselect_parity(shots, m_p)?;
    let e_n = log_negativity(&rho);
    let metrics = StateMetrics {
        concurrence: concurrence(&rho),
        log_negativity: e_n,
        bell_fidelity: rho.bell_fidelity(),
        p_success,
        efficiency: p_success * e_n,
    };
    Ok(PostselectedBranch { m_p, rho, metrics })
}

/// Runs the deterministic protocol at the compensation-law phase
/// φ = (π - φ_e)/2.
pub fn deterministic_branch<T: Real>(
    cfg: &ParityExperimentConfig<T>,
    meter: &ParityMeter<T>,
    shots: &[ParityShot<T>],
) -> Result<FeedbackEntangleResult<T>> {
    let phi = feedback_phase(meter.phi_e);
    feedback_entangle_imperfect(shots, phi, cfg.feedback_pulse_error)
}

/// The compensation law φ = (π - φ_e)/2, folded into [0, 2π).
pub fn feedback_phase<T: Real>(phi_e: T) -> T {
    let phi = (T::pi() - phi_e) / T::cast(2.0);
    let two_pi = T::two_pi();
    let mut out = phi;
    while out < T::zero() {
        out += two_pi;
    }
    while out >= two_pi {
        out -= two_pi;
    }
    out
}

/// Ensemble-average of the conditioned shots (diagnostic for the
/// self-consistency of the measurement channel).
pub fn average_shot_state<T: Real>(shots: &[ParityShot<T>]) -> Result<TwoQubitDensityMatrix<T>> {
    super::average_state(shots.iter().map(|s| &s.rho_post))
}

/// Unconditioned reference state for the same configuration (prepared state
/// through the deterministic channel, frame-compensated and damped).
pub fn unconditioned_reference<T: Real>(
    cfg: &ParityExperimentConfig<T>,
    meter: &ParityMeter<T>,
) -> Result<TwoQubitDensityMatrix<T>> {
    let rho = unconditioned_parity_map(&initial_state(cfg), &meter.factors);
    let rho = compensate_odd_frame(&rho, -meter.phi_odd);
    apply_amplitude_damping(&rho, cfg.damping_a, cfg.damping_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn experiment() -> ParityExperimentConfig<f64> {
        let kappa = 1.4;
        let chi_a = 2.9;
        let chi_b = chi_a - 0.1175;
        let eps = CavityConfig::eps_for_mean_photons(kappa, 2.5);
        let cavity = CavityConfig::new(kappa, chi_a, chi_b, eps, 1.0).unwrap();
        let dt = 1.0 / (40.0 * cavity.kappa_rad_per_us());
        ParityExperimentConfig::new(cavity, 0.3, dt)
    }

    #[test]
    fn meter_builds_with_optimal_threshold_between_parities() {
        let cfg = experiment();
        let meter = build_meter(&cfg).unwrap();
        let even = (meter.stats.mean[0] + meter.stats.mean[3]) / 2.0;
        let odd = (meter.stats.mean[1] + meter.stats.mean[2]) / 2.0;
        assert!(meter.threshold > even.min(odd) && meter.threshold < even.max(odd));
    }

    #[test]
    fn shots_average_to_unconditioned_reference() {
        let cfg = experiment();
        let meter = build_meter(&cfg).unwrap();
        let shots = run_parity_shots(&cfg, &meter, 7, 40_000).unwrap();
        let avg = average_shot_state(&shots).unwrap();
        let reference = unconditioned_reference(&cfg, &meter).unwrap();
        let max_dev = (avg.matrix() - reference.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 0.012, "max deviation {max_dev}");
    }

    #[test]
    fn deterministic_beats_postselection_in_efficiency() {
        let mut cfg = experiment();
        cfg.prep_coherence = 0.95;
        cfg.damping_a = 0.03;
        cfg.damping_b = 0.03;
        cfg.feedback_pulse_error = 0.01;
        let meter = build_meter(&cfg).unwrap();
        let shots = run_parity_shots(&cfg, &meter, 11, 20_000).unwrap();

        let odd = postselected_branch(&shots, -1).unwrap();
        let det = deterministic_branch(&cfg, &meter, &shots).unwrap();
        assert!(
            det.metrics.efficiency > odd.metrics.efficiency,
            "deterministic {} vs postselected {}",
            det.metrics.efficiency,
            odd.metrics.efficiency
        );
        assert!(det.metrics.concurrence > 0.2);
    }
}
