//! Latency-aware digital feedback loops for qubit reset.
//!
//! One feedback round is: measure (window `t_meas`), let the controller
//! process and trigger for `tau_fb = t_process + t_pulse`, then apply a π
//! pulse conditioned on the digitized result. The qubit keeps equilibrating
//! under the rate model during the whole of `tau_fb`; this is what produces
//! the Γ·τ_Fb terms of the first-order error budget
//!
//! ```text
//!   P_err(θ=0) = p^L_00 + p^H_01 + Γ01·τ_Fb
//!   P_err(θ=π) = p^H_11 + p^L_10 + p12 + (Γ10 + Γ12)·τ_Fb
//! ```
//!
//! weighted by cos²(θ/2) and sin²(θ/2) for a general initial superposition.
//! A second back-to-back round removes the relaxation branch of the θ=π
//! error, leaving `P_err(θ=0) + p12 + Γ12·τ_Fb`; rounds beyond two give no
//! further first-order improvement unless the |2⟩ population is recycled by
//! a π pulse on the 1↔2 transition.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qubit_dynamics::{
    pulse_level, sample_jump_chain, LevelPopulations, PulseTransition, TransitionRates,
};
use crate::readout::{
    digitize, generate_shot, MeasResult, ReadoutErrorModel, ReadoutPolarity, ShotModel, Threshold,
};
use crate::rng::{shot_rng, Stage};
use crate::scalar::Real;

/// Timing of one feedback round, in µs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopTiming<T: Real> {
    /// Measurement/integration window.
    pub t_meas: T,
    /// Controller processing latency (signal in → trigger out).
    pub t_process: T,
    /// Duration of the conditional pulse.
    pub t_pulse: T,
}

impl<T: Real> LoopTiming<T> {
    pub fn new(t_meas: T, t_process: T, t_pulse: T) -> Result<Self> {
        for (name, v) in [
            ("t_meas", t_meas),
            ("t_process", t_process),
            ("t_pulse", t_pulse),
        ] {
            if v < T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {} must be non-negative",
                    v.as_f64()
                )));
            }
        }
        Ok(Self {
            t_meas,
            t_process,
            t_pulse,
        })
    }

    /// End of measurement to end of the conditional pulse.
    pub fn tau_fb(&self) -> T {
        self.t_process + self.t_pulse
    }
}

/// Named feedback-controller latency preset.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerProfile<T: Real> {
    pub name: String,
    /// Preset measurement-to-pulse-end latency, µs.
    pub tau_fb: T,
}

impl<T: Real> ControllerProfile<T> {
    pub fn new(name: impl Into<String>, tau_fb: T) -> Result<Self> {
        if tau_fb <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "tau_fb = {} must be positive",
                tau_fb.as_f64()
            )));
        }
        Ok(Self {
            name: name.into(),
            tau_fb,
        })
    }

    /// ADwin processor loop: ≈2.4 µs from end of measurement to pulse end.
    pub fn adwin() -> Self {
        Self {
            name: "adwin".into(),
            tau_fb: T::cast(2.4),
        }
    }

    /// CPLD comparator: 0.11 µs response time.
    pub fn cpld() -> Self {
        Self {
            name: "cpld".into(),
            tau_fb: T::cast(0.11),
        }
    }
}

/// State the reset protocol drives the qubit to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetState {
    /// Fb₀: π pulse on result `L`, targeting |0⟩.
    Ground,
    /// Fb₁: π pulse on result `H`, targeting |1⟩.
    Excited,
}

impl TargetState {
    fn level(self) -> usize {
        match self {
            TargetState::Ground => 0,
            TargetState::Excited => 1,
        }
    }

    fn pulse_on(self, result: MeasResult) -> bool {
        match self {
            TargetState::Ground => !result.is_high(),
            TargetState::Excited => result.is_high(),
        }
    }
}

/// A multi-round measure-and-correct reset protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackProtocol<T: Real> {
    pub target: TargetState,
    pub rounds: usize,
    /// Unconditional π pulse on 1↔2 before the final round, recycling |2⟩.
    pub recover_12: bool,
    pub threshold: Threshold<T>,
    pub polarity: ReadoutPolarity,
    pub timing: LoopTiming<T>,
    /// Infidelity of every π pulse in the loop.
    pub pulse_error: T,
}

impl<T: Real> FeedbackProtocol<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be at least 1".into()));
        }
        if self.pulse_error < T::zero() || self.pulse_error > T::one() {
            return Err(Error::InvalidArgument(format!(
                "pulse_error = {} outside [0, 1]",
                self.pulse_error.as_f64()
            )));
        }
        Ok(())
    }
}

/// First-order analytic reset-error budget for the Fb₀ protocol.
///
/// For one round this is the weighted error budget above; for two or more
/// rounds the θ=π branch improves to `P_err(θ=0) + p12 + Γ12·τ_Fb`.
pub fn predict_reset_error<T: Real>(
    theta: T,
    rates: &TransitionRates<T>,
    err: &ReadoutErrorModel<T>,
    timing: &LoopTiming<T>,
    rounds: usize,
) -> Result<T> {
    if theta < T::zero() || theta > T::pi() + T::cast(1e-12) {
        return Err(Error::InvalidArgument(format!(
            "theta = {} outside [0, pi]",
            theta.as_f64()
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let tau = timing.tau_fb();
    let p12 = err.p12();
    let e_ground = err.p(MeasResult::Low, 0, 0) + err.p(MeasResult::High, 0, 1) + rates.g01 * tau;
    let e_excited = if rounds == 1 {
        err.p(MeasResult::High, 1, 1)
            + err.p(MeasResult::Low, 1, 0)
            + p12
            + (rates.g10 + rates.g12) * tau
    } else {
        e_ground + p12 + rates.g12 * tau
    };
    let half = theta / T::cast(2.0);
    let c = half.cos();
    let s = half.sin();
    Ok(c * c * e_ground + s * s * e_excited)
}

/// Initial qubit state of a reset run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState<T: Real> {
    Populations(LevelPopulations<T>),
    /// cos(θ/2)|0⟩ + sin(θ/2)|1⟩, treated as classical populations.
    Theta(T),
}

impl<T: Real> InitialState<T> {
    fn populations(&self) -> LevelPopulations<T> {
        match self {
            InitialState::Populations(p) => *p,
            InitialState::Theta(theta) => LevelPopulations::from_theta(*theta),
        }
    }
}

/// Ensemble statistics of one feedback round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub n_high: u64,
    pub n_low: u64,
    pub n_pulsed: u64,
}

/// Result of a Monte-Carlo reset run.
#[derive(Debug, Clone)]
pub struct ResetOutcome<T: Real> {
    /// Fraction of shots ending in the target level.
    pub p_target: T,
    /// Binomial standard error of `1 - p_target`.
    pub p_err_stderr: T,
    /// Digitization and pulse counts per round.
    pub rounds: Vec<RoundStats>,
    pub n_shots: usize,
}

/// Simulates one shot of the protocol, returning the final level and
/// recording per-round results into `stats`.
fn reset_shot<T: Real, R: rand::Rng + ?Sized>(
    mut level: usize,
    protocol: &FeedbackProtocol<T>,
    model: &ShotModel<T>,
    rates: &TransitionRates<T>,
    rng: &mut R,
    rounds: &mut [RoundStats],
) -> usize {
    let tau = protocol.timing.tau_fb();
    for round in 0..protocol.rounds {
        if protocol.recover_12 && protocol.rounds > 1 && round + 1 == protocol.rounds {
            level = pulse_level(level, PulseTransition::OneTwo, protocol.pulse_error, rng);
        }
        let (v, post) = generate_shot(level, model, rates, rng);
        let result = digitize(v, protocol.threshold, protocol.polarity);
        level = post;
        // Equilibration between the end of measurement and the pulse.
        level = sample_jump_chain(level, rates, tau, rng);
        let fire = protocol.target.pulse_on(result);
        if fire {
            level = pulse_level(level, PulseTransition::ZeroOne, protocol.pulse_error, rng);
        }
        let s = &mut rounds[round];
        if result.is_high() {
            s.n_high += 1;
        } else {
            s.n_low += 1;
        }
        if fire {
            s.n_pulsed += 1;
        }
    }
    level
}

/// Monte-Carlo reset run: `n_shots` independent executions of the protocol.
pub fn run_reset<T: Real>(
    initial: InitialState<T>,
    protocol: &FeedbackProtocol<T>,
    model: &ShotModel<T>,
    rates: &TransitionRates<T>,
    seed: u64,
    n_shots: usize,
) -> Result<ResetOutcome<T>> {
    protocol.validate()?;
    if n_shots == 0 {
        return Err(Error::InvalidArgument("n_shots must be at least 1".into()));
    }
    let pops = initial.populations();

    let per_shot: Vec<(usize, Vec<RoundStats>)> = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = shot_rng(seed, Stage::RESET, i as u64);
            let level = pops.sample_level(&mut rng);
            let mut rounds = vec![RoundStats::default(); protocol.rounds];
            let final_level = reset_shot(level, protocol, model, rates, &mut rng, &mut rounds);
            (final_level, rounds)
        })
        .collect();

    let mut rounds = vec![RoundStats::default(); protocol.rounds];
    let mut on_target = 0u64;
    let target = protocol.target.level();
    for (level, shot_rounds) in &per_shot {
        if *level == target {
            on_target += 1;
        }
        for (acc, s) in rounds.iter_mut().zip(shot_rounds) {
            acc.n_high += s.n_high;
            acc.n_low += s.n_low;
            acc.n_pulsed += s.n_pulsed;
        }
    }

    let n = T::cast(n_shots as f64);
    let p_target = T::cast(on_target as f64) / n;
    let p_err = T::one() - p_target;
    Ok(ResetOutcome {
        p_target,
        p_err_stderr: (p_err * (T::one() - p_err) / n).sqrt(),
        rounds,
        n_shots,
    })
}

/// The repeated algorithm whose initialization error is being measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitAlgorithm {
    /// Measurement only; the qubit ideally stays in |0⟩.
    LeaveGround,
    /// Measurement followed by a π pulse; the qubit ideally ends in |1⟩.
    LeaveExcited,
}

/// Result of a repeated-initialization run.
#[derive(Debug, Clone, Copy)]
pub struct RepeatedInitOutcome<T: Real> {
    /// Fraction of steady cycles whose check measurement digitized to `L`
    /// (qubit not declared in |0⟩ at the start of the algorithm).
    pub p_err: T,
    pub p_err_stderr: T,
    pub cycles_counted: usize,
}

/// Loops (wait `tau_init` → optional feedback reset → check measurement →
/// algorithm) and returns the steady-cycle initialization error.
///
/// With `protocol = None` this reproduces passive initialization by waiting.
/// The cycle budget is split across independent chains (one RNG stream
/// each), each discarding a burn-in prefix; without that the passive chains
/// decorrelate only over ~T1/cycle-time cycles and a single chain would
/// carry large autocorrelated errors. The standard error is estimated from
/// the scatter between chains.
#[allow(clippy::too_many_arguments)]
pub fn run_repeated_init<T: Real>(
    tau_init: T,
    algorithm: InitAlgorithm,
    protocol: Option<&FeedbackProtocol<T>>,
    rates: &TransitionRates<T>,
    model: &ShotModel<T>,
    check_threshold: Threshold<T>,
    polarity: ReadoutPolarity,
    pulse_error: T,
    seed: u64,
    n_cycles: usize,
) -> Result<RepeatedInitOutcome<T>> {
    if n_cycles < 100 {
        return Err(Error::InvalidArgument(
            "n_cycles must be at least 100".into(),
        ));
    }
    if tau_init < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "tau_init = {} must be non-negative",
            tau_init.as_f64()
        )));
    }
    if let Some(p) = protocol {
        p.validate()?;
    }

    let n_chains = (n_cycles / 2000).clamp(1, 2048);
    let per_chain = n_cycles / n_chains;
    let burn_in = (per_chain / 4).min(300);

    let chain_results: Vec<(u64, usize)> = (0..n_chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = shot_rng(seed, Stage::REPEATED_INIT, chain as u64);
            let mut level = crate::qubit_dynamics::steady_state(rates)
                .map(|ss| ss.sample_level(&mut rng))
                .unwrap_or(0);
            let mut rounds = protocol
                .map(|p| vec![RoundStats::default(); p.rounds])
                .unwrap_or_default();
            let mut errors = 0u64;
            let mut counted = 0usize;
            for cycle in 0..per_chain {
                level = sample_jump_chain(level, rates, tau_init, &mut rng);
                if let Some(p) = protocol {
                    level = reset_shot(level, p, model, rates, &mut rng, &mut rounds);
                }
                // Check measurement: quantifies the initialization error and
                // is the measurement stage of the repeated algorithm.
                let (v, post) = generate_shot(level, model, rates, &mut rng);
                let result = digitize(v, check_threshold, polarity);
                level = post;
                if cycle >= burn_in {
                    counted += 1;
                    if !result.is_high() {
                        errors += 1;
                    }
                }
                if algorithm == InitAlgorithm::LeaveExcited {
                    level = pulse_level(level, PulseTransition::ZeroOne, pulse_error, &mut rng);
                }
            }
            (errors, counted)
        })
        .collect();

    let counted: usize = chain_results.iter().map(|(_, c)| c).sum();
    let errors: u64 = chain_results.iter().map(|(e, _)| e).sum();
    let n = T::cast(counted as f64);
    let p_err = T::cast(errors as f64) / n;

    let stderr = if n_chains > 1 {
        let mean = p_err;
        let mut var = T::zero();
        for (e, c) in &chain_results {
            let p = T::cast(*e as f64) / T::cast((*c).max(1) as f64);
            var += (p - mean) * (p - mean);
        }
        let m = T::cast(n_chains as f64);
        (var / (m * (m - T::one()))).sqrt()
    } else {
        (p_err * (T::one() - p_err) / n).sqrt()
    };

    Ok(RepeatedInitOutcome {
        p_err,
        p_err_stderr: stderr,
        cycles_counted: counted,
    })
}
