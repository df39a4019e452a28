//! Readout benchmark sequences: heralded ground-state initialization with a
//! spectator qubit, Rabi-visibility sweeps, and repeated-measurement (QND)
//! correlation runs.
//!
//! The initialization bench models two transmons read out through the same
//! cavity. A first measurement M_A heralds the joint ground state; after a
//! recovery delay `tau_us` (and an optional π pulse preparing the excited
//! state of qubit A) a second measurement M_B is digitized and analyzed with
//! and without conditioning on M_A = H.

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::qubit_dynamics::{sample_jump_chain, TransitionRates};
use crate::rng::{shot_rng, Stage};
use crate::scalar::Real;

use super::{
    digitize, generate_shot, optimal_threshold, postselect_ground, qnd_correlations,
    sample_single_jump, MeasResult, QndCorrelations, ReadoutPolarity, ShotModel, Threshold,
};

/// Voltage model for a joint single-shot readout of two transmons.
///
/// Means are indexed by the joint state `2·s_B + s_A` over {|00⟩, |01⟩,
/// |10⟩, |11⟩}; levels above |1⟩ read as excited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointShotModel<T: Real> {
    pub mu: [T; 4],
    pub sigma: T,
    pub t_meas: T,
}

impl<T: Real> JointShotModel<T> {
    fn mean(&self, level_b: usize, level_a: usize) -> T {
        self.mu[2 * level_b.min(1) + level_a.min(1)]
    }
}

/// Result of one joint readout.
#[derive(Debug, Clone, Copy)]
pub struct JointShot<T: Real> {
    pub voltage: T,
    pub post_a: usize,
    pub post_b: usize,
}

/// Joint single shot with at most one transition per qubit in the window.
pub fn generate_joint_shot<R: Rng + ?Sized, T: Real>(
    level_a: usize,
    level_b: usize,
    model: &JointShotModel<T>,
    rates_a: &TransitionRates<T>,
    rates_b: &TransitionRates<T>,
    rng: &mut R,
) -> JointShot<T> {
    let jump_a = sample_single_jump(level_a, rates_a, model.t_meas, rng);
    let jump_b = sample_single_jump(level_b, rates_b, model.t_meas, rng);

    // Piecewise-constant joint state over up to three segments.
    let mut boundaries: Vec<(T, bool, usize)> = Vec::with_capacity(2);
    if let Some((t, dest)) = jump_a {
        boundaries.push((t, true, dest));
    }
    if let Some((t, dest)) = jump_b {
        boundaries.push((t, false, dest));
    }
    boundaries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut acc = T::zero();
    let mut t_prev = T::zero();
    let mut cur_a = level_a;
    let mut cur_b = level_b;
    for (t, is_a, dest) in boundaries {
        acc += model.mean(cur_b, cur_a) * (t - t_prev);
        t_prev = t;
        if is_a {
            cur_a = dest;
        } else {
            cur_b = dest;
        }
    }
    acc += model.mean(cur_b, cur_a) * (model.t_meas - t_prev);

    JointShot {
        voltage: acc / model.t_meas + model.sigma * T::standard_normal(rng),
        post_a: cur_a,
        post_b: cur_b,
    }
}

/// Configuration of the two-qubit initialization bench.
#[derive(Debug, Clone, Copy)]
pub struct TwoQubitBenchConfig<T: Real> {
    pub rates_a: TransitionRates<T>,
    pub rates_b: TransitionRates<T>,
    pub model: JointShotModel<T>,
    pub threshold: Threshold<T>,
    pub polarity: ReadoutPolarity,
    /// Recovery delay between M_A and the preparation pulse / M_B, µs.
    pub tau_us: T,
    /// Infidelity of the π pulse preparing the excited state.
    pub prep_pulse_error: T,
}

/// Heralding result and analysis voltage for one prepared state.
#[derive(Debug, Clone)]
pub struct PrepShots<T: Real> {
    pub herald: Vec<MeasResult>,
    pub voltage: Vec<T>,
}

impl<T: Real> PrepShots<T> {
    pub fn pairs(&self) -> Vec<(MeasResult, T)> {
        self.herald
            .iter()
            .copied()
            .zip(self.voltage.iter().copied())
            .collect()
    }
}

fn steady_level<R: Rng + ?Sized, T: Real>(
    rates: &TransitionRates<T>,
    rng: &mut R,
) -> usize {
    // Steady state of the rate chain; a disconnected |2⟩ stays empty.
    crate::qubit_dynamics::steady_state(rates)
        .map(|ss| ss.sample_level(rng))
        .unwrap_or(0)
}

/// One bench shot: M_A, recovery, optional π preparation, M_B.
fn bench_shot<R: Rng + ?Sized, T: Real>(
    cfg: &TwoQubitBenchConfig<T>,
    flip_prob: T,
    rng: &mut R,
) -> (MeasResult, T) {
    let a0 = steady_level(&cfg.rates_a, rng);
    let b0 = steady_level(&cfg.rates_b, rng);

    let ma = generate_joint_shot(a0, b0, &cfg.model, &cfg.rates_a, &cfg.rates_b, rng);
    let herald = digitize(ma.voltage, cfg.threshold, cfg.polarity);

    let mut a = sample_jump_chain(ma.post_a, &cfg.rates_a, cfg.tau_us, rng);
    let b = sample_jump_chain(ma.post_b, &cfg.rates_b, cfg.tau_us, rng);

    // Rabi rotation of qubit A by θ: classical flip with probability sin²(θ/2).
    if flip_prob > T::zero() && a < 2 && T::unit_open(rng) <= flip_prob {
        a = 1 - a;
    }

    let mb = generate_joint_shot(a, b, &cfg.model, &cfg.rates_a, &cfg.rates_b, rng);
    (herald, mb.voltage)
}

/// Runs the initialization bench, returning shots for the ground and
/// π-pulse preparations.
pub fn run_initialization_shots<T: Real>(
    cfg: &TwoQubitBenchConfig<T>,
    n_shots: usize,
    seed: u64,
) -> (PrepShots<T>, PrepShots<T>) {
    let flip_pi = T::one() - cfg.prep_pulse_error;
    let shots: Vec<((MeasResult, T), (MeasResult, T))> = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = shot_rng(seed, Stage::READOUT_SHOT, i as u64);
            let ground = bench_shot(cfg, T::zero(), &mut rng);
            let excited = bench_shot(cfg, flip_pi, &mut rng);
            (ground, excited)
        })
        .collect();

    let mut prep0 = PrepShots {
        herald: Vec::with_capacity(n_shots),
        voltage: Vec::with_capacity(n_shots),
    };
    let mut prep_pi = PrepShots {
        herald: Vec::with_capacity(n_shots),
        voltage: Vec::with_capacity(n_shots),
    };
    for (g, e) in shots {
        prep0.herald.push(g.0);
        prep0.voltage.push(g.1);
        prep_pi.herald.push(e.0);
        prep_pi.voltage.push(e.1);
    }
    (prep0, prep_pi)
}

/// Contrast analysis of the initialization bench.
#[derive(Debug, Clone, Copy)]
pub struct InitBenchSummary<T: Real> {
    pub contrast_unconditioned: T,
    pub threshold_unconditioned: Threshold<T>,
    pub contrast_postselected: T,
    pub threshold_postselected: Threshold<T>,
    /// Pooled fraction of shots kept by the M_A = H condition.
    pub kept_fraction: T,
}

/// Optimum-contrast analysis with and without heralding.
pub fn analyze_initialization<T: Real>(
    prep0: &PrepShots<T>,
    prep_pi: &PrepShots<T>,
) -> Result<InitBenchSummary<T>> {
    let (th_u, c_u) = optimal_threshold(&prep0.voltage, &prep_pi.voltage)?;
    let (kept0, f0) = postselect_ground(&prep0.pairs())?;
    let (kept1, f1) = postselect_ground(&prep_pi.pairs())?;
    let (th_c, c_c) = optimal_threshold(&kept0, &kept1)?;
    let half = T::cast(0.5);
    Ok(InitBenchSummary {
        contrast_unconditioned: c_u,
        threshold_unconditioned: th_u,
        contrast_postselected: c_c,
        threshold_postselected: th_c,
        kept_fraction: (f0 + f1) * half,
    })
}

/// One point of a digitized Rabi sweep.
#[derive(Debug, Clone, Copy)]
pub struct RabiPoint<T: Real> {
    pub theta: T,
    pub p_high_unconditioned: T,
    pub p_high_postselected: T,
    pub kept_fraction: T,
}

/// Averaged digitized Rabi oscillation versus preparation angle.
pub fn run_rabi_sweep<T: Real>(
    cfg: &TwoQubitBenchConfig<T>,
    thetas: &[T],
    shots_per_point: usize,
    seed: u64,
) -> Vec<RabiPoint<T>> {
    thetas
        .iter()
        .enumerate()
        .map(|(ti, theta)| {
            let half = *theta / T::cast(2.0);
            let flip = half.sin() * half.sin();
            let shots: Vec<(MeasResult, MeasResult)> = (0..shots_per_point)
                .into_par_iter()
                .map(|i| {
                    let mut rng =
                        shot_rng(seed, Stage::RABI, (ti * shots_per_point + i) as u64);
                    let (herald, v) = bench_shot(cfg, flip, &mut rng);
                    (herald, digitize(v, cfg.threshold, cfg.polarity))
                })
                .collect();

            let n = shots.len();
            let n_high = shots.iter().filter(|(_, m)| m.is_high()).count();
            let kept: Vec<&(MeasResult, MeasResult)> =
                shots.iter().filter(|(h, _)| h.is_high()).collect();
            let n_kept_high = kept.iter().filter(|(_, m)| m.is_high()).count();
            RabiPoint {
                theta: *theta,
                p_high_unconditioned: T::cast(n_high as f64) / T::cast(n as f64),
                p_high_postselected: if kept.is_empty() {
                    T::zero()
                } else {
                    T::cast(n_kept_high as f64) / T::cast(kept.len() as f64)
                },
                kept_fraction: T::cast(kept.len() as f64) / T::cast(n as f64),
            }
        })
        .collect()
}

/// Configuration of the repeated-measurement correlation run.
#[derive(Debug, Clone, Copy)]
pub struct QndBenchConfig<T: Real> {
    pub rates: TransitionRates<T>,
    pub model: ShotModel<T>,
    pub threshold: Threshold<T>,
    pub polarity: ReadoutPolarity,
    /// Delay between the two measurements, µs.
    pub tau_us: T,
    /// Preparation angle of the measured qubit.
    pub theta: T,
}

/// Two consecutive measurements separated by `tau_us`; returns the
/// conditional repeatability statistics.
pub fn run_qnd_bench<T: Real>(
    cfg: &QndBenchConfig<T>,
    n_shots: usize,
    seed: u64,
) -> QndCorrelations<T> {
    let pairs: Vec<(MeasResult, MeasResult)> = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = shot_rng(seed, Stage::QND, i as u64);
            let pops = crate::qubit_dynamics::LevelPopulations::from_theta(cfg.theta);
            let level = pops.sample_level(&mut rng);
            let (v1, post1) = generate_shot(level, &cfg.model, &cfg.rates, &mut rng);
            let first = digitize(v1, cfg.threshold, cfg.polarity);
            let evolved = sample_jump_chain(post1, &cfg.rates, cfg.tau_us, &mut rng);
            let (v2, _) = generate_shot(evolved, &cfg.model, &cfg.rates, &mut rng);
            let second = digitize(v2, cfg.threshold, cfg.polarity);
            (first, second)
        })
        .collect();
    qnd_correlations(&pairs)
}
