//! Dispersive-cavity pointer states for a two-qubit parity meter.
//!
//! Each computational basis state s ∈ {|00⟩, |01⟩, |10⟩, |11⟩} pulls the
//! cavity resonance by 0, 2χ_A, 2χ_B, 2χ_A + 2χ_B respectively (left index =
//! qubit B, right = qubit A). Driving at the mean of the four pulled
//! frequencies, the coherent amplitude of the cavity conditioned on s obeys
//! the linear ODE
//!
//! ```text
//!   dα_s/dt = -(κ/2 + iΔ_s) α_s + ε_p,       α_s(0) = 0,
//!   Δ_s = (mean pull + drive offset) - pull(s),
//! ```
//!
//! solved exactly on a uniform grid, followed by the undriven ring-down until
//! every |α_s| < 10⁻³.
//!
//! The integrated homodyne signal uses the single-quadrature vacuum-noise
//! convention: mean_s = ∫ √(κ·η) Re[α_s e^{-i·lo_phase}] dt over the window,
//! with variance (t_f - t_i)/2, so the quantum efficiency η scales the SNR
//! but never the dephasing. Ensemble dephasing and deterministic phases
//! between basis states i, j accumulate at the standard dispersive rates
//!
//! ```text
//!   d(ln D_ij)/dt = (Δ_i - Δ_j)·Im[α_i α_j*],
//!   dφ_ij/dt      = (Δ_i - Δ_j)·Re[α_i α_j*],
//! ```
//!
//! integrated over the pulse and the ring-down.
//!
//! Config frequencies (`kappa`, `chi_a`, `chi_b`, `eps_p`, `drive_detuning`)
//! are ordinary frequencies in MHz (ω/2π); times are µs.

use std::io::{self, Write};

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Amplitude below which the cavity counts as empty after the pulse.
const RINGDOWN_FLOOR: f64 = 1e-3;

/// Dispersive readout cavity shared by two qubits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityConfig<T: Real> {
    /// Cavity linewidth κ/2π, MHz.
    pub kappa: T,
    /// Dispersive shift χ_A/2π, MHz: qubit A excited pulls the cavity by 2χ_A.
    pub chi_a: T,
    /// Dispersive shift χ_B/2π, MHz.
    pub chi_b: T,
    /// Drive strength ε_p/2π, MHz·√photon.
    pub eps_p: T,
    /// Drive offset from the four-state mean pull, MHz.
    pub drive_detuning: T,
    /// Quantum efficiency of the detection chain, (0, 1].
    pub eta: T,
    /// Local-oscillator phase of the measured quadrature, radians.
    pub lo_phase: T,
    /// Optional single-pole low-pass (bandwidth in MHz) applied to the signal
    /// mean only, mimicking a finite amplifier bandwidth.
    pub jpa_bandwidth: Option<T>,
}

impl<T: Real> CavityConfig<T> {
    pub fn new(kappa: T, chi_a: T, chi_b: T, eps_p: T, eta: T) -> Result<Self> {
        if kappa <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "kappa = {} MHz must be positive",
                kappa.as_f64()
            )));
        }
        if eta <= T::zero() || eta > T::one() {
            return Err(Error::InvalidArgument(format!(
                "eta = {} outside (0, 1]",
                eta.as_f64()
            )));
        }
        Ok(Self {
            kappa,
            chi_a,
            chi_b,
            eps_p,
            drive_detuning: T::zero(),
            eta,
            lo_phase: T::zero(),
            jpa_bandwidth: None,
        })
    }

    /// Drive strength such that the on-resonance steady state holds `n_ss`
    /// photons: |2ε_p/κ|² = n_ss.
    pub fn eps_for_mean_photons(kappa: T, n_ss: T) -> T {
        kappa * n_ss.sqrt() / T::cast(2.0)
    }

    /// κ in angular units, rad/µs.
    pub fn kappa_rad_per_us(&self) -> T {
        T::cast(TWO_PI) * self.kappa
    }

    fn eps_rad_per_us(&self) -> T {
        T::cast(TWO_PI) * self.eps_p
    }

    /// Resonance pull of basis state `s`, rad/µs.
    fn pull(&self, s: usize) -> T {
        let two = T::cast(2.0);
        let chi_a = T::cast(TWO_PI) * self.chi_a;
        let chi_b = T::cast(TWO_PI) * self.chi_b;
        match s {
            0 => T::zero(),
            1 => two * chi_a,
            2 => two * chi_b,
            3 => two * (chi_a + chi_b),
            _ => panic!("basis state index {s} out of range"),
        }
    }

    /// Detuning of the drive from the pulled resonance of state `s`, rad/µs.
    pub fn detuning(&self, s: usize) -> T {
        let mean = (self.pull(0) + self.pull(1) + self.pull(2) + self.pull(3)) / T::cast(4.0);
        mean + T::cast(TWO_PI) * self.drive_detuning - self.pull(s)
    }

    /// Steady-state amplitude ε / (κ/2 + iΔ_s).
    pub fn steady_alpha(&self, s: usize) -> Complex<T> {
        let z = Complex::new(self.kappa_rad_per_us() / T::cast(2.0), self.detuning(s));
        Complex::new(self.eps_rad_per_us(), T::zero()) / z
    }
}

/// Per-basis-state cavity amplitudes on a uniform time grid.
#[derive(Debug, Clone)]
pub struct PointerTrajectory<T: Real> {
    /// Time grid, µs, from 0 through the end of ring-down.
    pub times: Vec<T>,
    /// alpha[s][k] with s over {|00⟩, |01⟩, |10⟩, |11⟩}.
    pub alpha: [Vec<Complex<T>>; 4],
    /// Pulse duration, µs.
    pub tau_p: T,
}

impl<T: Real> PointerTrajectory<T> {
    pub fn dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    pub fn span(&self) -> T {
        *self.times.last().unwrap()
    }
}

/// Integrates the pointer ODE for a pulse of length `tau_p` plus ring-down.
///
/// The step must resolve the cavity: dt ≤ 1/(10·κ) with κ in rad/µs.
pub fn evolve_pointer<T: Real>(
    cfg: &CavityConfig<T>,
    tau_p: T,
    dt: T,
) -> Result<PointerTrajectory<T>> {
    if tau_p <= T::zero() || dt <= T::zero() {
        return Err(Error::InvalidArgument(
            "tau_p and dt must be positive".into(),
        ));
    }
    let kappa = cfg.kappa_rad_per_us();
    if dt > T::one() / (T::cast(10.0) * kappa) {
        return Err(Error::InvalidArgument(format!(
            "dt = {} us too coarse; need dt <= 1/(10 kappa) = {} us",
            dt.as_f64(),
            (T::one() / (T::cast(10.0) * kappa)).as_f64()
        )));
    }

    let n_drive = (tau_p / dt).ceil().as_f64() as usize;
    let step = tau_p / T::cast(n_drive as f64);

    // Ring-down long enough for the slowest (largest) amplitude to fall
    // below the floor; the envelope decays at κ/2.
    let max_ss = (0..4)
        .map(|s| cfg.steady_alpha(s).modulus())
        .fold(T::zero(), |a, b| a.max(b));
    let floor = T::cast(RINGDOWN_FLOOR);
    let ring_time = if max_ss <= floor {
        T::zero()
    } else {
        (T::cast(2.0) / kappa) * (T::cast(2.0) * max_ss / floor).ln()
    };
    let n_ring = (ring_time / step).ceil().as_f64() as usize;

    let total = n_drive + n_ring;
    let mut times = Vec::with_capacity(total + 1);
    let mut alpha: [Vec<Complex<T>>; 4] = Default::default();
    for a in alpha.iter_mut() {
        a.reserve(total + 1);
        a.push(Complex::new(T::zero(), T::zero()));
    }
    times.push(T::zero());

    let half_kappa = kappa / T::cast(2.0);
    for k in 1..=total {
        times.push(step * T::cast(k as f64));
        for s in 0..4 {
            let z = Complex::new(half_kappa, cfg.detuning(s));
            let decay = ComplexField::exp(-z * Complex::new(step, T::zero()));
            let prev = alpha[s][k - 1];
            let next = if k <= n_drive {
                let ss = cfg.steady_alpha(s);
                ss + (prev - ss) * decay
            } else {
                prev * decay
            };
            alpha[s].push(next);
        }
    }

    Ok(PointerTrajectory {
        times,
        alpha,
        tau_p,
    })
}

/// Writes the trajectory as
/// `t_us,re_a00,im_a00,re_a01,im_a01,re_a10,im_a10,re_a11,im_a11`.
pub fn write_trajectory_csv<T: Real, W: Write>(
    out: &mut W,
    traj: &PointerTrajectory<T>,
) -> io::Result<()> {
    writeln!(
        out,
        "t_us,re_a00,im_a00,re_a01,im_a01,re_a10,im_a10,re_a11,im_a11"
    )?;
    for (k, t) in traj.times.iter().enumerate() {
        write!(out, "{}", t.as_f64())?;
        for s in 0..4 {
            let a = traj.alpha[s][k];
            write!(out, ",{},{}", a.re.as_f64(), a.im.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Integrated-signal statistics of the measured quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalStats<T: Real> {
    /// Integrated-voltage mean per basis state.
    pub mean: [T; 4],
    /// Common Gaussian variance of the integrated voltage.
    pub var: T,
    /// Integration window (t_i, t_f), µs.
    pub window: (T, T),
}

impl<T: Real> SignalStats<T> {
    /// Separation signal-to-noise ratio |mean_i - mean_j| / √(2·var).
    pub fn snr(&self, i: usize, j: usize) -> T {
        (self.mean[i] - self.mean[j]).abs() / (T::cast(2.0) * self.var).sqrt()
    }
}

/// Integrates the measured quadrature over `window`, returning the per-state
/// means and the vacuum-noise variance (t_f - t_i)/2.
pub fn signal_stats<T: Real>(
    traj: &PointerTrajectory<T>,
    cfg: &CavityConfig<T>,
    window: (T, T),
) -> Result<SignalStats<T>> {
    let (lo, hi) = window;
    let span = traj.span();
    if lo < T::zero() || hi <= lo || hi > span + T::cast(1e-12) {
        return Err(Error::WindowOutOfRange {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
            span: span.as_f64(),
        });
    }

    let gain = (cfg.kappa_rad_per_us() * cfg.eta).sqrt();
    let lo_phase = Complex::new(T::zero(), -cfg.lo_phase);
    let rot = ComplexField::exp(lo_phase);

    let mut mean = [T::zero(); 4];
    for s in 0..4 {
        // Measured quadrature, optionally low-passed.
        let mut quad: Vec<T> = traj.alpha[s].iter().map(|a| (*a * rot).re * gain).collect();
        if let Some(bw) = cfg.jpa_bandwidth {
            let omega = T::cast(TWO_PI) * bw;
            let pole = T::one() - (-omega * traj.dt()).exp();
            let mut y = T::zero();
            for x in quad.iter_mut() {
                y += pole * (*x - y);
                *x = y;
            }
        }
        mean[s] = integrate_window(&traj.times, &quad, lo, hi);
    }

    Ok(SignalStats {
        mean,
        var: (hi - lo) / T::cast(2.0),
        window,
    })
}

/// Trapezoid integral of samples `f` on uniform grid `t` over [lo, hi],
/// with linear interpolation at the fractional end cells.
fn integrate_window<T: Real>(t: &[T], f: &[T], lo: T, hi: T) -> T {
    let dt = t[1] - t[0];
    let pos = |x: T| (x / dt).as_f64();
    let interp = |x: T| -> T {
        let p = pos(x).floor() as usize;
        let p = p.min(f.len() - 2);
        let frac = x / dt - T::cast(p as f64);
        f[p] + (f[p + 1] - f[p]) * frac
    };

    let k_lo = pos(lo).ceil() as usize;
    let k_hi = pos(hi).floor() as usize;
    let half = T::cast(0.5);

    if k_lo > k_hi {
        return (interp(lo) + interp(hi)) * half * (hi - lo);
    }

    let mut acc = T::zero();
    // partial head cell
    let t_klo = t[k_lo];
    if t_klo > lo {
        acc += (interp(lo) + f[k_lo]) * half * (t_klo - lo);
    }
    // full interior cells
    for k in k_lo..k_hi {
        acc += (f[k] + f[k + 1]) * half * dt;
    }
    // partial tail cell
    let t_khi = t[k_hi];
    if hi > t_khi {
        acc += (f[k_hi] + interp(hi)) * half * (hi - t_khi);
    }
    acc
}

/// Joint-readout observable coefficients: ⟨V⟩ = β₀ + β_A σ_z^A + β_B σ_z^B +
/// β_BA σ_z^B σ_z^A, with σ_z eigenvalue +1 for |0⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaCoefficients<T: Real> {
    pub b0: T,
    pub b_a: T,
    pub b_b: T,
    pub b_ba: T,
}

/// σ_z^A eigenvalue of basis state `s` (+1 for qubit A in |0⟩).
pub fn sz_a<T: Real>(s: usize) -> T {
    if s & 1 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// σ_z^B eigenvalue of basis state `s`.
pub fn sz_b<T: Real>(s: usize) -> T {
    if s & 2 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

impl<T: Real> BetaCoefficients<T> {
    /// Expected voltage for definite σ_z eigenvalues.
    pub fn expectation(&self, sz_a: T, sz_b: T) -> T {
        self.b0 + self.b_a * sz_a + self.b_b * sz_b + self.b_ba * sz_a * sz_b
    }

    /// Expected voltage for basis state `s`.
    pub fn basis_expectation(&self, s: usize) -> T {
        self.expectation(sz_a::<T>(s), sz_b::<T>(s))
    }
}

/// Exact Walsh–Hadamard inversion of the four basis-state means.
pub fn beta_from_means<T: Real>(mean: &[T; 4]) -> BetaCoefficients<T> {
    let quarter = T::cast(0.25);
    BetaCoefficients {
        b0: (mean[0] + mean[1] + mean[2] + mean[3]) * quarter,
        b_a: (mean[0] - mean[1] + mean[2] - mean[3]) * quarter,
        b_b: (mean[0] + mean[1] - mean[2] - mean[3]) * quarter,
        b_ba: (mean[0] - mean[1] - mean[2] + mean[3]) * quarter,
    }
}

/// Ensemble coherence multipliers between basis states: ρ_ij picks up the
/// factor D_ij·e^{iφ_ij} over one measurement pulse (ring-down included).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceFactors<T: Real> {
    /// Symmetric decay factors in (0, 1], D_ii = 1.
    pub d: [[T; 4]; 4],
    /// Antisymmetric deterministic phases, radians.
    pub phi: [[T; 4]; 4],
}

impl<T: Real> CoherenceFactors<T> {
    /// No dephasing and no phase: the identity channel.
    pub fn ideal() -> Self {
        let mut d = [[T::one(); 4]; 4];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = T::one();
        }
        Self {
            d,
            phi: [[T::zero(); 4]; 4],
        }
    }

    /// Builds factors from the six upper-triangle pairs
    /// ((i, j), D_ij, φ_ij) with i < j.
    pub fn from_pairs(pairs: &[((usize, usize), T, T)]) -> Result<Self> {
        let mut f = Self::ideal();
        for ((i, j), d, phi) in pairs {
            if *i >= 4 || *j >= 4 || i == j {
                return Err(Error::InvalidArgument(format!(
                    "invalid state pair ({i}, {j})"
                )));
            }
            if *d <= T::zero() || *d > T::one() {
                return Err(Error::InvalidArgument(format!(
                    "D[{i}][{j}] = {} outside (0, 1]",
                    d.as_f64()
                )));
            }
            f.d[*i][*j] = *d;
            f.d[*j][*i] = *d;
            f.phi[*i][*j] = *phi;
            f.phi[*j][*i] = -*phi;
        }
        Ok(f)
    }

    pub fn decay(&self, i: usize, j: usize) -> T {
        self.d[i][j]
    }

    pub fn phase(&self, i: usize, j: usize) -> T {
        self.phi[i][j]
    }
}

/// Accumulates the dephasing and deterministic phase for every state pair
/// over the pulse and ring-down of `traj`.
pub fn coherence_factors<T: Real>(
    traj: &PointerTrajectory<T>,
    cfg: &CavityConfig<T>,
    tau_p: T,
) -> Result<CoherenceFactors<T>> {
    if (traj.tau_p - tau_p).abs() > T::cast(1e-9) {
        return Err(Error::InvalidArgument(format!(
            "trajectory was computed for tau_p = {} us, asked for {} us",
            traj.tau_p.as_f64(),
            tau_p.as_f64()
        )));
    }
    let floor = T::cast(RINGDOWN_FLOOR * 1.5);
    let last = traj.times.len() - 1;
    for s in 0..4 {
        if traj.alpha[s][last].modulus() > floor {
            return Err(Error::InvalidArgument(
                "trajectory does not cover the cavity ring-down".into(),
            ));
        }
    }

    let dt = traj.dt();
    let half = T::cast(0.5);
    let mut out = CoherenceFactors::ideal();
    for i in 0..4 {
        for j in (i + 1)..4 {
            let ddiff = cfg.detuning(i) - cfg.detuning(j);
            let mut ln_d = T::zero();
            let mut phi = T::zero();
            let mut prev_im = T::zero();
            let mut prev_re = T::zero();
            for k in 0..=last {
                let prod = traj.alpha[i][k] * traj.alpha[j][k].conj();
                let im = ddiff * prod.im;
                let re = ddiff * prod.re;
                if k > 0 {
                    ln_d += (im + prev_im) * half * dt;
                    phi += (re + prev_re) * half * dt;
                }
                prev_im = im;
                prev_re = re;
            }
            let d = ln_d.exp().min(T::one());
            out.d[i][j] = d;
            out.d[j][i] = d;
            out.phi[i][j] = phi;
            out.phi[j][i] = -phi;
        }
    }
    Ok(out)
}
