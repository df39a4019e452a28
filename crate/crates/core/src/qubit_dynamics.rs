//! Classical population dynamics of a three-level transmon.
//!
//! The qubit is modeled as a classical three-level system |0⟩, |1⟩, |2⟩ with
//! nearest-neighbor transition rates Γ01, Γ10, Γ12, Γ21 (direct 0↔2 rates are
//! zero). Populations obey the rate equation
//!
//! ```text
//!   d/dt (P0, P1, P2)ᵀ = G (P0, P1, P2)ᵀ,
//!   G = [ -Γ01        Γ10          0    ]
//!       [  Γ01   -Γ10 - Γ12       Γ21   ]
//!       [   0         Γ12        -Γ21   ]
//! ```
//!
//! `evolve` propagates populations by the matrix exponential of `G`, computed
//! in closed form from the eigendecomposition (G always has the eigenvalue 0;
//! the other two are roots of a quadratic and real for non-negative rates),
//! with a scaling-and-squaring fallback for nearly degenerate spectra.
//!
//! All rates are in 1/µs and times in µs.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Occupation probabilities of the transmon levels |0⟩, |1⟩, |2⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPopulations<T: Real> {
    p0: T,
    p1: T,
    p2: T,
}

impl<T: Real> LevelPopulations<T> {
    /// Validates non-negativity and normalization (sum = 1 within tolerance).
    pub fn new(p0: T, p1: T, p2: T) -> Result<Self> {
        let tol = T::tol_simplex();
        let sum = p0 + p1 + p2;
        if (sum - T::one()).abs() > tol {
            return Err(Error::InvalidDistribution(format!(
                "populations sum to {}, expected 1",
                sum.as_f64()
            )));
        }
        for (name, p) in [("p0", p0), ("p1", p1), ("p2", p2)] {
            if p < -tol || p > T::one() + tol {
                return Err(Error::InvalidDistribution(format!(
                    "{name} = {} outside [0, 1]",
                    p.as_f64()
                )));
            }
        }
        Ok(Self::normalized(p0, p1, p2))
    }

    /// Clamps sub-tolerance dust and renormalizes exactly.
    fn normalized(p0: T, p1: T, p2: T) -> Self {
        let z = T::zero();
        let (p0, p1, p2) = (p0.max(z), p1.max(z), p2.max(z));
        let sum = p0 + p1 + p2;
        Self {
            p0: p0 / sum,
            p1: p1 / sum,
            p2: p2 / sum,
        }
    }

    pub fn ground() -> Self {
        Self {
            p0: T::one(),
            p1: T::zero(),
            p2: T::zero(),
        }
    }

    pub fn excited() -> Self {
        Self {
            p0: T::zero(),
            p1: T::one(),
            p2: T::zero(),
        }
    }

    /// Populations of the qubit-subspace superposition cos(θ/2)|0⟩ + sin(θ/2)|1⟩.
    pub fn from_theta(theta: T) -> Self {
        let half = theta / T::cast(2.0);
        let c = half.cos();
        let s = half.sin();
        Self {
            p0: c * c,
            p1: s * s,
            p2: T::zero(),
        }
    }

    pub fn p0(&self) -> T {
        self.p0
    }

    pub fn p1(&self) -> T {
        self.p1
    }

    pub fn p2(&self) -> T {
        self.p2
    }

    /// Population of the given level index (0, 1, or 2).
    pub fn level(&self, level: usize) -> T {
        match level {
            0 => self.p0,
            1 => self.p1,
            2 => self.p2,
            _ => panic!("level index {level} out of range"),
        }
    }

    /// Total excited-state population 1 - P0.
    pub fn excitation(&self) -> T {
        self.p1 + self.p2
    }

    /// Draws a definite level from the distribution.
    pub fn sample_level<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = T::unit_open(rng);
        if u <= self.p0 {
            0
        } else if u <= self.p0 + self.p1 {
            1
        } else {
            2
        }
    }

    fn to_vector(self) -> Vector3<T> {
        Vector3::new(self.p0, self.p1, self.p2)
    }
}

/// Qubit-subspace transition for a π pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseTransition {
    /// 0 ↔ 1
    ZeroOne,
    /// 1 ↔ 2
    OneTwo,
}

/// Transition rates Γij between adjacent transmon levels, in 1/µs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRates<T: Real> {
    /// Upward rate |0⟩→|1⟩.
    pub g01: T,
    /// Relaxation |1⟩→|0⟩ (1/T1).
    pub g10: T,
    /// Upward leakage |1⟩→|2⟩.
    pub g12: T,
    /// Relaxation |2⟩→|1⟩.
    pub g21: T,
}

impl<T: Real> TransitionRates<T> {
    pub fn new(g01: T, g10: T, g12: T, g21: T) -> Result<Self> {
        for (name, g) in [("g01", g01), ("g10", g10), ("g12", g12), ("g21", g21)] {
            if g < T::zero() {
                return Err(Error::InvalidArgument(format!(
                    "rate {name} = {} must be non-negative",
                    g.as_f64()
                )));
            }
        }
        Ok(Self { g01, g10, g12, g21 })
    }

    /// Rates from inverse times (µs), e.g. `from_inverse_times(324.0, 50.0, 111.0, 20.0)`.
    pub fn from_inverse_times(t01: f64, t10: f64, t12: f64, t21: f64) -> Result<Self> {
        Self::new(
            T::cast(1.0 / t01),
            T::cast(1.0 / t10),
            T::cast(1.0 / t12),
            T::cast(1.0 / t21),
        )
    }

    pub fn zero() -> Self {
        Self {
            g01: T::zero(),
            g10: T::zero(),
            g12: T::zero(),
            g21: T::zero(),
        }
    }

    /// The generator matrix G (columns sum to zero).
    pub fn generator(&self) -> Matrix3<T> {
        let z = T::zero();
        Matrix3::new(
            -self.g01,
            self.g10,
            z,
            self.g01,
            -self.g10 - self.g12,
            self.g21,
            z,
            self.g12,
            -self.g21,
        )
    }

    /// Total rate out of `level`.
    pub fn outflow(&self, level: usize) -> T {
        match level {
            0 => self.g01,
            1 => self.g10 + self.g12,
            2 => self.g21,
            _ => panic!("level index {level} out of range"),
        }
    }

    /// Destinations and rates out of `level`.
    fn channels(&self, level: usize) -> [(usize, T); 2] {
        match level {
            0 => [(1, self.g01), (0, T::zero())],
            1 => [(0, self.g10), (2, self.g12)],
            2 => [(1, self.g21), (2, T::zero())],
            _ => panic!("level index {level} out of range"),
        }
    }
}

/// Propagates populations for a time `dt` under the rate equation.
///
/// Uses the closed-form eigendecomposition of the 3×3 generator and falls
/// back to scaling-and-squaring when the spectrum is nearly degenerate.
pub fn evolve<T: Real>(
    pops: &LevelPopulations<T>,
    rates: &TransitionRates<T>,
    dt: T,
) -> Result<LevelPopulations<T>> {
    if dt < T::zero() {
        return Err(Error::InvalidArgument(format!(
            "dt = {} must be non-negative",
            dt.as_f64()
        )));
    }
    if dt == T::zero() {
        return Ok(*pops);
    }

    let g = rates.generator();
    let p = pops.to_vector();

    let out = match eigen_propagate(&g, &p, rates, dt) {
        Some(v) => v,
        None => expm_taylor(&(g * dt)) * p,
    };
    Ok(LevelPopulations::normalized(out[0], out[1], out[2]))
}

/// Eigen-path propagation; `None` when the spectrum is too degenerate.
fn eigen_propagate<T: Real>(
    g: &Matrix3<T>,
    p: &Vector3<T>,
    rates: &TransitionRates<T>,
    dt: T,
) -> Option<Vector3<T>> {
    // Characteristic polynomial factors as λ(λ² - tr λ + m2) with
    // tr = trace(G) < 0 and m2 the sum of principal 2×2 minors.
    let tr = -(rates.g01 + rates.g10 + rates.g12 + rates.g21);
    let m2 = rates.g10 * rates.g21 + rates.g01 * rates.g21 + rates.g01 * rates.g12;

    // Non-negative rates make the tridiagonal generator similar to a symmetric
    // matrix, so the discriminant is non-negative up to roundoff.
    let disc = (tr * tr - T::cast(4.0) * m2).max(T::zero());
    let root = disc.sqrt();
    let half = T::cast(0.5);
    let l1 = (tr + root) * half;
    let l2 = (tr - root) * half;

    let scale = T::one().max(-tr);
    let tol = T::cast(1e-10) * scale;
    if (l1 - l2).abs() < tol || l1.abs() < tol || l2.abs() < tol {
        return None;
    }

    let v0 = null_vector(&g.clone())?;
    let v1 = null_vector(&(g - Matrix3::identity() * l1))?;
    let v2 = null_vector(&(g - Matrix3::identity() * l2))?;

    let basis = Matrix3::from_columns(&[v0, v1, v2]);
    let coeffs = basis.lu().solve(p)?;

    Some(v0 * coeffs[0] + v1 * (coeffs[1] * (l1 * dt).exp()) + v2 * (coeffs[2] * (l2 * dt).exp()))
}

/// Null vector of a singular 3×3 matrix via the largest cross product of rows.
fn null_vector<T: Real>(m: &Matrix3<T>) -> Option<Vector3<T>> {
    let r0 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let r1 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let r2 = Vector3::new(m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .into_iter()
        .max_by(|a, b| a.norm_squared().partial_cmp(&b.norm_squared()).unwrap())?;
    let n = best.norm();
    if n <= T::zero() {
        return None;
    }
    Some(best / n)
}

/// Scaling-and-squaring Taylor evaluation of exp(A) for a 3×3 matrix.
fn expm_taylor<T: Real>(a: &Matrix3<T>) -> Matrix3<T> {
    let norm = a
        .iter()
        .fold(T::zero(), |acc, x| acc.max(x.abs()))
        * T::cast(3.0);
    let mut squarings = 0u32;
    let mut scaled = *a;
    if norm > T::cast(0.25) {
        let ratio = (norm / T::cast(0.25)).ln() / T::cast(std::f64::consts::LN_2);
        squarings = ratio.ceil().as_f64() as u32;
        scaled /= T::cast(f64::from(2u32.pow(squarings.min(63))));
    }

    let mut result = Matrix3::identity();
    let mut term = Matrix3::identity();
    for k in 1..=14 {
        term = term * scaled / T::cast(f64::from(k));
        result += term;
    }
    for _ in 0..squarings {
        result = result * result;
    }
    result
}

/// Steady-state populations: the normalized kernel of the generator.
///
/// The kernel has the closed form (Γ10·Γ21, Γ01·Γ21, Γ01·Γ12) when the chain
/// is connected; a disconnected |2⟩ (Γ12 = Γ21 = 0) reduces to the two-level
/// balance. A multi-dimensional kernel has no unique steady state.
pub fn steady_state<T: Real>(rates: &TransitionRates<T>) -> Result<LevelPopulations<T>> {
    if rates.g01 == T::zero() && rates.g10 == T::zero() {
        return Err(Error::DegenerateSteadyState);
    }
    if rates.g12 == T::zero() && rates.g21 == T::zero() {
        let sum = rates.g01 + rates.g10;
        return Ok(LevelPopulations::normalized(
            rates.g10 / sum,
            rates.g01 / sum,
            T::zero(),
        ));
    }
    let v0 = rates.g10 * rates.g21;
    let v1 = rates.g01 * rates.g21;
    let v2 = rates.g01 * rates.g12;
    let sum = v0 + v1 + v2;
    if sum <= T::zero() {
        return Err(Error::DegenerateSteadyState);
    }
    Ok(LevelPopulations::normalized(v0, v1, v2))
}

/// Transition frequencies of the transmon, in GHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitFrequencies<T: Real> {
    /// |0⟩→|1⟩ transition frequency.
    pub f01: T,
    /// |1⟩→|2⟩ transition frequency.
    pub f12: T,
}

/// Default transmon anharmonicity f01 - f12, in GHz.
pub const DEFAULT_ANHARMONICITY_GHZ: f64 = 0.3;

impl<T: Real> QubitFrequencies<T> {
    pub fn new(f01: T, f12: T) -> Result<Self> {
        if f01 <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "f01 = {} GHz must be positive",
                f01.as_f64()
            )));
        }
        Ok(Self { f01, f12 })
    }

    /// f12 defaults to f01 minus the given anharmonicity.
    pub fn with_anharmonicity(f01: T, anharmonicity: T) -> Result<Self> {
        Self::new(f01, f01 - anharmonicity)
    }

    /// f12 from the default 300 MHz anharmonicity.
    pub fn from_f01(f01: T) -> Result<Self> {
        Self::with_anharmonicity(f01, T::cast(DEFAULT_ANHARMONICITY_GHZ))
    }
}

/// Effective temperature of a level distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveTemperature<T: Real> {
    pub millikelvin: T,
    /// Set when the excited populations vanish and T → 0.
    pub degenerate: bool,
}

const PLANCK_OVER_BOLTZMANN_GHZ_TO_MK: f64 = 6.626_070_15e-34 / 1.380_649e-23 * 1e9 * 1e3;

/// Least-squares Boltzmann fit of the populations over the levels present.
///
/// With only |0⟩ and |1⟩ occupied this reduces to the closed form
/// T = h·f01 / (k_B · ln(P0/P1)); with all three levels it is the linear
/// regression of ln Pᵢ against the level energies.
pub fn effective_temperature<T: Real>(
    pops: &LevelPopulations<T>,
    freqs: &QubitFrequencies<T>,
) -> Result<EffectiveTemperature<T>> {
    if pops.p1() <= T::zero() && pops.p2() <= T::zero() {
        return Ok(EffectiveTemperature {
            millikelvin: T::zero(),
            degenerate: true,
        });
    }
    if pops.p1() >= pops.p0() {
        return Err(Error::NoPositiveTemperature);
    }

    let hk = T::cast(PLANCK_OVER_BOLTZMANN_GHZ_TO_MK);
    // Level energies in GHz·h: E0 = 0, E1 = f01, E2 = f01 + f12.
    let energies = [T::zero(), freqs.f01, freqs.f01 + freqs.f12];
    let populations = [pops.p0(), pops.p1(), pops.p2()];

    let mut xs = Vec::with_capacity(3);
    let mut ys = Vec::with_capacity(3);
    for (e, p) in energies.into_iter().zip(populations) {
        if p > T::zero() {
            xs.push(e);
            ys.push(p.ln());
        }
    }

    if xs.len() == 2 {
        let log_ratio = ys[0] - ys[1];
        if log_ratio <= T::zero() {
            return Err(Error::NoPositiveTemperature);
        }
        return Ok(EffectiveTemperature {
            millikelvin: hk * (xs[1] - xs[0]) / log_ratio,
            degenerate: false,
        });
    }

    let n = T::cast(xs.len() as f64);
    let mean_x = xs.iter().copied().sum::<T>() / n;
    let mean_y = ys.iter().copied().sum::<T>() / n;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxy += (*x - mean_x) * (*y - mean_y);
        sxx += (*x - mean_x) * (*x - mean_x);
    }
    let slope = sxy / sxx;
    if slope >= T::zero() {
        return Err(Error::NoPositiveTemperature);
    }
    Ok(EffectiveTemperature {
        millikelvin: -hk / slope,
        degenerate: false,
    })
}

/// Instantaneous π pulse on one transition: swaps the two addressed
/// populations with probability 1 - `pulse_error`, leaving the third level
/// untouched.
pub fn apply_pi_pulse<T: Real>(
    pops: &LevelPopulations<T>,
    transition: PulseTransition,
    pulse_error: T,
) -> Result<LevelPopulations<T>> {
    if pulse_error < T::zero() || pulse_error > T::one() {
        return Err(Error::InvalidArgument(format!(
            "pulse_error = {} outside [0, 1]",
            pulse_error.as_f64()
        )));
    }
    let swap = T::one() - pulse_error;
    let (p0, p1, p2) = (pops.p0, pops.p1, pops.p2);
    let out = match transition {
        PulseTransition::ZeroOne => LevelPopulations {
            p0: pulse_error * p0 + swap * p1,
            p1: swap * p0 + pulse_error * p1,
            p2,
        },
        PulseTransition::OneTwo => LevelPopulations {
            p0,
            p1: pulse_error * p1 + swap * p2,
            p2: swap * p1 + pulse_error * p2,
        },
    };
    Ok(out)
}

/// Applies a π pulse to a definite level, sampling the error branch.
pub fn pulse_level<R: Rng + ?Sized, T: Real>(
    level: usize,
    transition: PulseTransition,
    pulse_error: T,
    rng: &mut R,
) -> usize {
    let fails = pulse_error > T::zero() && T::unit_open(rng) <= pulse_error;
    if fails {
        return level;
    }
    match (transition, level) {
        (PulseTransition::ZeroOne, 0) => 1,
        (PulseTransition::ZeroOne, 1) => 0,
        (PulseTransition::OneTwo, 1) => 2,
        (PulseTransition::OneTwo, 2) => 1,
        (_, other) => other,
    }
}

/// Samples the continuous-time jump chain for `duration`, returning the final
/// level. Exact for the rate model: successive exponential waiting times.
pub fn sample_jump_chain<R: Rng + ?Sized, T: Real>(
    mut level: usize,
    rates: &TransitionRates<T>,
    duration: T,
    rng: &mut R,
) -> usize {
    let mut remaining = duration;
    loop {
        let out = rates.outflow(level);
        if out <= T::zero() {
            return level;
        }
        let wait = -T::unit_open(rng).ln() / out;
        if wait >= remaining {
            return level;
        }
        remaining -= wait;
        let channels = rates.channels(level);
        let total = channels[0].1 + channels[1].1;
        let u = T::unit_open(rng) * total;
        level = if u <= channels[0].1 {
            channels[0].0
        } else {
            channels[1].0
        };
    }
}
