//! Two-qubit joint-readout tomography.
//!
//! A tomography setting applies local pre-rotations U = u_B ⊗ u_A and then
//! measures the joint-readout observable
//!
//! ```text
//!   𝒪 = β₀ + β_A σ_z^A + β_B σ_z^B + β_BA σ_z^B σ_z^A,
//! ```
//!
//! so each averaged record has expectation Tr(𝒪 U ρ U†). Reconstruction is
//! by weighted linear inversion in the two-qubit Pauli basis (Hermitian and
//! trace-one by construction, possibly not PSD) and by maximum-likelihood
//! ascent over the Cholesky-style parameterization ρ = T†T / Tr(T†T), which
//! is PSD and trace-one exactly.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex;

use crate::cavity::BetaCoefficients;
use crate::entangle::TwoQubitDensityMatrix;
use crate::error::{Error, Result};
use crate::rng::{shot_rng, Stage};
use crate::scalar::Real;

type C<T> = Complex<T>;
type M4<T> = Matrix4<Complex<T>>;

/// Local pre-rotation gates used in tomography settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RotationGate {
    Identity,
    XHalf,
    XMinusHalf,
    YHalf,
    YMinusHalf,
    XFull,
}

impl RotationGate {
    /// The 36-setting overcomplete single-qubit set.
    pub const FULL_SET: [RotationGate; 6] = [
        RotationGate::Identity,
        RotationGate::XHalf,
        RotationGate::XMinusHalf,
        RotationGate::YHalf,
        RotationGate::YMinusHalf,
        RotationGate::XFull,
    ];

    /// The minimal informationally complete single-qubit set.
    pub const MINIMAL_SET: [RotationGate; 4] = [
        RotationGate::Identity,
        RotationGate::XHalf,
        RotationGate::YHalf,
        RotationGate::XFull,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            RotationGate::Identity => "i",
            RotationGate::XHalf => "x90",
            RotationGate::XMinusHalf => "xm90",
            RotationGate::YHalf => "y90",
            RotationGate::YMinusHalf => "ym90",
            RotationGate::XFull => "x180",
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        Ok(match label {
            "i" => RotationGate::Identity,
            "x90" => RotationGate::XHalf,
            "xm90" => RotationGate::XMinusHalf,
            "y90" => RotationGate::YHalf,
            "ym90" => RotationGate::YMinusHalf,
            "x180" => RotationGate::XFull,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown rotation gate {other:?}"
                )))
            }
        })
    }

    pub fn unitary<T: Real>(&self) -> Matrix2<C<T>> {
        let s = T::cast(std::f64::consts::FRAC_1_SQRT_2);
        let one = C::new(s, T::zero());
        let mi = C::new(T::zero(), -s);
        let pi_ = C::new(T::zero(), s);
        match self {
            RotationGate::Identity => Matrix2::identity(),
            RotationGate::XHalf => Matrix2::new(one, mi, mi, one),
            RotationGate::XMinusHalf => Matrix2::new(one, pi_, pi_, one),
            RotationGate::YHalf => Matrix2::new(one, -one, one, one),
            RotationGate::YMinusHalf => Matrix2::new(one, one, -one, one),
            RotationGate::XFull => Matrix2::new(
                C::new(T::zero(), T::zero()),
                C::new(T::zero(), -T::one()),
                C::new(T::zero(), -T::one()),
                C::new(T::zero(), T::zero()),
            ),
        }
    }
}

/// One tomography setting: pre-rotations of qubits A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Setting {
    pub rotation_a: RotationGate,
    pub rotation_b: RotationGate,
}

/// Tomography configuration: rotation set, readout coefficients, and the
/// per-shot noise of the averaged records.
#[derive(Debug, Clone)]
pub struct TomographySettings<T: Real> {
    pub settings: Vec<Setting>,
    pub betas: BetaCoefficients<T>,
    pub shots_per_setting: usize,
    /// Noise std of a single shot; the averaged record has standard error
    /// `shot_noise_std / sqrt(shots_per_setting)`.
    pub shot_noise_std: T,
}

impl<T: Real> TomographySettings<T> {
    /// The default 36-setting overcomplete set.
    pub fn full(betas: BetaCoefficients<T>, shots_per_setting: usize, shot_noise_std: T) -> Self {
        Self::from_gate_set(&RotationGate::FULL_SET, betas, shots_per_setting, shot_noise_std)
    }

    /// The 16-setting minimal set.
    pub fn minimal(
        betas: BetaCoefficients<T>,
        shots_per_setting: usize,
        shot_noise_std: T,
    ) -> Self {
        Self::from_gate_set(
            &RotationGate::MINIMAL_SET,
            betas,
            shots_per_setting,
            shot_noise_std,
        )
    }

    pub fn from_gate_set(
        gates: &[RotationGate],
        betas: BetaCoefficients<T>,
        shots_per_setting: usize,
        shot_noise_std: T,
    ) -> Self {
        let mut settings = Vec::with_capacity(gates.len() * gates.len());
        for gb in gates {
            for ga in gates {
                settings.push(Setting {
                    rotation_a: *ga,
                    rotation_b: *gb,
                });
            }
        }
        Self {
            settings,
            betas,
            shots_per_setting,
            shot_noise_std,
        }
    }

    /// Standard error of one averaged record.
    pub fn record_stderr(&self) -> T {
        let n = T::cast(self.shots_per_setting.max(1) as f64);
        self.shot_noise_std / n.sqrt()
    }

    /// Joint-readout observable 𝒪 (diagonal, σ_z eigenvalue +1 for |0⟩).
    pub fn observable(&self) -> M4<T> {
        let mut o = M4::zeros();
        for s in 0..4 {
            o[(s, s)] = C::new(self.betas.basis_expectation(s), T::zero());
        }
        o
    }

    /// Effective observable of setting `k`: U† 𝒪 U.
    pub fn setting_operator(&self, k: usize) -> M4<T> {
        let setting = &self.settings[k];
        let u = kron2(
            &setting.rotation_b.unitary::<T>(),
            &setting.rotation_a.unitary::<T>(),
        );
        u.adjoint() * self.observable() * u
    }
}

fn kron2<T: Real>(b: &Matrix2<C<T>>, a: &Matrix2<C<T>>) -> M4<T> {
    let mut out = M4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = b[(i, j)] * a[(k, l)];
                }
            }
        }
    }
    out
}

/// One averaged tomography record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord<T: Real> {
    pub setting_id: usize,
    pub mean_v: T,
    pub stderr_v: T,
}

/// Simulates the averaged records of all settings:
/// mean = Tr(𝒪 U ρ U†) plus Gaussian noise scaled by the shot count.
pub fn simulate_records<T: Real>(
    rho: &TwoQubitDensityMatrix<T>,
    settings: &TomographySettings<T>,
    seed: u64,
) -> Vec<MeasurementRecord<T>> {
    let stderr = settings.record_stderr();
    (0..settings.settings.len())
        .map(|k| {
            let op = settings.setting_operator(k);
            let mean = (op * rho.matrix()).trace().re;
            let mut rng = shot_rng(seed, Stage::TOMOGRAPHY, k as u64);
            let noise = if stderr > T::zero() {
                stderr * T::standard_normal(&mut rng)
            } else {
                T::zero()
            };
            MeasurementRecord {
                setting_id: k,
                mean_v: mean + noise,
                stderr_v: stderr,
            }
        })
        .collect()
}

/// Writes records as `setting_id,rotation_a,rotation_b,mean_v,stderr_v`.
pub fn write_records_csv<T: Real, W: std::io::Write>(
    out: &mut W,
    settings: &TomographySettings<T>,
    records: &[MeasurementRecord<T>],
) -> std::io::Result<()> {
    writeln!(out, "setting_id,rotation_a,rotation_b,mean_v,stderr_v")?;
    for r in records {
        let s = settings.settings[r.setting_id];
        writeln!(
            out,
            "{},{},{},{},{}",
            r.setting_id,
            s.rotation_a.label(),
            s.rotation_b.label(),
            r.mean_v.as_f64(),
            r.stderr_v.as_f64()
        )?;
    }
    Ok(())
}

/// The sixteen two-qubit Pauli matrices σ_b ⊗ σ_a, index 4·b + a over
/// {I, X, Y, Z}.
fn pauli_basis<T: Real>() -> [M4<T>; 16] {
    let zero = C::new(T::zero(), T::zero());
    let one = C::new(T::one(), T::zero());
    let i = C::new(T::zero(), T::one());
    let paulis: [Matrix2<C<T>>; 4] = [
        Matrix2::identity(),
        Matrix2::new(zero, one, one, zero),
        Matrix2::new(zero, -i, i, zero),
        Matrix2::new(one, zero, zero, -one),
    ];
    std::array::from_fn(|m| kron2(&paulis[m / 4], &paulis[m % 4]))
}

/// Design matrix A[k][m] = Tr(O_k P_m)/4 mapping Pauli coefficients to
/// record means.
fn design_matrix<T: Real>(settings: &TomographySettings<T>) -> DMatrix<T> {
    let basis = pauli_basis::<T>();
    let n = settings.settings.len();
    let quarter = T::cast(0.25);
    let mut a = DMatrix::zeros(n, 16);
    for k in 0..n {
        let op = settings.setting_operator(k);
        for (m, p) in basis.iter().enumerate() {
            a[(k, m)] = (op * p).trace().re * quarter;
        }
    }
    a
}

fn design_rank<T: Real>(a: &DMatrix<T>) -> usize {
    let svd = a.clone().svd(false, false);
    let max = svd
        .singular_values
        .iter()
        .fold(T::zero(), |acc, s| acc.max(*s));
    let tol = max * T::cast(1e-9);
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

/// Result of linear inversion: Hermitian and trace-one by construction, but
/// possibly with negative eigenvalues.
#[derive(Debug, Clone)]
pub struct LinearInversion<T: Real> {
    pub matrix: M4<T>,
    /// Smallest eigenvalue; negative values flag an unphysical estimate.
    pub min_eigenvalue: T,
}

impl<T: Real> LinearInversion<T> {
    pub fn is_physical(&self) -> bool {
        self.min_eigenvalue >= -T::tol_psd()
    }

    /// Projection onto physical states: eigenvalues clamped at zero and the
    /// trace renormalized.
    pub fn project_psd(&self) -> TwoQubitDensityMatrix<T> {
        psd_project(&self.matrix)
    }
}

/// Clamp eigenvalues at zero and renormalize the trace.
pub fn psd_project<T: Real>(m: &M4<T>) -> TwoQubitDensityMatrix<T> {
    let herm = (m + m.adjoint()) * C::new(T::cast(0.5), T::zero());
    let eigen = SymmetricEigen::new(herm);
    let q = eigen.eigenvectors;
    let mut d = M4::zeros();
    let mut trace = T::zero();
    for (i, l) in eigen.eigenvalues.iter().enumerate() {
        let c = l.max(T::zero());
        d[(i, i)] = C::new(c, T::zero());
        trace += c;
    }
    let projected = &q * d * q.adjoint() / C::new(trace, T::zero());
    TwoQubitDensityMatrix::new(projected).expect("projection yields a valid state")
}

/// Weighted least-squares inversion of the records in the Pauli basis.
///
/// The identity component is fixed by the trace normalization, which acts as
/// one synthetic row of the design; informational completeness therefore
/// requires the remaining 15 Pauli columns to have full rank.
pub fn linear_inversion<T: Real>(
    records: &[MeasurementRecord<T>],
    settings: &TomographySettings<T>,
) -> Result<LinearInversion<T>> {
    let a = design_matrix(settings);
    let reduced = a.columns(1, 15).clone_owned();
    let rank = design_rank(&reduced) + 1;
    if rank < 16 {
        return Err(Error::RankDeficient { rank });
    }
    if records.len() != settings.settings.len() {
        return Err(Error::InvalidArgument(format!(
            "{} records for {} settings",
            records.len(),
            settings.settings.len()
        )));
    }

    // Fix the identity coefficient x_0 = 1 (unit trace) and solve for the
    // remaining 15, weighting rows by the inverse standard errors.
    let n = records.len();
    let floor = T::cast(1e-12);
    let mut aw = DMatrix::zeros(n, 15);
    let mut bw = DVector::zeros(n);
    for (k, r) in records.iter().enumerate() {
        let w = T::one() / r.stderr_v.max(floor);
        for m in 1..16 {
            aw[(k, m - 1)] = a[(k, m)] * w;
        }
        bw[k] = (r.mean_v - a[(k, 0)]) * w;
    }
    let svd = aw.svd(true, true);
    let x = svd
        .solve(&bw, T::cast(1e-12))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let basis = pauli_basis::<T>();
    let quarter = C::new(T::cast(0.25), T::zero());
    let mut m4 = basis[0] * quarter;
    for m in 1..16 {
        m4 += basis[m] * quarter * C::new(x[m - 1], T::zero());
    }

    let herm = (m4 + m4.adjoint()) * C::new(T::cast(0.5), T::zero());
    let min_eigenvalue = SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .fold(T::cast(f64::INFINITY), |acc, l| acc.min(*l));
    Ok(LinearInversion {
        matrix: m4,
        min_eigenvalue,
    })
}

/// Gaussian log-likelihood of a candidate state given the records.
pub fn log_likelihood<T: Real>(
    m: &M4<T>,
    records: &[MeasurementRecord<T>],
    settings: &TomographySettings<T>,
) -> T {
    let floor = T::cast(1e-12);
    let mut ll = T::zero();
    for r in records {
        let op = settings.setting_operator(r.setting_id);
        let predicted = (op * m).trace().re;
        let w = T::one() / r.stderr_v.max(floor);
        let resid = (r.mean_v - predicted) * w;
        ll -= resid * resid / T::cast(2.0);
    }
    ll
}

/// Maximum-likelihood reconstruction.
#[derive(Debug, Clone)]
pub struct MleResult<T: Real> {
    pub rho: TwoQubitDensityMatrix<T>,
    pub log_likelihood: T,
    pub iterations: usize,
    pub gradient_norm: T,
    /// Cleared when the gradient-norm target was not reached within the
    /// iteration budget; the best iterate is still returned.
    pub converged: bool,
}

const MLE_MAX_ITERATIONS: usize = 5000;
const MLE_GRADIENT_TOL: f64 = 1e-7;

/// Triangular parameterization of ρ = T†T/Tr(T†T): 4 real diagonal entries
/// followed by (re, im) pairs of the 6 above-diagonal entries. With T upper
/// triangular, ρ = LL† from a Cholesky factor seeds it exactly as T = L†.
fn params_to_t<T: Real>(theta: &[T; 16]) -> M4<T> {
    let mut t = M4::zeros();
    for i in 0..4 {
        t[(i, i)] = C::new(theta[i], T::zero());
    }
    let mut idx = 4;
    for i in 0..4 {
        for j in (i + 1)..4 {
            t[(i, j)] = C::new(theta[idx], theta[idx + 1]);
            idx += 2;
        }
    }
    t
}

fn rho_from_t<T: Real>(t: &M4<T>) -> M4<T> {
    let m = t.adjoint() * t;
    let trace = m.trace().re;
    m / C::new(trace, T::zero())
}

/// Maximizes the Gaussian likelihood over ρ = T†T / Tr(T†T) by gradient
/// ascent with a backtracking line search, starting from the PSD-projected
/// linear-inversion estimate.
pub fn mle_reconstruct<T: Real>(
    records: &[MeasurementRecord<T>],
    settings: &TomographySettings<T>,
) -> Result<MleResult<T>> {
    let linear = linear_inversion(records, settings)?;
    let init = linear.project_psd();

    // Cholesky of the (regularized) projected estimate seeds T.
    let reg = init.matrix() + M4::identity() * C::new(T::cast(1e-9), T::zero());
    let chol = reg
        .clone_owned()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("initial state not factorizable".into()))?;
    let l = chol.l();
    // ρ_reg = LL† = (L†)†(L†), so T = L† seeds the parameterization exactly.
    let mut theta = [T::zero(); 16];
    {
        let t0 = l.adjoint();
        for i in 0..4 {
            theta[i] = t0[(i, i)].re;
        }
        let mut idx = 4;
        for i in 0..4 {
            for j in (i + 1)..4 {
                theta[idx] = t0[(i, j)].re;
                theta[idx + 1] = t0[(i, j)].im;
                idx += 2;
            }
        }
    }

    let precomputed: Vec<(M4<T>, T, T)> = records
        .iter()
        .map(|r| {
            let op = settings.setting_operator(r.setting_id);
            let w = T::one() / r.stderr_v.max(T::cast(1e-12));
            (op, r.mean_v, w)
        })
        .collect();

    let ll_of = |theta: &[T; 16]| -> T {
        let t = params_to_t(theta);
        let rho = rho_from_t(&t);
        let mut ll = T::zero();
        for (op, mean, w) in &precomputed {
            let resid = (*mean - (op * rho).trace().re) * *w;
            ll -= resid * resid / T::cast(2.0);
        }
        ll
    };

    let grad_of = |theta: &[T; 16]| -> ([T; 16], T) {
        let t = params_to_t(theta);
        let tt = t.adjoint() * t;
        let tau = tt.trace().re;
        let rho = tt / C::new(tau, T::zero());

        let mut ll = T::zero();
        let mut g = M4::zeros();
        for (op, mean, w) in &precomputed {
            let resid = (*mean - (op * rho).trace().re) * *w;
            ll -= resid * resid / T::cast(2.0);
            g += op * C::new(resid * *w, T::zero());
        }
        let g_rho = (g.clone() * rho).trace().re;
        let m = (g - M4::identity() * C::new(g_rho, T::zero())) / C::new(tau, T::zero());
        let w_mat = m * t.adjoint();

        // dL/dθ through δT: 2·Re[(M T†)_{ji}] for direction e_i e_j^T and
        // -2·Im for the imaginary direction.
        let two = T::cast(2.0);
        let mut grad = [T::zero(); 16];
        for i in 0..4 {
            grad[i] = two * w_mat[(i, i)].re;
        }
        let mut idx = 4;
        for i in 0..4 {
            for j in (i + 1)..4 {
                grad[idx] = two * w_mat[(j, i)].re;
                grad[idx + 1] = -two * w_mat[(j, i)].im;
                idx += 2;
            }
        }
        (grad, ll)
    };

    let mut step = T::cast(0.1);
    let mut iterations = 0usize;
    let mut grad_norm = T::cast(f64::INFINITY);
    let mut converged = false;
    let mut current_ll = ll_of(&theta);

    while iterations < MLE_MAX_ITERATIONS {
        iterations += 1;
        let (grad, ll) = grad_of(&theta);
        current_ll = ll;
        grad_norm = grad
            .iter()
            .map(|g| *g * *g)
            .sum::<T>()
            .sqrt();
        if grad_norm < T::cast(MLE_GRADIENT_TOL) {
            converged = true;
            break;
        }

        // Backtracking line search (Armijo).
        let mut improved = false;
        for _ in 0..40 {
            let mut candidate = theta;
            for (c, g) in candidate.iter_mut().zip(grad.iter()) {
                *c += step * *g;
            }
            normalize_params(&mut candidate);
            let cand_ll = ll_of(&candidate);
            if cand_ll >= ll + T::cast(1e-4) * step * grad_norm * grad_norm {
                theta = candidate;
                current_ll = cand_ll;
                step *= T::cast(1.5);
                improved = true;
                break;
            }
            step *= T::cast(0.5);
        }
        if !improved {
            // Line search stalled at numerical precision.
            break;
        }
    }

    let rho_m = rho_from_t(&params_to_t(&theta));
    let rho = TwoQubitDensityMatrix::new(rho_m)
        .unwrap_or_else(|_| psd_project(&rho_m));
    Ok(MleResult {
        rho,
        log_likelihood: current_ll,
        iterations,
        gradient_norm: grad_norm,
        converged,
    })
}

/// Keeps the overall scale of T bounded (ρ is scale invariant).
fn normalize_params<T: Real>(theta: &mut [T; 16]) {
    let norm = theta
        .iter()
        .map(|x| *x * *x)
        .sum::<T>()
        .sqrt();
    if norm > T::zero() {
        for x in theta.iter_mut() {
            *x /= norm;
        }
    }
}
