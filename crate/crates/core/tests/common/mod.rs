//! Shared brute-force oracles for the integration tests.
//!
//! These deliberately avoid the code paths used by the library: eigenvalues
//! of complex 4×4 matrices are obtained from the real Schur form of the 8×8
//! real embedding [[Re, -Im], [Im, Re]], whose spectrum is the original
//! spectrum together with its complex conjugate.

#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex;

/// Eigenvalues (real parts) of a complex 4×4 matrix whose spectrum is known
/// to be real, via the real 8×8 embedding.
pub fn real_eigenvalues_via_embedding(m: &Matrix4<Complex<f64>>) -> Vec<f64> {
    let mut embed = DMatrix::<f64>::zeros(8, 8);
    for i in 0..4 {
        for j in 0..4 {
            embed[(i, j)] = m[(i, j)].re;
            embed[(i, j + 4)] = -m[(i, j)].im;
            embed[(i + 4, j)] = m[(i, j)].im;
            embed[(i + 4, j + 4)] = m[(i, j)].re;
        }
    }
    let eigs = embed.complex_eigenvalues();
    let mut re: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Every eigenvalue of m appears twice (once per conjugate copy).
    re.into_iter().step_by(2).collect()
}

/// Wootters concurrence by brute force: eigenvalues of the non-Hermitian
/// ρ·(σy⊗σy)ρ*(σy⊗σy) via the real embedding.
pub fn concurrence_oracle(rho: &Matrix4<Complex<f64>>) -> f64 {
    let mut yy = Matrix4::<Complex<f64>>::zeros();
    yy[(0, 3)] = Complex::new(-1.0, 0.0);
    yy[(1, 2)] = Complex::new(1.0, 0.0);
    yy[(2, 1)] = Complex::new(1.0, 0.0);
    yy[(3, 0)] = Complex::new(-1.0, 0.0);
    let rho_tilde = yy * rho.map(|z| z.conj()) * yy;
    let r = rho * rho_tilde;
    let mut lambdas: Vec<f64> = real_eigenvalues_via_embedding(&r)
        .into_iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0)
}

/// Logarithmic negativity by brute force: partial transpose over the left
/// factor, eigenvalues via the real embedding, log2 of the trace norm.
pub fn log_negativity_oracle(rho: &Matrix4<Complex<f64>>) -> f64 {
    let mut pt = Matrix4::<Complex<f64>>::zeros();
    for rb in 0..2 {
        for ra in 0..2 {
            for cb in 0..2 {
                for ca in 0..2 {
                    pt[(2 * cb + ra, 2 * rb + ca)] = rho[(2 * rb + ra, 2 * cb + ca)];
                }
            }
        }
    }
    let trace_norm: f64 = real_eigenvalues_via_embedding(&pt)
        .into_iter()
        .map(f64::abs)
        .sum();
    trace_norm.max(1.0).log2()
}
