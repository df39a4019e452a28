//! Random-state helpers shared by unit tests.

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex;
use rand_chacha::ChaCha8Rng;

use crate::entangle::TwoQubitDensityMatrix;
use crate::scalar::Real;

/// Hilbert-Schmidt random density matrix: GG†/Tr(GG†).
pub fn random_state(rng: &mut ChaCha8Rng) -> TwoQubitDensityMatrix<f64> {
    let mut g = Matrix4::<Complex<f64>>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            g[(i, j)] = Complex::new(f64::standard_normal(rng), f64::standard_normal(rng));
        }
    }
    let m = &g * g.adjoint();
    let trace = m.trace().re;
    TwoQubitDensityMatrix::new(m / Complex::new(trace, 0.0)).expect("GG† is a valid state")
}

/// Haar-ish random local unitary u_B ⊗ u_A from QR of Ginibre samples.
pub fn random_local_unitary(rng: &mut ChaCha8Rng) -> Matrix4<Complex<f64>> {
    let haar2 = |rng: &mut ChaCha8Rng| -> Matrix2<Complex<f64>> {
        let g = Matrix2::new(
            Complex::new(f64::standard_normal(rng), f64::standard_normal(rng)),
            Complex::new(f64::standard_normal(rng), f64::standard_normal(rng)),
            Complex::new(f64::standard_normal(rng), f64::standard_normal(rng)),
            Complex::new(f64::standard_normal(rng), f64::standard_normal(rng)),
        );
        g.qr().q()
    };
    let ua = haar2(rng);
    let ub = haar2(rng);
    let mut u = Matrix4::zeros();
    for b in 0..2 {
        for a in 0..2 {
            for bb in 0..2 {
                for aa in 0..2 {
                    u[(2 * b + a, 2 * bb + aa)] = ub[(b, bb)] * ua[(a, aa)];
                }
            }
        }
    }
    u
}
