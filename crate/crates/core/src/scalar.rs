//! Scalar abstraction for the simulation math.
//!
//! All numerics in this crate are generic over [`Real`], which is implemented
//! for `f32` and `f64`. The trait bundles the field/transcendental operations
//! from [`nalgebra::RealField`] with the handful of extras the simulations
//! need: the error function, reproducible sampling hooks, and the validation
//! tolerances that scale with the precision of the type.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar usable throughout the crate (`f32` or `f64`).
pub trait Real: RealField + Copy + Default + FromPrimitive + ToPrimitive + std::iter::Sum {
    /// Gauss error function erf(x).
    fn erf(self) -> Self;

    /// Complementary error function erfc(x).
    fn erfc(self) -> Self;

    /// Inverse of erfc, used to convert tail probabilities into z-scores.
    fn erfc_inv(self) -> Self;

    /// Standard normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw from the half-open interval (0, 1] (safe for `ln`).
    fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Conversion from an `f64` constant or config value.
    fn cast(value: f64) -> Self;

    /// Lossy view as `f64` for reporting and serialization.
    fn as_f64(self) -> f64;

    /// Tolerance for probability-simplex checks (sum-to-one, non-negativity).
    fn tol_simplex() -> Self;

    /// Tolerance for Hermiticity / trace checks on density matrices.
    fn tol_herm() -> Self;

    /// Allowed negative-eigenvalue slack when validating density matrices.
    fn tol_psd() -> Self;

    /// Upper-tail probability of a unit normal, Q(z) = P(X > z).
    fn normal_tail(z: Self) -> Self {
        let half = Self::cast(0.5);
        half * (z / Self::cast(std::f64::consts::SQRT_2)).erfc()
    }
}

impl Real for f64 {
    fn erf(self) -> Self {
        statrs::function::erf::erf(self)
    }

    fn erfc(self) -> Self {
        statrs::function::erf::erfc(self)
    }

    fn erfc_inv(self) -> Self {
        statrs::function::erf::erfc_inv(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self {
        1.0 - rng.gen::<f64>()
    }

    fn cast(value: f64) -> Self {
        value
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn tol_simplex() -> Self {
        1e-12
    }

    fn tol_herm() -> Self {
        1e-10
    }

    fn tol_psd() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn erf(self) -> Self {
        statrs::function::erf::erf(self as f64) as f32
    }

    fn erfc(self) -> Self {
        statrs::function::erf::erfc(self as f64) as f32
    }

    fn erfc_inv(self) -> Self {
        statrs::function::erf::erfc_inv(self as f64) as f32
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn unit_open<R: Rng + ?Sized>(rng: &mut R) -> Self {
        1.0 - rng.gen::<f32>()
    }

    fn cast(value: f64) -> Self {
        value as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn tol_simplex() -> Self {
        1e-5
    }

    fn tol_herm() -> Self {
        1e-4
    }

    fn tol_psd() -> Self {
        1e-3
    }
}
