//! Single-shot dispersive readout: voltage generation, digitization,
//! threshold optimization, postselection, and repeatability statistics.
//!
//! A shot integrates the homodyne voltage over a window `t_meas`. The
//! measured transmon may undergo at most one level transition inside the
//! window (higher orders are below the percent level in all regimes of
//! interest); the voltage is then the time-weighted mixture of the pre- and
//! post-jump means plus Gaussian noise of width `sigma`.
//!
//! Digitized results are labeled `H` (declared |0⟩) and `L` (declared |1⟩).
//! The voltage tie at the threshold goes to `L`.

use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::qubit_dynamics::TransitionRates;
use crate::scalar::Real;

pub mod bench;

/// Digitized measurement result: `H` declares |0⟩, `L` declares |1⟩.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasResult {
    High,
    Low,
}

impl MeasResult {
    pub fn is_high(self) -> bool {
        matches!(self, MeasResult::High)
    }
}

/// Which voltage side the declared-|0⟩ result lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutPolarity {
    /// |0⟩ produces the high-voltage peak; `H` iff v > threshold.
    GroundHigh,
    /// |0⟩ produces the low-voltage peak; `H` iff v < threshold.
    GroundLow,
}

/// Gaussian single-shot voltage model for the three declared levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotModel<T: Real> {
    /// Mean integrated voltage per level (arb. units). The |2⟩ mean defaults
    /// to the |1⟩ mean: binary digitization does not separate them.
    pub mu: [T; 3],
    /// Noise standard deviation of the integrated voltage.
    pub sigma: T,
    /// Measurement/integration window, µs.
    pub t_meas: T,
}

impl<T: Real> ShotModel<T> {
    pub fn new(mu0: T, mu1: T, sigma: T, t_meas: T) -> Result<Self> {
        Self::with_mu2(mu0, mu1, mu1, sigma, t_meas)
    }

    pub fn with_mu2(mu0: T, mu1: T, mu2: T, sigma: T, t_meas: T) -> Result<Self> {
        if sigma <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "sigma = {} must be positive",
                sigma.as_f64()
            )));
        }
        if t_meas <= T::zero() {
            return Err(Error::InvalidArgument(format!(
                "t_meas = {} must be positive",
                t_meas.as_f64()
            )));
        }
        Ok(Self {
            mu: [mu0, mu1, mu2],
            sigma,
            t_meas,
        })
    }
}

/// Digitization threshold voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<T: Real> {
    pub v: T,
}

impl<T: Real> Threshold<T> {
    pub fn new(v: T) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::InvalidArgument("threshold must be finite".into()));
        }
        Ok(Self { v })
    }
}

/// Noise width that produces a given one-sided misassignment probability for
/// two Gaussian peaks separated by `separation` and split at the midpoint.
pub fn sigma_for_misassignment<T: Real>(separation: T, misassignment: T) -> T {
    let two = T::cast(2.0);
    separation.abs() / (two * T::cast(std::f64::consts::SQRT_2) * (two * misassignment).erfc_inv())
}

/// Single transition sampled inside a window: (jump time, destination).
pub(crate) fn sample_single_jump<R: Rng + ?Sized, T: Real>(
    level: usize,
    rates: &TransitionRates<T>,
    window: T,
    rng: &mut R,
) -> Option<(T, usize)> {
    let out = rates.outflow(level);
    if out <= T::zero() {
        return None;
    }
    let wait = -T::unit_open(rng).ln() / out;
    if wait >= window {
        return None;
    }
    let dest = match level {
        0 => 1,
        2 => 1,
        1 => {
            let u = T::unit_open(rng) * out;
            if u <= rates.g10 {
                0
            } else {
                2
            }
        }
        _ => panic!("level index {level} out of range"),
    };
    Some((wait, dest))
}

/// Generates one single-shot readout of a qubit in `true_state`.
///
/// Returns the integrated voltage and the level at the end of the window.
pub fn generate_shot<R: Rng + ?Sized, T: Real>(
    true_state: usize,
    model: &ShotModel<T>,
    rates: &TransitionRates<T>,
    rng: &mut R,
) -> (T, usize) {
    let noise = model.sigma * T::standard_normal(rng);
    match sample_single_jump(true_state, rates, model.t_meas, rng) {
        None => (model.mu[true_state] + noise, true_state),
        Some((t_jump, dest)) => {
            let mean = (t_jump * model.mu[true_state] + (model.t_meas - t_jump) * model.mu[dest])
                / model.t_meas;
            (mean + noise, dest)
        }
    }
}

/// Digitizes a voltage. Ties at the threshold go to `L`.
pub fn digitize<T: Real>(v: T, threshold: Threshold<T>, polarity: ReadoutPolarity) -> MeasResult {
    let high = match polarity {
        ReadoutPolarity::GroundHigh => v > threshold.v,
        ReadoutPolarity::GroundLow => v < threshold.v,
    };
    if high {
        MeasResult::High
    } else {
        MeasResult::Low
    }
}

/// Threshold maximizing the contrast between the empirical cumulative
/// histograms of the two prepared states.
///
/// The search runs over the midpoints of adjacent pooled samples (the exact
/// empirical argmax); a run of tying intervals resolves to its midpoint.
/// Returns the threshold and the achieved contrast.
pub fn optimal_threshold<T: Real>(
    shots_h_prep: &[T],
    shots_l_prep: &[T],
) -> Result<(Threshold<T>, T)> {
    if shots_h_prep.is_empty() || shots_l_prep.is_empty() {
        return Err(Error::InvalidArgument(
            "optimal_threshold requires two non-empty shot sets".into(),
        ));
    }

    let mut pooled: Vec<T> = shots_h_prep
        .iter()
        .copied()
        .chain(shots_l_prep.iter().copied())
        .collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();

    if pooled.len() == 1 {
        return Ok((Threshold::new(pooled[0])?, T::zero()));
    }

    let mut a_sorted = shots_h_prep.to_vec();
    let mut b_sorted = shots_l_prep.to_vec();
    a_sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b_sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let na = T::cast(a_sorted.len() as f64);
    let nb = T::cast(b_sorted.len() as f64);

    // Walk the cut positions between consecutive pooled values, tracking the
    // cumulative fraction of each set at or below the cut.
    let mut ia = 0usize;
    let mut ib = 0usize;
    let mut best = T::zero();
    let mut run: Option<(usize, usize)> = None;
    let mut best_run: Option<(usize, usize)> = None;

    for (k, x) in pooled[..pooled.len() - 1].iter().enumerate() {
        while ia < a_sorted.len() && a_sorted[ia] <= *x {
            ia += 1;
        }
        while ib < b_sorted.len() && b_sorted[ib] <= *x {
            ib += 1;
        }
        let fa = T::cast(ia as f64) / na;
        let fb = T::cast(ib as f64) / nb;
        let d = (fa - fb).abs();
        if d > best {
            best = d;
            run = Some((k, k));
            best_run = run;
        } else if d == best {
            match run {
                Some((start, end)) if end + 1 == k => {
                    run = Some((start, k));
                    if best_run.map(|(s, _)| s) == Some(start) {
                        best_run = run;
                    }
                }
                _ => run = Some((k, k)),
            }
        } else {
            run = None;
        }
    }

    let (start, end) = best_run.unwrap_or((0, 0));
    let half = T::cast(0.5);
    let threshold = (pooled[start] + pooled[end + 1]) * half;
    Ok((Threshold::new(threshold)?, best))
}

/// Keeps the voltages whose paired heralding result is `H`.
///
/// Returns the kept voltages and the kept fraction.
pub fn postselect_ground<T: Real>(pairs: &[(MeasResult, T)]) -> Result<(Vec<T>, T)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "postselect_ground requires a non-empty shot list".into(),
        ));
    }
    let kept: Vec<T> = pairs
        .iter()
        .filter(|(m, _)| m.is_high())
        .map(|(_, v)| *v)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySelection);
    }
    let fraction = T::cast(kept.len() as f64) / T::cast(pairs.len() as f64);
    Ok((kept, fraction))
}

/// Conditional repeatability of consecutive digitized measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QndCorrelations<T: Real> {
    /// P(second = H | first = H); `None` if no first-H shots exist.
    pub p_h_given_h: Option<T>,
    /// P(second = L | first = L); `None` if no first-L shots exist.
    pub p_l_given_l: Option<T>,
    pub n_first_h: usize,
    pub n_first_l: usize,
}

/// Empirical conditional frequencies for pairs of consecutive results.
pub fn qnd_correlations<T: Real>(shot_pairs: &[(MeasResult, MeasResult)]) -> QndCorrelations<T> {
    let mut n_h = 0usize;
    let mut n_hh = 0usize;
    let mut n_l = 0usize;
    let mut n_ll = 0usize;
    for (first, second) in shot_pairs {
        match first {
            MeasResult::High => {
                n_h += 1;
                if second.is_high() {
                    n_hh += 1;
                }
            }
            MeasResult::Low => {
                n_l += 1;
                if !second.is_high() {
                    n_ll += 1;
                }
            }
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| T::cast(num as f64) / T::cast(den as f64));
    QndCorrelations {
        p_h_given_h: ratio(n_hh, n_h),
        p_l_given_l: ratio(n_ll, n_l),
        n_first_h: n_h,
        n_first_l: n_l,
    }
}

/// Assignment probabilities p^M_ij: result `M` with pre-measurement state |i⟩
/// and post-measurement state |j⟩. For each i the entries sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutErrorModel<T: Real> {
    /// Indexed `[m][i][j]` with m = 0 for `H`, 1 for `L`.
    p: [[[T; 3]; 3]; 2],
}

impl<T: Real> ReadoutErrorModel<T> {
    pub fn new(p: [[[T; 3]; 3]; 2]) -> Result<Self> {
        let tol = T::tol_simplex() * T::cast(1e3);
        for i in 0..3 {
            let mut sum = T::zero();
            for m in 0..2 {
                for j in 0..3 {
                    let v = p[m][i][j];
                    if v < -tol || v > T::one() + tol {
                        return Err(Error::InvalidDistribution(format!(
                            "p[{m}][{i}][{j}] = {} outside [0, 1]",
                            v.as_f64()
                        )));
                    }
                    sum += v;
                }
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidDistribution(format!(
                    "assignment probabilities for pre-state {i} sum to {}",
                    sum.as_f64()
                )));
            }
        }
        Ok(Self { p })
    }

    /// Ideal readout: result always matches the (unchanged) true state.
    pub fn zero_error() -> Self {
        let mut p = [[[T::zero(); 3]; 3]; 2];
        p[0][0][0] = T::one();
        p[1][1][1] = T::one();
        p[1][2][2] = T::one();
        Self { p }
    }

    /// Pure assignment errors with the qubit state unchanged: |0⟩ reads `L`
    /// with probability `eps_ground`, |1⟩ and |2⟩ read `H` with probability
    /// `eps_excited`.
    pub fn with_assignment_errors(eps_ground: T, eps_excited: T) -> Result<Self> {
        let mut p = [[[T::zero(); 3]; 3]; 2];
        p[1][0][0] = eps_ground;
        p[0][0][0] = T::one() - eps_ground;
        p[0][1][1] = eps_excited;
        p[1][1][1] = T::one() - eps_excited;
        p[0][2][2] = eps_excited;
        p[1][2][2] = T::one() - eps_excited;
        Self::new(p)
    }

    /// Analytic composition of Gaussian assignment tails with the one-jump
    /// transition model: the probabilities realized by [`generate_shot`]
    /// followed by [`digitize`].
    pub fn from_shot_model(
        model: &ShotModel<T>,
        rates: &TransitionRates<T>,
        threshold: Threshold<T>,
        polarity: ReadoutPolarity,
    ) -> Result<Self> {
        let p_high = |mean: T| -> T {
            let z = match polarity {
                ReadoutPolarity::GroundHigh => (threshold.v - mean) / model.sigma,
                ReadoutPolarity::GroundLow => (mean - threshold.v) / model.sigma,
            };
            T::normal_tail(z)
        };

        let mut p = [[[T::zero(); 3]; 3]; 2];
        for i in 0..3 {
            let out = rates.outflow(i);
            let stay = (-out * model.t_meas).exp();
            let ph = p_high(model.mu[i]);
            p[0][i][i] = stay * ph;
            p[1][i][i] = stay * (T::one() - ph);

            let channels: [(usize, T); 2] = match i {
                0 => [(1, rates.g01), (0, T::zero())],
                1 => [(0, rates.g10), (2, rates.g12)],
                _ => [(1, rates.g21), (2, T::zero())],
            };
            for (dest, g) in channels {
                if g <= T::zero() || dest == i {
                    continue;
                }
                // P(jump to dest AND read H)
                //   = ∫₀ᵗ g e^{-out·s} · P_H(mixed mean(s)) ds  (Simpson)
                let n = 400usize;
                let h = model.t_meas / T::cast(n as f64);
                let f = |s: T| -> T {
                    let mean =
                        (s * model.mu[i] + (model.t_meas - s) * model.mu[dest]) / model.t_meas;
                    g * (-out * s).exp() * p_high(mean)
                };
                let mut acc = f(T::zero()) + f(model.t_meas);
                for k in 1..n {
                    let w = if k % 2 == 1 {
                        T::cast(4.0)
                    } else {
                        T::cast(2.0)
                    };
                    acc += w * f(T::cast(k as f64) * h);
                }
                let p_jump_h = acc * h / T::cast(3.0);
                let p_jump_total = g / out * (T::one() - stay);
                p[0][i][dest] = p_jump_h;
                p[1][i][dest] = (p_jump_total - p_jump_h).max(T::zero());
            }
        }
        Self::new(p)
    }

    /// p^M_ij.
    pub fn p(&self, m: MeasResult, i: usize, j: usize) -> T {
        let mi = if m.is_high() { 0 } else { 1 };
        self.p[mi][i][j]
    }

    /// Probability of leaking |1⟩ → |2⟩ during the measurement.
    pub fn p12(&self) -> T {
        self.p[0][1][2] + self.p[1][1][2]
    }
}

/// Fixed-width histogram of two shot sets sharing common bins.
#[derive(Debug, Clone)]
pub struct HistogramTable<T: Real> {
    pub bin_left: Vec<T>,
    pub bin_right: Vec<T>,
    pub count_prep0: Vec<u64>,
    pub count_prep1: Vec<u64>,
}

/// Bins both shot sets over their pooled range.
pub fn histogram<T: Real>(shots0: &[T], shots1: &[T], n_bins: usize) -> Result<HistogramTable<T>> {
    if n_bins == 0 || shots0.is_empty() || shots1.is_empty() {
        return Err(Error::InvalidArgument(
            "histogram requires non-empty shot sets and at least one bin".into(),
        ));
    }
    let mut lo = shots0[0];
    let mut hi = shots0[0];
    for v in shots0.iter().chain(shots1.iter()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if hi <= lo {
        hi = lo + T::one();
    }
    let width = (hi - lo) / T::cast(n_bins as f64);
    let mut table = HistogramTable {
        bin_left: Vec::with_capacity(n_bins),
        bin_right: Vec::with_capacity(n_bins),
        count_prep0: vec![0; n_bins],
        count_prep1: vec![0; n_bins],
    };
    for k in 0..n_bins {
        table.bin_left.push(lo + width * T::cast(k as f64));
        table.bin_right.push(lo + width * T::cast((k + 1) as f64));
    }
    let index = |v: T| -> usize {
        let idx = ((v - lo) / width).floor().as_f64() as usize;
        idx.min(n_bins - 1)
    };
    for v in shots0 {
        table.count_prep0[index(*v)] += 1;
    }
    for v in shots1 {
        table.count_prep1[index(*v)] += 1;
    }
    Ok(table)
}

/// Writes the histogram as `bin_left,bin_right,count_prep0,count_prep1`.
pub fn write_histogram_csv<T: Real, W: Write>(
    out: &mut W,
    table: &HistogramTable<T>,
) -> io::Result<()> {
    writeln!(out, "bin_left,bin_right,count_prep0,count_prep1")?;
    for k in 0..table.bin_left.len() {
        writeln!(
            out,
            "{},{},{},{}",
            table.bin_left[k].as_f64(),
            table.bin_right[k].as_f64(),
            table.count_prep0[k],
            table.count_prep1[k]
        )?;
    }
    Ok(())
}
