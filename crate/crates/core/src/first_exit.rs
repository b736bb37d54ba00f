//! Exit of a driftless unit-variance Brownian motion from an interval.
//!
//! For a start point `0 < v₀ < a` the survival probability is the sine series
//!
//! ```text
//! P(T > t) = 4/π Σₖ 1/(2k+1) · exp(−(2k+1)² π² t / (2a²)) · sin((2k+1) π v₀ / a)
//! ```
//!
//! The ETC inter-event time `T_ET` is the first exit of any of `N`
//! independent motions from `(−Δ, Δ)`, i.e. interval width `2Δ` with the
//! start in the middle, so `P(T_ET > t) = P(T > t)^N`. Everything public here
//! uses `Δ = 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;

/// Below this `t / a²` the series is replaced by 1 when a Gaussian tail
/// bound shows the exit probability is under tolerance.
const SMALL_TIME_RATIO: f64 = 1e-4;

const MAX_SERIES_TERMS: u64 = 50_000_000;

const MAX_QUADRATURE_SEGMENTS: usize = 20_000;

/// Parameters of one interval-exit survival evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalExitQuery {
    /// Start point, strictly inside `(0, width)`.
    pub start: f64,
    pub width: f64,
    /// Elapsed time, `≥ 0`.
    pub time: f64,
    /// Absolute tolerance on the dropped series tail.
    pub tolerance: f64,
}

impl IntervalExitQuery {
    pub fn new(start: f64, width: f64, time: f64, tolerance: f64) -> Result<Self> {
        let query = IntervalExitQuery {
            start,
            width,
            time,
            tolerance,
        };
        query.validate()?;
        Ok(query)
    }

    /// Start in the middle of `(0, 2·half_width)`: a motion started at a
    /// trigger reference and watched against `±half_width`.
    pub fn centered(half_width: f64, time: f64, tolerance: f64) -> Result<Self> {
        Self::new(half_width, 2.0 * half_width, time, tolerance)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(Error::param(
                "width",
                self.width,
                "must be positive and finite",
            ));
        }
        if !(self.start > 0.0 && self.start < self.width) {
            return Err(Error::param(
                "start",
                self.start,
                "must lie strictly inside (0, width)",
            ));
        }
        if !(self.time >= 0.0) || !self.time.is_finite() {
            return Err(Error::param(
                "time",
                self.time,
                "must be finite and non-negative",
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param(
                "tolerance",
                self.tolerance,
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// Value of the survival series with truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalResult {
    /// Survival probability clamped to `[0, 1]`.
    pub probability: f64,
    pub terms_used: u64,
    /// Upper bound on the magnitude of the dropped tail.
    pub truncation_bound: f64,
    /// Partial sum before clamping.
    pub unclamped: f64,
}

/// `P_{v₀}(T_{0,a} > t)` for a Brownian motion started at `query.start`.
///
/// The tail after term `k` is bounded by its envelope
/// `4/(π(2k+1))·exp(−(2k+1)²s)` times `1/(1−exp(−8(k+1)s))`, `s = π²t/(2a²)`,
/// since successive envelopes shrink at least by that ratio. Summation stops
/// once the bound is below tolerance.
pub fn survival_single(query: &IntervalExitQuery) -> Result<SurvivalResult> {
    query.validate()?;
    let IntervalExitQuery {
        start,
        width,
        time,
        tolerance,
    } = *query;

    let exact_one = SurvivalResult {
        probability: 1.0,
        terms_used: 1,
        truncation_bound: 0.0,
        unclamped: 1.0,
    };
    if time == 0.0 {
        return Ok(exact_one);
    }
    if time / (width * width) < SMALL_TIME_RATIO {
        // P(exit by t) ≤ P(hit 0) + P(hit a) ≤ exp(−v₀²/2t) + exp(−(a−v₀)²/2t).
        let near = (-start * start / (2.0 * time)).exp();
        let far = (-(width - start).powi(2) / (2.0 * time)).exp();
        let bound = near + far;
        if bound <= tolerance {
            return Ok(SurvivalResult {
                truncation_bound: bound,
                ..exact_one
            });
        }
    }

    let decay = PI * PI * time / (2.0 * width * width);
    let phase = PI * start / width;
    let mut sum = 0.0;
    let mut bound = f64::INFINITY;
    let mut k: u64 = 0;
    while k < MAX_SERIES_TERMS {
        let m = (2 * k + 1) as f64;
        sum += 4.0 / (PI * m) * (-m * m * decay).exp() * (m * phase).sin();
        k += 1;
        let next = (2 * k + 1) as f64;
        let envelope = 4.0 / (PI * next) * (-next * next * decay).exp();
        let ratio = (-8.0 * (k + 1) as f64 * decay).exp();
        bound = envelope / (1.0 - ratio);
        if bound < tolerance {
            break;
        }
    }
    if bound >= tolerance {
        return Err(Error::NumericalFailure {
            partial: sum,
            error_bound: bound,
        });
    }
    Ok(SurvivalResult {
        probability: sum.clamp(0.0, 1.0),
        terms_used: k,
        truncation_bound: bound,
        unclamped: sum,
    })
}

/// `P(T_ET > t)` for `n` agents with `Δ = 1`, where `normalized_time = t/Δ²`.
///
/// The single-agent factor is evaluated to `tol / n`, so the power is within
/// roughly `tol` of the exact value.
pub fn survival_min_of_n(n: u32, normalized_time: f64, tol: f64) -> Result<f64> {
    Ok(survival_min_of_n_detailed(n, normalized_time, tol)?.0)
}

/// Same as [`survival_min_of_n`], also returning the single-agent series result.
pub fn survival_min_of_n_detailed(
    n: u32,
    normalized_time: f64,
    tol: f64,
) -> Result<(f64, SurvivalResult)> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "need at least one agent"));
    }
    let query = IntervalExitQuery::centered(1.0, normalized_time, tol / n as f64)?;
    let single = survival_single(&query)?;
    Ok((single.probability.powi(n as i32), single))
}

/// `E[T_ET | Δ = 1] = ∫₀^∞ P(T_ET > t) dt`.
///
/// The integral is cut at `t* = 8/π²·(ln(1/tol) + n·ln(4/π))` (pushed out
/// further if needed); beyond it the integrand is below the leading series
/// term to the `n`-th power, whose integral is added to both the value and
/// the error bound.
pub fn expected_min_exit(n: u32, tol: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "need at least one agent"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::param("tol", tol, "must lie in (0, 1)"));
    }
    let nf = n as f64;
    let rate = PI * PI / 8.0;
    // The tail integral of the envelope must also stay below tol/10, which
    // the first cut alone misses for n = 1.
    let cut = ((1.0 / tol).ln() + nf * (4.0 / PI).ln()) / rate;
    let cut = cut.max(((4.0 / PI).ln() + (10.0 / (tol * nf * rate)).ln() / nf) / rate);
    let tail = (4.0 / PI).powf(nf) * (-nf * rate * cut).exp() / (nf * rate);

    let series_tol = 0.1 * tol / cut;
    let mut failure = None;
    let integral = quadrature::integrate(
        |t| match survival_min_of_n(n, t, series_tol) {
            Ok(s) => s,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        0.0,
        cut,
        0.5 * tol,
        MAX_QUADRATURE_SEGMENTS,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    match integral {
        Ok(r) if r.error_bound + tail + series_tol * cut <= tol => Ok(r.value + tail),
        Ok(r) => Err(Error::NumericalFailure {
            partial: r.value + tail,
            error_bound: r.error_bound + tail + series_tol * cut,
        }),
        Err(Error::NumericalFailure {
            partial,
            error_bound,
        }) => Err(Error::NumericalFailure {
            partial: partial + tail,
            error_bound: error_bound + tail,
        }),
        Err(e) => Err(e),
    }
}

/// Pure-ALOHA loss probability `1 − P(T_ET > τ)²` at network load
/// `ρ = τ / E[T_ET]`.
///
/// With `Δ = 1`, `τ = ρ · mean_exit`, so the survival is evaluated at that
/// normalized time.
pub fn aloha_loss_probability(rho: f64, n: u32, mean_exit: f64, tol: f64) -> Result<f64> {
    if !(rho > 0.0) || rho.is_nan() {
        return Err(Error::param("rho", rho, "network load must be positive"));
    }
    if !(mean_exit > 0.0) || !mean_exit.is_finite() {
        return Err(Error::param(
            "mean_exit",
            mean_exit,
            "must be positive and finite",
        ));
    }
    let normalized_time = mean_exit * rho;
    if normalized_time.is_infinite() {
        return Ok(1.0);
    }
    let survival = survival_min_of_n(n, normalized_time, tol)?;
    Ok((1.0 - survival * survival).clamp(0.0, 1.0))
}
