//! Closed-form consensus costs for TTC and ETC on a shared channel.
//!
//! With loss probability `p`, mean inter-event time `E[T]` and mean delay
//! `E[d]`, the long-run cost splits into
//!
//! ```text
//! J = J₀ + N(N−1)·(p·E[T]/(1−p) + E[d])
//! ```
//!
//! where `J₀` is the cost without loss and delay. For TTC `J₀ = N(N−1)·T/2`;
//! for ETC it is only available by simulation (see [`EtcConstants`]).
//! Normalized costs divide by `τ·N(N−1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::first_exit::aloha_loss_probability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacProtocol {
    Tdma,
    PureAloha,
}

/// Shared channel: constant transmission time plus the access protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub transmission_time: f64,
    pub protocol: MacProtocol,
}

impl NetworkModel {
    pub fn new(transmission_time: f64, protocol: MacProtocol) -> Result<Self> {
        if !(transmission_time > 0.0) || !transmission_time.is_finite() {
            return Err(Error::param(
                "transmission_time",
                transmission_time,
                "must be positive and finite",
            ));
        }
        Ok(NetworkModel {
            transmission_time,
            protocol,
        })
    }
}

/// Simulated ETC constants for one agent count, at `Δ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcConstants {
    pub num_agents: u32,
    /// `E[T_ET | Δ = 1]`.
    pub mean_exit_time: f64,
    pub mean_exit_se: f64,
    /// Loss- and delay-free ETC cost at `Δ = 1`.
    pub base_cost: f64,
    pub base_cost_se: f64,
    pub replications: u64,
    pub step: f64,
    pub seed: u64,
}

impl EtcConstants {
    fn pairs(&self) -> f64 {
        let n = self.num_agents as f64;
        n * (n - 1.0)
    }

    /// `base_cost / (N(N−1)·E[T_ET])`, the coefficient of `1/ρ` in the
    /// normalized ETC cost, with its delta-method standard error.
    pub fn base_ratio(&self) -> Result<(f64, f64)> {
        if self.num_agents < 2 {
            return Err(Error::param(
                "num_agents",
                self.num_agents as f64,
                "normalization needs at least two agents",
            ));
        }
        let ratio = self.base_cost / (self.pairs() * self.mean_exit_time);
        let rel = ((self.base_cost_se / self.base_cost).powi(2)
            + (self.mean_exit_se / self.mean_exit_time).powi(2))
        .sqrt();
        Ok((ratio, ratio * rel))
    }
}

/// Cost split into the loss/delay-free part and the two network penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub base: f64,
    pub loss_penalty: f64,
    pub delay_penalty: f64,
    pub total: f64,
}

impl CostBreakdown {
    fn new(base: f64, loss_penalty: f64, delay_penalty: f64) -> Self {
        CostBreakdown {
            base,
            loss_penalty,
            delay_penalty,
            total: base + loss_penalty + delay_penalty,
        }
    }
}

/// One `(N, ρ)` point of the normalized cost comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadPoint {
    pub rho: f64,
    pub num_agents: u32,
    /// `None` above full load, where TDMA loses every packet.
    pub cost_tt_tdma: Option<f64>,
    /// Infinite once the loss probability rounds to one.
    pub cost_et_pa: f64,
    pub loss_prob_pa: f64,
}

fn check_loss(loss_prob: f64) -> Result<()> {
    if loss_prob.is_nan() || !(0.0..=1.0).contains(&loss_prob) {
        return Err(Error::param("loss_prob", loss_prob, "must lie in [0, 1)"));
    }
    if loss_prob == 1.0 {
        return Err(Error::Divergent("every packet is lost"));
    }
    Ok(())
}

fn check_agents(n: u32) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", n as f64, "need at least two agents"));
    }
    let n = n as f64;
    Ok(n * (n - 1.0))
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0) || !value.is_finite() {
        return Err(Error::param(name, value, "must be positive and finite"));
    }
    Ok(())
}

fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(Error::param(name, value, "must be finite and non-negative"));
    }
    Ok(())
}

/// TDMA is lossless while the period covers a whole transmission.
pub fn tdma_loss_probability(period: f64, tau: f64) -> Result<f64> {
    check_positive("period", period)?;
    check_positive("tau", tau)?;
    Ok(if period >= tau { 0.0 } else { 1.0 })
}

/// TTC cost `N(N−1)·(T/2 + p·T/(1−p) + E[d])`.
pub fn ttc_cost(n: u32, period: f64, loss_prob: f64, mean_delay: f64) -> Result<CostBreakdown> {
    let pairs = check_agents(n)?;
    check_positive("period", period)?;
    check_non_negative("mean_delay", mean_delay)?;
    check_loss(loss_prob)?;
    Ok(CostBreakdown::new(
        pairs * period / 2.0,
        pairs * loss_prob * period / (1.0 - loss_prob),
        pairs * mean_delay,
    ))
}

/// Normalized TTC/TDMA cost `1/(2ρ) + 1`, defined for `ρ ∈ (0, 1]`.
pub fn ttc_tdma_normalized(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Domain {
            rho,
            domain: "(0, 1]; all packets are lost beyond full load",
        });
    }
    Ok(1.0 / (2.0 * rho) + 1.0)
}

/// Normalized ETC/pure-ALOHA cost
/// `J₀/(N(N−1)E[T_ET])·(1/ρ) + p/(1−p)·(1/ρ) + 1`.
///
/// `loss_prob` is supplied by the caller, normally from
/// [`aloha_loss_probability`] at the same `ρ`.
pub fn etc_pa_normalized(rho: f64, constants: &EtcConstants, loss_prob: f64) -> Result<f64> {
    check_positive("rho", rho)?;
    let (base_ratio, _) = constants.base_ratio()?;
    check_loss(loss_prob)?;
    Ok(etc_pa_from_ratio(rho, base_ratio, loss_prob))
}

pub(crate) fn etc_pa_from_ratio(rho: f64, base_ratio: f64, loss_prob: f64) -> f64 {
    base_ratio / rho + loss_prob / (1.0 - loss_prob) / rho + 1.0
}

/// Expected time between successful transmissions, `E[T]/(1−p)`.
pub fn mean_inter_success(mean_inter_event: f64, loss_prob: f64) -> Result<f64> {
    check_positive("mean_inter_event", mean_inter_event)?;
    check_loss(loss_prob)?;
    Ok(mean_inter_event / (1.0 - loss_prob))
}

/// Full networked cost from the loss/delay-free cost `base`.
pub fn decompose_cost(
    base: f64,
    n: u32,
    loss_prob: f64,
    mean_inter_event: f64,
    mean_delay: f64,
) -> Result<CostBreakdown> {
    let pairs = check_agents(n)?;
    check_non_negative("base", base)?;
    check_positive("mean_inter_event", mean_inter_event)?;
    check_non_negative("mean_delay", mean_delay)?;
    check_loss(loss_prob)?;
    Ok(CostBreakdown::new(
        base,
        pairs * loss_prob * mean_inter_event / (1.0 - loss_prob),
        pairs * mean_delay,
    ))
}

/// `count` points from `min` to `max` inclusive, evenly spaced in `log ρ`.
pub fn geometric_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    check_positive("min", min)?;
    check_positive("max", max)?;
    if max < min {
        return Err(Error::param("max", max, "must not be below min"));
    }
    if count < 2 {
        return Err(Error::param(
            "count",
            count as f64,
            "need at least two points",
        ));
    }
    let ratio = (max / min).ln() / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                max
            } else {
                min * (ratio * i as f64).exp()
            }
        })
        .collect())
}

/// `count` evenly spaced points from `min` to `max` inclusive.
pub fn linear_grid(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    check_positive("min", min)?;
    check_positive("max", max)?;
    if max < min {
        return Err(Error::param("max", max, "must not be below min"));
    }
    if count < 2 {
        return Err(Error::param(
            "count",
            count as f64,
            "need at least two points",
        ));
    }
    let width = (max - min) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == count - 1 {
                max
            } else {
                min + width * i as f64
            }
        })
        .collect())
}

/// Normalized TTC/TDMA and ETC/ALOHA costs for every `(n, ρ)` pair, in
/// `n_list` order then grid order.
pub fn curve_sweep(
    n_list: &[u32],
    rho_grid: &[f64],
    constants_by_n: &BTreeMap<u32, EtcConstants>,
    tol: f64,
) -> Result<Vec<LoadPoint>> {
    let mut points = Vec::with_capacity(n_list.len() * rho_grid.len());
    for &n in n_list {
        check_agents(n)?;
        let constants = constants_by_n
            .get(&n)
            .ok_or_else(|| Error::Config(format!("no ETC constants for n = {n}")))?;
        let (base_ratio, _) = constants.base_ratio()?;
        for &rho in rho_grid {
            let loss_prob = aloha_loss_probability(rho, n, constants.mean_exit_time, tol)?;
            let cost_et_pa = if loss_prob >= 1.0 {
                f64::INFINITY
            } else {
                etc_pa_from_ratio(rho, base_ratio, loss_prob)
            };
            let cost_tt_tdma = if rho <= 1.0 {
                Some(ttc_tdma_normalized(rho)?)
            } else {
                None
            };
            points.push(LoadPoint {
                rho,
                num_agents: n,
                cost_tt_tdma,
                cost_et_pa,
                loss_prob_pa: loss_prob,
            });
        }
    }
    Ok(points)
}

/// Load at which the ETC/ALOHA cost meets `1/(2ρ) + 1`.
///
/// The gap is `(b − 1/2 + p/(1−p))/ρ` with `b` the base ratio, and `p` grows
/// with `ρ`, so there is at most one crossing. ETC is cheaper below it.
/// Returns `None` when `b ≥ 1/2`, where ETC is never cheaper.
pub fn etc_crossover_load(
    n: u32,
    base_ratio: f64,
    mean_exit: f64,
    tol: f64,
) -> Result<Option<f64>> {
    check_agents(n)?;
    check_non_negative("base_ratio", base_ratio)?;
    if base_ratio >= 0.5 {
        return Ok(None);
    }
    let gap = |rho: f64| -> Result<f64> {
        let p = aloha_loss_probability(rho, n, mean_exit, tol)?;
        Ok(if p >= 1.0 {
            f64::INFINITY
        } else {
            base_ratio - 0.5 + p / (1.0 - p)
        })
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while gap(hi)? < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Divergent("no crossing found below rho = 1e12"));
        }
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
