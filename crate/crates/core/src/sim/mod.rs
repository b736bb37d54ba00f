//! Monte Carlo engine for the consensus system.
//!
//! Agent states are sampled on an Euler grid (exact Gaussian increments).
//! Barrier crossings between grid points are caught with the Brownian-bridge
//! test: a step from `x` to `x'` that stays inside crossed the barrier `b` with
//! probability `exp(−2(b−x)(b−x')/h)`.

mod network;
mod paths;

pub use network::{
    simulate_networked, simulate_scenario, DelayMode, EventLog, NetworkRun, NetworkScenario,
    PacketRecord, Scheme, SimOutcome,
};
pub use paths::{estimate_constants, estimate_constants_with_batches, sample_exit_time, ExitPath};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Bridge crossing probabilities below `exp(-BRIDGE_CUTOFF)` are treated as 0.
const BRIDGE_CUTOFF: f64 = 40.0;

/// Discretization settings shared by all simulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// Euler time step.
    pub step: f64,
    pub bridge_correction: bool,
    /// Cap on one inter-event interval, in units of `Δ²`.
    pub horizon_factor: f64,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            step: 1e-3,
            bridge_correction: true,
            horizon_factor: 50.0,
            seed: 0,
        }
    }
}

impl PathConfig {
    /// Checks the step against the natural time scale of the run (`Δ²` for
    /// ETC, the period for TTC): at least 100 steps per scale unit.
    pub fn validate(&self, time_scale: f64) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::param(
                "step",
                self.step,
                "must be positive and finite",
            ));
        }
        if !(self.horizon_factor > 1.0) {
            return Err(Error::param(
                "horizon_factor",
                self.horizon_factor,
                "must exceed 1",
            ));
        }
        if self.step > time_scale / 100.0 {
            return Err(Error::param(
                "step",
                self.step,
                "must not exceed 1/100 of the exit time scale",
            ));
        }
        Ok(())
    }
}

/// `xᵀLx` for the complete-graph Laplacian, i.e. `Σ_{i<j} (xᵢ − xⱼ)²`,
/// computed as `N·Σ (xᵢ − x̄)²`.
pub fn laplacian_quadratic(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n;
    n * x.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
}

/// `uᵀLv` for the complete-graph Laplacian.
pub fn laplacian_bilinear(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    n * dot - u.iter().sum::<f64>() * v.iter().sum::<f64>()
}

/// Agent states together with their trigger references.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEnsemble {
    pub states: Vec<f64>,
    /// States at the last system-wide event, shifted along with control jumps.
    pub trigger_refs: Vec<f64>,
    pub threshold: f64,
}

/// First barrier hit inside a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Crossing {
    pub agent: usize,
    /// Position of the hit within the step, in `(0, 1]`.
    pub fraction: f64,
    /// `+1` for the upper barrier, `−1` for the lower.
    pub side: f64,
}

impl AgentEnsemble {
    /// `n` agents at consensus at the origin.
    pub fn at_consensus(n: usize, threshold: f64) -> Self {
        AgentEnsemble {
            states: vec![0.0; n],
            trigger_refs: vec![0.0; n],
            threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn deviation(&self, i: usize) -> f64 {
        self.states[i] - self.trigger_refs[i]
    }

    /// Starts a new inter-event interval at the current states.
    pub fn reset_refs(&mut self) {
        self.trigger_refs.copy_from_slice(&self.states);
    }

    /// Adds `offsets` to every state; references move too, so the trigger
    /// keeps measuring disturbance since the last event only.
    pub fn apply_jump(&mut self, offsets: &[f64]) {
        for ((x, r), d) in self
            .states
            .iter_mut()
            .zip(&mut self.trigger_refs)
            .zip(offsets)
        {
            *x += d;
            *r += d;
        }
    }

    /// Shifts everything so the states have zero mean. Costs and triggers are
    /// invariant under common translation; this only keeps magnitudes small.
    pub fn recenter(&mut self) {
        let mean = self.states.iter().sum::<f64>() / self.len() as f64;
        for (x, r) in self.states.iter_mut().zip(&mut self.trigger_refs) {
            *x -= mean;
            *r -= mean;
        }
    }

    /// Advances all agents by `dt` using `increments` as scratch space.
    ///
    /// With `detect` set, returns the earliest barrier hit (ties go to the lower
    /// index); the ensemble is then left at the hit time, the triggering agent
    /// sitting exactly on its barrier and the others linearly interpolated.
    pub(crate) fn step(
        &mut self,
        dt: f64,
        detect: bool,
        bridge: bool,
        increments: &mut [f64],
        rng: &mut SimRng,
    ) -> Option<Crossing> {
        let sd = dt.sqrt();
        for inc in increments.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *inc = sd * z;
        }
        let crossing = if detect {
            self.first_crossing(dt, bridge, increments, rng)
        } else {
            None
        };
        let fraction = crossing.map_or(1.0, |c| c.fraction);
        for (x, inc) in self.states.iter_mut().zip(increments.iter()) {
            *x += fraction * inc;
        }
        if let Some(c) = crossing {
            self.states[c.agent] = self.trigger_refs[c.agent] + c.side * self.threshold;
        }
        crossing
    }

    fn first_crossing(
        &self,
        dt: f64,
        bridge: bool,
        increments: &[f64],
        rng: &mut SimRng,
    ) -> Option<Crossing> {
        let delta = self.threshold;
        let mut best: Option<Crossing> = None;
        for (i, &inc) in increments.iter().enumerate() {
            let before = self.deviation(i);
            let after = before + inc;
            let hit = if after.abs() >= delta {
                let side = after.signum();
                Some(Crossing {
                    agent: i,
                    fraction: ((side * delta - before) / inc).clamp(f64::MIN_POSITIVE, 1.0),
                    side,
                })
            } else if bridge {
                let side = if before + after >= 0.0 { 1.0 } else { -1.0 };
                let exponent = 2.0 * (delta - side * before) * (delta - side * after) / dt;
                if exponent < BRIDGE_CUTOFF && rng.random::<f64>() < (-exponent).exp() {
                    Some(Crossing {
                        agent: i,
                        fraction: 0.5,
                        side,
                    })
                } else {
                    None
                }
            } else {
                None
            };
            if let Some(h) = hit {
                if best.is_none_or(|b| h.fraction < b.fraction) {
                    best = Some(h);
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream_for;
    use proptest::prelude::*;

    fn pairwise(x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                s += (x[i] - x[j]).powi(2);
            }
        }
        s
    }

    proptest! {
        #[test]
        fn laplacian_matches_pairwise_sum(x in proptest::collection::vec(-50.0..50.0f64, 1..40)) {
            let q = laplacian_quadratic(&x);
            let p = pairwise(&x);
            prop_assert!((q - p).abs() <= 1e-9 * (1.0 + p));
            prop_assert!((laplacian_bilinear(&x, &x) - p).abs() <= 1e-9 * (1.0 + p));
        }
    }

    #[test]
    fn single_agent_has_zero_disagreement() {
        assert_eq!(laplacian_quadratic(&[3.7]), 0.0);
    }

    #[test]
    fn config_validation() {
        let cfg = PathConfig::default();
        assert!(cfg.validate(1.0).is_ok());
        assert!(cfg.validate(0.05).is_err());
        assert!(PathConfig {
            horizon_factor: 1.0,
            ..cfg
        }
        .validate(1.0)
        .is_err());
        assert!(PathConfig { step: 0.0, ..cfg }.validate(1.0).is_err());
    }

    #[test]
    fn crossing_puts_trigger_agent_on_barrier() {
        let mut rng = rng_stream_for(5, 0);
        let mut ens = AgentEnsemble::at_consensus(3, 1.0);
        let mut buf = vec![0.0; 3];
        let mut hit = None;
        for _ in 0..1_000_000 {
            if let Some(c) = ens.step(1e-3, true, true, &mut buf, &mut rng) {
                hit = Some(c);
                break;
            }
            for i in 0..3 {
                assert!(ens.deviation(i).abs() < 1.0);
            }
        }
        let c = hit.expect("an agent must exit eventually");
        assert_eq!(ens.deviation(c.agent).abs(), 1.0);
        assert_eq!(ens.deviation(c.agent).signum(), c.side);
    }

    #[test]
    fn jump_and_recenter_preserve_deviations() {
        let mut ens = AgentEnsemble {
            states: vec![1.0, 2.0, 4.0],
            trigger_refs: vec![0.5, 2.5, 3.0],
            threshold: 1.0,
        };
        let dev: Vec<f64> = (0..3).map(|i| ens.deviation(i)).collect();
        ens.apply_jump(&[0.3, -1.0, 0.0]);
        ens.recenter();
        for (i, d) in dev.iter().enumerate() {
            assert!((ens.deviation(i) - d).abs() < 1e-12);
        }
        assert!(ens.states.iter().sum::<f64>().abs() < 1e-12);
    }
}
