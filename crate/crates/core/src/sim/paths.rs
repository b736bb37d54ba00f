use rayon::prelude::*;

use super::{laplacian_quadratic, AgentEnsemble, PathConfig};
use crate::cost::EtcConstants;
use crate::error::{Error, Result};
use crate::rng::{rng_stream_for, SimRng};
use crate::stats::{batch_mean, batch_ratio, DEFAULT_BATCHES};

/// One sampled inter-event interval, from consensus until the first agent
/// deviates by the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitPath {
    pub exit_time: f64,
    pub trigger_agent: usize,
    pub num_agents: usize,
    /// Grid times, starting at 0 and ending at `exit_time`.
    pub times: Vec<f64>,
    /// Row-major states, one row of `num_agents` values per entry of `times`.
    pub states: Vec<f64>,
}

impl ExitPath {
    pub fn state_at(&self, k: usize) -> &[f64] {
        &self.states[k * self.num_agents..(k + 1) * self.num_agents]
    }

    /// Trapezoidal `∫ xᵀLx dt` over the sampled grid.
    pub fn integrated_cost(&self) -> f64 {
        let q: Vec<f64> = (0..self.times.len())
            .map(|k| laplacian_quadratic(self.state_at(k)))
            .collect();
        self.times
            .windows(2)
            .zip(q.windows(2))
            .map(|(t, q)| 0.5 * (q[0] + q[1]) * (t[1] - t[0]))
            .sum()
    }
}

/// Runs one interval from consensus, calling `observe(dt, states)` after
/// every step. Returns the exit time and the triggering agent.
fn run_interval<F: FnMut(f64, &[f64])>(
    n: usize,
    threshold: f64,
    cfg: &PathConfig,
    rng: &mut SimRng,
    mut observe: F,
) -> Result<(f64, usize)> {
    let horizon = cfg.horizon_factor * threshold * threshold;
    let mut ensemble = AgentEnsemble::at_consensus(n, threshold);
    let mut increments = vec![0.0; n];
    let mut t = 0.0;
    let mut steps = 0u64;
    loop {
        let crossing = ensemble.step(cfg.step, true, cfg.bridge_correction, &mut increments, rng);
        steps += 1;
        let dt = crossing.map_or(cfg.step, |c| c.fraction * cfg.step);
        t += dt;
        observe(dt, &ensemble.states);
        if let Some(c) = crossing {
            return Ok((t, c.agent));
        }
        if t > horizon {
            return Err(Error::HorizonExceeded {
                horizon,
                elapsed: t,
                steps,
                partial_cost: f64::NAN,
            });
        }
    }
}

fn check_inputs(n: u32, threshold: f64, cfg: &PathConfig) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", 0.0, "need at least one agent"));
    }
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::param(
            "threshold",
            threshold,
            "must be positive and finite",
        ));
    }
    cfg.validate(threshold * threshold)
}

/// Samples the first time any of `n` independent paths started at zero
/// leaves `(−threshold, threshold)`, keeping the whole sampled trajectory.
pub fn sample_exit_time(
    n: u32,
    threshold: f64,
    cfg: &PathConfig,
    rng: &mut SimRng,
) -> Result<ExitPath> {
    check_inputs(n, threshold, cfg)?;
    let n = n as usize;
    let mut times = vec![0.0];
    let mut states = vec![0.0; n];
    let mut clock = 0.0;
    let (exit_time, trigger_agent) = run_interval(n, threshold, cfg, rng, |dt, x| {
        clock += dt;
        times.push(clock);
        states.extend_from_slice(x);
    })?;
    Ok(ExitPath {
        exit_time,
        trigger_agent,
        num_agents: n,
        times,
        states,
    })
}

/// Estimates `E[T_ET | Δ = 1]` and the loss/delay-free ETC cost from
/// `replications` independent intervals, using [`DEFAULT_BATCHES`] batches.
pub fn estimate_constants(n: u32, replications: u64, cfg: &PathConfig) -> Result<EtcConstants> {
    estimate_constants_with_batches(n, replications, cfg, DEFAULT_BATCHES)
}

/// As [`estimate_constants`] with an explicit batch count.
///
/// Replication `r` uses stream `r` of `cfg.seed`; per-replication results
/// are reduced in index order, so the output does not depend on threading.
pub fn estimate_constants_with_batches(
    n: u32,
    replications: u64,
    cfg: &PathConfig,
    batches: usize,
) -> Result<EtcConstants> {
    check_inputs(n, 1.0, cfg)?;
    if replications < 2 || (batches as u64).min(replications) < 2 {
        return Err(Error::Estimation(format!(
            "{replications} replications cannot form 2 batches"
        )));
    }
    let agents = n as usize;
    let samples: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_stream_for(cfg.seed, r);
            let mut cost = 0.0;
            let mut q_prev = 0.0;
            let (exit, _) = run_interval(agents, 1.0, cfg, &mut rng, |dt, x| {
                let q = laplacian_quadratic(x);
                cost += 0.5 * (q_prev + q) * dt;
                q_prev = q;
            })?;
            Ok((exit, cost))
        })
        .collect::<Result<Vec<_>>>()?;

    let exits: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let costs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let mean_exit = batch_mean(&exits, batches)?;
    let base = batch_ratio(&costs, &exits, batches)?;
    Ok(EtcConstants {
        num_agents: n,
        mean_exit_time: mean_exit.value,
        mean_exit_se: mean_exit.se,
        base_cost: base.value,
        base_cost_se: base.se,
        replications,
        step: cfg.step,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_ends_on_barrier() {
        let cfg = PathConfig::default();
        let mut rng = rng_stream_for(11, 0);
        let path = sample_exit_time(4, 1.0, &cfg, &mut rng).unwrap();
        assert_eq!(path.times.len() * 4, path.states.len());
        assert!((path.times.last().unwrap() - path.exit_time).abs() < 1e-12);
        let last = path.state_at(path.times.len() - 1);
        assert_eq!(last[path.trigger_agent].abs(), 1.0);
        for k in 0..path.times.len() - 1 {
            assert!(path.state_at(k).iter().all(|x| x.abs() < 1.0));
        }
    }

    #[test]
    fn recorded_path_cost_matches_streaming_integral() {
        let cfg = PathConfig {
            seed: 3,
            ..PathConfig::default()
        };
        let mut rng = rng_stream_for(cfg.seed, 0);
        let path = sample_exit_time(3, 1.0, &cfg, &mut rng).unwrap();
        let c = estimate_constants_with_batches(3, 2, &cfg, 2).unwrap();
        let mut rng1 = rng_stream_for(cfg.seed, 1);
        let path1 = sample_exit_time(3, 1.0, &cfg, &mut rng1).unwrap();
        let total_cost = path.integrated_cost() + path1.integrated_cost();
        let total_time = path.exit_time + path1.exit_time;
        assert!((c.base_cost - total_cost / total_time).abs() < 1e-9);
    }

    #[test]
    fn single_agent_has_zero_base_cost() {
        let cfg = PathConfig::default();
        let c = estimate_constants(1, 200, &cfg).unwrap();
        assert_eq!(c.base_cost, 0.0);
        assert_eq!(c.base_cost_se, 0.0);
    }

    #[test]
    fn estimation_is_reproducible() {
        let cfg = PathConfig {
            seed: 99,
            ..PathConfig::default()
        };
        let a = estimate_constants(3, 300, &cfg).unwrap();
        let b = estimate_constants(3, 300, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_replications() {
        let cfg = PathConfig::default();
        assert!(matches!(
            estimate_constants(2, 1, &cfg),
            Err(Error::Estimation(_))
        ));
    }

    #[test]
    fn horizon_cap_is_reported() {
        let cfg = PathConfig {
            horizon_factor: 1.001,
            step: 1e-3,
            ..PathConfig::default()
        };
        // With a tiny horizon some of these intervals run over.
        let err = estimate_constants(1, 2000, &cfg).unwrap_err();
        assert!(matches!(err, Error::HorizonExceeded { .. }));
    }

    #[test]
    fn coarse_step_is_rejected() {
        let cfg = PathConfig {
            step: 0.1,
            ..PathConfig::default()
        };
        let mut rng = rng_stream_for(0, 0);
        assert!(sample_exit_time(2, 1.0, &cfg, &mut rng).is_err());
        assert!(sample_exit_time(2, 4.0, &cfg, &mut rng).is_ok());
    }
}
