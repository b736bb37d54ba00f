//! Event-driven simulation of the full networked loop: triggering, channel
//! access, delayed impulsive resets and cost integration.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{laplacian_bilinear, laplacian_quadratic, AgentEnsemble, PathConfig};
use crate::cost::{MacProtocol, NetworkModel};
use crate::error::{Error, Result};
use crate::rng::rng_stream_for;
use crate::stats::{batch_mean, batch_ratio, Estimate, DEFAULT_BATCHES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Periodic transmissions, round-robin sender; parameter is the period.
    TimeTriggered,
    /// Transmit when a deviation reaches the threshold; parameter is `Δ`.
    EventTriggered,
}

/// How arrived packets enter the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayMode {
    /// Resets take effect one transmission time after sending.
    #[default]
    Transmission,
    /// Resets take effect at the send instant. Collisions still use the
    /// transmission time, so the event and loss sequence is unchanged.
    Instantaneous,
}

/// Everything that defines one networked run apart from the discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub scheme: Scheme,
    pub network: NetworkModel,
    pub num_agents: u32,
    /// Period for TTC, threshold `Δ` for ETC.
    pub scheme_param: f64,
    pub num_events: u64,
    pub delay_mode: DelayMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub time: f64,
    pub sender: usize,
    pub arrived: bool,
    /// Transmission delay for arrived packets, 0 otherwise.
    pub delay: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub events: Vec<PacketRecord>,
}

impl EventLog {
    /// Indices of arrived packets.
    pub fn successes(&self) -> Vec<usize> {
        self.events
            .iter()
            .enumerate()
            .filter_map(|(k, e)| e.arrived.then_some(k))
            .collect()
    }

    /// `t_{k+1} − t_k` for consecutive events.
    pub fn inter_event_times(&self) -> Vec<f64> {
        self.events
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .collect()
    }
}

/// Statistics of one networked run over its first `events_total` events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Time average of `xᵀLx`.
    pub empirical_cost: f64,
    pub cost_se: f64,
    pub empirical_loss_rate: f64,
    pub loss_rate_se: f64,
    pub mean_inter_event: f64,
    pub mean_inter_event_se: f64,
    /// Infinite when nothing arrived.
    pub mean_inter_success: f64,
    pub mean_inter_success_se: f64,
    pub events_total: u64,
    pub successes: u64,
    /// Number of batches behind the standard errors.
    pub replication_count: u64,
    pub total_time: f64,
    pub seed: u64,
    /// Every packet is lost (TDMA with period below the transmission time).
    pub divergent: bool,
}

impl SimOutcome {
    /// Cost divided by `τ·N(N−1)`, with its standard error.
    pub fn normalized_cost(&self, tau: f64, n: u32) -> Estimate {
        let scale = tau * (n as f64) * (n as f64 - 1.0);
        Estimate {
            value: self.empirical_cost / scale,
            se: self.cost_se / scale,
            batches: self.replication_count as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRun {
    pub outcome: SimOutcome,
    pub log: EventLog,
}

struct Pending {
    send_time: f64,
    arrival: f64,
    /// `x_sender(t_k) − x_i(t_k)` for every agent.
    offsets: Vec<f64>,
    lost: bool,
    log_index: usize,
    /// `∫ x dt` over the transmission window, for [`DelayMode::Instantaneous`].
    window: Vec<f64>,
}

/// Runs the networked loop with resets delayed by the transmission time.
pub fn simulate_networked(
    scheme: Scheme,
    network: NetworkModel,
    n: u32,
    scheme_param: f64,
    num_events: u64,
    cfg: &PathConfig,
) -> Result<NetworkRun> {
    simulate_scenario(
        &NetworkScenario {
            scheme,
            network,
            num_agents: n,
            scheme_param,
            num_events,
            delay_mode: DelayMode::Transmission,
        },
        cfg,
    )
}

/// Runs one scenario on stream 0 of `cfg.seed`.
///
/// Intervals `[t_{k−1}, t_k)` for the first `num_events` events are the
/// units of the batch-means estimators. The run continues past the last
/// counted event until its packet's fate is known.
pub fn simulate_scenario(scenario: &NetworkScenario, cfg: &PathConfig) -> Result<NetworkRun> {
    let NetworkScenario {
        scheme,
        network,
        num_agents,
        scheme_param,
        num_events,
        delay_mode,
    } = *scenario;
    if num_agents < 2 {
        return Err(Error::param(
            "n",
            num_agents as f64,
            "need at least two agents",
        ));
    }
    if !(scheme_param > 0.0) || !scheme_param.is_finite() {
        return Err(Error::param(
            "scheme_param",
            scheme_param,
            "must be positive and finite",
        ));
    }
    if num_events < 2 {
        return Err(Error::param(
            "num_events",
            num_events as f64,
            "need at least two events",
        ));
    }
    let tau = network.transmission_time;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param(
            "transmission_time",
            tau,
            "must be positive and finite",
        ));
    }
    let event_triggered = scheme == Scheme::EventTriggered;
    if event_triggered && network.protocol == MacProtocol::Tdma {
        return Err(Error::Config(
            "TDMA needs transmissions scheduled in advance; use it with time-triggered control"
                .into(),
        ));
    }
    let time_scale = if event_triggered {
        scheme_param * scheme_param
    } else {
        scheme_param
    };
    cfg.validate(time_scale)?;

    let n = num_agents as usize;
    let threshold = if event_triggered {
        scheme_param
    } else {
        f64::INFINITY
    };
    let horizon = cfg.horizon_factor * time_scale;
    let tdma_lost = network.protocol == MacProtocol::Tdma && scheme_param < tau;
    let instantaneous = delay_mode == DelayMode::Instantaneous;

    let mut rng = rng_stream_for(cfg.seed, 0);
    let mut ensemble = AgentEnsemble::at_consensus(n, threshold);
    let mut increments = vec![0.0; n];
    let mut previous = vec![0.0; n];
    let mut pending: VecDeque<Pending> = VecDeque::new();
    let mut log = EventLog::default();

    let mut t = 0.0;
    let mut q_prev = 0.0;
    let mut interval_start = 0.0;
    let mut interval_cost = 0.0;
    let mut unit_cost = Vec::with_capacity(num_events as usize);
    let mut unit_len = Vec::with_capacity(num_events as usize);
    let mut events: u64 = 0;
    let mut next_tick: u64 = 1;
    let mut deadline = f64::INFINITY;
    let mut steps: u64 = 0;

    loop {
        let mut target = t + cfg.step;
        if let Some(p) = pending.front() {
            target = target.min(p.arrival);
        }
        if !event_triggered {
            target = target.min(next_tick as f64 * scheme_param);
        }
        target = target.min(deadline);
        let dt = target - t;

        let track_window = instantaneous && !pending.is_empty();
        if track_window {
            previous.copy_from_slice(&ensemble.states);
        }
        let crossing = if dt > 0.0 {
            ensemble.step(
                dt,
                event_triggered,
                cfg.bridge_correction,
                &mut increments,
                &mut rng,
            )
        } else {
            None
        };
        steps += 1;
        let dt = match crossing {
            Some(c) => {
                let used = c.fraction * dt;
                t += used;
                used
            }
            None => {
                t = target;
                dt
            }
        };
        let q = laplacian_quadratic(&ensemble.states);
        if events < num_events {
            interval_cost += 0.5 * (q_prev + q) * dt;
        }
        q_prev = q;
        if track_window {
            for p in pending.iter_mut().filter(|p| !p.lost) {
                for ((w, a), b) in p.window.iter_mut().zip(&previous).zip(&ensemble.states) {
                    *w += 0.5 * (a + b) * dt;
                }
            }
        }

        // Arrivals before events at coinciding times.
        while pending.front().is_some_and(|p| p.arrival <= t) {
            let packet = pending.pop_front().expect("checked above");
            if packet.lost {
                continue;
            }
            if instantaneous && events < num_events {
                // The zero-delay system sits at x + offsets throughout the window.
                interval_cost += 2.0 * laplacian_bilinear(&packet.window, &packet.offsets)
                    + (packet.arrival - packet.send_time) * laplacian_quadratic(&packet.offsets);
            }
            ensemble.apply_jump(&packet.offsets);
            q_prev = laplacian_quadratic(&ensemble.states);
        }

        let sender = match crossing {
            Some(c) => Some(c.agent),
            None if !event_triggered && t >= next_tick as f64 * scheme_param => {
                next_tick += 1;
                Some(((next_tick - 2) % n as u64) as usize)
            }
            None => None,
        };

        if let Some(sender) = sender {
            events += 1;
            if events <= num_events {
                unit_cost.push(interval_cost);
                unit_len.push(t - interval_start);
            }
            interval_cost = 0.0;
            interval_start = t;

            let mut lost = match network.protocol {
                MacProtocol::Tdma => tdma_lost,
                MacProtocol::PureAloha => false,
            };
            if network.protocol == MacProtocol::PureAloha {
                if let Some(prev) = pending.back_mut() {
                    if t - prev.send_time < tau {
                        if !prev.lost {
                            prev.lost = true;
                            log.events[prev.log_index].arrived = false;
                            log.events[prev.log_index].delay = 0.0;
                        }
                        lost = true;
                    }
                }
            }

            let sent = ensemble.states[sender];
            let offsets: Vec<f64> = ensemble.states.iter().map(|x| sent - x).collect();
            ensemble.reset_refs();
            ensemble.recenter();
            q_prev = laplacian_quadratic(&ensemble.states);

            log.events.push(PacketRecord {
                time: t,
                sender,
                arrived: !lost,
                delay: if lost { 0.0 } else { tau },
            });
            pending.push_back(Pending {
                send_time: t,
                arrival: t + tau,
                offsets,
                lost,
                log_index: log.events.len() - 1,
                window: vec![0.0; n],
            });

            if events == num_events {
                deadline = t + tau;
            }
            if events > num_events {
                break;
            }
        }
        if t >= deadline {
            break;
        }
        if event_triggered && t - interval_start > horizon {
            return Err(Error::HorizonExceeded {
                horizon,
                elapsed: t - interval_start,
                steps,
                partial_cost: interval_cost,
            });
        }
    }

    let counted = &log.events[..num_events as usize];
    let lost: Vec<f64> = counted
        .iter()
        .map(|e| f64::from(!e.arrived as u8))
        .collect();
    let arrived: Vec<f64> = lost.iter().map(|l| 1.0 - l).collect();
    let successes = counted.iter().filter(|e| e.arrived).count() as u64;

    let cost = batch_ratio(&unit_cost, &unit_len, DEFAULT_BATCHES)?;
    let loss = batch_mean(&lost, DEFAULT_BATCHES)?;
    let inter_event = batch_mean(&unit_len, DEFAULT_BATCHES)?;
    let inter_success = if successes > 0 {
        batch_ratio(&unit_len, &arrived, DEFAULT_BATCHES)?
    } else {
        Estimate {
            value: f64::INFINITY,
            se: f64::INFINITY,
            batches: cost.batches,
        }
    };

    Ok(NetworkRun {
        outcome: SimOutcome {
            empirical_cost: cost.value,
            cost_se: cost.se,
            empirical_loss_rate: loss.value,
            loss_rate_se: loss.se,
            mean_inter_event: inter_event.value,
            mean_inter_event_se: inter_event.se,
            mean_inter_success: inter_success.value,
            mean_inter_success_se: inter_success.se,
            events_total: num_events,
            successes,
            replication_count: cost.batches as u64,
            total_time: unit_len.iter().sum(),
            seed: cfg.seed,
            divergent: successes == 0,
        },
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> PathConfig {
        PathConfig {
            seed,
            ..PathConfig::default()
        }
    }

    #[test]
    fn ttc_schedule_is_periodic_round_robin() {
        let net = NetworkModel::new(0.1, MacProtocol::Tdma).unwrap();
        let run = simulate_networked(Scheme::TimeTriggered, net, 3, 0.5, 30, &cfg(1)).unwrap();
        for (k, e) in run.log.events.iter().enumerate() {
            assert!((e.time - 0.5 * (k + 1) as f64).abs() < 1e-9);
            assert_eq!(e.sender, k % 3);
            assert!(e.arrived);
            assert_eq!(e.delay, 0.1);
        }
        assert_eq!(run.outcome.empirical_loss_rate, 0.0);
        assert!(!run.outcome.divergent);
    }

    #[test]
    fn tdma_overload_loses_everything() {
        let net = NetworkModel::new(0.1, MacProtocol::Tdma).unwrap();
        let run = simulate_networked(
            Scheme::TimeTriggered,
            net,
            2,
            0.05,
            200,
            &PathConfig {
                step: 1e-4,
                ..cfg(2)
            },
        )
        .unwrap();
        assert_eq!(run.outcome.empirical_loss_rate, 1.0);
        assert!(run.outcome.divergent);
        assert!(run.outcome.mean_inter_success.is_infinite());
    }

    #[test]
    fn etc_with_tdma_is_rejected() {
        let net = NetworkModel::new(0.1, MacProtocol::Tdma).unwrap();
        assert!(matches!(
            simulate_networked(Scheme::EventTriggered, net, 2, 1.0, 100, &cfg(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn aloha_events_increase_and_collisions_come_in_pairs() {
        let net = NetworkModel::new(0.2, MacProtocol::PureAloha).unwrap();
        let run = simulate_networked(Scheme::EventTriggered, net, 3, 1.0, 2000, &cfg(4)).unwrap();
        let ev = &run.log.events;
        for w in ev.windows(2) {
            assert!(w[1].time > w[0].time);
        }
        for (k, e) in ev.iter().enumerate().take(2000) {
            let close_prev = k > 0 && e.time - ev[k - 1].time < 0.2;
            let close_next = k + 1 < ev.len() && ev[k + 1].time - e.time < 0.2;
            assert_eq!(e.arrived, !(close_prev || close_next), "packet {k}");
            if e.arrived {
                assert_eq!(e.delay, 0.2);
            }
        }
        let o = run.outcome;
        let lost = o.events_total - o.successes;
        assert!((o.empirical_loss_rate * o.events_total as f64 - lost as f64).abs() <= 1.0);
    }

    #[test]
    fn run_is_reproducible() {
        let net = NetworkModel::new(0.1, MacProtocol::PureAloha).unwrap();
        let a = simulate_networked(Scheme::EventTriggered, net, 4, 1.0, 500, &cfg(8)).unwrap();
        let b = simulate_networked(Scheme::EventTriggered, net, 4, 1.0, 500, &cfg(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delay_modes_share_events() {
        let net = NetworkModel::new(0.1, MacProtocol::PureAloha).unwrap();
        let mut scenario = NetworkScenario {
            scheme: Scheme::EventTriggered,
            network: net,
            num_agents: 3,
            scheme_param: 1.0,
            num_events: 500,
            delay_mode: DelayMode::Transmission,
        };
        let delayed = simulate_scenario(&scenario, &cfg(21)).unwrap();
        scenario.delay_mode = DelayMode::Instantaneous;
        let instant = simulate_scenario(&scenario, &cfg(21)).unwrap();
        assert_eq!(delayed.log, instant.log);
        assert!(instant.outcome.empirical_cost < delayed.outcome.empirical_cost);
    }

    #[test]
    fn rejects_bad_parameters() {
        let net = NetworkModel::new(0.1, MacProtocol::PureAloha).unwrap();
        assert!(simulate_networked(Scheme::EventTriggered, net, 1, 1.0, 100, &cfg(0)).is_err());
        assert!(simulate_networked(Scheme::EventTriggered, net, 2, 0.0, 100, &cfg(0)).is_err());
        assert!(simulate_networked(Scheme::EventTriggered, net, 2, 0.05, 100, &cfg(0)).is_err());
        assert!(simulate_networked(Scheme::EventTriggered, net, 2, 1.0, 1, &cfg(0)).is_err());
    }
}
