//! The four subcommands, as library functions returning their artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use consensim::cost::{
    curve_sweep, decompose_cost, etc_crossover_load, ttc_tdma_normalized, EtcConstants, LoadPoint,
    MacProtocol, NetworkModel,
};
use consensim::first_exit::{
    aloha_loss_probability, expected_min_exit, survival_min_of_n_detailed,
};
use consensim::rng::derive_seed;
use consensim::sim::{estimate_constants, simulate_scenario, DelayMode, NetworkScenario, Scheme};
use consensim::stats::combined_se;
use serde::Serialize;

use crate::artifacts::{curves_csv, curves_json, write_atomic, ConstantsFile, Provenance};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// Tolerance for quadrature values of `E[T_ET | Δ = 1]`.
pub const EXIT_TOL: f64 = 1e-10;
/// Standard errors allowed between a measurement and its analytic value.
pub const SE_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug)]
pub struct ConstantsRun {
    pub file: ConstantsFile,
    pub path: PathBuf,
    pub table: String,
    /// Agent counts whose estimation failed, with the reason.
    pub failures: Vec<(u32, String)>,
}

/// Estimates constants for every configured `n` and merges them into `out`.
pub fn cmd_constants(config: &ExperimentConfig, out: Option<&Path>) -> Result<ConstantsRun> {
    let path = out.unwrap_or(&config.output.constants).to_path_buf();
    let mut merged = if path.exists() {
        ConstantsFile::load(&path)?.by_n()
    } else {
        BTreeMap::new()
    };
    let mut failures = Vec::new();
    for &n in &config.n_list {
        let cfg = config.path_config(derive_seed(config.seed, n as u64));
        match estimate_constants(n, config.replications, &cfg) {
            Ok(c) => {
                merged.insert(n, c);
            }
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let file = ConstantsFile::new(
        Provenance::new(config.digest(), config.seed),
        merged.into_values(),
    );
    write_atomic(&path, &file.to_json())?;
    let table = constants_table(&file);
    Ok(ConstantsRun {
        file,
        path,
        table,
        failures,
    })
}

fn constants_table(file: &ConstantsFile) -> String {
    let mut out = format!(
        "{:>4}  {:>22}  {:>12}  {:>22}  {:>20}\n",
        "n", "E[T|Δ=1] (MC)", "quadrature", "base cost", "base ratio"
    );
    for c in &file.entries {
        let exact = expected_min_exit(c.num_agents, EXIT_TOL)
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|_| "-".into());
        let ratio = c
            .base_ratio()
            .map(|(r, se)| format!("{r:.5} ± {se:.5}"))
            .unwrap_or_else(|_| "-".into());
        writeln!(
            out,
            "{:>4}  {:>22}  {:>12}  {:>22}  {:>20}",
            c.num_agents,
            format!("{:.5} ± {:.5}", c.mean_exit_time, c.mean_exit_se),
            exact,
            format!("{:.5} ± {:.5}", c.base_cost, c.base_cost_se),
            ratio
        )
        .unwrap();
    }
    out
}

#[derive(Debug)]
pub struct CurvesRun {
    pub points: Vec<LoadPoint>,
    pub path: PathBuf,
    pub contents: String,
}

/// Sweeps the load grid for every configured `n` using stored constants.
pub fn cmd_curves(
    config: &ExperimentConfig,
    constants_path: Option<&Path>,
    out: Option<&Path>,
    format: Format,
) -> Result<CurvesRun> {
    let n_list = config.comparison_n_list()?;
    let constants = ConstantsFile::load(constants_path.unwrap_or(&config.output.constants))?;
    let grid = config.grid.points()?;
    let points =
        curve_sweep(n_list, &grid, &constants.by_n(), config.tolerance).map_err(|e| match e {
            consensim::Error::Config(msg) => CliError::Config(msg),
            other => CliError::Model(other),
        })?;
    let digest = config.digest();
    let contents = match format {
        Format::Csv => curves_csv(&points, config.seed, &digest),
        Format::Json => curves_json(&points, config.seed, &digest),
    };
    let path = match (out, format) {
        (Some(p), _) => p.to_path_buf(),
        (None, Format::Csv) => config.output.curves.clone(),
        (None, Format::Json) => config.output.curves.with_extension("json"),
    };
    write_atomic(&path, &contents)?;
    Ok(CurvesRun {
        points,
        path,
        contents,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub analytic: f64,
    /// Standard error of `measured − analytic`.
    pub se: f64,
    pub detail: String,
}

impl Check {
    fn within(name: &str, measured: f64, analytic: f64, se: f64, detail: String) -> Self {
        Check {
            name: name.into(),
            passed: (measured - analytic).abs() <= SE_MARGIN * se,
            measured,
            analytic,
            se,
            detail,
        }
    }

    fn failed(name: &str, detail: String) -> Self {
        Check {
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            analytic: f64::NAN,
            se: f64::NAN,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub config_digest: String,
    pub events: u64,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

fn pa_scenario(n: u32, tau: f64, events: u64, delay_mode: DelayMode) -> Result<NetworkScenario> {
    Ok(NetworkScenario {
        scheme: Scheme::EventTriggered,
        network: NetworkModel::new(tau, MacProtocol::PureAloha)?,
        num_agents: n,
        scheme_param: 1.0,
        num_events: events,
        delay_mode,
    })
}

fn check_ttc_tdma(config: &ExperimentConfig) -> Result<Check> {
    let (n, rho) = (2, 0.1);
    let scenario = NetworkScenario {
        scheme: Scheme::TimeTriggered,
        network: NetworkModel::new(rho, MacProtocol::Tdma)?,
        num_agents: n,
        scheme_param: 1.0,
        num_events: config.events,
        delay_mode: DelayMode::Transmission,
    };
    let run = simulate_scenario(
        &scenario,
        &config.path_config(derive_seed(config.seed, 101)),
    )?;
    let est = run.outcome.normalized_cost(rho, n);
    Ok(Check::within(
        "ttc_tdma_cost",
        est.value,
        ttc_tdma_normalized(rho)?,
        est.se,
        format!("TTC+TDMA normalized cost, n = {n}, rho = {rho}"),
    ))
}

fn check_degenerate_tdma(config: &ExperimentConfig) -> Result<Check> {
    let scenario = NetworkScenario {
        scheme: Scheme::TimeTriggered,
        network: NetworkModel::new(0.1, MacProtocol::Tdma)?,
        num_agents: 2,
        scheme_param: 0.05,
        num_events: config.events.min(1000),
        delay_mode: DelayMode::Transmission,
    };
    let mut cfg = config.path_config(derive_seed(config.seed, 102));
    cfg.step = cfg.step.min(0.05 / 100.0);
    let out = simulate_scenario(&scenario, &cfg)?.outcome;
    Ok(Check {
        name: "tdma_degenerate".into(),
        passed: out.divergent && out.empirical_loss_rate == 1.0,
        measured: out.empirical_loss_rate,
        analytic: 1.0,
        se: 0.0,
        detail: format!("period 0.05 below tau 0.1; divergent = {}", out.divergent),
    })
}

/// Loss rate, cost decomposition and inter-success time at `(n = 3, ρ = 0.25)`.
fn checks_aloha(config: &ExperimentConfig, constants: &EtcConstants) -> Result<Vec<Check>> {
    let (n, rho) = (3, 0.25);
    let mean_exit = expected_min_exit(n, EXIT_TOL)?;
    let tau = rho * mean_exit;
    let p = aloha_loss_probability(rho, n, mean_exit, config.tolerance)?;
    let scenario = pa_scenario(n, tau, config.events, DelayMode::Transmission)?;
    let out = simulate_scenario(
        &scenario,
        &config.path_config(derive_seed(config.seed, 103)),
    )?
    .outcome;
    let predicted = decompose_cost(constants.base_cost, n, p, mean_exit, tau)?;
    let p_hat = out.empirical_loss_rate;
    Ok(vec![
        Check::within(
            "aloha_loss_rate",
            p_hat,
            p,
            out.loss_rate_se,
            format!("empirical loss rate vs 1 - P(T > tau)^2, n = {n}, rho = {rho}"),
        ),
        Check::within(
            "cost_decomposition",
            out.empirical_cost,
            predicted.total,
            combined_se(&[out.cost_se, constants.base_cost_se]),
            format!(
                "base {:.5} + loss {:.5} + delay {:.5}",
                predicted.base, predicted.loss_penalty, predicted.delay_penalty
            ),
        ),
        Check::within(
            "inter_success_time",
            out.mean_inter_success,
            mean_exit / (1.0 - p_hat),
            out.mean_inter_success_se,
            "mean time between delivered packets vs E[T]/(1 - p_hat)".into(),
        ),
    ])
}

/// Matched-seed runs with and without transmission delay at `(n = 3, ρ = 0.2)`.
fn check_delay_separation(config: &ExperimentConfig) -> Result<Check> {
    let (n, rho) = (3, 0.2);
    let tau = rho * expected_min_exit(n, EXIT_TOL)?;
    let cfg = config.path_config(derive_seed(config.seed, 104));
    let delayed = simulate_scenario(
        &pa_scenario(n, tau, config.events, DelayMode::Transmission)?,
        &cfg,
    )?;
    let instant = simulate_scenario(
        &pa_scenario(n, tau, config.events, DelayMode::Instantaneous)?,
        &cfg,
    )?;
    let (a, b) = (&delayed.outcome, &instant.outcome);
    let pairs = (n * (n - 1)) as f64;
    Ok(Check::within(
        "delay_separation",
        a.empirical_cost - b.empirical_cost,
        pairs * tau,
        combined_se(&[a.cost_se, b.cost_se]),
        format!("cost with delay minus cost without, expected N(N-1)tau, n = {n}, rho = {rho}"),
    ))
}

/// Loss probability at full load for one agent, against the value 3/4 that
/// follows from treating the mean exit time as a median.
fn check_full_load_single_agent(config: &ExperimentConfig) -> Result<Check> {
    let p = aloha_loss_probability(1.0, 1, expected_min_exit(1, EXIT_TOL)?, config.tolerance)?;
    Ok(Check {
        name: "single_agent_full_load_loss".into(),
        passed: p > 1.0 / 3.0,
        measured: p,
        analytic: 1.0 / 3.0,
        se: 0.0,
        detail: format!(
            "p_PA(rho = 1, n = 1) = {p:.6}; differs from 3/4, which assumes \
             P(T > E[T]) = 1/2; exceeds the 1/3 needed for ETC to lose at full load"
        ),
    })
}

/// Runs every simulation check; failures of the simulations themselves are
/// reported as failed checks.
pub fn cmd_validate(
    config: &ExperimentConfig,
    constants_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(ValidationReport, PathBuf)> {
    let n3 = match constants_path {
        Some(path) => ConstantsFile::load(path)?
            .by_n()
            .get(&3)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("{}: no constants for n = 3", path.display()))),
        None => estimate_constants(
            3,
            config.replications,
            &config.path_config(derive_seed(config.seed, 3)),
        )
        .map_err(CliError::from),
    };

    let mut checks = Vec::new();
    let mut push = |name: &str, r: Result<Check>| match r {
        Ok(c) => checks.push(c),
        Err(e) => checks.push(Check::failed(name, e.to_string())),
    };
    push("ttc_tdma_cost", check_ttc_tdma(config));
    push("tdma_degenerate", check_degenerate_tdma(config));
    match n3 {
        Ok(c) => match checks_aloha(config, &c) {
            Ok(list) => list.into_iter().for_each(|c| push(&c.name.clone(), Ok(c))),
            Err(e) => push("aloha", Err(e)),
        },
        Err(e) => push("aloha", Err(e)),
    }
    push("delay_separation", check_delay_separation(config));
    push(
        "single_agent_full_load_loss",
        check_full_load_single_agent(config),
    );

    let all_passed = checks.iter().all(|c| c.passed);
    let report = ValidationReport {
        seed: config.seed,
        config_digest: config.digest(),
        events: config.events,
        checks,
        all_passed,
    };
    let path = out.unwrap_or(&config.output.report).to_path_buf();
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_atomic(&path, &text)?;
    Ok((report, path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub n: u32,
    pub t: f64,
    pub survival: f64,
    pub terms_used: u64,
    pub truncation_bound: f64,
}

/// `P(T_ET > t | Δ = 1)` for every `n` and `t`.
pub fn cmd_survival(n_list: &[u32], times: &[f64], tol: f64) -> Result<Vec<SurvivalRow>> {
    let mut rows = Vec::with_capacity(n_list.len() * times.len());
    for &n in n_list {
        for &t in times {
            let (survival, single) = survival_min_of_n_detailed(n, t, tol)?;
            rows.push(SurvivalRow {
                n,
                t,
                survival,
                terms_used: single.terms_used,
                truncation_bound: single.truncation_bound,
            });
        }
    }
    Ok(rows)
}

pub fn survival_table(rows: &[SurvivalRow], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from("n,t,survival,terms_used,truncation_bound\n");
            for r in rows {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    r.n, r.t, r.survival, r.terms_used, r.truncation_bound
                )
                .unwrap();
            }
            out
        }
        Format::Json => {
            let mut text = serde_json::to_string_pretty(rows).expect("rows serialize");
            text.push('\n');
            text
        }
    }
}

/// Smallest agent count from which ETC is never cheaper (base ratio above
/// 1/2 even after subtracting `margin` standard errors).
pub fn etc_never_cheaper_from(file: &ConstantsFile, margin: f64) -> Option<u32> {
    let mut found = None;
    for c in file.entries.iter().rev() {
        match c.base_ratio() {
            Ok((b, se)) if c.num_agents >= 2 && b - margin * se > 0.5 => found = Some(c.num_agents),
            _ => break,
        }
    }
    found
}

/// Crossing loads of the ETC and TTC curves, one line per `n`.
pub fn crossover_summary(file: &ConstantsFile, tol: f64) -> String {
    let mut out = String::new();
    for c in file.entries.iter().filter(|c| c.num_agents >= 2) {
        let Ok((b, _)) = c.base_ratio() else { continue };
        let line = match etc_crossover_load(c.num_agents, b, c.mean_exit_time, tol) {
            Ok(Some(rho)) => format!("ETC cheaper below rho = {rho:.4}"),
            Ok(None) => "ETC never cheaper".into(),
            Err(e) => format!("crossing not found: {e}"),
        };
        writeln!(out, "n = {:>3}: {line}", c.num_agents).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_rows() {
        let rows = cmd_survival(&[1, 2], &[0.0, 1.0], 1e-12).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].survival, 1.0);
        assert!((rows[1].survival - 0.370_777_429_799_523_9).abs() < 1e-11);
        assert!((rows[3].survival - 0.370_777_429_799_523_9f64.powi(2)).abs() < 1e-11);
        assert!(rows.iter().all(|r| r.terms_used >= 1));
        let csv = survival_table(&rows, Format::Csv);
        assert!(csv.starts_with("n,t,survival,terms_used,truncation_bound\n1,0,1,"));
        assert!(cmd_survival(&[1], &[-1.0], 1e-12).is_err());
    }

    #[test]
    fn never_cheaper_threshold_uses_margin() {
        let entry = |n: u32, ratio: f64, se: f64| {
            let pairs = (n * (n - 1)) as f64;
            EtcConstants {
                num_agents: n,
                mean_exit_time: 0.2,
                mean_exit_se: 0.0,
                base_cost: ratio * pairs * 0.2,
                base_cost_se: se * pairs * 0.2,
                replications: 100,
                step: 1e-3,
                seed: 0,
            }
        };
        let prov = Provenance::new("d".into(), 0);
        let file = ConstantsFile::new(
            prov.clone(),
            [
                entry(2, 0.3, 0.01),
                entry(12, 0.505, 0.001),
                entry(72, 0.51, 0.001),
            ],
        );
        assert_eq!(etc_never_cheaper_from(&file, 3.0), Some(12));
        let file = ConstantsFile::new(prov, [entry(2, 0.3, 0.01), entry(72, 0.501, 0.001)]);
        assert_eq!(etc_never_cheaper_from(&file, 3.0), None);
    }
}
