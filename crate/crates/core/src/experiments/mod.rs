//! Scenario runner: rounds, the mode × scenario matrix, summaries and checks.

pub mod check;
pub mod output;
pub mod stats;

pub use check::{matrix_checks, round_violations, CheckReport};
pub use output::{read_rounds, regenerate, render_report, summarize, write_results, ResultFiles};
pub use stats::{confidence_interval, Estimate};

use crate::adversary::{AttackKind, Timing};
use crate::config::{ConfigError, ScenarioConfig};
use crate::netsim::{SimError, Trace};
use crate::rpl::Mode;
use crate::world::{run_round, DropReason};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed results: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundResult {
    pub scenario: String,
    pub mode: Mode,
    pub round: u32,
    pub seed: u64,
    pub pdr: f64,
    pub energy_per_delivered: f64,
    pub sends: u32,
    pub delivered: u32,
    pub drops: BTreeMap<DropReason, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub mode: Mode,
    pub pdr: Estimate,
    pub energy_per_delivered: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatrixFilter {
    pub mode: Option<Mode>,
    pub kind: Option<AttackKind>,
    pub timing: Option<Timing>,
}

/// One labelled round trace.
pub struct RoundTrace {
    pub scenario: String,
    pub mode: Mode,
    pub round: u32,
    pub trace: Trace,
}

pub struct MatrixResult {
    pub rounds: Vec<RoundResult>,
    pub summaries: Vec<Summary>,
    /// Per-round invariant violations.
    pub violations: Vec<String>,
    pub traces: Vec<RoundTrace>,
}

/// The ten attack scenarios: no attack, then every kind × timing.
pub fn scenarios() -> Vec<(AttackKind, Timing)> {
    let mut out = vec![(AttackKind::None, Timing::Before)];
    for kind in [AttackKind::FullPacket, AttackKind::Frag1Only, AttackKind::AllButLast] {
        for timing in Timing::ALL {
            out.push((kind, timing));
        }
    }
    out
}

/// Per-scenario configs for the grid, vanilla rows first.
pub fn matrix_configs(base: &ScenarioConfig, filter: MatrixFilter) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for mode in [Mode::Vanilla, Mode::Csm] {
        if filter.mode.is_some_and(|m| m != mode) {
            continue;
        }
        for (kind, timing) in scenarios() {
            if filter.kind.is_some_and(|k| k != kind) {
                continue;
            }
            if kind != AttackKind::None && filter.timing.is_some_and(|t| t != timing) {
                continue;
            }
            let mut cfg = base.clone();
            cfg.mode = mode;
            cfg.attack.kind = kind;
            cfg.attack.timing = timing;
            out.push(cfg);
        }
    }
    out
}

/// Runs every round of every config; rounds execute in parallel but
/// results keep config-then-round order.
pub fn run_configs(configs: &[ScenarioConfig], trace: bool) -> Result<MatrixResult, ExperimentError> {
    for cfg in configs {
        cfg.validate()?;
    }
    let jobs: Vec<(&ScenarioConfig, u32)> = configs
        .iter()
        .flat_map(|c| (0..c.rounds).map(move |r| (c, r)))
        .collect();
    let outputs = jobs
        .par_iter()
        .map(|&(cfg, round)| {
            let seed = cfg.base_seed.wrapping_add(round as u64);
            let out = run_round(cfg, seed, trace)?;
            let violations = round_violations(cfg, &out)
                .into_iter()
                .map(|v| format!("{} {} round {round}: {v}", cfg.label(), cfg.mode))
                .collect::<Vec<_>>();
            let m = out.metrics;
            let result = RoundResult {
                scenario: cfg.label(),
                mode: cfg.mode,
                round,
                seed,
                pdr: m.pdr,
                energy_per_delivered: m.energy_per_delivered,
                sends: m.sends,
                delivered: m.delivered,
                drops: m.drops,
            };
            let trace = trace.then(|| RoundTrace {
                scenario: cfg.label(),
                mode: cfg.mode,
                round,
                trace: out.trace,
            });
            Ok((result, violations, trace))
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;

    let mut result = MatrixResult {
        rounds: Vec::with_capacity(outputs.len()),
        summaries: Vec::new(),
        violations: Vec::new(),
        traces: Vec::new(),
    };
    for (r, v, t) in outputs {
        result.rounds.push(r);
        result.violations.extend(v);
        result.traces.extend(t);
    }
    result.summaries = summarize(&result.rounds);
    Ok(result)
}

/// Runs one scenario for `cfg.rounds` rounds; round `r` uses seed `base_seed + r`.
pub fn run_scenario(cfg: &ScenarioConfig, trace: bool) -> Result<MatrixResult, ExperimentError> {
    run_configs(std::slice::from_ref(cfg), trace)
}

pub fn run_matrix(base: &ScenarioConfig, filter: MatrixFilter, trace: bool) -> Result<MatrixResult, ExperimentError> {
    run_configs(&matrix_configs(base, filter), trace)
}
