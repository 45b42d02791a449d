//! Experiment drivers and report emission for the two reference studies:
//! random-instance HDMR minimization and the finite-horizon bandit game.
//!
//! Reports are deterministic functions of (config, seed, code version): the
//! CSV files carry only seed-derived numbers so reruns are byte-identical,
//! while wall-clock timings live in the JSON report alongside a config echo.

use std::path::Path;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adp::{
    exact_backward, greedy_action, hdmr_stage_binary_size, offline_pass, strip_state_only_components,
    DecisionProblem, StageTable,
};
use crate::bandit::{make_problem, simulate, GameConfig, Strategy, SufficientStatistic};
use crate::hdmr::{GridDomain, HdmrModel};
use crate::model_io::{save_stages, AxisRole};
use crate::trmin::{
    approx_min, assemble, candidate_set, decompose, exact_min, minimize_over_candidates,
    relaxed_minimizer, AxisSplit, DEFAULT_ENUMERATION_BUDGET,
};
use crate::{Error, Result};

fn default_randmin_axes() -> Vec<usize> {
    vec![150, 150, 150]
}

fn default_randmin_seeds() -> Vec<u64> {
    (0..20).collect()
}

fn default_phis() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

fn default_budget() -> u64 {
    DEFAULT_ENUMERATION_BUDGET
}

/// Configuration of the random-instance minimization study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandminConfig {
    pub axes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub phis: Vec<f64>,
    /// Draw random first-order components too (the reference study averages
    /// over random F and h, so this defaults to on).
    pub include_first_order: bool,
    pub enumeration_budget: u64,
}

impl Default for RandminConfig {
    fn default() -> Self {
        Self {
            axes: default_randmin_axes(),
            seeds: default_randmin_seeds(),
            phis: default_phis(),
            include_first_order: true,
            enumeration_budget: default_budget(),
        }
    }
}

fn check_phis(phis: &[f64]) -> Result<()> {
    if phis.is_empty() {
        return Err(Error::InvalidConfig("phi list must be nonempty".into()));
    }
    if let Some(phi) = phis.iter().find(|p| !(0.0..=1.0).contains(*p) || !p.is_finite()) {
        return Err(Error::InvalidConfig(format!("phi {phi} outside [0, 1]")));
    }
    Ok(())
}

impl RandminConfig {
    pub fn validate(&self) -> Result<()> {
        if self.axes.len() < 2 {
            return Err(Error::InvalidConfig("need at least two decision axes".into()));
        }
        if self.axes.iter().any(|&s| s < 2) {
            return Err(Error::InvalidConfig("every axis needs at least two values".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list must be nonempty".into()));
        }
        check_phis(&self.phis)
    }
}

/// One (seed, phi) measurement of the randmin study. Values are scaled so
/// the exact minimum maps to 0 and the full-grid mean maps to 1.
#[derive(Debug, Clone, Serialize)]
pub struct RandminRow {
    pub seed: u64,
    pub phi: f64,
    pub scaled_upper: f64,
    pub scaled_lower: f64,
    pub candidates: usize,
    pub exact_evaluations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandminSeedSummary {
    pub seed: u64,
    pub exact_value: f64,
    pub mean_value: f64,
    pub scaled_lower: f64,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct RandminReport {
    pub version: String,
    pub config: RandminConfig,
    pub rows: Vec<RandminRow>,
    pub seeds: Vec<RandminSeedSummary>,
    /// Mean scaled upper bound per phi, in config order.
    pub mean_scaled_upper: Vec<f64>,
    pub mean_scaled_lower: f64,
}

/// Draws a random second-order model on `domain`: i.i.d. uniform [0, 1]
/// entries per component table, then projected onto the HDMR zero-mean
/// identities (each pair table double-centered, each first-order table
/// centered) so the rebalanced invariants hold exactly.
pub fn random_centered_model(
    domain: &GridDomain,
    seed: u64,
    include_first_order: bool,
) -> HdmrModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dim();
    let mut first_order: Vec<Vec<f64>> = Vec::with_capacity(d);
    for m in 0..d {
        let len = domain.axis_size(m);
        let mut table = if include_first_order {
            (0..len).map(|_| rng.gen_range(0.0..1.0)).collect::<Vec<f64>>()
        } else {
            vec![0.0; len]
        };
        let mean = table.iter().sum::<f64>() / len as f64;
        for v in &mut table {
            *v -= mean;
        }
        first_order.push(table);
    }
    let mut second_order = Vec::new();
    for m in 0..d {
        for n in m + 1..d {
            let (rows, cols) = (domain.axis_size(m), domain.axis_size(n));
            let mut table: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
            // Double-center: remove row means, column means, add back total.
            let total = table.iter().sum::<f64>() / (rows * cols) as f64;
            let row_means: Vec<f64> = (0..rows)
                .map(|i| table[i * cols..(i + 1) * cols].iter().sum::<f64>() / cols as f64)
                .collect();
            let col_means: Vec<f64> = (0..cols)
                .map(|j| (0..rows).map(|i| table[i * cols + j]).sum::<f64>() / rows as f64)
                .collect();
            for i in 0..rows {
                for j in 0..cols {
                    table[i * cols + j] += total - row_means[i] - col_means[j];
                }
            }
            second_order.push(table);
        }
    }
    HdmrModel::from_tables(domain.clone(), 0.0, first_order, second_order)
        .expect("generated tables are well formed")
}

/// Runs the random-instance study: per seed, an exact scan, the relaxed
/// lower bound, and one approximate minimization per phi.
pub fn run_randmin(config: &RandminConfig) -> Result<RandminReport> {
    config.validate()?;
    let domain = GridDomain::new(config.axes.clone())?;
    let d = domain.dim();
    let split = AxisSplit::new(vec![], (0..d).collect())?;

    struct SeedOut {
        summary: RandminSeedSummary,
        rows: Vec<RandminRow>,
    }

    let outputs: Vec<Result<SeedOut>> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let model = random_centered_model(&domain, seed, config.include_first_order);
            let problem = assemble(&model, &split)?;
            let cache = decompose(&problem)?;
            let exact = exact_min(&model, &split, &[], config.enumeration_budget)?;
            let mean_value = model.g0();
            let denom = mean_value - exact.value;
            if denom <= f64::EPSILON * exact.value.abs().max(1.0) {
                return Err(Error::DegenerateObjective);
            }
            let scale = |v: f64| (v - exact.value) / denom;
            let rm = relaxed_minimizer(&cache, &problem, &[])?;
            let lower = model.g0() + rm.lower_value;
            let scaled_lower = scale(lower);
            let mut rows = Vec::with_capacity(config.phis.len());
            for &phi in &config.phis {
                let approx = approx_min(
                    &model,
                    &split,
                    &problem,
                    &cache,
                    &[],
                    phi,
                    config.enumeration_budget,
                )?;
                rows.push(RandminRow {
                    seed,
                    phi,
                    scaled_upper: scale(approx.value),
                    scaled_lower,
                    candidates: approx.evaluated,
                    exact_evaluations: exact.evaluated,
                });
            }
            Ok(SeedOut {
                summary: RandminSeedSummary {
                    seed,
                    exact_value: exact.value,
                    mean_value,
                    scaled_lower,
                    elapsed_ms: start.elapsed().as_millis(),
                },
                rows,
            })
        })
        .collect();

    let mut rows = Vec::new();
    let mut seeds = Vec::new();
    for out in outputs {
        let out = out?;
        rows.extend(out.rows);
        seeds.push(out.summary);
    }
    let n = config.seeds.len() as f64;
    let mean_scaled_upper: Vec<f64> = config
        .phis
        .iter()
        .map(|&phi| {
            rows.iter()
                .filter(|r| r.phi == phi)
                .map(|r| r.scaled_upper)
                .sum::<f64>()
                / n
        })
        .collect();
    let mean_scaled_lower = seeds.iter().map(|s| s.scaled_lower).sum::<f64>() / n;
    Ok(RandminReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        rows,
        seeds,
        mean_scaled_upper,
        mean_scaled_lower,
    })
}

pub fn write_randmin_csv(report: &RandminReport, w: &mut dyn std::io::Write) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    csv.write_record([
        "seed",
        "phi",
        "scaled_upper",
        "scaled_lower",
        "candidates",
        "exact_evaluations",
    ])
    .map_err(|e| Error::Format(e.to_string()))?;
    for r in &report.rows {
        csv.write_record([
            r.seed.to_string(),
            r.phi.to_string(),
            r.scaled_upper.to_string(),
            r.scaled_lower.to_string(),
            r.candidates.to_string(),
            r.exact_evaluations.to_string(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}

/// One prior count cell of the bandit statistic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorCell {
    pub outcome: usize,
    pub arm: (usize, usize),
    pub count: usize,
}

fn default_arms() -> (usize, usize) {
    (3, 3)
}

fn default_horizon() -> usize {
    8
}

fn default_plays() -> usize {
    20_000
}

fn default_prior() -> Vec<PriorCell> {
    vec![PriorCell {
        outcome: 0,
        arm: (0, 0),
        count: 1,
    }]
}

fn default_pinned() -> Option<f64> {
    Some(0.1)
}

/// Configuration of the bandit replication study.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    pub arms: (usize, usize),
    pub horizon: usize,
    pub plays: usize,
    pub phis: Vec<f64>,
    pub prior: Vec<PriorCell>,
    /// True success probability of arm (0, 0), fixed across plays.
    pub pinned_first_arm: Option<f64>,
    pub simulation_seed: u64,
    /// Cap on stored exact-table values.
    pub table_budget: u64,
    pub enumeration_budget: u64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            arms: default_arms(),
            horizon: default_horizon(),
            plays: default_plays(),
            phis: vec![0.0, 1.0],
            prior: default_prior(),
            pinned_first_arm: default_pinned(),
            simulation_seed: 1,
            table_budget: 50_000_000,
            enumeration_budget: default_budget(),
        }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.plays == 0 {
            return Err(Error::InvalidConfig("horizon and plays must be at least 1".into()));
        }
        if self.arms.0 == 0 || self.arms.1 == 0 {
            return Err(Error::InvalidConfig("arm grid must be nonempty".into()));
        }
        for cell in &self.prior {
            if cell.outcome > 1 || cell.arm.0 >= self.arms.0 || cell.arm.1 >= self.arms.1 {
                return Err(Error::InvalidConfig(format!("invalid prior cell {cell:?}")));
            }
        }
        check_phis(&self.phis)
    }

    pub fn game_config(&self) -> Result<GameConfig> {
        self.validate()?;
        let mut prior = SufficientStatistic::zero(self.arms);
        for cell in &self.prior {
            for _ in 0..cell.count {
                prior = prior.update(&[cell.arm.0, cell.arm.1], cell.outcome);
            }
        }
        Ok(GameConfig {
            arms: self.arms,
            horizon: self.horizon,
            prior,
            plays: self.plays,
            pinned_first_arm: self.pinned_first_arm,
        })
    }
}

struct TableStrategy {
    stages: Vec<StageTable>,
}

impl Strategy for TableStrategy {
    fn choose(&self, t: usize, state: &[usize]) -> Result<Vec<usize>> {
        greedy_action(&self.stages[t - 1], state)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyResult {
    /// "exact" or the phi value as text.
    pub policy: String,
    pub phi: Option<f64>,
    pub mean_payoff: f64,
    pub std_error: f64,
    pub plays: usize,
}

/// Gap between the approximate one-step bound and the exact one-step
/// minimum at the last decision stage, over all reachable states there.
#[derive(Debug, Clone, Serialize)]
pub struct GapStats {
    pub phi: f64,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub states: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BanditReport {
    pub version: String,
    pub config: BanditConfig,
    /// P is redrawn independently for every play (pinned entry excepted).
    pub p_resampling: String,
    pub results: Vec<PolicyResult>,
    pub gap_stats: Vec<GapStats>,
    pub exact_storage_bytes: usize,
    /// Per phi, in config order.
    pub hdmr_storage_bytes: Vec<usize>,
    pub decompositions_per_phi: Vec<usize>,
    pub inner_evaluations_per_phi: Vec<usize>,
    pub exact_backward_ms: u128,
    pub offline_ms: Vec<u128>,
    pub simulate_ms: Vec<u128>,
}

/// Runs the bandit replication: exact backward induction, one offline pass
/// per phi, and a common-random-numbers simulation of every policy.
pub fn run_bandit(config: &BanditConfig, out_dir: Option<&Path>) -> Result<BanditReport> {
    let game = config.game_config()?;
    let problem = make_problem(&game, config.table_budget)?;
    let n_action_axes = 2;

    let start = Instant::now();
    let exact_tables = exact_backward(&problem, config.table_budget)?;
    let exact_backward_ms = start.elapsed().as_millis();
    let exact_storage_bytes: usize = exact_tables.iter().map(|t| t.dense_binary_size()).sum();

    let mut results = Vec::new();
    let mut simulate_ms = Vec::new();
    let exact_strategy = TableStrategy {
        stages: exact_tables.iter().cloned().map(StageTable::Exact).collect(),
    };
    let start = Instant::now();
    let stats = simulate(&game, &exact_strategy, config.simulation_seed)?;
    simulate_ms.push(start.elapsed().as_millis());
    results.push(PolicyResult {
        policy: "exact".into(),
        phi: None,
        mean_payoff: stats.mean_payoff,
        std_error: stats.std_error,
        plays: game.plays,
    });

    let mut gap_stats = Vec::new();
    let mut hdmr_storage_bytes = Vec::new();
    let mut decompositions_per_phi = Vec::new();
    let mut inner_evaluations_per_phi = Vec::new();
    let mut offline_ms = Vec::new();

    let tau = game.horizon;
    for &phi in &config.phis {
        let start = Instant::now();
        let pass = offline_pass(&problem, phi, config.enumeration_budget)?;
        offline_ms.push(start.elapsed().as_millis());
        decompositions_per_phi.push(pass.decompositions);
        inner_evaluations_per_phi.push(pass.inner_evaluations);
        hdmr_storage_bytes
            .push(pass.stages.iter().map(|m| hdmr_stage_binary_size(m, n_action_axes)).sum());

        // One-step bound quality at the last decision stage.
        let last = &pass.stages[tau - 1];
        let d = last.domain().dim();
        let split = AxisSplit::new((n_action_axes..d).collect(), (0..n_action_axes).collect())?;
        let tr_problem = assemble(last, &split)?;
        let cache = decompose(&tr_problem)?;
        let mut mean_gap = 0.0;
        let mut max_gap = f64::NEG_INFINITY;
        let states = problem.reachable_states(tau - 1);
        for y in &states {
            let rm = relaxed_minimizer(&cache, &tr_problem, y)?;
            let cs = candidate_set(&rm.v_hat, &tr_problem, phi, config.enumeration_budget)?;
            let bound = minimize_over_candidates(last, &split, y, &cs)?.value;
            let exact_pi = exact_tables[tau - 1].bellman_value(y)?;
            let gap = bound - exact_pi;
            mean_gap += gap;
            max_gap = max_gap.max(gap);
        }
        mean_gap /= states.len() as f64;
        gap_stats.push(GapStats {
            phi,
            mean_gap,
            max_gap,
            states: states.len(),
        });

        if let Some(dir) = out_dir {
            let stripped: Vec<HdmrModel> = pass
                .stages
                .iter()
                .map(|m| strip_state_only_components(m, n_action_axes))
                .collect();
            let mut roles = vec![AxisRole::Action; n_action_axes];
            roles.extend(vec![AxisRole::State; d - n_action_axes]);
            save_stages(&dir.join(format!("stages_phi_{phi}")), tau, phi, &stripped, &roles)?;
        }

        let strategy = TableStrategy {
            stages: pass
                .stages
                .iter()
                .enumerate()
                .map(|(i, m)| StageTable::Hdmr {
                    stage: i + 1,
                    action_domain: problem.action_domain(i + 1).clone(),
                    model: m.clone(),
                })
                .collect(),
        };
        let start = Instant::now();
        let stats = simulate(&game, &strategy, config.simulation_seed)?;
        simulate_ms.push(start.elapsed().as_millis());
        results.push(PolicyResult {
            policy: format!("phi={phi}"),
            phi: Some(phi),
            mean_payoff: stats.mean_payoff,
            std_error: stats.std_error,
            plays: game.plays,
        });
    }

    Ok(BanditReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        p_resampling: "per play".into(),
        results,
        gap_stats,
        exact_storage_bytes,
        hdmr_storage_bytes,
        decompositions_per_phi,
        inner_evaluations_per_phi,
        exact_backward_ms,
        offline_ms,
        simulate_ms,
    })
}

pub fn write_bandit_csv(report: &BanditReport, w: &mut dyn std::io::Write) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    csv.write_record(["policy", "phi", "mean_payoff", "std_error", "plays"])
        .map_err(|e| Error::Format(e.to_string()))?;
    for r in &report.results {
        csv.write_record([
            r.policy.clone(),
            r.phi.map(|p| p.to_string()).unwrap_or_default(),
            r.mean_payoff.to_string(),
            r.std_error.to_string(),
            r.plays.to_string(),
        ])
        .map_err(|e| Error::Format(e.to_string()))?;
    }
    csv.flush()?;
    Ok(())
}
