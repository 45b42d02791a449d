//! Finite-horizon stochastic dynamic programming in expected loss-to-go form.
//!
//! The loss-to-go `E_t(a, y)` is the expected cumulative future loss after
//! taking action `a` in state `y`; the classical Bellman function is the
//! derived quantity `V(y) = min_a E(a, y)`. Exact backward induction over the
//! reachable state sets serves as the oracle; the approximate offline pass
//! stores each stage as a second-order HDMR model over the product grid of
//! action and state axes, restricted to reachable pairs, and replaces the
//! inner per-successor minimization with the trust-region upper bound.

use std::collections::HashMap;

use crate::hdmr::{GridDomain, HdmrModel, MarginalAccumulator};
use crate::trmin::{
    assemble, candidate_set, decompose, minimize_over_candidates, relaxed_minimizer, AxisSplit,
};
use crate::{Error, Result};

/// Probability mass conservation tolerance for transition models.
const PROB_TOL: f64 = 1e-12;

/// A finite-horizon decision problem over grid-encoded actions and states.
///
/// Stages are numbered `1..=horizon`. `reachable_states(t)` enumerates the
/// states observable after `t` transitions (so `reachable_states(0)` is the
/// initial condition); enumeration order must be deterministic.
pub trait DecisionProblem {
    fn horizon(&self) -> usize;

    /// Per-axis action coordinates at stage `t`.
    fn action_domain(&self, t: usize) -> &GridDomain;

    /// Per-axis state coordinates (shared across stages).
    fn state_domain(&self) -> &GridDomain;

    /// States reachable after `t` transitions, in lexicographic order.
    fn reachable_states(&self, t: usize) -> Vec<Vec<usize>>;

    /// Loss incurred when the system moves from `y_prev` to `y` under
    /// action `a`.
    fn loss(&self, t: usize, y_prev: &[usize], a: &[usize], y: &[usize]) -> f64;

    /// Finitely supported successor distribution of `(a, y_prev)` at stage
    /// `t`; probabilities must be nonnegative and sum to one.
    fn successors(&self, t: usize, a: &[usize], y_prev: &[usize]) -> Vec<(Vec<usize>, f64)>;
}

/// Exact loss-to-go values at one stage, total on reachable pairs.
#[derive(Debug, Clone)]
pub struct ExactStageTable {
    stage: usize,
    action_domain: GridDomain,
    states: Vec<Vec<usize>>,
    state_index: HashMap<Vec<usize>, usize>,
    /// `values[state * |A| + action]`, actions in lexicographic order.
    values: Vec<f64>,
}

impl ExactStageTable {
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn action_domain(&self) -> &GridDomain {
        &self.action_domain
    }

    pub fn num_values(&self) -> usize {
        self.values.len()
    }

    fn action_rank(&self, a: &[usize]) -> Result<usize> {
        self.action_domain.check_point(a)?;
        let mut rank = 0usize;
        for (k, &ai) in a.iter().enumerate() {
            rank = rank * self.action_domain.axis_size(k) + ai;
        }
        Ok(rank)
    }

    /// `E_t(a, y)`; errors on unreachable states.
    pub fn value(&self, a: &[usize], y: &[usize]) -> Result<f64> {
        let si = self
            .state_index
            .get(y)
            .ok_or(Error::UnreachableState { stage: self.stage })?;
        let ar = self.action_rank(a)?;
        Ok(self.values[si * self.action_domain.cardinality().unwrap() as usize + ar])
    }

    /// The Bellman value `V(y) = min_a E(a, y)`.
    pub fn bellman_value(&self, y: &[usize]) -> Result<f64> {
        let si = self
            .state_index
            .get(y)
            .ok_or(Error::UnreachableState { stage: self.stage })?;
        let na = self.action_domain.cardinality().unwrap() as usize;
        Ok(self.values[si * na..(si + 1) * na]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min))
    }

    /// Serialized byte size under the dense binary encoding (one f64 per
    /// reachable pair, states enumerated canonically).
    pub fn dense_binary_size(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>()
    }
}

/// A per-stage loss-to-go table: exact map or HDMR model over the product
/// grid of action axes followed by state axes.
#[derive(Debug, Clone)]
pub enum StageTable {
    Exact(ExactStageTable),
    Hdmr {
        stage: usize,
        action_domain: GridDomain,
        model: HdmrModel,
    },
}

impl StageTable {
    pub fn stage(&self) -> usize {
        match self {
            StageTable::Exact(t) => t.stage,
            StageTable::Hdmr { stage, .. } => *stage,
        }
    }
}

fn check_probabilities(successors: &[(Vec<usize>, f64)]) -> Result<()> {
    let mut total = 0.0;
    for (y, p) in successors {
        if *p < 0.0 || !p.is_finite() {
            return Err(Error::NonFinite(format!("transition probability {p} at {y:?}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::NonFinite(format!(
            "transition probabilities sum to {total}, expected 1"
        )));
    }
    Ok(())
}

fn for_each_action(domain: &GridDomain, mut f: impl FnMut(&[usize]) -> Result<()>) -> Result<()> {
    let mut err = None;
    domain.for_each_point(|a| match f(a) {
        Ok(()) => true,
        Err(e) => {
            err = Some(e);
            false
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Exact backward induction: `E_tau(a, y) = E[l_tau]` and
/// `E_t(a, y) = E[l_t + min_a' E_{t+1}(a', y')]`. Returns stage tables for
/// `t = 1..=tau` (index `t - 1`).
pub fn exact_backward(dp: &impl DecisionProblem, budget: u64) -> Result<Vec<ExactStageTable>> {
    let tau = dp.horizon();
    if tau == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut tables: Vec<ExactStageTable> = Vec::with_capacity(tau);
    // Bellman values of the next stage, indexed like reachable_states(t).
    let mut next_bellman: Option<HashMap<Vec<usize>, f64>> = None;
    for t in (1..=tau).rev() {
        let states = dp.reachable_states(t - 1);
        let action_domain = dp.action_domain(t).clone();
        let na = action_domain.cardinality()? as usize;
        let needed = (states.len() as u128) * (na as u128);
        if needed > budget as u128 {
            return Err(Error::BudgetExceeded { needed, budget });
        }
        let mut values = Vec::with_capacity(states.len() * na);
        for y_prev in &states {
            for_each_action(&action_domain, |a| {
                let successors = dp.successors(t, a, y_prev);
                check_probabilities(&successors)?;
                let mut e = 0.0;
                for (y, p) in &successors {
                    let mut term = dp.loss(t, y_prev, a, y);
                    if t < tau {
                        term += *next_bellman
                            .as_ref()
                            .unwrap()
                            .get(y)
                            .ok_or(Error::UnreachableState { stage: t })?;
                    }
                    e += p * term;
                }
                values.push(e);
                Ok(())
            })?;
        }
        let state_index: HashMap<Vec<usize>, usize> = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let table = ExactStageTable {
            stage: t,
            action_domain,
            states,
            state_index,
            values,
        };
        // Bellman values for the stage below.
        let mut bellman = HashMap::with_capacity(table.states.len());
        for (si, y) in table.states.iter().enumerate() {
            let v = table.values[si * na..(si + 1) * na]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            bellman.insert(y.clone(), v);
        }
        next_bellman = Some(bellman);
        tables.push(table);
    }
    tables.reverse();
    Ok(tables)
}

/// Output of the approximate offline pass.
#[derive(Debug, Clone)]
pub struct OfflinePass {
    /// HDMR stage tables `E~_t` for `t = 1..=tau` (index `t - 1`), over the
    /// grid of action axes followed by state axes, state-only components
    /// included.
    pub stages: Vec<HdmrModel>,
    /// Number of eigendecompositions performed (one per non-terminal stage).
    pub decompositions: usize,
    /// Objective evaluations spent inside the inner minimizations.
    pub inner_evaluations: usize,
}

fn stage_domain(dp: &impl DecisionProblem, t: usize) -> Result<GridDomain> {
    let mut axes = dp.action_domain(t).axis_sizes().to_vec();
    axes.extend_from_slice(dp.state_domain().axis_sizes());
    GridDomain::new(axes)
}

fn stage_point(a: &[usize], y: &[usize]) -> Vec<usize> {
    let mut p = Vec::with_capacity(a.len() + y.len());
    p.extend_from_slice(a);
    p.extend_from_slice(y);
    p
}

/// Approximate backward pass: each stage's reachable `(a, y)` values are
/// streamed into a marginal accumulator (reachability acting as the HDMR
/// weight) and the inner minimization over the next stage's actions is
/// replaced by its trust-region upper bound at precision `phi`. The
/// eigendecomposition is performed once per stage; the per-successor upper
/// bounds are cached across all pairs sharing a successor.
pub fn offline_pass(dp: &impl DecisionProblem, phi: f64, budget: u64) -> Result<OfflinePass> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!("phi must lie in [0, 1], got {phi}")));
    }
    let tau = dp.horizon();
    if tau == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut stages: Vec<HdmrModel> = vec![HdmrModel::zero(GridDomain::new(vec![1]).unwrap()); tau];
    let mut decompositions = 0usize;
    let mut inner_evaluations = 0usize;

    for t in (1..=tau).rev() {
        let domain = stage_domain(dp, t)?;
        let mut acc = MarginalAccumulator::new(domain);
        let states = dp.reachable_states(t - 1);

        if t == tau {
            // Terminal stage: E_tau is the expected immediate loss.
            for y_prev in &states {
                for_each_action(dp.action_domain(t), |a| {
                    let successors = dp.successors(t, a, y_prev);
                    check_probabilities(&successors)?;
                    let e: f64 =
                        successors.iter().map(|(y, p)| p * dp.loss(t, y_prev, a, y)).sum();
                    if !e.is_finite() {
                        return Err(Error::NonFinite(format!("stage {t} value at ({a:?}, {y_prev:?})")));
                    }
                    acc.accumulate(&stage_point(a, y_prev), e)
                })?;
            }
        } else {
            let next_model = &stages[t]; // E~_{t+1}
            let n_action_axes = dp.action_domain(t + 1).dim();
            let d = next_model.domain().dim();
            let split = AxisSplit::new((n_action_axes..d).collect(), (0..n_action_axes).collect())?;
            let problem = assemble(next_model, &split)?;
            let cache = decompose(&problem)?;
            decompositions += 1;

            // Upper bound on min_a' E~_{t+1}(a', y) per successor state.
            let mut pi_bar: HashMap<Vec<usize>, f64> = HashMap::new();
            for y_prev in &states {
                for_each_action(dp.action_domain(t), |a| {
                    let successors = dp.successors(t, a, y_prev);
                    check_probabilities(&successors)?;
                    let mut e = 0.0;
                    for (y, p) in &successors {
                        let bound = match pi_bar.get(y) {
                            Some(&v) => v,
                            None => {
                                let rm = relaxed_minimizer(&cache, &problem, y)?;
                                let cs = candidate_set(&rm.v_hat, &problem, phi, budget)?;
                                let min =
                                    minimize_over_candidates(next_model, &split, y, &cs)?;
                                inner_evaluations += min.evaluated;
                                pi_bar.insert(y.clone(), min.value);
                                min.value
                            }
                        };
                        e += p * (dp.loss(t, y_prev, a, y) + bound);
                    }
                    if !e.is_finite() {
                        return Err(Error::NonFinite(format!("stage {t} value at ({a:?}, {y_prev:?})")));
                    }
                    acc.accumulate(&stage_point(a, y_prev), e)
                })?;
            }
        }
        stages[t - 1] = acc.finalize()?;
    }
    Ok(OfflinePass {
        stages,
        decompositions,
        inner_evaluations,
    })
}

/// Drops every component that does not involve an action axis. The remaining
/// tables determine the greedy policy unchanged (the dropped parts are
/// constant in the action); this is the form persisted to disk.
pub fn strip_state_only_components(model: &HdmrModel, n_action_axes: usize) -> HdmrModel {
    let domain = model.domain().clone();
    let d = domain.dim();
    let mut out = HdmrModel::zero(domain);
    out.set_g0(model.g0());
    for m in 0..n_action_axes {
        out.first_order_mut(m).copy_from_slice(model.first_order(m));
    }
    for m in 0..d {
        for n in m + 1..d {
            if m < n_action_axes {
                let src: Vec<f64> = model.second_order_tables()
                    [crate::hdmr::pair_index(d, m, n)]
                .clone();
                *out.pair_table_mut(m, n) = src;
            }
        }
    }
    out
}

/// Serialized byte size of the action-dependent component tables under the
/// dense binary encoding, for storage comparisons against exact tables.
pub fn hdmr_stage_binary_size(model: &HdmrModel, n_action_axes: usize) -> usize {
    let d = model.domain().dim();
    let mut entries = 1usize; // g0
    for m in 0..n_action_axes {
        entries += model.first_order(m).len();
    }
    for m in 0..n_action_axes {
        for n in m + 1..d {
            entries += model.second_order_tables()[crate::hdmr::pair_index(d, m, n)].len();
        }
    }
    entries * std::mem::size_of::<f64>()
}

/// Greedy argmin over the stage's action domain; lexicographically smallest
/// action on ties.
pub fn greedy_action(table: &StageTable, y: &[usize]) -> Result<Vec<usize>> {
    match table {
        StageTable::Exact(t) => {
            let si = *t
                .state_index
                .get(y)
                .ok_or(Error::UnreachableState { stage: t.stage })?;
            let na = t.action_domain.cardinality()? as usize;
            let row = &t.values[si * na..(si + 1) * na];
            let mut best = f64::INFINITY;
            let mut best_rank = 0usize;
            for (rank, &v) in row.iter().enumerate() {
                if v < best {
                    best = v;
                    best_rank = rank;
                }
            }
            // Unrank into per-axis coordinates.
            let d = t.action_domain.dim();
            let mut a = vec![0usize; d];
            let mut rank = best_rank;
            for k in (0..d).rev() {
                let s = t.action_domain.axis_size(k);
                a[k] = rank % s;
                rank /= s;
            }
            Ok(a)
        }
        StageTable::Hdmr {
            action_domain,
            model,
            ..
        } => {
            model.domain().check_point(&stage_point(
                &vec![0usize; action_domain.dim()],
                y,
            ))?;
            let mut best = f64::INFINITY;
            let mut best_a = vec![0usize; action_domain.dim()];
            action_domain.for_each_point(|a| {
                let v = model.evaluate_unchecked(&stage_point(a, y));
                if v < best {
                    best = v;
                    best_a.copy_from_slice(a);
                }
                true
            });
            Ok(best_a)
        }
    }
}
