//! Bayesian Bernoulli multi-armed bandit with a finite decision horizon.
//!
//! Arms live on a two-dimensional grid, rewards are 0/1, and the player's
//! belief is summarized by the per-(outcome, arm) count statistic. The
//! predictive model is the Laplace rule over those counts, so the induced
//! dynamic program is finite and can be solved exactly for short horizons;
//! the statistic is exposed to the HDMR machinery with one grid axis per
//! count cell.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::adp::DecisionProblem;
use crate::hdmr::GridDomain;
use crate::{Error, Result};

/// Per-(outcome, arm) observation counts. Cells are laid out as
/// `counts[y * num_arms + arm_rank]` with arms ranked lexicographically by
/// their two coordinates; the same order defines the HDMR state axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficientStatistic {
    arms: (usize, usize),
    counts: Vec<usize>,
}

impl SufficientStatistic {
    pub fn zero(arms: (usize, usize)) -> Self {
        Self {
            arms,
            counts: vec![0; 2 * arms.0 * arms.1],
        }
    }

    pub fn num_arms(&self) -> usize {
        self.arms.0 * self.arms.1
    }

    pub fn arm_rank(&self, a: &[usize]) -> usize {
        a[0] * self.arms.1 + a[1]
    }

    pub fn count(&self, y: usize, a: &[usize]) -> usize {
        self.counts[y * self.num_arms() + self.arm_rank(a)]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn cells(&self) -> &[usize] {
        &self.counts
    }

    /// Increments the cell `(y, a)` by one.
    pub fn update(&self, a: &[usize], y: usize) -> Self {
        debug_assert!(y < 2);
        let mut next = self.clone();
        next.counts[y * self.num_arms() + self.arm_rank(a)] += 1;
        next
    }

    /// Predictive probability of outcome 1 at arm `a`: the Laplace rule
    /// `(s(1,a) + 1) / (s(0,a) + s(1,a) + 2)`.
    pub fn predict(&self, a: &[usize]) -> f64 {
        let s1 = self.count(1, a) as f64;
        let s0 = self.count(0, a) as f64;
        (s1 + 1.0) / (s0 + s1 + 2.0)
    }
}

/// Per-arm success probabilities, ranked like the statistic's cells.
#[derive(Debug, Clone)]
pub struct PayoffMatrix {
    arms: (usize, usize),
    p: Vec<f64>,
}

impl PayoffMatrix {
    pub fn new(arms: (usize, usize), p: Vec<f64>) -> Result<Self> {
        if p.len() != arms.0 * arms.1 {
            return Err(Error::DimensionMismatch {
                expected: arms.0 * arms.1,
                got: p.len(),
            });
        }
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "payoff probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self { arms, p })
    }

    pub fn prob(&self, a: &[usize]) -> f64 {
        self.p[a[0] * self.arms.1 + a[1]]
    }
}

/// Game parameters. Defaults reproduce the reference experiment: a 3x3 arm
/// grid, horizon 8, one prior failure observed at the first arm, and that
/// arm's true success probability pinned to 0.1 while the rest are drawn
/// uniformly per play.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub arms: (usize, usize),
    pub horizon: usize,
    pub prior: SufficientStatistic,
    pub plays: usize,
    /// True success probability of arm `(0, 0)`, kept fixed across plays.
    pub pinned_first_arm: Option<f64>,
}

impl Default for GameConfig {
    fn default() -> Self {
        let arms = (3, 3);
        let mut prior = SufficientStatistic::zero(arms);
        prior = prior.update(&[0, 0], 0);
        Self {
            arms,
            horizon: 8,
            prior,
            plays: 20_000,
            pinned_first_arm: Some(0.1),
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if self.plays == 0 {
            return Err(Error::InvalidArgument("plays must be at least 1".into()));
        }
        if self.arms.0 == 0 || self.arms.1 == 0 {
            return Err(Error::InvalidArgument("arm grid must be nonempty".into()));
        }
        if self.prior.arms != self.arms {
            return Err(Error::InvalidArgument("prior statistic arm grid mismatch".into()));
        }
        if let Some(p) = self.pinned_first_arm {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("pinned probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The bandit as a finite-horizon decision problem. The state is the count
/// statistic with one grid axis per cell; each axis has size
/// `horizon + prior total` so any count observable before the final decision
/// fits.
#[derive(Debug, Clone)]
pub struct BanditProblem {
    config: GameConfig,
    action_domain: GridDomain,
    state_domain: GridDomain,
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

impl BanditProblem {
    pub fn cells(&self) -> usize {
        2 * self.config.arms.0 * self.config.arms.1
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    /// Number of statistics reachable after `t` transitions (stars and bars
    /// over the increment vector).
    pub fn reachable_size(&self, t: usize) -> u128 {
        let cells = self.cells();
        binomial(t + cells - 1, cells - 1)
    }

    fn statistic_from_state(&self, y: &[usize]) -> SufficientStatistic {
        SufficientStatistic {
            arms: self.config.arms,
            counts: y.to_vec(),
        }
    }
}

/// Builds the decision problem for `cfg`, refusing when the exact tables
/// would exceed `budget` stored values.
pub fn make_problem(cfg: &GameConfig, budget: u64) -> Result<BanditProblem> {
    cfg.validate()?;
    let cells = 2 * cfg.arms.0 * cfg.arms.1;
    let axis = cfg.horizon + cfg.prior.total();
    let problem = BanditProblem {
        action_domain: GridDomain::new(vec![cfg.arms.0, cfg.arms.1])?,
        state_domain: GridDomain::new(vec![axis; cells])?,
        config: cfg.clone(),
    };
    let na = (cfg.arms.0 * cfg.arms.1) as u128;
    let mut needed: u128 = 0;
    for t in 0..cfg.horizon {
        needed += problem.reachable_size(t) * na;
    }
    if needed > budget as u128 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    Ok(problem)
}

impl DecisionProblem for BanditProblem {
    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn action_domain(&self, _t: usize) -> &GridDomain {
        &self.action_domain
    }

    fn state_domain(&self) -> &GridDomain {
        &self.state_domain
    }

    fn reachable_states(&self, t: usize) -> Vec<Vec<usize>> {
        // Prior plus every composition of t over the cells, lexicographically.
        let cells = self.cells();
        let mut out = Vec::with_capacity(self.reachable_size(t) as usize);
        let mut delta = vec![0usize; cells];
        fn rec(delta: &mut Vec<usize>, cell: usize, left: usize, prior: &[usize], out: &mut Vec<Vec<usize>>) {
            if cell == delta.len() - 1 {
                delta[cell] = left;
                out.push(delta.iter().zip(prior).map(|(d, p)| d + p).collect());
                return;
            }
            for v in 0..=left {
                delta[cell] = v;
                rec(delta, cell + 1, left - v, prior, out);
            }
        }
        rec(&mut delta, 0, t, self.config.prior.cells(), &mut out);
        out
    }

    fn loss(&self, _t: usize, y_prev: &[usize], a: &[usize], y: &[usize]) -> f64 {
        // The outcome is the cell that was incremented.
        let s = self.statistic_from_state(y_prev);
        let idx1 = self.config.arms.0 * self.config.arms.1 + s.arm_rank(a);
        if y[idx1] > y_prev[idx1] {
            -1.0
        } else {
            0.0
        }
    }

    fn successors(&self, _t: usize, a: &[usize], y_prev: &[usize]) -> Vec<(Vec<usize>, f64)> {
        let s = self.statistic_from_state(y_prev);
        let p1 = s.predict(a);
        let win = s.update(a, 1);
        let lose = s.update(a, 0);
        vec![(win.counts, p1), (lose.counts, 1.0 - p1)]
    }
}

/// A per-stage action source queried with the current statistic (encoded as
/// a state point). Stages run `1..=horizon`.
pub trait Strategy: Sync {
    fn choose(&self, t: usize, state: &[usize]) -> Result<Vec<usize>>;
}

impl<F> Strategy for F
where
    F: Fn(usize, &[usize]) -> Result<Vec<usize>> + Sync,
{
    fn choose(&self, t: usize, state: &[usize]) -> Result<Vec<usize>> {
        self(t, state)
    }
}

/// Simulation output: per-round payoffs averaged per play and over plays.
#[derive(Debug, Clone)]
pub struct PlayStats {
    pub mean_payoff: f64,
    pub std_error: f64,
    /// Mean per-round payoff of each play.
    pub payoffs: Vec<f64>,
}

/// Runs `cfg.plays` independent plays of the game under `strategy`.
///
/// Each play owns an RNG stream derived from `(seed, play index)`: the arm
/// probabilities are drawn first (uniform, then the pinned entry is
/// overwritten), followed by one uniform variate per round. Two strategies
/// simulated with the same seed therefore face identical bandits and
/// identical round-level noise. The reported payoff is the per-round average
/// reward, i.e. minus the accumulated loss over the horizon.
pub fn simulate(cfg: &GameConfig, strategy: &dyn Strategy, seed: u64) -> Result<PlayStats> {
    cfg.validate()?;
    let num_arms = cfg.arms.0 * cfg.arms.1;
    let payoffs: Vec<Result<f64>> = (0..cfg.plays)
        .into_par_iter()
        .map(|play| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(play as u64);
            let mut p: Vec<f64> = (0..num_arms).map(|_| rng.gen_range(0.0..1.0)).collect();
            if let Some(pinned) = cfg.pinned_first_arm {
                p[0] = pinned;
            }
            let payoff_matrix = PayoffMatrix::new(cfg.arms, p).unwrap();
            let mut s = cfg.prior.clone();
            let mut total = 0.0;
            for t in 1..=cfg.horizon {
                let a = strategy.choose(t, s.cells()).map_err(|e| {
                    Error::InvalidArgument(format!(
                        "strategy failed at play {play}, stage {t}, state {:?}: {e}",
                        s.cells()
                    ))
                })?;
                let u: f64 = rng.gen_range(0.0..1.0);
                let y = usize::from(u < payoff_matrix.prob(&a));
                total += y as f64;
                s = s.update(&a, y);
            }
            Ok(total / cfg.horizon as f64)
        })
        .collect();
    let payoffs = payoffs.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = payoffs.len() as f64;
    let mean = payoffs.iter().sum::<f64>() / n;
    let var = payoffs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(PlayStats {
        mean_payoff: mean,
        std_error: (var / n).sqrt(),
        payoffs,
    })
}
