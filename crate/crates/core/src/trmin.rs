//! Approximate parametrized minimization of HDMR-form objectives.
//!
//! The decision axes of a rebalanced model are encoded as one-hot subvectors;
//! the decision-dependent part of the model becomes the quadratic form
//!
//! ```text
//!   gamma(u, v) = 1/2 v' F v + h' v + v' G u
//! ```
//!
//! with `F` built from decision-decision pair tables (zero diagonal blocks),
//! `G` from decision-parameter pair tables and `h` from the decision
//! first-order tables. Relaxing the one-hot constraint to the sphere
//! `|v| = r` with `r^2 = mu - sum_m 1/|Z_m|` gives a trust region problem
//! solved exactly through one eigendecomposition of `F` plus a per-query
//! one-dimensional secular equation. The relaxed minimizer yields a lower
//! bound on the true minimum and, after shift/rescale normalization, a
//! plausibility score `q(z)` whose level set `Z^phi` is enumerated
//! component-wise to produce an upper bound.

use nalgebra::{DMatrix, DVector};

use crate::hdmr::{GridDomain, HdmrModel};
use crate::{Error, Result};

/// Default cap on brute-force/candidate enumeration sizes.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 10_000_000;

/// Threshold below which `F` is treated as zero and the linear closed form
/// is used instead of the spectral path.
const EPS_F_RELATIVE: f64 = 1e-12;

/// Relative secular-equation residual target.
const SECULAR_TOL: f64 = 1e-10;

/// Partition of a model's axes into parameter axes (the `x` part) and
/// decision axes (the `z` part to be minimized over).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisSplit {
    parameter_axes: Vec<usize>,
    decision_axes: Vec<usize>,
}

impl AxisSplit {
    pub fn new(parameter_axes: Vec<usize>, decision_axes: Vec<usize>) -> Result<Self> {
        if decision_axes.is_empty() {
            return Err(Error::InvalidArgument("at least one decision axis is required".into()));
        }
        let mut seen = parameter_axes.clone();
        seen.extend_from_slice(&decision_axes);
        seen.sort_unstable();
        let expected: Vec<usize> = (0..seen.len()).collect();
        if seen != expected {
            return Err(Error::InvalidArgument(
                "parameter and decision axes must disjointly cover 0..d".into(),
            ));
        }
        Ok(Self {
            parameter_axes,
            decision_axes,
        })
    }

    /// All axes are decision axes (unparametrized minimization).
    pub fn all_decisions(d: usize) -> Self {
        Self {
            parameter_axes: Vec::new(),
            decision_axes: (0..d).collect(),
        }
    }

    pub fn parameter_axes(&self) -> &[usize] {
        &self.parameter_axes
    }

    pub fn decision_axes(&self) -> &[usize] {
        &self.decision_axes
    }

    pub fn check_against(&self, domain: &GridDomain) -> Result<()> {
        if self.parameter_axes.len() + self.decision_axes.len() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: self.parameter_axes.len() + self.decision_axes.len(),
            });
        }
        Ok(())
    }

    /// Decision-space cardinality `|Z|`.
    pub fn decision_cardinality(&self, domain: &GridDomain) -> u128 {
        self.decision_axes
            .iter()
            .fold(1u128, |acc, &m| acc.saturating_mul(domain.axis_size(m) as u128))
    }

    /// Assembles a full-domain point from parameter and decision coordinates.
    pub fn full_point(&self, x: &[usize], z: &[usize]) -> Vec<usize> {
        let d = self.parameter_axes.len() + self.decision_axes.len();
        let mut point = vec![0usize; d];
        for (k, &axis) in self.parameter_axes.iter().enumerate() {
            point[axis] = x[k];
        }
        for (k, &axis) in self.decision_axes.iter().enumerate() {
            point[axis] = z[k];
        }
        point
    }
}

/// The relaxed quadratic problem: block matrix `F`, coupling `G`, linear term
/// `h` and trust-region radius `r`, together with block offsets.
#[derive(Debug, Clone)]
pub struct RelaxedProblem {
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    radius: f64,
    theta: usize,
    decision_sizes: Vec<usize>,
    decision_offsets: Vec<usize>,
    parameter_sizes: Vec<usize>,
    parameter_offsets: Vec<usize>,
}

impl RelaxedProblem {
    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn theta(&self) -> usize {
        self.theta
    }

    pub fn decision_sizes(&self) -> &[usize] {
        &self.decision_sizes
    }

    pub fn decision_offsets(&self) -> &[usize] {
        &self.decision_offsets
    }

    /// One-hot encoding of a decision point.
    pub fn encode_decision(&self, z: &[usize]) -> DVector<f64> {
        let mut v = DVector::zeros(self.theta);
        for (m, (&off, &zi)) in self.decision_offsets.iter().zip(z).enumerate() {
            debug_assert!(zi < self.decision_sizes[m]);
            v[off + zi] = 1.0;
        }
        v
    }

    /// Mean-shifted encoding: one-hot minus `1/|Z_m|` on every block. Every
    /// feasible point encoded this way has squared norm exactly `r^2`.
    pub fn encode_decision_shifted(&self, z: &[usize]) -> DVector<f64> {
        let mut v = self.encode_decision(z);
        for (m, &off) in self.decision_offsets.iter().enumerate() {
            let shift = 1.0 / self.decision_sizes[m] as f64;
            for i in 0..self.decision_sizes[m] {
                v[off + i] -= shift;
            }
        }
        v
    }

    /// The linear term `h + G u(x)` for a parameter point.
    pub fn linear_term(&self, x: &[usize]) -> DVector<f64> {
        let mut c = self.h.clone();
        for (n, (&off, &xn)) in self.parameter_offsets.iter().zip(x).enumerate() {
            debug_assert!(xn < self.parameter_sizes[n]);
            c += self.g.column(off + xn);
        }
        c
    }

    /// `gamma(u(x), v)`.
    pub fn gamma(&self, x: &[usize], v: &DVector<f64>) -> f64 {
        0.5 * (v.transpose() * &self.f * v)[(0, 0)] + self.linear_term(x).dot(v)
    }

    pub fn f_max_abs(&self) -> f64 {
        self.f.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Builds the relaxed problem from the decision-dependent components of a
/// rebalanced model. Components that depend only on parameter axes are left
/// out here; [`approx_min`] restores them.
pub fn assemble(model: &HdmrModel, split: &AxisSplit) -> Result<RelaxedProblem> {
    split.check_against(model.domain())?;
    if !model.is_rebalanced(1e-10) {
        return Err(Error::NotRebalanced(
            "zero-sum identities do not hold; call rebalance first".into(),
        ));
    }
    let domain = model.domain();
    let decision_sizes: Vec<usize> = split.decision_axes().iter().map(|&m| domain.axis_size(m)).collect();
    let parameter_sizes: Vec<usize> =
        split.parameter_axes().iter().map(|&m| domain.axis_size(m)).collect();
    let mut decision_offsets = Vec::with_capacity(decision_sizes.len());
    let mut theta = 0usize;
    for &s in &decision_sizes {
        decision_offsets.push(theta);
        theta += s;
    }
    let mut parameter_offsets = Vec::with_capacity(parameter_sizes.len());
    let mut pdim = 0usize;
    for &s in &parameter_sizes {
        parameter_offsets.push(pdim);
        pdim += s;
    }

    let mut f = DMatrix::zeros(theta, theta);
    for (m, &am) in split.decision_axes().iter().enumerate() {
        for (n, &an) in split.decision_axes().iter().enumerate() {
            if m == n {
                continue;
            }
            for i in 0..decision_sizes[m] {
                for j in 0..decision_sizes[n] {
                    f[(decision_offsets[m] + i, decision_offsets[n] + j)] = model.pair(am, an, i, j);
                }
            }
        }
    }
    let mut g = DMatrix::zeros(theta, pdim);
    for (m, &am) in split.decision_axes().iter().enumerate() {
        for (n, &an) in split.parameter_axes().iter().enumerate() {
            for i in 0..decision_sizes[m] {
                for j in 0..parameter_sizes[n] {
                    g[(decision_offsets[m] + i, parameter_offsets[n] + j)] = model.pair(am, an, i, j);
                }
            }
        }
    }
    let mut h = DVector::zeros(theta);
    for (m, &am) in split.decision_axes().iter().enumerate() {
        for i in 0..decision_sizes[m] {
            h[decision_offsets[m] + i] = model.first_order(am)[i];
        }
    }

    let mu = decision_sizes.len() as f64;
    let radius_sq = mu - decision_sizes.iter().map(|&s| 1.0 / s as f64).sum::<f64>();
    Ok(RelaxedProblem {
        f,
        g,
        h,
        radius: radius_sq.sqrt(),
        theta,
        decision_sizes,
        decision_offsets,
        parameter_sizes,
        parameter_offsets,
    })
}

/// Eigendecomposition of `F` with ascending eigenvalues: `F = U' D U` where
/// the rows of `U` are eigenvectors. `U h` and `U G` are cached so the
/// per-query vector `b` costs one column sum per parameter axis.
#[derive(Debug, Clone)]
pub struct SpectralCache {
    u: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    uh: DVector<f64>,
    ug: DMatrix<f64>,
}

impl SpectralCache {
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// `b(x) = U h + U G u(x)` for a parameter point.
    pub fn query_vector(&self, problem: &RelaxedProblem, x: &[usize]) -> DVector<f64> {
        let mut b = self.uh.clone();
        for (n, (&off, &xn)) in problem.parameter_offsets.iter().zip(x).enumerate() {
            debug_assert!(xn < problem.parameter_sizes[n]);
            b += self.ug.column(off + xn);
        }
        b
    }
}

/// Symmetric eigendecomposition of the problem's `F`, eigenvalues sorted
/// ascending. For `F = 0` the identity basis is kept.
pub fn decompose(problem: &RelaxedProblem) -> Result<SpectralCache> {
    if problem.f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("F contains NaN/Inf".into()));
    }
    let theta = problem.theta;
    let (u, eigenvalues) = if problem.f_max_abs() == 0.0 {
        (DMatrix::identity(theta, theta), DVector::zeros(theta))
    } else {
        let eig = problem.f.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..theta).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut u = DMatrix::zeros(theta, theta);
        let mut d = DVector::zeros(theta);
        for (row, &k) in order.iter().enumerate() {
            d[row] = eig.eigenvalues[k];
            for col in 0..theta {
                u[(row, col)] = eig.eigenvectors[(col, k)];
            }
        }
        (u, d)
    };
    let uh = &u * &problem.h;
    let ug = &u * &problem.g;
    Ok(SpectralCache {
        u,
        eigenvalues,
        uh,
        ug,
    })
}

/// Root of the secular equation `sum_{i>=k} (b_i / (D_ii - lambda))^2 = r^2`
/// on `(-inf, D_kk)`, `k` being the first index with `b_k != 0`.
///
/// Newton iteration on the reciprocal-norm reformulation
/// `1/r - 1/|(D - lambda I)^-1 b|`, safeguarded by bisection inside the
/// bracket. Returns an error when `b` vanishes entirely (the hard case is
/// resolved by the caller).
pub fn solve_secular(cache: &SpectralCache, b: &DVector<f64>, r: f64) -> Result<f64> {
    if r <= 0.0 {
        return Err(Error::InvalidArgument("trust region radius must be positive".into()));
    }
    let d = &cache.eigenvalues;
    let binf = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if binf == 0.0 {
        return Err(Error::DegenerateObjective);
    }
    let tol_b = effective_zero_tol(d.as_slice(), binf, r);
    let k = b
        .iter()
        .position(|v| v.abs() > tol_b)
        .ok_or(Error::DegenerateObjective)?;
    secular_root(d.as_slice(), b.as_slice(), k, r, f64::NEG_INFINITY)
}

/// Threshold below which a component of `b` is indistinguishable from
/// rounding noise. Besides the usual relative cutoff, a component whose
/// implied pole offset `|b_i| / r` sits below the floating-point resolution
/// of the spectrum cannot be resolved by the secular iteration and must be
/// routed to the hard case instead.
fn effective_zero_tol(d: &[f64], binf: f64, r: f64) -> f64 {
    let dscale = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (1e-13 * binf).max(1024.0 * f64::EPSILON * dscale * r)
}

/// Shared root finder; `upper_cap` additionally clamps the admissible
/// interval from above (used by the hard-case check).
fn secular_root(d: &[f64], b: &[f64], k: usize, r: f64, upper_cap: f64) -> Result<f64> {
    let dk = d[k];
    // norm_sq(lambda) = sum_{i>=k} (b_i/(d_i - lambda))^2 and its
    // lambda-derivative weight.
    let norm_sq = |lambda: f64| -> f64 {
        (k..d.len())
            .map(|i| {
                let t = b[i] / (d[i] - lambda);
                t * t
            })
            .sum()
    };
    let norm_sq_deriv = |lambda: f64| -> f64 {
        (k..d.len())
            .map(|i| {
                let den = d[i] - lambda;
                2.0 * b[i] * b[i] / (den * den * den)
            })
            .sum()
    };
    let bnorm = (k..d.len()).map(|i| b[i] * b[i]).sum::<f64>().sqrt();
    let scale = (dk.abs()).max(bnorm / r).max(1.0);
    let mut lo = dk - bnorm / r - 1e-12 * scale;
    let mut hi = dk - f64::EPSILON * scale;
    if upper_cap.is_finite() && upper_cap < hi {
        hi = upper_cap;
    }
    // f(lambda) = 1/r - 1/norm(lambda) is increasing; bracket has f(lo) <= 0.
    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..200 {
        // The bracket shrinks monotonically; once it collapses to the
        // floating-point resolution of the spectrum the midpoint is the best
        // attainable root even if the residual tolerance is out of reach
        // (roots close to a pole make norm_sq jump by more than the
        // tolerance per ulp of lambda).
        if hi - lo <= f64::EPSILON * scale {
            return Ok(0.5 * (lo + hi));
        }
        let nsq = norm_sq(lambda);
        let n = nsq.sqrt();
        let resid = nsq - r * r;
        if resid.abs() <= SECULAR_TOL * r * r {
            return Ok(lambda);
        }
        if n < r {
            lo = lambda;
        } else {
            hi = lambda;
        }
        // Newton step on 1/r - 1/n; fall back to bisection outside the
        // bracket.
        let fprime = 0.5 * norm_sq_deriv(lambda) / (n * nsq);
        let fval = 1.0 / r - 1.0 / n;
        let mut next = lambda - fval / fprime;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - lambda).abs() <= f64::EPSILON * lambda.abs().max(1.0) {
            lambda = 0.5 * (lo + hi);
        } else {
            lambda = next;
        }
    }
    let resid = (norm_sq(lambda) - r * r).abs();
    if resid <= 1e-8 * r * r {
        Ok(lambda)
    } else {
        Err(Error::NonFinite(format!(
            "secular iteration did not converge (residual {resid:.3e}, lambda {lambda:.6e}, k {k}, r {r:.6e})"
        )))
    }
}

/// Result of the per-query trust region solve.
#[derive(Debug, Clone)]
pub struct RelaxedMinimizer {
    /// Minimizer of the relaxed problem, `|v_hat| = r`.
    pub v_hat: DVector<f64>,
    /// `gamma(u, v_hat)`: a lower bound on the decision-dependent part of the
    /// true minimum.
    pub lower_value: f64,
    /// Secular multiplier when the spectral path was taken.
    pub lambda: Option<f64>,
    /// Set when both `F` and the linear term were negligible and an
    /// eigenvector direction was returned.
    pub degenerate: bool,
    /// Set when the hard case (leading `b` components zero) was resolved by
    /// adding smallest-eigenvector mass.
    pub hard_case: bool,
}

/// Solves the relaxed problem for the parameter point `x`.
/// Rescales `y` so its Euclidean norm is exactly `r`. On the sphere the
/// constrained minimizer's gradient is normal to the surface, so this
/// ulp-scale correction perturbs the objective only at second order while
/// restoring feasibility lost to the secular root's finite precision.
fn project_to_sphere(y: &mut DVector<f64>, r: f64) {
    let n = y.norm();
    if n > 0.0 {
        *y *= r / n;
    }
}

pub fn relaxed_minimizer(
    cache: &SpectralCache,
    problem: &RelaxedProblem,
    x: &[usize],
) -> Result<RelaxedMinimizer> {
    let r = problem.radius;
    let h_inf = problem.h.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let eps_f = EPS_F_RELATIVE * h_inf.max(1.0);
    if problem.f_max_abs() <= eps_f {
        // Linear objective over the sphere.
        let c = problem.linear_term(x);
        let cnorm = c.norm();
        if cnorm <= eps_f {
            let v_hat = cache.u.row(0).transpose() * r;
            let lower_value = problem.gamma(x, &v_hat);
            return Ok(RelaxedMinimizer {
                v_hat,
                lower_value,
                lambda: None,
                degenerate: true,
                hard_case: false,
            });
        }
        let v_hat = -&c * (r / cnorm);
        let lower_value = -r * cnorm;
        return Ok(RelaxedMinimizer {
            v_hat,
            lower_value,
            lambda: None,
            degenerate: false,
            hard_case: false,
        });
    }

    let b = cache.query_vector(problem, x);
    let d = &cache.eigenvalues;
    let theta = problem.theta;
    let binf = b.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let build = |y: &DVector<f64>| -> (DVector<f64>, f64) {
        let v_hat = cache.u.transpose() * y;
        let value = (0..theta).map(|i| 0.5 * d[i] * y[i] * y[i] + b[i] * y[i]).sum();
        (v_hat, value)
    };

    let tol_b = effective_zero_tol(d.as_slice(), binf, r);
    let k = b.iter().position(|v| v.abs() > tol_b);
    let k = match k {
        Some(k) => k,
        None => {
            // Pure hard case: every eigencoordinate is free; take the
            // smallest-eigenvalue direction at the radius, oriented against
            // whatever noise remains in b.
            let mut y = DVector::zeros(theta);
            y[0] = if b[0] > 0.0 { -r } else { r };
            let (v_hat, lower_value) = build(&y);
            return Ok(RelaxedMinimizer {
                v_hat,
                lower_value,
                lambda: Some(d[0]),
                degenerate: false,
                hard_case: true,
            });
        }
    };
    if k > 0 && d[k] > d[0] {
        // Leading b components vanish: the global minimizer needs
        // lambda <= D_00. Check whether the secular root lies there.
        let norm_at_d0: f64 = (k..theta)
            .map(|i| {
                let t = b[i] / (d[i] - d[0]);
                t * t
            })
            .sum::<f64>()
            .sqrt();
        if norm_at_d0 < r {
            // Hard case: lambda = D_00, fill the remaining radius with the
            // smallest-eigenvalue direction.
            let mut y = DVector::zeros(theta);
            for i in k..theta {
                y[i] = -b[i] / (d[i] - d[0]);
            }
            let alpha = (r * r - norm_at_d0 * norm_at_d0).max(0.0).sqrt();
            y[0] = if b[0] > 0.0 { -alpha } else { alpha };
            let (v_hat, lower_value) = build(&y);
            return Ok(RelaxedMinimizer {
                v_hat,
                lower_value,
                lambda: Some(d[0]),
                degenerate: false,
                hard_case: true,
            });
        }
        // Root is at or below D_00; clamp the search interval accordingly.
        let lambda = secular_root(d.as_slice(), b.as_slice(), k, r, d[0])?;
        let mut y = DVector::zeros(theta);
        for i in k..theta {
            y[i] = -b[i] / (d[i] - lambda);
        }
        project_to_sphere(&mut y, r);
        let (v_hat, lower_value) = build(&y);
        return Ok(RelaxedMinimizer {
            v_hat,
            lower_value,
            lambda: Some(lambda),
            degenerate: false,
            hard_case: false,
        });
    }

    let lambda = secular_root(d.as_slice(), b.as_slice(), k, r, f64::NEG_INFINITY)?;
    let mut y = DVector::zeros(theta);
    for i in k..theta {
        y[i] = -b[i] / (d[i] - lambda);
    }
    project_to_sphere(&mut y, r);
    let (v_hat, lower_value) = build(&y);
    Ok(RelaxedMinimizer {
        v_hat,
        lower_value,
        lambda: Some(lambda),
        degenerate: false,
        hard_case: false,
    })
}

/// Thresholded decision candidates with their plausibility scores.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    decision_sizes: Vec<usize>,
    /// Per-axis normalized plausibility in `[0, 1]`, max 1 per axis.
    normalized: Vec<Vec<f64>>,
    /// Flattened candidate index vectors, lexicographically ordered.
    indices: Vec<u32>,
    scores: Vec<f64>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn normalized(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn candidate(&self, k: usize) -> (&[u32], f64) {
        let mu = self.decision_sizes.len();
        (&self.indices[k * mu..(k + 1) * mu], self.scores[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u32], f64)> {
        let mu = self.decision_sizes.len();
        self.indices.chunks_exact(mu).zip(self.scores.iter().copied())
    }
}

/// Normalizes the relaxed minimizer and enumerates `Z^phi = {z : q(z) >= phi}`
/// depth-first with prefix-product pruning, never materializing `Z`.
pub fn candidate_set(
    v_hat: &DVector<f64>,
    problem: &RelaxedProblem,
    phi: f64,
    budget: u64,
) -> Result<CandidateSet> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!("phi must lie in [0, 1], got {phi}")));
    }
    if v_hat.len() != problem.theta {
        return Err(Error::DimensionMismatch {
            expected: problem.theta,
            got: v_hat.len(),
        });
    }
    let global_min = v_hat.iter().copied().fold(f64::INFINITY, f64::min);
    let mut normalized: Vec<Vec<f64>> = Vec::with_capacity(problem.decision_sizes.len());
    for (m, &off) in problem.decision_offsets.iter().enumerate() {
        let size = problem.decision_sizes[m];
        let mut block: Vec<f64> = (0..size).map(|i| v_hat[off + i] - global_min).collect();
        let max = block.iter().fold(0.0f64, |a, &v| a.max(v));
        if max == 0.0 {
            // Constant subvector: every index equally plausible.
            block.iter_mut().for_each(|v| *v = 1.0);
        } else {
            block.iter_mut().for_each(|v| *v /= max);
        }
        normalized.push(block);
    }

    let mu = normalized.len();
    let mut indices: Vec<u32> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    let mut stack: Vec<u32> = Vec::with_capacity(mu);
    let mut count: u64 = 0;
    dfs_enumerate(
        &normalized,
        phi,
        budget,
        1.0,
        &mut stack,
        &mut indices,
        &mut scores,
        &mut count,
    )?;
    Ok(CandidateSet {
        decision_sizes: problem.decision_sizes.clone(),
        normalized,
        indices,
        scores,
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs_enumerate(
    normalized: &[Vec<f64>],
    phi: f64,
    budget: u64,
    prefix: f64,
    stack: &mut Vec<u32>,
    indices: &mut Vec<u32>,
    scores: &mut Vec<f64>,
    count: &mut u64,
) -> Result<()> {
    let depth = stack.len();
    if depth == normalized.len() {
        *count += 1;
        if *count > budget {
            return Err(Error::BudgetExceeded {
                needed: *count as u128,
                budget,
            });
        }
        indices.extend_from_slice(stack);
        scores.push(prefix);
        return Ok(());
    }
    for (i, &w) in normalized[depth].iter().enumerate() {
        let product = prefix * w;
        // All factors are <= 1, so a prefix already below phi prunes the
        // whole subtree.
        if product >= phi {
            stack.push(i as u32);
            dfs_enumerate(normalized, phi, budget, product, stack, indices, scores, count)?;
            stack.pop();
        }
    }
    Ok(())
}

/// Outcome of a decision-space minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimization {
    pub value: f64,
    pub argmin: Vec<usize>,
    /// Number of objective evaluations spent.
    pub evaluated: usize,
}

/// Full objective `g~(x, z)` shared by the exact and approximate paths so
/// that `phi = 0` reproduces the exact scan bitwise.
fn objective(model: &HdmrModel, split: &AxisSplit, x: &[usize], z: &[usize]) -> f64 {
    let point = split.full_point(x, z);
    model.evaluate_unchecked(&point)
}

/// Exhaustive minimum of `g~(x, .)` with lexicographic tie-breaking; the
/// brute-force oracle for the approximate path.
pub fn exact_min(
    model: &HdmrModel,
    split: &AxisSplit,
    x: &[usize],
    budget: u64,
) -> Result<Minimization> {
    split.check_against(model.domain())?;
    check_parameter_point(model, split, x)?;
    let total = split.decision_cardinality(model.domain());
    if total > budget as u128 {
        return Err(Error::BudgetExceeded {
            needed: total,
            budget,
        });
    }
    let sizes: Vec<usize> = split
        .decision_axes()
        .iter()
        .map(|&m| model.domain().axis_size(m))
        .collect();
    let mu = sizes.len();
    let mut z = vec![0usize; mu];
    let mut best = f64::INFINITY;
    let mut best_z = z.clone();
    let mut evaluated = 0usize;
    loop {
        let value = objective(model, split, x, &z);
        evaluated += 1;
        if value < best {
            best = value;
            best_z.copy_from_slice(&z);
        }
        let mut axis = mu;
        let mut done = true;
        while axis > 0 {
            axis -= 1;
            z[axis] += 1;
            if z[axis] < sizes[axis] {
                done = false;
                break;
            }
            z[axis] = 0;
        }
        if done {
            break;
        }
    }
    Ok(Minimization {
        value: best,
        argmin: best_z,
        evaluated,
    })
}

fn check_parameter_point(model: &HdmrModel, split: &AxisSplit, x: &[usize]) -> Result<()> {
    if x.len() != split.parameter_axes().len() {
        return Err(Error::DimensionMismatch {
            expected: split.parameter_axes().len(),
            got: x.len(),
        });
    }
    for (k, &axis) in split.parameter_axes().iter().enumerate() {
        let size = model.domain().axis_size(axis);
        if x[k] >= size {
            return Err(Error::OutOfRange {
                axis,
                value: x[k],
                size,
            });
        }
    }
    Ok(())
}

/// Upper bound `p_bar^phi(x)`: the minimum of the full objective over the
/// candidate set `Z^phi` derived from the relaxed minimizer. `phi = 0` makes
/// this the exact minimum.
pub fn approx_min(
    model: &HdmrModel,
    split: &AxisSplit,
    problem: &RelaxedProblem,
    cache: &SpectralCache,
    x: &[usize],
    phi: f64,
    budget: u64,
) -> Result<Minimization> {
    check_parameter_point(model, split, x)?;
    let rm = relaxed_minimizer(cache, problem, x)?;
    let candidates = candidate_set(&rm.v_hat, problem, phi, budget)?;
    minimize_over_candidates(model, split, x, &candidates)
}

/// Scans an already-enumerated candidate set; exposed so the offline pass can
/// reuse one candidate set across expectation terms.
pub fn minimize_over_candidates(
    model: &HdmrModel,
    split: &AxisSplit,
    x: &[usize],
    candidates: &CandidateSet,
) -> Result<Minimization> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    let mu = split.decision_axes().len();
    let mut best = f64::INFINITY;
    let mut best_z = vec![0usize; mu];
    let mut z = vec![0usize; mu];
    let mut evaluated = 0usize;
    for (zi, _q) in candidates.iter() {
        for (a, &b) in z.iter_mut().zip(zi) {
            *a = b as usize;
        }
        let value = objective(model, split, x, &z);
        evaluated += 1;
        // Candidates are enumerated lexicographically, so strict improvement
        // keeps the lexicographically smallest tie.
        if value < best {
            best = value;
            best_z.copy_from_slice(&z);
        }
    }
    Ok(Minimization {
        value: best,
        argmin: best_z,
        evaluated,
    })
}
