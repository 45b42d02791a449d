//! Second-order HDMR models on finite product grids.
//!
//! A function `g` on a product grid `X = X_1 x ... x X_d` is approximated by
//!
//! ```text
//!   g~(x) = g0 + sum_m g_m(x_m) + sum_{m<n} g_mn(x_m, x_n)
//! ```
//!
//! where the component tables are obtained from marginal averages of the
//! samples of `g`. Sampling may cover the full grid or an arbitrary restricted
//! multiset `R` of grid points; in the restricted case the construction is the
//! hierarchical weighted projection (each order fitted with the lower orders
//! held fixed). After construction, every first- and second-order table is
//! shifted to zero total sum, with the constant term absorbing the shifts so
//! that evaluation is unchanged.

use crate::{Error, Result};

/// A finite product domain given by its per-axis cardinalities.
///
/// Points are 0-based index vectors of length `dim()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridDomain {
    axis_sizes: Vec<usize>,
}

impl GridDomain {
    pub fn new(axis_sizes: Vec<usize>) -> Result<Self> {
        if axis_sizes.is_empty() {
            return Err(Error::InvalidDomain("domain must have at least one axis".into()));
        }
        if let Some(m) = axis_sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidDomain(format!("axis {m} has size 0")));
        }
        Ok(Self { axis_sizes })
    }

    pub fn dim(&self) -> usize {
        self.axis_sizes.len()
    }

    pub fn axis_size(&self, m: usize) -> usize {
        self.axis_sizes[m]
    }

    pub fn axis_sizes(&self) -> &[usize] {
        &self.axis_sizes
    }

    /// Total cardinality `|X|`, or an overflow error when it does not fit u128.
    pub fn cardinality(&self) -> Result<u128> {
        let mut total: u128 = 1;
        for &s in &self.axis_sizes {
            total = total
                .checked_mul(s as u128)
                .ok_or_else(|| Error::InvalidDomain("domain cardinality overflows u128".into()))?;
        }
        Ok(total)
    }

    /// Validates a point against the axis ranges.
    pub fn check_point(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (axis, (&value, &size)) in x.iter().zip(&self.axis_sizes).enumerate() {
            if value >= size {
                return Err(Error::OutOfRange { axis, value, size });
            }
        }
        Ok(())
    }

    /// Visits every grid point in lexicographic order without allocating per
    /// point. The callback may return `false` to stop early.
    pub fn for_each_point(&self, mut f: impl FnMut(&[usize]) -> bool) {
        let d = self.dim();
        let mut coords = vec![0usize; d];
        loop {
            if !f(&coords) {
                return;
            }
            let mut axis = d;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                coords[axis] += 1;
                if coords[axis] < self.axis_sizes[axis] {
                    break;
                }
                coords[axis] = 0;
            }
        }
    }

    /// All grid points in lexicographic order (allocating; for tests and
    /// small domains).
    pub fn points(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        self.for_each_point(|x| {
            out.push(x.to_vec());
            true
        });
        out
    }
}

/// Row-major index of the unordered pair `(m, n)`, `m < n`, among all pairs
/// of `d` axes.
pub(crate) fn pair_index(d: usize, m: usize, n: usize) -> usize {
    debug_assert!(m < n && n < d);
    m * d - m * (m + 1) / 2 + (n - m - 1)
}

fn num_pairs(d: usize) -> usize {
    d * (d - 1) / 2
}

/// A second-order HDMR model: a constant, one table per axis, and one table
/// per unordered axis pair. Diagonal pairs are identically zero and are not
/// stored; pair lookups are symmetric in the axes.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmrModel {
    domain: GridDomain,
    g0: f64,
    first_order: Vec<Vec<f64>>,
    /// Indexed by `pair_index(d, m, n)`; table for `(m, n)` is row-major
    /// `|X_m| x |X_n|`.
    second_order: Vec<Vec<f64>>,
}

impl HdmrModel {
    /// Model that is identically zero on `domain`.
    pub fn zero(domain: GridDomain) -> Self {
        let d = domain.dim();
        let first_order = (0..d).map(|m| vec![0.0; domain.axis_size(m)]).collect();
        let second_order = (0..d)
            .flat_map(|m| (m + 1..d).map(move |n| (m, n)))
            .map(|(m, n)| vec![0.0; domain.axis_size(m) * domain.axis_size(n)])
            .collect();
        Self {
            domain,
            g0: 0.0,
            first_order,
            second_order,
        }
    }

    /// Builds a model from raw component tables. `second_order` must hold one
    /// row-major `|X_m| x |X_n|` table per pair `m < n` in pair-index order.
    pub fn from_tables(
        domain: GridDomain,
        g0: f64,
        first_order: Vec<Vec<f64>>,
        second_order: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = domain.dim();
        if first_order.len() != d {
            return Err(Error::Format(format!(
                "expected {d} first-order tables, got {}",
                first_order.len()
            )));
        }
        for (m, t) in first_order.iter().enumerate() {
            if t.len() != domain.axis_size(m) {
                return Err(Error::Format(format!(
                    "first-order table {m} has {} entries, axis size is {}",
                    t.len(),
                    domain.axis_size(m)
                )));
            }
        }
        if second_order.len() != num_pairs(d) {
            return Err(Error::Format(format!(
                "expected {} second-order tables, got {}",
                num_pairs(d),
                second_order.len()
            )));
        }
        for m in 0..d {
            for n in m + 1..d {
                let t = &second_order[pair_index(d, m, n)];
                let want = domain.axis_size(m) * domain.axis_size(n);
                if t.len() != want {
                    return Err(Error::Format(format!(
                        "pair table ({m},{n}) has {} entries, expected {want}",
                        t.len()
                    )));
                }
            }
        }
        let model = Self {
            domain,
            g0,
            first_order,
            second_order,
        };
        if !model.is_finite() {
            return Err(Error::NonFinite("model tables contain NaN/Inf".into()));
        }
        Ok(model)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn g0(&self) -> f64 {
        self.g0
    }

    pub fn first_order(&self, m: usize) -> &[f64] {
        &self.first_order[m]
    }

    pub fn first_order_tables(&self) -> &[Vec<f64>] {
        &self.first_order
    }

    pub fn second_order_tables(&self) -> &[Vec<f64>] {
        &self.second_order
    }

    /// Second-order component value; symmetric in the axes, zero on the
    /// diagonal pair.
    pub fn pair(&self, m: usize, n: usize, i: usize, j: usize) -> f64 {
        if m == n {
            return 0.0;
        }
        let d = self.domain.dim();
        if m < n {
            self.second_order[pair_index(d, m, n)][i * self.domain.axis_size(n) + j]
        } else {
            self.second_order[pair_index(d, n, m)][j * self.domain.axis_size(m) + i]
        }
    }

    pub(crate) fn pair_table_mut(&mut self, m: usize, n: usize) -> &mut Vec<f64> {
        let d = self.domain.dim();
        &mut self.second_order[pair_index(d, m, n)]
    }

    pub(crate) fn first_order_mut(&mut self, m: usize) -> &mut Vec<f64> {
        &mut self.first_order[m]
    }

    pub(crate) fn set_g0(&mut self, g0: f64) {
        self.g0 = g0;
    }

    pub fn is_finite(&self) -> bool {
        self.g0.is_finite()
            && self.first_order.iter().flatten().all(|v| v.is_finite())
            && self.second_order.iter().flatten().all(|v| v.is_finite())
    }

    /// `g~(x)`: constant plus first-order plus symmetric pairs counted once.
    pub fn evaluate(&self, x: &[usize]) -> Result<f64> {
        self.domain.check_point(x)?;
        Ok(self.evaluate_unchecked(x))
    }

    /// Like [`evaluate`](Self::evaluate) but skips range validation; used in
    /// enumeration-heavy inner loops after the domain is checked once.
    pub fn evaluate_unchecked(&self, x: &[usize]) -> f64 {
        let d = self.domain.dim();
        let mut acc = self.g0;
        for m in 0..d {
            acc += self.first_order[m][x[m]];
        }
        for m in 0..d {
            let size_n_base = &self.domain.axis_sizes;
            for n in m + 1..d {
                acc += self.second_order[pair_index(d, m, n)][x[m] * size_n_base[n] + x[n]];
            }
        }
        acc
    }

    /// Shifts every component table by its mean, absorbing the total into the
    /// constant so that evaluation is unchanged at every point and the
    /// zero-sum identities hold afterwards.
    pub fn rebalance(mut self) -> Self {
        let mut shift = 0.0;
        for table in &mut self.first_order {
            let sigma = table.iter().sum::<f64>() / table.len() as f64;
            for v in table.iter_mut() {
                *v -= sigma;
            }
            shift += sigma;
        }
        for table in &mut self.second_order {
            let sigma = table.iter().sum::<f64>() / table.len() as f64;
            for v in table.iter_mut() {
                *v -= sigma;
            }
            shift += sigma;
        }
        self.g0 += shift;
        self
    }

    /// Checks the zero-sum identities with the tolerance scaled by table size
    /// and magnitude.
    pub fn is_rebalanced(&self, tol: f64) -> bool {
        self.zero_sum_violation().iter().all(|&(sum, scale)| sum.abs() <= tol * scale)
    }

    fn zero_sum_violation(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for table in self.first_order.iter().chain(&self.second_order) {
            let sum: f64 = table.iter().sum();
            let max = table.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            out.push((sum, (table.len() as f64 * max).max(1.0)));
        }
        out
    }

    /// `sum over samples of (value - g~(x))^2`, the squared weighted norm of
    /// the residual with the sample multiset as weight.
    pub fn weighted_error(&self, samples: &[(Vec<usize>, f64)]) -> Result<f64> {
        let mut err = 0.0;
        for (x, value) in samples {
            let r = value - self.evaluate(x)?;
            err += r * r;
        }
        Ok(err)
    }
}

#[cfg(feature = "compensated-summation")]
#[inline]
fn add(sum: &mut f64, comp: &mut f64, value: f64) {
    let y = value - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

#[cfg(not(feature = "compensated-summation"))]
#[inline]
fn add(sum: &mut f64, _comp: &mut f64, value: f64) {
    *sum += value;
}

/// Streaming sums and visit counts realizing the marginal operators for both
/// the weighted samples and the characteristic weight itself.
///
/// Accumulators built over disjoint sample shards can be merged; merging is
/// associative and commutative on the stored sums and counts.
#[derive(Debug, Clone)]
pub struct MarginalAccumulator {
    domain: GridDomain,
    sum0: f64,
    comp0: f64,
    count0: u64,
    axis_sums: Vec<Vec<f64>>,
    axis_comps: Vec<Vec<f64>>,
    axis_counts: Vec<Vec<u64>>,
    pair_sums: Vec<Vec<f64>>,
    pair_comps: Vec<Vec<f64>>,
    pair_counts: Vec<Vec<u64>>,
}

impl MarginalAccumulator {
    pub fn new(domain: GridDomain) -> Self {
        let d = domain.dim();
        let axis_sums: Vec<Vec<f64>> = (0..d).map(|m| vec![0.0; domain.axis_size(m)]).collect();
        let axis_counts = (0..d).map(|m| vec![0u64; domain.axis_size(m)]).collect();
        let pair_sums: Vec<Vec<f64>> = (0..d)
            .flat_map(|m| (m + 1..d).map(move |n| (m, n)))
            .map(|(m, n)| vec![0.0; domain.axis_size(m) * domain.axis_size(n)])
            .collect();
        let pair_counts = pair_sums.iter().map(|t| vec![0u64; t.len()]).collect();
        Self {
            axis_comps: axis_sums.clone(),
            pair_comps: pair_sums.clone(),
            domain,
            sum0: 0.0,
            comp0: 0.0,
            count0: 0,
            axis_sums,
            axis_counts,
            pair_sums,
            pair_counts,
        }
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn count(&self) -> u64 {
        self.count0
    }

    pub fn sum(&self) -> f64 {
        self.sum0
    }

    /// Records one sample `g(x) = value`. Repeated points are legal and act
    /// as multiplicity weights.
    pub fn accumulate(&mut self, x: &[usize], value: f64) -> Result<()> {
        self.domain.check_point(x)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("sample value at {x:?}")));
        }
        add(&mut self.sum0, &mut self.comp0, value);
        self.count0 += 1;
        let d = self.domain.dim();
        for m in 0..d {
            add(&mut self.axis_sums[m][x[m]], &mut self.axis_comps[m][x[m]], value);
            self.axis_counts[m][x[m]] += 1;
        }
        for m in 0..d {
            for n in m + 1..d {
                let p = pair_index(d, m, n);
                let idx = x[m] * self.domain.axis_size(n) + x[n];
                add(&mut self.pair_sums[p][idx], &mut self.pair_comps[p][idx], value);
                self.pair_counts[p][idx] += 1;
            }
        }
        Ok(())
    }

    /// Merges the sums and counts of `other` into `self`.
    pub fn merge(&mut self, other: &MarginalAccumulator) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::InvalidArgument("merging accumulators over different domains".into()));
        }
        add(&mut self.sum0, &mut self.comp0, other.sum0);
        self.count0 += other.count0;
        for (a, b) in self.axis_sums.iter_mut().zip(&other.axis_sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.axis_counts.iter_mut().zip(&other.axis_counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.pair_sums.iter_mut().zip(&other.pair_sums) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.pair_counts.iter_mut().zip(&other.pair_counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn axis_sum(&self, m: usize, i: usize) -> f64 {
        self.axis_sums[m][i]
    }

    pub fn axis_count(&self, m: usize, i: usize) -> u64 {
        self.axis_counts[m][i]
    }

    pub fn pair_sum(&self, m: usize, n: usize, i: usize, j: usize) -> f64 {
        let d = self.domain.dim();
        if m < n {
            self.pair_sums[pair_index(d, m, n)][i * self.domain.axis_size(n) + j]
        } else {
            self.pair_sums[pair_index(d, n, m)][j * self.domain.axis_size(m) + i]
        }
    }

    pub fn pair_count(&self, m: usize, n: usize, i: usize, j: usize) -> u64 {
        let d = self.domain.dim();
        if m < n {
            self.pair_counts[pair_index(d, m, n)][i * self.domain.axis_size(n) + j]
        } else {
            self.pair_counts[pair_index(d, n, m)][j * self.domain.axis_size(m) + i]
        }
    }

    /// Stage-wise weighted means: the constant first, then each first-order
    /// table against the constant, then each pair table against the lower
    /// orders. Cells never visited get the neutral value 0. The result is
    /// rebalanced before being returned.
    pub fn finalize(&self) -> Result<HdmrModel> {
        if self.count0 == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let d = self.domain.dim();
        let mut model = HdmrModel::zero(self.domain.clone());
        let g0 = self.sum0 / self.count0 as f64;
        model.set_g0(g0);
        for m in 0..d {
            let table = model.first_order_mut(m);
            for i in 0..self.domain.axis_size(m) {
                if self.axis_counts[m][i] > 0 {
                    table[i] = self.axis_sums[m][i] / self.axis_counts[m][i] as f64 - g0;
                }
            }
        }
        for m in 0..d {
            for n in m + 1..d {
                let p = pair_index(d, m, n);
                let size_n = self.domain.axis_size(n);
                // Borrow the finished first-order tables before the pair
                // table is taken mutably.
                let gm: Vec<f64> = model.first_order(m).to_vec();
                let gn: Vec<f64> = model.first_order(n).to_vec();
                let table = model.pair_table_mut(m, n);
                for i in 0..self.domain.axis_size(m) {
                    for j in 0..size_n {
                        let idx = i * size_n + j;
                        if self.pair_counts[p][idx] > 0 {
                            table[idx] = self.pair_sums[p][idx] / self.pair_counts[p][idx] as f64
                                - gm[i]
                                - gn[j]
                                - g0;
                        }
                    }
                }
            }
        }
        Ok(model.rebalance())
    }
}
