//! End-to-end acceptance suite. Each test prints one PASS/FAIL line for its
//! criterion; run with `--nocapture` to see them all.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use hdmr_adp::harness::{
    run_bandit, run_randmin, write_bandit_csv, write_randmin_csv, BanditConfig, BanditReport,
    RandminConfig, RandminReport,
};
use hdmr_adp::hdmr::{GridDomain, HdmrModel, MarginalAccumulator};
use hdmr_adp::trmin::{
    approx_min, assemble, candidate_set, decompose, exact_min, relaxed_minimizer, AxisSplit,
};

fn report(criterion: usize, name: &str, result: Result<(), String>) {
    match &result {
        Ok(()) => println!("ACCEPTANCE {criterion} ({name}): PASS"),
        Err(e) => println!("ACCEPTANCE {criterion} ({name}): FAIL - {e}"),
    }
    if let Err(e) = result {
        panic!("criterion {criterion} failed: {e}");
    }
}

fn full_grid_samples(domain: &GridDomain, rng: &mut impl Rng) -> Vec<(Vec<usize>, f64)> {
    domain
        .points()
        .into_iter()
        .map(|x| (x, rng.gen_range(-1.0..1.0)))
        .collect()
}

fn finalize_samples(domain: &GridDomain, samples: &[(Vec<usize>, f64)]) -> HdmrModel {
    let mut acc = MarginalAccumulator::new(domain.clone());
    for (x, v) in samples {
        acc.accumulate(x, *v).unwrap();
    }
    acc.finalize().unwrap()
}

/// Least-squares optimum over all second-order forms via the (rank-deficient)
/// normal system, solved with an SVD pseudo-inverse.
fn least_squares_error(domain: &GridDomain, samples: &[(Vec<usize>, f64)]) -> f64 {
    let d = domain.dim();
    let mut col_of_axis = vec![0usize; d];
    let mut cols = 1;
    for m in 0..d {
        col_of_axis[m] = cols;
        cols += domain.axis_size(m);
    }
    let mut col_of_pair = Vec::new();
    for m in 0..d {
        for n in m + 1..d {
            col_of_pair.push((m, n, cols));
            cols += domain.axis_size(m) * domain.axis_size(n);
        }
    }
    let rows = samples.len();
    let mut a = DMatrix::zeros(rows, cols);
    let mut v = DVector::zeros(rows);
    for (row, (x, value)) in samples.iter().enumerate() {
        a[(row, 0)] = 1.0;
        for m in 0..d {
            a[(row, col_of_axis[m] + x[m])] = 1.0;
        }
        for &(m, n, base) in &col_of_pair {
            a[(row, base + x[m] * domain.axis_size(n) + x[n])] = 1.0;
        }
        v[row] = *value;
    }
    let svd = a.clone().svd(true, true);
    let xi = svd.solve(&v, 1e-12).unwrap();
    (a * xi - v).norm_squared()
}

fn criterion_1() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..50 {
        let d = rng.gen_range(2..=3usize);
        let sizes: Vec<usize> = (0..d).map(|_| rng.gen_range(2..=4usize)).collect();
        let domain = GridDomain::new(sizes).unwrap();
        let samples = full_grid_samples(&domain, &mut rng);
        let model = finalize_samples(&domain, &samples);
        let got = model.weighted_error(&samples).unwrap();
        let best = least_squares_error(&domain, &samples);
        if got - best > 1e-9 * best.max(1.0) {
            return Err(format!("case {case}: finalize error {got} vs LS optimum {best}"));
        }
        // Zero-mean identities: first-order sums and pair-table marginal
        // sums vanish.
        for m in 0..d {
            let s: f64 = model.first_order(m).iter().sum();
            if s.abs() > 1e-10 {
                return Err(format!("case {case}: first-order sum {s} on axis {m}"));
            }
        }
        let mut k = 0;
        for m in 0..d {
            for n in m + 1..d {
                let (rows, cols) = (domain.axis_size(m), domain.axis_size(n));
                let table = &model.second_order_tables()[k];
                for i in 0..rows {
                    let s: f64 = table[i * cols..(i + 1) * cols].iter().sum();
                    if s.abs() > 1e-10 {
                        return Err(format!("case {case}: pair ({m},{n}) row {i} sum {s}"));
                    }
                }
                for j in 0..cols {
                    let s: f64 = (0..rows).map(|i| table[i * cols + j]).sum();
                    if s.abs() > 1e-10 {
                        return Err(format!("case {case}: pair ({m},{n}) col {j} sum {s}"));
                    }
                }
                k += 1;
            }
        }
    }
    Ok(())
}

#[test]
fn acceptance_1_projection_optimality() {
    report(1, "projection optimality", criterion_1());
}

fn criterion_2() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for case in 0..50 {
        let d = rng.gen_range(2..=4usize);
        let sizes: Vec<usize> = (0..d).map(|_| rng.gen_range(2..=4usize)).collect();
        let domain = GridDomain::new(sizes.clone()).unwrap();
        // Arbitrary (uncentered) low-order components.
        let g0 = rng.gen_range(-1.0..1.0);
        let first: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&s| (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut pairs: Vec<Vec<f64>> = Vec::new();
        for m in 0..d {
            for n in m + 1..d {
                pairs.push(
                    (0..sizes[m] * sizes[n]).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                );
            }
        }
        let truth = |x: &[usize]| -> f64 {
            let mut v = g0;
            for m in 0..d {
                v += first[m][x[m]];
            }
            let mut k = 0;
            for m in 0..d {
                for n in m + 1..d {
                    v += pairs[k][x[m] * sizes[n] + x[n]];
                    k += 1;
                }
            }
            v
        };
        let samples: Vec<(Vec<usize>, f64)> =
            domain.points().into_iter().map(|x| (x.clone(), truth(&x))).collect();
        let model = finalize_samples(&domain, &samples);
        for (x, v) in &samples {
            let err = (model.evaluate(x).unwrap() - v).abs();
            if err >= 1e-9 {
                return Err(format!("case {case}: reconstruction error {err} at {x:?}"));
            }
        }
    }
    Ok(())
}

#[test]
fn acceptance_2_exactness_on_low_order_functions() {
    report(2, "exactness on low-order functions", criterion_2());
}

fn criterion_3() -> Result<(), String> {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let phis = [0.0, 0.25, 0.5, 0.75, 1.0];
    for case in 0..200 {
        let mu = rng.gen_range(2..=4usize);
        let n_params = rng.gen_range(0..=1usize);
        let d = mu + n_params;
        let mut sizes: Vec<usize> = (0..mu).map(|_| rng.gen_range(2..=6usize)).collect();
        for _ in 0..n_params {
            sizes.push(rng.gen_range(2..=3usize));
        }
        let domain = GridDomain::new(sizes.clone()).unwrap();
        let samples = full_grid_samples(&domain, &mut rng);
        let model = finalize_samples(&domain, &samples);
        let split = AxisSplit::new((mu..d).collect(), (0..mu).collect())
            .map_err(|e| e.to_string())?;
        let problem = assemble(&model, &split).map_err(|e| e.to_string())?;
        let cache = decompose(&problem).map_err(|e| e.to_string())?;
        let r = problem.radius();

        // Parameter part of the objective at x (everything not touching z).
        let param_part = |x: &[usize]| -> f64 {
            let mut v = model.g0();
            for (pi, axis) in (mu..d).enumerate() {
                v += model.first_order(axis)[x[pi]];
            }
            for (pi, am) in (mu..d).enumerate() {
                for (pj, an) in (mu..d).enumerate().skip(pi + 1) {
                    v += model.pair(am, an, x[pi], x[pj]);
                }
            }
            v
        };

        let param_points: Vec<Vec<usize>> = if n_params == 0 {
            vec![vec![]]
        } else {
            GridDomain::new(sizes[mu..].to_vec()).unwrap().points()
        };
        for x in &param_points {
            let exact = exact_min(&model, &split, x, 10_000_000).map_err(|e| e.to_string())?;
            let rm = relaxed_minimizer(&cache, &problem, x).map_err(|e| e.to_string())?;
            let lower = param_part(x) + rm.lower_value;
            if lower > exact.value + 1e-9 * exact.value.abs().max(1.0) {
                return Err(format!(
                    "case {case}, x {x:?}: lower bound {lower} above exact {}",
                    exact.value
                ));
            }
            let norm = rm.v_hat.norm();
            if (norm - r).abs() > 1e-8 * r {
                return Err(format!("case {case}: |v_hat| = {norm}, r = {r}"));
            }
            if let (Some(lambda), false) = (rm.lambda, rm.hard_case) {
                let b = cache.query_vector(&problem, x);
                let d_eig = cache.eigenvalues();
                let nsq: f64 = (0..problem.theta())
                    .map(|i| {
                        let t = b[i] / (d_eig[i] - lambda);
                        t * t
                    })
                    .sum();
                if (nsq - r * r).abs() > 1e-8 * r * r {
                    return Err(format!(
                        "case {case}: secular residual {}",
                        (nsq - r * r).abs()
                    ));
                }
            }
            for &phi in &phis {
                let approx = approx_min(&model, &split, &problem, &cache, x, phi, 10_000_000)
                    .map_err(|e| e.to_string())?;
                if approx.value < exact.value - 1e-12 * exact.value.abs().max(1.0) {
                    return Err(format!(
                        "case {case}, phi {phi}: upper bound {} below exact {}",
                        approx.value, exact.value
                    ));
                }
                if phi == 0.0
                    && (approx.value.to_bits() != exact.value.to_bits()
                        || approx.argmin != exact.argmin)
                {
                    return Err(format!("case {case}: phi=0 differs from the exact scan"));
                }
                // Candidate set vs brute-force threshold filtering.
                let cs = candidate_set(&rm.v_hat, &problem, phi, 10_000_000)
                    .map_err(|e| e.to_string())?;
                let norm_tables = cs.normalized();
                let mut expected: Vec<Vec<u32>> = Vec::new();
                GridDomain::new(sizes[..mu].to_vec()).unwrap().for_each_point(|z| {
                    let mut q = 1.0;
                    for (m, &zi) in z.iter().enumerate() {
                        q *= norm_tables[m][zi];
                    }
                    if q >= phi {
                        expected.push(z.iter().map(|&i| i as u32).collect());
                    }
                    true
                });
                let got: Vec<Vec<u32>> = cs.iter().map(|(z, _)| z.to_vec()).collect();
                if got != expected {
                    return Err(format!(
                        "case {case}, phi {phi}: candidate set mismatch ({} vs {})",
                        got.len(),
                        expected.len()
                    ));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs() >= 60 {
        return Err(format!("suite took {elapsed:?}, budget 60 s"));
    }
    Ok(())
}

#[test]
fn acceptance_3_trust_region_suite() {
    report(3, "trust-region suite", criterion_3());
}

static RANDMIN: OnceLock<RandminReport> = OnceLock::new();

fn randmin_report() -> &'static RandminReport {
    RANDMIN.get_or_init(|| run_randmin(&RandminConfig::default()).expect("randmin study"))
}

fn criterion_4() -> Result<(), String> {
    let report = randmin_report();
    let phis = &report.config.phis;
    let i1 = phis.iter().position(|&p| p == 1.0).unwrap();
    let upper1 = report.mean_scaled_upper[i1];
    if !(0.32..=0.62).contains(&upper1) {
        return Err(format!("mean scaled upper bound at phi=1 is {upper1}, expected [0.32, 0.62]"));
    }
    let lower = report.mean_scaled_lower;
    if !(-7.5..=-3.5).contains(&lower) {
        return Err(format!("mean scaled lower bound is {lower}, expected [-7.5, -3.5]"));
    }
    // Mean scaled error grows with phi (phis are ascending in the default
    // config), and candidate counts shrink.
    for w in report.mean_scaled_upper.windows(2) {
        if w[1] < w[0] - 1e-12 {
            return Err(format!("mean scaled upper bounds not monotone: {:?}", report.mean_scaled_upper));
        }
    }
    for &seed in &report.config.seeds {
        let counts: Vec<usize> = report
            .rows
            .iter()
            .filter(|r| r.seed == seed)
            .map(|r| r.candidates)
            .collect();
        if !counts.windows(2).all(|w| w[1] <= w[0]) {
            return Err(format!("candidate counts not monotone for seed {seed}: {counts:?}"));
        }
    }
    Ok(())
}

#[test]
fn acceptance_4_randmin_replication() {
    report(4, "random-instance replication", criterion_4());
}

static BANDIT: OnceLock<BanditReport> = OnceLock::new();

fn bandit_report() -> &'static BanditReport {
    BANDIT.get_or_init(|| run_bandit(&BanditConfig::default(), None).expect("bandit study"))
}

fn criterion_5() -> Result<(), String> {
    let report = bandit_report();
    let payoff = |policy: &str| -> f64 {
        report
            .results
            .iter()
            .find(|r| r.policy == policy)
            .map(|r| r.mean_payoff)
            .unwrap_or(f64::NAN)
    };
    let exact = payoff("exact");
    let p0 = payoff("phi=0");
    let p1 = payoff("phi=1");
    if !(0.643..=0.663).contains(&exact) {
        return Err(format!("exact-policy payoff {exact}, expected [0.643, 0.663]"));
    }
    if !(0.622..=0.642).contains(&p1) {
        return Err(format!("phi=1 payoff {p1}, expected [0.622, 0.642]"));
    }
    if !(0.628..=0.648).contains(&p0) {
        return Err(format!("phi=0 payoff {p0}, expected [0.628, 0.648]"));
    }
    if p0 < p1 - 0.005 {
        return Err(format!("phi=0 payoff {p0} trails phi=1 payoff {p1} by more than 0.005"));
    }
    Ok(())
}

#[test]
fn acceptance_5_bandit_replication() {
    report(5, "bandit replication", criterion_5());
}

fn criterion_6() -> Result<(), String> {
    let report = bandit_report();
    for (i, &hdmr) in report.hdmr_storage_bytes.iter().enumerate() {
        if report.exact_storage_bytes < 10 * hdmr {
            return Err(format!(
                "phi index {i}: exact {} bytes vs HDMR {} bytes (< 10x)",
                report.exact_storage_bytes, hdmr
            ));
        }
    }
    Ok(())
}

#[test]
fn acceptance_6_storage_ratio() {
    report(6, "storage ratio", criterion_6());
}

fn criterion_7() -> Result<(), String> {
    let bandit = bandit_report();
    let stages = bandit.config.horizon - 1;
    for (i, &count) in bandit.decompositions_per_phi.iter().enumerate() {
        if count != stages {
            return Err(format!(
                "phi index {i}: {count} decompositions for {stages} non-terminal stages"
            ));
        }
    }
    let randmin = randmin_report();
    for row in randmin.rows.iter().filter(|r| r.phi == 1.0) {
        if row.candidates * 100 > row.exact_evaluations {
            return Err(format!(
                "seed {}: approximate scan spent {} evaluations vs {} exact",
                row.seed, row.candidates, row.exact_evaluations
            ));
        }
    }
    Ok(())
}

#[test]
fn acceptance_7_decomposition_count_and_query_cost() {
    report(7, "decomposition count and query cost", criterion_7());
}

fn criterion_8() -> Result<(), String> {
    let randmin_cfg = RandminConfig {
        axes: vec![12, 12, 12],
        seeds: vec![5, 6, 7],
        ..RandminConfig::default()
    };
    let mut a = Vec::new();
    write_randmin_csv(&run_randmin(&randmin_cfg).map_err(|e| e.to_string())?, &mut a)
        .map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    write_randmin_csv(&run_randmin(&randmin_cfg).map_err(|e| e.to_string())?, &mut b)
        .map_err(|e| e.to_string())?;
    if a != b {
        return Err("randmin CSV differs between reruns".into());
    }
    let bandit_cfg = BanditConfig {
        arms: (2, 2),
        horizon: 4,
        plays: 500,
        ..BanditConfig::default()
    };
    let mut a = Vec::new();
    write_bandit_csv(&run_bandit(&bandit_cfg, None).map_err(|e| e.to_string())?, &mut a)
        .map_err(|e| e.to_string())?;
    let mut b = Vec::new();
    write_bandit_csv(&run_bandit(&bandit_cfg, None).map_err(|e| e.to_string())?, &mut b)
        .map_err(|e| e.to_string())?;
    if a != b {
        return Err("bandit CSV differs between reruns".into());
    }
    Ok(())
}

#[test]
fn acceptance_8_deterministic_csv() {
    report(8, "deterministic CSV", criterion_8());
}
