#![allow(dead_code)]

use std::collections::BTreeSet;

use faircomp::cohort::{
    check_ws_precondition, online_cohort, ptc_selection_probabilities, weighted_sampling, ws_pair_coefficient, ws_selection_probabilities,
    CohortMode, CohortSpec, ProbabilityMethod,
};
use faircomp::competitive::{audit_multiple_task_fairness, find_violation_witness, randomize_then_classify, TieBreaker, WitnessSearch};
use faircomp::construct::{build_fair_classifier, optimize_fair_classifier, AllocationTarget};
use faircomp::error::Error;
use faircomp::functional::{
    and_witness, check_heavy_or_of, compose_and, compose_or, compose_threshold, or_different_counts_witness, or_same_task_witness,
};
use faircomp::group::{alpha_perturbation_witness, bimodal_population, check_unrelated_tasks, multi_task_parity_residual};
use faircomp::model::{audit_individual_fairness, group_means, GroupStructure, SoftClassifier, TaskMetric};
use faircomp::subset::{check_constrained_feasibility, copy_behavior_extension};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

pub type Check = Result<String, String>;

pub const EPS: f64 = 1e-9;
pub const CASES: u32 = 1000;

fn close(a: f64, b: f64, what: &str) -> Result<(), String> {
    if (a - b).abs() <= 1e-9 {
        Ok(())
    } else {
        Err(format!("{what}: got {a}, expected {b}"))
    }
}

// ---------------------------------------------------------------- oracles

/// Every permutation of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// PermuteThenClassify selection probabilities by walking every ordering
/// against every coin vector.
pub fn ptc_trace_oracle(p: &[f64], n: usize) -> Vec<f64> {
    let big_n = p.len();
    let perms = permutations(big_n);
    let mut out = vec![0.0; big_n];
    let perm_weight = 1.0 / perms.len() as f64;
    for coins in 0u32..(1 << big_n) {
        let coin_weight: f64 = (0..big_n).map(|u| if coins >> u & 1 == 1 { p[u] } else { 1.0 - p[u] }).product();
        if coin_weight == 0.0 {
            continue;
        }
        for perm in &perms {
            let mut slots = n;
            for (i, &u) in perm.iter().enumerate() {
                if slots == 0 {
                    break;
                }
                let left = big_n - i;
                if slots >= left || coins >> u & 1 == 1 {
                    out[u] += coin_weight * perm_weight;
                    slots -= 1;
                }
            }
        }
    }
    out
}

/// All `n`-subsets of `0..big_n` as bit masks.
pub fn subsets_of_size(big_n: usize, n: usize) -> Vec<u32> {
    (0u32..(1 << big_n)).filter(|s| s.count_ones() as usize == n).collect()
}

/// Weighted-sampling set probabilities and per-element selection
/// probabilities by enumerating every `n`-set.
pub fn ws_enumeration(p: &[f64], n: usize) -> (Vec<(u32, f64)>, Vec<f64>) {
    let sets = subsets_of_size(p.len(), n);
    let weight = |s: u32| (0..p.len()).filter(|&u| s >> u & 1 == 1).map(|u| p[u]).sum::<f64>();
    let eta: f64 = sets.iter().map(|&s| weight(s)).sum();
    let probs: Vec<(u32, f64)> = sets.iter().map(|&s| (s, weight(s) / eta)).collect();
    let mut marginal = vec![0.0; p.len()];
    for &(s, q) in &probs {
        for (u, m) in marginal.iter_mut().enumerate() {
            if s >> u & 1 == 1 {
                *m += q;
            }
        }
    }
    (probs, marginal)
}

pub fn binomial(n: i64, k: i64) -> f64 {
    if k < 0 || n < 0 || k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Best objective over fair classifiers whose values lie on a grid of
/// `steps` divisions.
pub fn lp_grid_oracle(m: &TaskMetric, utilities: &[f64], cap: f64, steps: usize) -> f64 {
    struct Search<'a> {
        m: &'a TaskMetric,
        u: &'a [f64],
        cap: f64,
        steps: usize,
        best: f64,
    }
    fn rec(s: &mut Search, chosen: &mut Vec<f64>, used: f64, value: f64) {
        let i = chosen.len();
        if i == s.u.len() {
            s.best = s.best.max(value);
            return;
        }
        let rest = &s.u[i..];
        let top = rest.iter().copied().fold(0.0, f64::max);
        let room = (s.cap - used).min(rest.len() as f64).max(0.0);
        if value + top * room <= s.best {
            return;
        }
        for k in (0..=s.steps).rev() {
            let p = k as f64 / s.steps as f64;
            if used + p > s.cap + 1e-12 {
                continue;
            }
            if (0..i).all(|j| (p - chosen[j]).abs() <= s.m.get(i, j) + 1e-12) {
                chosen.push(p);
                rec(s, chosen, used + p, value + p * s.u[i]);
                chosen.pop();
            }
        }
    }
    let mut s = Search {
        m,
        u: utilities,
        cap,
        steps,
        best: f64::NEG_INFINITY,
    };
    rec(&mut s, &mut Vec::new(), 0.0, 0.0);
    s.best
}

/// `Pr[at least k of the classifiers fire]` by enumerating all outcomes.
pub fn threshold_enumeration(ps: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for outcome in 0u32..(1 << ps.len()) {
        if (outcome.count_ones() as usize) < k {
            continue;
        }
        total += ps
            .iter()
            .enumerate()
            .map(|(i, &p)| if outcome >> i & 1 == 1 { p } else { 1.0 - p })
            .product::<f64>();
    }
    total
}

/// Shortest-path closure of symmetric edge weights, always a metric.
pub fn closure_metric(n: usize, weights: &[f64]) -> TaskMetric {
    let mut d = vec![vec![0.0; n]; n];
    let mut w = weights.iter();
    for i in 0..n {
        for j in (i + 1)..n {
            let x = *w.next().expect("enough weights");
            d[i][j] = x;
            d[j][i] = x;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    TaskMetric::new(d).expect("closure is a metric")
}

pub fn random_metric<R: Rng>(rng: &mut R, n: usize) -> TaskMetric {
    let w: Vec<f64> = (0..n * n.saturating_sub(1) / 2).map(|_| random_unit(rng)).collect();
    closure_metric(n, &w)
}

fn random_unit<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..8) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random::<f64>(),
    }
}

// ------------------------------------------------------- exact worked numbers

pub fn or_divergence() -> Check {
    let m = TaskMetric::uniform(2, 0.49).map_err(|e| e.to_string())?;
    let c = SoftClassifier::new(vec![0.5, 0.01]).unwrap();
    let twice = compose_or(&[c.clone(), c]).unwrap();
    close(twice[0], 0.75, "OR for u")?;
    close(twice[1], 0.0199, "OR for v")?;
    let r = audit_individual_fairness(&m, &twice, EPS).unwrap();
    close(r.max_excess(), 0.2401, "excess")?;
    Ok(format!("({:.4}, {:.4}), excess {:.4}", twice[0], twice[1], r.max_excess()))
}

pub fn bimodal_parity() -> Check {
    let (g, c) = bimodal_population();
    let means = group_means(&g, &compose_or(&[c.clone(), c]).unwrap()).unwrap();
    let (a, b) = (means[&(0, 0)], means[&(0, 1)]);
    close(a, 0.9375, "first group")?;
    close(b, 0.875, "second group")?;
    Ok(format!("{a} vs {b}"))
}

pub fn constrained_feasibility() -> Check {
    let r = check_constrained_feasibility(100, 1000, 550, 0.15, &[(0.4, 0.25), (0.5, 0.1), (0.1, 0.0)]).map_err(|e| e.to_string())?;
    close(r.slack, 0.15, "slack")?;
    close(r.p_max, 700.0 / 6050.0, "largest share")?;
    if r.feasible {
        return Err("example reported feasible".into());
    }
    let blow = check_constrained_feasibility(5, 25, 10, 0.5, &[(1.0, 0.0)]).map_err(|e| e.to_string())?;
    if blow.gap < 0.8 - 1e-9 {
        return Err(format!("blow-up gap {} below 0.8", blow.gap));
    }
    Ok(format!("slack {:.2}, share {:.4}, blow-up gap {:.4}", r.slack, r.p_max, blow.gap))
}

pub fn ptc_group_counterexample() -> Check {
    let c = SoftClassifier::new(vec![0.75, 1.0, 0.5]).unwrap();
    let exact = ptc_selection_probabilities(&c, 1, ProbabilityMethod::Exact).map_err(|e| e.to_string())?;
    let a = exact[0].mean;
    let b = (exact[1].mean + exact[2].mean) / 2.0;
    close(a, 0.3125, "lone element")?;
    close(b, 0.34375, "pair mean")?;
    let trace = ptc_trace_oracle(c.probabilities(), 1);
    close(trace[0], a, "trace oracle")?;
    if format!("{a:.2}") != "0.31" || format!("{b:.2}") != "0.34" {
        return Err("rounding does not match".into());
    }
    Ok(format!("{a} vs {b}"))
}

pub fn ws_coefficient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for big_n in 2..=8usize {
        for n in 1..=big_n {
            let p: Vec<f64> = (0..big_n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = p.iter().sum();
            let eta = binomial(big_n as i64 - 1, n as i64 - 1) * s;
            let expected = binomial(big_n as i64 - 2, n as i64 - 1) / eta;
            let coef = ws_pair_coefficient(big_n, n, s).map_err(|e| e.to_string())?;
            close(coef, expected, &format!("coefficient N={big_n} n={n}"))?;
            let (_, marginal) = ws_enumeration(&p, n);
            let closed = ws_selection_probabilities(&SoftClassifier::new(p.clone()).unwrap(), n).unwrap();
            for u in 0..big_n {
                close(closed[u], marginal[u], "selection probability")?;
                for v in 0..big_n {
                    close((marginal[u] - marginal[v]).abs(), expected * (p[u] - p[v]).abs(), "pair distance")?;
                }
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (N, n) settings"))
}

// ---------------------------------------------------------- oracle suites

pub fn ptc_monte_carlo() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut comparisons, mut worst) = (0usize, 0.0_f64);
    let mut misses = Vec::new();
    for big_n in 1..=6usize {
        for n in 1..=big_n.min(3) {
            for case in 0..50u64 {
                let p: Vec<f64> = (0..big_n).map(|_| random_unit(&mut rng)).collect();
                let c = SoftClassifier::new(p.clone()).unwrap();
                let exact = ptc_selection_probabilities(&c, n, ProbabilityMethod::Exact).unwrap();
                let oracle = ptc_trace_oracle(&p, n);
                let seed = (big_n as u64) << 16 | (n as u64) << 8 | case;
                let mc = ptc_selection_probabilities(&c, n, ProbabilityMethod::MonteCarlo { trials: 100_000, seed }).unwrap();
                for u in 0..big_n {
                    close(exact[u].mean, oracle[u], "exact vs trace oracle")?;
                    let e = oracle[u];
                    let sigma = (e * (1.0 - e) / 100_000.0).sqrt();
                    let dev = (mc[u].mean - e).abs();
                    comparisons += 1;
                    if sigma == 0.0 {
                        if dev > 0.0 {
                            return Err(format!("deterministic element {u} drifted (N={big_n}, n={n})"));
                        }
                        continue;
                    }
                    worst = worst.max(dev / sigma);
                    if dev > 3.0 * sigma {
                        misses.push(format!("N={big_n} n={n} case {case} u={u}: {:.2} sigma", dev / sigma));
                    }
                }
            }
        }
    }
    // Each comparison uses a 3 sigma band; across the whole family the miss
    // count must stay within what that band allows by chance, and nothing
    // may leave the family-wise band.
    let rate = 2.0 * (1.0 - Normal::standard().cdf(3.0));
    let allowed = Binomial::new(rate, comparisons as u64).unwrap().inverse_cdf(0.999);
    let family = Normal::standard().inverse_cdf(1.0 - 0.001 / (2.0 * comparisons as f64));
    let summary = format!(
        "{comparisons} comparisons, {} outside 3 sigma (chance allows {allowed}), worst {worst:.2} sigma (family band {family:.2})",
        misses.len()
    );
    if misses.len() as u64 <= allowed && worst <= family {
        Ok(summary)
    } else {
        Err(format!("{summary}: {}", misses.join("; ")))
    }
}

pub fn ws_chi_squared() -> Check {
    let draws = 1_000_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut lines = Vec::new();
    for (big_n, n) in [(3usize, 1usize), (4, 2), (5, 2), (6, 3), (7, 3), (8, 4), (8, 6)] {
        let p: Vec<f64> = (0..big_n).map(|_| rng.random_range(0.05..1.0)).collect();
        let c = SoftClassifier::new(p.clone()).unwrap();
        let (expected, _) = ws_enumeration(&p, n);
        let mut counts = vec![0u64; 1 << big_n];
        let mut draw_rng = ChaCha8Rng::seed_from_u64(1000 + big_n as u64 * 10 + n as u64);
        for _ in 0..draws {
            let set = weighted_sampling(&c, n, &mut draw_rng).unwrap();
            counts[set.iter().fold(0usize, |m, &u| m | 1 << u)] += 1;
        }
        let mut stat = 0.0;
        for &(s, q) in &expected {
            let e = q * draws as f64;
            let o = counts[s as usize] as f64;
            stat += (o - e) * (o - e) / e;
        }
        let observed: u64 = expected.iter().map(|&(s, _)| counts[s as usize]).sum();
        if observed != draws {
            return Err(format!("N={big_n} n={n}: draws outside the n-sets"));
        }
        let df = (expected.len() - 1) as f64;
        let pval = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
        if pval <= 0.001 {
            return Err(format!("N={big_n} n={n}: chi2 {stat:.1} on {df} df, p = {pval:.5}"));
        }
        lines.push(format!("N={big_n},n={n}:p={pval:.3}"));
    }
    Ok(lines.join(" "))
}

const GRID_STEPS: [usize; 5] = [0, 0, 2000, 400, 120];

pub fn lp_vs_grid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = 0.0_f64;
    for case in 0..100 {
        let n = rng.random_range(2..=4usize);
        let m = random_metric(&mut rng, n);
        let utilities: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let cap = rng.random_range(0.0..n as f64);
        let c = optimize_fair_classifier(&m, &AllocationTarget::new(utilities.clone(), cap).unwrap()).map_err(|e| e.to_string())?;
        if !audit_individual_fairness(&m, c.probabilities(), EPS).unwrap().passes() || c.allocation() > cap + 1e-9 {
            return Err(format!("case {case}: optimizer output infeasible"));
        }
        let value: f64 = c.probabilities().iter().zip(&utilities).map(|(p, u)| p * u).sum();
        let grid = lp_grid_oracle(&m, &utilities, cap, GRID_STEPS[n]);
        if value < grid - 1e-9 {
            return Err(format!("case {case}: optimizer {value} below grid point {grid}"));
        }
        worst = worst.max(value - grid);
        if value - grid > 0.02 {
            return Err(format!("case {case}: optimizer {value} exceeds grid optimum {grid} by more than 0.02"));
        }
    }
    Ok(format!("100 instances, largest gap {worst:.4}"))
}

pub fn threshold_vs_enumeration() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut checked = 0;
    for count in 1..=20usize {
        let classifiers: Vec<SoftClassifier> = (0..count)
            .map(|_| SoftClassifier::new((0..3).map(|_| random_unit(&mut rng)).collect()).unwrap())
            .collect();
        for k in 1..=count {
            let composed = compose_threshold(&classifiers, k).map_err(|e| e.to_string())?;
            for u in 0..3 {
                let ps: Vec<f64> = classifiers.iter().map(|c| c.p(u)).collect();
                close(composed[u], threshold_enumeration(&ps, k), &format!("{count} classifiers, k={k}"))?;
            }
            checked += 1;
        }
    }
    let a = SoftClassifier::new(vec![0.3, 0.9]).unwrap();
    let b = SoftClassifier::new(vec![0.6, 0.2]).unwrap();
    let or = compose_or(&[a.clone(), b.clone()]).unwrap();
    let and = compose_and(&[a.clone(), b.clone()]).unwrap();
    let (t1, t2) = (compose_threshold(&[a.clone(), b.clone()], 1).unwrap(), compose_threshold(&[a, b], 2).unwrap());
    for u in 0..2 {
        close(or[u], t1[u], "OR as threshold 1")?;
        close(and[u], t2[u], "AND as threshold 2")?;
    }
    Ok(format!("{checked} (count, k) settings"))
}

// -------------------------------------------------------- property suites

fn runner() -> TestRunner {
    runner_with(CASES)
}

fn runner_with(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            max_global_rejects: 100_000,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn run<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S::Value: std::fmt::Debug,
{
    runner().run(&strategy, test).map(|()| format!("{CASES} cases")).map_err(|e| e.to_string())
}

fn unit() -> impl Strategy<Value = f64> + Clone {
    prop_oneof![1 => Just(0.0), 1 => Just(1.0), 6 => 0.0..=1.0f64]
}

fn metric_of(n: usize, weights: impl Strategy<Value = f64> + Clone + 'static) -> impl Strategy<Value = TaskMetric> {
    vec(weights, n * n.saturating_sub(1) / 2).prop_map(move |w| closure_metric(n, &w))
}

fn order_of(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

/// A metric on `n` elements with a fair classifier built from random
/// targets in `lo..=hi` visited in a random order.
fn fair_classifier(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = (TaskMetric, SoftClassifier)> {
    (metric_of(n, unit()), vec(lo..=hi, n), order_of(n)).prop_map(|(m, t, o)| {
        let c = build_fair_classifier(&m, &t, &o).expect("construction succeeds");
        (m, c)
    })
}

fn passes(m: &TaskMetric, q: &[f64]) -> Result<(), TestCaseError> {
    let r = audit_individual_fairness(m, q, EPS).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(r.passes(), "max excess {} over {:?}", r.max_excess(), q);
    Ok(())
}

pub fn prop_build_fair() -> Check {
    run((1..=8usize).prop_flat_map(|n| fair_classifier(n, 0.0, 1.0)), |(m, c)| passes(&m, c.probabilities()))
}

pub fn prop_rtc() -> Check {
    let s = (2..=6usize, 1..=3usize).prop_flat_map(|(n, k)| (vec(fair_classifier(n, 0.0, 1.0), k), vec(0.0..=1.0f64, k)));
    run(s, |(pairs, w)| {
        let total: f64 = w.iter().sum();
        let x: Vec<f64> = if total > 0.0 { w.iter().map(|v| v / total).collect() } else { vec![1.0 / w.len() as f64; w.len()] };
        let (metrics, classifiers): (Vec<TaskMetric>, Vec<SoftClassifier>) = pairs.into_iter().unzip();
        let so = randomize_then_classify(&classifiers, &x).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for r in audit_multiple_task_fairness(&metrics, &so, EPS).unwrap() {
            prop_assert!(r.passes(), "max excess {}", r.max_excess());
        }
        Ok(())
    })
}

pub fn prop_ptc() -> Check {
    let s = (1..=6usize).prop_flat_map(|n| (vec(unit(), n), 1..=n));
    run(s, |(p, n)| {
        let c = SoftClassifier::new(p.clone()).unwrap();
        let exact: Vec<f64> = ptc_selection_probabilities(&c, n, ProbabilityMethod::Exact).unwrap().iter().map(|e| e.mean).collect();
        prop_assert!((exact.iter().sum::<f64>() - n as f64).abs() < 1e-9);
        passes(&TaskMetric::abs_diff(&p).unwrap(), &exact)
    })
}

pub fn prop_ws() -> Check {
    let s = (2..=8usize).prop_flat_map(|n| (vec(unit(), n), 1..=n));
    run(s, |(p, n)| {
        let c = SoftClassifier::new(p.clone()).unwrap();
        let pre = check_ws_precondition(&c, n).unwrap();
        prop_assume!(pre.holds());
        prop_assert!(pre.forms_agree() && pre.lipschitz);
        let probs = ws_selection_probabilities(&c, n).unwrap();
        passes(&TaskMetric::abs_diff(&p).unwrap(), &probs)
    })
}

pub fn prop_copy_behavior() -> Check {
    let s = (2..=7usize).prop_flat_map(|n| (fair_classifier(n, 0.0, 1.0), vec(any::<bool>(), n)));
    run(s, |((m, c), keep)| {
        let external: Vec<Option<f64>> = c.probabilities().iter().zip(&keep).map(|(&p, &k)| k.then_some(p)).collect();
        let ext = copy_behavior_extension(&m, &external).map_err(|e| TestCaseError::fail(e.to_string()))?;
        for (u, e) in external.iter().enumerate() {
            if let Some(p) = e {
                prop_assert_eq!(ext.p(u), *p);
            }
        }
        passes(&m, ext.probabilities())
    })
}

pub fn prop_heavy_or() -> Check {
    let s = (1..=7usize, 2..=4usize).prop_flat_map(|(n, k)| (metric_of(n, unit()), vec((vec(0.5..=1.0f64, n), order_of(n)), k)));
    let cases = runner_with(10 * CASES).run(&s, |(m, parts)| {
        let cs: Vec<SoftClassifier> = parts.iter().map(|(t, o)| build_fair_classifier(&m, t, o).unwrap()).collect();
        for i in 1..=cs.len() {
            prop_assert!(check_heavy_or_of(&cs[..i]).unwrap().heavy);
        }
        passes(&m, &compose_or(&cs).unwrap())
    });
    cases.map(|()| format!("{} cases", 10 * CASES)).map_err(|e| e.to_string())
}

fn nontrivial(n: usize, weights: impl Strategy<Value = f64> + Clone + 'static) -> impl Strategy<Value = TaskMetric> {
    metric_of(n, weights).prop_filter("nontrivial", |m| !m.is_trivial())
}

pub fn prop_functional_witnesses() -> Check {
    run((2..=7usize).prop_flat_map(|n| nontrivial(n, unit())), |m| {
        for (name, w) in [
            ("OR same task", or_same_task_witness(&m)),
            ("OR different counts", or_different_counts_witness(&m)),
            ("AND", and_witness(&m, &m, &m)),
        ] {
            let w = w.map_err(|e| TestCaseError::fail(format!("{name}: {e}")))?;
            prop_assert!(w.pair_excess() > 0.0, "{} excess {}", name, w.pair_excess());
            for c in &w.classifiers {
                passes(&m, c.probabilities())?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone)]
enum Rule {
    First,
    Second,
    Uniform,
    Rho(Vec<f64>),
}

pub fn prop_competitive_witness() -> Check {
    let s = (2..=6usize).prop_flat_map(|n| {
        let rule = prop_oneof![
            Just(Rule::First),
            Just(Rule::Second),
            Just(Rule::Uniform),
            vec(0.0..=1.0f64, n).prop_map(Rule::Rho),
        ];
        (metric_of(n, 0.02..0.98f64), metric_of(n, 0.02..0.98f64), rule)
    });
    run(s, |(first, second, rule)| {
        let tb = match rule {
            Rule::First => TieBreaker::prefer(0, 2),
            Rule::Second => TieBreaker::prefer(1, 2),
            Rule::Uniform => TieBreaker::uniform(2),
            Rule::Rho(r) => TieBreaker::two_task_value(r),
        }
        .unwrap();
        let w = find_violation_witness(&first, &second, &tb, WitnessSearch::default()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(w.excess > 0.0, "excess {}", w.excess);
        prop_assert!(w.reports.iter().any(|r| !r.passes()));
        passes(&first, w.classifiers[0].probabilities())?;
        passes(&second, w.classifiers[1].probabilities())
    })
}

/// Full product of attribute, first-task stratum and second-task stratum,
/// each cell repeated `copies` times.
fn product_groups(attrs: u32, z1: u32, z2: u32, copies: usize) -> (GroupStructure, GroupStructure) {
    let (mut a, mut s1, mut s2) = (Vec::new(), Vec::new(), Vec::new());
    for x in 0..attrs {
        for y in 0..z1 {
            for z in 0..z2 {
                for _ in 0..copies {
                    a.push(x);
                    s1.push(y);
                    s2.push(z);
                }
            }
        }
    }
    (GroupStructure::new(a.clone(), s1).unwrap(), GroupStructure::new(a, s2).unwrap())
}

pub fn prop_unrelated_groups() -> Check {
    let s = (2..=3u32, 1..=3u32, 1..=3u32, 1..=3usize).prop_flat_map(|(a, z1, z2, copies)| {
        (Just((a, z1, z2, copies)), vec(0.0..=1.0f64, z1 as usize), vec(0.0..=1.0f64, z2 as usize), 0.0..=1.0f64)
    });
    run(s, |((a, z1, z2, copies), v1, v2, rho)| {
        let (g1, g2) = product_groups(a, z1, z2, copies);
        prop_assert!(check_unrelated_tasks(&g1, &g2, EPS).unwrap().unrelated);
        let n = g1.len();
        let c1 = SoftClassifier::new(g1.stratum.iter().map(|&z| v1[z as usize]).collect()).unwrap();
        let c2 = SoftClassifier::new(g2.stratum.iter().map(|&z| v2[z as usize]).collect()).unwrap();
        let tb = TieBreaker::two_task_value(vec![rho; n]).unwrap();
        let r = multi_task_parity_residual(&[c1, c2], &tb, &g1, &g2, EPS).unwrap();
        prop_assert!(r.max_residual() <= EPS, "residual {}", r.max_residual());
        Ok(())
    })
}

// Whether the share of the other task's strata differs between two groups
// inside one of this task's strata, by exact counts.
fn unbalanced(g: &GroupStructure, other: &GroupStructure) -> bool {
    let zos: BTreeSet<u32> = other.stratum.iter().copied().collect();
    for (_, by_attr) in g.cells() {
        let cells: Vec<&Vec<usize>> = by_attr.values().collect();
        for &zo in &zos {
            let hits: Vec<(usize, usize)> = cells.iter().map(|m| (m.iter().filter(|&&u| other.stratum[u] == zo).count(), m.len())).collect();
            if hits.windows(2).any(|w| w[0].0 * w[1].1 != w[1].0 * w[0].1) {
                return true;
            }
        }
    }
    false
}

pub fn prop_alpha_witness() -> Check {
    let s = (4..=12usize).prop_flat_map(|n| (vec(0..2u32, n), vec(0..2u32, n), vec(0..2u32, n), 0.1..0.9f64, 0.05..0.7f64));
    run(s, |(attr, z1, z2, rho, alpha)| {
        let g1 = GroupStructure::new(attr.clone(), z1).unwrap();
        let g2 = GroupStructure::new(attr, z2).unwrap();
        let tb = TieBreaker::two_task_value(vec![rho; g1.len()]).unwrap();
        let expect = unbalanced(&g1, &g2) || unbalanced(&g2, &g1);
        match alpha_perturbation_witness(&tb, &g1, &g2, alpha) {
            Ok(w) => {
                prop_assert!(expect, "witness found on a balanced population");
                let alone = [&g1, &g2];
                for (c, g) in w.classifiers.iter().zip(alone) {
                    let report = faircomp::model::audit_conditional_parity(g, c.probabilities(), EPS).unwrap();
                    prop_assert!(report.passes());
                }
                prop_assert!(w.report.max_residual() > EPS, "residual {}", w.report.max_residual());
            }
            Err(Error::Infeasible(_)) => prop_assert!(!expect, "no witness on an unbalanced population"),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
        Ok(())
    })
}

pub fn prop_online_unknown_length() -> Check {
    let s = (1..=8usize).prop_flat_map(|n| (vec(unit(), n), order_of(n), 1..=n, any::<u64>()));
    run(s, |(p, stream, n, seed)| {
        let c = SoftClassifier::new(p).unwrap();
        let spec = CohortSpec::new(n, CohortMode::OnlineAdversarialUnknownLength).unwrap();
        let got = online_cohort(spec, &c, &stream, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(matches!(got, Err(Error::Infeasible(_))));
        Ok(())
    })
}
