//! Single-slot composition of several tasks: tie-breaking, exact
//! task-competitive outcomes, RandomizeThenClassify and witness search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::anchored_classifier;
use crate::error::{ensure_len, Error, Result};
use crate::model::{audit_individual_fairness, FairnessReport, SoftClassifier, SystemOutcome, TaskMetric};

/// Largest task count for which outcomes are enumerated exactly.
pub const MAX_COMPETING_TASKS: usize = 20;

const DISTRIBUTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TieRule {
    /// The first task in the list that came back positive wins.
    StrictOrder(Vec<usize>),
    /// Uniform over the positive tasks.
    Uniform,
    /// Two tasks; `rho[u]` is the chance of picking task 0 when both are
    /// positive.
    TwoTask(Vec<f64>),
    /// Choice proportional to `weights[u][task]` among the positive tasks.
    Weighted(Vec<Vec<f64>>),
}

/// Per-element rule choosing one task among simultaneous positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieBreaker {
    k: usize,
    rule: TieRule,
}

impl TieBreaker {
    pub fn strict_order(order: Vec<usize>) -> Result<Self> {
        let k = order.len();
        let mut seen = vec![false; k];
        for &t in &order {
            if t >= k || std::mem::replace(&mut seen[t], true) {
                return Err(Error::InvalidArgument("strict order must be a permutation of the tasks".into()));
            }
        }
        Ok(Self {
            k,
            rule: TieRule::StrictOrder(order),
        })
    }

    /// Task `task` always wins (out of `k`); ties among the rest go by index.
    pub fn prefer(task: usize, k: usize) -> Result<Self> {
        if task >= k {
            return Err(Error::InvalidArgument(format!("task {task} out of range")));
        }
        let mut order = vec![task];
        order.extend((0..k).filter(|&t| t != task));
        Self::strict_order(order)
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one task".into()));
        }
        Ok(Self { k, rule: TieRule::Uniform })
    }

    pub fn two_task_value(rho: Vec<f64>) -> Result<Self> {
        for (u, &r) in rho.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::ProbabilityOutOfRange { index: u, value: r });
            }
        }
        Ok(Self {
            k: 2,
            rule: TieRule::TwoTask(rho),
        })
    }

    pub fn weighted(weights: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::InvalidArgument("need at least one task".into()));
        }
        for row in &weights {
            ensure_len(k, row.len(), "tie-break weights")?;
            if row.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
                return Err(Error::InvalidArgument("tie-break weights must be positive".into()));
            }
        }
        Ok(Self {
            k,
            rule: TieRule::Weighted(weights),
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.k
    }

    pub fn rule(&self) -> &TieRule {
        &self.rule
    }

    pub fn check_universe(&self, n: usize) -> Result<()> {
        match &self.rule {
            TieRule::TwoTask(rho) => ensure_len(n, rho.len(), "tie-break values"),
            TieRule::Weighted(w) => ensure_len(n, w.len(), "tie-break weights"),
            _ => Ok(()),
        }
    }

    /// Probability that element `u` is assigned `task` given the set of
    /// positive tasks `mask`. Zero unless `task` is in the mask.
    pub fn choice_probability(&self, u: usize, mask: u32, task: usize) -> f64 {
        if mask & (1 << task) == 0 {
            return 0.0;
        }
        match &self.rule {
            TieRule::StrictOrder(order) => {
                let first = order.iter().find(|&&t| mask & (1 << t) != 0);
                if first == Some(&task) {
                    1.0
                } else {
                    0.0
                }
            }
            TieRule::Uniform => 1.0 / mask.count_ones() as f64,
            TieRule::TwoTask(rho) => match (mask, task) {
                (3, 0) => rho[u],
                (3, _) => 1.0 - rho[u],
                _ => 1.0,
            },
            TieRule::Weighted(w) => {
                let total: f64 = (0..self.k).filter(|&t| mask & (1 << t) != 0).map(|t| w[u][t]).sum();
                w[u][task] / total
            }
        }
    }

    /// `Pr[task 0 | both positive]` for two-task rules.
    pub fn two_task_rho(&self, u: usize) -> Result<f64> {
        if self.k != 2 {
            return Err(Error::InvalidArgument("two-task rule needs exactly two tasks".into()));
        }
        Ok(self.choice_probability(u, 3, 0))
    }
}

fn check_classifiers(classifiers: &[SoftClassifier]) -> Result<usize> {
    let first = classifiers
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one classifier".into()))?;
    for c in &classifiers[1..] {
        ensure_len(first.len(), c.len(), "competing classifier")?;
    }
    Ok(first.len())
}

/// Probability of every positive-set mask for one element.
fn mask_probabilities(ps: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0];
    for (j, &p) in ps.iter().enumerate() {
        let bit = 1usize << j;
        out.resize(bit << 1, 0.0);
        for m in 0..bit {
            let base = out[m];
            out[m] = base * (1.0 - p);
            out[m | bit] = base * p;
        }
    }
    out
}

/// Exact per-task outcome when each element keeps at most one positive,
/// chosen by `tb` among its positive classifications.
pub fn compose_competitive(classifiers: &[SoftClassifier], tb: &TieBreaker) -> Result<SystemOutcome> {
    let n = check_classifiers(classifiers)?;
    let k = classifiers.len();
    if k > MAX_COMPETING_TASKS {
        return Err(Error::TooLarge {
            what: "competitive composition",
            limit: MAX_COMPETING_TASKS,
            actual: k,
        });
    }
    ensure_len(k, tb.num_tasks(), "tie-breaker task count")?;
    tb.check_universe(n)?;
    let mut probs = Vec::with_capacity(n * k);
    for u in 0..n {
        let ps: Vec<f64> = classifiers.iter().map(|c| c.p(u)).collect();
        let masks = mask_probabilities(&ps);
        let mut row = vec![0.0; k];
        for (mask, &w) in masks.iter().enumerate().skip(1) {
            if w == 0.0 {
                continue;
            }
            for (t, slot) in row.iter_mut().enumerate() {
                if mask & (1 << t) != 0 {
                    *slot += w * tb.choice_probability(u, mask as u32, t);
                }
            }
        }
        probs.extend(row.into_iter().map(|x| x.clamp(0.0, 1.0)));
    }
    SystemOutcome::from_flat(n, k, probs, true)
}

/// Pick a task from `x`, then run only that task's classifier:
/// `probs[u][i] = x[i] * p_i[u]`.
pub fn randomize_then_classify(classifiers: &[SoftClassifier], x: &[f64]) -> Result<SystemOutcome> {
    let n = check_classifiers(classifiers)?;
    let k = classifiers.len();
    ensure_len(k, x.len(), "task distribution")?;
    for (i, &xi) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&xi) {
            return Err(Error::ProbabilityOutOfRange { index: i, value: xi });
        }
    }
    let total: f64 = x.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::InvalidArgument(format!("task distribution sums to {total}")));
    }
    let mut probs = Vec::with_capacity(n * k);
    for u in 0..n {
        for (c, &xi) in classifiers.iter().zip(x) {
            probs.push(xi * c.p(u));
        }
    }
    SystemOutcome::from_flat(n, k, probs, true)
}

/// One individual-fairness report per task, column by column.
pub fn audit_multiple_task_fairness(metrics: &[TaskMetric], so: &SystemOutcome, epsilon: f64) -> Result<Vec<FairnessReport>> {
    ensure_len(so.num_tasks(), metrics.len(), "task metrics")?;
    metrics
        .iter()
        .enumerate()
        .map(|(t, m)| audit_individual_fairness(m, &so.task(t), epsilon))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessSearch {
    /// Grid steps per parameter.
    pub resolution: usize,
    /// Most candidate pairs examined (closest pairs first).
    pub max_pairs: usize,
    /// Score only this task's excess; both tasks when `None`.
    pub task: Option<usize>,
}

impl Default for WitnessSearch {
    fn default() -> Self {
        Self {
            resolution: 10,
            max_pairs: 64,
            task: None,
        }
    }
}

/// Two fair classifiers and the composed outcome that breaks one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveWitness {
    pub pair: (usize, usize),
    pub classifiers: Vec<SoftClassifier>,
    pub outcome: SystemOutcome,
    pub reports: Vec<FairnessReport>,
    /// Largest excess over both tasks (may be zero or negative when no
    /// violation was found).
    pub excess: f64,
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    excess: f64,
    // (p_u, p_v, p'_u, p'_v)
    values: [f64; 4],
}

fn two_task_outcome(p: f64, q: f64, rho: f64) -> (f64, f64) {
    (p * (1.0 - q) + p * q * rho, q * (1.0 - p) + p * q * (1.0 - rho))
}

fn grid_values(d: f64, g: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity((g + 1) * (g + 1));
    for i in 0..=g {
        let base = i as f64 / g as f64;
        for j in 0..=g {
            let s = -1.0 + 2.0 * j as f64 / g as f64;
            let mut partner = (base + s * d).clamp(0.0, 1.0);
            if (partner - base).abs() > d {
                partner = if partner > base {
                    crate::construct::ceil_within(base, d)
                } else {
                    crate::construct::floor_within(base, d)
                };
            }
            out.push((base, partner));
        }
    }
    out
}

fn best_for_pair(first: &TaskMetric, second: &TaskMetric, tb: &TieBreaker, u: usize, v: usize, search: WitnessSearch) -> Candidate {
    let g = search.resolution;
    let (d, d2) = (first.get(u, v), second.get(u, v));
    let (ru, rv) = (tb.choice_probability(u, 3, 0), tb.choice_probability(v, 3, 0));
    let a = grid_values(d, g);
    let b = grid_values(d2, g);
    let mut best = Candidate {
        excess: f64::NEG_INFINITY,
        values: [0.0; 4],
    };
    for &(pu, pv) in &a {
        for &(qu, qv) in &b {
            let (tu, su) = two_task_outcome(pu, qu, ru);
            let (tv, sv) = two_task_outcome(pv, qv, rv);
            let (e0, e1) = ((tu - tv).abs() - d, (su - sv).abs() - d2);
            let excess = match search.task {
                Some(0) => e0,
                Some(_) => e1,
                None => e0.max(e1),
            };
            if excess > best.excess {
                best = Candidate {
                    excess,
                    values: [pu, pv, qu, qv],
                };
            }
        }
    }
    best
}

/// Searches fair two-task classifier pairs for the largest violation the
/// competitive composition under `tb` produces.
///
/// For each candidate pair of elements, a grid over both tasks' pair
/// probabilities is scored by the closed-form two-task outcome; the best
/// setting is then extended to full fair classifiers and audited.
pub fn find_violation_witness(
    first: &TaskMetric,
    second: &TaskMetric,
    tb: &TieBreaker,
    search: WitnessSearch,
) -> Result<CompetitiveWitness> {
    let n = first.size();
    ensure_len(n, second.size(), "second task metric")?;
    if first.is_trivial() || second.is_trivial() {
        return Err(Error::TrivialMetric);
    }
    if tb.num_tasks() != 2 {
        return Err(Error::InvalidArgument("witness search needs a two-task tie-breaker".into()));
    }
    tb.check_universe(n)?;
    if matches!(search.task, Some(t) if t > 1) {
        return Err(Error::InvalidArgument("task must be 0 or 1".into()));
    }
    if search.resolution == 0 || search.max_pairs == 0 {
        return Err(Error::InvalidArgument("search budget must be positive".into()));
    }
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("universe needs at least two elements".into()));
    }
    pairs.sort_by(|a, b| {
        let ka = first.get(a.0, a.1) + second.get(a.0, a.1);
        let kb = first.get(b.0, b.1) + second.get(b.0, b.1);
        ka.total_cmp(&kb).then(a.cmp(b))
    });
    pairs.truncate(search.max_pairs);
    let scored: Vec<((usize, usize), Candidate)> = pairs
        .par_iter()
        .map(|&(u, v)| ((u, v), best_for_pair(first, second, tb, u, v, search)))
        .collect();
    let mut best = scored[0];
    for &c in &scored[1..] {
        if c.1.excess > best.1.excess {
            best = c;
        }
    }
    let ((u, v), cand) = best;
    let [pu, pv, qu, qv] = cand.values;
    let classifiers = vec![
        anchored_classifier(first, &[(u, pu), (v, pv)])?,
        anchored_classifier(second, &[(u, qu), (v, qv)])?,
    ];
    let outcome = compose_competitive(&classifiers, tb)?;
    let reports = audit_multiple_task_fairness(&[first.clone(), second.clone()], &outcome, crate::model::DEFAULT_EPSILON)?;
    let excess = match search.task {
        Some(t) => reports[t].max_excess().max(cand.excess),
        None => reports.iter().map(FairnessReport::max_excess).fold(cand.excess, f64::max),
    };
    Ok(CompetitiveWitness {
        pair: (u, v),
        classifiers,
        outcome,
        reports,
        excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(p: &[f64]) -> SoftClassifier {
        SoftClassifier::new(p.to_vec()).unwrap()
    }

    #[test]
    fn strict_preference_two_tasks() {
        let so = compose_competitive(&[sc(&[0.6]), sc(&[0.5])], &TieBreaker::prefer(0, 2).unwrap()).unwrap();
        assert!((so.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((so.get(0, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn general_rho_formula() {
        let (p, q, rho) = (0.7, 0.4, 0.3);
        let so = compose_competitive(&[sc(&[p]), sc(&[q])], &TieBreaker::two_task_value(vec![rho]).unwrap()).unwrap();
        assert!((so.get(0, 0) - (p * (1.0 - q) + p * q * rho)).abs() < 1e-15);
        assert!((so.get(0, 1) - (q * (1.0 - p) + p * q * (1.0 - rho))).abs() < 1e-15);
    }

    #[test]
    fn single_task_is_identity() {
        let c = sc(&[0.1, 0.37, 1.0]);
        for tb in [TieBreaker::uniform(1).unwrap(), TieBreaker::prefer(0, 1).unwrap()] {
            assert_eq!(compose_competitive(&[c.clone()], &tb).unwrap().task(0), c.probabilities());
        }
    }

    #[test]
    fn conservation() {
        let cs = [sc(&[0.3, 0.9]), sc(&[0.5, 0.2]), sc(&[0.8, 0.6])];
        let so = compose_competitive(&cs, &TieBreaker::uniform(3).unwrap()).unwrap();
        for u in 0..2 {
            let none: f64 = cs.iter().map(|c| 1.0 - c.p(u)).product();
            let total: f64 = so.row(u).iter().sum::<f64>() + none;
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_many_tasks() {
        let cs = vec![sc(&[0.5]); 21];
        let err = compose_competitive(&cs, &TieBreaker::uniform(21).unwrap()).unwrap_err();
        assert!(matches!(err, Error::TooLarge { .. }));
    }

    #[test]
    fn rtc_examples() {
        let so = randomize_then_classify(&[sc(&[0.6]), sc(&[0.4])], &[0.5, 0.5]).unwrap();
        assert_eq!(so.row(0), &[0.3, 0.2]);
        let so = randomize_then_classify(&[sc(&[0.6]), sc(&[0.4])], &[1.0, 0.0]).unwrap();
        assert_eq!(so.row(0), &[0.6, 0.0]);
        assert!(randomize_then_classify(&[sc(&[0.6]), sc(&[0.4])], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn strict_order_breaks_zero_distance_task() {
        // D'(u,v) = 0, p_u != p_v, p'_u = p'_v
        let d1 = TaskMetric::abs_diff(&[0.2, 0.5]).unwrap();
        let d2 = TaskMetric::zeros(2);
        let cs = [sc(&[0.2, 0.5]), sc(&[0.6, 0.6])];
        let so = compose_competitive(&cs, &TieBreaker::prefer(0, 2).unwrap()).unwrap();
        let reports = audit_multiple_task_fairness(&[d1, d2], &so, 1e-9).unwrap();
        assert!(reports[0].passes());
        assert!((reports[1].max_excess() - 0.3 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn witness_search_strict() {
        let d1 = TaskMetric::abs_diff(&[0.2, 0.5, 0.9]).unwrap();
        let d2 = TaskMetric::abs_diff(&[0.3, 0.3, 0.7]).unwrap();
        let w = find_violation_witness(&d1, &d2, &TieBreaker::prefer(0, 2).unwrap(), WitnessSearch::default()).unwrap();
        assert!(w.excess > 0.0);
        assert!(w.reports[1].max_excess() > 0.0);
        for (c, m) in w.classifiers.iter().zip([&d1, &d2]) {
            assert!(audit_individual_fairness(m, c.probabilities(), 0.0).unwrap().passes());
        }
    }

    #[test]
    fn witness_search_rejects_trivial_metrics() {
        let t = TaskMetric::uniform(3, 1.0).unwrap();
        let d = TaskMetric::abs_diff(&[0.1, 0.2, 0.3]).unwrap();
        let tb = TieBreaker::uniform(2).unwrap();
        assert_eq!(find_violation_witness(&t, &d, &tb, WitnessSearch::default()).unwrap_err(), Error::TrivialMetric);
    }

    #[test]
    fn witness_search_equal_rho_hits_both_tasks() {
        let d = TaskMetric::abs_diff(&[0.1, 0.35, 0.6, 0.8]).unwrap();
        let tb = TieBreaker::two_task_value(vec![0.5; 4]).unwrap();
        for task in 0..2 {
            let search = WitnessSearch {
                task: Some(task),
                ..WitnessSearch::default()
            };
            let w = find_violation_witness(&d, &d, &tb, search).unwrap();
            assert!(w.reports[task].max_excess() > 0.0);
        }
    }
}
