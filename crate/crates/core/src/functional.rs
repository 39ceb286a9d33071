//! Logical composition of independent classifiers: OR, AND, exactly-one and
//! at-least-k, plus the heavy-OR safety check and the witnesses showing how
//! OR and AND composition break individual fairness.

use serde::{Deserialize, Serialize};

use crate::construct::{anchored_classifier, ceil_within, floor_within};
use crate::error::{ensure_len, Error, Result};
use crate::model::{audit_individual_fairness, FairnessReport, SoftClassifier, TaskMetric, DEFAULT_EPSILON};

fn common_len(classifiers: &[SoftClassifier]) -> Result<usize> {
    let first = classifiers
        .first()
        .ok_or_else(|| Error::InvalidArgument("need at least one classifier".into()))?;
    for c in &classifiers[1..] {
        ensure_len(first.len(), c.len(), "composed classifier")?;
    }
    Ok(first.len())
}

fn per_element(classifiers: &[SoftClassifier], f: impl Fn(&mut dyn Iterator<Item = f64>) -> f64) -> Result<Vec<f64>> {
    let n = common_len(classifiers)?;
    Ok((0..n)
        .map(|u| f(&mut classifiers.iter().map(|c| c.p(u))))
        .collect())
}

/// Probability that at least one classifier is positive.
pub fn compose_or(classifiers: &[SoftClassifier]) -> Result<Vec<f64>> {
    per_element(classifiers, |ps| ps.fold(0.0, |acc, p| acc + p - acc * p))
}

/// Probability that every classifier is positive.
pub fn compose_and(classifiers: &[SoftClassifier]) -> Result<Vec<f64>> {
    per_element(classifiers, |ps| ps.product())
}

/// Probability that exactly one classifier is positive.
pub fn compose_xor_exactly_one(classifiers: &[SoftClassifier]) -> Result<Vec<f64>> {
    per_element(classifiers, |ps| {
        // (none, exactly one)
        let (_, one) = ps.fold((1.0, 0.0), |(none, one), p| (none * (1.0 - p), one * (1.0 - p) + none * p));
        one
    })
}

/// Distribution of the number of successes among independent Bernoullis.
pub fn success_count_distribution(ps: &[f64]) -> Vec<f64> {
    let mut dist = vec![0.0; ps.len() + 1];
    dist[0] = 1.0;
    for (i, &p) in ps.iter().enumerate() {
        for c in (0..=i + 1).rev() {
            let stay = dist[c] * (1.0 - p);
            let up = if c > 0 { dist[c - 1] * p } else { 0.0 };
            dist[c] = stay + up;
        }
    }
    dist
}

/// Probability that at least `k` classifiers are positive.
pub fn compose_threshold(classifiers: &[SoftClassifier], k: usize) -> Result<Vec<f64>> {
    let count = classifiers.len();
    if k == 0 || k > count {
        return Err(Error::InvalidArgument(format!(
            "threshold {k} outside 1..={count}"
        )));
    }
    let n = common_len(classifiers)?;
    Ok((0..n)
        .map(|u| {
            let ps: Vec<f64> = classifiers.iter().map(|c| c.p(u)).collect();
            success_count_distribution(&ps)[k..].iter().sum::<f64>().min(1.0)
        })
        .collect())
}

/// OR of one classifier applied `times[u]` times to element `u`.
pub fn compose_or_repeated(c: &SoftClassifier, times: &[usize]) -> Result<Vec<f64>> {
    ensure_len(c.len(), times.len(), "repetition counts")?;
    Ok(c.probabilities()
        .iter()
        .zip(times)
        .map(|(&p, &t)| 1.0 - (1.0 - p).powi(t as i32))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyOrCheck {
    pub heavy: bool,
    /// First element whose OR-probability is below one half.
    pub witness: Option<usize>,
}

/// True iff every element has OR-probability at least one half.
pub fn check_heavy_or(composed: &[f64]) -> HeavyOrCheck {
    let witness = composed.iter().position(|&p| p < 0.5);
    HeavyOrCheck {
        heavy: witness.is_none(),
        witness,
    }
}

pub fn check_heavy_or_of(classifiers: &[SoftClassifier]) -> Result<HeavyOrCheck> {
    Ok(check_heavy_or(&compose_or(classifiers)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrGrouping {
    /// Index groups in input order, each a heavy OR.
    Grouped(Vec<Vec<usize>>),
    /// The trailing `residual` never reached one half.
    Failed { groups: Vec<Vec<usize>>, residual: Vec<usize> },
}

/// Greedy left-to-right grouping into an OR of heavy ORs.
pub fn group_into_heavy_ors(classifiers: &[SoftClassifier]) -> Result<OrGrouping> {
    let n = common_len(classifiers)?;
    let mut groups = Vec::new();
    let mut current = Vec::new();
    let mut miss = vec![1.0; n];
    for (i, c) in classifiers.iter().enumerate() {
        current.push(i);
        for (m, &p) in miss.iter_mut().zip(c.probabilities()) {
            *m *= 1.0 - p;
        }
        if miss.iter().all(|&m| 1.0 - m >= 0.5) {
            groups.push(std::mem::take(&mut current));
            miss.iter_mut().for_each(|m| *m = 1.0);
        }
    }
    if current.is_empty() {
        Ok(OrGrouping::Grouped(groups))
    } else {
        Ok(OrGrouping::Failed {
            groups,
            residual: current,
        })
    }
}

/// A composed outcome that breaks a fairness audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionWitness {
    pub pair: (usize, usize),
    pub classifiers: Vec<SoftClassifier>,
    pub composed: Vec<f64>,
    pub report: FairnessReport,
}

impl CompositionWitness {
    pub fn pair_excess(&self) -> f64 {
        let (u, v) = self.pair;
        self.report
            .violations
            .iter()
            .find(|x| x.subject == crate::model::Subject::Pair { u: u.min(v), v: u.max(v) })
            .map_or(0.0, |x| x.excess)
    }
}

/// First pair (lexicographically) with a distance strictly between 0 and 1.
pub fn nontrivial_pair(m: &TaskMetric) -> Result<(usize, usize)> {
    let n = m.size();
    (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .find(|&(u, v)| {
            let d = m.get(u, v);
            d > 0.0 && d < 1.0
        })
        .ok_or(Error::TrivialMetric)
}

/// Two copies of one fair classifier, OR-composed, where the pair gap was
/// already at its limit and the pair's probabilities sum below one.
pub fn or_same_task_witness(m: &TaskMetric) -> Result<CompositionWitness> {
    let (u, v) = nontrivial_pair(m)?;
    let c = anchored_classifier(m, &[(u, m.get(u, v)), (v, 0.0)])?;
    let composed = compose_or(&[c.clone(), c.clone()])?;
    let report = audit_individual_fairness(m, &composed, DEFAULT_EPSILON)?;
    Ok(CompositionWitness {
        pair: (u, v),
        classifiers: vec![c.clone(), c],
        composed,
        report,
    })
}

/// One fair classifier applied once to `u` and twice to everyone else.
pub fn or_different_counts_witness(m: &TaskMetric) -> Result<CompositionWitness> {
    let (u, v) = nontrivial_pair(m)?;
    let c = anchored_classifier(m, &[(u, 0.0), (v, m.get(u, v))])?;
    let mut times = vec![2; m.size()];
    times[u] = 1;
    let composed = compose_or_repeated(&c, &times)?;
    let report = audit_individual_fairness(m, &composed, DEFAULT_EPSILON)?;
    Ok(CompositionWitness {
        pair: (u, v),
        classifiers: vec![c],
        composed,
        report,
    })
}

/// Two classifiers, each fair for its own task, whose AND breaks fairness
/// under `outcome`. Needs a pair positive under both task metrics with the
/// outcome distance no larger than either.
pub fn and_witness(first: &TaskMetric, second: &TaskMetric, outcome: &TaskMetric) -> Result<CompositionWitness> {
    let n = first.size();
    ensure_len(n, second.size(), "second task metric")?;
    ensure_len(n, outcome.size(), "outcome metric")?;
    let pair = (0..n)
        .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
        .find(|&(u, v)| {
            let (a, b, o) = (first.get(u, v), second.get(u, v), outcome.get(u, v));
            a > 0.0 && b > 0.0 && o <= a && o <= b && o < 1.0
        })
        .ok_or_else(|| Error::Infeasible("no pair is positive under both tasks and no farther under the outcome metric".into()))?;
    let (u, v) = pair;
    let (a, b, o) = (first.get(u, v), second.get(u, v), outcome.get(u, v));
    let ones = SoftClassifier::constant(n, 1.0)?;
    let classifiers = if a > o {
        vec![anchored_classifier(first, &[(u, a), (v, 0.0)])?, ones]
    } else if b > o {
        vec![ones, anchored_classifier(second, &[(u, b), (v, 0.0)])?]
    } else {
        let pv = (1.0 - o) / 2.0;
        vec![
            anchored_classifier(first, &[(u, ceil_within(pv, o)), (v, pv)])?,
            anchored_classifier(second, &[(u, 1.0), (v, floor_within(1.0, o))])?,
        ]
    };
    let composed = compose_and(&classifiers)?;
    let report = audit_individual_fairness(outcome, &composed, DEFAULT_EPSILON)?;
    Ok(CompositionWitness {
        pair,
        classifiers,
        composed,
        report,
    })
}
