//! Universe, task metrics, classifiers, composed outcomes and the two base
//! auditors (individual fairness and conditional parity).
//!
//! Outcomes are binary throughout, so the distance between two elements'
//! outcome distributions is simply `|p_u - p_v|`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};

/// Audit tolerance used when the caller has no better value. Absorbs
/// floating-point noise only.
pub const DEFAULT_EPSILON: f64 = 1e-9;

/// Slack allowed when checking metric axioms on floating-point input.
pub const METRIC_TOLERANCE: f64 = 1e-12;

/// Row-sum slack for single-slot outcomes.
pub const SINGLE_SLOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    size: usize,
    labels: Option<Vec<String>>,
}

impl Universe {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("universe must be nonempty".into()));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut u = Self::new(labels.len())?;
        u.labels = Some(labels);
        Ok(u)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn label(&self, id: usize) -> String {
        match &self.labels {
            Some(l) => l[id].clone(),
            None => id.to_string(),
        }
    }

    pub fn ids(&self) -> std::ops::Range<usize> {
        0..self.size
    }
}

/// A constraint a candidate metric fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetricViolation {
    Range { u: usize, v: usize, value: f64 },
    Diagonal { u: usize, value: f64 },
    Symmetry { u: usize, v: usize, forward: f64, backward: f64 },
    /// `dist[u][w] > dist[u][v] + dist[v][w]`
    Triangle { u: usize, v: usize, w: usize, direct: f64, via: f64 },
}

impl fmt::Display for MetricViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricViolation::Range { u, v, value } => {
                write!(f, "dist({u},{v}) = {value} outside [0,1]")
            }
            MetricViolation::Diagonal { u, value } => write!(f, "dist({u},{u}) = {value} != 0"),
            MetricViolation::Symmetry {
                u,
                v,
                forward,
                backward,
            } => write!(f, "dist({u},{v}) = {forward} but dist({v},{u}) = {backward}"),
            MetricViolation::Triangle {
                u,
                v,
                w,
                direct,
                via,
            } => write!(f, "dist({u},{w}) = {direct} > {via} via {v}"),
        }
    }
}

/// Pairwise task dissimilarity in `[0,1]`; the fairness budget for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetric {
    n: usize,
    dist: Vec<f64>,
}

impl TaskMetric {
    /// Builds a metric and rejects it unless every axiom holds (including
    /// the triangle inequality).
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::from_rows_unchecked(rows)?;
        m.into_validated()
    }

    /// Only checks the shape. Use [`validate_metric`] to inspect the result.
    pub fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("metric must be nonempty".into()));
        }
        let mut dist = Vec::with_capacity(n * n);
        for row in rows {
            ensure_len(n, row.len(), "metric row")?;
            dist.extend(row);
        }
        Ok(Self { n, dist })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("metric must be nonempty".into()));
        }
        let mut dist = Vec::with_capacity(n * n);
        for u in 0..n {
            for v in 0..n {
                dist.push(if u == v { 0.0 } else { f(u, v) });
            }
        }
        Self { n, dist }.into_validated()
    }

    /// `|x_u - x_v|` for values in `[0,1]`. Always a valid metric.
    pub fn abs_diff(values: &[f64]) -> Result<Self> {
        for (i, &x) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::ProbabilityOutOfRange { index: i, value: x });
            }
        }
        Self::from_fn(values.len(), |u, v| (values[u] - values[v]).abs())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            dist: vec![0.0; n * n],
        }
    }

    /// Every off-diagonal entry equal to `d`.
    pub fn uniform(n: usize, d: f64) -> Result<Self> {
        Self::from_fn(n, |_, _| d)
    }

    fn into_validated(self) -> Result<Self> {
        let violations = validate_metric(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidMetric(violations))
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.dist[u * self.n + v]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.dist[u * self.n..(u + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// True iff every distance is exactly 0 or 1.
    pub fn is_trivial(&self) -> bool {
        self.dist.iter().all(|&d| d == 0.0 || d == 1.0)
    }

    /// Restricts the metric to `ids` (in the given order).
    pub fn restrict(&self, ids: &[usize]) -> Self {
        let k = ids.len();
        let mut dist = Vec::with_capacity(k * k);
        for &u in ids {
            for &v in ids {
                dist.push(self.get(u, v));
            }
        }
        Self { n: k, dist }
    }
}

/// Returns every range, diagonal, symmetry and triangle violation. Empty
/// means the matrix is a valid pseudometric bounded by 1.
pub fn validate_metric(m: &TaskMetric) -> Vec<MetricViolation> {
    let n = m.n;
    let mut out = Vec::new();
    for u in 0..n {
        let d = m.get(u, u);
        if d != 0.0 {
            out.push(MetricViolation::Diagonal { u, value: d });
        }
        for v in 0..n {
            let d = m.get(u, v);
            if !(0.0..=1.0).contains(&d) {
                out.push(MetricViolation::Range { u, v, value: d });
            }
        }
        for v in (u + 1)..n {
            let (a, b) = (m.get(u, v), m.get(v, u));
            if (a - b).abs() > METRIC_TOLERANCE {
                out.push(MetricViolation::Symmetry {
                    u,
                    v,
                    forward: a,
                    backward: b,
                });
            }
        }
    }
    for u in 0..n {
        for w in (u + 1)..n {
            let direct = m.get(u, w);
            for v in 0..n {
                if v == u || v == w {
                    continue;
                }
                let via = m.get(u, v) + m.get(v, w);
                if direct > via + METRIC_TOLERANCE {
                    out.push(MetricViolation::Triangle {
                        u,
                        v,
                        w,
                        direct,
                        via,
                    });
                }
            }
        }
    }
    out
}

/// Per-element probability of a positive outcome for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftClassifier {
    p: Vec<f64>,
}

impl SoftClassifier {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        check_probabilities(&p)?;
        Ok(Self { p })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    #[inline]
    pub fn p(&self, u: usize) -> f64 {
        self.p[u]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.p
    }

    /// Expected number of positive outcomes.
    pub fn allocation(&self) -> f64 {
        self.p.iter().sum()
    }

    /// `1 - p` elementwise.
    pub fn complement(&self) -> Self {
        Self {
            p: self.p.iter().map(|x| 1.0 - x).collect(),
        }
    }
}

pub(crate) fn check_probabilities(p: &[f64]) -> Result<()> {
    for (i, &x) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::ProbabilityOutOfRange { index: i, value: x });
        }
    }
    Ok(())
}

/// `probs[u][i]` = probability that element `u` ends up positive for task `i`
/// after composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutcome {
    n: usize,
    k: usize,
    probs: Vec<f64>,
    single_slot: bool,
}

impl SystemOutcome {
    pub fn new(rows: Vec<Vec<f64>>, single_slot: bool) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        let mut probs = Vec::with_capacity(n * k);
        for row in rows {
            ensure_len(k, row.len(), "outcome row")?;
            probs.extend(row);
        }
        Self::from_flat(n, k, probs, single_slot)
    }

    pub(crate) fn from_flat(n: usize, k: usize, probs: Vec<f64>, single_slot: bool) -> Result<Self> {
        ensure_len(n * k, probs.len(), "outcome matrix")?;
        check_probabilities(&probs)?;
        if single_slot {
            for u in 0..n {
                let s: f64 = probs[u * k..(u + 1) * k].iter().sum();
                if s > 1.0 + SINGLE_SLOT_TOLERANCE {
                    return Err(Error::InvalidArgument(format!(
                        "single-slot row {u} sums to {s} > 1"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            k,
            probs,
            single_slot,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.n
    }

    pub fn num_tasks(&self) -> usize {
        self.k
    }

    pub fn is_single_slot(&self) -> bool {
        self.single_slot
    }

    #[inline]
    pub fn get(&self, u: usize, task: usize) -> f64 {
        self.probs[u * self.k + task]
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.probs[u * self.k..(u + 1) * self.k]
    }

    pub fn task(&self, task: usize) -> Vec<f64> {
        (0..self.n).map(|u| self.get(u, task)).collect()
    }

    /// Expected number of positives issued for `task`.
    pub fn allocation(&self, task: usize) -> f64 {
        (0..self.n).map(|u| self.get(u, task)).sum()
    }
}

/// Protected attribute and stratification labels for one task, plus any
/// extra subgroup indicator columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupStructure {
    pub attribute: Vec<u32>,
    pub stratum: Vec<u32>,
    #[serde(default)]
    pub indicators: BTreeMap<String, Vec<bool>>,
}

impl GroupStructure {
    pub fn new(attribute: Vec<u32>, stratum: Vec<u32>) -> Result<Self> {
        ensure_len(attribute.len(), stratum.len(), "group stratum column")?;
        Ok(Self {
            attribute,
            stratum,
            indicators: BTreeMap::new(),
        })
    }

    /// Statistical parity: everyone in one stratum.
    pub fn single_stratum(attribute: Vec<u32>) -> Self {
        let n = attribute.len();
        Self {
            attribute,
            stratum: vec![0; n],
            indicators: BTreeMap::new(),
        }
    }

    pub fn with_indicator(mut self, name: &str, column: Vec<bool>) -> Result<Self> {
        ensure_len(self.len(), column.len(), "indicator column")?;
        self.indicators.insert(name.to_string(), column);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.attribute.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attribute.is_empty()
    }

    /// Members of every nonempty `(stratum, attribute)` cell.
    pub fn cells(&self) -> BTreeMap<u32, BTreeMap<u32, Vec<usize>>> {
        let mut out: BTreeMap<u32, BTreeMap<u32, Vec<usize>>> = BTreeMap::new();
        for u in 0..self.len() {
            out.entry(self.stratum[u])
                .or_default()
                .entry(self.attribute[u])
                .or_default()
                .push(u);
        }
        out
    }
}

/// What a reported violation refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Subject {
    Pair { u: usize, v: usize },
    Stratum { stratum: u32, a1: u32, a2: u32 },
}

impl fmt::Display for Subject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subject::Pair { u, v } => write!(f, "({u},{v})"),
            Subject::Stratum { stratum, a1, a2 } => write!(f, "z={stratum} a={a1} vs a={a2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub subject: Subject,
    pub observed: f64,
    pub allowed: f64,
    pub excess: f64,
}

/// Violations found by an audit plus the number of comparisons made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
    pub comparisons: usize,
    pub epsilon: f64,
}

impl FairnessReport {
    fn empty(epsilon: f64) -> Self {
        Self {
            violations: Vec::new(),
            warnings: Vec::new(),
            comparisons: 0,
            epsilon,
        }
    }

    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn fraction_violating(&self) -> f64 {
        if self.comparisons == 0 {
            0.0
        } else {
            self.violations.len() as f64 / self.comparisons as f64
        }
    }

    /// Mean excess over the listed violations (0 when there are none).
    pub fn mean_excess(&self) -> f64 {
        if self.violations.is_empty() {
            0.0
        } else {
            self.violations.iter().map(|v| v.excess).sum::<f64>() / self.violations.len() as f64
        }
    }

    pub fn max_excess(&self) -> f64 {
        self.violations.iter().map(|v| v.excess).fold(0.0, f64::max)
    }
}

/// Lists every pair with `|q_u - q_v| - D(u,v) > epsilon`.
pub fn audit_individual_fairness(m: &TaskMetric, q: &[f64], epsilon: f64) -> Result<FairnessReport> {
    ensure_len(m.size(), q.len(), "audited probabilities")?;
    check_probabilities(q)?;
    let ids: Vec<usize> = (0..q.len()).collect();
    Ok(audit_pairs(m, q, &ids, epsilon))
}

/// Individual fairness restricted to the pairs inside `subset`.
pub fn audit_subset_individual_fairness(
    m: &TaskMetric,
    q: &[f64],
    subset: &[usize],
    epsilon: f64,
) -> Result<FairnessReport> {
    ensure_len(m.size(), q.len(), "audited probabilities")?;
    for &u in subset {
        if u >= q.len() {
            return Err(Error::InvalidArgument(format!("element {u} out of range")));
        }
        if !(0.0..=1.0).contains(&q[u]) {
            return Err(Error::ProbabilityOutOfRange { index: u, value: q[u] });
        }
    }
    Ok(audit_pairs(m, q, subset, epsilon))
}

fn audit_pairs(m: &TaskMetric, q: &[f64], ids: &[usize], epsilon: f64) -> FairnessReport {
    let mut report = FairnessReport::empty(epsilon);
    for (i, &u) in ids.iter().enumerate() {
        for &v in &ids[i + 1..] {
            report.comparisons += 1;
            let observed = (q[u] - q[v]).abs();
            let allowed = m.get(u, v);
            let excess = observed - allowed;
            if excess > epsilon {
                let (u, v) = if u < v { (u, v) } else { (v, u) };
                report.violations.push(Violation {
                    subject: Subject::Pair { u, v },
                    observed,
                    allowed,
                    excess,
                });
            }
        }
    }
    report
}

fn mean_over(q: &[f64], members: &[usize]) -> f64 {
    members.iter().map(|&u| q[u]).sum::<f64>() / members.len() as f64
}

/// Compares unweighted group means within every stratum. Strata with fewer
/// than two populated attribute values are skipped and flagged in
/// `warnings`.
pub fn audit_conditional_parity(g: &GroupStructure, q: &[f64], epsilon: f64) -> Result<FairnessReport> {
    ensure_len(g.len(), q.len(), "audited probabilities")?;
    check_probabilities(q)?;
    let mut report = FairnessReport::empty(epsilon);
    for (z, by_attr) in g.cells() {
        if by_attr.len() < 2 {
            report.warnings.push(format!(
                "stratum {z} skipped: fewer than two populated attribute values"
            ));
            continue;
        }
        let means: Vec<(u32, f64)> = by_attr.iter().map(|(&a, m)| (a, mean_over(q, m))).collect();
        for (i, &(a1, m1)) in means.iter().enumerate() {
            for &(a2, m2) in &means[i + 1..] {
                report.comparisons += 1;
                let observed = (m1 - m2).abs();
                if observed > epsilon {
                    report.violations.push(Violation {
                        subject: Subject::Stratum { stratum: z, a1, a2 },
                        observed,
                        allowed: 0.0,
                        excess: observed,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// Mean of `q` over every `(stratum, attribute)` cell.
pub fn group_means(g: &GroupStructure, q: &[f64]) -> Result<BTreeMap<(u32, u32), f64>> {
    ensure_len(g.len(), q.len(), "probabilities")?;
    let mut out = BTreeMap::new();
    for (z, by_attr) in g.cells() {
        for (a, members) in by_attr {
            out.insert((z, a), mean_over(q, &members));
        }
    }
    Ok(out)
}
