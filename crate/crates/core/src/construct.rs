//! Constructors for individually fair classifiers.
//!
//! Everything here is built on [`fair_add`], which extends a fair partial
//! classifier by one element without touching existing probabilities.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::model::{SoftClassifier, TaskMetric};

/// Per-element value of a positive outcome and a cap on the expected number
/// of positives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationTarget {
    pub utilities: Vec<f64>,
    pub cap: f64,
}

impl AllocationTarget {
    pub fn new(utilities: Vec<f64>, cap: f64) -> Result<Self> {
        if !(cap >= 0.0) || !cap.is_finite() {
            return Err(Error::InvalidArgument(format!("cap must be a nonnegative real, got {cap}")));
        }
        if let Some(i) = utilities.iter().position(|u| !u.is_finite()) {
            return Err(Error::InvalidArgument(format!("utility {i} is not finite")));
        }
        Ok(Self { utilities, cap })
    }
}

// Smallest float `c` with `anchor - c <= d`.
pub(crate) fn floor_within(anchor: f64, d: f64) -> f64 {
    let mut c = anchor - d;
    while anchor - c > d {
        c = c.next_up();
    }
    c.max(0.0)
}

// Largest float `c` with `c - anchor <= d`.
pub(crate) fn ceil_within(anchor: f64, d: f64) -> f64 {
    let mut c = anchor + d;
    while c - anchor > d {
        c = c.next_down();
    }
    c.min(1.0)
}

/// Probability for the unclassified element `x` given the already classified
/// elements in `partial`.
///
/// Classified elements are scanned in ascending id order. Each one pulls the
/// running value just far enough to respect its distance to `x`.
pub fn fair_add(m: &TaskMetric, partial: &[Option<f64>], target: f64, x: usize) -> Result<f64> {
    ensure_len(m.size(), partial.len(), "partial classifier")?;
    if x >= partial.len() {
        return Err(Error::InvalidArgument(format!("element {x} out of range")));
    }
    if partial[x].is_some() {
        return Err(Error::AlreadyClassified(x));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::ProbabilityOutOfRange { index: x, value: target });
    }
    let mut p = target;
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for (l, pl) in partial.iter().enumerate() {
        let Some(pl) = *pl else { continue };
        let d = m.get(l, x);
        if d < pl - p {
            p = floor_within(pl, d);
        } else if d < p - pl {
            p = ceil_within(pl, d);
        }
        lo = lo.max(floor_within(pl, d));
        hi = hi.min(ceil_within(pl, d));
    }
    // Only moves the result when rounding pushed it out of a constraint.
    if lo <= hi {
        p = p.clamp(lo, hi);
    }
    Ok(p)
}

/// Inserts elements in `order`, each aimed at its entry in `targets`.
/// Different orders can give different (but always fair) classifiers.
pub fn build_fair_classifier(m: &TaskMetric, targets: &[f64], order: &[usize]) -> Result<SoftClassifier> {
    let n = m.size();
    ensure_len(n, targets.len(), "targets")?;
    ensure_len(n, order.len(), "insertion order")?;
    let mut seen = vec![false; n];
    for &u in order {
        if u >= n || std::mem::replace(&mut seen[u], true) {
            return Err(Error::InvalidArgument("order must be a permutation of the universe".into()));
        }
    }
    let mut partial = vec![None; n];
    for &u in order {
        partial[u] = Some(fair_add(m, &partial, targets[u], u)?);
    }
    Ok(SoftClassifier::new(partial.into_iter().map(Option::unwrap).collect())?)
}

/// Fills every unclassified element in ascending id order, aiming each at
/// the probability of its nearest classified neighbour (lowest id on ties).
/// With nothing classified yet, element 0 gets `fallback`.
pub fn extend_with_nearest(m: &TaskMetric, partial: &[Option<f64>], fallback: f64) -> Result<SoftClassifier> {
    let n = m.size();
    ensure_len(n, partial.len(), "partial classifier")?;
    let mut cur = partial.to_vec();
    for x in 0..n {
        if cur[x].is_some() {
            continue;
        }
        let nearest = (0..n)
            .filter_map(|l| cur[l].map(|p| (m.get(l, x), l, p)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let target = nearest.map_or(fallback, |(_, _, p)| p);
        cur[x] = Some(fair_add(m, &cur, target, x)?);
    }
    SoftClassifier::new(cur.into_iter().map(Option::unwrap).collect())
}

/// Full fair classifier that takes the given values on the anchor elements.
pub fn anchored_classifier(m: &TaskMetric, anchors: &[(usize, f64)]) -> Result<SoftClassifier> {
    let n = m.size();
    let mut partial = vec![None; n];
    for (i, &(u, p)) in anchors.iter().enumerate() {
        if u >= n {
            return Err(Error::InvalidArgument(format!("element {u} out of range")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityOutOfRange { index: u, value: p });
        }
        for &(v, q) in &anchors[..i] {
            if v == u {
                return Err(Error::AlreadyClassified(u));
            }
            if (p - q).abs() > m.get(u, v) {
                return Err(Error::Infeasible(format!(
                    "anchors {u} and {v} differ by {} but their distance is {}",
                    (p - q).abs(),
                    m.get(u, v)
                )));
            }
        }
        partial[u] = Some(p);
    }
    extend_with_nearest(m, &partial, 0.0)
}

/// Fair classifier whose gap on `(u, v)` equals their distance:
/// `p_u = D(u,v)` and `p_v = 0`.
pub fn maximize_pair_distance(m: &TaskMetric, u: usize, v: usize) -> Result<SoftClassifier> {
    if u == v {
        return Err(Error::InvalidArgument("pair elements must differ".into()));
    }
    if u >= m.size() || v >= m.size() {
        return Err(Error::InvalidArgument("pair element out of range".into()));
    }
    anchored_classifier(m, &[(u, m.get(u, v)), (v, 0.0)])
}

/// Pair probabilities with `p_u / p_v = ratio` and gap at most `D(u,v)`.
pub fn pair_ratio_values(d: f64, ratio: f64) -> Result<(f64, f64)> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("ratio must be positive, got {ratio}")));
    }
    if ratio == 1.0 {
        return Ok((1.0, 1.0));
    }
    if d == 0.0 {
        return Err(Error::Infeasible(format!(
            "ratio {ratio} needs a positive distance between the pair"
        )));
    }
    let (pu, pv) = if ratio > 1.0 { (1.0, 1.0 / ratio) } else { (ratio, 1.0) };
    let gap = (pu - pv).abs();
    if gap <= d {
        return Ok((pu, pv));
    }
    let scale = d / gap;
    Ok((pu * scale, pv * scale))
}

/// Fair classifier with `p_u / p_v = ratio`.
pub fn set_pair_ratio(m: &TaskMetric, u: usize, v: usize, ratio: f64) -> Result<SoftClassifier> {
    if u == v {
        return Err(Error::InvalidArgument("pair elements must differ".into()));
    }
    if u >= m.size() || v >= m.size() {
        return Err(Error::InvalidArgument("pair element out of range".into()));
    }
    let (mut pu, pv) = pair_ratio_values(m.get(u, v), ratio)?;
    if (pu - pv).abs() > m.get(u, v) {
        pu = if pu > pv { ceil_within(pv, m.get(u, v)) } else { floor_within(pv, m.get(u, v)) };
    }
    anchored_classifier(m, &[(u, pu), (v, pv)])
}

const IMPLIED_TOLERANCE: f64 = 1e-12;

// Pair constraints not implied by the triangle inequality through some third
// element (for a line metric this leaves adjacent pairs only).
fn essential_pairs(m: &TaskMetric) -> Vec<(usize, usize)> {
    let n = m.size();
    let mut out = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let d = m.get(u, v);
            if d >= 1.0 {
                continue;
            }
            // Chains through strictly closer points shrink the distance, so
            // every dropped pair is enforced by the remaining ones.
            let implied = (0..n).any(|w| {
                let (a, b) = (m.get(u, w), m.get(w, v));
                w != u && w != v && a > 0.0 && b > 0.0 && (a + b - d).abs() <= IMPLIED_TOLERANCE
            });
            if !implied {
                out.push((u, v));
            }
        }
    }
    out
}

/// Maximizes `sum utilities[u] * p[u]` over fair classifiers with expected
/// allocation at most `cap`.
///
/// Solved as a linear program followed by a repair pass that makes the
/// result fair to the last bit.
pub fn optimize_fair_classifier(m: &TaskMetric, target: &AllocationTarget) -> Result<SoftClassifier> {
    let n = m.size();
    ensure_len(n, target.utilities.len(), "utilities")?;
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = target.utilities.iter().map(|&q| lp.add_var(q, (0.0, 1.0))).collect();
    if target.cap < n as f64 {
        let all: Vec<_> = vars.iter().map(|&x| (x, 1.0)).collect();
        lp.add_constraint(all.as_slice(), ComparisonOp::Le, target.cap);
    }
    for (u, v) in essential_pairs(m) {
        let d = m.get(u, v);
        lp.add_constraint(&[(vars[u], 1.0), (vars[v], -1.0)], ComparisonOp::Le, d);
        lp.add_constraint(&[(vars[v], 1.0), (vars[u], -1.0)], ComparisonOp::Le, d);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Infeasible(format!("linear program failed: {e}")))?;
    let mut values: Vec<f64> = vars.iter().map(|&x| solution[x].clamp(0.0, 1.0)).collect();
    let sum: f64 = values.iter().sum();
    if sum > target.cap {
        let scale = target.cap / sum;
        values.iter_mut().for_each(|p| *p *= scale);
    }
    let order: Vec<usize> = (0..n).collect();
    build_fair_classifier(m, &values, &order)
}
