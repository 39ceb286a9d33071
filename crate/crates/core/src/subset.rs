//! Constrained cohort feasibility, gamma-partitions, and classification of a
//! random subset of the universe.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::cohort::{classify_in_order, largest_remainder_quotas, ptc_selection_given_order, MAX_EXACT_PTC};
use crate::construct::extend_with_nearest;
use crate::error::{ensure_len, Error, Result};
use crate::model::{
    audit_individual_fairness, audit_subset_individual_fairness, check_probabilities, FairnessReport, SoftClassifier,
    TaskMetric,
};
use crate::sampling::{monte_carlo_vec, Estimate};

const COUNT_TOLERANCE: f64 = 1e-9;

/// Bounds behind the constrained cohort feasibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Least possible mean selection probability inside `A`.
    pub mean_a_lower: f64,
    /// Greatest possible mean selection probability inside `B`.
    pub mean_b_upper: f64,
    /// `sum beta_i * gamma_i`
    pub slack: f64,
    pub gap: f64,
    pub feasible: bool,
    /// Largest share of the cohort reserved for `A` that stays feasible.
    pub p_max: f64,
}

/// Whether a cohort of `n` with a share `p` drawn from `A` can be
/// individually fair, given how closely `B` matches `A`.
/// `parts` lists `(beta_i, gamma_i)`.
pub fn check_constrained_feasibility(
    a_size: usize,
    b_size: usize,
    n: usize,
    p: f64,
    parts: &[(f64, f64)],
) -> Result<FeasibilityReport> {
    if a_size == 0 || b_size == 0 {
        return Err(Error::InvalidArgument("both groups must be nonempty".into()));
    }
    if n == 0 || n > a_size + b_size {
        return Err(Error::InvalidArgument(format!(
            "cohort size {n} outside 1..={}",
            a_size + b_size
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange { index: 0, value: p });
    }
    if parts.is_empty() {
        return Err(Error::InvalidArgument("need at least one part".into()));
    }
    for &(beta, gamma) in parts {
        if !(0.0..=1.0).contains(&beta) || !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("part ({beta}, {gamma}) outside [0,1]")));
        }
    }
    let beta_total: f64 = parts.iter().map(|x| x.0).sum();
    if (beta_total - 1.0).abs() > COUNT_TOLERANCE {
        return Err(Error::InvalidArgument(format!("part shares sum to {beta_total}, not 1")));
    }
    let (a, b, nf) = (a_size as f64, b_size as f64, n as f64);
    if p * nf > a + COUNT_TOLERANCE {
        return Err(Error::QuotaInfeasible(format!("{} seats reserved for a group of {a_size}", p * nf)));
    }
    if (1.0 - p) * nf > b + COUNT_TOLERANCE {
        return Err(Error::QuotaInfeasible(format!(
            "{} seats left for a group of {b_size}",
            (1.0 - p) * nf
        )));
    }
    let mean_a_lower = p * nf / a;
    let mean_b_upper = (1.0 - p) * nf / b;
    let slack: f64 = parts.iter().map(|&(beta, gamma)| beta * gamma).sum();
    let gap = mean_a_lower - mean_b_upper;
    Ok(FeasibilityReport {
        mean_a_lower,
        mean_b_upper,
        slack,
        gap,
        feasible: gap <= slack,
        p_max: (nf + b * slack) / ((b / a + 1.0) * nf),
    })
}

/// How elements of `B` are grouped by their distance to `A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    Single,
    /// Ascending cut points; bin `i` holds distances in `[edge_{i-1}, edge_i)`.
    Edges(Vec<f64>),
    /// Cut points at the deciles of the nearest-`A` distances.
    Deciles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPart {
    pub members: Vec<usize>,
    pub gamma: f64,
    pub beta: f64,
    /// Copies of each `A` and `B` element made so the part matches evenly.
    pub a_copies: usize,
    pub b_copies: usize,
    /// `(a, b)` matches; a `B` element appears once per copy.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaPartition {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub parts: Vec<GammaPart>,
}

impl GammaPartition {
    /// `(beta_i, gamma_i)` for the feasibility check.
    pub fn beta_gamma(&self) -> Vec<(f64, f64)> {
        self.parts.iter().map(|p| (p.beta, p.gamma)).collect()
    }

    pub fn slack(&self) -> f64 {
        self.parts.iter().map(|p| p.beta * p.gamma).sum()
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn check_split(n: usize, a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("both groups must be nonempty".into()));
    }
    let mut seen = vec![false; n];
    for &u in a.iter().chain(b) {
        if u >= n || std::mem::replace(&mut seen[u], true) {
            return Err(Error::InvalidArgument("groups must be disjoint sets of universe elements".into()));
        }
    }
    Ok(())
}

fn cut_points(nearest: &[f64], binning: &Binning) -> Vec<f64> {
    match binning {
        Binning::Single => Vec::new(),
        Binning::Edges(e) => e.clone(),
        Binning::Deciles => {
            let mut sorted = nearest.to_vec();
            sorted.sort_by(f64::total_cmp);
            let len = sorted.len();
            let mut cuts: Vec<f64> = (1..10).map(|k| sorted[(k * len).div_ceil(10).min(len - 1)]).collect();
            cuts.dedup();
            cuts.retain(|&c| c > sorted[0]);
            cuts
        }
    }
}

/// Greedy witness for how closely `B` can be matched onto `A`.
///
/// `B` is binned by each element's distance to its nearest `A` element.
/// Within a bin, elements are copied until `A` can take them evenly, then
/// matched hardest first to the nearest `A` element with room left (lowest id
/// on ties). A bin's gamma is its largest matched distance.
pub fn estimate_gamma_partition(m: &TaskMetric, a: &[usize], b: &[usize], binning: &Binning) -> Result<GammaPartition> {
    check_split(m.size(), a, b)?;
    let nearest: Vec<f64> = b
        .iter()
        .map(|&y| a.iter().map(|&x| m.get(x, y)).fold(f64::INFINITY, f64::min))
        .collect();
    let cuts = cut_points(&nearest, binning);
    let mut bins: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..b.len() {
        let bin = cuts.iter().take_while(|&&c| nearest[i] >= c).count();
        bins.entry(bin).or_default().push(i);
    }
    let mut parts = Vec::new();
    for members in bins.into_values() {
        let size = members.len();
        let g = gcd(a.len(), size);
        let b_copies = a.len() / g;
        let a_copies = size / g;
        let mut order: Vec<usize> = members.clone();
        order.sort_by(|&i, &j| nearest[j].total_cmp(&nearest[i]).then(b[i].cmp(&b[j])));
        let mut room = vec![a_copies; a.len()];
        let mut edges = Vec::with_capacity(size * b_copies);
        let mut gamma = 0.0_f64;
        for _ in 0..b_copies {
            for &i in &order {
                let y = b[i];
                let (slot, d) = a
                    .iter()
                    .enumerate()
                    .filter(|&(s, _)| room[s] > 0)
                    .map(|(s, &x)| (s, m.get(x, y)))
                    .min_by(|p, q| p.1.total_cmp(&q.1).then(a[p.0].cmp(&a[q.0])))
                    .expect("capacity matches copies");
                room[slot] -= 1;
                gamma = gamma.max(d);
                edges.push((a[slot], y));
            }
        }
        let mut ids: Vec<usize> = members.iter().map(|&i| b[i]).collect();
        ids.sort_unstable();
        parts.push(GammaPart {
            members: ids,
            gamma,
            beta: size as f64 / b.len() as f64,
            a_copies,
            b_copies,
            edges,
        });
    }
    Ok(GammaPartition {
        a: a.to_vec(),
        b: b.to_vec(),
        parts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntragroupCohort {
    pub selected: Vec<usize>,
    pub n_a: usize,
    pub n_b: usize,
    pub note: String,
}

fn group_quotas(a_len: usize, b_len: usize, n: usize, p: f64) -> Result<(usize, usize)> {
    let q = largest_remainder_quotas(&BTreeMap::from([(0, p), (1, 1.0 - p)]), n)?;
    let (n_a, n_b) = (q[&0], q[&1]);
    if n_a > a_len || n_b > b_len {
        return Err(Error::QuotaInfeasible(format!(
            "quotas ({n_a}, {n_b}) exceed group sizes ({a_len}, {b_len})"
        )));
    }
    Ok((n_a, n_b))
}

/// PermuteThenClassify run separately inside `A` (share `p` of the cohort)
/// and inside `B`. Fair within each group, not across them.
pub fn intragroup_ptc<R: Rng + ?Sized>(
    c: &SoftClassifier,
    a: &[usize],
    b: &[usize],
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<IntragroupCohort> {
    check_split(c.len(), a, b)?;
    let (n_a, n_b) = group_quotas(a.len(), b.len(), n, p)?;
    let mut selected = Vec::with_capacity(n);
    for (group, quota) in [(a, n_a), (b, n_b)] {
        if quota == 0 {
            continue;
        }
        let mut order = group.to_vec();
        order.shuffle(rng);
        selected.extend(classify_in_order(c, &order, quota, rng));
    }
    selected.sort_unstable();
    Ok(IntragroupCohort {
        selected,
        n_a,
        n_b,
        note: "selection is fair within each group only; elements of different groups may be treated very differently"
            .into(),
    })
}

/// Exact selection probabilities for [`intragroup_ptc`] (each group at most
/// eight elements).
pub fn intragroup_selection_probabilities(c: &SoftClassifier, a: &[usize], b: &[usize], n: usize, p: f64) -> Result<Vec<f64>> {
    check_split(c.len(), a, b)?;
    let (n_a, n_b) = group_quotas(a.len(), b.len(), n, p)?;
    let mut out = vec![0.0; c.len()];
    for (group, quota) in [(a, n_a), (b, n_b)] {
        if quota == 0 {
            continue;
        }
        let probs = uniform_order_probabilities(|order| ptc_selection_given_order(c, order, quota), group)?;
        for (u, x) in probs {
            out[u] = x;
        }
    }
    Ok(out)
}

fn for_each_permutation_of(items: &[usize], mut f: impl FnMut(&[usize])) {
    let mut a = items.to_vec();
    let n = a.len();
    let mut c = vec![0; n];
    f(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            f(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

// Averages `exact(order)` over every order of `items`.
fn uniform_order_probabilities(exact: impl Fn(&[usize]) -> Vec<f64>, items: &[usize]) -> Result<Vec<(usize, f64)>> {
    if items.len() > MAX_EXACT_PTC {
        return Err(Error::TooLarge {
            what: "exact enumeration of orders",
            limit: MAX_EXACT_PTC,
            actual: items.len(),
        });
    }
    let mut total: BTreeMap<usize, f64> = items.iter().map(|&u| (u, 0.0)).collect();
    let mut count = 0.0;
    for_each_permutation_of(items, |order| {
        let probs = exact(order);
        for (u, t) in total.iter_mut() {
            *t += probs[*u];
        }
        count += 1.0;
    });
    Ok(total.into_iter().map(|(u, t)| (u, t / count)).collect())
}

/// Which part of the universe shows up for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SubsetDistribution {
    FullUniverse,
    /// `(subset, probability)`; probabilities sum to one.
    Explicit(Vec<(Vec<usize>, f64)>),
    /// Element `w` present independently with probability `q[w]`.
    Independent(Vec<f64>),
}

impl SubsetDistribution {
    pub fn explicit(sets: Vec<(Vec<usize>, f64)>) -> Result<Self> {
        let total: f64 = sets.iter().map(|s| s.1).sum();
        if sets.iter().any(|s| !(0.0..=1.0).contains(&s.1)) || (total - 1.0).abs() > COUNT_TOLERANCE {
            return Err(Error::InvalidArgument(format!("subset probabilities sum to {total}")));
        }
        Ok(Self::Explicit(sets))
    }

    pub fn independent(q: Vec<f64>) -> Result<Self> {
        check_probabilities(&q)?;
        Ok(Self::Independent(q))
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Self::FullUniverse => Ok(()),
            Self::Explicit(sets) => {
                for (s, _) in sets {
                    let mut seen = vec![false; n];
                    for &u in s {
                        if u >= n || std::mem::replace(&mut seen[u], true) {
                            return Err(Error::InvalidArgument("subset must list distinct universe elements".into()));
                        }
                    }
                }
                Ok(())
            }
            Self::Independent(q) => ensure_len(n, q.len(), "inclusion weights"),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        match self {
            Self::FullUniverse => (0..n).collect(),
            Self::Explicit(sets) => {
                let mut x: f64 = rng.random();
                for (s, w) in sets {
                    if x < *w {
                        return s.clone();
                    }
                    x -= w;
                }
                sets.last().map(|s| s.0.clone()).unwrap_or_default()
            }
            Self::Independent(q) => (0..n).filter(|&w| rng.random_bool(q[w])).collect(),
        }
    }

    // Every subset with its probability; independent inclusion is expanded
    // over all subsets.
    fn support(&self, n: usize) -> Result<Vec<(Vec<usize>, f64)>> {
        match self {
            Self::FullUniverse => Ok(vec![((0..n).collect(), 1.0)]),
            Self::Explicit(sets) => Ok(sets.clone()),
            Self::Independent(q) => {
                if n > 16 {
                    return Err(Error::TooLarge {
                        what: "exact expansion of independent inclusion",
                        limit: 16,
                        actual: n,
                    });
                }
                Ok((0u32..1 << n)
                    .map(|mask| {
                        let set: Vec<usize> = (0..n).filter(|&w| mask & (1 << w) != 0).collect();
                        let w: f64 = (0..n).map(|w| if mask & (1 << w) != 0 { q[w] } else { 1.0 - q[w] }).product();
                        (set, w)
                    })
                    .collect())
            }
        }
    }
}

pub type OrderGenerator = Arc<dyn Fn(&[usize], u64) -> Vec<usize> + Send + Sync>;

/// How the present elements are ordered before the system sees them.
#[derive(Clone)]
pub enum OrderingDistribution {
    Uniform,
    /// Present elements in the order they appear in this permutation.
    Fixed(Vec<usize>),
    /// Called with the present elements and a seed; must return a
    /// permutation of them.
    Generator(OrderGenerator),
}

impl fmt::Debug for OrderingDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Uniform => write!(f, "Uniform"),
            Self::Fixed(p) => f.debug_tuple("Fixed").field(p).finish(),
            Self::Generator(_) => write!(f, "Generator(..)"),
        }
    }
}

impl OrderingDistribution {
    fn draw<R: Rng + ?Sized>(&self, present: &[usize], rng: &mut R) -> Result<Vec<usize>> {
        match self {
            Self::Uniform => {
                let mut order = present.to_vec();
                order.shuffle(rng);
                Ok(order)
            }
            Self::Fixed(perm) => Ok(restrict_order(perm, present)),
            Self::Generator(g) => {
                let order = g(present, rng.next_u64());
                let mut a = order.clone();
                let mut b = present.to_vec();
                a.sort_unstable();
                b.sort_unstable();
                if a != b {
                    return Err(Error::InvalidArgument("ordering generator must permute the present elements".into()));
                }
                Ok(order)
            }
        }
    }
}

fn restrict_order(perm: &[usize], present: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; perm.len().max(present.iter().max().map_or(0, |m| m + 1))];
    for &u in present {
        inside[u] = true;
    }
    perm.iter().copied().filter(|&u| inside[u]).collect()
}

/// A mechanism run on an ordered subset of the universe. Elements it never
/// sees get the negative outcome.
pub trait SubsetSystem: Sync {
    fn universe_size(&self) -> usize;

    /// Selected elements for one run.
    fn run(&self, order: &[usize], rng: &mut dyn RngCore) -> Vec<usize>;

    /// Exact selection probability of every element for a fixed order, when
    /// the system can compute it.
    fn exact_probabilities(&self, _order: &[usize]) -> Option<Vec<f64>> {
        None
    }
}

/// Classify each present element independently.
#[derive(Debug, Clone, PartialEq)]
pub struct IndependentSystem(pub SoftClassifier);

impl SubsetSystem for IndependentSystem {
    fn universe_size(&self) -> usize {
        self.0.len()
    }

    fn run(&self, order: &[usize], rng: &mut dyn RngCore) -> Vec<usize> {
        order.iter().copied().filter(|&u| rng.random_bool(self.0.p(u))).collect()
    }

    fn exact_probabilities(&self, order: &[usize]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.0.len()];
        for &u in order {
            out[u] = self.0.p(u);
        }
        Some(out)
    }
}

/// PermuteThenClassify body over the presented order, cohort `n` (or all
/// present elements when fewer show up).
#[derive(Debug, Clone, PartialEq)]
pub struct PtcSystem {
    pub classifier: SoftClassifier,
    pub n: usize,
}

impl SubsetSystem for PtcSystem {
    fn universe_size(&self) -> usize {
        self.classifier.len()
    }

    fn run(&self, order: &[usize], rng: &mut dyn RngCore) -> Vec<usize> {
        classify_in_order(&self.classifier, order, self.n.min(order.len()), rng)
    }

    fn exact_probabilities(&self, order: &[usize]) -> Option<Vec<f64>> {
        Some(ptc_selection_given_order(&self.classifier, order, self.n.min(order.len())))
    }
}

/// Monte Carlo estimate of `Pr[u selected]`: draw the subset, then its
/// order, then run the system.
pub fn run_subset_experiment(
    system: &dyn SubsetSystem,
    y: &SubsetDistribution,
    x: &OrderingDistribution,
    u: usize,
    trials: u64,
    seed: u64,
) -> Result<Estimate> {
    Ok(run_subset_experiment_all(system, y, x, trials, seed)?[u])
}

/// Like [`run_subset_experiment`] for every element at once.
pub fn run_subset_experiment_all(
    system: &dyn SubsetSystem,
    y: &SubsetDistribution,
    x: &OrderingDistribution,
    trials: u64,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let n = system.universe_size();
    y.validate(n)?;
    // surface ordering errors before the parallel run
    let probe = y.draw(n, &mut crate::sampling::chunk_rng(seed, u64::MAX));
    x.draw(&probe, &mut crate::sampling::chunk_rng(seed, u64::MAX))?;
    let failed = std::sync::atomic::AtomicBool::new(false);
    let out = monte_carlo_vec(trials, seed, n, |rng, obs| {
        let present = y.draw(n, rng);
        match x.draw(&present, rng) {
            Ok(order) => {
                for w in system.run(&order, rng) {
                    obs[w] = 1.0;
                }
            }
            Err(_) => failed.store(true, std::sync::atomic::Ordering::Relaxed),
        }
    });
    if failed.into_inner() {
        return Err(Error::InvalidArgument("ordering generator must permute the present elements".into()));
    }
    Ok(out)
}

/// Exact `Pr[u selected]` over an explicit (or small) subset distribution.
pub fn exact_subset_probabilities(system: &dyn SubsetSystem, y: &SubsetDistribution, x: &OrderingDistribution) -> Result<Vec<f64>> {
    let n = system.universe_size();
    y.validate(n)?;
    let mut out = vec![0.0; n];
    let unsupported = || Error::InvalidArgument("system has no exact mode".into());
    for (set, w) in y.support(n)? {
        if w == 0.0 {
            continue;
        }
        let probs: Vec<(usize, f64)> = match x {
            OrderingDistribution::Uniform => {
                system.exact_probabilities(&set).ok_or_else(unsupported)?;
                uniform_order_probabilities(|order| system.exact_probabilities(order).expect("checked"), &set)?
            }
            OrderingDistribution::Fixed(perm) => {
                let order = restrict_order(perm, &set);
                let p = system.exact_probabilities(&order).ok_or_else(unsupported)?;
                order.iter().map(|&u| (u, p[u])).collect()
            }
            OrderingDistribution::Generator(_) => {
                return Err(Error::InvalidArgument("generated orderings have no exact mode".into()))
            }
        };
        for (u, p) in probs {
            out[u] += w * p;
        }
    }
    Ok(out)
}

/// A classifier that first keeps element `w` with probability
/// `q_min / q_w`, so every element ends up positive with probability
/// `q_min * p_w` once inclusion is accounted for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledClassifier {
    base: SoftClassifier,
    keep: Vec<f64>,
    assumed_inclusion: Vec<f64>,
}

impl RescaledClassifier {
    pub fn base(&self) -> &SoftClassifier {
        &self.base
    }

    pub fn keep_probabilities(&self) -> &[f64] {
        &self.keep
    }

    pub fn assumed_inclusion(&self) -> &[f64] {
        &self.assumed_inclusion
    }

    /// Positive probability for an element that is present.
    pub fn conditional(&self) -> SoftClassifier {
        SoftClassifier::new(self.keep.iter().zip(self.base.probabilities()).map(|(k, p)| k * p).collect())
            .expect("product of probabilities")
    }

    /// Positive probability over both inclusion and classification under
    /// the given inclusion weights.
    pub fn effective(&self, inclusion: &[f64]) -> Result<Vec<f64>> {
        ensure_len(self.base.len(), inclusion.len(), "inclusion weights")?;
        check_probabilities(inclusion)?;
        Ok(self
            .conditional()
            .probabilities()
            .iter()
            .zip(inclusion)
            .map(|(c, q)| c * q)
            .collect())
    }

    /// Audits the effective probabilities under `inclusion`, warning when
    /// that is not the distribution the classifier was built for.
    pub fn audit_against(&self, m: &TaskMetric, inclusion: &[f64], epsilon: f64) -> Result<FairnessReport> {
        let eff = self.effective(inclusion)?;
        let mut report = audit_individual_fairness(m, &eff, epsilon)?;
        if inclusion != self.assumed_inclusion.as_slice() {
            report.warnings.push(
                "audited under a different inclusion distribution than the one this classifier was rescaled for; fairness is only guaranteed for the original".into(),
            );
        }
        Ok(report)
    }
}

impl SubsetSystem for RescaledClassifier {
    fn universe_size(&self) -> usize {
        self.base.len()
    }

    fn run(&self, order: &[usize], rng: &mut dyn RngCore) -> Vec<usize> {
        order
            .iter()
            .copied()
            .filter(|&w| rng.random_bool(self.keep[w]) && rng.random_bool(self.base.p(w)))
            .collect()
    }

    fn exact_probabilities(&self, order: &[usize]) -> Option<Vec<f64>> {
        let mut out = vec![0.0; self.base.len()];
        for &w in order {
            out[w] = self.keep[w] * self.base.p(w);
        }
        Some(out)
    }
}

/// Equalizes availability: with every inclusion weight positive, keeping
/// element `w` with probability `q_min / q_w` makes the effective positive
/// rate `q_min * p_w`, which is fair whenever `c` is.
pub fn positive_weights_rescale(c: &SoftClassifier, q: &[f64]) -> Result<RescaledClassifier> {
    ensure_len(c.len(), q.len(), "inclusion weights")?;
    check_probabilities(q)?;
    if let Some(w) = q.iter().position(|&x| x == 0.0) {
        return Err(Error::Infeasible(format!(
            "element {w} is never available, so no classifier can guarantee it fair treatment"
        )));
    }
    let q_min = q.iter().copied().fold(1.0, f64::min);
    Ok(RescaledClassifier {
        base: c.clone(),
        keep: q.iter().map(|&x| if x == q_min { 1.0 } else { q_min / x }).collect(),
        assumed_inclusion: q.to_vec(),
    })
}

/// Keeps `external` wherever it is defined and fills the elements it leaves
/// out (`None`) with fair additions aimed at their nearest neighbour.
pub fn copy_behavior_extension(m: &TaskMetric, external: &[Option<f64>]) -> Result<SoftClassifier> {
    ensure_len(m.size(), external.len(), "external classifier")?;
    let defined: Vec<usize> = (0..external.len()).filter(|&u| external[u].is_some()).collect();
    let values: Vec<f64> = external.iter().map(|p| p.unwrap_or(0.0)).collect();
    let report = audit_subset_individual_fairness(m, &values, &defined, crate::model::DEFAULT_EPSILON)?;
    if !report.passes() {
        return Err(Error::SubsetAuditFailed(report.violations.len()));
    }
    extend_with_nearest(m, external, 0.0)
}
