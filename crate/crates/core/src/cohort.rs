//! Selecting exactly `n` of `N` elements: PermuteThenClassify, weighted
//! sampling, the online variants and their selection probabilities.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::model::SoftClassifier;
use crate::sampling::{monte_carlo_vec, Estimate};

/// Largest universe for which PermuteThenClassify probabilities are
/// computed exactly.
pub const MAX_EXACT_PTC: usize = 8;

const PRECONDITION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CohortMode {
    Offline,
    OnlineRandomOrder,
    OnlineAdversarialKnownLength,
    OnlineAdversarialUnknownLength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub n: usize,
    pub mode: CohortMode,
}

impl CohortSpec {
    pub fn new(n: usize, mode: CohortMode) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("cohort size must be positive".into()));
        }
        Ok(Self { n, mode })
    }
}

fn check_size(n: usize, universe: usize) -> Result<()> {
    if n == 0 || n > universe {
        return Err(Error::InvalidArgument(format!(
            "cohort size {n} outside 1..={universe}"
        )));
    }
    Ok(())
}

/// PermuteThenClassify body over a fixed order.
///
/// Before classifying each element the end condition is checked: once the
/// open slots cover every element left (this one included), everything
/// remaining is taken. Stops as soon as `n` are chosen.
pub fn classify_in_order<R: Rng + ?Sized>(c: &SoftClassifier, order: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(n);
    for (i, &u) in order.iter().enumerate() {
        let slots = n - chosen.len();
        if slots == 0 {
            break;
        }
        if slots >= order.len() - i || rng.random_bool(c.p(u)) {
            chosen.push(u);
        }
    }
    chosen.sort_unstable();
    chosen
}

/// Uniform random order, then [`classify_in_order`]. Returns sorted ids.
pub fn permute_then_classify<R: Rng + ?Sized>(c: &SoftClassifier, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_size(n, c.len())?;
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.shuffle(rng);
    Ok(classify_in_order(c, &order, n, rng))
}

/// Exact selection probability of every element of `order` when
/// PermuteThenClassify scans it in exactly that order (indexed by element id;
/// elements outside `order` get 0).
pub fn ptc_selection_given_order(c: &SoftClassifier, order: &[usize], n: usize) -> Vec<f64> {
    let len = order.len();
    let mut out = vec![0.0; c.len()];
    // dist[s] = Pr[s selected before the current position]
    let mut dist = vec![0.0; n + 1];
    dist[0] = 1.0;
    for (i, &u) in order.iter().enumerate() {
        let remaining = len - i;
        let mut next = vec![0.0; n + 1];
        let mut picked = 0.0;
        for (s, &w) in dist.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            if s == n {
                next[s] += w;
                continue;
            }
            let take = if n - s >= remaining { 1.0 } else { c.p(u) };
            picked += w * take;
            next[s + 1] += w * take;
            next[s] += w * (1.0 - take);
        }
        out[u] = picked;
        dist = next;
    }
    out
}

fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    // Heap's algorithm
    let mut a: Vec<usize> = (0..n).collect();
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

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProbabilityMethod {
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

/// Selection probability of every element under PermuteThenClassify.
pub fn ptc_selection_probabilities(c: &SoftClassifier, n: usize, method: ProbabilityMethod) -> Result<Vec<Estimate>> {
    let big_n = c.len();
    check_size(n, big_n)?;
    match method {
        ProbabilityMethod::Exact => {
            if big_n > MAX_EXACT_PTC {
                return Err(Error::TooLarge {
                    what: "exact PermuteThenClassify",
                    limit: MAX_EXACT_PTC,
                    actual: big_n,
                });
            }
            let mut total = vec![0.0; big_n];
            let mut count = 0u64;
            for_each_permutation(big_n, |order| {
                for (t, x) in total.iter_mut().zip(ptc_selection_given_order(c, order, n)) {
                    *t += x;
                }
                count += 1;
            });
            Ok(total.into_iter().map(|t| Estimate::exact(t / count as f64)).collect())
        }
        ProbabilityMethod::MonteCarlo { trials, seed } => Ok(monte_carlo_vec(trials, seed, big_n, |rng, obs| {
            let picked = permute_then_classify(c, n, rng).expect("size checked");
            for u in picked {
                obs[u] = 1.0;
            }
        })),
    }
}

pub fn ptc_selection_probability(c: &SoftClassifier, n: usize, u: usize, method: ProbabilityMethod) -> Result<Estimate> {
    if u >= c.len() {
        return Err(Error::InvalidArgument(format!("element {u} out of range")));
    }
    Ok(ptc_selection_probabilities(c, n, method)?[u])
}

fn total_weight(c: &SoftClassifier) -> Result<f64> {
    let s = c.allocation();
    if !(s > 0.0) {
        return Err(Error::InvalidArgument("weighted sampling needs a classifier with positive total weight".into()));
    }
    Ok(s)
}

/// Draws an `n`-set with probability proportional to its total weight
/// without enumerating sets: an anchor drawn in proportion to `p`, then a
/// uniform `(n-1)`-subset of everyone else. Returns sorted ids.
pub fn weighted_sampling<R: Rng + ?Sized>(c: &SoftClassifier, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let big_n = c.len();
    check_size(n, big_n)?;
    total_weight(c)?;
    let anchor_dist =
        WeightedIndex::new(c.probabilities()).map_err(|e| Error::InvalidArgument(format!("weights: {e}")))?;
    let anchor = anchor_dist.sample(rng);
    let mut out: Vec<usize> = rand::seq::index::sample(rng, big_n - 1, n - 1)
        .into_iter()
        .map(|i| if i >= anchor { i + 1 } else { i })
        .collect();
    out.push(anchor);
    out.sort_unstable();
    Ok(out)
}

/// Closed-form `Pr[u selected]` under weighted sampling.
pub fn ws_selection_probability(c: &SoftClassifier, n: usize, u: usize) -> Result<f64> {
    let big_n = c.len();
    check_size(n, big_n)?;
    if u >= big_n {
        return Err(Error::InvalidArgument(format!("element {u} out of range")));
    }
    let s = total_weight(c)?;
    if big_n == 1 {
        return Ok(1.0);
    }
    let pu = c.p(u);
    let share = (n - 1) as f64 / (big_n - 1) as f64;
    Ok(((pu + share * (s - pu)) / s).min(1.0))
}

pub fn ws_selection_probabilities(c: &SoftClassifier, n: usize) -> Result<Vec<f64>> {
    (0..c.len()).map(|u| ws_selection_probability(c, n, u)).collect()
}

/// Factor relating selection gaps to classifier gaps:
/// `|Pr[u] - Pr[v]| = coefficient * |p_u - p_v|`. Equals the number of
/// `n`-sets containing `u` but not `v` divided by the total set weight.
pub fn ws_pair_coefficient(universe: usize, n: usize, total: f64) -> Result<f64> {
    check_size(n, universe)?;
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("total weight must be positive".into()));
    }
    if universe == 1 {
        return Ok(0.0);
    }
    Ok((universe - n) as f64 / ((universe - 1) as f64 * total))
}

/// Both ways of stating when weighted sampling is fair, plus the exact
/// condition that the pair coefficient is at most one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsPrecondition {
    /// Mean of `p` over the universe.
    pub mean_probability: f64,
    /// Mean probability at least `1/N`.
    pub statement_form: bool,
    /// Mean weight of an `n`-set, `n * S / N`.
    pub mean_set_weight: f64,
    /// Mean set weight at least `n/N`.
    pub proof_form: bool,
    /// Pair coefficient at most one.
    pub lipschitz: bool,
}

impl WsPrecondition {
    pub fn holds(&self) -> bool {
        self.statement_form && self.proof_form
    }

    pub fn forms_agree(&self) -> bool {
        self.statement_form == self.proof_form
    }
}

pub fn check_ws_precondition(c: &SoftClassifier, n: usize) -> Result<WsPrecondition> {
    let big_n = c.len();
    check_size(n, big_n)?;
    let s = c.allocation();
    let nf = big_n as f64;
    let mean_probability = s / nf;
    let mean_set_weight = n as f64 * s / nf;
    let lipschitz = if s > 0.0 {
        ws_pair_coefficient(big_n, n, s)? <= 1.0 + PRECONDITION_TOLERANCE
    } else {
        false
    };
    Ok(WsPrecondition {
        mean_probability,
        statement_form: mean_probability >= 1.0 / nf - PRECONDITION_TOLERANCE,
        mean_set_weight,
        proof_form: mean_set_weight >= n as f64 / nf - PRECONDITION_TOLERANCE,
        lipschitz,
    })
}

/// Online cohort selection over `stream` (element ids in arrival order).
///
/// Random-order streams run the PermuteThenClassify body as they arrive.
/// Against an adversarial order of known length the only safe choice is a
/// uniform `n`-subset of positions. With unknown length no fair mechanism
/// exists.
pub fn online_cohort<R: Rng + ?Sized>(
    spec: CohortSpec,
    c: &SoftClassifier,
    stream: &[usize],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if let CohortMode::OnlineAdversarialUnknownLength = spec.mode {
        return Err(Error::Infeasible(
            "no online cohort selection is individually fair against an adversarial stream of unknown length".into(),
        ));
    }
    check_size(spec.n, stream.len())?;
    if let Some(&u) = stream.iter().find(|&&u| u >= c.len()) {
        return Err(Error::InvalidArgument(format!("stream element {u} out of range")));
    }
    match spec.mode {
        CohortMode::Offline => {
            let mut order = stream.to_vec();
            order.shuffle(rng);
            Ok(classify_in_order(c, &order, spec.n, rng))
        }
        CohortMode::OnlineRandomOrder => Ok(classify_in_order(c, stream, spec.n, rng)),
        CohortMode::OnlineAdversarialKnownLength => {
            let mut out: Vec<usize> = rand::seq::index::sample(rng, stream.len(), spec.n)
                .into_iter()
                .map(|i| stream[i])
                .collect();
            out.sort_unstable();
            Ok(out)
        }
        CohortMode::OnlineAdversarialUnknownLength => unreachable!(),
    }
}

/// Quotas summing to exactly `n`: floors of `share * n`, then the leftover
/// units to the largest fractional parts (smaller label on ties).
pub fn largest_remainder_quotas(shares: &BTreeMap<u32, f64>, n: usize) -> Result<BTreeMap<u32, usize>> {
    let total: f64 = shares.values().sum();
    if shares.values().any(|&s| !(0.0..=1.0).contains(&s)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("group shares must be in [0,1] and sum to 1, got {total}")));
    }
    let mut quotas: BTreeMap<u32, usize> = BTreeMap::new();
    let mut fracs = Vec::new();
    for (&a, &s) in shares {
        let exact = s * n as f64;
        let floor = (exact + 1e-9).floor();
        quotas.insert(a, floor as usize);
        fracs.push((exact - floor, a));
    }
    let assigned: usize = quotas.values().sum();
    fracs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    for &(_, a) in fracs.iter().take(n.saturating_sub(assigned)) {
        *quotas.get_mut(&a).expect("present") += 1;
    }
    Ok(quotas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParitySelection {
    pub selected: Vec<usize>,
    pub quotas: BTreeMap<u32, usize>,
    /// Statistical parity says nothing about who within a group is picked.
    pub warning: String,
}

/// Takes the first `quota[a]` arrivals of every group `a`.
pub fn statistical_parity_online(
    stream: &[usize],
    groups: &[u32],
    shares: &BTreeMap<u32, f64>,
    n: usize,
) -> Result<ParitySelection> {
    ensure_len(stream.len(), groups.len(), "stream group labels")?;
    let quotas = largest_remainder_quotas(shares, n)?;
    let mut left = quotas.clone();
    let mut selected = Vec::with_capacity(n);
    for (&u, g) in stream.iter().zip(groups) {
        let q = left
            .get_mut(g)
            .ok_or_else(|| Error::InvalidArgument(format!("group {g} has no share")))?;
        if *q > 0 {
            *q -= 1;
            selected.push(u);
        }
    }
    if let Some((g, q)) = left.iter().find(|(_, &q)| q > 0) {
        return Err(Error::QuotaInfeasible(format!("group {g} is {q} short of its quota")));
    }
    selected.sort_unstable();
    Ok(ParitySelection {
        selected,
        quotas,
        warning: "meets statistical parity only; arrival order decides who is picked within each group, so individual fairness is not guaranteed".into(),
    })
}
