//! Group fairness under composition: parity of composed outcomes, subgroup
//! audits, unrelated tasks and multi-task parity residuals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::competitive::{compose_competitive, TieBreaker};
use crate::error::{ensure_len, Error, Result};
use crate::functional::compose_or_repeated;
use crate::model::{audit_conditional_parity, group_means, FairnessReport, GroupStructure, SoftClassifier, SystemOutcome};

const ZERO_RESIDUAL: f64 = 1e-12;

/// Conditional parity of an already composed probability vector.
pub fn audit_parity_under_composition(g: &GroupStructure, composed: &[f64], epsilon: f64) -> Result<FairnessReport> {
    audit_conditional_parity(g, composed, epsilon)
}

/// Largest within-stratum gap between attribute group means.
pub fn max_parity_gap(g: &GroupStructure, q: &[f64]) -> Result<f64> {
    let means = group_means(g, q)?;
    let mut by_stratum: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for ((z, _), m) in means {
        by_stratum.entry(z).or_default().push(m);
    }
    Ok(by_stratum
        .values()
        .map(|ms| {
            let hi = ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = ms.iter().copied().fold(f64::INFINITY, f64::min);
            hi - lo
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub compositions: usize,
    pub max_gap: f64,
    pub means: Vec<((u32, u32), f64)>,
}

/// Group means after OR-composing `c` with itself `1..=max_compositions`
/// times.
pub fn or_parity_trajectory(g: &GroupStructure, c: &SoftClassifier, max_compositions: usize) -> Result<Vec<TrajectoryPoint>> {
    ensure_len(g.len(), c.len(), "classifier")?;
    (1..=max_compositions)
        .map(|k| {
            let composed = compose_or_repeated(c, &vec![k; c.len()])?;
            Ok(TrajectoryPoint {
                compositions: k,
                max_gap: max_parity_gap(g, &composed)?,
                means: group_means(g, &composed)?.into_iter().collect(),
            })
        })
        .collect()
}

/// Two groups of twenty, one stratum: 10% of the first group and 85% of the
/// second are accepted with probability 0.9, the rest with 0.1.
pub fn high_low_population() -> (GroupStructure, SoftClassifier) {
    let mut attribute = Vec::new();
    let mut p = Vec::new();
    for (a, high) in [(0u32, 2usize), (1, 17)] {
        for i in 0..20 {
            attribute.push(a);
            p.push(if i < high { 0.9 } else { 0.1 });
        }
    }
    (
        GroupStructure::single_stratum(attribute),
        SoftClassifier::new(p).expect("valid probabilities"),
    )
}

/// Equal means in isolation: one group all at 0.75, the other split between
/// 1 and 0.5.
pub fn bimodal_population() -> (GroupStructure, SoftClassifier) {
    (
        GroupStructure::single_stratum(vec![0, 0, 1, 1]),
        SoftClassifier::new(vec![0.75, 0.75, 1.0, 0.5]).expect("valid probabilities"),
    )
}

/// Conditional parity over the attribute refined by a named indicator
/// column.
pub fn audit_subgroup_parity(g: &GroupStructure, indicator: &str, composed: &[f64], epsilon: f64) -> Result<FairnessReport> {
    let refined = refine(g, indicator)?;
    audit_conditional_parity(&refined, composed, epsilon)
}

/// Group structure whose attribute is `2 * attribute + indicator`.
pub fn refine(g: &GroupStructure, indicator: &str) -> Result<GroupStructure> {
    let column = g
        .indicators
        .get(indicator)
        .ok_or_else(|| Error::InvalidArgument(format!("no indicator column named {indicator:?}")))?;
    let attribute = g.attribute.iter().zip(column).map(|(&a, &s)| a * 2 + u32::from(s)).collect();
    GroupStructure::new(attribute, g.stratum.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnrelatedCheck {
    pub unrelated: bool,
    pub max_residual: f64,
}

// max over conditions c, values z of |Pr[z | c] - Pr[z]| by universe counts
fn dependence(target: &[u32], condition: &[(u32, u32)]) -> f64 {
    let n = target.len() as f64;
    let mut marginal: BTreeMap<u32, f64> = BTreeMap::new();
    let mut joint: BTreeMap<(u32, u32), BTreeMap<u32, f64>> = BTreeMap::new();
    let mut sizes: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (u, &z) in target.iter().enumerate() {
        *marginal.entry(z).or_default() += 1.0;
        *joint.entry(condition[u]).or_default().entry(z).or_default() += 1.0;
        *sizes.entry(condition[u]).or_default() += 1.0;
    }
    let mut worst = 0.0_f64;
    for (c, counts) in &joint {
        for (z, m) in &marginal {
            let conditional = counts.get(z).copied().unwrap_or(0.0) / sizes[c];
            worst = worst.max((conditional - m / n).abs());
        }
    }
    worst
}

/// Whether each task's stratum is independent of the other task's
/// `(attribute, stratum)` over the universe.
pub fn check_unrelated_tasks(g1: &GroupStructure, g2: &GroupStructure, epsilon: f64) -> Result<UnrelatedCheck> {
    ensure_len(g1.len(), g2.len(), "second group structure")?;
    let pairs = |g: &GroupStructure| -> Vec<(u32, u32)> { g.attribute.iter().copied().zip(g.stratum.iter().copied()).collect() };
    let max_residual = dependence(&g1.stratum, &pairs(g2)).max(dependence(&g2.stratum, &pairs(g1)));
    Ok(UnrelatedCheck {
        unrelated: max_residual <= epsilon,
        max_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityResidual {
    pub stratum: u32,
    pub a1: u32,
    pub a2: u32,
    /// Difference of mean probability lost to the competing task.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskParity {
    pub residuals: Vec<ParityResidual>,
    pub composed: FairnessReport,
}

impl TaskParity {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.residual.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskParity {
    pub outcome: SystemOutcome,
    pub tasks: Vec<TaskParity>,
}

impl MultiTaskParity {
    pub fn max_residual(&self) -> f64 {
        self.tasks.iter().map(TaskParity::max_residual).fold(0.0, f64::max)
    }
}

/// Residuals of a given system outcome against the classifiers it was built
/// from, one group structure per task.
pub fn parity_residuals(
    classifiers: &[SoftClassifier],
    outcome: &SystemOutcome,
    groups: &[GroupStructure],
    epsilon: f64,
) -> Result<MultiTaskParity> {
    if classifiers.len() != outcome.num_tasks() || groups.len() != outcome.num_tasks() {
        return Err(Error::InvalidArgument("need one classifier and one group structure per task".into()));
    }
    let mut tasks = Vec::with_capacity(groups.len());
    for (t, (c, g)) in classifiers.iter().zip(groups).enumerate() {
        ensure_len(outcome.num_elements(), c.len(), "classifier")?;
        ensure_len(outcome.num_elements(), g.len(), "group structure")?;
        let composed = outcome.task(t);
        let lost: Vec<f64> = c.probabilities().iter().zip(&composed).map(|(p, s)| p - s).collect();
        let means = group_means(g, &lost)?;
        let mut residuals = Vec::new();
        for (z, by_attr) in g.cells() {
            let attrs: Vec<u32> = by_attr.keys().copied().collect();
            for (i, &a1) in attrs.iter().enumerate() {
                for &a2 in &attrs[i + 1..] {
                    residuals.push(ParityResidual {
                        stratum: z,
                        a1,
                        a2,
                        residual: means[&(z, a1)] - means[&(z, a2)],
                    });
                }
            }
        }
        tasks.push(TaskParity {
            residuals,
            composed: audit_parity_under_composition(g, &composed, epsilon)?,
        });
    }
    Ok(MultiTaskParity {
        outcome: outcome.clone(),
        tasks,
    })
}

/// Task-competitive composition of two classifiers followed by
/// [`parity_residuals`].
pub fn multi_task_parity_residual(
    classifiers: &[SoftClassifier],
    tb: &TieBreaker,
    g1: &GroupStructure,
    g2: &GroupStructure,
    epsilon: f64,
) -> Result<MultiTaskParity> {
    if classifiers.len() != 2 {
        return Err(Error::InvalidArgument("parity residuals are defined for two tasks".into()));
    }
    let outcome = compose_competitive(classifiers, tb)?;
    parity_residuals(classifiers, &outcome, &[g1.clone(), g2.clone()], epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaWitness {
    pub task: usize,
    pub stratum: u32,
    pub a1: u32,
    pub a2: u32,
    pub other_stratum: u32,
    /// Whether the other task's probability had to be shifted.
    pub perturbed: bool,
    pub classifiers: Vec<SoftClassifier>,
    pub report: MultiTaskParity,
}

// Per (a, z) of the task's groups: mean over the cell of the chance of
// losing a tie, restricted to the other task's stratum `zo`.
fn loss_weights(tb: &TieBreaker, task: usize, g: &GroupStructure, other: &GroupStructure, zo: u32) -> BTreeMap<(u32, u32), f64> {
    let mut out = BTreeMap::new();
    for (z, by_attr) in g.cells() {
        for (a, members) in by_attr {
            let sum: f64 = members
                .iter()
                .filter(|&&u| other.stratum[u] == zo)
                .map(|&u| 1.0 - tb.choice_probability(u, 3, task))
                .sum();
            out.insert((z, a), sum / members.len() as f64);
        }
    }
    out
}

/// Classifiers that each satisfy conditional parity alone but not under
/// task-competitive composition, built by shifting the competing task's
/// probability on one of its strata by `alpha`.
///
/// Both classifiers are constant per stratum: 0.5 on the audited task and
/// 0.25 on the competing one before the shift. Fails when tie losses are
/// balanced across every group and stratum intersection.
pub fn alpha_perturbation_witness(tb: &TieBreaker, g1: &GroupStructure, g2: &GroupStructure, alpha: f64) -> Result<AlphaWitness> {
    if tb.num_tasks() != 2 {
        return Err(Error::InvalidArgument("witness needs exactly two tasks".into()));
    }
    ensure_len(g1.len(), g2.len(), "second group structure")?;
    tb.check_universe(g1.len())?;
    if !(alpha > 0.0 && alpha < 0.75) {
        return Err(Error::InvalidArgument(format!("shift {alpha} must lie in (0, 0.75)")));
    }
    let groups = [g1, g2];
    let n = g1.len();
    for task in 0..2 {
        let (g, other) = (groups[task], groups[1 - task]);
        let other_strata: BTreeSet<u32> = other.stratum.iter().copied().collect();
        for &zo in &other_strata {
            let w = loss_weights(tb, task, g, other, zo);
            for (z, by_attr) in g.cells() {
                let attrs: Vec<u32> = by_attr.keys().copied().collect();
                for (i, &a1) in attrs.iter().enumerate() {
                    for &a2 in &attrs[i + 1..] {
                        if (w[&(z, a1)] - w[&(z, a2)]).abs() <= ZERO_RESIDUAL {
                            continue;
                        }
                        let own = SoftClassifier::constant(n, 0.5)?;
                        let competing = |shift: f64| -> Result<SoftClassifier> {
                            SoftClassifier::new((0..n).map(|u| if other.stratum[u] == zo { 0.25 + shift } else { 0.25 }).collect())
                        };
                        let pick = |c: SoftClassifier| -> Vec<SoftClassifier> {
                            if task == 0 {
                                vec![own.clone(), c]
                            } else {
                                vec![c, own.clone()]
                            }
                        };
                        let residual_at = |report: &MultiTaskParity| -> f64 {
                            report.tasks[task]
                                .residuals
                                .iter()
                                .find(|r| r.stratum == z && r.a1 == a1 && r.a2 == a2)
                                .map_or(0.0, |r| r.residual)
                        };
                        let mut classifiers = pick(competing(0.0)?);
                        let mut report = multi_task_parity_residual(&classifiers, tb, g1, g2, 0.0)?;
                        let mut perturbed = false;
                        if residual_at(&report).abs() <= ZERO_RESIDUAL {
                            classifiers = pick(competing(alpha)?);
                            report = multi_task_parity_residual(&classifiers, tb, g1, g2, 0.0)?;
                            perturbed = true;
                        }
                        return Ok(AlphaWitness {
                            task,
                            stratum: z,
                            a1,
                            a2,
                            other_stratum: zo,
                            perturbed,
                            classifiers,
                            report,
                        });
                    }
                }
            }
        }
    }
    Err(Error::Infeasible(
        "tie losses are balanced across every group and stratum intersection".into(),
    ))
}

/// Job ads (protected attribute gender) competing with home-goods ads aimed
/// at mothers, who prefer the home-goods ad whenever both are shown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MothersScenario {
    /// Gender 0 = man, 1 = woman; one skill stratum; indicator `mother`.
    pub groups: GroupStructure,
    pub jobs_before: SoftClassifier,
    /// Jobs bids raised for women until coarse parity returns.
    pub jobs_after: SoftClassifier,
    pub home_goods: SoftClassifier,
    pub tie_breaker: TieBreaker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MothersReport {
    pub coarse_before: FairnessReport,
    pub coarse_after: FairnessReport,
    pub subgroup_after: FairnessReport,
    /// Job-ad probability for men, women who are not mothers, and mothers.
    pub job_rates_after: [f64; 3],
}

impl MothersScenario {
    /// `size` men and `size` women, half of the women mothers.
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 || size % 2 != 0 {
            return Err(Error::InvalidArgument("group size must be a positive even number".into()));
        }
        let n = 2 * size;
        let attribute: Vec<u32> = (0..n).map(|u| u32::from(u >= size)).collect();
        let mother: Vec<bool> = (0..n).map(|u| u >= size + size / 2).collect();
        let groups = GroupStructure::single_stratum(attribute.clone()).with_indicator("mother", mother.clone())?;
        let home_goods = SoftClassifier::new(mother.iter().map(|&m| if m { 0.8 } else { 0.0 }).collect())?;
        Ok(Self {
            groups,
            jobs_before: SoftClassifier::constant(n, 0.5)?,
            jobs_after: SoftClassifier::new(attribute.iter().map(|&a| if a == 1 { 5.0 / 6.0 } else { 0.5 }).collect())?,
            home_goods,
            tie_breaker: TieBreaker::prefer(1, 2)?,
        })
    }

    pub fn run(&self, epsilon: f64) -> Result<MothersReport> {
        let before = compose_competitive(&[self.jobs_before.clone(), self.home_goods.clone()], &self.tie_breaker)?.task(0);
        let after = compose_competitive(&[self.jobs_after.clone(), self.home_goods.clone()], &self.tie_breaker)?.task(0);
        let size = self.groups.len() / 2;
        Ok(MothersReport {
            coarse_before: audit_parity_under_composition(&self.groups, &before, epsilon)?,
            coarse_after: audit_parity_under_composition(&self.groups, &after, epsilon)?,
            subgroup_after: audit_subgroup_parity(&self.groups, "mother", &after, epsilon)?,
            job_rates_after: [after[0], after[size], after[2 * size - 1]],
        })
    }
}

/// Every combination of race (three values), gender and age band, `copies`
/// times each. Returns the groups for a screening campaign (attribute race,
/// stratum age band) and for a grocery campaign (attribute race, stratum
/// gender).
pub fn screening_population(copies: usize) -> Result<(GroupStructure, GroupStructure)> {
    if copies == 0 {
        return Err(Error::InvalidArgument("need at least one copy".into()));
    }
    let mut race = Vec::new();
    let mut gender = Vec::new();
    let mut older = Vec::new();
    for r in 0..3 {
        for g in 0..2 {
            for o in 0..2 {
                for _ in 0..copies {
                    race.push(r);
                    gender.push(g);
                    older.push(o);
                }
            }
        }
    }
    Ok((GroupStructure::new(race.clone(), older)?, GroupStructure::new(race, gender)?))
}
