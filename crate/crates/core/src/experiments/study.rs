//! Runs a scenario over many random universes and aggregates the audits.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::generate_population;
use super::scenario::{
    ClassifierSpec, CohortMechanism, CompositionSpec, FunctionalOp, MetricSpec, QualificationSpec, Scenario, TieSpec,
};
use super::svg::{heat_scatter, TASK_COLORS};
use crate::cohort::{ptc_selection_probabilities, ws_selection_probabilities, ProbabilityMethod, MAX_EXACT_PTC};
use crate::competitive::{compose_competitive, randomize_then_classify, TieBreaker};
use crate::construct::{optimize_fair_classifier, AllocationTarget};
use crate::error::{Error, Result};
use crate::functional::{compose_and, compose_or, compose_threshold, compose_xor_exactly_one};
use crate::model::{
    audit_individual_fairness, FairnessReport, GroupStructure, SoftClassifier, Subject,
    TaskMetric,
};
use crate::sampling::derive_seed;
use crate::subset::{check_constrained_feasibility, FeasibilityReport};

/// One random draw of the population with its per-task metrics and
/// classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct UniverseDraw {
    pub index: usize,
    pub qualifications: Vec<Vec<f64>>,
    pub clamped: usize,
    pub metrics: Vec<TaskMetric>,
    pub classifiers: Vec<SoftClassifier>,
    pub groups: Vec<Option<GroupStructure>>,
}

pub fn universe_seed(scenario: &Scenario, index: usize) -> u64 {
    derive_seed(scenario.seed, index as u64)
}

/// Draws universe `index` and builds its classifiers, aborting if any of
/// them fails its own audit.
pub fn build_universe(scenario: &Scenario, index: usize) -> Result<UniverseDraw> {
    let n = scenario.population.size;
    let seed = universe_seed(scenario, index);
    let mut draw = UniverseDraw {
        index,
        qualifications: Vec::new(),
        clamped: 0,
        metrics: Vec::new(),
        classifiers: Vec::new(),
        groups: Vec::new(),
    };
    for (t, task) in scenario.tasks.iter().enumerate() {
        let q = match &task.qualification {
            QualificationSpec::Gaussian { mean, sd } => {
                let q = generate_population(n, *mean, *sd, derive_seed(seed, t as u64))?;
                draw.clamped += q.clamped;
                q.values
            }
            QualificationSpec::Explicit { values } => values.clone(),
        };
        let metric = match &task.metric {
            MetricSpec::AbsDiff => TaskMetric::abs_diff(&q)?,
            MetricSpec::Matrix(rows) => TaskMetric::new(rows.clone())?,
        };
        let classifier = match &task.classifier {
            ClassifierSpec::Explicit(p) => SoftClassifier::new(p.clone())?,
            ClassifierSpec::Optimize { cap } => optimize_fair_classifier(&metric, &AllocationTarget::new(q.clone(), *cap)?)?,
        };
        let own = audit_individual_fairness(&metric, classifier.probabilities(), scenario.epsilon)?;
        if !own.passes() {
            let first = &own.violations[0];
            return Err(Error::Infeasible(format!(
                "classifier for task {:?} in universe {index} fails its own audit: {} violating pair(s), first {:?} with excess {}",
                task.name,
                own.violations.len(),
                first.subject,
                first.excess
            )));
        }
        let groups = match &task.groups {
            Some(g) => Some(GroupStructure::new(
                g.attribute.clone(),
                g.stratum.clone().unwrap_or_else(|| vec![0; n]),
            )?),
            None => None,
        };
        draw.qualifications.push(q);
        draw.metrics.push(metric);
        draw.classifiers.push(classifier);
        draw.groups.push(groups);
    }
    Ok(draw)
}

/// Per-task result of one composition on one universe.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskOutcome {
    pub task: usize,
    pub probabilities: Vec<f64>,
    pub audit: FairnessReport,
    pub independent_allocation: f64,
    /// `|allocation - x_i * sum p|` for randomize-then-classify.
    pub identity_error: Option<f64>,
}

fn tie_breaker(scenario: &Scenario, tie: &TieSpec, draw: &UniverseDraw) -> Result<TieBreaker> {
    let n = scenario.population.size;
    let index = |name: &str| {
        scenario
            .task_index(name)
            .ok_or_else(|| Error::Scenario(format!("unknown task {name:?}")))
    };
    match tie {
        TieSpec::Rho(r) => TieBreaker::two_task_value(vec![*r; n]),
        TieSpec::RhoFrom(name) => TieBreaker::two_task_value(draw.qualifications[index(name)?].clone()),
        TieSpec::Order(order) => TieBreaker::strict_order(order.iter().map(|s| index(s)).collect::<Result<_>>()?),
        TieSpec::Uniform => TieBreaker::uniform(scenario.tasks.len()),
    }
}

fn outcome(scenario: &Scenario, draw: &UniverseDraw, t: usize, probabilities: Vec<f64>, identity_error: Option<f64>) -> Result<TaskOutcome> {
    Ok(TaskOutcome {
        task: t,
        audit: audit_individual_fairness(&draw.metrics[t], &probabilities, scenario.epsilon)?,
        probabilities,
        independent_allocation: draw.classifiers[t].allocation(),
        identity_error,
    })
}

/// Outcomes of one composition on one universe.
pub fn evaluate(scenario: &Scenario, composition: &CompositionSpec, draw: &UniverseDraw) -> Result<Vec<TaskOutcome>> {
    let index = |name: &str| {
        scenario
            .task_index(name)
            .ok_or_else(|| Error::Scenario(format!("unknown task {name:?}")))
    };
    match composition {
        CompositionSpec::Competitive { tie, .. } => {
            let tb = tie_breaker(scenario, tie, draw)?;
            let so = compose_competitive(&draw.classifiers, &tb)?;
            (0..so.num_tasks()).map(|t| outcome(scenario, draw, t, so.task(t), None)).collect()
        }
        CompositionSpec::RandomizeThenClassify { x, boost, .. } => {
            let boosted: Vec<SoftClassifier> = draw
                .classifiers
                .iter()
                .map(|c| SoftClassifier::new(c.probabilities().iter().map(|p| (p + boost).min(1.0)).collect()))
                .collect::<Result<_>>()?;
            let so = randomize_then_classify(&boosted, x)?;
            (0..so.num_tasks())
                .map(|t| {
                    let err = (so.allocation(t) - x[t] * boosted[t].allocation()).abs();
                    outcome(scenario, draw, t, so.task(t), Some(err))
                })
                .collect()
        }
        CompositionSpec::Functional {
            op, tasks, audit_against, k, ..
        } => {
            let cs: Vec<SoftClassifier> = tasks
                .iter()
                .map(|name| Ok(draw.classifiers[index(name)?].clone()))
                .collect::<Result<_>>()?;
            let composed = match op {
                FunctionalOp::Or => compose_or(&cs)?,
                FunctionalOp::And => compose_and(&cs)?,
                FunctionalOp::ExactlyOne => compose_xor_exactly_one(&cs)?,
                FunctionalOp::Threshold => compose_threshold(&cs, k.unwrap_or(1))?,
            };
            Ok(vec![outcome(scenario, draw, index(audit_against)?, composed, None)?])
        }
        CompositionSpec::Cohort {
            task, mechanism, n, trials, ..
        } => {
            let t = index(task)?;
            let c = &draw.classifiers[t];
            let probs = match mechanism {
                CohortMechanism::PermuteThenClassify => {
                    let method = if c.len() <= MAX_EXACT_PTC {
                        ProbabilityMethod::Exact
                    } else {
                        ProbabilityMethod::MonteCarlo {
                            trials: *trials,
                            seed: derive_seed(universe_seed(scenario, draw.index), 1 << 20),
                        }
                    };
                    ptc_selection_probabilities(c, *n, method)?.into_iter().map(|e| e.mean.clamp(0.0, 1.0)).collect()
                }
                CohortMechanism::WeightedSampling => ws_selection_probabilities(c, *n)?,
            };
            Ok(vec![outcome(scenario, draw, t, probs, None)?])
        }
        CompositionSpec::Constrained { .. } => Ok(Vec::new()),
    }
}

/// One line of `report.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub composition_type: String,
    pub task: String,
    /// Mean over universes of the percentage of pairs in violation.
    pub pct_pairs_violating: f64,
    /// Mean over universes with violations of the mean excess.
    pub avg_violation: Option<f64>,
    /// Mean over universes with violations of the largest excess.
    pub max_violation: Option<f64>,
    /// Largest excess in any universe.
    pub worst_violation: Option<f64>,
    pub universes: usize,
    pub universes_with_violations: usize,
}

/// One line of `pairs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub composition_type: String,
    pub task: String,
    pub universe: usize,
    pub comparisons: usize,
    pub u: usize,
    pub v: usize,
    pub distance: f64,
    pub observed: f64,
    pub excess: f64,
}

/// One line of `utility.csv`: mean allocations over universes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub composition_type: String,
    pub task: String,
    pub independent_allocation: f64,
    pub composed_allocation: f64,
    /// Mean fraction of the independent allocation lost to composition.
    pub loss: f64,
    /// Worst deviation from `x_i * sum p` over universes.
    pub identity_error: Option<f64>,
}

/// One line of `parity.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub composition_type: String,
    pub task: String,
    pub stratum: u32,
    pub a1: u32,
    pub a2: u32,
    /// Mean over universes of the group-mean gap.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub file_name: String,
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyOutput {
    pub rows: Vec<ReportRow>,
    pub pairs: Vec<PairRecord>,
    pub utility: Vec<UtilityRow>,
    pub parity: Vec<ParityRow>,
    pub feasibility: Vec<(String, FeasibilityReport)>,
    pub plots: Vec<Plot>,
    /// Fraction of qualification draws that were clamped.
    pub clamped_fraction: f64,
}

impl StudyOutput {
    pub fn row(&self, composition: &str, task: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.composition_type == composition && r.task == task)
    }

    pub fn utility_row(&self, composition: &str, task: &str) -> Option<&UtilityRow> {
        self.utility.iter().find(|r| r.composition_type == composition && r.task == task)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn plot_axes(scenario: &Scenario) -> Option<(String, String)> {
    (scenario.tasks.len() == 2).then(|| {
        (
            format!("{} qualification", scenario.tasks[0].name),
            format!("{} qualification", scenario.tasks[1].name),
        )
    })
}

fn task_plot(scenario: &Scenario, draw: &UniverseDraw, title: &str, file_stem: &str, t: usize, probs: &[f64]) -> Option<Plot> {
    let (x_label, y_label) = plot_axes(scenario)?;
    Some(Plot {
        file_name: format!("{file_stem}.svg"),
        svg: heat_scatter(
            title,
            &x_label,
            &y_label,
            &draw.qualifications[0],
            &draw.qualifications[1],
            probs,
            TASK_COLORS[t % TASK_COLORS.len()],
        ),
    })
}

/// Runs every composition of the scenario. Universes are built and
/// evaluated in parallel; results are gathered in universe order.
pub fn run_scenario(scenario: &Scenario) -> Result<StudyOutput> {
    let problems = scenario.problems();
    if !problems.is_empty() {
        return Err(Error::Scenario(problems.join("; ")));
    }
    let needed = scenario
        .compositions
        .iter()
        .map(|c| c.universes(scenario.universes))
        .max()
        .unwrap_or(0)
        .max(1);
    let draws: Vec<UniverseDraw> = (0..needed)
        .into_par_iter()
        .map(|i| build_universe(scenario, i))
        .collect::<Result<_>>()?;
    let mut out = StudyOutput {
        clamped_fraction: draws.iter().map(|d| d.clamped).sum::<usize>() as f64
            / (needed * scenario.population.size * scenario.tasks.len()) as f64,
        ..StudyOutput::default()
    };
    for (t, task) in scenario.tasks.iter().enumerate() {
        out.plots.extend(task_plot(
            scenario,
            &draws[0],
            &format!("{}: independent", task.name),
            &format!("independent_{}", slug(&task.name)),
            t,
            draws[0].classifiers[t].probabilities(),
        ));
    }
    for composition in &scenario.compositions {
        let label = composition.label().to_string();
        if let CompositionSpec::Constrained {
            n,
            p,
            a_size,
            b_size,
            parts,
            fail_if_infeasible,
            ..
        } = composition
        {
            let parts: Vec<(f64, f64)> = parts.iter().map(|x| (x[0], x[1])).collect();
            let report = check_constrained_feasibility(*a_size, *b_size, *n, *p, &parts)?;
            if *fail_if_infeasible && !report.feasible {
                return Err(Error::Infeasible(format!(
                    "composition {label:?}: gap {} exceeds slack {}",
                    report.gap, report.slack
                )));
            }
            out.feasibility.push((label, report));
            continue;
        }
        let count = composition.universes(scenario.universes);
        let results: Vec<Vec<TaskOutcome>> = draws[..count]
            .par_iter()
            .map(|d| evaluate(scenario, composition, d))
            .collect::<Result<_>>()?;
        let tasks: Vec<usize> = results[0].iter().map(|o| o.task).collect();
        for (slot, &t) in tasks.iter().enumerate() {
            let name = scenario.tasks[t].name.clone();
            let per: Vec<&TaskOutcome> = results.iter().map(|r| &r[slot]).collect();
            let violating: Vec<&&TaskOutcome> = per.iter().filter(|o| !o.audit.passes()).collect();
            out.rows.push(ReportRow {
                composition_type: label.clone(),
                task: name.clone(),
                pct_pairs_violating: mean(per.iter().map(|o| 100.0 * o.audit.fraction_violating())).unwrap_or(0.0),
                avg_violation: mean(violating.iter().map(|o| o.audit.mean_excess())),
                max_violation: mean(violating.iter().map(|o| o.audit.max_excess())),
                worst_violation: violating.iter().map(|o| o.audit.max_excess()).reduce(f64::max),
                universes: per.len(),
                universes_with_violations: violating.len(),
            });
            if scenario.dump_pairs {
                for (i, o) in per.iter().enumerate() {
                    for v in &o.audit.violations {
                        if let Subject::Pair { u, v: w } = v.subject {
                            out.pairs.push(PairRecord {
                                composition_type: label.clone(),
                                task: name.clone(),
                                universe: i,
                                comparisons: o.audit.comparisons,
                                u,
                                v: w,
                                distance: v.allowed,
                                observed: v.observed,
                                excess: v.excess,
                            });
                        }
                    }
                }
            }
            let composed: Vec<f64> = per.iter().map(|o| o.probabilities.iter().sum()).collect();
            out.utility.push(UtilityRow {
                composition_type: label.clone(),
                task: name.clone(),
                independent_allocation: mean(per.iter().map(|o| o.independent_allocation)).unwrap_or(0.0),
                composed_allocation: mean(composed.iter().copied()).unwrap_or(0.0),
                loss: mean(per.iter().zip(&composed).map(|(o, c)| {
                    if o.independent_allocation > 0.0 {
                        1.0 - c / o.independent_allocation
                    } else {
                        0.0
                    }
                }))
                .unwrap_or(0.0),
                identity_error: per.iter().filter_map(|o| o.identity_error).reduce(f64::max),
            });
            if let Some(g) = &draws[0].groups[t] {
                let mut gaps: Vec<ParityRow> = Vec::new();
                for (i, o) in per.iter().enumerate() {
                    let groups = draws[i].groups[t].as_ref().unwrap_or(g);
                    for (j, (z, a1, a2, gap)) in all_gaps(groups, &o.probabilities)?.into_iter().enumerate() {
                        if i == 0 {
                            gaps.push(ParityRow {
                                composition_type: label.clone(),
                                task: name.clone(),
                                stratum: z,
                                a1,
                                a2,
                                gap: 0.0,
                            });
                        }
                        gaps[j].gap += gap / per.len() as f64;
                    }
                }
                out.parity.extend(gaps);
            }
            if matches!(
                composition,
                CompositionSpec::Competitive { .. } | CompositionSpec::RandomizeThenClassify { .. }
            ) {
                out.plots.extend(task_plot(
                    scenario,
                    &draws[0],
                    &format!("{}: {label}", name),
                    &format!("{}_{}", slug(&label), slug(&name)),
                    t,
                    &per[0].probabilities,
                ));
            }
        }
    }
    Ok(out)
}

// Signed gap between every pair of attribute means within each stratum.
fn all_gaps(g: &GroupStructure, q: &[f64]) -> Result<Vec<(u32, u32, u32, f64)>> {
    let means = crate::model::group_means(g, q)?;
    let mut out = Vec::new();
    for (z, by_attr) in g.cells() {
        let attrs: Vec<u32> = by_attr.keys().copied().collect();
        for (i, &a1) in attrs.iter().enumerate() {
            for &a2 in &attrs[i + 1..] {
                out.push((z, a1, a2, means[&(z, a1)] - means[&(z, a2)]));
            }
        }
    }
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Scenario(format!("writing output: {e}"))
}

/// Writes `report.csv`, `pairs.csv`, `utility.csv`, the optional
/// `parity.csv` and `feasibility.csv`, and every plot into `dir`.
pub fn write_outputs(out: &StudyOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(csv_error)?;
    let mut w = csv::Writer::from_path(dir.join("report.csv")).map_err(csv_error)?;
    w.write_record(["composition_type", "task", "pct_pairs_violating", "avg_violation", "max_violation"])
        .map_err(csv_error)?;
    for r in &out.rows {
        w.write_record([
            r.composition_type.clone(),
            r.task.clone(),
            r.pct_pairs_violating.to_string(),
            opt(r.avg_violation),
            opt(r.max_violation),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;

    let mut w = csv::Writer::from_path(dir.join("pairs.csv")).map_err(csv_error)?;
    w.write_record(["composition_type", "task", "universe", "comparisons", "u", "v", "distance", "observed", "excess"])
        .map_err(csv_error)?;
    for p in &out.pairs {
        w.write_record([
            p.composition_type.clone(),
            p.task.clone(),
            p.universe.to_string(),
            p.comparisons.to_string(),
            p.u.to_string(),
            p.v.to_string(),
            p.distance.to_string(),
            p.observed.to_string(),
            p.excess.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;

    let mut w = csv::Writer::from_path(dir.join("utility.csv")).map_err(csv_error)?;
    w.write_record(["composition_type", "task", "independent_allocation", "composed_allocation", "loss", "identity_error"])
        .map_err(csv_error)?;
    for u in &out.utility {
        w.write_record([
            u.composition_type.clone(),
            u.task.clone(),
            u.independent_allocation.to_string(),
            u.composed_allocation.to_string(),
            u.loss.to_string(),
            opt(u.identity_error),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;

    if !out.parity.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("parity.csv")).map_err(csv_error)?;
        w.write_record(["composition_type", "task", "stratum", "a1", "a2", "gap"]).map_err(csv_error)?;
        for p in &out.parity {
            w.write_record([
                p.composition_type.clone(),
                p.task.clone(),
                p.stratum.to_string(),
                p.a1.to_string(),
                p.a2.to_string(),
                p.gap.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(csv_error)?;
    }

    if !out.feasibility.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("feasibility.csv")).map_err(csv_error)?;
        w.write_record(["composition_type", "mean_a_lower", "mean_b_upper", "slack", "gap", "feasible", "p_max"])
            .map_err(csv_error)?;
        for (label, r) in &out.feasibility {
            w.write_record([
                label.clone(),
                r.mean_a_lower.to_string(),
                r.mean_b_upper.to_string(),
                r.slack.to_string(),
                r.gap.to_string(),
                r.feasible.to_string(),
                r.p_max.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(csv_error)?;
    }

    for plot in &out.plots {
        fs::write(dir.join(&plot.file_name), &plot.svg).map_err(csv_error)?;
    }
    Ok(())
}
