//! Small self-contained walkthroughs printed by `faircomp demo <name>`.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::cohort::{
    online_cohort, ptc_selection_probabilities, statistical_parity_online, ws_pair_coefficient, ws_selection_probabilities,
    CohortMode, CohortSpec, ProbabilityMethod,
};
use crate::competitive::{find_violation_witness, randomize_then_classify, TieBreaker, WitnessSearch};
use crate::error::{Error, Result};
use crate::functional::{and_witness, compose_or};
use crate::group::{bimodal_population, MothersScenario};
use crate::model::{audit_individual_fairness, group_means, SoftClassifier, TaskMetric, DEFAULT_EPSILON};
use crate::sampling::chunk_rng;
use crate::subset::check_constrained_feasibility;

pub const DEMOS: [&str; 10] = [
    "or-divergence",
    "bimodal-parity",
    "and-unfairness",
    "competitive-witness",
    "ptc-vs-oracle",
    "ws-closed-form",
    "constrained-infeasible",
    "mothers-subgroup",
    "statistical-parity-adversarial",
    "rtc-allocation",
];

pub fn run_demo(name: &str) -> Result<String> {
    let mut s = String::new();
    match name {
        "or-divergence" => or_divergence(&mut s)?,
        "bimodal-parity" => bimodal_parity(&mut s)?,
        "and-unfairness" => and_unfairness(&mut s)?,
        "competitive-witness" => competitive_witness(&mut s)?,
        "ptc-vs-oracle" => ptc_vs_oracle(&mut s)?,
        "ws-closed-form" => ws_closed_form(&mut s)?,
        "constrained-infeasible" => constrained_infeasible(&mut s)?,
        "mothers-subgroup" => mothers_subgroup(&mut s)?,
        "statistical-parity-adversarial" => statistical_parity_adversarial(&mut s)?,
        "rtc-allocation" => rtc_allocation(&mut s)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown demo {other:?}; available: {}",
                DEMOS.join(", ")
            )))
        }
    }
    Ok(s)
}

fn or_divergence(s: &mut String) -> Result<()> {
    let m = TaskMetric::uniform(2, 0.49)?;
    let c = SoftClassifier::new(vec![0.5, 0.01])?;
    let composed = compose_or(&[c.clone(), c])?;
    let r = audit_individual_fairness(&m, &composed, DEFAULT_EPSILON)?;
    let _ = writeln!(s, "OR of a fair classifier with itself");
    let _ = writeln!(s, "  single run: u = 0.5, v = 0.01, allowed gap 0.49");
    let _ = writeln!(s, "  twice:      u = {}, v = {}", composed[0], composed[1]);
    let _ = writeln!(s, "  gap {} exceeds the allowed 0.49 by {:.4}", composed[0] - composed[1], r.max_excess());
    Ok(())
}

fn bimodal_parity(s: &mut String) -> Result<()> {
    let (g, c) = bimodal_population();
    let before = group_means(&g, c.probabilities())?;
    let composed = compose_or(&[c.clone(), c])?;
    let after = group_means(&g, &composed)?;
    let _ = writeln!(s, "Conditional parity under OR: one group at 0.75, the other split between 1 and 0.5");
    let _ = writeln!(s, "  alone:      {} vs {}", before[&(0, 0)], before[&(0, 1)]);
    let _ = writeln!(s, "  OR twice:   {} vs {}", after[&(0, 0)], after[&(0, 1)]);
    Ok(())
}

fn and_unfairness(s: &mut String) -> Result<()> {
    let m = TaskMetric::abs_diff(&[0.2, 0.5, 0.6])?;
    let w = and_witness(&m, &m, &m)?;
    let (u, v) = w.pair;
    let _ = writeln!(s, "AND of two fair classifiers, audited against the same metric");
    for (i, c) in w.classifiers.iter().enumerate() {
        let _ = writeln!(s, "  classifier {i}: p_{u} = {}, p_{v} = {}", c.p(u), c.p(v));
    }
    let _ = writeln!(
        s,
        "  AND: p_{u} = {}, p_{v} = {}, distance {}, excess {}",
        w.composed[u],
        w.composed[v],
        m.get(u, v),
        w.pair_excess()
    );
    Ok(())
}

fn competitive_witness(s: &mut String) -> Result<()> {
    let first = TaskMetric::abs_diff(&[0.1, 0.3, 0.6, 0.65])?;
    let second = TaskMetric::abs_diff(&[0.9, 0.2, 0.5, 0.4])?;
    let tb = TieBreaker::prefer(1, 2)?;
    let w = find_violation_witness(&first, &second, &tb, WitnessSearch::default())?;
    let (u, v) = w.pair;
    let _ = writeln!(s, "Task-competitive composition, second task always preferred");
    let _ = writeln!(s, "  pair ({u}, {v}): first-task distance {}", first.get(u, v));
    let _ = writeln!(
        s,
        "  composed first task: {} vs {}, excess {}",
        w.outcome.get(u, 0),
        w.outcome.get(v, 0),
        w.excess
    );
    Ok(())
}

fn ptc_vs_oracle(s: &mut String) -> Result<()> {
    let c = SoftClassifier::new(vec![0.75, 1.0, 0.5])?;
    let exact = ptc_selection_probabilities(&c, 1, ProbabilityMethod::Exact)?;
    let mc = ptc_selection_probabilities(
        &c,
        1,
        ProbabilityMethod::MonteCarlo {
            trials: 200_000,
            seed: 7,
        },
    )?;
    let _ = writeln!(s, "PermuteThenClassify, cohort of one, groups {{0}} and {{1, 2}}");
    let _ = writeln!(
        s,
        "  exact group means: {} vs {}",
        exact[0].mean,
        (exact[1].mean + exact[2].mean) / 2.0
    );
    let _ = writeln!(
        s,
        "  Monte Carlo:       {:.4} vs {:.4} (200000 trials)",
        mc[0].mean,
        (mc[1].mean + mc[2].mean) / 2.0
    );
    let _ = writeln!(s, "  the classifier gave both groups mean 0.75");
    Ok(())
}

fn ws_closed_form(s: &mut String) -> Result<()> {
    let c = SoftClassifier::new(vec![0.9, 0.6, 0.3, 0.2, 0.5])?;
    let n = 2;
    let closed = ws_selection_probabilities(&c, n)?;
    let p = c.probabilities();
    let mut enumerated = vec![0.0; p.len()];
    let mut total = 0.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let w = p[i] + p[j];
            total += w;
            enumerated[i] += w;
            enumerated[j] += w;
        }
    }
    let _ = writeln!(s, "Weighted sampling, N = 5, n = 2");
    for (u, (a, b)) in closed.iter().zip(&enumerated).enumerate() {
        let _ = writeln!(s, "  element {u}: closed form {a:.6}, enumeration {:.6}", b / total);
    }
    let _ = writeln!(s, "  pair coefficient {:.6}", ws_pair_coefficient(5, n, c.allocation())?);
    Ok(())
}

fn constrained_infeasible(s: &mut String) -> Result<()> {
    let parts = [(0.4, 0.25), (0.5, 0.1), (0.1, 0.0)];
    let r = check_constrained_feasibility(100, 1000, 550, 0.15, &parts)?;
    let _ = writeln!(s, "Constrained cohort: |A| = 100, |B| = 1000, n = 550, 15% reserved for A");
    let _ = writeln!(s, "  slack {:.4}, gap {:.4}, feasible {}", r.slack, r.gap, r.feasible);
    let _ = writeln!(s, "  largest feasible share for A: {:.4}", r.p_max);
    let blow = check_constrained_feasibility(5, 25, 10, 0.5, &[(1.0, 0.0)])?;
    let _ = writeln!(s, "  exact copies (|B| = 5|A|, half reserved): gap {:.4}", blow.gap);
    Ok(())
}

fn mothers_subgroup(s: &mut String) -> Result<()> {
    let r = MothersScenario::new(4)?.run(DEFAULT_EPSILON)?;
    let [men, women, mothers] = r.job_rates_after;
    let _ = writeln!(s, "Job ads competing with home-goods ads aimed at mothers");
    let _ = writeln!(s, "  before raising bids, gender parity passes: {}", r.coarse_before.passes());
    let _ = writeln!(s, "  after raising bids, gender parity passes:  {}", r.coarse_after.passes());
    let _ = writeln!(s, "  job ad rates: men {men:.4}, other women {women:.4}, mothers {mothers:.4}");
    let _ = writeln!(s, "  parity with the mother indicator passes:   {}", r.subgroup_after.passes());
    Ok(())
}

fn statistical_parity_adversarial(s: &mut String) -> Result<()> {
    let groups = [0, 0, 0, 0, 1, 1, 1, 1];
    let stream: Vec<usize> = (0..8).collect();
    let shares = BTreeMap::from([(0, 0.5), (1, 0.5)]);
    let sel = statistical_parity_online(&stream, &groups, &shares, 4)?;
    let _ = writeln!(s, "Online statistical parity, 4 seats split evenly, arrivals ordered by an adversary");
    let _ = writeln!(s, "  selected {:?}", sel.selected);
    let _ = writeln!(s, "  {}", sel.warning);
    let c = SoftClassifier::constant(8, 0.5)?;
    let spec = CohortSpec::new(4, CohortMode::OnlineAdversarialUnknownLength)?;
    match online_cohort(spec, &c, &stream, &mut chunk_rng(1, 0)) {
        Err(e) => {
            let _ = writeln!(s, "  individually fair selection with unknown stream length: {e}");
        }
        Ok(_) => unreachable!("unknown-length streams are always rejected"),
    }
    Ok(())
}

fn rtc_allocation(s: &mut String) -> Result<()> {
    let first = SoftClassifier::new(vec![0.9, 0.4, 0.7, 0.2])?;
    let second = SoftClassifier::new(vec![0.3, 0.8, 0.6, 0.5])?;
    let so = randomize_then_classify(&[first.clone(), second.clone()], &[0.5, 0.5])?;
    let _ = writeln!(s, "RandomizeThenClassify with each task drawn half the time");
    for (t, c) in [first, second].iter().enumerate() {
        let _ = writeln!(
            s,
            "  task {t}: alone {:.4}, composed {:.4}",
            c.allocation(),
            so.allocation(t)
        );
    }
    Ok(())
}
