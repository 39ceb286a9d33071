//! Scenario files: what population to draw, which classifiers to build and
//! how to compose them.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DEFAULT_EPSILON;

pub const SCHEMA_VERSION: u32 = 1;

fn one() -> usize {
    1
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn yes() -> bool {
    true
}

fn default_trials() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    /// Random universes drawn per composition unless it overrides the count.
    #[serde(default = "one")]
    pub universes: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Write every violating pair to `pairs.csv`.
    #[serde(default = "yes")]
    pub dump_pairs: bool,
    pub population: PopulationSpec,
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub compositions: Vec<CompositionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub qualification: QualificationSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    pub classifier: ClassifierSpec,
    #[serde(default)]
    pub groups: Option<GroupSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QualificationSpec {
    /// Normal draws clamped to `[0, 1]`.
    Gaussian { mean: f64, sd: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpec {
    /// Absolute difference of qualifications.
    #[default]
    AbsDiff,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSpec {
    Explicit(Vec<f64>),
    /// Fair classifier maximizing total qualification of positives with
    /// expected allocation at most `cap`.
    Optimize { cap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub attribute: Vec<u32>,
    #[serde(default)]
    pub stratum: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieSpec {
    /// Probability of taking the first task when both are offered.
    Rho(f64),
    /// Per-element probability equal to that element's qualification for
    /// the named task.
    RhoFrom(String),
    /// Strict preference order of task names.
    Order(Vec<String>),
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalOp {
    Or,
    And,
    ExactlyOne,
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortMechanism {
    PermuteThenClassify,
    WeightedSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompositionSpec {
    Competitive {
        label: String,
        tie: TieSpec,
        #[serde(default)]
        universes: Option<usize>,
    },
    RandomizeThenClassify {
        label: String,
        x: Vec<f64>,
        /// Added to every probability (capped at one) before composing.
        #[serde(default)]
        boost: f64,
        #[serde(default)]
        universes: Option<usize>,
    },
    Functional {
        label: String,
        op: FunctionalOp,
        tasks: Vec<String>,
        audit_against: String,
        #[serde(default)]
        k: Option<usize>,
        #[serde(default)]
        universes: Option<usize>,
    },
    Cohort {
        label: String,
        task: String,
        mechanism: CohortMechanism,
        n: usize,
        #[serde(default = "default_trials")]
        trials: u64,
        #[serde(default)]
        universes: Option<usize>,
    },
    Constrained {
        label: String,
        n: usize,
        p: f64,
        a_size: usize,
        b_size: usize,
        /// `[beta, gamma]` per part.
        parts: Vec<[f64; 2]>,
        #[serde(default)]
        fail_if_infeasible: bool,
    },
}

impl CompositionSpec {
    pub fn label(&self) -> &str {
        match self {
            Self::Competitive { label, .. }
            | Self::RandomizeThenClassify { label, .. }
            | Self::Functional { label, .. }
            | Self::Cohort { label, .. }
            | Self::Constrained { label, .. } => label,
        }
    }

    pub fn universes(&self, default: usize) -> usize {
        match self {
            Self::Competitive { universes, .. }
            | Self::RandomizeThenClassify { universes, .. }
            | Self::Functional { universes, .. }
            | Self::Cohort { universes, .. } => universes.unwrap_or(default),
            Self::Constrained { .. } => 0,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Self = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        let problems = scenario.problems();
        if !problems.is_empty() {
            return Err(Error::Scenario(problems.join("; ")));
        }
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.name == name)
    }

    /// Every schema problem found, empty when the scenario is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.population.size;
        if self.schema_version != SCHEMA_VERSION {
            out.push(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if n == 0 {
            out.push("population.size must be at least 1".into());
        }
        if self.universes == 0 {
            out.push("universes must be at least 1".into());
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            out.push(format!("epsilon {} must be a finite nonnegative number", self.epsilon));
        }
        if self.tasks.is_empty() {
            out.push("at least one task is required".into());
        }
        let mut names = BTreeSet::new();
        for t in &self.tasks {
            if !names.insert(t.name.as_str()) {
                out.push(format!("duplicate task name {:?}", t.name));
            }
            match &t.qualification {
                QualificationSpec::Gaussian { mean, sd } => {
                    if !mean.is_finite() || !(sd.is_finite() && *sd >= 0.0) {
                        out.push(format!("task {:?}: gaussian needs finite mean and sd >= 0", t.name));
                    }
                }
                QualificationSpec::Explicit { values } => {
                    if values.len() != n {
                        out.push(format!("task {:?}: {} qualifications for {n} elements", t.name, values.len()));
                    }
                    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        out.push(format!("task {:?}: qualifications must lie in [0, 1]", t.name));
                    }
                }
            }
            if let MetricSpec::Matrix(rows) = &t.metric {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    out.push(format!("task {:?}: metric matrix must be {n} x {n}", t.name));
                }
            }
            match &t.classifier {
                ClassifierSpec::Explicit(p) => {
                    if p.len() != n || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        out.push(format!("task {:?}: explicit classifier needs {n} probabilities in [0, 1]", t.name));
                    }
                }
                ClassifierSpec::Optimize { cap } => {
                    if !(cap.is_finite() && *cap >= 0.0) {
                        out.push(format!("task {:?}: cap must be nonnegative", t.name));
                    }
                }
            }
            if let Some(g) = &t.groups {
                if g.attribute.len() != n || g.stratum.as_ref().is_some_and(|s| s.len() != n) {
                    out.push(format!("task {:?}: group columns must have {n} entries", t.name));
                }
            }
        }
        let known = |name: &String, out: &mut Vec<String>, label: &str| {
            if !names.contains(name.as_str()) {
                out.push(format!("composition {label:?}: unknown task {name:?}"));
            }
        };
        let mut labels = BTreeSet::new();
        for c in &self.compositions {
            let label = c.label();
            if !labels.insert(label) {
                out.push(format!("duplicate composition label {label:?}"));
            }
            if c.universes(self.universes) == 0 && !matches!(c, CompositionSpec::Constrained { .. }) {
                out.push(format!("composition {label:?}: universes must be at least 1"));
            }
            match c {
                CompositionSpec::Competitive { tie, .. } => match tie {
                    TieSpec::Rho(r) => {
                        if self.tasks.len() != 2 || !(0.0..=1.0).contains(r) {
                            out.push(format!("composition {label:?}: rho needs two tasks and a value in [0, 1]"));
                        }
                    }
                    TieSpec::RhoFrom(name) => {
                        known(name, &mut out, label);
                        if self.tasks.len() != 2 {
                            out.push(format!("composition {label:?}: rho needs two tasks"));
                        }
                    }
                    TieSpec::Order(order) => {
                        let set: BTreeSet<&str> = order.iter().map(String::as_str).collect();
                        if order.len() != self.tasks.len() || set != names {
                            out.push(format!("composition {label:?}: order must list every task once"));
                        }
                    }
                    TieSpec::Uniform => {}
                },
                CompositionSpec::RandomizeThenClassify { x, boost, .. } => {
                    let total: f64 = x.iter().sum();
                    if x.len() != self.tasks.len() || x.iter().any(|v| !(0.0..=1.0).contains(v)) || (total - 1.0).abs() > 1e-12 {
                        out.push(format!("composition {label:?}: x must be a distribution over the tasks"));
                    }
                    if !(0.0..=1.0).contains(boost) {
                        out.push(format!("composition {label:?}: boost must lie in [0, 1]"));
                    }
                }
                CompositionSpec::Functional {
                    op, tasks, audit_against, k, ..
                } => {
                    if tasks.is_empty() {
                        out.push(format!("composition {label:?}: needs at least one task"));
                    }
                    for t in tasks {
                        known(t, &mut out, label);
                    }
                    known(audit_against, &mut out, label);
                    if *op == FunctionalOp::Threshold && !k.is_some_and(|k| k <= tasks.len()) {
                        out.push(format!("composition {label:?}: threshold needs k <= number of tasks"));
                    }
                }
                CompositionSpec::Cohort { task, n: size, trials, .. } => {
                    known(task, &mut out, label);
                    if *size == 0 || *size > n {
                        out.push(format!("composition {label:?}: cohort size must be in 1..={n}"));
                    }
                    if *trials == 0 {
                        out.push(format!("composition {label:?}: trials must be positive"));
                    }
                }
                CompositionSpec::Constrained { parts, .. } => {
                    if parts.is_empty() {
                        out.push(format!("composition {label:?}: needs at least one part"));
                    }
                }
            }
        }
        out
    }
}
