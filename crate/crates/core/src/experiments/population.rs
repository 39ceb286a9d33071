use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TaskMetric;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qualifications {
    pub values: Vec<f64>,
    /// Draws that fell outside `[0, 1]` and were clamped.
    pub clamped: usize,
}

/// `n` independent normal draws clamped to `[0, 1]`.
pub fn generate_population(n: usize, mean: f64, sd: f64, seed: u64) -> Result<Qualifications> {
    if n == 0 {
        return Err(Error::InvalidArgument("population must be nonempty".into()));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidArgument(format!("normal({mean}, {sd}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clamped = 0;
    let values = (0..n)
        .map(|_| {
            let x: f64 = normal.sample(&mut rng);
            if !(0.0..=1.0).contains(&x) {
                clamped += 1;
            }
            x.clamp(0.0, 1.0)
        })
        .collect();
    Ok(Qualifications { values, clamped })
}

pub fn qualification_metric(q: &Qualifications) -> Result<TaskMetric> {
    TaskMetric::abs_diff(&q.values)
}
