//! Deterministic, parallel Monte Carlo.
//!
//! Trials are split over a fixed number of chunks. Chunk `c` draws from
//! ChaCha8 seeded with the experiment seed on stream `c`, so results depend
//! only on `(seed, trials)` and never on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const CHUNKS: u64 = 64;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub trials: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_err: 0.0,
            trials: 0,
        }
    }

    /// True iff `value` lies within `k` standard errors of the mean.
    pub fn within_sigmas(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_err
    }
}

pub fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Seed for the `index`-th independent sub-experiment of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    use rand::RngCore;
    chunk_rng(seed, index.wrapping_add(1 << 32)).next_u64()
}

fn chunk_trials(trials: u64, chunk: u64) -> u64 {
    trials / CHUNKS + u64::from(chunk < trials % CHUNKS)
}

/// Runs `trials` draws of a vector of `dim` observations and estimates the
/// mean of each coordinate.
pub fn monte_carlo_vec<F>(trials: u64, seed: u64, dim: usize, draw: F) -> Vec<Estimate>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let mut sum = vec![0.0; dim];
            let mut sq = vec![0.0; dim];
            let mut obs = vec![0.0; dim];
            for _ in 0..chunk_trials(trials, c) {
                obs.iter_mut().for_each(|x| *x = 0.0);
                draw(&mut rng, &mut obs);
                for i in 0..dim {
                    sum[i] += obs[i];
                    sq[i] += obs[i] * obs[i];
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; dim];
    let mut sq = vec![0.0; dim];
    for (s, q) in &partials {
        for i in 0..dim {
            sum[i] += s[i];
            sq[i] += q[i];
        }
    }
    let t = trials as f64;
    (0..dim)
        .map(|i| {
            if trials == 0 {
                return Estimate {
                    mean: f64::NAN,
                    std_err: f64::NAN,
                    trials,
                };
            }
            let mean = sum[i] / t;
            let var = if trials > 1 {
                ((sq[i] - t * mean * mean) / (t - 1.0)).max(0.0)
            } else {
                0.0
            };
            Estimate {
                mean,
                std_err: (var / t).sqrt(),
                trials,
            }
        })
        .collect()
}

pub fn monte_carlo<F>(trials: u64, seed: u64, draw: F) -> Estimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    monte_carlo_vec(trials, seed, 1, |rng, obs| obs[0] = draw(rng))[0]
}
