//! Monte Carlo rollouts of the reset chain, an oracle independent of the
//! matrix code.
//!
//! The trajectory is cut into reset blocks. Block `k` draws everything (its
//! length, its starting state, all actions and rewards) from ChaCha8 stream
//! `k` of the configured seed, so blocks can be simulated in any order or in
//! parallel and still give the same estimate bit for bit.

use nalgebra::DVector;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Geometric;
use rayon::prelude::*;
use serde::Serialize;

use crate::arch::{Hypothesis, RewardSign};
use crate::error::{Error, Result};
use crate::model::{build_block, PolicyTable, RewardVector, TaskSpec};

pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.9), stream k for reset block k";
pub const DEFAULT_BOOTSTRAP: usize = 200;
/// Stream reserved for the bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RolloutConfig {
    pub n_steps: u64,
    /// Discarded prefix; `None` means `ceil(10 / r)`.
    pub burn_in: Option<u64>,
    pub seed: u64,
    pub bootstrap: usize,
}

impl RolloutConfig {
    pub fn new(n_steps: u64, seed: u64) -> Self {
        RolloutConfig {
            n_steps,
            burn_in: None,
            seed,
            bootstrap: DEFAULT_BOOTSTRAP,
        }
    }

    pub fn resolved_burn_in(&self, r: f64) -> u64 {
        self.burn_in.unwrap_or_else(|| (10.0 / r).ceil() as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub q_hat: f64,
    pub stderr: f64,
    /// Reset blocks contributing at least one counted step.
    pub n_effective: usize,
    /// Resets observed inside the simulated horizon.
    pub n_resets: u64,
    pub reset_rate: f64,
    pub n_steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub bootstrap: usize,
    pub rng: String,
    pub arch: String,
    pub k_a: f64,
    pub k_b: f64,
    pub r: f64,
}

impl EstimateReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Cumulative action probabilities per observation.
struct Sampler {
    cum: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(policy: &PolicyTable) -> Self {
        let cum = (0..policy.n_observations())
            .map(|o| {
                let mut acc = 0.0;
                (0..policy.n_actions())
                    .map(|a| {
                        acc += policy.prob(a, o);
                        acc
                    })
                    .collect()
            })
            .collect();
        Sampler { cum }
    }

    #[inline]
    fn action(&self, obs: usize, u: f64) -> usize {
        let col = &self.cum[obs];
        let x = u * col[col.len() - 1];
        col.iter().position(|&c| x < c).unwrap_or(col.len() - 1)
    }
}

#[derive(Clone, Copy, Default)]
struct BlockTally {
    counted: u64,
    wrong: u64,
}

/// Wrong-arm frequency of the reset chain, with a block-bootstrap error bar.
pub fn rollout_estimate_q(
    task: &TaskSpec,
    policy: &PolicyTable,
    cfg: &RolloutConfig,
) -> Result<EstimateReport> {
    let space = task.space();
    policy.check_shape(&space)?;
    let r = task.r();
    if r <= 0.0 {
        return Err(Error::Domain("rollouts need r > 0".into()));
    }
    let burn_in = cfg.resolved_burn_in(r);
    if cfg.n_steps <= burn_in {
        return Err(Error::Domain(format!(
            "n_steps ({}) must exceed burn_in ({burn_in})",
            cfg.n_steps
        )));
    }
    let geometric = Geometric::new(r).map_err(|e| Error::Domain(e.to_string()))?;
    // block lengths come first in each block's stream
    let mut starts = Vec::new();
    let mut lengths = Vec::new();
    let mut pos = 0u64;
    while pos < cfg.n_steps {
        let mut rng = block_rng(cfg.seed, starts.len() as u64);
        let len = (1 + geometric.sample(&mut rng)).min(cfg.n_steps - pos);
        starts.push(pos);
        lengths.push(len);
        pos += len;
    }
    let n = space.n_local();
    let p0 = WeightedIndex::new(task.p0().probs()).map_err(|e| Error::Domain(e.to_string()))?;
    let sampler = Sampler::new(policy);
    let tallies: Vec<BlockTally> = (0..starts.len())
        .into_par_iter()
        .map(|k| {
            let mut rng = block_rng(cfg.seed, k as u64);
            let _ = geometric.sample(&mut rng);
            let full = p0.sample(&mut rng);
            let h = Hypothesis::from_index(full / n);
            let wrong_arm = h.wrong_arm();
            let mut s = full % n;
            let mut tally = BlockTally::default();
            for step in 0..lengths[k] {
                if starts[k] + step >= burn_in {
                    tally.counted += 1;
                    if space.last_arm(s) == wrong_arm {
                        tally.wrong += 1;
                    }
                }
                if step + 1 < lengths[k] {
                    let a = sampler.action(s, rng.random::<f64>());
                    let k_arm = task.reward_prob(h, space.action_arm(a));
                    let rew = if rng.random::<f64>() < k_arm {
                        RewardSign::Plus
                    } else {
                        RewardSign::Minus
                    };
                    s = space.successor(s, a, rew);
                }
            }
            tally
        })
        .collect();
    let used: Vec<BlockTally> = tallies.into_iter().filter(|t| t.counted > 0).collect();
    let counted: u64 = used.iter().map(|t| t.counted).sum();
    let wrong: u64 = used.iter().map(|t| t.wrong).sum();
    let q_hat = wrong as f64 / counted as f64;
    let stderr = bootstrap_stderr(&used, cfg.bootstrap, cfg.seed);
    let n_resets = starts.len() as u64 - 1;
    Ok(EstimateReport {
        q_hat,
        stderr,
        n_effective: used.len(),
        n_resets,
        reset_rate: n_resets as f64 / cfg.n_steps as f64,
        n_steps: cfg.n_steps,
        burn_in,
        seed: cfg.seed,
        bootstrap: cfg.bootstrap,
        rng: RNG_NAME.into(),
        arch: task.arch().to_string(),
        k_a: task.k_a(),
        k_b: task.k_b(),
        r,
    })
}

/// Standard deviation of the ratio estimator over resampled blocks.
fn bootstrap_stderr(blocks: &[BlockTally], resamples: usize, seed: u64) -> f64 {
    if blocks.len() < 2 || resamples < 2 {
        return 0.0;
    }
    let mut rng = block_rng(seed, BOOTSTRAP_STREAM);
    let estimates: Vec<f64> = (0..resamples)
        .map(|_| {
            let (mut c, mut w) = (0u64, 0u64);
            for _ in 0..blocks.len() {
                let b = &blocks[rng.random_range(0..blocks.len())];
                c += b.counted;
                w += b.wrong;
            }
            w as f64 / c as f64
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / resamples as f64;
    let var = estimates.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    var.sqrt()
}

/// Expected discounted return `sum_{t<=horizon} (1-r)^t E[R(s_t)]` started
/// from `p0`, by propagating the state distribution through `T_pi`.
pub fn discounted_return(task: &TaskSpec, policy: &PolicyTable, horizon: usize) -> Result<f64> {
    let space = task.space();
    policy.check_shape(&space)?;
    let gamma = 1.0 - task.r();
    let reward = RewardVector::new(&space);
    let mut total = 0.0;
    for h in Hypothesis::ALL {
        let t = build_block(task, policy, h);
        let rh = reward.block(&space, h);
        let mut p: DVector<f64> = task.p0_block(h) * 0.5;
        let mut disc = 1.0;
        for _ in 0..=horizon {
            total += disc * rh.dot(&p);
            p = &t * p;
            disc *= gamma;
        }
    }
    Ok(total)
}
