//! Finite-memory policies for the two-hypothesis testing POMDP.
//!
//! An agent repeatedly plays one of two Bernoulli arms whose means are
//! `(1±mu)/2`, not knowing which one is better, and remembers its past through
//! either a random access memory (RAM) or a sliding window over its last `m`
//! plays (Memento). This crate evaluates any such policy exactly through the
//! stationary distribution of the reset chain, predicts the performance of the
//! column-of-confidence and necklace policies in closed form, trains softmax
//! policies by gradient flow, and cross-checks everything by Monte Carlo.

pub mod analytics;
pub mod arch;
pub mod error;
pub mod experiments;
pub mod model;
pub mod necklace;
pub mod optimizer;
pub mod policies;
pub mod simulate;

pub use arch::{
    effective_memory, Arch, Arm, Hypothesis, MemoryWord, Observation, RewardSign, StateSpace,
};
pub use error::{Error, Result};
pub use model::{
    apply_reset, build_transition, evaluate, gain, gain_from_q, q_no_reset,
    stationary_distribution, steady_state, steady_state_no_reset, wrong_arm_probability,
    Distribution, Evaluation, PolicyTable, RewardVector, SteadyMethod, StochasticMatrix, TaskSpec,
    WrongArmIndicator,
};
