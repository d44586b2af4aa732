//! Reference policies and the initialization families used for training.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::arch::{Action, Arch, Arm, Observation, RewardSign, StateSpace};
use crate::error::{Error, Result};
use crate::model::PolicyTable;
use crate::necklace::{canonical_bits, gray_chain_search, GrayChain, DEFAULT_SEARCH_BUDGET};
use crate::optimizer::PolicyParams;

/// Column-of-confidence policy on a RAM of size `M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CcpConfig {
    pub size: usize,
    /// Probability of stepping down from the top state after a negative reward.
    pub eps: f64,
}

impl CcpConfig {
    pub fn new(size: usize, eps: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::Domain("CCP needs M >= 1".into()));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::Domain(format!("eps must be in (0,1], got {eps}")));
        }
        Ok(CcpConfig { size, eps })
    }
}

/// Builds the column-of-confidence table.
///
/// Memory `i` is the confidence in the arm being played. A positive reward
/// moves up one state, a negative one moves down; below state 1 the agent
/// switches arm instead. The top state `M` keeps its position after a
/// positive reward and steps down only with probability `eps` after a
/// negative one (for `M = 1` the step down is the arm switch).
pub fn ccp_policy(cfg: &CcpConfig) -> Result<PolicyTable> {
    let space = StateSpace::new(Arch::ram(cfg.size)?);
    let top = cfg.size - 1;
    let mut table = DMatrix::zeros(space.n_actions(), space.n_observations());
    let act = |arm: Arm, next_memory: usize| space.action_index(&Action::Ram { arm, next_memory });
    for o in 0..space.n_observations() {
        let Observation::Ram {
            memory,
            last_arm,
            last_reward,
        } = space.observation(o)?
        else {
            unreachable!("RAM space yields RAM observations")
        };
        let step_down = if memory == 0 {
            act(last_arm.other(), 0)?
        } else {
            act(last_arm, memory - 1)?
        };
        match last_reward {
            RewardSign::Plus => {
                table[(act(last_arm, (memory + 1).min(top))?, o)] = 1.0;
            }
            RewardSign::Minus if memory == top => {
                table[(step_down, o)] += cfg.eps;
                table[(act(last_arm, top)?, o)] += 1.0 - cfg.eps;
            }
            RewardSign::Minus => {
                table[(step_down, o)] = 1.0;
            }
        }
    }
    PolicyTable::new(table)
}

/// Necklace policy on a Memento memory.
#[derive(Clone, Debug, PartialEq)]
pub struct NecklaceConfig {
    pub len: usize,
    /// Exit probability of the two end necklaces.
    pub eps0: f64,
    /// Exit probability between neighbouring interior necklaces.
    pub eps1: f64,
    pub chain: GrayChain,
}

impl NecklaceConfig {
    pub fn new(len: usize, eps0: f64, eps1: f64, chain: GrayChain) -> Result<Self> {
        for (name, e) in [("eps0", eps0), ("eps1", eps1)] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Domain(format!("{name} must be in (0,1], got {e}")));
            }
        }
        if chain.word_len() != len {
            return Err(Error::InvalidChain(format!(
                "chain has words of length {}, expected {len}",
                chain.word_len()
            )));
        }
        Ok(NecklaceConfig {
            len,
            eps0,
            eps1,
            chain,
        })
    }

    /// Uses the default Gray chain search for `len`.
    pub fn with_default_chain(len: usize, eps0: f64, eps1: f64) -> Result<Self> {
        let chain = gray_chain_search(len, DEFAULT_SEARCH_BUDGET)?.chain;
        NecklaceConfig::new(len, eps0, eps1, chain)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitDirection {
    /// Towards chain index `i - 1` (more confidence in A).
    Left,
    /// Towards chain index `i + 1`.
    Right,
}

/// Arm word after playing the opposite of the oldest remembered arm.
#[inline]
fn flip_oldest(arms: u32, m: usize) -> u32 {
    let mask = (1u32 << m) - 1;
    let oldest = (arms >> (m - 1)) & 1;
    ((arms << 1) | (oldest ^ 1)) & mask
}

/// Exit rotations of every chain necklace.
///
/// A rotation is eligible in a direction if replaying the flipped oldest arm
/// lands in the neighbouring necklace. One eligible rotation per direction is
/// kept: the lexicographically smallest, or, on a chain that is its own
/// A/B mirror image, the mirror of the partner necklace's choice so that the
/// policy stays symmetric.
pub fn exit_words(chain: &GrayChain) -> Vec<[Option<u32>; 2]> {
    let m = chain.word_len();
    let n = chain.len();
    let nodes = chain.necklaces();
    let eligible = |i: usize, dir: ExitDirection| -> Vec<u32> {
        let target = match dir {
            ExitDirection::Left if i > 0 => nodes[i - 1].bits(),
            ExitDirection::Right if i + 1 < n => nodes[i + 1].bits(),
            _ => return Vec::new(),
        };
        let mut out: Vec<u32> = nodes[i]
            .rotations()
            .into_iter()
            .filter(|&u| canonical_bits(flip_oldest(u, m), m) == target)
            .collect();
        out.sort_unstable();
        out
    };
    let dir_index = |d: ExitDirection| match d {
        ExitDirection::Left => 0,
        ExitDirection::Right => 1,
    };
    let mut exits = vec![[None, None]; n];
    let symmetric = chain.is_self_complementary();
    let mask = (1u32 << m) - 1;
    for (i, slot) in exits.iter_mut().enumerate().take(n.saturating_sub(1)).skip(1) {
        for dir in [ExitDirection::Left, ExitDirection::Right] {
            let mirror = n - 1 - i;
            let primary = i < mirror || (i == mirror && dir == ExitDirection::Left);
            let choice = if symmetric && !primary {
                let opposite = match dir {
                    ExitDirection::Left => ExitDirection::Right,
                    ExitDirection::Right => ExitDirection::Left,
                };
                eligible(mirror, opposite).first().map(|&u| !u & mask)
            } else {
                eligible(i, dir).first().copied()
            };
            slot[dir_index(dir)] = choice;
        }
    }
    exits
}

/// Builds the necklace policy table.
///
/// Default action: replay the oldest remembered arm, which keeps the arm
/// word inside its necklace. Interior necklaces leave towards a neighbour
/// with probability `eps1` from their exit rotation when the rewards are
/// maximally informative in that direction; the two end necklaces leave with
/// probability `eps0` when all remembered rewards are negative. Words whose
/// necklace is not on the chain repeat their most recent arm, which drives the
/// memory onto the chain within `m` plays.
pub fn necklace_policy(cfg: &NecklaceConfig) -> Result<PolicyTable> {
    let m = cfg.len;
    let space = StateSpace::new(Arch::memento(m)?);
    let mask = (1u32 << m) - 1;
    let n = cfg.chain.len();
    let index = cfg.chain.index_map();
    let exits = exit_words(&cfg.chain);
    let mut table = DMatrix::zeros(2, space.n_observations());
    for o in 0..space.n_observations() {
        let arms = (o >> m) as u32;
        let rewards = (o as u32) & mask;
        let oldest = Arm::from_index(((arms >> (m - 1)) & 1) as usize);
        let Some(&i) = index.get(&canonical_bits(arms, m)) else {
            table[(space.last_arm(o).index(), o)] = 1.0;
            continue;
        };
        let exit_prob = if i == 0 || i == n - 1 {
            if rewards == mask {
                cfg.eps0
            } else {
                0.0
            }
        } else {
            // toward A: every A rewarded +, every B -, i.e. reward bits equal arm bits
            let left = exits[i][0] == Some(arms) && rewards == arms;
            let right = exits[i][1] == Some(arms) && rewards == (!arms & mask);
            if left || right {
                cfg.eps1
            } else {
                0.0
            }
        };
        table[(oldest.other().index(), o)] += exit_prob;
        table[(oldest.index(), o)] += 1.0 - exit_prob;
    }
    PolicyTable::new(table)
}

/// Initialization families for gradient-flow training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// I.i.d. standard normal weights.
    Random,
    /// RAM: memory jumps restricted to neighbouring states.
    Linear,
    /// RAM: `Linear` plus repeating the last arm outside memory state 1.
    Columns,
    /// Memento: replay the oldest arm except on maximally informative words.
    Cycles,
    /// Softmax within `delta` total variation of the CCP with this `eps`.
    CcpNear { eps: f64 },
    /// Softmax within `delta` of the necklace policy.
    NecklaceNear { eps0: f64, eps1: f64 },
}

impl InitScheme {
    pub fn name(&self) -> &'static str {
        match self {
            InitScheme::Random => "random",
            InitScheme::Linear => "linear",
            InitScheme::Columns => "columns",
            InitScheme::Cycles => "cycles",
            InitScheme::CcpNear { .. } => "ccp_near",
            InitScheme::NecklaceNear { .. } => "necklace_near",
        }
    }

    fn compatible(&self, arch: &Arch) -> bool {
        match self {
            InitScheme::Random => true,
            InitScheme::Linear | InitScheme::Columns | InitScheme::CcpNear { .. } => {
                matches!(arch, Arch::Ram(_))
            }
            InitScheme::Cycles | InitScheme::NecklaceNear { .. } => {
                matches!(arch, Arch::Memento(_))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitOptions {
    /// Standard deviation of the random part of the weights.
    pub noise: f64,
    /// Weight penalty on disallowed actions for the structured schemes.
    pub bias: f64,
    /// Mixing weight of the uniform policy for the `*_near` schemes.
    pub delta: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            noise: 1.0,
            bias: 20.0,
            delta: 1e-4,
        }
    }
}

/// Log-weights whose softmax is `(1 - delta) pi + delta * uniform`, floored at
/// `ln(1e-12)`.
pub fn near_weights(policy: &PolicyTable, delta: f64) -> PolicyParams {
    let na = policy.n_actions() as f64;
    let w = policy
        .table()
        .map(|p| ((1.0 - delta) * p + delta / na).max(1e-12).ln());
    PolicyParams::new(w)
}

/// Initial softmax weights for `arch` under `scheme`.
pub fn init_policy(
    arch: &Arch,
    scheme: InitScheme,
    seed: u64,
    opts: &InitOptions,
) -> Result<PolicyParams> {
    if !scheme.compatible(arch) {
        return Err(Error::IncompatibleScheme {
            scheme: scheme.name().into(),
            arch: arch.to_string(),
        });
    }
    let space = StateSpace::new(*arch);
    let (na, no) = (space.n_actions(), space.n_observations());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = || -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        opts.noise * z
    };
    let w = match scheme {
        InitScheme::Random => DMatrix::from_fn(na, no, |_, _| noise()),
        InitScheme::Linear | InitScheme::Columns => {
            let columns = scheme == InitScheme::Columns;
            let mut w = DMatrix::zeros(na, no);
            for o in 0..no {
                let Observation::Ram {
                    memory, last_arm, ..
                } = space.observation(o)?
                else {
                    unreachable!()
                };
                for a in 0..na {
                    let Action::Ram { arm, next_memory } = space.action(a)? else {
                        unreachable!()
                    };
                    let mut v = noise();
                    if memory.abs_diff(next_memory) > 1 {
                        v -= opts.bias;
                    }
                    if columns && memory > 0 && arm != last_arm {
                        v -= opts.bias;
                    }
                    w[(a, o)] = v;
                }
            }
            w
        }
        InitScheme::Cycles => {
            let m = arch.size();
            let mask = (1u32 << m) - 1;
            let mut w = DMatrix::zeros(na, no);
            for o in 0..no {
                let arms = (o >> m) as u32;
                let rewards = (o as u32) & mask;
                let informative = rewards == arms || rewards == (!arms & mask);
                let oldest = ((arms >> (m - 1)) & 1) as usize;
                for a in 0..na {
                    let mut v = noise();
                    if !informative && a != oldest {
                        v -= opts.bias;
                    }
                    w[(a, o)] = v;
                }
            }
            w
        }
        InitScheme::CcpNear { eps } => {
            return Ok(near_weights(
                &ccp_policy(&CcpConfig::new(arch.size(), eps)?)?,
                opts.delta,
            ));
        }
        InitScheme::NecklaceNear { eps0, eps1 } => {
            let cfg = NecklaceConfig::with_default_chain(arch.size(), eps0, eps1)?;
            return Ok(near_weights(&necklace_policy(&cfg)?, opts.delta));
        }
    };
    Ok(PolicyParams::new(w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{Hypothesis, MemoryWord};
    use crate::model::{evaluate, TaskSpec};
    use crate::necklace::Necklace;
    use crate::optimizer::softmax_policy;

    fn ram_obs(space: &StateSpace, memory: usize, arm: Arm, rew: RewardSign) -> usize {
        space
            .observation_index(&Observation::Ram {
                memory,
                last_arm: arm,
                last_reward: rew,
            })
            .unwrap()
    }

    fn ram_act(space: &StateSpace, arm: Arm, mem: usize) -> usize {
        space
            .action_index(&Action::Ram {
                arm,
                next_memory: mem,
            })
            .unwrap()
    }

    fn word_obs(space: &StateSpace, s: &str) -> usize {
        space
            .observation_index(&Observation::Memento(MemoryWord::parse(s).unwrap()))
            .unwrap()
    }

    #[test]
    fn ccp_top_state_steps_down_with_eps() {
        let p = ccp_policy(&CcpConfig::new(2, 0.1).unwrap()).unwrap();
        let space = StateSpace::new(Arch::ram(2).unwrap());
        let o = ram_obs(&space, 1, Arm::A, RewardSign::Minus);
        assert!((p.prob(ram_act(&space, Arm::A, 0), o) - 0.1).abs() < 1e-15);
        assert!((p.prob(ram_act(&space, Arm::A, 1), o) - 0.9).abs() < 1e-15);
        // positive reward at the top keeps position
        let o = ram_obs(&space, 1, Arm::B, RewardSign::Plus);
        assert_eq!(p.prob(ram_act(&space, Arm::B, 1), o), 1.0);
    }

    #[test]
    fn ccp_bottom_switches_arm() {
        let p = ccp_policy(&CcpConfig::new(4, 0.05).unwrap()).unwrap();
        let space = StateSpace::new(Arch::ram(4).unwrap());
        assert_eq!(
            p.prob(
                ram_act(&space, Arm::B, 0),
                ram_obs(&space, 0, Arm::A, RewardSign::Minus)
            ),
            1.0
        );
        assert_eq!(
            p.prob(
                ram_act(&space, Arm::A, 1),
                ram_obs(&space, 0, Arm::A, RewardSign::Plus)
            ),
            1.0
        );
        assert_eq!(
            p.prob(
                ram_act(&space, Arm::B, 1),
                ram_obs(&space, 2, Arm::B, RewardSign::Minus)
            ),
            1.0
        );
        assert_eq!(
            p.prob(
                ram_act(&space, Arm::B, 3),
                ram_obs(&space, 2, Arm::B, RewardSign::Plus)
            ),
            1.0
        );
    }

    #[test]
    fn ccp_single_state_is_win_stay_lose_shift() {
        let p = ccp_policy(&CcpConfig::new(1, 1.0).unwrap()).unwrap();
        let space = StateSpace::new(Arch::ram(1).unwrap());
        for arm in Arm::ALL {
            assert_eq!(
                p.prob(
                    ram_act(&space, arm, 0),
                    ram_obs(&space, 0, arm, RewardSign::Plus)
                ),
                1.0
            );
            assert_eq!(
                p.prob(
                    ram_act(&space, arm.other(), 0),
                    ram_obs(&space, 0, arm, RewardSign::Minus)
                ),
                1.0
            );
        }
    }

    fn m4_policy(eps0: f64, eps1: f64) -> (StateSpace, PolicyTable) {
        let cfg = NecklaceConfig::with_default_chain(4, eps0, eps1).unwrap();
        (
            StateSpace::new(Arch::memento(4).unwrap()),
            necklace_policy(&cfg).unwrap(),
        )
    }

    #[test]
    fn necklace_end_state_exit() {
        let (space, p) = m4_policy(0.01, 0.2);
        let o = word_obs(&space, "AAAA----");
        assert!((p.prob(Arm::B.index(), o) - 0.01).abs() < 1e-15);
        assert!((p.prob(Arm::A.index(), o) - 0.99).abs() < 1e-15);
        assert_eq!(p.prob(Arm::A.index(), word_obs(&space, "AAAA+---")), 1.0);
    }

    #[test]
    fn necklace_interior_exit_toward_a() {
        let (space, p) = m4_policy(0.01, 0.2);
        // BAAA with B punished and every A rewarded: flip the oldest B to reach AAAA
        assert!((p.prob(Arm::A.index(), word_obs(&space, "BAAA-+++")) - 0.2).abs() < 1e-15);
        // same arms, the rewards are not maximally informative
        assert_eq!(p.prob(Arm::B.index(), word_obs(&space, "BAAA++++")), 1.0);
        // AAAB/+++- keeps replaying its oldest arm
        assert_eq!(p.prob(Arm::A.index(), word_obs(&space, "AAAB+++-")), 1.0);
        // uninformative rewards on a central necklace
        assert_eq!(p.prob(Arm::A.index(), word_obs(&space, "AABB+-+-")), 1.0);
    }

    #[test]
    fn off_chain_words_repeat_last_arm() {
        let (space, p) = m4_policy(0.01, 0.2);
        assert_eq!(p.prob(Arm::B.index(), word_obs(&space, "ABAB++++")), 1.0);
        assert_eq!(p.prob(Arm::A.index(), word_obs(&space, "BABA----")), 1.0);
    }

    #[test]
    fn necklace_support_and_exits() {
        for m in [3usize, 4, 5] {
            let cfg = NecklaceConfig::with_default_chain(m, 0.01, 0.1).unwrap();
            let p = necklace_policy(&cfg).unwrap();
            let space = StateSpace::new(Arch::memento(m).unwrap());
            let index = cfg.chain.index_map();
            for o in 0..space.n_observations() {
                let support = (0..2).filter(|&a| p.prob(a, o) > 0.0).count();
                assert!((1..=2).contains(&support));
                let arms = (o >> m) as u32;
                let Some(&i) = index.get(&canonical_bits(arms, m)) else {
                    continue;
                };
                for a in 0..2 {
                    if p.prob(a, o) == 0.0 {
                        continue;
                    }
                    let next = space.successor(o, a, RewardSign::Plus);
                    let j = index[&canonical_bits((next >> m) as u32, m)];
                    assert!(j.abs_diff(i) <= 1, "m={m}: {i} -> {j}");
                }
            }
            // exactly one exit rotation per direction on interior necklaces
            let exits = exit_words(&cfg.chain);
            for (i, e) in exits.iter().enumerate().take(cfg.chain.len() - 1).skip(1) {
                assert!(e[0].is_some() && e[1].is_some(), "m={m} necklace {i}");
            }
        }
    }

    #[test]
    fn reference_policies_are_hypothesis_symmetric() {
        let ccp = ccp_policy(&CcpConfig::new(5, 0.07).unwrap()).unwrap();
        let task = TaskSpec::symmetric(0.2, 0.01, Arch::ram(5).unwrap()).unwrap();
        check_symmetric(&task, &ccp);
        for m in [3usize, 4] {
            let cfg = NecklaceConfig::with_default_chain(m, 0.01, 0.1).unwrap();
            assert!(cfg.chain.is_self_complementary());
            let task = TaskSpec::symmetric(0.2, 0.001, Arch::memento(m).unwrap()).unwrap();
            check_symmetric(&task, &necklace_policy(&cfg).unwrap());
        }
    }

    fn check_symmetric(task: &TaskSpec, policy: &PolicyTable) {
        let e = evaluate(task, policy).unwrap();
        let space = task.space();
        let n = space.n_local();
        let per_h: Vec<f64> = Hypothesis::ALL
            .iter()
            .map(|h| {
                (0..n)
                    .filter(|&s| space.last_arm(s) == h.wrong_arm())
                    .map(|s| e.steady.probs()[space.state_index(*h, s)])
                    .sum::<f64>()
                    * 2.0
            })
            .collect();
        assert!((per_h[0] - per_h[1]).abs() < 1e-12, "{per_h:?}");
    }

    #[test]
    fn mirrored_exit_words() {
        let chain = NecklaceConfig::with_default_chain(4, 0.1, 0.1)
            .unwrap()
            .chain;
        let exits = exit_words(&chain);
        let n = chain.len();
        for i in 1..n - 1 {
            let left = exits[i][0].unwrap();
            let right_mirror = exits[n - 1 - i][1].unwrap();
            assert_eq!(left, !right_mirror & 0xF);
        }
        assert_eq!(chain.necklaces()[1], Necklace::parse("AAAB").unwrap());
    }

    #[test]
    fn init_random_is_stochastic_and_seeded() {
        let arch = Arch::ram(3).unwrap();
        let w = init_policy(&arch, InitScheme::Random, 7, &InitOptions::default()).unwrap();
        let p = softmax_policy(&w);
        for col in p.table().column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
        let again = init_policy(&arch, InitScheme::Random, 7, &InitOptions::default()).unwrap();
        assert_eq!(w, again);
        let other = init_policy(&arch, InitScheme::Random, 8, &InitOptions::default()).unwrap();
        assert_ne!(w, other);
    }

    #[test]
    fn ccp_near_is_within_delta() {
        let delta = 1e-4;
        let reference = ccp_policy(&CcpConfig::new(6, 0.03).unwrap()).unwrap();
        let w = init_policy(
            &Arch::ram(6).unwrap(),
            InitScheme::CcpNear { eps: 0.03 },
            0,
            &InitOptions {
                delta,
                ..Default::default()
            },
        )
        .unwrap();
        let p = softmax_policy(&w);
        for o in 0..p.n_observations() {
            let tv: f64 = (0..p.n_actions())
                .map(|a| (p.prob(a, o) - reference.prob(a, o)).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv <= delta, "tv={tv}");
        }
    }

    #[test]
    fn linear_init_keeps_jumps_local() {
        let arch = Arch::ram(8).unwrap();
        let space = StateSpace::new(arch);
        for seed in 0..5 {
            let p = softmax_policy(
                &init_policy(&arch, InitScheme::Linear, seed, &InitOptions::default()).unwrap(),
            );
            for o in 0..space.n_observations() {
                let Observation::Ram { memory, .. } = space.observation(o).unwrap() else {
                    unreachable!()
                };
                let far: f64 = (0..space.n_actions())
                    .filter(|&a| {
                        let Action::Ram { next_memory, .. } = space.action(a).unwrap() else {
                            unreachable!()
                        };
                        next_memory.abs_diff(memory) > 1
                    })
                    .map(|a| p.prob(a, o))
                    .sum();
                assert!(far < 1e-3);
            }
        }
    }

    #[test]
    fn columns_and_cycles_bias() {
        let arch = Arch::ram(4).unwrap();
        let space = StateSpace::new(arch);
        let p = softmax_policy(
            &init_policy(&arch, InitScheme::Columns, 1, &InitOptions::default()).unwrap(),
        );
        let o = ram_obs(&space, 2, Arm::A, RewardSign::Minus);
        let switch: f64 = (0..4).map(|m| p.prob(ram_act(&space, Arm::B, m), o)).sum();
        assert!(switch < 1e-6);

        let arch = Arch::memento(3).unwrap();
        let space = StateSpace::new(arch);
        let p = softmax_policy(
            &init_policy(&arch, InitScheme::Cycles, 1, &InitOptions::default()).unwrap(),
        );
        assert!(p.prob(Arm::A.index(), word_obs(&space, "ABB+-+")) > 1.0 - 1e-6);
        // maximally informative words stay unbiased
        let o = word_obs(&space, "ABB+--");
        assert!(p.prob(Arm::A.index(), o) < 1.0 - 1e-6);
    }

    #[test]
    fn incompatible_schemes_rejected() {
        let ram = Arch::ram(3).unwrap();
        let mem = Arch::memento(3).unwrap();
        let opts = InitOptions::default();
        assert!(matches!(
            init_policy(&ram, InitScheme::Cycles, 0, &opts),
            Err(Error::IncompatibleScheme { .. })
        ));
        assert!(init_policy(&mem, InitScheme::Linear, 0, &opts).is_err());
        assert!(init_policy(&mem, InitScheme::CcpNear { eps: 0.1 }, 0, &opts).is_err());
        assert!(init_policy(
            &ram,
            InitScheme::NecklaceNear {
                eps0: 0.1,
                eps1: 0.1
            },
            0,
            &opts
        )
        .is_err());
    }
}
