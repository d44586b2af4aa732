//! Memory architectures and the indexing of states, observations and actions.
//!
//! A full state is `(hypothesis, memory, last arm, last reward)`. The
//! hypothesis is the outermost index block so that the two environments never
//! mix under the agent's actions and their steady states can be computed
//! independently. Within a block the layout is:
//!
//! - RAM(M): `local = memory * 4 + last_arm * 2 + last_reward` (`memory` is 0-based)
//! - Memento(m): `local = arms << m | rewards`, each an `m`-bit word whose most
//!   significant bit is the oldest entry (`A = 0`, `+ = 0`)
//!
//! The observation index equals the local index: observing a state simply
//! drops the hypothesis block.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest Memento history supported by the dense state space.
pub const MAX_MEMENTO_LEN: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Arm {
    A,
    B,
}

impl Arm {
    pub const ALL: [Arm; 2] = [Arm::A, Arm::B];

    pub fn index(self) -> usize {
        match self {
            Arm::A => 0,
            Arm::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Arm {
        if i == 0 {
            Arm::A
        } else {
            Arm::B
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::A => Arm::B,
            Arm::B => Arm::A,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Arm::A => 'A',
            Arm::B => 'B',
        }
    }

    pub fn from_symbol(c: char) -> Result<Arm> {
        match c {
            'A' => Ok(Arm::A),
            'B' => Ok(Arm::B),
            _ => Err(Error::Parse(format!("invalid arm symbol {c:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardSign {
    Plus,
    Minus,
}

impl RewardSign {
    pub const ALL: [RewardSign; 2] = [RewardSign::Plus, RewardSign::Minus];

    pub fn value(self) -> f64 {
        match self {
            RewardSign::Plus => 1.0,
            RewardSign::Minus => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            RewardSign::Plus => 0,
            RewardSign::Minus => 1,
        }
    }

    pub fn from_index(i: usize) -> RewardSign {
        if i == 0 {
            RewardSign::Plus
        } else {
            RewardSign::Minus
        }
    }

    pub fn symbol(self) -> char {
        match self {
            RewardSign::Plus => '+',
            RewardSign::Minus => '-',
        }
    }

    pub fn from_symbol(c: char) -> Result<RewardSign> {
        match c {
            '+' => Ok(RewardSign::Plus),
            '-' | '−' => Ok(RewardSign::Minus),
            _ => Err(Error::Parse(format!("invalid reward symbol {c:?}"))),
        }
    }
}

/// Which arm is the better one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    A,
    B,
}

impl Hypothesis {
    pub const ALL: [Hypothesis; 2] = [Hypothesis::A, Hypothesis::B];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::A => 0,
            Hypothesis::B => 1,
        }
    }

    pub fn from_index(i: usize) -> Hypothesis {
        if i == 0 {
            Hypothesis::A
        } else {
            Hypothesis::B
        }
    }

    pub fn best_arm(self) -> Arm {
        match self {
            Hypothesis::A => Arm::A,
            Hypothesis::B => Arm::B,
        }
    }

    pub fn wrong_arm(self) -> Arm {
        self.best_arm().other()
    }
}

/// Random access memory with `M` agent-controlled states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RamArch {
    size: usize,
}

impl RamArch {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Domain("RAM size M must be at least 1".into()));
        }
        Ok(RamArch { size })
    }

    /// Number of controllable memory states `M`.
    pub fn size(&self) -> usize {
        self.size
    }
}

/// Sliding window over the last `m` plays and rewards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MementoArch {
    len: usize,
}

impl MementoArch {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 || len > MAX_MEMENTO_LEN {
            return Err(Error::Domain(format!(
                "Memento history length must be in 1..={MAX_MEMENTO_LEN}, got {len}"
            )));
        }
        Ok(MementoArch { len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    Ram(RamArch),
    Memento(MementoArch),
}

impl Arch {
    pub fn ram(size: usize) -> Result<Self> {
        Ok(Arch::Ram(RamArch::new(size)?))
    }

    pub fn memento(len: usize) -> Result<Self> {
        Ok(Arch::Memento(MementoArch::new(len)?))
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Arch::Ram(a) => 2 * a.size,
            Arch::Memento(_) => 2,
        }
    }

    /// `M` for RAM, `m` for Memento.
    pub fn size(&self) -> usize {
        match self {
            Arch::Ram(a) => a.size,
            Arch::Memento(a) => a.len,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Arch::Ram(_) => "ram",
            Arch::Memento(_) => "memento",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arch::Ram(a) => write!(f, "RAM(M={})", a.size),
            Arch::Memento(a) => write!(f, "Memento(m={})", a.len),
        }
    }
}

/// Total number of memory configurations visible to the agent: `4M` or `4^m`.
pub fn effective_memory(arch: &Arch) -> usize {
    match arch {
        Arch::Ram(a) => 4 * a.size,
        Arch::Memento(a) => 1 << (2 * a.len),
    }
}

/// The last `m` arms and rewards, oldest entry at index 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MemoryWord {
    arms: u32,
    rewards: u32,
    len: usize,
}

impl MemoryWord {
    pub fn new(arms: &[Arm], rewards: &[RewardSign]) -> Result<Self> {
        if arms.len() != rewards.len() {
            return Err(Error::Shape {
                expected: format!("{} rewards", arms.len()),
                got: format!("{}", rewards.len()),
            });
        }
        if arms.is_empty() || arms.len() > MAX_MEMENTO_LEN {
            return Err(Error::Domain(format!(
                "word length {} unsupported",
                arms.len()
            )));
        }
        let arms_bits = arms
            .iter()
            .fold(0u32, |acc, a| (acc << 1) | a.index() as u32);
        let rew_bits = rewards
            .iter()
            .fold(0u32, |acc, r| (acc << 1) | r.index() as u32);
        Ok(MemoryWord {
            arms: arms_bits,
            rewards: rew_bits,
            len: arms.len(),
        })
    }

    /// Parses the compact form `AABB++-+`.
    pub fn parse(s: &str) -> Result<Self> {
        let chars: Vec<char> = s.chars().filter(|c| *c != '/').collect();
        if !chars.len().is_multiple_of(2) || chars.is_empty() {
            return Err(Error::Parse(format!("memory word {s:?} has odd length")));
        }
        let m = chars.len() / 2;
        let arms = chars[..m]
            .iter()
            .map(|&c| Arm::from_symbol(c))
            .collect::<Result<Vec<_>>>()?;
        let rewards = chars[m..]
            .iter()
            .map(|&c| RewardSign::from_symbol(c))
            .collect::<Result<Vec<_>>>()?;
        MemoryWord::new(&arms, &rewards)
    }

    pub(crate) fn from_bits(arms: u32, rewards: u32, len: usize) -> Self {
        let mask = (1u32 << len) - 1;
        MemoryWord {
            arms: arms & mask,
            rewards: rewards & mask,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Arm bits, oldest entry in the most significant position.
    pub fn arm_bits(&self) -> u32 {
        self.arms
    }

    pub fn reward_bits(&self) -> u32 {
        self.rewards
    }

    pub fn arm(&self, k: usize) -> Arm {
        Arm::from_index(((self.arms >> (self.len - 1 - k)) & 1) as usize)
    }

    pub fn reward(&self, k: usize) -> RewardSign {
        RewardSign::from_index(((self.rewards >> (self.len - 1 - k)) & 1) as usize)
    }

    pub fn oldest_arm(&self) -> Arm {
        self.arm(0)
    }

    pub fn last_arm(&self) -> Arm {
        Arm::from_index((self.arms & 1) as usize)
    }

    pub fn last_reward(&self) -> RewardSign {
        RewardSign::from_index((self.rewards & 1) as usize)
    }

    /// Drops the oldest entry and appends `(played, reward)` as the newest.
    pub fn memento_update(&self, played: Arm, reward: RewardSign) -> MemoryWord {
        MemoryWord::from_bits(
            (self.arms << 1) | played.index() as u32,
            (self.rewards << 1) | reward.index() as u32,
            self.len,
        )
    }
}

impl fmt::Display for MemoryWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.len {
            write!(f, "{}", self.arm(k).symbol())?;
        }
        for k in 0..self.len {
            write!(f, "{}", self.reward(k).symbol())?;
        }
        Ok(())
    }
}

/// What the agent sees: everything in the state except the hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Observation {
    Ram {
        memory: usize,
        last_arm: Arm,
        last_reward: RewardSign,
    },
    Memento(MemoryWord),
}

impl Observation {
    pub fn last_arm(&self) -> Arm {
        match self {
            Observation::Ram { last_arm, .. } => *last_arm,
            Observation::Memento(w) => w.last_arm(),
        }
    }

    pub fn last_reward(&self) -> RewardSign {
        match self {
            Observation::Ram { last_reward, .. } => *last_reward,
            Observation::Memento(w) => w.last_reward(),
        }
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observation::Ram {
                memory,
                last_arm,
                last_reward,
            } => {
                write!(
                    f,
                    "{}{}{}",
                    memory + 1,
                    last_arm.symbol(),
                    last_reward.symbol()
                )
            }
            Observation::Memento(w) => write!(f, "{w}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FullState {
    pub hypothesis: Hypothesis,
    pub observation: Observation,
}

/// Pure function: the observation carried by a full state.
pub fn observe_state(state: &FullState) -> Observation {
    state.observation
}

/// Decoded action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    /// Play `arm` and write `next_memory` (0-based).
    Ram {
        arm: Arm,
        next_memory: usize,
    },
    Memento {
        arm: Arm,
    },
}

impl Action {
    pub fn arm(&self) -> Arm {
        match self {
            Action::Ram { arm, .. } | Action::Memento { arm } => *arm,
        }
    }
}

/// Memory content after an action, before the reward is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NextMemory {
    Ram(usize),
    /// The word shifted left with the played arm appended; its newest reward
    /// slot is filled once the reward is drawn.
    Memento {
        shifted_arms: MemoryWordArms,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryWordArms {
    pub bits: u32,
    pub len: usize,
}

impl fmt::Display for MemoryWordArms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.len {
            let bit = (self.bits >> (self.len - 1 - k)) & 1;
            write!(f, "{}", Arm::from_index(bit as usize).symbol())?;
        }
        Ok(())
    }
}

/// Bijective indexing of full states, observations and actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StateSpace {
    arch: Arch,
    n_local: usize,
}

impl StateSpace {
    pub fn new(arch: Arch) -> Self {
        StateSpace {
            arch,
            n_local: effective_memory(&arch),
        }
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    /// States per hypothesis block (`4M` or `4^m`).
    pub fn n_local(&self) -> usize {
        self.n_local
    }

    /// Total number of full states (both hypotheses).
    pub fn n_states(&self) -> usize {
        2 * self.n_local
    }

    pub fn n_observations(&self) -> usize {
        self.n_local
    }

    pub fn n_actions(&self) -> usize {
        self.arch.n_actions()
    }

    pub fn state_index(&self, h: Hypothesis, local: usize) -> usize {
        h.index() * self.n_local + local
    }

    pub fn split_index(&self, index: usize) -> Result<(Hypothesis, usize)> {
        if index >= self.n_states() {
            return Err(Error::Index {
                index,
                size: self.n_states(),
            });
        }
        Ok((
            Hypothesis::from_index(index / self.n_local),
            index % self.n_local,
        ))
    }

    /// Observation index of a full-state index.
    pub fn observe(&self, index: usize) -> Result<usize> {
        self.split_index(index).map(|(_, local)| local)
    }

    pub fn state(&self, index: usize) -> Result<FullState> {
        let (hypothesis, local) = self.split_index(index)?;
        Ok(FullState {
            hypothesis,
            observation: self.observation(local)?,
        })
    }

    pub fn index_of(&self, state: &FullState) -> Result<usize> {
        let local = self.observation_index(&state.observation)?;
        Ok(self.state_index(state.hypothesis, local))
    }

    pub fn observation(&self, local: usize) -> Result<Observation> {
        if local >= self.n_local {
            return Err(Error::Index {
                index: local,
                size: self.n_local,
            });
        }
        Ok(match self.arch {
            Arch::Ram(_) => Observation::Ram {
                memory: local / 4,
                last_arm: Arm::from_index((local / 2) % 2),
                last_reward: RewardSign::from_index(local % 2),
            },
            Arch::Memento(a) => Observation::Memento(MemoryWord::from_bits(
                (local >> a.len) as u32,
                local as u32,
                a.len,
            )),
        })
    }

    pub fn observation_index(&self, obs: &Observation) -> Result<usize> {
        match (self.arch, obs) {
            (
                Arch::Ram(a),
                Observation::Ram {
                    memory,
                    last_arm,
                    last_reward,
                },
            ) => {
                if *memory >= a.size {
                    return Err(Error::Index {
                        index: *memory,
                        size: a.size,
                    });
                }
                Ok(memory * 4 + last_arm.index() * 2 + last_reward.index())
            }
            (Arch::Memento(a), Observation::Memento(w)) => {
                if w.len != a.len {
                    return Err(Error::Shape {
                        expected: format!("word of length {}", a.len),
                        got: format!("length {}", w.len),
                    });
                }
                Ok(((w.arms as usize) << a.len) | w.rewards as usize)
            }
            _ => Err(Error::Shape {
                expected: format!("observation for {}", self.arch),
                got: format!("{obs:?}"),
            }),
        }
    }

    /// Last arm recorded in a local state.
    #[inline]
    pub fn last_arm(&self, local: usize) -> Arm {
        match self.arch {
            Arch::Ram(_) => Arm::from_index((local >> 1) & 1),
            Arch::Memento(a) => Arm::from_index((local >> a.len) & 1),
        }
    }

    #[inline]
    pub fn last_reward(&self, local: usize) -> RewardSign {
        RewardSign::from_index(local & 1)
    }

    pub fn action(&self, a: usize) -> Result<Action> {
        if a >= self.n_actions() {
            return Err(Error::Index {
                index: a,
                size: self.n_actions(),
            });
        }
        Ok(match self.arch {
            Arch::Ram(r) => Action::Ram {
                arm: Arm::from_index(a / r.size),
                next_memory: a % r.size,
            },
            Arch::Memento(_) => Action::Memento {
                arm: Arm::from_index(a),
            },
        })
    }

    pub fn action_index(&self, action: &Action) -> Result<usize> {
        match (self.arch, action) {
            (Arch::Ram(r), Action::Ram { arm, next_memory }) => {
                if *next_memory >= r.size {
                    return Err(Error::Index {
                        index: *next_memory,
                        size: r.size,
                    });
                }
                Ok(arm.index() * r.size + next_memory)
            }
            (Arch::Memento(_), Action::Memento { arm }) => Ok(arm.index()),
            _ => Err(Error::Shape {
                expected: format!("action for {}", self.arch),
                got: format!("{action:?}"),
            }),
        }
    }

    /// Arm played by action index `a` (unchecked).
    #[inline]
    pub fn action_arm(&self, a: usize) -> Arm {
        match self.arch {
            Arch::Ram(r) => Arm::from_index(a / r.size),
            Arch::Memento(_) => Arm::from_index(a),
        }
    }

    /// Deterministic memory bookkeeping of an action, before reward sampling.
    pub fn enumerate_transitions(&self, local: usize, action: usize) -> Result<NextMemory> {
        if local >= self.n_local {
            return Err(Error::Index {
                index: local,
                size: self.n_local,
            });
        }
        match self.action(action)? {
            Action::Ram { next_memory, .. } => Ok(NextMemory::Ram(next_memory)),
            Action::Memento { arm } => {
                let m = self.arch.size();
                let arms = (local >> m) as u32;
                let bits = ((arms << 1) | arm.index() as u32) & ((1u32 << m) - 1);
                Ok(NextMemory::Memento {
                    shifted_arms: MemoryWordArms { bits, len: m },
                })
            }
        }
    }

    /// Local successor index after playing `action` from `local` and receiving `reward`.
    #[inline]
    pub fn successor(&self, local: usize, action: usize, reward: RewardSign) -> usize {
        match self.arch {
            Arch::Ram(r) => {
                let arm = action / r.size;
                let mem = action % r.size;
                mem * 4 + arm * 2 + reward.index()
            }
            Arch::Memento(a) => {
                let m = a.len;
                let mask = (1usize << m) - 1;
                let arms = ((local >> m) << 1 | action) & mask;
                let rewards = ((local & mask) << 1 | reward.index()) & mask;
                (arms << m) | rewards
            }
        }
    }

    pub fn observation_label(&self, local: usize) -> Result<String> {
        Ok(self.observation(local)?.to_string())
    }

    pub fn action_label(&self, a: usize) -> Result<String> {
        Ok(match self.action(a)? {
            Action::Ram { arm, next_memory } => format!("{}>{}", arm.symbol(), next_memory + 1),
            Action::Memento { arm } => arm.symbol().to_string(),
        })
    }

    pub fn parse_observation_label(&self, label: &str) -> Result<usize> {
        let obs = match self.arch {
            Arch::Ram(_) => {
                let mut chars: Vec<char> = label.chars().collect();
                if chars.len() < 3 {
                    return Err(Error::Parse(format!("bad RAM observation {label:?}")));
                }
                let last_reward = RewardSign::from_symbol(chars.pop().unwrap())?;
                let last_arm = Arm::from_symbol(chars.pop().unwrap())?;
                let memory: usize = chars
                    .iter()
                    .collect::<String>()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad memory index in {label:?}")))?;
                if memory == 0 {
                    return Err(Error::Parse(format!(
                        "memory index is 1-based in {label:?}"
                    )));
                }
                Observation::Ram {
                    memory: memory - 1,
                    last_arm,
                    last_reward,
                }
            }
            Arch::Memento(_) => Observation::Memento(MemoryWord::parse(label)?),
        };
        self.observation_index(&obs)
    }

    pub fn parse_action_label(&self, label: &str) -> Result<usize> {
        let action = match self.arch {
            Arch::Ram(_) => {
                let (arm, mem) = label
                    .split_once('>')
                    .ok_or_else(|| Error::Parse(format!("bad RAM action {label:?}")))?;
                let arm = Arm::from_symbol(arm.chars().next().unwrap_or('?'))?;
                let mem: usize = mem
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad RAM action {label:?}")))?;
                if mem == 0 {
                    return Err(Error::Parse(format!(
                        "memory index is 1-based in {label:?}"
                    )));
                }
                Action::Ram {
                    arm,
                    next_memory: mem - 1,
                }
            }
            Arch::Memento(_) => {
                let mut it = label.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Action::Memento {
                        arm: Arm::from_symbol(c)?,
                    },
                    _ => return Err(Error::Parse(format!("bad Memento action {label:?}"))),
                }
            }
        };
        self.action_index(&action)
    }
}
