//! Policy-conditioned transition matrices, the reset reduction, stationary
//! distributions and the two performance measures `q` and `G`.
//!
//! Matrices are column-stochastic: entry `(s', s)` is the probability of the
//! transition `s -> s'`. The two hypothesis blocks never communicate, so the
//! reset chain is solved block by block and the results are averaged with
//! weight 1/2 each.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arch::{Arch, Arm, Hypothesis, RewardSign, StateSpace};
use crate::error::{Error, Result};

/// Tolerance used when validating stochastic vectors and matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Probability vector over states.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    probs: DVector<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        check_probability_vector(&probs, 1.0)?;
        Ok(Distribution {
            probs: DVector::from_vec(probs),
        })
    }

    /// Clamps tiny negative round-off and rescales to unit mass.
    pub fn normalized(mut probs: Vec<f64>) -> Result<Self> {
        for p in probs.iter_mut() {
            if !p.is_finite() {
                return Err(Error::NonFinite("distribution entry".into()));
            }
            if *p < 0.0 {
                if *p < -1e-9 {
                    return Err(Error::Domain(format!("negative probability {p:e}")));
                }
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("distribution has zero mass".into()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(Distribution {
            probs: DVector::from_vec(probs),
        })
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            probs: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        self.probs.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.probs
    }

    pub fn l1_distance(&self, other: &Distribution) -> f64 {
        (&self.probs - &other.probs).abs().sum()
    }
}

fn check_probability_vector(v: &[f64], mass: f64) -> Result<()> {
    let mut total = 0.0;
    for &p in v {
        if !p.is_finite() {
            return Err(Error::NonFinite("probability".into()));
        }
        if p < 0.0 {
            return Err(Error::Domain(format!("negative probability {p:e}")));
        }
        total += p;
    }
    if (total - mass).abs() > STOCHASTIC_TOL * v.len().max(1) as f64 {
        return Err(Error::Domain(format!(
            "probabilities sum to {total}, expected {mass}"
        )));
    }
    Ok(())
}

/// Column-stochastic square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticMatrix {
    entries: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Shape {
                expected: "square matrix".into(),
                got: format!("{}x{}", entries.nrows(), entries.ncols()),
            });
        }
        for (j, col) in entries.column_iter().enumerate() {
            check_probability_vector(col.as_slice(), 1.0)
                .map_err(|e| Error::Domain(format!("column {j}: {e}")))?;
        }
        Ok(StochasticMatrix { entries })
    }

    pub fn identity(n: usize) -> Self {
        StochasticMatrix {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Transition probability `from -> to`.
    pub fn prob(&self, to: usize, from: usize) -> f64 {
        self.entries[(to, from)]
    }

    pub fn apply(&self, p: &Distribution) -> Result<Distribution> {
        if p.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim().to_string(),
                got: p.len().to_string(),
            });
        }
        Distribution::normalized((&self.entries * &p.probs).as_slice().to_vec())
    }
}

/// Row `a`, column `o`: probability of action `a` given observation `o`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyTable {
    table: DMatrix<f64>,
}

impl PolicyTable {
    pub fn new(table: DMatrix<f64>) -> Result<Self> {
        for (o, col) in table.column_iter().enumerate() {
            check_probability_vector(col.as_slice(), 1.0)
                .map_err(|e| Error::Domain(format!("observation {o}: {e}")))?;
        }
        Ok(PolicyTable { table })
    }

    /// Uniform policy over all actions.
    pub fn uniform(space: &StateSpace) -> Self {
        let na = space.n_actions();
        PolicyTable {
            table: DMatrix::from_element(na, space.n_observations(), 1.0 / na as f64),
        }
    }

    /// Deterministic policy from a per-observation action choice.
    pub fn deterministic(space: &StateSpace, choose: impl Fn(usize) -> usize) -> Result<Self> {
        let mut table = DMatrix::zeros(space.n_actions(), space.n_observations());
        for o in 0..space.n_observations() {
            let a = choose(o);
            if a >= space.n_actions() {
                return Err(Error::Index {
                    index: a,
                    size: space.n_actions(),
                });
            }
            table[(a, o)] = 1.0;
        }
        Ok(PolicyTable { table })
    }

    pub fn n_actions(&self) -> usize {
        self.table.nrows()
    }

    pub fn n_observations(&self) -> usize {
        self.table.ncols()
    }

    pub fn prob(&self, action: usize, obs: usize) -> f64 {
        self.table[(action, obs)]
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    pub fn check_shape(&self, space: &StateSpace) -> Result<()> {
        if self.n_actions() != space.n_actions() || self.n_observations() != space.n_observations()
        {
            return Err(Error::Shape {
                expected: format!("{}x{}", space.n_actions(), space.n_observations()),
                got: format!("{}x{}", self.n_actions(), self.n_observations()),
            });
        }
        Ok(())
    }

    /// Plain-text export: one `observation action probability` line per
    /// non-zero entry.
    pub fn to_text(&self, space: &StateSpace) -> Result<String> {
        self.check_shape(space)?;
        let mut out = String::new();
        for o in 0..self.n_observations() {
            for a in 0..self.n_actions() {
                let p = self.table[(a, o)];
                if p > 0.0 {
                    out.push_str(&format!(
                        "{} {} {:e}\n",
                        space.observation_label(o)?,
                        space.action_label(a)?,
                        p
                    ));
                }
            }
        }
        Ok(out)
    }

    pub fn from_text(space: &StateSpace, text: &str) -> Result<Self> {
        let mut table = DMatrix::zeros(space.n_actions(), space.n_observations());
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!(
                    "line {}: expected 3 fields",
                    lineno + 1
                )));
            }
            let o = space.parse_observation_label(fields[0])?;
            let a = space.parse_action_label(fields[1])?;
            let p: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad probability", lineno + 1)))?;
            table[(a, o)] = p;
        }
        PolicyTable::new(table)
    }
}

/// Environment pair, reset probability, architecture and initial distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    /// `arm_probs[h][arm]`: probability of a +1 reward.
    arm_probs: [[f64; 2]; 2],
    r: f64,
    arch: Arch,
    p0: Distribution,
}

impl TaskSpec {
    /// Symmetric task: under `H_A`, `k_A = (1+mu)/2` and `k_B = (1-mu)/2`;
    /// `H_B` swaps the arms.
    pub fn symmetric(mu: f64, r: f64, arch: Arch) -> Result<Self> {
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::Domain(format!("mu must be in [0,1), got {mu}")));
        }
        TaskSpec::general((1.0 + mu) / 2.0, (1.0 - mu) / 2.0, r, arch)
    }

    /// `H_A` has reward probabilities `(k_a, k_b)` for arms (A, B); `H_B`
    /// swaps them.
    pub fn general(k_a: f64, k_b: f64, r: f64, arch: Arch) -> Result<Self> {
        for k in [k_a, k_b] {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::Domain(format!(
                    "reward probability {k} outside [0,1]"
                )));
            }
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Domain(format!(
                "reset probability r must be in (0,1], got {r}"
            )));
        }
        let arm_probs = [[k_a, k_b], [k_b, k_a]];
        let p0 = default_p0(&arch, &arm_probs);
        Ok(TaskSpec {
            arm_probs,
            r,
            arch,
            p0,
        })
    }

    /// Replaces the initial distribution. Each hypothesis block must carry
    /// mass 1/2.
    pub fn with_p0(mut self, p0: Distribution) -> Result<Self> {
        let space = self.space();
        if p0.len() != space.n_states() {
            return Err(Error::Shape {
                expected: space.n_states().to_string(),
                got: p0.len().to_string(),
            });
        }
        let n = space.n_local();
        for h in 0..2 {
            let mass: f64 = p0.probs()[h * n..(h + 1) * n].iter().sum();
            if (mass - 0.5).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "p0 gives hypothesis block {h} mass {mass}"
                )));
            }
        }
        self.p0 = p0;
        Ok(self)
    }

    pub fn with_r(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Domain(format!(
                "reset probability r must be in (0,1], got {r}"
            )));
        }
        self.r = r;
        Ok(self)
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::new(self.arch)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p0(&self) -> &Distribution {
        &self.p0
    }

    /// Probability of a +1 reward for `arm` under `h`.
    pub fn reward_prob(&self, h: Hypothesis, arm: Arm) -> f64 {
        self.arm_probs[h.index()][arm.index()]
    }

    pub fn k_a(&self) -> f64 {
        self.arm_probs[0][0]
    }

    pub fn k_b(&self) -> f64 {
        self.arm_probs[0][1]
    }

    /// Gap `k_A - k_B` under `H_A`; equals `mu` for symmetric tasks.
    pub fn mu(&self) -> f64 {
        self.k_a() - self.k_b()
    }

    pub fn is_symmetric(&self) -> bool {
        (self.k_a() + self.k_b() - 1.0).abs() < 1e-14
    }

    /// Conditional initial distribution inside hypothesis block `h`.
    pub fn p0_block(&self, h: Hypothesis) -> DVector<f64> {
        let n = self.space().n_local();
        let start = h.index() * n;
        DVector::from_iterator(n, self.p0.probs()[start..start + n].iter().map(|p| 2.0 * p))
    }
}

/// Default initial distribution.
///
/// RAM: memory state 1 with last arm A or B (1/2 each) and the last reward
/// drawn from that arm's Bernoulli law under the hypothesis. Memento: uniform
/// over all words. Each hypothesis block has mass 1/2.
fn default_p0(arch: &Arch, arm_probs: &[[f64; 2]; 2]) -> Distribution {
    let space = StateSpace::new(*arch);
    let n = space.n_local();
    let mut probs = vec![0.0; 2 * n];
    match arch {
        Arch::Ram(_) => {
            for h in Hypothesis::ALL {
                for arm in Arm::ALL {
                    let k = arm_probs[h.index()][arm.index()];
                    for (rew, w) in [(RewardSign::Plus, k), (RewardSign::Minus, 1.0 - k)] {
                        let local = arm.index() * 2 + rew.index();
                        probs[space.state_index(h, local)] = 0.5 * 0.5 * w;
                    }
                }
            }
        }
        Arch::Memento(_) => probs.iter_mut().for_each(|p| *p = 0.5 / n as f64),
    }
    Distribution {
        probs: DVector::from_vec(probs),
    }
}

/// `R(s)`: the last reward recorded in the state.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardVector {
    values: DVector<f64>,
}

impl RewardVector {
    pub fn new(space: &StateSpace) -> Self {
        let n = space.n_local();
        RewardVector {
            values: DVector::from_fn(space.n_states(), |i, _| space.last_reward(i % n).value()),
        }
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub(crate) fn block(&self, space: &StateSpace, h: Hypothesis) -> DVector<f64> {
        let n = space.n_local();
        self.values.rows(h.index() * n, n).into_owned()
    }
}

/// `q(s)`: 1 iff the last arm in `s` is the worse arm under `s`'s hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct WrongArmIndicator {
    values: DVector<f64>,
}

impl WrongArmIndicator {
    pub fn new(space: &StateSpace) -> Self {
        let n = space.n_local();
        WrongArmIndicator {
            values: DVector::from_fn(space.n_states(), |i, _| {
                let h = Hypothesis::from_index(i / n);
                if space.last_arm(i % n) == h.wrong_arm() {
                    1.0
                } else {
                    0.0
                }
            }),
        }
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub(crate) fn block(&self, space: &StateSpace, h: Hypothesis) -> DVector<f64> {
        let n = space.n_local();
        self.values.rows(h.index() * n, n).into_owned()
    }
}

/// `T_pi` restricted to hypothesis block `h` (no reset).
pub(crate) fn build_block(task: &TaskSpec, policy: &PolicyTable, h: Hypothesis) -> DMatrix<f64> {
    let space = task.space();
    let n = space.n_local();
    let mut t = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..space.n_actions() {
            let pa = policy.prob(a, s);
            if pa == 0.0 {
                continue;
            }
            let k = task.reward_prob(h, space.action_arm(a));
            t[(space.successor(s, a, RewardSign::Plus), s)] += pa * k;
            t[(space.successor(s, a, RewardSign::Minus), s)] += pa * (1.0 - k);
        }
    }
    t
}

/// Policy state transition `T_pi(s'|s)` over the full state space, without
/// reset. Block diagonal over the two hypotheses.
pub fn build_transition(task: &TaskSpec, policy: &PolicyTable) -> Result<StochasticMatrix> {
    let space = task.space();
    policy.check_shape(&space)?;
    let n = space.n_local();
    let mut full = DMatrix::zeros(2 * n, 2 * n);
    for h in Hypothesis::ALL {
        let off = h.index() * n;
        full.view_mut((off, off), (n, n))
            .copy_from(&build_block(task, policy, h));
    }
    StochasticMatrix::new(full)
}

/// `r p0(s') + (1-r) T(s'|s)`.
pub fn apply_reset(t: &StochasticMatrix, r: f64, p0: &Distribution) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!(
            "reset probability {r} outside [0,1]"
        )));
    }
    if p0.len() != t.dim() {
        return Err(Error::Shape {
            expected: t.dim().to_string(),
            got: p0.len().to_string(),
        });
    }
    let n = t.dim();
    let mut out = t.entries() * (1.0 - r);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] += r * p0.probs()[i];
        }
    }
    Ok(StochasticMatrix { entries: out })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SteadyMethod {
    /// Repeated squaring until all columns agree.
    Power,
    /// Direct linear solve.
    #[default]
    Solve,
}

impl std::str::FromStr for SteadyMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(SteadyMethod::Power),
            "solve" => Ok(SteadyMethod::Solve),
            _ => Err(Error::Parse(format!(
                "unknown method {s:?} (expected power|solve)"
            ))),
        }
    }
}

pub const DEFAULT_POWER_TOL: f64 = 1e-12;
pub const MAX_SQUARINGS: usize = 64;

fn max_pairwise_column_l1(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for k in (j + 1)..n {
            let d: f64 = m
                .column(j)
                .iter()
                .zip(m.column(k).iter())
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(d);
        }
    }
    worst
}

/// Power method by repeated squaring: returns a column once all columns
/// agree within `tol` in L1.
fn power_squaring(m: &DMatrix<f64>, tol: f64) -> Result<DVector<f64>> {
    let mut cur = m.clone();
    for _ in 0..MAX_SQUARINGS {
        if max_pairwise_column_l1(&cur) <= tol {
            return Ok(cur.column(0).into_owned());
        }
        cur = &cur * &cur;
        // rounding drifts column sums away from 1 and compounds under squaring
        for mut col in cur.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
    }
    let col = cur.column(0).into_owned();
    let residual = (m * &col - &col).abs().sum();
    Err(Error::Convergence {
        iterations: MAX_SQUARINGS,
        residual,
    })
}

/// Stationary distribution of a single irreducible chain.
pub fn stationary_distribution(
    m: &StochasticMatrix,
    method: SteadyMethod,
    tol: f64,
) -> Result<Distribution> {
    let n = m.dim();
    let p = match method {
        SteadyMethod::Power => power_squaring(m.entries(), tol)?,
        SteadyMethod::Solve => {
            // (I - M) p = 0 with the last equation replaced by sum(p) = 1.
            let mut a = DMatrix::identity(n, n) - m.entries();
            for j in 0..n {
                a[(n - 1, j)] = 1.0;
            }
            let mut b = DVector::zeros(n);
            b[n - 1] = 1.0;
            a.lu()
                .solve(&b)
                .ok_or_else(|| Error::Singular("chain is not irreducible".into()))?
        }
    };
    let dist = Distribution::normalized(p.as_slice().to_vec())?;
    let residual = (m.entries() * dist.as_vector() - dist.as_vector())
        .abs()
        .sum();
    if residual > tol.max(1e-10) {
        return Err(Error::Convergence {
            iterations: 0,
            residual,
        });
    }
    Ok(dist)
}

pub(crate) fn system_matrix(t: &DMatrix<f64>, r: f64) -> DMatrix<f64> {
    let n = t.nrows();
    DMatrix::identity(n, n) - t * (1.0 - r)
}

/// `x = (I - (1-r) T)^{-1} p0_h`; the block steady state is `r x`.
fn solve_block(task: &TaskSpec, policy: &PolicyTable, h: Hypothesis) -> Result<DVector<f64>> {
    let t = build_block(task, policy, h);
    system_matrix(&t, task.r())
        .lu()
        .solve(&task.p0_block(h))
        .ok_or_else(|| Error::Singular("I - (1-r) T is singular; use r > 0".into()))
}

/// Steady state of the reset chain `r p0 + (1-r) T_pi` over the full state
/// space, computed block by block.
pub fn steady_state(
    task: &TaskSpec,
    policy: &PolicyTable,
    method: SteadyMethod,
    tol: f64,
) -> Result<Distribution> {
    let space = task.space();
    policy.check_shape(&space)?;
    let n = space.n_local();
    let r = task.r();
    let mut probs = vec![0.0; 2 * n];
    for h in Hypothesis::ALL {
        let block = match method {
            SteadyMethod::Solve => solve_block(task, policy, h)? * r,
            SteadyMethod::Power => {
                let t = build_block(task, policy, h);
                let p0 = task.p0_block(h);
                let mut m = t * (1.0 - r);
                for j in 0..n {
                    for i in 0..n {
                        m[(i, j)] += r * p0[i];
                    }
                }
                power_squaring(&m, tol)?
            }
        };
        let mass = block.sum();
        for (i, v) in block.iter().enumerate() {
            probs[h.index() * n + i] = 0.5 * v / mass;
        }
    }
    Distribution::normalized(probs)
}

/// Stationary distribution of the policy chain without reset, i.e. the
/// `r -> 0` limit of [`steady_state`]. Each hypothesis block must have a
/// single recurrent class.
pub fn steady_state_no_reset(
    task: &TaskSpec,
    policy: &PolicyTable,
    method: SteadyMethod,
    tol: f64,
) -> Result<Distribution> {
    let space = task.space();
    policy.check_shape(&space)?;
    let n = space.n_local();
    let mut probs = vec![0.0; 2 * n];
    for h in Hypothesis::ALL {
        let block = StochasticMatrix::new(build_block(task, policy, h))?;
        let p = stationary_distribution(&block, method, tol)?;
        for (i, v) in p.probs().iter().enumerate() {
            probs[h.index() * n + i] = 0.5 * v;
        }
    }
    Distribution::normalized(probs)
}

/// Wrong-arm probability in the `r -> 0` limit.
pub fn q_no_reset(task: &TaskSpec, policy: &PolicyTable) -> Result<f64> {
    let p = steady_state_no_reset(task, policy, SteadyMethod::Solve, 1e-10)?;
    Ok(wrong_arm_probability(
        &p,
        &WrongArmIndicator::new(&task.space()),
    ))
}

/// `G = (1/r) E_p[R]`.
pub fn gain(p: &Distribution, reward: &RewardVector, r: f64) -> f64 {
    p.as_vector().dot(&reward.values) / r
}

/// `q = E_p[q(s)]`.
pub fn wrong_arm_probability(p: &Distribution, ind: &WrongArmIndicator) -> f64 {
    p.as_vector().dot(&ind.values)
}

/// `G = (mu/r)(1 - 2q)`.
pub fn gain_from_q(q: f64, mu: f64, r: f64) -> f64 {
    mu / r * (1.0 - 2.0 * q)
}

/// Steady state together with both performance measures.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub steady: Distribution,
    pub q: f64,
    pub gain: f64,
}

/// Exact evaluation by the direct solve.
pub fn evaluate(task: &TaskSpec, policy: &PolicyTable) -> Result<Evaluation> {
    let steady = steady_state(task, policy, SteadyMethod::Solve, DEFAULT_POWER_TOL)?;
    let space = task.space();
    let q = wrong_arm_probability(&steady, &WrongArmIndicator::new(&space));
    let g = gain(&steady, &RewardVector::new(&space), task.r());
    Ok(Evaluation { steady, q, gain: g })
}
