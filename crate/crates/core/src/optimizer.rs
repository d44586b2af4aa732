//! Softmax parametrization, exact gradient of the gain, and gradient-flow
//! training with adaptive steps.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arch::{Hypothesis, RewardSign, StateSpace};
use crate::error::{Error, Result};
use crate::model::{
    build_block, system_matrix, Distribution, PolicyTable, RewardVector, TaskSpec,
    WrongArmIndicator,
};

/// Unconstrained `|A| x |Omega|` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    w: DMatrix<f64>,
}

impl PolicyParams {
    pub fn new(w: DMatrix<f64>) -> Self {
        PolicyParams { w }
    }

    pub fn zeros(space: &StateSpace) -> Self {
        PolicyParams {
            w: DMatrix::zeros(space.n_actions(), space.n_observations()),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n_actions(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_observations(&self) -> usize {
        self.w.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
    }
}

/// Column-wise softmax with max subtraction.
pub fn softmax_policy(params: &PolicyParams) -> PolicyTable {
    let mut table = params.w.clone();
    for mut col in table.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let s = col.sum();
        col /= s;
    }
    PolicyTable::new(table).expect("softmax columns are stochastic")
}

fn softmax_vec(v: &DVector<f64>) -> DVector<f64> {
    let max = v.max();
    let e = v.map(|x| (x - max).exp());
    let s = e.sum();
    e / s
}

/// Log-weights of a learnable initial memory distribution, shared by both
/// hypothesis blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct P0Logits {
    v: DVector<f64>,
}

impl P0Logits {
    pub fn new(v: DVector<f64>) -> Self {
        P0Logits { v }
    }

    /// Starts from the average of the task's two conditional blocks.
    pub fn from_task(task: &TaskSpec) -> Self {
        let avg = (task.p0_block(Hypothesis::A) + task.p0_block(Hypothesis::B)) * 0.5;
        P0Logits {
            v: avg.map(|p| p.max(1e-12).ln()),
        }
    }

    pub fn logits(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn distribution(&self) -> Distribution {
        let block = softmax_vec(&self.v);
        let mut probs = Vec::with_capacity(2 * block.len());
        for _ in 0..2 {
            probs.extend(block.iter().map(|p| 0.5 * p));
        }
        Distribution::normalized(probs).expect("softmax is a distribution")
    }
}

/// Gain, error rate and gradient at one parameter point.
#[derive(Clone, Debug)]
pub struct GainGradient {
    pub gain: f64,
    pub q: f64,
    /// `dG/dpi(a|o)` before the softmax chain rule.
    pub d_policy: DMatrix<f64>,
    /// `dG/dw`.
    pub d_weights: DMatrix<f64>,
    /// `dG/dv` for the shared initial-distribution logits, if requested.
    pub d_p0: Option<DVector<f64>>,
}

impl GainGradient {
    pub fn norm(&self) -> f64 {
        let p0 = self.d_p0.as_ref().map_or(0.0, |g| g.norm_squared());
        (self.d_weights.norm_squared() + p0).sqrt()
    }
}

/// Exact gradient of `G` through the reset linear system.
///
/// Per hypothesis block `A x = p0` with `A = I - (1-r) T`, and
/// `G = 1/2 sum_h R_h . x_h`. One adjoint solve `A^T lambda = R` per block
/// gives `dG/dT = 1/2 (1-r) lambda x^T`, which is then pulled back to the
/// policy entries and through the softmax.
pub fn gain_gradient(params: &PolicyParams, task: &TaskSpec) -> Result<GainGradient> {
    gradient_impl(params, task, false)
}

/// As [`gain_gradient`], also differentiating with respect to shared
/// initial-distribution logits (the task's `p0` must come from them).
pub fn gain_gradient_with_p0(
    params: &PolicyParams,
    task: &TaskSpec,
    p0: &P0Logits,
) -> Result<GainGradient> {
    let task = task.clone().with_p0(p0.distribution())?;
    let mut g = gradient_impl(params, &task, true)?;
    if let Some(d) = g.d_p0.take() {
        let s = softmax_vec(p0.logits());
        let mean = s.dot(&d);
        g.d_p0 = Some(s.component_mul(&d.add_scalar(-mean)));
    }
    Ok(g)
}

fn gradient_impl(params: &PolicyParams, task: &TaskSpec, want_p0: bool) -> Result<GainGradient> {
    let space = task.space();
    if params.n_actions() != space.n_actions() || params.n_observations() != space.n_observations()
    {
        return Err(Error::Shape {
            expected: format!("{}x{}", space.n_actions(), space.n_observations()),
            got: format!("{}x{}", params.n_actions(), params.n_observations()),
        });
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("policy weights".into()));
    }
    let r = task.r();
    if r <= 0.0 {
        return Err(Error::Singular(
            "I - (1-r) T is singular at r = 0; use r > 0".into(),
        ));
    }
    let policy = softmax_policy(params);
    let reward = RewardVector::new(&space);
    let wrong = WrongArmIndicator::new(&space);
    let (na, no) = (space.n_actions(), space.n_observations());
    let mut d_policy: DMatrix<f64> = DMatrix::zeros(na, no);
    let mut gain = 0.0;
    let mut q = 0.0;
    let mut d_p0 = want_p0.then(|| DVector::zeros(space.n_local()));
    for h in Hypothesis::ALL {
        let t = build_block(task, &policy, h);
        let a = system_matrix(&t, r);
        let singular = || Error::Singular("I - (1-r) T is singular; use r > 0".into());
        let x = a
            .clone()
            .lu()
            .solve(&task.p0_block(h))
            .ok_or_else(singular)?;
        let rh = reward.block(&space, h);
        let lambda = a.transpose().lu().solve(&rh).ok_or_else(singular)?;
        gain += 0.5 * rh.dot(&x);
        q += 0.5 * r * wrong.block(&space, h).dot(&x);
        for o in 0..no {
            let xo = 0.5 * (1.0 - r) * x[o];
            if xo == 0.0 {
                continue;
            }
            for act in 0..na {
                let k = task.reward_prob(h, space.action_arm(act));
                let up = lambda[space.successor(o, act, RewardSign::Plus)];
                let down = lambda[space.successor(o, act, RewardSign::Minus)];
                d_policy[(act, o)] += xo * (k * up + (1.0 - k) * down);
            }
        }
        if let Some(d) = d_p0.as_mut() {
            *d += &lambda * 0.5;
        }
    }
    let mut d_weights: DMatrix<f64> = DMatrix::zeros(na, no);
    for o in 0..no {
        let mean: f64 = (0..na).map(|b| policy.prob(b, o) * d_policy[(b, o)]).sum();
        for act in 0..na {
            d_weights[(act, o)] = policy.prob(act, o) * (d_policy[(act, o)] - mean);
        }
    }
    if !gain.is_finite() || d_weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gain or gradient".into()));
    }
    Ok(GainGradient {
        gain,
        q,
        d_policy,
        d_weights,
        d_p0,
    })
}

/// Central difference `(G(w + h e) - G(w - h e)) / 2h` for one weight.
///
/// The difference is formed as `x+ - x- = (1-r) A+^-1 (T+ - T-) x-` rather
/// than by subtracting two gains, so large `|G|` does not swamp small
/// components.
pub fn central_difference(
    params: &PolicyParams,
    task: &TaskSpec,
    action: usize,
    obs: usize,
    h: f64,
) -> Result<f64> {
    let space = task.space();
    if action >= params.n_actions() || obs >= params.n_observations() {
        return Err(Error::Index {
            index: action.max(obs),
            size: params.n_actions().min(params.n_observations()),
        });
    }
    let r = task.r();
    if r <= 0.0 {
        return Err(Error::Singular(
            "I - (1-r) T is singular at r = 0; use r > 0".into(),
        ));
    }
    let shifted = |d: f64| {
        let mut w = params.weights().clone();
        w[(action, obs)] += d;
        softmax_policy(&PolicyParams::new(w))
    };
    let (plus, minus) = (shifted(h), shifted(-h));
    let reward = RewardVector::new(&space);
    let singular = || Error::Singular("I - (1-r) T is singular; use r > 0".into());
    let mut diff = 0.0;
    for hyp in Hypothesis::ALL {
        let tp = build_block(task, &plus, hyp);
        let tm = build_block(task, &minus, hyp);
        let xm = system_matrix(&tm, r)
            .lu()
            .solve(&task.p0_block(hyp))
            .ok_or_else(singular)?;
        let rhs = (&tp - &tm) * xm * (1.0 - r);
        let dx = system_matrix(&tp, r)
            .lu()
            .solve(&rhs)
            .ok_or_else(singular)?;
        diff += 0.5 * reward.block(&space, hyp).dot(&dx);
    }
    Ok(diff / (2.0 * h))
}

/// Adaptive explicit-Euler settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Flow-time budget.
    pub t_max: f64,
    pub dt0: f64,
    pub grow: f64,
    pub shrink: f64,
    pub grad_tol: f64,
    /// Accepted-step budget.
    pub max_accepted: usize,
    /// Accepted plus rejected steps.
    pub max_iterations: usize,
    /// Label carried into the trace; the flow itself is deterministic.
    pub seed: u64,
    pub learn_p0: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t_max: f64::INFINITY,
            dt0: 0.1,
            grow: 1.5,
            shrink: 0.5,
            grad_tol: 1e-10,
            max_accepted: 5000,
            max_iterations: 50_000,
            seed: 0,
            learn_p0: false,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt0.is_nan() || self.dt0 <= 0.0 {
            return Err(Error::Domain("dt0 must be positive".into()));
        }
        if !(self.grow > 1.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Domain("need grow > 1 > shrink > 0".into()));
        }
        if self.t_max.is_nan() || self.t_max <= 0.0 {
            return Err(Error::Domain("t_max must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub q: f64,
    pub gain: f64,
    /// Step that produced this point (0 for the starting point).
    pub dt: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    TimeBudget,
    StepBudget,
    IterationCap,
    /// The step size underflowed without any improvement.
    Stalled,
    NonFinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub seed: u64,
    pub points: Vec<TracePoint>,
    pub rejected: usize,
    pub stop: StopReason,
}

impl FlowTrace {
    pub fn last(&self) -> &TracePoint {
        self.points.last().expect("trace holds the starting point")
    }

    /// Rows `seed,t,q,G,dt,grad_norm`.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        if header {
            wtr.write_record(["seed", "t", "q", "G", "dt", "grad_norm"])?;
        }
        for p in &self.points {
            wtr.write_record([
                self.seed.to_string(),
                format!("{:e}", p.t),
                format!("{:e}", p.q),
                format!("{:e}", p.gain),
                format!("{:e}", p.dt),
                format!("{:e}", p.grad_norm),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub params: PolicyParams,
    /// Final initial distribution when `learn_p0` is set.
    pub p0: Option<P0Logits>,
    pub trace: FlowTrace,
}

fn evaluate_point(
    w: &PolicyParams,
    task: &TaskSpec,
    p0: Option<&P0Logits>,
) -> Result<GainGradient> {
    match p0 {
        Some(v) => gain_gradient_with_p0(w, task, v),
        None => gain_gradient(w, task),
    }
}

/// Gradient ascent on `G` with step control: a step is accepted if it
/// increases `G` (then `dt *= grow`), otherwise rejected (`dt *= shrink`).
pub fn gradient_flow(w0: &PolicyParams, task: &TaskSpec, cfg: &FlowConfig) -> Result<FlowResult> {
    cfg.validate()?;
    let mut w = w0.clone();
    let mut p0 = cfg.learn_p0.then(|| P0Logits::from_task(task));
    let mut cur = evaluate_point(&w, task, p0.as_ref())?;
    let mut trace = FlowTrace {
        seed: cfg.seed,
        points: vec![TracePoint {
            t: 0.0,
            q: cur.q,
            gain: cur.gain,
            dt: 0.0,
            grad_norm: cur.norm(),
        }],
        rejected: 0,
        stop: StopReason::IterationCap,
    };
    let mut t = 0.0;
    let mut dt = cfg.dt0;
    let mut accepted = 0;
    for _ in 0..cfg.max_iterations {
        let norm = cur.norm();
        if norm < cfg.grad_tol {
            trace.stop = StopReason::GradientTolerance;
            break;
        }
        if accepted >= cfg.max_accepted {
            trace.stop = StopReason::StepBudget;
            break;
        }
        if t >= cfg.t_max {
            trace.stop = StopReason::TimeBudget;
            break;
        }
        let step = dt.min(cfg.t_max - t);
        if step < 1e-14 * t.max(1.0) {
            trace.stop = StopReason::Stalled;
            break;
        }
        let w_new = PolicyParams::new(&w.w + &cur.d_weights * step);
        let p0_new = match (&p0, &cur.d_p0) {
            (Some(v), Some(g)) => Some(P0Logits::new(&v.v + g * step)),
            _ => None,
        };
        let candidate = match evaluate_point(&w_new, task, p0_new.as_ref()) {
            Ok(c) => Some(c),
            Err(Error::NonFinite(_)) if !w_new.is_finite() => {
                trace.stop = StopReason::NonFinite;
                break;
            }
            Err(Error::NonFinite(_)) => None,
            Err(e) => return Err(e),
        };
        match candidate {
            Some(c) if c.gain > cur.gain => {
                t += step;
                accepted += 1;
                trace.points.push(TracePoint {
                    t,
                    q: c.q,
                    gain: c.gain,
                    dt: step,
                    grad_norm: c.norm(),
                });
                w = w_new;
                p0 = p0_new;
                cur = c;
                dt *= cfg.grow;
            }
            _ => {
                trace.rejected += 1;
                dt *= cfg.shrink;
            }
        }
    }
    Ok(FlowResult {
        params: w,
        p0,
        trace,
    })
}
