//! Closed-form predictions for the column-of-confidence and necklace
//! policies, and the random-walk lemmas they rest on.
//!
//! The exact CCP expressions are written in terms of the two roots `w+ > 1 > w-`
//! of the bulk recurrence. Every power `w+^k` is divided out, so only
//! `(w-/w+)^M` appears and it underflows harmlessly to zero for large `M`.

use std::collections::HashMap;

use crate::arch::{Hypothesis, RewardSign, StateSpace};
use crate::error::{Error, Result};
use crate::model::{build_block, PolicyTable, TaskSpec};
use crate::necklace::{canonical_bits, GrayChain};

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("mu must be in (0,1), got {mu}")))
    }
}

fn check_r(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("r must be in (0,1), got {r}")))
    }
}

fn check_size(m: usize) -> Result<()> {
    if m >= 1 {
        Ok(())
    } else {
        Err(Error::Domain("memory size must be at least 1".into()))
    }
}

/// `(1 - mu) / (1 + mu)`.
pub fn alpha(mu: f64) -> Result<f64> {
    check_mu(mu)?;
    Ok((1.0 - mu) / (1.0 + mu))
}

/// `x / (1 + x)` for `x = alpha^k`, computed from `ln x`.
fn logistic_of_log(ln_x: f64) -> f64 {
    if ln_x > 0.0 {
        1.0 / (1.0 + (-ln_x).exp())
    } else {
        let x = ln_x.exp();
        x / (1.0 + x)
    }
}

/// Hellman–Cover optimum for `M` states: `a^(M-1) / (a^(M-1) + 1)`.
pub fn q_hellman_cover(size: usize, mu: f64) -> Result<f64> {
    check_size(size)?;
    Ok(logistic_of_log((size as f64 - 1.0) * alpha(mu)?.ln()))
}

/// Small-reset limit of the optimal CCP: `a^(2M-1) / (a^(2M-1) + 1)`.
pub fn q_ccp_limit(size: usize, mu: f64) -> Result<f64> {
    check_size(size)?;
    Ok(logistic_of_log((2.0 * size as f64 - 1.0) * alpha(mu)?.ln()))
}

/// Roots of `(1-r) k_A w^2 - w + (1-r) k_B = 0` with `k_A = (1+mu)/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WRoots {
    pub w_plus: f64,
    pub w_minus: f64,
    /// `w_plus - 1`, accurate for small `r`.
    pub d_plus: f64,
    /// `w_minus - 1`.
    pub d_minus: f64,
}

pub fn w_roots(r: f64, mu: f64) -> Result<WRoots> {
    check_r(r)?;
    let a = alpha(mu)?;
    let disc = 1.0 - (1.0 - r).powi(2) * (1.0 - mu * mu);
    if disc < 0.0 {
        return Err(Error::Domain("negative discriminant".into()));
    }
    let s = disc.sqrt();
    // s - mu without cancellation
    let s_minus_mu = (1.0 - mu * mu) * (2.0 * r - r * r) / (s + mu);
    let denom = (1.0 - r) * (1.0 + mu);
    let d_plus = (s_minus_mu + r * (1.0 + mu)) / denom;
    let w_plus = 1.0 + d_plus;
    // the product of the roots is exactly alpha
    let w_minus = a / w_plus;
    let d_minus = (a - 1.0 - d_plus) / w_plus;
    Ok(WRoots {
        w_plus,
        w_minus,
        d_plus,
        d_minus,
    })
}

/// Exact wrong-arm probability of the CCP with top-state exit `eps`.
pub fn q_ccp_exact(size: usize, mu: f64, r: f64, eps: f64) -> Result<f64> {
    check_size(size)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!("eps must be in (0,1], got {eps}")));
    }
    let WRoots {
        w_plus: wp,
        w_minus: wm,
        d_plus: dp,
        d_minus: dm,
    } = w_roots(r, mu)?;
    let p = wp * wm;
    let m = size as i32;
    let rho = wm / wp;
    let rho_m = rho.powi(m);
    let rho_2m = rho_m * rho_m;
    let e1 = eps - 1.0;
    // 1 + w(eps - 1) and w + eps - 1 for both roots
    let fp = wp * eps - dp;
    let fm = wm * eps - dm;
    let gp = dp + eps;
    let gm = dm + eps;
    // numerator and denominator divided by w+^(2M)
    let num = wp * (1.0 + wp) * (-dm) * rho_2m * fp * gm
        + wm * (1.0 + wm) * (-dp) * fm * gp
        + rho_m * (p - 1.0) * (dm * dp * (wm + wp) * e1 + 2.0 * p * eps * eps);
    let den = 2.0 * (wm - wp) * (wm * fm * gp - rho_2m * wp * fp * gm);
    let q = num / den;
    if !q.is_finite() {
        return Err(Error::NonFinite(format!(
            "q_ccp_exact(M={size}, mu={mu}, r={r}, eps={eps})"
        )));
    }
    Ok(q)
}

/// Both stationary points in `eps` of [`q_ccp_exact`], unfiltered.
pub fn epsilon_opt_branches(size: usize, mu: f64, r: f64) -> Result<[f64; 2]> {
    check_size(size)?;
    let WRoots {
        w_plus: wp,
        w_minus: wm,
        d_plus: dp,
        d_minus: dm,
    } = w_roots(r, mu)?;
    let p = wp * wm;
    let rho = (wm / wp).powi(size as i32);
    // every term divided by w+^(3M) w-^M
    let lead = dm * dp * (p - 1.0) * (rho * wp - wm).powi(2);
    let k = rho.powi(3) * wp * wp * (1.0 + wm) * (1.0 + wp) - wm * wm * (1.0 + wp) * (1.0 + wm)
        + rho * wm * (2.0 * wp + wm + p * (7.0 + 2.0 * wp) + wm * wm * dp)
        - rho * rho * wp * (2.0 * wm + wp + p * (7.0 + 2.0 * wm) + wp * wp * dm);
    let radicand = dm * dp * p * (p - 1.0).powi(2) * (1.0 - rho) * k;
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "no real optimum (radicand {radicand:e})"
        )));
    }
    let root = radicand.sqrt();
    let den = (p - 1.0)
        * (wm * wm * (1.0 + wm * dp + wp) + rho * rho * wp * wp * (1.0 + wp * dm + wm)
            - 2.0 * rho * p * (1.0 + p));
    Ok([(lead - root) / den, (lead + root) / den])
}

/// Optimal top-state exit probability.
///
/// Picks the stationary point that lies in `(0, 1]` and gives the lower `q`.
/// When neither does (e.g. `M = 1`, where the minimum sits on the boundary)
/// the lower of `q(1)` and the clamped candidates wins.
pub fn epsilon_opt(size: usize, mu: f64, r: f64) -> Result<f64> {
    let mut best = (1.0, q_ccp_exact(size, mu, r, 1.0)?);
    if let Ok(branches) = epsilon_opt_branches(size, mu, r) {
        for e in branches {
            if e.is_finite() && e > 0.0 && e <= 1.0 {
                let q = q_ccp_exact(size, mu, r, e)?;
                if q < best.1 {
                    best = (e, q);
                }
            }
        }
    }
    Ok(best.0)
}

/// Leading `sqrt(r)` term of the small-reset expansion of [`epsilon_opt`].
pub fn epsilon_taylor(size: usize, mu: f64, r: f64) -> Result<f64> {
    check_size(size)?;
    check_r(r)?;
    let a = alpha(mu)?;
    let m = size as i32;
    let am = a.powi(m);
    let inner = a - a.powi(3 * m - 1) + am * (2.0 * mu - 3.0) + am * am * (2.0 * mu + 3.0);
    let den = (1.0 - am).sqrt() * (1.0 - am - mu - am * mu);
    Ok(2f64.sqrt() * inner.max(0.0).sqrt() / den * r.sqrt())
}

/// Large-`M` limit of [`epsilon_taylor`]: `sqrt(2r / (1 - mu^2))`.
pub fn epsilon_large_m(mu: f64, r: f64) -> Result<f64> {
    check_mu(mu)?;
    check_r(r)?;
    Ok((2.0 * r / (1.0 - mu * mu)).sqrt())
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, f(x))
}

/// Birth-death chain of interior sites `1..=n` with step probabilities `l`
/// (towards site 0) and `r` (towards `n+1`), plus end-site exit weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub l: Vec<f64>,
    pub r: Vec<f64>,
    /// Exit weight of the right end towards the interior.
    pub big_l: f64,
    /// Exit weight of the left end towards the interior.
    pub big_r: f64,
}

impl ChainSpec {
    pub fn new(l: Vec<f64>, r: Vec<f64>, big_l: f64, big_r: f64) -> Result<Self> {
        if l.len() != r.len() {
            return Err(Error::Shape {
                expected: l.len().to_string(),
                got: r.len().to_string(),
            });
        }
        for (li, ri) in l.iter().zip(&r) {
            if !(*li >= 0.0 && *ri >= 0.0 && li + ri <= 1.0 + 1e-15) {
                return Err(Error::Domain(format!("invalid step pair ({li}, {ri})")));
            }
        }
        if !(big_l > 0.0 && big_r > 0.0) {
            return Err(Error::Domain("end exit weights must be positive".into()));
        }
        Ok(ChainSpec { l, r, big_l, big_r })
    }

    pub fn len(&self) -> usize {
        self.l.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l.is_empty()
    }

    /// Swaps left and right, mirroring the chain.
    pub fn mirrored(&self) -> ChainSpec {
        ChainSpec {
            l: self.r.iter().rev().copied().collect(),
            r: self.l.iter().rev().copied().collect(),
            big_l: self.big_r,
            big_r: self.big_l,
        }
    }
}

fn check_range(spec: &ChainSpec, i: usize, j: usize) -> Result<()> {
    if i > j || j >= spec.len() {
        return Err(Error::Index {
            index: j,
            size: spec.len(),
        });
    }
    Ok(())
}

/// Probability that a walker started at interior site `i` reaches `j+1`
/// before `i-1` (0-based indices into `spec.l`/`spec.r`).
pub fn chain_traverse_prob(spec: &ChainSpec, i: usize, j: usize) -> Result<f64> {
    check_range(spec, i, j)?;
    if spec.r[i..=j].contains(&0.0) {
        return Ok(0.0);
    }
    let mut x = 0.0;
    for k in (i..=j).rev() {
        x = spec.l[k] / spec.r[k] * (1.0 + x);
    }
    Ok(1.0 / (1.0 + x))
}

/// Probability that a walker started at `j` reaches `i-1` before `j+1`.
pub fn chain_traverse_prob_left(spec: &ChainSpec, i: usize, j: usize) -> Result<f64> {
    check_range(spec, i, j)?;
    let n = spec.len();
    chain_traverse_prob(&spec.mirrored(), n - 1 - j, n - 1 - i)
}

/// Occupancy of the right end site as the end exits vanish.
pub fn chain_end_occupancy(spec: &ChainSpec) -> Result<f64> {
    let mut ln_ratio = (spec.big_l / spec.big_r).ln();
    for (l, r) in spec.l.iter().zip(&spec.r) {
        if !(*l > 0.0 && *r > 0.0) {
            return Err(Error::Domain("interior steps must be positive".into()));
        }
        ln_ratio += (l / r).ln();
    }
    Ok(1.0 - logistic_of_log(ln_ratio))
}

/// Small-reset bound for the necklace policy: `(1 + a^(m(1-n)))^-1`.
pub fn q_star_necklace(m: usize, mu: f64, n_of_m: usize) -> Result<f64> {
    check_size(m)?;
    if n_of_m < 2 {
        return Err(Error::Domain(
            "a chain holds at least the two end necklaces".into(),
        ));
    }
    let expo = m as f64 * (n_of_m as f64 - 1.0);
    Ok(logistic_of_log(expo * alpha(mu)?.ln()))
}

fn check_general(k_a: f64, k_b: f64) -> Result<()> {
    if !(0.0 < k_b && k_b < k_a && k_a < 1.0) {
        return Err(Error::Domain(format!(
            "need 1 > k_A > k_B > 0, got k_A={k_a}, k_B={k_b}"
        )));
    }
    Ok(())
}

/// `ln((1/k_B - 1) / (1/k_A - 1))`.
fn ln_odds_ratio(k_a: f64, k_b: f64) -> f64 {
    (1.0 / k_b - 1.0).ln() - (1.0 / k_a - 1.0).ln()
}

/// CCP with no reset for arbitrary `k_A > k_B`.
pub fn q_general_ccp(k_a: f64, k_b: f64, size: usize) -> Result<f64> {
    check_general(k_a, k_b)?;
    check_size(size)?;
    let ln_odds = ((1.0 - k_b) / (1.0 - k_a)).ln() + (size as f64 - 1.0) * ln_odds_ratio(k_a, k_b);
    Ok(1.0 / (1.0 + ln_odds.exp()))
}

/// Necklace policy limit for arbitrary `k_A > k_B`.
pub fn q_general_necklace(k_a: f64, k_b: f64, m: usize, n_of_m: usize) -> Result<f64> {
    check_general(k_a, k_b)?;
    check_size(m)?;
    if n_of_m < 2 {
        return Err(Error::Domain(
            "a chain holds at least the two end necklaces".into(),
        ));
    }
    let ln_odds = m as f64 * ((1.0 - k_b) / (1.0 - k_a)).ln()
        + (m * (n_of_m - 2)) as f64 / 2.0 * ln_odds_ratio(k_a, k_b);
    Ok(1.0 / (1.0 + ln_odds.exp()))
}

/// Like [`q_general_necklace`] but with the letter counts of a specific chain,
/// which need not split evenly between A and B.
pub fn q_chain_necklace(k_a: f64, k_b: f64, chain: &GrayChain) -> Result<f64> {
    check_general(k_a, k_b)?;
    let m = chain.word_len() as f64;
    let (a, b) = chain.interior_letter_counts();
    let ln_odds = m * ((1.0 - k_b) / (1.0 - k_a)).ln() + b as f64 * (1.0 / k_b - 1.0).ln()
        - a as f64 * (1.0 / k_a - 1.0).ln();
    Ok(1.0 / (1.0 + ln_odds.exp()))
}

/// Predicted single-loop exit probabilities `(l_i, r_i)` of interior chain
/// necklaces under `H_A`.
pub fn necklace_exit_rates(k_a: f64, k_b: f64, eps1: f64, chain: &GrayChain) -> Vec<(f64, f64)> {
    let nodes = chain.necklaces();
    nodes[1..nodes.len() - 1]
        .iter()
        .map(|nk| {
            let (a, b) = (nk.count_a() as i32, nk.count_b() as i32);
            let l = eps1 * k_a.powi(a) * (1.0 - k_b).powi(b);
            let r = eps1 * (1.0 - k_a).powi(a) * k_b.powi(b);
            (l, r)
        })
        .collect()
}

/// Exit probabilities of interior chain necklaces read off a policy's
/// transition matrix under `H_A`.
///
/// For every rotation of necklace `i`, the remembered rewards are drawn
/// independently from the arms' laws (as they are after one full loop), and
/// the one-step probability of landing in necklace `i-1` (resp. `i+1`) is
/// accumulated.
pub fn measured_exit_rates(
    task: &TaskSpec,
    policy: &PolicyTable,
    chain: &GrayChain,
) -> Result<Vec<(f64, f64)>> {
    let space: StateSpace = task.space();
    let m = task.arch().size();
    if chain.word_len() != m || !matches!(task.arch(), crate::arch::Arch::Memento(_)) {
        return Err(Error::InvalidChain(
            "chain does not match the task's Memento length".into(),
        ));
    }
    policy.check_shape(&space)?;
    let t = build_block(task, policy, Hypothesis::A);
    let index: HashMap<u32, usize> = chain.index_map();
    let mask = (1usize << m) - 1;
    let n = chain.len();
    let mut out = Vec::with_capacity(n.saturating_sub(2));
    for (i, nk) in chain.necklaces().iter().enumerate().take(n - 1).skip(1) {
        let (mut left, mut right) = (0.0, 0.0);
        for arms in nk.rotations() {
            for rewards in 0..=mask {
                let mut weight = 1.0;
                for pos in 0..m {
                    let arm = crate::arch::Arm::from_index(((arms as usize) >> pos) & 1);
                    let k = task.reward_prob(Hypothesis::A, arm);
                    weight *= if (rewards >> pos) & 1 == RewardSign::Plus.index() {
                        k
                    } else {
                        1.0 - k
                    };
                }
                let s = ((arms as usize) << m) | rewards;
                for s2 in 0..space.n_local() {
                    let p = t[(s2, s)];
                    if p == 0.0 {
                        continue;
                    }
                    match index.get(&canonical_bits((s2 >> m) as u32, m)) {
                        Some(&j) if j + 1 == i => left += weight * p,
                        Some(&j) if j == i + 1 => right += weight * p,
                        _ => {}
                    }
                }
            }
        }
        out.push((left, right));
    }
    Ok(out)
}
