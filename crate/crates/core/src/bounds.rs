//! Numeric checks of two performance-difference bounds on tabular MDPs:
//!
//! - time domain: `|J(π₁) − J(π₂)| ≤ R_max/(1−γ) · ‖P(s_0..s_T|π₁) − P(s_0..s_T|π₂)‖₁ + 2R_max γ^{T+1}/(1−γ)`;
//! - frequency domain, for a polynomial reward `R(s) = Σ_k ⟨c_k, s^k⟩`:
//!   `|J(π₁) − J(π₂)| ≤ √D/(1−γ) Σ_{k≥1} ‖c_k‖ max_i sup_ω |F₁^{(k)}(ω) − F₂^{(k)}(ω)|`,
//!   evaluated on the DTFT of the moment-difference sequence.

use serde::Serialize;

use crate::complex::C64;
use crate::error::{invalid, Error, Result};
use crate::mdp::{induced_chain, performance_with_reward, policy_performance, TabularMdp, TabularPolicy};

/// Largest number of length-`T+1` state paths the L1 computation may visit.
pub const PATH_BUDGET: f64 = 1e7;
pub const MAX_POLY_DEGREE: usize = 4;
pub const MAX_POLY_DIM: usize = 4;

/// Exact `Σ_paths |P₁(s_0..s_T) − P₂(s_0..s_T)|`.
///
/// Depth-first over path prefixes carrying both prefix probabilities. A
/// prefix with one probability equal to zero contributes the other one in
/// full, so its subtree is never expanded.
pub fn truncated_seqdist_l1(
    mdp: &TabularMdp,
    policy1: &TabularPolicy,
    policy2: &TabularPolicy,
    horizon: usize,
) -> Result<f64> {
    let n = mdp.n_states();
    let required = (n as f64).powi(horizon as i32 + 1);
    if required > PATH_BUDGET {
        return Err(Error::BudgetExceeded { required, budget: PATH_BUDGET });
    }
    let m1 = induced_chain(mdp, policy1)?;
    let m2 = induced_chain(mdp, policy2)?;

    fn walk(m1: &crate::Mat, m2: &crate::Mat, s: usize, depth: usize, q1: f64, q2: f64) -> f64 {
        if q1 == 0.0 {
            return q2;
        }
        if q2 == 0.0 {
            return q1;
        }
        if depth == 0 {
            return (q1 - q2).abs();
        }
        let mut acc = 0.0;
        for sp in 0..m1.rows() {
            let (a, b) = (m1[(s, sp)], m2[(s, sp)]);
            if a == 0.0 && b == 0.0 {
                continue;
            }
            acc += walk(m1, m2, sp, depth - 1, q1 * a, q2 * b);
        }
        acc
    }

    Ok(mdp
        .initial_dist()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| walk(&m1, &m2, s, horizon, p, p))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeDomainCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub l1: f64,
    pub tail: f64,
    pub holds: bool,
}

impl TimeDomainCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

pub fn verify_time_domain_bound(
    mdp: &TabularMdp,
    policy1: &TabularPolicy,
    policy2: &TabularPolicy,
    horizon: usize,
) -> Result<TimeDomainCheck> {
    let g = mdp.gamma();
    let lhs = (policy_performance(mdp, policy1)? - policy_performance(mdp, policy2)?).abs();
    let l1 = truncated_seqdist_l1(mdp, policy1, policy2, horizon)?;
    let tail = 2.0 * mdp.r_max() * g.powi(horizon as i32 + 1) / (1.0 - g);
    let rhs = mdp.r_max() / (1.0 - g) * l1 + tail;
    Ok(TimeDomainCheck { lhs, rhs, l1, tail, holds: lhs <= rhs + 1e-10 })
}

/// `R(s) = Σ_{k=0}^{n} ⟨c_k, s^k⟩` with the power taken elementwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialReward {
    coefficients: Vec<Vec<f64>>,
}

impl PolynomialReward {
    pub fn new(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.len() < 2 {
            return Err(invalid("polynomial reward needs degree at least 1"));
        }
        if coefficients.len() - 1 > MAX_POLY_DEGREE {
            return Err(invalid(format!("degree above the cap of {MAX_POLY_DEGREE}")));
        }
        let d = coefficients[0].len();
        if d == 0 || d > MAX_POLY_DIM || coefficients.iter().any(|c| c.len() != d) {
            return Err(invalid(format!("coefficients must share a dimension in 1..={MAX_POLY_DIM}")));
        }
        if coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("coefficients must be finite"));
        }
        Ok(PolynomialReward { coefficients })
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.coefficients[0].len()
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(k, c)| c.iter().zip(s).map(|(ci, si)| ci * si.powi(k as i32)).sum::<f64>())
            .sum()
    }

    /// Reward vector over the MDP's states, checked against `R_max`.
    pub fn reward_vector(&self, mdp: &TabularMdp) -> Result<Vec<f64>> {
        if mdp.embedding_dim() != self.dim() {
            return Err(invalid("polynomial dimension does not match the embedding"));
        }
        let r: Vec<f64> = (0..mdp.n_states()).map(|s| self.eval(mdp.embed(s))).collect();
        Ok(r)
    }
}

/// `m_t[i] = Σ_s p_t(s) φ(s)_i^k` for `t = 0..N`.
pub fn moment_sequence(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    power: usize,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    if power > MAX_POLY_DEGREE {
        return Err(invalid(format!("power {power} above the cap of {MAX_POLY_DEGREE}")));
    }
    let m = induced_chain(mdp, policy)?;
    let d = mdp.embedding_dim();
    let mut p = mdp.initial_dist().to_vec();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut v = vec![0.0; d];
        for (s, &ps) in p.iter().enumerate() {
            if ps == 0.0 {
                continue;
            }
            for (o, e) in v.iter_mut().zip(mdp.embed(s)) {
                *o += ps * e.powi(power as i32);
            }
        }
        out.push(v);
        p = m.vecmat(&p);
    }
    Ok(out)
}

/// Geometric envelope fitted to the second half of a non-negative sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub constant: f64,
    /// Bound on `Σ_{t≥N} a_t` implied by the envelope.
    pub tail: f64,
}

/// Entries at or below this multiple of the peak are rounding residue.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Fits `a_t ≤ C ρᵗ` on `t ∈ [N/2, N)` using the running suffix maximum.
///
/// Entries below `ROUNDOFF_FLOOR · max a` count as zero. If the last
/// `zero_window` entries are all zero the tail is zero: a sequence obeying a
/// linear recurrence of that order stays at zero afterwards. Returns `None`
/// when the envelope does not decay (`ρ ≥ 1 − 1e-6`).
pub fn certify_decay(a: &[f64], zero_window: usize) -> Option<DecayFit> {
    let n = a.len();
    let zero = DecayFit { rate: 0.0, constant: 0.0, tail: 0.0 };
    let peak = a.iter().fold(0.0f64, |m, &x| m.max(x));
    if peak == 0.0 {
        return Some(zero);
    }
    if n < 4 {
        return None;
    }
    let floor = ROUNDOFF_FLOOR * peak;
    let a: Vec<f64> = a.iter().map(|&x| if x <= floor { 0.0 } else { x }).collect();
    let last = match a.iter().rposition(|&x| x > 0.0) {
        Some(i) => i,
        None => return Some(zero),
    };
    if n - 1 - last >= zero_window.max(1) {
        return Some(zero);
    }
    let h = n / 2;
    if last <= h {
        return None;
    }
    let mut suffix = a.clone();
    for t in (0..n - 1).rev() {
        suffix[t] = suffix[t].max(suffix[t + 1]);
    }
    let rate = (suffix[last] / suffix[h]).powf(1.0 / (last - h) as f64);
    if !(rate < 1.0 - 1e-6) {
        return None;
    }
    let constant = (h..n).map(|t| suffix[t] / rate.powi(t as i32)).fold(0.0, f64::max);
    let tail = constant * rate.powi(n as i32) / (1.0 - rate);
    Some(DecayFit { rate, constant, tail })
}

/// `max_m |Σ_t x_t e^{−jω_m t}|` over `M` equally spaced `ω_m`.
fn grid_sup(x: &[f64], m_bins: usize) -> f64 {
    let mut best = 0.0f64;
    for m in 0..m_bins {
        let step = C64::cis(-2.0 * std::f64::consts::PI * m as f64 / m_bins as f64);
        let mut w = C64::ONE;
        let mut acc = C64::ZERO;
        for (t, &v) in x.iter().enumerate() {
            if t % 64 == 0 && t > 0 {
                w = C64::cis(-2.0 * std::f64::consts::PI * ((m * t) % m_bins) as f64 / m_bins as f64);
            }
            acc += w.scale(v);
            w = w * step;
        }
        best = best.max(acc.abs());
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerTerm {
    pub power: usize,
    pub coeff_norm: f64,
    /// `max_i max_m |G_i(ω_m)|` of the finite-horizon difference transform.
    pub grid_sup: f64,
    /// `N·Δω·‖δ‖₁`, bounding how far the grid maximum can sit below the
    /// continuous supremum.
    pub grid_slack: f64,
    /// Envelope bound on the omitted tail `Σ_{t≥N} |δ_t|`.
    pub tail: f64,
    /// `√D/(1−γ) · ‖c_k‖ · (grid_sup + grid_slack + tail)`
    pub contribution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
    Inapplicable,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inapplicable => "inapplicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyDomainCheck {
    pub lhs: f64,
    /// Upper estimate of the bound: grid maximum plus grid slack plus tail.
    pub rhs: f64,
    /// Bound evaluated with the bare grid maximum.
    pub rhs_grid: f64,
    pub holds: bool,
    pub decay_certified: bool,
    pub verdict: Verdict,
    pub terms: Vec<PowerTerm>,
}

/// Frequency-domain bound for a polynomial reward, on the DTFT of the
/// difference of moment sequences under the two policies.
pub fn verify_frequency_domain_bound(
    mdp: &TabularMdp,
    policy1: &TabularPolicy,
    policy2: &TabularPolicy,
    reward: &PolynomialReward,
    horizon: usize,
    dft_size: usize,
) -> Result<FrequencyDomainCheck> {
    if horizon < 4 || dft_size < horizon {
        return Err(invalid("need horizon ≥ 4 and dft_size ≥ horizon"));
    }
    let g = mdp.gamma();
    let rvec = reward.reward_vector(mdp)?;
    let lhs = (performance_with_reward(mdp, policy1, &rvec)? - performance_with_reward(mdp, policy2, &rvec)?).abs();
    let d = reward.dim();
    let front = (d as f64).sqrt() / (1.0 - g);
    let dw = 2.0 * std::f64::consts::PI / dft_size as f64;

    let mut terms = Vec::new();
    let mut certified = true;
    for k in 1..=reward.degree() {
        let m1 = moment_sequence(mdp, policy1, k, horizon)?;
        let m2 = moment_sequence(mdp, policy2, k, horizon)?;
        let diff: Vec<Vec<f64>> =
            m1.iter().zip(&m2).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
        let env: Vec<f64> = diff.iter().map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs()))).collect();
        let fit = certify_decay(&env, 2 * mdp.n_states());
        certified &= fit.is_some();
        let tail = fit.map_or(f64::INFINITY, |f| f.tail);
        let mut sup = 0.0f64;
        let mut slack = 0.0f64;
        for i in 0..d {
            let series: Vec<f64> = diff.iter().map(|v| v[i]).collect();
            sup = sup.max(grid_sup(&series, dft_size));
            let l1: f64 = series.iter().map(|x| x.abs()).sum();
            slack = slack.max(horizon as f64 * dw * l1);
        }
        let coeff_norm = reward.coefficients()[k].iter().map(|c| c * c).sum::<f64>().sqrt();
        terms.push(PowerTerm {
            power: k,
            coeff_norm,
            grid_sup: sup,
            grid_slack: slack,
            tail,
            contribution: front * coeff_norm * (sup + slack + tail),
        });
    }
    let rhs_grid: f64 = terms.iter().map(|t| front * t.coeff_norm * t.grid_sup).sum();
    let rhs: f64 = terms.iter().map(|t| t.contribution).sum();
    let holds = certified && lhs <= rhs + 1e-10;
    let verdict = if !certified {
        Verdict::Inapplicable
    } else if holds {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    Ok(FrequencyDomainCheck { lhs, rhs, rhs_grid, holds, decay_certified: certified, verdict, terms })
}

/// Seeded instance families used by the verification suites.
pub mod suite {
    use rand::Rng;

    use super::*;
    use crate::linalg::Mat;
    use crate::mdp::normalize;
    use crate::rng;

    /// Random 2-action MDP with independent random policies.
    pub fn time_domain_instance(
        seed: u64,
        id: u64,
        n_states: usize,
        gamma: f64,
    ) -> Result<(TabularMdp, TabularPolicy, TabularPolicy)> {
        let mut rng = rng::stream(seed, 1_000 + id);
        let mdp = TabularMdp::random(&mut rng, n_states, 2, gamma, 0.2)?;
        let p1 = TabularPolicy::random(&mut rng, n_states, 2);
        let p2 = TabularPolicy::random(&mut rng, n_states, 2);
        Ok((mdp, p1, p2))
    }

    /// Action 0 follows a dense random chain `K`, action 1 stays put. A policy
    /// that stays with probability `α` induces `αI + (1−α)K`, so every such
    /// policy shares `K`'s stationary distribution and differs only in the
    /// transient.
    pub fn lazy_pair_instance(
        seed: u64,
        id: u64,
        n_states: usize,
        dim: usize,
        degree: usize,
        gamma: f64,
    ) -> Result<(TabularMdp, TabularPolicy, TabularPolicy, PolynomialReward)> {
        let mut rng = rng::stream(seed, 2_000 + id);
        let mut transition = vec![0.0; n_states * 2 * n_states];
        for s in 0..n_states {
            let row = &mut transition[(s * 2) * n_states..(s * 2 + 1) * n_states];
            for x in row.iter_mut() {
                *x = rng.gen::<f64>() + 0.05;
            }
            normalize(row);
            transition[(s * 2 + 1) * n_states + s] = 1.0;
        }
        let embedding = Mat::from_vec(n_states, dim, (0..n_states * dim).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let mut mu: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>().powi(3) + 1e-3).collect();
        normalize(&mut mu);
        let coefficients: Vec<Vec<f64>> =
            (0..=degree).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let reward = PolynomialReward::new(coefficients)?;
        let tmp = TabularMdp::new(
            n_states,
            2,
            transition.clone(),
            vec![0.0; n_states],
            mu.clone(),
            gamma,
            None,
            Some(embedding.clone()),
        )?;
        let rvec = reward.reward_vector(&tmp)?;
        let mdp = TabularMdp::new(n_states, 2, transition, rvec, mu, gamma, None, Some(embedding))?;
        let lazy = |alpha: f64| {
            let mut probs = Mat::zeros(n_states, 2);
            for s in 0..n_states {
                probs[(s, 0)] = 1.0 - alpha;
                probs[(s, 1)] = alpha;
            }
            TabularPolicy::new(probs)
        };
        let a1 = rng.gen_range(0.0..0.6);
        let a2 = rng.gen_range(0.0..0.6);
        Ok((mdp, lazy(a1)?, lazy(a2)?, reward))
    }

    /// Deterministic cycle where action 1 reverses direction: both policies
    /// stay periodic forever, so the moment difference never decays.
    pub fn periodic_instance(
        n_states: usize,
        gamma: f64,
    ) -> Result<(TabularMdp, TabularPolicy, TabularPolicy, PolynomialReward)> {
        let next: Vec<Vec<usize>> =
            (0..n_states).map(|s| vec![(s + 1) % n_states, (s + n_states - 1) % n_states]).collect();
        let embedding = Mat::from_vec(n_states, 1, (0..n_states).map(|s| s as f64 / n_states as f64).collect())?;
        let reward = PolynomialReward::new(vec![vec![0.0], vec![1.0]])?;
        let rvec: Vec<f64> = (0..n_states).map(|s| s as f64 / n_states as f64).collect();
        let mdp = TabularMdp::deterministic(&next, rvec, 0, gamma, Some(embedding))?;
        let p1 = TabularPolicy::deterministic(&vec![0; n_states], 2)?;
        let p2 = TabularPolicy::deterministic(&vec![1; n_states], 2)?;
        Ok((mdp, p1, p2, reward))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::rng::stream;

    /// Materializes every path and sums `|P₁ − P₂|`.
    fn brute_force_l1(mdp: &TabularMdp, p1: &TabularPolicy, p2: &TabularPolicy, horizon: usize) -> f64 {
        let m1 = induced_chain(mdp, p1).unwrap();
        let m2 = induced_chain(mdp, p2).unwrap();
        let n = mdp.n_states();
        let total = n.pow(horizon as u32 + 1);
        let mut acc = 0.0;
        for code in 0..total {
            let mut path = Vec::with_capacity(horizon + 1);
            let mut c = code;
            for _ in 0..=horizon {
                path.push(c % n);
                c /= n;
            }
            let mut q1 = mdp.initial_dist()[path[0]];
            let mut q2 = q1;
            for w in path.windows(2) {
                q1 *= m1[(w[0], w[1])];
                q2 *= m2[(w[0], w[1])];
            }
            acc += (q1 - q2).abs();
        }
        acc
    }

    fn diverging_mdp(gamma: f64) -> TabularMdp {
        // 0 →a0→ 1, 0 →a1→ 2; 1 and 2 absorbing
        TabularMdp::deterministic(&[vec![1, 2], vec![1, 1], vec![2, 2]], vec![0.0, 1.0, -1.0], 0, gamma, None).unwrap()
    }

    #[test]
    fn l1_examples() {
        let mut rng = stream(1, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.0).unwrap();
        let p = TabularPolicy::random(&mut rng, 3, 2);
        assert_eq!(truncated_seqdist_l1(&mdp, &p, &p, 4).unwrap(), 0.0);

        let d = diverging_mdp(0.9);
        let a = TabularPolicy::deterministic(&[0, 0, 0], 2).unwrap();
        let b = TabularPolicy::deterministic(&[1, 0, 0], 2).unwrap();
        assert_eq!(truncated_seqdist_l1(&d, &a, &b, 3).unwrap(), 2.0);
    }

    #[test]
    fn l1_matches_enumeration() {
        let mut rng = stream(2, 0);
        for _ in 0..10 {
            let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.3).unwrap();
            let p1 = TabularPolicy::random(&mut rng, 3, 2);
            let p2 = TabularPolicy::random(&mut rng, 3, 2);
            let fast = truncated_seqdist_l1(&mdp, &p1, &p2, 4).unwrap();
            let slow = brute_force_l1(&mdp, &p1, &p2, 4);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn l1_budget_is_enforced() {
        let mut rng = stream(3, 0);
        let mdp = TabularMdp::random(&mut rng, 10, 2, 0.9, 0.0).unwrap();
        let p = TabularPolicy::uniform(10, 2);
        assert!(matches!(truncated_seqdist_l1(&mdp, &p, &p, 7), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn time_bound_identical_policies_leave_only_the_tail() {
        let mut rng = stream(4, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.0).unwrap();
        let p = TabularPolicy::random(&mut rng, 3, 2);
        let c = verify_time_domain_bound(&mdp, &p, &p, 8).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert!((c.rhs - c.tail).abs() < 1e-15 && c.holds);
    }

    #[test]
    fn time_bound_holds_on_random_instances() {
        for id in 0..100 {
            let (mdp, p1, p2) = suite::time_domain_instance(9, id, 3, 0.9).unwrap();
            let c = verify_time_domain_bound(&mdp, &p1, &p2, 8).unwrap();
            assert!(c.holds && c.slack() >= 0.0, "instance {id}: {c:?}");
        }
    }

    #[test]
    fn time_bound_is_loose_when_policies_differ_on_zero_reward_region() {
        // state 0 (reward 1) always moves to 1; in {1, 2} (reward 0) action 0
        // stays and action 1 swaps
        let mdp = TabularMdp::deterministic(&[vec![1, 1], vec![1, 2], vec![2, 1]], vec![1.0, 0.0, 0.0], 0, 0.9, None)
            .unwrap();
        let stay = TabularPolicy::deterministic(&[0, 0, 0], 2).unwrap();
        let swap = TabularPolicy::deterministic(&[0, 1, 1], 2).unwrap();
        let c = verify_time_domain_bound(&mdp, &stay, &swap, 8).unwrap();
        assert!(c.lhs.abs() < 1e-15);
        assert!(c.rhs > 1.0 && c.holds);
    }

    #[test]
    fn time_bound_rhs_decreases_with_horizon_when_l1_is_fixed() {
        let d = diverging_mdp(0.8);
        let a = TabularPolicy::deterministic(&[0, 0, 0], 2).unwrap();
        let b = TabularPolicy::deterministic(&[1, 0, 0], 2).unwrap();
        let mut prev = verify_time_domain_bound(&d, &a, &b, 1).unwrap();
        for t in 2..10 {
            let cur = verify_time_domain_bound(&d, &a, &b, t).unwrap();
            assert_eq!(cur.l1, prev.l1);
            assert!(cur.rhs <= prev.rhs + 1e-12);
            prev = cur;
        }
    }

    #[test]
    fn moment_sequence_examples() {
        let emb = Mat::from_rows(&[vec![0.5], vec![-1.0], vec![2.0]]).unwrap();
        let mdp = TabularMdp::deterministic(&[vec![1], vec![2], vec![0]], vec![0.0; 3], 0, 0.9, Some(emb)).unwrap();
        let p = TabularPolicy::uniform(3, 1);
        let m = moment_sequence(&mdp, &p, 1, 6).unwrap();
        assert_eq!(m, vec![vec![0.5], vec![-1.0], vec![2.0], vec![0.5], vec![-1.0], vec![2.0]]);
        let m2 = moment_sequence(&mdp, &p, 2, 3).unwrap();
        assert_eq!(m2, vec![vec![0.25], vec![1.0], vec![4.0]]);

        // stationary start gives a constant sequence
        let (mdp, p1, _, _) = suite::lazy_pair_instance(3, 0, 4, 2, 1, 0.9).unwrap();
        let k = induced_chain(&mdp, &p1).unwrap();
        let mut a = k.transpose();
        for i in 0..4 {
            a[(i, i)] -= 1.0;
        }
        for j in 0..4 {
            a[(3, j)] = 1.0;
        }
        let stat = crate::linalg::solve(&a, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        let mdp = mdp.with_initial_dist(stat).unwrap();
        let m = moment_sequence(&mdp, &p1, 1, 20).unwrap();
        for v in &m {
            for (x, y) in v.iter().zip(&m[0]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_sequence_matches_monte_carlo() {
        let mut rng = stream(5, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.0).unwrap();
        let mdp =
            mdp.with_embedding(Mat::from_rows(&[vec![0.3, -1.0], vec![1.2, 0.5], vec![-0.7, 2.0]]).unwrap()).unwrap();
        let p = TabularPolicy::random(&mut rng, 3, 2);
        let exact = moment_sequence(&mdp, &p, 2, 6).unwrap();
        let n = 50_000;
        let mut sum = [[0.0f64; 2]; 6];
        let mut sq = [[0.0f64; 2]; 6];
        for ep in 0..n {
            let t = crate::mdp::sample_trajectory(&mdp, &p, 5, 10_000 + ep).unwrap();
            for (step, &s) in t.states.iter().enumerate() {
                for i in 0..2 {
                    let v = mdp.embed(s)[i].powi(2);
                    sum[step][i] += v;
                    sq[step][i] += v * v;
                }
            }
        }
        for step in 0..6 {
            for i in 0..2 {
                let mean = sum[step][i] / n as f64;
                let se = ((sq[step][i] / n as f64 - mean * mean) / n as f64).sqrt();
                assert!((mean - exact[step][i]).abs() <= 3.0 * se + 1e-12, "t={step} i={i}");
            }
        }
    }

    #[test]
    fn decay_certification() {
        let geo: Vec<f64> = (0..100).map(|t| 0.8f64.powi(t)).collect();
        let fit = certify_decay(&geo, 6).unwrap();
        assert!((fit.rate - 0.8).abs() < 1e-9);
        let exact_tail = 0.8f64.powi(100) / 0.2;
        assert!(fit.tail >= exact_tail * (1.0 - 1e-9));
        let periodic: Vec<f64> = (0..100).map(|t| (t % 3) as f64).collect();
        assert!(certify_decay(&periodic, 6).is_none());
        assert_eq!(certify_decay(&[0.0; 10], 6).unwrap().tail, 0.0);
        let mut finite = vec![1.0, 0.5, 0.25];
        finite.extend([0.0; 20]);
        assert_eq!(certify_decay(&finite, 6).unwrap().tail, 0.0);
    }

    #[test]
    fn frequency_bound_identical_policies() {
        let (mdp, p1, _, reward) = suite::lazy_pair_instance(1, 0, 4, 2, 2, 0.9).unwrap();
        let c = verify_frequency_domain_bound(&mdp, &p1, &p1, &reward, 200, 1024).unwrap();
        assert_eq!(c.lhs, 0.0);
        assert_eq!(c.rhs, 0.0);
        assert_eq!(c.verdict, Verdict::Holds);
    }

    #[test]
    fn frequency_bound_holds_on_lazy_pairs() {
        for id in 0..10 {
            let degree = 1 + (id as usize % 2);
            let (mdp, p1, p2, reward) = suite::lazy_pair_instance(2, id, 4, 2, degree, 0.9).unwrap();
            let c = verify_frequency_domain_bound(&mdp, &p1, &p2, &reward, 300, 4096).unwrap();
            assert!(c.decay_certified, "instance {id}: {c:?}");
            assert_eq!(c.verdict, Verdict::Holds, "instance {id}: {c:?}");
            // also holds with the bare grid maximum
            assert!(c.lhs <= c.rhs_grid);
            if degree == 2 {
                assert!(c.terms.iter().all(|t| t.contribution > 0.0));
            }
        }
    }

    #[test]
    fn frequency_bound_periodic_instance_is_inapplicable() {
        let (mdp, p1, p2, reward) = suite::periodic_instance(4, 0.9).unwrap();
        let c = verify_frequency_domain_bound(&mdp, &p1, &p2, &reward, 200, 1024).unwrap();
        assert!(!c.decay_certified);
        assert_eq!(c.verdict, Verdict::Inapplicable);
        assert!(!c.holds);
    }

    #[test]
    fn polynomial_reward_validation() {
        assert!(PolynomialReward::new(vec![vec![1.0]]).is_err());
        assert!(PolynomialReward::new(vec![vec![1.0]; 6]).is_err());
        assert!(PolynomialReward::new(vec![vec![1.0; 5]; 2]).is_err());
        let r = PolynomialReward::new(vec![vec![1.0, 0.0], vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(r.eval(&[2.0, 3.0]), 1.0 + (4.0 - 3.0) + (2.0 + 4.5));
    }
}
