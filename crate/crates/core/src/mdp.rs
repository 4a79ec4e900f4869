//! Finite MDPs with state-only rewards, stochastic policies and the exact
//! quantities derived from them.
//!
//! Matrix convention used everywhere in this workspace: a state-transition
//! matrix `M` is row-stochastic, `M[(s, s')] = P(s' | s)`. Distributions are
//! row vectors and evolve as `μ_{t+1} = μ_tᵀ M`.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Mat};
use crate::rng::{self, sample_index};

const PROB_TOL: f64 = 1e-12;

/// Finite MDP `⟨S, A, R, P, μ, γ⟩` with state-only reward `R(s)` and an
/// embedding of every state into `ℝ^D`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Flattened `(s, a, s')`.
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
    gamma: f64,
    r_max: f64,
    embedding: Mat,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(invalid(format!("{what}: negative or non-finite probability")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(invalid(format!("{what}: sums to {total}, expected 1")));
    }
    Ok(())
}

impl TabularMdp {
    /// Builds and validates an MDP. `r_max` defaults to `max |R(s)|`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_dist: Vec<f64>,
        gamma: f64,
        r_max: Option<f64>,
        embedding: Option<Mat>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("n_states and n_actions must be positive"));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(invalid(format!(
                "transition has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let off = (s * n_actions + a) * n_states;
                check_distribution(&transition[off..off + n_states], &format!("transition row (s={s}, a={a})"))?;
            }
        }
        if reward.len() != n_states {
            return Err(invalid(format!("reward has {} entries, expected {n_states}", reward.len())));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(invalid("reward must be finite"));
        }
        if initial_dist.len() != n_states {
            return Err(invalid("initial_dist length does not match n_states"));
        }
        check_distribution(&initial_dist, "initial_dist")?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        let observed_max = reward.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let r_max = r_max.unwrap_or(observed_max);
        if observed_max > r_max {
            return Err(invalid(format!("|reward| reaches {observed_max}, above r_max = {r_max}")));
        }
        let embedding = embedding.unwrap_or_else(|| Mat::identity(n_states));
        if embedding.rows() != n_states || embedding.cols() == 0 {
            return Err(invalid("embedding must have one non-empty row per state"));
        }
        if embedding.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(invalid("embedding must be finite"));
        }
        Ok(TabularMdp { n_states, n_actions, transition, reward, initial_dist, gamma, r_max, embedding })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn embedding(&self) -> &Mat {
        &self.embedding
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn embed(&self, s: usize) -> &[f64] {
        self.embedding.row(s)
    }

    /// `P(· | s, a)`
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transition[off..off + self.n_states]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut m = self.clone();
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        m.gamma = gamma;
        Ok(m)
    }

    pub fn with_embedding(&self, embedding: Mat) -> Result<Self> {
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.initial_dist.clone(),
            self.gamma,
            Some(self.r_max),
            Some(embedding),
        )
    }

    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            reward,
            self.initial_dist.clone(),
            self.gamma,
            None,
            Some(self.embedding.clone()),
        )
    }

    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Result<Self> {
        TabularMdp::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            initial_dist,
            self.gamma,
            Some(self.r_max),
            Some(self.embedding.clone()),
        )
    }

    /// `E[embedding(s') | s, a]`
    pub fn expected_next_embedding(&self, s: usize, a: usize) -> Vec<f64> {
        let d = self.embedding_dim();
        let mut out = vec![0.0; d];
        for (sp, &p) in self.next_dist(s, a).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, e) in out.iter_mut().zip(self.embed(sp)) {
                *o += p * e;
            }
        }
        out
    }

    /// Deterministic MDP from a successor table `next[s][a]`.
    pub fn deterministic(
        next: &[Vec<usize>],
        reward: Vec<f64>,
        initial_state: usize,
        gamma: f64,
        embedding: Option<Mat>,
    ) -> Result<Self> {
        let n = next.len();
        let na = next.first().map_or(0, Vec::len);
        let mut transition = vec![0.0; n * na * n];
        for (s, row) in next.iter().enumerate() {
            if row.len() != na {
                return Err(invalid("ragged successor table"));
            }
            for (a, &sp) in row.iter().enumerate() {
                if sp >= n {
                    return Err(invalid(format!("successor {sp} out of range")));
                }
                transition[(s * na + a) * n + sp] = 1.0;
            }
        }
        let mut mu = vec![0.0; n];
        *mu.get_mut(initial_state).ok_or_else(|| invalid("initial state out of range"))? = 1.0;
        TabularMdp::new(n, na, transition, reward, mu, gamma, None, embedding)
    }

    /// Random MDP with dense transition rows; `sparsity` is the probability
    /// that an individual `(s, a, s')` entry is forced to zero (each row keeps
    /// at least one successor).
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        sparsity: f64,
    ) -> Result<Self> {
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let mut row: Vec<f64> = (0..n_states)
                .map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() + 1e-3 })
                .collect();
            if row.iter().all(|&x| x == 0.0) {
                row[rng.gen_range(0..n_states)] = 1.0;
            }
            normalize(&mut row);
            transition.extend(row);
        }
        let reward: Vec<f64> = (0..n_states).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut mu: Vec<f64> = (0..n_states).map(|_| rng.gen::<f64>() + 1e-3).collect();
        normalize(&mut mu);
        TabularMdp::new(n_states, n_actions, transition, reward, mu, gamma, Some(1.0), None)
    }
}

/// Rescales a non-negative vector to sum to one, absorbing the rounding
/// residue into the largest entry so the sum is exact to the last ulp.
pub fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= total;
    }
    let resid = 1.0 - v.iter().sum::<f64>();
    if let Some(i) = (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])) {
        v[i] += resid;
    }
}

/// Stochastic policy `π(a | s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: Mat,
}

impl TabularPolicy {
    pub fn new(probs: Mat) -> Result<Self> {
        if probs.rows() == 0 || probs.cols() == 0 {
            return Err(invalid("policy table must be non-empty"));
        }
        for s in 0..probs.rows() {
            check_distribution(probs.row(s), &format!("policy row s={s}"))?;
        }
        Ok(TabularPolicy { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        let mut probs = Mat::zeros(n_states, n_actions);
        for s in 0..n_states {
            probs.row_mut(s).fill(p);
        }
        TabularPolicy { probs }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = Mat::zeros(actions.len(), n_actions);
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(invalid(format!("action {a} out of range for state {s}")));
            }
            probs[(s, a)] = 1.0;
        }
        TabularPolicy::new(probs)
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> Self {
        let mut probs = Mat::zeros(n_states, n_actions);
        for s in 0..n_states {
            let row = probs.row_mut(s);
            for x in row.iter_mut() {
                *x = rng.gen::<f64>() + 1e-3;
            }
            normalize(row);
        }
        TabularPolicy { probs }
    }

    pub fn n_states(&self) -> usize {
        self.probs.rows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.cols()
    }

    pub fn probs(&self) -> &Mat {
        &self.probs
    }

    pub fn action_dist(&self, s: usize) -> &[f64] {
        self.probs.row(s)
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.probs.row(s);
        (0..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best })
    }

    pub(crate) fn check_against(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states() != mdp.n_states() || self.n_actions() != mdp.n_actions() {
            return Err(invalid(format!(
                "policy is {}x{}, MDP has {} states and {} actions",
                self.n_states(),
                self.n_actions(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Sampled trajectory. `states` holds `horizon + 1` entries; `actions[t]`
/// is taken in `states[t]` and `rewards[t] = R(states[t])`, so
/// `Σ γᵗ rewards[t]` is an unbiased, horizon-truncated sample of `J(π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        self.rewards.iter().rev().fold(0.0, |g, r| r + gamma * g)
    }
}

/// Markov chain induced by running `policy` in `mdp`:
/// `M[(s, s')] = Σ_a π(a|s) P(s'|s,a)`.
pub fn induced_chain(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Mat> {
    policy.check_against(mdp)?;
    let n = mdp.n_states();
    let mut m = Mat::zeros(n, n);
    for s in 0..n {
        for (a, &pa) in policy.action_dist(s).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (sp, &p) in mdp.next_dist(s, a).iter().enumerate() {
                m[(s, sp)] += pa * p;
            }
        }
    }
    Ok(m)
}

/// `d^π = (1−γ) Σ_t γᵗ P(s_t = ·)`, obtained from `(I − γMᵀ) d = μ`.
pub fn discounted_state_distribution(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    let m = induced_chain(mdp, policy)?;
    let n = mdp.n_states();
    let g = mdp.gamma();
    let mut a = Mat::identity(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= g * m[(j, i)];
        }
    }
    let d = linalg::solve(&a, mdp.initial_dist())
        .map_err(|e| Error::Internal(format!("discounted distribution solve: {e}")))?;
    Ok(d.into_iter().map(|x| (1.0 - g) * x).collect())
}

/// `J(π)` for an arbitrary state reward vector: `μᵀ (I − γM)⁻¹ R`.
pub fn performance_with_reward(mdp: &TabularMdp, policy: &TabularPolicy, reward: &[f64]) -> Result<f64> {
    let m = induced_chain(mdp, policy)?;
    let n = mdp.n_states();
    if reward.len() != n {
        return Err(invalid("reward length does not match n_states"));
    }
    let mut a = Mat::identity(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] -= mdp.gamma() * m[(i, j)];
        }
    }
    let v = linalg::solve(&a, reward).map_err(|e| Error::Internal(format!("value solve: {e}")))?;
    Ok(mdp.initial_dist().iter().zip(&v).map(|(p, v)| p * v).sum())
}

/// Expected discounted return `J(π)`. Cross-checked against
/// `J = ⟨d^π, R⟩ / (1−γ)`; a disagreement above `1e-9` is an internal error.
pub fn policy_performance(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<f64> {
    let j = performance_with_reward(mdp, policy, mdp.reward())?;
    let d = discounted_state_distribution(mdp, policy)?;
    let via_d: f64 = d.iter().zip(mdp.reward()).map(|(p, r)| p * r).sum::<f64>() / (1.0 - mdp.gamma());
    let scale = 1.0f64.max(j.abs());
    if (j - via_d).abs() > 1e-9 * scale {
        return Err(Error::Internal(format!("performance identity violated: value solve {j}, occupancy form {via_d}")));
    }
    Ok(j)
}

pub fn sample_trajectory(mdp: &TabularMdp, policy: &TabularPolicy, horizon: usize, seed: u64) -> Result<Trajectory> {
    policy.check_against(mdp)?;
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let mut rng = rng::stream(seed, 0);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    let mut s = sample_index(&mut rng, mdp.initial_dist());
    states.push(s);
    for _ in 0..horizon {
        let a = sample_index(&mut rng, policy.action_dist(s));
        rewards.push(mdp.reward()[s]);
        s = sample_index(&mut rng, mdp.next_dist(s, a));
        actions.push(a);
        states.push(s);
    }
    Ok(Trajectory { states, actions, rewards })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn swap_chain(gamma: f64) -> TabularMdp {
        TabularMdp::deterministic(&[vec![1], vec![0]], vec![1.0, 0.0], 0, gamma, None).unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TabularMdp::new(1, 1, vec![0.5], vec![0.0], vec![1.0], 0.5, None, None).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.0], vec![1.0], 1.0, None, None).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![2.0], vec![1.0], 0.5, Some(1.0), None).is_err());
        assert!(
            TabularMdp::new(2, 1, vec![1.0, 0.0, -0.5, 1.5], vec![0.0; 2], vec![1.0, 0.0], 0.5, None, None).is_err()
        );
        let mdp = swap_chain(0.5);
        assert!(induced_chain(&mdp, &TabularPolicy::uniform(2, 2)).is_err());
    }

    #[test]
    fn identity_and_convex_chains() {
        let mdp = TabularMdp::deterministic(&[vec![0, 1], vec![1, 0]], vec![0.0; 2], 0, 0.9, None).unwrap();
        let pi0 = TabularPolicy::deterministic(&[0, 0], 2).unwrap();
        assert_eq!(induced_chain(&mdp, &pi0).unwrap(), Mat::identity(2));
        let m = induced_chain(&mdp, &TabularPolicy::uniform(2, 2)).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
        assert_eq!(m.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn induced_chain_matches_sampled_frequencies() {
        let mut rng = stream(11, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.0).unwrap();
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let m = induced_chain(&mdp, &pi).unwrap();
        let mut counts = vec![vec![0usize; 3]; 3];
        for s in 0..3 {
            for _ in 0..100_000 {
                let a = sample_index(&mut rng, pi.action_dist(s));
                let sp = sample_index(&mut rng, mdp.next_dist(s, a));
                counts[s][sp] += 1;
            }
        }
        for s in 0..3 {
            for sp in 0..3 {
                let freq = counts[s][sp] as f64 / 100_000.0;
                assert!((freq - m[(s, sp)]).abs() < 0.01, "({s},{sp}): {freq} vs {}", m[(s, sp)]);
            }
        }
    }

    #[test]
    fn discounted_distribution_examples() {
        let single = TabularMdp::deterministic(&[vec![0]], vec![1.0], 0, 0.7, None).unwrap();
        let d = discounted_state_distribution(&single, &TabularPolicy::uniform(1, 1)).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-15);

        let d = discounted_state_distribution(&swap_chain(0.5), &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn discounted_distribution_matches_truncated_power_sum() {
        let mut rng = stream(5, 0);
        let mdp = TabularMdp::random(&mut rng, 4, 3, 0.8, 0.2).unwrap();
        let pi = TabularPolicy::random(&mut rng, 4, 3);
        let m = induced_chain(&mdp, &pi).unwrap();
        let mut p = mdp.initial_dist().to_vec();
        let mut acc = [0.0; 4];
        let mut g = 1.0;
        for _ in 0..=200 {
            for (a, x) in acc.iter_mut().zip(&p) {
                *a += (1.0 - 0.8) * g * x;
            }
            p = m.vecmat(&p);
            g *= 0.8;
        }
        let d = discounted_state_distribution(&mdp, &pi).unwrap();
        for (a, b) in acc.iter().zip(&d) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn performance_examples() {
        let constant = TabularMdp::deterministic(&[vec![1], vec![0]], vec![1.0, 1.0], 0, 0.9, None).unwrap();
        let j = policy_performance(&constant, &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((j - 10.0).abs() < 1e-12);
        let j = policy_performance(&swap_chain(0.5), &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((j - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn performance_matches_monte_carlo() {
        let mut rng = stream(21, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.0).unwrap();
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let j = policy_performance(&mdp, &pi).unwrap();
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for ep in 0..n {
            let g = sample_trajectory(&mdp, &pi, 300, 1_000 + ep).unwrap().discounted_return(0.9);
            sum += g;
            sum_sq += g * g;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - j).abs() < 3.0 * se, "MC {mean} ± {se} vs exact {j}");
    }

    #[test]
    fn trajectories_are_reproducible_and_deterministic_paths_exact() {
        let mdp = swap_chain(0.5);
        let pi = TabularPolicy::uniform(2, 1);
        let t = sample_trajectory(&mdp, &pi, 5, 3).unwrap();
        assert_eq!(t.states, vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(t.actions.len(), 5);
        assert_eq!(t.rewards, vec![1.0, 0.0, 1.0, 0.0, 1.0]);

        let mut rng = stream(2, 0);
        let mdp = TabularMdp::random(&mut rng, 4, 2, 0.9, 0.3).unwrap();
        let pi = TabularPolicy::random(&mut rng, 4, 2);
        assert_eq!(sample_trajectory(&mdp, &pi, 50, 9).unwrap(), sample_trajectory(&mdp, &pi, 50, 9).unwrap());
    }

    #[test]
    fn long_run_frequencies_match_stationary_distribution() {
        let mut rng = stream(8, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.9, 0.0).unwrap();
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let m = induced_chain(&mdp, &pi).unwrap();
        // stationary vector: solve (Mᵀ − I) x = 0 with the normalization row
        let mut a = m.transpose();
        for i in 0..3 {
            a[(i, i)] -= 1.0;
        }
        for j in 0..3 {
            a[(2, j)] = 1.0;
        }
        let stat = linalg::solve(&a, &[0.0, 0.0, 1.0]).unwrap();
        let t = sample_trajectory(&mdp, &pi, 100_000, 4).unwrap();
        let mut freq = [0.0; 3];
        for &s in &t.states {
            freq[s] += 1.0 / t.states.len() as f64;
        }
        for (f, p) in freq.iter().zip(&stat) {
            assert!((f - p).abs() < 0.01, "{f} vs {p}");
        }
    }
}
