//! Minimal reference agents. None of them touches encoder parameters: the
//! Gaussian actor-critic consumes representation values computed elsewhere,
//! so its tapes only ever hold its own parameters.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use spf_nn::layers::{forward, init_params, mlp};
use spf_nn::optim::{ema_update, Adam};
use spf_nn::{Activation, LayerSpec, ParamTree, Tape, Tensor};

use crate::env::{Action, ActionSpace};
use crate::error::{config, invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    TabularQ,
    /// Uniform behaviour, a fixed action table on the bootstrap side, no
    /// learning. Drives the tabular harness.
    Fixed,
    GaussianActorCritic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub q_lr: f64,
    pub epsilon: f64,
    /// Target action per state for `fixed`.
    pub table: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Actions drawn per state for the advantage estimate.
    pub action_samples: usize,
    /// EMA rate of the critic target, applied every update.
    pub critic_tau: f64,
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            kind: AgentKind::GaussianActorCritic,
            q_lr: 0.5,
            epsilon: 0.2,
            table: vec![],
            actor_lr: 3e-4,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            log_std_init: 0.0,
            log_std_min: -5.0,
            log_std_max: 1.0,
            action_samples: 8,
            critic_tau: 0.005,
            reward_scale: 0.1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self, space: &ActionSpace, n_states: Option<usize>) -> Result<()> {
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        match self.kind {
            AgentKind::TabularQ | AgentKind::Fixed => {
                if !matches!(space, ActionSpace::Discrete { .. }) || n_states.is_none() {
                    return Err(config("agent.kind needs a tabular environment with discrete actions"));
                }
            }
            AgentKind::GaussianActorCritic => {
                if !matches!(space, ActionSpace::Continuous { .. }) {
                    return Err(config("gaussian_actor_critic needs a continuous action space"));
                }
            }
        }
        if self.kind == AgentKind::Fixed {
            let (n, na) = (n_states.unwrap_or(0), space.encoded_dim());
            if self.table.len() != n || self.table.iter().any(|&a| a >= na) {
                return Err(config(format!("agent.table needs {n} actions below {na}")));
            }
        }
        if !(nonneg(self.q_lr) && nonneg(self.actor_lr) && nonneg(self.critic_lr)) {
            return Err(config("agent learning rates must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) || !(0.0..=1.0).contains(&self.critic_tau) {
            return Err(config("agent.epsilon and agent.critic_tau must lie in [0, 1]"));
        }
        if self.log_std_min > self.log_std_max || !(self.log_std_min..=self.log_std_max).contains(&self.log_std_init) {
            return Err(config("agent.log_std_init must lie in [log_std_min, log_std_max]"));
        }
        if self.action_samples < 2 {
            return Err(config("agent.action_samples must be at least 2"));
        }
        if self.hidden.contains(&0) {
            return Err(config("agent.hidden widths must be positive"));
        }
        Ok(())
    }
}

/// What an agent sees of one state when acting.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub state: Option<usize>,
    pub rep_s: &'a [f64],
}

/// One replay batch as seen by an agent: indices for tabular agents,
/// detached representation values for the actor-critic.
#[derive(Debug, Clone)]
pub struct AgentBatch<'a> {
    pub size: usize,
    pub states: &'a [Option<usize>],
    pub next_states: &'a [Option<usize>],
    pub action: &'a [f64],
    pub reward: &'a [f64],
    pub rep_s: &'a [f64],
    pub rep_next: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct AgentStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub entropy: f64,
}

/// ε-greedy Q-learning on state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    pub q: Vec<f64>,
    pub n_actions: usize,
    pub lr: f64,
    pub epsilon: f64,
    pub gamma: f64,
}

impl TabularQ {
    pub fn new(n_states: usize, n_actions: usize, lr: f64, epsilon: f64, gamma: f64) -> Self {
        TabularQ { q: vec![0.0; n_states * n_actions], n_actions, lr, epsilon, gamma }
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Lowest index among the maximizers.
    pub fn greedy(&self, s: usize) -> usize {
        let row = self.row(s);
        (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
    }

    pub fn act<R: Rng + ?Sized>(&self, s: usize, rng: &mut R, explore: bool) -> usize {
        if explore && rng.gen::<f64>() < self.epsilon {
            rng.gen_range(0..self.n_actions)
        } else {
            self.greedy(s)
        }
    }

    /// `Q(s,a) ← Q(s,a) + α (r + γ maxₐ' Q(s',a') − Q(s,a))`
    pub fn learn(&mut self, s: usize, a: usize, r: f64, next: usize) {
        let best = self.row(next).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let i = s * self.n_actions + a;
        self.q[i] += self.lr * (r + self.gamma * best - self.q[i]);
    }
}

/// Tanh-bounded Gaussian policy on `s̄` and a Q critic on `z_{s,a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActorCritic {
    pub config: AgentConfig,
    pub action_dim: usize,
    pub bound: f64,
    pub gamma: f64,
    pub actor: ParamTree,
    pub critic: ParamTree,
    pub critic_target: ParamTree,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    rep_s_width: usize,
    rep_sa_width: usize,
}

const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

impl GaussianActorCritic {
    pub fn new<R: Rng + ?Sized>(
        config: AgentConfig,
        rep_s_width: usize,
        rep_sa_width: usize,
        action_dim: usize,
        bound: f64,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut actor = ParamTree::new();
        init_params(&actor_specs(&config, rep_s_width, action_dim), "actor", rng, true, &mut actor)?;
        actor.insert("actor/log_std", Tensor::new(vec![1, action_dim], vec![config.log_std_init; action_dim])?)?;
        let mut critic = ParamTree::new();
        init_params(&critic_specs(&config, rep_sa_width), "critic", rng, false, &mut critic)?;
        Ok(GaussianActorCritic {
            actor_opt: Adam::new(config.actor_lr),
            critic_opt: Adam::new(config.critic_lr),
            critic_target: critic.clone(),
            config,
            action_dim,
            bound,
            gamma,
            actor,
            critic,
            rep_s_width,
            rep_sa_width,
        })
    }

    fn log_std(&self) -> Vec<f64> {
        let c = &self.config;
        self.actor
            .get("actor/log_std")
            .expect("log_std exists")
            .data()
            .iter()
            .map(|v| v.clamp(c.log_std_min, c.log_std_max))
            .collect()
    }

    /// Differential entropy of the unclipped Gaussian.
    pub fn entropy(&self) -> f64 {
        self.log_std().iter().map(|l| l + 0.5 * LN_2PI_E).sum()
    }

    /// `bound·tanh(MLP(s̄))` for a batch.
    pub fn mean(&self, rep_s: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch, self.rep_s_width, rep_s.to_vec())?;
        let specs = actor_specs(&self.config, self.rep_s_width, self.action_dim);
        let m = forward(&specs, "actor", &self.actor, "actor", x, &mut tape)?;
        Ok(tape.value(m).iter().map(|v| v * self.bound).collect())
    }

    /// Unclipped draw `μ + σξ`.
    pub fn sample_raw<R: Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        let ls = self.log_std();
        mean.iter()
            .enumerate()
            .map(|(i, m)| m + ls[i % self.action_dim].exp() * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    pub fn clip(&self, a: &[f64]) -> Vec<f64> {
        a.iter().map(|v| v.clamp(-self.bound, self.bound)).collect()
    }

    pub fn q_values(&self, tree: &ParamTree, z: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(batch, self.rep_sa_width, z.to_vec())?;
        let q = forward(&critic_specs(&self.config, self.rep_sa_width), "critic", tree, "critic", x, &mut tape)?;
        Ok(tape.value(q).to_vec())
    }

    /// One critic TD step on `z_{s,a}` and one advantage-weighted policy
    /// gradient step on `s̄`. `encode(rep_s, actions, n)` returns joint
    /// representation values for `n` rows.
    pub fn update<R, F>(&mut self, batch: &AgentBatch<'_>, encode: F, rng: &mut R) -> Result<AgentStats>
    where
        R: Rng + ?Sized,
        F: Fn(&[f64], &[f64], usize) -> Result<Vec<f64>>,
    {
        let (n, ad, ws) = (batch.size, self.action_dim, self.rep_s_width);
        let specs = critic_specs(&self.config, self.rep_sa_width);

        // critic: y = c·r + γ Q̂(z_{s', a'}) with a' the clipped policy draw
        let next_mean = self.mean(batch.rep_next, n)?;
        let next_action = self.clip(&self.sample_raw(&next_mean, rng));
        let z_next = encode(batch.rep_next, &next_action, n)?;
        let q_next = self.q_values(&self.critic_target, &z_next, n)?;
        let y: Vec<f64> = (0..n).map(|i| self.config.reward_scale * batch.reward[i] + self.gamma * q_next[i]).collect();
        let z = encode(batch.rep_s, batch.action, n)?;
        let mut tape = Tape::new();
        let x = tape.constant(n, self.rep_sa_width, z)?;
        let q = forward(&specs, "critic", &self.critic, "critic", x, &mut tape)?;
        let yv = tape.constant(n, 1, y)?;
        let d = tape.sub(q, yv)?;
        let d = tape.square(d);
        let critic_loss = tape.mean(d);
        let grads = tape.backward(critic_loss)?;
        grads.apply_to("critic", &mut self.critic)?;
        self.critic_opt.step(&mut self.critic)?;
        ema_update(&self.critic, &mut self.critic_target, self.config.critic_tau)?;
        let critic_value = tape.scalar(critic_loss);

        // actor: M draws per state scored by the critic, centred per state
        let m = self.config.action_samples;
        let mean = self.mean(batch.rep_s, n)?;
        let mut rep_rep = Vec::with_capacity(n * m * ws);
        let mut mean_rep = Vec::with_capacity(n * m * ad);
        for i in 0..n {
            for _ in 0..m {
                rep_rep.extend_from_slice(&batch.rep_s[i * ws..(i + 1) * ws]);
                mean_rep.extend_from_slice(&mean[i * ad..(i + 1) * ad]);
            }
        }
        let raw = self.sample_raw(&mean_rep, rng);
        let zs = encode(&rep_rep, &self.clip(&raw), n * m)?;
        let qs = self.q_values(&self.critic, &zs, n * m)?;
        let mut adv = vec![0.0; n * m];
        for i in 0..n {
            let row = &qs[i * m..(i + 1) * m];
            let mu = row.iter().sum::<f64>() / m as f64;
            for j in 0..m {
                adv[i * m + j] = row[j] - mu;
            }
        }
        let sd = (adv.iter().map(|a| a * a).sum::<f64>() / adv.len() as f64).sqrt();
        if sd > 1e-12 {
            adv.iter_mut().for_each(|a| *a /= sd);
        }

        let mut tape = Tape::new();
        let x = tape.constant(n * m, ws, rep_rep)?;
        let aspecs = actor_specs(&self.config, ws, ad);
        let mu = forward(&aspecs, "actor", &self.actor, "actor", x, &mut tape)?;
        let mu = tape.scale(mu, self.bound);
        let log_std = tape.param("actor", &self.actor, "actor/log_std")?;
        let log_std = tape.clamp(log_std, self.config.log_std_min, self.config.log_std_max);
        let neg = tape.scale(log_std, -1.0);
        let inv_std = tape.exp(neg);
        let a = tape.constant(n * m, ad, raw)?;
        let diff = tape.sub(a, mu)?;
        let zscore = tape.mul_row(diff, inv_std)?;
        let sq = tape.square(zscore);
        let quad = tape.sum_cols(sq);
        // −mean(A·log π) up to the constant, with log π = −½Σz² − Σ log σ
        let adv_col = tape.constant(n * m, 1, adv.clone())?;
        let weighted = tape.mul_col(quad, adv_col)?;
        let t1 = tape.mean(weighted);
        let t1 = tape.scale(t1, 0.5);
        let adv_mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let ls_sum = tape.sum(log_std);
        let t2 = tape.scale(ls_sum, adv_mean);
        let actor_loss = tape.add(t1, t2)?;
        let grads = tape.backward(actor_loss)?;
        grads.apply_to("actor", &mut self.actor)?;
        self.actor_opt.step(&mut self.actor)?;

        Ok(AgentStats { critic_loss: critic_value, actor_loss: tape.scalar(actor_loss), entropy: self.entropy() })
    }

    pub fn export(&self, t: &mut ParamTree) -> Result<()> {
        for (prefix, tree) in [("actor", &self.actor), ("critic", &self.critic), ("critic_target", &self.critic_target)]
        {
            for (name, v) in tree.iter() {
                t.insert(format!("agent/{prefix}/{name}"), v.clone())?;
            }
        }
        for (prefix, opt) in [("actor_opt", &self.actor_opt), ("critic_opt", &self.critic_opt)] {
            for (name, v) in opt.export_moments()?.iter() {
                t.insert(format!("agent/{prefix}/{name}"), v.clone())?;
            }
            t.insert(format!("agent/{prefix}_step"), Tensor::new(vec![1], vec![opt.step as f64])?)?;
        }
        Ok(())
    }

    pub fn import(&mut self, t: &ParamTree) -> Result<()> {
        let strip = |prefix: &str| t.strip_prefix(&format!("agent/{prefix}/"));
        let actor = strip("actor");
        let critic = strip("critic");
        let critic_target = strip("critic_target");
        actor.check_structure(&self.actor)?;
        critic.check_structure(&self.critic)?;
        critic_target.check_structure(&self.critic)?;
        let step = |name: &str| -> Result<u64> {
            let v = t.get(&format!("agent/{name}_step")).ok_or_else(|| invalid(format!("missing {name} step")))?;
            Ok(v.data()[0] as u64)
        };
        self.actor_opt.import_moments(step("actor_opt")?, &strip("actor_opt"))?;
        self.critic_opt.import_moments(step("critic_opt")?, &strip("critic_opt"))?;
        self.actor = actor;
        self.critic = critic;
        self.critic_target = critic_target;
        Ok(())
    }
}

fn actor_specs(c: &AgentConfig, input: usize, action_dim: usize) -> Vec<LayerSpec> {
    let mut w = vec![input];
    w.extend(&c.hidden);
    w.push(action_dim);
    mlp(&w, Activation::Relu, Activation::Tanh)
}

fn critic_specs(c: &AgentConfig, input: usize) -> Vec<LayerSpec> {
    let mut w = vec![input];
    w.extend(&c.hidden);
    w.push(1);
    mlp(&w, Activation::Relu, Activation::Identity)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Agent {
    TabularQ(TabularQ),
    Fixed { table: Vec<usize>, n_actions: usize },
    Gaussian(Box<GaussianActorCritic>),
}

impl Agent {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::TabularQ(_) => AgentKind::TabularQ,
            Agent::Fixed { .. } => AgentKind::Fixed,
            Agent::Gaussian(_) => AgentKind::GaussianActorCritic,
        }
    }

    /// Behaviour action; `explore = false` gives the evaluation action.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: Observation<'_>,
        space: &ActionSpace,
        rng: &mut R,
        explore: bool,
    ) -> Result<Action> {
        match self {
            Agent::TabularQ(q) => Ok(Action::Discrete(q.act(tabular_state(obs.state)?, rng, explore))),
            Agent::Fixed { table, n_actions } => {
                if explore {
                    Ok(Action::Discrete(rng.gen_range(0..*n_actions)))
                } else {
                    Ok(Action::Discrete(table[tabular_state(obs.state)?]))
                }
            }
            Agent::Gaussian(g) => {
                let mean = g.mean(obs.rep_s, 1)?;
                let a = if explore { g.clip(&g.sample_raw(&mean, rng)) } else { mean };
                debug_assert_eq!(space.encoded_dim(), a.len());
                Ok(Action::Continuous(a))
            }
        }
    }

    /// Action fed to the bootstrap side of the prediction target: greedy for
    /// tabular agents, the policy mean for the actor-critic.
    pub fn target_actions(&self, states: &[Option<usize>], rep_s: &[f64], space: &ActionSpace) -> Result<Vec<f64>> {
        let n = states.len();
        match self {
            Agent::TabularQ(q) => {
                let mut out = Vec::with_capacity(n * q.n_actions);
                for s in states {
                    out.extend(Action::Discrete(q.greedy(tabular_state(*s)?)).encode(space));
                }
                Ok(out)
            }
            Agent::Fixed { table, .. } => {
                let mut out = Vec::new();
                for s in states {
                    out.extend(Action::Discrete(table[tabular_state(*s)?]).encode(space));
                }
                Ok(out)
            }
            Agent::Gaussian(g) => g.mean(rep_s, n),
        }
    }

    pub fn update<R, F>(&mut self, batch: &AgentBatch<'_>, encode: F, rng: &mut R) -> Result<AgentStats>
    where
        R: Rng + ?Sized,
        F: Fn(&[f64], &[f64], usize) -> Result<Vec<f64>>,
    {
        match self {
            Agent::TabularQ(q) => {
                let na = q.n_actions;
                for i in 0..batch.size {
                    let s = tabular_state(batch.states[i])?;
                    let next = tabular_state(batch.next_states[i])?;
                    let a = Action::decode(&batch.action[i * na..(i + 1) * na], &ActionSpace::Discrete { n: na });
                    let Action::Discrete(a) = a else { unreachable!() };
                    q.learn(s, a, batch.reward[i], next);
                }
                Ok(AgentStats::default())
            }
            Agent::Fixed { .. } => Ok(AgentStats::default()),
            Agent::Gaussian(g) => g.update(batch, encode, rng),
        }
    }

    pub fn entropy(&self) -> Option<f64> {
        match self {
            Agent::Gaussian(g) => Some(g.entropy()),
            _ => None,
        }
    }

    pub fn export(&self, t: &mut ParamTree) -> Result<()> {
        match self {
            Agent::TabularQ(q) => {
                t.insert("agent/q", Tensor::new(vec![q.q.len() / q.n_actions, q.n_actions], q.q.clone())?)?
            }
            Agent::Fixed { .. } => {}
            Agent::Gaussian(g) => g.export(t)?,
        }
        Ok(())
    }

    pub fn import(&mut self, t: &ParamTree) -> Result<()> {
        match self {
            Agent::TabularQ(q) => {
                let v = t.get("agent/q").ok_or_else(|| invalid("missing agent/q"))?;
                if v.len() != q.q.len() {
                    return Err(invalid("agent/q has the wrong size"));
                }
                q.q = v.data().to_vec();
            }
            Agent::Fixed { .. } => {}
            Agent::Gaussian(g) => g.import(t)?,
        }
        Ok(())
    }
}

fn tabular_state(s: Option<usize>) -> Result<usize> {
    s.ok_or_else(|| invalid("tabular agent needs state indices"))
}
