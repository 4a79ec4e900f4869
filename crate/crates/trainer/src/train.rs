//! The interleaved update loop: act, store, auxiliary step, resample, agent
//! step, target sync. Single-threaded and deterministic given the seed;
//! evaluation episodes run on parameter snapshots in the rayon pool.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spf_core::rng::{stream, StreamRng};
use spf_nn::checkpoint::Checkpoint;
use spf_nn::optim::{ema_update, Adam};
use spf_nn::{ParamTree, Tape, Tensor};

use crate::agents::{Agent, AgentBatch, AgentKind, AgentStats, GaussianActorCritic, Observation, TabularQ};
use crate::config::{streams, TrainConfig};
use crate::env::{Action, ActionSpace, Env, EnvSnapshot};
use crate::error::{invalid, Result};
use crate::freqloss::freqloss;
use crate::nets::{SpfNetworks, Which};
use crate::replay::{Batch, ReplayBuffer, Transition};

pub const METRICS_HEADER: &str = "step,L_pred,raw_lo_term,mid_term,raw_hi_term,episodic_return";
pub const AGENT_HEADER: &str = "step,critic_loss,actor_loss,entropy";
pub const EVAL_HEADER: &str = "step,episode,return";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxTerms {
    pub total: f64,
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
}

/// One metrics line. Empty cells are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub step: u64,
    pub aux: Option<AuxTerms>,
    pub episodic_return: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentRow {
    pub step: u64,
    pub stats: AgentStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: u64,
    pub returns: Vec<f64>,
}

impl EvalRecord {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    step: u64,
    aux_updates: u64,
    aux_opt_step: u64,
    pretrained: bool,
    replay_len: usize,
    replay_head: usize,
    rng_act: String,
    rng_aux: String,
    rng_agent: String,
    env: EnvSnapshot,
    episode_return: f64,
    notices: Vec<String>,
    env_name: String,
    seed: u64,
}

pub struct Trainer {
    pub config: TrainConfig,
    pub env: Env,
    pub space: ActionSpace,
    pub nets: SpfNetworks,
    pub aux_opt: Adam,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    rng_act: StreamRng,
    rng_aux: StreamRng,
    rng_agent: StreamRng,
    /// Environment steps taken.
    pub step: u64,
    pub aux_updates: u64,
    pretrained: bool,
    obs: Vec<f64>,
    episode_return: f64,
    pub metrics: Vec<MetricRow>,
    pub agent_rows: Vec<AgentRow>,
    pub evals: Vec<EvalRecord>,
    /// Human-readable notes, e.g. skipped updates.
    pub notices: Vec<String>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let mut env = config.build_env(streams::ENV);
        let space = env.action_space();
        let mut init = stream(config.seed, streams::INIT);
        let nets = SpfNetworks::new(config.net.clone(), &mut init)?;
        let agent = build_agent(&config, &env, &space, &mut init)?;
        let buffer = ReplayBuffer::new(config.schedule.buffer_size, config.net.obs_dim, config.net.action_dim)?;
        let obs = env.reset();
        Ok(Trainer {
            aux_opt: Adam::new(config.aux.lr),
            rng_act: stream(config.seed, streams::ACT),
            rng_aux: stream(config.seed, streams::AUX),
            rng_agent: stream(config.seed, streams::AGENT),
            config,
            env,
            space,
            nets,
            agent,
            buffer,
            step: 0,
            aux_updates: 0,
            pretrained: false,
            obs,
            episode_return: 0.0,
            metrics: vec![],
            agent_rows: vec![],
            evals: vec![],
            notices: vec![],
        })
    }

    fn notice(&mut self, msg: String) {
        if !self.notices.contains(&msg) {
            self.notices.push(msg);
        }
    }

    fn rep_s(&self, obs: &[f64], n: usize) -> Result<Vec<f64>> {
        if self.agent.kind() == AgentKind::GaussianActorCritic {
            self.nets.encode_state_values(Which::Online, obs, n)
        } else {
            Ok(vec![])
        }
    }

    /// One gradient step on the prediction loss. `None` when the buffer
    /// holds fewer transitions than a batch.
    pub fn aux_step(&mut self) -> Result<Option<AuxTerms>> {
        let n = self.config.aux.batch_size;
        if self.buffer.len() < n {
            self.notice(format!("auxiliary step skipped: buffer holds fewer than {n} transitions"));
            return Ok(None);
        }
        let batch = self.buffer.sample(&mut self.rng_aux, n)?;
        let terms = self.aux_update(&batch)?;
        self.aux_updates += 1;
        if self.aux_updates.is_multiple_of(self.config.aux.target_interval) {
            ema_update(&self.nets.online, &mut self.nets.target, self.config.aux.tau)?;
        }
        Ok(Some(terms))
    }

    /// Loss, gradient and optimizer step on a given batch.
    pub fn aux_update(&mut self, batch: &Batch) -> Result<AuxTerms> {
        let n = batch.size;
        let nc = &self.nets.config;
        let rep_next = self.rep_s(&batch.next_obs, n)?;
        let next_action = self.agent.target_actions(&batch.next_states, &rep_next, &self.space)?;
        let (tre, tim) = self.nets.build_td_target(&batch.next_obs, &next_action, n, self.config.gamma)?;
        let mut tape = Tape::new();
        let o = tape.constant(n, nc.obs_dim, batch.obs.clone())?;
        let a = tape.constant(n, nc.action_dim, batch.action.clone())?;
        let p = self.nets.forward(&mut tape, Which::Online, o, a)?;
        let w = nc.head_width();
        let tr = tape.constant(n, w, tre)?;
        let ti = tape.constant(n, w, tim)?;
        let terms = freqloss(&mut tape, &self.nets, p.re, p.im, tr, ti, &self.config.freqloss)?;
        let grads = tape.backward(terms.total)?;
        grads.apply_to("online", &mut self.nets.online)?;
        self.aux_opt.lr = self.config.aux_lr(self.aux_updates);
        self.aux_opt.step(&mut self.nets.online)?;
        Ok(AuxTerms { total: tape.scalar(terms.total), lo: terms.lo, mid: terms.mid, hi: terms.hi })
    }

    /// Agent update on a fresh batch, fed detached representation values.
    pub fn agent_step(&mut self) -> Result<Option<AgentStats>> {
        let n = self.config.aux.batch_size;
        if self.agent.kind() == AgentKind::Fixed || self.buffer.len() < n {
            return Ok(None);
        }
        let batch = self.buffer.sample(&mut self.rng_agent, n)?;
        let rep_s = self.rep_s(&batch.obs, n)?;
        let rep_next = self.rep_s(&batch.next_obs, n)?;
        let ab = AgentBatch {
            size: n,
            states: &batch.states,
            next_states: &batch.next_states,
            action: &batch.action,
            reward: &batch.reward,
            rep_s: &rep_s,
            rep_next: &rep_next,
        };
        let nets = &self.nets;
        let encode = |r: &[f64], a: &[f64], m: usize| nets.encode_pair_values(Which::Online, r, a, m);
        Ok(Some(self.agent.update(&ab, encode, &mut self.rng_agent)?))
    }

    fn pretrain(&mut self) -> Result<()> {
        self.pretrained = true;
        for _ in 0..self.config.schedule.pretrain_steps {
            let Some(aux) = self.aux_step()? else { break };
            self.metrics.push(MetricRow { step: self.step, aux: Some(aux), episodic_return: None });
        }
        Ok(())
    }

    /// One environment step with everything that follows it.
    pub fn advance(&mut self) -> Result<()> {
        let sched = self.config.schedule.clone();
        let action = if self.step < sched.random_steps {
            self.space.sample(&mut self.rng_act)
        } else {
            let rep = self.rep_s(&self.obs, 1)?;
            let ob = Observation { state: self.env.state_index(), rep_s: &rep };
            self.agent.act(ob, &self.space, &mut self.rng_act, true)?
        };
        let state = self.env.state_index();
        let st = self.env.step(&action);
        if st.clipped {
            self.notice(format!("{} clipped an out-of-range action", self.env.name()));
        }
        let stored = match (&action, self.space) {
            (Action::Continuous(v), ActionSpace::Continuous { bound, .. }) => {
                Action::Continuous(v.iter().map(|x| x.clamp(-bound, bound)).collect())
            }
            _ => action.clone(),
        };
        self.buffer.push(&Transition {
            obs: std::mem::take(&mut self.obs),
            action: stored.encode(&self.space),
            reward: st.reward,
            next_obs: st.obs.clone(),
            state,
            next_state: self.env.state_index(),
        })?;
        self.episode_return += st.reward;
        let mut ended = None;
        if st.truncated {
            ended = Some(self.episode_return);
            self.episode_return = 0.0;
            self.obs = self.env.reset();
        } else {
            self.obs = st.obs;
        }
        self.step += 1;

        if !self.pretrained && self.step >= sched.random_steps.max(1) {
            self.pretrain()?;
        }
        let mut aux = None;
        if self.step > sched.random_steps {
            aux = self.aux_step()?;
            if let Some(stats) = self.agent_step()? {
                self.agent_rows.push(AgentRow { step: self.step, stats });
            }
        }
        if aux.is_some() || ended.is_some() {
            self.metrics.push(MetricRow { step: self.step, aux, episodic_return: ended });
        }
        if sched.eval_interval > 0 && self.step.is_multiple_of(sched.eval_interval) {
            let round = self.step / sched.eval_interval;
            let returns = self.evaluate(round, sched.eval_episodes)?;
            self.evals.push(EvalRecord { step: self.step, returns });
        }
        Ok(())
    }

    /// Advances until `total_steps`, calling `on_checkpoint` at every
    /// checkpoint interval.
    pub fn run(&mut self, mut on_checkpoint: impl FnMut(&Trainer) -> Result<()>) -> Result<()> {
        let total = self.config.schedule.total_steps;
        let every = self.config.schedule.checkpoint_interval;
        while self.step < total {
            self.advance()?;
            if every > 0 && self.step.is_multiple_of(every) && self.step < total {
                on_checkpoint(self)?;
            }
        }
        Ok(())
    }

    pub fn run_to_end(&mut self) -> Result<()> {
        self.run(|_| Ok(()))
    }

    /// Deterministic-policy returns of `episodes` fresh episodes, run in
    /// parallel on the current parameters.
    pub fn evaluate(&self, round: u64, episodes: usize) -> Result<Vec<f64>> {
        (0..episodes)
            .into_par_iter()
            .map(|i| {
                let mut env = self.config.build_env(streams::EVAL + (round << 16) + i as u64);
                let mut rng = stream(self.config.seed, streams::EVAL - 1);
                let mut obs = env.reset();
                let mut total = 0.0;
                loop {
                    let rep = self.rep_s(&obs, 1)?;
                    let ob = Observation { state: env.state_index(), rep_s: &rep };
                    let a = self.agent.act(ob, &self.space, &mut rng, false)?;
                    let st = env.step(&a);
                    total += st.reward;
                    if st.truncated {
                        return Ok(total);
                    }
                    obs = st.obs;
                }
            })
            .collect()
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for r in &self.metrics {
            let a = r.aux;
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.step,
                cell(a.map(|t| t.total)),
                cell(a.map(|t| t.lo)),
                cell(a.map(|t| t.mid)),
                cell(a.map(|t| t.hi)),
                cell(r.episodic_return)
            ));
        }
        s
    }

    pub fn agent_csv(&self) -> String {
        let mut s = String::from(AGENT_HEADER);
        s.push('\n');
        for r in &self.agent_rows {
            let t = r.stats;
            s.push_str(&format!("{},{},{},{}\n", r.step, t.critic_loss, t.actor_loss, t.entropy));
        }
        s
    }

    pub fn eval_csv(&self) -> String {
        let mut s = String::from(EVAL_HEADER);
        s.push('\n');
        for e in &self.evals {
            for (i, r) in e.returns.iter().enumerate() {
                s.push_str(&format!("{},{i},{r}\n", e.step));
            }
        }
        s
    }

    /// Prediction-loss values in order.
    pub fn loss_trace(&self) -> Vec<f64> {
        self.metrics.iter().filter_map(|r| r.aux.map(|a| a.total)).collect()
    }

    /// Full training state: parameters, optimizer moments, replay contents,
    /// random-stream positions, environment state and traces.
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut t = ParamTree::new();
        for (which, tree) in [("online", &self.nets.online), ("target", &self.nets.target)] {
            for (name, v) in tree.iter() {
                t.insert(format!("{which}/{name}"), v.clone())?;
            }
        }
        for (name, v) in self.aux_opt.export_moments()?.iter() {
            t.insert(format!("aux_opt/{name}"), v.clone())?;
        }
        self.agent.export(&mut t)?;
        let (replay, (len, head)) = self.buffer.to_tensors("replay")?;
        t.merge(replay)?;

        let nan = f64::NAN;
        let mut m = Vec::with_capacity(self.metrics.len() * 6);
        for r in &self.metrics {
            let a = r.aux;
            m.extend([
                r.step as f64,
                a.map_or(nan, |x| x.total),
                a.map_or(nan, |x| x.lo),
                a.map_or(nan, |x| x.mid),
                a.map_or(nan, |x| x.hi),
                r.episodic_return.unwrap_or(nan),
            ]);
        }
        t.insert("trace/metrics", Tensor::new(vec![self.metrics.len(), 6], m)?)?;
        let ag: Vec<f64> = self
            .agent_rows
            .iter()
            .flat_map(|r| [r.step as f64, r.stats.critic_loss, r.stats.actor_loss, r.stats.entropy])
            .collect();
        t.insert("trace/agent", Tensor::new(vec![self.agent_rows.len(), 4], ag)?)?;
        let k = self.config.schedule.eval_episodes;
        let ev: Vec<f64> =
            self.evals.iter().flat_map(|e| std::iter::once(e.step as f64).chain(e.returns.iter().copied())).collect();
        t.insert("trace/eval", Tensor::new(vec![self.evals.len(), k + 1], ev)?)?;

        let meta = Meta {
            step: self.step,
            aux_updates: self.aux_updates,
            aux_opt_step: self.aux_opt.step,
            pretrained: self.pretrained,
            replay_len: len,
            replay_head: head,
            rng_act: self.rng_act.get_word_pos().to_string(),
            rng_aux: self.rng_aux.get_word_pos().to_string(),
            rng_agent: self.rng_agent.get_word_pos().to_string(),
            env: self.env.snapshot(),
            episode_return: self.episode_return,
            notices: self.notices.clone(),
            env_name: self.config.env_name().to_string(),
            seed: self.config.seed,
        };
        Ok(Checkpoint::new(self.step, t, serde_json::to_value(meta).map_err(|e| invalid(e.to_string()))?))
    }

    /// Rebuilds a trainer from [`Trainer::to_checkpoint`] output under the
    /// same configuration.
    pub fn from_checkpoint(config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        let meta: Meta =
            serde_json::from_value(ck.meta.clone()).map_err(|e| invalid(format!("checkpoint metadata: {e}")))?;
        if meta.env_name != config.env_name() || meta.seed != config.seed {
            return Err(invalid("checkpoint was written under a different environment or seed"));
        }
        let mut tr = Trainer::new(config)?;
        let p = &ck.params;
        let online = p.strip_prefix("online/");
        let target = p.strip_prefix("target/");
        online.check_structure(&tr.nets.online)?;
        target.check_structure(&tr.nets.target)?;
        tr.nets.online = online;
        tr.nets.target = target;
        tr.aux_opt.import_moments(meta.aux_opt_step, &p.strip_prefix("aux_opt/"))?;
        tr.agent.import(p)?;
        tr.buffer.restore(p, "replay", meta.replay_len, meta.replay_head)?;
        tr.env.restore(&meta.env)?;
        tr.obs = tr.env.obs();
        let pos = |s: &str| s.parse::<u128>().map_err(|_| invalid("bad rng position in checkpoint"));
        tr.rng_act.set_word_pos(pos(&meta.rng_act)?);
        tr.rng_aux.set_word_pos(pos(&meta.rng_aux)?);
        tr.rng_agent.set_word_pos(pos(&meta.rng_agent)?);
        tr.step = meta.step;
        tr.aux_updates = meta.aux_updates;
        tr.pretrained = meta.pretrained;
        tr.episode_return = meta.episode_return;
        tr.notices = meta.notices;

        let rows = |name: &str, width: usize| -> Result<Vec<Vec<f64>>> {
            let t = p.get(name).ok_or_else(|| invalid(format!("checkpoint lacks {name}")))?;
            if t.shape().len() != 2 || t.shape()[1] != width {
                return Err(invalid(format!("{name} has the wrong shape")));
            }
            Ok(t.data().chunks(width).map(<[f64]>::to_vec).collect())
        };
        let opt = |x: f64| if x.is_nan() { None } else { Some(x) };
        tr.metrics = rows("trace/metrics", 6)?
            .into_iter()
            .map(|r| MetricRow {
                step: r[0] as u64,
                aux: opt(r[1]).map(|total| AuxTerms { total, lo: r[2], mid: r[3], hi: r[4] }),
                episodic_return: opt(r[5]),
            })
            .collect();
        tr.agent_rows = rows("trace/agent", 4)?
            .into_iter()
            .map(|r| AgentRow {
                step: r[0] as u64,
                stats: AgentStats { critic_loss: r[1], actor_loss: r[2], entropy: r[3] },
            })
            .collect();
        let k = tr.config.schedule.eval_episodes;
        tr.evals = rows("trace/eval", k + 1)?
            .into_iter()
            .map(|r| EvalRecord { step: r[0] as u64, returns: r[1..].to_vec() })
            .collect();
        Ok(tr)
    }
}

fn build_agent<R: Rng + ?Sized>(config: &TrainConfig, env: &Env, space: &ActionSpace, rng: &mut R) -> Result<Agent> {
    let c = &config.agent;
    c.validate(space, env.n_states())?;
    Ok(match c.kind {
        AgentKind::TabularQ => Agent::TabularQ(TabularQ::new(
            env.n_states().unwrap_or(0),
            space.encoded_dim(),
            c.q_lr,
            c.epsilon,
            config.gamma,
        )),
        AgentKind::Fixed => Agent::Fixed { table: c.table.clone(), n_actions: space.encoded_dim() },
        AgentKind::GaussianActorCritic => {
            let ActionSpace::Continuous { dim, bound } = *space else {
                return Err(invalid("gaussian_actor_critic needs continuous actions"));
            };
            Agent::Gaussian(Box::new(GaussianActorCritic::new(
                c.clone(),
                config.net.rep_s_width(),
                config.net.rep_sa_width(),
                dim,
                bound,
                config.gamma,
                rng,
            )?))
        }
    })
}

/// Undiscounted returns of `episodes` uniformly random episodes.
pub fn random_policy_returns(config: &TrainConfig, episodes: usize, stream_base: u64) -> Vec<f64> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut env = config.build_env(stream_base + i as u64);
            let space = env.action_space();
            let mut rng = stream(config.seed, stream_base + (1 << 24) + i as u64);
            env.reset();
            let mut total = 0.0;
            loop {
                let st = env.step(&space.sample(&mut rng));
                total += st.reward;
                if st.truncated {
                    return total;
                }
            }
        })
        .collect()
}
