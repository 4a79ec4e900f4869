//! Training configuration: a TOML document resolved against a profile.
//!
//! ```toml
//! profile = "desk"              # desk | paper
//! seed = 0
//! gamma = 0.99
//!
//! [env]
//! kind = "pendulum"             # pendulum | cycle_walk | tabular
//! horizon = 200
//!
//! [agent]
//! kind = "gaussian_actor_critic"
//!
//! [spf]
//! l = 32
//!
//! [freqloss]
//! k_lo = 4
//! k_hi = 4
//!
//! [schedule]
//! total_steps = 20000
//! ```
//!
//! Every key is optional except `env.kind`; missing keys take the profile
//! value. A `tabular` environment reads its MDP from an `[mdp]` table in
//! the MDP document grammar.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use spf_core::config::{config_error, from_toml, MdpSection};
use spf_core::TabularMdp;
use spf_nn::Activation;
use toml::Spanned;

use crate::agents::{AgentConfig, AgentKind};
use crate::env::{ActionSpace, CycleEmbedding, CycleWalk, Env, Integrator, PendulumParams};
use crate::error::Result;
use crate::freqloss::{Distance, FreqlossConfig};
use crate::nets::{EncoderKind, NetConfig, ProjectionKind};

type Field<T> = Option<Spanned<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Option<Profile> {
        match s {
            "desk" => Some(Profile::Desk),
            "paper" => Some(Profile::Paper),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    profile: Field<String>,
    seed: Field<u64>,
    gamma: Field<f64>,
    env: Spanned<EnvSection>,
    agent: Option<Spanned<AgentSection>>,
    spf: Option<Spanned<SpfSection>>,
    freqloss: Option<Spanned<LossSection>>,
    schedule: Option<Spanned<ScheduleSection>>,
    mdp: Option<Spanned<MdpSection>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnvSection {
    kind: Field<String>,
    horizon: Field<usize>,
    period: Field<usize>,
    n_actions: Field<usize>,
    autonomous: Field<bool>,
    embedding: Field<CycleEmbedding>,
    g: Field<f64>,
    length: Field<f64>,
    mass: Field<f64>,
    dt: Field<f64>,
    max_torque: Field<f64>,
    max_speed: Field<f64>,
    integrator: Field<Integrator>,
    substeps: Field<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentSection {
    kind: Field<AgentKind>,
    q_lr: Field<f64>,
    epsilon: Field<f64>,
    table: Field<Vec<usize>>,
    actor_lr: Field<f64>,
    critic_lr: Field<f64>,
    hidden: Field<Vec<usize>>,
    log_std_init: Field<f64>,
    log_std_min: Field<f64>,
    log_std_max: Field<f64>,
    action_samples: Field<usize>,
    critic_tau: Field<f64>,
    reward_scale: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpfSection {
    l: Field<usize>,
    encoder_s: Field<EncoderKind>,
    encoder_sa: Field<EncoderKind>,
    encoder_blocks: Field<usize>,
    encoder_growth: Field<usize>,
    activation: Field<Activation>,
    predictor_hidden: Field<Vec<usize>>,
    predictor_activation: Field<Activation>,
    projection: Field<ProjectionKind>,
    projection_hidden: Field<usize>,
    projection_dim: Field<usize>,
    projection2_identity_init: Field<bool>,
    zero_init_heads: Field<bool>,
    lr: Field<f64>,
    lr_final: Field<f64>,
    batch_size: Field<usize>,
    tau: Field<f64>,
    target_interval: Field<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossSection {
    k_lo: Field<usize>,
    k_hi: Field<usize>,
    distance: Field<Distance>,
    w_lo: Field<f64>,
    w_mid: Field<f64>,
    w_hi: Field<f64>,
    eps: Field<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleSection {
    total_steps: Field<u64>,
    random_steps: Field<u64>,
    pretrain_steps: Field<u64>,
    buffer_size: Field<usize>,
    eval_interval: Field<u64>,
    eval_episodes: Field<usize>,
    checkpoint_interval: Field<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    Pendulum {
        params: PendulumParams,
    },
    CycleWalk {
        walk: CycleWalk,
    },
    Tabular {
        #[serde(skip)]
        mdp: TabularMdp,
    },
}

/// Auxiliary-task optimisation and target bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuxConfig {
    pub lr: f64,
    /// When set, the rate falls linearly from `lr` to this value over the
    /// run's auxiliary updates.
    pub lr_final: Option<f64>,
    pub batch_size: usize,
    pub tau: f64,
    /// Target sync every `K` auxiliary updates.
    pub target_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    /// Environment steps, random collection included.
    pub total_steps: u64,
    /// Leading steps acted uniformly at random, without updates.
    pub random_steps: u64,
    /// Auxiliary updates run once, right after random collection.
    pub pretrain_steps: u64,
    pub buffer_size: usize,
    /// Evaluate every this many environment steps; 0 disables.
    pub eval_interval: u64,
    pub eval_episodes: usize,
    /// Checkpoint every this many environment steps; 0 keeps the final one only.
    pub checkpoint_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Single discount for the auxiliary target and the agent.
    pub gamma: f64,
    pub horizon: usize,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub net: NetConfig,
    pub freqloss: FreqlossConfig,
    pub aux: AuxConfig,
    pub schedule: Schedule,
}

/// Random streams, one per consumer.
pub mod streams {
    pub const ENV: u64 = 1;
    pub const ACT: u64 = 2;
    pub const AUX: u64 = 3;
    pub const AGENT: u64 = 4;
    pub const INIT: u64 = 5;
    /// Evaluation episode `i` of evaluation round `r` uses `EVAL + r·2¹⁶ + i`.
    pub const EVAL: u64 = 1 << 32;
}

impl TrainConfig {
    /// Auxiliary updates in a full run: pretraining plus one per step after
    /// random collection.
    pub fn planned_aux_updates(&self) -> u64 {
        let s = &self.schedule;
        s.pretrain_steps + s.total_steps.saturating_sub(s.random_steps)
    }

    /// Auxiliary learning rate before update number `done + 1`.
    pub fn aux_lr(&self, done: u64) -> f64 {
        match self.aux.lr_final {
            None => self.aux.lr,
            Some(end) => {
                let frac = (done as f64 / self.planned_aux_updates().max(1) as f64).min(1.0);
                self.aux.lr + (end - self.aux.lr) * frac
            }
        }
    }

    pub fn build_env(&self, stream: u64) -> Env {
        match &self.env {
            EnvConfig::Pendulum { params } => Env::pendulum(params.clone(), self.horizon, self.seed, stream),
            EnvConfig::CycleWalk { walk } => Env::cycle_walk(walk.clone(), self.horizon, self.seed, stream),
            EnvConfig::Tabular { mdp } => Env::tabular(mdp.clone(), self.horizon, self.seed, stream),
        }
    }

    pub fn env_name(&self) -> &'static str {
        match self.env {
            EnvConfig::Pendulum { .. } => "pendulum",
            EnvConfig::CycleWalk { .. } => "cycle_walk",
            EnvConfig::Tabular { .. } => "tabular",
        }
    }
}

fn get<T: Clone>(f: &Field<T>, default: T) -> T {
    f.as_ref().map_or(default, |s| s.get_ref().clone())
}

fn span<T>(f: &Field<T>) -> Option<Range<usize>> {
    f.as_ref().map(Spanned::span)
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn check<T>(&self, ok: bool, f: &Field<T>, section: Option<Range<usize>>, name: &str, msg: &str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(config_error(self.src, span(f).or(section), name, msg).into())
        }
    }

    fn wrap(&self, section: Option<Range<usize>>, name: &str, e: crate::Error) -> crate::Error {
        match e {
            crate::Error::Config(msg) => config_error(self.src, section, name, msg).into(),
            other => other,
        }
    }
}

struct Defaults {
    gamma: f64,
    net: NetConfig,
    loss: FreqlossConfig,
    aux: AuxConfig,
    schedule: Schedule,
}

fn defaults(profile: Profile) -> Defaults {
    let desk = profile == Profile::Desk;
    let net = NetConfig {
        obs_dim: 0,
        action_dim: 0,
        l: if desk { 32 } else { 128 },
        encoder_s: EncoderKind::Densenet,
        encoder_sa: EncoderKind::Densenet,
        encoder_blocks: if desk { 4 } else { 6 },
        encoder_growth: if desk { 16 } else { 40 },
        activation: Activation::Swish,
        predictor_hidden: vec![if desk { 128 } else { 1024 }],
        predictor_activation: Activation::Relu,
        projection: ProjectionKind::Mlp,
        projection_hidden: if desk { 64 } else { 512 },
        projection_dim: if desk { 32 } else { 512 },
        projection2_identity_init: desk,
        k_lo: if desk { 4 } else { 8 },
        k_hi: if desk { 4 } else { 8 },
        zero_init_heads: false,
    };
    let loss = FreqlossConfig { k_lo: net.k_lo, k_hi: net.k_hi, ..FreqlossConfig::default() };
    let aux = AuxConfig {
        lr: 3e-4,
        lr_final: None,
        batch_size: if desk { 64 } else { 256 },
        tau: 0.01,
        target_interval: if desk { 200 } else { 1000 },
    };
    let schedule = Schedule {
        total_steps: if desk { 20_000 } else { 1_000_000 },
        random_steps: if desk { 1_000 } else { 10_000 },
        pretrain_steps: if desk { 1_000 } else { 10_000 },
        buffer_size: if desk { 20_000 } else { 100_000 },
        eval_interval: if desk { 2_000 } else { 5_000 },
        eval_episodes: 10,
        checkpoint_interval: 0,
    };
    Defaults { gamma: 0.99, net, loss, aux, schedule }
}

/// Overrides applied on top of the document, as from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
}

pub fn parse_train_config(src: &str, overrides: Overrides) -> Result<TrainConfig> {
    let doc: Document = from_toml(src)?;
    let cx = Ctx { src };

    let profile = match (&overrides.profile, &doc.profile) {
        (Some(p), _) => *p,
        (None, Some(p)) => Profile::parse(p.get_ref())
            .ok_or_else(|| config_error(src, Some(p.span()), "profile", "expected \"desk\" or \"paper\""))?,
        (None, None) => Profile::Desk,
    };
    let d = defaults(profile);
    let seed = overrides.seed.unwrap_or(get(&doc.seed, 0));

    // environment
    let env_span = Some(doc.env.span());
    let e = doc.env.get_ref();
    let kind = e.kind.as_ref().ok_or_else(|| config_error(src, env_span.clone(), "env.kind", "missing"))?;
    let mut gamma = get(&doc.gamma, d.gamma);
    cx.check((0.0..1.0).contains(&gamma), &doc.gamma, None, "gamma", "must lie in [0, 1)")?;
    let horizon = get(&e.horizon, 200);
    cx.check(horizon > 0, &e.horizon, env_span.clone(), "env.horizon", "must be positive")?;
    let env = match kind.get_ref().as_str() {
        "pendulum" => {
            let base = PendulumParams::default();
            let params = PendulumParams {
                g: get(&e.g, base.g),
                l: get(&e.length, base.l),
                m: get(&e.mass, base.m),
                dt: get(&e.dt, base.dt),
                max_torque: get(&e.max_torque, base.max_torque),
                max_speed: e.max_speed.as_ref().map(|s| *s.get_ref()).or(base.max_speed),
                integrator: get(&e.integrator, base.integrator),
                substeps: get(&e.substeps, base.substeps),
            };
            for (ok, f, name) in [
                (params.l > 0.0, &e.length, "env.length"),
                (params.m > 0.0, &e.mass, "env.mass"),
                (params.dt > 0.0, &e.dt, "env.dt"),
                (params.max_torque > 0.0, &e.max_torque, "env.max_torque"),
                (params.max_speed.is_none_or(|s| s > 0.0), &e.max_speed, "env.max_speed"),
            ] {
                cx.check(ok, f, env_span.clone(), name, "must be positive")?;
            }
            cx.check(params.substeps > 0, &e.substeps, env_span.clone(), "env.substeps", "must be positive")?;
            EnvConfig::Pendulum { params }
        }
        "cycle_walk" => {
            let walk = CycleWalk::new(
                get(&e.period, 5),
                get(&e.n_actions, 2),
                get(&e.autonomous, true),
                get(&e.embedding, CycleEmbedding::Onehot),
            )
            .map_err(|err| cx.wrap(span(&e.period).or(env_span.clone()), "env", err))?;
            EnvConfig::CycleWalk { walk }
        }
        "tabular" => {
            let section = doc
                .mdp
                .as_ref()
                .ok_or_else(|| config_error(src, Some(kind.span()), "env.kind", "\"tabular\" needs an [mdp] table"))?;
            let mdp = section.get_ref().build(src)?;
            if doc.gamma.is_some() && mdp.gamma() != gamma {
                return Err(config_error(src, span(&doc.gamma), "gamma", "disagrees with mdp.gamma").into());
            }
            gamma = mdp.gamma();
            EnvConfig::Tabular { mdp }
        }
        other => {
            return Err(config_error(
                src,
                Some(kind.span()),
                "env.kind",
                format!("unknown environment {other:?}; expected pendulum, cycle_walk or tabular"),
            )
            .into())
        }
    };
    if doc.mdp.is_some() && !matches!(env, EnvConfig::Tabular { .. }) {
        return Err(config_error(
            src,
            doc.mdp.as_ref().map(Spanned::span),
            "mdp",
            "only used by env.kind = \"tabular\"",
        )
        .into());
    }
    let probe = TrainConfig {
        profile,
        seed,
        gamma,
        horizon,
        env: env.clone(),
        agent: AgentConfig::default(),
        net: d.net.clone(),
        freqloss: d.loss.clone(),
        aux: d.aux.clone(),
        schedule: d.schedule.clone(),
    }
    .build_env(0);
    let space = probe.action_space();

    // agent
    let empty_agent = AgentSection::default();
    let (a, agent_span) = match &doc.agent {
        Some(s) => (s.get_ref(), Some(s.span())),
        None => (&empty_agent, None),
    };
    let base = AgentConfig::default();
    let default_kind = match space {
        ActionSpace::Continuous { .. } => AgentKind::GaussianActorCritic,
        ActionSpace::Discrete { .. } => AgentKind::TabularQ,
    };
    let agent = AgentConfig {
        kind: get(&a.kind, default_kind),
        q_lr: get(&a.q_lr, base.q_lr),
        epsilon: get(&a.epsilon, base.epsilon),
        table: get(&a.table, base.table),
        actor_lr: get(&a.actor_lr, base.actor_lr),
        critic_lr: get(&a.critic_lr, base.critic_lr),
        hidden: get(&a.hidden, base.hidden),
        log_std_init: get(&a.log_std_init, base.log_std_init),
        log_std_min: get(&a.log_std_min, base.log_std_min),
        log_std_max: get(&a.log_std_max, base.log_std_max),
        action_samples: get(&a.action_samples, base.action_samples),
        critic_tau: get(&a.critic_tau, base.critic_tau),
        reward_scale: get(&a.reward_scale, base.reward_scale),
    };
    agent
        .validate(&space, probe.n_states())
        .map_err(|err| cx.wrap(span(&a.kind).or(agent_span.clone()), "agent", err))?;

    // networks
    let empty_spf = SpfSection::default();
    let (s, spf_span) = match &doc.spf {
        Some(x) => (x.get_ref(), Some(x.span())),
        None => (&empty_spf, None),
    };
    let empty_loss = LossSection::default();
    let (lsec, loss_span) = match &doc.freqloss {
        Some(x) => (x.get_ref(), Some(x.span())),
        None => (&empty_loss, None),
    };
    let dn = &d.net;
    let net = NetConfig {
        obs_dim: probe.obs_dim(),
        action_dim: space.encoded_dim(),
        l: get(&s.l, dn.l),
        encoder_s: get(&s.encoder_s, dn.encoder_s),
        encoder_sa: get(&s.encoder_sa, dn.encoder_sa),
        encoder_blocks: get(&s.encoder_blocks, dn.encoder_blocks),
        encoder_growth: get(&s.encoder_growth, dn.encoder_growth),
        activation: get(&s.activation, dn.activation),
        predictor_hidden: get(&s.predictor_hidden, dn.predictor_hidden.clone()),
        predictor_activation: get(&s.predictor_activation, dn.predictor_activation),
        projection: get(&s.projection, dn.projection),
        projection_hidden: get(&s.projection_hidden, dn.projection_hidden),
        projection_dim: get(&s.projection_dim, dn.projection_dim),
        projection2_identity_init: get(&s.projection2_identity_init, dn.projection2_identity_init),
        k_lo: get(&lsec.k_lo, d.loss.k_lo),
        k_hi: get(&lsec.k_hi, d.loss.k_hi),
        zero_init_heads: get(&s.zero_init_heads, dn.zero_init_heads),
    };
    let split_span = span(&lsec.k_lo).or(span(&lsec.k_hi)).or(loss_span.clone());
    if net.k_lo + net.k_hi >= net.bins() {
        return Err(config_error(
            src,
            split_span.or(span(&s.l)),
            "freqloss.k_lo",
            format!("k_lo + k_hi must be below the {} stored bins at L = {}", net.bins(), net.l),
        )
        .into());
    }
    net.validate().map_err(|err| cx.wrap(spf_span.clone(), "spf", err))?;
    let freqloss = FreqlossConfig {
        k_lo: net.k_lo,
        k_hi: net.k_hi,
        distance: get(&lsec.distance, d.loss.distance),
        w_lo: get(&lsec.w_lo, d.loss.w_lo),
        w_mid: get(&lsec.w_mid, d.loss.w_mid),
        w_hi: get(&lsec.w_hi, d.loss.w_hi),
        eps: get(&lsec.eps, d.loss.eps),
    };
    freqloss.validate(net.bins()).map_err(|err| cx.wrap(loss_span.clone(), "freqloss", err))?;

    let aux = AuxConfig {
        lr: get(&s.lr, d.aux.lr),
        lr_final: s.lr_final.as_ref().map(|v| *v.get_ref()),
        batch_size: get(&s.batch_size, d.aux.batch_size),
        tau: get(&s.tau, d.aux.tau),
        target_interval: get(&s.target_interval, d.aux.target_interval),
    };
    cx.check(aux.lr >= 0.0 && aux.lr.is_finite(), &s.lr, spf_span.clone(), "spf.lr", "must be non-negative")?;
    cx.check(
        aux.lr_final.is_none_or(|v| v >= 0.0 && v.is_finite()),
        &s.lr_final,
        spf_span.clone(),
        "spf.lr_final",
        "must be non-negative",
    )?;
    cx.check(aux.batch_size > 0, &s.batch_size, spf_span.clone(), "spf.batch_size", "must be positive")?;
    cx.check((0.0..=1.0).contains(&aux.tau), &s.tau, spf_span.clone(), "spf.tau", "must lie in [0, 1]")?;
    cx.check(aux.target_interval > 0, &s.target_interval, spf_span.clone(), "spf.target_interval", "must be positive")?;

    let empty_sched = ScheduleSection::default();
    let (sc, sched_span) = match &doc.schedule {
        Some(x) => (x.get_ref(), Some(x.span())),
        None => (&empty_sched, None),
    };
    let ds = &d.schedule;
    let schedule = Schedule {
        total_steps: get(&sc.total_steps, ds.total_steps),
        random_steps: get(&sc.random_steps, ds.random_steps),
        pretrain_steps: get(&sc.pretrain_steps, ds.pretrain_steps),
        buffer_size: get(&sc.buffer_size, ds.buffer_size),
        eval_interval: get(&sc.eval_interval, ds.eval_interval),
        eval_episodes: get(&sc.eval_episodes, ds.eval_episodes),
        checkpoint_interval: get(&sc.checkpoint_interval, ds.checkpoint_interval),
    };
    cx.check(
        schedule.buffer_size > 0,
        &sc.buffer_size,
        sched_span.clone(),
        "schedule.buffer_size",
        "must be positive",
    )?;
    cx.check(
        aux.batch_size <= schedule.buffer_size,
        &s.batch_size,
        spf_span,
        "spf.batch_size",
        "exceeds schedule.buffer_size",
    )?;
    cx.check(
        schedule.eval_interval == 0 || schedule.eval_episodes > 0,
        &sc.eval_episodes,
        sched_span,
        "schedule.eval_episodes",
        "must be positive when evaluation is on",
    )?;

    Ok(TrainConfig { profile, seed, gamma, horizon, env, agent, net, freqloss, aux, schedule })
}
