//! Built-in environments: a tabular MDP, a deterministic cycle walk and a
//! torque-limited pendulum.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use spf_core::mdp::normalize;
use spf_core::{rng, Mat, TabularMdp};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionSpace {
    Discrete { n: usize },
    Continuous { dim: usize, bound: f64 },
}

impl ActionSpace {
    /// Width of the encoded action fed to networks: one-hot for discrete.
    pub fn encoded_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete { n } => n,
            ActionSpace::Continuous { dim, .. } => dim,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match *self {
            ActionSpace::Discrete { n } => Action::Discrete(rng.gen_range(0..n)),
            ActionSpace::Continuous { dim, bound } => {
                Action::Continuous((0..dim).map(|_| rng.gen_range(-bound..=bound)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn encode(&self, space: &ActionSpace) -> Vec<f64> {
        match (self, space) {
            (Action::Discrete(a), ActionSpace::Discrete { n }) => {
                let mut v = vec![0.0; *n];
                if *a < *n {
                    v[*a] = 1.0;
                }
                v
            }
            (Action::Continuous(v), _) => v.clone(),
            (Action::Discrete(a), ActionSpace::Continuous { dim, .. }) => vec![*a as f64; *dim],
        }
    }

    /// Inverse of [`Action::encode`] for discrete spaces (argmax).
    pub fn decode(v: &[f64], space: &ActionSpace) -> Action {
        match space {
            ActionSpace::Discrete { .. } => Action::Discrete(
                v.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &x)| if x > b.1 { (i, x) } else { b }).0,
            ),
            ActionSpace::Continuous { .. } => Action::Continuous(v.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode horizon reached. Environments have no terminal states, so
    /// value targets bootstrap through this.
    pub truncated: bool,
    /// The action had to be clipped or remapped into the declared space.
    pub clipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Semi-implicit Euler with a speed clip, as in the common benchmark.
    Euler,
    /// Fourth-order Yoshida composition of leapfrog steps, no speed clip.
    Symplectic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub g: f64,
    pub l: f64,
    pub m: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: Option<f64>,
    pub integrator: Integrator,
    pub substeps: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            g: 10.0,
            l: 1.0,
            m: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: Some(8.0),
            integrator: Integrator::Euler,
            substeps: 1,
        }
    }
}

impl PendulumParams {
    /// Zero-damping, unclipped profile for energy bookkeeping.
    pub fn conservative() -> Self {
        PendulumParams { max_speed: None, integrator: Integrator::Symplectic, substeps: 10, ..Self::default() }
    }
}

/// `θ = 0` is upright. `θ̈ = −(3g/2l)·sin(θ+π) + 3/(ml²)·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub params: PendulumParams,
    pub theta: f64,
    pub theta_dot: f64,
}

pub fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Pendulum { params, theta: PI, theta_dot: 0.0 }
    }

    pub fn obs(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    fn accel(&self, theta: f64, u: f64) -> f64 {
        let p = &self.params;
        -(3.0 * p.g / (2.0 * p.l)) * (theta + PI).sin() + 3.0 / (p.m * p.l * p.l) * u
    }

    /// `½(ml²/3)θ̇² + (mgl/2)cos θ`
    pub fn energy(&self) -> f64 {
        let p = &self.params;
        0.5 * (p.m * p.l * p.l / 3.0) * self.theta_dot * self.theta_dot + 0.5 * p.m * p.g * p.l * self.theta.cos()
    }

    /// Advances one `dt` with torque `u`; returns the reward for the step and
    /// whether `u` was clipped.
    pub fn advance(&mut self, u: f64) -> (f64, bool) {
        let p = self.params.clone();
        let uc = u.clamp(-p.max_torque, p.max_torque);
        let clipped = uc != u;
        let th = wrap_angle(self.theta);
        let reward = -(th * th + 0.1 * self.theta_dot * self.theta_dot + 0.001 * uc * uc);
        match p.integrator {
            Integrator::Euler => {
                let h = p.dt / p.substeps.max(1) as f64;
                for _ in 0..p.substeps.max(1) {
                    self.theta_dot += self.accel(self.theta, uc) * h;
                    if let Some(ms) = p.max_speed {
                        self.theta_dot = self.theta_dot.clamp(-ms, ms);
                    }
                    self.theta += self.theta_dot * h;
                }
            }
            Integrator::Symplectic => {
                // Yoshida weights for a 4th-order composition of leapfrog
                let w1 = 1.0 / (2.0 - 2f64.powf(1.0 / 3.0));
                let w0 = 1.0 - 2.0 * w1;
                let h = p.dt / p.substeps.max(1) as f64;
                for _ in 0..p.substeps.max(1) {
                    for w in [w1, w0, w1] {
                        let hh = w * h;
                        self.theta_dot += 0.5 * hh * self.accel(self.theta, uc);
                        self.theta += hh * self.theta_dot;
                        self.theta_dot += 0.5 * hh * self.accel(self.theta, uc);
                    }
                    if let Some(ms) = p.max_speed {
                        self.theta_dot = self.theta_dot.clamp(-ms, ms);
                    }
                }
            }
        }
        (reward, clipped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleEmbedding {
    /// `2s/(p−1) − 1`
    Scalar,
    Onehot,
    /// `(cos 2πs/p, sin 2πs/p)`
    Sincos,
}

/// `p` states on a cycle. Autonomous walks always advance; otherwise action
/// 0 advances and any other action stays. Reward 1 at state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleWalk {
    pub period: usize,
    pub n_actions: usize,
    pub autonomous: bool,
    pub embedding: CycleEmbedding,
}

impl CycleWalk {
    pub fn new(period: usize, n_actions: usize, autonomous: bool, embedding: CycleEmbedding) -> Result<Self> {
        if period < 2 || n_actions == 0 || (!autonomous && n_actions < 2) {
            return Err(config("cycle_walk needs period ≥ 2, and at least 2 actions when not autonomous"));
        }
        Ok(CycleWalk { period, n_actions, autonomous, embedding })
    }

    pub fn next(&self, s: usize, a: usize) -> usize {
        if self.autonomous || a == 0 {
            (s + 1) % self.period
        } else {
            s
        }
    }

    pub fn embed(&self, s: usize) -> Vec<f64> {
        let p = self.period as f64;
        match self.embedding {
            CycleEmbedding::Scalar => vec![2.0 * s as f64 / (p - 1.0) - 1.0],
            CycleEmbedding::Onehot => {
                let mut v = vec![0.0; self.period];
                v[s] = 1.0;
                v
            }
            CycleEmbedding::Sincos => {
                let t = 2.0 * std::f64::consts::PI * s as f64 / p;
                vec![t.cos(), t.sin()]
            }
        }
    }

    pub fn to_mdp(&self, gamma: f64) -> Result<TabularMdp> {
        let next: Vec<Vec<usize>> =
            (0..self.period).map(|s| (0..self.n_actions).map(|a| self.next(s, a)).collect()).collect();
        let reward = (0..self.period).map(|s| if s == 0 { 1.0 } else { 0.0 }).collect();
        let rows: Vec<Vec<f64>> = (0..self.period).map(|s| self.embed(s)).collect();
        let emb = Mat::from_rows(&rows)?;
        let mdp = TabularMdp::deterministic(&next, reward, 0, gamma, Some(emb))?;
        let mut mu = vec![1.0; self.period];
        normalize(&mut mu);
        Ok(mdp.with_initial_dist(mu)?)
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Tabular(TabularMdp),
    Cycle(CycleWalk),
    Pendulum(Pendulum),
}

/// Mutable part of an [`Env`], enough to resume it bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub t: usize,
    pub state: usize,
    pub theta: f64,
    pub theta_dot: f64,
    /// ChaCha word position, decimal.
    pub rng_word_pos: String,
}

/// An environment instance with its own random stream.
#[derive(Debug, Clone)]
pub struct Env {
    kind: Kind,
    horizon: usize,
    t: usize,
    state: usize,
    rng: rng::StreamRng,
}

impl Env {
    pub fn tabular(mdp: TabularMdp, horizon: usize, seed: u64, stream: u64) -> Self {
        Env { kind: Kind::Tabular(mdp), horizon, t: 0, state: 0, rng: rng::stream(seed, stream) }
    }

    pub fn cycle_walk(walk: CycleWalk, horizon: usize, seed: u64, stream: u64) -> Self {
        Env { kind: Kind::Cycle(walk), horizon, t: 0, state: 0, rng: rng::stream(seed, stream) }
    }

    pub fn pendulum(params: PendulumParams, horizon: usize, seed: u64, stream: u64) -> Self {
        Env { kind: Kind::Pendulum(Pendulum::new(params)), horizon, t: 0, state: 0, rng: rng::stream(seed, stream) }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            Kind::Tabular(_) => "tabular",
            Kind::Cycle(_) => "cycle_walk",
            Kind::Pendulum(_) => "pendulum",
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn obs_dim(&self) -> usize {
        match &self.kind {
            Kind::Tabular(m) => m.embedding_dim(),
            Kind::Cycle(c) => c.embed(0).len(),
            Kind::Pendulum(_) => 3,
        }
    }

    pub fn action_space(&self) -> ActionSpace {
        match &self.kind {
            Kind::Tabular(m) => ActionSpace::Discrete { n: m.n_actions() },
            Kind::Cycle(c) => ActionSpace::Discrete { n: c.n_actions },
            Kind::Pendulum(p) => ActionSpace::Continuous { dim: 1, bound: p.params.max_torque },
        }
    }

    pub fn n_states(&self) -> Option<usize> {
        match &self.kind {
            Kind::Tabular(m) => Some(m.n_states()),
            Kind::Cycle(c) => Some(c.period),
            Kind::Pendulum(_) => None,
        }
    }

    /// Current discrete state, for tabular kinds.
    pub fn state_index(&self) -> Option<usize> {
        self.n_states().map(|_| self.state)
    }

    pub fn pendulum_state(&self) -> Option<&Pendulum> {
        match &self.kind {
            Kind::Pendulum(p) => Some(p),
            _ => None,
        }
    }

    pub fn pendulum_state_mut(&mut self) -> Option<&mut Pendulum> {
        match &mut self.kind {
            Kind::Pendulum(p) => Some(p),
            _ => None,
        }
    }

    /// Exact MDP behind a tabular kind.
    pub fn mdp(&self, gamma: f64) -> Result<Option<TabularMdp>> {
        match &self.kind {
            Kind::Tabular(m) => Ok(Some(m.with_gamma(gamma)?)),
            Kind::Cycle(c) => Ok(Some(c.to_mdp(gamma)?)),
            Kind::Pendulum(_) => Ok(None),
        }
    }

    pub fn obs(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Tabular(m) => m.embed(self.state).to_vec(),
            Kind::Cycle(c) => c.embed(self.state),
            Kind::Pendulum(p) => p.obs(),
        }
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.t = 0;
        match &mut self.kind {
            Kind::Tabular(m) => self.state = rng::sample_index(&mut self.rng, m.initial_dist()),
            Kind::Cycle(c) => self.state = self.rng.gen_range(0..c.period),
            Kind::Pendulum(p) => {
                p.theta = self.rng.gen_range(-PI..PI);
                p.theta_dot = self.rng.gen_range(-1.0..1.0);
            }
        }
        self.obs()
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        let (theta, theta_dot) = self.pendulum_state().map_or((0.0, 0.0), |p| (p.theta, p.theta_dot));
        EnvSnapshot {
            t: self.t,
            state: self.state,
            theta,
            theta_dot,
            rng_word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    /// Restores a snapshot taken from an environment built the same way.
    pub fn restore(&mut self, snap: &EnvSnapshot) -> Result<()> {
        let pos: u128 = snap.rng_word_pos.parse().map_err(|_| config("bad environment rng position"))?;
        if self.n_states().is_some_and(|n| snap.state >= n) {
            return Err(config("environment state out of range"));
        }
        self.t = snap.t;
        self.state = snap.state;
        if let Some(p) = self.pendulum_state_mut() {
            p.theta = snap.theta;
            p.theta_dot = snap.theta_dot;
        }
        self.rng.set_word_pos(pos);
        Ok(())
    }

    /// Places a tabular environment in state `s`.
    pub fn set_state(&mut self, s: usize) {
        if self.n_states().is_some_and(|n| s < n) {
            self.state = s;
        }
    }

    pub fn step(&mut self, action: &Action) -> Step {
        let mut clipped = false;
        let reward = match &mut self.kind {
            Kind::Tabular(m) => {
                let na = m.n_actions();
                let a = match action {
                    Action::Discrete(a) if *a < na => *a,
                    _ => {
                        clipped = true;
                        discrete_fallback(action, na)
                    }
                };
                let r = m.reward()[self.state];
                self.state = rng::sample_index(&mut self.rng, m.next_dist(self.state, a));
                r
            }
            Kind::Cycle(c) => {
                let a = match action {
                    Action::Discrete(a) if *a < c.n_actions => *a,
                    _ => {
                        clipped = true;
                        discrete_fallback(action, c.n_actions)
                    }
                };
                let r = if self.state == 0 { 1.0 } else { 0.0 };
                self.state = c.next(self.state, a);
                r
            }
            Kind::Pendulum(p) => {
                let u = match action {
                    Action::Continuous(v) if !v.is_empty() && v[0].is_finite() => v[0],
                    _ => {
                        clipped = true;
                        0.0
                    }
                };
                let (r, c) = p.advance(u);
                clipped |= c;
                r
            }
        };
        self.t += 1;
        Step { obs: self.obs(), reward, truncated: self.t >= self.horizon, clipped }
    }
}

fn discrete_fallback(action: &Action, n: usize) -> usize {
    match action {
        Action::Discrete(a) => (*a).min(n - 1),
        Action::Continuous(v) => v.first().map_or(0, |x| (x.round().max(0.0) as usize).min(n - 1)),
    }
}
