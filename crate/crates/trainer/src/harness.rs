//! Tabular harness: one-hot states, an outer-product pair encoder and linear
//! predictor heads, so the learned map can represent any DTFT field exactly.
//! Training uses the frozen `fixed` agent and is compared against the exact
//! field of its action table.

use rand::Rng;
use serde::Serialize;
use spf_core::dtft::{solve_dtft_direct, DtftConfig, DtftField, DtftMatrix};
use spf_core::mdp::{TabularMdp, TabularPolicy};
use spf_core::rng::stream;
use spf_nn::Activation;

use crate::agents::{AgentConfig, AgentKind};
use crate::config::{AuxConfig, EnvConfig, Profile, Schedule, TrainConfig};
use crate::error::Result;
use crate::freqloss::{Distance, FreqlossConfig};
use crate::nets::{EncoderKind, NetConfig, ProjectionKind, SpfNetworks, Which};
use crate::train::Trainer;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessSpec {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub l: usize,
    pub distance: Distance,
    /// Auxiliary updates after the random-collection phase.
    pub updates: u64,
    pub lr: f64,
    pub lr_final: Option<f64>,
    pub batch_size: usize,
    pub target_interval: u64,
    pub tau: f64,
}

impl Default for HarnessSpec {
    fn default() -> Self {
        HarnessSpec {
            seed: 0,
            n_states: 5,
            n_actions: 2,
            gamma: 0.9,
            l: 16,
            distance: Distance::SquaredError,
            updates: 20_000,
            lr: 1e-2,
            lr_final: Some(0.0),
            batch_size: 32,
            target_interval: 1,
            tau: 1.0,
        }
    }
}

/// Deterministic successor table and a random action table, both from `seed`.
pub fn harness_mdp(spec: &HarnessSpec) -> Result<(TabularMdp, Vec<usize>)> {
    let mut rng = stream(spec.seed, 0x4841);
    let next: Vec<Vec<usize>> =
        (0..spec.n_states).map(|_| (0..spec.n_actions).map(|_| rng.gen_range(0..spec.n_states)).collect()).collect();
    let reward = vec![0.0; spec.n_states];
    let mdp = TabularMdp::deterministic(&next, reward, 0, spec.gamma, None)?;
    let mut mu = vec![1.0 / spec.n_states as f64; spec.n_states];
    spf_core::mdp::normalize(&mut mu);
    let mdp = mdp.with_initial_dist(mu)?;
    let table = (0..spec.n_states).map(|_| rng.gen_range(0..spec.n_actions)).collect();
    Ok((mdp, table))
}

pub fn harness_net(n_states: usize, n_actions: usize, l: usize) -> NetConfig {
    NetConfig {
        obs_dim: n_states,
        action_dim: n_actions,
        l,
        encoder_s: EncoderKind::Identity,
        encoder_sa: EncoderKind::Outer,
        encoder_blocks: 0,
        encoder_growth: 0,
        activation: Activation::Identity,
        predictor_hidden: vec![],
        predictor_activation: Activation::Identity,
        projection: ProjectionKind::Identity,
        projection_hidden: 0,
        projection_dim: 0,
        projection2_identity_init: false,
        k_lo: 2,
        k_hi: 2,
        zero_init_heads: true,
    }
}

pub fn harness_config(spec: &HarnessSpec) -> Result<TrainConfig> {
    let (mdp, table) = harness_mdp(spec)?;
    let net = harness_net(spec.n_states, spec.n_actions, spec.l);
    let random_steps = 10 * spec.batch_size as u64;
    Ok(TrainConfig {
        profile: Profile::Desk,
        seed: spec.seed,
        gamma: spec.gamma,
        horizon: 4 * spec.n_states,
        env: EnvConfig::Tabular { mdp },
        agent: AgentConfig { kind: AgentKind::Fixed, table, ..AgentConfig::default() },
        freqloss: FreqlossConfig {
            k_lo: net.k_lo,
            k_hi: net.k_hi,
            distance: spec.distance,
            ..FreqlossConfig::default()
        },
        net,
        aux: AuxConfig {
            lr: spec.lr,
            lr_final: spec.lr_final,
            batch_size: spec.batch_size,
            tau: spec.tau,
            target_interval: spec.target_interval,
        },
        schedule: Schedule {
            total_steps: random_steps + spec.updates,
            random_steps,
            pretrain_steps: 0,
            buffer_size: 4096,
            eval_interval: 0,
            eval_episodes: 0,
            checkpoint_interval: 0,
        },
    })
}

/// Exact field of the action table on the harness MDP.
pub fn exact_field(config: &TrainConfig) -> Result<DtftField> {
    let EnvConfig::Tabular { mdp } = &config.env else {
        return Err(crate::error::invalid("the harness needs a tabular environment"));
    };
    let policy = TabularPolicy::deterministic(&config.agent.table, mdp.n_actions())?;
    let cfg = DtftConfig::new(config.net.l, mdp.embedding_dim(), config.gamma, true)?;
    Ok(solve_dtft_direct(mdp, &policy, cfg)?)
}

/// Online predictions at every one-hot (state, action) pair.
pub fn learned_field(nets: &SpfNetworks, mdp: &TabularMdp, gamma: f64) -> Result<DtftField> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let dim = mdp.embedding_dim();
    let mut obs = Vec::with_capacity(ns * na * dim);
    let mut act = vec![0.0; ns * na * na];
    for s in 0..ns {
        for a in 0..na {
            obs.extend_from_slice(mdp.embed(s));
            act[(s * na + a) * na + a] = 1.0;
        }
    }
    let (re, im) = nets.predict_dtft(Which::Online, &obs, &act, ns * na)?;
    let cfg = DtftConfig::new(nets.config.l, dim, gamma, true)?;
    let w = cfg.stored_bins() * dim;
    let entries = (0..ns * na)
        .map(|i| DtftMatrix::from_parts(cfg.l, dim, true, &re[i * w..(i + 1) * w], &im[i * w..(i + 1) * w]))
        .collect::<spf_core::Result<Vec<_>>>()?;
    Ok(DtftField::from_entries(cfg, ns, na, entries)?)
}

/// Largest `‖x/‖x‖ − y/‖y‖‖₂` over pairs, real and imaginary stacks and the
/// three loss bands: the part of the error a cosine loss can see.
pub fn directional_error(pred: &DtftField, exact: &DtftField, k_lo: usize, k_hi: usize) -> f64 {
    let bins = exact.config().stored_bins();
    let mut worst: f64 = 0.0;
    for (p, e) in pred.entries().iter().zip(exact.entries()) {
        for band in [(0, k_lo), (k_lo, bins - k_hi), (bins - k_hi, bins)] {
            for part in 0..2 {
                let pick = |m: &DtftMatrix| -> Vec<f64> {
                    (band.0..band.1)
                        .flat_map(|k| m.row(k).iter().map(move |z| if part == 0 { z.re } else { z.im }))
                        .collect()
                };
                let (x, y) = (pick(p), pick(e));
                let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if ny < 1e-12 {
                    // a zero target stack has no direction to match
                    continue;
                }
                let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let d = x.iter().zip(&y).map(|(a, b)| (a / nx - b / ny).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(d);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarnessReport {
    /// `sup_{s,a} max_k ‖F̂ − F‖₂`
    pub sup_error: f64,
    /// `sup_error / ‖F‖`
    pub relative_error: f64,
    pub directional_error: f64,
    pub updates: u64,
    pub first_loss: f64,
    pub last_loss: f64,
}

pub fn run_harness(spec: &HarnessSpec) -> Result<(HarnessReport, Trainer)> {
    let config = harness_config(spec)?;
    let exact = exact_field(&config)?;
    let mut tr = Trainer::new(config)?;
    tr.run_to_end()?;
    let EnvConfig::Tabular { mdp } = &tr.config.env else { unreachable!() };
    let learned = learned_field(&tr.nets, mdp, tr.config.gamma)?;
    let sup_error = learned.distance(&exact);
    let trace = tr.loss_trace();
    let report = HarnessReport {
        sup_error,
        relative_error: sup_error / exact.norm(),
        directional_error: directional_error(&learned, &exact, tr.config.net.k_lo, tr.config.net.k_hi),
        updates: tr.aux_updates,
        first_loss: trace.first().copied().unwrap_or(f64::NAN),
        last_loss: trace.last().copied().unwrap_or(f64::NAN),
    };
    Ok((report, tr))
}
