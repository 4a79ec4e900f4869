//! Online and target copies of the state encoder `φ_s`, the state-action
//! encoder `φ_{s,a}`, the two-headed DTFT predictor and the projections.

use rand::Rng;
use serde::{Deserialize, Serialize};
use spf_core::dtft::{DtftConfig, GammaDiagonal};
use spf_nn::layers::{densenet, forward, init_params, mlp};
use spf_nn::{Activation, LayerSpec, ParamTree, Tape, Var};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Representation is the raw input.
    Identity,
    Densenet,
    /// State-action only: row-wise `s̄ ⊗ a`, which one-hot inputs turn into a
    /// one-hot of the pair.
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Identity,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    /// DTFT points per period; the predictor emits `L/2 + 1` bins.
    pub l: usize,
    pub encoder_s: EncoderKind,
    pub encoder_sa: EncoderKind,
    pub encoder_blocks: usize,
    pub encoder_growth: usize,
    pub activation: Activation,
    /// Hidden widths of the shared predictor trunk; empty means linear heads.
    pub predictor_hidden: Vec<usize>,
    pub predictor_activation: Activation,
    pub projection: ProjectionKind,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    /// Start projection2 as an exact identity: hidden `relu([x; −x])`,
    /// output `h₁ − h₂`. Needs `projection_hidden ≥ 2·projection_dim`.
    pub projection2_identity_init: bool,
    pub k_lo: usize,
    pub k_hi: usize,
    /// Start both predictor heads at zero.
    pub zero_init_heads: bool,
}

impl NetConfig {
    pub fn bins(&self) -> usize {
        self.l / 2 + 1
    }

    pub fn head_width(&self) -> usize {
        self.bins() * self.obs_dim
    }

    pub fn mid_bins(&self) -> usize {
        self.bins() - self.k_lo - self.k_hi
    }

    pub fn rep_s_width(&self) -> usize {
        match self.encoder_s {
            EncoderKind::Densenet => self.obs_dim + self.encoder_blocks * self.encoder_growth,
            _ => self.obs_dim,
        }
    }

    pub fn rep_sa_width(&self) -> usize {
        let input = self.rep_s_width() + self.action_dim;
        match self.encoder_sa {
            EncoderKind::Densenet => input + self.encoder_blocks * self.encoder_growth,
            EncoderKind::Identity => input,
            EncoderKind::Outer => self.rep_s_width() * self.action_dim,
        }
    }

    pub fn projected_width(&self) -> usize {
        match self.projection {
            ProjectionKind::Identity => self.mid_bins() * self.obs_dim,
            ProjectionKind::Mlp => self.projection_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 || !self.l.is_multiple_of(2) {
            return Err(config("spf.l must be even and at least 2"));
        }
        if self.obs_dim == 0 || self.action_dim == 0 {
            return Err(config("observation and action widths must be positive"));
        }
        if self.k_lo + self.k_hi >= self.bins() {
            return Err(config(format!("freqloss.k_lo + freqloss.k_hi must be below the {} stored bins", self.bins())));
        }
        if self.encoder_s == EncoderKind::Outer {
            return Err(config("spf.encoder_s cannot be \"outer\""));
        }
        if (self.encoder_s == EncoderKind::Densenet || self.encoder_sa == EncoderKind::Densenet)
            && (self.encoder_blocks == 0 || self.encoder_growth == 0)
        {
            return Err(config("densenet encoders need blocks and growth above zero"));
        }
        if self.projection == ProjectionKind::Mlp && (self.projection_dim == 0 || self.projection_hidden == 0) {
            return Err(config("projection widths must be positive"));
        }
        if self.projection == ProjectionKind::Mlp
            && self.projection2_identity_init
            && self.projection_hidden < 2 * self.projection_dim
        {
            return Err(config("identity-initialized projection2 needs projection_hidden ≥ 2·projection_dim"));
        }
        Ok(())
    }

    fn encoder_s_specs(&self) -> Vec<LayerSpec> {
        match self.encoder_s {
            EncoderKind::Densenet => densenet(self.obs_dim, self.encoder_blocks, self.encoder_growth, self.activation),
            _ => vec![],
        }
    }

    fn encoder_sa_specs(&self) -> Vec<LayerSpec> {
        match self.encoder_sa {
            EncoderKind::Densenet => densenet(
                self.rep_s_width() + self.action_dim,
                self.encoder_blocks,
                self.encoder_growth,
                self.activation,
            ),
            _ => vec![],
        }
    }

    fn trunk_specs(&self) -> Vec<LayerSpec> {
        let mut w = vec![self.rep_sa_width()];
        w.extend(&self.predictor_hidden);
        if w.len() == 1 {
            return vec![];
        }
        mlp(&w, self.predictor_activation, self.predictor_activation)
    }

    fn head_specs(&self) -> Vec<LayerSpec> {
        let input = self.predictor_hidden.last().copied().unwrap_or(self.rep_sa_width());
        mlp(&[input, self.head_width()], Activation::Identity, Activation::Identity)
    }

    fn projection_specs(&self) -> Vec<LayerSpec> {
        match self.projection {
            ProjectionKind::Identity => vec![],
            ProjectionKind::Mlp => mlp(
                &[self.mid_bins() * self.obs_dim, self.projection_hidden, self.projection_dim],
                Activation::Relu,
                Activation::Identity,
            ),
        }
    }

    fn projection2_specs(&self) -> Vec<LayerSpec> {
        match self.projection {
            ProjectionKind::Identity => vec![],
            ProjectionKind::Mlp => mlp(
                &[self.projection_dim, self.projection_hidden, self.projection_dim],
                Activation::Relu,
                Activation::Identity,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Online,
    Target,
}

impl Which {
    pub fn label(self) -> &'static str {
        match self {
            Which::Online => "online",
            Which::Target => "target",
        }
    }
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub rep_s: Var,
    pub rep_sa: Var,
    pub re: Var,
    pub im: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpfNetworks {
    pub config: NetConfig,
    pub online: ParamTree,
    pub target: ParamTree,
}

impl SpfNetworks {
    pub fn new<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut p = ParamTree::new();
        init_params(&config.encoder_s_specs(), "encoder_s", rng, false, &mut p)?;
        init_params(&config.encoder_sa_specs(), "encoder_sa", rng, false, &mut p)?;
        init_params(&config.trunk_specs(), "predictor/trunk", rng, false, &mut p)?;
        init_params(&config.head_specs(), "predictor/head_re", rng, config.zero_init_heads, &mut p)?;
        init_params(&config.head_specs(), "predictor/head_im", rng, config.zero_init_heads, &mut p)?;
        init_params(&config.projection_specs(), "projection", rng, false, &mut p)?;
        init_params(&config.projection2_specs(), "projection2", rng, false, &mut p)?;
        if config.projection2_identity_init && config.projection == ProjectionKind::Mlp {
            let (d, h) = (config.projection_dim, config.projection_hidden);
            let w1 = p.get_mut("projection2/layer0/weight").expect("projection2 exists").data_mut();
            w1.fill(0.0);
            for i in 0..d {
                w1[i * h + i] = 1.0;
                w1[i * h + d + i] = -1.0;
            }
            let w2 = p.get_mut("projection2/layer1/weight").expect("projection2 exists").data_mut();
            w2.fill(0.0);
            for i in 0..d {
                w2[i * d + i] = 1.0;
                w2[(d + i) * d + i] = -1.0;
            }
        }
        Ok(SpfNetworks { config, target: p.clone(), online: p })
    }

    pub fn tree(&self, which: Which) -> &ParamTree {
        match which {
            Which::Online => &self.online,
            Which::Target => &self.target,
        }
    }

    /// `s̄ = φ_s(obs)`
    pub fn encode_state(&self, tape: &mut Tape, which: Which, obs: Var) -> Result<Var> {
        Ok(forward(&self.config.encoder_s_specs(), which.label(), self.tree(which), "encoder_s", obs, tape)?)
    }

    /// `z = φ_{s,a}(s̄, a)`
    pub fn encode_pair(&self, tape: &mut Tape, which: Which, rep_s: Var, action: Var) -> Result<Var> {
        match self.config.encoder_sa {
            EncoderKind::Outer => Ok(tape.outer(rep_s, action)?),
            _ => {
                let x = tape.concat(rep_s, action)?;
                Ok(forward(&self.config.encoder_sa_specs(), which.label(), self.tree(which), "encoder_sa", x, tape)?)
            }
        }
    }

    /// `(F_Re, F_Im)` from a joint representation, each `batch × (L/2+1)·D`
    /// with bin-major columns.
    pub fn predict_from_pair(&self, tape: &mut Tape, which: Which, rep_sa: Var) -> Result<(Var, Var)> {
        let (label, tree) = (which.label(), self.tree(which));
        let h = forward(&self.config.trunk_specs(), label, tree, "predictor/trunk", rep_sa, tape)?;
        let heads = self.config.head_specs();
        let re = forward(&heads, label, tree, "predictor/head_re", h, tape)?;
        let im = forward(&heads, label, tree, "predictor/head_im", h, tape)?;
        Ok((re, im))
    }

    pub fn forward(&self, tape: &mut Tape, which: Which, obs: Var, action: Var) -> Result<Prediction> {
        let rep_s = self.encode_state(tape, which, obs)?;
        let rep_sa = self.encode_pair(tape, which, rep_s, action)?;
        let (re, im) = self.predict_from_pair(tape, which, rep_sa)?;
        Ok(Prediction { rep_s, rep_sa, re, im })
    }

    /// `ψ` (online or target) on the middle bins.
    pub fn project(&self, tape: &mut Tape, which: Which, mid: Var) -> Result<Var> {
        let specs = self.config.projection_specs();
        Ok(forward(&specs, which.label(), self.tree(which), "projection", mid, tape)?)
    }

    /// Projection2, online only.
    pub fn project2(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let specs = self.config.projection2_specs();
        Ok(forward(&specs, "online", &self.online, "projection2", x, tape)?)
    }

    /// `s̄` values for a batch, off any tape.
    pub fn encode_state_values(&self, which: Which, obs: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let o = tape.constant(batch, self.config.obs_dim, obs.to_vec())?;
        let r = self.encode_state(&mut tape, which, o)?;
        Ok(tape.value(r).to_vec())
    }

    /// `z_{s,a}` values for a batch of `s̄` rows, off any tape.
    pub fn encode_pair_values(&self, which: Which, rep_s: &[f64], action: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let r = tape.constant(batch, self.config.rep_s_width(), rep_s.to_vec())?;
        let a = tape.constant(batch, self.config.action_dim, action.to_vec())?;
        let z = self.encode_pair(&mut tape, which, r, a)?;
        Ok(tape.value(z).to_vec())
    }

    /// Plain-value prediction for a batch.
    pub fn predict_dtft(
        &self,
        which: Which,
        obs: &[f64],
        action: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let o = tape.constant(batch, self.config.obs_dim, obs.to_vec())?;
        let a = tape.constant(batch, self.config.action_dim, action.to_vec())?;
        let p = self.forward(&mut tape, which, o, a)?;
        Ok((tape.value(p.re).to_vec(), tape.value(p.im).to_vec()))
    }

    /// Bootstrapped target from target networks at `(s', a')`:
    /// `Re = S̃ + Γ_Re⊙F̂_Re − Γ_Im⊙F̂_Im`, `Im = Γ_Im⊙F̂_Re + Γ_Re⊙F̂_Im`,
    /// with every bin of `S̃` equal to the raw `s'` embedding.
    pub fn build_td_target(
        &self,
        next_obs: &[f64],
        next_action: &[f64],
        batch: usize,
        gamma: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let (fre, fim) = self.predict_dtft(Which::Target, next_obs, next_action, batch)?;
        Ok(td_combine(&fre, &fim, next_obs, batch, self.config.obs_dim, self.config.l, gamma)?)
    }
}

/// The bootstrap arithmetic of [`SpfNetworks::build_td_target`] on given
/// predictions `F̂`.
pub fn td_combine(
    fre: &[f64],
    fim: &[f64],
    next_obs: &[f64],
    batch: usize,
    dim: usize,
    l: usize,
    gamma: f64,
) -> spf_core::Result<(Vec<f64>, Vec<f64>)> {
    let cfg = DtftConfig::new(l, dim, gamma, true)?;
    let g = GammaDiagonal::new(&cfg);
    let bins = cfg.stored_bins();
    let w = bins * dim;
    let mut re = vec![0.0; batch * w];
    let mut im = vec![0.0; batch * w];
    for b in 0..batch {
        let s = &next_obs[b * dim..(b + 1) * dim];
        for k in 0..bins {
            let gk = g.entries()[k];
            for d in 0..dim {
                let i = b * w + k * dim + d;
                re[i] = s[d] + gk.re * fre[i] - gk.im * fim[i];
                im[i] = gk.im * fre[i] + gk.re * fim[i];
            }
        }
    }
    Ok((re, im))
}
