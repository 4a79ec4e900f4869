//! Prediction loss over the stored DTFT bins: the lowest `k_lo` and highest
//! `k_hi` bins are compared raw, the middle bins after projection. Real and
//! imaginary stacks are scored separately and summed.

use serde::{Deserialize, Serialize};
use spf_nn::{Tape, Var};

use crate::error::{config, Result};
use crate::nets::{SpfNetworks, Which};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// `1 − ⟨x,y⟩/(‖x‖‖y‖ + ε)`
    OneMinusCosine,
    /// `‖x − y‖²`
    SquaredError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqlossConfig {
    pub k_lo: usize,
    pub k_hi: usize,
    pub distance: Distance,
    pub w_lo: f64,
    pub w_mid: f64,
    pub w_hi: f64,
    pub eps: f64,
}

impl Default for FreqlossConfig {
    fn default() -> Self {
        FreqlossConfig {
            k_lo: 8,
            k_hi: 8,
            distance: Distance::OneMinusCosine,
            w_lo: 1.0,
            w_mid: 1.0,
            w_hi: 1.0,
            eps: 1e-8,
        }
    }
}

impl FreqlossConfig {
    pub fn validate(&self, stored_bins: usize) -> Result<()> {
        if self.k_lo + self.k_hi >= stored_bins {
            return Err(config(format!("k_lo + k_hi must be below the {stored_bins} stored bins")));
        }
        if !(self.w_lo > 0.0 && self.w_mid > 0.0 && self.w_hi > 0.0) {
            return Err(config("freqloss weights must be positive"));
        }
        if !(self.eps > 0.0) {
            return Err(config("freqloss eps must be positive"));
        }
        Ok(())
    }
}

/// Loss handle plus the batch-mean value of each term.
#[derive(Debug, Clone, Copy)]
pub struct FreqlossTerms {
    pub total: Var,
    pub lo: f64,
    pub mid: f64,
    pub hi: f64,
}

fn distance(tape: &mut Tape, x: Var, y: Var, cfg: &FreqlossConfig) -> Result<Var> {
    let per_row = match cfg.distance {
        Distance::OneMinusCosine => tape.cosine_distance(x, y, cfg.eps)?,
        Distance::SquaredError => {
            let d = tape.sub(x, y)?;
            let d = tape.square(d);
            tape.sum_cols(d)
        }
    };
    Ok(tape.mean(per_row))
}

/// `w_lo·d(lo) + w_mid·d(projection2(ψ(mid)), ψ̂(mid̂)) + w_hi·d(hi)`, each
/// summed over the real and imaginary stacks. The target side goes through
/// the target projection only and is detached.
pub fn freqloss(
    tape: &mut Tape,
    nets: &SpfNetworks,
    pred_re: Var,
    pred_im: Var,
    target_re: Var,
    target_im: Var,
    cfg: &FreqlossConfig,
) -> Result<FreqlossTerms> {
    let nc = &nets.config;
    let bins = nc.bins();
    cfg.validate(bins)?;
    if cfg.k_lo != nc.k_lo || cfg.k_hi != nc.k_hi {
        return Err(config("freqloss split does not match the projection input"));
    }
    let d = nc.obs_dim;
    let (lo_end, hi_start) = (cfg.k_lo * d, (bins - cfg.k_hi) * d);
    let width = bins * d;

    let term = |tape: &mut Tape, range: (usize, usize), projected: bool| -> Result<Option<Var>> {
        if range.0 == range.1 {
            return Ok(None);
        }
        let mut acc: Option<Var> = None;
        for (p, t) in [(pred_re, target_re), (pred_im, target_im)] {
            let ps = tape.slice_cols(p, range.0, range.1)?;
            let ts = tape.slice_cols(t, range.0, range.1)?;
            let ts = tape.detach(ts);
            let (x, y) = if projected {
                let x = nets.project(tape, Which::Online, ps)?;
                let x = nets.project2(tape, x)?;
                let y = nets.project(tape, Which::Target, ts)?;
                (x, tape.detach(y))
            } else {
                (ps, ts)
            };
            let v = distance(tape, x, y, cfg)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, v)?,
                None => v,
            });
        }
        Ok(acc)
    };

    let lo = term(tape, (0, lo_end), false)?;
    let mid = term(tape, (lo_end, hi_start), true)?;
    let hi = term(tape, (hi_start, width), false)?;
    let value = |tape: &Tape, v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v));
    let (lo_v, mid_v, hi_v) = (value(tape, lo), value(tape, mid), value(tape, hi));

    let mut total: Option<Var> = None;
    for (v, w) in [(lo, cfg.w_lo), (mid, cfg.w_mid), (hi, cfg.w_hi)] {
        if let Some(v) = v {
            let s = tape.scale(v, w);
            total = Some(match total {
                Some(t) => tape.add(t, s)?,
                None => s,
            });
        }
    }
    let total = total.expect("the middle band is never empty");
    Ok(FreqlossTerms { total, lo: lo_v, mid: mid_v, hi: hi_v })
}
