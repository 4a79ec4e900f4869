use std::path::Path;

use spf_core::dtft::{aliasing_bound, recover_state, solve_dtft_direct, DtftConfig, DtftField};
use spf_core::mdp::{induced_chain, TabularMdp, TabularPolicy};
use spf_nn::checkpoint::Checkpoint;
use spf_trainer::config::parse_train_config;
use spf_trainer::harness::learned_field;
use spf_trainer::train::Trainer;

use super::{num, overrides, profile_name};
use crate::error::{CliError, Result};
use crate::out::{OutDir, RunManifest};
use crate::svg::{line_plot, Series};
use crate::{Input, RecoverArgs};

/// Exact field residue is rounding only; anything above this is a bug.
const EXACT_IMAG_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub source: &'static str,
    pub k: usize,
    pub state: usize,
    pub action: usize,
    pub dim: usize,
    pub truth: f64,
    pub recovered: f64,
}

impl RecoveryRow {
    pub fn abs_error(&self) -> f64 {
        (self.truth - self.recovered).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub source: &'static str,
    pub k: usize,
    pub mean_error: f64,
    pub max_error: f64,
    pub aliasing: bool,
}

/// Greedy action per state under the agent's prediction-target policy.
fn target_policy(tr: &Trainer, n_states: usize) -> Result<TabularPolicy> {
    let states: Vec<Option<usize>> = (0..n_states).map(Some).collect();
    let enc = tr.agent.target_actions(&states, &[], &tr.space)?;
    let na = tr.space.encoded_dim();
    let actions: Vec<usize> =
        enc.chunks(na).map(|row| row.iter().enumerate().fold(0, |b, (i, &v)| if v > row[b] { i } else { b })).collect();
    Ok(TabularPolicy::deterministic(&actions, na)?)
}

/// `E[φ(s_{t+k}) | s_t = s, a_t = a]` for k = 1..=k_max, indexed `[k-1][s*na+a]`.
fn true_embeddings(mdp: &TabularMdp, policy: &TabularPolicy, k_max: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let chain = induced_chain(mdp, policy)?;
    let (ns, na, d) = (mdp.n_states(), mdp.n_actions(), mdp.embedding_dim());
    let mut dists: Vec<Vec<f64>> =
        (0..ns).flat_map(|s| (0..na).map(move |a| (s, a))).map(|(s, a)| mdp.next_dist(s, a).to_vec()).collect();
    let mut out = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        out.push(
            dists
                .iter()
                .map(|p| {
                    let mut e = vec![0.0; d];
                    for (s, &ps) in p.iter().enumerate() {
                        for (o, &x) in e.iter_mut().zip(mdp.embed(s)) {
                            *o += ps * x;
                        }
                    }
                    e
                })
                .collect(),
        );
        dists = dists
            .iter()
            .map(|p| {
                let mut q = vec![0.0; ns];
                for (i, &pi) in p.iter().enumerate() {
                    for (o, &m) in q.iter_mut().zip(chain.row(i)) {
                        *o += pi * m;
                    }
                }
                q
            })
            .collect();
    }
    Ok(out)
}

fn recover_all(
    source: &'static str,
    field: &DtftField,
    truth: &[Vec<Vec<f64>>],
    imag_tol: f64,
) -> Result<(Vec<RecoveryRow>, Vec<Summary>)> {
    let (ns, na) = (field.n_states(), field.n_actions());
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (ki, tk) in truth.iter().enumerate() {
        let k = ki + 1;
        let mut errs = Vec::new();
        let mut aliasing = false;
        for s in 0..ns {
            for a in 0..na {
                let r = recover_state(field, s, a, k, imag_tol)?;
                aliasing |= r.aliasing;
                for (dim, (&t, &x)) in tk[s * na + a].iter().zip(&r.state).enumerate() {
                    let row = RecoveryRow { source, k, state: s, action: a, dim, truth: t, recovered: x };
                    errs.push(row.abs_error());
                    rows.push(row);
                }
            }
        }
        let mean_error = errs.iter().sum::<f64>() / errs.len().max(1) as f64;
        let max_error = errs.iter().copied().fold(0.0, f64::max);
        summary.push(Summary { source, k, mean_error, max_error, aliasing });
    }
    Ok((rows, summary))
}

fn rows_csv(rows: &[RecoveryRow]) -> String {
    let mut s = String::from("source,k,state,action,dim,true,recovered,abs_error\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.source,
            r.k,
            r.state,
            r.action,
            r.dim,
            num(r.truth),
            num(r.recovered),
            num(r.abs_error())
        ));
    }
    s
}

fn summary_csv(rows: &[Summary]) -> String {
    let mut s = String::from("source,k,mean_error,max_error,aliasing\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.source, r.k, num(r.mean_error), num(r.max_error), r.aliasing));
    }
    s
}

pub fn run(args: &RecoverArgs, input: &Input, out: &Path) -> Result<RunManifest> {
    let c = &args.common;
    if args.k_max == 0 {
        return Err(CliError::config("--k-max must be at least 1"));
    }
    let config = parse_train_config(&input.text, overrides(c))?;
    let ck = match &args.checkpoint {
        Some(stem) => Some(Checkpoint::load(stem)?),
        None => None,
    };
    let tr = match &ck {
        Some(ck) => Trainer::from_checkpoint(config.clone(), ck)?,
        None => Trainer::new(config.clone())?,
    };
    let Some(mdp) = tr.env.mdp(config.gamma)? else {
        return Err(CliError::config("recover needs a tabular or cycle_walk environment"));
    };
    let policy = target_policy(&tr, mdp.n_states())?;
    let l = config.net.l;
    let exact = solve_dtft_direct(&mdp, &policy, DtftConfig::new(l, mdp.embedding_dim(), config.gamma, true)?)?;
    let truth = true_embeddings(&mdp, &policy, args.k_max)?;

    let (mut rows, mut summary) = recover_all("exact", &exact, &truth, EXACT_IMAG_TOL)?;
    if ck.is_some() {
        let learned = learned_field(&tr.nets, &mdp, config.gamma)?;
        let (r, s) = recover_all("learned", &learned, &truth, f64::INFINITY)?;
        rows.extend(r);
        summary.extend(s);
    }
    let phi_max = mdp.embedding().as_slice().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let bound = aliasing_bound(config.gamma, l, phi_max);

    let mut manifest = RunManifest::new("recover", &input.path, &input.bytes);
    manifest.seed = Some(config.seed);
    manifest.profile = Some(profile_name(config.profile));
    if args.k_max > l {
        manifest
            .warnings
            .push(format!("k up to {} exceeds L = {l}: offsets with k - 1 >= L alias onto earlier ones", args.k_max));
    }
    manifest.details = serde_json::json!({
        "l": l,
        "k_max": args.k_max,
        "aliasing_bound": bound,
        "checkpoint_step": ck.as_ref().map(|c| c.step),
        "sources": summary.iter().map(|s| s.source).collect::<std::collections::BTreeSet<_>>(),
    });

    let mut dir = OutDir::create(out)?;
    dir.write("recovery.csv", rows_csv(&rows).as_bytes())?;
    dir.write("recovery_summary.csv", summary_csv(&summary).as_bytes())?;
    let series: Vec<Series> = ["exact", "learned"]
        .iter()
        .filter(|src| summary.iter().any(|s| s.source == **src))
        .map(|src| {
            let pts = summary.iter().filter(|s| s.source == *src).map(|s| (s.k as f64, s.max_error)).collect();
            Series::new(format!("{src} max error"), pts)
        })
        .collect();
    dir.write("recovery_error.svg", line_plot("Recovery error", "k", "max abs error", &series).as_bytes())?;
    manifest.finish(&mut dir)
}
