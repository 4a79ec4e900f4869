use std::path::Path;

use serde::{Deserialize, Serialize};
use spf_core::config::{build_policy, config_error, MdpSection, PolicySection};
use spf_core::dtft::{
    a_priori_iterations, apply_bellman_dtft, solve_dtft_direct, solve_dtft_fixed_point, DtftConfig, DtftField,
};
use toml::Spanned;

use super::{num, parse};
use crate::error::{CliError, Result};
use crate::out::{OutDir, RunManifest};
use crate::{Common, Input};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    mdp: MdpSection,
    policy: Option<PolicySection>,
    dtft: Option<Section>,
    /// Read by analyze-mdp; accepted so one file can drive both commands.
    #[serde(rename = "analysis")]
    _analysis: Option<serde::de::IgnoredAny>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Section {
    l: Option<Spanned<usize>>,
    method: Option<Spanned<String>>,
    tol: Option<Spanned<f64>>,
    max_iter: Option<Spanned<usize>>,
    half_spectrum: Option<bool>,
}

#[derive(Debug, Serialize)]
pub struct Convergence {
    pub method: String,
    pub l: usize,
    pub half_spectrum: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// `‖𝒯F − F‖` of the returned field.
    pub residual: f64,
}

pub fn field_csv(field: &DtftField) -> String {
    let mut s = String::from("state,action,bin,dim,re,im\n");
    for st in 0..field.n_states() {
        for a in 0..field.n_actions() {
            let m = field.get(st, a);
            for k in 0..m.bins() {
                for (d, z) in m.row(k).iter().enumerate() {
                    s.push_str(&format!("{st},{a},{k},{d},{},{}\n", num(z.re), num(z.im)));
                }
            }
        }
    }
    s
}

pub fn run(c: &Common, input: &Input, out: &Path) -> Result<RunManifest> {
    let src = &input.text;
    let doc: Doc = parse(src)?;
    let mdp = doc.mdp.build(src)?;
    let policy = build_policy(src, doc.policy.as_ref(), &mdp)?;
    let sec = doc.dtft.unwrap_or_default();
    let span = |f: &Option<Spanned<usize>>| f.as_ref().map(Spanned::span);
    let l = sec.l.as_ref().map_or(16, |v| *v.get_ref());
    let half = sec.half_spectrum.unwrap_or(true);
    let cfg = DtftConfig::new(l, mdp.embedding_dim(), mdp.gamma(), half)
        .map_err(|e| config_error(src, span(&sec.l), "dtft.l", e))?;
    let tol = sec.tol.as_ref().map_or(1e-12, |v| *v.get_ref());
    if !(tol > 0.0) {
        return Err(config_error(src, sec.tol.as_ref().map(Spanned::span), "dtft.tol", "must be positive").into());
    }
    let max_iter = sec.max_iter.as_ref().map_or_else(|| a_priori_iterations(&mdp, tol).max(1), |v| *v.get_ref());
    let method = sec.method.as_ref().map_or("fixed_point", |m| m.get_ref().as_str()).to_string();

    let (field, report) = match method.as_str() {
        "fixed_point" => {
            let sol = solve_dtft_fixed_point(&mdp, &policy, cfg, tol, max_iter)?;
            let r = Convergence {
                method: method.clone(),
                l,
                half_spectrum: half,
                tol,
                max_iter,
                iterations: sol.iterations,
                converged: sol.converged,
                final_delta: sol.final_delta,
                residual: sol.residual,
            };
            (sol.field, r)
        }
        "direct" => {
            let field = solve_dtft_direct(&mdp, &policy, cfg)?;
            let residual = apply_bellman_dtft(&field, &mdp, &policy)?.distance(&field);
            let r = Convergence {
                method: method.clone(),
                l,
                half_spectrum: half,
                tol,
                max_iter,
                iterations: 0,
                converged: residual <= tol.max(1e-9),
                final_delta: 0.0,
                residual,
            };
            (field, r)
        }
        other => {
            return Err(config_error(
                src,
                sec.method.as_ref().map(Spanned::span),
                "dtft.method",
                format!("unknown method \"{other}\" (fixed_point | direct)"),
            )
            .into())
        }
    };

    let mut manifest = RunManifest::new("solve-dtft", &input.path, &input.bytes);
    manifest.seed = c.seed;
    let mut dir = OutDir::create(out)?;
    dir.write("field.csv", field_csv(&field).as_bytes())?;
    dir.write_json("convergence.json", &report)?;
    manifest.details = serde_json::json!({ "converged": report.converged, "iterations": report.iterations });
    if !report.converged {
        manifest
            .warnings
            .push(format!("stopped after {} iterations with step {}", report.iterations, report.final_delta));
    }
    let manifest = manifest.finish(&mut dir)?;
    if !report.converged {
        return Err(CliError::NonConvergence(format!(
            "fixed-point iteration stopped at {} iterations (step {} > tol {tol})",
            report.iterations, report.final_delta
        )));
    }
    Ok(manifest)
}
