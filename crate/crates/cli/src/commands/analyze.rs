use std::path::Path;

use serde::{Deserialize, Serialize};
use spf_core::config::{build_policy, config_error, MdpSection, PolicySection};
use spf_core::mdp::induced_chain;
use spf_core::spectral::{asymptotic_period, decompose, distribution_evolution, empirical_period};
use toml::Spanned;

use super::{num, parse};
use crate::error::Result;
use crate::out::{OutDir, RunManifest};
use crate::{Common, Input};

/// `[mdp]`, optional `[policy]` and optional `[analysis]`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    mdp: MdpSection,
    policy: Option<PolicySection>,
    analysis: Option<Analysis>,
    #[serde(rename = "dtft")]
    _dtft: Option<serde::de::IgnoredAny>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Analysis {
    /// Evolution length; the second half is searched for a period.
    steps: Option<Spanned<usize>>,
    tol: Option<Spanned<f64>>,
}

#[derive(Debug, Serialize)]
pub struct AnalysisReport {
    pub n_states: usize,
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    pub class_periods: Vec<u64>,
    pub global_period: u64,
    pub eigen_counts: Option<Vec<usize>>,
    pub empirical_period: Option<usize>,
    pub steps: usize,
    pub tol: f64,
}

pub fn run(c: &Common, input: &Input, out: &Path) -> Result<RunManifest> {
    let src = &input.text;
    let doc: Doc = parse(src)?;
    let mdp = doc.mdp.build(src)?;
    let policy = build_policy(src, doc.policy.as_ref(), &mdp)?;
    let a = doc.analysis.unwrap_or_default();
    let steps = a.steps.as_ref().map_or(256.max(8 * mdp.n_states()), |s| *s.get_ref());
    if !(2..=1_000_000).contains(&steps) {
        return Err(
            config_error(src, a.steps.as_ref().map(Spanned::span), "analysis.steps", "must be in 2..=1000000").into()
        );
    }
    let tol = a.tol.as_ref().map_or(1e-6, |t| *t.get_ref());
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(config_error(src, a.tol.as_ref().map(Spanned::span), "analysis.tol", "must be positive").into());
    }

    let mut manifest = RunManifest::new("analyze-mdp", &input.path, &input.bytes);
    manifest.seed = c.seed;
    let chain = induced_chain(&mdp, &policy)?;
    let dec = decompose(&chain)?;
    let mut report = asymptotic_period(&chain, &dec)?;
    match empirical_period(&chain, mdp.initial_dist(), steps, tol) {
        Ok(p) => report.empirical_period = Some(p),
        Err(spf_core::Error::NoPeriod(_)) => {
            manifest
                .warnings
                .push(format!("no period within tolerance {tol} over the last {} steps", steps - steps / 2));
        }
        Err(e) => return Err(e.into()),
    }
    let evolution = distribution_evolution(&chain, mdp.initial_dist(), steps)?;

    let body = AnalysisReport {
        n_states: mdp.n_states(),
        recurrent_classes: dec.recurrent_classes,
        transient_states: dec.transient_states,
        class_periods: report.class_periods,
        global_period: report.global_period,
        eigen_counts: report.eigen_counts,
        empirical_period: report.empirical_period,
        steps,
        tol,
    };
    let mut csv = String::from("step");
    for s in 0..mdp.n_states() {
        csv.push_str(&format!(",p{s}"));
    }
    csv.push('\n');
    for (t, mu) in evolution.iter().enumerate() {
        csv.push_str(&t.to_string());
        for p in mu {
            csv.push(',');
            csv.push_str(&num(*p));
        }
        csv.push('\n');
    }

    let mut dir = OutDir::create(out)?;
    dir.write_json("period_report.json", &body)?;
    dir.write("evolution.csv", csv.as_bytes())?;
    manifest.details = serde_json::json!({ "global_period": body.global_period });
    manifest.finish(&mut dir)
}
