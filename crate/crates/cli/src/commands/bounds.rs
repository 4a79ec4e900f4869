use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use spf_core::bounds::{suite, verify_frequency_domain_bound, verify_time_domain_bound, PolynomialReward, Verdict};
use spf_core::config::{build_policy, config_error, MdpSection, PolicySection};
use spf_core::{TabularMdp, TabularPolicy};
use toml::Spanned;

use super::{num, parse};
use crate::error::{CliError, Result};
use crate::out::{OutDir, RunManifest};
use crate::{Common, Input};

/// Either an explicit instance (`[mdp]`, `[policy1]`, `[policy2]`, optional
/// `[reward]`) or seeded suites (`[time_domain]` and/or
/// `[frequency_domain]` with a `count`).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Doc {
    seed: Option<u64>,
    mdp: Option<MdpSection>,
    policy1: Option<PolicySection>,
    policy2: Option<PolicySection>,
    reward: Option<RewardSection>,
    time_domain: Option<Spanned<TimeSection>>,
    frequency_domain: Option<Spanned<FreqSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardSection {
    /// One row per power `k = 0..=n`, each with one entry per embedding dimension.
    coefficients: Spanned<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSection {
    horizon: Option<usize>,
    count: Option<usize>,
    n_states: Option<usize>,
    gammas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreqSection {
    horizon: Option<usize>,
    dft_size: Option<usize>,
    count: Option<usize>,
    n_states: Option<usize>,
    dim: Option<usize>,
    degrees: Option<Vec<usize>>,
    gamma: Option<f64>,
    /// Extra never-decaying instances, expected to come out inapplicable.
    periodic: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub instance: usize,
    pub theorem: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: Verdict,
}

impl Row {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

pub const TIME: &str = "time_domain";
pub const FREQ: &str = "frequency_domain";

fn time_row(id: usize, mdp: &TabularMdp, p1: &TabularPolicy, p2: &TabularPolicy, horizon: usize) -> Result<Row> {
    let c = verify_time_domain_bound(mdp, p1, p2, horizon)?;
    let verdict = if c.holds { Verdict::Holds } else { Verdict::Violated };
    Ok(Row { instance: id, theorem: TIME, lhs: c.lhs, rhs: c.rhs, verdict })
}

fn freq_row(
    id: usize,
    mdp: &TabularMdp,
    p1: &TabularPolicy,
    p2: &TabularPolicy,
    reward: &PolynomialReward,
    horizon: usize,
    dft: usize,
) -> Result<Row> {
    let c = verify_frequency_domain_bound(mdp, p1, p2, reward, horizon, dft)?;
    Ok(Row { instance: id, theorem: FREQ, lhs: c.lhs, rhs: c.rhs, verdict: c.verdict })
}

pub fn rows_csv(rows: &[Row]) -> String {
    let mut s = String::from("instance_id,theorem,lhs,rhs,slack,verdict\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance,
            r.theorem,
            num(r.lhs),
            num(r.rhs),
            num(r.slack()),
            r.verdict.as_str()
        ));
    }
    s
}

fn suites(src: &str, doc: &Doc, seed: u64) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    if let Some(t) = &doc.time_domain {
        let sp = Some(t.span());
        let t = t.get_ref();
        let count = t.count.unwrap_or(100);
        let n = t.n_states.unwrap_or(3);
        let gammas = t.gammas.clone().unwrap_or_else(|| vec![0.8, 0.9, 0.95]);
        let horizon = t.horizon.unwrap_or(8);
        if gammas.is_empty() || gammas.iter().any(|g| !(0.0..1.0).contains(g)) || n == 0 {
            return Err(config_error(src, sp, "time_domain", "needs n_states ≥ 1 and gammas in [0, 1)").into());
        }
        let r: Result<Vec<Row>> = (0..count)
            .into_par_iter()
            .map(|id| {
                let (mdp, p1, p2) = suite::time_domain_instance(seed, id as u64, n, gammas[id % gammas.len()])?;
                time_row(id, &mdp, &p1, &p2, horizon)
            })
            .collect();
        rows.extend(r?);
    }
    if let Some(f) = &doc.frequency_domain {
        let sp = Some(f.span());
        let f = f.get_ref();
        let count = f.count.unwrap_or(20);
        let n = f.n_states.unwrap_or(4);
        let dim = f.dim.unwrap_or(2);
        let degrees = f.degrees.clone().unwrap_or_else(|| vec![1, 2]);
        let gamma = f.gamma.unwrap_or(0.9);
        let horizon = f.horizon.unwrap_or(300);
        let dft = f.dft_size.unwrap_or(4096);
        if degrees.is_empty() || n == 0 || dim == 0 || !(0.0..1.0).contains(&gamma) {
            return Err(config_error(
                src,
                sp,
                "frequency_domain",
                "needs degrees, n_states ≥ 1, dim ≥ 1, gamma in [0, 1)",
            )
            .into());
        }
        let r: Result<Vec<Row>> = (0..count)
            .into_par_iter()
            .map(|id| {
                let (mdp, p1, p2, rw) =
                    suite::lazy_pair_instance(seed, id as u64, n, dim, degrees[id % degrees.len()], gamma)?;
                freq_row(id, &mdp, &p1, &p2, &rw, horizon, dft)
            })
            .collect();
        rows.extend(r?);
        for j in 0..f.periodic.unwrap_or(0) {
            let (mdp, p1, p2, rw) = suite::periodic_instance(3 + j, gamma)?;
            rows.push(freq_row(count + j, &mdp, &p1, &p2, &rw, horizon, dft)?);
        }
    }
    Ok(rows)
}

fn instance(src: &str, doc: &Doc, mdp_section: &MdpSection) -> Result<Vec<Row>> {
    let mdp = mdp_section.build(src)?;
    let p1 = build_policy(src, doc.policy1.as_ref(), &mdp)?;
    let p2 = build_policy(src, doc.policy2.as_ref(), &mdp)?;
    let t = doc.time_domain.as_ref().map(|t| t.get_ref());
    let mut rows = vec![time_row(0, &mdp, &p1, &p2, t.and_then(|t| t.horizon).unwrap_or(8))?];
    if let Some(r) = &doc.reward {
        let reward = PolynomialReward::new(r.coefficients.get_ref().clone())
            .map_err(|e| config_error(src, Some(r.coefficients.span()), "reward.coefficients", e))?;
        if reward.dim() != mdp.embedding_dim() {
            return Err(config_error(
                src,
                Some(r.coefficients.span()),
                "reward.coefficients",
                "width must match the embedding",
            )
            .into());
        }
        let f = doc.frequency_domain.as_ref().map(|f| f.get_ref());
        let horizon = f.and_then(|f| f.horizon).unwrap_or(300);
        let dft = f.and_then(|f| f.dft_size).unwrap_or(4096);
        rows.push(freq_row(0, &mdp, &p1, &p2, &reward, horizon, dft)?);
    }
    Ok(rows)
}

pub fn run(c: &Common, input: &Input, out: &Path) -> Result<RunManifest> {
    let src = &input.text;
    let doc: Doc = parse(src)?;
    let seed = c.seed.or(doc.seed).unwrap_or(0);
    let rows = match &doc.mdp {
        Some(m) => instance(src, &doc, m)?,
        None if doc.time_domain.is_none() && doc.frequency_domain.is_none() => {
            return Err(CliError::config("expected [mdp] or at least one of [time_domain], [frequency_domain]"))
        }
        None => suites(src, &doc, seed)?,
    };
    let count = |v: Verdict| rows.iter().filter(|r| r.verdict == v).count();

    let mut manifest = RunManifest::new("verify-bounds", &input.path, &input.bytes);
    manifest.seed = Some(seed);
    manifest.details = serde_json::json!({
        "instances": rows.len(),
        "holds": count(Verdict::Holds),
        "violated": count(Verdict::Violated),
        "inapplicable": count(Verdict::Inapplicable),
    });
    if count(Verdict::Violated) > 0 {
        manifest.warnings.push(format!("{} bound checks violated", count(Verdict::Violated)));
    }
    let mut dir = OutDir::create(out)?;
    dir.write("verdicts.csv", rows_csv(&rows).as_bytes())?;
    manifest.finish(&mut dir)
}
