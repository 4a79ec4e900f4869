//! TOML grammar for MDP and policy documents.
//!
//! ```toml
//! [mdp]
//! n_states = 3
//! n_actions = 1
//! transition = [0, 1, 0,  0, 0, 1,  1, 0, 0]   # row-major over (s, a, s')
//! reward = [1, 0, 0]
//! initial_dist = [1, 0, 0]                     # optional, uniform by default
//! gamma = 0.9
//! r_max = 1.0                                  # optional, max |reward| by default
//! embedding = "onehot"                         # or [[x, ...], ...], one row per state
//!
//! [policy]                                     # optional, uniform by default
//! kind = "deterministic"                       # uniform | deterministic | table
//! actions = [0, 0, 0]                          # deterministic
//! # probs = [...]                              # table, row-major over (s, a)
//! ```
//!
//! Every error carries the line and column of the offending key.

use std::ops::Range;

use serde::Deserialize;
use toml::Spanned;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mdp::{TabularMdp, TabularPolicy};

/// 1-based line and column of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(src.len());
    let before = &src.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let col = offset - before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    (line, col)
}

pub fn config_error(src: &str, span: Option<Range<usize>>, field: &str, msg: impl std::fmt::Display) -> Error {
    match span {
        Some(r) => {
            let (l, c) = line_col(src, r.start);
            Error::Config(format!("line {l}, column {c}: `{field}`: {msg}"))
        }
        None => Error::Config(format!("`{field}`: {msg}")),
    }
}

/// Parses `src` into `T`, turning syntax and schema errors into diagnostics.
pub fn from_toml<T: for<'de> Deserialize<'de>>(src: &str) -> Result<T> {
    toml::from_str(src).map_err(|e| {
        let msg = e.message().trim().to_string();
        match e.span() {
            Some(r) => {
                let (l, c) = line_col(src, r.start);
                Error::Config(format!("line {l}, column {c}: {msg}"))
            }
            None => Error::Config(msg),
        }
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EmbeddingSpec {
    Named(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    pub n_states: Spanned<usize>,
    pub n_actions: Spanned<usize>,
    pub transition: Spanned<Vec<f64>>,
    pub reward: Spanned<Vec<f64>>,
    pub initial_dist: Option<Spanned<Vec<f64>>>,
    pub gamma: Spanned<f64>,
    pub r_max: Option<Spanned<f64>>,
    pub embedding: Option<Spanned<EmbeddingSpec>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: Spanned<String>,
    pub actions: Option<Spanned<Vec<usize>>>,
    pub probs: Option<Spanned<Vec<f64>>>,
}

/// A document holding only `[mdp]` and an optional `[policy]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub mdp: MdpSection,
    pub policy: Option<PolicySection>,
}

fn check_len<T>(src: &str, v: &Spanned<Vec<T>>, field: &str, want: usize) -> Result<()> {
    if v.get_ref().len() != want {
        return Err(config_error(
            src,
            Some(v.span()),
            field,
            format!("expected {want} entries, found {}", v.get_ref().len()),
        ));
    }
    Ok(())
}

impl MdpSection {
    pub fn build(&self, src: &str) -> Result<TabularMdp> {
        let ns = *self.n_states.get_ref();
        let na = *self.n_actions.get_ref();
        if ns == 0 || ns > 4096 {
            return Err(config_error(src, Some(self.n_states.span()), "mdp.n_states", "must be in 1..=4096"));
        }
        if na == 0 || na > 256 {
            return Err(config_error(src, Some(self.n_actions.span()), "mdp.n_actions", "must be in 1..=256"));
        }
        check_len(src, &self.transition, "mdp.transition", ns * na * ns)?;
        check_len(src, &self.reward, "mdp.reward", ns)?;
        let gamma = *self.gamma.get_ref();
        if !(0.0..1.0).contains(&gamma) {
            return Err(config_error(src, Some(self.gamma.span()), "mdp.gamma", "must lie in [0, 1)"));
        }
        let initial = match &self.initial_dist {
            Some(d) => {
                check_len(src, d, "mdp.initial_dist", ns)?;
                d.get_ref().clone()
            }
            None => vec![1.0 / ns as f64; ns],
        };
        let embedding = match &self.embedding {
            None => None,
            Some(e) => match e.get_ref() {
                EmbeddingSpec::Named(n) if n == "onehot" => None,
                EmbeddingSpec::Named(n) => {
                    return Err(config_error(
                        src,
                        Some(e.span()),
                        "mdp.embedding",
                        format!("unknown embedding \"{n}\""),
                    ))
                }
                EmbeddingSpec::Matrix(rows) => {
                    if rows.len() != ns {
                        return Err(config_error(src, Some(e.span()), "mdp.embedding", format!("expected {ns} rows")));
                    }
                    Some(Mat::from_rows(rows).map_err(|err| config_error(src, Some(e.span()), "mdp.embedding", err))?)
                }
            },
        };
        let build = TabularMdp::new(
            ns,
            na,
            self.transition.get_ref().clone(),
            self.reward.get_ref().clone(),
            initial,
            gamma,
            self.r_max.as_ref().map(|r| *r.get_ref()),
            embedding,
        );
        build.map_err(|err| {
            // attribute to the field the message names, else the transition
            let msg = err.to_string();
            let (field, span) = if msg.contains("initial") {
                ("mdp.initial_dist", self.initial_dist.as_ref().map(|d| d.span()))
            } else if msg.contains("r_max") || msg.contains("reward") {
                ("mdp.reward", Some(self.reward.span()))
            } else if msg.contains("embedding") {
                ("mdp.embedding", self.embedding.as_ref().map(|e| e.span()))
            } else {
                ("mdp.transition", Some(self.transition.span()))
            };
            config_error(src, span, field, msg)
        })
    }
}

impl PolicySection {
    pub fn build(&self, src: &str, n_states: usize, n_actions: usize) -> Result<TabularPolicy> {
        let wrap = |span: Range<usize>, field: &str| {
            let field = field.to_string();
            move |e: Error| config_error(src, Some(span), &field, e)
        };
        match self.kind.get_ref().as_str() {
            "uniform" => Ok(TabularPolicy::uniform(n_states, n_actions)),
            "deterministic" => {
                let a = self.actions.as_ref().ok_or_else(|| {
                    config_error(src, Some(self.kind.span()), "policy.actions", "required for kind = \"deterministic\"")
                })?;
                check_len(src, a, "policy.actions", n_states)?;
                TabularPolicy::deterministic(a.get_ref(), n_actions).map_err(wrap(a.span(), "policy.actions"))
            }
            "table" => {
                let p = self.probs.as_ref().ok_or_else(|| {
                    config_error(src, Some(self.kind.span()), "policy.probs", "required for kind = \"table\"")
                })?;
                check_len(src, p, "policy.probs", n_states * n_actions)?;
                let m =
                    Mat::from_vec(n_states, n_actions, p.get_ref().clone()).map_err(wrap(p.span(), "policy.probs"))?;
                TabularPolicy::new(m).map_err(wrap(p.span(), "policy.probs"))
            }
            other => Err(config_error(
                src,
                Some(self.kind.span()),
                "policy.kind",
                format!("unknown kind \"{other}\" (uniform | deterministic | table)"),
            )),
        }
    }
}

/// Builds the policy, defaulting to uniform when the section is absent.
pub fn build_policy(src: &str, section: Option<&PolicySection>, mdp: &TabularMdp) -> Result<TabularPolicy> {
    match section {
        Some(p) => p.build(src, mdp.n_states(), mdp.n_actions()),
        None => Ok(TabularPolicy::uniform(mdp.n_states(), mdp.n_actions())),
    }
}

pub fn parse_mdp_document(src: &str) -> Result<(TabularMdp, TabularPolicy)> {
    let doc: MdpDocument = from_toml(src)?;
    let mdp = doc.mdp.build(src)?;
    let policy = build_policy(src, doc.policy.as_ref(), &mdp)?;
    Ok((mdp, policy))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CYCLE: &str = r#"
[mdp]
n_states = 3
n_actions = 1
transition = [0, 1, 0,  0, 0, 1,  1, 0, 0]
reward = [1, 0, 0]
initial_dist = [1, 0, 0]
gamma = 0.9
embedding = [[1.0], [2.0], [3.0]]
"#;

    fn err(src: &str) -> String {
        match parse_mdp_document(src) {
            Err(Error::Config(m)) => m,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn parses_cycle() {
        let (mdp, policy) = parse_mdp_document(CYCLE).unwrap();
        assert_eq!((mdp.n_states(), mdp.n_actions(), mdp.embedding_dim()), (3, 1, 1));
        assert_eq!(mdp.next_dist(2, 0), &[1.0, 0.0, 0.0]);
        assert_eq!(mdp.embed(1), &[2.0]);
        assert_eq!(policy.action_dist(0), &[1.0]);
    }

    #[test]
    fn defaults() {
        let src =
            "[mdp]\nn_states = 2\nn_actions = 1\ntransition = [0.5, 0.5, 0.5, 0.5]\nreward = [0, 1]\ngamma = 0.5\n";
        let (mdp, _) = parse_mdp_document(src).unwrap();
        assert_eq!(mdp.initial_dist(), &[0.5, 0.5]);
        assert_eq!(mdp.embedding_dim(), 2);
        assert_eq!(mdp.r_max(), 1.0);
    }

    #[test]
    fn policies() {
        let base = CYCLE.replace("n_actions = 1", "n_actions = 2").replace(
            "transition = [0, 1, 0,  0, 0, 1,  1, 0, 0]",
            "transition = [0,1,0, 1,0,0,  0,0,1, 0,1,0,  1,0,0, 0,0,1]",
        );
        let det = format!("{base}\n[policy]\nkind = \"deterministic\"\nactions = [1, 0, 1]\n");
        let (_, p) = parse_mdp_document(&det).unwrap();
        assert_eq!(p.action_dist(0), &[0.0, 1.0]);
        let table = format!("{base}\n[policy]\nkind = \"table\"\nprobs = [0.5,0.5, 1,0, 0,1]\n");
        let (_, p) = parse_mdp_document(&table).unwrap();
        assert_eq!(p.action_dist(0), &[0.5, 0.5]);
        let bad = format!("{base}\n[policy]\nkind = \"greedy\"\n");
        assert!(err(&bad).contains("policy.kind"));
        let out_of_range = format!("{base}\n[policy]\nkind = \"deterministic\"\nactions = [2, 0, 1]\n");
        assert!(err(&out_of_range).contains("policy.actions"));
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let m = err(&CYCLE.replace("[1, 0, 0]\ninitial", "[1, 0]\ninitial"));
        assert!(m.starts_with("line 6,") && m.contains("mdp.reward"), "{m}");

        let m = err(&CYCLE.replace("0, 0, 1,  1, 0, 0]", "0, 0, 1,  1, 0, 0.5]"));
        assert!(m.starts_with("line 5,") && m.contains("mdp.transition"), "{m}");

        let m = err(&CYCLE.replace("gamma = 0.9", "gamma = 1.0"));
        assert!(m.starts_with("line 8,") && m.contains("mdp.gamma"), "{m}");

        let m = err(&CYCLE.replace("embedding = [[1.0], [2.0], [3.0]]", "embedding = \"sincos\""));
        assert!(m.contains("mdp.embedding"), "{m}");

        let m = err("[mdp]\nn_states = 2\nbogus = 1\n");
        assert!(m.starts_with("line 3,") && m.contains("bogus"), "{m}");

        let m = err("[mdp\nn_states = 2\n");
        assert!(m.starts_with("line 1,"), "{m}");
    }

    #[test]
    fn line_col_positions() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 99), (1, 3));
    }
}
