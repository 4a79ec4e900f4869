//! Replays the checked-in fuzz corpus, plus cheap mutations of each seed,
//! through the same entry points the fuzz targets drive.

use std::path::{Path, PathBuf};

use spf_core::config::parse_mdp_document;
use spf_nn::checkpoint::Checkpoint;
use spf_trainer::config::{parse_train_config, Overrides};

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

/// Prefixes plus single-byte substitutions at a handful of positions.
fn mutations(seed: &[u8]) -> Vec<Vec<u8>> {
    let mut v = Vec::new();
    let n = seed.len();
    for cut in [0, 1, n / 3, n / 2, n.saturating_sub(1)] {
        v.push(seed[..cut.min(n)].to_vec());
    }
    for (i, pos) in (0..n).step_by((n / 16).max(1)).enumerate() {
        let mut m = seed.to_vec();
        m[pos] = b"0[]=,\"\n9.-}{\0ez"[i % 15];
        v.push(m);
    }
    v
}

fn mdp_config(data: &[u8]) -> bool {
    std::str::from_utf8(data).is_ok_and(|s| parse_mdp_document(s).is_ok())
}

fn train_config(data: &[u8]) -> bool {
    std::str::from_utf8(data).is_ok_and(|s| parse_train_config(s, Overrides::default()).is_ok())
}

fn checkpoint_decode(data: &[u8]) -> bool {
    let (manifest, blob) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (data, &[][..]),
    };
    match Checkpoint::decode(manifest, blob) {
        Ok(ck) => {
            let (m, b) = ck.encode().unwrap();
            let again = Checkpoint::decode(m.as_bytes(), &b).unwrap();
            assert_eq!(again.step, ck.step);
            assert_eq!(again.params.len(), ck.params.len());
            true
        }
        Err(_) => false,
    }
}

fn replay(target: &str, f: fn(&[u8]) -> bool) -> Vec<(String, bool)> {
    corpus(target)
        .into_iter()
        .map(|(name, bytes)| {
            for m in mutations(&bytes) {
                f(&m);
            }
            let ok = f(&bytes);
            (name, ok)
        })
        .collect()
}

fn outcome(results: &[(String, bool)], name: &str) -> bool {
    results.iter().find(|(n, _)| n == name).unwrap_or_else(|| panic!("missing seed {name}")).1
}

#[test]
fn mdp_config_corpus() {
    let r = replay("mdp_config", mdp_config);
    assert!(outcome(&r, "two_cycles.toml"));
    assert!(outcome(&r, "embedding_policy.toml"));
    assert!(!outcome(&r, "truncated.toml"));
    // carries a [dtft] table that the bare MDP document rejects
    assert!(!outcome(&r, "three_cycle.toml"));
}

#[test]
fn train_config_corpus() {
    let r = replay("train_config", train_config);
    for name in ["cycle_walk.toml", "pendulum_desk.toml", "pendulum_smoke.toml", "tabular_fixed.toml"] {
        assert!(outcome(&r, name), "{name}");
    }
}

#[test]
fn checkpoint_decode_corpus() {
    let r = replay("checkpoint_decode", checkpoint_decode);
    assert!(outcome(&r, "cycle_walk_step12"));
    assert!(outcome(&r, "empty_tree"));
    assert!(!outcome(&r, "truncated_blob"));
    assert!(!outcome(&r, "manifest_only"));
}
