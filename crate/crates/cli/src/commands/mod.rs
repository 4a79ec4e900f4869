pub mod analyze;
pub mod bounds;
pub mod recover;
pub mod solve;
pub mod train;

use spf_core::config::from_toml;
use spf_trainer::config::{Overrides, Profile};

use crate::error::Result;
use crate::{Common, ProfileArg};

pub(crate) fn parse<T: for<'de> serde::Deserialize<'de>>(src: &str) -> Result<T> {
    Ok(from_toml(src)?)
}

pub(crate) fn overrides(c: &Common) -> Overrides {
    Overrides {
        profile: c.profile.map(|p| match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }),
        seed: c.seed,
    }
}

pub(crate) fn profile_name(p: Profile) -> String {
    match p {
        Profile::Desk => "desk".into(),
        Profile::Paper => "paper".into(),
    }
}

/// Shortest round-trip float formatting, stable across runs.
pub(crate) fn num(x: f64) -> String {
    format!("{x}")
}
