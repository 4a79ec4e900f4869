use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamTree, Tensor};

/// Adam with bias correction. Moment buffers are created on first use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.m.get(name).map(Vec::as_slice)
    }

    pub fn second_moment(&self, name: &str) -> Option<&[f64]> {
        self.v.get(name).map(Vec::as_slice)
    }

    /// Moment buffers as a tree with names `m/<param>` and `v/<param>`.
    pub fn export_moments(&self) -> Result<ParamTree> {
        let mut t = ParamTree::new();
        for (tag, map) in [("m", &self.m), ("v", &self.v)] {
            for (name, buf) in map {
                t.insert(format!("{tag}/{name}"), Tensor::new(vec![buf.len()], buf.clone())?)?;
            }
        }
        Ok(t)
    }

    /// Inverse of [`Adam::export_moments`]; replaces all moment buffers.
    pub fn import_moments(&mut self, step: u64, tree: &ParamTree) -> Result<()> {
        let (mut m, mut v) = (BTreeMap::new(), BTreeMap::new());
        for (name, t) in tree.iter() {
            let (tag, param) =
                name.split_once('/').ok_or_else(|| Error::Structure(format!("moment name {name} has no tag")))?;
            let dst = match tag {
                "m" => &mut m,
                "v" => &mut v,
                _ => return Err(Error::Structure(format!("unknown moment tag in {name}"))),
            };
            dst.insert(param.to_string(), t.data().to_vec());
        }
        if m.keys().ne(v.keys()) {
            return Err(Error::Structure("first and second moments cover different parameters".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One update from the gradient buffers of `params`. Parameters without
    /// a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamTree) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let n = p.len();
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            if m.len() != n {
                return Err(Error::Structure(format!("moment buffer for {name} has the wrong size")));
            }
            let g = p.grad().map(<[f64]>::to_vec);
            let data = p.data_mut();
            for i in 0..n {
                let gi = g.as_ref().map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `θ̂ ← τθ + (1−τ)θ̂` elementwise, computed as `θ̂ + τ(θ − θ̂)` so equal
/// trees stay bit-identical. `τ = 1` copies.
pub fn ema_update(online: &ParamTree, target: &mut ParamTree, tau: f64) -> Result<()> {
    online.check_structure(target)?;
    for ((_, o), (_, t)) in online.iter().zip(target.iter_mut()) {
        for (x, y) in o.data().iter().zip(t.data_mut()) {
            *y = if tau == 1.0 { *x } else { *y + tau * (x - *y) };
        }
    }
    Ok(())
}
