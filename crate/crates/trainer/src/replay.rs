use rand::Rng;
use spf_nn::{ParamTree, Tensor};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Encoded action (one-hot for discrete spaces).
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub state: Option<usize>,
    pub next_state: Option<usize>,
}

/// Fixed-capacity ring buffer of transitions in flat column stores.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    head: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    reward: Vec<f64>,
    next_obs: Vec<f64>,
    /// Discrete state indices, `-1` when absent.
    states: Vec<f64>,
    next_states: Vec<f64>,
}

/// Columns of a sampled batch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub states: Vec<Option<usize>>,
    pub next_states: Vec<Option<usize>>,
}

fn idx(v: f64) -> Option<usize> {
    (v >= 0.0).then_some(v as usize)
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            len: 0,
            head: 0,
            obs: vec![0.0; capacity * obs_dim],
            act: vec![0.0; capacity * act_dim],
            reward: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            states: vec![-1.0; capacity],
            next_states: vec![-1.0; capacity],
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(invalid("transition does not match buffer widths"));
        }
        let i = self.head;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
        self.act[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
        self.reward[i] = t.reward;
        self.states[i] = t.state.map_or(-1.0, |s| s as f64);
        self.next_states[i] = t.next_state.map_or(-1.0, |s| s as f64);
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Transition> {
        (i < self.len).then(|| Transition {
            obs: self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            action: self.act[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
            reward: self.reward[i],
            next_obs: self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            state: idx(self.states[i]),
            next_state: idx(self.next_states[i]),
        })
    }

    /// Uniform draw with replacement over filled slots.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, size: usize) -> Result<Batch> {
        if self.len < size || size == 0 {
            return Err(invalid(format!("buffer holds {} transitions, batch needs {size}", self.len)));
        }
        let ids: Vec<usize> = (0..size).map(|_| rng.gen_range(0..self.len)).collect();
        Ok(self.gather(&ids))
    }

    pub fn gather(&self, ids: &[usize]) -> Batch {
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut b = Batch {
            size: ids.len(),
            obs: Vec::with_capacity(ids.len() * od),
            action: Vec::with_capacity(ids.len() * ad),
            reward: Vec::with_capacity(ids.len()),
            next_obs: Vec::with_capacity(ids.len() * od),
            states: Vec::with_capacity(ids.len()),
            next_states: Vec::with_capacity(ids.len()),
        };
        for &i in ids {
            b.obs.extend_from_slice(&self.obs[i * od..(i + 1) * od]);
            b.action.extend_from_slice(&self.act[i * ad..(i + 1) * ad]);
            b.reward.push(self.reward[i]);
            b.next_obs.extend_from_slice(&self.next_obs[i * od..(i + 1) * od]);
            b.states.push(idx(self.states[i]));
            b.next_states.push(idx(self.next_states[i]));
        }
        b
    }

    /// Buffer contents as tensors under `prefix/`, plus `(len, head)`.
    pub fn to_tensors(&self, prefix: &str) -> Result<(ParamTree, (usize, usize))> {
        let mut t = ParamTree::new();
        let c = self.capacity;
        t.insert(format!("{prefix}/obs"), Tensor::new(vec![c, self.obs_dim], self.obs.clone())?)?;
        t.insert(format!("{prefix}/act"), Tensor::new(vec![c, self.act_dim], self.act.clone())?)?;
        t.insert(format!("{prefix}/reward"), Tensor::new(vec![c], self.reward.clone())?)?;
        t.insert(format!("{prefix}/next_obs"), Tensor::new(vec![c, self.obs_dim], self.next_obs.clone())?)?;
        t.insert(format!("{prefix}/states"), Tensor::new(vec![c], self.states.clone())?)?;
        t.insert(format!("{prefix}/next_states"), Tensor::new(vec![c], self.next_states.clone())?)?;
        Ok((t, (self.len, self.head)))
    }

    pub fn restore(&mut self, tree: &ParamTree, prefix: &str, len: usize, head: usize) -> Result<()> {
        let take = |name: &str, want: usize| -> Result<Vec<f64>> {
            let t = tree.get(&format!("{prefix}/{name}")).ok_or_else(|| invalid(format!("missing {prefix}/{name}")))?;
            if t.len() != want {
                return Err(invalid(format!("{prefix}/{name} has the wrong size")));
            }
            Ok(t.data().to_vec())
        };
        let c = self.capacity;
        if len > c || head >= c {
            return Err(invalid("buffer cursor out of range"));
        }
        self.obs = take("obs", c * self.obs_dim)?;
        self.act = take("act", c * self.act_dim)?;
        self.reward = take("reward", c)?;
        self.next_obs = take("next_obs", c * self.obs_dim)?;
        self.states = take("states", c)?;
        self.next_states = take("next_states", c)?;
        self.len = len;
        self.head = head;
        Ok(())
    }
}
