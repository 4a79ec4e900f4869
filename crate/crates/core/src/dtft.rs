//! Sampled DTFT of discounted state sequences and the Bellman-style operator
//! whose fixed point is the DTFT field of a policy.
//!
//! For a state-action pair the target is the `L×D` complex matrix
//!
//! ```text
//! F(s,a)[k] = Σ_n γⁿ e^{−jω_k n} E[φ(s_{t+n+1}) | s_t = s, a_t = a],   ω_k = 2πk/L
//! ```
//!
//! where `φ` is the state embedding. It satisfies
//! `F(s,a) = S̃(s,a) + Γ E[F(s',a')]` with every row of `S̃(s,a)` equal to
//! `E[φ(s') | s,a]` and `Γ = γ·diag(e^{−jω_k})`. The map on the right is a
//! γ-contraction in the norm `sup_{s,a} max_k ‖F(s,a)[k]‖₂`.

use serde::Serialize;

use crate::complex::C64;
use crate::error::{invalid, Result};
use crate::linalg;
use crate::mdp::{TabularMdp, TabularPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DtftConfig {
    /// Number of frequency samples over one period; even.
    pub l: usize,
    /// Embedding dimension.
    pub dim: usize,
    pub gamma: f64,
    /// Store bins `0..=L/2` only.
    pub half_spectrum: bool,
}

impl DtftConfig {
    pub fn new(l: usize, dim: usize, gamma: f64, half_spectrum: bool) -> Result<Self> {
        if l < 2 || !l.is_multiple_of(2) {
            return Err(invalid(format!("L must be even and at least 2, got {l}")));
        }
        if dim == 0 {
            return Err(invalid("embedding dimension must be positive"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        Ok(DtftConfig { l, dim, gamma, half_spectrum })
    }

    pub fn for_mdp(mdp: &TabularMdp, l: usize, half_spectrum: bool) -> Result<Self> {
        DtftConfig::new(l, mdp.embedding_dim(), mdp.gamma(), half_spectrum)
    }

    pub fn stored_bins(&self) -> usize {
        stored_bins(self.l, self.half_spectrum)
    }

    pub fn omega(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.l as f64
    }
}

fn stored_bins(l: usize, half: bool) -> usize {
    if half {
        l / 2 + 1
    } else {
        l
    }
}

/// Complex matrix with one row per stored frequency bin and one column per
/// embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DtftMatrix {
    l: usize,
    dim: usize,
    half: bool,
    values: Vec<C64>,
}

impl DtftMatrix {
    pub fn zeros(l: usize, dim: usize, half: bool) -> Self {
        DtftMatrix { l, dim, half, values: vec![C64::ZERO; stored_bins(l, half) * dim] }
    }

    pub fn from_values(l: usize, dim: usize, half: bool, values: Vec<C64>) -> Result<Self> {
        if l < 2 || !l.is_multiple_of(2) || dim == 0 {
            return Err(invalid("DtftMatrix needs even L ≥ 2 and D ≥ 1"));
        }
        if values.len() != stored_bins(l, half) * dim {
            return Err(invalid(format!("expected {} values, got {}", stored_bins(l, half) * dim, values.len())));
        }
        Ok(DtftMatrix { l, dim, half, values })
    }

    /// Builds a matrix from separate real and imaginary planes, each
    /// `bins × dim` row-major.
    pub fn from_parts(l: usize, dim: usize, half: bool, re: &[f64], im: &[f64]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(invalid("real and imaginary parts differ in length"));
        }
        let values = re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect();
        DtftMatrix::from_values(l, dim, half, values)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_half(&self) -> bool {
        self.half
    }

    pub fn bins(&self) -> usize {
        stored_bins(self.l, self.half)
    }

    pub fn row(&self, k: usize) -> &[C64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn get(&self, k: usize, d: usize) -> C64 {
        self.values[k * self.dim + d]
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn re_plane(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im_plane(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    /// `max_k ‖row k‖₂`
    pub fn max_row_norm(&self) -> f64 {
        (0..self.bins()).map(|k| self.row(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DtftMatrix) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).abs()).fold(0.0, f64::max)
    }

    /// Keeps rows `0..=L/2` of a full-spectrum matrix.
    pub fn halve(&self) -> DtftMatrix {
        if self.half {
            return self.clone();
        }
        let bins = self.l / 2 + 1;
        DtftMatrix { l: self.l, dim: self.dim, half: true, values: self.values[..bins * self.dim].to_vec() }
    }

    /// Full-spectrum view regardless of storage, rebuilding rows `L−k` by
    /// conjugation without checking the edge bins.
    pub fn to_full(&self) -> DtftMatrix {
        if !self.half {
            return self.clone();
        }
        let mut out = DtftMatrix::zeros(self.l, self.dim, false);
        for k in 0..=self.l / 2 {
            out.row_mut(k).copy_from_slice(self.row(k));
        }
        for k in 1..self.l / 2 {
            let src: Vec<C64> = self.row(k).iter().map(|z| z.conj()).collect();
            out.row_mut(self.l - k).copy_from_slice(&src);
        }
        out
    }
}

/// `Γ = γ·diag(e^{−j2πk/L})` over the stored bins.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaDiagonal {
    entries: Vec<C64>,
}

impl GammaDiagonal {
    pub fn new(config: &DtftConfig) -> Self {
        // Bins above L/2 mirror their partner exactly and bin L/2 is real, so
        // conjugate symmetry of iterates holds bit for bit.
        let l = config.l;
        let entries = (0..config.stored_bins())
            .map(|k| {
                if 2 * k == l {
                    C64::new(-config.gamma, 0.0)
                } else if 2 * k > l {
                    C64::cis(-config.omega(l - k)).scale(config.gamma).conj()
                } else {
                    C64::cis(-config.omega(k)).scale(config.gamma)
                }
            })
            .collect();
        GammaDiagonal { entries }
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn re(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.im).collect()
    }
}

/// One [`DtftMatrix`] per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DtftField {
    config: DtftConfig,
    n_states: usize,
    n_actions: usize,
    entries: Vec<DtftMatrix>,
}

impl DtftField {
    pub fn zeros(config: DtftConfig, n_states: usize, n_actions: usize) -> Self {
        let m = DtftMatrix::zeros(config.l, config.dim, config.half_spectrum);
        DtftField { config, n_states, n_actions, entries: vec![m; n_states * n_actions] }
    }

    pub fn from_entries(
        config: DtftConfig,
        n_states: usize,
        n_actions: usize,
        entries: Vec<DtftMatrix>,
    ) -> Result<Self> {
        if entries.len() != n_states * n_actions {
            return Err(invalid("one matrix per state-action pair is required"));
        }
        for m in &entries {
            if m.l != config.l || m.dim != config.dim || m.half != config.half_spectrum {
                return Err(invalid("matrix shape does not match the field config"));
            }
        }
        Ok(DtftField { config, n_states, n_actions, entries })
    }

    pub fn config(&self) -> &DtftConfig {
        &self.config
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> &DtftMatrix {
        &self.entries[s * self.n_actions + a]
    }

    pub fn get_mut(&mut self, s: usize, a: usize) -> &mut DtftMatrix {
        &mut self.entries[s * self.n_actions + a]
    }

    pub fn entries(&self) -> &[DtftMatrix] {
        &self.entries
    }

    /// `‖F‖ = sup_{s,a} max_k ‖F(s,a)[k]‖₂`. Over half storage this equals the
    /// full-spectrum norm by conjugate symmetry.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(DtftMatrix::max_row_norm).fold(0.0, f64::max)
    }

    pub fn distance(&self, other: &DtftField) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| {
                (0..a.bins())
                    .map(|k| a.row(k).iter().zip(b.row(k)).map(|(x, y)| (*x - *y).norm_sqr()).sum::<f64>().sqrt())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DtftField) -> f64 {
        self.entries.iter().zip(&other.entries).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }

    pub fn halve(&self) -> DtftField {
        let mut config = self.config;
        config.half_spectrum = true;
        DtftField {
            config,
            n_states: self.n_states,
            n_actions: self.n_actions,
            entries: self.entries.iter().map(DtftMatrix::halve).collect(),
        }
    }

    pub fn expand(&self) -> Result<DtftField> {
        let mut config = self.config;
        config.half_spectrum = false;
        let entries = self.entries.iter().map(expand_half_spectrum).collect::<Result<Vec<_>>>()?;
        Ok(DtftField { config, n_states: self.n_states, n_actions: self.n_actions, entries })
    }

    fn check_against(&self, mdp: &TabularMdp, policy: &TabularPolicy) -> Result<()> {
        policy.check_against(mdp)?;
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(invalid("field state/action counts do not match the MDP"));
        }
        if self.config.dim != mdp.embedding_dim() {
            return Err(invalid(format!(
                "field dimension {} does not match embedding dimension {}",
                self.config.dim,
                mdp.embedding_dim()
            )));
        }
        if self.config.gamma != mdp.gamma() {
            return Err(invalid(format!("field gamma {} does not match MDP gamma {}", self.config.gamma, mdp.gamma())));
        }
        Ok(())
    }
}

/// DTFT of a truncated discounted sequence together with the bound on the
/// omitted tail `‖x‖_max γᴺ / (1−γ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDtft {
    pub matrix: DtftMatrix,
    pub tail_bound: f64,
}

/// `bin k = Σ_{n<N} γⁿ seq[n] e^{−j2πkn/L}` over all `L` bins.
pub fn dtft_of_sequence(seq: &[Vec<f64>], gamma: f64, l: usize) -> Result<SequenceDtft> {
    if l < 2 || !l.is_multiple_of(2) {
        return Err(invalid("L must be even and at least 2"));
    }
    let dim = seq.first().map_or(1, Vec::len);
    if seq.iter().any(|x| x.len() != dim) {
        return Err(invalid("ragged sequence"));
    }
    if seq.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid("sequence must be finite"));
    }
    let mut m = DtftMatrix::zeros(l, dim.max(1), false);
    if seq.is_empty() {
        return Ok(SequenceDtft { matrix: m, tail_bound: 0.0 });
    }
    for k in 0..l {
        // running phasor γⁿ e^{−jω_k n}, reset from the closed form every
        // 64 steps to keep rounding from accumulating
        let step = C64::cis(-2.0 * std::f64::consts::PI * k as f64 / l as f64).scale(gamma);
        let mut w = C64::ONE;
        let row = m.row_mut(k);
        for (n, x) in seq.iter().enumerate() {
            if n % 64 == 0 && n > 0 {
                let angle = -2.0 * std::f64::consts::PI * ((k * n) % l) as f64 / l as f64;
                w = C64::cis(angle).scale(gamma.powi(n as i32));
            }
            for (r, &v) in row.iter_mut().zip(x) {
                *r += w.scale(v);
            }
            w = w * step;
        }
    }
    let max = seq.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    let tail_bound = if gamma == 0.0 { 0.0 } else { max * gamma.powi(seq.len() as i32) / (1.0 - gamma) };
    Ok(SequenceDtft { matrix: m, tail_bound })
}

/// `𝒯F(s,a) = S̃(s,a) + Γ Σ_{s'} P(s'|s,a) Σ_{a'} π(a'|s') F(s',a')`.
/// A Jacobi sweep: every output reads only the input field.
pub fn apply_bellman_dtft(field: &DtftField, mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DtftField> {
    field.check_against(mdp, policy)?;
    let cfg = field.config;
    let gamma_diag = GammaDiagonal::new(&cfg);
    let bins = cfg.stored_bins();
    let dim = cfg.dim;

    // E_{a'∼π}[F(s', a')] for every s'
    let mut on_policy = vec![DtftMatrix::zeros(cfg.l, dim, cfg.half_spectrum); mdp.n_states()];
    for (sp, acc) in on_policy.iter_mut().enumerate() {
        for (ap, &pa) in policy.action_dist(sp).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (o, v) in acc.values.iter_mut().zip(field.get(sp, ap).values()) {
                *o += v.scale(pa);
            }
        }
    }

    let mut out = DtftField::zeros(cfg, mdp.n_states(), mdp.n_actions());
    let mut expect = vec![C64::ZERO; bins * dim];
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let next = mdp.next_dist(s, a);
            let s_tilde = mdp.expected_next_embedding(s, a);
            expect.fill(C64::ZERO);
            for (sp, &p) in next.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (e, v) in expect.iter_mut().zip(on_policy[sp].values()) {
                    *e += v.scale(p);
                }
            }
            let m = out.get_mut(s, a);
            for k in 0..bins {
                let g = gamma_diag.entries()[k];
                for d in 0..dim {
                    m.values[k * dim + d] = C64::from(s_tilde[d]) + g * expect[k * dim + d];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub field: DtftField,
    pub iterations: usize,
    pub converged: bool,
    /// `‖F_n − F_{n−1}‖` at the last sweep.
    pub final_delta: f64,
    /// `‖𝒯F − F‖` of the returned field.
    pub residual: f64,
}

/// Iterates `F ← 𝒯F` from `F = 0` until the sweep-to-sweep change is at
/// most `tol`. On hitting `max_iter` the last iterate is returned with
/// `converged = false`.
pub fn solve_dtft_fixed_point(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    config: DtftConfig,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointSolution> {
    let mut field = DtftField::zeros(config, mdp.n_states(), mdp.n_actions());
    field.check_against(mdp, policy)?;
    let mut delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let next = apply_bellman_dtft(&field, mdp, policy)?;
        delta = next.distance(&field);
        field = next;
        iterations += 1;
        if delta <= tol {
            break;
        }
    }
    let residual = apply_bellman_dtft(&field, mdp, policy)?.distance(&field);
    Ok(FixedPointSolution { field, iterations, converged: delta <= tol, final_delta: delta, residual })
}

/// Upper bound on the number of sweeps from `F = 0` to reach a step of at
/// most `tol`: `⌈log(tol(1−γ)/C) / log γ⌉ + 1` with `C = ‖𝒯0‖`.
pub fn a_priori_iterations(mdp: &TabularMdp, tol: f64) -> usize {
    let g = mdp.gamma();
    if g == 0.0 {
        return 2;
    }
    let c = (0..mdp.n_states()).map(|s| mdp.embed(s).iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
    if c == 0.0 {
        return 1;
    }
    ((tol * (1.0 - g) / c).ln() / g.ln()).ceil().max(0.0) as usize + 2
}

/// Exact fixed point by one complex linear solve per bin:
/// `(I − Γ_k Π) F_k = S̃`, with `Π[(s,a),(s',a')] = P(s'|s,a) π(a'|s')`.
pub fn solve_dtft_direct(mdp: &TabularMdp, policy: &TabularPolicy, config: DtftConfig) -> Result<DtftField> {
    let mut field = DtftField::zeros(config, mdp.n_states(), mdp.n_actions());
    field.check_against(mdp, policy)?;
    let na = mdp.n_actions();
    let n = mdp.n_states() * na;
    let dim = config.dim;
    let gamma_diag = GammaDiagonal::new(&config);
    let mut rhs = vec![C64::ZERO; n * dim];
    for s in 0..mdp.n_states() {
        for a in 0..na {
            for (d, v) in mdp.expected_next_embedding(s, a).into_iter().enumerate() {
                rhs[(s * na + a) * dim + d] = C64::from(v);
            }
        }
    }
    for (k, &g) in gamma_diag.entries().iter().enumerate() {
        let mut a_mat = vec![C64::ZERO; n * n];
        for i in 0..n {
            a_mat[i * n + i] = C64::ONE;
        }
        for s in 0..mdp.n_states() {
            for a in 0..na {
                let row = s * na + a;
                for (sp, &p) in mdp.next_dist(s, a).iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    for (ap, &pa) in policy.action_dist(sp).iter().enumerate() {
                        a_mat[row * n + sp * na + ap] -= g.scale(p * pa);
                    }
                }
            }
        }
        let x = linalg::solve_complex(&a_mat, n, &rhs, dim)?;
        for i in 0..n {
            let (s, a) = (i / na, i % na);
            field.get_mut(s, a).row_mut(k).copy_from_slice(&x[i * dim..(i + 1) * dim]);
        }
    }
    Ok(field)
}

/// `(‖𝒯F₁ − 𝒯F₂‖, γ‖F₁ − F₂‖)`
pub fn contraction_check(
    f1: &DtftField,
    f2: &DtftField,
    mdp: &TabularMdp,
    policy: &TabularPolicy,
) -> Result<(f64, f64)> {
    if f1.config != f2.config {
        return Err(invalid("fields do not share a config"));
    }
    let t1 = apply_bellman_dtft(f1, mdp, policy)?;
    let t2 = apply_bellman_dtft(f2, mdp, policy)?;
    Ok((t1.distance(&t2), f1.config.gamma * f1.distance(f2)))
}

/// Imaginary parts at bins `0` and `L/2` above this are rejected by
/// [`expand_half_spectrum`].
pub const EDGE_BIN_IMAG_TOL: f64 = 1e-10;

/// Rebuilds all `L` rows from half storage via `F(2π−ω) = F*(ω)`.
pub fn expand_half_spectrum(half: &DtftMatrix) -> Result<DtftMatrix> {
    if !half.half {
        return Err(invalid("matrix is not in half-spectrum storage"));
    }
    if half.values.len() != (half.l / 2 + 1) * half.dim {
        return Err(invalid("row count does not match L/2 + 1"));
    }
    for k in [0, half.l / 2] {
        if let Some(z) = half.row(k).iter().find(|z| z.im.abs() > EDGE_BIN_IMAG_TOL) {
            return Err(invalid(format!("bin {k} should be real for a real sequence, imaginary part {}", z.im)));
        }
    }
    Ok(half.to_full())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recovery {
    /// Estimate of `E[φ(s_{t+k})]`.
    pub state: Vec<f64>,
    /// Largest discarded imaginary part, after undoing the discount.
    pub imag_residue: f64,
    /// `k − 1 ≥ L`: the inverse transform wraps around.
    pub aliasing: bool,
}

/// Inverse DTFT of `F(s,a)` at index `k−1`, divided by `γ^{k−1}`:
///
/// ```text
/// ŝ = γ^{−(k−1)} (1/L) Σ_m F(s,a)(ω_m) e^{jω_m (k−1)}
/// ```
///
/// Sampling at `L` points aliases the sequence with period `L`, so the
/// estimate is off by at most `‖φ‖_max γᴸ / (1 − γᴸ)`.
pub fn recover_state(field: &DtftField, s: usize, a: usize, k: usize, imag_tol: f64) -> Result<Recovery> {
    if k == 0 {
        return Err(invalid("step offset k must be at least 1"));
    }
    if s >= field.n_states || a >= field.n_actions {
        return Err(invalid("state or action out of range"));
    }
    let cfg = field.config;
    if cfg.gamma == 0.0 && k > 1 {
        return Err(invalid("with gamma = 0 only k = 1 is recoverable"));
    }
    let full = field.get(s, a).to_full();
    inverse_dtft_at(&full, cfg.gamma, k, imag_tol)
}

/// Same as [`recover_state`] for a standalone full- or half-spectrum matrix.
pub fn inverse_dtft_at(m: &DtftMatrix, gamma: f64, k: usize, imag_tol: f64) -> Result<Recovery> {
    let full = m.to_full();
    let l = full.l;
    let n = k - 1;
    let mut acc = vec![C64::ZERO; full.dim];
    for bin in 0..l {
        let angle = 2.0 * std::f64::consts::PI * ((bin * n) % l) as f64 / l as f64;
        let w = C64::cis(angle);
        for (o, &v) in acc.iter_mut().zip(full.row(bin)) {
            *o += v * w;
        }
    }
    let undo = if n == 0 { 1.0 } else { gamma.powi(n as i32) };
    let scale = 1.0 / (l as f64 * undo);
    let state: Vec<f64> = acc.iter().map(|z| z.re * scale).collect();
    let imag_residue = acc.iter().map(|z| (z.im * scale).abs()).fold(0.0, f64::max);
    if imag_residue > imag_tol {
        return Err(invalid(format!("inverse transform has imaginary residue {imag_residue}")));
    }
    Ok(Recovery { state, imag_residue, aliasing: n >= l })
}

/// Worst-case recovery error from sampling the DTFT at `L` points.
pub fn aliasing_bound(gamma: f64, l: usize, embedding_max: f64) -> f64 {
    let gl = gamma.powi(l as i32);
    embedding_max * gl / (1.0 - gl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::rng::stream;
    use rand::Rng;

    fn single_state(gamma: f64) -> TabularMdp {
        TabularMdp::deterministic(&[vec![0]], vec![0.0], 0, gamma, Some(Mat::from_rows(&[vec![1.0]]).unwrap())).unwrap()
    }

    fn three_cycle(gamma: f64) -> TabularMdp {
        let emb = Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        TabularMdp::deterministic(&[vec![1], vec![2], vec![0]], vec![0.0; 3], 0, gamma, Some(emb)).unwrap()
    }

    /// Per-term summation with `powi` and fresh `cis` for every term.
    fn naive_dtft(seq: &[Vec<f64>], gamma: f64, l: usize) -> Vec<Vec<C64>> {
        (0..l)
            .map(|k| {
                let mut row = vec![C64::ZERO; seq[0].len()];
                for (n, x) in seq.iter().enumerate() {
                    let w =
                        C64::cis(-2.0 * std::f64::consts::PI * (k * n) as f64 / l as f64).scale(gamma.powi(n as i32));
                    for (r, v) in row.iter_mut().zip(x) {
                        *r += w.scale(*v);
                    }
                }
                row
            })
            .collect()
    }

    #[test]
    fn sequence_dtft_examples() {
        let ones = vec![vec![1.0]; 64];
        let r = dtft_of_sequence(&ones, 0.5, 4).unwrap();
        assert!((r.matrix.get(0, 0).re - 2.0).abs() < 1e-18);
        assert!(r.tail_bound < 2e-19 * 2.0);
        let b1 = r.matrix.get(1, 0);
        assert!((b1.re - 0.8).abs() < 1e-15 && (b1.im + 0.4).abs() < 1e-15);

        let empty = dtft_of_sequence(&[], 0.5, 8).unwrap();
        assert_eq!(empty.tail_bound, 0.0);
        assert!(empty.matrix.values().iter().all(|z| *z == C64::ZERO));
    }

    #[test]
    fn sequence_dtft_matches_naive_summation() {
        let mut rng = stream(9, 0);
        let seq: Vec<Vec<f64>> = (0..32).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let got = dtft_of_sequence(&seq, 0.93, 16).unwrap().matrix;
        let want = naive_dtft(&seq, 0.93, 16);
        for k in 0..16 {
            for d in 0..3 {
                assert!((got.get(k, d) - want[k][d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bellman_of_zero_is_expected_next_embedding() {
        let mut rng = stream(1, 0);
        let mdp = TabularMdp::random(&mut rng, 4, 2, 0.9, 0.3).unwrap();
        let pi = TabularPolicy::random(&mut rng, 4, 2);
        let cfg = DtftConfig::for_mdp(&mdp, 8, true).unwrap();
        let out = apply_bellman_dtft(&DtftField::zeros(cfg, 4, 2), &mdp, &pi).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let e = mdp.expected_next_embedding(s, a);
                for k in 0..cfg.stored_bins() {
                    for d in 0..4 {
                        assert_eq!(out.get(s, a).get(k, d), C64::from(e[d]));
                    }
                }
            }
        }
    }

    fn random_field<R: Rng>(rng: &mut R, cfg: DtftConfig, ns: usize, na: usize, scale: f64) -> DtftField {
        let entries = (0..ns * na)
            .map(|_| {
                let v = (0..cfg.stored_bins() * cfg.dim)
                    .map(|_| C64::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
                    .collect();
                DtftMatrix::from_values(cfg.l, cfg.dim, cfg.half_spectrum, v).unwrap()
            })
            .collect();
        DtftField::from_entries(cfg, ns, na, entries).unwrap()
    }

    #[test]
    fn bellman_matches_naive_triple_loop() {
        let mut rng = stream(2, 0);
        let mdp = TabularMdp::random(&mut rng, 4, 3, 0.8, 0.2).unwrap();
        let pi = TabularPolicy::random(&mut rng, 4, 3);
        let cfg = DtftConfig::for_mdp(&mdp, 6, false).unwrap();
        let f = random_field(&mut rng, cfg, 4, 3, 3.0);
        let got = apply_bellman_dtft(&f, &mdp, &pi).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                for k in 0..6 {
                    for d in 0..4 {
                        let mut acc = C64::ZERO;
                        for sp in 0..4 {
                            for ap in 0..3 {
                                acc += f.get(sp, ap).get(k, d).scale(mdp.next_dist(s, a)[sp] * pi.action_dist(sp)[ap]);
                            }
                        }
                        let gk = C64::cis(-2.0 * std::f64::consts::PI * k as f64 / 6.0).scale(0.8);
                        let want = C64::from(mdp.expected_next_embedding(s, a)[d]) + gk * acc;
                        assert!((got.get(s, a).get(k, d) - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_mismatched_config() {
        let mdp = three_cycle(0.9);
        let pi = TabularPolicy::uniform(3, 1);
        let bad = DtftConfig::new(8, 2, 0.9, true).unwrap();
        assert!(apply_bellman_dtft(&DtftField::zeros(bad, 3, 1), &mdp, &pi).is_err());
        let bad_gamma = DtftConfig::new(8, 1, 0.5, true).unwrap();
        assert!(apply_bellman_dtft(&DtftField::zeros(bad_gamma, 3, 1), &mdp, &pi).is_err());
        assert!(DtftConfig::new(7, 1, 0.5, true).is_err());
    }

    #[test]
    fn single_state_closed_form() {
        let mdp = single_state(0.5);
        let pi = TabularPolicy::uniform(1, 1);
        let cfg = DtftConfig::for_mdp(&mdp, 4, false).unwrap();
        let sol = solve_dtft_fixed_point(&mdp, &pi, cfg, 1e-10, 10_000).unwrap();
        assert!(sol.converged);
        let m = sol.field.get(0, 0);
        let expect = [C64::new(2.0, 0.0), C64::new(0.8, -0.4), C64::new(2.0 / 3.0, 0.0), C64::new(0.8, 0.4)];
        for (k, e) in expect.iter().enumerate() {
            let closed = C64::ONE / (C64::ONE - C64::cis(-std::f64::consts::PI * k as f64 / 2.0).scale(0.5));
            assert!((closed - *e).abs() < 1e-15);
            assert!((m.get(k, 0) - *e).abs() < 1e-9);
        }
        // the exact fixed point is unchanged by 𝒯
        let exact =
            DtftField::from_entries(cfg, 1, 1, vec![DtftMatrix::from_values(4, 1, false, expect.to_vec()).unwrap()])
                .unwrap();
        assert!(apply_bellman_dtft(&exact, &mdp, &pi).unwrap().distance(&exact) < 1e-12);
    }

    #[test]
    fn three_cycle_matches_rollout() {
        let mdp = three_cycle(0.9);
        let pi = TabularPolicy::uniform(3, 1);
        let cfg = DtftConfig::for_mdp(&mdp, 16, false).unwrap();
        let sol = solve_dtft_fixed_point(&mdp, &pi, cfg, 1e-10, 100_000).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= a_priori_iterations(&mdp, 1e-10));
        for s in 0..3 {
            let rollout: Vec<Vec<f64>> = (1..=600).map(|n| vec![((s + n) % 3) as f64]).collect();
            let oracle = dtft_of_sequence(&rollout, 0.9, 16).unwrap().matrix;
            assert!(sol.field.get(s, 0).max_abs_diff(&oracle) < 1e-8);
        }
    }

    #[test]
    fn zero_gamma_field_is_one_step_expectation() {
        let mut rng = stream(3, 0);
        let mdp = TabularMdp::random(&mut rng, 3, 2, 0.0, 0.0).unwrap();
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let cfg = DtftConfig::for_mdp(&mdp, 8, true).unwrap();
        let sol = solve_dtft_fixed_point(&mdp, &pi, cfg, 1e-10, 100).unwrap();
        for s in 0..3 {
            for a in 0..2 {
                let e = mdp.expected_next_embedding(s, a);
                for k in 0..cfg.stored_bins() {
                    for d in 0..3 {
                        assert_eq!(sol.field.get(s, a).get(k, d), C64::from(e[d]));
                    }
                }
                let r = recover_state(&sol.field, s, a, 1, 1e-12).unwrap();
                for (x, y) in r.state.iter().zip(&e) {
                    assert!((x - y).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let mdp = three_cycle(0.9);
        let cfg = DtftConfig::for_mdp(&mdp, 8, true).unwrap();
        let sol = solve_dtft_fixed_point(&mdp, &TabularPolicy::uniform(3, 1), cfg, 1e-10, 1).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn direct_solver_agrees_with_iteration() {
        let mut rng = stream(6, 0);
        for _ in 0..5 {
            let mdp = TabularMdp::random(&mut rng, 5, 2, 0.9, 0.4).unwrap();
            let pi = TabularPolicy::random(&mut rng, 5, 2);
            let cfg = DtftConfig::for_mdp(&mdp, 16, true).unwrap();
            let iter = solve_dtft_fixed_point(&mdp, &pi, cfg, 1e-12, 100_000).unwrap();
            let direct = solve_dtft_direct(&mdp, &pi, cfg).unwrap();
            assert!(iter.field.distance(&direct) < 1e-10);
        }
    }

    #[test]
    fn contraction_examples() {
        let mut rng = stream(7, 0);
        let mdp = TabularMdp::random(&mut rng, 5, 2, 0.9, 0.3).unwrap();
        let pi = TabularPolicy::random(&mut rng, 5, 2);
        let cfg = DtftConfig::for_mdp(&mdp, 8, true).unwrap();
        let f = random_field(&mut rng, cfg, 5, 2, 1.0);
        assert_eq!(contraction_check(&f, &f, &mdp, &pi).unwrap(), (0.0, 0.0));
        for _ in 0..100 {
            let f2 = random_field(&mut rng, cfg, 5, 2, 2.0);
            let (lhs, rhs) = contraction_check(&f, &f2, &mdp, &pi).unwrap();
            assert!(lhs <= rhs + 1e-12);
        }
    }

    #[test]
    fn contraction_equality_for_constant_offset() {
        // deterministic MDP, F₂ = F₁ + C everywhere: 𝒯F₁ − 𝒯F₂ = −ΓC, and
        // ‖ΓC‖ = γ max_k ‖C_k‖ = γ‖F₁ − F₂‖
        let mut rng = stream(8, 0);
        let mdp = TabularMdp::deterministic(&[vec![1, 2], vec![2, 0], vec![0, 1]], vec![0.0; 3], 0, 0.7, None).unwrap();
        let pi = TabularPolicy::random(&mut rng, 3, 2);
        let cfg = DtftConfig::for_mdp(&mdp, 8, true).unwrap();
        let f1 = random_field(&mut rng, cfg, 3, 2, 1.0);
        let c = random_field(&mut rng, cfg, 1, 1, 1.0).get(0, 0).clone();
        let mut f2 = f1.clone();
        for e in f2.entries.iter_mut() {
            for (x, y) in e.values.iter_mut().zip(c.values()) {
                *x += *y;
            }
        }
        let (lhs, rhs) = contraction_check(&f1, &f2, &mdp, &pi).unwrap();
        assert!((lhs - 0.7 * c.max_row_norm()).abs() < 1e-12);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn half_spectrum_round_trip() {
        let mdp = single_state(0.5);
        let pi = TabularPolicy::uniform(1, 1);
        let full =
            solve_dtft_fixed_point(&mdp, &pi, DtftConfig::for_mdp(&mdp, 8, false).unwrap(), 1e-12, 1000).unwrap().field;
        let back = full.halve().expand().unwrap();
        assert!(back.max_abs_diff(&full) <= 1e-15);

        let mut rng = stream(10, 0);
        let mdp = TabularMdp::random(&mut rng, 4, 2, 0.95, 0.2).unwrap();
        let pi = TabularPolicy::random(&mut rng, 4, 2);
        let half = solve_dtft_fixed_point(&mdp, &pi, DtftConfig::for_mdp(&mdp, 16, true).unwrap(), 1e-10, 10_000)
            .unwrap()
            .field;
        for e in half.entries() {
            for k in [0, 8] {
                assert!(e.row(k).iter().all(|z| z.im.abs() <= 1e-10));
            }
        }
        assert!(half.expand().is_ok());
    }

    #[test]
    fn expand_rejects_bad_input() {
        let full = DtftMatrix::zeros(8, 1, false);
        assert!(expand_half_spectrum(&full).is_err());
        let mut half = DtftMatrix::zeros(8, 1, true);
        half.row_mut(0)[0] = C64::new(1.0, 0.5);
        assert!(expand_half_spectrum(&half).is_err());
    }

    #[test]
    fn recovery_on_three_cycle() {
        let mdp = three_cycle(0.9);
        let pi = TabularPolicy::uniform(3, 1);
        let cfg = DtftConfig::for_mdp(&mdp, 128, true).unwrap();
        let field = solve_dtft_fixed_point(&mdp, &pi, cfg, 1e-12, 100_000).unwrap().field;
        let bound = 0.9f64.powi(128) / (1.0 - 0.9);
        for s in 0..3 {
            for k in 1..=5 {
                let r = recover_state(&field, s, 0, k, 1e-9).unwrap();
                let truth = ((s + k) % 3) as f64;
                assert!((r.state[0] - truth).abs() <= bound + 1e-8, "s={s} k={k}: {}", r.state[0]);
                assert!(!r.aliasing);
            }
        }
        assert!(recover_state(&field, 0, 0, 129, 1e-6).unwrap().aliasing);
        assert!(recover_state(&field, 0, 0, 0, 1e-6).is_err());
    }
}
