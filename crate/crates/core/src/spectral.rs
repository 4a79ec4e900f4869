//! Structure of induced Markov chains: recurrent classes, graph periods and
//! the asymptotic period of the distribution sequence `μ₀, Pμ₀, P²μ₀, …`.
//!
//! The period of a class is computed exactly on the support graph; the
//! modulus-one eigenvalue count is a numerical cross-check.

use std::collections::VecDeque;

use serde::Serialize;

use crate::eigen::{self, MAX_EIGEN_DIM};
use crate::error::{invalid, Error, Result};
use crate::linalg::{gcd, lcm, Mat};

/// Transition entries at or below this are not edges of the support graph.
pub const EDGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CanonicalDecomposition {
    /// Closed irreducible classes, each sorted, ordered by smallest member.
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient_states: Vec<usize>,
    /// Recurrent classes in order, then transient states. Reindexing the chain
    /// by this permutation yields the block form `[R₁ … R_α 0; T₁ … T_α Q]`.
    pub permutation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PeriodReport {
    pub class_periods: Vec<u64>,
    pub global_period: u64,
    pub eigen_counts: Option<Vec<usize>>,
    pub empirical_period: Option<usize>,
}

fn check_stochastic(chain: &Mat) -> Result<()> {
    let n = chain.rows();
    if chain.cols() != n || n == 0 {
        return Err(invalid("transition matrix must be square and non-empty"));
    }
    for i in 0..n {
        let row = chain.row(i);
        if row.iter().any(|&x| !(x >= 0.0)) {
            return Err(invalid(format!("row {i} has a negative or NaN entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn successors(chain: &Mat, u: usize) -> impl Iterator<Item = usize> + '_ {
    chain.row(u).iter().enumerate().filter(|(_, &p)| p > EDGE_EPS).map(|(v, _)| v)
}

/// Tarjan's algorithm, iterative. Components are returned in reverse
/// topological order of the condensation.
fn strongly_connected_components(chain: &Mat) -> Vec<Vec<usize>> {
    let n = chain.rows();
    let adj: Vec<Vec<usize>> = (0..n).map(|u| successors(chain, u).collect()).collect();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut next = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (u, ref mut edge)) = call.last_mut() {
            if let Some(&v) = adj[u].get(*edge) {
                *edge += 1;
                if index[v] == usize::MAX {
                    index[v] = next;
                    low[v] = next;
                    next += 1;
                    stack.push(v);
                    on_stack[v] = true;
                    call.push((v, 0));
                } else if on_stack[v] {
                    low[u] = low[u].min(index[v]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[u]);
                }
                if low[u] == index[u] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack[w] = false;
                        comp.push(w);
                        if w == u {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    comps.push(comp);
                }
            }
        }
    }
    comps
}

/// Splits the states into closed irreducible classes and transient states.
pub fn decompose(chain: &Mat) -> Result<CanonicalDecomposition> {
    check_stochastic(chain)?;
    let n = chain.rows();
    let comps = strongly_connected_components(chain);
    let mut comp_of = vec![0; n];
    for (c, comp) in comps.iter().enumerate() {
        for &s in comp {
            comp_of[s] = c;
        }
    }
    let mut recurrent = Vec::new();
    let mut transient = Vec::new();
    for (c, comp) in comps.iter().enumerate() {
        let closed = comp.iter().all(|&u| successors(chain, u).all(|v| comp_of[v] == c));
        if closed {
            recurrent.push(comp.clone());
        } else {
            transient.extend_from_slice(comp);
        }
    }
    recurrent.sort_by_key(|c| c[0]);
    transient.sort_unstable();
    let permutation = recurrent.iter().flatten().chain(&transient).copied().collect();
    Ok(CanonicalDecomposition { recurrent_classes: recurrent, transient_states: transient, permutation })
}

/// Period of a closed irreducible class: the gcd of all cycle lengths,
/// computed as the gcd of `level(u) + 1 − level(v)` over edges `u → v` of a
/// BFS from the class's smallest state.
pub fn class_period(chain: &Mat, class: &[usize]) -> Result<u64> {
    let n = chain.rows();
    if class.is_empty() {
        return Err(invalid("empty class"));
    }
    let mut member = vec![false; n];
    for &s in class {
        if s >= n {
            return Err(invalid(format!("state {s} out of range")));
        }
        member[s] = true;
    }
    for &u in class {
        if let Some(v) = successors(chain, u).find(|&v| !member[v]) {
            return Err(invalid(format!("class is not closed: edge {u} -> {v} leaves it")));
        }
    }
    let anchor = *class.iter().min().unwrap();
    let mut level = vec![i64::MIN; n];
    level[anchor] = 0;
    let mut queue = VecDeque::from([anchor]);
    let mut period = 0u64;
    while let Some(u) = queue.pop_front() {
        for v in successors(chain, u) {
            if level[v] == i64::MIN {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                period = gcd(period, (level[u] + 1 - level[v]).unsigned_abs());
            }
        }
    }
    if class.iter().any(|&s| level[s] == i64::MIN) {
        return Err(invalid("class is not irreducible"));
    }
    Ok(period.max(1))
}

/// Class periods, their lcm, and (when every class fits the eigensolver) the
/// modulus-one eigenvalue counts as a cross-check.
pub fn asymptotic_period(chain: &Mat, decomposition: &CanonicalDecomposition) -> Result<PeriodReport> {
    let class_periods =
        decomposition.recurrent_classes.iter().map(|c| class_period(chain, c)).collect::<Result<Vec<_>>>()?;
    let global_period = class_periods.iter().fold(1, |acc, &d| lcm(acc, d));
    let eigen_counts = if decomposition.recurrent_classes.iter().all(|c| c.len() <= MAX_EIGEN_DIM) {
        let counts: Result<Vec<usize>> = decomposition
            .recurrent_classes
            .iter()
            .map(|c| eigen::modulus_one_eigencount(&renormalized_block(chain, c), 1e-8))
            .collect();
        match counts {
            Ok(c) => Some(c),
            Err(Error::EigenNoConvergence(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    if let Some(counts) = &eigen_counts {
        for (i, (&c, &d)) in counts.iter().zip(&class_periods).enumerate() {
            if c as u64 != d {
                return Err(Error::Internal(format!("class {i}: graph period {d} but {c} eigenvalues of modulus one")));
            }
        }
    }
    Ok(PeriodReport { class_periods, global_period, eigen_counts, empirical_period: None })
}

/// Restriction of the chain to a closed class. Rows are renormalized to
/// absorb sub-threshold leakage.
fn renormalized_block(chain: &Mat, class: &[usize]) -> Mat {
    let mut block = chain.submatrix(class);
    for i in 0..block.rows() {
        let row = block.row_mut(i);
        let s: f64 = row.iter().sum();
        for x in row.iter_mut() {
            *x /= s;
        }
    }
    block
}

/// `μ₀, μ₁, …, μ_n` with `μ_{t+1} = μ_tᵀ P`.
pub fn distribution_evolution(chain: &Mat, mu0: &[f64], n_steps: usize) -> Result<Vec<Vec<f64>>> {
    if mu0.len() != chain.rows() {
        return Err(invalid("initial distribution length does not match the chain"));
    }
    let total: f64 = mu0.iter().sum();
    if mu0.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-10 {
        return Err(invalid("initial distribution is not a probability vector"));
    }
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(mu0.to_vec());
    for t in 0..n_steps {
        let next = chain.vecmat(&out[t]);
        out.push(next);
    }
    Ok(out)
}

/// Smallest `p` with `‖v_{t+p} − v_t‖_∞ ≤ tol` throughout the tail.
pub fn detect_empirical_period(tail: &[Vec<f64>], tol: f64) -> Result<usize> {
    let max_p = tail.len() / 2;
    'candidates: for p in 1..=max_p {
        for t in 0..tail.len() - p {
            let dev = tail[t + p].iter().zip(&tail[t]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if dev > tol {
                continue 'candidates;
            }
        }
        return Ok(p);
    }
    Err(Error::NoPeriod(max_p))
}

/// Evolves `mu0` for `horizon` steps, discards the first half as burn-in and
/// detects the period of the rest.
pub fn empirical_period(chain: &Mat, mu0: &[f64], horizon: usize, tol: f64) -> Result<usize> {
    let seq = distribution_evolution(chain, mu0, horizon)?;
    detect_empirical_period(&seq[seq.len() / 2..], tol)
}

/// Random chains with prescribed class structure.
pub mod generate {
    use rand::seq::SliceRandom;
    use rand::Rng;

    use crate::linalg::Mat;
    use crate::mdp::normalize;

    /// Irreducible stochastic block on `size` states with period exactly
    /// `period`: states are split into `period` non-empty groups and every
    /// state moves to a random full-support distribution over the next group.
    pub fn periodic_class<R: Rng + ?Sized>(rng: &mut R, size: usize, period: usize) -> Mat {
        assert!(period >= 1 && size >= period);
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(rng);
        let mut group_of = vec![0; size];
        for (i, &s) in order.iter().enumerate() {
            // first `period` states seed the groups, the rest land randomly
            group_of[s] = if i < period { i } else { rng.gen_range(0..period) };
        }
        let mut m = Mat::zeros(size, size);
        for u in 0..size {
            let g = (group_of[u] + 1) % period;
            let row = m.row_mut(u);
            for v in 0..size {
                if group_of[v] == g {
                    row[v] = rng.gen::<f64>() + 0.05;
                }
            }
            normalize(row);
        }
        m
    }

    /// Random irreducible block: sparse random edges plus a Hamiltonian cycle.
    /// The period is whatever the support graph dictates.
    pub fn sparse_irreducible<R: Rng + ?Sized>(rng: &mut R, size: usize, density: f64) -> Mat {
        let mut order: Vec<usize> = (0..size).collect();
        order.shuffle(rng);
        let mut m = Mat::zeros(size, size);
        for i in 0..size {
            m[(order[i], order[(i + 1) % size])] = rng.gen::<f64>() + 0.05;
        }
        for u in 0..size {
            for v in 0..size {
                if m[(u, v)] == 0.0 && rng.gen::<f64>() < density {
                    m[(u, v)] = rng.gen::<f64>() + 0.05;
                }
            }
            normalize(m.row_mut(u));
        }
        m
    }

    /// Block-diagonal chain from the given closed classes followed by
    /// `n_transient` transient states. Each transient state keeps at most
    /// `0.5` of its mass among transients and leaks the rest into randomly
    /// chosen recurrent states.
    pub fn block_chain<R: Rng + ?Sized>(rng: &mut R, classes: &[Mat], n_transient: usize) -> Mat {
        let n_rec: usize = classes.iter().map(Mat::rows).sum();
        let n = n_rec + n_transient;
        let mut m = Mat::zeros(n, n);
        let mut off = 0;
        for c in classes {
            for i in 0..c.rows() {
                for j in 0..c.cols() {
                    m[(off + i, off + j)] = c[(i, j)];
                }
            }
            off += c.rows();
        }
        for t in n_rec..n {
            let row = m.row_mut(t);
            let stay = rng.gen_range(0.0..0.5);
            for v in n_rec..n {
                row[v] = rng.gen::<f64>();
            }
            let s: f64 = row[n_rec..].iter().sum();
            for v in n_rec..n {
                row[v] *= stay / s;
            }
            // leak into at least one state of a random class, plus random others
            let target = rng.gen_range(0..n_rec);
            row[target] += (1.0 - stay) * 0.5;
            let mut rest = vec![0.0; n_rec];
            for x in rest.iter_mut() {
                *x = rng.gen::<f64>();
            }
            let rs: f64 = rest.iter().sum();
            for (v, x) in rest.into_iter().enumerate() {
                row[v] += (1.0 - stay) * 0.5 * x / rs;
            }
            normalize(row);
        }
        m
    }

    /// Uniformly random point of the probability simplex.
    pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        normalize(&mut v);
        v
    }
}
