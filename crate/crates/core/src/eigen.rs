//! Eigenvalues of small dense real matrices: Householder reduction to upper
//! Hessenberg form followed by Francis double-shift QR iteration with
//! exceptional shifts.

use crate::complex::C64;
use crate::error::{invalid, Error, Result};
use crate::linalg::Mat;

/// Largest matrix accepted by [`modulus_one_eigencount`].
pub const MAX_EIGEN_DIM: usize = 16;
/// Total QR sweeps allowed across all deflations.
pub const MAX_QR_ITERATIONS: usize = 500;

/// Reduces `a` to upper Hessenberg form by Householder similarity
/// transforms. Eigenvalues are preserved.
pub fn hessenberg(a: &Mat) -> Mat {
    let n = a.rows();
    let mut h = a.clone();
    if n < 3 {
        return h;
    }
    let mut v = vec![0.0; n];
    for k in 0..n - 2 {
        let norm: f64 = (k + 1..n).map(|i| h[(i, k)] * h[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if h[(k + 1, k)] > 0.0 { -norm } else { norm };
        v.fill(0.0);
        for i in k + 1..n {
            v[i] = h[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vnorm;
        }
        // H ← (I − 2vvᵀ) H
        for j in 0..n {
            let dot: f64 = (k + 1..n).map(|i| v[i] * h[(i, j)]).sum();
            for i in k + 1..n {
                h[(i, j)] -= 2.0 * v[i] * dot;
            }
        }
        // H ← H (I − 2vvᵀ)
        for i in 0..n {
            let dot: f64 = (k + 1..n).map(|j| h[(i, j)] * v[j]).sum();
            for j in k + 1..n {
                h[(i, j)] -= 2.0 * dot * v[j];
            }
        }
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    h
}

fn sign(a: f64, b: f64) -> f64 {
    if b >= 0.0 {
        a.abs()
    } else {
        -a.abs()
    }
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues(a: &Mat) -> Result<Vec<C64>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(invalid("eigenvalues expects a square matrix"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = hessenberg(a);
    let mut out = vec![C64::ZERO; n];
    let eps = f64::EPSILON;
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += h[(i, j)].abs();
        }
    }
    let mut total_iters = 0usize;
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r);
    let (mut x, mut y, mut z, mut w);
    while nn >= 0 {
        let mut its = 0;
        loop {
            // look for a single small subdiagonal element
            let mut l = nn;
            while l > 0 {
                let lu = l as usize;
                let mut s = h[(lu - 1, lu - 1)].abs() + h[(lu, lu)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if h[(lu, lu - 1)].abs() <= eps * s {
                    h[(lu, lu - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let nu = nn as usize;
            x = h[(nu, nu)];
            if l == nn {
                out[nu] = C64::new(x + t, 0.0);
                nn -= 1;
            } else {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
                if l == nn - 1 {
                    p = 0.5 * (y - x);
                    q = p * p + w;
                    z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + sign(z, p);
                        out[nu - 1] = C64::new(x + z, 0.0);
                        out[nu] = out[nu - 1];
                        if z != 0.0 {
                            out[nu] = C64::new(x - w / z, 0.0);
                        }
                    } else {
                        out[nu] = C64::new(x + p, -z);
                        out[nu - 1] = out[nu].conj();
                    }
                    nn -= 2;
                } else {
                    if total_iters >= MAX_QR_ITERATIONS {
                        return Err(Error::EigenNoConvergence(MAX_QR_ITERATIONS));
                    }
                    if its > 0 && its % 10 == 0 {
                        // exceptional shift
                        t += x;
                        for i in 0..=nu {
                            h[(i, i)] -= x;
                        }
                        let s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total_iters += 1;
                    let lu = l as usize;
                    let mut m = nu - 2;
                    loop {
                        z = h[(m, m)];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                        q = h[(m + 1, m + 1)] - z - r - s;
                        r = h[(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == lu {
                            break;
                        }
                        let u = h[(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..nu - 1 {
                        h[(i + 2, i)] = 0.0;
                        if i != m {
                            h[(i + 2, i - 1)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = h[(k, k - 1)];
                            q = h[(k + 1, k - 1)];
                            r = 0.0;
                            if k + 1 != nu {
                                r = h[(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = sign((p * p + q * q + r * r).sqrt(), p);
                        if s != 0.0 {
                            if k == m {
                                if l as usize != m {
                                    h[(k, k - 1)] = -h[(k, k - 1)];
                                }
                            } else {
                                h[(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                p = h[(k, j)] + q * h[(k + 1, j)];
                                if k + 1 != nu {
                                    p += r * h[(k + 2, j)];
                                    h[(k + 2, j)] -= p * z;
                                }
                                h[(k + 1, j)] -= p * y;
                                h[(k, j)] -= p * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for i in lu..=mmin {
                                p = x * h[(i, k)] + y * h[(i, k + 1)];
                                if k + 1 != nu {
                                    p += z * h[(i, k + 2)];
                                    h[(i, k + 2)] -= p * r;
                                }
                                h[(i, k + 1)] -= p * q;
                                h[(i, k)] -= p;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if !(l + 1 < nn) {
                break;
            }
        }
    }
    Ok(out)
}

/// Number of eigenvalues with `|λ| ≥ 1 − tol` of an irreducible stochastic
/// block. For such a block this equals its period.
pub fn modulus_one_eigencount(block: &Mat, tol: f64) -> Result<usize> {
    let n = block.rows();
    if block.cols() != n || n == 0 {
        return Err(invalid("block must be square and non-empty"));
    }
    if n > MAX_EIGEN_DIM {
        return Err(invalid(format!("block is {n}x{n}, eigensolver cap is {MAX_EIGEN_DIM}")));
    }
    for i in 0..n {
        let row = block.row(i);
        if row.iter().any(|&x| x < 0.0) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("block row {i} is not a probability vector")));
        }
    }
    let ev = eigenvalues(block)?;
    Ok(ev.iter().filter(|l| l.abs() >= 1.0 - tol).count())
}
