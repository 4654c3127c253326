use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::factor::Factorization;
use super::sparse::SparseSym;
use crate::error::{Error, Result};
use crate::numeric::{dot, norm2};

/// Eigenvalue with its M-normalised reduced vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub guard: usize,
    /// Relative gap below which neighbouring eigenvalues count as one cluster.
    pub cluster_tol: f64,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 400, guard: 3, cluster_tol: 1e-6, seed: 0x5eed }
    }
}

/// Smallest `count` eigenpairs of `K v = λ M v` with default options.
pub fn solve_eigs(k: &SparseSym, m: &SparseSym, count: usize, shift: Option<f64>) -> Result<Vec<EigenPair>> {
    solve_eigs_with(k, m, count, shift, &EigenOptions::default())
}

fn factor_shifted(k: &SparseSym, m: &SparseSym, shift: f64) -> Result<Factorization> {
    let mut sigma = shift;
    let mut last = None;
    for attempt in 0..4 {
        match k.axpy(-sigma, m).and_then(|a| Factorization::new(&a)) {
            Ok(f) => return Ok(f),
            Err(e) => last = Some(e),
        }
        sigma = shift * (1.0 + 1e-6 * (attempt + 1) as f64) + 1e-9;
    }
    Err(last.unwrap_or_else(|| Error::Factorization("shift".into())))
}

fn m_orthonormalize(x: &mut [Vec<f64>], m: &SparseSym, rng: &mut ChaCha8Rng) {
    let mut mx: Vec<Vec<f64>> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        for attempt in 0..2 {
            for _pass in 0..2 {
                for j in 0..i {
                    let c = dot(&x[i], &mx[j]);
                    let (head, tail) = x.split_at_mut(i);
                    tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= c * b);
                }
            }
            let mi = m.matvec(&x[i]);
            let nrm = dot(&x[i], &mi).sqrt();
            if nrm > 1e-300 && nrm.is_finite() || attempt == 1 {
                x[i].iter_mut().for_each(|v| *v /= nrm);
                mx.push(mi.into_iter().map(|v| v / nrm).collect());
                break;
            }
            x[i].iter_mut().for_each(|v| *v = rng.random::<f64>() - 0.5);
        }
    }
}

/// Rayleigh–Ritz on an M-orthonormal block; returns sorted Ritz values and vectors.
fn rayleigh_ritz(x: &[Vec<f64>], k: &SparseSym) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = x.len();
    let kx: Vec<Vec<f64>> = x.iter().map(|v| k.matvec(v)).collect();
    let mut a = Mat::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..=i {
            let v = 0.5 * (dot(&x[i], &kx[j]) + dot(&x[j], &kx[i]));
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let evd = a.self_adjoint_eigen(Side::Lower).expect("small symmetric eigenproblem");
    let s = evd.S().column_vector();
    let u = evd.U();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let n = x[0].len();
    let vals = order.iter().map(|&i| s[i]).collect();
    let vecs = order
        .iter()
        .map(|&c| {
            let mut v = vec![0.0; n];
            for (r, xr) in x.iter().enumerate() {
                let w = u[(r, c)];
                v.iter_mut().zip(xr).for_each(|(a, b)| *a += w * b);
            }
            v
        })
        .collect();
    (vals, vecs)
}

/// Shift-invert subspace iteration with Rayleigh–Ritz projection.
pub fn solve_eigs_with(k: &SparseSym, m: &SparseSym, count: usize, shift: Option<f64>, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    let n = k.n();
    if count == 0 || count > n {
        return Err(Error::Invalid(format!("cannot compute {count} eigenpairs of a {n}-dimensional problem")));
    }
    if m.n() != n {
        return Err(Error::Shape(format!("K is {n}, M is {}", m.n())));
    }
    let knorm = k.norm_inf();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut p = (count + opts.guard).max(2 * count).min(n);
    let mut x: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();

    let (_sigma, factor) = match shift {
        Some(s) => (s, factor_shifted(k, m, s)?),
        None => {
            let f0 = factor_shifted(k, m, 0.0)?;
            for _ in 0..4 {
                x = x.iter().map(|v| f0.solve(&m.matvec(v))).collect();
                m_orthonormalize(&mut x, m, &mut rng);
            }
            let (vals, vecs) = rayleigh_ritz(&x, k);
            x = vecs;
            let s = 0.9 * vals[0];
            (s, factor_shifted(k, m, s)?)
        }
    };

    let mut want = count;
    let mut worst = f64::INFINITY;
    for _iter in 0..opts.max_iter {
        let mut rhs = Mat::<f64>::zeros(n, p);
        for (c, v) in x.iter().enumerate() {
            let mv = m.matvec(v);
            for r in 0..n {
                rhs[(r, c)] = mv[r];
            }
        }
        let y = factor.solve_mat(&rhs);
        x = (0..p).map(|c| (0..n).map(|r| y[(r, c)]).collect()).collect();
        m_orthonormalize(&mut x, m, &mut rng);
        let (vals, vecs) = rayleigh_ritz(&x, k);
        x = vecs;
        // Extend the wanted set so that clusters are never cut.
        while want < p - 1 && (vals[want] - vals[want - 1]).abs() <= opts.cluster_tol * vals[want - 1].abs() {
            want += 1;
        }
        if want + 2 > p && p < n {
            let extra = (want + 2 - p).min(n - p);
            for _ in 0..extra {
                x.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
            }
            p += extra;
            m_orthonormalize(&mut x, m, &mut rng);
            continue;
        }
        let mut res = Vec::with_capacity(want);
        for i in 0..want {
            let kv = k.matvec(&x[i]);
            let mv = m.matvec(&x[i]);
            let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - vals[i] * b).collect();
            res.push(norm2(&r) / (knorm * norm2(&x[i])));
        }
        worst = res.iter().copied().fold(0.0, f64::max);
        if worst <= opts.tol {
            return Ok((0..want)
                .map(|i| {
                    let mut v = x[i].clone();
                    let big = v.iter().enumerate().fold(0, |b, (j, a)| if a.abs() > v[b].abs() * (1.0 + 1e-9) { j } else { b });
                    if v[big] < 0.0 {
                        v.iter_mut().for_each(|a| *a = -*a);
                    }
                    EigenPair { lambda: vals[i], vector: v, residual: res[i] }
                })
                .collect());
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: worst })
}

/// Groups ascending eigenvalues into clusters of relative gap below `tol`.
pub fn clusters(lambdas: &[f64], tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=lambdas.len() {
        if i == lambdas.len() || (lambdas[i] - lambdas[i - 1]).abs() > tol * lambdas[i - 1].abs() {
            out.push(start..i);
            start = i;
        }
    }
    out
}
