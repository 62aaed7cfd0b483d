//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use setembed::Matrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Euclidean projection onto {0 ≤ α ≤ C, yᵀα = 0}: α = clip(v − νy), with ν
/// found by bisection on the monotone constraint residual.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |nu: f64| -> Vec<f64> { v.iter().zip(y).map(|(&vi, &yi)| (vi - nu * yi).clamp(0.0, c)).collect() };
    let residual = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(a, y)| a * y).sum() };
    let span = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    while hi - lo > 1e-15 * span {
        let mid = 0.5 * (lo + hi);
        if residual(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximum of the SVM dual Σα − ½αᵀQα over the feasible set, by
/// accelerated projected gradient (FISTA with adaptive restart) on the
/// dense Q, iterated until the projected-gradient step moves less than `tol`.
pub fn svm_dual_oracle(x: &Matrix, y: &[f64], c: f64, tol: f64) -> f64 {
    let n = x.rows();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| a * b).sum();
            q[i * n + j] = y[i] * y[j] * k;
        }
    }
    // Lipschitz constant: largest eigenvalue by power iteration, padded
    let mut v = vec![1.0; n];
    let mut lip = 1.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i * n + j] * v[j]).sum()).collect();
        let nrm = w.iter().map(|t| t * t).sum::<f64>().sqrt();
        if nrm == 0.0 {
            break;
        }
        lip = nrm / v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v = w.iter().map(|t| t / nrm).collect();
    }
    let lip = lip * 1.01 + 1e-12;
    let objective = |a: &[f64]| -> f64 {
        let quad: f64 = (0..n).map(|i| a[i] * (0..n).map(|j| q[i * n + j] * a[j]).sum::<f64>()).sum();
        a.iter().sum::<f64>() - 0.5 * quad
    };
    let qv = |a: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..n).map(|j| q[i * n + j] * a[j]).sum()).collect() };
    let mut alpha = vec![0.0; n];
    let mut z = alpha.clone();
    let mut t = 1.0f64;
    for k in 0..1_000_000 {
        // gradient of the minimized form ½αᵀQα − Σα at z
        let g: Vec<f64> = qv(&z).into_iter().map(|v| v - 1.0).collect();
        let step: Vec<f64> = (0..n).map(|i| z[i] - g[i] / lip).collect();
        let next = project(&step, y, c);
        // gradient-based adaptive restart
        let uphill: f64 = (0..n).map(|i| (z[i] - next[i]) * (next[i] - alpha[i])).sum();
        if uphill > 0.0 {
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = (0..n).map(|i| next[i] + (t - 1.0) / t_next * (next[i] - alpha[i])).collect();
        alpha = next;
        t = t_next;
        if k % 10 == 0 {
            // projected-gradient stationarity at the current iterate
            let g: Vec<f64> = qv(&alpha).into_iter().map(|v| v - 1.0).collect();
            let probe: Vec<f64> = (0..n).map(|i| alpha[i] - g[i]).collect();
            let p = project(&probe, y, c);
            let residual = p.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if residual < tol {
                break;
            }
        }
    }
    objective(&alpha)
}

/// AUC by comparing every positive with every negative.
pub fn auc_brute_force(scores: &[f64], same: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if same[i] && !same[j] {
                den += 1.0;
                if si > sj {
                    num += 1.0;
                } else if si == sj {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// Best accuracy over every threshold that distinguishes score sets.
pub fn accuracy_brute_force(scores: &[f64], same: &[bool]) -> f64 {
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.push(f64::NEG_INFINITY);
    let mut best = 0usize;
    for &t in &candidates {
        let correct = scores.iter().zip(same).filter(|(&s, &p)| (s > t) == p).count();
        best = best.max(correct);
    }
    best as f64 / scores.len() as f64
}

/// Central differences of a scalar function.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect()
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    // Box–Muller, independent of the library's sampler
    let data = (0..rows * cols)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen();
            scale * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Random binary instance with both labels present.
pub fn random_svm_instance(rng: &mut impl Rng, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let x = gaussian_matrix(rng, n, d, 1.0);
    let mut y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    // shift positives so some instances are separable and some are not
    let shift: f64 = rng.gen_range(0.0..2.0);
    let mut data = x.into_vec();
    for i in 0..n {
        if y[i] > 0.0 {
            data[i * d] += shift;
        }
    }
    (Matrix::from_vec(n, d, data), y)
}
