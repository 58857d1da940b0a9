//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use palms_core::{ClassLabel, Dataset, ModelParams, SolverSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum();
    (-gamma * d).exp()
}

/// Exact dual optimum by enumerating every assignment of each variable to
/// `{0, C, free}` and solving the stationarity system on the free set.
#[derive(Clone, Debug)]
pub struct QpOptimum {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// `sum a - 1/2 a^T Q a`.
    pub objective: f64,
}

pub fn brute_force_dual(xs: &[Vec<f64>], ys: &[f64], c: f64, gamma: f64) -> QpOptimum {
    let n = xs.len();
    assert!(n <= 10, "enumeration is 3^n");
    let k: Vec<Vec<f64>> = xs.iter().map(|a| xs.iter().map(|b| kernel(a, b, gamma)).collect()).collect();
    let q = |i: usize, j: usize| ys[i] * ys[j] * k[i][j];
    let objective = |a: &[f64]| {
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += a[i] * a[j] * q(i, j);
            }
        }
        a.iter().sum::<f64>() - 0.5 * quad
    };

    let mut best: Option<QpOptimum> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        // 0 -> at zero, 1 -> at C, 2 -> free
        let mut status = vec![0u8; n];
        let mut rem = code;
        for s in status.iter_mut() {
            *s = (rem % 3) as u8;
            rem /= 3;
        }
        let free: Vec<usize> = (0..n).filter(|&i| status[i] == 2).collect();
        let mut alpha: Vec<f64> = status.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let bias;
        if free.is_empty() {
            let eq: f64 = alpha.iter().zip(ys).map(|(a, y)| a * y).sum();
            if eq.abs() > 1e-9 * c.max(1.0) {
                continue;
            }
            bias = f64::NAN;
        } else {
            // unknowns: alpha_F, b
            // (Q a)_i + y_i b = 1 for i in F;  sum y a = 0
            let m = free.len() + 1;
            let mut a = vec![vec![0.0; m + 1]; m];
            for (r, &i) in free.iter().enumerate() {
                for (cidx, &j) in free.iter().enumerate() {
                    a[r][cidx] = q(i, j);
                }
                a[r][m - 1] = ys[i];
                let fixed: f64 = (0..n).filter(|&j| status[j] == 1).map(|j| q(i, j) * c).sum();
                a[r][m] = 1.0 - fixed;
            }
            for (cidx, &j) in free.iter().enumerate() {
                a[m - 1][cidx] = ys[j];
            }
            a[m - 1][m] = -(0..n).filter(|&j| status[j] == 1).map(|j| ys[j] * c).sum::<f64>();
            let Some(sol) = gauss_solve(a) else { continue };
            let feasible = free.iter().enumerate().all(|(r, _)| sol[r] >= -1e-12 && sol[r] <= c + 1e-12);
            if !feasible {
                continue;
            }
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r].clamp(0.0, c);
            }
            bias = sol[m - 1];
        }
        let obj = objective(&alpha);
        if best.as_ref().is_none_or(|b| obj > b.objective) {
            best = Some(QpOptimum {
                alpha,
                bias,
                objective: obj,
            });
        }
    }
    let mut best = best.expect("the all-zero point is always feasible");
    if best.bias.is_nan() {
        best.bias = bound_midpoint_bias(&best.alpha, ys, &k, c);
    }
    best
}

/// Bias when no variable is free: midpoint of the interval allowed by the
/// bound variables' KKT conditions.
fn bound_midpoint_bias(alpha: &[f64], ys: &[f64], k: &[Vec<f64>], c: f64) -> f64 {
    let n = alpha.len();
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for i in 0..n {
        let s: f64 = (0..n).map(|j| alpha[j] * ys[j] * k[i][j]).sum();
        // y_i (s + b) >= 1 when alpha_i = 0, <= 1 when alpha_i = C
        let edge = ys[i] - s;
        let at_zero = alpha[i] <= 0.0;
        let at_c = alpha[i] >= c;
        let lower = (at_zero && ys[i] > 0.0) || (at_c && ys[i] < 0.0);
        let upper = (at_zero && ys[i] < 0.0) || (at_c && ys[i] > 0.0);
        if lower {
            lo = lo.max(edge);
        }
        if upper {
            hi = hi.min(edge);
        }
    }
    (lo + hi) / 2.0
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
#[allow(clippy::needless_range_loop)]
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for cc in col..=m {
                    a[r][cc] -= f * a[col][cc];
                }
            }
        }
    }
    Some((0..m).map(|r| a[r][m] / a[r][r]).collect())
}

pub fn decision(opt: &QpOptimum, xs: &[Vec<f64>], ys: &[f64], gamma: f64, x: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .zip(&opt.alpha)
        .map(|((xi, yi), a)| a * yi * kernel(xi, x, gamma))
        .sum::<f64>()
        + opt.bias
}

/// Random instance with both classes present and pairwise-distinct points.
pub fn random_instance(rng: &mut ChaCha8Rng, max_points: usize, dims: usize) -> Dataset {
    loop {
        let n = rng.gen_range(2..=max_points);
        let rows: Vec<(Vec<f64>, ClassLabel)> = (0..n)
            .map(|_| {
                let x = (0..dims).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let y = if rng.gen_bool(0.5) { ClassLabel::One } else { ClassLabel::Zero };
                (x, y)
            })
            .collect();
        let counts = rows.iter().fold([0, 0], |mut c, r| {
            c[r.1.index()] += 1;
            c
        });
        if counts[0] == 0 || counts[1] == 0 {
            continue;
        }
        return Dataset::from_rows(rows).unwrap();
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Leave-one-out by literally removing each point and refitting from the
/// raw data.
pub fn naive_loocv(train: &Dataset, params: ModelParams, settings: &SolverSettings) -> Vec<bool> {
    train
        .iter()
        .map(|held| {
            let rest = train.filter(|p| p.id != held.id);
            let fit = palms_core::train_svc(&rest, params, settings).unwrap();
            fit.predict(&held.x).unwrap() == held.y
        })
        .collect()
}

/// Two overlapping Gaussian blobs in 2-D.
pub fn overlapping_blobs(seed: u64, per_class: usize, separation: f64, spread: f64) -> Dataset {
    use rand_distr::{Distribution, Normal};
    let mut r = rng(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    let mut rows = Vec::with_capacity(2 * per_class);
    for (label, cx) in [(ClassLabel::Zero, -separation / 2.0), (ClassLabel::One, separation / 2.0)] {
        for _ in 0..per_class {
            rows.push((vec![cx + noise.sample(&mut r), noise.sample(&mut r)], label));
        }
    }
    Dataset::from_rows(rows).unwrap()
}

pub fn data_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}
