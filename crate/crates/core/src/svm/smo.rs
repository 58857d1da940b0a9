//! Two-variable dual solver.
//!
//! Solves the soft-margin dual in minimization form
//!
//! ```text
//! min_a  1/2 a^T Q a - e^T a   s.t.  y^T a = 0,  0 <= a_t <= C
//! ```
//!
//! with `Q_ij = y_i y_j K(x_i, x_j)`. The first index of each pair is the
//! maximal violator; the second maximizes the second-order decrease of the
//! objective (Fan, Chen and Lin, 2005). The full `Q` matrix is held in memory;
//! training sets here are a few dozen points.

use super::SolverSettings;
use crate::error::{Error, Result};

/// Dense row-major symmetric kernel matrix.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = f(i, j);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        KernelMatrix { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// The matrix restricted to `rows` (in that order).
    pub fn restrict(&self, rows: &[usize]) -> KernelMatrix {
        let m = rows.len();
        let mut values = Vec::with_capacity(m * m);
        for &i in rows {
            let row = self.row(i);
            values.extend(rows.iter().map(|&j| row[j]));
        }
        KernelMatrix { n: m, values }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset: `f(x) = sum_i alpha_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    pub objective: f64,
    pub violation: f64,
    pub iterations: usize,
}

pub(crate) fn solve(kernel: &KernelMatrix, y: &[f64], c: f64, settings: &SolverSettings) -> Result<DualSolution> {
    let n = y.len();
    debug_assert_eq!(kernel.len(), n);
    let q = |i: usize, j: usize| y[i] * y[j] * kernel.get(i, j);

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let cap = settings.update_cap(n);
    let eps = settings.kkt_tolerance;
    let tau = settings.numerical_epsilon;

    let mut iterations = 0;
    let violation = loop {
        let (pair, gap) = select_pair(kernel, &alpha, &grad, y, c, tau);
        if gap < eps {
            break gap.max(0.0);
        }
        let Some((i, j)) = pair else { break 0.0 };
        if iterations >= cap {
            return Err(Error::NonConvergence {
                iterations,
                violation: gap,
                tolerance: eps,
            });
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (qii, qjj, qij) = (q(i, i), q(j, j), q(i, j));
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = tau;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = tau;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    };

    let bias = -offset(&alpha, &grad, y, c);
    let objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(DualSolution {
        alpha,
        bias,
        objective,
        violation,
        iterations,
    })
}

#[inline]
fn in_up(alpha: f64, y: f64, c: f64) -> bool {
    if y > 0.0 {
        alpha < c
    } else {
        alpha > 0.0
    }
}

#[inline]
fn in_low(alpha: f64, y: f64, c: f64) -> bool {
    if y > 0.0 {
        alpha > 0.0
    } else {
        alpha < c
    }
}

/// Working pair and the current violation `m(a) - M(a)`.
/// Ties go to the lowest index so the trajectory is deterministic.
fn select_pair(
    kernel: &KernelMatrix,
    alpha: &[f64],
    grad: &[f64],
    y: &[f64],
    c: f64,
    tau: f64,
) -> (Option<(usize, usize)>, f64) {
    let mut g_max = f64::NEG_INFINITY;
    let mut i = usize::MAX;
    for t in 0..y.len() {
        let score = -y[t] * grad[t];
        if in_up(alpha[t], y[t], c) && score > g_max {
            g_max = score;
            i = t;
        }
    }
    if i == usize::MAX {
        return (None, 0.0);
    }
    let mut g_min = f64::INFINITY;
    let mut j = usize::MAX;
    let mut best = f64::INFINITY;
    for t in 0..y.len() {
        if !in_low(alpha[t], y[t], c) {
            continue;
        }
        let score = -y[t] * grad[t];
        g_min = g_min.min(score);
        let b = g_max - score;
        if b > 0.0 {
            let mut a = kernel.get(i, i) + kernel.get(t, t) - 2.0 * kernel.get(i, t);
            if a <= 0.0 {
                a = tau;
            }
            let gain = -(b * b) / a;
            if gain < best {
                best = gain;
                j = t;
            }
        }
    }
    if g_min == f64::INFINITY {
        return (None, 0.0);
    }
    let gap = g_max - g_min;
    if j == usize::MAX {
        return (None, gap);
    }
    (Some((i, j)), gap)
}

/// `rho` with `f(x) = sum a_i y_i K(x_i, x) - rho`: mean of `y_i G_i` over free
/// variables, or the midpoint of the bound-derived feasible interval.
fn offset(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut sum_free = 0.0;
    let mut n_free = 0usize;
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}
