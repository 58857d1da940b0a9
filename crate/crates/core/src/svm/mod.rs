//! Soft-margin RBF support-vector classifier trained in dual form.

mod smo;

pub use smo::KernelMatrix;

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, Dataset, PointId};
use crate::error::{Error, Result};

/// A `(C, gamma)` hyperparameter pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub c: f64,
    pub gamma: f64,
}

impl ModelParams {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        let params = ModelParams { c, gamma };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Bitwise identity, used for duplicate detection.
    pub fn same_as(&self, other: &ModelParams) -> bool {
        self.c.to_bits() == other.c.to_bits() && self.gamma.to_bits() == other.gamma.to_bits()
    }

    /// Tie-break order: smaller gamma first, then smaller C.
    pub fn simplicity_cmp(&self, other: &ModelParams) -> std::cmp::Ordering {
        self.gamma
            .total_cmp(&other.gamma)
            .then(self.c.total_cmp(&other.c))
    }
}

impl std::fmt::Display for ModelParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(C={}, gamma={})", self.c, self.gamma)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop when the maximal KKT violation `m(a) - M(a)` drops below this.
    pub kkt_tolerance: f64,
    /// Optional cap in sweeps of `n` pair updates each. Unset by default:
    /// tiny near-degenerate problems can need far more than `10 * n` sweeps.
    pub max_passes: Option<usize>,
    /// Hard cap on pair updates.
    pub max_updates: usize,
    /// Curvature floor for non-positive second derivatives.
    pub numerical_epsilon: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            kkt_tolerance: 1e-3,
            max_passes: None,
            max_updates: 100_000,
            numerical_epsilon: 1e-12,
        }
    }
}

impl SolverSettings {
    pub fn with_tolerance(kkt_tolerance: f64) -> Self {
        SolverSettings {
            kkt_tolerance,
            ..Default::default()
        }
    }

    fn update_cap(&self, n: usize) -> usize {
        match self.max_passes {
            Some(passes) => passes.saturating_mul(n).min(self.max_updates),
            None => self.max_updates,
        }
    }
}

/// Squared Euclidean distance; lengths must already agree.
#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `exp(-gamma * ||a - b||^2)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    Ok((-gamma * squared_distance(a, b)).exp())
}

/// Gram matrix of a dataset under an RBF kernel.
pub fn gram_matrix(data: &Dataset, gamma: f64) -> KernelMatrix {
    let pts = data.points();
    KernelMatrix::from_fn(pts.len(), |i, j| {
        if i == j {
            1.0
        } else {
            (-gamma * squared_distance(&pts[i].x, &pts[j].x)).exp()
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportVector {
    pub id: PointId,
    pub x: Vec<f64>,
    /// `alpha_i * y_i` with `y_i` in {-1, +1}.
    pub coef: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedSvm {
    pub params: ModelParams,
    pub support: Vec<SupportVector>,
    pub bias: f64,
    pub training_size: usize,
    pub n_features: usize,
    pub dual_objective: f64,
    pub kkt_violation: f64,
    pub iterations: usize,
}

impl TrainedSvm {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(self.decision_unchecked(x))
    }

    pub(crate) fn decision_unchecked(&self, x: &[f64]) -> f64 {
        let gamma = self.params.gamma;
        self.support
            .iter()
            .map(|sv| sv.coef * (-gamma * squared_distance(&sv.x, x)).exp())
            .sum::<f64>()
            + self.bias
    }

    /// Class 1 when `f(x) > 0`, class 0 otherwise (including `f(x) == 0`).
    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        self.decision_value(x).map(label_of)
    }

    /// `|f(x)|`, the boundary-distance surrogate used for acquisition.
    pub fn boundary_distance(&self, x: &[f64]) -> Result<f64> {
        self.decision_value(x).map(f64::abs)
    }

    /// Fraction of `data` classified correctly.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut correct = 0usize;
        for p in data {
            if self.predict(&p.x)? == p.y {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }

    /// `sum_i alpha_i y_i`; zero for a feasible dual point.
    pub fn coef_sum(&self) -> f64 {
        self.support.iter().map(|sv| sv.coef).sum()
    }
}

pub fn label_of(decision: f64) -> ClassLabel {
    if decision > 0.0 {
        ClassLabel::One
    } else {
        ClassLabel::Zero
    }
}

fn check_classes(data: &Dataset) -> Result<()> {
    match data.class_counts() {
        [0, 0] => Err(Error::EmptyDataset),
        [0, _] => Err(Error::SingleClass {
            present: ClassLabel::One,
        }),
        [_, 0] => Err(Error::SingleClass {
            present: ClassLabel::Zero,
        }),
        _ => Ok(()),
    }
}

/// Fits the dual problem on `train`.
pub fn train_svc(train: &Dataset, params: ModelParams, settings: &SolverSettings) -> Result<TrainedSvm> {
    params.validate()?;
    check_classes(train)?;
    let gram = gram_matrix(train, params.gamma);
    let rows: Vec<usize> = (0..train.len()).collect();
    train_with_gram(train, &rows, &gram, params, settings)
}

/// Fits on the points of `data` at positions `rows`, reading kernel values
/// from `gram` (the Gram matrix of all of `data` under `params.gamma`).
pub(crate) fn train_with_gram(
    data: &Dataset,
    rows: &[usize],
    gram: &KernelMatrix,
    params: ModelParams,
    settings: &SolverSettings,
) -> Result<TrainedSvm> {
    let pts = data.points();
    let y: Vec<f64> = rows.iter().map(|&r| pts[r].y.sign()).collect();
    if !y.iter().any(|&s| s > 0.0) {
        return Err(Error::SingleClass {
            present: ClassLabel::Zero,
        });
    }
    if !y.iter().any(|&s| s < 0.0) {
        return Err(Error::SingleClass {
            present: ClassLabel::One,
        });
    }
    let sub;
    let kernel = if rows.len() == gram.len() && rows.iter().enumerate().all(|(a, &b)| a == b) {
        gram
    } else {
        sub = gram.restrict(rows);
        &sub
    };
    let sol = smo::solve(kernel, &y, params.c, settings)?;
    let support = rows
        .iter()
        .zip(&sol.alpha)
        .zip(&y)
        .filter(|((_, &a), _)| a > 0.0)
        .map(|((&r, &a), &s)| SupportVector {
            id: pts[r].id,
            x: pts[r].x.clone(),
            coef: a * s,
        })
        .collect();
    Ok(TrainedSvm {
        params,
        support,
        bias: sol.bias,
        training_size: rows.len(),
        n_features: data.n_features(),
        dual_objective: sol.objective,
        kkt_violation: sol.violation,
        iterations: sol.iterations,
    })
}

/// Decision value at `data[target]` for a model fitted on `data[rows]`,
/// computed from the shared Gram matrix.
pub(crate) fn decision_from_gram(model: &TrainedSvm, data: &Dataset, gram: &KernelMatrix, target: usize) -> f64 {
    // support vectors are stored in training order, which follows data order
    let pts = data.points();
    let row = gram.row(target);
    let mut sv = model.support.iter().peekable();
    let mut acc = 0.0;
    for (pos, p) in pts.iter().enumerate() {
        match sv.peek() {
            Some(s) if s.id == p.id => {
                acc += s.coef * row[pos];
                sv.next();
            }
            Some(_) => {}
            None => break,
        }
    }
    debug_assert!(sv.peek().is_none(), "support vectors out of data order");
    acc + model.bias
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> Dataset {
        Dataset::from_rows(vec![
            (vec![-1.0, 0.0], ClassLabel::Zero),
            (vec![1.0, 0.0], ClassLabel::One),
        ])
        .unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[0.3, -2.0], &[0.3, -2.0], 7.0).unwrap(), 1.0);
        let k = rbf_kernel(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap();
        assert!((k - 0.367_879_4).abs() < 1e-7);
        let k = rbf_kernel(&[0.0, 0.0], &[2.0, 0.0], 0.5).unwrap();
        assert!((k - 0.135_335_3).abs() < 1e-7);
        assert!(matches!(
            rbf_kernel(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn kernel_is_symmetric() {
        let a = [0.1, 2.0, -3.0];
        let b = [1.5, -0.5, 0.25];
        assert_eq!(rbf_kernel(&a, &b, 0.3).unwrap(), rbf_kernel(&b, &a, 0.3).unwrap());
    }

    #[test]
    fn params_must_be_positive() {
        assert!(ModelParams::new(0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0).is_err());
        assert!(ModelParams::new(1.0, f64::NAN).is_err());
        assert!(ModelParams::new(1.0, 1.0).is_ok());
    }

    #[test]
    fn symmetric_pair_has_midpoint_boundary() {
        let m = train_svc(&two_point(), ModelParams::new(1.0, 1.0).unwrap(), &SolverSettings::default()).unwrap();
        assert!(m.bias.abs() < 1e-12);
        assert!(m.decision_value(&[0.0, 0.0]).unwrap().abs() < 1e-12);
        assert!(m.decision_value(&[1.0, 0.0]).unwrap() > 0.0);
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), ClassLabel::Zero);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = Dataset::from_rows(vec![(vec![0.0], ClassLabel::One), (vec![1.0], ClassLabel::One)]).unwrap();
        assert!(matches!(
            train_svc(&d, ModelParams::new(1.0, 1.0).unwrap(), &SolverSettings::default()),
            Err(Error::SingleClass { .. })
        ));
    }

    #[test]
    fn tie_rule_and_distance() {
        assert_eq!(label_of(0.3), ClassLabel::One);
        assert_eq!(label_of(-0.3), ClassLabel::Zero);
        assert_eq!(label_of(0.0), ClassLabel::Zero);
        let m = train_svc(&two_point(), ModelParams::new(1.0, 1.0).unwrap(), &SolverSettings::default()).unwrap();
        let left = m.boundary_distance(&[-0.4, 0.0]).unwrap();
        let right = m.boundary_distance(&[0.4, 0.0]).unwrap();
        assert!((left - right).abs() < 1e-12);
        assert!(m.boundary_distance(&[0.0, 0.0]).unwrap() < 1e-12);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let d = Dataset::from_rows(
            (0..12)
                .map(|i| (vec![i as f64 * 0.1], if i % 2 == 0 { ClassLabel::Zero } else { ClassLabel::One }))
                .collect(),
        )
        .unwrap();
        let settings = SolverSettings {
            max_updates: 1,
            ..Default::default()
        };
        assert!(matches!(
            train_svc(&d, ModelParams::new(100.0, 10.0).unwrap(), &settings),
            Err(Error::NonConvergence { .. })
        ));
    }
}
