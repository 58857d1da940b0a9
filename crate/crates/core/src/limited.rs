//! Dataset difficulty: the share of test points whose k-neighborhood mixes
//! classes beyond a threshold.

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, Dataset, LabeledPoint, PointId};
use crate::error::{Error, Result};
use crate::par;
use crate::svm::squared_distance;

/// How a neighborhood's class mix is counted against `rho * k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingRule {
    /// Neighbors whose class differs from the query point's.
    OppositeClass,
    /// The smaller of the two class counts in the neighborhood.
    Minority,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitedSetParams {
    pub k: usize,
    pub rho: f64,
    pub rule: MixingRule,
}

impl Default for LimitedSetParams {
    fn default() -> Self {
        LimitedSetParams {
            k: 20,
            rho: 0.3,
            rule: MixingRule::OppositeClass,
        }
    }
}

impl LimitedSetParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho <= 0.5) {
            return Err(Error::InvalidParameter(format!("rho must be in (0, 0.5], got {}", self.rho)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitedSetReport {
    pub member_ids: Vec<PointId>,
    pub fraction: f64,
    pub params: LimitedSetParams,
}

/// Ids of the `k` reference points nearest to `point` (excluding its own id),
/// nearest first; equal distances go to the smaller id.
pub fn nearest_neighbors<'a>(point: &LabeledPoint, reference: &'a Dataset, k: usize) -> Result<Vec<&'a LabeledPoint>> {
    if point.x.len() != reference.n_features() {
        return Err(Error::DimensionMismatch {
            expected: reference.n_features(),
            actual: point.x.len(),
        });
    }
    let mut cand: Vec<(f64, PointId, &LabeledPoint)> = reference
        .iter()
        .filter(|r| r.id != point.id)
        .map(|r| (squared_distance(&point.x, &r.x), r.id, r))
        .collect();
    if cand.len() < k {
        return Err(Error::InvalidParameter(format!(
            "reference has {} points besides the query, k = {k}",
            cand.len()
        )));
    }
    let order = |a: &(f64, PointId, &LabeledPoint), b: &(f64, PointId, &LabeledPoint)| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
    };
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, order);
        cand.truncate(k);
    }
    cand.sort_by(order);
    Ok(cand.into_iter().map(|(_, _, p)| p).collect())
}

/// Mixing count of `point`'s neighborhood under `params.rule`.
pub fn mixing_count(point: &LabeledPoint, reference: &Dataset, params: &LimitedSetParams) -> Result<usize> {
    let neighbors = nearest_neighbors(point, reference, params.k)?;
    let ones = neighbors.iter().filter(|n| n.y == ClassLabel::One).count();
    let zeros = neighbors.len() - ones;
    Ok(match params.rule {
        MixingRule::Minority => ones.min(zeros),
        MixingRule::OppositeClass => match point.y {
            ClassLabel::Zero => ones,
            ClassLabel::One => zeros,
        },
    })
}

/// Whether more than `rho * k` of the point's `k` nearest reference points
/// count as mixed.
pub fn is_limited(point: &LabeledPoint, reference: &Dataset, params: &LimitedSetParams) -> Result<bool> {
    params.validate()?;
    let count = mixing_count(point, reference, params)?;
    Ok(count as f64 > params.rho * params.k as f64)
}

pub fn limited_set(test: &Dataset, reference: &Dataset, params: &LimitedSetParams) -> Result<LimitedSetReport> {
    params.validate()?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let flags: Vec<bool> = par::map(test.points(), |p| is_limited(p, reference, params))
        .into_iter()
        .collect::<Result<_>>()?;
    let member_ids: Vec<PointId> = test
        .iter()
        .zip(&flags)
        .filter(|(_, &f)| f)
        .map(|(p, _)| p.id)
        .collect();
    Ok(LimitedSetReport {
        fraction: member_ids.len() as f64 / test.len() as f64,
        member_ids,
        params: *params,
    })
}

/// Fraction of `test` in the limited set.
pub fn limited_fraction(test: &Dataset, reference: &Dataset, params: &LimitedSetParams) -> Result<f64> {
    limited_set(test, reference, params).map(|r| r.fraction)
}
