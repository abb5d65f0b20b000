//! Shared data model: per-user histograms, datasets, privacy parameters and
//! the released-estimate record type.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One user's contribution: a sparse histogram over a domain of `d` items.
///
/// Counts are stored sparsely (zeros are dropped) and the `l0`/`l1`/`l2`
/// norms are cached at construction, since threshold selection consumes the
/// norms far more often than the raw entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserHistogram {
    domain: usize,
    counts: BTreeMap<usize, u64>,
    l0: usize,
    l1: f64,
    l2: f64,
}

impl UserHistogram {
    /// Builds a histogram over `0..domain`. Duplicate item indices are summed,
    /// zero counts are dropped, and out-of-domain indices are rejected.
    pub fn new(domain: usize, entries: impl IntoIterator<Item = (usize, u64)>) -> Result<Self> {
        if domain == 0 {
            return Err(Error::invalid("domain", "must be positive"));
        }
        let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
        for (item, count) in entries {
            if item >= domain {
                return Err(Error::invalid(
                    "entries",
                    format!("item {item} outside domain of size {domain}"),
                ));
            }
            if count > 0 {
                *counts.entry(item).or_insert(0) += count;
            }
        }
        let mut hist = UserHistogram { domain, counts, l0: 0, l1: 0.0, l2: 0.0 };
        hist.refresh_norms();
        Ok(hist)
    }

    fn refresh_norms(&mut self) {
        self.l0 = self.counts.len();
        let mut sum = 0u64;
        let mut sum_sq = 0.0f64;
        for &c in self.counts.values() {
            sum += c;
            sum_sq += (c as f64) * (c as f64);
        }
        self.l1 = sum as f64;
        self.l2 = sum_sq.sqrt();
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    /// Number of distinct items with a positive count.
    pub fn l0(&self) -> usize {
        self.l0
    }

    /// Total count contributed by this user (`m_i` in quantile selection).
    pub fn l1(&self) -> f64 {
        self.l1
    }

    /// Euclidean norm of the count vector.
    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn get(&self, item: usize) -> u64 {
        self.counts.get(&item).copied().unwrap_or(0)
    }

    /// Iterates over stored `(item, count)` pairs in increasing item order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.counts.iter().map(|(&i, &c)| (i, c))
    }

    /// Keeps only the items present in `keep`, re-indexing item `keep[j] -> j`.
    /// Items of `keep` absent from this histogram simply contribute zero.
    pub(crate) fn project(&self, keep: &[usize]) -> Result<Self> {
        let entries = keep
            .iter()
            .enumerate()
            .filter_map(|(new_idx, &old_idx)| {
                let c = self.get(old_idx);
                (c > 0).then_some((new_idx, c))
            })
            .collect::<Vec<_>>();
        UserHistogram::new(keep.len().max(1), entries)
    }
}

/// A fixed-domain collection of user histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    domain: usize,
    users: Vec<UserHistogram>,
}

impl Dataset {
    pub fn new(users: Vec<UserHistogram>) -> Result<Self> {
        let domain = match users.first() {
            Some(u) => u.domain(),
            None => return Err(Error::InvalidDataset("no users".into())),
        };
        if let Some(bad) = users.iter().find(|u| u.domain() != domain) {
            return Err(Error::InvalidDataset(format!(
                "mixed domain sizes: {} vs {}",
                domain,
                bad.domain()
            )));
        }
        Ok(Dataset { domain, users })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn users(&self) -> &[UserHistogram] {
        &self.users
    }

    /// Restricts the dataset to the `d` items with the largest aggregate
    /// counts (ties broken toward the smaller item index), re-indexed to
    /// `0..d`. Errors if `d` exceeds the current domain size.
    pub fn restrict_top_d(&self, d: usize) -> Result<Dataset> {
        if d == 0 || d > self.domain {
            return Err(Error::invalid(
                "d",
                format!("must be in 1..={}, got {d}", self.domain),
            ));
        }
        let totals = aggregate(self);
        let mut order: Vec<usize> = (0..self.domain).collect();
        // Stable sort on descending count keeps index order among ties.
        order.sort_by(|&a, &b| totals[b].partial_cmp(&totals[a]).unwrap());
        let mut keep = order[..d].to_vec();
        keep.sort_unstable();
        let users = self
            .users
            .iter()
            .map(|u| u.project(&keep))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(users)
    }
}

/// An `(epsilon, delta)` differential-privacy budget. `delta = 0` denotes
/// pure DP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::invalid("delta", format!("must be in [0, 1), got {delta}")));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    /// Pure-DP budget (`delta = 0`).
    pub fn pure(epsilon: f64) -> Result<Self> {
        PrivacyParams::new(epsilon, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }

    /// Zero spend, used for ledger entries of non-private steps.
    pub(crate) fn none() -> Self {
        PrivacyParams { epsilon: 0.0, delta: 0.0 }
    }

    /// Budget consumed by running `self` and `other` sequentially on the
    /// same data (basic composition: parameters add).
    pub fn compose(&self, other: &PrivacyParams) -> PrivacyParams {
        PrivacyParams { epsilon: self.epsilon + other.epsilon, delta: self.delta + other.delta }
    }
}

/// Budget split between threshold selection and the histogram release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub threshold: PrivacyParams,
    pub release: PrivacyParams,
}

impl BudgetSplit {
    pub fn total(&self) -> PrivacyParams {
        self.threshold.compose(&self.release)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Laplace,
    Gaussian,
}

/// A released (noisy) aggregate histogram together with the parameters that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyEstimate {
    pub values: Vec<f64>,
    /// Clipping threshold applied to every user before aggregation.
    pub threshold: f64,
    pub noise: NoiseKind,
    /// Laplace scale or Gaussian standard deviation, per coordinate.
    pub noise_scale: f64,
    /// Budget consumed by this release.
    pub budget_spent: PrivacyParams,
    /// Seed of the randomness source used for the noise draw.
    pub seed: u64,
    /// Non-fatal diagnostics, e.g. epsilon outside the regime the noise
    /// calibration is tight for.
    pub warnings: Vec<String>,
}

/// Exact (non-private) aggregate: coordinate-wise sum of all user histograms.
pub fn aggregate(dataset: &Dataset) -> Vec<f64> {
    let mut totals = vec![0u64; dataset.domain()];
    for user in dataset.users() {
        for (item, count) in user.entries() {
            totals[item] += count;
        }
    }
    totals.into_iter().map(|c| c as f64).collect()
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Relative l1 error `||est - truth||_1 / ||truth||_1`.
/// Errors when the ground truth is identically zero.
pub fn relative_loss(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    let denom: f64 = truth.iter().map(|x| x.abs()).sum();
    if denom == 0.0 {
        return Err(Error::invalid("truth", "zero vector has no relative loss"));
    }
    Ok(l1_distance(estimate, truth)? / denom)
}
