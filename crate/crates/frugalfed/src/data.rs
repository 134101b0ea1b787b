//! Synthetic binary-classification data with two client domains, plus a
//! label-stratified train/validation split.
//!
//! The generator builds a desk-scale analog of a cross-silo corpus: two
//! domains whose feature clouds are identical up to a controlled shift, with
//! labels either consistent across domains (`Aligned`) or flipped in the
//! second domain (`InvertedHead`). The inverted rule makes a single global
//! head provably insufficient while per-domain heads can separate perfectly,
//! which is the regime where parameter decoupling pays off.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::SeedTree;

/// Separation margin of the class signal on feature 0, before noise.
pub const CLASS_MARGIN: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    A,
    B,
}

/// How labels relate across the two domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelRule {
    /// Same labeling function in both domains.
    Aligned,
    /// Domain B labels are the negation of domain A's rule.
    InvertedHead,
}

/// Immutable feature/label/domain table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<u8>,
    domains: Vec<Domain>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<u8>, domains: Vec<Domain>) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || domains.len() != n {
            return Err(SimError::shape(format!(
                "{n} feature rows, {} labels, {} domain tags",
                labels.len(),
                domains.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(SimError::numeric("features contain a non-finite entry"));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(SimError::usage("labels must be 0 or 1"));
        }
        Ok(Dataset {
            features,
            labels,
            domains,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    /// Counts of labels 0 and 1.
    pub fn label_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.len() - ones, ones]
    }

    /// Counts of domains A and B.
    pub fn domain_counts(&self) -> [usize; 2] {
        let b = self.domains.iter().filter(|&&d| d == Domain::B).count();
        [self.len() - b, b]
    }

    /// Materialize the rows at `indices` (in the given order).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Array2::zeros((indices.len(), self.feature_dim()));
        let mut labels = Vec::with_capacity(indices.len());
        let mut domains = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= self.len() {
                return Err(SimError::usage(format!(
                    "index {i} out of range for dataset of {} rows",
                    self.len()
                )));
            }
            features.row_mut(row).assign(&self.features.row(i));
            labels.push(self.labels[i]);
            domains.push(self.domains[i]);
        }
        Dataset::new(features, labels, domains)
    }

    /// Rows belonging to `domain`.
    pub fn domain_indices(&self, domain: Domain) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domains[i] == domain).collect()
    }
}

/// Recipe for the synthetic two-domain task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    /// Rows generated for each of the two domains.
    pub samples_per_domain: usize,
    /// Total feature columns; must be at least 2.
    pub feature_dim: usize,
    /// Distance between domain feature clouds along feature 1.
    pub domain_separation: f64,
    pub label_rule: LabelRule,
    /// Standard deviation of isotropic Gaussian noise added to every feature.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_domain < 2 {
            return Err(SimError::usage("samples_per_domain must be at least 2"));
        }
        if self.feature_dim < 2 {
            return Err(SimError::usage(
                "feature_dim must be at least 2 (class signal plus domain axis)",
            ));
        }
        if !self.domain_separation.is_finite() || self.domain_separation < 0.0 {
            return Err(SimError::usage("domain_separation must be non-negative"));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(SimError::usage("noise_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// Generate the two-domain dataset described by `spec`.
///
/// Construction, per domain row `i` (domains share the same base draws so the
/// only systematic differences are the domain shift and the label rule):
///
/// * effective class `c` alternates 0/1, giving balanced labels (±1);
/// * feature 0 carries the signal: `±U(CLASS_MARGIN, 1)`, sign by `c`;
/// * feature 1 carries the domain: `∓ domain_separation / 2` (A low, B high);
/// * remaining features are `U(-1, 1)` nuisance;
/// * independent `N(0, noise_sigma²)` noise is added to every entry;
/// * the label is `c`, except domain B under `InvertedHead` stores `1 - c`.
///
/// Rows are ordered domain A first, then domain B. With `noise_sigma = 0` and
/// `domain_separation = 0` the two domains contain bitwise-identical feature
/// rows, differing only in labels under `InvertedHead`.
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.samples_per_domain;
    let d = spec.feature_dim;
    let tree = SeedTree::new(spec.seed);
    let mut base_rng = tree.branch("base").rng();
    let mut noise_rng = tree.branch("noise").rng();
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| SimError::usage(format!("invalid noise sigma: {e}")))?;

    // Base rows shared by both domains.
    let mut base = Array2::zeros((n, d));
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let c = (i % 2) as u8; // alternate classes for balance
        classes.push(c);
        let sign = if c == 1 { 1.0 } else { -1.0 };
        base[[i, 0]] = sign * base_rng.random_range(CLASS_MARGIN..1.0);
        for j in 2..d {
            base[[i, j]] = base_rng.random_range(-1.0..1.0);
        }
    }

    let total = 2 * n;
    let mut features = Array2::zeros((total, d));
    let mut labels = Vec::with_capacity(total);
    let mut domains = Vec::with_capacity(total);
    for (block, domain) in [(0, Domain::A), (1, Domain::B)] {
        let shift = match domain {
            Domain::A => -spec.domain_separation / 2.0,
            Domain::B => spec.domain_separation / 2.0,
        };
        for i in 0..n {
            let row = block * n + i;
            for j in 0..d {
                features[[row, j]] = base[[i, j]];
            }
            features[[row, 1]] += shift;
            let c = classes[i];
            let label = match (domain, spec.label_rule) {
                (Domain::B, LabelRule::InvertedHead) => 1 - c,
                _ => c,
            };
            labels.push(label);
            domains.push(domain);
        }
    }
    if spec.noise_sigma > 0.0 {
        for x in features.iter_mut() {
            *x += noise.sample(&mut noise_rng);
        }
    }

    Dataset::new(features, labels, domains)
}

/// Split into train and validation sets, stratifying by label.
///
/// Each label class contributes `round(train_fraction · n_class)` rows to the
/// train side (clamped so both sides keep at least one row per class). Row
/// membership is randomized by `seed`; within each side, original row order
/// is preserved.
pub fn stratified_split(
    data: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SimError::usage("train_fraction must lie strictly in (0, 1)"));
    }
    let mut rng = SeedTree::new(seed).branch("stratified-split").rng();
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for label in [0u8, 1u8] {
        let members: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels()[i] == label)
            .collect();
        if members.len() < 2 {
            return Err(SimError::partition(format!(
                "label {label} has {} rows; need at least 2 to stratify",
                members.len()
            )));
        }
        let n_train = ((train_fraction * members.len() as f64).round() as usize)
            .clamp(1, members.len() - 1);
        let picks = rand::seq::index::sample(&mut rng, members.len(), n_train);
        let mut chosen: Vec<usize> = picks.iter().map(|k| members[k]).collect();
        chosen.sort_unstable();
        let mut it = chosen.iter().peekable();
        for &m in &members {
            if it.peek() == Some(&&m) {
                train_idx.push(m);
                it.next();
            } else {
                val_idx.push(m);
            }
        }
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((data.subset(&train_idx)?, data.subset(&val_idx)?))
}
