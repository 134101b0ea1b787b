//! Non-IID client partitioning.
//!
//! Three partitioners produce a [`PartitionPlan`] (disjoint, covering,
//! per-client sorted sample indices):
//!
//! * [`domain_partition`] — clients are split evenly between the two domains;
//! * [`dirichlet_label_skew`] — per-label Dirichlet(α) proportions over
//!   clients control label imbalance (small α ⇒ strong skew);
//! * [`domain_dirichlet_partition`] — domain split first, Dirichlet label
//!   skew layered on top, with a choice of drawing proportions per domain
//!   group or once globally.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Domain};
use crate::error::{Result, SimError};
use crate::rng::SeedTree;

/// Scope of the Dirichlet draw in [`domain_dirichlet_partition`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirichletScope {
    /// Independent proportions per (domain, label) over that domain's clients.
    WithinDomain,
    /// One proportion vector per label over all clients, renormalized inside
    /// each domain's client group.
    Global,
}

/// Assignment of every dataset row to exactly one client.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    client_count: usize,
    /// `assignments[c]` holds client `c`'s row indices, sorted ascending.
    assignments: Vec<Vec<usize>>,
    label_histograms: Vec<[usize; 2]>,
    domain_histograms: Vec<[usize; 2]>,
}

impl PartitionPlan {
    /// Validate `assignments` against `data` and compute per-client histograms.
    ///
    /// Requires: every row of `data` assigned exactly once, no empty client.
    pub fn new(assignments: Vec<Vec<usize>>, data: &Dataset) -> Result<Self> {
        let client_count = assignments.len();
        if client_count == 0 {
            return Err(SimError::partition("plan has no clients"));
        }
        let mut seen = vec![false; data.len()];
        for (c, rows) in assignments.iter().enumerate() {
            if rows.is_empty() {
                return Err(SimError::partition(format!("client {c} is empty")));
            }
            for &i in rows {
                if i >= data.len() {
                    return Err(SimError::partition(format!(
                        "client {c} references row {i}, dataset has {} rows",
                        data.len()
                    )));
                }
                if seen[i] {
                    return Err(SimError::partition(format!(
                        "row {i} assigned to more than one client"
                    )));
                }
                seen[i] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(SimError::partition(format!(
                "row {missing} not assigned to any client"
            )));
        }

        let mut assignments = assignments;
        for rows in &mut assignments {
            rows.sort_unstable();
        }
        let mut label_histograms = vec![[0usize; 2]; client_count];
        let mut domain_histograms = vec![[0usize; 2]; client_count];
        for (c, rows) in assignments.iter().enumerate() {
            for &i in rows {
                label_histograms[c][data.labels()[i] as usize] += 1;
                let d = if data.domains()[i] == Domain::A { 0 } else { 1 };
                domain_histograms[c][d] += 1;
            }
        }
        Ok(PartitionPlan {
            client_count,
            assignments,
            label_histograms,
            domain_histograms,
        })
    }

    pub fn client_count(&self) -> usize {
        self.client_count
    }

    pub fn client_rows(&self, client: usize) -> &[usize] {
        &self.assignments[client]
    }

    pub fn client_sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(|r| r.len()).collect()
    }

    pub fn label_histogram(&self, client: usize) -> [usize; 2] {
        self.label_histograms[client]
    }

    pub fn domain_histogram(&self, client: usize) -> [usize; 2] {
        self.domain_histograms[client]
    }

    pub fn total_rows(&self) -> usize {
        self.assignments.iter().map(|r| r.len()).sum()
    }

    pub fn to_json(&self) -> String {
        let assignments: BTreeMap<String, &Vec<usize>> = self
            .assignments
            .iter()
            .enumerate()
            .map(|(c, rows)| (c.to_string(), rows))
            .collect();
        serde_json::to_string_pretty(&PlanDocument {
            client_count: self.client_count,
            assignments,
        })
        .expect("plan serialization cannot fail")
    }

    /// Parse a plan document and re-validate it against `data`.
    pub fn from_json(text: &str, data: &Dataset) -> Result<Self> {
        let doc: OwnedPlanDocument =
            serde_json::from_str(text).map_err(|e| SimError::parse(format!("plan json: {e}")))?;
        let mut assignments = vec![Vec::new(); doc.client_count];
        for (key, rows) in doc.assignments {
            let c: usize = key
                .parse()
                .map_err(|_| SimError::parse(format!("client key `{key}` is not an integer")))?;
            if c >= doc.client_count {
                return Err(SimError::parse(format!(
                    "client key {c} outside 0..{}",
                    doc.client_count
                )));
            }
            assignments[c] = rows;
        }
        PartitionPlan::new(assignments, data)
    }
}

#[derive(Serialize)]
struct PlanDocument<'a> {
    client_count: usize,
    assignments: BTreeMap<String, &'a Vec<usize>>,
}

#[derive(Deserialize)]
struct OwnedPlanDocument {
    client_count: usize,
    assignments: BTreeMap<String, Vec<usize>>,
}

/// Even split of each domain's rows over its half of the clients.
///
/// Clients `0..k/2` receive domain A, the rest domain B; `client_count` must
/// be even and every domain must have at least `k/2` rows. Within a domain,
/// rows are dealt in ascending index order with the first clients absorbing
/// the remainder, so sizes differ by at most one.
pub fn domain_partition(data: &Dataset, client_count: usize) -> Result<PartitionPlan> {
    if client_count == 0 || client_count % 2 != 0 {
        return Err(SimError::partition(format!(
            "domain partition requires an even, positive client count (got {client_count})"
        )));
    }
    let per_domain = client_count / 2;
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); client_count];
    for (domain, first_client) in [(Domain::A, 0), (Domain::B, per_domain)] {
        let rows = data.domain_indices(domain);
        if rows.len() < per_domain {
            return Err(SimError::partition(format!(
                "domain {domain:?} has {} rows for {per_domain} clients",
                rows.len()
            )));
        }
        let base = rows.len() / per_domain;
        let extra = rows.len() % per_domain;
        let mut cursor = 0;
        for c in 0..per_domain {
            let take = base + usize::from(c < extra);
            assignments[first_client + c].extend(&rows[cursor..cursor + take]);
            cursor += take;
        }
    }
    PartitionPlan::new(assignments, data)
}

fn dirichlet_proportions(alpha: f64, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| SimError::partition(format!("invalid alpha {alpha}: {e}")))?;
    let draws: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = draws.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        // Degenerate draw (can happen at extreme alpha); fall back to uniform.
        return Ok(vec![1.0 / m as f64; m]);
    }
    Ok(draws.into_iter().map(|g| g / sum).collect())
}

/// Integer apportionment of `n` items by proportions, largest remainder first.
fn apportion(n: usize, proportions: &[f64]) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(proportions.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(proportions.len());
    let mut assigned = 0usize;
    for (i, &p) in proportions.iter().enumerate() {
        let exact = p * n as f64;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        remainders.push((i, exact - floor as f64));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n.saturating_sub(assigned) {
        counts[remainders[k % remainders.len()].0] += 1;
    }
    counts
}

/// Deal one label group to `clients` according to Dirichlet proportions.
fn deal_group(
    rows: &[usize],
    clients: &[usize],
    proportions: &[f64],
    rng: &mut ChaCha8Rng,
    assignments: &mut [Vec<usize>],
) {
    let counts = apportion(rows.len(), proportions);
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(rng);
    let mut cursor = 0;
    for (slot, &client) in clients.iter().enumerate() {
        let take = counts[slot];
        assignments[client].extend(&shuffled[cursor..cursor + take]);
        cursor += take;
    }
}

/// Ensure no client ends up empty: move single rows from the (client, label)
/// cell with the most rows, preferring lower labels then lower client ids on
/// ties. Donors always keep at least one row.
fn fix_empty_clients(assignments: &mut [Vec<usize>], data: &Dataset) -> Result<()> {
    loop {
        let Some(empty) = assignments.iter().position(|r| r.is_empty()) else {
            return Ok(());
        };
        let mut best: Option<(usize, usize, u8)> = None; // (count, donor, label)
        for (donor, rows) in assignments.iter().enumerate() {
            if rows.len() < 2 {
                continue;
            }
            for label in [0u8, 1u8] {
                let count = rows.iter().filter(|&&i| data.labels()[i] == label).count();
                if count == 0 {
                    continue;
                }
                let candidate = (count, donor, label);
                best = match best {
                    None => Some(candidate),
                    Some((c, d, l)) => {
                        if count > c || (count == c && (label, donor) < (l, d)) {
                            Some(candidate)
                        } else {
                            Some((c, d, l))
                        }
                    }
                };
            }
        }
        let Some((_, donor, label)) = best else {
            return Err(SimError::partition(
                "cannot fill empty clients: fewer rows than clients",
            ));
        };
        let moved = *assignments[donor]
            .iter()
            .filter(|&&i| data.labels()[i] == label)
            .max()
            .expect("donor cell is non-empty");
        assignments[donor].retain(|&i| i != moved);
        assignments[empty].push(moved);
    }
}

/// Label-skewed partition: for each label, client shares are drawn from a
/// symmetric Dirichlet(α). Small α concentrates each label on few clients;
/// large α approaches a uniform deal. If rounding leaves a client empty, one
/// row is moved from the fullest (client, label) cell.
pub fn dirichlet_label_skew(
    data: &Dataset,
    client_count: usize,
    alpha: f64,
    seed: u64,
) -> Result<PartitionPlan> {
    if client_count == 0 {
        return Err(SimError::partition("client_count must be positive"));
    }
    if data.len() < client_count {
        return Err(SimError::partition(format!(
            "{} rows cannot cover {client_count} clients",
            data.len()
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(SimError::partition("alpha must be a positive real"));
    }
    let mut rng = SeedTree::new(seed).branch("dirichlet").rng();
    let clients: Vec<usize> = (0..client_count).collect();
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); client_count];
    for label in [0u8, 1u8] {
        let rows: Vec<usize> = (0..data.len())
            .filter(|&i| data.labels()[i] == label)
            .collect();
        if rows.is_empty() {
            continue;
        }
        let proportions = dirichlet_proportions(alpha, client_count, &mut rng)?;
        deal_group(&rows, &clients, &proportions, &mut rng, &mut assignments);
    }
    fix_empty_clients(&mut assignments, data)?;
    PartitionPlan::new(assignments, data)
}

/// Domain split with Dirichlet label skew inside each domain's client group.
pub fn domain_dirichlet_partition(
    data: &Dataset,
    client_count: usize,
    alpha: f64,
    scope: DirichletScope,
    seed: u64,
) -> Result<PartitionPlan> {
    if client_count == 0 || client_count % 2 != 0 {
        return Err(SimError::partition(format!(
            "domain partition requires an even, positive client count (got {client_count})"
        )));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(SimError::partition("alpha must be a positive real"));
    }
    let per_domain = client_count / 2;
    let mut rng = SeedTree::new(seed).branch("domain-dirichlet").rng();
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); client_count];

    // Under Global scope a single proportion vector per label spans all
    // clients and is renormalized within each domain's slice.
    let global_props: Option<Vec<Vec<f64>>> = match scope {
        DirichletScope::Global => Some(
            [0u8, 1u8]
                .iter()
                .map(|_| dirichlet_proportions(alpha, client_count, &mut rng))
                .collect::<Result<_>>()?,
        ),
        DirichletScope::WithinDomain => None,
    };

    for (domain, first_client) in [(Domain::A, 0), (Domain::B, per_domain)] {
        let domain_rows = data.domain_indices(domain);
        if domain_rows.len() < per_domain {
            return Err(SimError::partition(format!(
                "domain {domain:?} has {} rows for {per_domain} clients",
                domain_rows.len()
            )));
        }
        let clients: Vec<usize> = (first_client..first_client + per_domain).collect();
        for label in [0u8, 1u8] {
            let rows: Vec<usize> = domain_rows
                .iter()
                .copied()
                .filter(|&i| data.labels()[i] == label)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let proportions = match (&global_props, scope) {
                (Some(per_label), DirichletScope::Global) => {
                    let slice = &per_label[label as usize][first_client..first_client + per_domain];
                    let sum: f64 = slice.iter().sum();
                    if sum <= 0.0 {
                        vec![1.0 / per_domain as f64; per_domain]
                    } else {
                        slice.iter().map(|p| p / sum).collect()
                    }
                }
                _ => dirichlet_proportions(alpha, per_domain, &mut rng)?,
            };
            deal_group(&rows, &clients, &proportions, &mut rng, &mut assignments);
        }
    }
    fix_empty_clients(&mut assignments, data)?;
    PartitionPlan::new(assignments, data)
}

/// Per-client composition summary of a plan.
#[derive(Debug, Clone, Serialize)]
pub struct ClientStats {
    pub client_id: usize,
    pub sample_count: usize,
    pub label_counts: [usize; 2],
    pub domain_counts: [usize; 2],
    /// Shannon entropy of the client's label distribution, in bits.
    pub label_entropy_bits: f64,
    /// Fraction of the client's rows belonging to its majority domain.
    pub domain_purity: f64,
    /// Earth mover's distance between the client's label distribution and the
    /// plan-wide one (for binary labels this is |p₁(client) − p₁(global)|).
    pub label_emd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionStats {
    pub clients: Vec<ClientStats>,
    pub global_label_fractions: [f64; 2],
    pub mean_label_emd: f64,
    pub min_client_size: usize,
    pub max_client_size: usize,
}

fn entropy_bits(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut h = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total as f64;
            h -= p * p.log2();
        }
    }
    h
}

/// Compute composition statistics for every client in `plan`.
pub fn partition_stats(plan: &PartitionPlan) -> PartitionStats {
    let total = plan.total_rows() as f64;
    let mut global = [0usize; 2];
    for c in 0..plan.client_count() {
        let h = plan.label_histogram(c);
        global[0] += h[0];
        global[1] += h[1];
    }
    let global_fractions = [global[0] as f64 / total, global[1] as f64 / total];

    let mut clients = Vec::with_capacity(plan.client_count());
    for c in 0..plan.client_count() {
        let labels = plan.label_histogram(c);
        let domains = plan.domain_histogram(c);
        let n = (labels[0] + labels[1]) as f64;
        let p1 = labels[1] as f64 / n;
        clients.push(ClientStats {
            client_id: c,
            sample_count: labels[0] + labels[1],
            label_counts: labels,
            domain_counts: domains,
            label_entropy_bits: entropy_bits(&labels),
            domain_purity: domains[0].max(domains[1]) as f64 / n,
            label_emd: (p1 - global_fractions[1]).abs(),
        });
    }
    let sizes = plan.client_sizes();
    PartitionStats {
        mean_label_emd: clients.iter().map(|c| c.label_emd).sum::<f64>() / clients.len() as f64,
        clients,
        global_label_fractions: global_fractions,
        min_client_size: *sizes.iter().min().unwrap(),
        max_client_size: *sizes.iter().max().unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, LabelRule, SyntheticTaskSpec};

    fn data(n_per_domain: usize, seed: u64) -> Dataset {
        generate_synthetic(&SyntheticTaskSpec {
            samples_per_domain: n_per_domain,
            feature_dim: 4,
            domain_separation: 1.0,
            label_rule: LabelRule::Aligned,
            noise_sigma: 0.1,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn domain_partition_is_pure_and_balanced() {
        let d = data(101, 1); // odd per-domain count exercises the remainder
        let plan = domain_partition(&d, 10).unwrap();
        assert_eq!(plan.total_rows(), 202);
        for c in 0..10 {
            let [a, b] = plan.domain_histogram(c);
            if c < 5 {
                assert_eq!(b, 0, "client {c} must be pure domain A");
            } else {
                assert_eq!(a, 0, "client {c} must be pure domain B");
            }
            assert!(plan.client_rows(c).len() >= 20);
        }
        let sizes = plan.client_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(domain_partition(&d, 7).is_err()); // odd client count
    }

    #[test]
    fn dirichlet_covers_disjointly_and_is_deterministic() {
        let d = data(150, 2);
        let a = dirichlet_label_skew(&d, 10, 0.5, 3).unwrap();
        let b = dirichlet_label_skew(&d, 10, 0.5, 3).unwrap();
        assert_eq!(a, b);
        let c = dirichlet_label_skew(&d, 10, 0.5, 4).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.total_rows(), d.len());
        // PartitionPlan::new would have failed on overlap/gaps; spot-check sortedness.
        for client in 0..10 {
            let rows = a.client_rows(client);
            assert!(rows.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn small_alpha_skews_harder_than_large_alpha() {
        let d = data(400, 5);
        let mut skew_small = 0.0;
        let mut skew_large = 0.0;
        for seed in 0..5 {
            skew_small += partition_stats(&dirichlet_label_skew(&d, 10, 0.1, seed).unwrap())
                .mean_label_emd;
            skew_large += partition_stats(&dirichlet_label_skew(&d, 10, 100.0, seed).unwrap())
                .mean_label_emd;
        }
        assert!(
            skew_small > skew_large,
            "alpha=0.1 skew {skew_small} should exceed alpha=100 skew {skew_large}"
        );
    }

    #[test]
    fn huge_alpha_approaches_uniform_sizes() {
        let d = data(500, 6);
        let plan = dirichlet_label_skew(&d, 10, 1e6, 7).unwrap();
        let expected = d.len() as f64 / 10.0;
        for size in plan.client_sizes() {
            let rel = (size as f64 - expected).abs() / expected;
            assert!(rel < 0.05, "client size {size} deviates {rel} from uniform");
        }
    }

    #[test]
    fn combined_mode_keeps_domain_purity_under_both_scopes() {
        let d = data(300, 8);
        for scope in [DirichletScope::WithinDomain, DirichletScope::Global] {
            let plan = domain_dirichlet_partition(&d, 10, 0.5, scope, 9).unwrap();
            assert_eq!(plan.total_rows(), d.len());
            for c in 0..10 {
                let [a, b] = plan.domain_histogram(c);
                if c < 5 {
                    assert_eq!(b, 0);
                } else {
                    assert_eq!(a, 0);
                }
            }
        }
    }

    #[test]
    fn tiny_alpha_never_leaves_a_client_empty() {
        let d = data(40, 10);
        for seed in 0..10 {
            let plan = dirichlet_label_skew(&d, 16, 0.05, seed).unwrap();
            assert!(plan.client_sizes().iter().all(|&s| s > 0));
            assert_eq!(plan.total_rows(), d.len());
        }
    }

    #[test]
    fn plan_json_round_trips() {
        let d = data(60, 11);
        let plan = dirichlet_label_skew(&d, 4, 1.0, 12).unwrap();
        let text = plan.to_json();
        let back = PartitionPlan::from_json(&text, &d).unwrap();
        assert_eq!(plan, back);
        // Tampered document: drop a client.
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut bad = doc.clone();
        bad["assignments"]
            .as_object_mut()
            .unwrap()
            .remove("0");
        assert!(PartitionPlan::from_json(&bad.to_string(), &d).is_err());
    }

    #[test]
    fn apportion_matches_proportions() {
        assert_eq!(apportion(10, &[0.5, 0.3, 0.2]), vec![5, 3, 2]);
        assert_eq!(apportion(10, &[0.55, 0.25, 0.2]).iter().sum::<usize>(), 10);
        assert_eq!(apportion(1, &[0.4, 0.6]), vec![0, 1]);
        assert_eq!(apportion(0, &[1.0]), vec![0]);
    }

    #[test]
    fn stats_reflect_composition() {
        let d = data(100, 13);
        let plan = domain_partition(&d, 4).unwrap();
        let stats = partition_stats(&plan);
        assert_eq!(stats.clients.len(), 4);
        for c in &stats.clients {
            assert!((c.domain_purity - 1.0).abs() < 1e-12);
            assert!(c.label_entropy_bits <= 1.0 + 1e-12);
        }
        let total: f64 = stats.global_label_fractions.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
