//! Client sampling and sample-weighted aggregation.

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::model::{LoraAdapter, ParameterSet, Role};

/// Pick `round(fraction · client_count)` distinct clients (at least one),
/// returned sorted ascending. Rounding is half-up, so fractions 0.5 and 0.3
/// of 10 clients select 5 and 3, and 0.25 of 10 selects 3.
pub fn sample_clients(
    client_count: usize,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if client_count == 0 {
        return Err(SimError::usage("client_count must be positive"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SimError::usage("fraction must lie in (0, 1]"));
    }
    let m = ((fraction * client_count as f64 + 0.5).floor() as usize).clamp(1, client_count);
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, client_count, m).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Sample-count weighted mean over parameter sets with identical layer
/// structure. Each update is paired with the contributing sample count.
fn weighted_mean_params(updates: &[(ParameterSet, usize)]) -> Result<ParameterSet> {
    if updates.is_empty() {
        return Err(SimError::usage("nothing to aggregate"));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if updates.iter().any(|&(_, n)| n == 0) {
        return Err(SimError::usage("every update needs a positive sample count"));
    }
    let (first, _) = &updates[0];
    let mut out = first.clone();
    for layer in out.layers().iter().map(|l| l.name.clone()).collect::<Vec<_>>() {
        let mut acc = first
            .layer(&layer)
            .expect("layer comes from this set")
            .values
            .zeros_like();
        for (update, n) in updates {
            let contrib = update.layer(&layer).ok_or_else(|| {
                SimError::shape(format!("update missing layer `{layer}`"))
            })?;
            acc.add_scaled(&contrib.values, *n as f64 / total as f64)?;
        }
        let slot = out.layer_mut(&layer).expect("layer comes from this set");
        slot.values = acc;
    }
    // Catch updates that carry extra layers the first one lacks.
    for (update, _) in updates {
        if update.layers().len() != first.layers().len() {
            return Err(SimError::shape(
                "updates disagree on the set of layers",
            ));
        }
    }
    Ok(out)
}

fn reject_role(updates: &[(ParameterSet, usize)], role: Role, context: &str) -> Result<()> {
    for (update, _) in updates {
        for layer in update.layers() {
            if layer.role == role {
                return Err(SimError::protocol(format!(
                    "{context}: layer `{}` has role {:?}",
                    layer.name, layer.role
                )));
            }
        }
    }
    Ok(())
}

/// FedAvg: weighted mean of full model updates.
///
/// Personal-role layers are a protocol violation here — they must never reach
/// the server.
pub fn fedavg_aggregate(updates: &[(ParameterSet, usize)]) -> Result<ParameterSet> {
    reject_role(updates, Role::Personal, "fedavg aggregation")?;
    weighted_mean_params(updates)
}

/// Weighted mean over shared-role layers only; anything else is rejected.
pub fn aggregate_decoupled(updates: &[(ParameterSet, usize)]) -> Result<ParameterSet> {
    reject_role(updates, Role::Personal, "decoupled aggregation")?;
    reject_role(updates, Role::FrozenBase, "decoupled aggregation")?;
    reject_role(updates, Role::Adapter, "decoupled aggregation")?;
    weighted_mean_params(updates)
}

/// Weighted mean of adapter factors, `A` and `B` averaged independently.
///
/// All clients must agree on targets, ranks, scalings, and factor shapes.
pub fn aggregate_adapters(updates: &[(Vec<LoraAdapter>, usize)]) -> Result<Vec<LoraAdapter>> {
    if updates.is_empty() {
        return Err(SimError::usage("nothing to aggregate"));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if updates.iter().any(|&(_, n)| n == 0) {
        return Err(SimError::usage("every update needs a positive sample count"));
    }
    let (first, _) = &updates[0];
    let mut out = Vec::with_capacity(first.len());
    for (slot, reference) in first.iter().enumerate() {
        let mut a = ndarray::Array2::zeros(reference.a.raw_dim());
        let mut b = ndarray::Array2::zeros(reference.b.raw_dim());
        for (update, n) in updates {
            let adapter = update.get(slot).ok_or_else(|| {
                SimError::shape("updates disagree on the number of adapters")
            })?;
            if adapter.target_layer != reference.target_layer
                || adapter.rank != reference.rank
                || adapter.scaling != reference.scaling
                || adapter.a.raw_dim() != reference.a.raw_dim()
                || adapter.b.raw_dim() != reference.b.raw_dim()
            {
                return Err(SimError::shape(format!(
                    "adapter {slot} differs across updates (target `{}`)",
                    reference.target_layer
                )));
            }
            let w = *n as f64 / total as f64;
            a.scaled_add(w, &adapter.a);
            b.scaled_add(w, &adapter.b);
        }
        out.push(LoraAdapter::new(
            reference.target_layer.clone(),
            reference.rank,
            reference.scaling,
            a,
            b,
        )?);
    }
    Ok(out)
}

/// Frobenius norm of the difference between the weighted mean of adapter
/// *products* and the product of the independently averaged factors.
///
/// Averaging `A` and `B` separately is not the same operation as averaging
/// the effective updates `(α/r)·B·A`; this returns the size of that gap for
/// one aggregation step.
pub fn adapter_average_gap(
    updates: &[(Vec<LoraAdapter>, usize)],
    aggregated: &[LoraAdapter],
) -> Result<f64> {
    if updates.is_empty() {
        return Err(SimError::usage("nothing to compare"));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    let mut gap_sq = 0.0;
    for (slot, agg) in aggregated.iter().enumerate() {
        let mut mean_product = ndarray::Array2::<f64>::zeros(agg.delta().raw_dim());
        for (update, n) in updates {
            let adapter = update
                .get(slot)
                .ok_or_else(|| SimError::shape("adapter count mismatch"))?;
            mean_product.scaled_add(*n as f64 / total as f64, &adapter.delta());
        }
        let diff = mean_product - agg.delta();
        gap_sq += diff.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(gap_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, Tensor};
    use crate::rng::SeedTree;
    use ndarray::{array, Array2};

    fn set(values: Array2<f64>, role: Role) -> ParameterSet {
        ParameterSet::new(vec![Layer {
            name: "dense0.weight".into(),
            role,
            values: Tensor::Matrix(values),
        }])
        .unwrap()
    }

    #[test]
    fn sampling_rounds_half_up_and_is_deterministic() {
        let mut rng = SeedTree::new(1).branch("select").rng();
        assert_eq!(sample_clients(10, 0.5, &mut rng).unwrap().len(), 5);
        assert_eq!(sample_clients(10, 0.3, &mut rng).unwrap().len(), 3);
        assert_eq!(sample_clients(10, 0.25, &mut rng).unwrap().len(), 3);
        assert_eq!(sample_clients(10, 0.04, &mut rng).unwrap().len(), 1); // clamp
        assert_eq!(sample_clients(10, 1.0, &mut rng).unwrap(), (0..10).collect::<Vec<_>>());

        let a = sample_clients(10, 0.5, &mut SeedTree::new(2).rng()).unwrap();
        let b = sample_clients(10, 0.5, &mut SeedTree::new(2).rng()).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_clients(10, 0.0, &mut rng).is_err());
        assert!(sample_clients(10, 1.1, &mut rng).is_err());
    }

    #[test]
    fn fedavg_weighted_mean_matches_hand_computation() {
        // Weights 1 and 3: mean = 0.25*a + 0.75*b.
        let a = set(array![[1.0, 2.0]], Role::Shared);
        let b = set(array![[5.0, 10.0]], Role::Shared);
        let out = fedavg_aggregate(&[(a, 1), (b, 3)]).unwrap();
        let m = out.layer("dense0.weight").unwrap().values.as_matrix().unwrap();
        assert_eq!(m, array![[4.0, 8.0]]);
    }

    #[test]
    fn equal_weights_reduce_to_plain_mean() {
        let a = set(array![[2.0]], Role::Shared);
        let b = set(array![[4.0]], Role::Shared);
        let c = set(array![[9.0]], Role::Shared);
        let out = fedavg_aggregate(&[(a, 5), (b, 5), (c, 5)]).unwrap();
        let m = out.layer("dense0.weight").unwrap().values.as_matrix().unwrap();
        assert_eq!(m, array![[5.0]]);
    }

    #[test]
    fn personal_layers_are_a_protocol_violation() {
        let a = set(array![[1.0]], Role::Personal);
        let err = fedavg_aggregate(&[(a.clone(), 1)]).unwrap_err();
        assert!(matches!(err, SimError::Protocol(_)));
        assert!(matches!(
            aggregate_decoupled(&[(a, 1)]),
            Err(SimError::Protocol(_))
        ));
        let frozen = set(array![[1.0]], Role::FrozenBase);
        assert!(matches!(
            aggregate_decoupled(&[(frozen, 1)]),
            Err(SimError::Protocol(_))
        ));
    }

    #[test]
    fn mismatched_updates_are_rejected() {
        let a = set(array![[1.0, 2.0]], Role::Shared);
        let b = set(array![[1.0], [2.0]], Role::Shared);
        assert!(fedavg_aggregate(&[(a.clone(), 1), (b, 1)]).is_err());
        assert!(fedavg_aggregate(&[]).is_err());
        assert!(fedavg_aggregate(&[(a, 0)]).is_err());
    }

    fn adapter(a: Array2<f64>, b: Array2<f64>) -> LoraAdapter {
        LoraAdapter::new("dense0.weight".into(), 1, 2.0, a, b).unwrap()
    }

    #[test]
    fn adapters_average_factorwise_and_gap_is_measured() {
        let u = vec![adapter(array![[1.0, 0.0]], array![[2.0], [0.0]])];
        let v = vec![adapter(array![[0.0, 1.0]], array![[0.0], [2.0]])];
        let agg = aggregate_adapters(&[(u.clone(), 1), (v.clone(), 1)]).unwrap();
        assert_eq!(agg[0].a, array![[0.5, 0.5]]);
        assert_eq!(agg[0].b, array![[1.0], [1.0]]);

        // Mean of products: 0.5*(2·[1,0]ᵀ-ish…) differs from product of means.
        let gap = adapter_average_gap(&[(u, 1), (v, 1)], &agg).unwrap();
        assert!(gap > 0.0);

        // Identical updates have zero gap.
        let w = vec![adapter(array![[1.0, 1.0]], array![[1.0], [1.0]])];
        let agg2 = aggregate_adapters(&[(w.clone(), 2), (w.clone(), 3)]).unwrap();
        let gap2 = adapter_average_gap(&[(w.clone(), 2), (w, 3)], &agg2).unwrap();
        assert!(gap2 < 1e-12);
    }

    #[test]
    fn adapter_structure_mismatch_is_rejected() {
        let u = vec![adapter(array![[1.0, 0.0]], array![[2.0], [0.0]])];
        let mut other = u.clone();
        other[0].scaling = 4.0;
        assert!(aggregate_adapters(&[(u.clone(), 1), (other, 1)]).is_err());
        assert!(aggregate_adapters(&[(u, 1), (vec![], 1)]).is_err());
    }
}
