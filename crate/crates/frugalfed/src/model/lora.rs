//! Low-rank adapters over frozen weight matrices.
//!
//! An adapter contributes `(scaling / rank) · B · A` on top of its target
//! matrix. `A` is `rank × d_in` and initialized uniformly in ±1/√d_in; `B` is
//! `d_out × rank` and starts at zero, so a freshly initialized adapter leaves
//! the network's function unchanged.

use ndarray::Array2;
use rand::Rng;

use super::{weight_name, ModelSpec, ParameterSet};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub target_layer: String,
    pub rank: usize,
    pub scaling: f64,
    /// `rank × d_in` input-side factor.
    pub a: Array2<f64>,
    /// `d_out × rank` output-side factor.
    pub b: Array2<f64>,
}

impl LoraAdapter {
    pub fn new(
        target_layer: String,
        rank: usize,
        scaling: f64,
        a: Array2<f64>,
        b: Array2<f64>,
    ) -> Result<Self> {
        if rank == 0 {
            return Err(SimError::usage("adapter rank must be positive"));
        }
        if !scaling.is_finite() || scaling <= 0.0 {
            return Err(SimError::usage("adapter scaling must be a positive real"));
        }
        if a.nrows() != rank || b.ncols() != rank {
            return Err(SimError::shape(format!(
                "adapter for `{target_layer}`: factors {}x{} and {}x{} do not carry rank {rank}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let (d_in, d_out) = (a.ncols(), b.nrows());
        if rank > d_in.min(d_out) {
            return Err(SimError::usage(format!(
                "rank {rank} exceeds min({d_in}, {d_out}) for `{target_layer}`"
            )));
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(SimError::numeric(format!(
                "adapter for `{target_layer}` contains a non-finite entry"
            )));
        }
        Ok(LoraAdapter {
            target_layer,
            rank,
            scaling,
            a,
            b,
        })
    }

    /// Dense update this adapter adds to its target: `(scaling/rank) · B · A`.
    pub fn delta(&self) -> Array2<f64> {
        let mut d = self.b.dot(&self.a);
        d *= self.scaling / self.rank as f64;
        d
    }

    /// Number of scalars in both factors: `rank · (d_in + d_out)`.
    pub fn param_count(&self) -> usize {
        self.rank * (self.a.ncols() + self.b.nrows())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.a.ncols(), self.b.nrows())
    }
}

/// Create one adapter per target layer of `spec`.
///
/// Factor `A` is sampled (row-major, targets in spec order) from ±1/√d_in;
/// `B` starts at zero, so the adapted network initially computes exactly what
/// the base network computes.
pub fn init_lora(
    spec: &ModelSpec,
    rank: usize,
    scaling: f64,
    rng: &mut impl Rng,
) -> Result<Vec<LoraAdapter>> {
    if spec.adapter_targets.is_empty() {
        return Err(SimError::usage("model spec lists no adapter targets"));
    }
    let mut adapters = Vec::with_capacity(spec.adapter_targets.len());
    for target in &spec.adapter_targets {
        let idx = (0..spec.dense_count())
            .find(|&i| weight_name(i) == *target)
            .ok_or_else(|| SimError::usage(format!("unknown adapter target `{target}`")))?;
        let (d_in, d_out) = spec.layer_dims(idx);
        if rank > d_in.min(d_out) {
            return Err(SimError::usage(format!(
                "rank {rank} exceeds min({d_in}, {d_out}) for `{target}`"
            )));
        }
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut a = Array2::zeros((rank, d_in));
        for x in a.iter_mut() {
            *x = rng.random_range(-bound..bound);
        }
        let b = Array2::zeros((d_out, rank));
        adapters.push(LoraAdapter::new(target.clone(), rank, scaling, a, b)?);
    }
    Ok(adapters)
}

/// Effective weight of `layer` in `params` after applying any adapter
/// targeting it: `W + (scaling/rank) · B · A`.
pub fn merged_weight(
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    layer: &str,
) -> Result<Array2<f64>> {
    let base = params
        .layer(layer)
        .ok_or_else(|| SimError::shape(format!("missing layer `{layer}`")))?
        .values
        .as_matrix()?;
    let mut w = base.clone();
    for adapter in adapters.iter().filter(|a| a.target_layer == layer) {
        let (d_in, d_out) = adapter.dims();
        if w.nrows() != d_out || w.ncols() != d_in {
            return Err(SimError::shape(format!(
                "adapter for `{layer}` implies {d_out}x{d_in}, layer is {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        w += &adapter.delta();
    }
    Ok(w)
}
