//! Forward pass, binary cross-entropy loss, backpropagation, and the SGD
//! update rule.
//!
//! All arithmetic is `f64`. The network maps an `n × d` feature matrix through
//! the dense stack (hidden activations per [`ModelSpec`], logistic output) to
//! `n` probabilities. Gradients are produced only for tensors whose role is
//! trainable, plus adapter factors for adapted layers; frozen tensors never
//! appear in a [`Gradients`] value.

use ndarray::{Array1, Array2, Axis};

use super::{bias_name, merged_weight, weight_name, LoraAdapter, ModelSpec, ParameterSet, Tensor};
use crate::error::{Result, SimError};

/// Probability clamp used inside the loss so `ln` never sees 0.
pub const PROB_EPS: f64 = 1e-12;

/// Gradient for one named dense tensor.
#[derive(Debug, Clone)]
pub struct GradEntry {
    pub name: String,
    pub value: Tensor,
}

/// Gradient for both factors of one adapter.
#[derive(Debug, Clone)]
pub struct AdapterGrad {
    pub target_layer: String,
    pub a: Array2<f64>,
    pub b: Array2<f64>,
}

/// A parameter-shaped gradient: entries mirror the trainable subset of the
/// [`ParameterSet`] it was computed against.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub entries: Vec<GradEntry>,
    pub adapters: Vec<AdapterGrad>,
}

impl Gradients {
    pub fn entry(&self, name: &str) -> Option<&GradEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn adapter(&self, target_layer: &str) -> Option<&AdapterGrad> {
        self.adapters.iter().find(|g| g.target_layer == target_layer)
    }

    /// Total number of scalar gradient components.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum::<usize>()
            + self.adapters.iter().map(|g| g.a.len() + g.b.len()).sum::<usize>()
    }
}

struct ForwardTrace {
    /// `inputs[i]` is what dense layer `i` consumed; `inputs[0]` is the data.
    inputs: Vec<Array2<f64>>,
    /// Effective weights (base plus adapter delta) per dense layer.
    weights: Vec<Array2<f64>>,
    probabilities: Array1<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn run_forward(
    spec: &ModelSpec,
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    features: &Array2<f64>,
) -> Result<ForwardTrace> {
    spec.check_params(params)?;
    if features.ncols() != spec.architecture[0] {
        return Err(SimError::shape(format!(
            "features have {} columns, model expects {}",
            features.ncols(),
            spec.architecture[0]
        )));
    }
    if features.nrows() == 0 {
        return Err(SimError::usage("forward pass over an empty batch"));
    }
    if features.iter().any(|x| !x.is_finite()) {
        return Err(SimError::numeric("features contain a non-finite entry"));
    }

    let n_dense = spec.dense_count();
    let mut inputs = Vec::with_capacity(n_dense);
    let mut weights = Vec::with_capacity(n_dense);
    let mut h = features.clone();
    let mut probabilities = Array1::zeros(features.nrows());

    for i in 0..n_dense {
        let w = merged_weight(params, adapters, &weight_name(i))?;
        let b = params
            .layer(&bias_name(i))
            .expect("checked by check_params")
            .values
            .as_vector()?
            .clone();
        let mut z = h.dot(&w.t());
        z += &b;
        inputs.push(h);
        weights.push(w);
        if i + 1 == n_dense {
            probabilities = z.column(0).mapv(sigmoid);
            h = z; // unused past this point
        } else {
            h = z.mapv(|v| spec.activation.apply(v));
        }
    }
    let _ = h;

    Ok(ForwardTrace {
        inputs,
        weights,
        probabilities,
    })
}

/// Predicted probabilities of the positive class, one per row of `features`.
pub fn forward(
    spec: &ModelSpec,
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    features: &Array2<f64>,
) -> Result<Array1<f64>> {
    Ok(run_forward(spec, params, adapters, features)?.probabilities)
}

fn check_labels(n: usize, labels: &[u8]) -> Result<()> {
    if labels.len() != n {
        return Err(SimError::shape(format!(
            "{n} feature rows but {} labels",
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(SimError::usage("labels must be 0 or 1"));
    }
    Ok(())
}

/// Mean binary cross-entropy of predicted probabilities against labels, with
/// probabilities clamped to `[PROB_EPS, 1 - PROB_EPS]`.
pub fn bce_from_probabilities(probabilities: &Array1<f64>, labels: &[u8]) -> Result<f64> {
    check_labels(probabilities.len(), labels)?;
    if probabilities.is_empty() {
        return Err(SimError::usage("loss over an empty batch"));
    }
    let mut total = 0.0;
    for (&p, &y) in probabilities.iter().zip(labels) {
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / probabilities.len() as f64)
}

/// Mean binary cross-entropy of the model on `(features, labels)`.
pub fn loss(
    spec: &ModelSpec,
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    features: &Array2<f64>,
    labels: &[u8],
) -> Result<f64> {
    let trace = run_forward(spec, params, adapters, features)?;
    bce_from_probabilities(&trace.probabilities, labels)
}

/// Backpropagate the mean BCE loss. Returns the loss value together with
/// gradients for every trainable tensor and adapter factor.
pub fn gradient(
    spec: &ModelSpec,
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    features: &Array2<f64>,
    labels: &[u8],
) -> Result<(f64, Gradients)> {
    let trace = run_forward(spec, params, adapters, features)?;
    check_labels(trace.probabilities.len(), labels)?;
    let loss_value = bce_from_probabilities(&trace.probabilities, labels)?;

    let n = features.nrows() as f64;
    let n_dense = spec.dense_count();

    // For the logistic output with BCE, dL/dz = (p - y) / n.
    let mut d_z = Array2::zeros((features.nrows(), 1));
    for (i, (&p, &y)) in trace.probabilities.iter().zip(labels).enumerate() {
        d_z[[i, 0]] = (p - f64::from(y)) / n;
    }

    let mut grads = Gradients::default();
    for i in (0..n_dense).rev() {
        let layer_input = &trace.inputs[i];
        let d_w = d_z.t().dot(layer_input);
        let d_b = d_z.sum_axis(Axis(0));

        let w_name = weight_name(i);
        for adapter in adapters.iter().filter(|a| a.target_layer == w_name) {
            let s = adapter.scaling / adapter.rank as f64;
            grads.adapters.push(AdapterGrad {
                target_layer: w_name.clone(),
                a: adapter.b.t().dot(&d_w).mapv(|x| x * s),
                b: d_w.dot(&adapter.a.t()).mapv(|x| x * s),
            });
        }
        if params.layer(&w_name).expect("validated").role.is_trainable() {
            grads.entries.push(GradEntry {
                name: w_name,
                value: Tensor::Matrix(d_w.clone()),
            });
        }
        let b_name = bias_name(i);
        if params.layer(&b_name).expect("validated").role.is_trainable() {
            grads.entries.push(GradEntry {
                name: b_name,
                value: Tensor::Vector(d_b),
            });
        }

        if i > 0 {
            let d_h = d_z.dot(&trace.weights[i]);
            // inputs[i] is the activation output of layer i-1, so the
            // derivative can be expressed through it directly.
            let deriv = trace.inputs[i].mapv(|h| spec.activation.derivative_from_output(h));
            d_z = d_h * deriv;
        }
    }
    grads.entries.reverse();
    grads.adapters.reverse();
    Ok((loss_value, grads))
}

/// In-place SGD update: `θ ← θ - lr · g` for every gradient component.
///
/// Rejects gradients that address missing tensors, non-trainable roles, or
/// mismatched shapes, and fails if the step produces a non-finite value.
pub fn sgd_step(
    params: &mut ParameterSet,
    adapters: &mut [LoraAdapter],
    grads: &Gradients,
    learning_rate: f64,
) -> Result<()> {
    if !learning_rate.is_finite() || learning_rate <= 0.0 {
        return Err(SimError::usage("learning rate must be a positive real"));
    }
    for entry in &grads.entries {
        let layer = params
            .layer_mut(&entry.name)
            .ok_or_else(|| SimError::usage(format!("gradient for unknown layer `{}`", entry.name)))?;
        if !layer.role.is_trainable() {
            return Err(SimError::protocol(format!(
                "attempted SGD update of non-trainable layer `{}`",
                entry.name
            )));
        }
        layer.values.add_scaled(&entry.value, -learning_rate)?;
        if !layer.values.is_finite() {
            return Err(SimError::numeric(format!(
                "layer `{}` became non-finite after update",
                entry.name
            )));
        }
    }
    for grad in &grads.adapters {
        let adapter = adapters
            .iter_mut()
            .find(|a| a.target_layer == grad.target_layer)
            .ok_or_else(|| {
                SimError::usage(format!(
                    "gradient for unknown adapter target `{}`",
                    grad.target_layer
                ))
            })?;
        if adapter.a.raw_dim() != grad.a.raw_dim() || adapter.b.raw_dim() != grad.b.raw_dim() {
            return Err(SimError::shape(format!(
                "adapter gradient shape mismatch for `{}`",
                grad.target_layer
            )));
        }
        adapter.a.scaled_add(-learning_rate, &grad.a);
        adapter.b.scaled_add(-learning_rate, &grad.b);
        if adapter.a.iter().chain(adapter.b.iter()).any(|x| !x.is_finite()) {
            return Err(SimError::numeric(format!(
                "adapter for `{}` became non-finite after update",
                grad.target_layer
            )));
        }
    }
    Ok(())
}
