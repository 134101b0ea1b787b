//! Model core: named parameter tensors with ownership roles, and the small
//! dense network the simulator trains.
//!
//! Parameters are grouped into a [`ParameterSet`] whose layers carry a
//! [`Role`]. Roles drive everything downstream: what gets trained, what gets
//! uploaded to the server, what is frozen, and what must never leave the
//! client. The network itself is a 2–4 layer MLP with a single logistic
//! output, specified by [`ModelSpec`].

mod lora;
mod train;

pub use lora::{init_lora, merged_weight, LoraAdapter};
pub use train::{
    bce_from_probabilities, forward, gradient, loss, sgd_step, AdapterGrad, GradEntry, Gradients,
    PROB_EPS,
};

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Ownership/treatment class of a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    /// Trained locally, aggregated globally.
    Shared,
    /// Trained locally, never uploaded.
    Personal,
    /// Not trained, distributed once.
    FrozenBase,
    /// Low-rank factors trained on top of a frozen tensor.
    Adapter,
}

impl Role {
    /// Whether gradient descent may touch tensors with this role.
    pub fn is_trainable(self) -> bool {
        matches!(self, Role::Shared | Role::Personal)
    }
}

/// A dense tensor: either a weight matrix or a bias vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Matrix(Array2<f64>),
    Vector(Array1<f64>),
}

impl Tensor {
    pub fn len(&self) -> usize {
        match self {
            Tensor::Matrix(m) => m.len(),
            Tensor::Vector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Tensor::Matrix(m) => m.iter().all(|x| x.is_finite()),
            Tensor::Vector(v) => v.iter().all(|x| x.is_finite()),
        }
    }

    pub fn shape_string(&self) -> String {
        match self {
            Tensor::Matrix(m) => format!("{}x{}", m.nrows(), m.ncols()),
            Tensor::Vector(v) => format!("{}", v.len()),
        }
    }

    pub fn as_matrix(&self) -> Result<&Array2<f64>> {
        match self {
            Tensor::Matrix(m) => Ok(m),
            Tensor::Vector(_) => Err(SimError::shape("expected a matrix, found a vector")),
        }
    }

    pub fn as_vector(&self) -> Result<&Array1<f64>> {
        match self {
            Tensor::Vector(v) => Ok(v),
            Tensor::Matrix(_) => Err(SimError::shape("expected a vector, found a matrix")),
        }
    }

    pub fn zeros_like(&self) -> Tensor {
        match self {
            Tensor::Matrix(m) => Tensor::Matrix(Array2::zeros(m.raw_dim())),
            Tensor::Vector(v) => Tensor::Vector(Array1::zeros(v.raw_dim())),
        }
    }

    /// `self += weight * other`; shapes must agree.
    pub fn add_scaled(&mut self, other: &Tensor, weight: f64) -> Result<()> {
        match (self, other) {
            (Tensor::Matrix(a), Tensor::Matrix(b)) if a.raw_dim() == b.raw_dim() => {
                a.scaled_add(weight, b);
                Ok(())
            }
            (Tensor::Vector(a), Tensor::Vector(b)) if a.raw_dim() == b.raw_dim() => {
                a.scaled_add(weight, b);
                Ok(())
            }
            (a, b) => Err(SimError::shape(format!(
                "cannot combine tensor of shape {} with shape {}",
                a.shape_string(),
                b.shape_string()
            ))),
        }
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor) -> Option<f64> {
        match (self, other) {
            (Tensor::Matrix(a), Tensor::Matrix(b)) if a.raw_dim() == b.raw_dim() => Some(
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
            ),
            (Tensor::Vector(a), Tensor::Vector(b)) if a.raw_dim() == b.raw_dim() => Some(
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max),
            ),
            _ => None,
        }
    }

    /// True iff both tensors hold bit-identical floats in the same shape.
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        match (self, other) {
            (Tensor::Matrix(a), Tensor::Matrix(b)) => {
                a.raw_dim() == b.raw_dim()
                    && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Tensor::Vector(a), Tensor::Vector(b)) => {
                a.raw_dim() == b.raw_dim()
                    && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

/// A named tensor with a role.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub role: Role,
    pub values: Tensor,
}

/// An ordered collection of uniquely named, finite layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    layers: Vec<Layer>,
}

impl ParameterSet {
    /// Build a set, enforcing unique names and finite values.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        for (i, layer) in layers.iter().enumerate() {
            if !layer.values.is_finite() {
                return Err(SimError::numeric(format!(
                    "layer `{}` contains a non-finite entry",
                    layer.name
                )));
            }
            if layers[..i].iter().any(|other| other.name == layer.name) {
                return Err(SimError::usage(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
        }
        Ok(ParameterSet { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub(crate) fn layer_mut(&mut self, name: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.values.len()).sum()
    }

    /// Number of scalar parameters carrying `role`.
    pub fn count_role(&self, role: Role) -> usize {
        self.layers
            .iter()
            .filter(|l| l.role == role)
            .map(|l| l.values.len())
            .sum()
    }

    /// Clone of the layers whose role is in `roles`, preserving order.
    pub fn subset(&self, roles: &[Role]) -> ParameterSet {
        ParameterSet {
            layers: self
                .layers
                .iter()
                .filter(|l| roles.contains(&l.role))
                .cloned()
                .collect(),
        }
    }

    /// Merge two sets with disjoint layer names into one, ordered by name.
    pub fn union(a: &ParameterSet, b: &ParameterSet) -> Result<ParameterSet> {
        let mut layers: Vec<Layer> = a.layers.iter().chain(b.layers.iter()).cloned().collect();
        layers.sort_by(|x, y| x.name.cmp(&y.name));
        for pair in layers.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(SimError::usage(format!(
                    "layer `{}` present in both sets",
                    pair[0].name
                )));
            }
        }
        Ok(ParameterSet { layers })
    }

    /// Replace the values of same-named layers with those from `other`.
    pub fn overwrite_from(&mut self, other: &ParameterSet) -> Result<()> {
        for incoming in other.layers() {
            let target = self.layer_mut(&incoming.name).ok_or_else(|| {
                SimError::usage(format!("no layer named `{}` to overwrite", incoming.name))
            })?;
            if target.values.max_abs_diff(&incoming.values).is_none() {
                return Err(SimError::shape(format!(
                    "layer `{}`: shape {} incompatible with {}",
                    incoming.name,
                    target.values.shape_string(),
                    incoming.values.shape_string()
                )));
            }
            target.values = incoming.values.clone();
        }
        Ok(())
    }

    /// Clone of this set with one scalar entry of `layer` shifted by `delta`
    /// (`flat_index` is row-major). Intended for finite-difference probes.
    pub fn perturbed(&self, layer: &str, flat_index: usize, delta: f64) -> Result<ParameterSet> {
        let mut out = self.clone();
        let target = out
            .layer_mut(layer)
            .ok_or_else(|| SimError::usage(format!("no layer named `{layer}`")))?;
        match &mut target.values {
            Tensor::Matrix(m) => {
                let slot = m
                    .as_slice_mut()
                    .and_then(|s| s.get_mut(flat_index))
                    .ok_or_else(|| SimError::usage(format!("index {flat_index} out of range")))?;
                *slot += delta;
            }
            Tensor::Vector(v) => {
                let slot = v
                    .as_slice_mut()
                    .and_then(|s| s.get_mut(flat_index))
                    .ok_or_else(|| SimError::usage(format!("index {flat_index} out of range")))?;
                *slot += delta;
            }
        }
        Ok(out)
    }

    /// True iff both sets hold the same layers (names, roles, bit-identical values).
    pub fn bitwise_eq(&self, other: &ParameterSet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(other.layers.iter()).all(|(a, b)| {
                a.name == b.name && a.role == b.role && a.values.bitwise_eq(&b.values)
            })
    }
}

/// Hidden-layer nonlinearity. The output unit is always logistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value `h = apply(z)`.
    pub fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// How roles are assigned to the dense stack at initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleLayout {
    /// Every layer is shared (plain FedAvg, or centralized training).
    AllShared,
    /// Layers below `head_boundary` are shared; the head is personal.
    Decoupled,
    /// Every layer is frozen; training happens in adapters only.
    Frozen,
}

/// Which parameters a strategy trains and ships; used for payload math.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// All trainable tensors (shared and personal).
    Full,
    /// Adapter factors only.
    AdapterOnly,
    /// Shared tensors only.
    SharedOnly,
}

/// Architecture of the dense network.
///
/// `architecture` lists unit counts from input to output, e.g. `[6, 32, 16, 1]`
/// is a net with dense layers 6→32→16→1. The output dimension must be 1 (the
/// task is binary classification via a logistic unit). `head_boundary` is the
/// index of the first dense layer that belongs to the personal head under
/// [`RoleLayout::Decoupled`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Vec<usize>,
    pub activation: Activation,
    pub head_boundary: usize,
    pub adapter_targets: Vec<String>,
}

impl ModelSpec {
    pub fn new(
        architecture: Vec<usize>,
        activation: Activation,
        head_boundary: usize,
        adapter_targets: Vec<String>,
    ) -> Result<Self> {
        let spec = ModelSpec {
            architecture,
            activation,
            head_boundary,
            adapter_targets,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let n_dense = self.architecture.len().saturating_sub(1);
        if !(2..=4).contains(&n_dense) {
            return Err(SimError::usage(format!(
                "architecture must describe 2 to 4 dense layers, got {n_dense}"
            )));
        }
        if self.architecture.iter().any(|&d| d == 0) {
            return Err(SimError::usage("architecture dimensions must be positive"));
        }
        if *self.architecture.last().unwrap() != 1 {
            return Err(SimError::usage("output dimension must be 1"));
        }
        if self.head_boundary == 0 || self.head_boundary >= n_dense {
            return Err(SimError::usage(format!(
                "head_boundary must lie in 1..{n_dense} so both the shared stack \
                 and the head are non-empty"
            )));
        }
        for target in &self.adapter_targets {
            if !(0..n_dense).any(|i| weight_name(i) == *target) {
                return Err(SimError::usage(format!(
                    "adapter target `{target}` does not name a weight layer"
                )));
            }
        }
        Ok(())
    }

    /// Number of dense layers.
    pub fn dense_count(&self) -> usize {
        self.architecture.len() - 1
    }

    /// (input_dim, output_dim) of dense layer `i`.
    pub fn layer_dims(&self, i: usize) -> (usize, usize) {
        (self.architecture[i], self.architecture[i + 1])
    }

    /// Role of dense layer `i` under `layout`.
    pub fn layer_role(&self, i: usize, layout: RoleLayout) -> Role {
        match layout {
            RoleLayout::AllShared => Role::Shared,
            RoleLayout::Frozen => Role::FrozenBase,
            RoleLayout::Decoupled => {
                if i < self.head_boundary {
                    Role::Shared
                } else {
                    Role::Personal
                }
            }
        }
    }

    /// Initialize all dense layers.
    ///
    /// Weights are drawn uniformly from ±1/√d_in; biases start at zero. Draw
    /// order is fixed (layer by layer, row-major), so a given RNG state yields
    /// a bit-reproducible set.
    pub fn init_params(&self, layout: RoleLayout, rng: &mut impl Rng) -> Result<ParameterSet> {
        let mut layers = Vec::with_capacity(2 * self.dense_count());
        for i in 0..self.dense_count() {
            let (d_in, d_out) = self.layer_dims(i);
            let bound = 1.0 / (d_in as f64).sqrt();
            let role = self.layer_role(i, layout);
            let mut w = Array2::zeros((d_out, d_in));
            for x in w.iter_mut() {
                *x = rng.random_range(-bound..bound);
            }
            layers.push(Layer {
                name: weight_name(i),
                role,
                values: Tensor::Matrix(w),
            });
            layers.push(Layer {
                name: bias_name(i),
                role,
                values: Tensor::Vector(Array1::zeros(d_out)),
            });
        }
        ParameterSet::new(layers)
    }

    /// Check that `params` holds every dense layer this spec requires, with
    /// matching shapes.
    pub fn check_params(&self, params: &ParameterSet) -> Result<()> {
        for i in 0..self.dense_count() {
            let (d_in, d_out) = self.layer_dims(i);
            let w = params
                .layer(&weight_name(i))
                .ok_or_else(|| SimError::shape(format!("missing layer `{}`", weight_name(i))))?;
            let m = w.values.as_matrix()?;
            if m.nrows() != d_out || m.ncols() != d_in {
                return Err(SimError::shape(format!(
                    "layer `{}`: expected {d_out}x{d_in}, found {}",
                    weight_name(i),
                    w.values.shape_string()
                )));
            }
            let b = params
                .layer(&bias_name(i))
                .ok_or_else(|| SimError::shape(format!("missing layer `{}`", bias_name(i))))?;
            if b.values.as_vector()?.len() != d_out {
                return Err(SimError::shape(format!(
                    "layer `{}`: expected length {d_out}, found {}",
                    bias_name(i),
                    b.values.shape_string()
                )));
            }
        }
        Ok(())
    }
}

/// Canonical name of dense layer `i`'s weight matrix.
pub fn weight_name(i: usize) -> String {
    format!("dense{i}.weight")
}

/// Canonical name of dense layer `i`'s bias vector.
pub fn bias_name(i: usize) -> String {
    format!("dense{i}.bias")
}

/// Scalar count of the parameters a strategy actually trains (and ships).
pub fn trainable_parameter_count(
    params: &ParameterSet,
    adapters: &[LoraAdapter],
    mode: CountMode,
) -> usize {
    match mode {
        CountMode::Full => params.count_role(Role::Shared) + params.count_role(Role::Personal),
        CountMode::AdapterOnly => adapters.iter().map(|a| a.param_count()).sum(),
        CountMode::SharedOnly => params.count_role(Role::Shared),
    }
}
