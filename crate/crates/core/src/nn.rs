//! Dense layers, activations and the Adam optimizer.
//!
//! Everything here works on row-major batches (`batch × width`) in `f64`.
//! Backward passes are written out by hand; each layer returns the
//! gradient with respect to its parameters and to its input.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_shape, Error, Result};

/// Slope of the leaky rectifier used on every hidden layer.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
}

impl Activation {
    pub fn apply(self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => pre.clone(),
            Activation::Relu => pre.mapv(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::LeakyRelu => pre.mapv(|v| if v > 0.0 { v } else { LEAKY_SLOPE * v }),
        }
    }

    /// Derivative evaluated at the pre-activation.
    pub fn slope(self, pre: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
        }
    }

    pub fn backward(self, pre: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => grad_out.clone(),
            _ => {
                let mut g = grad_out.clone();
                g.zip_mut_with(pre, |g, &p| *g *= self.slope(p));
                g
            }
        }
    }
}

/// Affine map `y = x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Zero-mean Gaussian weights with standard deviation `1/sqrt(fan_in)`, zero bias.
    pub fn gaussian<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
            let v: f64 = StandardNormal.sample(rng);
            v * std
        });
        Linear {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        ensure_shape(x.ncols() == self.fan_in(), || {
            format!(
                "linear layer expects width {}, got {}",
                self.fan_in(),
                x.ncols()
            )
        })?;
        Ok(x.dot(&self.weight) + &self.bias)
    }

    pub fn param_grad(&self, x: &ArrayView2<f64>, grad_out: &Array2<f64>) -> LinearGrad {
        LinearGrad {
            weight: x.t().dot(grad_out),
            bias: grad_out.sum_axis(Axis(0)),
        }
    }

    pub fn input_grad(&self, grad_out: &Array2<f64>) -> Array2<f64> {
        grad_out.dot(&self.weight.t())
    }

    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        grad_out: &Array2<f64>,
    ) -> (LinearGrad, Array2<f64>) {
        (self.param_grad(x, grad_out), self.input_grad(grad_out))
    }

    pub fn export(&self, prefix: &str, out: &mut TensorMap) {
        out.insert_array2(&format!("{prefix}.weight"), &self.weight);
        out.insert_array1(&format!("{prefix}.bias"), &self.bias);
    }

    pub fn import(&mut self, prefix: &str, map: &TensorMap) -> Result<()> {
        self.weight = map.array2(&format!("{prefix}.weight"), self.weight.dim())?;
        self.bias = map.array1(&format!("{prefix}.bias"), self.bias.len())?;
        Ok(())
    }
}

impl LinearGrad {
    pub fn zeros_like(layer: &Linear) -> Self {
        LinearGrad {
            weight: Array2::zeros(layer.weight.dim()),
            bias: Array1::zeros(layer.bias.len()),
        }
    }

    pub fn add_assign(&mut self, other: &LinearGrad) {
        self.weight += &other.weight;
        self.bias += &other.bias;
    }

    pub fn scale(&mut self, factor: f64) {
        self.weight *= factor;
        self.bias *= factor;
    }

    pub fn sq_norm(&self) -> f64 {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .map(|v| v * v)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        AdamConfig {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m_w: Array2<f64>,
    v_w: Array2<f64>,
    m_b: Array1<f64>,
    v_b: Array1<f64>,
}

/// Adam state for an ordered list of dense layers.
///
/// The slot order is fixed at construction; `step` must always receive the
/// layers in the same order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    slots: Vec<Moments>,
}

impl Adam {
    pub fn new(config: AdamConfig, layers: &[&Linear]) -> Self {
        let slots = layers
            .iter()
            .map(|l| Moments {
                m_w: Array2::zeros(l.weight.dim()),
                v_w: Array2::zeros(l.weight.dim()),
                m_b: Array1::zeros(l.bias.len()),
                v_b: Array1::zeros(l.bias.len()),
            })
            .collect();
        Adam {
            config,
            t: 0,
            slots,
        }
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn step(&mut self, layers: &mut [&mut Linear], grads: &[&LinearGrad]) -> Result<()> {
        if layers.len() != self.slots.len() || grads.len() != self.slots.len() {
            return Err(Error::Argument(format!(
                "optimizer has {} slots, got {} layers and {} gradients",
                self.slots.len(),
                layers.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for ((layer, grad), slot) in layers.iter_mut().zip(grads).zip(self.slots.iter_mut()) {
            ensure_shape(grad.weight.dim() == layer.weight.dim(), || {
                "gradient and parameter shapes differ".to_string()
            })?;
            ndarray::Zip::from(&mut layer.weight)
                .and(&mut slot.m_w)
                .and(&mut slot.v_w)
                .and(&grad.weight)
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, lr, beta1, beta2, eps, bc1, bc2));
            ndarray::Zip::from(&mut layer.bias)
                .and(&mut slot.m_b)
                .and(&mut slot.v_b)
                .and(&grad.bias)
                .for_each(|p, m, v, &g| adam_update(p, m, v, g, lr, beta1, beta2, eps, bc1, bc2));
        }
        Ok(())
    }

    pub fn export(&self, prefix: &str, out: &mut TensorMap) {
        out.insert(&format!("{prefix}.t"), vec![1], vec![self.t as f64]);
        for (i, s) in self.slots.iter().enumerate() {
            out.insert_array2(&format!("{prefix}.{i}.m_w"), &s.m_w);
            out.insert_array2(&format!("{prefix}.{i}.v_w"), &s.v_w);
            out.insert_array1(&format!("{prefix}.{i}.m_b"), &s.m_b);
            out.insert_array1(&format!("{prefix}.{i}.v_b"), &s.v_b);
        }
    }

    pub fn import(&mut self, prefix: &str, map: &TensorMap) -> Result<()> {
        let t = map.get(&format!("{prefix}.t"))?;
        self.t = t.data[0] as u64;
        for (i, s) in self.slots.iter_mut().enumerate() {
            s.m_w = map.array2(&format!("{prefix}.{i}.m_w"), s.m_w.dim())?;
            s.v_w = map.array2(&format!("{prefix}.{i}.v_w"), s.v_w.dim())?;
            s.m_b = map.array1(&format!("{prefix}.{i}.m_b"), s.m_b.len())?;
            s.v_b = map.array1(&format!("{prefix}.{i}.v_b"), s.v_b.len())?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn adam_update(
    p: &mut f64,
    m: &mut f64,
    v: &mut f64,
    g: f64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    *m = beta1 * *m + (1.0 - beta1) * g;
    *v = beta2 * *v + (1.0 - beta2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    *p -= lr * m_hat / (v_hat.sqrt() + eps);
}

/// Row-wise numerically stable log-softmax.
pub fn log_softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Backward through `log_softmax`, given the output and the upstream gradient.
pub fn log_softmax_backward(log_probs: &Array2<f64>, grad_out: &Array2<f64>) -> Array2<f64> {
    let mut g = grad_out.clone();
    for (mut grow, lrow) in g.rows_mut().into_iter().zip(log_probs.rows()) {
        let total: f64 = grow.sum();
        grow.zip_mut_with(&lrow, |gi, &li| *gi -= li.exp() * total);
    }
    g
}

/// Named `f64` tensors, the unit of checkpoint storage.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap {
    entries: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, dims: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.entries.insert(name.to_string(), Tensor { dims, data });
    }

    pub fn insert_array2(&mut self, name: &str, a: &Array2<f64>) {
        let (r, c) = a.dim();
        self.insert(name, vec![r, c], a.iter().copied().collect());
    }

    pub fn insert_array1(&mut self, name: &str, a: &Array1<f64>) {
        self.insert(name, vec![a.len()], a.to_vec());
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn array2(&self, name: &str, dim: (usize, usize)) -> Result<Array2<f64>> {
        let t = self.get(name)?;
        if t.dims != [dim.0, dim.1] {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has dims {:?}, expected {:?}",
                t.dims,
                [dim.0, dim.1]
            )));
        }
        Ok(Array2::from_shape_vec(dim, t.data.clone()).expect("dims checked"))
    }

    pub fn array1(&self, name: &str, len: usize) -> Result<Array1<f64>> {
        let t = self.get(name)?;
        if t.dims != [len] {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has dims {:?}, expected [{len}]",
                t.dims
            )));
        }
        Ok(Array1::from(t.data.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
