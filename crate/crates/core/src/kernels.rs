//! Shared numeric kernels: stable softmax, sigmoid, cosine similarity,
//! feed-forward layers and their seeded initialization.
//!
//! The `*_slice` functions are generic over [`Real`] and do the actual work;
//! the `Vector`/`Matrix` wrappers expose the same operations on validated
//! containers.

use crate::error::{CoreError, Result};
use crate::rng::Rng;
use crate::scalar::Real;
use crate::tensor::{Matrix, Vector};

/// Numerically stable softmax. The maximum is subtracted before
/// exponentiation so arbitrarily large logits cannot overflow; the shift is
/// treated as a constant, which leaves the derivative unchanged.
pub fn softmax_slice<R: Real>(xs: &[R]) -> Result<Vec<R>> {
    if xs.is_empty() {
        return Err(CoreError::EmptyInput { op: "softmax" });
    }
    let mut max = f64::NEG_INFINITY;
    for x in xs {
        let v = x.value();
        if !v.is_finite() {
            return Err(CoreError::NonFinite { op: "softmax" });
        }
        if v > max {
            max = v;
        }
    }
    let exps: Vec<R> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum = exps
        .iter()
        .copied()
        .reduce(|a, b| a + b)
        .expect("non-empty");
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn softmax(v: &Vector) -> Result<Vector> {
    Vector::new(softmax_slice(v.as_slice())?)
}

/// Elementwise logistic function.
pub fn sigmoid_slice<R: Real>(xs: &[R]) -> Result<Vec<R>> {
    for x in xs {
        if !x.value().is_finite() {
            return Err(CoreError::NonFinite { op: "sigmoid" });
        }
    }
    Ok(xs.iter().map(|&x| x.sigmoid()).collect())
}

pub fn sigmoid(v: &Vector) -> Result<Vector> {
    Vector::new(sigmoid_slice(v.as_slice())?)
}

pub fn dot<R: Real>(a: &[R], b: &[R]) -> R {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

/// Cosine similarity without range clamping; gradients flow through both
/// arguments. Errors on zero-norm inputs rather than returning a silent 0.
pub fn cosine_slice<R: Real>(a: &[R], b: &[R]) -> Result<R> {
    if a.len() != b.len() {
        return Err(CoreError::DimensionMismatch {
            op: "cosine_sim",
            detail: format!("{} vs {}", a.len(), b.len()),
        });
    }
    if a.is_empty() {
        return Err(CoreError::EmptyInput { op: "cosine_sim" });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na.value() == 0.0 || nb.value() == 0.0 {
        return Err(CoreError::DegenerateInput { op: "cosine_sim" });
    }
    Ok(dot(a, b) / (na * nb))
}

/// Cosine similarity on f64 vectors, clamped into [-1, 1] so downstream
/// consumers can rely on the range even in the face of rounding.
pub fn cosine_sim(a: &Vector, b: &Vector) -> Result<f64> {
    Ok(cosine_slice(a.as_slice(), b.as_slice())?.clamp(-1.0, 1.0))
}

/// Per-layer activation tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

/// One dense layer: `y = act(W x + b)`, `W` stored row-major as
/// `output_dim x input_dim`.
#[derive(Debug, Clone)]
pub struct DenseLayer<R> {
    pub weight: Vec<R>,
    pub bias: Vec<R>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl<R: Real> DenseLayer<R> {
    pub fn apply(&self, x: &[R]) -> Result<Vec<R>> {
        if x.len() != self.input_dim {
            return Err(CoreError::DimensionMismatch {
                op: "dense_layer",
                detail: format!("input {} vs layer {}", x.len(), self.input_dim),
            });
        }
        let mut out = Vec::with_capacity(self.output_dim);
        for o in 0..self.output_dim {
            let row = &self.weight[o * self.input_dim..(o + 1) * self.input_dim];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc = acc + *w * *v;
            }
            out.push(match self.activation {
                Activation::Linear => acc,
                Activation::Relu => acc.relu(),
            });
        }
        Ok(out)
    }
}

impl<R: Copy> DenseLayer<R> {
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> DenseLayer<S> {
        DenseLayer {
            weight: self.weight.iter().map(|&v| f(v)).collect(),
            bias: self.bias.iter().map(|&v| f(v)).collect(),
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            activation: self.activation,
        }
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone)]
pub struct FfnParams<R> {
    pub layers: Vec<DenseLayer<R>>,
}

impl<R: Real> FfnParams<R> {
    pub fn apply(&self, x: &[R]) -> Result<Vec<R>> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.apply(&cur)?;
        }
        Ok(cur)
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_dim)
    }
}

impl<R: Copy> FfnParams<R> {
    pub fn map<S>(&self, f: &mut impl FnMut(R) -> S) -> FfnParams<S> {
        FfnParams {
            layers: self.layers.iter().map(|l| l.map(f)).collect(),
        }
    }
}

/// Shape description for building an [`FfnParams`].
#[derive(Debug, Clone)]
pub struct FfnSpec {
    pub layers: Vec<(usize, usize, Activation)>,
}

impl FfnSpec {
    /// Single linear layer.
    pub fn linear(input: usize, output: usize) -> Self {
        FfnSpec {
            layers: vec![(input, output, Activation::Linear)],
        }
    }

    /// Two layers with a relu bottleneck in between.
    pub fn bottleneck(dim: usize, hidden: usize) -> Self {
        FfnSpec {
            layers: vec![
                (dim, hidden, Activation::Relu),
                (hidden, dim, Activation::Linear),
            ],
        }
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(CoreError::EmptyInput { op: "ffn_spec" });
        }
        for (i, &(inp, out, _)) in self.layers.iter().enumerate() {
            if inp == 0 || out == 0 {
                return Err(CoreError::DimensionMismatch {
                    op: "ffn_spec",
                    detail: format!("layer {i} has a zero dimension"),
                });
            }
            if i > 0 && self.layers[i - 1].1 != inp {
                return Err(CoreError::DimensionMismatch {
                    op: "ffn_spec",
                    detail: format!(
                        "layer {i} expects {} inputs but layer {} emits {}",
                        inp,
                        i - 1,
                        self.layers[i - 1].1
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Seeded initialization: weights and biases drawn uniformly from
/// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`. The same seed always produces
/// bit-identical parameters.
pub fn init_params(seed: u64, spec: &FfnSpec) -> Result<FfnParams<f64>> {
    let mut rng = Rng::new(seed);
    init_ffn(&mut rng, spec)
}

/// Like [`init_params`] but draws from a caller-owned generator, so a whole
/// model can be initialized from a single seed.
pub fn init_ffn(rng: &mut Rng, spec: &FfnSpec) -> Result<FfnParams<f64>> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for &(input_dim, output_dim, activation) in &spec.layers {
        let bound = 1.0 / (input_dim as f64).sqrt();
        let weight = (0..input_dim * output_dim)
            .map(|_| rng.uniform(-bound, bound))
            .collect();
        let bias = (0..output_dim).map(|_| rng.uniform(-bound, bound)).collect();
        layers.push(DenseLayer {
            weight,
            bias,
            input_dim,
            output_dim,
            activation,
        });
    }
    Ok(FfnParams { layers })
}

/// Apply an FFN row-wise to a matrix.
pub fn ffn_forward(params: &FfnParams<f64>, x: &Matrix) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        rows.push(params.apply(x.row(r))?);
    }
    Matrix::from_rows(&rows)
}
