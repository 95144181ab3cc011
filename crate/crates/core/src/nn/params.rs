use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NetSpec, NnError};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named parameter tensors in a fixed order.
///
/// Every mutable access stamps a fresh generation so that forward caches
/// computed against older values are rejected by backward. Equality
/// compares tensors only.
#[derive(Debug, Clone)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
    generation: u64,
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.tensors == other.tensors
    }
}

/// Gradients with the same layout as a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradSet {
    pub tensors: Vec<Tensor>,
}

/// Tensor names and shapes a spec requires, in storage order.
pub(crate) fn layout(spec: &NetSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    if let Some(conv) = &spec.conv {
        for &w in &conv.kernel_widths {
            out.push((format!("conv{w}.kernel"), vec![conv.filters_per_width, w, conv.input_dim]));
            out.push((format!("conv{w}.bias"), vec![conv.filters_per_width]));
        }
    }
    for (i, d) in spec.dense.iter().enumerate() {
        out.push((format!("dense{i}.weight"), vec![d.out_dim, d.in_dim]));
        out.push((format!("dense{i}.bias"), vec![d.out_dim]));
    }
    out
}

impl ParamSet {
    pub fn zeros(spec: &NetSpec) -> Self {
        Self::from_tensors(layout(spec).into_iter().map(|(n, s)| Tensor::zeros(n, s)).collect())
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &NetSpec, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(spec);
        for t in &mut p.tensors {
            if t.name.ends_with(".bias") {
                continue;
            }
            let (fan_in, fan_out) = match t.shape.as_slice() {
                [f, w, d] => (w * d, *f),
                [o, i] => (*i, *o),
                _ => unreachable!("weights are rank 2 or 3"),
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            t.data.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        p
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Self {
        Self { tensors, generation: next_generation() }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        self.generation = next_generation();
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.generation = next_generation();
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks names and shapes against what `spec` requires.
    pub fn check_layout(&self, spec: &NetSpec) -> Result<(), NnError> {
        let want = layout(spec);
        if want.len() != self.tensors.len() {
            return Err(NnError::Shape(format!("{} tensors, spec needs {}", self.tensors.len(), want.len())));
        }
        for ((name, shape), t) in want.iter().zip(&self.tensors) {
            if name != &t.name || shape != &t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(NnError::Shape(format!("tensor {} {:?} does not match {name} {shape:?}", t.name, t.shape)));
            }
        }
        Ok(())
    }

    /// Rounds every value through `f32`, matching what a checkpoint stores.
    pub fn quantize_f32(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = f64::from(*v as f32));
        }
    }

    /// Copies every tensor whose name starts with `prefix` from `src`.
    pub fn copy_prefix_from(&mut self, src: &ParamSet, prefix: &str) -> Result<usize, NnError> {
        let mut copied = 0;
        let gen = next_generation();
        for t in self.tensors.iter_mut().filter(|t| t.name.starts_with(prefix)) {
            let s = src
                .get(&t.name)
                .filter(|s| s.shape == t.shape)
                .ok_or_else(|| NnError::Shape(format!("source lacks {} {:?}", t.name, t.shape)))?;
            t.data.copy_from_slice(&s.data);
            copied += 1;
        }
        self.generation = gen;
        Ok(copied)
    }
}

impl GradSet {
    pub fn zeros_like(p: &ParamSet) -> Self {
        Self { tensors: p.tensors.iter().map(|t| Tensor::zeros(t.name.clone(), t.shape.clone())).collect() }
    }

    pub fn fill_zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v = 0.0));
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v *= k));
    }

    /// Zeroes gradients of tensors whose name starts with `prefix`.
    pub fn zero_prefix(&mut self, prefix: &str) {
        for t in self.tensors.iter_mut().filter(|t| t.name.starts_with(prefix)) {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn same_layout(&self, p: &ParamSet) -> bool {
        self.tensors.len() == p.tensors.len()
            && self.tensors.iter().zip(&p.tensors).all(|(g, t)| g.name == t.name && g.shape == t.shape)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ConvSpec;
    use rand::SeedableRng;

    fn spec() -> NetSpec {
        NetSpec::text_cnn(ConvSpec::new(vec![2, 3], 4, 8), 12, Some(6), 2, 5)
    }

    #[test]
    fn layout_counts() {
        let p = ParamSet::zeros(&spec());
        // conv: 4*2*8+4 + 4*3*8+4, dense: (8+2)*6+6, 6*5+5
        assert_eq!(p.n_scalars(), 68 + 100 + 66 + 35);
        p.check_layout(&spec()).unwrap();
    }

    #[test]
    fn init_respects_glorot_bound_and_zero_bias() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = ParamSet::init(&spec(), &mut rng);
        let k = p.get("conv3.kernel").unwrap();
        let bound = (6.0f64 / (24.0 + 4.0)).sqrt();
        assert!(k.data.iter().all(|v| v.abs() <= bound));
        assert!(p.get("dense1.bias").unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mutation_bumps_generation() {
        let mut p = ParamSet::zeros(&spec());
        let g0 = p.generation();
        p.tensors_mut();
        assert_ne!(g0, p.generation());
    }
}
