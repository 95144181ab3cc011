use std::hash::{Hash, Hasher};

use super::params::layout;
use super::{bce_logit_grad, Activation, GradSet, NetSpec, NnError, ParamSet};
use crate::embed::EmbeddingTensor;

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        s0 += x[0] * y[0];
        s1 += x[1] * y[1];
        s2 += x[2] * y[2];
        s3 += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (s0 + s1) + (s2 + s3) + tail
}

fn axpy(k: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += k * xi;
    }
}

/// Intermediates of one forward pass, tied to the embedding it read.
#[derive(Debug, Clone)]
pub struct ForwardCache<'e> {
    embedding: &'e EmbeddingTensor,
    generation: u64,
    spec_hash: u64,
    /// Winning window per pooled feature.
    argmax: Vec<usize>,
    /// Pre-activation at the winning window.
    pooled_pre: Vec<f64>,
    feature_len: usize,
    /// `acts[0]` is the dense input, `acts[k + 1]` the output of dense layer `k`.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache<'_> {
    pub fn probs(&self) -> &[f64] {
        self.acts.last().expect("at least one dense layer")
    }

    /// Pooled conv (or mean) features, without the auxiliary inputs.
    pub fn features(&self) -> &[f64] {
        &self.acts[0][..self.feature_len]
    }

    /// Window index that won max-pooling for each conv feature.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Max-pooled conv outputs of one chunk (or its mean row without a conv).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvOutput {
    argmax: Vec<usize>,
    pooled_pre: Vec<f64>,
    features: Vec<f64>,
}

impl ConvOutput {
    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// A network spec with its parameter layout resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct TextCnn {
    spec: NetSpec,
    spec_hash: u64,
}

impl TextCnn {
    pub fn new(spec: NetSpec) -> Result<Self, NnError> {
        spec.validate()?;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        format!("{spec:?}").hash(&mut h);
        Ok(Self { spec_hash: h.finish(), spec })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn out_dim(&self) -> usize {
        self.spec.out_dim()
    }

    fn conv_tensors(&self) -> usize {
        self.spec.conv.as_ref().map_or(0, |c| 2 * c.kernel_widths.len())
    }

    fn check(&self, params: &ParamSet, emb: &EmbeddingTensor, aux: &[f64]) -> Result<(), NnError> {
        let want = layout(&self.spec);
        let ok = want.len() == params.tensors().len()
            && want.iter().zip(params.tensors()).all(|((_, s), t)| s == &t.shape);
        if !ok {
            params.check_layout(&self.spec)?;
        }
        if emb.dim() != self.spec.input_dim || emb.len() != self.spec.chunk_len {
            return Err(NnError::Shape(format!(
                "embedding {}×{} but network expects {}×{}",
                emb.len(),
                emb.dim(),
                self.spec.chunk_len,
                self.spec.input_dim
            )));
        }
        if aux.len() != self.spec.aux_dim {
            return Err(NnError::Shape(format!("aux length {} != {}", aux.len(), self.spec.aux_dim)));
        }
        Ok(())
    }

    pub fn forward<'e>(
        &self,
        params: &ParamSet,
        emb: &'e EmbeddingTensor,
        aux: &[f64],
    ) -> Result<ForwardCache<'e>, NnError> {
        self.check(params, emb, aux)?;
        let conv = self.pool(params, emb);
        self.dense_forward(params, emb, conv, aux)
    }

    /// Pooled features of one chunk. They depend only on the conv tensors,
    /// so they stay valid while those tensors are unchanged.
    pub fn conv_pass(&self, params: &ParamSet, emb: &EmbeddingTensor) -> Result<ConvOutput, NnError> {
        self.check(params, emb, &vec![0.0; self.spec.aux_dim])?;
        Ok(self.pool(params, emb))
    }

    /// Forward pass reusing `conv`, which must come from [`Self::conv_pass`]
    /// on the same embedding with the current conv tensors.
    pub fn forward_with_conv<'e>(
        &self,
        params: &ParamSet,
        emb: &'e EmbeddingTensor,
        conv: &ConvOutput,
        aux: &[f64],
    ) -> Result<ForwardCache<'e>, NnError> {
        self.check(params, emb, aux)?;
        if conv.features.len() != self.spec.feature_dim() {
            return Err(NnError::Shape(format!(
                "{} cached features, network pools {}",
                conv.features.len(),
                self.spec.feature_dim()
            )));
        }
        self.dense_forward(params, emb, conv.clone(), aux)
    }

    fn pool(&self, params: &ParamSet, emb: &EmbeddingTensor) -> ConvOutput {
        let t = params.tensors();
        let d = self.spec.input_dim;
        let valid = emb.valid_rows();
        let prefix = emb.prefix();

        let mut x = Vec::with_capacity(self.spec.dense[0].in_dim);
        let mut argmax = Vec::new();
        let mut pooled_pre = Vec::new();
        match &self.spec.conv {
            Some(conv) => {
                let f_n = conv.filters_per_width;
                for (wi, &w) in conv.kernel_widths.iter().enumerate() {
                    let kernel = &t[2 * wi].data;
                    let bias = &t[2 * wi + 1].data;
                    let windows = self.spec.chunk_len - w + 1;
                    // windows starting at or past `valid` see only zero rows
                    let computed = valid.min(windows);
                    for f in 0..f_n {
                        let kf = &kernel[f * w * d..(f + 1) * w * d];
                        let (mut best_t, mut best_pre, mut best) = (0, 0.0, f64::NEG_INFINITY);
                        for s in 0..computed {
                            let n = w.min(valid - s);
                            let pre = bias[f] + dot(&kf[..n * d], &prefix[s * d..(s + n) * d]);
                            if pre.max(0.0) > best {
                                (best_t, best_pre, best) = (s, pre, pre.max(0.0));
                            }
                        }
                        if computed < windows && bias[f].max(0.0) > best {
                            (best_t, best_pre, best) = (computed, bias[f], bias[f].max(0.0));
                        }
                        argmax.push(best_t);
                        pooled_pre.push(best_pre);
                        x.push(best);
                    }
                }
            }
            None => {
                x.resize(d, 0.0);
                if valid > 0 {
                    for row in prefix.chunks_exact(d) {
                        axpy(1.0, row, &mut x);
                    }
                    let inv = 1.0 / valid as f64;
                    x.iter_mut().for_each(|v| *v *= inv);
                }
            }
        }
        ConvOutput { argmax, pooled_pre, features: x }
    }

    fn dense_forward<'e>(
        &self,
        params: &ParamSet,
        emb: &'e EmbeddingTensor,
        conv: ConvOutput,
        aux: &[f64],
    ) -> Result<ForwardCache<'e>, NnError> {
        let ConvOutput { argmax, pooled_pre, features: mut x } = conv;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(NnError::Numeric("pooled features"));
        }
        let t = params.tensors();
        let feature_len = x.len();
        x.reserve(aux.len());
        x.extend_from_slice(aux);

        let base = self.conv_tensors();
        let mut acts = Vec::with_capacity(self.spec.dense.len() + 1);
        acts.push(x);
        for (k, layer) in self.spec.dense.iter().enumerate() {
            let w = &t[base + 2 * k].data;
            let b = &t[base + 2 * k + 1].data;
            let input = &acts[k];
            let out: Vec<f64> = (0..layer.out_dim)
                .map(|o| layer.activation.apply(b[o] + dot(&w[o * layer.in_dim..(o + 1) * layer.in_dim], input)))
                .collect();
            if !out.iter().all(|v| v.is_finite()) {
                return Err(NnError::Numeric("dense activations"));
            }
            acts.push(out);
        }
        Ok(ForwardCache { embedding: emb, generation: params.generation(), spec_hash: self.spec_hash, argmax, pooled_pre, feature_len, acts })
    }

    /// Gradient of `bce_loss(forward(..), labels)` for one example.
    pub fn backward(&self, params: &ParamSet, cache: &ForwardCache<'_>, labels: &[bool]) -> Result<GradSet, NnError> {
        let dlogits = bce_logit_grad(cache.probs(), labels)?;
        let mut grads = GradSet::zeros_like(params);
        self.backward_from_logits(params, cache, &dlogits, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradient implied by `dlogits` (loss derivative with respect
    /// to the output layer's pre-sigmoid values) into `grads`.
    pub fn backward_from_logits(
        &self,
        params: &ParamSet,
        cache: &ForwardCache<'_>,
        dlogits: &[f64],
        grads: &mut GradSet,
    ) -> Result<(), NnError> {
        if cache.spec_hash != self.spec_hash {
            return Err(NnError::Usage("forward cache belongs to a different network".into()));
        }
        if cache.generation != params.generation() {
            return Err(NnError::Usage("forward cache is stale: parameters changed since forward".into()));
        }
        if dlogits.len() != self.out_dim() {
            return Err(NnError::Shape(format!("{} logit grads for {} outputs", dlogits.len(), self.out_dim())));
        }
        if !grads.same_layout(params) {
            return Err(NnError::Shape("gradient set layout differs from parameters".into()));
        }
        let t = params.tensors();
        let base = self.conv_tensors();
        let n_layers = self.spec.dense.len();
        let mut delta = dlogits.to_vec();
        let mut dx = Vec::new();
        for k in (0..n_layers).rev() {
            let layer = &self.spec.dense[k];
            let input = &cache.acts[k];
            let w = &t[base + 2 * k].data;
            {
                let (gw, rest) = grads.tensors[base + 2 * k..].split_at_mut(1);
                let gw = &mut gw[0].data;
                let gb = &mut rest[0].data;
                for (o, &dz) in delta.iter().enumerate() {
                    if dz != 0.0 {
                        axpy(dz, input, &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim]);
                        gb[o] += dz;
                    }
                }
            }
            let need_input_grad = k > 0 || self.spec.conv.is_some();
            if !need_input_grad {
                break;
            }
            let mut da = vec![0.0; layer.in_dim];
            for (o, &dz) in delta.iter().enumerate() {
                if dz != 0.0 {
                    axpy(dz, &w[o * layer.in_dim..(o + 1) * layer.in_dim], &mut da);
                }
            }
            if k > 0 {
                let act: Activation = self.spec.dense[k - 1].activation;
                for (g, &a) in da.iter_mut().zip(input) {
                    *g *= act.grad_from_output(a);
                }
                delta = da;
            } else {
                dx = da;
            }
        }

        if let Some(conv) = &self.spec.conv {
            let d = self.spec.input_dim;
            let prefix = cache.embedding.prefix();
            let valid = cache.embedding.valid_rows();
            let f_n = conv.filters_per_width;
            for (wi, &w) in conv.kernel_widths.iter().enumerate() {
                let (gk, rest) = grads.tensors[2 * wi..].split_at_mut(1);
                let gk = &mut gk[0].data;
                let gb = &mut rest[0].data;
                for f in 0..f_n {
                    let q = wi * f_n + f;
                    let g = dx[q];
                    if g == 0.0 || cache.pooled_pre[q] <= 0.0 {
                        continue;
                    }
                    gb[f] += g;
                    let s = cache.argmax[q];
                    if s < valid {
                        let n = w.min(valid - s);
                        axpy(g, &prefix[s * d..(s + n) * d], &mut gk[f * w * d..f * w * d + n * d]);
                    }
                }
            }
        }
        if !grads.is_finite() {
            return Err(NnError::Numeric("gradients"));
        }
        Ok(())
    }

    pub fn predict(&self, params: &ParamSet, emb: &EmbeddingTensor, aux: &[f64]) -> Result<Vec<f64>, NnError> {
        Ok(self.forward(params, emb, aux)?.probs().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check, ConvSpec, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_embedding(rng: &mut ChaCha8Rng, len: usize, dim: usize, valid: usize) -> EmbeddingTensor {
        let mask: Vec<u8> = (0..len).map(|i| u8::from(i < valid)).collect();
        let dense: Vec<f64> = (0..len * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        EmbeddingTensor::from_dense(&dense, dim, &mask).unwrap()
    }

    fn randomize_biases(p: &mut ParamSet, rng: &mut ChaCha8Rng) {
        for t in p.tensors_mut() {
            if t.name.ends_with(".bias") {
                t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
            }
        }
    }

    /// Straightforward loops over every window, padded ones included.
    fn reference_forward(spec: &NetSpec, p: &ParamSet, emb: &EmbeddingTensor, aux: &[f64]) -> Vec<f64> {
        let e = emb.to_dense();
        let (l, d) = (spec.chunk_len, spec.input_dim);
        let mut x = Vec::new();
        let conv = spec.conv.as_ref().unwrap();
        for &w in &conv.kernel_widths {
            let k = &p.get(&format!("conv{w}.kernel")).unwrap().data;
            let b = &p.get(&format!("conv{w}.bias")).unwrap().data;
            for f in 0..conv.filters_per_width {
                let mut best = f64::NEG_INFINITY;
                for t in 0..=(l - w) {
                    let mut s = b[f];
                    for j in 0..w {
                        for c in 0..d {
                            s += k[(f * w + j) * d + c] * e[(t + j) * d + c];
                        }
                    }
                    best = best.max(s.max(0.0));
                }
                x.push(best);
            }
        }
        x.extend_from_slice(aux);
        for (i, layer) in spec.dense.iter().enumerate() {
            let w = &p.get(&format!("dense{i}.weight")).unwrap().data;
            let b = &p.get(&format!("dense{i}.bias")).unwrap().data;
            let mut y = vec![0.0; layer.out_dim];
            for o in 0..layer.out_dim {
                let mut z = b[o];
                for c in 0..layer.in_dim {
                    z += w[o * layer.in_dim + c] * x[c];
                }
                y[o] = match layer.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                    Activation::Identity => z,
                };
            }
            x = y;
        }
        x
    }

    fn small_spec(aux: usize) -> NetSpec {
        NetSpec::text_cnn(ConvSpec::new(vec![2, 3], 4, 8), 12, Some(6), aux, 5)
    }

    #[test]
    fn zero_everything_gives_half() {
        let spec = small_spec(0);
        let net = TextCnn::new(spec.clone()).unwrap();
        let p = ParamSet::zeros(&spec);
        let emb = EmbeddingTensor::zeros(12, 8);
        assert_eq!(net.predict(&p, &emb, &[]).unwrap(), vec![0.5; 5]);
    }

    #[test]
    fn matches_scalar_reference() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = small_spec(3);
            let net = TextCnn::new(spec.clone()).unwrap();
            let mut p = ParamSet::init(&spec, &mut rng);
            randomize_biases(&mut p, &mut rng);
            let valid = rng.gen_range(0..=12);
            let emb = random_embedding(&mut rng, 12, 8, valid);
            let aux: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let got = net.predict(&p, &emb, &aux).unwrap();
            let want = reference_forward(&spec, &p, &emb, &aux);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "seed {seed}: {g} vs {w}");
                assert!(*g > 0.0 && *g < 1.0);
            }
        }
    }

    #[test]
    fn gradient_check_over_many_seeds() {
        for seed in 0..24 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let spec = small_spec(0);
            let net = TextCnn::new(spec.clone()).unwrap();
            let mut p = ParamSet::init(&spec, &mut rng);
            randomize_biases(&mut p, &mut rng);
            let valid = rng.gen_range(1..=12);
            let emb = random_embedding(&mut rng, 12, 8, valid);
            let labels: Vec<bool> = (0..5).map(|_| rng.gen_bool(0.5)).collect();
            let err = grad_check(&net, &p, &emb, &[], &labels, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn gradient_check_linear_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = NetSpec::bag_of_embeddings(8, 12, None, 2, 5);
        let net = TextCnn::new(spec.clone()).unwrap();
        let mut p = ParamSet::init(&spec, &mut rng);
        randomize_biases(&mut p, &mut rng);
        let emb = random_embedding(&mut rng, 12, 8, 7);
        let labels = [true, false, false, true, true];
        let err = grad_check(&net, &p, &emb, &[0.3, 0.9], &labels, 1e-5).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn coarse_step_is_less_accurate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = NetSpec::bag_of_embeddings(8, 12, Some(4), 0, 3);
        let net = TextCnn::new(spec.clone()).unwrap();
        let mut p = ParamSet::init(&spec, &mut rng);
        randomize_biases(&mut p, &mut rng);
        let emb = random_embedding(&mut rng, 12, 8, 9);
        let labels = [true, false, true];
        let fine = grad_check(&net, &p, &emb, &[], &labels, 1e-5).unwrap();
        let coarse = grad_check(&net, &p, &emb, &[], &labels, 1e-2).unwrap();
        assert!(coarse > fine, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn stale_cache_rejected() {
        let spec = small_spec(0);
        let net = TextCnn::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::init(&spec, &mut rng);
        let emb = random_embedding(&mut rng, 12, 8, 5);
        let cache = net.forward(&p, &emb, &[]).unwrap();
        let before = p.clone();
        p.get_mut("dense1.bias").unwrap().data[0] = 1.0;
        assert!(matches!(net.backward(&p, &cache, &[true; 5]), Err(NnError::Usage(_))));
        assert!(net.backward(&before, &net.forward(&before, &emb, &[]).unwrap(), &[true; 5]).is_ok());
        let other = TextCnn::new(small_spec(1)).unwrap();
        let po = ParamSet::zeros(other.spec());
        let c2 = other.forward(&po, &emb, &[0.0]).unwrap();
        assert!(net.backward(&po, &c2, &[true; 5]).is_err());
    }

    #[test]
    fn shape_errors() {
        let spec = small_spec(0);
        let net = TextCnn::new(spec.clone()).unwrap();
        let p = ParamSet::zeros(&spec);
        assert!(matches!(net.forward(&p, &EmbeddingTensor::zeros(11, 8), &[]), Err(NnError::Shape(_))));
        assert!(matches!(net.forward(&p, &EmbeddingTensor::zeros(12, 8), &[1.0]), Err(NnError::Shape(_))));
        let bad = ParamSet::from_tensors(vec![Tensor::zeros("x", vec![1])]);
        assert!(net.forward(&bad, &EmbeddingTensor::zeros(12, 8), &[]).is_err());
    }

    #[test]
    fn ties_route_to_first_window() {
        // one filter, width 1, identical rows: every window ties
        let spec = NetSpec::text_cnn(ConvSpec::new(vec![1], 1, 2), 4, None, 0, 1);
        let net = TextCnn::new(spec.clone()).unwrap();
        let mut p = ParamSet::zeros(&spec);
        p.get_mut("conv1.kernel").unwrap().data.copy_from_slice(&[1.0, 1.0]);
        p.get_mut("dense0.weight").unwrap().data[0] = 1.0;
        let emb = EmbeddingTensor::from_dense(&[0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0], 2, &[1, 1, 1, 0]).unwrap();
        let cache = net.forward(&p, &emb, &[]).unwrap();
        assert_eq!(cache.argmax(), [0]);
        let g = net.backward(&p, &cache, &[true]).unwrap();
        let k = &g.get("conv1.kernel").unwrap().data;
        // gradient equals the first row scaled by the upstream value
        assert!((k[0] - k[1]).abs() < 1e-15 && k[0] != 0.0);
    }

    #[test]
    fn gradients_finite_and_near_zero_at_target() {
        let spec = small_spec(0);
        let net = TextCnn::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamSet::init(&spec, &mut rng);
        let emb = random_embedding(&mut rng, 12, 8, 12);
        let g = net.backward(&p, &net.forward(&p, &emb, &[]).unwrap(), &[true, false, true, false, true]).unwrap();
        assert!(g.is_finite() && g.max_abs() > 0.0);
        // saturate outputs onto their labels: huge output biases of the right sign
        let labels = [true, false, true, false, true];
        for (b, &y) in p.get_mut("dense1.bias").unwrap().data.iter_mut().zip(&labels) {
            *b = if y { 40.0 } else { -40.0 };
        }
        let g = net.backward(&p, &net.forward(&p, &emb, &[]).unwrap(), &labels).unwrap();
        assert!(g.max_abs() < 1e-12);
    }

    #[test]
    fn cached_conv_matches_full_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = TextCnn::new(small_spec(3)).unwrap();
        let p = ParamSet::init(net.spec(), &mut rng);
        let emb = random_embedding(&mut rng, 12, 8, 7);
        let aux = [0.3, -0.1, 0.7];
        let full = net.forward(&p, &emb, &aux).unwrap();
        let conv = net.conv_pass(&p, &emb).unwrap();
        assert_eq!(conv.features(), full.features());
        let cached = net.forward_with_conv(&p, &emb, &conv, &aux).unwrap();
        assert_eq!(cached.probs(), full.probs());
        let labels = [true, false, true, false, false];
        assert_eq!(net.backward(&p, &cached, &labels).unwrap(), net.backward(&p, &full, &labels).unwrap());
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = small_spec(0);
        let net = TextCnn::new(spec.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ParamSet::init(&spec, &mut rng);
        let emb = random_embedding(&mut rng, 12, 8, 6);
        assert_eq!(net.predict(&p, &emb, &[]).unwrap(), net.predict(&p, &emb, &[]).unwrap());
    }
}
