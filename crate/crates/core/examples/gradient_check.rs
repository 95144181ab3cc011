//! Compares backpropagated gradients of a small text CNN with central finite
//! differences, for a few kernel-width and hidden-layer combinations.
//!
//! cargo run --release --example gradient_check

use chartcode::embed::EmbeddingTensor;
use chartcode::nn::{grad_check, ConvSpec, NetSpec, ParamSet, TextCnn, DEFAULT_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (dim, len) = (8, 12);
    let cases: [(&[usize], Option<usize>, usize); 4] =
        [(&[1], None, 0), (&[2, 3], None, 0), (&[1, 2], Some(6), 0), (&[3], Some(4), 5)];
    for (widths, hidden, aux_dim) in cases {
        let spec = NetSpec::text_cnn(ConvSpec::new(widths.to_vec(), 4, dim), len, hidden, aux_dim, 3);
        let net = TextCnn::new(spec.clone())?;
        let mut params = ParamSet::init(&spec, &mut rng);
        // Zero biases put padded windows exactly on the ReLU kink.
        for t in params.tensors_mut().iter_mut().filter(|t| t.name.ends_with(".bias")) {
            t.data.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        }
        let valid = rng.gen_range(1..=len);
        let values: Vec<f64> = (0..valid * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb = EmbeddingTensor::from_prefix(len, dim, valid, values)?;
        let aux: Vec<f64> = (0..aux_dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels = [true, false, true];
        let err = grad_check(&net, &params, &emb, &aux, &labels, DEFAULT_STEP)?;
        println!(
            "widths {widths:?} hidden {hidden:?} aux {aux_dim} valid {valid}/{len}: max relative error {err:.2e} {}",
            if err < 1e-4 { "ok" } else { "MISMATCH" }
        );
    }
    Ok(())
}
