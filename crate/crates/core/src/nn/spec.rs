use serde::{Deserialize, Serialize};

use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    pub fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub input_dim: usize,
}

impl ConvSpec {
    pub fn new(kernel_widths: Vec<usize>, filters_per_width: usize, input_dim: usize) -> Self {
        Self { kernel_widths, filters_per_width, input_dim }
    }

    pub fn output_dim(&self) -> usize {
        self.kernel_widths.len() * self.filters_per_width
    }

    pub fn validate(&self, chunk_len: usize) -> Result<(), NnError> {
        if self.kernel_widths.is_empty() || self.kernel_widths.contains(&0) {
            return Err(NnError::Spec("kernel widths must be a non-empty list of positive integers".into()));
        }
        if let Some(&w) = self.kernel_widths.iter().find(|&&w| w > chunk_len) {
            return Err(NnError::Spec(format!("kernel width {w} exceeds chunk length {chunk_len}")));
        }
        if self.filters_per_width == 0 || self.input_dim == 0 {
            return Err(NnError::Spec("filters and input dim must be ≥ 1".into()));
        }
        Ok(())
    }
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self::new(vec![3, 4, 5], 64, 128)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

/// Feature extractor, dense stack and auxiliary input width.
///
/// Without a conv stack the features are the mean of the unmasked
/// embedding rows, which makes the network smooth in every parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub chunk_len: usize,
    pub conv: Option<ConvSpec>,
    /// Extra inputs concatenated after the pooled features.
    pub aux_dim: usize,
    pub dense: Vec<DenseSpec>,
}

impl NetSpec {
    /// Conv features, optional ReLU hidden layer, sigmoid output layer.
    pub fn text_cnn(
        conv: ConvSpec,
        chunk_len: usize,
        hidden: Option<usize>,
        aux_dim: usize,
        out_dim: usize,
    ) -> Self {
        let input_dim = conv.input_dim;
        let feat = conv.output_dim() + aux_dim;
        Self { input_dim, chunk_len, conv: Some(conv), aux_dim, dense: dense_stack(feat, hidden, out_dim) }
    }

    /// Mean-pooled embeddings straight into dense layers.
    pub fn bag_of_embeddings(
        input_dim: usize,
        chunk_len: usize,
        hidden: Option<usize>,
        aux_dim: usize,
        out_dim: usize,
    ) -> Self {
        Self { input_dim, chunk_len, conv: None, aux_dim, dense: dense_stack(input_dim + aux_dim, hidden, out_dim) }
    }

    pub fn feature_dim(&self) -> usize {
        self.conv.as_ref().map_or(self.input_dim, ConvSpec::output_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.dense.last().map_or(0, |d| d.out_dim)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.chunk_len == 0 {
            return Err(NnError::Spec("input dim and chunk length must be ≥ 1".into()));
        }
        if let Some(conv) = &self.conv {
            conv.validate(self.chunk_len)?;
            if conv.input_dim != self.input_dim {
                return Err(NnError::Spec("conv input dim differs from embedding dim".into()));
            }
        }
        let Some(last) = self.dense.last() else {
            return Err(NnError::Spec("at least one dense layer is required".into()));
        };
        if last.activation != Activation::Sigmoid {
            return Err(NnError::Spec("output layer must use sigmoid".into()));
        }
        let mut width = self.feature_dim() + self.aux_dim;
        for (i, d) in self.dense.iter().enumerate() {
            if d.in_dim != width || d.out_dim == 0 {
                return Err(NnError::Spec(format!("dense layer {i}: expected in_dim {width}, out_dim ≥ 1")));
            }
            width = d.out_dim;
        }
        Ok(())
    }
}

fn dense_stack(feat: usize, hidden: Option<usize>, out_dim: usize) -> Vec<DenseSpec> {
    match hidden {
        Some(h) => vec![
            DenseSpec { in_dim: feat, out_dim: h, activation: Activation::Relu },
            DenseSpec { in_dim: h, out_dim, activation: Activation::Sigmoid },
        ],
        None => vec![DenseSpec { in_dim: feat, out_dim, activation: Activation::Sigmoid }],
    }
}
