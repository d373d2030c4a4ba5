//! Small fully connected networks: feature extractors, classifier heads and
//! the domain discriminator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DcpError, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Width of the extractor's hidden and feature layers.
pub const FEATURE_DIM: usize = 64;
/// Width of the discriminator's hidden layer.
pub const DISCRIMINATOR_HIDDEN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    None,
    Sigmoid,
}

/// Layer widths of a ReLU multilayer perceptron.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    output: OutputActivation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, output: OutputActivation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(DcpError::InvalidInput(format!(
                "an MLP needs at least 2 widths, got {}",
                widths.len()
            )));
        }
        if widths.contains(&0) {
            return Err(DcpError::InvalidInput(format!("MLP widths must be positive: {widths:?}")));
        }
        Ok(Self { widths, output })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }
}

/// The four shapes used by both branches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub extractor: MlpSpec,
    pub head: MlpSpec,
    pub discriminator: MlpSpec,
}

impl Architecture {
    pub fn desk_scale(input_dim: usize, classes: usize) -> Result<Self> {
        Ok(Self {
            extractor: MlpSpec::new(vec![input_dim, FEATURE_DIM, FEATURE_DIM], OutputActivation::None)?,
            head: MlpSpec::new(vec![FEATURE_DIM, classes], OutputActivation::None)?,
            discriminator: MlpSpec::new(
                vec![FEATURE_DIM, DISCRIMINATOR_HIDDEN, 1],
                OutputActivation::Sigmoid,
            )?,
        })
    }
}

/// One affine layer; `weight` is `out × in`, `bias` is `out × 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Learnable parameters of one MLP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Layer>,
}

impl Params {
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Tensor::zeros(l.weight.rows(), l.weight.cols()),
                    bias: Tensor::zeros(l.bias.rows(), l.bias.cols()),
                })
                .collect(),
        }
    }

    /// Records the parameters on `g`, differentiable or frozen.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundParams {
        let mut record = |t: &Tensor| {
            if trainable {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        };
        BoundParams {
            layers: self
                .layers
                .iter()
                .map(|l| (record(&l.weight), record(&l.bias)))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    fn check_against(&self, spec: &MlpSpec) -> Result<()> {
        let ok = self.layers.len() == spec.num_layers()
            && self.layers.iter().enumerate().all(|(i, l)| {
                l.weight.shape() == (spec.widths[i + 1], spec.widths[i])
                    && l.bias.shape() == (spec.widths[i + 1], 1)
            });
        if ok {
            Ok(())
        } else {
            Err(DcpError::Schema(format!(
                "parameters do not match layer widths {:?}",
                spec.widths
            )))
        }
    }
}

/// Graph handles for a [`Params`] recorded on a specific graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    /// `(weight, bias)` handles per layer.
    pub layers: Vec<(Var, Var)>,
}

impl BoundParams {
    /// Reads accumulated gradients back into `Params` layout. Frozen
    /// parameters yield zeros.
    pub fn grads(&self, g: &Graph) -> Params {
        let pick = |v: Var| {
            g.grad(v).cloned().unwrap_or_else(|| {
                let t = g.value(v);
                Tensor::zeros(t.rows(), t.cols())
            })
        };
        Params {
            layers: self
                .layers
                .iter()
                .map(|&(w, b)| Layer {
                    weight: pick(w),
                    bias: pick(b),
                })
                .collect(),
        }
    }
}

/// Glorot-uniform weights and zero biases from a seeded generator.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = spec
        .widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Layer {
                weight: Tensor::new(fan_out, fan_in, data).expect("sized"),
                bias: Tensor::zeros(fan_out, 1),
            }
        })
        .collect();
    Params { layers }
}

/// Runs `x` through the network, recording every layer on `g`.
pub fn forward(g: &mut Graph, params: &BoundParams, spec: &MlpSpec, x: Var) -> Result<Var> {
    let cols = g.value(x).cols();
    if cols != spec.input_dim() {
        return Err(DcpError::Shape {
            op: "forward",
            lhs: g.value(x).shape(),
            rhs: (spec.input_dim(), spec.output_dim()),
        });
    }
    if params.layers.len() != spec.num_layers() {
        return Err(DcpError::Schema("bound parameters do not match the layer count".into()));
    }
    let last = params.layers.len() - 1;
    let mut h = x;
    for (i, &(w, b)) in params.layers.iter().enumerate() {
        let wt = g.transpose(w);
        let z = g.matmul(h, wt)?;
        h = g.add_bias(z, b)?;
        if i < last {
            h = g.relu(h);
        } else if spec.output == OutputActivation::Sigmoid {
            h = g.sigmoid(h);
        }
    }
    Ok(h)
}

/// Forward pass on plain values, without a graph.
pub fn predict(params: &Params, spec: &MlpSpec, x: &Tensor) -> Result<Tensor> {
    params.check_against(spec)?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g, false);
    let xv = g.constant(x.clone());
    let out = forward(&mut g, &bound, spec, xv)?;
    Ok(g.value(out).clone())
}

/// Features, logits and derived hard labels of one branch.
#[derive(Clone, Debug)]
pub struct BranchOutputs {
    pub features: Var,
    pub logits: Var,
    pub predicted_labels: Vec<usize>,
    /// Max softmax probability per row.
    pub confidence: Vec<f64>,
}

pub fn branch_outputs(
    g: &mut Graph,
    extractor: (&BoundParams, &MlpSpec),
    head: (&BoundParams, &MlpSpec),
    x: Var,
) -> Result<BranchOutputs> {
    let features = forward(g, extractor.0, extractor.1, x)?;
    let logits = forward(g, head.0, head.1, features)?;
    let (predicted_labels, confidence) = hard_labels(g.value(logits));
    Ok(BranchOutputs {
        features,
        logits,
        predicted_labels,
        confidence,
    })
}

/// Argmax labels (ties to the lowest index) and their softmax probability.
pub fn hard_labels(logits: &Tensor) -> (Vec<usize>, Vec<f64>) {
    let labels = logits.argmax_rows();
    let probs = logits.softmax_rows();
    let confidence = labels.iter().enumerate().map(|(r, &l)| probs.get(r, l)).collect();
    (labels, confidence)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(widths: &[usize]) -> MlpSpec {
        MlpSpec::new(widths.to_vec(), OutputActivation::None).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], OutputActivation::None).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2], OutputActivation::None).is_err());
        assert!(MlpSpec::new(vec![3, 2], OutputActivation::Sigmoid).is_ok());
    }

    #[test]
    fn init_is_deterministic_with_zero_bias() {
        let s = spec(&[2, 8, 3]);
        let a = init_params(&s, 11);
        let b = init_params(&s, 11);
        assert_eq!(a, b);
        assert!(a.layers.iter().all(|l| l.bias.data().iter().all(|&v| v == 0.0)));
        let c = init_params(&s, 12);
        assert_ne!(a, c);
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(a.layers[0].weight.data().iter().all(|v| v.abs() < limit));
    }

    #[test]
    fn identity_network() {
        let s = spec(&[2, 2]);
        let p = Params {
            layers: vec![Layer {
                weight: Tensor::identity(2),
                bias: Tensor::zeros(2, 1),
            }],
        };
        let x = Tensor::from_rows(&[[1.5, -2.0], [0.0, 7.0]]).unwrap();
        assert_eq!(predict(&p, &s, &x).unwrap(), x);
    }

    #[test]
    fn relu_kills_negative_hidden() {
        let s = spec(&[1, 2, 1]);
        let p = Params {
            layers: vec![
                Layer {
                    weight: Tensor::from_rows(&[[-1.0], [-2.0]]).unwrap(),
                    bias: Tensor::zeros(2, 1),
                },
                Layer {
                    weight: Tensor::from_rows(&[[1.0, 1.0]]).unwrap(),
                    bias: Tensor::column(&[0.25]),
                },
            ],
        };
        let x = Tensor::from_rows(&[[3.0]]).unwrap();
        assert_eq!(predict(&p, &s, &x).unwrap().data(), &[0.25]);
    }

    #[test]
    fn forward_shape_error() {
        let s = spec(&[3, 2]);
        let p = init_params(&s, 0);
        assert!(predict(&p, &s, &Tensor::zeros(4, 2)).is_err());
    }

    #[test]
    fn batch_equals_stacked_rows() {
        let s = spec(&[3, 16, 16, 4]);
        let p = init_params(&s, 5);
        let x = Tensor::from_rows(&[[0.3, -1.2, 2.0], [1.0, 0.5, -0.7]]).unwrap();
        let batch = predict(&p, &s, &x).unwrap();
        for r in 0..2 {
            let single = predict(&p, &s, &x.select_rows(&[r])).unwrap();
            for c in 0..4 {
                assert!((batch.get(r, c) - single.get(0, c)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hard_label_examples() {
        let (l, c) = hard_labels(&Tensor::from_rows(&[[2.0, 1.0]]).unwrap());
        assert_eq!(l, vec![0]);
        assert!((c[0] - 0.731059).abs() < 1e-6);
        let (l, c) = hard_labels(&Tensor::from_rows(&[[1.0, 1.0]]).unwrap());
        assert_eq!(l, vec![0]);
        assert_eq!(c[0], 0.5);
    }

    #[test]
    fn desk_scale_shapes() {
        let a = Architecture::desk_scale(2, 3).unwrap();
        assert_eq!(a.extractor.widths(), &[2, 64, 64]);
        assert_eq!(a.head.widths(), &[64, 3]);
        assert_eq!(a.discriminator.widths(), &[64, 32, 1]);
        assert_eq!(a.discriminator.output(), OutputActivation::Sigmoid);
    }
}
