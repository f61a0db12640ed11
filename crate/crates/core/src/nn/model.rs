use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{forward_stack, softmax, Activation, Layer, LayerKind, Mode};
use super::{Real, Tensor};
use crate::aami::AamiClass;
use crate::error::{Error, Result};
use crate::qrs::SEGMENT_LEN;

/// Per-beat network input: `(length, channels)`.
pub const INPUT_SHAPE: (usize, usize) = (SEGMENT_LEN, 1);
/// Activation crossing from the edge to the fog node.
pub const CUT_SHAPE: (usize, usize) = (27, 5);
/// Head 1 separates normal (0) from abnormal (1).
pub const HEAD1_CLASSES: usize = 2;
/// Head 2 scores N, S, V, F.
pub const HEAD2_CLASSES: usize = 4;

/// Head-1 target for a beat label.
pub fn head1_class_index(class: AamiClass) -> usize {
    usize::from(class.is_abnormal())
}

/// Ordered layer list with two output heads.
///
/// Layers `[0, head1_index)` form the shared edge trunk; layer `head1_index`
/// is the first output head and reads the trunk output; layers
/// `[cut_index, len)` run on the fog node and end in the second head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelGraph<T = f32> {
    pub layers: Vec<Layer<T>>,
    pub head1_index: usize,
    pub cut_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T = f32> {
    pub head1: Vec<f64>,
    pub head2: Vec<f64>,
    pub cut: Tensor<T>,
}

/// The 13-layer split CNN with Glorot-uniform weights drawn from `seed`.
pub fn build_table1_model(seed: u64) -> ModelGraph<f32> {
    ModelGraph::table1(seed)
}

impl<T: Real> ModelGraph<T> {
    pub fn table1(seed: u64) -> Self {
        use Activation::{Relu, Softmax};
        let conv = |name, kind, len, cin, cout, k, s, g, act| {
            Layer::conv(name, kind, len, cin, cout, k, s, g, act).expect("static layer table")
        };
        let mut layers = vec![
            conv("conv1", LayerKind::Conv1d, 105, 1, 5, 64, 2, 1, Relu),
            Layer::max_pool("pool1", 53, 5, 2, 2),
            Layer::batch_norm("bn1", 27, 5),
            Layer::dense("fc1", 27, 5, HEAD1_CLASSES, Softmax),
            conv("conv2", LayerKind::Conv1d, 27, 5, 15, 32, 1, 1, Relu),
            Layer::max_pool("pool2", 27, 15, 2, 2),
            Layer::batch_norm("bn2", 14, 15),
            conv(
                "gconv",
                LayerKind::GroupedConv,
                14,
                15,
                75,
                10,
                1,
                15,
                Activation::None,
            ),
            conv("pwconv", LayerKind::PointwiseConv, 14, 75, 5, 1, 1, 1, Relu),
            Layer::max_pool("pool3", 14, 5, 2, 2),
            Layer::batch_norm("bn3", 7, 5),
            Layer::dropout("dropout", 7, 5, 0.2),
            Layer::dense("fc2", 7, 5, HEAD2_CLASSES, Softmax),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut layers {
            layer.glorot_init(&mut rng);
        }
        Self {
            layers,
            head1_index: 3,
            cut_index: 4,
        }
    }

    pub fn cast<U: Real>(&self) -> ModelGraph<U> {
        ModelGraph {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    params: l.params.iter().map(Tensor::cast).collect(),
                    state: l.state.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            head1_index: self.head1_index,
            cut_index: self.cut_index,
        }
    }

    pub fn trunk(&self) -> &[Layer<T>] {
        &self.layers[..self.head1_index]
    }

    pub fn head1(&self) -> &Layer<T> {
        &self.layers[self.head1_index]
    }

    pub fn fog_layers(&self) -> &[Layer<T>] {
        &self.layers[self.cut_index..]
    }

    pub fn set_dropout(&mut self, p: f64) {
        for l in &mut self.layers {
            if l.spec.kind == LayerKind::Dropout {
                l.spec.dropout_p = p;
            }
        }
    }

    fn batch_input(shape: &[usize], x: &Tensor<T>, expect: (usize, usize)) -> Result<Tensor<T>> {
        if shape != [expect.0, expect.1] {
            return Err(Error::param(format!(
                "expected input shape ({}, {}), got {shape:?}",
                expect.0, expect.1
            )));
        }
        x.clone().reshape(vec![1, expect.0, expect.1])
    }

    /// Runs the edge half: returns head-1 probabilities and the cut
    /// activation (the first batch-norm output).
    pub fn forward_edge(&self, x: &Tensor<T>) -> Result<(Vec<f64>, Tensor<T>)> {
        let xb = Self::batch_input(x.shape(), x, INPUT_SHAPE)?;
        let (cut, _) = forward_stack(self.trunk(), &xb, Mode::Infer, None)?;
        let (logits, _) = self.head1().forward(&cut, Mode::Infer, None)?;
        let cut = cut.reshape(vec![CUT_SHAPE.0, CUT_SHAPE.1])?;
        Ok((softmax(&logits.to_f64_vec()), cut))
    }

    /// Runs the fog half on a cut activation and returns head-2 probabilities.
    pub fn forward_fog(&self, cut: &Tensor<T>) -> Result<Vec<f64>> {
        let xb = Self::batch_input(cut.shape(), cut, CUT_SHAPE)?;
        let (logits, _) = forward_stack(self.fog_layers(), &xb, Mode::Infer, None)?;
        Ok(softmax(&logits.to_f64_vec()))
    }

    /// Inference on one beat; identical arithmetic to the split path.
    pub fn forward(&self, x: &Tensor<T>) -> Result<ForwardOutput<T>> {
        let (head1, cut) = self.forward_edge(x)?;
        let head2 = self.forward_fog(&cut)?;
        Ok(ForwardOutput { head1, head2, cut })
    }

    /// Convenience wrapper taking a raw beat window.
    pub fn forward_window(&self, window: &[f64]) -> Result<ForwardOutput<T>> {
        self.forward(&Tensor::from_f64(
            vec![INPUT_SHAPE.0, INPUT_SHAPE.1],
            window,
        )?)
    }

    pub fn count_params(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters stored on the edge: the trunk and head 1.
    pub fn edge_param_count(&self) -> usize {
        self.layers[..self.cut_index]
            .iter()
            .map(Layer::param_count)
            .sum()
    }

    pub fn fog_param_count(&self) -> usize {
        self.fog_layers().iter().map(Layer::param_count).sum()
    }

    pub fn count_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.spec.macs()).sum()
    }

    /// MACs spent on the edge per beat: the trunk plus head 1.
    pub fn edge_macs(&self) -> u64 {
        self.layers[..self.cut_index]
            .iter()
            .map(|l| l.spec.macs())
            .sum()
    }

    pub fn fog_macs(&self) -> u64 {
        self.fog_layers().iter().map(|l| l.spec.macs()).sum()
    }

    /// Every parameter and state tensor as `(name, layer kind, tensor)`, in
    /// graph order.
    pub fn named_tensors(&self) -> Vec<(String, LayerKind, &Tensor<T>)> {
        let mut out = Vec::new();
        for l in &self.layers {
            for (n, t) in l.param_names().iter().zip(&l.params) {
                out.push((format!("{}.{n}", l.spec.name), l.spec.kind, t));
            }
            for (n, t) in l.state_names().iter().zip(&l.state) {
                out.push((format!("{}.{n}", l.spec.name), l.spec.kind, t));
            }
        }
        out
    }

    pub(crate) fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            let params = l.param_names();
            let states = l.state_names();
            let name = l.spec.name.clone();
            for (n, t) in params.iter().zip(l.params.iter_mut()) {
                out.push((format!("{name}.{n}"), t));
            }
            for (n, t) in states.iter().zip(l.state.iter_mut()) {
                out.push((format!("{name}.{n}"), t));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_model_zero_input_head1_is_uniform() {
        let m = build_table1_model(1);
        let out = m.forward(&Tensor::zeros(vec![105, 1])).unwrap();
        assert!((out.head1[0] - 0.5).abs() < 1e-7);
        assert_eq!(out.cut.shape(), &[27, 5]);
    }

    #[test]
    fn rejects_wrong_input_shape() {
        let m = build_table1_model(1);
        assert!(m.forward(&Tensor::zeros(vec![104, 1])).is_err());
        assert!(m.forward_fog(&Tensor::zeros(vec![135])).is_err());
    }

    #[test]
    fn head1_targets() {
        assert_eq!(head1_class_index(AamiClass::N), 0);
        assert_eq!(head1_class_index(AamiClass::V), 1);
        assert_eq!(head1_class_index(AamiClass::Q), 1);
    }
}
