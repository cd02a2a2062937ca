//! Small feed-forward network with exact analytic gradients, the two losses,
//! and a finite-difference gradient checker.
//!
//! The model stands in for a pretrained network: every parameter block keeps
//! a frozen pretrained snapshot next to its current values. Hidden-layer
//! weight matrices are maskable; biases and the task head are always fully
//! updated (the head is task-new, so no meaningful pretrained anchor exists
//! for it).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, ParamTensor, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed in terms of pre-activation z and activation a.
    fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Classification { classes: usize },
    Regression,
}

impl Head {
    pub fn out_dim(&self) -> usize {
        match self {
            Head::Classification { classes } => *classes,
            Head::Regression => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
    pub activation: Activation,
}

/// Batch targets: class labels or regression values (one row per example).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Matrix,
    pub targets: Targets,
}

/// In-memory dataset: one input row per example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Targets,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if targets.len() != inputs.rows() {
            return Err(Error::DimensionMismatch(format!(
                "dataset of {} inputs with {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialize the examples at `indices` as one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let cols = self.inputs.cols();
        let mut inputs = Matrix::zeros(indices.len(), cols);
        for (r, &idx) in indices.iter().enumerate() {
            for c in 0..cols {
                inputs.set(r, c, self.inputs.get(idx, c));
            }
        }
        let targets = match &self.targets {
            Targets::Classes(labels) => {
                Targets::Classes(indices.iter().map(|&i| labels[i]).collect())
            }
            Targets::Values(values) => {
                let mut out = Matrix::zeros(indices.len(), values.cols());
                for (r, &idx) in indices.iter().enumerate() {
                    for c in 0..values.cols() {
                        out.set(r, c, values.get(idx, c));
                    }
                }
                Targets::Values(out)
            }
        };
        Batch::new(inputs, targets)
    }

    /// Subset of the dataset at `indices`, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let b = self.batch(indices)?;
        Dataset::new(b.inputs, b.targets)
    }

    /// Whole dataset in order, chunked into batches of `batch_size`
    /// (last partial batch kept).
    pub fn sequential_batches(&self, batch_size: usize) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        let all: Vec<usize> = (0..self.len()).collect();
        all.chunks(batch_size).map(|c| self.batch(c)).collect()
    }
}

impl Batch {
    pub fn new(inputs: Matrix, targets: Targets) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if targets.len() != inputs.rows() {
            return Err(Error::DimensionMismatch(format!(
                "batch of {} inputs with {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        Ok(Batch { inputs, targets })
    }

    pub fn size(&self) -> usize {
        self.inputs.rows()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub head: Head,
}

impl MlpModel {
    /// Random model: `in_dim -> hidden... -> head`. Hidden layers use
    /// `hidden_activation`, the output layer is linear. Hidden weights are
    /// maskable; biases and the output layer are not.
    pub fn random(
        in_dim: usize,
        hidden: &[usize],
        hidden_activation: Activation,
        head: Head,
        init_std: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(head.out_dim());

        let mut layers = Vec::with_capacity(dims.len() - 1);
        let last = dims.len() - 2;
        for (k, pair) in dims.windows(2).enumerate() {
            let (d_in, d_out) = (pair[0], pair[1]);
            let weight = Matrix::gaussian_init(d_in, d_out, 0.0, init_std, rng)?;
            let bias = Matrix::zeros(1, d_out);
            let is_output = k == last;
            layers.push(Layer {
                weight: ParamTensor::new(format!("layer{k}.weight"), weight, !is_output),
                bias: ParamTensor::new(format!("layer{k}.bias"), bias, false),
                activation: if is_output {
                    Activation::Identity
                } else {
                    hidden_activation
                },
            });
        }
        let model = MlpModel { layers, head };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("model has no layers".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for layer in &self.layers {
            for p in [&layer.weight, &layer.bias] {
                if !names.insert(p.name().to_string()) {
                    return Err(Error::Config(format!("duplicate tensor name {}", p.name())));
                }
            }
            if layer.bias.value().rows() != 1
                || layer.bias.value().cols() != layer.weight.value().cols()
            {
                return Err(Error::DimensionMismatch(format!(
                    "bias shape {:?} does not match weight {:?}",
                    layer.bias.value().shape(),
                    layer.weight.value().shape()
                )));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].weight.value().cols() != pair[1].weight.value().rows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer shapes do not chain: {:?} -> {:?}",
                    pair[0].weight.value().shape(),
                    pair[1].weight.value().shape()
                )));
            }
        }
        let out = self.layers.last().unwrap().weight.value().cols();
        if out != self.head.out_dim() {
            return Err(Error::DimensionMismatch(format!(
                "output dim {} does not match head {:?}",
                out, self.head
            )));
        }
        Ok(())
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.value().rows()
    }

    pub fn params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias].into_iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias].into_iter())
    }

    pub fn maskable_params(&self) -> impl Iterator<Item = &ParamTensor> {
        self.params().filter(|p| p.maskable())
    }

    pub fn param(&self, name: &str) -> Option<&ParamTensor> {
        self.params().find(|p| p.name() == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.params_mut().find(|p| p.name() == name)
    }

    pub fn num_params(&self) -> usize {
        self.params().map(|p| p.value().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Copy of this model whose pretrained snapshot is the current values.
    pub fn clone_as_pretrained(&self) -> MlpModel {
        let mut out = self.clone();
        for p in out.params_mut() {
            p.snapshot_pretrained();
        }
        out
    }

    /// Checkpoint: shapes, values and pretrained snapshots as JSON.
    /// Floats survive a round trip bit-exactly.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<MlpModel> {
        let mut model: MlpModel = serde_json::from_str(text)?;
        for p in model.params_mut() {
            p.ensure_grad_buffer();
        }
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<MlpModel> {
        MlpModel::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Cached forward pass: pre-activations and activations per layer.
pub struct ForwardTrace {
    inputs: Matrix,
    preacts: Vec<Matrix>,
    acts: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("trace has at least one layer")
    }
}

fn affine(inputs: &Matrix, weight: &Matrix, bias: &Matrix) -> Result<Matrix> {
    let mut z = inputs.matmul(weight)?;
    for r in 0..z.rows() {
        for c in 0..z.cols() {
            let v = z.get(r, c) + bias.get(0, c);
            z.set(r, c, v);
        }
    }
    Ok(z)
}

/// Forward pass with cached intermediates (for backprop).
pub fn forward_trace(model: &MlpModel, inputs: &Matrix) -> Result<ForwardTrace> {
    if inputs.cols() != model.in_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input dim {} vs model in_dim {}",
            inputs.cols(),
            model.in_dim()
        )));
    }
    let mut preacts = Vec::with_capacity(model.layers.len());
    let mut acts = Vec::with_capacity(model.layers.len());
    let mut current = inputs.clone();
    for layer in &model.layers {
        let z = affine(&current, layer.weight.value(), layer.bias.value())?;
        let mut a = z.clone();
        for v in a.data_mut() {
            *v = layer.activation.apply(*v);
        }
        current = a.clone();
        preacts.push(z);
        acts.push(a);
    }
    Ok(ForwardTrace {
        inputs: inputs.clone(),
        preacts,
        acts,
    })
}

/// Plain forward pass: logits (classification) or outputs (regression).
pub fn forward(model: &MlpModel, inputs: &Matrix) -> Result<Matrix> {
    Ok(forward_trace(model, inputs)?.output().clone())
}

fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row_max = out
            .row(r)
            .iter()
            .fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let mut sum = 0.0;
        for c in 0..out.cols() {
            let e = (out.get(r, c) - row_max).exp();
            out.set(r, c, e);
            sum += e;
        }
        for c in 0..out.cols() {
            out.set(r, c, out.get(r, c) / sum);
        }
    }
    out
}

/// Loss of the model output against the targets, without touching gradients.
pub fn loss_only(model: &MlpModel, batch: &Batch) -> Result<f64> {
    let out = forward(model, &batch.inputs)?;
    loss_of_output(&out, &batch.targets, &model.head)
}

fn loss_of_output(output: &Matrix, targets: &Targets, head: &Head) -> Result<f64> {
    let loss = match (head, targets) {
        (Head::Classification { classes }, Targets::Classes(labels)) => {
            if let Some(bad) = labels.iter().find(|l| **l >= *classes) {
                return Err(Error::InvalidArgument(format!(
                    "label {bad} outside 0..{classes}"
                )));
            }
            let probs = softmax_rows(output);
            let n = labels.len() as f64;
            -labels
                .iter()
                .enumerate()
                .map(|(i, y)| probs.get(i, *y).ln())
                .sum::<f64>()
                / n
        }
        (Head::Regression, Targets::Values(values)) => {
            if !values.same_shape(output) {
                return Err(Error::DimensionMismatch(format!(
                    "regression targets {:?} vs output {:?}",
                    values.shape(),
                    output.shape()
                )));
            }
            let n = (values.rows() * values.cols()) as f64;
            output
                .data()
                .iter()
                .zip(values.data())
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
                / n
        }
        _ => {
            return Err(Error::InvalidArgument(
                "target kind does not match model head".into(),
            ))
        }
    };
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok(loss)
}

/// Backward pass from a cached forward trace. Writes exact analytic
/// gradients of the mean loss into every `ParamTensor.grad` and returns
/// the loss.
pub fn backward_from_trace(model: &mut MlpModel, trace: &ForwardTrace, targets: &Targets) -> Result<f64> {
    let output = trace.output();
    let loss = loss_of_output(output, targets, &model.head)?;

    // dL/d(output)
    let mut delta = match (&model.head, targets) {
        (Head::Classification { .. }, Targets::Classes(labels)) => {
            let mut d = softmax_rows(output);
            let n = labels.len() as f64;
            for (i, y) in labels.iter().enumerate() {
                d.set(i, *y, d.get(i, *y) - 1.0);
            }
            d.scale(1.0 / n)?
        }
        (Head::Regression, Targets::Values(values)) => {
            let n = (values.rows() * values.cols()) as f64;
            let mut d = output.sub(values)?;
            d = d.scale(2.0 / n)?;
            d
        }
        _ => unreachable!("head/target mismatch caught by loss_of_output"),
    };

    for k in (0..model.layers.len()).rev() {
        // delta is dL/d(act_k); convert to dL/d(z_k)
        let z = &trace.preacts[k];
        let a = &trace.acts[k];
        let activation = model.layers[k].activation;
        let mut dz = delta;
        for (i, v) in dz.data_mut().iter_mut().enumerate() {
            *v *= activation.derivative(z.data()[i], a.data()[i]);
        }

        let below = if k == 0 { &trace.inputs } else { &trace.acts[k - 1] };
        let grad_w = below.transpose().matmul(&dz)?;
        let mut grad_b = Matrix::zeros(1, dz.cols());
        for r in 0..dz.rows() {
            for c in 0..dz.cols() {
                grad_b.set(0, c, grad_b.get(0, c) + dz.get(r, c));
            }
        }
        delta = dz.matmul(&model.layers[k].weight.value().transpose())?;

        model.layers[k].weight.set_grad(grad_w)?;
        model.layers[k].bias.set_grad(grad_b)?;
    }
    Ok(loss)
}

/// Forward + backward in one call.
pub fn loss_and_grads(model: &mut MlpModel, batch: &Batch) -> Result<f64> {
    let trace = forward_trace(model, &batch.inputs)?;
    backward_from_trace(model, &trace, &batch.targets)
}

/// Per-parameter outcome of a finite-difference check.
#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamCheck>,
    pub pass: bool,
}

/// Absolute error floor below which a gradient discrepancy is treated as
/// finite-difference noise rather than a defect.
pub const GRAD_CHECK_ABS_FLOOR: f64 = 1e-6;

/// Compare analytic gradients against central finite differences with step
/// `h`. Report-only: a failing parameter is flagged, not an error.
pub fn gradient_check(model: &MlpModel, batch: &Batch, h: f64, tol: f64) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(Error::InvalidArgument(format!("step h={h} must be > 0")));
    }
    let mut work = model.clone();
    loss_and_grads(&mut work, batch)?;
    let analytic: Vec<(String, Matrix)> = work
        .params()
        .map(|p| (p.name().to_string(), p.grad().clone()))
        .collect();

    let mut per_param = Vec::new();
    for (name, grads) in &analytic {
        let (rows, cols) = grads.shape();
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let original = work.param(name).unwrap().value().get(r, c);

                work.param_mut(name).unwrap().value_mut().set(r, c, original + h);
                let plus = loss_only(&work, batch)?;
                work.param_mut(name).unwrap().value_mut().set(r, c, original - h);
                let minus = loss_only(&work, batch)?;
                work.param_mut(name).unwrap().value_mut().set(r, c, original);

                let numeric = (plus - minus) / (2.0 * h);
                let exact = grads.get(r, c);
                let abs = (numeric - exact).abs();
                let scale = numeric.abs().max(exact.abs());
                let rel = if abs <= GRAD_CHECK_ABS_FLOOR {
                    0.0
                } else {
                    abs / scale
                };
                max_abs = max_abs.max(abs);
                max_rel = max_rel.max(rel);
            }
        }
        per_param.push(ParamCheck {
            name: name.clone(),
            max_rel_err: max_rel,
            max_abs_err: max_abs,
            pass: max_rel <= tol,
        });
    }
    let pass = per_param.iter().all(|p| p.pass);
    Ok(GradCheckReport { per_param, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_identity_layer(dim: usize) -> MlpModel {
        let weight = ParamTensor::new("layer0.weight", Matrix::identity(dim), true);
        let bias = ParamTensor::new("layer0.bias", Matrix::zeros(1, dim), false);
        MlpModel {
            layers: vec![Layer {
                weight,
                bias,
                activation: Activation::Identity,
            }],
            head: Head::Classification { classes: dim },
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let model = single_identity_layer(3);
        let x = Matrix::from_rows(&[&[1.0, -2.0, 0.5]]).unwrap();
        let out = forward(&model, &x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn zero_weights_give_uniform_logits() {
        let mut model = single_identity_layer(4);
        model.layers[0].weight.set_value(Matrix::zeros(4, 4)).unwrap();
        let x = Matrix::from_rows(&[&[1.0, 2.0, 3.0, 4.0]]).unwrap();
        let out = forward(&model, &x).unwrap();
        assert!(out.data().iter().all(|v| *v == 0.0));
        let probs = softmax_rows(&out);
        assert!(probs.data().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn two_layer_tanh_matches_per_neuron_oracle() {
        let mut rng = Rng::new(21);
        let model = MlpModel::random(3, &[4], Activation::Tanh, Head::Regression, 0.8, &mut rng).unwrap();
        let x = Matrix::from_rows(&[&[0.3, -0.7, 1.1]]).unwrap();
        let got = forward(&model, &x).unwrap();

        // scalar re-computation, one neuron at a time
        let w0 = model.layers[0].weight.value();
        let b0 = model.layers[0].bias.value();
        let w1 = model.layers[1].weight.value();
        let b1 = model.layers[1].bias.value();
        let mut hidden = [0.0; 4];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut z = b0.get(0, j);
            for i in 0..3 {
                z += x.get(0, i) * w0.get(i, j);
            }
            *h = z.tanh();
        }
        let mut out = b1.get(0, 0);
        for (j, h) in hidden.iter().enumerate() {
            out += h * w1.get(j, 0);
        }
        assert!((got.get(0, 0) - out).abs() < 1e-12);
    }

    #[test]
    fn perfect_regression_fit_has_zero_loss_and_grads() {
        let model = single_identity_layer(2);
        let mut model = MlpModel {
            head: Head::Regression,
            ..model
        };
        // force output dim 1: single 2->1 layer
        model.layers[0].weight.set_value(Matrix::zeros(2, 2)).unwrap();
        let weight = ParamTensor::new("layer0.weight", Matrix::from_rows(&[&[1.0], &[0.0]]).unwrap(), true);
        let bias = ParamTensor::new("layer0.bias", Matrix::zeros(1, 1), false);
        model.layers = vec![Layer {
            weight,
            bias,
            activation: Activation::Identity,
        }];
        let x = Matrix::from_rows(&[&[2.0, 5.0], &[3.0, -1.0]]).unwrap();
        let y = Matrix::from_rows(&[&[2.0], &[3.0]]).unwrap();
        let batch = Batch::new(x, Targets::Values(y)).unwrap();
        let loss = loss_and_grads(&mut model, &batch).unwrap();
        assert_eq!(loss, 0.0);
        for p in model.params() {
            assert!(p.grad().data().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn one_parameter_regression_hand_gradient() {
        // w = 2, x = 1, y = 0: loss = (wx - y)^2 = 4, dloss/dw = 2(wx - y)x = 4
        let weight = ParamTensor::new("layer0.weight", Matrix::filled(1, 1, 2.0), true);
        let bias = ParamTensor::new("layer0.bias", Matrix::zeros(1, 1), false);
        let mut model = MlpModel {
            layers: vec![Layer {
                weight,
                bias,
                activation: Activation::Identity,
            }],
            head: Head::Regression,
        };
        let batch = Batch::new(
            Matrix::filled(1, 1, 1.0),
            Targets::Values(Matrix::zeros(1, 1)),
        )
        .unwrap();
        let loss = loss_and_grads(&mut model, &batch).unwrap();
        assert_eq!(loss, 4.0);
        assert_eq!(model.layers[0].weight.grad().get(0, 0), 4.0);
    }

    #[test]
    fn grads_match_finite_differences_on_random_net() {
        let mut rng = Rng::new(33);
        let model =
            MlpModel::random(4, &[6, 5], Activation::Tanh, Head::Classification { classes: 3 }, 0.7, &mut rng)
                .unwrap();
        let x = Matrix::gaussian_init(5, 4, 0.0, 1.0, &mut rng).unwrap();
        let labels = vec![0, 2, 1, 1, 0];
        let batch = Batch::new(x, Targets::Classes(labels)).unwrap();
        let report = gradient_check(&model, &batch, 1e-6, 1e-4).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn exact_fit_gradient_check_is_clean() {
        let weight = ParamTensor::new("layer0.weight", Matrix::filled(1, 1, 1.5), true);
        let bias = ParamTensor::new("layer0.bias", Matrix::zeros(1, 1), false);
        let model = MlpModel {
            layers: vec![Layer {
                weight,
                bias,
                activation: Activation::Identity,
            }],
            head: Head::Regression,
        };
        let batch = Batch::new(
            Matrix::filled(1, 1, 2.0),
            Targets::Values(Matrix::filled(1, 1, 3.0)),
        )
        .unwrap();
        let report = gradient_check(&model, &batch, 1e-6, 1e-4).unwrap();
        assert!(report.pass);
        assert!(report.per_param.iter().all(|p| p.max_rel_err < 1e-8));
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let mut rng = Rng::new(55);
        let model =
            MlpModel::random(3, &[4], Activation::Tanh, Head::Regression, 0.6, &mut rng).unwrap();
        let x = Matrix::gaussian_init(4, 3, 0.0, 1.0, &mut rng).unwrap();
        let y = Matrix::gaussian_init(4, 1, 0.0, 1.0, &mut rng).unwrap();
        let batch = Batch::new(x, Targets::Values(y)).unwrap();

        // corrupt by doubling one weight gradient entry through a wrapper model
        // whose analytic grad we tamper with post-hoc: re-run the check machinery
        // manually.
        let mut work = model.clone();
        loss_and_grads(&mut work, &batch).unwrap();
        let mut tampered = work.layers[0].weight.grad().clone();
        tampered.set(0, 0, tampered.get(0, 0) * 2.0);
        work.layers[0].weight.set_grad(tampered).unwrap();

        // finite differences against the tampered gradient must disagree at (0,0)
        let h = 1e-6;
        let name = "layer0.weight";
        let original = work.param(name).unwrap().value().get(0, 0);
        work.param_mut(name).unwrap().value_mut().set(0, 0, original + h);
        let plus = loss_only(&work, &batch).unwrap();
        work.param_mut(name).unwrap().value_mut().set(0, 0, original - h);
        let minus = loss_only(&work, &batch).unwrap();
        work.param_mut(name).unwrap().value_mut().set(0, 0, original);
        let numeric = (plus - minus) / (2.0 * h);
        let exact = work.param(name).unwrap().grad().get(0, 0);
        let rel = (numeric - exact).abs() / numeric.abs().max(exact.abs());
        assert!(rel > 1e-4, "tampered entry not flagged: rel={rel}");
    }

    #[test]
    fn clone_as_pretrained_freezes_snapshot() {
        let mut rng = Rng::new(2);
        let model =
            MlpModel::random(2, &[3], Activation::Tanh, Head::Regression, 0.5, &mut rng).unwrap();
        let mut snap = model.clone_as_pretrained();
        for p in snap.params() {
            assert_eq!(p.value(), p.pretrained());
        }
        // training mutates value but never pretrained
        let before: Vec<Matrix> = snap.params().map(|p| p.pretrained().clone()).collect();
        for p in snap.params_mut() {
            let mut v = p.value().clone();
            for x in v.data_mut() {
                *x += 1.0;
            }
            p.set_value(v).unwrap();
        }
        for (p, orig) in snap.params().zip(&before) {
            assert_eq!(p.pretrained(), orig);
            assert_ne!(p.value(), orig);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let mut rng = Rng::new(77);
        let model =
            MlpModel::random(3, &[4], Activation::Relu, Head::Classification { classes: 2 }, 1.0, &mut rng)
                .unwrap();
        let mut awkward = model.clone();
        // values that expose sloppy float printing
        awkward.layers[0]
            .weight
            .value_mut()
            .set(0, 0, std::f64::consts::PI);
        awkward.layers[0].weight.value_mut().set(0, 1, 1e-300);
        awkward.layers[0].weight.value_mut().set(1, 0, -2.2250738585072014e-308);
        let json = awkward.to_json().unwrap();
        let back = MlpModel::from_json(&json).unwrap();
        for (a, b) in awkward.params().zip(back.params()) {
            for (x, y) in a.value().data().iter().zip(b.value().data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.pretrained().data().iter().zip(b.pretrained().data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
