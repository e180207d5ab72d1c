//! Finite-difference gradient checks at f64, grouped as primitives, layers
//! and the end-to-end model. Each group returns `(name, max relative error)`.

use super::{probe_loss, randn, sample_coords};
use leadwise::model::backbone::Backbone;
use leadwise::model::layers::{BatchNorm, Conv, DsConv, Linear};
use leadwise::model::{
    BackboneConfig, LeadAttention, LeadwiseNet, ModelConfig, ParamMut, ParamRef, Parameterized, ResBlock,
    SqueezeExcite, Task,
};
use leadwise::ops::activation::softmax_backward;
use leadwise::ops::*;
use leadwise::{Mode, Stream, Tensor3};

pub const H: f64 = 1e-5;
/// Step for the whole model. Its many ReLU and max-pool switch points put
/// some sampled coordinates within 1e-5 of a kink, where a central
/// difference straddles two linear pieces; the smaller step keeps the
/// probe on one piece while f64 rounding stays far below the tolerance.
pub const END_TO_END_H: f64 = 1e-6;
pub const PRIMITIVE_TOL: f64 = 1e-4;
pub const END_TO_END_TOL: f64 = 1e-3;

/// Checks `d probe / d x` for a pure function given its analytic backward.
fn check_pure(
    x: &Tensor3<f64>,
    forward: impl Fn(&Tensor3<f64>) -> Tensor3<f64>,
    backward: impl Fn(&Tensor3<f64>, &Tensor3<f64>) -> Tensor3<f64>,
    rng: &mut Stream,
) -> f64 {
    let y = forward(x);
    let r = randn(y.shape(), rng);
    let gx = backward(x, &r);
    let (b, c, l) = x.shape();
    let f = |p: &[f64]| probe_loss(&forward(&Tensor3::from_vec(b, c, l, p.to_vec()).unwrap()), &r);
    grad_check(f, x.data(), gx.data(), H).max_rel_error
}

/// Checks input and parameter gradients of a stateful layer. Returns the
/// worst relative error over inputs and parameters.
fn check_layer<L: Parameterized<f64> + Clone>(
    layer: &L,
    x: &Tensor3<f64>,
    forward: impl Fn(&mut L, &Tensor3<f64>) -> Tensor3<f64>,
    backward: impl Fn(&mut L, &Tensor3<f64>) -> Tensor3<f64>,
    param_fraction: f64,
    rng: &mut Stream,
) -> f64 {
    let mut l = layer.clone();
    l.zero_grad();
    let y = forward(&mut l, x);
    let r = randn(y.shape(), rng);
    let gx = backward(&mut l, &r);
    let gp = l.flat_grads();
    let p0 = layer.flat_params();

    let (b, c, len) = x.shape();
    let fx = |p: &[f64]| {
        let mut probe = layer.clone();
        probe_loss(&forward(&mut probe, &Tensor3::from_vec(b, c, len, p.to_vec()).unwrap()), &r)
    };
    let input_err = grad_check(fx, x.data(), gx.data(), H).max_rel_error;

    let fp = |p: &[f64]| {
        let mut probe = layer.clone();
        probe.set_flat_params(p);
        probe_loss(&forward(&mut probe, x), &r)
    };
    let coords = sample_coords(p0.len(), param_fraction, rng);
    let param_err = if p0.is_empty() { 0.0 } else { grad_check_coords(fp, &p0, &gp, &coords, H).max_rel_error };
    input_err.max(param_err)
}

/// Inputs kept away from ReLU kinks and max-pool ties.
fn spread(shape: (usize, usize, usize), rng: &mut Stream) -> Tensor3<f64> {
    let mut x = randn(shape, rng);
    for v in x.data_mut() {
        *v += 0.05f64.copysign(*v);
    }
    x
}

/// Activations, pooling, dropout with a fixed mask, and both losses.
pub fn primitive_errors() -> Vec<(String, f64)> {
    let mut rng = Stream::new(11);
    let mut out = Vec::new();
    let x = spread((2, 3, 9), &mut rng);
    out.push(("relu".into(), check_pure(&x, relu, relu_backward, &mut rng)));
    out.push(("sigmoid".into(), check_pure(&x, sigmoid, |x, g| sigmoid_backward(&sigmoid(x), g), &mut rng)));
    out.push((
        "softmax".into(),
        check_pure(&x, softmax_rows, |x, g| softmax_backward(&softmax_rows(x), g), &mut rng),
    ));
    out.push((
        "global average pool".into(),
        check_pure(&x, |x| global_avg_pool(x).unwrap(), |x, g| global_avg_pool_backward(g, x.length()), &mut rng),
    ));
    out.push((
        "max pool".into(),
        check_pure(
            &x,
            |x| max_pool(x, 3, 2, 1).unwrap().0,
            |x, g| max_pool_backward(g, &max_pool(x, 3, 2, 1).unwrap().1, x.length()),
            &mut rng,
        ),
    ));

    let x = randn((2, 4, 5), &mut rng);
    let fwd = |x: &Tensor3<f64>| dropout(x, 0.3, Mode::Train, &mut Stream::new(3)).unwrap();
    let mask = fwd(&x).1.unwrap();
    out.push(("dropout".into(), check_pure(&x, |x| fwd(x).0, |_, g| dropout_backward(g, Some(&mask)), &mut rng)));

    let logits = randn((4, 5, 1), &mut rng);
    let targets = [0usize, 3, 4, 1];
    let (_, g) = cross_entropy(&logits, &targets).unwrap();
    let f = |p: &[f64]| cross_entropy(&Tensor3::from_vec(4, 5, 1, p.to_vec()).unwrap(), &targets).unwrap().0;
    out.push(("cross-entropy".into(), grad_check(f, logits.data(), g.data(), H).max_rel_error));
    let y: Vec<f64> = (0..20).map(|i| f64::from(i % 3 == 0)).collect();
    let (_, g) = binary_cross_entropy(&logits, &y).unwrap();
    let f = |p: &[f64]| binary_cross_entropy(&Tensor3::from_vec(4, 5, 1, p.to_vec()).unwrap(), &y).unwrap().0;
    out.push(("binary cross-entropy".into(), grad_check(f, logits.data(), g.data(), H).max_rel_error));
    out
}

#[derive(Clone)]
struct AttentionProbe(LeadAttention<f64>);

impl Parameterized<f64> for AttentionProbe {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, f64>)) {
        self.0.visit(prefix, f)
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, f64>)) {
        self.0.visit_mut(prefix, f)
    }
}

/// Conv variants, DSConv, batch norm, linear, squeeze-excite, residual
/// blocks, a small backbone and the attention merge; input and parameter
/// gradients both checked.
pub fn layer_errors() -> Vec<(String, f64)> {
    let mut rng = Stream::new(14);
    let mut out = Vec::new();
    let x = randn((2, 4, 11), &mut rng);
    for (groups, stride, pad, bias) in [(1, 1, 1, true), (2, 2, 2, false), (4, 3, 0, true)] {
        let layer = Conv::new(ConvParams::new(4, 8, 3, stride, pad, groups, bias).unwrap(), &mut rng);
        let err = check_layer(&layer, &x, |l, x| l.forward(x).unwrap(), |l, g| l.backward(g).unwrap(), 1.0, &mut rng);
        out.push((format!("conv groups={groups} stride={stride}"), err));
    }
    let layer = DsConv::new(4, 6, 5, 2, &mut rng).unwrap();
    let err = check_layer(&layer, &x, |l, x| l.forward(x).unwrap(), |l, g| l.backward(g).unwrap(), 1.0, &mut rng);
    out.push(("dsconv".into(), err));

    let x = randn((3, 4, 6), &mut rng);
    let mut layer = BatchNorm::new(4);
    layer.state.gamma = vec![0.5, 1.5, -1.0, 2.0];
    layer.state.beta = vec![0.1, -0.2, 0.3, 0.0];
    layer.state.running_mean = vec![0.2, -0.1, 0.0, 0.4];
    layer.state.running_var = vec![0.8, 1.3, 0.5, 2.0];
    for mode in [Mode::Train, Mode::Eval] {
        let err = check_layer(&layer, &x, |l, x| l.forward(x, mode).unwrap(), |l, g| l.backward(g).unwrap(), 1.0, &mut rng);
        out.push((format!("batch norm {mode:?}"), err));
    }

    let x = randn((3, 7, 1), &mut rng);
    let layer = Linear::new(7, 4, true, &mut rng);
    let err = check_layer(&layer, &x, |l, x| l.forward(x).unwrap(), |l, g| l.backward(g).unwrap(), 1.0, &mut rng);
    out.push(("linear".into(), err));
    let x = randn((2, 6, 8), &mut rng);
    let se = SqueezeExcite::new(6, 3, &mut rng);
    let err = check_layer(&se, &x, |l, x| l.forward(x).unwrap(), |l, g| l.backward(g).unwrap(), 1.0, &mut rng);
    out.push(("squeeze-excite".into(), err));

    let x = spread((2, 4, 12), &mut rng);
    for (c_out, stride) in [(4, 1), (6, 2)] {
        let block = ResBlock::new(4, c_out, 3, stride, 2, &mut rng).unwrap();
        let err = check_layer(
            &block,
            &x,
            |l, x| l.forward(x, Mode::Train).unwrap(),
            |l, g| l.backward(g).unwrap(),
            1.0,
            &mut rng,
        );
        out.push((format!("residual block out={c_out} stride={stride}"), err));
    }
    let x = spread((2, 1, 40), &mut rng);
    let backbone = Backbone::new(&BackboneConfig::tiny(), 40, &mut rng).unwrap();
    let err = check_layer(
        &backbone,
        &x,
        |l, x| l.forward(x, Mode::Train).unwrap(),
        |l, g| l.backward(g).unwrap(),
        1.0,
        &mut rng,
    );
    out.push(("backbone".into(), err));

    // The three lead features travel stacked as one `[B, 3 * dim, 1]` input.
    let dim = 5;
    let x = randn((4, 3 * dim, 1), &mut rng);
    let split = |x: &Tensor3<f64>| -> Vec<Tensor3<f64>> {
        (0..3)
            .map(|i| {
                let rows: Vec<Vec<f64>> = (0..x.batch()).map(|b| x.row(b)[i * dim..(i + 1) * dim].to_vec()).collect();
                Tensor3::from_vec(x.batch(), dim, 1, rows.concat()).unwrap()
            })
            .collect()
    };
    let join = |gs: Vec<Tensor3<f64>>| -> Tensor3<f64> {
        let b = gs[0].batch();
        let data: Vec<f64> = (0..b).flat_map(|r| gs.iter().flat_map(move |g| g.row(r).to_vec())).collect();
        Tensor3::from_vec(b, 3 * dim, 1, data).unwrap()
    };
    let probe = AttentionProbe(LeadAttention::new(dim, 4, 0.2, &mut rng));
    let err = check_layer(
        &probe,
        &x,
        |l, x| l.0.forward(&split(x), Mode::Train, &mut Stream::new(9)).unwrap().0,
        |l, g| join(l.0.backward(g).unwrap()),
        1.0,
        &mut rng,
    );
    out.push(("attention merge".into(), err));
    out
}

/// The loss gradient of the desk model (input length 200) on a random 1%
/// of its parameters. Returns the worst relative error and the number of
/// coordinates checked.
pub fn end_to_end_error() -> (f64, usize) {
    let mut rng = Stream::new(19);
    let mut cfg = ModelConfig::new(BackboneConfig::desk(), 4, Task::MultiClass);
    cfg.input_length = 200;
    cfg.attention_dropout = 0.2;
    let model = LeadwiseNet::<f64>::new(cfg, &Stream::new(3)).unwrap();
    let x = spread((3, 3, 200), &mut rng);
    let targets = [0usize, 2, 3];
    let loss = |m: &mut LeadwiseNet<f64>| {
        let out = m.forward(&x, Mode::Train, &mut Stream::new(21)).unwrap();
        cross_entropy(&out.logits, &targets).unwrap()
    };
    let mut m = model.clone();
    m.zero_grad();
    let (_, g) = loss(&mut m);
    m.backward(&g).unwrap();
    let grads = m.flat_grads();
    let p0 = model.flat_params();
    let coords = sample_coords(p0.len(), 0.01, &mut rng);
    let f = |p: &[f64]| {
        let mut probe = model.clone();
        probe.set_flat_params(p);
        loss(&mut probe).0
    };
    (grad_check_coords(f, &p0, &grads, &coords, END_TO_END_H).max_rel_error, coords.len())
}
