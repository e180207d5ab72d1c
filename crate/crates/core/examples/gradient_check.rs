//! Central finite differences against the hand-written backward pass of a
//! small three-lead model, in double precision.

use leadwise::model::{BackboneConfig, LeadwiseNet, ModelConfig, Parameterized, Task};
use leadwise::ops::{cross_entropy, grad_check_coords};
use leadwise::{Mode, Stream, Tensor3};

fn main() -> leadwise::Result<()> {
    let mut cfg = ModelConfig::new(BackboneConfig::tiny(), 3, Task::MultiClass);
    cfg.input_length = 96;
    let model = LeadwiseNet::<f64>::new(cfg, &Stream::new(3))?;
    let mut rng = Stream::new(4);
    let x = Tensor3::from_vec(2, 3, 96, (0..576).map(|_| rng.normal()).collect())?;
    let targets = [0, 2];
    let loss = |m: &mut LeadwiseNet<f64>| -> leadwise::Result<f64> {
        let out = m.forward(&x, Mode::Train, &mut Stream::new(5))?;
        Ok(cross_entropy(&out.logits, &targets)?.0)
    };

    let mut m = model.clone();
    m.zero_grad();
    let out = m.forward(&x, Mode::Train, &mut Stream::new(5))?;
    let (value, grad) = cross_entropy(&out.logits, &targets)?;
    m.backward(&grad)?;
    let point = m.flat_params();
    let analytic = m.flat_grads();
    let mut names = Vec::new();
    m.visit("", &mut |p| {
        if p.kind.trainable() {
            names.extend(std::iter::repeat_n(p.name, p.value.len()));
        }
    });
    println!("loss {value:.6}, {} trainable parameters", point.len());

    let coords: Vec<usize> = (0..point.len()).step_by(37).collect();
    let probe = |p: &[f64]| {
        let mut copy = model.clone();
        copy.set_flat_params(p);
        loss(&mut copy).expect("forward")
    };
    let check = grad_check_coords(probe, &point, &analytic, &coords, 1e-6);
    println!(
        "{} coordinates: worst relative error {:.2e} at {} (analytic {:.6e}, numeric {:.6e})",
        coords.len(),
        check.max_rel_error,
        names[check.worst_index],
        check.analytic,
        check.numeric
    );
    Ok(())
}
