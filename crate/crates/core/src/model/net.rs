//! The full three-lead network: one backbone per lead, the lead-wise
//! attention merge and a linear classifier on the merged feature.

use crate::error::{Error, Result};
use crate::model::attention::LeadAttention;
use crate::model::backbone::Backbone;
use crate::model::config::{ModelConfig, INPUT_LEADS};
use crate::model::layers::Linear;
use crate::model::params::{join, ParamMut, ParamRef, Parameterized};
use crate::real::Real;
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::Mode;

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `[B, n_classes, 1]`
    pub logits: Tensor3<T>,
    /// `[B, 3, 1]`, each in `(0, 1)`.
    pub alpha: Tensor3<T>,
}

#[derive(Debug, Clone)]
pub struct LeadwiseNet<T> {
    pub config: ModelConfig,
    pub backbones: Vec<Backbone<T>>,
    pub attention: LeadAttention<T>,
    pub classifier: Linear<T>,
}

impl<T: Real> LeadwiseNet<T> {
    /// Builds and initializes a model. Each backbone draws from its own
    /// child stream, so the three share a shape but not their values.
    pub fn new(config: ModelConfig, rng: &Stream) -> Result<Self> {
        config.validate()?;
        let backbones = (0..INPUT_LEADS)
            .map(|i| {
                Backbone::new(
                    &config.backbone,
                    config.input_length,
                    &mut rng.split(100 + i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let dim = config.feature_dim();
        let attention = LeadAttention::new(
            dim,
            config.attention_hidden,
            config.attention_dropout,
            &mut rng.split(200),
        );
        let classifier = Linear::new(dim, config.n_classes, true, &mut rng.split(300));
        Ok(Self {
            config,
            backbones,
            attention,
            classifier,
        })
    }

    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode, rng: &mut Stream) -> Result<ForwardOutput<T>> {
        if x.channels() != INPUT_LEADS {
            return Err(Error::shape(format!(
                "model expects {INPUT_LEADS} input leads, got input {:?}",
                x.shape()
            )));
        }
        let features = self
            .backbones
            .iter_mut()
            .enumerate()
            .map(|(i, bb)| bb.forward(&x.channel(i), mode))
            .collect::<Result<Vec<_>>>()?;
        let (merged, alpha) = self.attention.forward(&features, mode, rng)?;
        let logits = self.classifier.forward(&merged)?;
        Ok(ForwardOutput { logits, alpha })
    }

    /// Inference-mode forward (running BN statistics, no dropout).
    pub fn forward_eval(&mut self, x: &Tensor3<T>) -> Result<ForwardOutput<T>> {
        self.forward(x, Mode::Eval, &mut Stream::new(0))
    }

    /// Backpropagates `d loss / d logits` from the last forward call,
    /// accumulating into every parameter gradient.
    pub fn backward(&mut self, grad_logits: &Tensor3<T>) -> Result<()> {
        let grads = self.feature_grads_inner(grad_logits)?;
        for (bb, g) in self.backbones.iter_mut().zip(&grads) {
            bb.backward(g)?;
        }
        Ok(())
    }

    /// Gradients of the scalar behind `grad_logits` with respect to each
    /// backbone's feature vector. Parameter gradients are left zeroed.
    pub fn feature_gradients(&mut self, grad_logits: &Tensor3<T>) -> Result<Vec<Tensor3<T>>> {
        let grads = self.feature_grads_inner(grad_logits)?;
        self.zero_grad();
        Ok(grads)
    }

    fn feature_grads_inner(&mut self, grad_logits: &Tensor3<T>) -> Result<Vec<Tensor3<T>>> {
        let g_merged = self.classifier.backward(grad_logits)?;
        self.attention.backward(&g_merged)
    }

    pub fn clear_cache(&mut self) {
        for bb in &mut self.backbones {
            bb.clear_cache();
        }
        self.attention.clear_cache();
        self.classifier.clear_cache();
    }

    /// Copy of the model in another scalar type.
    pub fn cast<U: Real>(&self) -> Result<LeadwiseNet<U>> {
        let mut out = LeadwiseNet::<U>::new(self.config.clone(), &Stream::new(0))?;
        let mut values = Vec::new();
        self.visit("", &mut |p| values.push(p.value.iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
        let mut it = values.into_iter();
        out.visit_mut("", &mut |p| {
            let src = it.next().expect("identical topology");
            for (d, s) in p.value.iter_mut().zip(src) {
                *d = U::lit(s);
            }
        });
        Ok(out)
    }
}

impl<T: Real> Parameterized<T> for LeadwiseNet<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        for (i, bb) in self.backbones.iter().enumerate() {
            bb.visit(&join(prefix, &format!("backbone{i}")), f);
        }
        self.attention.visit(&join(prefix, "attention"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        for (i, bb) in self.backbones.iter_mut().enumerate() {
            bb.visit_mut(&join(prefix, &format!("backbone{i}")), f);
        }
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}
