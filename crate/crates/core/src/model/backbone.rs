//! 1D SE-ResNet backbone built from depthwise-separable convolutions.
//!
//! ```text
//! stem:   DSConv(1 -> C0, k, s) - BN - ReLU [- MaxPool(3, 2)]
//! block:  DSConv - BN - ReLU - DSConv - BN - SE  (+ skip, 1x1 conv + BN when
//!         the shape changes) - ReLU
//! head:   global average pool -> feature vector [B, D]
//! ```

use crate::error::{Error, Result};
use crate::model::config::BackboneConfig;
use crate::model::layers::{add_into, BatchNorm, Conv, DsConv, Linear};
use crate::model::params::{join, ParamMut, ParamRef, Parameterized};
use crate::ops::{
    global_avg_pool, global_avg_pool_backward, max_pool, max_pool_backward, relu, relu_backward,
    sigmoid, ConvParams,
};
use crate::real::Real;
use crate::rng::Stream;
use crate::tensor::Tensor3;
use crate::Mode;

/// Channel recalibration: `x * sigmoid(fc2(relu(fc1(gap(x)))))`.
#[derive(Debug, Clone)]
pub struct SqueezeExcite<T> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    cache: Option<SeCache<T>>,
}

#[derive(Debug, Clone)]
struct SeCache<T> {
    x: Tensor3<T>,
    hidden: Tensor3<T>,
    gate: Tensor3<T>,
}

impl<T: Real> SqueezeExcite<T> {
    pub fn new(channels: usize, hidden: usize, rng: &mut Stream) -> Self {
        Self {
            fc1: Linear::new(channels, hidden, true, rng),
            fc2: Linear::new(hidden, channels, true, rng),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        let pooled = global_avg_pool(x)?;
        let hidden = self.fc1.forward(&pooled)?;
        let z = self.fc2.forward(&relu(&hidden))?;
        let gate = sigmoid(&z);
        let mut y = x.clone();
        y.grad = None;
        for b in 0..x.batch() {
            for c in 0..x.channels() {
                let s = gate.at(b, c, 0);
                for v in y.lane_mut(b, c) {
                    *v *= s;
                }
            }
        }
        self.cache = Some(SeCache {
            x: x.clone(),
            hidden,
            gate,
        });
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::invalid("squeeze-excite: backward before forward"))?;
        let (batch, channels, length) = cache.x.shape();
        let mut grad_x = Tensor3::zeros(batch, channels, length);
        let mut grad_z = Tensor3::zeros(batch, channels, 1);
        for b in 0..batch {
            for c in 0..channels {
                let s = cache.gate.at(b, c, 0);
                let g = grad_out.lane(b, c);
                let x = cache.x.lane(b, c);
                let ds: T = g.iter().zip(x).map(|(&gv, &xv)| gv * xv).sum();
                grad_z.set(b, c, 0, ds * s * (T::one() - s));
                for (o, &gv) in grad_x.lane_mut(b, c).iter_mut().zip(g) {
                    *o = gv * s;
                }
            }
        }
        let g_hidden = self.fc2.backward(&grad_z)?;
        let g_hidden = relu_backward(&cache.hidden, &g_hidden);
        let g_pooled = self.fc1.backward(&g_hidden)?;
        add_into(&mut grad_x, &global_avg_pool_backward(&g_pooled, length));
        Ok(grad_x)
    }

    fn clear_cache(&mut self) {
        self.cache = None;
        self.fc1.clear_cache();
        self.fc2.clear_cache();
    }
}

impl<T: Real> Parameterized<T> for SqueezeExcite<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}

#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub conv: Conv<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Debug, Clone)]
pub struct ResBlock<T> {
    pub conv1: DsConv<T>,
    pub bn1: BatchNorm<T>,
    pub conv2: DsConv<T>,
    pub bn2: BatchNorm<T>,
    pub se: SqueezeExcite<T>,
    pub proj: Option<Projection<T>>,
    pre_relu1: Option<Tensor3<T>>,
    pre_relu_out: Option<Tensor3<T>>,
}

impl<T: Real> ResBlock<T> {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        se_hidden: usize,
        rng: &mut Stream,
    ) -> Result<Self> {
        let proj = if in_ch != out_ch || stride != 1 {
            Some(Projection {
                conv: Conv::new(ConvParams::new(in_ch, out_ch, 1, stride, 0, 1, false)?, rng),
                bn: BatchNorm::new(out_ch),
            })
        } else {
            None
        };
        Ok(Self {
            conv1: DsConv::new(in_ch, out_ch, kernel, stride, rng)?,
            bn1: BatchNorm::new(out_ch),
            conv2: DsConv::new(out_ch, out_ch, kernel, 1, rng)?,
            bn2: BatchNorm::new(out_ch),
            se: SqueezeExcite::new(out_ch, se_hidden, rng),
            proj,
            pre_relu1: None,
            pre_relu_out: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        let a = self.bn1.forward(&self.conv1.forward(x)?, mode)?;
        let h = relu(&a);
        self.pre_relu1 = Some(a);
        let b = self.bn2.forward(&self.conv2.forward(&h)?, mode)?;
        let mut sum = self.se.forward(&b)?;
        match self.proj.as_mut() {
            Some(p) => {
                let sc = p.bn.forward(&p.conv.forward(x)?, mode)?;
                add_into(&mut sum, &sc);
            }
            None => add_into(&mut sum, x),
        }
        let y = relu(&sum);
        self.pre_relu_out = Some(sum);
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor3<T>) -> Result<Tensor3<T>> {
        let missing = || Error::invalid("residual block: backward before forward");
        let sum = self.pre_relu_out.take().ok_or_else(missing)?;
        let g_sum = relu_backward(&sum, grad_out);
        let g = self.se.backward(&g_sum)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let a = self.pre_relu1.take().ok_or_else(missing)?;
        let g = relu_backward(&a, &g);
        let g = self.bn1.backward(&g)?;
        let mut grad_x = self.conv1.backward(&g)?;
        match self.proj.as_mut() {
            Some(p) => {
                let gs = p.bn.backward(&g_sum)?;
                add_into(&mut grad_x, &p.conv.backward(&gs)?);
            }
            None => add_into(&mut grad_x, &g_sum),
        }
        Ok(grad_x)
    }

    fn clear_cache(&mut self) {
        self.conv1.clear_cache();
        self.conv2.clear_cache();
        self.bn1.clear_cache();
        self.bn2.clear_cache();
        self.se.clear_cache();
        if let Some(p) = self.proj.as_mut() {
            p.conv.clear_cache();
            p.bn.clear_cache();
        }
        self.pre_relu1 = None;
        self.pre_relu_out = None;
    }
}

impl<T: Real> Parameterized<T> for ResBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.bn1.visit(&join(prefix, "bn1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
        self.bn2.visit(&join(prefix, "bn2"), f);
        self.se.visit(&join(prefix, "se"), f);
        if let Some(p) = &self.proj {
            p.conv.visit(&join(prefix, "proj.conv"), f);
            p.bn.visit(&join(prefix, "proj.bn"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        self.conv1.visit_mut(&join(prefix, "conv1"), f);
        self.bn1.visit_mut(&join(prefix, "bn1"), f);
        self.conv2.visit_mut(&join(prefix, "conv2"), f);
        self.bn2.visit_mut(&join(prefix, "bn2"), f);
        self.se.visit_mut(&join(prefix, "se"), f);
        if let Some(p) = self.proj.as_mut() {
            p.conv.visit_mut(&join(prefix, "proj.conv"), f);
            p.bn.visit_mut(&join(prefix, "proj.bn"), f);
        }
    }
}

#[derive(Debug, Clone)]
pub struct Backbone<T> {
    pub stem: DsConv<T>,
    pub stem_bn: BatchNorm<T>,
    pub stem_pool: bool,
    pub stages: Vec<Vec<ResBlock<T>>>,
    input_length: usize,
    stem_pre_relu: Option<Tensor3<T>>,
    pool_argmax: Option<(Vec<usize>, usize)>,
    last_activation: Option<Tensor3<T>>,
}

impl<T: Real> Backbone<T> {
    pub fn new(cfg: &BackboneConfig, input_length: usize, rng: &mut Stream) -> Result<Self> {
        cfg.validate()?;
        let stem = DsConv::new(1, cfg.stem_channels, cfg.stem_kernel, cfg.stem_stride, rng)?;
        let mut in_ch = cfg.stem_channels;
        let mut stages = Vec::with_capacity(cfg.stages.len());
        for st in &cfg.stages {
            let mut blocks = Vec::with_capacity(st.blocks);
            for i in 0..st.blocks {
                let stride = if i == 0 { st.stride } else { 1 };
                blocks.push(ResBlock::new(
                    in_ch,
                    st.channels,
                    st.kernel,
                    stride,
                    cfg.se_hidden(st.channels),
                    rng,
                )?);
                in_ch = st.channels;
            }
            stages.push(blocks);
        }
        Ok(Self {
            stem,
            stem_bn: BatchNorm::new(cfg.stem_channels),
            stem_pool: cfg.stem_pool,
            stages,
            input_length,
            stem_pre_relu: None,
            pool_argmax: None,
            last_activation: None,
        })
    }

    /// `[B, 1, L]` signal to `[B, D, 1]` features.
    pub fn forward(&mut self, x: &Tensor3<T>, mode: Mode) -> Result<Tensor3<T>> {
        if x.channels() != 1 || x.length() != self.input_length {
            return Err(Error::shape(format!(
                "backbone expects [B, 1, {}], got {:?}",
                self.input_length,
                x.shape()
            )));
        }
        let a = self.stem_bn.forward(&self.stem.forward(x)?, mode)?;
        let mut h = relu(&a);
        self.stem_pre_relu = Some(a);
        if self.stem_pool {
            let len = h.length();
            let (pooled, argmax) = max_pool(&h, 3, 2, 1)?;
            self.pool_argmax = Some((argmax, len));
            h = pooled;
        }
        for block in self.stages.iter_mut().flatten() {
            h = block.forward(&h, mode)?;
        }
        let features = global_avg_pool(&h)?;
        self.last_activation = Some(h);
        Ok(features)
    }

    /// Output of the final residual stage from the last forward call
    /// (`[B, D, L_feat]`), the activation Grad-CAM explains.
    pub fn last_activation(&self) -> Option<&Tensor3<T>> {
        self.last_activation.as_ref()
    }

    pub fn backward(&mut self, grad_features: &Tensor3<T>) -> Result<Tensor3<T>> {
        let act_len = self
            .last_activation
            .as_ref()
            .ok_or_else(|| Error::invalid("backbone: backward before forward"))?
            .length();
        let mut g = global_avg_pool_backward(grad_features, act_len);
        for block in self.stages.iter_mut().flatten().rev() {
            g = block.backward(&g)?;
        }
        if let Some((argmax, len)) = self.pool_argmax.take() {
            g = max_pool_backward(&g, &argmax, len);
        }
        let a = self
            .stem_pre_relu
            .take()
            .ok_or_else(|| Error::invalid("backbone: backward before forward"))?;
        let g = relu_backward(&a, &g);
        let g = self.stem_bn.backward(&g)?;
        self.stem.backward(&g)
    }

    pub fn clear_cache(&mut self) {
        self.stem.clear_cache();
        self.stem_bn.clear_cache();
        for block in self.stages.iter_mut().flatten() {
            block.clear_cache();
        }
        self.stem_pre_relu = None;
        self.pool_argmax = None;
        self.last_activation = None;
    }
}

impl<T: Real> Parameterized<T> for Backbone<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamRef<'_, T>)) {
        self.stem.visit(&join(prefix, "stem"), f);
        self.stem_bn.visit(&join(prefix, "stem.bn"), f);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.visit(&join(prefix, &format!("stage{s}.block{b}")), f);
            }
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamMut<'_, T>)) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        self.stem_bn.visit_mut(&join(prefix, "stem.bn"), f);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.visit_mut(&join(prefix, &format!("stage{s}.block{b}")), f);
            }
        }
    }
}
