//! A small stride-4 convolutional network with a classification head and an
//! 8-channel regression head.

use mono3d_core::codec::{Heatmap, RegressionMap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::nn::{relu, relu_backward, sigmoid, Conv, GroupNorm, GroupNormCache, Tensor};
use crate::ToyError;

/// Initial classification bias, `-ln((1 - p) / p)` for a prior of about 0.1.
pub const CLS_BIAS_INIT: f64 = -2.19;
const HEAD_INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub in_channels: usize,
    /// Each stage is a 3x3 convolution, group normalization and ReLU.
    pub stages: Vec<Stage>,
    pub head_channels: usize,
    pub num_classes: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        let s = |channels, stride| Stage { channels, stride };
        Self {
            in_channels: 3,
            stages: vec![s(16, 2), s(16, 1), s(32, 2), s(32, 1), s(32, 1), s(32, 1)],
            head_channels: 32,
            num_classes: 1,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: String| Err(ToyError::InvalidConfig(m));
        if self.stages.is_empty() || self.in_channels == 0 || self.num_classes == 0 {
            return bad("model needs input channels, classes and at least one stage".into());
        }
        let stride: usize = self.stages.iter().map(|s| s.stride).product();
        if stride != 4 || self.stages.iter().any(|s| s.stride != 1 && s.stride != 2) {
            return bad(format!("stage strides must be 1 or 2 with product 4, got {stride}"));
        }
        for c in self.stages.iter().map(|s| s.channels).chain([self.head_channels]) {
            let g = GroupNorm::groups_for(c);
            if c < g || c % g != 0 {
                return bad(format!("{c} channels cannot be split into {g} groups"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv(Conv),
    Norm(GroupNorm),
    Relu,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::Norm(_) => "group_norm",
            Layer::Relu => "relu",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub trunk: Vec<Layer>,
    pub cls_head: Vec<Layer>,
    pub reg_head: Vec<Layer>,
    pub params: Vec<f64>,
}

enum Cache {
    Conv { cols: Vec<f64>, in_h: usize, in_w: usize },
    Norm(GroupNormCache),
    Relu(Tensor),
}

/// Everything the backward pass needs from one forward pass.
pub struct Activations {
    trunk: Vec<Cache>,
    cls: Vec<Cache>,
    reg: Vec<Cache>,
    pub heatmap: Heatmap,
    pub regression: RegressionMap,
}

struct Builder {
    n: usize,
}

impl Builder {
    fn conv(&mut self, cin: usize, cout: usize, k: usize, stride: usize) -> Layer {
        let w_off = self.n;
        let b_off = w_off + cout * cin * k * k;
        self.n = b_off + cout;
        Layer::Conv(Conv { cin, cout, k, stride, pad: k / 2, w_off, b_off })
    }

    fn norm(&mut self, c: usize) -> Layer {
        let g_off = self.n;
        self.n += 2 * c;
        Layer::Norm(GroupNorm { c, groups: GroupNorm::groups_for(c), g_off, b_off: g_off + c })
    }

    fn block(&mut self, cin: usize, cout: usize, stride: usize) -> [Layer; 3] {
        [self.conv(cin, cout, 3, stride), self.norm(cout), Layer::Relu]
    }
}

impl Model {
    /// Builds the layer table with every parameter zero.
    pub fn zeros(spec: ModelSpec) -> Result<Self, ToyError> {
        spec.validate()?;
        let mut b = Builder { n: 0 };
        let mut trunk = Vec::new();
        let mut cin = spec.in_channels;
        for s in &spec.stages {
            trunk.extend(b.block(cin, s.channels, s.stride));
            cin = s.channels;
        }
        let mut head = |out: usize| {
            let mut h = b.block(cin, spec.head_channels, 1).to_vec();
            h.push(b.conv(spec.head_channels, out, 1, 1));
            h
        };
        let cls_head = head(spec.num_classes);
        let reg_head = head(8);
        let params = vec![0.0; b.n];
        Ok(Self { spec, trunk, cls_head, reg_head, params })
    }

    /// He-normal convolutions, unit norm scales, small final projections and
    /// the classification prior bias.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, ToyError> {
        let mut m = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = |h: &[Layer]| match h.last() {
            Some(Layer::Conv(c)) => *c,
            _ => unreachable!("heads end in a convolution"),
        };
        let (cls_out, reg_out) = (last(&m.cls_head), last(&m.reg_head));
        let layers: Vec<Layer> = m.trunk.iter().chain(&m.cls_head).chain(&m.reg_head).copied().collect();
        for layer in layers {
            match layer {
                Layer::Conv(c) => {
                    let std = if c == cls_out || c == reg_out {
                        HEAD_INIT_STD
                    } else {
                        (2.0 / (c.cin * c.k * c.k) as f64).sqrt()
                    };
                    let normal = Normal::new(0.0, std).expect("positive std");
                    for w in &mut m.params[c.w_off..c.w_off + c.n_weights()] {
                        *w = normal.sample(&mut rng);
                    }
                }
                Layer::Norm(g) => m.params[g.g_off..g.g_off + g.c].fill(1.0),
                Layer::Relu => {}
            }
        }
        m.params[cls_out.b_off..cls_out.b_off + cls_out.cout].fill(CLS_BIAS_INIT);
        Ok(m)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// All layers in parameter order, tagged with their branch.
    pub fn layer_table(&self) -> Vec<(&'static str, Layer)> {
        let tag = |b: &'static str, l: &[Layer]| l.iter().map(move |x| (b, *x)).collect::<Vec<_>>();
        let mut t = tag("trunk", &self.trunk);
        t.extend(tag("cls", &self.cls_head));
        t.extend(tag("reg", &self.reg_head));
        t
    }

    fn run(&self, layers: &[Layer], mut x: Tensor, caches: &mut Vec<Cache>) -> Tensor {
        for layer in layers {
            x = match layer {
                Layer::Conv(c) => {
                    let (in_h, in_w) = (x.h, x.w);
                    let (y, cols) = c.forward(&self.params, &x);
                    caches.push(Cache::Conv { cols, in_h, in_w });
                    y
                }
                Layer::Norm(g) => {
                    let (y, cache) = g.forward(&self.params, &x);
                    caches.push(Cache::Norm(cache));
                    y
                }
                Layer::Relu => {
                    relu(&mut x);
                    caches.push(Cache::Relu(x.clone()));
                    x
                }
            };
        }
        x
    }

    fn back(&self, layers: &[Layer], caches: &[Cache], mut dy: Tensor, grads: &mut [f64]) -> Tensor {
        for (layer, cache) in layers.iter().zip(caches).rev() {
            dy = match (layer, cache) {
                (Layer::Conv(c), Cache::Conv { cols, in_h, in_w }) => c.backward(&self.params, cols, *in_h, *in_w, &dy, grads),
                (Layer::Norm(g), Cache::Norm(nc)) => g.backward(&self.params, nc, &dy, grads),
                (Layer::Relu, Cache::Relu(out)) => {
                    relu_backward(out, &mut dy);
                    dy
                }
                _ => unreachable!("cache order follows layer order"),
            };
        }
        dy
    }

    /// `image` is channel-major `in_channels x h x w`.
    pub fn forward(&self, image: &[f64], h: usize, w: usize) -> Result<Activations, ToyError> {
        if h % 4 != 0 || w % 4 != 0 || image.len() != self.spec.in_channels * h * w {
            return Err(ToyError::ShapeMismatch(format!(
                "{} values for a {}x{}x{} input (sides must be multiples of 4)",
                image.len(),
                self.spec.in_channels,
                h,
                w
            )));
        }
        let x = Tensor::from_vec(self.spec.in_channels, h, w, image.to_vec());
        let mut trunk = Vec::new();
        let feat = self.run(&self.trunk, x, &mut trunk);
        let mut cls = Vec::new();
        let logits = self.run(&self.cls_head, feat.clone(), &mut cls);
        let mut reg = Vec::new();
        let raw = self.run(&self.reg_head, feat, &mut reg);
        let heatmap = Heatmap {
            classes: logits.c,
            rows: logits.h,
            cols: logits.w,
            data: logits.data.iter().map(|&v| sigmoid(v)).collect(),
        };
        let mut regression = RegressionMap::zeros(raw.h, raw.w);
        regression.data.copy_from_slice(&raw.data);
        Ok(Activations { trunk, cls, reg, heatmap, regression })
    }

    /// Parameter gradient given loss gradients w.r.t. the heatmap
    /// probabilities and the raw regression channels.
    pub fn backward(&self, acts: &Activations, d_heatmap: &[f64], d_regression: &[f64]) -> Vec<f64> {
        let hm = &acts.heatmap;
        let dlogits: Vec<f64> = d_heatmap.iter().zip(&hm.data).map(|(d, p)| d * p * (1.0 - p)).collect();
        let mut grads = vec![0.0; self.params.len()];
        let d_cls = Tensor::from_vec(hm.classes, hm.rows, hm.cols, dlogits);
        let d_reg = Tensor::from_vec(8, hm.rows, hm.cols, d_regression.to_vec());
        let mut d_feat = self.back(&self.cls_head, &acts.cls, d_cls, &mut grads);
        let d_feat_reg = self.back(&self.reg_head, &acts.reg, d_reg, &mut grads);
        d_feat.data.iter_mut().zip(&d_feat_reg.data).for_each(|(a, b)| *a += b);
        self.back(&self.trunk, &acts.trunk, d_feat, &mut grads);
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_shapes_and_zero_weights() {
        let m = Model::zeros(ModelSpec::default()).unwrap();
        let a = m.forward(&vec![0.3; 3 * 96 * 96], 96, 96).unwrap();
        assert_eq!((a.heatmap.rows, a.heatmap.cols, a.heatmap.classes), (24, 24, 1));
        assert_eq!((a.regression.rows, a.regression.cols), (24, 24));
        assert!(a.heatmap.data.iter().all(|&p| p == 0.5));
        let a = m.forward(&vec![0.0; 3 * 64 * 192], 64, 192).unwrap();
        assert_eq!((a.heatmap.rows, a.heatmap.cols), (16, 48));
    }

    #[test]
    fn rejects_bad_shapes_and_specs() {
        let m = Model::zeros(ModelSpec::default()).unwrap();
        assert!(matches!(m.forward(&[0.0; 3 * 90 * 96], 90, 96), Err(ToyError::ShapeMismatch(_))));
        assert!(matches!(m.forward(&[0.0; 10], 96, 96), Err(ToyError::ShapeMismatch(_))));
        let mut spec = ModelSpec::default();
        spec.stages[1].stride = 2;
        assert!(Model::zeros(spec).is_err());
        let mut spec = ModelSpec::default();
        spec.stages[0].channels = 8;
        assert!(Model::zeros(spec).is_err());
    }

    #[test]
    fn init_is_deterministic_and_biased() {
        let a = Model::init(ModelSpec::default(), 3).unwrap();
        assert_eq!(a, Model::init(ModelSpec::default(), 3).unwrap());
        let x: Vec<f64> = (0..3 * 32 * 32).map(|i| (i % 7) as f64 / 7.0).collect();
        let p1 = a.forward(&x, 32, 32).unwrap().heatmap;
        assert_eq!(p1, a.forward(&x, 32, 32).unwrap().heatmap);
        let mean = p1.data.iter().sum::<f64>() / p1.data.len() as f64;
        assert!((mean - sigmoid(CLS_BIAS_INIT)).abs() < 0.05, "{mean}");
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = ModelSpec {
            stages: vec![Stage { channels: 16, stride: 2 }, Stage { channels: 16, stride: 2 }],
            head_channels: 16,
            ..ModelSpec::default()
        };
        let mut m = Model::init(spec, 1).unwrap();
        let (h, w) = (8, 8);
        let x: Vec<f64> = (0..3 * h * w).map(|i| ((i * 37 % 11) as f64) / 11.0).collect();
        let probe_h: Vec<f64> = (0..4).map(|i| 0.3 - 0.2 * i as f64).collect();
        let probe_r: Vec<f64> = (0..32).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
        let loss = |m: &Model| {
            let a = m.forward(&x, h, w).unwrap();
            a.heatmap.data.iter().zip(&probe_h).map(|(a, b)| a * b).sum::<f64>()
                + a.regression.data.iter().zip(&probe_r).map(|(a, b)| a * b).sum::<f64>()
        };
        let acts = m.forward(&x, h, w).unwrap();
        let g = m.backward(&acts, &probe_h, &probe_r);
        let n = m.params.len();
        let mut worst: f64 = 0.0;
        for i in (0..n).step_by(7) {
            let orig = m.params[i];
            m.params[i] = orig + 1e-6;
            let lp = loss(&m);
            m.params[i] = orig - 1e-6;
            let lm = loss(&m);
            m.params[i] = orig;
            let num = (lp - lm) / 2e-6;
            worst = worst.max((num - g[i]).abs() / (1e-6 + num.abs() + g[i].abs()));
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
