use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng as _, SeedableRng};

use super::{LayerKind, LayerParams, LayerSpec, ModelGraph, INPUT};
use crate::error::{Error, Result};
use crate::kernels::BnParams;
use crate::tensor::Tensor;
use crate::Rng;

/// Known architecture families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// CIFAR-style ResNet; depth must be `6m + 2`.
    Resnet,
    /// VGG with batch norm and a single small linear head; depth 11 or 16.
    Vgg,
    /// Six-conv plain CNN used by the desk-scale profiles.
    Conv6,
}

impl Family {
    pub fn parse(s: &str) -> Result<Family> {
        match s {
            "resnet" => Ok(Family::Resnet),
            "vgg" => Ok(Family::Vgg),
            "conv6" => Ok(Family::Conv6),
            other => Err(Error::InvalidConfig(format!("unknown architecture family `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Resnet => "resnet",
            Family::Vgg => "vgg",
            Family::Conv6 => "conv6",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub family: Family,
    pub depth: usize,
    /// `(C, H, W)` of one input sample.
    pub input: (usize, usize, usize),
    pub classes: usize,
}

/// Incremental graph construction with shape tracking. Channel counts of
/// `conv`/`linear` are inferred from the producer where possible.
pub struct GraphBuilder {
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    input_shape: (usize, usize, usize),
    classes: usize,
    family: String,
}

impl GraphBuilder {
    pub fn new(input_shape: (usize, usize, usize), classes: usize) -> Self {
        GraphBuilder {
            layers: Vec::new(),
            shapes: Vec::new(),
            input_shape,
            classes,
            family: String::from("custom"),
        }
    }

    pub fn family(mut self, tag: &str) -> Self {
        self.family = String::from(tag);
        self
    }

    fn shape_of(&self, id: usize) -> Vec<usize> {
        if id == INPUT {
            let (c, h, w) = self.input_shape;
            vec![1, c, h, w]
        } else {
            self.shapes[id].clone()
        }
    }

    fn push(&mut self, kind: LayerKind, inputs: Vec<usize>, shape: Vec<usize>) -> usize {
        let id = self.layers.len();
        self.layers.push(LayerSpec { id, kind, inputs });
        self.shapes.push(shape);
        id
    }

    pub fn conv(
        &mut self,
        from: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> usize {
        let s = self.shape_of(from);
        let cin = s[1];
        let ho = crate::kernels::conv_out_dim(s[2], k, stride, pad);
        let wo = crate::kernels::conv_out_dim(s[3], k, stride, pad);
        self.push(
            LayerKind::Conv { cin, cout, k, stride, pad, bias },
            vec![from],
            vec![1, cout, ho, wo],
        )
    }

    pub fn bn(&mut self, from: usize) -> usize {
        let s = self.shape_of(from);
        let channels = s[1];
        self.push(LayerKind::Bn { channels }, vec![from], s)
    }

    pub fn relu(&mut self, from: usize) -> usize {
        let s = self.shape_of(from);
        self.push(LayerKind::Relu, vec![from], s)
    }

    pub fn maxpool(&mut self, from: usize) -> usize {
        let s = self.shape_of(from);
        let out = vec![s[0], s[1], s[2] / 2, s[3] / 2];
        self.push(LayerKind::Maxpool, vec![from], out)
    }

    pub fn gap(&mut self, from: usize) -> usize {
        let s = self.shape_of(from);
        self.push(LayerKind::Gap, vec![from], vec![s[0], s[1]])
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        let s = self.shape_of(a);
        self.push(LayerKind::Add, vec![a, b], s)
    }

    pub fn linear(&mut self, from: usize, out_features: usize, bias: bool) -> usize {
        let s = self.shape_of(from);
        let in_features: usize = s[1..].iter().product();
        self.push(
            LayerKind::Linear { in_features, out_features, bias },
            vec![from],
            vec![1, out_features],
        )
    }

    /// Validate the DAG and initialize parameters deterministically from the
    /// seed (He fan-in normal for weights, zeros for biases).
    pub fn finish(self, seed: u64) -> Result<ModelGraph> {
        let mut rng = Rng::seed_from_u64(seed);
        let params = self
            .layers
            .iter()
            .map(|l| init_params(&l.kind, &mut rng))
            .collect::<Vec<_>>();
        let model = ModelGraph {
            layers: self.layers,
            params,
            input_shape: self.input_shape,
            classes: self.classes,
            family: self.family,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Standard normal via Box-Muller, so initialization does not depend on
/// distribution crates and stays reproducible across feature sets.
fn normal(rng: &mut Rng) -> f32 {
    loop {
        let u1: f32 = rng.gen::<f32>();
        let u2: f32 = rng.gen::<f32>();
        if u1 > 1e-12 {
            return libm::sqrtf(-2.0 * libm::logf(u1)) * libm::cosf(2.0 * core::f32::consts::PI * u2);
        }
    }
}

fn he_tensor(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor {
    let std = libm::sqrtf(2.0 / fan_in as f32);
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = normal(rng) * std;
    }
    t
}

fn init_params(kind: &LayerKind, rng: &mut Rng) -> LayerParams {
    match kind {
        LayerKind::Conv { cin, cout, k, bias, .. } => LayerParams::Conv {
            weight: he_tensor(&[*cout, *cin, *k, *k], cin * k * k, rng),
            bias: bias.then(|| Tensor::zeros(&[*cout])),
        },
        LayerKind::Bn { channels } => LayerParams::Bn(BnParams::new(*channels)),
        LayerKind::Linear { in_features, out_features, bias } => LayerParams::Linear {
            weight: he_tensor(&[*out_features, *in_features], *in_features, rng),
            bias: bias.then(|| Tensor::zeros(&[*out_features])),
        },
        _ => LayerParams::None,
    }
}

/// Build a model of a known family, deterministically initialized.
pub fn build_model(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph> {
    match cfg.family {
        Family::Resnet => build_resnet(cfg, seed),
        Family::Vgg => build_vgg(cfg, seed),
        Family::Conv6 => build_conv6(cfg, seed),
    }
}

fn build_conv6(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph> {
    let widths = [8usize, 16, 16, 32, 32, 32];
    let (_, h, w) = cfg.input;
    if h % 4 != 0 || w % 4 != 0 {
        return Err(Error::InvalidConfig("conv6 input size must be divisible by 4".into()));
    }
    let mut b =
        GraphBuilder::new(cfg.input, cfg.classes).family(&format!("conv6 input {}x{}x{}", cfg.input.0, h, w));
    let mut prev = INPUT;
    for (i, &cout) in widths.iter().enumerate() {
        let c = b.conv(prev, cout, 3, 1, 1, false);
        let n = b.bn(c);
        prev = b.relu(n);
        if i == 1 || i == 3 {
            prev = b.maxpool(prev);
        }
    }
    let g = b.gap(prev);
    b.linear(g, cfg.classes, true);
    b.finish(seed)
}

fn build_vgg(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph> {
    // 'M' denotes maxpool; channel plans of the 11- and 16-layer variants.
    let plan: &[isize] = match cfg.depth {
        11 => &[64, -1, 128, -1, 256, 256, -1, 512, 512, -1, 512, 512, -1],
        16 => &[
            64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512, -1, 512, 512, 512, -1,
        ],
        d => {
            return Err(Error::InvalidConfig(format!("vgg depth must be 11 or 16, got {d}")));
        }
    };
    let mut b = GraphBuilder::new(cfg.input, cfg.classes).family(&format!("vgg-{}", cfg.depth));
    let mut prev = INPUT;
    for &p in plan {
        if p < 0 {
            prev = b.maxpool(prev);
        } else {
            let c = b.conv(prev, p as usize, 3, 1, 1, false);
            let n = b.bn(c);
            prev = b.relu(n);
        }
    }
    let g = b.gap(prev);
    b.linear(g, cfg.classes, true);
    b.finish(seed)
}

fn build_resnet(cfg: &ArchConfig, seed: u64) -> Result<ModelGraph> {
    if cfg.depth < 8 || cfg.depth % 6 != 2 {
        return Err(Error::InvalidConfig(format!(
            "resnet depth must be 6m+2 for the CIFAR family, got {}",
            cfg.depth
        )));
    }
    let m = (cfg.depth - 2) / 6;
    let widths = [16usize, 32, 64];
    let mut b = GraphBuilder::new(cfg.input, cfg.classes).family(&format!("resnet-{}", cfg.depth));

    let c = b.conv(INPUT, widths[0], 3, 1, 1, false);
    let n = b.bn(c);
    let mut prev = b.relu(n);

    for (stage, &width) in widths.iter().enumerate() {
        for block in 0..m {
            let stride = if stage > 0 && block == 0 { 2 } else { 1 };
            let c1 = b.conv(prev, width, 3, stride, 1, false);
            let n1 = b.bn(c1);
            let r1 = b.relu(n1);
            let c2 = b.conv(r1, width, 3, 1, 1, false);
            let n2 = b.bn(c2);
            let skip = if stride != 1 {
                // projection shortcut at stage boundaries
                let p = b.conv(prev, width, 1, 2, 0, false);
                b.bn(p)
            } else {
                prev
            };
            let a = b.add(n2, skip);
            prev = b.relu(a);
        }
    }
    let g = b.gap(prev);
    b.linear(g, cfg.classes, true);
    b.finish(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resnet_depth_must_be_6m_plus_2() {
        let cfg = ArchConfig { family: Family::Resnet, depth: 57, input: (3, 32, 32), classes: 10 };
        assert!(build_model(&cfg, 0).is_err());
    }

    #[test]
    fn conv6_builds_and_validates() {
        let cfg = ArchConfig { family: Family::Conv6, depth: 6, input: (3, 16, 16), classes: 10 };
        let m = build_model(&cfg, 1).unwrap();
        m.validate().unwrap();
        let convs = m
            .layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Conv { .. }))
            .count();
        assert_eq!(convs, 6);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = ArchConfig { family: Family::Conv6, depth: 6, input: (3, 16, 16), classes: 10 };
        let a = build_model(&cfg, 7).unwrap();
        let b = build_model(&cfg, 7).unwrap();
        assert_eq!(a, b);
        let c = build_model(&cfg, 8).unwrap();
        assert_ne!(a, c);
    }
}
