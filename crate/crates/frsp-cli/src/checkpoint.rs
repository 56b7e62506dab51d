//! The FRSP checkpoint container.
//!
//! Layout (all integers little-endian): magic `FRSP`, format version, the
//! architecture echo (family tag, input shape, classes, full layer list with
//! per-layer kind fields and input edges — enough to rebuild pruned shapes
//! without the original config), trainer state (epoch, SGD hyperparameters,
//! RNG state), then named f32 tensor entries for every parameter, batch
//! statistic and momentum buffer. Round trips are bit-exact.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use frsp_core::graph::{LayerKind, LayerParams, LayerSpec, ModelGraph, OptimState, INPUT};
use frsp_core::kernels::{BnParams, SgdHyper};
use frsp_core::tensor::Tensor;
use frsp_core::Rng;
use rand::SeedableRng;

const MAGIC: &[u8; 4] = b"FRSP";
const VERSION: u32 = 1;

#[derive(Debug)]
pub struct TrainState {
    pub epoch: u64,
    pub hyper: SgdHyper,
    /// Restored generator stream; continues exactly where the run left off.
    #[allow(dead_code)]
    pub rng: Rng,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend(v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend(v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend(s.as_bytes());
    }
    fn tensor(&mut self, name: &str, t: &Tensor) {
        self.str(name);
        self.u8(t.rank() as u8);
        for i in 0..t.rank() {
            self.u32(t.dim(i) as u32);
        }
        for &v in t.data() {
            self.f32(v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at + n).context("truncated checkpoint")?;
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        Ok(String::from_utf8(self.take(n)?.to_vec()).context("non-utf8 string")?)
    }
    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let name = self.str()?;
        let rank = self.u8()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.u32()? as usize);
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f32()?);
        }
        Ok((name, Tensor::from_vec(&dims, data)?))
    }
}

fn edge_to_u64(e: usize) -> u64 {
    if e == INPUT {
        u64::MAX
    } else {
        e as u64
    }
}

fn edge_from_u64(e: u64) -> usize {
    if e == u64::MAX {
        INPUT
    } else {
        e as usize
    }
}

pub fn save_checkpoint(
    model: &ModelGraph,
    optim: &OptimState,
    epoch: u64,
    rng: &Rng,
    path: &Path,
) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend(MAGIC);
    w.u32(VERSION);
    w.str(&model.family);
    let (c, h, wd) = model.input_shape;
    w.u32(c as u32);
    w.u32(h as u32);
    w.u32(wd as u32);
    w.u32(model.classes as u32);

    w.u32(model.layers.len() as u32);
    for layer in &model.layers {
        match &layer.kind {
            LayerKind::Conv { cin, cout, k, stride, pad, bias } => {
                w.u8(0);
                for v in [cin, cout, k, stride, pad] {
                    w.u32(*v as u32);
                }
                w.u8(*bias as u8);
            }
            LayerKind::Bn { channels } => {
                w.u8(1);
                w.u32(*channels as u32);
            }
            LayerKind::Relu => w.u8(2),
            LayerKind::Maxpool => w.u8(3),
            LayerKind::Gap => w.u8(4),
            LayerKind::Linear { in_features, out_features, bias } => {
                w.u8(5);
                w.u32(*in_features as u32);
                w.u32(*out_features as u32);
                w.u8(*bias as u8);
            }
            LayerKind::Add => w.u8(6),
        }
        w.u8(layer.inputs.len() as u8);
        for &e in &layer.inputs {
            w.u64(edge_to_u64(e));
        }
    }

    w.u64(epoch);
    w.f32(optim.hyper.lr);
    w.f32(optim.hyper.momentum);
    w.f32(optim.hyper.weight_decay);
    w.buf.extend(rng.get_seed());
    w.buf.extend(rng.get_word_pos().to_le_bytes());
    w.u64(rng.get_stream());

    let mut entries: Vec<(String, &Tensor)> = Vec::new();
    for (id, params) in model.params.iter().enumerate() {
        match params {
            LayerParams::Conv { weight, bias } | LayerParams::Linear { weight, bias } => {
                entries.push((format!("layer{id}.weight"), weight));
                if let Some(b) = bias {
                    entries.push((format!("layer{id}.bias"), b));
                }
            }
            LayerParams::Bn(bn) => {
                entries.push((format!("layer{id}.gamma"), &bn.gamma));
                entries.push((format!("layer{id}.beta"), &bn.beta));
                entries.push((format!("layer{id}.running_mean"), &bn.running_mean));
                entries.push((format!("layer{id}.running_var"), &bn.running_var));
            }
            LayerParams::None => {}
        }
        for (j, buf) in optim.buffers[id].iter().enumerate() {
            entries.push((format!("opt{id}.{j}"), buf));
        }
    }
    w.u32(entries.len() as u32);
    let mut buf = w;
    for (name, t) in entries {
        buf.tensor(&name, t);
    }

    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, &buf.buf).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelGraph, OptimState, TrainState)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut r = Reader { bytes: &bytes, at: 0 };
    if r.take(4)? != MAGIC {
        bail!("{}: not an FRSP checkpoint (bad magic)", path.display());
    }
    let version = r.u32()?;
    if version != VERSION {
        bail!("{}: unsupported checkpoint version {version} (expected {VERSION})", path.display());
    }
    let family = r.str()?;
    let input_shape = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let classes = r.u32()? as usize;

    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for id in 0..n_layers {
        let kind = match r.u8()? {
            0 => {
                let (cin, cout, k, stride, pad) = (
                    r.u32()? as usize,
                    r.u32()? as usize,
                    r.u32()? as usize,
                    r.u32()? as usize,
                    r.u32()? as usize,
                );
                let bias = r.u8()? != 0;
                LayerKind::Conv { cin, cout, k, stride, pad, bias }
            }
            1 => LayerKind::Bn { channels: r.u32()? as usize },
            2 => LayerKind::Relu,
            3 => LayerKind::Maxpool,
            4 => LayerKind::Gap,
            5 => {
                let in_features = r.u32()? as usize;
                let out_features = r.u32()? as usize;
                let bias = r.u8()? != 0;
                LayerKind::Linear { in_features, out_features, bias }
            }
            6 => LayerKind::Add,
            tag => bail!("{}: unknown layer tag {tag}", path.display()),
        };
        let n_inputs = r.u8()? as usize;
        let mut inputs = Vec::with_capacity(n_inputs);
        for _ in 0..n_inputs {
            inputs.push(edge_from_u64(r.u64()?));
        }
        layers.push(LayerSpec { id, kind, inputs });
    }

    let epoch = r.u64()?;
    let hyper = SgdHyper::new(r.f32()?, r.f32()?, r.f32()?);
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
    let stream = r.u64()?;
    let mut rng = Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);

    let n_entries = r.u32()? as usize;
    let mut table = std::collections::BTreeMap::new();
    for _ in 0..n_entries {
        let (name, t) = r.tensor()?;
        table.insert(name, t);
    }
    let mut take = |name: String| {
        table.remove(&name).ok_or_else(|| anyhow!("{}: missing entry '{name}'", path.display()))
    };

    let mut params = Vec::with_capacity(n_layers);
    for (id, layer) in layers.iter().enumerate() {
        let p = match &layer.kind {
            LayerKind::Conv { bias, .. } => LayerParams::Conv {
                weight: take(format!("layer{id}.weight"))?,
                bias: if *bias { Some(take(format!("layer{id}.bias"))?) } else { None },
            },
            LayerKind::Linear { bias, .. } => LayerParams::Linear {
                weight: take(format!("layer{id}.weight"))?,
                bias: if *bias { Some(take(format!("layer{id}.bias"))?) } else { None },
            },
            LayerKind::Bn { channels } => {
                let mut bn = BnParams::new(*channels);
                bn.gamma = take(format!("layer{id}.gamma"))?;
                bn.beta = take(format!("layer{id}.beta"))?;
                bn.running_mean = take(format!("layer{id}.running_mean"))?;
                bn.running_var = take(format!("layer{id}.running_var"))?;
                LayerParams::Bn(bn)
            }
            _ => LayerParams::None,
        };
        params.push(p);
    }

    let model = ModelGraph { layers, params, input_shape, classes, family };
    model.validate().map_err(|e| anyhow!("{}: invalid architecture: {e}", path.display()))?;

    let mut optim = OptimState::new(&model, hyper);
    for (id, bufs) in optim.buffers.iter_mut().enumerate() {
        for (j, buf) in bufs.iter_mut().enumerate() {
            let loaded = take(format!("opt{id}.{j}"))?;
            if loaded.shape() != buf.shape() {
                bail!("{}: momentum buffer opt{id}.{j} shape mismatch", path.display());
            }
            *buf = loaded;
        }
    }
    if let Some(name) = table.keys().next() {
        bail!("{}: unexpected extra entry '{name}'", path.display());
    }

    Ok((model, optim, TrainState { epoch, hyper, rng }))
}
