//! Versioned binary checkpoints.
//!
//! Little-endian layout, read back bit-exactly:
//!
//! ```text
//! magic "VIEDL1" | format u32 | K u32 | input_dim u32 | feature_dim u32
//! layer_count u32
//!   per layer: rows u32 | cols u32 | activation u8 | weights f64[] | bias f64[]
//! prototypes f64[K][feature_dim] | log_scale f64 | margin f64
//! prior f64[K]
//! optimizer u8 | learning_rate f64
//!   adam only: step u64 | moments m then v, arrays in declaration order
//! epoch u32
//! ```

use crate::dirichlet::PriorParams;
use crate::error::{Error, Result};
use crate::head::EvidenceHead;
use crate::nn::{Activation, Layer, Matrix, Mlp};
use crate::train::{AdamMoments, Optimizer, OptimizerKind, ParamBlock, TrainState};
use std::path::Path;

const MAGIC: &[u8; 6] = b"VIEDL1";
const FORMAT_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
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
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Serialize a training state (model, prior, optimizer moments, epoch).
pub fn to_bytes(state: &TrainState) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    let k = state.head.num_classes() as u32;
    w.u32(k);
    w.u32(state.net.input_dim() as u32);
    w.u32(state.net.feature_dim() as u32);
    w.u32(state.net.layers().len() as u32);
    for layer in state.net.layers() {
        w.u32(layer.weight.rows as u32);
        w.u32(layer.weight.cols as u32);
        w.u8(layer.activation.tag());
        w.f64s(&layer.weight.data);
        w.f64s(&layer.bias);
    }
    for proto in state.head.prototypes() {
        w.f64s(proto);
    }
    w.f64(state.head.log_scale());
    w.f64(state.head.margin());
    w.f64s(state.prior.components());
    match state.optimizer.kind {
        OptimizerKind::Sgd => w.u8(0),
        OptimizerKind::Adam => w.u8(1),
    }
    w.f64(state.optimizer.learning_rate);
    if let Some(adam) = &state.optimizer.adam {
        w.u64(adam.step);
        for block in [&adam.m, &adam.v] {
            for arr in &block.weights {
                w.f64s(arr);
            }
            for arr in &block.biases {
                w.f64s(arr);
            }
            for arr in &block.prototypes {
                w.f64s(arr);
            }
            w.f64(block.log_scale);
            w.f64(block.margin);
        }
    }
    w.u32(state.epoch as u32);
    w.buf
}

/// Deserialize a checkpoint produced by [`to_bytes`].
pub fn from_bytes(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader::new(bytes);
    if r.take(6)? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let format = r.u32()?;
    if format != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {format}")));
    }
    let k = r.u32()? as usize;
    let input_dim = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let activation = Activation::from_tag(r.u8()?)?;
        let data = r.f64s(rows * cols)?;
        let bias = r.f64s(rows)?;
        layers.push(Layer { weight: Matrix { rows, cols, data }, bias, activation });
    }
    let net = Mlp::from_layers(layers)?;
    if net.input_dim() != input_dim || net.feature_dim() != feature_dim {
        return Err(Error::Checkpoint("header dims disagree with layer shapes".into()));
    }
    let prototypes: Vec<Vec<f64>> = (0..k).map(|_| r.f64s(feature_dim)).collect::<Result<_>>()?;
    let log_scale = r.f64()?;
    let margin = r.f64()?;
    let head = EvidenceHead::from_log_scale(prototypes, log_scale, margin)?;
    let prior = PriorParams::new(r.f64s(k)?)?;
    let kind = match r.u8()? {
        0 => OptimizerKind::Sgd,
        1 => OptimizerKind::Adam,
        other => return Err(Error::Checkpoint(format!("unknown optimizer tag {other}"))),
    };
    let learning_rate = r.f64()?;
    let adam = match kind {
        OptimizerKind::Sgd => None,
        OptimizerKind::Adam => {
            let step = r.u64()?;
            let mut blocks = Vec::with_capacity(2);
            for _ in 0..2 {
                let weights = net
                    .layers()
                    .iter()
                    .map(|l| r.f64s(l.weight.data.len()))
                    .collect::<Result<_>>()?;
                let biases = net
                    .layers()
                    .iter()
                    .map(|l| r.f64s(l.bias.len()))
                    .collect::<Result<_>>()?;
                let protos = (0..k).map(|_| r.f64s(feature_dim)).collect::<Result<_>>()?;
                let log_scale = r.f64()?;
                let margin = r.f64()?;
                blocks.push(ParamBlock {
                    weights,
                    biases,
                    prototypes: protos,
                    log_scale,
                    margin,
                });
            }
            let v = blocks.pop().unwrap();
            let m = blocks.pop().unwrap();
            Some(AdamMoments { step, m, v })
        }
    };
    let epoch = r.u32()? as usize;
    if !r.done() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok(TrainState {
        net,
        head,
        prior,
        optimizer: Optimizer { kind, learning_rate, adam },
        epoch,
        log: Vec::new(),
    })
}

pub fn save(state: &TrainState, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(state))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainState> {
    from_bytes(&std::fs::read(path)?)
}
