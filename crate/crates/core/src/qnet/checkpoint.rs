//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! magic "AMPDQNET" | version u32
//! architecture: input_side, input_channels, 3 x (out, kernel, stride, padding),
//!               hidden, n_actions                        (u32 each)
//! tensor count u32, then per tensor: rank u32, dims u32..., f64 values
//! magic "ADAMSTAT" | step u64 | lr, beta1, beta2, eps f64
//! tensor count u32, then first moments followed by second moments
//! ```
//!
//! Network tensors are the trainable parameters followed by the running
//! normalization statistics.

use std::io::{Read, Write};
use std::path::Path;

use super::{Architecture, ConvSpec, NetworkParams, OptimizerState, Tensor};
use crate::error::{Error, Result};

const NET_MAGIC: &[u8; 8] = b"AMPDQNET";
const OPT_MAGIC: &[u8; 8] = b"ADAMSTAT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, t: &Tensor) {
    put_u32(out, t.shape.len());
    for &d in &t.shape {
        put_u32(out, d);
    }
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(params: &NetworkParams, opt: &OptimizerState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(NET_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let a = &params.arch;
    put_u32(&mut out, a.input_side);
    put_u32(&mut out, a.input_channels);
    for c in &a.conv {
        for v in [c.out_channels, c.kernel, c.stride, c.padding] {
            put_u32(&mut out, v);
        }
    }
    put_u32(&mut out, a.hidden);
    put_u32(&mut out, a.n_actions);

    let tensors: Vec<&Tensor> = params.trainable().into_iter().chain(params.buffers()).collect();
    put_u32(&mut out, tensors.len());
    for t in tensors {
        put_tensor(&mut out, t);
    }

    out.extend_from_slice(OPT_MAGIC);
    out.extend_from_slice(&opt.step.to_le_bytes());
    for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_u32(&mut out, opt.first_moment.len());
    for t in opt.first_moment.iter().chain(&opt.second_moment) {
        put_tensor(&mut out, t);
    }
    out
}

pub fn save_checkpoint(params: &NetworkParams, opt: &OptimizerState, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_checkpoint(params, opt))
        .map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("unexpected end of file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, expected: &[usize]) -> Result<Tensor> {
        let rank = self.u32()?;
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        if shape != expected {
            return Err(Error::Checkpoint(format!(
                "tensor shape {shape:?} does not match expected {expected:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::from_vec(&shape, data)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkParams, OptimizerState)> {
    let mut r = Reader { buf: bytes };
    if r.take(8)? != NET_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let input_side = r.u32()?;
    let input_channels = r.u32()?;
    let mut conv = [ConvSpec::new(0, 0, 0, 0); 3];
    for c in &mut conv {
        *c = ConvSpec::new(r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    }
    let arch = Architecture {
        input_side,
        input_channels,
        conv,
        hidden: r.u32()?,
        n_actions: r.u32()?,
    };
    arch.shape_chain()
        .map_err(|e| Error::Checkpoint(format!("invalid architecture header: {e}")))?;

    let mut params = NetworkParams::zeros(&arch)?;
    let count = r.u32()?;
    {
        let slots = params.all_tensors_mut();
        if count != slots.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors, architecture needs {}",
                slots.len()
            )));
        }
        for slot in slots {
            let shape = slot.shape.clone();
            *slot = r.tensor(&shape)?;
        }
    }

    if r.take(8)? != OPT_MAGIC {
        return Err(Error::Checkpoint("missing optimizer section".into()));
    }
    let step = r.u64()?;
    let (lr, b1, b2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let shapes: Vec<Vec<usize>> = params.trainable().iter().map(|t| t.shape.clone()).collect();
    if r.u32()? != shapes.len() {
        return Err(Error::Checkpoint("optimizer tensor count mismatch".into()));
    }
    let mut first = Vec::new();
    for s in &shapes {
        first.push(r.tensor(s)?);
    }
    let mut second = Vec::new();
    for s in &shapes {
        second.push(r.tensor(s)?);
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.buf.len())));
    }
    Ok((
        params,
        OptimizerState {
            step,
            first_moment: first,
            second_moment: second,
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        },
    ))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkParams, OptimizerState)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and rejects it unless it was saved for `arch`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, arch: &Architecture) -> Result<(NetworkParams, OptimizerState)> {
    let (params, opt) = load_checkpoint(path)?;
    if &params.arch != arch {
        return Err(Error::Checkpoint(format!(
            "checkpoint architecture {:?} does not match {:?}",
            params.arch, arch
        )));
    }
    Ok((params, opt))
}
