//! Parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "TDLN"
//! version      u32      1
//! head         u8 tag (0 squared error, 1 softmax CE), u64 classes
//! input shape  u32 rank, then rank x u64
//! layers       u32 count, then per layer: u8 tag, 3 x u64 fields
//! parameters   u64 count, then count x f64
//! ```

use std::io::{Read, Write};

use super::{Head, Layer, Network};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TDLN";
pub const CHECKPOINT_VERSION: u32 = 1;

fn layer_fields(layer: &Layer) -> (u8, [u64; 3]) {
    match *layer {
        Layer::Dense { input, output } => (0, [input as u64, output as u64, 0]),
        Layer::Relu => (1, [0; 3]),
        Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
        } => (2, [in_channels as u64, out_channels as u64, kernel as u64]),
        Layer::MaxPool2d { window, stride } => (3, [window as u64, stride as u64, 0]),
        Layer::Flatten => (4, [0; 3]),
    }
}

pub fn write_checkpoint<W: Write>(net: &Network, mut w: W) -> std::io::Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let (tag, k) = match net.head() {
        Head::SquaredError => (0u8, 1u64),
        Head::SoftmaxCrossEntropy(k) => (1u8, k as u64),
    };
    w.write_all(&[tag])?;
    w.write_all(&k.to_le_bytes())?;
    w.write_all(&(net.input_shape().len() as u32).to_le_bytes())?;
    for &d in net.input_shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    let layers: Vec<&Layer> = net.layers().collect();
    w.write_all(&(layers.len() as u32).to_le_bytes())?;
    for layer in layers {
        let (tag, fields) = layer_fields(layer);
        w.write_all(&[tag])?;
        for f in fields {
            w.write_all(&f.to_le_bytes())?;
        }
    }
    w.write_all(&(net.param_count() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| Error::invalid(format!("checkpoint: {e}")))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.bytes()?)).map_err(|_| Error::invalid("checkpoint: size overflow"))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Network> {
    let mut r = Reader { inner: r };
    if r.bytes::<4>()? != CHECKPOINT_MAGIC {
        return Err(Error::invalid("checkpoint: bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("checkpoint: unsupported version {version}")));
    }
    let head = match (r.u8()?, r.usize()?) {
        (0, _) => Head::SquaredError,
        (1, k) => Head::SoftmaxCrossEntropy(k),
        (t, _) => return Err(Error::invalid(format!("checkpoint: unknown head tag {t}"))),
    };
    let rank = r.u32()? as usize;
    let input_shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let tag = r.u8()?;
        let f = [r.usize()?, r.usize()?, r.usize()?];
        layers.push(match tag {
            0 => Layer::Dense {
                input: f[0],
                output: f[1],
            },
            1 => Layer::Relu,
            2 => Layer::Conv2d {
                in_channels: f[0],
                out_channels: f[1],
                kernel: f[2],
            },
            3 => Layer::MaxPool2d {
                window: f[0],
                stride: f[1],
            },
            4 => Layer::Flatten,
            t => return Err(Error::invalid(format!("checkpoint: unknown layer tag {t}"))),
        });
    }
    let mut net = Network::new(input_shape, layers, head)?;
    let n = r.usize()?;
    if n != net.param_count() {
        return Err(Error::DimensionMismatch {
            expected: net.param_count(),
            actual: n,
        });
    }
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        params.push(f64::from_le_bytes(r.bytes()?));
    }
    net.set_params(params)?;
    Ok(net)
}
