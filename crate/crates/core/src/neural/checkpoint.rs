//! PUN1 network checkpoints.
//!
//! Layout (little-endian): `"PUN1"`, `u32` version (1), `u32` layer count,
//! then per layer `u32` inputs, `u32` outputs, `u8` activation (0 identity,
//! 1 leaky ReLU), `u8` batch-norm flag, the weight matrix row-major and the
//! bias as f64; batch-norm layers append scale, shift, running mean and
//! running variance (one f64 per output each), momentum and epsilon.

use super::net::{Activation, BatchNorm, DenseNet, Layer};
use super::NeuralError;
use crate::binio::{write_f64s, Reader};
use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{Array1, Array2};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PUN1";
const VERSION: u32 = 1;

fn ck(e: std::io::Error) -> NeuralError {
    NeuralError::Checkpoint(e.to_string())
}

pub fn write_net(net: &DenseNet, out: &mut Vec<u8>) {
    out.extend_from_slice(MAGIC);
    out.write_u32::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(net.layers().len() as u32)
        .unwrap();
    for layer in net.layers() {
        out.write_u32::<LittleEndian>(layer.input_dim() as u32)
            .unwrap();
        out.write_u32::<LittleEndian>(layer.output_dim() as u32)
            .unwrap();
        out.push(match layer.activation {
            Activation::Identity => 0,
            Activation::LeakyRelu => 1,
        });
        out.push(layer.batch_norm.is_some() as u8);
        write_f64s(out, layer.weight.as_slice().expect("standard layout")).unwrap();
        write_f64s(out, layer.bias.as_slice().expect("standard layout")).unwrap();
        if let Some(bn) = &layer.batch_norm {
            for v in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                write_f64s(out, v.as_slice().expect("standard layout")).unwrap();
            }
            write_f64s(out, &[bn.momentum, bn.eps]).unwrap();
        }
    }
}

pub(crate) fn read_net(r: &mut Reader<'_>) -> Result<DenseNet, NeuralError> {
    r.magic(MAGIC).map_err(ck)?;
    let version = r.u32().map_err(ck)?;
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let count = r.u32().map_err(ck)? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let inputs = r.u32().map_err(ck)? as usize;
        let outputs = r.u32().map_err(ck)? as usize;
        let activation = match r.u8().map_err(ck)? {
            0 => Activation::Identity,
            1 => Activation::LeakyRelu,
            t => {
                return Err(NeuralError::Checkpoint(format!(
                    "layer {i}: unknown activation tag {t}"
                )))
            }
        };
        let has_bn = match r.u8().map_err(ck)? {
            0 => false,
            1 => true,
            t => {
                return Err(NeuralError::Checkpoint(format!(
                    "layer {i}: bad batch-norm flag {t}"
                )))
            }
        };
        let weight =
            Array2::from_shape_vec((outputs, inputs), r.f64s(inputs * outputs).map_err(ck)?)
                .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        let bias = Array1::from(r.f64s(outputs).map_err(ck)?);
        let batch_norm = if has_bn {
            let gamma = Array1::from(r.f64s(outputs).map_err(ck)?);
            let beta = Array1::from(r.f64s(outputs).map_err(ck)?);
            let running_mean = Array1::from(r.f64s(outputs).map_err(ck)?);
            let running_var = Array1::from(r.f64s(outputs).map_err(ck)?);
            let momentum = r.f64().map_err(ck)?;
            let eps = r.f64().map_err(ck)?;
            Some(BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
                momentum,
                eps,
            })
        } else {
            None
        };
        layers.push(Layer {
            weight,
            bias,
            batch_norm,
            activation,
        });
    }
    DenseNet::from_layers(layers)
}

pub fn encode_net(net: &DenseNet) -> Vec<u8> {
    let mut out = Vec::new();
    write_net(net, &mut out);
    out
}

pub fn decode_net(buf: &[u8]) -> Result<DenseNet, NeuralError> {
    let mut r = Reader::new(buf);
    let net = read_net(&mut r)?;
    if r.remaining() != 0 {
        return Err(NeuralError::Checkpoint(format!(
            "{} trailing bytes",
            r.remaining()
        )));
    }
    Ok(net)
}

pub fn save_net(net: &DenseNet, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    let path = path.as_ref();
    std::fs::write(path, encode_net(net)).map_err(|source| NeuralError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_net(path: impl AsRef<Path>) -> Result<DenseNet, NeuralError> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|source| NeuralError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_net(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::net::{Mode, NetSpec};

    #[test]
    fn round_trip_preserves_every_parameter() {
        let spec = NetSpec {
            input: 3,
            hidden: vec![4, 2],
            output: 1,
            batch_norm: true,
        };
        let mut net = DenseNet::init(&spec, 3).unwrap();
        let x = ndarray::Array2::from_shape_fn((5, 3), |(i, j)| (i + 2 * j) as f64 * 0.1);
        net.forward(x.view(), Mode::Train).unwrap();
        let back = decode_net(&encode_net(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let net = DenseNet::init(
            &NetSpec {
                input: 2,
                hidden: vec![],
                output: 1,
                batch_norm: false,
            },
            0,
        )
        .unwrap();
        let buf = encode_net(&net);
        assert!(decode_net(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(decode_net(&extra).is_err());
        let mut tag = buf.clone();
        tag[20] = 9;
        assert!(decode_net(&tag).is_err());
    }
}
