//! Model checkpoints: magic `CRFW`, version u16, net kind u8, declared input
//! H/W u32, layer descriptor list, then all f64 parameter arrays in layer
//! order, everything little-endian. Loading rejects any dimension mismatch.

use super::layers::{Activation, Conv2d, Deconv2d, LayerOp, SequentialNet};
use super::tensor::{NnError, Tensor4};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CRFW";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Which model a checkpoint carries; loading validates it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Simulator = 0,
    Unary = 1,
    Weights = 2,
}

impl NetKind {
    fn from_code(code: u8) -> Option<NetKind> {
        match code {
            0 => Some(NetKind::Simulator),
            1 => Some(NetKind::Unary),
            2 => Some(NetKind::Weights),
            _ => None,
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> NnError {
    let context = context.into();
    move |source| NnError::Io { context, source }
}

fn write_u32<W: Write>(out: &mut W, v: usize) -> std::io::Result<()> {
    out.write_all(&(v as u32).to_le_bytes())
}

fn layer_code(layer: &LayerOp) -> u8 {
    match layer {
        LayerOp::Conv(_) => 0,
        LayerOp::Deconv(_) => 1,
        LayerOp::Act(Activation::Relu) => 2,
        LayerOp::Act(Activation::Sigmoid) => 3,
        LayerOp::Act(Activation::Softplus) => 4,
        LayerOp::ChannelScale(_) => 5,
    }
}

pub fn save_checkpoint(
    path: &Path,
    kind: NetKind,
    input_size: (usize, usize),
    net: &SequentialNet,
) -> Result<(), NnError> {
    let file = std::fs::File::create(path)
        .map_err(io_err(format!("creating checkpoint {}", path.display())))?;
    let mut out = BufWriter::new(file);
    let write = |out: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&[kind as u8])?;
        write_u32(out, input_size.0)?;
        write_u32(out, input_size.1)?;
        write_u32(out, net.layers.len())?;
        for layer in &net.layers {
            out.write_all(&[layer_code(layer)])?;
            match layer {
                LayerOp::Conv(c) => {
                    for v in [c.in_ch, c.out_ch, c.kh, c.kw, c.stride, c.pad, 0] {
                        write_u32(out, v)?;
                    }
                }
                LayerOp::Deconv(d) => {
                    for v in [d.in_ch, d.out_ch, d.kh, d.kw, d.stride, d.pad, d.out_pad] {
                        write_u32(out, v)?;
                    }
                }
                LayerOp::Act(_) => {}
                LayerOp::ChannelScale(consts) => {
                    write_u32(out, consts.len())?;
                    for &c in consts {
                        out.write_all(&c.to_le_bytes())?;
                    }
                }
            }
        }
        for param in net.params() {
            for &v in &param.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()
    };
    write(&mut out).map_err(io_err(format!("writing checkpoint {}", path.display())))
}

pub fn load_checkpoint(
    path: &Path,
    expected_kind: NetKind,
) -> Result<(SequentialNet, (usize, usize)), NnError> {
    let file = std::fs::File::open(path)
        .map_err(io_err(format!("opening checkpoint {}", path.display())))?;
    let mut reader = BufReader::new(file);
    parse_checkpoint(&mut reader, expected_kind)
        .map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
}

fn parse_checkpoint<R: Read>(
    reader: &mut R,
    expected_kind: NetKind,
) -> Result<(SequentialNet, (usize, usize)), String> {
    let io = |e: std::io::Error| e.to_string();
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format!("bad magic {magic:?}"));
    }
    let mut b2 = [0u8; 2];
    reader.read_exact(&mut b2).map_err(io)?;
    let version = u16::from_le_bytes(b2);
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let mut b1 = [0u8; 1];
    reader.read_exact(&mut b1).map_err(io)?;
    let kind = NetKind::from_code(b1[0]).ok_or(format!("bad net kind {}", b1[0]))?;
    if kind != expected_kind {
        return Err(format!(
            "checkpoint holds net kind {kind:?}, expected {expected_kind:?}"
        ));
    }

    let read_u32 = |reader: &mut R| -> Result<usize, String> {
        let mut b = [0u8; 4];
        reader.read_exact(&mut b).map_err(|e| e.to_string())?;
        Ok(u32::from_le_bytes(b) as usize)
    };
    let input_h = read_u32(reader)?;
    let input_w = read_u32(reader)?;
    let layer_count = read_u32(reader)?;
    if layer_count > 1024 {
        return Err(format!("implausible layer count {layer_count}"));
    }

    // Descriptor pass: rebuild the stack with zeroed parameters.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    use rand::SeedableRng;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        reader.read_exact(&mut b1).map_err(io)?;
        let layer = match b1[0] {
            0 | 1 => {
                let mut f = [0usize; 7];
                for v in f.iter_mut() {
                    *v = read_u32(reader)?;
                }
                let (in_ch, out_ch, kh, kw, stride, pad, out_pad) =
                    (f[0], f[1], f[2], f[3], f[4], f[5], f[6]);
                if kh != kw || kh == 0 || stride == 0 || in_ch == 0 || out_ch == 0 {
                    return Err(format!("bad layer geometry {f:?}"));
                }
                if b1[0] == 0 {
                    let mut conv = Conv2d::new(in_ch, out_ch, kh, stride, pad, &mut rng);
                    conv.weight = Tensor4::zeros(out_ch, in_ch, kh, kw);
                    LayerOp::Conv(conv)
                } else {
                    if out_pad >= stride {
                        return Err(format!("bad output padding {out_pad}"));
                    }
                    let mut deconv =
                        Deconv2d::new(in_ch, out_ch, kh, stride, pad, out_pad, &mut rng);
                    deconv.weight = Tensor4::zeros(in_ch, out_ch, kh, kw);
                    LayerOp::Deconv(deconv)
                }
            }
            2 => LayerOp::Act(Activation::Relu),
            3 => LayerOp::Act(Activation::Sigmoid),
            4 => LayerOp::Act(Activation::Softplus),
            5 => {
                let count = read_u32(reader)?;
                if count > 4096 {
                    return Err(format!("implausible scale width {count}"));
                }
                let mut consts = Vec::with_capacity(count);
                let mut b8 = [0u8; 8];
                for _ in 0..count {
                    reader.read_exact(&mut b8).map_err(io)?;
                    consts.push(f64::from_le_bytes(b8));
                }
                LayerOp::ChannelScale(consts)
            }
            other => return Err(format!("unknown layer code {other}")),
        };
        layers.push(layer);
    }

    let mut net = SequentialNet::new(layers);
    for param in net.params_mut() {
        let mut b8 = [0u8; 8];
        for v in param.values.iter_mut() {
            reader.read_exact(&mut b8).map_err(io)?;
            *v = f64::from_le_bytes(b8);
        }
    }
    let mut probe = [0u8; 1];
    match reader.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err("trailing bytes after parameters".into()),
        Err(e) => return Err(e.to_string()),
    }
    Ok((net, (input_h, input_w)))
}

/// Descriptor-level equality, used by model wrappers to reject checkpoints
/// for a different architecture.
pub fn same_structure(a: &SequentialNet, b: &SequentialNet) -> bool {
    if a.layers.len() != b.layers.len() {
        return false;
    }
    a.layers.iter().zip(&b.layers).all(|(x, y)| match (x, y) {
        (LayerOp::Conv(p), LayerOp::Conv(q)) => {
            (p.in_ch, p.out_ch, p.kh, p.stride, p.pad) == (q.in_ch, q.out_ch, q.kh, q.stride, q.pad)
        }
        (LayerOp::Deconv(p), LayerOp::Deconv(q)) => {
            (p.in_ch, p.out_ch, p.kh, p.stride, p.pad, p.out_pad)
                == (q.in_ch, q.out_ch, q.kh, q.stride, q.pad, q.out_pad)
        }
        (LayerOp::Act(p), LayerOp::Act(q)) => p == q,
        (LayerOp::ChannelScale(p), LayerOp::ChannelScale(q)) => p == q,
        _ => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_net() -> SequentialNet {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        SequentialNet::new(vec![
            LayerOp::ChannelScale(vec![1.0, 0.5]),
            LayerOp::Conv(Conv2d::new(2, 4, 3, 2, 1, &mut rng)),
            LayerOp::Act(Activation::Relu),
            LayerOp::Deconv(Deconv2d::new(4, 1, 3, 2, 1, 1, &mut rng)),
            LayerOp::Act(Activation::Sigmoid),
        ])
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.crfw");
        let net = small_net();
        save_checkpoint(&path, NetKind::Simulator, (32, 32), &net).unwrap();
        let (loaded, size) = load_checkpoint(&path, NetKind::Simulator).unwrap();
        assert_eq!(size, (32, 32));
        assert!(same_structure(&net, &loaded));
        assert_eq!(net.snapshot(), loaded.snapshot());

        // Re-saving the loaded net reproduces the bytes exactly.
        let path2 = dir.path().join("net2.crfw");
        save_checkpoint(&path2, NetKind::Simulator, (32, 32), &loaded).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.crfw");
        save_checkpoint(&path, NetKind::Unary, (16, 16), &small_net()).unwrap();
        assert!(load_checkpoint(&path, NetKind::Simulator).is_err());
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.crfw");
        save_checkpoint(&path, NetKind::Weights, (16, 16), &small_net()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_checkpoint(&path, NetKind::Weights).is_err());
    }
}
