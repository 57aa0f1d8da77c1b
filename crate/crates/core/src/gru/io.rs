use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::network::{GruNetwork, GruShape};
use crate::error::{Error, Result};

pub const WEIGHT_MAGIC: &[u8; 4] = b"TAPW";
pub const WEIGHT_VERSION: u32 = 1;

/// Header, then every parameter block in storage order as little-endian f64.
pub fn write_weights<W: Write>(net: &GruNetwork, mut out: W) -> std::io::Result<()> {
    let s = net.shape();
    out.write_all(WEIGHT_MAGIC)?;
    out.write_all(&WEIGHT_VERSION.to_le_bytes())?;
    for v in [s.layers, s.input_dim, s.hidden, s.window, s.horizon] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    for p in net.params() {
        out.write_all(&p.to_le_bytes())?;
    }
    out.flush()
}

fn read_exact<R: Read>(input: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated weight file: missing {what}")),
        _ => Error::Format(format!("reading {what}: {e}")),
    })
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights<R: Read>(mut input: R) -> Result<GruNetwork> {
    let mut magic = [0u8; 4];
    read_exact(&mut input, &mut magic, "magic bytes")?;
    if &magic != WEIGHT_MAGIC {
        return Err(Error::Format(format!("bad magic bytes {magic:?}, expected \"TAPW\"")));
    }
    let version = read_u32(&mut input, "version")?;
    if version != WEIGHT_VERSION {
        return Err(Error::Format(format!(
            "unsupported weight file version {version}, expected {WEIGHT_VERSION}"
        )));
    }
    let mut dims = [0usize; 5];
    for (d, name) in dims.iter_mut().zip(["layers", "input_dim", "hidden", "window", "horizon"]) {
        *d = read_u32(&mut input, name)? as usize;
    }
    let shape = GruShape::new(dims[0], dims[1], dims[2], dims[3], dims[4]);
    shape.validate().map_err(|e| Error::Format(e.to_string()))?;
    let n = shape.param_count();
    let mut bytes = vec![0u8; n * 8];
    read_exact(&mut input, &mut bytes, "weights")?;
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut rest = [0u8; 1];
    if input.read(&mut rest).map_err(|e| Error::Format(e.to_string()))? != 0 {
        return Err(Error::Format("trailing bytes after weights".into()));
    }
    GruNetwork::from_params(shape, params)
}

pub fn save_weights(net: &GruNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_weights(net, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<GruNetwork> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(BufReader::new(file))
}

/// Loads a weight file and checks it against the shape the caller needs.
pub fn load_weights_expecting(path: impl AsRef<Path>, expected: &GruShape) -> Result<GruNetwork> {
    let net = load_weights(path)?;
    let found = net.shape();
    let fields = [
        ("layers", expected.layers, found.layers),
        ("input_dim", expected.input_dim, found.input_dim),
        ("hidden", expected.hidden, found.hidden),
        ("window", expected.window, found.window),
        ("horizon", expected.horizon, found.horizon),
    ];
    for (field, expected, found) in fields {
        if expected != found {
            return Err(Error::ShapeMismatch { field, expected, found });
        }
    }
    Ok(net)
}
