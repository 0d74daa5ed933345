//! Model files: a `cscmodel-v1 <dtype>` line, the spec as one JSON line, then
//! every parameter array as raw little-endian values in spec order.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Network, NetworkSpec, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MODEL_MAGIC: &str = "cscmodel-v1";

pub fn write_network<T: Scalar>(net: &Network<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(net.param_count() * T::BYTES + 1024);
    out.extend_from_slice(format!("{MODEL_MAGIC} {}\n", T::DTYPE).as_bytes());
    out.extend_from_slice(serde_json::to_string(net.spec())?.as_bytes());
    out.push(b'\n');
    for v in net.params().values() {
        v.write_le(&mut out);
    }
    Ok(out)
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let end = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..end], &bytes[end + 1..]))
}

fn decode<S: Scalar, T: Scalar>(spec: NetworkSpec, raw: &[u8]) -> Result<Network<T>> {
    let mut params = Parameters::<S>::zeros(&spec)?;
    let need = params.count() * S::BYTES;
    if raw.len() != need {
        return Err(Error::Parse {
            line: 3,
            msg: format!("expected {need} parameter bytes, found {}", raw.len()),
        });
    }
    let mut chunks = raw.chunks_exact(S::BYTES);
    for p in &mut params.tensors {
        for v in &mut p.data {
            *v = S::read_le(chunks.next().expect("length checked"));
        }
    }
    Network::with_params(spec, params.cast())
}

/// Parses a model file. Parameters stored in another precision are
/// converted.
pub fn read_network<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let parse = |line, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    let (header, rest) = split_line(bytes).ok_or_else(|| parse(1, "missing header"))?;
    let header = std::str::from_utf8(header).map_err(|_| parse(1, "header is not UTF-8"))?;
    let mut fields = header.split_whitespace();
    if fields.next() != Some(MODEL_MAGIC) {
        return Err(parse(1, "not a cscmodel-v1 file"));
    }
    let dtype = fields.next().ok_or_else(|| parse(1, "missing dtype"))?;
    let (json, raw) = split_line(rest).ok_or_else(|| parse(2, "missing spec line"))?;
    let spec: NetworkSpec = serde_json::from_slice(json)?;
    match dtype {
        "f32" => decode::<f32, T>(spec, raw),
        "f64" => decode::<f64, T>(spec, raw),
        other => Err(parse(1, &format!("unknown dtype '{other}'"))),
    }
}

pub fn save_network<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_network(net)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_network<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_network(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Preset;

    #[test]
    fn roundtrip_is_bit_exact() {
        let net = Network::<f32>::new(Preset::Ap10.spec(), 11).unwrap();
        let bytes = write_network(&net).unwrap();
        let back: Network<f32> = read_network(&bytes).unwrap();
        assert_eq!(back.spec(), net.spec());
        assert_eq!(back.params(), net.params());
        let wide: Network<f64> = read_network(&bytes).unwrap();
        assert_eq!(wide.params().cast::<f32>(), *net.params());
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let net = Network::<f64>::new(Preset::Ap2.spec(), 1).unwrap();
        let bytes = write_network(&net).unwrap();
        assert!(read_network::<f64>(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'x';
        assert!(read_network::<f64>(&bad).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        let net = Network::<f32>::new(Preset::Ap1.spec(), 2).unwrap();
        save_network(&net, &path).unwrap();
        assert_eq!(load_network::<f32>(&path).unwrap().params(), net.params());
        assert!(load_network::<f32>(dir.path().join("missing")).is_err());
    }
}
