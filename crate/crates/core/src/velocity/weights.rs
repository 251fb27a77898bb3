//! Little-endian weight files.
//!
//! ```text
//! "FKLW" | u32 version | u32 n_modes | u32 out_dim | u32 activation
//!        | u32 n_layers | (n_layers + 1) x u32 layer dims
//!        | feature scales (f64 each)
//!        | per layer: weight (out x in, row-major) then bias, f64
//!        | the same blocks again for the EMA weights
//! ```
//!
//! Activation codes: 0 = GELU (tanh approximation), 1 = tanh.

use std::io::{Read, Write};

use crate::error::{FklError, Result};
use crate::spectral::feature_len;

use super::network::{Activation, Mlp};
use super::train::TrainedNetwork;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FKLW";
pub const WEIGHTS_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| FklError::Format(format!("{what} {v} does not fit in u32")))
}

pub fn write_weights<W: Write>(network: &TrainedNetwork, mut w: W) -> Result<()> {
    let dims = network.net().dims();
    w.write_all(WEIGHTS_MAGIC)?;
    put_u32(&mut w, WEIGHTS_VERSION)?;
    put_u32(&mut w, to_u32(network.n_modes(), "n_modes")?)?;
    put_u32(&mut w, to_u32(network.out_dim(), "out_dim")?)?;
    put_u32(&mut w, network.net().activation().code())?;
    put_u32(&mut w, to_u32(dims.len() - 1, "layer count")?)?;
    for &d in dims {
        put_u32(&mut w, to_u32(d, "layer width")?)?;
    }
    put_f64s(&mut w, network.scales())?;
    put_f64s(&mut w, network.net().params())?;
    put_f64s(&mut w, network.ema().params())?;
    w.flush()?;
    Ok(())
}

pub fn read_weights<R: Read>(mut r: R) -> Result<TrainedNetwork> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(FklError::Format("not a weights file (bad magic)".into()));
    }
    let version = get_u32(&mut r)?;
    if version != WEIGHTS_VERSION {
        return Err(FklError::Format(format!("unsupported weights version {version}")));
    }
    let n_modes = get_u32(&mut r)? as usize;
    let out_dim = get_u32(&mut r)? as usize;
    let activation = Activation::from_code(get_u32(&mut r)?)
        .ok_or_else(|| FklError::Format("unknown activation code".into()))?;
    let n_layers = get_u32(&mut r)? as usize;
    if n_modes == 0 || out_dim == 0 || n_layers == 0 || n_layers > 64 {
        return Err(FklError::Format("implausible header".into()));
    }
    let dims = (0..=n_layers).map(|_| get_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n_params = Mlp::count_params(&dims);
    let scales = get_f64s(&mut r, feature_len(n_modes, out_dim))?;
    let net = Mlp::from_params(dims.clone(), activation, get_f64s(&mut r, n_params)?)
        .ok_or_else(|| FklError::Format("invalid layer dims".into()))?;
    let ema = Mlp::from_params(dims, activation, get_f64s(&mut r, n_params)?)
        .ok_or_else(|| FklError::Format("invalid layer dims".into()))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(FklError::Format(format!("{} trailing bytes", rest.len())));
    }
    TrainedNetwork::new(n_modes, out_dim, scales, net, ema).map_err(|e| FklError::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_is_exact() {
        let net = TrainedNetwork::initialize(4, 2, (1..=14).map(f64::from).collect(), 8, 2, Activation::Tanh, &mut seeded(3)).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FKLW");
        let back = read_weights(buf.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = TrainedNetwork::initialize(2, 1, vec![1.0; 3], 4, 1, Activation::Gelu, &mut seeded(0)).unwrap();
        let mut buf = Vec::new();
        write_weights(&net, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_weights(bad.as_slice()).is_err());
        assert!(read_weights(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_weights(long.as_slice()).is_err());
        let mut v2 = buf;
        v2[4] = 2;
        assert!(read_weights(v2.as_slice()).is_err());
    }
}
