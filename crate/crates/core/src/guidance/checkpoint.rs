//! Binary parameter files.
//!
//! Layout (all little-endian): the magic `NEXTCKPT`, a `u32` format
//! version, the hyper-parameters `d, d_e, d_a, p, k_w, k_h, T_vi, k_a, q,
//! robot` as `u32`, `sigma_policy` as `f32`, then every tensor as a `u32`
//! rank, `u32` dimensions and `f32` entries. Tensors follow the layout order
//! (spatial layers, configuration layers, W0, W1, W2, W3). The planning
//! cell kind is implied by the number of tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{CellKind, GuidanceParams, Hyper, Layout};
use super::tensor::Tensor;
use crate::env::RobotKind;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"NEXTCKPT";
const MAX_DIM: u32 = 1 << 24;

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(params: &GuidanceParams<f32>, mut w: W) -> Result<()> {
    let h = params.hyper();
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for v in [h.d, h.d_e, h.d_a, h.p, h.k_w, h.k_h, h.t_vi, h.k_a, h.q] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&h.robot.code().to_le_bytes())?;
    w.write_all(&(h.sigma_policy as f32).to_le_bytes())?;
    for t in params.tensors() {
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &s in &t.shape {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for &v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| bad("truncated checkpoint"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    Ok(f32::from_bits(read_u32(r)?))
}

/// Reads a tensor header, or `None` at a clean end of file.
fn read_rank<R: Read>(r: &mut R) -> Result<Option<u32>> {
    let mut b = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        let n = r.read(&mut b[got..])?;
        if n == 0 {
            return if got == 0 {
                Ok(None)
            } else {
                Err(bad("truncated tensor header"))
            };
        }
        got += n;
    }
    Ok(Some(u32::from_le_bytes(b)))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<GuidanceParams<f32>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("file too short for a checkpoint"))?;
    if &magic != MAGIC {
        return Err(bad("bad magic; not a checkpoint file"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let mut f = [0usize; 9];
    for v in f.iter_mut() {
        *v = read_u32(&mut r)? as usize;
    }
    let code = read_u32(&mut r)?;
    let robot = RobotKind::from_code(code).ok_or_else(|| bad(format!("unknown robot code {code}")))?;
    let sigma = read_f32(&mut r)?;

    let mut tensors = Vec::new();
    while let Some(rank) = read_rank(&mut r)? {
        if rank == 0 || rank > 5 {
            return Err(bad(format!("tensor {} has rank {rank}", tensors.len())));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            let s = read_u32(&mut r)?;
            if s > MAX_DIM {
                return Err(bad("tensor dimension out of range"));
            }
            shape.push(s as usize);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(|_| bad("truncated tensor data"))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push(Tensor::from_vec(&shape, data));
    }

    let mut hyper = Hyper {
        d: f[0],
        d_e: f[1],
        d_a: f[2],
        p: f[3],
        k_w: f[4],
        k_h: f[5],
        t_vi: f[6],
        k_a: f[7],
        q: f[8],
        robot,
        sigma_policy: sigma as f64,
        cell: CellKind::MinPool,
    };
    for cell in [CellKind::MinPool, CellKind::Lstm] {
        hyper.cell = cell;
        if Layout::new(&hyper).shapes.len() == tensors.len() {
            return GuidanceParams::from_tensors(hyper, tensors).map_err(|e| bad(e.to_string()));
        }
    }
    Err(bad(format!("{} tensors match no planning cell layout", tensors.len())))
}

pub fn save_checkpoint(params: &GuidanceParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GuidanceParams<f32>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
