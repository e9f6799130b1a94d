//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"FCLP"                     magic
//! u32                         version (1)
//! u32 u32 u32                 encoder, projector, predictor layer counts
//! u32                         tensor count
//! (u32 rows, u32 cols) * n    shape table, flatten order
//! f64 * total                 values, flatten order
//! ```

use std::io::{Read, Write};

use super::{Layer, Mlp, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FCLP";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    for mlp in [&params.encoder, &params.projector, &params.predictor] {
        w.write_all(&(mlp.layers.len() as u32).to_le_bytes())?;
    }
    let tensors = params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in &tensors {
        w.write_all(&(t.rows() as u32).to_le_bytes())?;
        w.write_all(&(t.cols() as u32).to_le_bytes())?;
    }
    for t in &tensors {
        for v in t.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let counts = [read_u32(&mut r)? as usize, read_u32(&mut r)? as usize, read_u32(&mut r)? as usize];
    let n_tensors = read_u32(&mut r)? as usize;
    let expected = 2 * counts.iter().sum::<usize>() + 3;
    if n_tensors != expected {
        return Err(Error::Format(format!(
            "shape table has {n_tensors} tensors, layer counts imply {expected}"
        )));
    }
    let mut shapes = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        shapes.push((read_u32(&mut r)? as usize, read_u32(&mut r)? as usize));
    }
    let mut tensors = Vec::with_capacity(n_tensors);
    for &(rows, cols) in &shapes {
        tensors.push(read_matrix(&mut r, rows, cols)?);
    }
    let mut it = tensors.into_iter();
    let mut take_mlp = |n: usize| -> Result<Mlp> {
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let weight = it.next().expect("counted");
            let bias = it.next().expect("counted");
            if bias.rows() != 1 || bias.cols() != weight.cols() {
                return Err(Error::Format("bias shape does not match weight".into()));
            }
            layers.push(Layer { weight, bias });
        }
        Ok(Mlp::new(layers))
    };
    let encoder = take_mlp(counts[0])?;
    let projector = take_mlp(counts[1])?;
    let predictor = take_mlp(counts[2])?;
    let uv_weights = it.next().expect("counted");
    let weight = it.next().expect("counted");
    let bias = it.next().expect("counted");
    Ok(ModelParams {
        encoder,
        projector,
        predictor,
        uv_weights,
        label_head: Layer { weight, bias },
    })
}
