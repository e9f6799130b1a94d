//! Dataset binary format and the partition manifest.
//!
//! Dataset layout, little-endian: `b"FCDS"`, version `u32`, `N u64`, `D u64`,
//! `C u64`, `N·D` features as `f64` (row-major), `N` labels as `u32`.

use std::io::{Read, Write};

use super::{ClientDataset, Dataset};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const DATASET_MAGIC: &[u8; 4] = b"FCDS";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&(ds.dim() as u64).to_le_bytes())?;
    w.write_all(&(ds.num_classes as u64).to_le_bytes())?;
    for v in ds.x.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &y in &ds.y {
        w.write_all(&(y as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<Dataset> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format(format!("bad dataset magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let d = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let c = u64::from_le_bytes(read_array(&mut r)?) as usize;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        data.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        y.push(u32::from_le_bytes(read_array(&mut r)?) as usize);
    }
    Dataset::new(Matrix::from_vec(n, d, data)?, y, c).map_err(|e| Error::Format(e.to_string()))
}

/// One line per sample: `client_id,index,labelled_flag,bin_id`, where
/// `index` points into the partitioned dataset and `bin_id` is `-1` for
/// samples that were not rotated.
pub fn write_manifest<W: Write>(clients: &[ClientDataset], mut w: W) -> Result<()> {
    writeln!(w, "client_id,index,labelled_flag,bin_id")?;
    for c in clients {
        for (pos, &idx) in c.indices.iter().enumerate() {
            let bin = c.sample_bins[pos].map_or(-1, |b| b as i64);
            writeln!(w, "{},{},{},{}", c.client_id, idx, u8::from(c.labelled[pos]), bin)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::numerics::Rng;

    #[test]
    fn dataset_round_trip_and_layout() {
        let ds = generate_synthetic(3, 4, 5, 1.5, &mut Rng::new(2)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 24 + 15 * 4 * 8 + 15 * 4);
        assert_eq!(&buf[..4], b"FCDS");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 15);
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let ds = generate_synthetic(2, 2, 1, 1.0, &mut Rng::new(0)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let last = buf.len() - 4;
        buf[last..].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(read_dataset(buf.as_slice()), Err(Error::Format(_))));
    }
}
