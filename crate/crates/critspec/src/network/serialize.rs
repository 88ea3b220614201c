//! Flat binary network container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! magic   b"CRSP"
//! version u32 (currently 1)
//! L       u32                     hidden layer count
//! widths  (L+1) x u32             N^0..N^L
//! n_g     u32                     output width
//! act     u8   (0 = tanh, 1 = identity)
//! head    u8   (0 = gaussian_identity, 1 = softmax)
//! data    f64 matrices, row-major, in layer order:
//!         W^1, b^1, ..., W^L, b^L, W^g, b^g
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{Activation, HeadKind, NetworkState};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"CRSP";
const VERSION: u32 = 1;

pub fn save_network(net: &NetworkState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let depth = net.depth() as u32;
    w.write_all(&depth.to_le_bytes())?;
    for &width in net.widths() {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    w.write_all(&(net.output_width() as u32).to_le_bytes())?;
    w.write_all(&[match net.activation {
        Activation::Tanh => 0u8,
        Activation::Identity => 1u8,
    }])?;
    w.write_all(&[match net.head {
        HeadKind::GaussianIdentity => 0u8,
        HeadKind::Softmax => 1u8,
    }])?;
    for l in 0..net.depth() {
        write_matrix_row_major(&mut w, &net.weights[l])?;
        write_vector(&mut w, &net.biases[l])?;
    }
    write_matrix_row_major(&mut w, &net.readout_weight)?;
    write_vector(&mut w, &net.readout_bias)?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<NetworkState> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MAGIC
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let depth = read_u32(&mut r)? as usize;
    if depth == 0 || depth > 100_000 {
        return Err(Error::Format(format!("implausible depth {depth}")));
    }
    let mut widths = Vec::with_capacity(depth + 1);
    for _ in 0..=depth {
        widths.push(read_u32(&mut r)? as usize);
    }
    let output_width = read_u32(&mut r)? as usize;
    let mut flags = [0u8; 2];
    r.read_exact(&mut flags)?;
    let activation = match flags[0] {
        0 => Activation::Tanh,
        1 => Activation::Identity,
        other => return Err(Error::Format(format!("unknown activation tag {other}"))),
    };
    let head = match flags[1] {
        0 => HeadKind::GaussianIdentity,
        1 => HeadKind::Softmax,
        other => return Err(Error::Format(format!("unknown head tag {other}"))),
    };
    let mut weights = Vec::with_capacity(depth);
    let mut biases = Vec::with_capacity(depth);
    for l in 0..depth {
        weights.push(read_matrix_row_major(&mut r, widths[l + 1], widths[l])?);
        biases.push(read_vector(&mut r, widths[l + 1])?);
    }
    let readout_weight = read_matrix_row_major(&mut r, output_width, widths[depth])?;
    let readout_bias = read_vector(&mut r, output_width)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after network data".into()));
    }
    NetworkState::new(
        widths,
        weights,
        biases,
        readout_weight,
        readout_bias,
        activation,
        head,
    )
}

fn write_matrix_row_major(w: &mut impl Write, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_vector(w: &mut impl Write, v: &DVector<f64>) -> Result<()> {
    for x in v.iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_matrix_row_major(r: &mut impl Read, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = read_f64(r)?;
        }
    }
    Ok(m)
}

fn read_vector(r: &mut impl Read, len: usize) -> Result<DVector<f64>> {
    let mut v = DVector::zeros(len);
    for i in 0..len {
        v[i] = read_f64(r)?;
    }
    Ok(v)
}
