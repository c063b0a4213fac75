//! Binary formats: the TNSR tensor container, the weight archive, and a
//! minimal PGM writer for mask dumps.
//!
//! TNSR layout (little-endian):
//! - magic `"TSR1"`
//! - rank: u8 (1..=5)
//! - extents: rank x u32
//! - data: product(extents) x f32, row-major
//!
//! Weight archive layout: u32 entry count, then per entry a u32 name length,
//! the UTF-8 name, and one full TNSR record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, MAX_RANK};

const MAGIC: &[u8; 4] = b"TSR1";

/// Tracks the byte offset so malformed files error with a location.
struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> CountingReader<R> {
    fn new(inner: R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn read_exact_at(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            offset: at,
            msg: format!("{what}: {e}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_at(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }
}

pub fn write_tnsr<W: Write>(w: &mut W, t: &Tensor) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[t.rank() as u8])?;
    for &d in t.dims() {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tnsr<R: Read>(r: &mut R) -> Result<Tensor> {
    let mut cr = CountingReader::new(r);
    read_tnsr_inner(&mut cr)
}

fn read_tnsr_inner<R: Read>(cr: &mut CountingReader<R>) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    cr.read_exact_at(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"TSR1\""),
        });
    }
    let mut rank = [0u8; 1];
    cr.read_exact_at(&mut rank, "rank")?;
    let rank = rank[0] as usize;
    if rank == 0 || rank > MAX_RANK {
        return Err(Error::Format {
            offset: cr.offset - 1,
            msg: format!("rank {rank} outside 1..={MAX_RANK}"),
        });
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let d = cr.read_u32(&format!("extent {i}"))?;
        if d == 0 {
            return Err(Error::Format {
                offset: cr.offset - 4,
                msg: format!("extent {i} is zero"),
            });
        }
        dims.push(d as usize);
    }
    let numel: usize = dims.iter().product();
    let mut raw = vec![0u8; numel * 4];
    cr.read_exact_at(&mut raw, "f32 payload")?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(dims, data)
}

pub fn write_tnsr_file<P: AsRef<Path>>(path: P, t: &Tensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tnsr(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_tnsr_file<P: AsRef<Path>>(path: P) -> Result<Tensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tnsr(&mut r)
}

pub fn write_weights<W: Write>(w: &mut W, entries: &[(String, &Tensor)]) -> Result<()> {
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        write_tnsr(w, tensor)?;
    }
    Ok(())
}

pub fn read_weights<R: Read>(r: &mut R) -> Result<Vec<(String, Tensor)>> {
    let mut cr = CountingReader::new(r);
    let count = cr.read_u32("entry count")? as usize;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let name_len = cr.read_u32(&format!("entry {i} name length"))? as usize;
        let mut name = vec![0u8; name_len];
        cr.read_exact_at(&mut name, &format!("entry {i} name"))?;
        let name = String::from_utf8(name).map_err(|e| Error::Format {
            offset: cr.offset - name_len as u64,
            msg: format!("entry {i} name is not UTF-8: {e}"),
        })?;
        let tensor = read_tnsr_inner(&mut cr)?;
        out.push((name, tensor));
    }
    Ok(out)
}

pub fn write_weights_file<P: AsRef<Path>>(path: P, entries: &[(String, &Tensor)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_weights(&mut w, entries)?;
    w.flush()?;
    Ok(())
}

pub fn read_weights_file<P: AsRef<Path>>(path: P) -> Result<Vec<(String, Tensor)>> {
    let mut r = BufReader::new(File::open(path)?);
    read_weights(&mut r)
}

/// 8-bit binary PGM (P5). `pixels` is row-major, `width * height` long.
pub fn write_pgm<P: AsRef<Path>>(path: P, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Arg(format!(
            "pgm buffer {} does not match {width}x{height}",
            pixels.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    w.flush()?;
    Ok(())
}
