//! Checkpoint format: version header, then sorted (name, shape, float32 LE
//! data) sections. Save -> load -> save reproduces identical bytes.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::diff::{Bindings, Tensor};

use super::params::ParamStore;
use super::NetsError;

const MAGIC: &[u8; 4] = b"ECKP";
const VERSION: u16 = 1;

pub fn save_checkpoint(store: &ParamStore<f32>, path: &Path) -> Result<(), NetsError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, tensor) in store.bindings().iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for d in tensor.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore<f32>, NetsError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(NetsError::Checkpoint("bad magic".into()));
    }
    if read_u16(&mut r)? != VERSION {
        return Err(NetsError::Checkpoint("unsupported version".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut tensors = Bindings::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1 << 16 {
            return Err(NetsError::Checkpoint("tensor name too long".into()));
        }
        let mut name = vec![0u8; name_len];
        read_exact(&mut r, &mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| NetsError::Checkpoint("non-utf8 tensor name".into()))?;
        let ndim = read_u32(&mut r)? as usize;
        if ndim > 8 {
            return Err(NetsError::Checkpoint(format!("tensor rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 4];
        for _ in 0..n {
            read_exact(&mut r, &mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        tensors.insert(
            name,
            Tensor::new(shape, data).map_err(|e| NetsError::Checkpoint(e.to_string()))?,
        );
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(NetsError::Checkpoint("trailing bytes".into()));
    }
    Ok(ParamStore::new(tensors))
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), NetsError> {
    r.read_exact(buf)
        .map_err(|_| NetsError::Checkpoint("truncated checkpoint".into()))
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, NetsError> {
    let mut buf = [0u8; 2];
    read_exact(r, &mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NetsError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::GraphBuilder;

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut gb = GraphBuilder::<f32>::new();
        let x = gb.input("x", &[6]).unwrap();
        let w = gb.param("m.w", &[4, 6]).unwrap();
        let b = gb.param("m.b", &[4]).unwrap();
        let y = gb.affine(x, w, b).unwrap();
        let loss = gb.sum(y);
        let g = gb.finish(&[("loss", loss)]);
        let store = ParamStore::init_for(&g, 9);

        let dir = std::env::temp_dir().join(format!("eckp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("a.eckp");
        let p2 = dir.join("b.eckp");
        save_checkpoint(&store, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        loaded.validate_against(&g).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn load_rejects_mismatched_shapes() {
        let mut gb = GraphBuilder::<f32>::new();
        let x = gb.input("x", &[6]).unwrap();
        let w = gb.param("m.w", &[4, 6]).unwrap();
        let b = gb.param("m.b", &[4]).unwrap();
        let y = gb.affine(x, w, b).unwrap();
        let loss = gb.sum(y);
        let g = gb.finish(&[("loss", loss)]);
        let store = ParamStore::init_for(&g, 9);

        let dir = std::env::temp_dir().join(format!("eckp2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.eckp");
        save_checkpoint(&store, &p).unwrap();
        let loaded = load_checkpoint(&p).unwrap();

        // Same tensors, different graph expectation.
        let mut gb = GraphBuilder::<f32>::new();
        let x = gb.input("x", &[5]).unwrap();
        let w = gb.param("m.w", &[4, 5]).unwrap();
        let b = gb.param("m.b", &[4]).unwrap();
        let y = gb.affine(x, w, b).unwrap();
        let loss = gb.sum(y);
        let other = gb.finish(&[("loss", loss)]);
        assert!(loaded.validate_against(&other).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
