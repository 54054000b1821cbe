//! Versioned binary model container.
//!
//! Layout (little endian): magic `M3DC`, u32 version, u32-length config echo
//! (UTF-8), model spec as u32 fields, u32 layer count followed by one record
//! per layer, u64 parameter count, then the parameters as f64.

use std::io::{Read, Write};

use crate::model::{Layer, Model, ModelSpec, Stage};
use crate::ToyError;

pub const MAGIC: &[u8; 4] = b"M3DC";
pub const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: usize) -> Result<(), ToyError> {
    let v = u32::try_from(v).map_err(|_| ToyError::Checkpoint(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize, ToyError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn layer_record(branch: &str, l: &Layer) -> Vec<usize> {
    let b = match branch {
        "trunk" => 0,
        "cls" => 1,
        _ => 2,
    };
    match l {
        Layer::Conv(c) => vec![b, 0, c.cin, c.cout, c.k, c.stride, c.pad, c.w_off, c.b_off],
        Layer::Norm(g) => vec![b, 1, g.c, g.groups, g.g_off, g.b_off, 0, 0, 0],
        Layer::Relu => vec![b, 2, 0, 0, 0, 0, 0, 0, 0],
    }
}

pub fn save(w: &mut impl Write, model: &Model, config_echo: &str) -> Result<(), ToyError> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION as usize)?;
    put_u32(w, config_echo.len())?;
    w.write_all(config_echo.as_bytes())?;
    let s = &model.spec;
    put_u32(w, s.in_channels)?;
    put_u32(w, s.head_channels)?;
    put_u32(w, s.num_classes)?;
    put_u32(w, s.stages.len())?;
    for st in &s.stages {
        put_u32(w, st.channels)?;
        put_u32(w, st.stride)?;
    }
    let table = model.layer_table();
    put_u32(w, table.len())?;
    for (branch, l) in &table {
        for v in layer_record(branch, l) {
            put_u32(w, v)?;
        }
    }
    w.write_all(&(model.params.len() as u64).to_le_bytes())?;
    for p in &model.params {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

/// Returns the model and the stored config echo.
pub fn load(r: &mut impl Read) -> Result<(Model, String), ToyError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ToyError::Checkpoint("bad magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(ToyError::Checkpoint(format!("unsupported version {version}")));
    }
    let n = get_u32(r)?;
    let mut echo = vec![0u8; n];
    r.read_exact(&mut echo)?;
    let echo = String::from_utf8(echo).map_err(|_| ToyError::Checkpoint("config echo is not UTF-8".into()))?;
    let (in_channels, head_channels, num_classes) = (get_u32(r)?, get_u32(r)?, get_u32(r)?);
    let n_stages = get_u32(r)?;
    let stages = (0..n_stages)
        .map(|_| Ok(Stage { channels: get_u32(r)?, stride: get_u32(r)? }))
        .collect::<Result<Vec<_>, ToyError>>()?;
    let mut model = Model::zeros(ModelSpec { in_channels, stages, head_channels, num_classes })?;
    let table = model.layer_table();
    if get_u32(r)? != table.len() {
        return Err(ToyError::Checkpoint("layer count does not match the spec".into()));
    }
    for (branch, l) in &table {
        for want in layer_record(branch, l) {
            if get_u32(r)? != want {
                return Err(ToyError::Checkpoint(format!("layer table mismatch at {branch} {}", l.name())));
            }
        }
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    if u64::from_le_bytes(b8) as usize != model.params.len() {
        return Err(ToyError::Checkpoint("parameter count does not match the layer table".into()));
    }
    for p in model.params.iter_mut() {
        r.read_exact(&mut b8)?;
        *p = f64::from_le_bytes(b8);
    }
    Ok((model, echo))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Model::init(ModelSpec::default(), 5).unwrap();
        let mut buf = Vec::new();
        save(&mut buf, &m, "seed=5\n").unwrap();
        assert_eq!(&buf[..4], b"M3DC");
        let (back, echo) = load(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(echo, "seed=5\n");
    }

    #[test]
    fn rejects_corruption() {
        let m = Model::init(ModelSpec::default(), 5).unwrap();
        let mut buf = Vec::new();
        save(&mut buf, &m, "").unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(load(&mut bad.as_slice()), Err(ToyError::Checkpoint(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(load(&mut &truncated[..]), Err(ToyError::Io(_))));
    }
}
