//! Little-endian binary containers for target sets and network output maps.
//!
//! ```text
//! targets (magic "M3DT"):
//!   magic[4] version:u32 classes:u32 rows:u32 cols:u32 stride:u32
//!   heatmap: f64 x classes*rows*cols   (class-major, row-major planes)
//!   n_entries:u32, then per entry:
//!     class:u32 row:u32 col:u32 valid:u8
//!     tuple: f64 x 8   (dz dxc dyc dh dw dl sin cos)
//!     box:   f64 x 7   (h w l x y z yaw)
//!     keypoint: f64 x 2 (u v)
//!   n_dropped:u32, dropped: u32 x n_dropped
//!
//! output maps (magic "M3DP"):
//!   magic[4] version:u32 classes:u32 rows:u32 cols:u32 stride:u32
//!   heatmap: f64 x classes*rows*cols
//!   regression: f64 x 8*rows*cols     (channel-major, row-major planes)
//! ```

use std::io::{Read, Write};

use super::{Cell, CodecError, Heatmap, RegressionMap, RegressionTuple, TargetEntry, TargetSet};
use crate::geometry::{Box3D, Dimensions};

pub const TARGETS_MAGIC: [u8; 4] = *b"M3DT";
pub const OUTPUTS_MAGIC: [u8; 4] = *b"M3DP";
pub const VERSION: u32 = 1;

/// Heatmap plus activated regression map, as consumed by the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMaps {
    pub heatmap: Heatmap,
    pub regression: RegressionMap,
    pub stride: usize,
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<(), CodecError> {
    let v = u32::try_from(v).map_err(|_| CodecError::Container(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> Result<(), CodecError> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize, CodecError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> Result<f64, CodecError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64s<const N: usize>(r: &mut impl Read) -> Result<[f64; N], CodecError> {
    let mut out = [0.0; N];
    for o in out.iter_mut() {
        *o = get_f64(r)?;
    }
    Ok(out)
}

fn get_vec(r: &mut impl Read, n: usize) -> Result<Vec<f64>, CodecError> {
    (0..n).map(|_| get_f64(r)).collect()
}

fn header(r: &mut impl Read, magic: [u8; 4]) -> Result<[usize; 4], CodecError> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    if m != magic {
        return Err(CodecError::Container(format!("bad magic {m:?}")));
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(CodecError::Container(format!("unsupported version {version}")));
    }
    Ok([get_u32(r)?, get_u32(r)?, get_u32(r)?, get_u32(r)?])
}

pub fn write_targets(w: &mut impl Write, t: &TargetSet) -> Result<(), CodecError> {
    let hm = &t.heatmap;
    w.write_all(&TARGETS_MAGIC)?;
    put_u32(w, VERSION as usize)?;
    for v in [hm.classes, hm.rows, hm.cols, t.stride] {
        put_u32(w, v)?;
    }
    put_f64s(w, &hm.data)?;
    put_u32(w, t.entries.len())?;
    for e in &t.entries {
        put_u32(w, e.cell.class)?;
        put_u32(w, e.cell.row)?;
        put_u32(w, e.cell.col)?;
        w.write_all(&[e.regression_valid as u8])?;
        put_f64s(w, &e.tuple.to_array())?;
        let b = &e.gt;
        put_f64s(
            w,
            &[b.dims.h, b.dims.w, b.dims.l, b.location[0], b.location[1], b.location[2], b.yaw],
        )?;
        put_f64s(w, &e.keypoint)?;
    }
    put_u32(w, t.dropped.len())?;
    for &d in &t.dropped {
        put_u32(w, d)?;
    }
    Ok(())
}

pub fn read_targets(r: &mut impl Read) -> Result<TargetSet, CodecError> {
    let [classes, rows, cols, stride] = header(r, TARGETS_MAGIC)?;
    let heatmap = Heatmap {
        classes,
        rows,
        cols,
        data: get_vec(r, classes * rows * cols)?,
    };
    let n = get_u32(r)?;
    let mut entries = Vec::with_capacity(n);
    for _ in 0..n {
        let cell = Cell {
            class: get_u32(r)?,
            row: get_u32(r)?,
            col: get_u32(r)?,
        };
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let tuple = RegressionTuple::from_array(get_f64s::<8>(r)?);
        let b = get_f64s::<7>(r)?;
        let keypoint = get_f64s::<2>(r)?;
        entries.push(TargetEntry {
            cell,
            tuple,
            gt: Box3D {
                class_id: cell.class,
                dims: Dimensions::new(b[0], b[1], b[2]),
                location: [b[3], b[4], b[5]],
                yaw: b[6],
            },
            keypoint,
            regression_valid: flag[0] != 0,
        });
    }
    let nd = get_u32(r)?;
    let dropped = (0..nd).map(|_| get_u32(r)).collect::<Result<_, _>>()?;
    Ok(TargetSet {
        heatmap,
        entries,
        dropped,
        stride,
    })
}

pub fn write_outputs(w: &mut impl Write, o: &OutputMaps) -> Result<(), CodecError> {
    let hm = &o.heatmap;
    if hm.rows != o.regression.rows || hm.cols != o.regression.cols {
        return Err(CodecError::ShapeMismatch("heatmap and regression grids differ".into()));
    }
    w.write_all(&OUTPUTS_MAGIC)?;
    put_u32(w, VERSION as usize)?;
    for v in [hm.classes, hm.rows, hm.cols, o.stride] {
        put_u32(w, v)?;
    }
    put_f64s(w, &hm.data)?;
    put_f64s(w, &o.regression.data)?;
    Ok(())
}

pub fn read_outputs(r: &mut impl Read) -> Result<OutputMaps, CodecError> {
    let [classes, rows, cols, stride] = header(r, OUTPUTS_MAGIC)?;
    let heatmap = Heatmap {
        classes,
        rows,
        cols,
        data: get_vec(r, classes * rows * cols)?,
    };
    let regression = RegressionMap {
        rows,
        cols,
        data: get_vec(r, RegressionTuple::LEN * rows * cols)?,
    };
    Ok(OutputMaps {
        heatmap,
        regression,
        stride,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_targets, ideal_outputs, ClassPrior, CodecConfig};
    use crate::geometry::CameraProjection;

    #[test]
    fn targets_round_trip() {
        let proj = CameraProjection::from_intrinsics(100.0, 100.0, 48.0, 48.0).unwrap();
        let cfg = CodecConfig::new(96, 96, vec![ClassPrior::KITTI_CAR]);
        let objs = [
            Box3D::new(0, Dimensions::new(1.5, 1.6, 3.9), [1.0, 1.6, 12.0], 0.4).unwrap(),
            Box3D::new(0, Dimensions::new(1.5, 1.6, 3.9), [90.0, 1.6, 12.0], 0.4).unwrap(),
        ];
        let mut t = encode_targets(&objs, &proj, &cfg).unwrap();
        t.entries[0].regression_valid = false;
        let mut buf = Vec::new();
        write_targets(&mut buf, &t).unwrap();
        assert_eq!(&buf[..4], b"M3DT");
        assert_eq!(read_targets(&mut buf.as_slice()).unwrap(), t);

        let (heatmap, regression) = ideal_outputs(&t);
        let o = OutputMaps { heatmap, regression, stride: 4 };
        let mut buf = Vec::new();
        write_outputs(&mut buf, &o).unwrap();
        assert_eq!(read_outputs(&mut buf.as_slice()).unwrap(), o);
        assert!(read_targets(&mut buf.as_slice()).is_err());
    }
}
