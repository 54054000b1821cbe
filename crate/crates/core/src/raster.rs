//! Minimal float RGB raster used by the synthetic renderer and augmentation.

/// Row-major `height x width x 3` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut r = Self::new(width, height);
        for px in r.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        r
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn flipped_horizontally(&self) -> Raster {
        let mut out = Raster::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    /// Resamples through the affine map `u' = a u + tx`, `v' = b v + ty`
    /// (pixel-center convention) with bilinear interpolation; samples falling
    /// outside the source are filled with `fill`.
    pub fn warped(&self, a: f64, b: f64, tx: f64, ty: f64, fill: [f64; 3]) -> Raster {
        let mut out = Raster::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let su = ((x as f64 + 0.5) - tx) / a - 0.5;
                let sv = ((y as f64 + 0.5) - ty) / b - 0.5;
                out.set(x, y, self.bilinear(su, sv).unwrap_or(fill));
            }
        }
        out
    }

    fn bilinear(&self, u: f64, v: f64) -> Option<[f64; 3]> {
        if u < -0.5 || v < -0.5 || u > self.width as f64 - 0.5 || v > self.height as f64 - 0.5 {
            return None;
        }
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fu, fv) = (u - x0 as f64, v - y0 as f64);
        let (p00, p10, p01, p11) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (1.0 - fv) * ((1.0 - fu) * p00[c] + fu * p10[c]) + fv * ((1.0 - fu) * p01[c] + fu * p11[c]);
        }
        Some(out)
    }

    /// Channel-major copy (`3 x height x width`), the layout the network consumes.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out[i] = px[0];
            out[n + i] = px[1];
            out[2 * n + i] = px[2];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_is_involution() {
        let mut r = Raster::new(5, 3);
        for (i, v) in r.data.iter_mut().enumerate() {
            *v = i as f64 / 45.0;
        }
        assert_eq!(r.flipped_horizontally().flipped_horizontally(), r);
        assert_eq!(r.flipped_horizontally().get(4, 1), r.get(0, 1));
    }

    #[test]
    fn identity_warp() {
        let mut r = Raster::new(4, 4);
        for (i, v) in r.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 7.0;
        }
        assert_eq!(r.warped(1.0, 1.0, 0.0, 0.0, [0.0; 3]), r);
    }
}
