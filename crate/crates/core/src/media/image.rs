/// Row-major interleaved RGB, 8 bits per channel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), height * width * 3, "raw buffer does not match shape");
        Self { height, width, data }
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        Self::from_fn(height, width, |_, _, c| rgb[c])
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                for c in 0..3 {
                    data.push(f(y, x, c));
                }
            }
        }
        Self { height, width, data }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * 3 + c]
    }
}

/// Source taps for one output coordinate under half-pixel-center mapping.
fn axis_taps(out_len: usize, in_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_frame(img: &RgbImage, h: usize, w: usize) -> RgbImage {
    assert!(h >= 1 && w >= 1, "target size must be positive");
    if img.height == h && img.width == w {
        return img.clone();
    }
    let rows = axis_taps(h, img.height);
    let cols = axis_taps(w, img.width);
    let mut data = Vec::with_capacity(h * w * 3);
    for &(y0, y1, fy) in &rows {
        for &(x0, x1, fx) in &cols {
            for c in 0..3 {
                let top = img.get(y0, x0, c) as f64 * (1.0 - fx) + img.get(y0, x1, c) as f64 * fx;
                let bot = img.get(y1, x0, c) as f64 * (1.0 - fx) + img.get(y1, x1, c) as f64 * fx;
                let v = top * (1.0 - fy) + bot * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbImage { height: h, width: w, data }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Per-pixel reference: map the output pixel center back to source space and
    /// blend the four surrounding source pixels.
    fn naive_bilinear(img: &RgbImage, h: usize, w: usize) -> RgbImage {
        RgbImage::from_fn(h, w, |oy, ox, c| {
            let sy = (oy as f64 + 0.5) * img.height as f64 / h as f64 - 0.5;
            let sx = (ox as f64 + 0.5) * img.width as f64 / w as f64 - 0.5;
            let sy = sy.max(0.0).min((img.height - 1) as f64);
            let sx = sx.max(0.0).min((img.width - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(img.height - 1), (x0 + 1).min(img.width - 1));
            let (dy, dx) = (sy - y0 as f64, sx - x0 as f64);
            let p = |y: usize, x: usize| img.get(y, x, c) as f64;
            let v = p(y0, x0) * (1.0 - dy) * (1.0 - dx)
                + p(y0, x1) * (1.0 - dy) * dx
                + p(y1, x0) * dy * (1.0 - dx)
                + p(y1, x1) * dy * dx;
            v.round().clamp(0.0, 255.0) as u8
        })
    }

    #[test]
    fn identity_resize() {
        let img = RgbImage::from_fn(5, 7, |y, x, c| (y * 31 + x * 7 + c) as u8);
        assert_eq!(resize_frame(&img, 5, 7), img);
    }

    #[test]
    fn constant_stays_constant() {
        let img = RgbImage::filled(3, 4, [10, 200, 99]);
        for (h, w) in [(1, 1), (9, 2), (64, 64)] {
            let out = resize_frame(&img, h, w);
            assert!(out.data.chunks(3).all(|p| p == [10, 200, 99]));
        }
    }

    #[test]
    fn checkerboard_matches_reference() {
        let img = RgbImage::from_fn(2, 2, |y, x, _| if (y + x) % 2 == 0 { 0 } else { 255 });
        let out = resize_frame(&img, 64, 64);
        assert_eq!(out, naive_bilinear(&img, 64, 64));
        // corners keep their source value
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(0, 63, 0), 255);
    }

    #[test]
    fn downscale_matches_reference() {
        let img = RgbImage::from_fn(13, 17, |y, x, c| ((y * 19 + x * 11 + c * 5) % 256) as u8);
        assert_eq!(resize_frame(&img, 4, 6), naive_bilinear(&img, 4, 6));
    }
}
