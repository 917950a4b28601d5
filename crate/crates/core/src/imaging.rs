//! Pixel buffers and the resampling kernels shared by preprocessing,
//! compliance scoring and the synthetic generator.
//!
//! Every resampler here is bilinear with half-pixel centers and edge
//! replication, so a 1:1 resize is the identity and a 2:1 resize is an
//! exact 2×2 box average.

/// Interleaved RGB image with values in `[0,1]`, row-major `H×W×3`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height * 3, "buffer does not match {width}x{height}x3");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&value);
        }
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, value: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&value);
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// integer positions), replicating edges outside the image.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f32; 3] {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p00 = self.pixel(x0, y0);
        let p10 = self.pixel(x1, y0);
        let p01 = self.pixel(x0, y1);
        let p11 = self.pixel(x1, y1);
        let mut out = [0f32; 3];
        for c in 0..3 {
            let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
            let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
            out[c] = (top * (1.0 - fy) + bottom * fy) as f32;
        }
        out
    }

    /// Crop `(x, y, w, h)`; the rectangle must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> RgbImage {
        assert!(x + w <= self.width && y + h <= self.height, "crop outside image");
        RgbImage::from_fn(w, h, |cx, cy| self.pixel(x + cx, y + cy))
    }

    /// Bilinear resize with half-pixel centers.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> RgbImage {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        RgbImage::from_fn(width, height, |x, y| {
            self.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
        })
    }

    pub fn map_values(&mut self, mut f: impl FnMut(f32) -> f32) {
        for v in &mut self.data {
            *v = f(*v);
        }
    }

    /// Rec. 601 luma plane.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| luma(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect()
    }

    /// Separable Gaussian blur with kernel radius `ceil(3σ)`. σ ≤ 0 is the identity.
    pub fn gaussian_blur(&self, sigma: f64) -> RgbImage {
        if sigma <= 0.0 || self.is_empty() {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let radius = (kernel.len() / 2) as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        let mut horizontal = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0f64; 3];
                for (k, weight) in kernel.iter().enumerate() {
                    let sx = (x + k as isize - radius).clamp(0, w - 1);
                    let i = ((y * w + sx) * 3) as usize;
                    for c in 0..3 {
                        acc[c] += weight * self.data[i + c] as f64;
                    }
                }
                let o = ((y * w + x) * 3) as usize;
                for c in 0..3 {
                    horizontal[o + c] = acc[c] as f32;
                }
            }
        }
        let mut out = vec![0f32; self.data.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0f64; 3];
                for (k, weight) in kernel.iter().enumerate() {
                    let sy = (y + k as isize - radius).clamp(0, h - 1);
                    let i = ((sy * w + x) * 3) as usize;
                    for c in 0..3 {
                        acc[c] += weight * horizontal[i + c] as f64;
                    }
                }
                let o = ((y * w + x) * 3) as usize;
                for c in 0..3 {
                    out[o + c] = acc[c] as f32;
                }
            }
        }
        RgbImage::new(self.width, self.height, out)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    /// PNG encoding of the 8-bit quantized image.
    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_rgb8()
            .write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out.into_inner()
    }
}

#[inline]
pub fn luma(r: f64, g: f64, b: f64) -> f64 {
    0.299 * r + 0.587 * g + 0.114 * b
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= sum);
    kernel
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut n = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for v in values {
        n += 1;
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    if n == 0 {
        return (0.0, 0.0);
    }
    (mean, (m2 / n as f64).max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(k.len(), 11);
        for i in 0..k.len() / 2 {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = RgbImage::filled(9, 7, [0.25, 0.5, 0.75]);
        let blurred = img.gaussian_blur(2.0);
        for (a, b) in img.data().iter().zip(blurred.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_identity_and_half() {
        let img = RgbImage::from_fn(6, 4, |x, y| [x as f32 / 6.0, y as f32 / 4.0, 0.5]);
        assert_eq!(img.resize_bilinear(6, 4), img);
        let half = img.resize_bilinear(3, 2);
        let p = half.pixel(1, 0);
        assert!((p[0] - (2.0 + 3.0) / 2.0 / 6.0).abs() < 1e-6);
        assert!((p[1] - 0.5 / 4.0).abs() < 1e-6);
    }

    #[test]
    fn mean_std_of_known_values() {
        let (m, s) = mean_std([1.0, 3.0].into_iter());
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(std::iter::empty()), (0.0, 0.0));
    }
}
