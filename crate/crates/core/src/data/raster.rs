use std::path::Path;

use crate::data::HeadBox;
use crate::error::{Error, Result};

/// Side length of face crops and encoder inputs.
pub const FACE_SIZE: usize = 224;

/// RGB image with interleaved channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "raster {width}x{height} needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Raster {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self
            .data
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        Raster {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    /// RGBA bytes, row-major; convenient for canvas blitting.
    pub fn to_rgba8(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.width * self.height * 4);
        for px in self.data.chunks_exact(3) {
            for &v in px {
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
            out.push(255);
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Ok(Self::from_rgb8(&img))
    }

    /// Bilinear resample of a continuous pixel-space window to `out_w × out_h`.
    pub fn resample(&self, x0: f64, y0: f64, x1: f64, y1: f64, out_w: usize, out_h: usize) -> Raster {
        let sx = (x1 - x0) / out_w as f64;
        let sy = (y1 - y0) / out_h as f64;
        let mut data = Vec::with_capacity(out_w * out_h * 3);
        for j in 0..out_h {
            let v = (y0 + (j as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let r0 = v.floor() as usize;
            let r1 = (r0 + 1).min(self.height - 1);
            let fy = (v - r0 as f64) as f32;
            for i in 0..out_w {
                let u = (x0 + (i as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let c0 = u.floor() as usize;
                let c1 = (c0 + 1).min(self.width - 1);
                let fx = (u - c0 as f64) as f32;
                for ch in 0..3 {
                    let p00 = self.data[(r0 * self.width + c0) * 3 + ch];
                    let p01 = self.data[(r0 * self.width + c1) * 3 + ch];
                    let p10 = self.data[(r1 * self.width + c0) * 3 + ch];
                    let p11 = self.data[(r1 * self.width + c1) * 3 + ch];
                    // Difference form: exact for constant fields and zero fractions.
                    let top = p00 + (p01 - p00) * fx;
                    let bottom = p10 + (p11 - p10) * fx;
                    let val = top + (bottom - top) * fy;
                    data.push(val);
                }
            }
        }
        Raster {
            width: out_w,
            height: out_h,
            data,
        }
    }

    /// Average-pools non-overlapping `factor × factor` blocks into a planar
    /// (channel-major) `f64` buffer of shape `3 × (h/factor) × (w/factor)`.
    pub fn area_pool_planar(&self, factor: usize) -> Result<Vec<f64>> {
        if factor == 0 || self.width % factor != 0 || self.height % factor != 0 {
            return Err(Error::Shape(format!(
                "cannot pool {}x{} by {factor}",
                self.width, self.height
            )));
        }
        let (ow, oh) = (self.width / factor, self.height / factor);
        let mut out = vec![0.0; 3 * ow * oh];
        let norm = 1.0 / (factor * factor) as f64;
        for y in 0..self.height {
            let oy = y / factor;
            for x in 0..self.width {
                let ox = x / factor;
                let i = (y * self.width + x) * 3;
                for ch in 0..3 {
                    out[(ch * oh + oy) * ow + ox] += self.data[i + ch] as f64 * norm;
                }
            }
        }
        Ok(out)
    }
}

/// Crops a head box and resamples it to 224×224 with bilinear interpolation.
pub fn crop_face(image: &Raster, head: &HeadBox) -> Result<Raster> {
    head.validate()?;
    let (w, h) = (image.width as f64, image.height as f64);
    let (x0, x1) = (head.x_min * w, head.x_max * w);
    let (y0, y1) = (head.y_min * h, head.y_max * h);
    if x1 - x0 < 2.0 || y1 - y0 < 2.0 {
        return Err(Error::invalid(
            "head box",
            format!(
                "degenerate crop of {:.2}x{:.2} px in a {}x{} image",
                x1 - x0,
                y1 - y0,
                image.width,
                image.height
            ),
        ));
    }
    Ok(image.resample(x0, y0, x1, y1, FACE_SIZE, FACE_SIZE))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(w: usize, h: usize) -> Raster {
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                data.push(x as f32 / w as f32);
                data.push(y as f32 / h as f32);
                data.push(((x * 7 + y * 13) % 17) as f32 / 16.0);
            }
        }
        Raster::new(w, h, data).unwrap()
    }

    fn full_frame() -> HeadBox {
        HeadBox::new(0.0, 0.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn full_frame_crop_of_224_is_identity() {
        let img = gradient_image(224, 224);
        let out = crop_face(&img, &full_frame()).unwrap();
        assert_eq!(out, img);
        // And idempotent.
        assert_eq!(crop_face(&out, &full_frame()).unwrap(), img);
    }

    #[test]
    fn full_frame_crop_resizes_whole_image() {
        let img = gradient_image(100, 60);
        let out = crop_face(&img, &full_frame()).unwrap();
        assert_eq!((out.width(), out.height()), (224, 224));
        // Corners map to corners.
        assert!((out.pixel(0, 0)[0] - img.pixel(0, 0)[0]).abs() < 1e-6);
        assert!((out.pixel(223, 223)[1] - img.pixel(99, 59)[1]).abs() < 1e-6);
    }

    #[test]
    fn constant_region_stays_constant() {
        let img = Raster::filled(90, 70, [0.25, 0.5, 0.75]);
        let b = HeadBox::new(0.1, 0.2, 0.4, 0.6).unwrap();
        let out = crop_face(&img, &b).unwrap();
        assert!(out.data().chunks(3).all(|p| p == [0.25, 0.5, 0.75]));
    }

    #[test]
    fn degenerate_crop_is_rejected() {
        let img = Raster::filled(100, 100, [0.0; 3]);
        let b = HeadBox::new(0.5, 0.5, 0.51, 0.9).unwrap();
        assert!(crop_face(&img, &b).is_err());
    }

    #[test]
    fn area_pool_averages_blocks() {
        let img = gradient_image(16, 16);
        let pooled = img.area_pool_planar(8).unwrap();
        assert_eq!(pooled.len(), 3 * 2 * 2);
        let mut expect = 0.0;
        for y in 0..8 {
            for x in 8..16 {
                expect += img.pixel(x, y)[0] as f64;
            }
        }
        assert!((pooled[1] - expect / 64.0).abs() < 1e-9);
    }
}
