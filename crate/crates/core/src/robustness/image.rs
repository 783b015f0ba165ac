use std::io::Cursor;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{ImageFormat, RgbImage};

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Image("image dimensions must be positive".into()));
        }
        if pixels.len() != width as usize * height as usize * 3 {
            return Err(Error::Image(format!(
                "{} bytes do not match a {width}x{height} RGB image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn black(width: u32, height: u32) -> Result<Self> {
        Self::new(width, height, vec![0; width as usize * height as usize * 3])
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub(crate) fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    pub fn put(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.pixels[o..o + 3].copy_from_slice(&rgb);
    }

    /// Surrounds the image with a `border`-pixel black frame.
    pub fn pad(&self, border: u32) -> Image {
        let mut out = Image::black(self.width + 2 * border, self.height + 2 * border)
            .expect("positive dimensions");
        out.paste(self, border, border);
        out
    }

    /// Copies `src` with its top-left corner at `(x, y)`, clipping at the edges.
    pub fn paste(&mut self, src: &Image, x: u32, y: u32) {
        for sy in 0..src.height {
            let ty = y + sy;
            if ty >= self.height {
                break;
            }
            let w = src.width.min(self.width.saturating_sub(x)) as usize;
            if w == 0 {
                break;
            }
            let s = src.offset(0, sy);
            let t = self.offset(x, ty);
            self.pixels[t..t + 3 * w].copy_from_slice(&src.pixels[s..s + 3 * w]);
        }
    }

    pub fn crop(&self, x: u32, y: u32, width: u32, height: u32) -> Result<Image> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::Image("crop outside image".into()));
        }
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for row in y..y + height {
            let s = self.offset(x, row);
            pixels.extend_from_slice(&self.pixels[s..s + 3 * width as usize]);
        }
        Image::new(width, height, pixels)
    }

    /// Bilinear (triangle filter) resize; a no-op when the size is unchanged.
    pub fn resize(&self, width: u32, height: u32) -> Image {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let resized = imageops::resize(
            &self.to_rgb(),
            width.max(1),
            height.max(1),
            FilterType::Triangle,
        );
        Image::from_rgb(resized)
    }

    pub fn resize_longer_side(&self, target: u32) -> Image {
        let longer = self.width.max(self.height) as f64;
        let s = target as f64 / longer;
        self.resize(
            ((self.width as f64 * s).round() as u32).max(1),
            ((self.height as f64 * s).round() as u32).max(1),
        )
    }

    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.put(self.width - 1 - x, y, self.get(x, y));
            }
        }
        out
    }

    fn to_rgb(&self) -> RgbImage {
        RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("valid buffer")
    }

    fn from_rgb(img: RgbImage) -> Image {
        let (w, h) = img.dimensions();
        Image::new(w, h, img.into_raw()).expect("valid buffer")
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Image> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(Image::from_rgb(img.to_rgb8()))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::Image(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        Self::decode_png(&std::fs::read(path)?)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, &self.encode_png()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_and_crop() {
        let img = Image::from_fn(3, 2, |x, y| [x as u8, y as u8, 7]).unwrap();
        let p = img.pad(20);
        assert_eq!((p.width(), p.height()), (43, 42));
        assert_eq!(p.get(0, 0), [0, 0, 0]);
        assert_eq!(p.crop(20, 20, 3, 2).unwrap(), img);
    }

    #[test]
    fn png_roundtrip() {
        let img = Image::from_fn(5, 4, |x, y| [(x * 40) as u8, (y * 60) as u8, 200]).unwrap();
        assert_eq!(Image::decode_png(&img.encode_png().unwrap()).unwrap(), img);
        assert!(Image::decode_png(&[]).is_err());
    }
}
