//! Integer images tagged with a bit depth, LSB truncation, and the two
//! classic de-quantizers.
//!
//! * zero padding (ZP): `x << (B - b)`, the dropped LSBs stay zero;
//! * ideal gain (MIG): `round(x * (2^B - 1) / (2^b - 1))`, which equals bit
//!   replication `(x << b) | x` when `B = 2b`.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Interleaved row-major integer image whose samples fit in `bit_depth` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    bit_depth: u8,
    pixels: Vec<u8>,
}

pub fn max_value(bits: u8) -> u32 {
    (1u32 << bits) - 1
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, bit_depth: u8, pixels: Vec<u8>) -> Result<Self> {
        if !(1..=8).contains(&bit_depth) {
            return Err(Error::InvalidArgument(format!("bit depth {bit_depth} outside 1..=8")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("{channels} channels, expected 1 or 3")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "{} samples for a {width}x{height}x{channels} image",
                pixels.len()
            )));
        }
        let max = max_value(bit_depth);
        if let Some(&v) = pixels.iter().find(|&&v| v as u32 > max) {
            return Err(Error::PixelRange {
                value: v as u32,
                bits: bit_depth,
                context: "image buffer".into(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            bit_depth,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        bit_depth: u8,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut px = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    px.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, bit_depth, px)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    fn map(&self, bit_depth: u8, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            channels: self.channels,
            bit_depth,
            pixels: self.pixels.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Copies a `w x h` window with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut px = Vec::with_capacity(w * h * c);
        for y in y0..y0 + h {
            let s = (y * self.width + x0) * c;
            px.extend_from_slice(&self.pixels[s..s + w * c]);
        }
        Self::new(w, h, c, self.bit_depth, px)
    }

    /// Replicates a single channel into three.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        Self {
            width: self.width,
            height: self.height,
            channels: 3,
            bit_depth: self.bit_depth,
            pixels: self.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }
}

/// Keeps the `target_bits` most significant bits of an 8-bit image.
pub fn quantize(img: &ImageBuffer, target_bits: u8) -> Result<ImageBuffer> {
    if img.bit_depth != 8 {
        return Err(Error::InvalidArgument(format!(
            "quantize expects an 8-bit source, got {}-bit",
            img.bit_depth
        )));
    }
    if !(1..=7).contains(&target_bits) {
        return Err(Error::InvalidArgument(format!("target bits {target_bits} outside 1..=7")));
    }
    let shift = 8 - target_bits;
    Ok(img.map(target_bits, |v| v >> shift))
}

fn check_expand(img: &ImageBuffer, target_bits: u8) -> Result<()> {
    if target_bits > 8 {
        return Err(Error::InvalidArgument(format!("target bits {target_bits} exceed 8")));
    }
    if target_bits <= img.bit_depth {
        return Err(Error::InvalidArgument(format!(
            "target bits {target_bits} must exceed source bits {}",
            img.bit_depth
        )));
    }
    Ok(())
}

/// Zero-padding de-quantization.
pub fn dequantize_zp(img: &ImageBuffer, target_bits: u8) -> Result<ImageBuffer> {
    check_expand(img, target_bits)?;
    let shift = target_bits - img.bit_depth;
    Ok(img.map(target_bits, |v| v << shift))
}

/// Ideal-gain de-quantization with round-half-up.
pub fn dequantize_mig(img: &ImageBuffer, target_bits: u8) -> Result<ImageBuffer> {
    check_expand(img, target_bits)?;
    let src_max = max_value(img.bit_depth);
    let dst_max = max_value(target_bits);
    Ok(img.map(target_bits, |v| ((2 * v as u32 * dst_max + src_max) / (2 * src_max)) as u8))
}

/// `[1,C,H,W]` tensor with samples scaled to `[0,1]`.
pub fn to_unit<T: Scalar>(img: &ImageBuffer) -> Tensor<T> {
    let (w, h, c) = (img.width, img.height, img.channels);
    let scale = 1.0 / max_value(img.bit_depth) as f64;
    let mut data = vec![T::zero(); c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[(ch * h + y) * w + x] = T::lit(img.get(x, y, ch) as f64 * scale);
            }
        }
    }
    Tensor::new(vec![1, c, h, w], data).expect("shape matches")
}

/// Inverse of [`to_unit`]: clamps to `[0,1]` and rounds to `bit_depth` levels.
/// Only the first batch item is converted.
pub fn from_unit<T: Scalar>(t: &Tensor<T>, bit_depth: u8) -> Result<ImageBuffer> {
    let [_, c, h, w] = match *t.shape() {
        [n, c, h, w] if n >= 1 => [n, c, h, w],
        _ => return Err(Error::shape("from_unit", "rank", format!("expected [N,C,H,W], got {:?}", t.shape()))),
    };
    if !(1..=8).contains(&bit_depth) {
        return Err(Error::InvalidArgument(format!("bit depth {bit_depth} outside 1..=8")));
    }
    let max = max_value(bit_depth) as f64;
    let d = t.data();
    ImageBuffer::from_fn(w, h, c, bit_depth, |x, y, ch| {
        let v = d[(ch * h + y) * w + x].as_f64().clamp(0.0, 1.0);
        (v * max).round() as u8
    })
}
