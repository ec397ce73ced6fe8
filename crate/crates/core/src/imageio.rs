//! PNG / binary PPM reading and writing.
//!
//! Images with fewer than 8 bits per sample are stored unscaled in 8-bit
//! containers. Their bit depth lives in a sidecar text file next to the
//! image (`<file>.bits`), and loading enforces the declared range.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};

use crate::bitdepth::{max_value, ImageBuffer};
use crate::error::{Error, Result};

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bits");
    PathBuf::from(s)
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "ppm" | "pgm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::ImageFormat {
            path: path.into(),
            msg: format!("unsupported extension `{ext}` (png, ppm, pgm)"),
        }),
    }
}

/// Reads the declared bit depth, if a sidecar exists.
pub fn read_sidecar(path: &Path) -> Result<Option<u8>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let bits = text
        .trim()
        .parse::<u8>()
        .ok()
        .filter(|b| (1..=8).contains(b))
        .ok_or_else(|| Error::ImageFormat {
            path: side.clone(),
            msg: format!("invalid bit-depth tag `{}`", text.trim()),
        })?;
    Ok(Some(bits))
}

/// Loads an image. Its bit depth is taken from the sidecar when present,
/// otherwise 8.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bits = read_sidecar(path)?.unwrap_or(8);
    read_image_with_bits(path, bits)
}

/// Loads an image and checks every sample against `bits`.
pub fn read_image_with_bits(path: impl AsRef<Path>, bits: u8) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| Error::ImageFormat {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, pixels) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(_) => (3, img.to_rgb8().into_raw()),
        other => {
            return Err(Error::ImageFormat {
                path: path.into(),
                msg: format!("unsupported sample layout {:?}; only 8-bit images are handled", other.color()),
            })
        }
    };
    let max = max_value(bits);
    if let Some(&v) = pixels.iter().find(|&&v| v as u32 > max) {
        return Err(Error::PixelRange {
            value: v as u32,
            bits,
            context: path.display().to_string(),
        });
    }
    ImageBuffer::new(w, h, channels, bits, pixels)
}

/// Writes an image; a sidecar is written for depths below 8 and removed
/// otherwise.
pub fn write_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, img.pixels().to_vec()).expect("size matches"))
    } else {
        DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, img.pixels().to_vec()).expect("size matches"))
    };
    let written = if format == ImageFormat::Pnm {
        write_pnm(path, &dynamic)
    } else {
        dynamic.save_with_format(path, format)
    };
    written.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::ImageFormat {
            path: path.into(),
            msg: other.to_string(),
        },
    })?;
    let side = sidecar_path(path);
    if img.bit_depth() < 8 {
        fs::write(&side, format!("{}\n", img.bit_depth())).map_err(|e| Error::io(&side, e))?;
    } else if side.exists() {
        fs::remove_file(&side).map_err(|e| Error::io(&side, e))?;
    }
    Ok(())
}

/// Binary P6 / P5 output; the encoder would otherwise choose PAM.
fn write_pnm(path: &Path, img: &DynamicImage) -> image::ImageResult<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    let file = fs::File::create(path)?;
    let subtype = match img {
        DynamicImage::ImageLuma8(_) => PnmSubtype::Graymap(SampleEncoding::Binary),
        _ => PnmSubtype::Pixmap(SampleEncoding::Binary),
    };
    img.write_with_encoder(PnmEncoder::new(std::io::BufWriter::new(file)).with_subtype(subtype))
}

/// Image files (png/ppm/pgm/pnm) directly inside `dir`, sorted by name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && format_for(&p).is_ok() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(channels: usize) -> ImageBuffer {
        ImageBuffer::from_fn(16, 4, channels, 8, |x, y, c| (x * 16 + y + c) as u8).unwrap()
    }

    #[test]
    fn png_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (name, ch) in [("a.png", 3), ("b.png", 1), ("c.ppm", 3), ("d.pgm", 1)] {
            let p = dir.path().join(name);
            let img = ramp(ch);
            write_image(&p, &img).unwrap();
            assert_eq!(read_image(&p).unwrap(), img, "{name}");
        }
        let raw = fs::read(dir.path().join("c.ppm")).unwrap();
        assert_eq!(&raw[..2], b"P6");
        let raw = fs::read(dir.path().join("d.pgm")).unwrap();
        assert_eq!(&raw[..2], b"P5");
    }

    #[test]
    fn low_depth_uses_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.png");
        let img = crate::bitdepth::quantize(&ramp(3), 4).unwrap();
        write_image(&p, &img).unwrap();
        assert_eq!(fs::read_to_string(sidecar_path(&p)).unwrap().trim(), "4");
        assert_eq!(read_image(&p).unwrap(), img);
        // overwriting with an 8-bit image drops the tag
        write_image(&p, &ramp(3)).unwrap();
        assert!(!sidecar_path(&p).exists());
    }

    #[test]
    fn sidecar_range_is_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        write_image(&p, &ramp(1)).unwrap();
        fs::write(sidecar_path(&p), "4").unwrap();
        assert!(matches!(read_image(&p), Err(Error::PixelRange { bits: 4, .. })));
    }

    #[test]
    fn unknown_extension_rejected() {
        assert!(matches!(read_image("x.bmp"), Err(Error::ImageFormat { .. })));
    }
}
