//! Raster I/O: PNG and TIFF micrographs, 16-bit label maps, indexed masks.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};
use ndarray::Array3;

use crate::dataio::micrograph::Micrograph;
use crate::error::{Error, Result};

fn rescale16(v: u16) -> u8 {
    ((u32::from(v) * 255 + 32767) / 65535) as u8
}

/// Loads a PNG or TIFF file as a micrograph whose id is the file stem.
///
/// 16-bit sources are linearly rescaled to 8 bits; alpha channels are dropped.
pub fn load_image(path: &Path) -> Result<Micrograph> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "image".to_string());
    load_image_as(path, id)
}

pub fn load_image_as(path: &Path, id: impl Into<String>) -> Result<Micrograph> {
    Micrograph::new(id, decode(path)?)
}

/// Like [`load_image`] but without the minimum-size check, for particle
/// patches that are resized before encoding.
pub fn load_patch(path: &Path) -> Result<Micrograph> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "patch".to_string());
    Micrograph::new_unchecked_size(id, decode(path)?)
}

fn decode(path: &Path) -> Result<Array3<u8>> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Tiff) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {other:?}",
                path.display()
            )))
        }
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unrecognized",
                path.display()
            )))
        }
    }
    let img = reader.decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(b) => Array3::from_shape_vec((h, w, 1), b.into_raw()),
        DynamicImage::ImageLumaA8(b) => {
            let raw: Vec<u8> = b.into_raw().chunks_exact(2).map(|p| p[0]).collect();
            Array3::from_shape_vec((h, w, 1), raw)
        }
        DynamicImage::ImageRgb8(b) => Array3::from_shape_vec((h, w, 3), b.into_raw()),
        DynamicImage::ImageRgba8(b) => {
            let raw: Vec<u8> = b
                .into_raw()
                .chunks_exact(4)
                .flat_map(|p| [p[0], p[1], p[2]])
                .collect();
            Array3::from_shape_vec((h, w, 3), raw)
        }
        DynamicImage::ImageLuma16(b) => {
            let raw = b.into_raw().into_iter().map(rescale16).collect();
            Array3::from_shape_vec((h, w, 1), raw)
        }
        DynamicImage::ImageLumaA16(b) => {
            let raw = b.into_raw().chunks_exact(2).map(|p| rescale16(p[0])).collect();
            Array3::from_shape_vec((h, w, 1), raw)
        }
        DynamicImage::ImageRgb16(b) => {
            let raw = b.into_raw().into_iter().map(rescale16).collect();
            Array3::from_shape_vec((h, w, 3), raw)
        }
        DynamicImage::ImageRgba16(b) => {
            let raw = b
                .into_raw()
                .chunks_exact(4)
                .flat_map(|p| [rescale16(p[0]), rescale16(p[1]), rescale16(p[2])])
                .collect();
            Array3::from_shape_vec((h, w, 3), raw)
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: pixel type {:?}",
                path.display(),
                other.color()
            )))
        }
    }
    .map_err(|e| Error::invalid(e.to_string()))
}

/// Writes an 8-bit grayscale or RGB PNG.
pub fn save_png(m: &Micrograph, path: &Path) -> Result<()> {
    let (h, w) = (m.height() as u32, m.width() as u32);
    let color = if m.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(path, m.as_bytes(), w, h, color, ImageFormat::Png)?;
    Ok(())
}

/// Writes a 16-bit grayscale PNG of integer labels (values must fit in u16).
pub fn save_label_png(labels: &[u32], height: usize, width: usize, path: &Path) -> Result<()> {
    let mut raw = Vec::with_capacity(labels.len());
    for &l in labels {
        let v = u16::try_from(l)
            .map_err(|_| Error::invalid(format!("label {l} does not fit a 16-bit PNG")))?;
        raw.push(v);
    }
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(width as u32, height as u32, raw)
            .ok_or_else(|| Error::invalid("label buffer size mismatch"))?;
    buf.save_with_format(path, ImageFormat::Png)?;
    Ok(())
}

/// Reads a 16-bit (or 8-bit) grayscale label PNG as `(height, width, labels)`.
pub fn load_label_png(path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels = match img {
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: label maps must be grayscale, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    Ok((h, w, labels))
}

/// Fixed palette for indexed masks: class 0 black, then well-separated hues.
fn palette_color(i: usize) -> [u8; 3] {
    const BASE: [[u8; 3]; 8] = [
        [0, 0, 0],
        [230, 25, 75],
        [60, 180, 75],
        [0, 130, 200],
        [255, 225, 25],
        [145, 30, 180],
        [70, 240, 240],
        [245, 130, 48],
    ];
    if i < BASE.len() {
        BASE[i]
    } else {
        let v = (i * 37 % 256) as u8;
        [v, 255 - v, (i * 91 % 256) as u8]
    }
}

/// Writes an 8-bit indexed PNG whose palette index is the class label.
pub fn save_indexed_png(labels: &[u8], height: usize, width: usize, n_classes: usize, path: &Path) -> Result<()> {
    if labels.len() != height * width {
        return Err(Error::DimensionMismatch {
            expected: height * width,
            actual: labels.len(),
        });
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let n = n_classes.clamp(1, 256);
    let palette: Vec<u8> = (0..n).flat_map(palette_color).collect();
    enc.set_palette(palette);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    writer
        .write_image_data(labels)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    writer
        .finish()
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    Ok(())
}

/// Reads raw palette indices of an indexed PNG (or the values of an 8-bit
/// grayscale PNG) as `(height, width, labels)`.
pub fn load_indexed_png(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::parse(path.display().to_string(), "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::parse(path.display().to_string(), e))?;
    if info.bit_depth != png::BitDepth::Eight
        || !matches!(info.color_type, png::ColorType::Indexed | png::ColorType::Grayscale)
    {
        return Err(Error::UnsupportedFormat(format!(
            "{}: masks must be 8-bit indexed or grayscale PNG",
            path.display()
        )));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut labels = Vec::with_capacity(w * h);
    for row in 0..h {
        labels.extend_from_slice(&buf[row * info.line_size..row * info.line_size + w]);
    }
    Ok((h, w, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rescale_endpoints() {
        assert_eq!(rescale16(0), 0);
        assert_eq!(rescale16(65535), 255);
        assert_eq!(rescale16(257 * 100), 100);
    }

    #[test]
    fn png_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<u8> = (0..128 * 128).map(|i| (i * 7 % 251) as u8).collect();
        let m = Micrograph::from_gray("x", 128, 128, data).unwrap();
        let p = dir.path().join("x.png");
        save_png(&m, &p).unwrap();
        let a = load_image(&p).unwrap();
        let b = load_image(&p).unwrap();
        assert_eq!(a.height(), 128);
        assert_eq!(a.width(), 128);
        assert_eq!(a.as_bytes(), m.as_bytes());
        assert_eq!(a.as_bytes(), b.as_bytes());
    }

    #[test]
    fn sixteen_bit_tiff_is_rescaled() {
        let dir = tempfile::tempdir().unwrap();
        let raw: Vec<u16> = (0..40 * 40).map(|i| ((i % 256) * 257) as u16).collect();
        let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(40, 40, raw).unwrap();
        let p = dir.path().join("deep.tif");
        buf.save_with_format(&p, ImageFormat::Tiff).unwrap();
        let m = load_image(&p).unwrap();
        for (i, &v) in m.as_bytes().iter().enumerate() {
            assert_eq!(v as usize, i % 256);
        }
    }

    #[test]
    fn small_image_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("small.png");
        image::save_buffer(&p, &[0u8; 256], 16, 16, image::ExtendedColorType::L8).unwrap();
        assert!(matches!(load_image(&p), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn corrupt_and_unsupported_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.png");
        std::fs::write(&p, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(load_image(&p).is_err());
        let q = dir.path().join("x.txt");
        std::fs::write(&q, b"hello").unwrap();
        assert!(load_image(&q).is_err());
    }

    #[test]
    fn indexed_and_label_pngs_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<u8> = (0..35 * 33).map(|i| (i % 3) as u8).collect();
        let p = dir.path().join("m.png");
        save_indexed_png(&labels, 35, 33, 3, &p).unwrap();
        let (h, w, back) = load_indexed_png(&p).unwrap();
        assert_eq!((h, w), (35, 33));
        assert_eq!(back, labels);

        let grains: Vec<u32> = (0..40 * 40).map(|i| 1 + (i % 1000) as u32).collect();
        let q = dir.path().join("g.png");
        save_label_png(&grains, 40, 40, &q).unwrap();
        assert_eq!(load_label_png(&q).unwrap(), (40, 40, grains));
    }
}
